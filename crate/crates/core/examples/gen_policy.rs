//! Derive the loading policy of a model class from its library sources.

use pickleward::cache::ClassCache;
use pickleward::corpus::default_corpus_dir;
use pickleward::gen::generate;
use pickleward::index::index_library;
use pickleward::name::qn;
use pickleward::policy::to_json;

fn main() {
    let root = default_corpus_dir().join("libs/subnet");
    let index = index_library(&root, "subnet").expect("library sources");
    let policy = generate(&index, &ClassCache::standard(), &qn("subnet.network.Network")).expect("root resolves");
    for w in policy.warnings() {
        eprintln!("warning: {w}");
    }
    println!("{}", to_json(&policy));
}
