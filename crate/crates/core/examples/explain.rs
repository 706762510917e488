//! Show why each entry of a generated policy is allowed.

use pickleward::cache::ClassCache;
use pickleward::corpus::default_corpus_dir;
use pickleward::gen::{explain_text, generate};
use pickleward::index::index_library;
use pickleward::name::qn;

fn main() {
    let index = index_library(&default_corpus_dir().join("libs/toylib"), "toylib").expect("library sources");
    let policy = generate(&index, &ClassCache::standard(), &qn("toylib.Model")).expect("root resolves");
    for name in policy.allowed_imports() {
        print!("{}", explain_text(&policy, name).expect("allowed names have a derivation"));
        println!();
    }
}
