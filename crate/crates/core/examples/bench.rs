//! Measure what enforcement costs on the 10 MB synthetic model.
//! Run with `--release` for meaningful numbers.

use pickleward::bench::bench;
use pickleward::cache::ClassCache;
use pickleward::corpus::default_corpus_dir;
use pickleward::gen::generate;
use pickleward::index::index_library;
use pickleward::name::qn;
use pickleward::opcode::parse;

fn main() {
    let corpus = default_corpus_dir();
    let index = index_library(&corpus.join("libs/subnet"), "subnet").expect("library sources");
    let policy = generate(&index, &ClassCache::standard(), &qn("subnet.network.Network")).expect("root resolves");
    let path = corpus.parent().expect("corpus sits in the workspace").join("bench/synthetic_10mb.pkl");
    let raw = std::fs::read(&path).expect("bench pickle");
    let stream = parse(&raw).expect("well-formed pickle");
    let report = bench(&stream, &policy, 7).expect("bench pickle loads under its policy");
    print!("{}", report.to_text());
}
