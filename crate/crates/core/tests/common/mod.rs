//! Shared fixtures for integration tests: the corpus and the policies
//! generated for each of its libraries.

#![allow(dead_code)]

pub mod mutate;
pub mod oracle;

use std::collections::BTreeMap;

use pickleward::cache::ClassCache;
use pickleward::corpus::{default_corpus_dir, Entry, Manifest};
use pickleward::gen::generate;
use pickleward::index::{index_library, ModuleIndex};
use pickleward::opcode::{parse, OpcodeStream};
use pickleward::policy::Policy;

pub fn manifest() -> Manifest {
    Manifest::load(&default_corpus_dir()).expect("corpus manifest")
}

pub fn library_index(manifest: &Manifest, name: &str) -> ModuleIndex {
    let lib = manifest.library(name).expect("library in manifest");
    index_library(&manifest.path(&lib.path), &lib.package).expect("library sources")
}

/// Generated policy of every corpus library, keyed by library name.
pub fn generated_policies(manifest: &Manifest) -> BTreeMap<String, Policy> {
    let cache = ClassCache::standard();
    manifest
        .libraries
        .iter()
        .map(|lib| {
            let index = library_index(manifest, &lib.name);
            let policy = generate(&index, &cache, &lib.root_class).expect("root class resolves");
            (lib.name.clone(), policy)
        })
        .collect()
}

pub fn raw(manifest: &Manifest, entry: &Entry) -> Vec<u8> {
    manifest.pickle_bytes(entry).expect("corpus pickle")
}

pub fn stream(manifest: &Manifest, entry: &Entry) -> OpcodeStream {
    parse(&raw(manifest, entry)).expect("corpus pickle parses")
}

/// The 10 MB benchmark pickle, an instance of the subnet library's root.
pub fn bench_pickle() -> Vec<u8> {
    std::fs::read(default_corpus_dir().join("../bench/synthetic_10mb.pkl")).expect("bench pickle")
}
