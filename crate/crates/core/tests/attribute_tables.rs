//! Every class of every corpus library resolves to the attribute types
//! written down by hand next to its sources.

use std::collections::BTreeMap;

use pickleward::corpus::{default_corpus_dir, Manifest};
use pickleward::index::index_library;

type Table = BTreeMap<String, BTreeMap<String, String>>;

#[test]
fn resolved_attributes_match_hand_written_tables() {
    let dir = default_corpus_dir();
    let manifest = Manifest::load(&dir).unwrap();
    for lib in &manifest.libraries {
        let expected: Table = serde_json::from_str(
            &std::fs::read_to_string(dir.join("libs").join(format!("{}.attributes.json", lib.name))).unwrap(),
        )
        .unwrap();
        let index = index_library(&manifest.path(&lib.path), &lib.package).unwrap();
        let mut actual = Table::new();
        for class in index.class_names() {
            let rec = index.resolve_class(class).unwrap();
            actual.insert(class.to_string(), rec.attributes.iter().map(|(k, v)| (k.clone(), v.to_string())).collect());
        }
        assert_eq!(actual, expected, "{}", lib.name);
    }
}
