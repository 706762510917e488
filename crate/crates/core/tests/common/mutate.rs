//! Byte-level mutations of pickle programs.

use pickleward::opcode::{parse, serialize};
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::TestRunner;

#[derive(Debug, Clone)]
pub enum Mutation {
    Set(usize, u8),
    Insert(usize, u8),
    Delete(usize),
    /// Replace a byte with one of the opcode bytes that carry arguments.
    Opcode(usize, u8),
}

pub fn mutation() -> impl Strategy<Value = Mutation> {
    prop_oneof![
        (any::<usize>(), any::<u8>()).prop_map(|(p, b)| Mutation::Set(p, b)),
        (any::<usize>(), any::<u8>()).prop_map(|(p, b)| Mutation::Insert(p, b)),
        any::<usize>().prop_map(Mutation::Delete),
        (any::<usize>(), prop::sample::select(b"ILFSVXBCTUJKMGacdehjqr\x8c\x8d\x8e\x94\x95".to_vec()))
            .prop_map(|(p, b)| Mutation::Opcode(p, b)),
    ]
}

pub fn apply(raw: &mut Vec<u8>, m: &Mutation) {
    if raw.is_empty() {
        return;
    }
    match *m {
        Mutation::Set(p, b) | Mutation::Opcode(p, b) => {
            let i = p % raw.len();
            raw[i] = b;
        }
        Mutation::Insert(p, b) => raw.insert(p % (raw.len() + 1), b),
        Mutation::Delete(p) => {
            raw.remove(p % raw.len());
        }
    }
}

/// Applies random mutations to `seeds` until `count` mutants parse, checking
/// that each serializes back to its exact bytes. Returns how many mutants
/// were tried.
pub fn round_trip_mutants(seeds: &[(String, Vec<u8>)], count: usize) -> Result<usize, String> {
    let strategy = (0..seeds.len(), proptest::collection::vec(mutation(), 1..4));
    let mut runner = TestRunner::deterministic();
    let (mut accepted, mut tried) = (0, 0);
    while accepted < count {
        tried += 1;
        if tried >= 100 * count {
            return Err(format!("only {accepted} of {tried} mutants parsed"));
        }
        let (seed, mutations) = strategy.new_tree(&mut runner).expect("strategy").current();
        let (id, original) = &seeds[seed];
        let mut raw = original.clone();
        for mu in &mutations {
            apply(&mut raw, mu);
        }
        if &raw == original {
            continue;
        }
        let Ok(stream) = parse(&raw) else { continue };
        if serialize(&stream) != raw {
            return Err(format!("{id} mutated by {mutations:?} does not round-trip"));
        }
        accepted += 1;
    }
    Ok(tried)
}
