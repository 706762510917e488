//! Byte-level mutations of corpus pickles: every mutant the parser accepts
//! must serialize back to exactly the mutated bytes.

mod common;

#[test]
fn a_thousand_accepted_mutants_round_trip() {
    let m = common::manifest();
    let seeds: Vec<(String, Vec<u8>)> = m.entries.iter().map(|e| (e.id.clone(), common::raw(&m, e))).collect();
    let tried = common::mutate::round_trip_mutants(&seeds, 1000).unwrap();
    eprintln!("1000 of {tried} mutants parsed and round-tripped");
}
