//! Properties checked over every corpus pickle: round trip, agreement of the
//! static trace with execution, transparency of restricted loading and
//! monotonicity of lazy enforcement.

mod common;

use std::collections::BTreeSet;

use pickleward::name::QualifiedName;
use pickleward::opcode::{parse, serialize};
use pickleward::policy::{baseline_allowlist, Policy};
use pickleward::tracer::trace;
use pickleward::vm::{execute, VmConfig};
use proptest::prelude::*;

#[test]
fn every_corpus_pickle_round_trips() {
    let m = common::manifest();
    for e in &m.entries {
        let raw = common::raw(&m, e);
        let s = parse(&raw).unwrap_or_else(|err| panic!("{}: {err}", e.id));
        assert_eq!(serialize(&s), raw, "{}", e.id);
    }
    let raw = common::bench_pickle();
    assert_eq!(serialize(&parse(&raw).unwrap()), raw);
}

fn names(events: &[pickleward::vm::Event]) -> BTreeSet<QualifiedName> {
    events.iter().map(|e| e.name.clone()).collect()
}

#[test]
fn static_trace_agrees_with_unrestricted_execution() {
    let m = common::manifest();
    let mut checked = 0;
    for e in &m.entries {
        let s = common::stream(&m, e);
        let report = trace(&s);
        if report.has_dynamic() || !report.forbidden_opcodes.is_empty() {
            continue;
        }
        let outcome = execute(&s, &VmConfig::unrestricted()).unwrap_or_else(|f| panic!("{}: {f}", e.id));
        assert_eq!(report.imports, names(&outcome.trace.imports), "{} imports", e.id);
        assert_eq!(report.invocations, names(&outcome.trace.invocations), "{} invocations", e.id);
        assert_eq!(report.allocations, names(&outcome.trace.allocations), "{} allocations", e.id);
        checked += 1;
    }
    assert!(checked >= 15, "only {checked} corpus pickles were comparable");
}

/// Every name the corpus mentions, as a pool for random policies.
fn corpus_names() -> Vec<QualifiedName> {
    let m = common::manifest();
    let mut all = BTreeSet::new();
    for e in &m.entries {
        all.extend(trace(&common::stream(&m, e)).all_names().into_iter().cloned());
    }
    all.into_iter().collect()
}

fn policy_from_masks(pool: &[QualifiedName], imports: &[bool], invocations: &[bool]) -> Policy {
    let imp: Vec<_> = pool.iter().zip(imports).filter(|(_, b)| **b).map(|(n, _)| n.clone()).collect();
    let inv: Vec<_> = pool
        .iter()
        .zip(imports.iter().zip(invocations))
        .filter(|(_, (i, v))| **i && **v)
        .map(|(n, _)| n.clone())
        .collect();
    Policy::from_sets(imp, inv).expect("invocations drawn from imports")
}

fn assert_transparent(id: &str, s: &pickleward::opcode::OpcodeStream, policy: &Policy) {
    let Ok(restricted) = execute(s, &VmConfig::restricted(policy)) else { return };
    if !restricted.trace.stubs.is_empty() || !restricted.trace.tainted_builds.is_empty() {
        return;
    }
    let unrestricted = execute(s, &VmConfig::unrestricted()).expect("restricted success implies unrestricted success");
    assert_eq!(restricted.canonical_dump(), unrestricted.canonical_dump(), "{id}");
}

#[test]
fn restricted_loads_without_stubs_are_transparent() {
    let m = common::manifest();
    let mut policies: Vec<Policy> = common::generated_policies(&m).into_values().collect();
    policies.push(Policy::empty());
    policies.push(baseline_allowlist());
    for e in &m.entries {
        let s = common::stream(&m, e);
        for p in &policies {
            assert_transparent(&e.id, &s, p);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transparency_under_random_policies(
        masks in proptest::collection::vec((any::<bool>(), any::<bool>()), 64),
    ) {
        let m = common::manifest();
        let pool = corpus_names();
        let imports: Vec<bool> = masks.iter().map(|p| p.0).cycle().take(pool.len()).collect();
        let invocations: Vec<bool> = masks.iter().map(|p| p.1).cycle().take(pool.len()).collect();
        let policy = policy_from_masks(&pool, &imports, &invocations);
        for e in &m.entries {
            assert_transparent(&e.id, &common::stream(&m, e), &policy);
        }
    }

    /// Allowing more imports never turns a successful load into a failure;
    /// allowing more invocations never changes a stub-free successful load.
    #[test]
    fn enlarging_a_policy_keeps_successful_loads(
        small in proptest::collection::vec((any::<bool>(), any::<bool>()), 64),
        extra in proptest::collection::vec((any::<bool>(), any::<bool>()), 64),
    ) {
        let m = common::manifest();
        let pool = corpus_names();
        let take = |v: &Vec<(bool, bool)>, f: fn(&(bool, bool)) -> bool| -> Vec<bool> {
            v.iter().map(f).cycle().take(pool.len()).collect()
        };
        let (si, sv) = (take(&small, |p| p.0), take(&small, |p| p.1));
        let (ei, ev) = (take(&extra, |p| p.0), take(&extra, |p| p.1));
        let li: Vec<bool> = si.iter().zip(&ei).map(|(a, b)| *a || *b).collect();
        let lv: Vec<bool> = sv.iter().zip(&ev).map(|(a, b)| *a || *b).collect();
        let small_policy = policy_from_masks(&pool, &si, &sv);
        // Same invocations, more imports.
        let more_imports = policy_from_masks(&pool, &li, &sv);
        // Same imports, more invocations.
        let more_invocations = policy_from_masks(&pool, &si, &lv);
        for e in &m.entries {
            let s = common::stream(&m, e);
            let Ok(base) = execute(&s, &VmConfig::restricted(&small_policy)) else { continue };
            prop_assert!(execute(&s, &VmConfig::restricted(&more_imports)).is_ok(), "{}", e.id);
            if base.trace.stubs.is_empty() {
                let wider = execute(&s, &VmConfig::restricted(&more_invocations));
                prop_assert!(wider.is_ok(), "{}", e.id);
                prop_assert_eq!(wider.unwrap().canonical_dump(), base.canonical_dump(), "{}", e.id);
            }
        }
    }
}
