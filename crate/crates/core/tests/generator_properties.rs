//! Policy generation checked against a naive closure oracle, on the corpus
//! libraries and on randomly generated Python packages, plus the subset
//! invariant for every way a policy can be constructed.

mod common;

use std::fmt::Write as _;

use pickleward::cache::{ClassCache, ClassCacheEntry, Origin};
use pickleward::gen::{generate, run};
use common::oracle::oracle;
use pickleward::index::{index_library, ModuleIndex};
use pickleward::name::{qn, QualifiedName};
use pickleward::policy::{from_json, merge, to_json, validate, Policy, PolicyError};
use proptest::prelude::*;

fn assert_subset(p: &Policy) {
    assert!(p.allowed_invocations().is_subset(p.allowed_imports()), "{}", to_json(p));
    assert!(validate(p).is_ok());
}

#[test]
fn generator_matches_oracle_on_corpus_libraries() {
    let m = common::manifest();
    let cache = ClassCache::standard();
    for lib in &m.libraries {
        let index = common::library_index(&m, &lib.name);
        for class in index.class_names() {
            let root = qn(class);
            let p = generate(&index, &cache, &root).unwrap();
            let (imports, invocations) = oracle(&index, &cache, &root);
            assert_eq!(p.allowed_imports(), &imports, "{} rooted at {root}", lib.name);
            assert_eq!(p.allowed_invocations(), &invocations, "{} rooted at {root}", lib.name);
            assert_subset(&p);
        }
    }
}

#[test]
fn generation_is_deterministic_on_corpus_libraries() {
    let m = common::manifest();
    let first: Vec<String> = common::generated_policies(&m).values().map(to_json).collect();
    let second: Vec<String> = common::generated_policies(&m).values().map(to_json).collect();
    assert_eq!(first, second);
}

// Random Python packages.

#[derive(Debug, Clone)]
enum Attr {
    Call(usize),
    Annotated(usize),
    Optional(usize),
    List(usize),
    Dict(usize),
    Literal(u8),
    Param,
    External(u8),
    FunctionRef(usize),
}

#[derive(Debug, Clone)]
enum Reduce {
    Function(usize, Vec<usize>),
    Class(usize, Vec<usize>),
    OwnClass(Vec<usize>),
    DictState(usize),
}

#[derive(Debug, Clone)]
struct ClassShape {
    base: Option<usize>,
    external_base: Option<bool>,
    attrs: Vec<Attr>,
    reduce: Option<Reduce>,
}

const FUNCTIONS: usize = 3;
const EXTERNALS: [&str; 4] = ["collections.OrderedDict()", "collections.deque()", "ext.Thing()", "set()"];

fn attr() -> impl Strategy<Value = Attr> {
    prop_oneof![
        any::<usize>().prop_map(Attr::Call),
        any::<usize>().prop_map(Attr::Annotated),
        any::<usize>().prop_map(Attr::Optional),
        any::<usize>().prop_map(Attr::List),
        any::<usize>().prop_map(Attr::Dict),
        any::<u8>().prop_map(Attr::Literal),
        Just(Attr::Param),
        any::<u8>().prop_map(Attr::External),
        any::<usize>().prop_map(Attr::FunctionRef),
    ]
}

fn reduce() -> impl Strategy<Value = Reduce> {
    let args = || proptest::collection::vec(any::<usize>(), 0..3);
    prop_oneof![
        (any::<usize>(), args()).prop_map(|(f, a)| Reduce::Function(f, a)),
        (any::<usize>(), args()).prop_map(|(c, a)| Reduce::Class(c, a)),
        args().prop_map(Reduce::OwnClass),
        any::<usize>().prop_map(Reduce::DictState),
    ]
}

fn class_shape() -> impl Strategy<Value = ClassShape> {
    (
        proptest::option::of(any::<usize>()),
        proptest::option::of(any::<bool>()),
        proptest::collection::vec(attr(), 0..5),
        proptest::option::weighted(0.3, reduce()),
    )
        .prop_map(|(base, external_base, attrs, reduce)| ClassShape { base, external_base, attrs, reduce })
}

fn library() -> impl Strategy<Value = Vec<ClassShape>> {
    proptest::collection::vec(class_shape(), 1..7)
}

/// Module holding class `i`: even classes in `pkg.a`, odd ones in `pkg.b`.
fn module_of(i: usize) -> &'static str {
    if i.is_multiple_of(2) {
        "a"
    } else {
        "b"
    }
}

fn render_module(shapes: &[ClassShape], module: &str) -> String {
    let n = shapes.len();
    let mut s = String::from("import collections\nimport ext\nimport torch\nfrom typing import Dict, List, Optional\n\n");
    let foreign: Vec<String> = (0..n).filter(|i| module_of(*i) != module).map(|i| format!("C{i}")).collect();
    if !foreign.is_empty() {
        let other = if module == "a" { "b" } else { "a" };
        writeln!(s, "from pkg.{other} import {}", foreign.join(", ")).unwrap();
    }
    let funcs: Vec<String> = (0..FUNCTIONS).map(|f| format!("f{f}")).collect();
    writeln!(s, "from pkg.util import {}\n", funcs.join(", ")).unwrap();
    for (i, shape) in shapes.iter().enumerate().filter(|(i, _)| module_of(*i) == module) {
        let mut bases = Vec::new();
        if let (Some(b), true) = (shape.base, i > 0) {
            bases.push(format!("C{}", b % i));
        }
        match shape.external_base {
            Some(true) => bases.push("torch.nn.Module".into()),
            Some(false) => bases.push("ext.Base".into()),
            None => {}
        }
        writeln!(s, "\nclass C{i}({}):", bases.join(", ")).unwrap();
        writeln!(s, "    def __init__(self, p):").unwrap();
        writeln!(s, "        self.p = p").unwrap();
        for (k, a) in shape.attrs.iter().enumerate() {
            let line = match a {
                Attr::Call(j) => format!("self.a{k} = C{}()", j % n),
                Attr::Annotated(j) => format!("self.a{k}: C{} = p", j % n),
                Attr::Optional(j) => format!("self.a{k}: Optional[C{}] = None", j % n),
                Attr::List(j) => format!("self.a{k}: List[C{}] = []", j % n),
                Attr::Dict(j) => format!("self.a{k}: Dict[str, C{}] = {{}}", j % n),
                Attr::Literal(v) => format!("self.a{k} = {}", ["1", "'s'", "1.5", "True", "b''", "(1, 'x')"][*v as usize % 6]),
                Attr::Param => format!("self.a{k} = p"),
                Attr::External(v) => format!("self.a{k} = {}", EXTERNALS[*v as usize % EXTERNALS.len()]),
                Attr::FunctionRef(f) => format!("self.a{k} = f{}", f % FUNCTIONS),
            };
            writeln!(s, "        {line}").unwrap();
        }
        if let Some(r) = &shape.reduce {
            let args = |idx: &Vec<usize>| -> String {
                let parts: Vec<String> = match shape.attrs.len() {
                    0 => Vec::new(),
                    len => idx.iter().map(|x| format!("self.a{}", x % len)).collect(),
                };
                match parts.len() {
                    0 => "()".into(),
                    1 => format!("({},)", parts[0]),
                    _ => format!("({})", parts.join(", ")),
                }
            };
            let ret = match r {
                Reduce::Function(f, a) => format!("(f{}, {})", f % FUNCTIONS, args(a)),
                Reduce::Class(c, a) => format!("(C{}, {})", c % n, args(a)),
                Reduce::OwnClass(a) => format!("(self.__class__, {})", args(a)),
                Reduce::DictState(f) => format!("(f{}, (), self.__dict__)", f % FUNCTIONS),
            };
            writeln!(s, "\n    def __reduce__(self):\n        return {ret}").unwrap();
        }
    }
    s
}

fn build_library(shapes: &[ClassShape]) -> (tempfile::TempDir, ModuleIndex) {
    let dir = tempfile::tempdir().unwrap();
    let pkg = dir.path().join("pkg");
    std::fs::create_dir(&pkg).unwrap();
    std::fs::write(pkg.join("__init__.py"), "__version__ = '0.0.1'\n").unwrap();
    let util: String = (0..FUNCTIONS).map(|f| format!("def f{f}(*args):\n    return args\n\n")).collect();
    std::fs::write(pkg.join("util.py"), util).unwrap();
    std::fs::write(pkg.join("a.py"), render_module(shapes, "a")).unwrap();
    std::fs::write(pkg.join("b.py"), render_module(shapes, "b")).unwrap();
    let index = index_library(dir.path(), "pkg").unwrap();
    assert!(index.errors.is_empty(), "{:?}", index.errors);
    (dir, index)
}

fn class_name(i: usize) -> QualifiedName {
    qn(&format!("pkg.{}.C{i}", module_of(i)))
}

fn random_policy(pool: &[QualifiedName], imports: &[bool], invocations: &[bool]) -> Policy {
    let imp = pool.iter().zip(imports).filter(|p| *p.1).map(|p| p.0.clone());
    let inv = pool.iter().zip(imports.iter().zip(invocations)).filter(|(_, (i, v))| **i && **v).map(|p| p.0.clone());
    Policy::from_sets(imp, inv).unwrap()
}

fn name_pool() -> Vec<QualifiedName> {
    ["os.system", "pkg.a.C0", "pkg.b.C1", "builtins.set", "collections.OrderedDict", "torch.Tensor", "x.y"]
        .map(qn)
        .to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_libraries_match_oracle_in_any_order(shapes in library(), picks in proptest::collection::vec(any::<usize>(), 1..16)) {
        let (_dir, index) = build_library(&shapes);
        let cache = ClassCache::standard();
        for i in 0..shapes.len() {
            let root = class_name(i);
            let fifo = generate(&index, &cache, &root).unwrap();
            assert_subset(&fifo);
            let (imports, invocations) = oracle(&index, &cache, &root);
            prop_assert_eq!(fifo.allowed_imports(), &imports);
            prop_assert_eq!(fifo.allowed_invocations(), &invocations);

            let mut k = 0;
            let mut pick = |pending: usize| {
                k += 1;
                picks[k % picks.len()] % pending
            };
            let shuffled = run(&index, &cache, &root, &mut pick).unwrap();
            prop_assert!(shuffled.policy.same_sets(&fifo));
            prop_assert!(shuffled.iterations <= shuffled.enqueued);
            let mut w1 = shuffled.policy.warnings().to_vec();
            let mut w2 = fifo.warnings().to_vec();
            w1.sort();
            w2.sort();
            prop_assert_eq!(w1, w2);
        }
    }

    /// Cache entries that cover a class's full closure never remove names.
    #[test]
    fn sound_cache_entries_only_add(shapes in library(), cached in any::<usize>()) {
        let (_dir, index) = build_library(&shapes);
        let base = ClassCache::standard();
        let target = class_name(cached % shapes.len());
        let closure = generate(&index, &base, &target).unwrap();
        let mut extended = base.clone();
        extended.insert(ClassCacheEntry {
            class_name: target.clone(),
            imports: closure.allowed_imports().clone(),
            invocations: closure.allowed_invocations().clone(),
            origin: Origin::UserSupplied,
        });
        for i in 0..shapes.len() {
            let root = class_name(i);
            let before = generate(&index, &base, &root).unwrap();
            let after = generate(&index, &extended, &root).unwrap();
            prop_assert!(after.allowed_imports().is_superset(before.allowed_imports()), "root {}", root);
            prop_assert!(after.allowed_invocations().is_superset(before.allowed_invocations()), "root {}", root);
        }
    }

    #[test]
    fn merged_policies_keep_the_subset_invariant(shapes in library(), masks in proptest::collection::vec((any::<bool>(), any::<bool>()), 7)) {
        let (_dir, index) = build_library(&shapes);
        let generated = generate(&index, &ClassCache::standard(), &class_name(0)).unwrap();
        let pool = name_pool();
        let listed = random_policy(&pool, &masks.iter().map(|m| m.0).collect::<Vec<_>>(), &masks.iter().map(|m| m.1).collect::<Vec<_>>());
        let ab = merge(&generated, &listed);
        let ba = merge(&listed, &generated);
        assert_subset(&ab);
        prop_assert!(ab.same_sets(&ba));
        prop_assert_eq!(ab.root_class(), ba.root_class());
        prop_assert_eq!(from_json(&to_json(&generated)).unwrap(), generated);
    }

    #[test]
    fn constructed_policies_satisfy_the_subset_invariant(
        imports in proptest::collection::vec(any::<bool>(), 7),
        invocations in proptest::collection::vec(any::<bool>(), 7),
        root in proptest::option::of(0..7usize),
    ) {
        let pool = name_pool();
        let pick = |mask: &Vec<bool>| -> Vec<QualifiedName> {
            pool.iter().zip(mask).filter(|p| *p.1).map(|p| p.0.clone()).collect()
        };
        let (imp, inv) = (pick(&imports), pick(&invocations));
        let subset = inv.iter().all(|n| imp.contains(n));
        let root_ok = root.is_none_or(|r| imp.contains(&pool[r]));

        match Policy::from_sets(imp.clone(), inv.clone()) {
            Ok(p) => {
                prop_assert!(subset);
                assert_subset(&p);
            }
            Err(e) => {
                prop_assert!(!subset);
                prop_assert!(matches!(e, PolicyError::SubsetViolation(_)), "{}", e);
            }
        }

        let mut doc = serde_json::json!({
            "schema": "pickleward-policy/1",
            "allowed_imports": imp,
            "allowed_invocations": inv,
        });
        if let Some(r) = root {
            doc["root_class"] = serde_json::json!(pool[r]);
        }
        match from_json(&doc.to_string()) {
            Ok(p) => {
                prop_assert!(subset && root_ok);
                assert_subset(&p);
                prop_assert_eq!(from_json(&to_json(&p)).unwrap(), p);
            }
            Err(_) => prop_assert!(!(subset && root_ok)),
        }
    }
}
