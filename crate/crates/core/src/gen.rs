//! Loading-policy generation: a fixpoint over the classes reachable from a
//! model's root class.
//!
//! Candidates are popped from a queue that accepts each name once. A class
//! with a class cache entry contributes that entry and is not expanded.
//! Otherwise its source record decides:
//!
//! * rule 1: a class with `__reduce__` contributes the returned callable to
//!   both sets, the globals it passes by reference to the imports, and
//!   enqueues the types of its arguments and state;
//! * rule 2: any other class is added to the imports and enqueues its
//!   subclasses, its attribute types and its external base classes.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::cache::ClassCache;
use crate::index::{extract_attribute_types, Callee, ModuleIndex};
use crate::name::QualifiedName;
use crate::policy::{generator_version, Derivation, Library, Policy, PolicyParts, Rule};

/// Types built by data opcodes under every protocol; they never need an
/// import. `bytes` and `set` are absent: older protocols rebuild them by
/// calling `_codecs.encode` and `builtins.set`, which the class cache covers.
pub const PRIMITIVE_TYPES: &[&str] = &[
    "builtins.NoneType",
    "builtins.bool",
    "builtins.dict",
    "builtins.float",
    "builtins.int",
    "builtins.list",
    "builtins.str",
    "builtins.tuple",
];

pub fn is_primitive(name: &str) -> bool {
    PRIMITIVE_TYPES.contains(&name)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenError {
    #[error("root class {0} is neither defined in the sources nor in the class cache")]
    RootUnresolvable(String),
}

/// Work queue in which every name is enqueued at most once per run.
#[derive(Debug, Default)]
pub struct CandidateQueue {
    pending: VecDeque<QualifiedName>,
    seen: BTreeSet<QualifiedName>,
}

impl CandidateQueue {
    /// Enqueues `name` unless it was enqueued before; reports whether it was.
    pub fn push(&mut self, name: QualifiedName) -> bool {
        if self.seen.contains(&name) {
            return false;
        }
        self.seen.insert(name.clone());
        self.pending.push_back(name);
        true
    }

    /// Removes the pending candidate at position `pick(len)` (clamped).
    pub fn pop_with(&mut self, pick: &mut dyn FnMut(usize) -> usize) -> Option<QualifiedName> {
        if self.pending.is_empty() {
            return None;
        }
        let i = pick(self.pending.len()).min(self.pending.len() - 1);
        self.pending.remove(i)
    }

    pub fn enqueued(&self) -> usize {
        self.seen.len()
    }
}

/// A finished generation run.
#[derive(Debug, Clone)]
pub struct Generation {
    pub policy: Policy,
    /// Candidates popped.
    pub iterations: usize,
    /// Distinct names ever enqueued.
    pub enqueued: usize,
}

/// Generates the loading policy of `root` in first-in first-out order.
pub fn generate(index: &ModuleIndex, cache: &ClassCache, root: &QualifiedName) -> Result<Policy, GenError> {
    run(index, cache, root, &mut |_| 0).map(|g| g.policy)
}

struct State<'a> {
    index: &'a ModuleIndex,
    queue: CandidateQueue,
    imports: BTreeSet<QualifiedName>,
    invocations: BTreeSet<QualifiedName>,
    provenance: BTreeMap<QualifiedName, Derivation>,
    warnings: Vec<String>,
}

impl State<'_> {
    fn derive(&mut self, name: &QualifiedName, parent: &QualifiedName, rule: Rule) {
        self.provenance
            .entry(name.clone())
            .or_insert_with(|| Derivation { parent: Some(parent.clone()), rule });
    }

    fn allow_import(&mut self, name: &QualifiedName, parent: &QualifiedName, rule: Rule) {
        self.imports.insert(name.clone());
        self.derive(name, parent, rule);
    }

    fn enqueue(&mut self, name: QualifiedName, parent: &QualifiedName, rule: Rule) {
        if is_primitive(name.as_str()) {
            return;
        }
        self.derive(&name, parent, rule);
        self.queue.push(name);
    }

    fn warn(&mut self, w: String) {
        if !self.warnings.contains(&w) {
            self.warnings.push(w);
        }
    }
}

/// Generates the policy of `root`, taking candidates from the queue at the
/// positions chosen by `pick` (given the number pending). The result does
/// not depend on the order; the hook exists to test exactly that.
pub fn run(
    index: &ModuleIndex,
    cache: &ClassCache,
    root: &QualifiedName,
    pick: &mut dyn FnMut(usize) -> usize,
) -> Result<Generation, GenError> {
    if !index.is_class(root.as_str()) && cache.get(root.as_str()).is_none() {
        return Err(GenError::RootUnresolvable(root.to_string()));
    }
    let mut st = State {
        index,
        queue: CandidateQueue::default(),
        imports: BTreeSet::new(),
        invocations: BTreeSet::new(),
        provenance: BTreeMap::new(),
        warnings: Vec::new(),
    };
    st.imports.insert(root.clone());
    st.provenance.insert(root.clone(), Derivation { parent: None, rule: Rule::Root });
    st.queue.push(root.clone());
    let mut iterations = 0;

    while let Some(c) = st.queue.pop_with(pick) {
        iterations += 1;
        if let Some(entry) = cache.get(c.as_str()) {
            let rule = Rule::Cache(entry.origin);
            if let Some(d) = st.provenance.get_mut(&c) {
                if d.rule != Rule::Root {
                    d.rule = rule.clone();
                }
            }
            for n in &entry.imports {
                st.allow_import(n, &c, rule.clone());
            }
            st.invocations.extend(entry.invocations.iter().cloned());
            continue;
        }
        if st.index.is_function(c.as_str()) {
            // A function stored by reference is pickled as a global.
            st.imports.insert(c.clone());
            continue;
        }
        let rec = match st.index.resolve_class(c.as_str()) {
            Ok(rec) => rec,
            Err(_) => {
                st.warn(format!("{c}: no source definition or class cache entry; not expanded"));
                continue;
            }
        };
        for w in &rec.warnings {
            st.warn(w.clone());
        }
        if let Some(r) = &rec.reduce_summary {
            match &r.callable {
                Callee::Name(f) => {
                    st.allow_import(f, &c, Rule::ReduceCallable);
                    st.invocations.insert(f.clone());
                }
                Callee::Unknown(why) => st.warn(format!("{c}.{}: {why}", r.method)),
            }
            for n in &r.references {
                st.allow_import(n, &c, Rule::ReduceReference);
            }
            let mut names = BTreeSet::new();
            let mut unknowns = Vec::new();
            for t in r.arg_types.iter().chain(&r.state_types) {
                t.collect_names(&mut names, &mut unknowns);
            }
            for why in unknowns {
                st.warn(format!("{c}.{}: {why}", r.method));
            }
            for n in names {
                st.enqueue(n, &c, Rule::ReduceType);
            }
        } else {
            st.imports.insert(c.clone());
            for s in st.index.subclasses_of(c.as_str()) {
                st.enqueue(s, &c, Rule::Subclass);
            }
            let (names, warnings) = extract_attribute_types(&rec);
            for w in warnings {
                st.warn(w);
            }
            for n in names {
                st.enqueue(n, &c, Rule::AttributeType);
            }
            for b in &rec.external_ancestors {
                st.enqueue(b.clone(), &c, Rule::Base);
            }
        }
    }

    let enqueued = st.queue.enqueued();
    let policy = PolicyParts {
        allowed_imports: st.imports,
        allowed_invocations: st.invocations,
        library: Some(Library {
            name: index.package.clone(),
            version: index.version().unwrap_or("unknown").to_string(),
        }),
        root_class: Some(root.clone()),
        generator_version: generator_version(),
        warnings: st.warnings,
        provenance: st.provenance,
    }
    .build()
    .expect("rule 1 adds callables to both sets and the root is always imported");
    Ok(Generation { policy, iterations, enqueued })
}

/// Derivation chain of `name` as indented text, one hop per line.
pub fn explain_text(policy: &Policy, name: &QualifiedName) -> Result<String, crate::policy::PolicyError> {
    let chain = policy.explain(name)?;
    let mut out = String::new();
    for (depth, (n, d)) in chain.iter().enumerate() {
        out.push_str(&"  ".repeat(depth));
        out.push_str(&format!("{n} ({})\n", d.rule));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::index_library;
    use crate::name::qn;

    fn lib(name: &str) -> ModuleIndex {
        let root = crate::corpus::default_corpus_dir().join("libs").join(name);
        index_library(&root, name).unwrap()
    }

    fn names(set: &BTreeSet<QualifiedName>) -> Vec<&str> {
        set.iter().map(|n| n.as_str()).collect()
    }

    #[test]
    fn toy_model_policy() {
        let p = generate(&lib("toylib"), &ClassCache::standard(), &qn("toylib.Model")).unwrap();
        assert_eq!(
            names(p.allowed_imports()),
            [
                "_codecs.encode",
                "toylib.Model",
                "toylib.Tensor",
                "toylib.config.ModelConfig",
                "toylib.layers.Linear",
                "toylib.read_weights_to_tensor"
            ]
        );
        // Tensor data is bytes, which protocols 0-2 rebuild via _codecs.encode.
        assert_eq!(names(p.allowed_invocations()), ["_codecs.encode", "toylib.read_weights_to_tensor"]);
        assert!(p.warnings().is_empty(), "{:?}", p.warnings());
        assert_eq!(p.library().unwrap().version, "0.3.1");
    }

    #[test]
    fn explain_reports_the_rule_chain() {
        let p = generate(&lib("toylib"), &ClassCache::standard(), &qn("toylib.Model")).unwrap();
        let chain = p.explain(&qn("toylib.read_weights_to_tensor")).unwrap();
        let hops: Vec<(&str, String)> = chain.iter().map(|(n, d)| (n.as_str(), d.rule.to_string())).collect();
        assert_eq!(
            hops,
            [
                ("toylib.Model", "root class".to_string()),
                ("toylib.Tensor", "rule 2: attribute type".to_string()),
                ("toylib.read_weights_to_tensor", "rule 1: __reduce__ return".to_string()),
            ]
        );
        assert_eq!(p.explain(&qn("toylib.Model")).unwrap().len(), 1);
        assert!(p.explain(&qn("os.system")).is_err());
    }

    #[test]
    fn cached_classes_are_terminal_and_explained() {
        let p = generate(&lib("subnet"), &ClassCache::standard(), &qn("subnet.network.Network")).unwrap();
        assert!(p.allows_invocation("collections.OrderedDict"));
        let chain = p.explain(&qn("collections.OrderedDict")).unwrap();
        assert_eq!(chain.last().unwrap().1.rule.to_string(), "class cache: Vendored");
        for sub in ["Conv", "Dense", "DepthwiseConv", "Mixed", "Activation"] {
            assert!(p.allows_import(&format!("subnet.layers.{sub}")), "{sub}");
        }
    }

    #[test]
    fn leaf_root_gives_single_import() {
        let p = generate(&lib("audiokit"), &ClassCache::standard(), &qn("audiokit.legacy.TaskSpec")).unwrap();
        assert_eq!(names(p.allowed_imports()), ["audiokit.legacy.TaskSpec"]);
        assert!(p.allowed_invocations().is_empty());
    }

    #[test]
    fn optimizer_set_outside_the_class_is_omitted() {
        let p = generate(&lib("flairlike"), &ClassCache::standard(), &qn("flairlike.models.SequenceTagger")).unwrap();
        assert!(p.allows_import("torch.nn.modules.linear.Linear"));
        assert!(!p.allowed_imports().iter().any(|n| n.as_str().starts_with("torch.optim")));
    }

    #[test]
    fn unresolvable_root_is_an_error() {
        let err = generate(&lib("toylib"), &ClassCache::standard(), &qn("toylib.Missing")).unwrap_err();
        assert_eq!(err, GenError::RootUnresolvable("toylib.Missing".into()));
    }

    #[test]
    fn missing_external_classes_become_warnings() {
        let p = generate(&lib("flairlike"), &ClassCache::none(), &qn("flairlike.models.SequenceTagger")).unwrap();
        assert!(p.warnings().iter().any(|w| w.starts_with("torch.nn.Module:")), "{:?}", p.warnings());
    }

    #[test]
    fn queue_accepts_names_once() {
        let mut q = CandidateQueue::default();
        assert!(q.push(qn("a.B")));
        assert!(!q.push(qn("a.B")));
        assert_eq!(q.pop_with(&mut |_| 0), Some(qn("a.B")));
        assert!(!q.push(qn("a.B")));
        assert_eq!(q.pop_with(&mut |_| 0), None);
    }
}
