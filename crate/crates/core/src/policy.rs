//! Loading policies: the allowed-import and allowed-invocation sets, their
//! validation, composition and file format.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::name::QualifiedName;

pub const POLICY_SCHEMA: &str = "pickleward-policy/1";

/// Tool identifier stamped into generated policies.
pub fn generator_version() -> String {
    format!("pickleward {}", env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Library {
    pub name: String,
    pub version: String,
}

impl fmt::Display for Library {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.name, self.version)
    }
}

/// Why a name entered a policy.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// The class the policy was generated for.
    Root,
    /// Callable returned by `parent.__reduce__` (added to both sets).
    ReduceCallable,
    /// Callable passed by reference in `parent.__reduce__`'s arguments.
    ReduceReference,
    /// Type of an argument or state value of `parent.__reduce__`.
    ReduceType,
    /// Type of one of `parent`'s attributes.
    AttributeType,
    /// Subclass of `parent`.
    Subclass,
    /// Base class of `parent` defined outside the analysed sources.
    Base,
    /// Merged from a class cache entry for `parent`.
    Cache(crate::cache::Origin),
    /// Listed directly in a hand-written policy file.
    Listed,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::Root => f.write_str("root class"),
            Rule::ReduceCallable => f.write_str("rule 1: __reduce__ return"),
            Rule::ReduceReference => f.write_str("rule 1: __reduce__ argument reference"),
            Rule::ReduceType => f.write_str("rule 1: __reduce__ argument type"),
            Rule::AttributeType => f.write_str("rule 2: attribute type"),
            Rule::Subclass => f.write_str("rule 2: subclass"),
            Rule::Base => f.write_str("rule 2: external base class"),
            Rule::Cache(origin) => write!(f, "class cache: {origin}"),
            Rule::Listed => f.write_str("listed in policy file"),
        }
    }
}

/// One derivation step: `name` was reached from `parent` by `rule`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Derivation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<QualifiedName>,
    pub rule: Rule,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("allowed_invocations is not a subset of allowed_imports: {0:?} not importable")]
    SubsetViolation(Vec<String>),
    #[error("root class {0} is not in allowed_imports")]
    MissingRootClass(String),
    #[error("policy parse error: {0}")]
    Parse(String),
    #[error("unsupported policy schema {0:?} (expected {POLICY_SCHEMA:?})")]
    UnsupportedSchema(String),
    #[error("policy I/O error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("{0} is not in the policy's allowed_imports")]
    NameNotInPolicy(String),
}

/// A validated policy. Every constructor checks
/// `allowed_invocations ⊆ allowed_imports` and `root_class ∈ allowed_imports`,
/// so no `Policy` value can violate them.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Policy {
    allowed_imports: BTreeSet<QualifiedName>,
    allowed_invocations: BTreeSet<QualifiedName>,
    library: Option<Library>,
    root_class: Option<QualifiedName>,
    generator_version: String,
    warnings: Vec<String>,
    provenance: BTreeMap<QualifiedName, Derivation>,
}

/// Unvalidated policy contents; turned into a [`Policy`] by [`PolicyParts::build`].
#[derive(Debug, Clone, Default)]
pub struct PolicyParts {
    pub allowed_imports: BTreeSet<QualifiedName>,
    pub allowed_invocations: BTreeSet<QualifiedName>,
    pub library: Option<Library>,
    pub root_class: Option<QualifiedName>,
    pub generator_version: String,
    pub warnings: Vec<String>,
    pub provenance: BTreeMap<QualifiedName, Derivation>,
}

impl PolicyParts {
    pub fn build(self) -> Result<Policy, PolicyError> {
        validate_sets(&self.allowed_imports, &self.allowed_invocations, self.root_class.as_ref())?;
        // Keep derivations of allowed names and of every ancestor on their
        // chains (classes expanded by rule 1 are not importable themselves).
        let mut keep: BTreeSet<QualifiedName> = BTreeSet::new();
        for name in &self.allowed_imports {
            let mut cur = Some(name);
            while let Some(n) = cur {
                if !keep.insert(n.clone()) {
                    break;
                }
                cur = self.provenance.get(n).and_then(|d| d.parent.as_ref());
            }
        }
        let mut provenance = self.provenance;
        provenance.retain(|k, _| keep.contains(k));
        Ok(Policy {
            allowed_imports: self.allowed_imports,
            allowed_invocations: self.allowed_invocations,
            library: self.library,
            root_class: self.root_class,
            generator_version: self.generator_version,
            warnings: self.warnings,
            provenance,
        })
    }
}

fn validate_sets(
    imports: &BTreeSet<QualifiedName>,
    invocations: &BTreeSet<QualifiedName>,
    root: Option<&QualifiedName>,
) -> Result<(), PolicyError> {
    let missing: Vec<String> = invocations.difference(imports).map(|n| n.to_string()).collect();
    if !missing.is_empty() {
        return Err(PolicyError::SubsetViolation(missing));
    }
    if let Some(root) = root {
        if !imports.contains(root) {
            return Err(PolicyError::MissingRootClass(root.to_string()));
        }
    }
    Ok(())
}

/// Checks both policy invariants.
pub fn validate(policy: &Policy) -> Result<(), PolicyError> {
    validate_sets(&policy.allowed_imports, &policy.allowed_invocations, policy.root_class.as_ref())
}

impl Policy {
    /// The policy that allows nothing.
    pub fn empty() -> Policy {
        Policy::default()
    }

    pub fn from_sets<I, J>(imports: I, invocations: J) -> Result<Policy, PolicyError>
    where
        I: IntoIterator<Item = QualifiedName>,
        J: IntoIterator<Item = QualifiedName>,
    {
        PolicyParts {
            allowed_imports: imports.into_iter().collect(),
            allowed_invocations: invocations.into_iter().collect(),
            ..PolicyParts::default()
        }
        .build()
    }

    pub fn allowed_imports(&self) -> &BTreeSet<QualifiedName> {
        &self.allowed_imports
    }

    pub fn allowed_invocations(&self) -> &BTreeSet<QualifiedName> {
        &self.allowed_invocations
    }

    pub fn allows_import(&self, name: &str) -> bool {
        self.allowed_imports.contains(name)
    }

    pub fn allows_invocation(&self, name: &str) -> bool {
        self.allowed_invocations.contains(name)
    }

    pub fn library(&self) -> Option<&Library> {
        self.library.as_ref()
    }

    pub fn root_class(&self) -> Option<&QualifiedName> {
        self.root_class.as_ref()
    }

    pub fn generator_version(&self) -> &str {
        &self.generator_version
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn provenance(&self) -> &BTreeMap<QualifiedName, Derivation> {
        &self.provenance
    }

    pub fn into_parts(self) -> PolicyParts {
        PolicyParts {
            allowed_imports: self.allowed_imports,
            allowed_invocations: self.allowed_invocations,
            library: self.library,
            root_class: self.root_class,
            generator_version: self.generator_version,
            warnings: self.warnings,
            provenance: self.provenance,
        }
    }

    /// Same sets, ignoring library, root, warnings and provenance.
    pub fn same_sets(&self, other: &Policy) -> bool {
        self.allowed_imports == other.allowed_imports && self.allowed_invocations == other.allowed_invocations
    }

    /// Derivation chain from a root (or first recorded ancestor) to `name`,
    /// as `(name, how it was reached)` pairs. Names without a recorded
    /// derivation are reported as listed in the policy file.
    pub fn explain(&self, name: &QualifiedName) -> Result<Vec<(QualifiedName, Derivation)>, PolicyError> {
        if !self.allowed_imports.contains(name) {
            return Err(PolicyError::NameNotInPolicy(name.to_string()));
        }
        let mut chain = Vec::new();
        let mut seen = BTreeSet::new();
        let mut cur = Some(name.clone());
        while let Some(n) = cur.take() {
            if !seen.insert(n.clone()) {
                break;
            }
            let d = self.provenance.get(&n).cloned().unwrap_or(Derivation { parent: None, rule: Rule::Listed });
            cur = d.parent.clone();
            chain.push((n, d));
        }
        chain.reverse();
        Ok(chain)
    }
}

/// Union of two policies. Sets and provenance are unioned, warnings
/// concatenated. When both sides name different root classes or libraries
/// the result is still symmetric: the smaller root wins and library names
/// are joined.
pub fn merge(a: &Policy, b: &Policy) -> Policy {
    let mut provenance = a.provenance.clone();
    for (k, v) in &b.provenance {
        provenance
            .entry(k.clone())
            .and_modify(|cur| {
                if v < cur {
                    *cur = v.clone();
                }
            })
            .or_insert_with(|| v.clone());
    }
    let root_class = match (&a.root_class, &b.root_class) {
        (Some(x), Some(y)) => Some(x.min(y).clone()),
        (x, y) => x.clone().or_else(|| y.clone()),
    };
    let library = match (&a.library, &b.library) {
        (Some(x), Some(y)) if x == y => Some(x.clone()),
        (Some(x), Some(y)) => {
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            Some(Library { name: format!("{}+{}", lo.name, hi.name), version: format!("{}+{}", lo.version, hi.version) })
        }
        (x, y) => x.clone().or_else(|| y.clone()),
    };
    let generator_version = if a.generator_version.is_empty() { &b.generator_version } else { &a.generator_version };
    PolicyParts {
        allowed_imports: a.allowed_imports.union(&b.allowed_imports).cloned().collect(),
        allowed_invocations: a.allowed_invocations.union(&b.allowed_invocations).cloned().collect(),
        library,
        root_class,
        generator_version: generator_version.clone(),
        warnings: a.warnings.iter().chain(&b.warnings).cloned().collect(),
        provenance,
    }
    .build()
    .expect("union of valid policies is valid")
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyFile {
    schema: String,
    #[serde(default)]
    library: Option<Library>,
    #[serde(default)]
    root_class: Option<QualifiedName>,
    #[serde(default)]
    generator_version: String,
    allowed_imports: Vec<QualifiedName>,
    allowed_invocations: Vec<QualifiedName>,
    #[serde(default)]
    warnings: Vec<String>,
    #[serde(default)]
    provenance: BTreeMap<QualifiedName, Derivation>,
}

/// Canonical JSON text: sorted, de-duplicated names, fixed field order,
/// trailing newline. Equal policies give identical text.
pub fn to_json(policy: &Policy) -> String {
    let file = PolicyFile {
        schema: POLICY_SCHEMA.to_string(),
        library: policy.library.clone(),
        root_class: policy.root_class.clone(),
        generator_version: policy.generator_version.clone(),
        allowed_imports: policy.allowed_imports.iter().cloned().collect(),
        allowed_invocations: policy.allowed_invocations.iter().cloned().collect(),
        warnings: policy.warnings.clone(),
        provenance: policy.provenance.clone(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("policy serializes");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> Result<Policy, PolicyError> {
    let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| PolicyError::Parse(e.to_string()))?;
    match raw.get("schema").and_then(|s| s.as_str()) {
        Some(POLICY_SCHEMA) => {}
        Some(other) => return Err(PolicyError::UnsupportedSchema(other.to_string())),
        None => return Err(PolicyError::Parse("missing \"schema\" field".into())),
    }
    let file: PolicyFile = serde_json::from_value(raw).map_err(|e| PolicyError::Parse(e.to_string()))?;
    PolicyParts {
        allowed_imports: file.allowed_imports.into_iter().collect(),
        allowed_invocations: file.allowed_invocations.into_iter().collect(),
        library: file.library,
        root_class: file.root_class,
        generator_version: file.generator_version,
        warnings: file.warnings,
        provenance: file.provenance,
    }
    .build()
}

const BASELINE_ALLOWLIST: &str = include_str!("../data/baseline-allowlist.json");

/// A fixed, library-independent allowlist in the style of a weights-only
/// loader, used as a comparison baseline for generated policies.
pub fn baseline_allowlist() -> Policy {
    from_json(BASELINE_ALLOWLIST).expect("vendored baseline allowlist is valid")
}

pub fn read_policy(path: &Path) -> Result<Policy, PolicyError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PolicyError::Io { path: path.display().to_string(), message: e.to_string() })?;
    from_json(&text)
}

pub fn write_policy(policy: &Policy, path: &Path) -> Result<(), PolicyError> {
    std::fs::write(path, to_json(policy))
        .map_err(|e| PolicyError::Io { path: path.display().to_string(), message: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::name::qn;

    fn policy(imports: &[&str], invocations: &[&str]) -> Policy {
        Policy::from_sets(imports.iter().map(|s| qn(s)), invocations.iter().map(|s| qn(s))).unwrap()
    }

    #[test]
    fn subset_is_enforced() {
        let err = Policy::from_sets([qn("a.B")], [qn("a.C")]).unwrap_err();
        assert!(matches!(err, PolicyError::SubsetViolation(v) if v == ["a.C"]));
        assert!(Policy::from_sets([qn("a.B")], []).is_ok());
    }

    #[test]
    fn root_must_be_importable() {
        let parts = PolicyParts { root_class: Some(qn("a.Root")), ..PolicyParts::default() };
        assert!(matches!(parts.build(), Err(PolicyError::MissingRootClass(_))));
        let parts = PolicyParts {
            allowed_imports: [qn("a.Root")].into(),
            root_class: Some(qn("a.Root")),
            ..PolicyParts::default()
        };
        assert!(parts.build().is_ok());
    }

    #[test]
    fn merge_identity_and_symmetry() {
        let p = policy(&["a.B", "a.f"], &["a.f"]);
        let q = policy(&["c.D"], &[]);
        assert_eq!(merge(&p, &Policy::empty()), p);
        assert_eq!(merge(&p, &q), merge(&q, &p));
        assert_eq!(merge(&p, &q).allowed_imports().len(), 3);
    }

    #[test]
    fn json_round_trip_and_canonical_text() {
        let p = policy(&["z.Y", "a.B", "a.f"], &["a.f"]);
        let text = to_json(&p);
        assert_eq!(from_json(&text).unwrap(), p);
        assert_eq!(to_json(&from_json(&text).unwrap()), text);
        assert!(text.find("a.B").unwrap() < text.find("z.Y").unwrap());
    }

    #[test]
    fn file_errors() {
        let bad = r#"{"schema":"pickleward-policy/1","allowed_imports":["a.B"],"allowed_invocations":["os.system"]}"#;
        assert!(matches!(from_json(bad), Err(PolicyError::SubsetViolation(_))));
        let future = r#"{"schema":"pickleward-policy/9","allowed_imports":[],"allowed_invocations":[]}"#;
        let err = from_json(future).unwrap_err();
        assert!(err.to_string().contains("pickleward-policy/9"));
        assert!(matches!(from_json("{"), Err(PolicyError::Parse(_))));
    }

    #[test]
    fn explain_walks_parents() {
        let mut parts = policy(&["a.Root", "a.T", "a.load"], &["a.load"]).into_parts();
        parts.root_class = Some(qn("a.Root"));
        parts.provenance.insert(qn("a.Root"), Derivation { parent: None, rule: Rule::Root });
        parts.provenance.insert(qn("a.T"), Derivation { parent: Some(qn("a.Root")), rule: Rule::AttributeType });
        parts.provenance.insert(qn("a.load"), Derivation { parent: Some(qn("a.T")), rule: Rule::ReduceCallable });
        let p = parts.build().unwrap();
        let chain = p.explain(&qn("a.load")).unwrap();
        let names: Vec<&str> = chain.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["a.Root", "a.T", "a.load"]);
        assert_eq!(chain[2].1.rule.to_string(), "rule 1: __reduce__ return");
        assert_eq!(p.explain(&qn("a.Root")).unwrap().len(), 1);
        assert!(p.explain(&qn("os.system")).is_err());
    }
}
