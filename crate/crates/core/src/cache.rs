//! Class cache: precomputed policy fragments for classes that are reused
//! across libraries or cannot be analysed from source.
//!
//! Entries come from three layers. Later layers shadow earlier ones:
//! builtin entries compiled into the crate, vendored entries shipped in
//! `cache/`, and user-supplied entries read from a directory of
//! `<module>.<attr>.json` policy files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::name::{qn, QualifiedName};
use crate::policy::{self, PolicyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Builtin,
    Vendored,
    UserSupplied,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Builtin => "Builtin",
            Origin::Vendored => "Vendored",
            Origin::UserSupplied => "UserSupplied",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassCacheEntry {
    pub class_name: QualifiedName,
    pub imports: BTreeSet<QualifiedName>,
    pub invocations: BTreeSet<QualifiedName>,
    pub origin: Origin,
}

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("cache entry {path}: {source}")]
    Entry { path: String, source: PolicyError },
    #[error("cache entry {path} has no root_class naming its class")]
    MissingClass { path: String },
    #[error("cache entry {path} is for {found}, but its file name says {expected}")]
    NameMismatch { path: String, expected: String, found: String },
    #[error("cannot read cache directory {path}: {message}")]
    Io { path: String, message: String },
}

const VENDORED: &[(&str, &str)] = &[
    ("collections.Counter.json", include_str!("../cache/collections.Counter.json")),
    ("collections.OrderedDict.json", include_str!("../cache/collections.OrderedDict.json")),
    ("collections.defaultdict.json", include_str!("../cache/collections.defaultdict.json")),
    ("collections.deque.json", include_str!("../cache/collections.deque.json")),
    ("torch.Tensor.json", include_str!("../cache/torch.Tensor.json")),
    ("torch.nn.Embedding.json", include_str!("../cache/torch.nn.Embedding.json")),
    ("torch.nn.Linear.json", include_str!("../cache/torch.nn.Linear.json")),
    ("torch.nn.Module.json", include_str!("../cache/torch.nn.Module.json")),
    ("torch.nn.Parameter.json", include_str!("../cache/torch.nn.Parameter.json")),
];

/// Classes whose instances reduce to a call of the class itself.
const BUILTIN_SELF_INVOKED: &[&str] = &[
    "builtins.bytearray",
    "builtins.complex",
    "builtins.frozenset",
    "builtins.range",
    "builtins.set",
    "builtins.slice",
    "datetime.date",
    "datetime.datetime",
    "datetime.time",
    "datetime.timedelta",
    "decimal.Decimal",
];

/// Classes rebuilt by calling a helper: `(class, helper)`. Protocols 0-2
/// encode `bytes` as `_codecs.encode(text, "latin1")`.
const BUILTIN_HELPER_INVOKED: &[(&str, &str)] = &[("builtins.bytes", "_codecs.encode")];

/// Classes that contribute nothing: annotations that say nothing about the
/// pickled form.
const BUILTIN_EMPTY: &[&str] = &["builtins.object", "typing.Any"];

#[derive(Debug, Clone, Default)]
pub struct ClassCache {
    entries: BTreeMap<QualifiedName, ClassCacheEntry>,
}

impl ClassCache {
    /// An empty cache (no entries at all, not even builtin ones).
    pub fn none() -> ClassCache {
        ClassCache::default()
    }

    /// Builtin entries only.
    pub fn builtin() -> ClassCache {
        let mut cache = ClassCache::default();
        for name in BUILTIN_SELF_INVOKED {
            let n = qn(name);
            cache.insert(ClassCacheEntry {
                class_name: n.clone(),
                imports: [n.clone()].into(),
                invocations: [n].into(),
                origin: Origin::Builtin,
            });
        }
        for (name, helper) in BUILTIN_HELPER_INVOKED {
            let h = qn(helper);
            cache.insert(ClassCacheEntry {
                class_name: qn(name),
                imports: [h.clone()].into(),
                invocations: [h].into(),
                origin: Origin::Builtin,
            });
        }
        for name in BUILTIN_EMPTY {
            cache.insert(ClassCacheEntry {
                class_name: qn(name),
                imports: BTreeSet::new(),
                invocations: BTreeSet::new(),
                origin: Origin::Builtin,
            });
        }
        cache
    }

    /// Builtin plus vendored entries.
    pub fn standard() -> ClassCache {
        let mut cache = ClassCache::builtin();
        for (file, text) in VENDORED {
            let entry = parse_entry(file, text, Origin::Vendored).expect("vendored cache entries are valid");
            cache.insert(entry);
        }
        cache
    }

    /// Standard entries shadowed by every `*.json` file in `dir`.
    pub fn with_user_dir(dir: &Path) -> Result<ClassCache, CacheError> {
        let mut cache = ClassCache::standard();
        cache.load_dir(dir, Origin::UserSupplied)?;
        Ok(cache)
    }

    pub fn load_dir(&mut self, dir: &Path, origin: Origin) -> Result<(), CacheError> {
        let io = |e: std::io::Error| CacheError::Io { path: dir.display().to_string(), message: e.to_string() };
        let mut files: Vec<_> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        for path in files {
            let text = std::fs::read_to_string(&path).map_err(io)?;
            let file = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
            self.insert(parse_entry(&file, &text, origin)?);
        }
        Ok(())
    }

    /// Adds an entry, replacing any entry for the same class from an equal
    /// or lower-precedence origin.
    pub fn insert(&mut self, entry: ClassCacheEntry) {
        match self.entries.get(&entry.class_name) {
            Some(existing) if existing.origin > entry.origin => {}
            _ => {
                self.entries.insert(entry.class_name.clone(), entry);
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&ClassCacheEntry> {
        self.entries.get(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ClassCacheEntry> {
        self.entries.values()
    }
}

fn parse_entry(file: &str, text: &str, origin: Origin) -> Result<ClassCacheEntry, CacheError> {
    let policy = policy::from_json(text).map_err(|source| CacheError::Entry { path: file.to_string(), source })?;
    let class_name = policy.root_class().cloned().ok_or_else(|| CacheError::MissingClass { path: file.to_string() })?;
    let expected = file.strip_suffix(".json").unwrap_or(file);
    if class_name.as_str() != expected {
        return Err(CacheError::NameMismatch {
            path: file.to_string(),
            expected: expected.to_string(),
            found: class_name.to_string(),
        });
    }
    Ok(ClassCacheEntry {
        class_name,
        imports: policy.allowed_imports().clone(),
        invocations: policy.allowed_invocations().clone(),
        origin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vendored_entries_parse_and_keep_subset() {
        let cache = ClassCache::standard();
        let od = cache.get("collections.OrderedDict").unwrap();
        assert_eq!(od.origin, Origin::Vendored);
        for e in cache.iter() {
            assert!(e.invocations.is_subset(&e.imports), "{}", e.class_name);
        }
        let module = cache.get("torch.nn.Module").unwrap();
        assert!(module.invocations.contains("torch._utils._rebuild_tensor_v2"));
        assert!(module.imports.contains("torch.nn.modules.module.Module"));
        assert!(!module.imports.contains("torch.optim.sgd.SGD"));
    }

    #[test]
    fn user_entries_shadow_vendored_ones() {
        let dir = tempfile::tempdir().unwrap();
        let text = r#"{"schema":"pickleward-policy/1","root_class":"collections.OrderedDict",
            "allowed_imports":["collections.OrderedDict","x.y"],"allowed_invocations":[]}"#;
        std::fs::write(dir.path().join("collections.OrderedDict.json"), text).unwrap();
        let cache = ClassCache::with_user_dir(dir.path()).unwrap();
        let od = cache.get("collections.OrderedDict").unwrap();
        assert_eq!(od.origin, Origin::UserSupplied);
        assert!(od.invocations.is_empty());

        let mut cache = cache;
        cache.insert(ClassCacheEntry {
            class_name: qn("collections.OrderedDict"),
            imports: BTreeSet::new(),
            invocations: BTreeSet::new(),
            origin: Origin::Builtin,
        });
        assert_eq!(cache.get("collections.OrderedDict").unwrap().origin, Origin::UserSupplied);
    }

    #[test]
    fn misnamed_entries_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let text = r#"{"schema":"pickleward-policy/1","root_class":"a.B","allowed_imports":["a.B"],"allowed_invocations":[]}"#;
        std::fs::write(dir.path().join("a.C.json"), text).unwrap();
        assert!(matches!(ClassCache::with_user_dir(dir.path()), Err(CacheError::NameMismatch { .. })));
    }
}
