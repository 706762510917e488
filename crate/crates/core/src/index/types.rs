//! Type expressions recovered from annotations and assignments.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::name::{qn, QualifiedName};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TypeExpr {
    Named { name: QualifiedName },
    Optional { inner: Box<TypeExpr> },
    Union { members: Vec<TypeExpr> },
    /// Homogeneous collection. `container` names a non-builtin collection
    /// class (such as `collections.deque`) that must itself be importable.
    Sequence { container: Option<QualifiedName>, elem: Box<TypeExpr> },
    Mapping { container: Option<QualifiedName>, key: Box<TypeExpr>, value: Box<TypeExpr> },
    Tuple { elems: Vec<TypeExpr> },
    Unknown { reason: String },
}

impl TypeExpr {
    pub fn named(name: QualifiedName) -> TypeExpr {
        TypeExpr::Named { name }
    }

    /// `builtins.<name>`.
    pub fn builtin(name: &str) -> TypeExpr {
        TypeExpr::Named { name: qn(&format!("builtins.{name}")) }
    }

    pub fn unknown(reason: impl Into<String>) -> TypeExpr {
        TypeExpr::Unknown { reason: reason.into() }
    }

    pub fn optional(inner: TypeExpr) -> TypeExpr {
        TypeExpr::Optional { inner: Box::new(inner) }
    }

    pub fn sequence(container: Option<QualifiedName>, elem: TypeExpr) -> TypeExpr {
        TypeExpr::Sequence { container, elem: Box::new(elem) }
    }

    pub fn mapping(container: Option<QualifiedName>, key: TypeExpr, value: TypeExpr) -> TypeExpr {
        TypeExpr::Mapping { container, key: Box::new(key), value: Box::new(value) }
    }

    /// Union of `members`: nested unions are flattened, duplicates dropped
    /// (first occurrence kept) and a single member stands for itself.
    pub fn union(members: impl IntoIterator<Item = TypeExpr>) -> TypeExpr {
        let mut out: Vec<TypeExpr> = Vec::new();
        for m in members {
            let parts = match m {
                TypeExpr::Union { members } => members,
                other => vec![other],
            };
            for p in parts {
                if !out.contains(&p) {
                    out.push(p);
                }
            }
        }
        match out.len() {
            1 => out.pop().expect("one member"),
            _ => TypeExpr::Union { members: out },
        }
    }

    pub fn is_unknown(&self) -> bool {
        matches!(self, TypeExpr::Unknown { .. })
    }

    /// Every class name mentioned in the expression. Reasons of unknown
    /// parts are appended to `unknowns`.
    pub fn collect_names(&self, names: &mut BTreeSet<QualifiedName>, unknowns: &mut Vec<String>) {
        match self {
            TypeExpr::Named { name } => {
                names.insert(name.clone());
            }
            TypeExpr::Optional { inner } => inner.collect_names(names, unknowns),
            TypeExpr::Union { members } | TypeExpr::Tuple { elems: members } => {
                for m in members {
                    m.collect_names(names, unknowns);
                }
            }
            TypeExpr::Sequence { container, elem } => {
                names.extend(container.iter().cloned());
                elem.collect_names(names, unknowns);
            }
            TypeExpr::Mapping { container, key, value } => {
                names.extend(container.iter().cloned());
                key.collect_names(names, unknowns);
                value.collect_names(names, unknowns);
            }
            TypeExpr::Unknown { reason } => unknowns.push(reason.clone()),
        }
    }
}

fn join(f: &mut fmt::Formatter<'_>, items: &[TypeExpr]) -> fmt::Result {
    for (i, t) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{t}")?;
    }
    Ok(())
}

/// Compact notation used in dumps and expected-attribute tables, e.g.
/// `Optional[Mapping[builtins.str, pkg.Foo]]`. Unknown parts print as `?`.
impl fmt::Display for TypeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeExpr::Named { name } => write!(f, "{name}"),
            TypeExpr::Optional { inner } => write!(f, "Optional[{inner}]"),
            TypeExpr::Union { members } => {
                f.write_str("Union[")?;
                join(f, members)?;
                f.write_str("]")
            }
            TypeExpr::Sequence { container, elem } => match container {
                Some(c) => write!(f, "{c}[{elem}]"),
                None => write!(f, "Sequence[{elem}]"),
            },
            TypeExpr::Mapping { container, key, value } => match container {
                Some(c) => write!(f, "{c}[{key}, {value}]"),
                None => write!(f, "Mapping[{key}, {value}]"),
            },
            TypeExpr::Tuple { elems } if elems.is_empty() => f.write_str("Tuple[()]"),
            TypeExpr::Tuple { elems } => {
                f.write_str("Tuple[")?;
                join(f, elems)?;
                f.write_str("]")
            }
            TypeExpr::Unknown { .. } => f.write_str("?"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unions_flatten_and_dedupe() {
        let int = TypeExpr::builtin("int");
        let s = TypeExpr::builtin("str");
        let u = TypeExpr::union([int.clone(), TypeExpr::union([s.clone(), int.clone()])]);
        assert_eq!(u, TypeExpr::Union { members: vec![int.clone(), s] });
        assert_eq!(TypeExpr::union([int.clone(), int.clone()]), int);
    }

    #[test]
    fn optional_dict_flattens_to_key_and_value() {
        let t = TypeExpr::optional(TypeExpr::mapping(None, TypeExpr::builtin("str"), TypeExpr::named(qn("pkg.Foo"))));
        let mut names = BTreeSet::new();
        let mut unknowns = Vec::new();
        t.collect_names(&mut names, &mut unknowns);
        assert_eq!(names, [qn("builtins.str"), qn("pkg.Foo")].into());
        assert!(unknowns.is_empty());
        assert_eq!(t.to_string(), "Optional[Mapping[builtins.str, pkg.Foo]]");
    }

    #[test]
    fn containers_contribute_their_class() {
        let t = TypeExpr::mapping(Some(qn("collections.OrderedDict")), TypeExpr::builtin("str"), TypeExpr::unknown("x"));
        let mut names = BTreeSet::new();
        let mut unknowns = Vec::new();
        t.collect_names(&mut names, &mut unknowns);
        assert!(names.contains("collections.OrderedDict"));
        assert_eq!(unknowns, ["x"]);
    }
}
