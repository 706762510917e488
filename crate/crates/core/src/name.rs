use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Dotted identifier of a Python callable: a module path plus an attribute
/// path inside it, compared as the exact text `module.attr`.
#[derive(Clone)]
pub struct QualifiedName {
    text: String,
    module_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid qualified name {text:?}: {reason}")]
pub struct NameError {
    pub text: String,
    pub reason: &'static str,
}

fn check_part(text: &str, part: &str, what: &'static str) -> Result<(), NameError> {
    if part.is_empty() {
        return Err(NameError { text: text.to_string(), reason: what });
    }
    if part.chars().any(char::is_whitespace) {
        return Err(NameError { text: text.to_string(), reason: "contains whitespace" });
    }
    Ok(())
}

impl QualifiedName {
    pub fn new(module: &str, attr: &str) -> Result<QualifiedName, NameError> {
        let text = format!("{module}.{attr}");
        check_part(&text, module, "empty module")?;
        check_part(&text, attr, "empty attribute")?;
        Ok(QualifiedName { module_len: module.len(), text })
    }

    /// Splits at the last dot: `a.b.C` has module `a.b` and attribute `C`.
    pub fn parse(text: &str) -> Result<QualifiedName, NameError> {
        match text.rsplit_once('.') {
            Some((m, a)) => QualifiedName::new(m, a),
            None => Err(NameError { text: text.to_string(), reason: "no module part" }),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn module(&self) -> &str {
        &self.text[..self.module_len]
    }

    pub fn attr(&self) -> &str {
        &self.text[self.module_len + 1..]
    }

    /// Last dotted component (`C` for `a.b.C`).
    pub fn short_name(&self) -> &str {
        self.text.rsplit('.').next().unwrap_or(&self.text)
    }
}

impl PartialEq for QualifiedName {
    fn eq(&self, other: &Self) -> bool {
        self.text == other.text
    }
}

impl Eq for QualifiedName {}

impl Hash for QualifiedName {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.text.hash(state);
    }
}

impl PartialOrd for QualifiedName {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QualifiedName {
    fn cmp(&self, other: &Self) -> Ordering {
        self.text.cmp(&other.text)
    }
}

impl std::borrow::Borrow<str> for QualifiedName {
    fn borrow(&self) -> &str {
        &self.text
    }
}

impl fmt::Display for QualifiedName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl fmt::Debug for QualifiedName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "QualifiedName({})", self.text)
    }
}

impl std::str::FromStr for QualifiedName {
    type Err = NameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        QualifiedName::parse(s)
    }
}

impl Serialize for QualifiedName {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.text)
    }
}

impl<'de> Deserialize<'de> for QualifiedName {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        QualifiedName::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Shorthand for names known to be well formed (tests, tables).
pub fn qn(text: &str) -> QualifiedName {
    QualifiedName::parse(text).unwrap_or_else(|e| panic!("{e}"))
}
