//! Reader for the fixture corpus manifest (`corpus/manifest.json`).

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::name::QualifiedName;

pub const MANIFEST_SCHEMA: &str = "pickleward-corpus/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Benign,
    Malicious,
    Bypass,
    KnownFailing,
}

#[derive(Debug, Clone, Deserialize)]
pub struct LibraryEntry {
    pub name: String,
    pub path: String,
    pub package: String,
    pub root_class: QualifiedName,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Expected {
    Dump {
        dump: String,
    },
    Error {
        error: String,
        #[serde(default)]
        has_trailing_programs: bool,
    },
}

#[derive(Debug, Clone, Deserialize)]
pub struct ExpectedStub {
    pub path: String,
    pub name: QualifiedName,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Entry {
    pub id: String,
    pub kind: Kind,
    pub pickle_path: String,
    #[serde(default)]
    pub library: Option<String>,
    #[serde(default)]
    pub library_path: Option<String>,
    #[serde(default)]
    pub package: Option<String>,
    #[serde(default)]
    pub root_class: Option<QualifiedName>,
    #[serde(default)]
    pub member: Option<String>,
    pub expected: Expected,
    #[serde(default)]
    pub expected_stubs: Vec<ExpectedStub>,
    #[serde(default)]
    pub notes: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub libraries: Vec<LibraryEntry>,
    pub entries: Vec<Entry>,
    #[serde(skip)]
    pub root: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {message}")]
    Io { path: String, message: String },
    #[error("bad manifest: {0}")]
    Parse(String),
    #[error("unsupported manifest schema {0:?}")]
    Schema(String),
}

impl Manifest {
    /// Loads `<dir>/manifest.json`; paths in the manifest are relative to `dir`.
    pub fn load(dir: &Path) -> Result<Manifest, ManifestError> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path)
            .map_err(|e| ManifestError::Io { path: path.display().to_string(), message: e.to_string() })?;
        let mut m: Manifest = serde_json::from_str(&text).map_err(|e| ManifestError::Parse(e.to_string()))?;
        if m.schema != MANIFEST_SCHEMA {
            return Err(ManifestError::Schema(m.schema));
        }
        m.root = dir.to_path_buf();
        Ok(m)
    }

    pub fn path(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }

    pub fn entry(&self, id: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn library(&self, name: &str) -> Option<&LibraryEntry> {
        self.libraries.iter().find(|l| l.name == name)
    }

    /// Reads an entry's pickle program, unpacking ZIP containers.
    pub fn pickle_bytes(&self, entry: &Entry) -> Result<Vec<u8>, crate::container::ContainerError> {
        crate::container::read_pickle(&self.path(&entry.pickle_path), entry.member.as_deref())
    }

    /// Reads an entry's expected dump text, if it has one.
    pub fn expected_dump(&self, entry: &Entry) -> Option<String> {
        match &entry.expected {
            Expected::Dump { dump } => std::fs::read_to_string(self.path(dump)).ok(),
            Expected::Error { .. } => None,
        }
    }
}

/// The corpus shipped with this crate's workspace.
pub fn default_corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}
