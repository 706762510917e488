//! Locating the pickle program inside an input file: either the file itself
//! or a `.pkl` member of a ZIP archive (the PyTorch checkpoint layout).

use std::io::{Cursor, Read};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ContainerError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("bad ZIP archive: {0}")]
    Zip(String),
    #[error("archive has no member {0:?}")]
    NoSuchMember(String),
    #[error("archive has no member ending in data.pkl (members: {0:?})")]
    NoDataMember(Vec<String>),
    #[error("archive has several members ending in data.pkl, choose one: {0:?}")]
    AmbiguousMember(Vec<String>),
}

const ZIP_MAGIC: &[u8] = b"PK\x03\x04";

pub fn is_zip(raw: &[u8]) -> bool {
    raw.starts_with(ZIP_MAGIC)
}

fn member_names<R: Read + std::io::Seek>(archive: &zip::ZipArchive<R>) -> Result<Vec<String>, ContainerError> {
    archive
        .file_names()
        .map(|n| n.map(|n| n.into_owned()).map_err(|e| ContainerError::Zip(e.to_string())))
        .collect()
}

/// Names of archive members ending in `.pkl`, in archive order.
pub fn pickle_members(raw: &[u8]) -> Result<Vec<String>, ContainerError> {
    let archive = zip::ZipArchive::new(Cursor::new(raw)).map_err(|e| ContainerError::Zip(e.to_string()))?;
    Ok(member_names(&archive)?.into_iter().filter(|n| n.ends_with(".pkl")).collect())
}

/// The pickle bytes of `raw`. Plain pickles are returned as is. For ZIP
/// archives, `member` picks a member by exact name; the default is the
/// single member whose name ends in `data.pkl`.
pub fn extract_pickle(raw: Vec<u8>, member: Option<&str>) -> Result<(Vec<u8>, Option<String>), ContainerError> {
    if !is_zip(&raw) {
        return Ok((raw, None));
    }
    let mut archive = zip::ZipArchive::new(Cursor::new(&raw)).map_err(|e| ContainerError::Zip(e.to_string()))?;
    let name = match member {
        Some(m) => {
            if archive.index_for_name(m).is_none() {
                return Err(ContainerError::NoSuchMember(m.to_string()));
            }
            m.to_string()
        }
        None => {
            let all = member_names(&archive)?;
            let data: Vec<String> = all.iter().filter(|n| n.ends_with("data.pkl")).cloned().collect();
            match data.len() {
                0 => return Err(ContainerError::NoDataMember(all)),
                1 => data.into_iter().next().expect("one member"),
                _ => return Err(ContainerError::AmbiguousMember(data)),
            }
        }
    };
    let mut file = archive.by_name(&name).map_err(|e| ContainerError::Zip(e.to_string()))?;
    let mut out = Vec::with_capacity(file.size() as usize);
    file.read_to_end(&mut out).map_err(|e| ContainerError::Zip(e.to_string()))?;
    Ok((out, Some(name)))
}

/// Reads `path` and extracts its pickle program.
pub fn read_pickle(path: &Path, member: Option<&str>) -> Result<Vec<u8>, ContainerError> {
    let raw = std::fs::read(path)
        .map_err(|e| ContainerError::Io { path: path.display().to_string(), message: e.to_string() })?;
    extract_pickle(raw, member).map(|(bytes, _)| bytes)
}
