//! Reading and writing models, policies and CSV tables.

mod cassandra;
mod native;

use std::fs;
use std::path::Path;

pub use cassandra::parse_cassandra;
pub use native::{parse_native, parse_policy, serialize_native, serialize_policy, ModelDocument};

use crate::error::{Error, Result};

/// Loads a model file. Files ending in `.pomdp` are read as Cassandra files,
/// anything else as the native format.
pub fn load_document(path: &Path) -> Result<ModelDocument> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::validation(format!("cannot read {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "pomdp") {
        parse_cassandra(&text).map(ModelDocument::new)
    } else {
        parse_native(&text)
    }
}

/// Writes `contents` to a sibling temp file and renames it into place, so
/// readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "path has no file name"))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}
