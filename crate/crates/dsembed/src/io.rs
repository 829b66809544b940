//! CoNLL-U files on disk.

use std::fs;
use std::path::Path;

use dsembed_core::conllu::{parse_conllu, write_conllu, Treebank};

use crate::error::{io_err, Error, Result};

/// Reads `path` as a treebank called `name`.
pub fn read_treebank(path: &Path, name: &str) -> Result<Treebank> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_conllu(&text, name).map_err(|source| Error::Conllu {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_treebank(path: &Path, treebank: &Treebank) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, write_conllu(treebank)).map_err(io_err(path))
}

/// Treebank name from a file name such as `nl_alpino-ud-train.conllu`.
pub fn name_from_path(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("treebank");
    stem.split("-ud-").next().unwrap_or(stem).to_string()
}
