//! File discovery for single items and directory corpora.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub(super) struct Item {
    pub name: String,
    pub path: PathBuf,
    /// `path` was given directly rather than found inside a corpus directory.
    pub single: bool,
}

pub(super) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(super) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

/// `dir` itself if it holds a `meta.json`, else its bundle subdirectories
/// in name order.
pub(super) fn bundle_dirs(dir: &Path) -> Result<Vec<Item>> {
    if dir.join("meta.json").is_file() {
        return Ok(vec![Item { name: stem(dir), path: dir.to_path_buf(), single: true }]);
    }
    let items: Vec<Item> = sorted_entries(dir)?
        .into_iter()
        .filter(|p| p.join("meta.json").is_file())
        .map(|p| Item { name: stem(&p), path: p, single: false })
        .collect();
    if items.is_empty() {
        return Err(Error::InvalidArgument(format!("{} contains no map bundles", dir.display())));
    }
    Ok(items)
}

/// `(name, detections file, annotation file)` triples. Two files pair up
/// directly; two directories pair every `<name>.txt` under `gt` with
/// `<name>.json` under `det`.
pub(super) fn eval_pairs(det: &Path, gt: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    if !gt.is_dir() {
        return Ok(vec![(stem(gt), det.to_path_buf(), gt.to_path_buf())]);
    }
    let pairs: Vec<_> = sorted_entries(gt)?
        .into_iter()
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"))
        .map(|p| {
            let name = stem(&p);
            (name.clone(), det.join(format!("{name}.json")), p)
        })
        .collect();
    if pairs.is_empty() {
        return Err(Error::InvalidArgument(format!("{} contains no .txt annotation files", gt.display())));
    }
    Ok(pairs)
}
