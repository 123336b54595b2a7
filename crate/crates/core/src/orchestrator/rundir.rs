use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const INDEX_FILE: &str = "index.json";

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> std::io::Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| std::io::Error::other(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect(root, &path, out)?;
        } else if path.strip_prefix(root).ok() != Some(Path::new(INDEX_FILE)) {
            out.push(path);
        }
    }
    Ok(())
}

/// Relative path, size and digest of every file under `dir` except the
/// index itself, sorted by path.
pub fn build_index(dir: &Path) -> std::io::Result<Vec<IndexEntry>> {
    let mut files = Vec::new();
    collect(dir, dir, &mut files)?;
    let mut entries = files
        .into_iter()
        .map(|p| {
            let data = std::fs::read(&p)?;
            let rel = p.strip_prefix(dir).expect("under root");
            let path = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            Ok(IndexEntry {
                path,
                bytes: data.len() as u64,
                sha256: hex::encode(Sha256::digest(&data)),
            })
        })
        .collect::<std::io::Result<Vec<_>>>()?;
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(entries)
}

pub fn write_index(dir: &Path) -> std::io::Result<()> {
    let entries = build_index(dir)?;
    write_json(&dir.join(INDEX_FILE), &entries)
}
