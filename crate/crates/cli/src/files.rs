//! Input discovery and stem matching for batch commands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "tif", "tiff", "jpg", "jpeg"];

pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Image files of a directory keyed by stem, or a single file.
pub fn images_by_stem(path: &Path) -> Result<BTreeMap<String, PathBuf>> {
    if !path.exists() {
        bail!("input not found: {}", path.display());
    }
    if path.is_file() {
        return Ok(BTreeMap::from([(stem(path), path.to_path_buf())]));
    }
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(path).with_context(|| format!("listing {}", path.display()))? {
        let p = entry?.path();
        if p.is_file() && is_image(&p) {
            if let Some(prev) = out.insert(stem(&p), p.clone()) {
                bail!("two inputs share the stem of {}: {}", p.display(), prev.display());
            }
        }
    }
    if out.is_empty() {
        bail!("no images in {}", path.display());
    }
    Ok(out)
}

/// Pairs two stem maps. Unmatched stems on either side are an error that
/// lists them.
pub fn match_stems(
    left_name: &str,
    left: &BTreeMap<String, PathBuf>,
    right_name: &str,
    right: &BTreeMap<String, PathBuf>,
) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    // a single file on each side pairs regardless of name
    if left.len() == 1 && right.len() == 1 {
        let (s, l) = left.iter().next().expect("one entry");
        let r = right.values().next().expect("one entry");
        return Ok(vec![(s.clone(), l.clone(), r.clone())]);
    }
    let only = |a: &BTreeMap<String, PathBuf>, b: &BTreeMap<String, PathBuf>| -> Vec<String> {
        a.keys().filter(|k| !b.contains_key(*k)).cloned().collect()
    };
    let (l_only, r_only) = (only(left, right), only(right, left));
    if !l_only.is_empty() || !r_only.is_empty() {
        let mut msg = String::from("unmatched file stems");
        if !l_only.is_empty() {
            msg += &format!("; only in {left_name}: {}", l_only.join(", "));
        }
        if !r_only.is_empty() {
            msg += &format!("; only in {right_name}: {}", r_only.join(", "));
        }
        bail!(msg);
    }
    Ok(left
        .iter()
        .map(|(s, l)| (s.clone(), l.clone(), right[s].clone()))
        .collect())
}

/// Where the output for `stem` goes: `out` itself for a single input that
/// names a file, otherwise `out/<stem>.png`.
pub fn output_path(out: &Path, stem: &str, single: bool) -> PathBuf {
    if single && out.extension().is_some() {
        out.to_path_buf()
    } else {
        out.join(format!("{stem}.png"))
    }
}
