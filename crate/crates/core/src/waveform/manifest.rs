//! Dataset manifests: plain text, one container path per line, `#` comments.
//! Relative paths resolve against the manifest's directory.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use super::container::{read_container, read_csv_records};
use super::{Label, Waveform};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub id: String,
    pub label: Option<Label>,
    pub onset_index: Option<usize>,
}

/// Index of the records a manifest resolved to.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub counts: BTreeMap<String, usize>,
}

impl DatasetManifest {
    fn push(&mut self, path: &Path, w: &Waveform) {
        self.entries.push(ManifestEntry {
            path: path.to_path_buf(),
            id: w.id.clone(),
            label: w.label,
            onset_index: w.onset_index,
        });
        let key = w.label.map_or("unlabeled", Label::as_str).to_string();
        *self.counts.entry(key).or_default() += 1;
    }

    pub fn count(&self, label: Option<Label>) -> usize {
        let key = label.map_or("unlabeled", Label::as_str);
        self.counts.get(key).copied().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoadOptions {
    /// Records shorter than this many samples per channel are rejected.
    pub min_samples: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { min_samples: 3000 }
    }
}

/// Valid records plus every per-record or per-file error encountered.
#[derive(Debug, Default)]
pub struct LoadedDataset {
    pub waveforms: Vec<Waveform>,
    pub errors: Vec<Error>,
    pub manifest: DatasetManifest,
}

pub fn read_manifest_paths(manifest_path: &Path) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    Ok(text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| {
            let p = Path::new(l);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        })
        .collect())
}

pub fn write_manifest(manifest_path: &Path, container_paths: &[PathBuf]) -> Result<()> {
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut text = String::from("# waveform containers, one per line\n");
    for p in container_paths {
        let shown = p.strip_prefix(base).unwrap_or(p);
        text.push_str(&shown.display().to_string());
        text.push('\n');
    }
    fs::write(manifest_path, text).map_err(|e| Error::io(manifest_path, e))
}

/// Loads every record the manifest references. Bad records and unreadable
/// files are collected in `errors`; loading carries on past them.
pub fn load_dataset(manifest_path: &Path, opts: LoadOptions) -> Result<LoadedDataset> {
    let mut out = LoadedDataset::default();
    let mut seen = HashSet::new();
    for path in read_manifest_paths(manifest_path)? {
        let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        let records = if is_csv {
            read_csv_records(&path)
        } else {
            read_container(&path)
        };
        let records = match records {
            Ok(r) => r,
            Err(e) => {
                out.errors.push(e);
                continue;
            }
        };
        for rec in records {
            let w = match rec {
                Ok(w) => w,
                Err(e) => {
                    out.errors.push(e);
                    continue;
                }
            };
            if w.len() < opts.min_samples {
                out.errors.push(Error::Record {
                    id: w.id.clone(),
                    reason: format!(
                        "shape mismatch: {} samples per channel, window needs {}",
                        w.len(),
                        opts.min_samples
                    ),
                });
                continue;
            }
            if !seen.insert(w.id.clone()) {
                out.errors.push(Error::Record {
                    id: w.id.clone(),
                    reason: "duplicate id".into(),
                });
                continue;
            }
            out.manifest.push(&path, &w);
            out.waveforms.push(w);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::write_container;
    use super::*;

    fn rec(id: &str, n: usize) -> Waveform {
        Waveform::new(id, vec![0.25; 3 * n], 100.0, Some(Label::Noise), None).unwrap()
    }

    #[test]
    fn empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.txt");
        fs::write(&m, "# nothing here\n\n").unwrap();
        let d = load_dataset(&m, LoadOptions::default()).unwrap();
        assert!(d.waveforms.is_empty() && d.errors.is_empty());
    }

    #[test]
    fn one_record_and_short_record() {
        let dir = tempfile::tempdir().unwrap();
        let c = dir.path().join("a.rcvr");
        write_container(&c, &[rec("ok-1", 3000), rec("short-1", 2999), rec("ok-1", 3000)]).unwrap();
        let m = dir.path().join("m.txt");
        write_manifest(&m, &[c, dir.path().join("missing.rcvr")]).unwrap();
        let d = load_dataset(&m, LoadOptions::default()).unwrap();
        assert_eq!(d.waveforms.len(), 1);
        assert_eq!(d.waveforms[0].id, "ok-1");
        assert_eq!(d.manifest.count(Some(Label::Noise)), 1);
        let msgs: Vec<String> = d.errors.iter().map(|e| e.to_string()).collect();
        assert_eq!(msgs.len(), 3, "{msgs:?}");
        assert!(msgs[0].contains("short-1") && msgs[0].contains("shape"));
        assert!(msgs[1].contains("duplicate"));
    }
}
