//! JSON-lines dataset manifests. Each line names one sample's id, the PGM
//! files holding its image, label and ground truth (relative to the
//! manifest's directory), and its provenance.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::pgm::{read_pgm_image, read_pgm_mask, write_pgm_image, write_pgm_mask, PgmFormat};
use super::{Dataset, Provenance, Sample, Split};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: u64,
    pub image: String,
    pub mask: String,
    pub pristine: String,
    pub provenance: Provenance,
}

fn manifest_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Manifest {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

/// Writes `dataset` as `path` plus a sibling `<stem>_pgm/` directory of
/// PGM files.
pub fn write_manifest(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| manifest_err(path, "manifest path has no file name"))?;
    let pgm_dir_name = format!("{stem}_pgm");
    let pgm_dir = base.join(&pgm_dir_name);
    fs::create_dir_all(&pgm_dir).map_err(|e| Error::io(&pgm_dir, e))?;

    let mut out = Vec::new();
    for s in &dataset.samples {
        let rel = |kind: &str| format!("{pgm_dir_name}/{}_{kind}.pgm", s.id);
        let entry = ManifestEntry {
            id: s.id,
            image: rel("image"),
            mask: rel("mask"),
            pristine: rel("pristine"),
            provenance: s.provenance,
        };
        write_pgm_image(base.join(&entry.image), &s.image, PgmFormat::Binary)?;
        write_pgm_mask(base.join(&entry.mask), &s.mask, PgmFormat::Binary)?;
        write_pgm_mask(base.join(&entry.pristine), &s.pristine_mask, PgmFormat::Binary)?;
        serde_json::to_writer(&mut out, &entry)?;
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>, split: Split, num_classes: usize) -> Result<Dataset> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut samples = Vec::new();
    let mut ids = HashSet::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(&line)
            .map_err(|e| manifest_err(path, format!("line {}: {e}", lineno + 1)))?;
        if !ids.insert(entry.id) {
            return Err(manifest_err(path, format!("line {}: duplicate id {}", lineno + 1, entry.id)));
        }
        let resolve = |rel: &str| -> Result<PathBuf> {
            let p = base.join(rel);
            if p.is_file() {
                Ok(p)
            } else {
                Err(manifest_err(path, format!("line {}: missing file {}", lineno + 1, p.display())))
            }
        };
        let sample = Sample {
            id: entry.id,
            image: read_pgm_image(resolve(&entry.image)?)?,
            mask: read_pgm_mask(resolve(&entry.mask)?, num_classes)?,
            pristine_mask: read_pgm_mask(resolve(&entry.pristine)?, num_classes)?,
            provenance: entry.provenance,
        };
        sample
            .validate()
            .map_err(|e| manifest_err(path, format!("line {}: {e}", lineno + 1)))?;
        samples.push(sample);
    }
    Dataset::new(split, samples).map_err(|e| manifest_err(path, e.to_string()))
}
