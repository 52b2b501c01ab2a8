//! On-disk recording format.
//!
//! Each subject is a pair of files in one directory:
//!
//! - `subject_<id>.json`: `{"fs": 128.0, "channels": 64, "samples": N,
//!   "trials": [{"start_sample": 0, "end_sample": 23040, "label": -1}, ...]}`
//!   with `end_sample` exclusive and labels −1 / 1;
//! - `subject_<id>.f32`: `channels * samples` little-endian 32-bit floats,
//!   channel-major (all samples of channel 0, then channel 1, ...).

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sigproc::{Recording, Trial};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub fs: f64,
    pub channels: usize,
    pub samples: usize,
    pub trials: Vec<Trial>,
}

pub fn header_path(dir: &Path, subject: &str) -> PathBuf {
    dir.join(format!("subject_{subject}.json"))
}

pub fn payload_path(dir: &Path, subject: &str) -> PathBuf {
    dir.join(format!("subject_{subject}.f32"))
}

/// Writes one recording; samples are rounded to 32-bit floats.
pub fn write_recording(dir: &Path, rec: &Recording) -> Result<()> {
    fs::create_dir_all(dir)?;
    let header = DatasetHeader {
        fs: rec.fs,
        channels: rec.channels(),
        samples: rec.samples(),
        trials: rec.trials.clone(),
    };
    fs::write(header_path(dir, &rec.subject), serde_json::to_string_pretty(&header)?)?;
    let mut bytes = Vec::with_capacity(rec.channels() * rec.samples() * 4);
    for ch in 0..rec.channels() {
        for v in rec.data.row(ch).iter() {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    fs::write(payload_path(dir, &rec.subject), bytes)?;
    Ok(())
}

/// Reads and validates one subject.
pub fn read_recording(dir: &Path, subject: &str) -> Result<Recording> {
    let hpath = header_path(dir, subject);
    let header: DatasetHeader = serde_json::from_str(&fs::read_to_string(&hpath)?)
        .map_err(|e| Error::Format(format!("{}: {e}", hpath.display())))?;
    if header.channels == 0 || header.samples == 0 {
        return Err(Error::Format(format!("{}: empty recording", hpath.display())));
    }
    let ppath = payload_path(dir, subject);
    let bytes = fs::read(&ppath)?;
    let expected = header.channels * header.samples * 4;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "{}: expected {expected} bytes ({} channels x {} samples x 4), found {}",
            ppath.display(),
            header.channels,
            header.samples,
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format(format!("{}: non-finite samples", ppath.display())));
    }
    // channel-major payload is the row-major layout of the C x N matrix
    let data = DMatrix::from_row_slice(header.channels, header.samples, &values);
    Recording::new(subject, data, header.fs, header.trials)
        .map_err(|e| Error::Format(format!("{}: {e}", hpath.display())))
}

/// Subject ids found in `dir`, sorted.
pub fn list_subjects(dir: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        if let Some(id) = name.strip_prefix("subject_").and_then(|r| r.strip_suffix(".json")) {
            ids.push(id.to_string());
        }
    }
    ids.sort();
    Ok(ids)
}

/// Loads every subject of a dataset directory.
pub fn load_dataset(dir: &Path) -> Result<Vec<Recording>> {
    let ids = list_subjects(dir)?;
    if ids.is_empty() {
        return Err(Error::Format(format!(
            "{}: no subject_<id>.json headers",
            dir.display()
        )));
    }
    ids.iter().map(|id| read_recording(dir, id)).collect()
}
