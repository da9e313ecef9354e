//! Line-delimited dataset file: one JSON header line, then one record per line.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sample::TrainingSample;
use crate::error::{Error, Result};
use crate::hash::sha256_hex;

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub vocab_hash: String,
    pub codec_hash: String,
    pub k: usize,
    pub seeds: Vec<u64>,
    pub records: usize,
    pub config: serde_json::Value,
}

/// Hashes a dataset must carry to be accepted.
#[derive(Debug, Clone, Copy, Default)]
pub struct Expected<'a> {
    pub vocab_hash: Option<&'a str>,
    pub codec_hash: Option<&'a str>,
}

pub fn dataset_bytes(header: &DatasetHeader, samples: &[TrainingSample]) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec(header)?;
    out.push(b'\n');
    for s in samples {
        serde_json::to_writer(&mut out, s)?;
        out.push(b'\n');
    }
    Ok(out)
}

/// Writes the dataset and returns the file hash.
pub fn serialize_dataset(path: &Path, header: &DatasetHeader, samples: &[TrainingSample]) -> Result<String> {
    if header.records != samples.len() {
        return Err(Error::malformed("dataset header", "record count differs from samples"));
    }
    let bytes = dataset_bytes(header, samples)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn check(what: &str, expected: Option<&str>, found: &str) -> Result<()> {
    match expected {
        Some(e) if e != found => Err(Error::HashMismatch {
            what: what.into(),
            expected: e.into(),
            found: found.into(),
        }),
        _ => Ok(()),
    }
}

pub fn load_dataset(path: &Path, expected: Expected<'_>) -> Result<(DatasetHeader, Vec<TrainingSample>)> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(f).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::malformed("dataset", "empty file"))?
        .map_err(|e| Error::io(path, e))?;
    let header: DatasetHeader = serde_json::from_str(&first)?;
    if header.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::Version {
            what: "dataset".into(),
            found: header.format_version,
        });
    }
    check("vocabulary", expected.vocab_hash, &header.vocab_hash)?;
    check("codec", expected.codec_hash, &header.codec_hash)?;
    let mut samples = Vec::with_capacity(header.records);
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.is_empty() {
            samples.push(serde_json::from_str(&line)?);
        }
    }
    if samples.len() != header.records {
        return Err(Error::malformed(
            "dataset",
            format!("header says {} records, found {}", header.records, samples.len()),
        ));
    }
    Ok((header, samples))
}
