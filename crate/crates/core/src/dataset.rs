//! On-disk layout of a built dataset.
//!
//! ```text
//! <dir>/manifest.json          seed, split fraction, one entry per record
//! <dir>/records/<hh>/<sha>.json  enriched records, content-addressed
//! <dir>/ground_truth.json      CVE id -> ground truth
//! <dir>/non_evaluated.json     discarded records with reasons
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::filters::{write_non_evaluated, DiscardRecord, PassedRecord};
use crate::ingestion::split::split_indices;
use crate::model::{EnrichedRecord, GroundTruth, PromptVariant};

pub const MANIFEST: &str = "manifest.json";
pub const GROUND_TRUTH: &str = "ground_truth.json";
pub const NON_EVALUATED: &str = "non_evaluated.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Evaluation,
    Finetune,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub cve: String,
    pub split: Split,
    pub hash: String,
    /// Relative to the dataset directory.
    pub path: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub excluded_variants: BTreeMap<PromptVariant, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub eval_fraction: f64,
    pub records: Vec<ManifestEntry>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    /// Same order as `manifest.records`.
    pub records: Vec<PassedRecord>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &PassedRecord> {
        self.manifest
            .records
            .iter()
            .zip(&self.records)
            .filter(move |(e, _)| e.split == split)
            .map(|(_, r)| r)
    }

    pub fn get(&self, cve: &str) -> Option<&PassedRecord> {
        self.records.iter().find(|r| r.record.cve == cve)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub(crate) fn to_pretty_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Writes the dataset. Records are ordered by CVE id and split with
/// `eval_fraction` going to evaluation.
pub fn write_dataset(
    dir: &Path,
    passed: &[PassedRecord],
    discarded: &[DiscardRecord],
    seed: u64,
    eval_fraction: f64,
) -> Result<DatasetManifest> {
    let mut sorted: Vec<&PassedRecord> = passed.iter().collect();
    sorted.sort_by(|a, b| a.record.cve.cmp(&b.record.cve));
    if let Some(w) = sorted.windows(2).find(|w| w[0].record.cve == w[1].record.cve) {
        return Err(Error::InvalidRecord(format!("duplicate record {}", w[0].record.cve)));
    }
    let (eval_idx, _) = split_indices(sorted.len(), eval_fraction, seed)?;
    let mut split = vec![Split::Finetune; sorted.len()];
    for i in eval_idx {
        split[i] = Split::Evaluation;
    }

    let mut entries = Vec::with_capacity(sorted.len());
    let mut ground_truth = BTreeMap::new();
    for (p, split) in sorted.iter().zip(split) {
        let bytes = to_pretty_json(&p.record)?;
        let hash = sha256_hex(&bytes);
        let rel = format!("records/{}/{hash}.json", &hash[..2]);
        write_file(&dir.join(&rel), &bytes)?;
        ground_truth.insert(p.record.cve.clone(), p.ground_truth.clone());
        entries.push(ManifestEntry {
            cve: p.record.cve.clone(),
            split,
            hash,
            path: rel,
            excluded_variants: p.excluded_variants.clone(),
        });
    }
    let manifest = DatasetManifest {
        seed,
        eval_fraction,
        records: entries,
    };
    write_file(&dir.join(GROUND_TRUTH), &to_pretty_json(&ground_truth)?)?;
    write_non_evaluated(&dir.join(NON_EVALUATED), discarded)?;
    write_file(&dir.join(MANIFEST), &to_pretty_json(&manifest)?)?;
    Ok(manifest)
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST)
}

/// Loads and hash-checks every record of a dataset.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: DatasetManifest = read_json(&manifest_path(dir))?;
    let ground_truth: BTreeMap<String, GroundTruth> = read_json(&dir.join(GROUND_TRUTH))?;
    let mut records = Vec::with_capacity(manifest.records.len());
    for entry in &manifest.records {
        let path = dir.join(&entry.path);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if sha256_hex(&bytes) != entry.hash {
            return Err(Error::InvalidRecord(format!(
                "{}: content of {} does not match its manifest hash",
                entry.cve,
                path.display()
            )));
        }
        let record: EnrichedRecord = serde_json::from_slice(&bytes)?;
        let gt = ground_truth
            .get(&entry.cve)
            .cloned()
            .ok_or_else(|| Error::MissingCve(entry.cve.clone()))?;
        records.push(PassedRecord {
            record,
            ground_truth: gt,
            excluded_variants: entry.excluded_variants.clone(),
        });
    }
    Ok(Dataset { manifest, records })
}
