//! The CVE2CWE ground-truth dataset: CWEs and per-version severities keyed by
//! CVE id.
//!
//! On disk it is a JSON object:
//!
//! ```json
//! {
//!   "CVE-2022-0001": {
//!     "cwes": ["CWE-79"],
//!     "severities": [
//!       {"version": "3.1", "label": "MEDIUM", "score": 6.1},
//!       {"version": "2.0", "label": "MEDIUM", "score": 4.3}
//!     ]
//!   }
//! }
//! ```
//!
//! `version` may be null when the source does not say which CVSS version
//! produced the rating.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::nvd::RawCveEntry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityEntry {
    #[serde(default)]
    pub version: Option<String>,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cve2CweEntry {
    #[serde(default)]
    pub cwes: Vec<String>,
    #[serde(default)]
    pub severities: Vec<SeverityEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cve2CweStore {
    entries: BTreeMap<String, Cve2CweEntry>,
}

impl Cve2CweStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&bytes)
    }

    /// Builds a store from feed entries; later entries replace earlier ones
    /// with the same id.
    pub fn from_feed<'a>(entries: impl IntoIterator<Item = &'a RawCveEntry>) -> Self {
        let mut store = Self::new();
        for e in entries {
            store.insert(
                e.cve.clone(),
                Cve2CweEntry {
                    cwes: e.cwe_texts.clone(),
                    severities: e
                        .cvss_entries
                        .iter()
                        .map(|c| SeverityEntry {
                            version: Some(c.version.clone()),
                            label: (!c.label.is_empty()).then(|| c.label.clone()),
                            score: Some(c.score),
                        })
                        .collect(),
                },
            );
        }
        store
    }

    pub fn insert(&mut self, cve: String, entry: Cve2CweEntry) {
        self.entries.insert(cve, entry);
    }

    pub fn get(&self, cve: &str) -> Option<&Cve2CweEntry> {
        self.entries.get(cve)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Fills ids that are missing here from `other`; existing ids win.
    pub fn merge_missing(&mut self, other: Cve2CweStore) {
        for (k, v) in other.entries {
            self.entries.entry(k).or_insert(v);
        }
    }
}
