//! A scripted provider for offline runs and tests.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cvss::SchemeStore;
use crate::error::{Error, Result};
use crate::inference::Provider;
use crate::model::{CweId, CweSet, GroundTruth, SeverityScore, TaskKind};
use crate::prompting::{assistant_text, PromptPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MockMode {
    /// Answer with the ground truth.
    Echo,
    /// Ground truth with one CWE swapped and the label moved to another band.
    Perturb,
    /// The default decline answers.
    Decline,
}

pub fn decline_text(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Cwe => r#"{"exact":[],"top5":[]}"#,
        TaskKind::Severity => r#"{"label":null,"score":-1}"#,
    }
}

/// Ground truth altered so that it fails the CWE equality and label checks:
/// the smallest CWE id is replaced by one absent from the set, and the label
/// moves to the next band of the same scheme with that band's mid score.
pub fn perturb(gt: &GroundTruth, schemes: &SchemeStore) -> GroundTruth {
    let mut cwes: Vec<CweId> = gt.cwes.iter().collect();
    let fresh = gt.cwes.iter().map(CweId::get).max().unwrap_or(0) + 1;
    if let Some(first) = cwes.first_mut() {
        *first = CweId::new(fresh).expect("positive id");
    }
    let bands = schemes.scheme(gt.version).bands();
    let at = bands.iter().position(|b| b.label == gt.label).unwrap_or(0);
    let band = &bands[(at + 1) % bands.len()];
    let mid = (band.range.lo.tenths() + band.range.hi.tenths() + 1) / 2;
    GroundTruth {
        cwes: cwes.into_iter().collect::<CweSet>(),
        label: band.label,
        score: SeverityScore::from_tenths(mid).expect("mid of a band is in range"),
        version: gt.version,
    }
}

/// One record's entry in a fixture file: a mode, or literal answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockFixture {
    Mode(MockMode),
    Text {
        #[serde(default)]
        cwe: Option<String>,
        #[serde(default)]
        severity: Option<String>,
    },
}

/// JSON fixture file:
/// `{"default": "decline", "records": {"CVE-…": "echo" | "perturb" | {"cwe": "…"}}}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockFixtureFile {
    #[serde(default)]
    pub default: Option<MockMode>,
    #[serde(default)]
    pub records: BTreeMap<String, MockFixture>,
}

impl MockFixtureFile {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// Fixture lookup: scripted text for `(cve, task)`, else the decline answer.
pub fn mock_respond(pair: &PromptPair, fixtures: &BTreeMap<(String, TaskKind), String>) -> String {
    fixtures
        .get(&(pair.cve.clone(), pair.task))
        .cloned()
        .unwrap_or_else(|| decline_text(pair.task).to_string())
}

#[derive(Debug, Clone, Default)]
pub struct MockProvider {
    fixtures: BTreeMap<(String, TaskKind), String>,
}

impl MockProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, cve: &str, task: TaskKind, text: impl Into<String>) {
        self.fixtures.insert((cve.to_string(), task), text.into());
    }

    pub fn script(&mut self, cve: &str, gt: &GroundTruth, mode: MockMode, schemes: &SchemeStore) {
        let answer = match mode {
            MockMode::Echo => gt.clone(),
            MockMode::Perturb => perturb(gt, schemes),
            MockMode::Decline => {
                for task in TaskKind::ALL {
                    self.insert(cve, task, decline_text(task));
                }
                return;
            }
        };
        for task in TaskKind::ALL {
            self.insert(cve, task, assistant_text(task, &answer));
        }
    }

    /// Builds the provider from a fixture file and the ground truth it
    /// echoes or perturbs. Records not listed use `file.default`.
    pub fn from_fixtures<'a>(
        file: &MockFixtureFile,
        ground_truth: impl IntoIterator<Item = (&'a str, &'a GroundTruth)>,
        schemes: &SchemeStore,
    ) -> Self {
        let mut p = Self::new();
        for (cve, gt) in ground_truth {
            match file.records.get(cve) {
                Some(MockFixture::Mode(mode)) => p.script(cve, gt, *mode, schemes),
                Some(MockFixture::Text { cwe, severity }) => {
                    if let Some(t) = cwe {
                        p.insert(cve, TaskKind::Cwe, t.clone());
                    }
                    if let Some(t) = severity {
                        p.insert(cve, TaskKind::Severity, t.clone());
                    }
                }
                None => {
                    if let Some(mode) = file.default {
                        p.script(cve, gt, mode, schemes);
                    }
                }
            }
        }
        p
    }
}

impl Provider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, pair: &PromptPair) -> Result<String> {
        Ok(mock_respond(pair, &self.fixtures))
    }
}
