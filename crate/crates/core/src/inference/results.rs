//! Raw results: one JSON file per (record, variant) plus a hash manifest.
//!
//! ```text
//! <dir>/manifest.json            "<VARIANT>/<cve>" -> sha256 of the file
//! <dir>/<VARIANT>/<cve>.json
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dataset::{read_json, sha256_hex, to_pretty_json, write_file};
use crate::error::{Error, Result};
use crate::filters::PassedRecord;
use crate::model::{
    CvssVersion, CweSet, GroundTruth, InferenceOutcome, PromptVariant, SeverityLabel, SeverityScore,
    TaskKind,
};
use crate::prompting::PromptPair;

pub const RESULTS_MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInputs {
    pub cwe_system: String,
    pub cwe_user: String,
    pub severity_system: String,
    pub severity_user: String,
}

impl TaskInputs {
    pub fn set(&mut self, task: TaskKind, pair: &PromptPair) {
        let (system, user) = match task {
            TaskKind::Cwe => (&mut self.cwe_system, &mut self.cwe_user),
            TaskKind::Severity => (&mut self.severity_system, &mut self.severity_user),
        };
        system.clone_from(&pair.system_text);
        user.clone_from(&pair.user_text);
    }
}

/// Provider text as received; `None` when the call failed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawOutputs {
    pub cwe_raw: Option<String>,
    pub severity_raw: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedOutputs {
    pub exact_cwes: CweSet,
    pub top_cwes: CweSet,
    pub label: Option<SeverityLabel>,
    pub score: SeverityScore,
}

impl Default for ParsedOutputs {
    fn default() -> Self {
        ParsedOutputs {
            exact_cwes: CweSet::new(),
            top_cwes: CweSet::new(),
            label: None,
            score: SeverityScore::DECLINED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawResult {
    pub cve: String,
    pub variant: PromptVariant,
    pub task_inputs: TaskInputs,
    pub outputs: RawOutputs,
    pub parsed: ParsedOutputs,
    pub ground_truth: GroundTruth,
    pub cvss_version: CvssVersion,
    pub errors: Vec<String>,
    pub nvd_description: String,
}

impl RawResult {
    /// An empty result for `passed` whose answers are still declines.
    pub fn new(passed: &PassedRecord, variant: PromptVariant) -> Self {
        RawResult {
            cve: passed.record.cve.clone(),
            variant,
            task_inputs: TaskInputs::default(),
            outputs: RawOutputs::default(),
            parsed: ParsedOutputs::default(),
            ground_truth: passed.ground_truth.clone(),
            cvss_version: passed.ground_truth.version,
            errors: Vec::new(),
            nvd_description: passed.record.description.clone(),
        }
    }

    pub fn outcome(&self) -> InferenceOutcome {
        InferenceOutcome {
            exact_cwes: self.parsed.exact_cwes.clone(),
            top_cwes: self.parsed.top_cwes.clone(),
            label: self.parsed.label,
            score: self.parsed.score,
            raw_text_cwe: self.outputs.cwe_raw.clone().unwrap_or_default(),
            raw_text_severity: self.outputs.severity_raw.clone().unwrap_or_default(),
        }
    }

    /// Both tasks failed to produce any provider text.
    pub fn is_failure(&self) -> bool {
        self.outputs.cwe_raw.is_none() && self.outputs.severity_raw.is_none()
    }
}

fn key(variant: PromptVariant, cve: &str) -> String {
    format!("{variant}/{cve}")
}

pub fn result_path(dir: &Path, variant: PromptVariant, cve: &str) -> PathBuf {
    dir.join(variant.as_str()).join(format!("{cve}.json"))
}

/// Persists raw results. Safe to share between worker threads; the manifest
/// is rewritten under a lock after every file.
pub struct ResultsWriter {
    dir: PathBuf,
    manifest: Mutex<BTreeMap<String, String>>,
}

impl ResultsWriter {
    pub fn open(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(RESULTS_MANIFEST);
        let manifest = if path.exists() {
            read_json(&path)?
        } else {
            BTreeMap::new()
        };
        Ok(ResultsWriter {
            dir: dir.to_path_buf(),
            manifest: Mutex::new(manifest),
        })
    }

    pub fn contains(&self, cve: &str, variant: PromptVariant) -> bool {
        self.manifest.lock().expect("manifest lock").contains_key(&key(variant, cve))
            && result_path(&self.dir, variant, cve).exists()
    }

    pub fn len(&self) -> usize {
        self.manifest.lock().expect("manifest lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes `result`; returns false when an identical file is already
    /// recorded.
    pub fn write(&self, result: &RawResult) -> Result<bool> {
        let bytes = to_pretty_json(result)?;
        let hash = sha256_hex(&bytes);
        let path = result_path(&self.dir, result.variant, &result.cve);
        let mut manifest = self.manifest.lock().expect("manifest lock");
        let k = key(result.variant, &result.cve);
        if manifest.get(&k) == Some(&hash) && path.exists() {
            return Ok(false);
        }
        write_file(&path, &bytes)?;
        manifest.insert(k, hash);
        let tmp = self.dir.join(format!("{RESULTS_MANIFEST}.tmp"));
        write_file(&tmp, &to_pretty_json(&*manifest)?)?;
        let target = self.dir.join(RESULTS_MANIFEST);
        std::fs::rename(&tmp, &target).map_err(|e| Error::io(&target, e))?;
        Ok(true)
    }
}

/// Every result listed in the manifest, ordered by variant then CVE.
pub fn load_results(dir: &Path) -> Result<Vec<RawResult>> {
    let manifest: BTreeMap<String, String> = read_json(&dir.join(RESULTS_MANIFEST))?;
    let mut out = Vec::with_capacity(manifest.len());
    for (k, hash) in &manifest {
        let path = dir.join(format!("{k}.json"));
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if &sha256_hex(&bytes) != hash {
            return Err(Error::InvalidRecord(format!("{} changed since it was recorded", path.display())));
        }
        out.push(serde_json::from_slice::<RawResult>(&bytes)?);
    }
    out.sort_by(|a, b| (a.variant, &a.cve).cmp(&(b.variant, &b.cve)));
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::EnrichedRecord;

    pub(crate) fn passed() -> PassedRecord {
        PassedRecord {
            record: EnrichedRecord {
                cve: "CVE-2022-0001".into(),
                description: "XSS in search box.".into(),
                url: String::new(),
                date: "2022-02-02".into(),
                github_description: None,
                buggy_code: vec![],
                hunks: vec![],
                methods: vec![],
            },
            ground_truth: GroundTruth {
                cwes: CweSet::parse_all(["CWE-79"]).unwrap(),
                label: SeverityLabel::Medium,
                score: SeverityScore::new(6.1).unwrap(),
                version: CvssVersion::V3_1,
            },
            excluded_variants: BTreeMap::new(),
        }
    }

    #[test]
    fn schema_field_names() {
        let r = RawResult::new(&passed(), PromptVariant::Description);
        let v = serde_json::to_value(&r).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(
            keys,
            ["cve", "cvss_version", "errors", "ground_truth", "nvd_description", "outputs", "parsed", "task_inputs", "variant"]
        );
        let inputs: Vec<&String> = v["task_inputs"].as_object().unwrap().keys().collect();
        assert_eq!(inputs, ["cwe_system", "cwe_user", "severity_system", "severity_user"]);
        let parsed: Vec<&String> = v["parsed"].as_object().unwrap().keys().collect();
        assert_eq!(parsed, ["exact_cwes", "label", "score", "top_cwes"]);
        assert_eq!(v["parsed"]["score"], -1.0);
        assert_eq!(v["cvss_version"], "3.1");
        assert_eq!(v["variant"], "DESCRIPTION");
    }

    #[test]
    fn idempotent_writes() {
        let dir = tempfile::tempdir().unwrap();
        let w = ResultsWriter::open(dir.path()).unwrap();
        let mut r = RawResult::new(&passed(), PromptVariant::Description);
        assert!(w.write(&r).unwrap());
        let before = std::fs::read(dir.path().join(RESULTS_MANIFEST)).unwrap();
        assert!(!w.write(&r).unwrap());
        assert_eq!(before, std::fs::read(dir.path().join(RESULTS_MANIFEST)).unwrap());
        assert!(w.contains("CVE-2022-0001", PromptVariant::Description));
        assert!(!w.contains("CVE-2022-0001", PromptVariant::DescriptionFiles));

        r.errors.push("x".into());
        assert!(w.write(&r).unwrap());
        let reopened = ResultsWriter::open(dir.path()).unwrap();
        assert_eq!(reopened.len(), 1);
        assert_eq!(load_results(dir.path()).unwrap(), vec![r]);
    }

    #[test]
    fn unwritable_dir() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("f");
        std::fs::write(&file, "x").unwrap();
        assert!(matches!(ResultsWriter::open(&file.join("sub")), Err(Error::Io { .. })));
    }
}
