//! Date and validity filtering, and ground-truth extraction.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cvss::{select_version, SchemeStore, DEFAULT_VERSION};
use crate::error::{Error, Result};
use crate::extraction::{ExtractionConfig, LanguageId};
use crate::ingestion::cve2cwe::Cve2CweStore;
use crate::model::{
    parse_cwe_id, CvssVersion, CweSet, EnrichedRecord, GroundTruth, PromptVariant, SeverityLabel,
    SeverityScore, TaskKind,
};
use crate::prompting::{pair_tokens, PromptBuilder, TokenEstimator, DEFAULT_TOKEN_LIMIT};

pub fn default_cutoff() -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 9, 1).expect("valid date")
}

/// What an oversized prompt discards.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenPolicy {
    /// Only the offending variant is dropped for that record.
    #[default]
    PerVariant,
    /// Any failing required variant discards the record.
    WholeRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub cutoff_date: NaiveDate,
    pub keep_after_cutoff: bool,
    pub token_limit: usize,
    pub supported_languages: BTreeSet<LanguageId>,
    pub required_variants: BTreeSet<PromptVariant>,
    pub token_policy: TokenPolicy,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            cutoff_date: default_cutoff(),
            keep_after_cutoff: true,
            token_limit: DEFAULT_TOKEN_LIMIT,
            supported_languages: LanguageId::ALL.into_iter().collect(),
            required_variants: PromptVariant::EVALUATION.into_iter().collect(),
            token_policy: TokenPolicy::PerVariant,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.token_limit == 0 {
            return Err(Error::Config("token_limit must be positive".into()));
        }
        if self.required_variants.is_empty() {
            return Err(Error::Config("required_variants is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DiscardStage {
    Date,
    Validity,
}

/// Machine-readable discard reasons, in check order.
pub mod reason {
    pub const UNPARSABLE_DATE: &str = "unparsable-date";
    pub const BEFORE_CUTOFF: &str = "before-cutoff";
    pub const AFTER_CUTOFF: &str = "after-cutoff";
    pub const MISSING_GROUND_TRUTH: &str = "missing-ground-truth";
    pub const EMPTY_CWE: &str = "empty-cwe";
    pub const MISSING_SEVERITY: &str = "missing-severity";
    pub const INVALID_SEVERITY: &str = "invalid-severity";
    pub const EMPTY_CODE: &str = "empty-code";
    pub const UNSUPPORTED_LANGUAGE: &str = "unsupported-language";
    pub const TOKEN_LIMIT: &str = "token-limit";
    pub const MISSING_GRANULARITY: &str = "missing-granularity";
    pub const COMMIT_UNAVAILABLE: &str = "commit-unavailable";
    pub const NO_COMMIT_URL: &str = "no-commit-url";
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscardRecord {
    pub cve: String,
    pub stage: DiscardStage,
    pub reason: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl DiscardRecord {
    pub fn new(cve: &str, stage: DiscardStage, reason: &str, detail: impl Into<String>) -> Self {
        debug_assert!(!reason.is_empty());
        DiscardRecord {
            cve: cve.to_string(),
            stage,
            reason: reason.to_string(),
            detail: detail.into(),
        }
    }
}

/// A record that passed both filters, with the variants it cannot serve.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassedRecord {
    pub record: EnrichedRecord,
    pub ground_truth: GroundTruth,
    pub excluded_variants: BTreeMap<PromptVariant, String>,
}

impl PassedRecord {
    pub fn serves(&self, variant: PromptVariant) -> bool {
        !self.excluded_variants.contains_key(&variant)
    }
}

fn parse_label(text: &str) -> Result<SeverityLabel> {
    match text.trim().to_ascii_uppercase().as_str() {
        // CVSS v3 "NONE" covers score 0.0, which the LOW band includes.
        "NONE" => Ok(SeverityLabel::Low),
        other => other.parse(),
    }
}

/// Ground truth for `cve` from the CVE2CWE store.
///
/// The latest CVSS version with a severity entry is used; entries without a
/// version count as the default version only when no versioned entry exists.
pub fn extract_ground_truth(cve: &str, store: &Cve2CweStore, schemes: &SchemeStore) -> Result<GroundTruth> {
    let entry = store.get(cve).ok_or_else(|| Error::MissingCve(cve.to_string()))?;

    let mut cwes = CweSet::new();
    for text in &entry.cwes {
        // NVD-CWE-Other / NVD-CWE-noinfo are placeholders, not weaknesses.
        if text.trim().starts_with("NVD-") {
            continue;
        }
        cwes.insert(parse_cwe_id(text)?);
    }
    if cwes.is_empty() {
        return Err(Error::EmptyCwe(cve.to_string()));
    }

    let mut versioned = Vec::new();
    for s in &entry.severities {
        if let Some(v) = &s.version {
            versioned.push((v.parse::<CvssVersion>()?, s));
        }
    }
    let (version, severity) = if versioned.is_empty() {
        let s = entry.severities.first().ok_or_else(|| Error::MissingSeverityForVersion {
            cve: cve.to_string(),
            version: DEFAULT_VERSION.to_string(),
        })?;
        (DEFAULT_VERSION, s)
    } else {
        let available: Vec<CvssVersion> = versioned.iter().map(|(v, _)| *v).collect();
        let version = select_version(&available);
        let s = versioned.iter().find(|(v, _)| *v == version).expect("selected from list").1;
        (version, s)
    };

    let missing = || Error::MissingSeverityForVersion {
        cve: cve.to_string(),
        version: version.to_string(),
    };
    let score = match severity.score {
        Some(v) => SeverityScore::new(v)?,
        None => return Err(missing()),
    };
    if score.is_declined() {
        return Err(missing());
    }
    let label = match &severity.label {
        Some(text) => parse_label(text)?,
        None => schemes.score_to_label(score, version)?,
    };
    if !schemes.scheme(version).has_label(label) {
        return Err(Error::LabelNotInScheme {
            label: label.to_string(),
            version: version.to_string(),
        });
    }
    Ok(GroundTruth {
        cwes,
        label,
        score,
        version,
    })
}

fn ground_truth_reason(e: &Error) -> &'static str {
    match e {
        Error::MissingCve(_) => reason::MISSING_GROUND_TRUTH,
        Error::EmptyCwe(_) | Error::MalformedCweId(_) => reason::EMPTY_CWE,
        Error::MissingSeverityForVersion { .. } => reason::MISSING_SEVERITY,
        _ => reason::INVALID_SEVERITY,
    }
}

/// Everything the filters consult besides the record itself.
pub struct Filter<'a> {
    pub config: &'a FilterConfig,
    pub store: &'a Cve2CweStore,
    pub schemes: &'a SchemeStore,
    pub extraction: &'a ExtractionConfig,
    pub prompts: &'a PromptBuilder,
    pub estimator: &'a dyn TokenEstimator,
}

/// Result of filtering a batch. `discarded` is sorted by CVE id.
#[derive(Debug, Default)]
pub struct FilterOutcome {
    pub passed: Vec<PassedRecord>,
    pub discarded: Vec<DiscardRecord>,
}

pub fn date_check(record: &EnrichedRecord, config: &FilterConfig) -> Result<(), DiscardRecord> {
    let Some(date) = record.commit_date() else {
        return Err(DiscardRecord::new(
            &record.cve,
            DiscardStage::Date,
            reason::UNPARSABLE_DATE,
            format!("commit date {:?}", record.date),
        ));
    };
    let after = date > config.cutoff_date;
    match (config.keep_after_cutoff, after) {
        (true, true) | (false, false) => Ok(()),
        (true, false) => Err(DiscardRecord::new(
            &record.cve,
            DiscardStage::Date,
            reason::BEFORE_CUTOFF,
            format!("{date} is not after {}", config.cutoff_date),
        )),
        (false, true) => Err(DiscardRecord::new(
            &record.cve,
            DiscardStage::Date,
            reason::AFTER_CUTOFF,
            format!("{date} is after {}", config.cutoff_date),
        )),
    }
}

impl Filter<'_> {
    pub fn date_check(&self, record: &EnrichedRecord) -> Result<(), DiscardRecord> {
        date_check(record, self.config)
    }

    /// Checks conditions in a fixed order and reports the first failure:
    /// ground truth, code presence, language support, prompt size.
    pub fn validity_check(&self, record: &EnrichedRecord) -> Result<PassedRecord, DiscardRecord> {
        let discard = |reason: &str, detail: String| {
            DiscardRecord::new(&record.cve, DiscardStage::Validity, reason, detail)
        };

        let gt = extract_ground_truth(&record.cve, self.store, self.schemes)
            .map_err(|e| discard(ground_truth_reason(&e), e.to_string()))?;

        let has_content = record.buggy_code.iter().any(|f| !f.content.is_empty());
        if !has_content || record.hunks.is_empty() {
            return Err(discard(
                reason::EMPTY_CODE,
                format!("{} files, {} hunks", record.buggy_code.len(), record.hunks.len()),
            ));
        }

        let code_files: Vec<&str> = record
            .buggy_code
            .iter()
            .map(|f| f.filename.as_str())
            .filter(|name| self.extraction.is_code_file(name))
            .collect();
        if code_files.is_empty() {
            return Err(discard(reason::UNSUPPORTED_LANGUAGE, "no code files changed".into()));
        }
        if let Some(name) = code_files.iter().find(|name| {
            self.extraction
                .detect_language(name)
                .is_none_or(|l| !self.config.supported_languages.contains(&l))
        }) {
            return Err(discard(reason::UNSUPPORTED_LANGUAGE, name.to_string()));
        }

        let mut excluded = BTreeMap::new();
        let mut first_failure = None;
        for &variant in &self.config.required_variants {
            if let Some((code, detail)) = self.variant_problem(record, &gt, variant) {
                first_failure.get_or_insert((code, detail.clone()));
                excluded.insert(variant, code.to_string());
            }
        }
        let all_failed = excluded.len() == self.config.required_variants.len();
        if let Some((code, detail)) = first_failure {
            if all_failed || self.config.token_policy == TokenPolicy::WholeRecord {
                let code = if excluded.values().any(|c| c == reason::TOKEN_LIMIT) {
                    reason::TOKEN_LIMIT
                } else {
                    code
                };
                return Err(discard(code, detail));
            }
        }
        Ok(PassedRecord {
            record: record.clone(),
            ground_truth: gt,
            excluded_variants: excluded,
        })
    }

    fn variant_problem(
        &self,
        record: &EnrichedRecord,
        gt: &GroundTruth,
        variant: PromptVariant,
    ) -> Option<(&'static str, String)> {
        for task in TaskKind::ALL {
            match self.prompts.pair(record, task, variant, gt.version) {
                Ok(pair) => {
                    let tokens = pair_tokens(&pair, self.estimator);
                    if tokens > self.config.token_limit {
                        return Some((
                            reason::TOKEN_LIMIT,
                            format!("{variant} {task} prompt is {tokens} tokens (limit {})", self.config.token_limit),
                        ));
                    }
                }
                Err(e) => return Some((reason::MISSING_GRANULARITY, e.to_string())),
            }
        }
        None
    }

    pub fn check(&self, record: &EnrichedRecord) -> Result<PassedRecord, DiscardRecord> {
        self.date_check(record)?;
        self.validity_check(record)
    }

    /// Filters a batch in parallel. Every input ends up in exactly one of
    /// the two outputs.
    pub fn filter_batch(&self, records: &[EnrichedRecord]) -> FilterOutcome {
        let results: Vec<_> = records.par_iter().map(|r| self.check(r)).collect();
        let mut out = FilterOutcome::default();
        for r in results {
            match r {
                Ok(p) => out.passed.push(p),
                Err(d) => out.discarded.push(d),
            }
        }
        sort_discards(&mut out.discarded);
        out
    }
}

pub fn sort_discards(discards: &mut [DiscardRecord]) {
    discards.sort_by(|a, b| (&a.cve, a.stage, &a.reason).cmp(&(&b.cve, b.stage, &b.reason)));
}

/// Writes the non-evaluated report: a JSON array sorted by CVE id.
pub fn write_non_evaluated(path: &Path, discards: &[DiscardRecord]) -> Result<()> {
    let mut sorted = discards.to_vec();
    sort_discards(&mut sorted);
    let mut text = serde_json::to_string_pretty(&sorted)?;
    text.push('\n');
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_non_evaluated(path: &Path) -> Result<Vec<DiscardRecord>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}
