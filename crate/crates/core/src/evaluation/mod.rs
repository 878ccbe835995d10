//! Per-record verdicts and accuracy aggregation.

mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cvss::{distance_range, Distance, SchemeStore};
use crate::error::{Error, Result};
use crate::extraction::{ExtractionConfig, LanguageId};
use crate::model::{
    CweComparison, CweSet, CweStatus, EnrichedRecord, GroundTruth, InferenceOutcome, PromptVariant,
    SeverityLabel, Verdict,
};

pub use report::{generate_report, render_markdown, EvaluationSummary};

/// Compares an identified CWE set with the ground truth.
///
/// An empty identified set is a decline: it is `NonOverlapped` and covers
/// nothing in either direction.
pub fn classify_cwe_status(identified: &CweSet, gt: &CweSet) -> CweComparison {
    if identified.is_empty() {
        return CweComparison {
            status: CweStatus::NonOverlapped,
            identified_within_gt: false,
            gt_within_identified: false,
        };
    }
    let within_gt = identified.is_subset(gt);
    let covers_gt = gt.is_subset(identified);
    let status = match (within_gt, covers_gt) {
        (true, true) => CweStatus::Equal,
        (true, false) | (false, true) => CweStatus::SubsetEqual,
        _ if identified.intersects(gt) => CweStatus::Overlapped,
        _ => CweStatus::NonOverlapped,
    };
    CweComparison {
        status,
        identified_within_gt: within_gt,
        gt_within_identified: covers_gt,
    }
}

/// Scores one outcome against its ground truth. Declined scores fail every
/// score criterion; a missing label fails the label criterion.
pub fn eval_record(
    outcome: &InferenceOutcome,
    gt: &GroundTruth,
    schemes: &SchemeStore,
    distances: &[Distance],
) -> Verdict {
    let scored = !outcome.score.is_declined();
    let score_distance = distances
        .iter()
        .map(|d| {
            let hit = scored
                && distance_range(outcome.score, *d)
                    .map(|r| r.covers(gt.score))
                    .unwrap_or(false);
            (*d, hit)
        })
        .collect();
    Verdict {
        cwe: classify_cwe_status(&outcome.exact_cwes, &gt.cwes),
        top: classify_cwe_status(&outcome.top_cwes, &gt.cwes),
        label_match: outcome.label == Some(gt.label),
        score_exact: scored && outcome.score == gt.score,
        score_label_range: scored
            && schemes
                .score_to_label(outcome.score, gt.version)
                .is_ok_and(|l| l == gt.label),
        score_distance,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Criterion {
    CwePe,
    CwePc,
    CweGc,
    CweTopPc,
    CweTopGc,
    SevLabel,
    SevScoreExact,
    SevScoreLabelRange,
    SevScoreDistance(Distance),
    TotalPmLabel,
    TotalPmLabelRange,
    TotalPmDistance(Distance),
}

impl Criterion {
    /// The reported criteria for a distance list: one distance criterion
    /// per distance, and the combined distance criterion at the largest.
    pub fn standard(distances: &[Distance]) -> Vec<Criterion> {
        let mut ds = distances.to_vec();
        ds.sort();
        ds.dedup();
        let mut out = vec![
            Criterion::CwePe,
            Criterion::CwePc,
            Criterion::CweGc,
            Criterion::CweTopPc,
            Criterion::CweTopGc,
            Criterion::SevLabel,
            Criterion::SevScoreExact,
            Criterion::SevScoreLabelRange,
        ];
        out.extend(ds.iter().map(|d| Criterion::SevScoreDistance(*d)));
        out.push(Criterion::TotalPmLabel);
        out.push(Criterion::TotalPmLabelRange);
        if let Some(max) = ds.last() {
            out.push(Criterion::TotalPmDistance(*max));
        }
        out
    }

    pub fn id(&self) -> String {
        match self {
            Criterion::CwePe => "CWE_PE".into(),
            Criterion::CwePc => "CWE_PC".into(),
            Criterion::CweGc => "CWE_GC".into(),
            Criterion::CweTopPc => "CWE_TOP_PC".into(),
            Criterion::CweTopGc => "CWE_TOP_GC".into(),
            Criterion::SevLabel => "SEV_LABEL".into(),
            Criterion::SevScoreExact => "SEV_SCORE_EXACT".into(),
            Criterion::SevScoreLabelRange => "SEV_SCORE_LABEL_RANGE".into(),
            Criterion::SevScoreDistance(d) => format!("SEV_SCORE_DIST_{}", d.code()),
            Criterion::TotalPmLabel => "TOTAL_PM_LABEL".into(),
            Criterion::TotalPmLabelRange => "TOTAL_PM_LABEL_RANGE".into(),
            Criterion::TotalPmDistance(d) if *d == Distance::ONE_AND_HALF => "TOTAL_PM_DIST".into(),
            Criterion::TotalPmDistance(d) => format!("TOTAL_PM_DIST_{}", d.code()),
        }
    }

    pub fn holds(&self, v: &Verdict) -> bool {
        let pe = v.cwe.status == CweStatus::Equal;
        let dist = |d: &Distance| v.score_distance.get(d).copied().unwrap_or(false);
        match self {
            Criterion::CwePe => pe,
            Criterion::CwePc => v.cwe.identified_within_gt,
            Criterion::CweGc => v.cwe.gt_within_identified,
            Criterion::CweTopPc => v.top.identified_within_gt,
            Criterion::CweTopGc => v.top.gt_within_identified,
            Criterion::SevLabel => v.label_match,
            Criterion::SevScoreExact => v.score_exact,
            Criterion::SevScoreLabelRange => v.score_label_range,
            Criterion::SevScoreDistance(d) => dist(d),
            Criterion::TotalPmLabel => pe && v.label_match,
            Criterion::TotalPmLabelRange => pe && v.score_label_range,
            Criterion::TotalPmDistance(d) => pe && dist(d),
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for Criterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let fixed = [
            Criterion::CwePe,
            Criterion::CwePc,
            Criterion::CweGc,
            Criterion::CweTopPc,
            Criterion::CweTopGc,
            Criterion::SevLabel,
            Criterion::SevScoreExact,
            Criterion::SevScoreLabelRange,
            Criterion::TotalPmLabel,
            Criterion::TotalPmLabelRange,
            Criterion::TotalPmDistance(Distance::ONE_AND_HALF),
        ];
        if let Some(c) = fixed.iter().find(|c| c.id() == s) {
            return Ok(*c);
        }
        let distance = |code: &str| -> Result<Distance> {
            let tenths: u16 = code
                .parse()
                .map_err(|_| Error::Config(format!("unknown criterion {s:?}")))?;
            Distance::from_tenths(tenths)
        };
        if let Some(code) = s.strip_prefix("SEV_SCORE_DIST_") {
            return Ok(Criterion::SevScoreDistance(distance(code)?));
        }
        if let Some(code) = s.strip_prefix("TOTAL_PM_DIST_") {
            return Ok(Criterion::TotalPmDistance(distance(code)?));
        }
        Err(Error::Config(format!("unknown criterion {s:?}")))
    }
}

impl Serialize for Criterion {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.id())
    }
}

impl<'de> Deserialize<'de> for Criterion {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub variant: PromptVariant,
    pub criterion: Criterion,
    pub numerator: usize,
    pub denominator: usize,
    pub accuracy: f64,
}

/// Share of `verdicts` satisfying `criterion`. Every verdict counts in the
/// denominator, including declines and format violations.
pub fn accuracy(verdicts: &[Verdict], criterion: Criterion, variant: PromptVariant) -> Result<AccuracyReport> {
    if verdicts.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    let numerator = verdicts.iter().filter(|v| criterion.holds(v)).count();
    Ok(AccuracyReport {
        variant,
        criterion,
        numerator,
        denominator: verdicts.len(),
        accuracy: numerator as f64 / verdicts.len() as f64,
    })
}

pub const NULL_BUCKET: &str = "NULL";

/// Ground-truth and identified label counts; declines land in `NULL`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub ground_truth: BTreeMap<String, usize>,
    pub identified: BTreeMap<String, usize>,
}

impl Default for LabelDistribution {
    fn default() -> Self {
        let zeros: BTreeMap<String, usize> = SeverityLabel::ALL
            .iter()
            .map(|l| l.to_string())
            .chain([NULL_BUCKET.to_string()])
            .map(|k| (k, 0))
            .collect();
        LabelDistribution {
            ground_truth: zeros.clone(),
            identified: zeros,
        }
    }
}

/// Histogram over `(identified label, ground-truth label)` pairs.
pub fn label_distribution(
    pairs: impl IntoIterator<Item = (Option<SeverityLabel>, SeverityLabel)>,
) -> LabelDistribution {
    let mut d = LabelDistribution::default();
    for (identified, gt) in pairs {
        *d.ground_truth.entry(gt.to_string()).or_default() += 1;
        let key = identified.map_or_else(|| NULL_BUCKET.to_string(), |l| l.to_string());
        *d.identified.entry(key).or_default() += 1;
    }
    d
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageRow {
    pub records: usize,
    /// Perfect-match CWE answers.
    pub cwe_correct: usize,
    pub label_correct: usize,
}

/// Per-language counts. Records without a language are left out.
pub fn language_breakdown<'a>(
    entries: impl IntoIterator<Item = (Option<LanguageId>, &'a Verdict)>,
) -> BTreeMap<LanguageId, LanguageRow> {
    let mut out: BTreeMap<LanguageId, LanguageRow> = BTreeMap::new();
    for (language, v) in entries {
        let Some(language) = language else { continue };
        let row = out.entry(language).or_default();
        row.records += 1;
        row.cwe_correct += usize::from(Criterion::CwePe.holds(v));
        row.label_correct += usize::from(v.label_match);
    }
    out
}

/// Language of the file with the most buggy lines; ties go to the earlier
/// file.
pub fn dominant_language(record: &EnrichedRecord, config: &ExtractionConfig) -> Option<LanguageId> {
    let mut best: Option<(usize, LanguageId)> = None;
    for f in &record.buggy_code {
        if let Some(lang) = config.detect_language(&f.filename) {
            let n = f.buggy_lines.len();
            if best.is_none_or(|(m, _)| n > m) {
                best = Some((n, lang));
            }
        }
    }
    best.map(|(_, l)| l)
}
