//! Shared domain vocabulary: records, ground truth, model outcomes and verdicts.
//!
//! Every type here is immutable once built. Serialized forms use the dataset
//! field names (`buggy_code`, `description`, `url`, `cve`, `date`,
//! `github_description`) and uppercase severity tokens.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::cvss::Distance;
use crate::error::{Error, Result};
use crate::extraction::LanguageId;

/// A CWE identifier, rendered canonically as `CWE-<n>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CweId(u32);

impl CweId {
    pub fn new(id: u32) -> Result<Self> {
        if id == 0 {
            return Err(Error::MalformedCweId(id.to_string()));
        }
        Ok(CweId(id))
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

/// Accepts `CWE-79`, `cwe-79` and bare `79`.
pub fn parse_cwe_id(text: &str) -> Result<CweId> {
    let trimmed = text.trim();
    let digits = match trimmed.get(..4) {
        Some(prefix) if prefix.eq_ignore_ascii_case("CWE-") => &trimmed[4..],
        _ => trimmed,
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(Error::MalformedCweId(text.to_string()));
    }
    let id: u32 = digits
        .parse()
        .map_err(|_| Error::MalformedCweId(text.to_string()))?;
    CweId::new(id).map_err(|_| Error::MalformedCweId(text.to_string()))
}

impl FromStr for CweId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_cwe_id(s)
    }
}

impl fmt::Display for CweId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CWE-{}", self.0)
    }
}

impl Serialize for CweId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CweId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Text(String),
            Number(u64),
        }
        match Repr::deserialize(d)? {
            Repr::Text(t) => parse_cwe_id(&t).map_err(de::Error::custom),
            Repr::Number(n) => u32::try_from(n)
                .map_err(de::Error::custom)
                .and_then(|n| CweId::new(n).map_err(de::Error::custom)),
        }
    }
}

/// Duplicate-free, ordered set of CWE ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CweSet(BTreeSet<CweId>);

impl CweSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse_all<I, S>(texts: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        texts
            .into_iter()
            .map(|t| parse_cwe_id(t.as_ref()))
            .collect::<Result<BTreeSet<_>>>()
            .map(CweSet)
    }

    pub fn insert(&mut self, id: CweId) -> bool {
        self.0.insert(id)
    }

    pub fn contains(&self, id: CweId) -> bool {
        self.0.contains(&id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = CweId> + '_ {
        self.0.iter().copied()
    }

    pub fn is_subset(&self, other: &CweSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn intersects(&self, other: &CweSet) -> bool {
        self.0.intersection(&other.0).next().is_some()
    }
}

impl FromIterator<CweId> for CweSet {
    fn from_iter<T: IntoIterator<Item = CweId>>(iter: T) -> Self {
        CweSet(iter.into_iter().collect())
    }
}

impl fmt::Display for CweSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        write!(f, "{{{}}}", ids.join(", "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SeverityLabel {
    Low,
    Medium,
    High,
    Critical,
}

impl SeverityLabel {
    pub const ALL: [SeverityLabel; 4] = [
        SeverityLabel::Low,
        SeverityLabel::Medium,
        SeverityLabel::High,
        SeverityLabel::Critical,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SeverityLabel::Low => "LOW",
            SeverityLabel::Medium => "MEDIUM",
            SeverityLabel::High => "HIGH",
            SeverityLabel::Critical => "CRITICAL",
        }
    }
}

/// Case-sensitive: only the four uppercase tokens are labels.
impl FromStr for SeverityLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SeverityLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

impl fmt::Display for SeverityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A CVSS base score held in tenths, so equality is exact at one decimal.
/// `-1` is the sentinel a model returns when it declines to score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SeverityScore(i16);

impl SeverityScore {
    pub const DECLINED: SeverityScore = SeverityScore(-10);
    pub const MIN: SeverityScore = SeverityScore(0);
    pub const MAX: SeverityScore = SeverityScore(100);

    /// Rounds to one fractional digit, half away from zero.
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::ScoreOutOfRange(value));
        }
        if value == -1.0 {
            return Ok(Self::DECLINED);
        }
        if !(0.0..=10.0).contains(&value) {
            return Err(Error::ScoreOutOfRange(value));
        }
        Ok(SeverityScore((value * 10.0).round() as i16))
    }

    pub fn from_tenths(tenths: i16) -> Result<Self> {
        if tenths == -10 || (0..=100).contains(&tenths) {
            Ok(SeverityScore(tenths))
        } else {
            Err(Error::ScoreOutOfRange(f64::from(tenths) / 10.0))
        }
    }

    pub fn tenths(self) -> i16 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 10.0
    }

    pub fn is_declined(self) -> bool {
        self == Self::DECLINED
    }
}

/// Validates a model- or feed-supplied score. The CVSS version does not
/// change the numeric range; it is accepted so call sites read uniformly.
pub fn validate_score(value: f64, _version: CvssVersion) -> Result<SeverityScore> {
    SeverityScore::new(value)
}

impl fmt::Display for SeverityScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}", self.value())
    }
}

impl FromStr for SeverityScore {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|_| Error::FormatViolation(format!("non-numeric score {s:?}")))?;
        SeverityScore::new(v)
    }
}

impl Serialize for SeverityScore {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for SeverityScore {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Number(v) => SeverityScore::new(v).map_err(de::Error::custom),
            Repr::Text(t) => t.parse().map_err(de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CvssVersion {
    V2_0,
    V3_0,
    V3_1,
}

impl CvssVersion {
    pub const ALL: [CvssVersion; 3] = [CvssVersion::V2_0, CvssVersion::V3_0, CvssVersion::V3_1];

    pub fn as_str(self) -> &'static str {
        match self {
            CvssVersion::V2_0 => "2.0",
            CvssVersion::V3_0 => "3.0",
            CvssVersion::V3_1 => "3.1",
        }
    }
}

/// Accepts `3.1`, `V3.1`, `v3_1`, `cvssMetricV31`, `CVSS:3.1` and the like.
impl FromStr for CvssVersion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let core = lower
            .strip_prefix("cvssmetric")
            .or_else(|| lower.strip_prefix("cvss:"))
            .or_else(|| lower.strip_prefix("cvss"))
            .unwrap_or(&lower);
        let core = core.strip_prefix('v').unwrap_or(core);
        let digits: String = core.chars().filter(|c| c.is_ascii_digit()).collect();
        let version = match digits.as_str() {
            "2" | "20" => CvssVersion::V2_0,
            "3" | "30" => CvssVersion::V3_0,
            "31" => CvssVersion::V3_1,
            _ => return Err(Error::UnknownCvssVersion(s.to_string())),
        };
        // Reject things like "3.1.7" or "v3x1" that happen to contain the right digits.
        let allowed = |c: char| c.is_ascii_digit() || c == '.' || c == '_';
        if !core.chars().all(allowed) {
            return Err(Error::UnknownCvssVersion(s.to_string()));
        }
        Ok(version)
    }
}

impl fmt::Display for CvssVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for CvssVersion {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for CvssVersion {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(de::Error::custom)
    }
}

/// Which code granularity a prompt variant carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    Files,
    Methods,
    Hunks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PromptVariant {
    Description,
    DescriptionFiles,
    DescriptionMethods,
    DescriptionHunks,
    FilesOnly,
    MethodsOnly,
    HunksOnly,
}

impl PromptVariant {
    pub const ALL: [PromptVariant; 7] = [
        PromptVariant::Description,
        PromptVariant::DescriptionFiles,
        PromptVariant::DescriptionMethods,
        PromptVariant::DescriptionHunks,
        PromptVariant::FilesOnly,
        PromptVariant::MethodsOnly,
        PromptVariant::HunksOnly,
    ];

    /// The four variants evaluated by default.
    pub const EVALUATION: [PromptVariant; 4] = [
        PromptVariant::Description,
        PromptVariant::DescriptionFiles,
        PromptVariant::DescriptionMethods,
        PromptVariant::DescriptionHunks,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptVariant::Description => "DESCRIPTION",
            PromptVariant::DescriptionFiles => "DESCRIPTION_FILES",
            PromptVariant::DescriptionMethods => "DESCRIPTION_METHODS",
            PromptVariant::DescriptionHunks => "DESCRIPTION_HUNKS",
            PromptVariant::FilesOnly => "FILES_ONLY",
            PromptVariant::MethodsOnly => "METHODS_ONLY",
            PromptVariant::HunksOnly => "HUNKS_ONLY",
        }
    }

    pub fn has_description(self) -> bool {
        matches!(
            self,
            PromptVariant::Description
                | PromptVariant::DescriptionFiles
                | PromptVariant::DescriptionMethods
                | PromptVariant::DescriptionHunks
        )
    }

    pub fn granularity(self) -> Option<Granularity> {
        match self {
            PromptVariant::Description => None,
            PromptVariant::DescriptionFiles | PromptVariant::FilesOnly => Some(Granularity::Files),
            PromptVariant::DescriptionMethods | PromptVariant::MethodsOnly => {
                Some(Granularity::Methods)
            }
            PromptVariant::DescriptionHunks | PromptVariant::HunksOnly => Some(Granularity::Hunks),
        }
    }
}

impl FromStr for PromptVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace(['-', '+', ' '], "_");
        PromptVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == norm)
            .ok_or_else(|| Error::Config(format!("unknown prompt variant {s:?}")))
    }
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TaskKind {
    Cwe,
    Severity,
}

impl TaskKind {
    pub const ALL: [TaskKind; 2] = [TaskKind::Cwe, TaskKind::Severity];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Cwe => "CWE",
            TaskKind::Severity => "SEVERITY",
        }
    }
}

impl FromStr for TaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CWE" => Ok(TaskKind::Cwe),
            "SEVERITY" => Ok(TaskKind::Severity),
            _ => Err(Error::Config(format!("unknown task {s:?}"))),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A numbered source line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NumberedLine {
    pub line_number: u32,
    pub line: String,
}

impl NumberedLine {
    pub fn new(line_number: u32, line: impl Into<String>) -> Self {
        NumberedLine {
            line_number,
            line: line.into(),
        }
    }
}

/// A file touched by the fixing commit, with its pre-change content and the
/// lines the commit deleted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuggyFile {
    pub filename: String,
    pub content: String,
    #[serde(default)]
    pub buggy_lines: Vec<NumberedLine>,
}

impl BuggyFile {
    pub fn line_count(&self) -> usize {
        self.content.lines().count()
    }

    pub fn validate(&self) -> Result<()> {
        let count = self.line_count();
        let mut previous = 0u32;
        for bl in &self.buggy_lines {
            if bl.line_number <= previous {
                return Err(Error::InvalidRecord(format!(
                    "{}: buggy line numbers not strictly increasing at {}",
                    self.filename, bl.line_number
                )));
            }
            if bl.line_number as usize > count {
                return Err(Error::InvalidRecord(format!(
                    "{}: buggy line {} beyond {} lines",
                    self.filename, bl.line_number, count
                )));
            }
            previous = bl.line_number;
        }
        Ok(())
    }
}

/// One `@@` section of a unified diff.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hunk {
    pub filename: String,
    pub header: String,
    /// Pre-image line numbers.
    #[serde(default)]
    pub deleted_lines: Vec<NumberedLine>,
    /// Post-image line numbers.
    #[serde(default)]
    pub added_lines: Vec<NumberedLine>,
    /// The hunk's lines exactly as they appear in the diff, header excluded.
    #[serde(default)]
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodSnippet {
    pub filename: String,
    pub language: LanguageId,
    #[serde(default)]
    pub method_name: String,
    pub start_line: u32,
    pub end_line: u32,
    pub body: String,
}

/// A CVE enriched with the code of its fixing commit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichedRecord {
    pub cve: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub url: String,
    /// Commit date as published by the host; parsed on demand so that a
    /// malformed date is a filter decision rather than a load failure.
    #[serde(default)]
    pub date: String,
    #[serde(default)]
    pub github_description: Option<String>,
    #[serde(default)]
    pub buggy_code: Vec<BuggyFile>,
    #[serde(default)]
    pub hunks: Vec<Hunk>,
    #[serde(default)]
    pub methods: Vec<MethodSnippet>,
}

pub fn is_cve_id(text: &str) -> bool {
    let Some(rest) = text.strip_prefix("CVE-") else {
        return false;
    };
    let Some((year, seq)) = rest.split_once('-') else {
        return false;
    };
    year.len() == 4
        && year.bytes().all(|b| b.is_ascii_digit())
        && seq.len() >= 4
        && seq.bytes().all(|b| b.is_ascii_digit())
}

/// Parses `YYYY-MM-DD`, optionally followed by a time part (`T...` or ` ...`).
pub fn parse_commit_date(text: &str) -> Option<NaiveDate> {
    let t = text.trim();
    let day = t.get(..10)?;
    if t.len() > 10 && !matches!(t.as_bytes()[10], b'T' | b't' | b' ') {
        return None;
    }
    NaiveDate::parse_from_str(day, "%Y-%m-%d").ok()
}

impl EnrichedRecord {
    pub fn commit_date(&self) -> Option<NaiveDate> {
        parse_commit_date(&self.date)
    }

    pub fn file(&self, filename: &str) -> Option<&BuggyFile> {
        self.buggy_code.iter().find(|f| f.filename == filename)
    }

    pub fn validate(&self) -> Result<()> {
        if !is_cve_id(&self.cve) {
            return Err(Error::InvalidRecord(format!("bad CVE id {:?}", self.cve)));
        }
        for f in &self.buggy_code {
            f.validate()?;
        }
        let orphan = self
            .hunks
            .iter()
            .map(|h| h.filename.as_str())
            .chain(self.methods.iter().map(|m| m.filename.as_str()))
            .find(|name| self.file(name).is_none());
        if let Some(name) = orphan {
            return Err(Error::InvalidRecord(format!(
                "{}: {name} is not among the record's files",
                self.cve
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub cwes: CweSet,
    pub label: SeverityLabel,
    pub score: SeverityScore,
    pub version: CvssVersion,
}

impl GroundTruth {
    pub fn validate(&self) -> Result<()> {
        if self.cwes.is_empty() {
            return Err(Error::InvalidRecord("ground truth has no CWE".into()));
        }
        if self.score.is_declined() {
            return Err(Error::InvalidRecord("ground truth score is -1".into()));
        }
        if self.version == CvssVersion::V2_0 && self.label == SeverityLabel::Critical {
            return Err(Error::LabelNotInScheme {
                label: self.label.to_string(),
                version: self.version.to_string(),
            });
        }
        Ok(())
    }
}

/// Model output after the formatter has validated it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceOutcome {
    pub exact_cwes: CweSet,
    pub top_cwes: CweSet,
    pub label: Option<SeverityLabel>,
    pub score: SeverityScore,
    #[serde(default)]
    pub raw_text_cwe: String,
    #[serde(default)]
    pub raw_text_severity: String,
}

pub const MAX_TOP_CANDIDATES: usize = 5;

impl InferenceOutcome {
    /// The outcome recorded when the model produced nothing usable.
    pub fn declined() -> Self {
        InferenceOutcome {
            exact_cwes: CweSet::new(),
            top_cwes: CweSet::new(),
            label: None,
            score: SeverityScore::DECLINED,
            raw_text_cwe: String::new(),
            raw_text_severity: String::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.exact_cwes.is_subset(&self.top_cwes) {
            return Err(Error::FormatViolation(
                "exact CWEs are not a subset of the top candidates".into(),
            ));
        }
        if self.top_cwes.len() > MAX_TOP_CANDIDATES {
            return Err(Error::FormatViolation(format!(
                "{} top candidates (max {MAX_TOP_CANDIDATES})",
                self.top_cwes.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CweStatus {
    Equal,
    SubsetEqual,
    Overlapped,
    NonOverlapped,
}

/// Relationship between an identified CWE set and the ground truth.
///
/// The direction flags are defined over non-empty identified sets only: an
/// empty answer is a decline and never counts as covering anything.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CweComparison {
    pub status: CweStatus,
    pub identified_within_gt: bool,
    pub gt_within_identified: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub cwe: CweComparison,
    pub top: CweComparison,
    pub label_match: bool,
    pub score_exact: bool,
    pub score_label_range: bool,
    pub score_distance: BTreeMap<Distance, bool>,
}
