//! CVSS qualitative rating tables and the score/label arithmetic built on them.
//!
//! Scores live on the one-decimal grid, so bands are stored in tenths and
//! every comparison is exact. The v3.x "None" rating (0.0) is folded into
//! LOW because the label vocabulary has four values.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{CvssVersion, SeverityLabel, SeverityScore};

/// Version used when a CVE lists no CVSS version at all.
pub const DEFAULT_VERSION: CvssVersion = CvssVersion::V3_1;

/// Picks the most recent version; falls back to [`DEFAULT_VERSION`].
pub fn select_version(available: &[CvssVersion]) -> CvssVersion {
    available.iter().copied().max().unwrap_or(DEFAULT_VERSION)
}

/// Inclusive score interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRange {
    pub lo: SeverityScore,
    pub hi: SeverityScore,
}

impl ScoreRange {
    pub fn new(lo: SeverityScore, hi: SeverityScore) -> Result<Self> {
        if lo.is_declined() || hi.is_declined() || lo > hi {
            return Err(Error::InvalidScheme(format!("bad range [{lo}, {hi}]")));
        }
        Ok(ScoreRange { lo, hi })
    }

    /// Width in tenths.
    pub fn width_tenths(&self) -> i16 {
        self.hi.tenths() - self.lo.tenths()
    }

    pub fn covers(&self, score: SeverityScore) -> bool {
        range_covers(self, score)
    }
}

impl fmt::Display for ScoreRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}-{}]", self.lo, self.hi)
    }
}

/// Inclusive on both ends; the sentinel is never covered.
pub fn range_covers(range: &ScoreRange, score: SeverityScore) -> bool {
    !score.is_declined() && range.lo <= score && score <= range.hi
}

/// A positive tolerance on the one-decimal grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Distance(u16);

impl Distance {
    pub const HALF: Distance = Distance(5);
    pub const ONE: Distance = Distance(10);
    pub const ONE_AND_HALF: Distance = Distance(15);

    pub const STANDARD: [Distance; 3] = [Distance::HALF, Distance::ONE, Distance::ONE_AND_HALF];

    pub fn new(value: f64) -> Result<Self> {
        let tenths = (value * 10.0).round();
        if !value.is_finite() || !(1.0..=100.0).contains(&tenths) {
            return Err(Error::Config(format!(
                "distance {value} must lie in (0, 10] on the 0.1 grid"
            )));
        }
        Ok(Distance(tenths as u16))
    }

    pub fn from_tenths(tenths: u16) -> Result<Self> {
        if tenths == 0 || tenths > 100 {
            return Err(Error::Config(format!("distance of {tenths} tenths")));
        }
        Ok(Distance(tenths))
    }

    pub fn tenths(self) -> u16 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 10.0
    }

    /// Compact code used in criterion names: 0.5 -> "05", 1.5 -> "15".
    pub fn code(self) -> String {
        format!("{:02}", self.0)
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}", self.value())
    }
}

impl FromStr for Distance {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad distance {s:?}")))?;
        Distance::new(v)
    }
}

impl Serialize for Distance {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Distance {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Number(v) => Distance::new(v).map_err(de::Error::custom),
            Repr::Text(t) => t.parse().map_err(de::Error::custom),
        }
    }
}

/// `[max(0, score - distance), min(10, score + distance)]`.
pub fn distance_range(score: SeverityScore, distance: Distance) -> Result<ScoreRange> {
    if score.is_declined() {
        return Err(Error::SentinelScore);
    }
    let d = distance.tenths() as i16;
    let lo = (score.tenths() - d).max(SeverityScore::MIN.tenths());
    let hi = (score.tenths() + d).min(SeverityScore::MAX.tenths());
    Ok(ScoreRange {
        lo: SeverityScore::from_tenths(lo)?,
        hi: SeverityScore::from_tenths(hi)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Band {
    pub label: SeverityLabel,
    pub range: ScoreRange,
}

/// Qualitative rating table for one CVSS version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CvssScheme {
    pub version: CvssVersion,
    bands: Vec<Band>,
}

impl CvssScheme {
    /// Bands must be in ascending label order and tile `[0.0, 10.0]` on the
    /// one-decimal grid with no gap or overlap.
    pub fn new(version: CvssVersion, mut bands: Vec<Band>) -> Result<Self> {
        bands.sort_by_key(|b| b.range.lo);
        let err = |msg: String| Err(Error::InvalidScheme(format!("CVSS {version}: {msg}")));
        let (Some(first), Some(last)) = (bands.first(), bands.last()) else {
            return err("no bands".into());
        };
        if first.range.lo != SeverityScore::MIN {
            return err(format!("first band starts at {}", first.range.lo));
        }
        if last.range.hi != SeverityScore::MAX {
            return err(format!("last band ends at {}", last.range.hi));
        }
        for pair in bands.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if b.range.lo.tenths() != a.range.hi.tenths() + 1 {
                return err(format!("{} and {} do not abut", a.range, b.range));
            }
            if b.label <= a.label {
                return err(format!("label {} follows {}", b.label, a.label));
            }
        }
        Ok(CvssScheme { version, bands })
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn labels(&self) -> impl Iterator<Item = SeverityLabel> + '_ {
        self.bands.iter().map(|b| b.label)
    }

    pub fn has_label(&self, label: SeverityLabel) -> bool {
        self.bands.iter().any(|b| b.label == label)
    }

    pub fn score_to_label(&self, score: SeverityScore) -> Result<SeverityLabel> {
        if score.is_declined() {
            return Err(Error::SentinelScore);
        }
        self.bands
            .iter()
            .find(|b| b.range.covers(score))
            .map(|b| b.label)
            .ok_or(Error::ScoreOutOfRange(score.value()))
    }

    pub fn label_range(&self, label: SeverityLabel) -> Result<ScoreRange> {
        self.bands
            .iter()
            .find(|b| b.label == label)
            .map(|b| b.range)
            .ok_or_else(|| Error::LabelNotInScheme {
                label: label.to_string(),
                version: self.version.to_string(),
            })
    }
}

fn band(label: SeverityLabel, lo: i16, hi: i16) -> Band {
    Band {
        label,
        range: ScoreRange {
            lo: SeverityScore::from_tenths(lo).expect("static band"),
            hi: SeverityScore::from_tenths(hi).expect("static band"),
        },
    }
}

fn builtin_scheme(version: CvssVersion) -> CvssScheme {
    use SeverityLabel::*;
    let bands = match version {
        CvssVersion::V2_0 => vec![band(Low, 0, 39), band(Medium, 40, 69), band(High, 70, 100)],
        CvssVersion::V3_0 | CvssVersion::V3_1 => vec![
            band(Low, 0, 39),
            band(Medium, 40, 69),
            band(High, 70, 89),
            band(Critical, 90, 100),
        ],
    };
    CvssScheme::new(version, bands).expect("builtin CVSS tables are valid")
}

static BUILTIN: LazyLock<SchemeStore> = LazyLock::new(SchemeStore::builtin);

/// One scheme per CVSS version.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemeStore {
    schemes: BTreeMap<CvssVersion, CvssScheme>,
}

impl Default for SchemeStore {
    fn default() -> Self {
        BUILTIN.clone()
    }
}

/// Band override file, e.g.
///
/// ```toml
/// [bands."3.1"]
/// LOW = [0.0, 3.9]
/// MEDIUM = [4.0, 6.9]
/// HIGH = [7.0, 8.9]
/// CRITICAL = [9.0, 10.0]
/// ```
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
pub struct SchemeOverrides {
    #[serde(default)]
    pub bands: BTreeMap<String, BTreeMap<String, [f64; 2]>>,
}

impl SchemeStore {
    pub fn builtin() -> Self {
        let schemes = CvssVersion::ALL
            .into_iter()
            .map(|v| (v, builtin_scheme(v)))
            .collect();
        SchemeStore { schemes }
    }

    /// The process-wide builtin tables.
    pub fn shared() -> &'static SchemeStore {
        &BUILTIN
    }

    pub fn with_overrides(mut self, overrides: &SchemeOverrides) -> Result<Self> {
        for (version_text, table) in &overrides.bands {
            let version: CvssVersion = version_text.parse()?;
            let bands = table
                .iter()
                .map(|(label, [lo, hi])| {
                    Ok(Band {
                        label: label.parse()?,
                        range: ScoreRange::new(SeverityScore::new(*lo)?, SeverityScore::new(*hi)?)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            self.schemes.insert(version, CvssScheme::new(version, bands)?);
        }
        Ok(self)
    }

    pub fn scheme(&self, version: CvssVersion) -> &CvssScheme {
        // Every version is populated at construction.
        &self.schemes[&version]
    }

    pub fn score_to_label(&self, score: SeverityScore, version: CvssVersion) -> Result<SeverityLabel> {
        self.scheme(version).score_to_label(score)
    }

    pub fn label_range(&self, label: SeverityLabel, version: CvssVersion) -> Result<ScoreRange> {
        self.scheme(version).label_range(label)
    }
}

/// Builtin-table shorthand for [`SchemeStore::score_to_label`].
pub fn score_to_label(score: SeverityScore, version: CvssVersion) -> Result<SeverityLabel> {
    SchemeStore::shared().score_to_label(score, version)
}

/// Builtin-table shorthand for [`SchemeStore::label_range`].
pub fn label_range(label: SeverityLabel, version: CvssVersion) -> Result<ScoreRange> {
    SchemeStore::shared().label_range(label, version)
}
