//! NVD JSON feeds: the 2.0 API shape (`vulnerabilities[].cve`) and the legacy
//! 1.1 data-feed shape (`CVE_Items[]`). Missing fields become empty values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvssEntry {
    pub version: String,
    pub label: String,
    pub score: f64,
}

/// One CVE as published, before any filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawCveEntry {
    pub cve: String,
    pub description: String,
    pub reference_urls: Vec<String>,
    pub cwe_texts: Vec<String>,
    pub cvss_entries: Vec<CvssEntry>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct FeedV2 {
    vulnerabilities: Vec<VulnV2>,
}

#[derive(Deserialize)]
struct VulnV2 {
    cve: CveV2,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct CveV2 {
    id: String,
    #[serde(default)]
    descriptions: Vec<LangString>,
    #[serde(default)]
    references: Vec<ReferenceV2>,
    #[serde(default)]
    weaknesses: Vec<WeaknessV2>,
    #[serde(default)]
    metrics: MetricsV2,
}

#[derive(Deserialize)]
struct LangString {
    #[serde(default)]
    lang: String,
    #[serde(default)]
    value: String,
}

#[derive(Deserialize)]
struct ReferenceV2 {
    url: String,
}

#[derive(Deserialize)]
struct WeaknessV2 {
    #[serde(default)]
    description: Vec<LangString>,
}

#[derive(Default, Deserialize)]
#[serde(rename_all = "camelCase")]
struct MetricsV2 {
    #[serde(default)]
    cvss_metric_v31: Vec<MetricV2>,
    #[serde(default)]
    cvss_metric_v30: Vec<MetricV2>,
    #[serde(default)]
    cvss_metric_v2: Vec<MetricV2>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct MetricV2 {
    cvss_data: CvssDataV2,
    /// v2 metrics carry the label here rather than in `cvssData`.
    #[serde(default)]
    base_severity: Option<String>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct CvssDataV2 {
    #[serde(default)]
    version: Option<String>,
    base_score: f64,
    #[serde(default)]
    base_severity: Option<String>,
}

#[derive(Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
struct FeedV1 {
    #[serde(rename = "CVE_Items")]
    cve_items: Vec<ItemV1>,
}

#[derive(Deserialize)]
struct ItemV1 {
    cve: CveV1,
    #[serde(default)]
    impact: ImpactV1,
}

#[derive(Deserialize)]
struct CveV1 {
    #[serde(rename = "CVE_data_meta")]
    meta: MetaV1,
    #[serde(default)]
    problemtype: Option<ProblemTypeV1>,
    #[serde(default)]
    references: Option<ReferencesV1>,
    #[serde(default)]
    description: Option<DescriptionV1>,
}

#[derive(Deserialize)]
struct MetaV1 {
    #[serde(rename = "ID")]
    id: String,
}

#[derive(Deserialize)]
struct ProblemTypeV1 {
    #[serde(default)]
    problemtype_data: Vec<WeaknessV2>,
}

#[derive(Deserialize)]
struct ReferencesV1 {
    #[serde(default)]
    reference_data: Vec<ReferenceV2>,
}

#[derive(Deserialize)]
struct DescriptionV1 {
    #[serde(default)]
    description_data: Vec<LangString>,
}

#[derive(Default, Deserialize)]
#[serde(rename_all = "camelCase")]
struct ImpactV1 {
    #[serde(default)]
    base_metric_v3: Option<BaseMetricV3>,
    #[serde(default)]
    base_metric_v2: Option<BaseMetricV2>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct BaseMetricV3 {
    cvss_v3: CvssDataV2,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct BaseMetricV2 {
    cvss_v2: CvssDataV2,
    #[serde(default)]
    severity: Option<String>,
}

fn english(texts: &[LangString]) -> String {
    texts
        .iter()
        .find(|d| d.lang.eq_ignore_ascii_case("en"))
        .or_else(|| texts.first())
        .map(|d| d.value.clone())
        .unwrap_or_default()
}

fn cwe_texts(weaknesses: &[WeaknessV2]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for text in weaknesses.iter().flat_map(|w| &w.description).map(|d| &d.value) {
        if !out.contains(text) {
            out.push(text.clone());
        }
    }
    out
}

fn entry(data: &CvssDataV2, default_version: &str, outer_label: Option<&String>) -> CvssEntry {
    CvssEntry {
        version: data
            .version
            .clone()
            .unwrap_or_else(|| default_version.to_string()),
        label: data
            .base_severity
            .as_ref()
            .or(outer_label)
            .cloned()
            .unwrap_or_default(),
        score: data.base_score,
    }
}

fn from_v2(cve: CveV2) -> RawCveEntry {
    let m = &cve.metrics;
    let cvss_entries = m
        .cvss_metric_v31
        .iter()
        .map(|x| entry(&x.cvss_data, "3.1", x.base_severity.as_ref()))
        .chain(
            m.cvss_metric_v30
                .iter()
                .map(|x| entry(&x.cvss_data, "3.0", x.base_severity.as_ref())),
        )
        .chain(
            m.cvss_metric_v2
                .iter()
                .map(|x| entry(&x.cvss_data, "2.0", x.base_severity.as_ref())),
        )
        .collect();
    RawCveEntry {
        description: english(&cve.descriptions),
        reference_urls: cve.references.into_iter().map(|r| r.url).collect(),
        cwe_texts: cwe_texts(&cve.weaknesses),
        cvss_entries,
        cve: cve.id,
    }
}

fn from_v1(item: ItemV1) -> RawCveEntry {
    let mut cvss_entries = Vec::new();
    if let Some(v3) = &item.impact.base_metric_v3 {
        cvss_entries.push(entry(&v3.cvss_v3, "3.1", None));
    }
    if let Some(v2) = &item.impact.base_metric_v2 {
        cvss_entries.push(entry(&v2.cvss_v2, "2.0", v2.severity.as_ref()));
    }
    let cve = item.cve;
    RawCveEntry {
        cve: cve.meta.id,
        description: cve
            .description
            .map(|d| english(&d.description_data))
            .unwrap_or_default(),
        reference_urls: cve
            .references
            .map(|r| r.reference_data.into_iter().map(|r| r.url).collect())
            .unwrap_or_default(),
        cwe_texts: cve
            .problemtype
            .map(|p| cwe_texts(&p.problemtype_data))
            .unwrap_or_default(),
        cvss_entries,
    }
}

/// One entry per CVE item, in feed order.
pub fn parse_nvd_feed(bytes: &[u8]) -> Result<Vec<RawCveEntry>> {
    let doc: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| Error::FeedSyntax(e.to_string()))?;
    let entries = if doc.get("vulnerabilities").is_some() {
        let feed: FeedV2 =
            serde_json::from_value(doc).map_err(|e| Error::FeedSyntax(e.to_string()))?;
        feed.vulnerabilities.into_iter().map(|v| from_v2(v.cve)).collect()
    } else if doc.get("CVE_Items").is_some() {
        let feed: FeedV1 =
            serde_json::from_value(doc).map_err(|e| Error::FeedSyntax(e.to_string()))?;
        feed.cve_items.into_iter().map(from_v1).collect::<Vec<_>>()
    } else {
        return Err(Error::FeedSyntax(
            "expected a `vulnerabilities` or `CVE_Items` array".into(),
        ));
    };
    if let Some(bad) = entries.iter().find(|e: &&RawCveEntry| e.cve.trim().is_empty()) {
        return Err(Error::FeedSyntax(format!("CVE item without an id: {bad:?}")));
    }
    Ok(entries)
}
