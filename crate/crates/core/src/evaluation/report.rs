use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{to_pretty_json, write_file};
use crate::error::{Error, Result};
use crate::evaluation::{AccuracyReport, Criterion, LabelDistribution, LanguageRow, NULL_BUCKET};
use crate::extraction::LanguageId;
use crate::model::{PromptVariant, SeverityLabel};

/// Everything a report bundle is rendered from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub reports: Vec<AccuracyReport>,
    pub distributions: BTreeMap<PromptVariant, LabelDistribution>,
    pub languages: BTreeMap<PromptVariant, BTreeMap<LanguageId, LanguageRow>>,
}

impl EvaluationSummary {
    pub fn get(&self, variant: PromptVariant, criterion: Criterion) -> Option<&AccuracyReport> {
        self.reports
            .iter()
            .find(|r| r.variant == variant && r.criterion == criterion)
    }

    fn variants(&self) -> Vec<PromptVariant> {
        let mut vs: Vec<PromptVariant> = self.reports.iter().map(|r| r.variant).collect();
        vs.sort();
        vs.dedup();
        vs
    }

    fn criteria(&self) -> Vec<Criterion> {
        let mut cs: Vec<Criterion> = Vec::new();
        for r in &self.reports {
            if !cs.contains(&r.criterion) {
                cs.push(r.criterion);
            }
        }
        cs
    }
}

fn percent(r: &AccuracyReport) -> String {
    format!("{:.1}% ({}/{})", r.accuracy * 100.0, r.numerator, r.denominator)
}

/// The human-readable tables: accuracy grid, label distributions and
/// language breakdowns.
pub fn render_markdown(summary: &EvaluationSummary) -> String {
    let variants = summary.variants();
    let mut md = String::from("# Evaluation report\n\n## Accuracy\n\n| Criterion |");
    for v in &variants {
        let _ = write!(md, " {v} |");
    }
    md.push_str("\n|---|");
    md.push_str(&"---|".repeat(variants.len()));
    md.push('\n');
    for c in summary.criteria() {
        let _ = write!(md, "| {c} |");
        for v in &variants {
            let cell = summary.get(*v, c).map_or_else(|| "-".to_string(), percent);
            let _ = write!(md, " {cell} |");
        }
        md.push('\n');
    }

    if !summary.distributions.is_empty() {
        md.push_str("\n## Severity label distribution\n");
        for (variant, d) in &summary.distributions {
            let _ = write!(md, "\n### {variant}\n\n| Label | Ground truth | Identified |\n|---|---|---|\n");
            let labels = SeverityLabel::ALL.iter().map(|l| l.as_str()).chain([NULL_BUCKET]);
            for label in labels {
                let gt = d.ground_truth.get(label).copied().unwrap_or(0);
                let id = d.identified.get(label).copied().unwrap_or(0);
                let _ = writeln!(md, "| {label} | {gt} | {id} |");
            }
        }
    }

    if !summary.languages.is_empty() {
        md.push_str("\n## Correct identifications by language\n");
        for (variant, rows) in &summary.languages {
            let _ = write!(
                md,
                "\n### {variant}\n\n| Language | Records | CWE correct | Label correct |\n|---|---|---|---|\n"
            );
            for (lang, row) in rows {
                let _ = writeln!(
                    md,
                    "| {} | {} | {} | {} |",
                    lang.as_str(),
                    row.records,
                    row.cwe_correct,
                    row.label_correct
                );
            }
        }
    }
    md
}

/// Writes `summary.json`, `distribution_<VARIANT>.json`,
/// `languages_<VARIANT>.json` and `report.md` into `dir`. Output depends only
/// on `summary`, so reruns are byte-identical.
pub fn generate_report(summary: &EvaluationSummary, dir: &Path) -> Result<Vec<PathBuf>> {
    if summary.reports.is_empty() {
        return Err(Error::Config("no accuracy reports to write".into()));
    }
    let mut written = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| -> Result<()> {
        let path = dir.join(name);
        write_file(&path, &bytes)?;
        written.push(path);
        Ok(())
    };
    put("summary.json".into(), to_pretty_json(&summary.reports)?)?;
    for (variant, d) in &summary.distributions {
        put(format!("distribution_{variant}.json"), to_pretty_json(d)?)?;
    }
    for (variant, rows) in &summary.languages {
        put(format!("languages_{variant}.json"), to_pretty_json(rows)?)?;
    }
    put("report.md".into(), render_markdown(summary).into_bytes())?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cvss::Distance;

    fn summary() -> EvaluationSummary {
        let mut s = EvaluationSummary::default();
        for v in PromptVariant::EVALUATION {
            for c in Criterion::standard(&Distance::STANDARD) {
                s.reports.push(AccuracyReport {
                    variant: v,
                    criterion: c,
                    numerator: 7,
                    denominator: 10,
                    accuracy: 0.7,
                });
            }
            s.distributions.insert(v, LabelDistribution::default());
            s.languages
                .insert(v, BTreeMap::from([(LanguageId::Php, LanguageRow { records: 12, cwe_correct: 10, label_correct: 10 })]));
        }
        s
    }

    #[test]
    fn grid_and_determinism() {
        let s = summary();
        let md = render_markdown(&s);
        assert_eq!(md.matches("70.0% (7/10)").count(), 56);
        assert!(md.contains("| php | 12 | 10 | 10 |"));

        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let files = generate_report(&s, a.path()).unwrap();
        generate_report(&s, b.path()).unwrap();
        assert_eq!(files.len(), 1 + 4 + 4 + 1);
        for f in files {
            let name = f.file_name().unwrap();
            assert_eq!(std::fs::read(&f).unwrap(), std::fs::read(b.path().join(name)).unwrap());
        }
        let back: Vec<AccuracyReport> =
            serde_json::from_slice(&std::fs::read(a.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(back, s.reports);
        assert!(generate_report(&EvaluationSummary::default(), a.path()).is_err());
    }
}
