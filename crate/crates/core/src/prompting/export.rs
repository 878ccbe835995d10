use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::split::split_indices;
use crate::model::{EnrichedRecord, GroundTruth, PromptVariant, TaskKind};
use crate::prompting::{PromptBuilder, TokenEstimator};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineTuneExample {
    pub system: String,
    pub user: String,
    pub assistant: String,
}

#[derive(Serialize)]
struct CweAnswer<'a> {
    exact: &'a crate::model::CweSet,
    top5: &'a crate::model::CweSet,
}

#[derive(Serialize)]
struct SeverityAnswer {
    label: crate::model::SeverityLabel,
    score: crate::model::SeverityScore,
}

/// Ground truth in the answer format the formatter parses. Top candidates
/// repeat the exact set.
pub fn assistant_text(task: TaskKind, gt: &GroundTruth) -> String {
    let value = match task {
        TaskKind::Cwe => serde_json::to_string(&CweAnswer {
            exact: &gt.cwes,
            top5: &gt.cwes,
        }),
        TaskKind::Severity => serde_json::to_string(&SeverityAnswer {
            label: gt.label,
            score: gt.score,
        }),
    };
    value.expect("answer serialization is infallible")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub epochs: u32,
    pub batch_size: u32,
    pub learning_rate_multiplier: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            epochs: 3,
            batch_size: 11,
            learning_rate_multiplier: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportMetadata {
    pub task: TaskKind,
    pub seed: u64,
    pub test_fraction: f64,
    pub token_limit: usize,
    pub hyperparameters: Hyperparameters,
    /// Record-level split; every variant of a record lands on the same side.
    pub records: SplitCounts,
    /// (record, variant) pairs whose prompt could be built.
    pub prepared_examples: usize,
    /// Pairs skipped because the record lacks the variant's code payload.
    pub missing_granularity: usize,
    pub token_filtered: usize,
    pub examples: SplitCounts,
    pub per_variant: BTreeMap<PromptVariant, SplitCounts>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FineTuneExport {
    pub train: Vec<FineTuneExample>,
    pub test: Vec<FineTuneExample>,
    pub metadata: ExportMetadata,
}

/// One example per (record, variant) whose system + user + assistant text
/// fits `token_limit`. The train/test split is drawn over records.
#[allow(clippy::too_many_arguments)]
pub fn export_finetune_dataset(
    records: &[(&EnrichedRecord, &GroundTruth)],
    task: TaskKind,
    variants: &[PromptVariant],
    test_fraction: f64,
    seed: u64,
    builder: &PromptBuilder,
    estimator: &dyn TokenEstimator,
    token_limit: usize,
) -> Result<FineTuneExport> {
    let (test_idx, _) = split_indices(records.len(), test_fraction, seed)?;
    let mut in_test = vec![false; records.len()];
    for i in &test_idx {
        in_test[*i] = true;
    }

    let mut metadata = ExportMetadata {
        task,
        seed,
        test_fraction,
        token_limit,
        hyperparameters: Hyperparameters::default(),
        records: SplitCounts {
            train: records.len() - test_idx.len(),
            test: test_idx.len(),
        },
        prepared_examples: 0,
        missing_granularity: 0,
        token_filtered: 0,
        examples: SplitCounts::default(),
        per_variant: variants.iter().map(|v| (*v, SplitCounts::default())).collect(),
    };
    let (mut train, mut test) = (Vec::new(), Vec::new());

    for (i, (record, gt)) in records.iter().enumerate() {
        for &variant in variants {
            let pair = match builder.pair(record, task, variant, gt.version) {
                Ok(p) => p,
                Err(Error::MissingGranularity { .. }) => {
                    metadata.missing_granularity += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            metadata.prepared_examples += 1;
            let example = FineTuneExample {
                system: pair.system_text,
                user: pair.user_text,
                assistant: assistant_text(task, gt),
            };
            let tokens = estimator.estimate(&example.system)
                + estimator.estimate(&example.user)
                + estimator.estimate(&example.assistant);
            if tokens > token_limit {
                metadata.token_filtered += 1;
                continue;
            }
            let counts = metadata.per_variant.entry(variant).or_default();
            if in_test[i] {
                counts.test += 1;
                metadata.examples.test += 1;
                test.push(example);
            } else {
                counts.train += 1;
                metadata.examples.train += 1;
                train.push(example);
            }
        }
    }
    Ok(FineTuneExport {
        train,
        test,
        metadata,
    })
}

fn write_jsonl(path: &Path, examples: &[FineTuneExample]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for ex in examples {
        serde_json::to_writer(&mut out, ex)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Writes `<task>_train.jsonl`, `<task>_test.jsonl` and
/// `<task>_metadata.json` into `dir`; returns the three paths.
pub fn write_finetune_export(export: &FineTuneExport, dir: &Path) -> Result<[PathBuf; 3]> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = export.metadata.task.as_str().to_ascii_lowercase();
    let train = dir.join(format!("{stem}_train.jsonl"));
    let test = dir.join(format!("{stem}_test.jsonl"));
    let meta = dir.join(format!("{stem}_metadata.json"));
    write_jsonl(&train, &export.train)?;
    write_jsonl(&test, &export.test)?;
    let mut text = serde_json::to_string_pretty(&export.metadata)?;
    text.push('\n');
    std::fs::write(&meta, text).map_err(|e| Error::io(&meta, e))?;
    Ok([train, test, meta])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CvssVersion, CweSet, SeverityLabel, SeverityScore};
    use crate::prompting::ByteEstimator;

    fn gt() -> GroundTruth {
        GroundTruth {
            cwes: CweSet::parse_all(["CWE-787", "CWE-20"]).unwrap(),
            label: SeverityLabel::High,
            score: SeverityScore::new(7.0).unwrap(),
            version: CvssVersion::V3_1,
        }
    }

    #[test]
    fn answers() {
        assert_eq!(
            assistant_text(TaskKind::Cwe, &gt()),
            r#"{"exact":["CWE-20","CWE-787"],"top5":["CWE-20","CWE-787"]}"#
        );
        assert_eq!(assistant_text(TaskKind::Severity, &gt()), r#"{"label":"HIGH","score":7.0}"#);
    }

    #[test]
    fn desk_scale_split() {
        let base = crate::prompting::tests::record();
        let recs: Vec<EnrichedRecord> = (0..4)
            .map(|i| EnrichedRecord {
                cve: format!("CVE-2022-000{i}"),
                ..base.clone()
            })
            .collect();
        let g = gt();
        let pairs: Vec<_> = recs.iter().map(|r| (r, &g)).collect();
        let out = export_finetune_dataset(
            &pairs,
            TaskKind::Cwe,
            &PromptVariant::ALL,
            0.25,
            1,
            &PromptBuilder::default(),
            &ByteEstimator::default(),
            4096,
        )
        .unwrap();
        assert_eq!(out.metadata.prepared_examples, 28);
        assert_eq!((out.train.len(), out.test.len()), (21, 7));
        assert_eq!(out.metadata.records, SplitCounts { train: 3, test: 1 });

        let tight = export_finetune_dataset(
            &pairs,
            TaskKind::Cwe,
            &PromptVariant::ALL,
            0.25,
            1,
            &PromptBuilder::default(),
            &ByteEstimator::default(),
            10,
        )
        .unwrap();
        assert_eq!(tight.metadata.token_filtered, 28);
        assert!(tight.train.is_empty());

        let dir = tempfile::tempdir().unwrap();
        let [train, _, meta] = write_finetune_export(&out, dir.path()).unwrap();
        let text = std::fs::read_to_string(train).unwrap();
        assert_eq!(text.lines().count(), 21);
        let first: FineTuneExample = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert!(!first.system.is_empty());
        assert!(std::fs::read_to_string(meta).unwrap().contains("\"batch_size\": 11"));
    }
}
