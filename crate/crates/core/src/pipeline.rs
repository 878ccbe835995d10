//! End-to-end stages: build the dataset, export fine-tune files, run
//! inference, evaluate, and render reports. Every stage reads its inputs
//! from disk and writes its outputs to disk.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cvss::{Distance, SchemeOverrides, SchemeStore};
use crate::dataset::{load_dataset, read_json, write_dataset, Dataset, Split};
use crate::error::{Error, Result};
use crate::evaluation::{
    accuracy, dominant_language, eval_record, generate_report, label_distribution,
    language_breakdown, render_markdown, Criterion, EvaluationSummary,
};
use crate::extraction::{extract_record_methods, ExtractionConfig};
use crate::filters::{reason, DiscardRecord, DiscardStage, Filter, FilterConfig, PassedRecord};
use crate::inference::{
    infer_record, load_results, MockFixtureFile, MockProvider, Provider, ProviderConfig,
    ProviderKind, RawResult, RemoteProvider, ResultsWriter,
};
use crate::ingestion::commit::{
    fetch_with_retry, first_commit_url, CommitClient, FixtureCommitClient, GithubClient,
    COMMIT_TOKEN_ENV, GITHUB_API,
};
use crate::ingestion::cve2cwe::Cve2CweStore;
use crate::ingestion::nvd::{parse_nvd_feed, RawCveEntry};
use crate::ingestion::{assemble_record, sample_evaluation};
use crate::model::{EnrichedRecord, PromptVariant, TaskKind};
use crate::prompting::{
    export_finetune_dataset, write_finetune_export, ByteEstimator, ExportMetadata, PromptBuilder,
    Templates,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub dataset_dir: PathBuf,
    pub results_dir: PathBuf,
    pub reports_dir: PathBuf,
    pub finetune_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            dataset_dir: "out/dataset".into(),
            results_dir: "out/results".into(),
            reports_dir: "out/reports".into(),
            finetune_dir: "out/finetune".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommitConfig {
    pub api_base: String,
    /// Replay recorded commits from here instead of calling the host.
    pub fixtures_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub min_interval_ms: u64,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub concurrency: usize,
}

impl Default for CommitConfig {
    fn default() -> Self {
        CommitConfig {
            api_base: GITHUB_API.into(),
            fixtures_dir: None,
            cache_dir: None,
            min_interval_ms: 750,
            timeout_ms: 30_000,
            max_retries: 3,
            backoff_ms: 2_000,
            concurrency: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Share of the filtered dataset held out for evaluation.
    pub eval_fraction: f64,
    /// Share of fine-tune records exported as the test file.
    pub export_test_fraction: f64,
    /// Evaluate right after inference.
    pub evaluate: bool,
    /// Evaluation records sampled for inference; all when unset.
    pub sample: Option<usize>,
    pub variants: Vec<PromptVariant>,
    pub distances: Vec<Distance>,
    pub bytes_per_token: usize,
    pub templates_dir: Option<PathBuf>,
    pub paths: Paths,
    pub filter: FilterConfig,
    pub provider: ProviderConfig,
    pub extraction: ExtractionConfig,
    pub commits: CommitConfig,
    pub cvss: SchemeOverrides,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            eval_fraction: 0.5,
            export_test_fraction: 0.25,
            evaluate: false,
            sample: None,
            variants: PromptVariant::EVALUATION.to_vec(),
            distances: Distance::STANDARD.to_vec(),
            bytes_per_token: 4,
            templates_dir: None,
            paths: Paths::default(),
            filter: FilterConfig::default(),
            provider: ProviderConfig::default(),
            extraction: ExtractionConfig::default(),
            commits: CommitConfig::default(),
            cvss: SchemeOverrides::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Checks invariants and normalizes the distance and variant lists
    /// (sorted, deduplicated).
    pub fn validate(&mut self) -> Result<()> {
        self.distances.sort();
        self.distances.dedup();
        if self.distances.is_empty() {
            return Err(Error::Config("at least one distance is required".into()));
        }
        let mut seen = BTreeSet::new();
        self.variants.retain(|v| seen.insert(*v));
        if self.variants.is_empty() {
            return Err(Error::Config("at least one variant is required".into()));
        }
        for (name, f) in [("eval_fraction", self.eval_fraction), ("export_test_fraction", self.export_test_fraction)] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!("{name} {f} not in (0, 1)")));
            }
        }
        if self.bytes_per_token == 0 {
            return Err(Error::Config("bytes_per_token must be positive".into()));
        }
        let p = &self.paths;
        let dirs = [&p.dataset_dir, &p.results_dir, &p.reports_dir, &p.finetune_dir];
        if dirs.iter().collect::<BTreeSet<_>>().len() != dirs.len() {
            return Err(Error::Config("dataset, results, reports and finetune paths must differ".into()));
        }
        self.filter.validate()?;
        self.provider.validate()
    }

    pub fn schemes(&self) -> Result<SchemeStore> {
        SchemeStore::builtin().with_overrides(&self.cvss)
    }

    pub fn prompt_builder(&self) -> Result<PromptBuilder> {
        let templates = match &self.templates_dir {
            Some(dir) => Templates::builtin().with_overrides(dir)?,
            None => Templates::builtin(),
        };
        Ok(PromptBuilder::new(templates, self.schemes()?))
    }

    pub fn estimator(&self) -> ByteEstimator {
        ByteEstimator {
            bytes_per_token: self.bytes_per_token,
        }
    }
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

/// Commit source from configuration: recorded fixtures, or the GitHub API
/// with the token from `TRIAGE_COMMIT_TOKEN`.
pub fn commit_client(config: &CommitConfig) -> Result<Box<dyn CommitClient>> {
    if let Some(dir) = &config.fixtures_dir {
        return Ok(Box::new(FixtureCommitClient::new(dir)));
    }
    let token = std::env::var(COMMIT_TOKEN_ENV).ok().filter(|t| !t.is_empty());
    Ok(Box::new(GithubClient::new(
        &config.api_base,
        token,
        config.cache_dir.clone(),
        Duration::from_millis(config.min_interval_ms),
        Duration::from_millis(config.timeout_ms),
    )?))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BuildSummary {
    pub input: usize,
    pub passed: usize,
    pub discarded: usize,
    pub evaluation: usize,
    pub finetune: usize,
    pub discard_reasons: BTreeMap<String, usize>,
}

fn read_feeds(feeds: &[PathBuf]) -> Result<Vec<RawCveEntry>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for path in feeds {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        for entry in parse_nvd_feed(&bytes)? {
            if seen.insert(entry.cve.clone()) {
                out.push(entry);
            } else {
                warn!("{}: duplicate feed entry ignored", entry.cve);
            }
        }
    }
    Ok(out)
}

fn enrich(entry: &RawCveEntry, client: &dyn CommitClient, config: &PipelineConfig) -> Result<EnrichedRecord, DiscardRecord> {
    let discard = |reason: &str, detail: String| DiscardRecord::new(&entry.cve, DiscardStage::Validity, reason, detail);
    let url = first_commit_url(&entry.reference_urls)
        .ok_or_else(|| discard(reason::NO_COMMIT_URL, format!("{} references", entry.reference_urls.len())))?;
    let commit = fetch_with_retry(
        client,
        &url,
        config.commits.max_retries,
        Duration::from_millis(config.commits.backoff_ms),
    )
    .map_err(|e| discard(reason::COMMIT_UNAVAILABLE, e.to_string()))?;
    let mut record = assemble_record(entry, &commit);
    for issue in extract_record_methods(&mut record, &config.extraction) {
        warn!("{}: {}: {}", record.cve, issue.filename, issue.message);
    }
    Ok(record)
}

/// Feed entries -> enriched, filtered, split dataset in
/// `config.paths.dataset_dir`. Per-record problems end up in the
/// non-evaluated report; only unreadable inputs are fatal.
pub fn cmd_build_dataset(
    feeds: &[PathBuf],
    cve2cwe: &Path,
    config: &PipelineConfig,
    client: &dyn CommitClient,
) -> Result<BuildSummary> {
    let store = Cve2CweStore::load(cve2cwe)?;
    let entries = read_feeds(feeds)?;
    if entries.is_empty() {
        warn!("feeds contain no CVE entries");
    }
    let schemes = config.schemes()?;
    let prompts = config.prompt_builder()?;
    let estimator = config.estimator();

    let enriched: Vec<_> = pool(config.commits.concurrency)?
        .install(|| entries.par_iter().map(|e| enrich(e, client, config)).collect());
    let mut records = Vec::new();
    let mut discarded = Vec::new();
    for r in enriched {
        match r {
            Ok(rec) => records.push(rec),
            Err(d) => discarded.push(d),
        }
    }

    let filter = Filter {
        config: &config.filter,
        store: &store,
        schemes: &schemes,
        extraction: &config.extraction,
        prompts: &prompts,
        estimator: &estimator,
    };
    let outcome = filter.filter_batch(&records);
    discarded.extend(outcome.discarded);
    debug_assert_eq!(outcome.passed.len() + discarded.len(), entries.len());

    let manifest = write_dataset(
        &config.paths.dataset_dir,
        &outcome.passed,
        &discarded,
        config.seed,
        config.eval_fraction,
    )?;
    let mut reasons = BTreeMap::new();
    for d in &discarded {
        *reasons.entry(d.reason.clone()).or_default() += 1;
    }
    let evaluation = manifest.records.iter().filter(|e| e.split == Split::Evaluation).count();
    let summary = BuildSummary {
        input: entries.len(),
        passed: outcome.passed.len(),
        discarded: discarded.len(),
        evaluation,
        finetune: outcome.passed.len() - evaluation,
        discard_reasons: reasons,
    };
    info!(
        "dataset: {} in, {} passed ({} evaluation / {} fine-tune), {} discarded",
        summary.input, summary.passed, summary.evaluation, summary.finetune, summary.discarded
    );
    Ok(summary)
}

/// Fine-tune files for `task` from the dataset's fine-tune split, across all
/// seven variants.
pub fn cmd_export_finetune(config: &PipelineConfig, task: TaskKind) -> Result<ExportMetadata> {
    let dataset = load_dataset(&config.paths.dataset_dir)?;
    let records: Vec<_> = dataset
        .split(Split::Finetune)
        .map(|p| (&p.record, &p.ground_truth))
        .collect();
    if records.is_empty() {
        return Err(Error::Config("dataset has no fine-tune records".into()));
    }
    let export = export_finetune_dataset(
        &records,
        task,
        &PromptVariant::ALL,
        config.export_test_fraction,
        config.seed,
        &config.prompt_builder()?,
        &config.estimator(),
        config.filter.token_limit,
    )?;
    write_finetune_export(&export, &config.paths.finetune_dir)?;
    Ok(export.metadata)
}

/// Provider from configuration. The mock answers from its fixture file,
/// echoing or perturbing the dataset's ground truth as scripted.
pub fn make_provider(config: &PipelineConfig, dataset: &Dataset) -> Result<Box<dyn Provider>> {
    match config.provider.kind {
        ProviderKind::Remote => Ok(Box::new(RemoteProvider::from_env(&config.provider)?)),
        ProviderKind::Mock => {
            let file = match &config.provider.mock_fixtures {
                Some(path) => MockFixtureFile::load(path)?,
                None => MockFixtureFile::default(),
            };
            let schemes = config.schemes()?;
            let gts = dataset
                .records
                .iter()
                .map(|p| (p.record.cve.as_str(), &p.ground_truth));
            Ok(Box::new(MockProvider::from_fixtures(&file, gts, &schemes)))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct InferSummary {
    pub records: usize,
    /// (record, variant) pairs sent to the provider in this run.
    pub attempted: usize,
    pub written: usize,
    /// Results already on disk and left alone.
    pub resumed: usize,
    /// Pairs the record cannot serve (excluded by the filters).
    pub excluded: usize,
    /// Results with at least one error message.
    pub with_errors: usize,
    /// Results where neither task produced provider output.
    pub failed: usize,
}

/// Evaluation records chosen for inference: a seeded sample when
/// `config.sample` is set.
pub fn inference_records<'a>(config: &PipelineConfig, dataset: &'a Dataset) -> Result<Vec<&'a PassedRecord>> {
    let eval: Vec<&PassedRecord> = dataset.split(Split::Evaluation).collect();
    match config.sample {
        Some(n) => sample_evaluation(&eval, n, config.seed),
        None => Ok(eval),
    }
}

/// Two inferences per (record, variant). Existing results are kept unless
/// `force` is set.
pub fn cmd_infer(config: &PipelineConfig, provider: &dyn Provider, force: bool) -> Result<InferSummary> {
    let dataset = load_dataset(&config.paths.dataset_dir)?;
    let records = inference_records(config, &dataset)?;
    let builder = config.prompt_builder()?;
    let policy = config.provider.retry_policy();
    let writer = ResultsWriter::open(&config.paths.results_dir)?;

    let mut summary = InferSummary {
        records: records.len(),
        ..InferSummary::default()
    };
    let mut jobs = Vec::new();
    for p in &records {
        for &variant in &config.variants {
            if !p.serves(variant) {
                summary.excluded += 1;
            } else if !force && writer.contains(&p.record.cve, variant) {
                summary.resumed += 1;
            } else {
                jobs.push((*p, variant));
            }
        }
    }
    summary.attempted = jobs.len();

    let outcomes: Vec<Result<(bool, RawResult)>> = pool(config.provider.concurrency)?.install(|| {
        jobs.par_iter()
            .map(|(p, variant)| {
                let result = infer_record(p, *variant, &builder, provider, &policy);
                let written = writer.write(&result)?;
                Ok((written, result))
            })
            .collect()
    });
    for o in outcomes {
        let (written, result) = o?;
        summary.written += usize::from(written);
        summary.with_errors += usize::from(!result.errors.is_empty());
        summary.failed += usize::from(result.is_failure());
        for e in &result.errors {
            warn!("{} {}: {e}", result.cve, result.variant);
        }
    }
    info!(
        "inference: {} records, {} attempted, {} written, {} resumed, {} with errors",
        summary.records, summary.attempted, summary.written, summary.resumed, summary.with_errors
    );
    Ok(summary)
}

/// Verdicts and aggregates for persisted raw results. `dataset` supplies
/// file languages; without it the language breakdown is empty.
pub fn evaluate_results(
    results: &[RawResult],
    dataset: Option<&Dataset>,
    config: &PipelineConfig,
) -> Result<EvaluationSummary> {
    if results.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    let schemes = config.schemes()?;
    let criteria = Criterion::standard(&config.distances);
    let mut by_variant: BTreeMap<PromptVariant, Vec<&RawResult>> = BTreeMap::new();
    for r in results {
        by_variant.entry(r.variant).or_default().push(r);
    }

    let mut summary = EvaluationSummary::default();
    for (variant, mut rs) in by_variant {
        rs.sort_by(|a, b| a.cve.cmp(&b.cve));
        let verdicts: Vec<_> = rs
            .iter()
            .map(|r| eval_record(&r.outcome(), &r.ground_truth, &schemes, &config.distances))
            .collect();
        for c in &criteria {
            summary.reports.push(accuracy(&verdicts, *c, variant)?);
        }
        summary.distributions.insert(
            variant,
            label_distribution(rs.iter().map(|r| (r.parsed.label, r.ground_truth.label))),
        );
        if let Some(ds) = dataset {
            let langs = rs
                .iter()
                .map(|r| ds.get(&r.cve).and_then(|p| dominant_language(&p.record, &config.extraction)));
            summary.languages.insert(variant, language_breakdown(langs.zip(&verdicts)));
        }
    }
    Ok(summary)
}

/// Recomputes every verdict from the results directory and writes the
/// report bundle. Never calls a provider.
pub fn cmd_evaluate(config: &PipelineConfig) -> Result<EvaluationSummary> {
    let dir = &config.paths.results_dir;
    if !dir.join(crate::inference::RESULTS_MANIFEST).exists() {
        return Err(Error::Config(format!("no raw results in {}", dir.display())));
    }
    let results = load_results(dir)?;
    let dataset = match load_dataset(&config.paths.dataset_dir) {
        Ok(d) => Some(d),
        Err(e) => {
            warn!("language breakdown skipped: {e}");
            None
        }
    };
    let summary = evaluate_results(&results, dataset.as_ref(), config)?;
    generate_report(&summary, &config.paths.reports_dir)?;
    Ok(summary)
}

/// Reads a report bundle back from disk.
pub fn load_report(dir: &Path) -> Result<EvaluationSummary> {
    let mut summary = EvaluationSummary {
        reports: read_json(&dir.join("summary.json"))?,
        ..EvaluationSummary::default()
    };
    for v in PromptVariant::ALL {
        let d = dir.join(format!("distribution_{v}.json"));
        if d.exists() {
            summary.distributions.insert(v, read_json(&d)?);
        }
        let l = dir.join(format!("languages_{v}.json"));
        if l.exists() {
            summary.languages.insert(v, read_json(&l)?);
        }
    }
    Ok(summary)
}

/// The markdown tables of an existing bundle.
pub fn cmd_report(config: &PipelineConfig) -> Result<String> {
    Ok(render_markdown(&load_report(&config.paths.reports_dir)?))
}
