//! Prompt construction for the CWE and severity tasks, token budgeting and
//! fine-tune export.

mod export;
mod templates;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CvssVersion, EnrichedRecord, Granularity, PromptVariant, TaskKind};
use crate::cvss::SchemeStore;

pub use export::{
    assistant_text, export_finetune_dataset, write_finetune_export, ExportMetadata, FineTuneExample,
    FineTuneExport, Hyperparameters, SplitCounts,
};
pub use templates::Templates;

pub const DEFAULT_TOKEN_LIMIT: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPair {
    pub system_text: String,
    pub user_text: String,
    pub task: TaskKind,
    pub variant: PromptVariant,
    pub cve: String,
}

/// Counts prompt tokens. Implementations must be monotone in text length.
pub trait TokenEstimator: Send + Sync {
    fn estimate(&self, text: &str) -> usize;
}

/// `ceil(bytes / bytes_per_token)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ByteEstimator {
    pub bytes_per_token: usize,
}

impl Default for ByteEstimator {
    fn default() -> Self {
        ByteEstimator { bytes_per_token: 4 }
    }
}

impl TokenEstimator for ByteEstimator {
    fn estimate(&self, text: &str) -> usize {
        text.len().div_ceil(self.bytes_per_token.max(1))
    }
}

pub fn estimate_tokens(text: &str) -> usize {
    ByteEstimator::default().estimate(text)
}

pub fn pair_tokens(pair: &PromptPair, estimator: &dyn TokenEstimator) -> usize {
    estimator.estimate(&pair.system_text) + estimator.estimate(&pair.user_text)
}

/// Builds prompts from a template set.
#[derive(Clone)]
pub struct PromptBuilder {
    templates: Arc<Templates>,
    schemes: SchemeStore,
}

impl Default for PromptBuilder {
    fn default() -> Self {
        PromptBuilder::new(Templates::builtin(), SchemeStore::builtin())
    }
}

impl PromptBuilder {
    pub fn new(templates: Templates, schemes: SchemeStore) -> Self {
        PromptBuilder {
            templates: Arc::new(templates),
            schemes,
        }
    }

    pub fn templates(&self) -> &Templates {
        &self.templates
    }

    pub fn system_prompt(&self, task: TaskKind, variant: PromptVariant, version: CvssVersion) -> String {
        let t = &self.templates;
        let mut inputs = Vec::new();
        if variant.has_description() {
            inputs.push(t.input_description.trim_end());
        }
        match variant.granularity() {
            Some(Granularity::Files) => inputs.push(t.input_files.trim_end()),
            Some(Granularity::Methods) => inputs.push(t.input_methods.trim_end()),
            Some(Granularity::Hunks) => inputs.push(t.input_hunks.trim_end()),
            None => {}
        }
        let inputs = inputs.join("\n");
        match task {
            TaskKind::Cwe => render(&t.system_cwe, &[("inputs", &inputs)]),
            TaskKind::Severity => {
                let labels: Vec<String> = self
                    .schemes
                    .scheme(version)
                    .labels()
                    .map(|l| format!("\"{l}\""))
                    .collect();
                render(
                    &t.system_severity,
                    &[
                        ("inputs", &inputs),
                        ("cvss_version", version.as_str()),
                        ("labels", &labels.join(", ")),
                        ("cvss_guide", t.guide(version).trim_end()),
                    ],
                )
            }
        }
    }

    pub fn user_prompt(&self, record: &EnrichedRecord, variant: PromptVariant) -> Result<String> {
        let mut sections = Vec::new();
        if variant.has_description() {
            sections.push(render(
                &self.templates.user_description,
                &[("description", &record.description)],
            ));
        }
        if let Some(granularity) = variant.granularity() {
            let blocks = code_blocks(record, granularity);
            if blocks.is_empty() {
                return Err(Error::MissingGranularity {
                    cve: record.cve.clone(),
                    variant: variant.to_string(),
                });
            }
            sections.push(render(&self.templates.user_code, &[("code_blocks", &blocks)]));
        }
        Ok(sections.join("\n"))
    }

    pub fn pair(
        &self,
        record: &EnrichedRecord,
        task: TaskKind,
        variant: PromptVariant,
        version: CvssVersion,
    ) -> Result<PromptPair> {
        Ok(PromptPair {
            system_text: self.system_prompt(task, variant, version),
            user_text: self.user_prompt(record, variant)?,
            task,
            variant,
            cve: record.cve.clone(),
        })
    }
}

/// [`PromptBuilder::system_prompt`] with the built-in templates.
pub fn build_system_prompt(task: TaskKind, variant: PromptVariant, version: CvssVersion) -> String {
    PromptBuilder::default().system_prompt(task, variant, version)
}

/// [`PromptBuilder::user_prompt`] with the built-in templates.
pub fn build_user_prompt(record: &EnrichedRecord, variant: PromptVariant) -> Result<String> {
    PromptBuilder::default().user_prompt(record, variant)
}

/// Replaces `{{name}}` placeholders. Values are inserted verbatim and are not
/// themselves scanned for placeholders.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        match after.find("}}") {
            Some(close) => {
                let name = after[..close].trim();
                match values.iter().find(|(k, _)| *k == name) {
                    Some((_, v)) => out.push_str(v),
                    None => out.push_str(&rest[open..open + 4 + close]),
                }
                rest = &after[close + 2..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

fn attr(value: &str) -> String {
    value.replace('&', "&amp;").replace('"', "&quot;")
}

fn tagged(out: &mut String, tag: &str, filename: &str, payload: &str) {
    out.push_str(&format!("<{tag} filename=\"{}\">\n", attr(filename)));
    out.push_str(payload);
    if !payload.ends_with('\n') {
        out.push('\n');
    }
    out.push_str(&format!("</{tag}>\n"));
}

/// The tagged code payload of one granularity, in dataset order. Empty when
/// the record has nothing at that granularity.
pub fn code_blocks(record: &EnrichedRecord, granularity: Granularity) -> String {
    let mut out = String::new();
    match granularity {
        Granularity::Files => {
            for f in record.buggy_code.iter().filter(|f| !f.content.is_empty()) {
                tagged(&mut out, "File", &f.filename, &f.content);
            }
        }
        Granularity::Methods => {
            for m in &record.methods {
                tagged(&mut out, "Method", &m.filename, &m.body);
            }
        }
        Granularity::Hunks => {
            for h in &record.hunks {
                tagged(&mut out, "Hunk", &h.filename, &format!("{}\n{}", h.header, h.body));
            }
        }
    }
    out
}
