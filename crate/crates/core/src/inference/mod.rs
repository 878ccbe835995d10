//! Provider calls, output formatting and raw-result persistence.

mod format;
mod mock;
mod remote;
mod results;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::PassedRecord;
use crate::model::{PromptVariant, SeverityScore, TaskKind};
use crate::prompting::{PromptBuilder, PromptPair};

pub use format::{extract_object, format_cwe_output, format_severity_output};
pub use mock::{decline_text, mock_respond, perturb, MockFixture, MockFixtureFile, MockMode, MockProvider};
pub use remote::RemoteProvider;
pub use results::{
    load_results, result_path, ParsedOutputs, RawOutputs, RawResult, ResultsWriter, TaskInputs,
    RESULTS_MANIFEST,
};

/// A chat-style model endpoint. Each call is independent; no conversation
/// state is shared between calls.
pub trait Provider: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, pair: &PromptPair) -> Result<String>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Mock,
    Remote,
}

impl std::str::FromStr for ProviderKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mock" => Ok(ProviderKind::Mock),
            "remote" => Ok(ProviderKind::Remote),
            _ => Err(Error::Config(format!("unknown provider {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Full URL of an OpenAI-compatible chat completions endpoint.
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub timeout_ms: u64,
    pub backoff_ms: u64,
    pub concurrency: usize,
    /// Mock answers; see [`MockFixtureFile`].
    pub mock_fixtures: Option<PathBuf>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Mock,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-3.5-turbo".into(),
            temperature: 0.0,
            max_retries: 3,
            timeout_ms: 60_000,
            backoff_ms: 1_000,
            concurrency: 4,
            mock_fixtures: None,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.concurrency == 0 {
            return Err(Error::Config("provider concurrency must be at least 1".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(Error::Config(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        Ok(())
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            base_delay: Duration::from_millis(self.backoff_ms),
            max_delay: Duration::from_secs(60),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            max_retries: 0,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    /// Delay before retry number `attempt` (0-based): base * 2^attempt,
    /// raised to the server's retry-after hint and capped at `max_delay`.
    pub fn delay(&self, attempt: u32, error: &Error) -> Duration {
        let exp = self.base_delay.saturating_mul(1u32 << attempt.min(16));
        let hinted = match error {
            Error::RateLimited {
                retry_after_secs: Some(s),
            } => exp.max(Duration::from_secs(*s)),
            _ => exp,
        };
        hinted.min(self.max_delay)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub attempts: u32,
    pub latency: Duration,
}

/// One completion with retries on transient failures.
pub fn infer(pair: &PromptPair, provider: &dyn Provider, policy: &RetryPolicy) -> Result<Completion> {
    let started = Instant::now();
    let mut attempt = 0;
    loop {
        match provider.complete(pair) {
            Ok(text) => {
                let latency = started.elapsed();
                debug!(
                    "{} {} {}: {} attempt(s), {:?}",
                    provider.name(),
                    pair.cve,
                    pair.task,
                    attempt + 1,
                    latency
                );
                return Ok(Completion {
                    text,
                    attempts: attempt + 1,
                    latency,
                });
            }
            Err(e) if e.is_transient() && attempt < policy.max_retries => {
                let wait = policy.delay(attempt, &e);
                warn!("{} {}: {e}; retrying in {wait:?}", pair.cve, pair.task);
                std::thread::sleep(wait);
                attempt += 1;
            }
            Err(Error::Timeout(ms)) => return Err(Error::Timeout(ms)),
            Err(e) if e.is_transient() => {
                return Err(Error::Provider(format!("gave up after {} attempts: {e}", attempt + 1)))
            }
            Err(e) => return Err(e),
        }
    }
}

/// Runs both tasks for one record and variant. Failures of either task are
/// recorded in `errors`; the failed task's answer is left as a decline.
pub fn infer_record(
    passed: &PassedRecord,
    variant: PromptVariant,
    builder: &PromptBuilder,
    provider: &dyn Provider,
    policy: &RetryPolicy,
) -> RawResult {
    let record = &passed.record;
    let gt = &passed.ground_truth;
    let mut result = RawResult::new(passed, variant);

    for task in TaskKind::ALL {
        let pair = match builder.pair(record, task, variant, gt.version) {
            Ok(p) => p,
            Err(e) => {
                result.errors.push(format!("{task}: {e}"));
                continue;
            }
        };
        result.task_inputs.set(task, &pair);
        let text = match infer(&pair, provider, policy) {
            Ok(c) => c.text,
            Err(e) => {
                result.errors.push(format!("{task}: {e}"));
                continue;
            }
        };
        match task {
            TaskKind::Cwe => {
                match format_cwe_output(&text) {
                    Ok((exact, top)) => {
                        result.parsed.exact_cwes = exact;
                        result.parsed.top_cwes = top;
                    }
                    Err(e) => result.errors.push(format!("{task}: {e}")),
                }
                result.outputs.cwe_raw = Some(text);
            }
            TaskKind::Severity => {
                match format_severity_output(&text) {
                    Ok((label, score)) => {
                        result.parsed.label = label;
                        result.parsed.score = score;
                    }
                    Err(e) => {
                        result.parsed.score = SeverityScore::DECLINED;
                        result.errors.push(format!("{task}: {e}"));
                    }
                }
                result.outputs.severity_raw = Some(text);
            }
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    struct Scripted {
        replies: Mutex<Vec<Result<String>>>,
        calls: Mutex<u32>,
    }

    impl Scripted {
        fn new(mut replies: Vec<Result<String>>) -> Self {
            replies.reverse();
            Scripted {
                replies: Mutex::new(replies),
                calls: Mutex::new(0),
            }
        }
    }

    impl Provider for Scripted {
        fn name(&self) -> &str {
            "scripted"
        }
        fn complete(&self, _pair: &PromptPair) -> Result<String> {
            *self.calls.lock().unwrap() += 1;
            self.replies
                .lock()
                .unwrap()
                .pop()
                .unwrap_or_else(|| Err(Error::Provider("script exhausted".into())))
        }
    }

    fn pair() -> PromptPair {
        PromptPair {
            system_text: "s".into(),
            user_text: "u".into(),
            task: TaskKind::Cwe,
            variant: PromptVariant::Description,
            cve: "CVE-2022-1".into(),
        }
    }

    fn policy(retries: u32) -> RetryPolicy {
        RetryPolicy {
            max_retries: retries,
            ..RetryPolicy::none()
        }
    }

    #[test]
    fn retries_rate_limits() {
        let p = Scripted::new(vec![
            Err(Error::RateLimited { retry_after_secs: None }),
            Err(Error::RateLimited { retry_after_secs: None }),
            Ok("done".into()),
        ]);
        let c = infer(&pair(), &p, &policy(3)).unwrap();
        assert_eq!((c.text.as_str(), c.attempts), ("done", 3));
    }

    #[test]
    fn gives_up() {
        let p = Scripted::new((0..5).map(|_| Err(Error::RateLimited { retry_after_secs: None })).collect());
        assert!(matches!(infer(&pair(), &p, &policy(2)), Err(Error::Provider(_))));
        assert_eq!(*p.calls.lock().unwrap(), 3);

        let p = Scripted::new(vec![Err(Error::Provider("bad request".into())), Ok("x".into())]);
        assert!(infer(&pair(), &p, &policy(5)).is_err());
        assert_eq!(*p.calls.lock().unwrap(), 1);

        let p = Scripted::new(vec![Err(Error::Timeout(10)), Err(Error::Timeout(10))]);
        assert!(matches!(infer(&pair(), &p, &policy(1)), Err(Error::Timeout(10))));
    }

    #[test]
    fn backoff_schedule() {
        let p = RetryPolicy {
            max_retries: 5,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_secs(1),
        };
        let e = Error::Timeout(1);
        assert_eq!(p.delay(0, &e), Duration::from_millis(100));
        assert_eq!(p.delay(2, &e), Duration::from_millis(400));
        assert_eq!(p.delay(9, &e), Duration::from_secs(1));
        let hinted = Error::RateLimited { retry_after_secs: Some(1) };
        assert_eq!(p.delay(0, &hinted), Duration::from_secs(1));
    }

    #[test]
    fn failed_task_is_recorded() {
        let passed = results::tests::passed();
        let p = Scripted::new(vec![
            Ok(r#"{"exact":["CWE-79"],"top5":["CWE-79"]}"#.into()),
            Err(Error::Provider("down".into())),
        ]);
        let r = infer_record(&passed, PromptVariant::Description, &PromptBuilder::default(), &p, &policy(0));
        assert_eq!(r.parsed.exact_cwes.len(), 1);
        assert_eq!(r.outputs.severity_raw, None);
        assert_eq!(r.errors.len(), 1);
        assert!(r.errors[0].starts_with("SEVERITY"));
        assert!(!r.task_inputs.severity_system.is_empty());
    }
}
