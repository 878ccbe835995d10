//! Fetching fix commits from a code host.
//!
//! [`CommitClient`] abstracts the host. [`GithubClient`] talks to the GitHub
//! REST API with an optional on-disk response cache; [`FixtureCommitClient`]
//! replays recorded [`CommitData`] files so the pipeline runs offline.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use log::{debug, warn};
use reqwest::blocking::Client;
use reqwest::header::{HeaderMap, ACCEPT, AUTHORIZATION, USER_AGENT};
use reqwest::Url;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const COMMIT_TOKEN_ENV: &str = "TRIAGE_COMMIT_TOKEN";
pub const GITHUB_API: &str = "https://api.github.com";

/// Everything the dataset needs from one commit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitData {
    pub url: String,
    /// Commit date as reported by the host (RFC 3339 or `YYYY-MM-DD`).
    pub date: String,
    pub diff_text: String,
    /// Pre-change content keyed by pre-image path.
    #[serde(default)]
    pub file_contents: BTreeMap<String, String>,
    /// Files in the diff whose content is binary or could not be retrieved.
    #[serde(default)]
    pub unavailable: BTreeSet<String>,
    #[serde(default)]
    pub issue_message: Option<String>,
}

/// `https://github.com/<owner>/<repo>/commit/<sha>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CommitUrl {
    pub owner: String,
    pub repo: String,
    pub sha: String,
}

impl CommitUrl {
    pub fn parse(url: &str) -> Result<Self> {
        let not_commit = || Error::NotACommitUrl(url.to_string());
        let parsed = Url::parse(url.trim()).map_err(|_| not_commit())?;
        if !matches!(parsed.scheme(), "http" | "https") {
            return Err(not_commit());
        }
        let host = parsed.host_str().unwrap_or_default();
        if host != "github.com" && host != "www.github.com" {
            return Err(not_commit());
        }
        let segments: Vec<&str> = parsed
            .path_segments()
            .map(|s| s.filter(|p| !p.is_empty()).collect())
            .unwrap_or_default();
        let sha = match segments.as_slice() {
            [_, _, "commit" | "commits", sha] => *sha,
            [_, _, "pull", _, "commits", sha] => *sha,
            _ => return Err(not_commit()),
        };
        let sha = sha.strip_suffix(".patch").or_else(|| sha.strip_suffix(".diff")).unwrap_or(sha);
        if !(7..=40).contains(&sha.len()) || !sha.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(not_commit());
        }
        Ok(CommitUrl {
            owner: segments[0].to_string(),
            repo: segments[1].to_string(),
            sha: sha.to_ascii_lowercase(),
        })
    }

    pub fn canonical(&self) -> String {
        format!("https://github.com/{}/{}/commit/{}", self.owner, self.repo, self.sha)
    }

    /// File name used for recorded fixtures.
    pub fn fixture_name(&self) -> String {
        format!("{}__{}__{}.json", self.owner, self.repo, self.sha)
    }
}

/// First reference that parses as a supported commit URL.
pub fn first_commit_url<S: AsRef<str>>(urls: &[S]) -> Option<CommitUrl> {
    urls.iter().find_map(|u| CommitUrl::parse(u.as_ref()).ok())
}

pub trait CommitClient: Send + Sync {
    fn fetch(&self, url: &CommitUrl) -> Result<CommitData>;
}

/// Parses `url` and fetches it through `client`.
pub fn fetch_commit(url: &str, client: &dyn CommitClient) -> Result<CommitData> {
    let parsed = CommitUrl::parse(url)?;
    client.fetch(&parsed)
}

/// Retries transient failures (rate limits, network errors) with
/// exponential backoff. A rate-limit reset hint overrides the backoff.
pub fn fetch_with_retry(
    client: &dyn CommitClient,
    url: &CommitUrl,
    retries: u32,
    base_delay: Duration,
) -> Result<CommitData> {
    let mut attempt = 0;
    loop {
        match client.fetch(url) {
            Err(e) if e.is_transient() && attempt < retries => {
                let mut delay = base_delay * 2u32.saturating_pow(attempt);
                if let Error::RateLimited {
                    retry_after_secs: Some(s),
                } = e
                {
                    delay = delay.max(Duration::from_secs(s));
                }
                warn!("{}: {e}; retrying in {delay:?}", url.canonical());
                thread::sleep(delay);
                attempt += 1;
            }
            other => return other,
        }
    }
}

/// Replays `<owner>__<repo>__<sha>.json` files holding [`CommitData`].
#[derive(Debug, Clone)]
pub struct FixtureCommitClient {
    dir: PathBuf,
}

impl FixtureCommitClient {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureCommitClient { dir: dir.into() }
    }

    pub fn record(&self, url: &CommitUrl, data: &CommitData) -> Result<()> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let path = self.dir.join(url.fixture_name());
        let json = serde_json::to_vec_pretty(data)?;
        std::fs::write(&path, json).map_err(|e| Error::io(path, e))
    }
}

impl CommitClient for FixtureCommitClient {
    fn fetch(&self, url: &CommitUrl) -> Result<CommitData> {
        let path = self.dir.join(url.fixture_name());
        let bytes = std::fs::read(&path).map_err(|e| Error::Fetch {
            url: url.canonical(),
            reason: format!("no fixture at {}: {e}", path.display()),
        })?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// Enforces a minimum interval between requests to one host.
#[derive(Debug)]
pub struct RateLimiter {
    min_interval: Duration,
    next_slot: Mutex<Instant>,
}

impl RateLimiter {
    pub fn new(min_interval: Duration) -> Self {
        RateLimiter {
            min_interval,
            next_slot: Mutex::new(Instant::now()),
        }
    }

    pub fn acquire(&self) {
        let wait = {
            let mut slot = self.next_slot.lock().unwrap_or_else(|p| p.into_inner());
            let now = Instant::now();
            let start = (*slot).max(now);
            *slot = start + self.min_interval;
            start - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

/// Maps an HTTP status and headers to the client's error taxonomy.
pub fn classify_response(url: &str, status: u16, headers: &HeaderMap) -> Result<()> {
    if (200..300).contains(&status) {
        return Ok(());
    }
    let header = |name: &str| headers.get(name).and_then(|v| v.to_str().ok());
    let remaining_zero = header("x-ratelimit-remaining") == Some("0");
    let retry_after = header("retry-after").and_then(|v| v.trim().parse::<u64>().ok());
    if status == 429 || (status == 403 && (remaining_zero || retry_after.is_some())) {
        let reset_in = header("x-ratelimit-reset")
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(|reset| {
                let now = SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0);
                reset.saturating_sub(now)
            });
        return Err(Error::RateLimited {
            retry_after_secs: retry_after.or(reset_in),
        });
    }
    Err(Error::Fetch {
        url: url.to_string(),
        reason: format!("HTTP {status}"),
    })
}

#[derive(Deserialize)]
struct ApiCommit {
    commit: ApiCommitMeta,
    #[serde(default)]
    parents: Vec<ApiParent>,
    #[serde(default)]
    files: Vec<ApiFile>,
}

#[derive(Deserialize)]
struct ApiCommitMeta {
    #[serde(default)]
    message: String,
    committer: Option<ApiPerson>,
    author: Option<ApiPerson>,
}

#[derive(Deserialize)]
struct ApiPerson {
    #[serde(default)]
    date: String,
}

#[derive(Deserialize)]
struct ApiParent {
    sha: String,
}

#[derive(Deserialize)]
struct ApiFile {
    filename: String,
    #[serde(default)]
    status: String,
    #[serde(default)]
    patch: Option<String>,
    #[serde(default)]
    previous_filename: Option<String>,
}

#[derive(Deserialize)]
struct ApiIssue {
    #[serde(default)]
    title: String,
    #[serde(default)]
    body: Option<String>,
}

/// First `#<n>` issue reference in a commit message.
pub fn issue_reference(message: &str) -> Option<u64> {
    let bytes = message.as_bytes();
    for (i, _) in message.match_indices('#') {
        let preceded_ok = i == 0 || !bytes[i - 1].is_ascii_alphanumeric();
        let digits: String = message[i + 1..]
            .chars()
            .take_while(char::is_ascii_digit)
            .collect();
        if preceded_ok && !digits.is_empty() {
            return digits.parse().ok();
        }
    }
    None
}

/// GitHub REST client. Responses are cached under `cache_dir` when set, so
/// a second run replays without network access.
pub struct GithubClient {
    http: Client,
    api_base: Url,
    token: Option<String>,
    cache_dir: Option<PathBuf>,
    limiter: RateLimiter,
}

impl GithubClient {
    pub fn new(
        api_base: &str,
        token: Option<String>,
        cache_dir: Option<PathBuf>,
        min_interval: Duration,
        timeout: Duration,
    ) -> Result<Self> {
        let api_base = Url::parse(api_base)
            .map_err(|e| Error::Config(format!("bad API base {api_base:?}: {e}")))?;
        let http = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(GithubClient {
            http,
            api_base,
            token,
            cache_dir,
            limiter: RateLimiter::new(min_interval),
        })
    }

    /// Client for api.github.com with the token from `TRIAGE_COMMIT_TOKEN`.
    pub fn from_env(cache_dir: Option<PathBuf>) -> Result<Self> {
        let token = std::env::var(COMMIT_TOKEN_ENV).ok().filter(|t| !t.is_empty());
        Self::new(
            GITHUB_API,
            token,
            cache_dir,
            Duration::from_millis(750),
            Duration::from_secs(30),
        )
    }

    fn endpoint(&self, segments: &[&str]) -> Result<Url> {
        let mut url = self.api_base.clone();
        url.path_segments_mut()
            .map_err(|_| Error::Config("API base cannot be a base URL".into()))?
            .pop_if_empty()
            .extend(segments);
        Ok(url)
    }

    fn cache_path(&self, url: &Url, accept: &str) -> Option<PathBuf> {
        let dir = self.cache_dir.as_ref()?;
        let key = Sha256::digest(format!("{accept} {url}"));
        Some(dir.join(format!("{}.body", hex::encode(key))))
    }

    fn get(&self, url: Url, accept: &str) -> Result<String> {
        let cache = self.cache_path(&url, accept);
        if let Some(body) = cache.as_ref().and_then(|p| std::fs::read_to_string(p).ok()) {
            debug!("cache hit {url}");
            return Ok(body);
        }
        self.limiter.acquire();
        let mut req = self
            .http
            .get(url.clone())
            .header(ACCEPT, accept)
            .header(USER_AGENT, "triage-pipeline")
            .header("X-GitHub-Api-Version", "2022-11-28");
        if let Some(token) = &self.token {
            req = req.header(AUTHORIZATION, format!("Bearer {token}"));
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                Error::Timeout(0)
            } else {
                Error::Fetch {
                    url: url.to_string(),
                    reason: e.to_string(),
                }
            }
        })?;
        classify_response(url.as_str(), resp.status().as_u16(), resp.headers())?;
        let body = resp.text().map_err(|e| Error::Fetch {
            url: url.to_string(),
            reason: e.to_string(),
        })?;
        if let (Some(path), Some(dir)) = (&cache, &self.cache_dir) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            std::fs::write(path, &body).map_err(|e| Error::io(path, e))?;
        }
        Ok(body)
    }

    fn get_json<T: for<'de> Deserialize<'de>>(&self, url: Url) -> Result<T> {
        let body = self.get(url, "application/vnd.github+json")?;
        Ok(serde_json::from_str(&body)?)
    }

    fn issue_message(&self, target: &CommitUrl, number: u64) -> Option<String> {
        let n = number.to_string();
        let url = self
            .endpoint(&["repos", &target.owner, &target.repo, "issues", &n])
            .ok()?;
        match self.get_json::<ApiIssue>(url) {
            Ok(issue) => {
                let body = issue.body.unwrap_or_default();
                Some(if body.is_empty() {
                    issue.title
                } else {
                    format!("{}\n\n{}", issue.title, body)
                })
            }
            Err(e) => {
                debug!("{}: issue #{number} unavailable: {e}", target.canonical());
                None
            }
        }
    }
}

impl CommitClient for GithubClient {
    fn fetch(&self, target: &CommitUrl) -> Result<CommitData> {
        let url = self.endpoint(&["repos", &target.owner, &target.repo, "commits", &target.sha])?;
        let commit: ApiCommit = self.get_json(url)?;
        let parent = commit.parents.first().map(|p| p.sha.clone());

        let mut diff_text = String::new();
        let mut file_contents = BTreeMap::new();
        let mut unavailable = BTreeSet::new();
        for f in &commit.files {
            let old = f.previous_filename.as_deref().unwrap_or(&f.filename);
            let Some(patch) = &f.patch else {
                unavailable.insert(old.to_string());
                continue;
            };
            let old_header = if f.status == "added" {
                "/dev/null".to_string()
            } else {
                format!("a/{old}")
            };
            let new_header = if f.status == "removed" {
                "/dev/null".to_string()
            } else {
                format!("b/{}", f.filename)
            };
            diff_text.push_str(&format!(
                "diff --git a/{old} b/{}\n--- {old_header}\n+++ {new_header}\n{patch}",
                f.filename
            ));
            if !patch.ends_with('\n') {
                diff_text.push('\n');
            }
            if f.status == "added" {
                continue;
            }
            let content = parent.as_ref().map(|p| {
                let mut segs = vec!["repos", &target.owner, &target.repo, "contents"];
                segs.extend(old.split('/'));
                self.endpoint(&segs).and_then(|mut u| {
                    u.query_pairs_mut().append_pair("ref", p);
                    self.get(u, "application/vnd.github.raw")
                })
            });
            match content {
                Some(Ok(text)) => {
                    file_contents.insert(old.to_string(), text);
                }
                Some(Err(e)) if matches!(e, Error::RateLimited { .. }) => return Err(e),
                _ => {
                    unavailable.insert(old.to_string());
                }
            }
        }

        let meta = &commit.commit;
        let date = meta
            .committer
            .as_ref()
            .or(meta.author.as_ref())
            .map(|p| p.date.clone())
            .unwrap_or_default();
        let issue_message = issue_reference(&meta.message).and_then(|n| self.issue_message(target, n));

        Ok(CommitData {
            url: target.canonical(),
            date,
            diff_text,
            file_contents,
            unavailable,
            issue_message,
        })
    }
}
