//! Shared fixtures for the integration tests: the multi-language source
//! corpus, an independent extraction oracle, and on-disk pipeline inputs.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde_json::json;
use triage_core::extraction::{parse_source, ExtractionConfig, LanguageId};
use triage_core::ingestion::{CommitData, CommitUrl, FixtureCommitClient};
use triage_core::model::{BuggyFile, Hunk, NumberedLine};
use triage_core::pipeline::PipelineConfig;

pub fn corpus_root() -> PathBuf {
    // Also reached from sibling crates through a path include.
    let here = Path::new(env!("CARGO_MANIFEST_DIR"));
    let own = here.join("tests/fixtures/corpus");
    if own.is_dir() {
        return own;
    }
    here.join("../core/tests/fixtures/corpus")
}

#[derive(Debug, Clone)]
pub struct CorpusFile {
    pub language: String,
    /// Repository-relative path, as it appears in the diff headers.
    pub name: String,
    pub pre: String,
    pub post: String,
    pub diff: String,
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            walk(&p, out);
        } else {
            out.push(p);
        }
    }
}

/// Every corpus file, ordered by language then path.
pub fn corpus() -> Vec<CorpusFile> {
    let root = corpus_root();
    let mut langs: Vec<_> = std::fs::read_dir(&root)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    langs.sort();
    let mut out = Vec::new();
    for lang_dir in langs {
        let language = lang_dir.file_name().unwrap().to_string_lossy().to_string();
        let pre_root = lang_dir.join("pre");
        let mut files = Vec::new();
        walk(&pre_root, &mut files);
        for pre_path in files {
            let name = pre_path
                .strip_prefix(&pre_root)
                .unwrap()
                .to_string_lossy()
                .replace('\\', "/");
            let read = |p: PathBuf| std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            out.push(CorpusFile {
                pre: read(pre_path.clone()),
                post: read(lang_dir.join("post").join(&name)),
                diff: read(lang_dir.join("diff").join(format!("{name}.diff"))),
                language: language.clone(),
                name,
            });
        }
    }
    out
}

/// Indices of corpus files with at least one deleted line inside a method.
pub fn method_files() -> Vec<usize> {
    corpus()
        .iter()
        .enumerate()
        .filter(|(_, f)| {
            let hunks = triage_core::ingestion::parse_unified_diff(&f.diff).unwrap();
            let file = buggy_file(&f.name, &f.pre, &hunks);
            let found = triage_core::extraction::extract_methods(&file, language_of(&f.language)).unwrap();
            !found.methods.is_empty()
        })
        .map(|(i, _)| i)
        .collect()
}

/// Deleted lines of `hunks` as the buggy lines of `pre`.
pub fn buggy_file(name: &str, pre: &str, hunks: &[Hunk]) -> BuggyFile {
    let mut lines: Vec<NumberedLine> = hunks.iter().flat_map(|h| h.deleted_lines.clone()).collect();
    lines.sort_by_key(|l| l.line_number);
    BuggyFile {
        filename: name.to_string(),
        content: pre.to_string(),
        buggy_lines: lines,
    }
}

/// One expected method: start line, end line, body.
pub type Span = (u32, u32, String);

/// Brute force: visit every node of the tree, keep definition nodes whose
/// line span contains the buggy line, and take the one with the fewest
/// lines, then the fewest bytes, then the earliest start.
pub fn oracle_methods(file: &BuggyFile, language: LanguageId, config: &ExtractionConfig) -> (Vec<Span>, Vec<u32>) {
    let tree = parse_source(&file.filename, &file.content, language).unwrap();
    let kinds: BTreeSet<&str> = config.definition_kinds(language).iter().map(String::as_str).collect();

    // (start line, end line, byte length, start byte) of every definition.
    let mut defs = Vec::new();
    let mut cursor = tree.walk();
    loop {
        let node = cursor.node();
        if kinds.contains(node.kind()) {
            let start = node.start_position().row as u32 + 1;
            let end_row = node.end_position().row as u32 + 1;
            let end = if node.end_position().column == 0 && end_row > start {
                end_row - 1
            } else {
                end_row
            };
            defs.push((start, end, node.end_byte() - node.start_byte(), node.start_byte()));
        }
        if cursor.goto_first_child() {
            continue;
        }
        loop {
            if cursor.goto_next_sibling() {
                break;
            }
            if !cursor.goto_parent() {
                return finish(file, &defs);
            }
        }
    }
}

fn finish(file: &BuggyFile, defs: &[(u32, u32, usize, usize)]) -> (Vec<Span>, Vec<u32>) {
    let lines: Vec<&str> = file.content.lines().collect();
    let mut spans = BTreeSet::new();
    let mut unmatched = Vec::new();
    for bl in &file.buggy_lines {
        let n = bl.line_number;
        let best = defs
            .iter()
            .filter(|(s, e, _, _)| *s <= n && n <= *e)
            .min_by_key(|(s, e, len, at)| (e - s, *len, *at));
        match best {
            Some((s, e, _, _)) => {
                spans.insert((*s, *e));
            }
            None => unmatched.push(n),
        }
    }
    let out = spans
        .into_iter()
        .map(|(s, e)| (s, e, lines[(s - 1) as usize..e as usize].join("\n")))
        .collect();
    (out, unmatched)
}

/// Rebuilds the post-image from the pre-image and the parsed line numbers
/// alone: drop deleted pre-image lines, then place added lines at their
/// post-image numbers and fill the gaps with the surviving lines in order.
pub fn replay(pre: &str, hunks: &[Hunk]) -> String {
    let deleted: BTreeSet<u32> = hunks
        .iter()
        .flat_map(|h| h.deleted_lines.iter().map(|l| l.line_number))
        .collect();
    let added: BTreeMap<u32, &str> = hunks
        .iter()
        .flat_map(|h| h.added_lines.iter().map(|l| (l.line_number, l.line.as_str())))
        .collect();
    let mut kept = pre
        .lines()
        .enumerate()
        .filter(|(i, _)| !deleted.contains(&(*i as u32 + 1)))
        .map(|(_, l)| l);
    let total = pre.lines().count() - deleted.len() + added.len();
    let mut out = String::new();
    for n in 1..=total as u32 {
        let line = match added.get(&n) {
            Some(l) => *l,
            None => kept.next().expect("enough surviving lines"),
        };
        out.push_str(line);
        out.push('\n');
    }
    assert!(kept.next().is_none(), "surviving lines left over");
    out
}

/// One synthetic CVE for the pipeline fixtures.
#[derive(Debug, Clone)]
pub struct Spec {
    pub cve: String,
    pub description: String,
    pub date: String,
    /// `None`: no ground-truth entry at all.
    pub cwes: Option<Vec<String>>,
    /// (version, label, score); an empty list means no severity.
    pub severities: Vec<(Option<String>, Option<String>, Option<f64>)>,
    /// Corpus files changed by the commit (indices into [`corpus`]).
    pub files: Vec<usize>,
    /// Extra (path, pre, diff) files outside the corpus.
    pub extra_files: Vec<(String, String, String)>,
    pub commit_url: bool,
    pub commit_recorded: bool,
}

impl Spec {
    /// A record that passes every filter and serves every variant; `files`
    /// should come from [`method_files`].
    pub fn valid(i: usize, files: &[usize]) -> Spec {
        let scores = [9.8, 7.5, 5.3, 2.1, 8.8, 6.1, 4.3, 9.1, 3.7, 7.0];
        let score = scores[i % scores.len()];
        let label = match score {
            s if s >= 9.0 => "CRITICAL",
            s if s >= 7.0 => "HIGH",
            s if s >= 4.0 => "MEDIUM",
            _ => "LOW",
        };
        Spec {
            cve: format!("CVE-2022-{:04}", 1000 + i),
            description: format!("Fixture vulnerability number {i} allows a remote attacker to corrupt state."),
            date: format!("2022-{:02}-{:02}T10:00:00Z", 1 + i % 12, 1 + i % 28),
            cwes: Some(vec![format!("CWE-{}", 100 + i), format!("CWE-{}", 20 + i % 3)]),
            severities: vec![(Some("3.1".into()), Some(label.into()), Some(score))],
            files: vec![files[i % files.len()]],
            extra_files: vec![],
            commit_url: true,
            commit_recorded: true,
        }
    }

    pub fn sha(&self) -> String {
        let digits: String = self.cve.chars().filter(char::is_ascii_digit).collect();
        format!("{:0>40}", format!("{digits}abc"))
    }

    pub fn url(&self) -> String {
        format!("https://github.com/fixture/project/commit/{}", self.sha())
    }
}

pub struct FixtureInputs {
    pub feed: PathBuf,
    pub cve2cwe: PathBuf,
    pub commits: PathBuf,
}

/// Writes a feed, a ground-truth file and recorded commits under `dir`.
pub fn write_fixture(dir: &Path, specs: &[Spec]) -> FixtureInputs {
    let corpus = corpus();
    let commits = dir.join("commits");
    let client = FixtureCommitClient::new(&commits);
    let mut vulns = Vec::new();
    let mut store = serde_json::Map::new();
    for s in specs {
        let mut refs = vec![json!({"url": "https://example.org/advisory"})];
        if s.commit_url {
            refs.push(json!({"url": s.url()}));
        }
        let weaknesses: Vec<_> = s
            .cwes
            .iter()
            .flatten()
            .map(|c| json!({"description": [{"lang": "en", "value": c}]}))
            .collect();
        vulns.push(json!({"cve": {
            "id": s.cve,
            "descriptions": [{"lang": "en", "value": s.description}],
            "references": refs,
            "weaknesses": weaknesses,
        }}));
        if let Some(cwes) = &s.cwes {
            let sev: Vec<_> = s
                .severities
                .iter()
                .map(|(v, l, sc)| json!({"version": v, "label": l, "score": sc}))
                .collect();
            store.insert(s.cve.clone(), json!({"cwes": cwes, "severities": sev}));
        }
        if s.commit_url && s.commit_recorded {
            let mut diff = String::new();
            let mut contents = BTreeMap::new();
            for &i in &s.files {
                let f = &corpus[i];
                diff.push_str(&format!("diff --git a/{0} b/{0}\n", f.name));
                diff.push_str(&f.diff);
                contents.insert(f.name.clone(), f.pre.clone());
            }
            for (name, pre, d) in &s.extra_files {
                diff.push_str(&format!("diff --git a/{name} b/{name}\n"));
                diff.push_str(d);
                contents.insert(name.clone(), pre.clone());
            }
            let data = CommitData {
                url: s.url(),
                date: s.date.clone(),
                diff_text: diff,
                file_contents: contents,
                unavailable: BTreeSet::new(),
                issue_message: None,
            };
            client.record(&CommitUrl::parse(&s.url()).unwrap(), &data).unwrap();
        }
    }
    let feed = dir.join("feed.json");
    std::fs::write(&feed, serde_json::to_vec_pretty(&json!({"vulnerabilities": vulns})).unwrap()).unwrap();
    let cve2cwe = dir.join("cve2cwe.json");
    std::fs::write(&cve2cwe, serde_json::to_vec_pretty(&store).unwrap()).unwrap();
    FixtureInputs { feed, cve2cwe, commits }
}

/// Pipeline configuration rooted at `dir`, reading commits from `commits`.
pub fn config(dir: &Path, commits: &Path) -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.paths.dataset_dir = dir.join("dataset");
    c.paths.results_dir = dir.join("results");
    c.paths.reports_dir = dir.join("reports");
    c.paths.finetune_dir = dir.join("finetune");
    c.commits.fixtures_dir = Some(commits.to_path_buf());
    c.commits.max_retries = 0;
    c.commits.backoff_ms = 0;
    c.provider.max_retries = 0;
    c.provider.backoff_ms = 0;
    c.validate().unwrap();
    c
}

/// Every file under `dir` with its bytes, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = Vec::new();
    walk(dir, &mut files);
    files
        .into_iter()
        .map(|p| {
            let rel = p.strip_prefix(dir).unwrap().to_string_lossy().to_string();
            (rel, std::fs::read(&p).unwrap())
        })
        .collect()
}

pub fn language_of(dir_name: &str) -> LanguageId {
    dir_name.parse().unwrap_or_else(|_| panic!("unknown corpus language {dir_name}"))
}
