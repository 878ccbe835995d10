use std::collections::BTreeMap;

use log::warn;

use crate::ingestion::commit::CommitData;
use crate::ingestion::diff::parse_unified_diff;
use crate::ingestion::nvd::RawCveEntry;
use crate::model::{BuggyFile, EnrichedRecord, Hunk, NumberedLine};

/// Combines a feed entry with its fetched commit.
///
/// Files are the diff's files whose pre-change content is available, in diff
/// order; their buggy lines are exactly the diff's deleted lines. Hunks on
/// files without pre-change content (new files, binaries) are dropped.
/// Methods are left empty for the extraction step. A diff that does not
/// parse yields a record with no code, which the validity filter rejects.
pub fn assemble_record(entry: &RawCveEntry, commit: &CommitData) -> EnrichedRecord {
    let hunks = match parse_unified_diff(&commit.diff_text) {
        Ok(h) => h,
        Err(e) => {
            warn!("{}: unparseable diff from {}: {e}", entry.cve, commit.url);
            Vec::new()
        }
    };

    let mut order: Vec<&str> = Vec::new();
    let mut deleted: BTreeMap<&str, Vec<NumberedLine>> = BTreeMap::new();
    for h in &hunks {
        if !order.contains(&h.filename.as_str()) {
            order.push(&h.filename);
        }
        deleted
            .entry(&h.filename)
            .or_default()
            .extend(h.deleted_lines.iter().cloned());
    }

    let buggy_code: Vec<BuggyFile> = order
        .iter()
        .filter_map(|name| {
            let content = commit.file_contents.get(*name)?;
            let mut buggy_lines = deleted.remove(name).unwrap_or_default();
            buggy_lines.sort_by_key(|l| l.line_number);
            buggy_lines.dedup_by_key(|l| l.line_number);
            Some(BuggyFile {
                filename: name.to_string(),
                content: content.clone(),
                buggy_lines,
            })
        })
        .collect();

    let hunks: Vec<Hunk> = hunks
        .into_iter()
        .filter(|h| buggy_code.iter().any(|f| f.filename == h.filename))
        .collect();

    EnrichedRecord {
        cve: entry.cve.clone(),
        description: entry.description.clone(),
        url: commit.url.clone(),
        date: commit.date.clone(),
        github_description: commit.issue_message.clone(),
        buggy_code,
        hunks,
        methods: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn entry(description: &str) -> RawCveEntry {
        RawCveEntry {
            cve: "CVE-2022-1111".into(),
            description: description.into(),
            reference_urls: vec![],
            cwe_texts: vec![],
            cvss_entries: vec![],
        }
    }

    fn commit(diff: &str, files: &[(&str, &str)]) -> CommitData {
        CommitData {
            url: "https://github.com/o/r/commit/1234567".into(),
            date: "2022-03-04T05:06:07Z".into(),
            diff_text: diff.into(),
            file_contents: files.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            unavailable: BTreeSet::new(),
            issue_message: Some("Issue title".into()),
        }
    }

    const TWO_FILES: &str = "\
--- a/a.py
+++ b/a.py
@@ -2,2 +2,1 @@
-bad()
 ok()
--- a/b.py
+++ b/b.py
@@ -1,1 +1,1 @@
-x = 1
+x = 2
";

    #[test]
    fn two_files() {
        let c = commit(TWO_FILES, &[("a.py", "a()\nbad()\nok()\n"), ("b.py", "x = 1\n")]);
        let r = assemble_record(&entry("desc"), &c);
        assert_eq!(r.buggy_code.len(), 2);
        assert_eq!(r.buggy_code[0].buggy_lines, vec![NumberedLine::new(2, "bad()")]);
        assert_eq!(r.buggy_code[1].buggy_lines, vec![NumberedLine::new(1, "x = 1")]);
        assert_eq!(r.hunks.len(), 2);
        assert_eq!(r.github_description.as_deref(), Some("Issue title"));
        assert_eq!(r.date, "2022-03-04T05:06:07Z");
        assert_eq!(r.buggy_code[0].content, "a()\nbad()\nok()\n");
        r.validate().unwrap();
    }

    #[test]
    fn additions_only() {
        let diff = "--- a/a.py\n+++ b/a.py\n@@ -1,0 +2,1 @@\n+check()\n";
        let r = assemble_record(&entry("d"), &commit(diff, &[("a.py", "a()\n")]));
        assert_eq!(r.buggy_code.len(), 1);
        assert!(r.buggy_code[0].buggy_lines.is_empty());
    }

    #[test]
    fn empty_description_and_bad_diff() {
        let r = assemble_record(&entry(""), &commit("@@ garbage", &[]));
        assert!(r.description.is_empty());
        assert!(r.buggy_code.is_empty() && r.hunks.is_empty());
    }

    #[test]
    fn new_files_dropped() {
        let diff = "--- /dev/null\n+++ b/new.py\n@@ -0,0 +1,1 @@\n+x\n";
        let r = assemble_record(&entry("d"), &commit(diff, &[]));
        assert!(r.buggy_code.is_empty() && r.hunks.is_empty());
    }
}
