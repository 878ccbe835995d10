//! Unified-diff parsing.
//!
//! Accepts `git diff` / `git format-patch` output as well as plain `diff -u`
//! output. Deleted lines carry pre-image line numbers, added lines carry
//! post-image numbers, both computed from the `@@` header offsets.

use crate::error::{Error, Result};
use crate::model::{Hunk, NumberedLine};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HunkHeader {
    pub old_start: u32,
    pub old_count: u32,
    pub new_start: u32,
    pub new_count: u32,
}

fn parse_range(text: &str) -> Option<(u32, u32)> {
    match text.split_once(',') {
        Some((start, count)) => Some((start.parse().ok()?, count.parse().ok()?)),
        None => Some((text.parse().ok()?, 1)),
    }
}

/// Parses `@@ -l[,s] +l[,s] @@[ section]`.
pub fn parse_hunk_header(line: &str) -> Option<HunkHeader> {
    let rest = line.strip_prefix("@@ -")?;
    let (ranges, _section) = rest.split_once(" @@")?;
    let (old, new) = ranges.split_once(" +")?;
    let (old_start, old_count) = parse_range(old)?;
    let (new_start, new_count) = parse_range(new)?;
    Some(HunkHeader {
        old_start,
        old_count,
        new_start,
        new_count,
    })
}

/// Path from a `---`/`+++` line, without the `a/`/`b/` prefix or a trailing
/// timestamp. `None` for `/dev/null`.
fn header_path(rest: &str) -> Option<String> {
    let path = rest.split('\t').next().unwrap_or(rest).trim_end();
    let path = path
        .strip_prefix('"')
        .and_then(|p| p.strip_suffix('"'))
        .unwrap_or(path);
    if path == "/dev/null" {
        return None;
    }
    let path = path
        .strip_prefix("a/")
        .or_else(|| path.strip_prefix("b/"))
        .unwrap_or(path);
    Some(path.to_string())
}

fn strip_eol(line: &str) -> &str {
    let line = line.strip_suffix('\n').unwrap_or(line);
    line.strip_suffix('\r').unwrap_or(line)
}

struct OpenHunk {
    hunk: Hunk,
    header: HunkHeader,
    old_line: u32,
    new_line: u32,
    old_seen: u32,
    new_seen: u32,
}

impl OpenHunk {
    fn complete(&self) -> bool {
        self.old_seen == self.header.old_count && self.new_seen == self.header.new_count
    }
}

fn syntax(line: usize, reason: impl Into<String>) -> Error {
    Error::DiffSyntax {
        line,
        reason: reason.into(),
    }
}

fn close(open: OpenHunk, lineno: usize, out: &mut Vec<Hunk>) -> Result<()> {
    if !open.complete() {
        return Err(syntax(
            lineno,
            format!(
                "hunk {} declares -{} +{} lines but has -{} +{}",
                open.hunk.header,
                open.header.old_count,
                open.header.new_count,
                open.old_seen,
                open.new_seen
            ),
        ));
    }
    if open.hunk.deleted_lines.is_empty() && open.hunk.added_lines.is_empty() {
        return Err(syntax(lineno, format!("hunk {} changes nothing", open.hunk.header)));
    }
    out.push(open.hunk);
    Ok(())
}

/// One [`Hunk`] per `@@` section, in diff order.
pub fn parse_unified_diff(diff_text: &str) -> Result<Vec<Hunk>> {
    let mut hunks = Vec::new();
    let mut old_path: Option<String> = None;
    let mut new_path: Option<String> = None;
    let mut open: Option<OpenHunk> = None;

    for (idx, raw) in diff_text.split_inclusive('\n').enumerate() {
        let lineno = idx + 1;
        let line = strip_eol(raw);

        if let Some(h) = open.as_mut() {
            if !h.complete() {
                let (tag, text) = match line.chars().next() {
                    Some(c @ (' ' | '-' | '+')) => (c, &line[1..]),
                    // Some tools drop the leading space of blank context lines.
                    None => (' ', ""),
                    Some('\\') => {
                        h.hunk.body.push_str(raw);
                        continue;
                    }
                    Some(_) => {
                        return Err(syntax(lineno, format!("unexpected line inside hunk: {line:?}")))
                    }
                };
                match tag {
                    '-' => {
                        h.hunk
                            .deleted_lines
                            .push(NumberedLine::new(h.old_line, text));
                        h.old_line += 1;
                        h.old_seen += 1;
                    }
                    '+' => {
                        h.hunk.added_lines.push(NumberedLine::new(h.new_line, text));
                        h.new_line += 1;
                        h.new_seen += 1;
                    }
                    _ => {
                        h.old_line += 1;
                        h.new_line += 1;
                        h.old_seen += 1;
                        h.new_seen += 1;
                    }
                }
                if h.old_seen > h.header.old_count || h.new_seen > h.header.new_count {
                    return Err(syntax(lineno, format!("hunk {} overruns its header", h.hunk.header)));
                }
                h.hunk.body.push_str(raw);
                continue;
            }
            if line.starts_with('\\') {
                h.hunk.body.push_str(raw);
                continue;
            }
            close(open.take().expect("open hunk"), lineno, &mut hunks)?;
        }

        if line.starts_with("@@ ") {
            let header = parse_hunk_header(line)
                .ok_or_else(|| syntax(lineno, format!("bad hunk header {line:?}")))?;
            let filename = old_path
                .clone()
                .or_else(|| new_path.clone())
                .ok_or_else(|| syntax(lineno, "hunk before any file header"))?;
            open = Some(OpenHunk {
                hunk: Hunk {
                    filename,
                    header: line.to_string(),
                    deleted_lines: Vec::new(),
                    added_lines: Vec::new(),
                    body: String::new(),
                },
                header,
                old_line: header.old_start,
                new_line: header.new_start,
                old_seen: 0,
                new_seen: 0,
            });
        } else if let Some(rest) = line.strip_prefix("--- ") {
            old_path = header_path(rest);
            new_path = None;
        } else if let Some(rest) = line.strip_prefix("+++ ") {
            new_path = header_path(rest);
        } else if line.starts_with("diff ") {
            old_path = None;
            new_path = None;
        } else if line == "-- " {
            // format-patch signature separator
            break;
        } else if line.starts_with(['+', '-'])
            && line != "---"
            && (old_path.is_some() || new_path.is_some())
        {
            return Err(syntax(
                lineno,
                format!("change line outside any hunk (header count mismatch?): {line:?}"),
            ));
        }
        // Anything else is preamble or git metadata (index, mode, rename, Binary files).
    }
    if let Some(h) = open {
        let end = diff_text.lines().count();
        close(h, end, &mut hunks)?;
    }
    Ok(hunks)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIMPLE: &str = "\
diff --git a/src/app.c b/src/app.c
index 83db48f..bf269f4 100644
--- a/src/app.c
+++ b/src/app.c
@@ -10,3 +10,2 @@ int main(void)
 keep();
-    free(p);
 use(p);
";

    #[test]
    fn offset_arithmetic() {
        let hunks = parse_unified_diff(SIMPLE).unwrap();
        assert_eq!(hunks.len(), 1);
        let h = &hunks[0];
        assert_eq!(h.filename, "src/app.c");
        assert_eq!(h.header, "@@ -10,3 +10,2 @@ int main(void)");
        assert_eq!(h.deleted_lines, vec![NumberedLine::new(11, "    free(p);")]);
        assert!(h.added_lines.is_empty());
        assert_eq!(h.body, " keep();\n-    free(p);\n use(p);\n");
    }

    #[test]
    fn additions_only() {
        let d = "--- a/x.py\n+++ b/x.py\n@@ -3,0 +4,2 @@\n+a\n+b\n";
        let h = &parse_unified_diff(d).unwrap()[0];
        assert!(h.deleted_lines.is_empty());
        assert_eq!(
            h.added_lines,
            vec![NumberedLine::new(4, "a"), NumberedLine::new(5, "b")]
        );
    }

    #[test]
    fn count_mismatch_is_error() {
        let short = "--- a/x\n+++ b/x\n@@ -1,3 +1,3 @@\n a\n-b\n+c\n";
        assert!(matches!(
            parse_unified_diff(short),
            Err(Error::DiffSyntax { .. })
        ));
        let long = "--- a/x\n+++ b/x\n@@ -1,1 +1,1 @@\n-a\n+b\n-c\n";
        assert!(matches!(parse_unified_diff(long), Err(Error::DiffSyntax { .. })));
        let garbage = "--- a/x\n+++ b/x\n@@ -1,2 +1,2 @@\n-a\n*b\n";
        assert!(parse_unified_diff(garbage).is_err());
        assert!(parse_unified_diff("@@ -1 +1 @@\n-a\n+b\n").is_err());
        assert!(parse_unified_diff("--- a/x\n+++ b/x\n@@ -1,x +1 @@\n").is_err());
    }

    #[test]
    fn default_counts_and_multiple_files() {
        let d = "\
diff --git a/a.rb b/a.rb
--- a/a.rb
+++ b/a.rb
@@ -5 +5 @@ def x
-old
+new
@@ -20,2 +20,3 @@
 ctx
+ins
 ctx2
diff --git a/b.go b/b.go
new file mode 100644
--- /dev/null
+++ b/b.go
@@ -0,0 +1,1 @@
+package b
";
        let hunks = parse_unified_diff(d).unwrap();
        assert_eq!(hunks.len(), 3);
        assert_eq!(hunks[0].deleted_lines, vec![NumberedLine::new(5, "old")]);
        assert_eq!(hunks[0].added_lines, vec![NumberedLine::new(5, "new")]);
        assert_eq!(hunks[1].added_lines, vec![NumberedLine::new(21, "ins")]);
        assert_eq!(hunks[2].filename, "b.go");
        assert_eq!(hunks[2].added_lines, vec![NumberedLine::new(1, "package b")]);
    }

    #[test]
    fn no_newline_marker_and_timestamps() {
        let d = "--- old/f.txt\t2024-01-01 00:00:00\n+++ new/f.txt\t2024-01-02\n@@ -1,2 +1,2 @@\n a\n-b\n\\ No newline at end of file\n+c\n\\ No newline at end of file\n";
        let h = &parse_unified_diff(d).unwrap()[0];
        assert_eq!(h.filename, "old/f.txt");
        assert_eq!(h.deleted_lines, vec![NumberedLine::new(2, "b")]);
        assert_eq!(h.added_lines, vec![NumberedLine::new(2, "c")]);
    }

    #[test]
    fn preamble_and_signature_ignored() {
        let d = "From abc Mon Sep 17 00:00:00 2001\nSubject: [PATCH] fix\n\n---\n x | 2 +-\n\ndiff --git a/x b/x\n--- a/x\n+++ b/x\n@@ -1 +1 @@\n-a\n+b\n-- \n2.40.0\n";
        let hunks = parse_unified_diff(d).unwrap();
        assert_eq!(hunks.len(), 1);
    }

    #[test]
    fn crlf_lines() {
        let d = "--- a/w.php\r\n+++ b/w.php\r\n@@ -1,2 +1,1 @@\r\n-echo $x;\r\n ok();\r\n";
        let h = &parse_unified_diff(d).unwrap()[0];
        assert_eq!(h.deleted_lines, vec![NumberedLine::new(1, "echo $x;")]);
    }

    #[test]
    fn pure_context_hunk_rejected() {
        let d = "--- a/x\n+++ b/x\n@@ -1,1 +1,1 @@\n a\n";
        assert!(parse_unified_diff(d).is_err());
    }
}
