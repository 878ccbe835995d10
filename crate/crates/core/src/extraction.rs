//! Language detection and extraction of the functions that enclose buggy lines.
//!
//! Files are parsed with the bundled tree-sitter grammars. A "method" is any
//! node whose kind appears in the per-language definition table; for each
//! buggy line the smallest such node containing it is reported.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use log::debug;
use serde::{Deserialize, Serialize};
use tree_sitter::{Language, Node, Parser, Tree};

use crate::error::{Error, Result};
use crate::model::{BuggyFile, EnrichedRecord, MethodSnippet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LanguageId {
    C,
    Cpp,
    Go,
    Java,
    Javascript,
    Typescript,
    Ruby,
    Python,
    Php,
}

impl LanguageId {
    pub const ALL: [LanguageId; 9] = [
        LanguageId::C,
        LanguageId::Cpp,
        LanguageId::Go,
        LanguageId::Java,
        LanguageId::Javascript,
        LanguageId::Typescript,
        LanguageId::Ruby,
        LanguageId::Python,
        LanguageId::Php,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LanguageId::C => "c",
            LanguageId::Cpp => "cpp",
            LanguageId::Go => "go",
            LanguageId::Java => "java",
            LanguageId::Javascript => "javascript",
            LanguageId::Typescript => "typescript",
            LanguageId::Ruby => "ruby",
            LanguageId::Python => "python",
            LanguageId::Php => "php",
        }
    }

    fn grammar(self, filename: &str) -> Language {
        match self {
            LanguageId::C => tree_sitter_c::LANGUAGE.into(),
            LanguageId::Cpp => tree_sitter_cpp::LANGUAGE.into(),
            LanguageId::Go => tree_sitter_go::LANGUAGE.into(),
            LanguageId::Java => tree_sitter_java::LANGUAGE.into(),
            LanguageId::Javascript => tree_sitter_javascript::LANGUAGE.into(),
            LanguageId::Typescript if extension(filename) == Some("tsx") => {
                tree_sitter_typescript::LANGUAGE_TSX.into()
            }
            LanguageId::Typescript => tree_sitter_typescript::LANGUAGE_TYPESCRIPT.into(),
            LanguageId::Ruby => tree_sitter_ruby::LANGUAGE.into(),
            LanguageId::Python => tree_sitter_python::LANGUAGE.into(),
            LanguageId::Php => tree_sitter_php::LANGUAGE_PHP.into(),
        }
    }
}

impl fmt::Display for LanguageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LanguageId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        LanguageId::ALL
            .into_iter()
            .find(|l| l.as_str() == lower)
            .ok_or_else(|| Error::Config(format!("unknown language {s:?}")))
    }
}

fn extension(filename: &str) -> Option<&str> {
    let base = filename.rsplit(['/', '\\']).next().unwrap_or(filename);
    let (stem, ext) = base.rsplit_once('.')?;
    (!stem.is_empty()).then_some(ext)
}

/// Extension and definition-node tables. Both can be overridden from the
/// main config file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionConfig {
    /// Lowercase extension (no dot) to language.
    pub extensions: BTreeMap<String, LanguageId>,
    /// Node kinds that count as a function/method definition.
    pub node_kinds: BTreeMap<LanguageId, Vec<String>>,
    /// Extensions of files that are not code (docs, data, manifests). They do
    /// not need a supported language and never contribute methods.
    pub non_code_extensions: BTreeSet<String>,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        use LanguageId::*;
        let extensions = [
            ("c", C),
            ("h", C),
            ("cc", Cpp),
            ("cpp", Cpp),
            ("hpp", Cpp),
            ("hh", Cpp),
            ("cxx", Cpp),
            ("hxx", Cpp),
            ("go", Go),
            ("java", Java),
            ("js", Javascript),
            ("jsx", Javascript),
            ("mjs", Javascript),
            ("cjs", Javascript),
            ("ts", Typescript),
            ("tsx", Typescript),
            ("mts", Typescript),
            ("cts", Typescript),
            ("rb", Ruby),
            ("py", Python),
            ("php", Php),
        ]
        .into_iter()
        .map(|(e, l)| (e.to_string(), l))
        .collect();

        let js_like: &[&str] = &[
            "function_declaration",
            "function_expression",
            "generator_function_declaration",
            "generator_function",
            "arrow_function",
            "method_definition",
        ];
        let node_kinds = [
            (C, &["function_definition"][..]),
            (Cpp, &["function_definition", "lambda_expression"][..]),
            (
                Go,
                &["function_declaration", "method_declaration", "func_literal"][..],
            ),
            (
                Java,
                &[
                    "method_declaration",
                    "constructor_declaration",
                    "compact_constructor_declaration",
                    "lambda_expression",
                ][..],
            ),
            (Javascript, js_like),
            (Typescript, js_like),
            (Ruby, &["method", "singleton_method", "lambda"][..]),
            (Python, &["function_definition", "lambda"][..]),
            (
                Php,
                &[
                    "function_definition",
                    "method_declaration",
                    "anonymous_function",
                    "arrow_function",
                ][..],
            ),
        ]
        .into_iter()
        .map(|(l, kinds)| (l, kinds.iter().map(|k| k.to_string()).collect()))
        .collect();

        let non_code_extensions = [
            "md", "markdown", "rst", "txt", "adoc", "json", "yml", "yaml", "toml", "xml", "lock",
            "ini", "cfg", "conf", "csv", "svg", "png", "jpg", "jpeg", "gif", "ico", "po", "pot",
            "mo", "neon", "dist", "gitignore", "gitattributes",
        ]
        .into_iter()
        .map(String::from)
        .collect();

        ExtractionConfig {
            extensions,
            node_kinds,
            non_code_extensions,
        }
    }
}

impl ExtractionConfig {
    /// Language of a file by extension; `None` means unsupported.
    pub fn detect_language(&self, filename: &str) -> Option<LanguageId> {
        let ext = extension(filename)?.to_ascii_lowercase();
        self.extensions.get(&ext).copied()
    }

    pub fn is_code_file(&self, filename: &str) -> bool {
        match extension(filename) {
            Some(ext) => !self.non_code_extensions.contains(&ext.to_ascii_lowercase()),
            // Extensionless files (Makefile, scripts) are treated as code.
            None => true,
        }
    }

    pub fn definition_kinds(&self, language: LanguageId) -> &[String] {
        self.node_kinds.get(&language).map_or(&[], Vec::as_slice)
    }

    fn is_definition(&self, language: LanguageId, kind: &str) -> bool {
        self.definition_kinds(language).iter().any(|k| k == kind)
    }
}

/// [`ExtractionConfig::detect_language`] with the default tables.
pub fn detect_language(filename: &str) -> Option<LanguageId> {
    ExtractionConfig::default().detect_language(filename)
}

/// Parses `content` with the grammar for `language`.
pub fn parse_source(filename: &str, content: &str, language: LanguageId) -> Result<Tree> {
    let mut parser = Parser::new();
    parser
        .set_language(&language.grammar(filename))
        .map_err(|e| Error::ParseFailure(format!("{filename}: {e}")))?;
    parser
        .parse(content, None)
        .ok_or_else(|| Error::ParseFailure(filename.to_string()))
}

/// 1-based inclusive line span of a node. A node that ends at column 0 of a
/// line really ends on the previous one.
pub fn node_lines(node: Node<'_>) -> (u32, u32) {
    let start = node.start_position().row as u32 + 1;
    let end_pos = node.end_position();
    let mut end = end_pos.row as u32 + 1;
    if end_pos.column == 0 && end > start {
        end -= 1;
    }
    (start, end)
}

/// Orders candidate definitions so the innermost one sorts first.
pub fn innermost_key(node: Node<'_>) -> (u32, usize, usize) {
    let (start, end) = node_lines(node);
    (end - start, node.end_byte() - node.start_byte(), node.start_byte())
}

/// Lines `start..=end` (1-based) of `content`, without the final line break.
pub fn slice_lines(content: &str, start: u32, end: u32) -> &str {
    let mut offset = 0usize;
    let mut from = None;
    for (idx, line) in content.split_inclusive('\n').enumerate() {
        let n = idx as u32 + 1;
        if n == start {
            from = Some(offset);
        }
        offset += line.len();
        if n == end {
            let stop = offset - line_terminator_len(line);
            return &content[from.unwrap_or(stop)..stop];
        }
    }
    from.map_or("", |f| &content[f..])
}

fn line_terminator_len(line: &str) -> usize {
    if line.ends_with("\r\n") {
        2
    } else if line.ends_with('\n') {
        1
    } else {
        0
    }
}

fn method_name(node: Node<'_>, src: &[u8]) -> String {
    let text = |n: Node<'_>| n.utf8_text(src).unwrap_or_default().to_string();
    if let Some(name) = node.child_by_field_name("name") {
        return text(name);
    }
    // C-family: walk the declarator chain down to the identifier.
    let mut cursor = node.child_by_field_name("declarator");
    let mut last = None;
    while let Some(d) = cursor {
        last = Some(d);
        cursor = d.child_by_field_name("declarator");
    }
    if let Some(d) = last {
        let kind = d.kind();
        if kind.ends_with("identifier") || matches!(kind, "destructor_name" | "operator_name") {
            return text(d);
        }
    }
    // Anonymous functions bound to a name: `const f = () => ...`, `key: function() {}`.
    if let Some(parent) = node.parent() {
        let field = match parent.kind() {
            "variable_declarator" => parent.child_by_field_name("name"),
            "pair" => parent.child_by_field_name("key"),
            _ => None,
        };
        if let Some(n) = field {
            return text(n);
        }
    }
    String::new()
}

/// Methods found for one file, plus the buggy lines no definition encloses.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FileExtraction {
    pub methods: Vec<MethodSnippet>,
    pub unmatched_lines: Vec<u32>,
}

fn innermost_definition<'t>(
    root: Node<'t>,
    line: u32,
    language: LanguageId,
    config: &ExtractionConfig,
) -> Option<Node<'t>> {
    let mut best: Option<Node<'t>> = None;
    let mut stack = vec![root];
    while let Some(node) = stack.pop() {
        if config.is_definition(language, node.kind())
            && best.is_none_or(|b| innermost_key(node) < innermost_key(b))
        {
            best = Some(node);
        }
        let mut cursor = node.walk();
        for child in node.children(&mut cursor) {
            let (s, e) = node_lines(child);
            if s <= line && line <= e {
                stack.push(child);
            }
        }
    }
    best
}

/// For each buggy line, the innermost definition node containing it.
/// Results are deduplicated and ordered by start line.
pub fn extract_methods_with(
    file: &BuggyFile,
    language: LanguageId,
    config: &ExtractionConfig,
) -> Result<FileExtraction> {
    let tree = parse_source(&file.filename, &file.content, language)?;
    let root = tree.root_node();
    let src = file.content.as_bytes();

    let mut spans: BTreeMap<(u32, u32), MethodSnippet> = BTreeMap::new();
    let mut unmatched = Vec::new();
    for bl in &file.buggy_lines {
        match innermost_definition(root, bl.line_number, language, config) {
            Some(node) => {
                let (start, end) = node_lines(node);
                spans.entry((start, end)).or_insert_with(|| MethodSnippet {
                    filename: file.filename.clone(),
                    language,
                    method_name: method_name(node, src),
                    start_line: start,
                    end_line: end,
                    body: slice_lines(&file.content, start, end).to_string(),
                });
            }
            None => unmatched.push(bl.line_number),
        }
    }
    Ok(FileExtraction {
        methods: spans.into_values().collect(),
        unmatched_lines: unmatched,
    })
}

pub fn extract_methods(file: &BuggyFile, language: LanguageId) -> Result<FileExtraction> {
    extract_methods_with(file, language, &ExtractionConfig::default())
}

/// Something that went wrong while extracting methods for one record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionIssue {
    pub filename: String,
    pub message: String,
}

/// Fills `record.methods` from its buggy files. Files that fail to parse or
/// have no supported language contribute nothing; the record is never
/// rejected here.
pub fn extract_record_methods(
    record: &mut EnrichedRecord,
    config: &ExtractionConfig,
) -> Vec<ExtractionIssue> {
    let mut methods = Vec::new();
    let mut issues = Vec::new();
    for file in &record.buggy_code {
        if file.buggy_lines.is_empty() {
            continue;
        }
        let Some(language) = config.detect_language(&file.filename) else {
            continue;
        };
        match extract_methods_with(file, language, config) {
            Ok(found) => {
                if !found.unmatched_lines.is_empty() {
                    debug!(
                        "{}: {} lines outside any definition: {:?}",
                        record.cve, file.filename, found.unmatched_lines
                    );
                    issues.push(ExtractionIssue {
                        filename: file.filename.clone(),
                        message: format!("unmatched buggy lines {:?}", found.unmatched_lines),
                    });
                }
                methods.extend(found.methods);
            }
            Err(e) => issues.push(ExtractionIssue {
                filename: file.filename.clone(),
                message: e.to_string(),
            }),
        }
    }
    record.methods = methods;
    issues
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NumberedLine;

    fn file(name: &str, content: &str, lines: &[u32]) -> BuggyFile {
        let all: Vec<&str> = content.lines().collect();
        BuggyFile {
            filename: name.into(),
            content: content.into(),
            buggy_lines: lines
                .iter()
                .map(|&n| NumberedLine::new(n, all[n as usize - 1]))
                .collect(),
        }
    }

    #[test]
    fn language_table() {
        assert_eq!(detect_language("src/auth.php"), Some(LanguageId::Php));
        assert_eq!(detect_language("main.swift"), None);
        assert_eq!(detect_language("Makefile"), None);
        assert_eq!(detect_language("lib/x.H"), Some(LanguageId::C));
        assert_eq!(detect_language("a/b.tsx"), Some(LanguageId::Typescript));
        assert_eq!(detect_language(".py"), None);
        assert_eq!(detect_language("dir.d/file.rb"), Some(LanguageId::Ruby));
        let cfg = ExtractionConfig::default();
        for l in LanguageId::ALL {
            assert!(cfg.extensions.values().any(|v| *v == l), "{l} has no extension");
            assert!(!cfg.definition_kinds(l).is_empty());
        }
    }

    #[test]
    fn node_kinds_exist_in_grammars() {
        let cfg = ExtractionConfig::default();
        for l in LanguageId::ALL {
            let names: &[&str] = if l == LanguageId::Typescript { &["a.ts", "a.tsx"] } else { &["a"] };
            for name in names {
                let grammar = l.grammar(name);
                for kind in cfg.definition_kinds(l) {
                    assert_ne!(grammar.id_for_node_kind(kind, true), 0, "{l} {name} {kind}");
                }
            }
        }
    }

    #[test]
    fn code_file_detection() {
        let cfg = ExtractionConfig::default();
        assert!(!cfg.is_code_file("README.md"));
        assert!(!cfg.is_code_file("composer.lock"));
        assert!(cfg.is_code_file("main.swift"));
        assert!(cfg.is_code_file("Makefile"));
    }

    #[test]
    fn containment_and_dedup() {
        let mut src = String::new();
        for i in 1..=9 {
            src.push_str(&format!("// filler {i}\n"));
        }
        src.push_str("int f(int a) {\n"); // 10
        for i in 11..=19 {
            src.push_str(&format!("  a += {i};\n"));
        }
        src.push_str("}\n"); // 20
        let f = file("x.c", &src, &[12, 15]);
        let out = extract_methods(&f, LanguageId::C).unwrap();
        assert_eq!(out.methods.len(), 1);
        let m = &out.methods[0];
        assert_eq!((m.start_line, m.end_line), (10, 20));
        assert_eq!(m.method_name, "f");
        assert_eq!(m.body, slice_lines(&src, 10, 20));
        assert!(m.body.starts_with("int f(int a) {") && m.body.ends_with('}'));
        assert!(out.unmatched_lines.is_empty());
    }

    #[test]
    fn nested_prefers_inner() {
        let src = "\
# 1
# 2
# 3
# 4
# 5
# 6
# 7
# 8
# 9
def outer(x):
    y = x
    def inner(z):
        return z + 1
    return inner(y)
# 15
";
        // outer spans 10-14, inner 12-13.
        let f = file("n.py", src, &[11, 13]);
        let out = extract_methods(&f, LanguageId::Python).unwrap();
        let spans: Vec<_> = out
            .methods
            .iter()
            .map(|m| (m.method_name.as_str(), m.start_line, m.end_line))
            .collect();
        assert_eq!(spans, vec![("outer", 10, 14), ("inner", 12, 13)]);
    }

    #[test]
    fn top_level_line_unmatched() {
        let src = "<?php\n$a = 1;\n$b = $_GET['x'];\nfunction g() {\n  return 2;\n}\n";
        let f = file("t.php", src, &[3, 5]);
        let out = extract_methods(&f, LanguageId::Php).unwrap();
        assert_eq!(out.unmatched_lines, vec![3]);
        assert_eq!(out.methods.len(), 1);
        assert_eq!(out.methods[0].method_name, "g");
    }

    #[test]
    fn c_pointer_declarator_name() {
        let src = "static char *\ndup(const char *s)\n{\n  return strdup(s);\n}\n";
        let out = extract_methods(&file("d.c", src, &[4]), LanguageId::C).unwrap();
        assert_eq!(out.methods[0].method_name, "dup");
        assert_eq!((out.methods[0].start_line, out.methods[0].end_line), (1, 5));
    }

    #[test]
    fn arrow_function_takes_binding_name() {
        let src = "const handler = (req) => {\n  return req.query.id;\n};\n";
        let out = extract_methods(&file("h.js", src, &[2]), LanguageId::Javascript).unwrap();
        assert_eq!(out.methods[0].method_name, "handler");
    }

    #[test]
    fn slicing() {
        let s = "a\r\nb\nc";
        assert_eq!(slice_lines(s, 1, 1), "a");
        assert_eq!(slice_lines(s, 1, 2), "a\r\nb");
        assert_eq!(slice_lines(s, 3, 3), "c");
        assert_eq!(slice_lines(s, 2, 3), "b\nc");
    }

    #[test]
    fn record_extraction_skips_unsupported() {
        let mut record = EnrichedRecord {
            cve: "CVE-2022-0001".into(),
            description: String::new(),
            url: String::new(),
            date: "2022-01-01".into(),
            github_description: None,
            buggy_code: vec![
                file("a.swift", "func f() {\n  x()\n}\n", &[2]),
                file("b.go", "package b\nfunc F() {\n\tx()\n}\n", &[3]),
            ],
            hunks: vec![],
            methods: vec![],
        };
        let issues = extract_record_methods(&mut record, &ExtractionConfig::default());
        assert!(issues.is_empty());
        assert_eq!(record.methods.len(), 1);
        assert_eq!(record.methods[0].filename, "b.go");
        assert_eq!(record.methods[0].method_name, "F");
    }
}
