mod common;

use std::collections::BTreeSet;

use common::{buggy_file, corpus, language_of, oracle_methods, replay};
use triage_core::extraction::{detect_language, extract_methods, ExtractionConfig, LanguageId};
use triage_core::ingestion::parse_unified_diff;

#[test]
fn corpus_covers_every_language() {
    let files = corpus();
    let langs: BTreeSet<LanguageId> = files.iter().map(|f| language_of(&f.language)).collect();
    assert_eq!(langs.len(), LanguageId::ALL.len());
    for lang in LanguageId::ALL {
        let n = files.iter().filter(|f| language_of(&f.language) == lang).count();
        assert!(n >= 3, "{lang}: {n} files");
    }
    for f in &files {
        assert_eq!(detect_language(&f.name), Some(language_of(&f.language)), "{}", f.name);
    }
}

#[test]
fn extraction_matches_brute_force() {
    let config = ExtractionConfig::default();
    let mut with_methods = BTreeSet::new();
    for f in corpus() {
        let hunks = parse_unified_diff(&f.diff).unwrap();
        let file = buggy_file(&f.name, &f.pre, &hunks);
        let lang = language_of(&f.language);
        let got = extract_methods(&file, lang).unwrap();
        let (want, unmatched) = oracle_methods(&file, lang, &config);
        let got_spans: Vec<_> = got
            .methods
            .iter()
            .map(|m| (m.start_line, m.end_line, m.body.clone()))
            .collect();
        assert_eq!(got_spans, want, "{}", f.name);
        assert_eq!(got.unmatched_lines, unmatched, "{}", f.name);
        if !want.is_empty() {
            with_methods.insert(lang);
        }
        for m in &got.methods {
            assert_eq!(m.filename, f.name);
            assert_eq!(m.language, lang);
        }
    }
    assert_eq!(with_methods.len(), LanguageId::ALL.len());
}

#[test]
fn replay_reconstructs_post_images() {
    for f in corpus() {
        let hunks = parse_unified_diff(&f.diff).unwrap();
        assert!(hunks.iter().all(|h| h.filename == f.name));
        assert_eq!(replay(&f.pre, &hunks), f.post, "{}", f.name);
    }
}

#[test]
fn concatenated_diffs_per_language() {
    let files = corpus();
    for lang in LanguageId::ALL {
        let group: Vec<_> = files.iter().filter(|f| language_of(&f.language) == lang).collect();
        let diff: String = group
            .iter()
            .map(|f| format!("diff --git a/{0} b/{0}\nindex 1111111..2222222 100644\n{1}", f.name, f.diff))
            .collect();
        let hunks = parse_unified_diff(&diff).unwrap();
        for f in group {
            let own: Vec<_> = hunks.iter().filter(|h| h.filename == f.name).cloned().collect();
            assert!(!own.is_empty());
            assert_eq!(replay(&f.pre, &own), f.post, "{}", f.name);
        }
    }
}

fn spans(name: &str) -> (Vec<(u32, u32, String)>, Vec<u32>) {
    let f = corpus().into_iter().find(|f| f.name == name).unwrap();
    let hunks = parse_unified_diff(&f.diff).unwrap();
    let got = extract_methods(&buggy_file(&f.name, &f.pre, &hunks), language_of(&f.language)).unwrap();
    (
        got.methods
            .into_iter()
            .map(|m| (m.start_line, m.end_line, m.method_name))
            .collect(),
        got.unmatched_lines,
    )
}

#[test]
fn hand_checked_spans() {
    assert_eq!(
        spans("src/buffer.c"),
        (vec![(8, 12, "set_name".into()), (14, 21, "copy_chunk".into())], vec![])
    );
    // Pure additions inside a function leave only the top-level deletion.
    assert_eq!(spans("net/packet.c"), (vec![], vec![5]));
    // Innermost wins: the lambda, not the enclosing function.
    assert_eq!(spans("src/filter.cc").0[0], (8, 10, String::new()));
    assert_eq!(
        spans("auth/token.go"),
        (
            vec![(9, 11, "Valid".into()), (14, 19, String::new())],
            vec![21, 22]
        )
    );
    assert_eq!(
        spans("app/views.py").0,
        vec![
            (7, 10, "read_file".into()),
            (13, 14, "ping".into()),
            (22, 23, "cell".into())
        ]
    );
    assert_eq!(spans("src/redirect.ts"), (vec![(1, 3, "safeRedirect".into()), (5, 5, "isLocal".into())], vec![7]));
}
