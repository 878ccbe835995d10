//! The GitHub client against a local HTTP stub.

use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::json;
use triage_core::ingestion::{fetch_with_retry, parse_unified_diff, CommitClient, CommitUrl, GithubClient};
use triage_core::Error;

#[derive(Clone)]
struct Reply {
    status: u16,
    headers: Vec<(String, String)>,
    body: String,
}

fn ok(body: impl Into<String>) -> Reply {
    Reply {
        status: 200,
        headers: vec![],
        body: body.into(),
    }
}

fn status(code: u16, headers: &[(&str, &str)]) -> Reply {
    Reply {
        status: code,
        headers: headers.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        body: "{}".into(),
    }
}

/// Seen requests: (path with query, authorization header).
type Log = Arc<Mutex<Vec<(String, Option<String>)>>>;

/// Serves queued replies per path; the last reply for a path repeats.
fn serve(routes: BTreeMap<String, Vec<Reply>>) -> (String, Log) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let log: Log = Arc::default();
    let seen = log.clone();
    let routes: Mutex<BTreeMap<String, VecDeque<Reply>>> =
        Mutex::new(routes.into_iter().map(|(k, v)| (k, v.into())).collect());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            if reader.read_line(&mut request_line).is_err() {
                continue;
            }
            let path = request_line.split_whitespace().nth(1).unwrap_or("/").to_string();
            let mut auth = None;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("authorization") {
                        auth = Some(v.trim().to_string());
                    }
                }
            }
            seen.lock().unwrap().push((path.clone(), auth));
            let reply = {
                let mut routes = routes.lock().unwrap();
                match routes.get_mut(&path) {
                    Some(q) if q.len() > 1 => q.pop_front().unwrap(),
                    Some(q) => q.front().cloned().unwrap(),
                    None => status(404, &[]),
                }
            };
            let mut head = format!(
                "HTTP/1.1 {} X\r\nContent-Length: {}\r\nConnection: close\r\n",
                reply.status,
                reply.body.len()
            );
            for (k, v) in &reply.headers {
                head.push_str(&format!("{k}: {v}\r\n"));
            }
            head.push_str("\r\n");
            let _ = stream.write_all(head.as_bytes());
            let _ = stream.write_all(reply.body.as_bytes());
        }
    });
    (base, log)
}

const SHA: &str = "0123456789abcdef0123456789abcdef01234567";

fn target() -> CommitUrl {
    CommitUrl::parse(&format!("https://github.com/acme/widget/commit/{SHA}")).unwrap()
}

fn commit_routes() -> BTreeMap<String, Vec<Reply>> {
    let commit = json!({
        "commit": {
            "message": "Bound the copy length (#12)",
            "committer": {"date": "2022-04-01T12:00:00Z"},
            "author": {"date": "2022-03-30T08:00:00Z"}
        },
        "parents": [{"sha": "p1"}],
        "files": [
            {"filename": "src/copy.c", "status": "modified",
             "patch": "@@ -1,3 +1,3 @@\n int copy(int n) {\n-    return n + 1;\n+    return n;\n }"},
            {"filename": "src/new.c", "status": "added", "patch": "@@ -0,0 +1 @@\n+int x;"},
            {"filename": "logo.png", "status": "modified"}
        ]
    });
    BTreeMap::from([
        (format!("/repos/acme/widget/commits/{SHA}"), vec![ok(commit.to_string())]),
        (
            "/repos/acme/widget/contents/src/copy.c?ref=p1".to_string(),
            vec![ok("int copy(int n) {\n    return n + 1;\n}\n")],
        ),
        (
            "/repos/acme/widget/issues/12".to_string(),
            vec![ok(json!({"title": "Overflow in copy", "body": "Details."}).to_string())],
        ),
    ])
}

fn client(base: &str, token: Option<&str>, cache: Option<&std::path::Path>) -> GithubClient {
    GithubClient::new(
        base,
        token.map(String::from),
        cache.map(|p| p.to_path_buf()),
        Duration::ZERO,
        Duration::from_secs(5),
    )
    .unwrap()
}

#[test]
fn fetches_commit_contents_and_issue() {
    let (base, log) = serve(commit_routes());
    let data = client(&base, Some("s3cret"), None).fetch(&target()).unwrap();

    assert_eq!(data.url, format!("https://github.com/acme/widget/commit/{SHA}"));
    assert_eq!(data.date, "2022-04-01T12:00:00Z");
    assert_eq!(data.issue_message.as_deref(), Some("Overflow in copy\n\nDetails."));
    assert_eq!(
        data.file_contents.keys().collect::<Vec<_>>(),
        vec!["src/copy.c"]
    );
    assert!(data.unavailable.contains("logo.png"));

    let hunks = parse_unified_diff(&data.diff_text).unwrap();
    assert_eq!(hunks.len(), 2);
    assert_eq!(hunks[0].filename, "src/copy.c");
    assert_eq!(hunks[0].deleted_lines[0].line_number, 2);
    assert_eq!(hunks[1].filename, "src/new.c");

    let log = log.lock().unwrap();
    assert!(log.iter().all(|(_, auth)| auth.as_deref() == Some("Bearer s3cret")));
    assert!(!log.iter().any(|(p, _)| p.contains("new.c")), "added files have no pre-image");
}

#[test]
fn cache_replays_without_network() {
    let cache = tempfile::tempdir().unwrap();
    let (base, log) = serve(commit_routes());
    let first = client(&base, None, Some(cache.path())).fetch(&target()).unwrap();
    let calls = log.lock().unwrap().len();
    assert!(calls >= 3);
    let second = client(&base, None, Some(cache.path())).fetch(&target()).unwrap();
    assert_eq!(first, second);
    assert_eq!(log.lock().unwrap().len(), calls);
}

#[test]
fn status_mapping() {
    let path = format!("/repos/acme/widget/commits/{SHA}");
    let cases = [
        (status(429, &[("retry-after", "7")]), "rate"),
        (status(403, &[("x-ratelimit-remaining", "0")]), "rate"),
        (status(404, &[]), "fetch"),
        (status(502, &[]), "fetch"),
    ];
    for (reply, kind) in cases {
        let (base, _) = serve(BTreeMap::from([(path.clone(), vec![reply])]));
        let err = client(&base, None, None).fetch(&target()).unwrap_err();
        match kind {
            "rate" => assert!(matches!(err, Error::RateLimited { .. }), "{err}"),
            _ => assert!(matches!(err, Error::Fetch { .. }), "{err}"),
        }
        assert!(err.is_transient() || kind == "fetch");
    }
    let (base, _) = serve(BTreeMap::from([(path, vec![status(429, &[("retry-after", "7")])])]));
    match client(&base, None, None).fetch(&target()) {
        Err(Error::RateLimited { retry_after_secs }) => assert_eq!(retry_after_secs, Some(7)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn retry_recovers_from_rate_limit() {
    let mut routes = commit_routes();
    let path = format!("/repos/acme/widget/commits/{SHA}");
    let good = routes.remove(&path).unwrap().remove(0);
    routes.insert(path.clone(), vec![status(429, &[("retry-after", "0")]), good]);
    let (base, log) = serve(routes);
    let c = client(&base, None, None);
    let data = fetch_with_retry(&c, &target(), 2, Duration::from_millis(1)).unwrap();
    assert_eq!(data.date, "2022-04-01T12:00:00Z");
    let hits = log.lock().unwrap().iter().filter(|(p, _)| *p == path).count();
    assert_eq!(hits, 2);
}

#[test]
fn unreachable_host_is_fetch_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let err = client(&base, None, None).fetch(&target()).unwrap_err();
    assert!(matches!(err, Error::Fetch { .. } | Error::Timeout(_)), "{err}");
}
