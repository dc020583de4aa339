mod common;

use std::collections::BTreeSet;
use std::io::Write;
use std::process::{Command, Stdio};

use axum::http::StatusCode;
use serde_json::{json, Value};

use simulacra_core::eval::{
    aggregate_observer, validate_submission, AggregationConfig, JudgeAssignment, JudgingKind, ObserverCase, Submission,
};
use simulacra_core::simulacrum::Method;

const KINDS: [&str; 4] = ["personality-describing", "description-scoring", "reaction-describing", "similarity-scoring"];

fn seed_cases(app: &common::TestApp) -> Vec<String> {
    let cases = [Method::Macm, Method::Rag].map(|m| {
        ObserverCase::new(
            "ann-lee",
            m,
            "queue",
            "A colleague asks you to cover their shift on short notice.",
            "I would say yes, then ask them to return the favour next month.",
            7,
        )
    });
    assert_eq!(app.store.add_cases(&cases).unwrap(), 2);
    cases.iter().map(|c| c.id.clone()).collect()
}

async fn pending_tasks(app: &common::TestApp) -> Vec<Value> {
    let (s, v) = app.get("/api/v1/judging/tasks?state=pending").await;
    assert_eq!(s, StatusCode::OK);
    v["tasks"].as_array().unwrap().clone()
}

fn valid_submission(kind: &str, n: usize, words: usize) -> Value {
    match kind {
        "personality-describing" => json!({"kind": kind, "descriptions": (0..n).map(|i| format!("trait {i}")).collect::<Vec<_>>()}),
        "description-scoring" => json!({"kind": kind, "verdicts": (0..n).map(|i| ["correct", "partial", "incorrect"][i % 3]).collect::<Vec<_>>()}),
        "reaction-describing" => json!({"kind": kind, "reaction": vec!["word"; words].join(" ")}),
        _ => json!({"kind": kind, "grade": "C"}),
    }
}

fn has_key(v: &Value, key: &str) -> bool {
    match v {
        Value::Object(m) => m.contains_key(key) || m.values().any(|x| has_key(x, key)),
        Value::Array(a) => a.iter().any(|x| has_key(x, key)),
        _ => false,
    }
}

/// A fixture exchange: body sent for a pending task of `kind`, and the reply.
#[derive(serde::Deserialize)]
struct Exchange {
    name: String,
    kind: String,
    body: Value,
    status: u16,
    error: Option<String>,
}

fn exchanges() -> Vec<Exchange> {
    serde_json::from_str(include_str!("fixtures/judging_exchanges.json")).unwrap()
}

/// Runs the bundled client validator over `cases` (expected kind, body) and
/// returns whether the client would send each. `None` when node is missing.
fn client_verdicts(rules: &Value, cases: &[(String, Value)]) -> Option<Vec<bool>> {
    let script = format!(
        "const v = require({:?}); let raw = ''; process.stdin.on('data', d => raw += d); \
         process.stdin.on('end', () => {{ const i = JSON.parse(raw); \
         console.log(JSON.stringify(i.cases.map(([k, b]) => v.validateJudgment(k, b, i.rules) === null))); }});",
        concat!(env!("CARGO_MANIFEST_DIR"), "/ui/validate.js")
    );
    let mut child = match Command::new("node").arg("-e").arg(script).stdin(Stdio::piped()).stdout(Stdio::piped()).spawn() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("node unavailable ({e}); client validator not exercised");
            return None;
        }
    };
    let input = serde_json::to_vec(&json!({"rules": rules, "cases": cases})).unwrap();
    child.stdin.take().unwrap().write_all(&input).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success(), "node failed: {}", String::from_utf8_lossy(&out.stdout));
    Some(serde_json::from_slice(&out.stdout).unwrap())
}

/// What the service accepts, via the same core checks its handler runs.
fn service_accepts(expected: JudgingKind, body: &Value, a: &JudgeAssignment) -> bool {
    let judge_ok = body.get("judge").and_then(Value::as_str).is_some_and(|j| !j.trim().is_empty());
    judge_ok
        && Submission::from_json(body.get("submission").unwrap_or(&Value::Null))
            .and_then(|s| validate_submission(expected, &s, a))
            .is_ok()
}

fn kind_of(s: &str) -> JudgingKind {
    serde_json::from_value(json!(s)).unwrap()
}

#[tokio::test]
async fn rules_mirror_the_assignment() {
    let app = common::app();
    let (s, rules) = app.get("/api/v1/judging/rules").await;
    assert_eq!(s, StatusCode::OK);
    let a = JudgeAssignment::default();
    assert_eq!(rules["descriptionsPerPass"], a.descriptions_per_pass);
    assert_eq!(rules["minReactionWords"], a.min_reaction_words);
    assert_eq!(rules["kinds"], json!(KINDS));
    assert_eq!(rules["grades"], json!(["A", "B", "C", "D", "E"]));
    assert_eq!(rules["verdicts"], json!(["correct", "partial", "incorrect"]));
}

#[tokio::test]
async fn recorded_exchanges_replay_on_service_and_client() {
    let app = common::app();
    let ids = seed_cases(&app);
    let (_, rules) = app.get("/api/v1/judging/rules").await;

    let mut client_cases = Vec::new();
    let mut accepted_kinds = BTreeSet::new();
    for ex in exchanges() {
        let task = pending_tasks(&app)
            .await
            .into_iter()
            .find(|t| t["caseId"] == ids[0] && t["kind"] == ex.kind)
            .unwrap_or_else(|| panic!("{}: no pending {} task", ex.name, ex.kind));
        let mut body = ex.body.clone();
        if body.get("judge").is_none() {
            body["judge"] = task["judge"].clone();
        }
        let uri = format!("/api/v1/judging/tasks/{}/submission", task["id"].as_str().unwrap());
        let (s, reply) = app.post(&uri, body.clone()).await;
        assert_eq!(s.as_u16(), ex.status, "{}: {reply}", ex.name);
        assert_eq!(reply["error"].as_str(), ex.error.as_deref(), "{}", ex.name);
        if s == StatusCode::OK {
            accepted_kinds.insert(ex.kind.clone());
            assert_eq!(reply["taskId"], task["id"]);
        }
        client_cases.push((ex.kind.clone(), body));
    }
    assert_eq!(accepted_kinds.len(), 4, "every kind has an accepted exchange");

    if let Some(verdicts) = client_verdicts(&rules, &client_cases) {
        for (ex, sends) in exchanges().iter().zip(verdicts) {
            assert_eq!(sends, ex.status == 200, "client and service disagree on {:?}", ex.name);
        }
    }
}

#[tokio::test]
async fn all_four_kinds_complete_cases_and_aggregate() {
    let app = common::app();
    let ids = seed_cases(&app);
    let a = JudgeAssignment::default();

    let (s, tasks) = app.get("/api/v1/judging/tasks").await;
    assert_eq!(s, StatusCode::OK);
    let tasks = tasks["tasks"].as_array().unwrap();
    // Describers 2, matcher-describer pairs 4, reactors 2, rater-reactor pairs 4.
    assert_eq!(tasks.len(), 2 * 12);
    // Judges never learn which method produced a case.
    assert!(!tasks.iter().any(|t| has_key(t, "method")));
    assert!(tasks.iter().all(|t| t["caseId"].as_str().unwrap().starts_with("case-")));

    // Scoring waits on descriptions.
    let blocked = tasks.iter().find(|t| t["state"] == "blocked").unwrap();
    let uri = format!("/api/v1/judging/tasks/{}/submission", blocked["id"].as_str().unwrap());
    let body = json!({"judge": blocked["judge"], "submission": valid_submission(blocked["kind"].as_str().unwrap(), 5, 100)});
    let (s, e) = app.post(&uri, body).await;
    assert_eq!((s, e["error"].as_str()), (StatusCode::CONFLICT, Some("not-ready")));

    let (s, _) = app.get("/api/v1/reports/observer").await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let mut submitted = BTreeSet::new();
    let mut completions = Vec::new();
    loop {
        let queue = pending_tasks(&app).await;
        let Some(task) = queue.first() else { break };
        let kind = task["kind"].as_str().unwrap();
        let id = task["id"].as_str().unwrap();
        let uri = format!("/api/v1/judging/tasks/{id}/submission");
        let body = json!({"judge": task["judge"], "submission": valid_submission(kind, a.descriptions_per_pass, a.min_reaction_words)});

        let (s, e) = app.post(&uri, json!({"judge": "intruder", "submission": body["submission"]})).await;
        assert_eq!((s, e["error"].as_str()), (StatusCode::CONFLICT, Some("claim-conflict")));
        let (s, reply) = app.post(&uri, body.clone()).await;
        assert_eq!(s, StatusCode::OK, "{reply}");
        let (s, e) = app.post(&uri, body).await;
        assert_eq!((s, e["error"].as_str()), (StatusCode::CONFLICT, Some("already-decided")));

        submitted.insert(kind.to_string());
        if reply["caseComplete"] == true {
            assert!(reply["report"].is_object(), "completion recomputes the report");
            completions.push(task["caseId"].as_str().unwrap().to_string());
        } else {
            assert!(reply.get("report").is_none());
        }
    }
    assert_eq!(submitted.len(), 4);
    completions.sort();
    let mut expected = ids.clone();
    expected.sort();
    assert_eq!(completions, expected, "each case completes exactly once");

    let (s, report) = app.get("/api/v1/reports/observer").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(report["completeCases"], 2);
    assert_eq!(report["pendingCases"], 0);
    let oracle = aggregate_observer(&app.store.cases().unwrap(), &a, &AggregationConfig::default()).unwrap();
    assert_eq!(report["report"], serde_json::to_value(&oracle).unwrap());
    assert_eq!(oracle.methods.len(), 2);
}

#[tokio::test]
async fn unknown_judging_task_is_not_found() {
    let app = common::app();
    seed_cases(&app);
    let (s, e) = app.get("/api/v1/judging/tasks/case-0000000000000000-pd-judge-1").await;
    assert_eq!((s, e["error"].as_str()), (StatusCode::NOT_FOUND, Some("unknown-id")));
}

/// Submissions near every rule boundary, sent against every task kind.
fn grid() -> Vec<Value> {
    let mut subs = Vec::new();
    let blanks = ["", " ", "\t", "\u{85}", "\u{a0}", "\u{3000}", "\u{feff}", "\u{200b}"];
    for n in 0..=7 {
        subs.push(json!({"kind": "personality-describing", "descriptions": vec!["kind"; n]}));
        subs.push(json!({"kind": "description-scoring", "verdicts": vec!["partial"; n]}));
    }
    for b in blanks {
        subs.push(json!({"kind": "personality-describing", "descriptions": ["a", "b", "c", "d", b]}));
        subs.push(json!({"kind": "personality-describing", "descriptions": [format!("{b}x{b}"), "b", "c", "d", "e"]}));
    }
    for bad in [json!("maybe"), json!("Correct"), json!(""), json!("partial "), Value::Null, json!(1)] {
        subs.push(json!({"kind": "description-scoring", "verdicts": ["correct", "partial", bad, "incorrect", "correct"]}));
    }
    let seps = [" ", "\t", "\n", "\r\n", "\u{85}", "\u{a0}", "\u{2003}", "\u{feff}", "\u{200b}", " \u{85} "];
    for count in [0, 1, 50, 99, 100, 101, 150] {
        for sep in seps {
            let text = vec!["word"; count].join(sep);
            subs.push(json!({"kind": "reaction-describing", "reaction": text}));
            subs.push(json!({"kind": "reaction-describing", "reaction": format!("{sep}{text}{sep}")}));
        }
    }
    for g in [json!("A"), json!("C"), json!("E"), json!("F"), json!("a"), json!(" A"), json!(""), Value::Null, json!(1)] {
        subs.push(json!({"kind": "similarity-scoring", "grade": g}));
    }
    subs.extend([
        json!({"kind": "personality-describing", "descriptions": "one string"}),
        json!({"kind": "personality-describing"}),
        json!({"kind": "reaction-describing", "reaction": ["list"]}),
        json!({"kind": "mystery"}),
        json!({"grade": "A"}),
        Value::Null,
        json!([]),
        json!("similarity-scoring"),
    ]);
    subs
}

#[tokio::test]
async fn client_validator_agrees_with_service_on_boundaries() {
    let app = common::app();
    let (_, rules) = app.get("/api/v1/judging/rules").await;
    let a = JudgeAssignment::default();
    let mut cases = Vec::new();
    for sub in grid() {
        for kind in KINDS {
            cases.push((kind.to_string(), json!({"judge": "judge-1", "submission": sub})));
        }
    }
    for judge in [json!(""), json!(" "), json!("\u{85}"), json!("\u{feff}"), Value::Null, json!(3), json!("j")] {
        for kind in KINDS {
            let sub = valid_submission(kind, a.descriptions_per_pass, a.min_reaction_words);
            cases.push((kind.to_string(), json!({"judge": judge, "submission": sub})));
        }
    }
    let expected: Vec<bool> = cases.iter().map(|(k, b)| service_accepts(kind_of(k), b, &a)).collect();
    assert!(expected.iter().filter(|x| **x).count() > 20, "grid covers accepted shapes");
    assert!(expected.iter().filter(|x| !**x).count() > 200, "grid covers rejected shapes");
    let Some(client) = client_verdicts(&rules, &cases) else { return };
    for ((case, want), got) in cases.iter().zip(&expected).zip(&client) {
        assert_eq!(got, want, "client and service disagree on {case:?}");
    }
}
