use std::sync::Arc;

use proptest::prelude::*;
use xbar_core::dse::{
    parse_dsl, query_json_schema, seed_paper_table, Bound, Comparator, ConstraintQuery, Direction, HardConstraint,
    Metric, Repository, Scalar,
};
use xbar_core::paa::EvalResult;
use xbar_llm::*;

fn client(server: &MockServer, retries: usize, stats: RepoStats) -> LlmClient {
    let mut cfg = EndpointConfig::new(server.base_url(), "mock-model").unwrap();
    cfg.max_retries = retries;
    cfg.timeout_s = 10.0;
    LlmClient::new(cfg, stats).unwrap()
}

fn content(s: impl Into<String>) -> MockReply {
    MockReply::Content { content: s.into() }
}

#[test]
fn config_parsing_and_validation() {
    let c = EndpointConfig::from_toml_with_key("base_url = \"http://localhost:8000/v1\"\nmodel_name = \"m\"\n", None)
        .unwrap();
    assert_eq!((c.max_retries, c.timeout_s), (3, 60.0));
    assert_eq!(c.completions_url(), "http://localhost:8000/v1/chat/completions");

    for bad in [
        "base_url = \"localhost:8000\"\nmodel_name = \"m\"",
        "base_url = \"ftp://h/v1\"\nmodel_name = \"m\"",
        "base_url = \"http://h/v1\"\nmodel_name = \"m\"\nmax_retries = 0",
        "base_url = \"http://h/v1\"\nmodel_name = \" \"",
        "base_url = \"http://h/v1\"\nmodel_name = \"m\"\napi_key = \"sk\"",
    ] {
        assert!(matches!(EndpointConfig::from_toml_with_key(bad, None), Err(LlmError::Config(_))), "{bad}");
    }

    let c = EndpointConfig::from_toml_with_key(
        "base_url = \"https://api.example.com/v1/\"\nmodel_name = \"m\"\nmax_retries = 5\ntimeout_s = 2.5",
        Some(ApiKey::new("sk-secret-123")),
    )
    .unwrap();
    assert_eq!(c.completions_url(), "https://api.example.com/v1/chat/completions");
    assert_eq!((c.max_retries, c.timeout_s), (5, 2.5));
    let shown = format!("{c:?} {}", c.api_key.as_ref().unwrap());
    assert!(!shown.contains("sk-secret-123"), "{shown}");
}

#[test]
fn api_key_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("endpoint.toml");
    std::fs::write(&path, "base_url = \"http://127.0.0.1:1/v1\"\nmodel_name = \"m\"\n").unwrap();
    // The only test in this binary touching the variable.
    std::env::set_var(API_KEY_ENV, "env-key");
    let c = EndpointConfig::load(&path).unwrap();
    std::env::remove_var(API_KEY_ENV);
    assert_eq!(c.api_key.unwrap().expose(), "env-key");
    assert!(EndpointConfig::load(&dir.path().join("missing.toml")).is_err());
}

#[test]
fn prompt_is_deterministic_and_quotes_ranges() {
    let stats = RepoStats::from_repo(&seed_paper_table());
    let a = build_prompt(&query_json_schema(), &stats, "low power please");
    let b = build_prompt(&query_json_schema(), &RepoStats::from_repo(&seed_paper_table()), "low power please");
    assert_eq!(a, b);
    assert!(a.system.contains("0.457961") && a.system.contains("9.062472"), "{}", a.system);
    assert!(a.system.contains("Repository contents"));
    assert!(a.system.contains("\"additionalProperties\""));
    assert!(a.system.contains("JSON"));
    assert_eq!(a.user, "low power please");

    let empty = build_prompt(&query_json_schema(), &RepoStats::from_repo(&Repository::new()), "x");
    assert!(!empty.system.contains("Repository contents"));
    assert!(!empty.system.contains("0.457961"));
}

fn edge_query() -> ConstraintQuery {
    ConstraintQuery {
        hard: vec![
            HardConstraint::numeric(Metric::Power, Comparator::Le, 3.0),
            HardConstraint::numeric(Metric::Accuracy, Comparator::Ge, 96.0),
        ],
        soft: vec![xbar_core::dse::SoftObjective {
            metric: Metric::Power,
            direction: Direction::Minimize,
            weight: 1.0,
        }],
        ..Default::default()
    }
}

const EDGE_REQUEST: &str = "find me a design under 3 watts with at least 96% accuracy, lowest power preferred";
const EDGE_REPLY: &str = r#"{"hard":[{"metric":"power","op":"<=","value":3},{"metric":"accuracy","op":">=","value":96}],"soft":[{"metric":"power","direction":"minimize","weight":1}]}"#;

#[test]
fn happy_path_takes_one_attempt() {
    let mut script = MockScript::default();
    script.push(EDGE_REQUEST, vec![content(EDGE_REPLY)]);
    let server = MockServer::start(script).unwrap();
    let mut c = client(&server, 3, RepoStats::from_repo(&seed_paper_table()));
    let mut cfg = c.config().clone();
    cfg.api_key = Some(ApiKey::new("sk-live"));
    c = LlmClient::new(cfg, RepoStats::default()).unwrap();

    let x = c.extract_query(EDGE_REQUEST).unwrap();
    assert_eq!(x.attempts, 1);
    assert_eq!(x.query, edge_query());
    assert_eq!(x.query, parse_dsl("power <= 3W; accuracy >= 96%; minimize power").unwrap());

    let got = server.received();
    assert_eq!(got.len(), 1);
    assert_eq!(got[0].path, "/v1/chat/completions");
    assert_eq!(got[0].authorization.as_deref(), Some("Bearer sk-live"));
    assert_eq!(got[0].body["model"], "mock-model");
    assert_eq!(got[0].body["temperature"], 0.0);
    assert_eq!(got[0].body["messages"][0]["role"], "system");
    assert_eq!(got[0].body["messages"][1]["content"], EDGE_REQUEST);
}

#[test]
fn malformed_replies_are_retried_with_the_error() {
    let dir = tempfile::tempdir().unwrap();
    let log = Arc::new(AuditLog::open(&dir.path().join("audit.jsonl")).unwrap());
    let mut script = MockScript::default();
    script.push(
        EDGE_REQUEST,
        vec![
            content("Sure! Here is the query: {power <= 3}"),
            content(r#"{"hard":[{"metric":"watts","op":"<=","value":3}],"soft":[]}"#),
            content(format!("```json\n{EDGE_REPLY}\n```")),
        ],
    );
    let server = MockServer::start(script).unwrap();
    let c = client(&server, 3, RepoStats::default()).with_audit(log.clone());
    let x = c.extract_query(EDGE_REQUEST).unwrap();
    assert_eq!(x.attempts, 3);
    assert_eq!(x.query, parse_dsl("power <= 3W; accuracy >= 96%; minimize power").unwrap());

    let got = server.received();
    assert_eq!(got.len(), 3);
    let third = got[2].body["messages"].as_array().unwrap();
    assert_eq!(third.len(), 6);
    assert_eq!(third[4]["content"], r#"{"hard":[{"metric":"watts","op":"<=","value":3}],"soft":[]}"#);
    assert!(third[5]["content"].as_str().unwrap().contains("rejected"));

    let records = AuditLog::read(log.path()).unwrap();
    let outcomes: Vec<(usize, &str)> = records.iter().map(|r| (r.attempt, r.outcome.as_str())).collect();
    assert_eq!(outcomes, [(1, "invalid"), (2, "invalid"), (3, "valid")]);
    assert_eq!(records[0].raw, "Sure! Here is the query: {power <= 3}");
}

#[test]
fn retries_are_bounded_and_raw_replies_kept() {
    let mut script = MockScript::default();
    script.push("anything", vec![content("nope")]);
    let server = MockServer::start(script).unwrap();
    for retries in [1, 2, 4] {
        let c = client(&server, retries, RepoStats::default());
        match c.extract_query("anything") {
            Err(LlmError::Exhausted { attempts, responses, .. }) => {
                assert_eq!(attempts, retries);
                assert_eq!(responses, vec!["nope".to_string(); retries]);
            }
            other => panic!("{other:?}"),
        }
    }
    assert_eq!(server.received().len(), 1 + 2 + 4);
}

#[test]
fn http_errors_carry_status() {
    let mut script = MockScript::default();
    script.push(
        "busy",
        vec![MockReply::Status {
            status: 503,
            body: "overloaded".into(),
        }],
    );
    let server = MockServer::start(script).unwrap();
    let c = client(&server, 3, RepoStats::default());
    match c.extract_query("busy") {
        Err(LlmError::Http { status, body }) => assert_eq!((status, body.as_str()), (503, "overloaded")),
        other => panic!("{other:?}"),
    }
    assert!(matches!(c.extract_query("unscripted"), Err(LlmError::Http { status: 404, .. })));

    let dead = EndpointConfig::new("http://127.0.0.1:1/v1", "m").unwrap();
    assert!(matches!(
        LlmClient::new(dead, RepoStats::default()).unwrap().extract_query("x"),
        Err(LlmError::Network(_))
    ));
}

#[test]
fn mock_script_file_round_trip() {
    let mut script = MockScript::default();
    script.push("a", vec![content("x"), MockReply::Status { status: 500, body: "e".into() }]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("script.json");
    std::fs::write(&path, serde_json::to_string_pretty(&script).unwrap()).unwrap();
    assert_eq!(MockScript::load(&path).unwrap(), script);
}

// Independent ranking oracle: filter, min-max score, sort. Only the DSL parse is shared.

fn value(m: Metric, e: &EvalResult) -> Result<f64, String> {
    Ok(match m {
        Metric::Power => e.avg_power_w,
        Metric::Area => e.area_um2,
        Metric::Accuracy => e.accuracy_pct,
        Metric::Tech => e.design.tech.nm() as f64,
        Metric::Size => e.design.rows as f64,
        Metric::Device => return Err(e.design.device.as_str().to_ascii_lowercase()),
        Metric::Bitcell => return Err(e.design.bitcell.as_str().to_ascii_lowercase()),
    })
}

fn holds(h: &HardConstraint, e: &EvalResult) -> bool {
    let scalar_eq = |s: &Scalar| match (s, value(h.metric, e)) {
        (Scalar::Number(x), Ok(v)) => v == *x,
        (Scalar::Name(n), Err(label)) => n.to_ascii_lowercase() == label,
        _ => false,
    };
    match (&h.op, &h.value, value(h.metric, e)) {
        (Comparator::Le, Bound::One(Scalar::Number(x)), Ok(v)) => v <= *x,
        (Comparator::Ge, Bound::One(Scalar::Number(x)), Ok(v)) => v >= *x,
        (Comparator::Eq, Bound::One(s), _) => scalar_eq(s),
        (Comparator::In, Bound::Set(items), _) => items.iter().any(scalar_eq),
        (Comparator::In, Bound::One(s), _) => scalar_eq(s),
        _ => false,
    }
}

fn oracle_top1(repo: &Repository, q: &ConstraintQuery) -> String {
    let feasible: Vec<&EvalResult> = repo.iter().filter(|e| q.hard.iter().all(|h| holds(h, e))).collect();
    assert!(!feasible.is_empty());
    let wsum: f64 = q.soft.iter().map(|s| s.weight).sum();
    let score = |e: &EvalResult| -> f64 {
        if wsum == 0.0 {
            return 1.0;
        }
        let mut total = 0.0;
        for s in &q.soft {
            let vals: Vec<f64> = feasible.iter().map(|f| value(s.metric, f).unwrap()).collect();
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let v = value(s.metric, e).unwrap();
            let u = if hi > lo {
                let t = (v - lo) / (hi - lo);
                if s.direction == Direction::Maximize {
                    t
                } else {
                    1.0 - t
                }
            } else {
                1.0
            };
            total += s.weight * u;
        }
        total / wsum
    };
    let mut best: Vec<(i64, &EvalResult)> = feasible.iter().map(|e| ((score(e) * 1e12).round() as i64, *e)).collect();
    best.sort_by(|a, b| {
        b.0.cmp(&a.0).then_with(|| {
            for &m in &q.tie_break {
                let dir = q
                    .soft
                    .iter()
                    .find(|s| s.metric == m)
                    .map(|s| s.direction)
                    .unwrap_or(if m == Metric::Accuracy { Direction::Maximize } else { Direction::Minimize });
                let (x, y) = (value(m, a.1).unwrap(), value(m, b.1).unwrap());
                let o = if dir == Direction::Minimize { x.total_cmp(&y) } else { y.total_cmp(&x) };
                if o.is_ne() {
                    return o;
                }
            }
            a.1.key().cmp(&b.1.key())
        })
    });
    best[0].1.key()
}

#[test]
fn shipped_suite_answers_match_the_oracle() {
    let repo = seed_paper_table();
    let suite = shipped_suite();
    assert_eq!(suite.len(), 30);
    for c in Category::ALL {
        assert_eq!(suite.iter().filter(|t| t.category == c).count(), 10);
    }
    for t in &suite {
        let q = parse_dsl(&t.dsl).unwrap();
        assert_eq!(oracle_top1(&repo, &q), t.expected_top1, "{}", t.id);
    }
    let edge = suite.iter().find(|t| t.id == "H01").unwrap();
    assert_eq!(edge.expected_top1, "t7_pcm_1t1r_64x64_dx_p1x1");
}

#[test]
fn dsl_backend_passes_every_task() {
    let r = passk_harness(&shipped_suite(), 3, &seed_paper_table(), &DslBackend, 4);
    assert_eq!((r.pass_at_1, r.pass_at_k), (1.0, 1.0));
    assert_eq!(r.categories.len(), 3);
    assert!(r.tasks.iter().all(|t| t.first_success_attempt == Some(1)));
}

/// Mock that answers each task with its reference query, after `bad[i]` malformed replies.
fn scripted(tasks: &[Task], bad: &[usize]) -> MockScript {
    let mut script = MockScript::default();
    for (t, &b) in tasks.iter().zip(bad) {
        let mut replies = vec![content("I think you want low power."); b];
        replies.push(content(parse_dsl(&t.dsl).unwrap().to_json()));
        script.push(t.request.clone(), replies);
    }
    script
}

#[test]
fn two_of_ten_failing_first_attempt() {
    let tasks: Vec<Task> = shipped_suite().into_iter().filter(|t| t.category == Category::Power).collect();
    let bad = [0, 1, 0, 0, 0, 0, 1, 0, 0, 0];
    let server = MockServer::start(scripted(&tasks, &bad)).unwrap();
    let c = client(&server, 3, RepoStats::from_repo(&seed_paper_table()));
    let r = passk_harness(&tasks, 3, &seed_paper_table(), &c, 3);
    let s = r.category(Category::Power).unwrap();
    assert_eq!((s.tasks, s.pass_at_1, s.pass_at_k), (10, 0.8, 1.0));
    assert_eq!(r.tasks[1].first_success_attempt, Some(2));
    assert!(r.tasks.iter().all(|t| t.attempts <= 3));
    assert_eq!(r.backend, "llm:mock-model");
}

#[test]
fn wrong_answers_and_endpoint_failures_are_task_failures() {
    let tasks: Vec<Task> = shipped_suite().into_iter().take(3).collect();
    let mut script = MockScript::default();
    // Valid but different query: selects a different design.
    script.push(tasks[0].request.clone(), vec![content(parse_dsl("maximize power").unwrap().to_json())]);
    script.push(tasks[1].request.clone(), vec![MockReply::Status { status: 500, body: "boom".into() }]);
    script.push(tasks[2].request.clone(), vec![content("never json")]);
    let server = MockServer::start(script).unwrap();
    let c = client(&server, 3, RepoStats::default());
    let r = passk_harness(&tasks, 3, &seed_paper_table(), &c, 2);
    assert_eq!(r.pass_at_k, 0.0);
    assert!(r.tasks[0].selected.is_some() && r.tasks[0].selected.as_deref() != Some(tasks[0].expected_top1.as_str()));
    assert!(r.tasks[1].error.as_deref().unwrap().contains("500"));
    assert_eq!(r.tasks[2].attempts, 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn pass_at_1_never_exceeds_pass_at_k(bad in proptest::collection::vec(0usize..5, 6), k in 1usize..4) {
        let tasks: Vec<Task> = shipped_suite().into_iter().step_by(5).collect();
        let server = MockServer::start(scripted(&tasks, &bad)).unwrap();
        let c = client(&server, k, RepoStats::default());
        let r = passk_harness(&tasks, k, &seed_paper_table(), &c, 3);
        prop_assert!(r.pass_at_1 <= r.pass_at_k && r.pass_at_k <= 1.0);
        for (t, b) in r.tasks.iter().zip(&bad) {
            prop_assert!(t.attempts <= k);
            prop_assert_eq!(t.first_success_attempt, (*b < k).then_some(b + 1));
        }
    }

    #[test]
    fn accepted_replies_always_validate(reply in prop_oneof![
        Just(EDGE_REPLY.to_string()),
        Just(r#"{"soft":[{"metric":"power","direction":"minimize","weight":-1}]}"#.to_string()),
        Just(r#"{"soft":[{"metric":"device","direction":"minimize"}]}"#.to_string()),
        Just(r#"{"hard":[{"metric":"power","op":"<=","value":"three"}],"soft":[{"metric":"area","direction":"minimize"}]}"#.to_string()),
        Just(r#"{"hard":[],"soft":[]}"#.to_string()),
        Just(r#"{"tie_break":["area"],"extra":1}"#.to_string()),
        "[a-z{}\":,0-9 ]{0,40}",
    ]) {
        if let Ok(q) = parse_reply(&reply) {
            prop_assert!(q.validate().is_ok());
        }
    }
}
