use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use landtriage_core::compliance::Compliance;
use landtriage_core::config::Durability;
use landtriage_core::fixture::Scenario;
use landtriage_core::report::Report;
use landtriage_core::{Config, Engine};
use landtriage_service::{router, Service, IDEMPOTENCY_HEADER};

struct Call<'a> {
    method: &'a str,
    uri: String,
    body: Body,
    content_type: Option<String>,
    key: Option<&'a str>,
}

impl<'a> Call<'a> {
    fn get(uri: impl Into<String>) -> Self {
        Call { method: "GET", uri: uri.into(), body: Body::empty(), content_type: None, key: None }
    }
    fn post(uri: impl Into<String>) -> Self {
        Call { method: "POST", uri: uri.into(), body: Body::empty(), content_type: None, key: None }
    }
    fn json(mut self, v: &impl serde::Serialize) -> Self {
        self.body = Body::from(serde_json::to_vec(v).unwrap());
        self.content_type = Some("application/json".into());
        self
    }
    fn text(mut self, t: &str) -> Self {
        self.body = Body::from(t.to_string());
        self.content_type = Some("application/x-ndjson".into());
        self
    }
    fn key(mut self, k: &'a str) -> Self {
        self.key = Some(k);
        self
    }
    async fn send(self, app: &Router) -> (StatusCode, Value) {
        let mut req = Request::builder().method(self.method).uri(&self.uri);
        if let Some(ct) = &self.content_type {
            req = req.header("content-type", ct);
        }
        if let Some(k) = self.key {
            req = req.header(IDEMPOTENCY_HEADER, k);
        }
        let resp = app.clone().oneshot(req.body(self.body).unwrap()).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
        (status, v)
    }
}

fn memory_app() -> Router {
    router(Service::with_engine(Engine::in_memory(Config::default()).unwrap()))
}

fn disk_service(dir: &std::path::Path) -> Arc<Service> {
    Service::open(Config { data_dir: dir.to_path_buf(), durability: Durability::Flush, ..Config::default() }).unwrap()
}

async fn ok(app: &Router, c: Call<'_>) -> Value {
    let uri = c.uri.clone();
    let (s, v) = c.send(app).await;
    assert!(s.is_success(), "{uri}: {s} {v}");
    v
}

/// Loads the fixture through the API in the same order as the in-process loader.
async fn load_fixture(app: &Router, sc: &Scenario) {
    ok(app, Call::post("/v1/registry").json(&sc.registry)).await;
    for (run, (run_id, text)) in sc.runs.iter().zip(&sc.detection_files) {
        ok(app, Call::post("/v1/runs").json(run)).await;
        ok(app, Call::post(format!("/v1/runs/{run_id}/detections")).text(text)).await;
        ok(app, Call::post(format!("/v1/route/{run_id}?org=wdnr"))).await;
        ok(app, Call::post(format!("/v1/route/{run_id}?org=elpc"))).await;
    }
    for s in &sc.screenings {
        let body = json!({"decision": s.decision, "reason": s.reason, "decided_on": s.decided_on});
        ok(app, Call::post(format!("/v1/screening/{}", s.detection_id)).json(&body)).await;
    }
    for r in &sc.responses {
        ok(app, Call::post("/v1/responses").json(r)).await;
    }
    for d in &sc.determinations {
        ok(app, Call::post("/v1/determinations").json(d)).await;
    }
    for i in &sc.incidentals {
        ok(app, Call::post("/v1/incidentals").json(i)).await;
    }
}

fn compliance_counts(v: Value) -> [usize; 4] {
    let Report::Compliance(c) = serde_json::from_value(v).unwrap() else { panic!("wrong report") };
    [
        c.count(Compliance::Violation),
        c.count(Compliance::CompliantPreWindow),
        c.count(Compliance::CompliantUnregulatedEntity),
        c.count(Compliance::CompliantOther),
    ]
}

#[tokio::test]
async fn fixture_over_http_matches_in_process_load() {
    let sc = Scenario::build();
    let app = memory_app();
    load_fixture(&app, &sc).await;

    let mut direct = Engine::in_memory(Config::default()).unwrap();
    sc.load(&mut direct).unwrap();
    let health = ok(&app, Call::get("/v1/health")).await;
    assert_eq!(health["digest"], direct.state().digest());

    let rep = ok(&app, Call::get("/v1/reports/compliance")).await;
    assert_eq!(compliance_counts(rep), [11, 27, 23, 3]);

    for name in ["confirmation_by_bucket", "lift", "agreement", "process", "group_comparison", "confidence_crosstab", "incidentals", "totals"] {
        let v = ok(&app, Call::get(format!("/v1/reports/{name}"))).await;
        let r: Report = serde_json::from_value(v.clone()).unwrap();
        assert_eq!(serde_json::to_value(&r).unwrap(), v, "{name} round-trips");
    }
    let v = ok(&app, Call::get("/v1/reports/confirmation?org=wdnr&screened_only=true&edges=0.5,0.8,1")).await;
    assert_eq!(v["data"]["buckets"].as_array().unwrap().len(), 2);
    let (s, v) = Call::get("/v1/reports/confirmation?org=nobody").send(&app).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::BAD_REQUEST, Some("invalid_param")));
    let (s, _) = Call::get("/v1/reports/nope").send(&app).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn listing_endpoints() {
    let sc = Scenario::build();
    let app = memory_app();
    load_fixture(&app, &sc).await;
    let pending = ok(&app, Call::get("/v1/screening?status=pending")).await;
    let all = ok(&app, Call::get("/v1/screening")).await;
    assert!(pending.as_array().unwrap().len() < all.as_array().unwrap().len());
    assert!(pending.as_array().unwrap().iter().all(|i| i["status"] == "pending"));

    let elpc = ok(&app, Call::get("/v1/assignments?org=elpc")).await;
    assert_eq!(elpc.as_array().unwrap().len(), sc.expected_elpc.len());
    let aid = elpc[0]["assignment_id"].as_str().unwrap().to_string();
    let ver = elpc[0]["verifier_id"].as_str().unwrap().to_string();
    let mine = ok(&app, Call::get(format!("/v1/assignments?org=elpc&verifier_id={ver}"))).await;
    assert!(mine.as_array().unwrap().iter().all(|a| a["verifier_id"] == ver.as_str()));

    let p = ok(&app, Call::get(format!("/v1/packets/{aid}"))).await;
    assert_eq!(p["assignment_id"], aid.as_str());
    let (s, v) = Call::get("/v1/packets/nope").send(&app).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));

    let runs = ok(&app, Call::get("/v1/runs")).await;
    assert_eq!(runs.as_array().unwrap().len(), sc.runs.len());
}

#[tokio::test]
async fn errors_have_status_and_code() {
    let sc = Scenario::build();
    let app = memory_app();
    ok(&app, Call::post("/v1/registry").json(&sc.registry)).await;
    let run = &sc.runs[0];
    let (s, _) = Call::post("/v1/runs").json(run).send(&app).await;
    assert_eq!(s, StatusCode::CREATED);
    let (s, v) = Call::post("/v1/runs").json(run).send(&app).await;
    assert_eq!(s, StatusCode::CONFLICT, "{v}");

    // One bad score line is reported, the rest accepted.
    let text = &sc.detection_files[0].1;
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut bad: Value = serde_json::from_str(&lines[2]).unwrap();
    bad["score"] = json!(1.5);
    lines[2] = bad.to_string();
    let v = ok(&app, Call::post(format!("/v1/runs/{}/detections", run.run_id)).text(&(lines.join("\n") + "\n"))).await;
    assert_eq!(v["accepted"], lines.len() - 1);
    assert_eq!(v["rejected"][0]["line"], 3);
    assert_eq!(v["rejected"][0]["reason"], "score_out_of_range");

    let (s, v) = Call::post("/v1/route/missing?org=wdnr").send(&app).await;
    assert_eq!(s, StatusCode::NOT_FOUND, "{v}");
    let (s, v) = Call::post(format!("/v1/route/{}", run.run_id)).send(&app).await;
    assert_eq!((s, v["field"].as_str()), (StatusCode::BAD_REQUEST, Some("org")));
    let (s, v) = Call::post("/v1/runs").text("{not json").send(&app).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::BAD_REQUEST, Some("invalid_json")));

    let q = ok(&app, Call::post(format!("/v1/route/{}?org=wdnr", run.run_id))).await;
    let det = q["items"][0]["detection_id"].as_str().unwrap().to_string();
    let (s, v) = Call::post(format!("/v1/screening/{det}")).json(&json!({"decision": "reject"})).send(&app).await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "reject without a reason: {v}");
    let accept = json!({"decision": "accept", "decided_on": "2023-03-01"});
    ok(&app, Call::post(format!("/v1/screening/{det}")).json(&accept)).await;
    let (s, v) = Call::post(format!("/v1/screening/{det}")).json(&accept).send(&app).await;
    assert_eq!(s, StatusCode::CONFLICT, "double screening: {v}");
}

#[tokio::test]
async fn idempotency_key_replays_original_result() {
    let sc = Scenario::build();
    let app = memory_app();
    ok(&app, Call::post("/v1/registry").json(&sc.registry)).await;
    let (s1, v1) = Call::post("/v1/runs").json(&sc.runs[0]).key("k-1").send(&app).await;
    let (s2, v2) = Call::post("/v1/runs").json(&sc.runs[0]).key("k-1").send(&app).await;
    assert_eq!((s1, &v1), (s2, &v2));
    assert_eq!(s1, StatusCode::CREATED);
    let (s, v) = Call::post("/v1/runs").json(&sc.runs[1]).key("k-1").send(&app).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::CONFLICT, Some("idempotency_key_reused")));
    let health = ok(&app, Call::get("/v1/health")).await;
    assert_eq!(health["last_seq"], 2);
}

#[tokio::test]
async fn multipart_registry_upload() {
    let sc = Scenario::build();
    let app = memory_app();
    let boundary = "XyZbOuNdArY";
    let mut body = String::new();
    for (name, v) in [
        ("facilities", serde_json::to_string(&sc.registry.facilities).unwrap()),
        ("fields", sc.registry.fields.to_string()),
        ("verifiers", serde_json::to_string(&sc.registry.verifiers).unwrap()),
    ] {
        body.push_str(&format!(
            "--{boundary}\r\nContent-Disposition: form-data; name=\"{name}\"; filename=\"{name}.json\"\r\nContent-Type: application/json\r\n\r\n{v}\r\n"
        ));
    }
    body.push_str(&format!("--{boundary}--\r\n"));
    let mut c = Call::post("/v1/registry");
    c.body = Body::from(body);
    c.content_type = Some(format!("multipart/form-data; boundary={boundary}"));
    let (s, v) = c.send(&app).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["facilities"], sc.registry.facilities.len());
}

#[tokio::test]
async fn restart_replays_to_identical_reports() {
    let sc = Scenario::build();
    let dir = tempfile::tempdir().unwrap();
    let names = ["compliance", "confirmation_by_bucket", "agreement", "process", "incidentals"];
    let mut before = Vec::new();
    {
        let app = router(disk_service(dir.path()));
        load_fixture(&app, &sc).await;
        for n in names {
            before.push(serde_json::to_vec(&ok(&app, Call::get(format!("/v1/reports/{n}"))).await).unwrap());
        }
    }
    // A torn append from a crash mid-batch is dropped on reopen.
    use std::io::Write;
    let mut f = std::fs::OpenOptions::new().append(true).open(dir.path().join("events.jsonl")).unwrap();
    f.write_all(b"{\"seq\":999999,\"kind\":\"resp").unwrap();
    drop(f);
    let app = router(disk_service(dir.path()));
    for (n, b) in names.iter().zip(&before) {
        let v = ok(&app, Call::get(format!("/v1/reports/{n}"))).await;
        assert_eq!(&serde_json::to_vec(&v).unwrap(), b, "{n}");
    }
}

#[tokio::test]
async fn idempotency_survives_restart() {
    let sc = Scenario::build();
    let dir = tempfile::tempdir().unwrap();
    let first = {
        let app = router(disk_service(dir.path()));
        ok(&app, Call::post("/v1/registry").json(&sc.registry)).await;
        Call::post("/v1/runs").json(&sc.runs[0]).key("run-key").send(&app).await
    };
    let app = router(disk_service(dir.path()));
    let again = Call::post("/v1/runs").json(&sc.runs[0]).key("run-key").send(&app).await;
    assert_eq!(first, again);
}

#[tokio::test]
async fn empty_log_gives_empty_state() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(disk_service(dir.path()));
    let h = ok(&app, Call::get("/v1/health")).await;
    assert_eq!(h["last_seq"], 0);
    let v = ok(&app, Call::get("/v1/screening")).await;
    assert_eq!(v, json!([]));
}
