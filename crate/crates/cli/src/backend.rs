//! Where commands are executed: an engine on a local data directory, or a
//! running service.

use std::fmt;

use chrono::NaiveDate;
use serde::Serialize;
use serde_json::{json, Value};

use landtriage_core::detections::{IncidentalReport, ModelRun};
use landtriage_core::fieldops::{Determination, FieldResponse};
use landtriage_core::registry::{Org, RegistryDocs};
use landtriage_core::report::{self, Report, ReportName, ReportParams};
use landtriage_core::routing::{Decision, RejectReason};
use landtriage_core::{Engine, Error};

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    /// Error body returned by the service.
    Remote { status: u16, code: String, message: String },
    Transport(String),
    Usage(String),
}

impl CliError {
    /// 0 ok, 1 internal, 2 usage or not found, 3 validation or conflict.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(Error::NotFound { .. }) | CliError::Usage(_) => 2,
            CliError::Core(Error::Validation { .. } | Error::Conflict { .. } | Error::Json(_) | Error::Csv(_)) => 3,
            CliError::Core(_) | CliError::Transport(_) => 1,
            CliError::Remote { status, .. } => match status {
                404 => 2,
                400 | 409 => 3,
                _ => 1,
            },
        }
    }

    pub fn code(&self) -> &str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::Remote { code, .. } => code,
            CliError::Transport(_) => "transport",
            CliError::Usage(_) => "usage",
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            CliError::Core(e) => landtriage_service::error_body(e),
            other => json!({"code": other.code(), "field": null, "message": other.to_string()}),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Remote { status, message, .. } => write!(f, "{message} (HTTP {status})"),
            CliError::Transport(m) | CliError::Usage(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(Error::Json(e))
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub enum Backend {
    Local(Box<Engine>),
    Remote(Remote),
}

pub struct Remote {
    base: String,
    client: reqwest::blocking::Client,
    idempotency_key: Option<String>,
}

impl Remote {
    pub fn new(base: &str, idempotency_key: Option<String>) -> Remote {
        Remote { base: base.trim_end_matches('/').to_string(), client: reqwest::blocking::Client::new(), idempotency_key }
    }

    fn finish(resp: reqwest::Result<reqwest::blocking::Response>) -> CliResult<Value> {
        let resp = resp.map_err(|e| CliError::Transport(e.to_string()))?;
        let status = resp.status();
        let body: Value = resp.json().map_err(|e| CliError::Transport(format!("unreadable response: {e}")))?;
        if status.is_success() {
            return Ok(body);
        }
        let text = |k: &str| body.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
        Err(CliError::Remote { status: status.as_u16(), code: text("code"), message: text("message") })
    }

    fn post(&self, path: &str, query: &[(String, String)], body: Option<reqwest::blocking::Body>, ct: &str) -> CliResult<Value> {
        let mut req = self.client.post(format!("{}{path}", self.base)).query(query);
        if let Some(b) = body {
            req = req.header("content-type", ct).body(b);
        }
        if let Some(k) = &self.idempotency_key {
            req = req.header(landtriage_service::IDEMPOTENCY_HEADER, k);
        }
        Self::finish(req.send())
    }

    fn post_json<T: Serialize>(&self, path: &str, v: &T) -> CliResult<Value> {
        self.post(path, &[], Some(serde_json::to_vec(v)?.into()), "application/json")
    }

    fn get(&self, path: &str, query: &[(String, String)]) -> CliResult<Value> {
        Self::finish(self.client.get(format!("{}{path}", self.base)).query(query).send())
    }
}

fn value<T: Serialize>(v: T) -> CliResult<Value> {
    Ok(serde_json::to_value(v)?)
}

impl Backend {
    pub fn load_registry(&mut self, docs: RegistryDocs) -> CliResult<Value> {
        match self {
            Backend::Local(e) => value(e.load_registry(docs)?),
            Backend::Remote(r) => r.post_json("/v1/registry", &docs),
        }
    }

    pub fn add_run(&mut self, run: ModelRun) -> CliResult<Value> {
        match self {
            Backend::Local(e) => {
                let warnings = e.register_run(run.clone())?;
                Ok(json!({"run": run, "warnings": warnings}))
            }
            Backend::Remote(r) => r.post_json("/v1/runs", &run),
        }
    }

    pub fn add_detections(&mut self, run_id: &str, text: String) -> CliResult<Value> {
        match self {
            Backend::Local(e) => value(e.ingest_detections(run_id, &text)?),
            Backend::Remote(r) => r.post(&format!("/v1/runs/{run_id}/detections"), &[], Some(text.into()), "application/x-ndjson"),
        }
    }

    pub fn route(&mut self, run_id: &str, org: Org) -> CliResult<Value> {
        match self {
            Backend::Local(e) => value(e.route(run_id, org)?),
            Backend::Remote(r) => r.post(&format!("/v1/route/{run_id}"), &[("org".into(), org.as_str().into())], None, ""),
        }
    }

    pub fn screen(
        &mut self,
        detection_id: &str,
        decision: Decision,
        reason: Option<RejectReason>,
        note: Option<String>,
        decided_on: Option<NaiveDate>,
    ) -> CliResult<Value> {
        match self {
            Backend::Local(e) => {
                let on = decided_on.unwrap_or_else(|| e.clock().now().date_naive());
                value(e.screen(detection_id, decision, reason, note, on)?)
            }
            Backend::Remote(r) => r.post_json(
                &format!("/v1/screening/{detection_id}"),
                &json!({"decision": decision, "reason": reason, "note": note, "decided_on": decided_on}),
            ),
        }
    }

    pub fn respond(&mut self, resp: FieldResponse, amend: bool) -> CliResult<Value> {
        match self {
            Backend::Local(e) if amend => value(e.amend_response(resp)?),
            Backend::Local(e) => value(e.submit_response(resp)?),
            Backend::Remote(r) if amend => r.post_json(&format!("/v1/responses/{}/amend", resp.assignment_id), &resp),
            Backend::Remote(r) => r.post_json("/v1/responses", &resp),
        }
    }

    pub fn determine(&mut self, d: Determination) -> CliResult<Value> {
        match self {
            Backend::Local(e) => value(e.submit_determination(d)?),
            Backend::Remote(r) => r.post_json("/v1/determinations", &d),
        }
    }

    pub fn incidental(&mut self, i: IncidentalReport) -> CliResult<Value> {
        match self {
            Backend::Local(e) => value(e.add_incidental(i)?),
            Backend::Remote(r) => r.post_json("/v1/incidentals", &i),
        }
    }

    pub fn report(&self, name: ReportName, params: &ReportParams) -> CliResult<Report> {
        match self {
            Backend::Local(e) => Ok(report::generate(e.state(), e.config(), name, params, e.exec())?),
            Backend::Remote(r) => {
                let v = r.get(&format!("/v1/reports/{}", name.as_str()), &params.to_pairs())?;
                Ok(serde_json::from_value(v)?)
            }
        }
    }
}
