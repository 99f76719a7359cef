//! Event-sourced engine: commands validate against [`State`], append an
//! event to the log, then apply it.

mod event;
mod state;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

pub use event::{AssignmentsCreated, DetectionsIngested, Event, EventKind, EventRecord, ScreeningDecided, ScreeningQueued};
pub use state::State;

use crate::config::Config;
use crate::detections::{IncidentalReport, ModelRun, RecordError};
use crate::error::{Error, Result};
use crate::eventlog::{self, EventLog};
use crate::exec::Exec;
use crate::fieldops::{self, Determination, FieldResponse, PacketManifest};
use crate::registry::{LoadSummary, Org, RegistryDocs};
use crate::routing::{Assignment, Decision, RejectReason, ScreeningItem};

/// Source of `recorded_at` timestamps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Clock {
    System,
    /// Always returns the given instant; used for reproducible logs.
    Fixed(DateTime<Utc>),
}

impl Clock {
    pub fn now(self) -> DateTime<Utc> {
        match self {
            Clock::System => Utc::now(),
            Clock::Fixed(t) => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub accepted: usize,
    pub rejected: Vec<RecordError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RouteResult {
    Queue { run_id: String, items: Vec<ScreeningItem> },
    Assignments { run_id: String, assignments: Vec<Assignment> },
}

#[derive(Debug)]
pub struct Engine {
    state: State,
    log: Option<EventLog>,
    cfg: Config,
    clock: Clock,
    exec: Exec,
}

impl Engine {
    /// Engine without persistence.
    pub fn in_memory(cfg: Config) -> Result<Engine> {
        cfg.validate()?;
        Ok(Engine {
            state: State::default(),
            log: None,
            cfg,
            clock: Clock::System,
            exec: Exec::default(),
        })
    }

    /// Opens the data directory, recovering state from snapshot and log.
    pub fn open(cfg: Config) -> Result<Engine> {
        cfg.validate()?;
        let (log, recovered) = EventLog::open(&cfg.data_dir, cfg.durability)?;
        let last = recovered.records.last().map_or(0, |r| r.seq);
        let mut state = match eventlog::read_snapshot(&cfg.data_dir) {
            Some(s) if s.last_seq <= last => s,
            Some(s) => {
                warn!(snapshot = s.last_seq, log = last, "snapshot is ahead of the log; replaying from scratch");
                State::default()
            }
            None => State::default(),
        };
        let from = state.last_seq;
        for rec in recovered.records.iter().filter(|r| r.seq > from) {
            state.apply(&rec.event()?).map_err(|e| Error::CorruptLog {
                line: rec.seq as usize,
                message: e.to_string(),
            })?;
            state.last_seq = rec.seq;
        }
        info!(events = last, data_dir = %cfg.data_dir.display(), "engine state recovered");
        Ok(Engine {
            state,
            log: Some(log),
            cfg,
            clock: Clock::System,
            exec: Exec::default(),
        })
    }

    /// Rebuilds state from raw records, as replay does.
    pub fn replay(records: &[EventRecord]) -> Result<State> {
        let mut state = State::default();
        for (i, rec) in records.iter().enumerate() {
            if rec.seq != i as u64 + 1 {
                return Err(Error::CorruptLog {
                    line: i + 1,
                    message: format!("sequence gap: expected {}, found {}", i + 1, rec.seq),
                });
            }
            state.apply(&rec.event()?)?;
            state.last_seq = rec.seq;
        }
        Ok(state)
    }

    pub fn with_clock(mut self, clock: Clock) -> Engine {
        self.clock = clock;
        self
    }

    pub fn with_exec(mut self, exec: Exec) -> Engine {
        self.exec = exec;
        self
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    pub fn clock(&self) -> Clock {
        self.clock
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    /// Appends then applies. Events come from the planners, which have
    /// already checked them against the state, so `apply` cannot refuse.
    fn commit(&mut self, ev: Event) -> Result<()> {
        let seq = self.state.last_seq + 1;
        let rec = EventRecord::new(seq, self.clock.now(), &ev);
        if let Some(log) = &mut self.log {
            log.append(&rec)?;
        }
        self.state.apply(&ev)?;
        self.state.last_seq = seq;
        if self.cfg.snapshot_every > 0 && seq.is_multiple_of(self.cfg.snapshot_every) && self.log.is_some() {
            if let Err(e) = eventlog::write_snapshot(&self.cfg.data_dir, &self.state) {
                warn!(error = %e, "snapshot failed; the log remains authoritative");
            }
        }
        Ok(())
    }

    pub fn load_registry(&mut self, docs: RegistryDocs) -> Result<LoadSummary> {
        let (ev, summary) = self.state.plan_registry(docs)?;
        self.commit(ev)?;
        Ok(summary)
    }

    /// Registers a run and returns non-fatal warnings.
    pub fn register_run(&mut self, run: ModelRun) -> Result<Vec<String>> {
        let (ev, warnings) = self.state.plan_run(run)?;
        for w in &warnings {
            warn!("{w}");
        }
        self.commit(ev)?;
        Ok(warnings)
    }

    pub fn ingest_detections(&mut self, run_id: &str, text: &str) -> Result<IngestSummary> {
        let (ev, out) = self.state.plan_ingest(run_id, text, self.exec)?;
        if let Some(ev) = ev {
            self.commit(ev)?;
        }
        Ok(IngestSummary {
            accepted: out.accepted.len(),
            rejected: out.rejected,
        })
    }

    pub fn route(&mut self, run_id: &str, org: Org) -> Result<RouteResult> {
        let ev = self.state.plan_route(run_id, org, &self.cfg, self.exec)?;
        let out = match &ev {
            Event::ScreeningQueued(q) => RouteResult::Queue {
                run_id: q.run_id.clone(),
                items: q.items.clone(),
            },
            Event::AssignmentCreated(a) => RouteResult::Assignments {
                run_id: a.run_id.clone(),
                assignments: a.assignments.clone(),
            },
            _ => unreachable!("routing plans only queue or assignment events"),
        };
        self.commit(ev)?;
        Ok(out)
    }

    pub fn screen(
        &mut self,
        detection_id: &str,
        decision: Decision,
        reason: Option<RejectReason>,
        note: Option<String>,
        decided_on: NaiveDate,
    ) -> Result<ScreeningItem> {
        let ev = self.state.plan_screen(detection_id, decision, reason, note, decided_on)?;
        self.commit(ev)?;
        Ok(self.state.screening[detection_id].clone())
    }

    pub fn submit_response(&mut self, r: FieldResponse) -> Result<FieldResponse> {
        let id = r.assignment_id.clone();
        let ev = self.state.plan_response(r)?;
        self.commit(ev)?;
        Ok(self.state.responses[&id].clone())
    }

    /// Replaces the current response while keeping the old one in history.
    pub fn amend_response(&mut self, r: FieldResponse) -> Result<FieldResponse> {
        let id = r.assignment_id.clone();
        let ev = self.state.plan_amend(r)?;
        self.commit(ev)?;
        Ok(self.state.responses[&id].clone())
    }

    pub fn submit_determination(&mut self, d: Determination) -> Result<Determination> {
        let id = d.assignment_id.clone();
        let ev = self.state.plan_determination(d, &self.cfg)?;
        self.commit(ev)?;
        Ok(self.state.determinations[&id].clone())
    }

    pub fn add_incidental(&mut self, r: IncidentalReport) -> Result<IncidentalReport> {
        let id = r.report_id.clone();
        let ev = self.state.plan_incidental(r)?;
        self.commit(ev)?;
        Ok(self.state.incidentals[&id].clone())
    }

    pub fn packet(&self, assignment_id: &str) -> Result<PacketManifest> {
        let a = self.state.assignment(assignment_id)?;
        let d = self.state.detection(&a.detection_id)?;
        let run = self.state.run(&d.run_id)?;
        Ok(fieldops::build_packet(a, d, run))
    }
}
