mod backend;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use landtriage_core::detections::{IncidentalReport, ModelRun};
use landtriage_core::fieldops::{self, Determination};
use landtriage_core::fixture::{Scenario, ScreeningCall};
use landtriage_core::registry::{Org, RegistryDocs};
use landtriage_core::report::{Report, ReportName, ReportParams};
use landtriage_core::routing::{Decision, RejectReason};
use landtriage_core::sim::{self, SimParams, TprCurve};
use landtriage_core::{Config, Engine, Error};

use backend::{Backend, CliError, CliResult, Remote};

#[derive(Parser)]
#[command(name = "landtriage", version, about = "Detection triage, dispatch and trial reporting")]
struct Cli {
    /// Print machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    json: bool,
    /// Local data directory; overrides the config file and environment.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base URL of a running service, e.g. http://127.0.0.1:8080.
    #[arg(long, global = true)]
    remote: Option<String>,
    /// Idempotency-Key sent with remote writes.
    #[arg(long, global = true)]
    idempotency_key: Option<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Load the facility, field and verifier registry.
    Ingest {
        #[arg(long)]
        facilities: PathBuf,
        #[arg(long)]
        fields: PathBuf,
        #[arg(long)]
        verifiers: PathBuf,
    },
    /// Model runs.
    Run {
        #[command(subcommand)]
        cmd: RunCmd,
    },
    /// Detection files.
    Detections {
        #[command(subcommand)]
        cmd: DetectionsCmd,
    },
    /// Route a run's detections to one organization.
    Route {
        #[arg(long)]
        run: String,
        #[arg(long, value_enum)]
        org: OrgArg,
    },
    /// Record a screening decision, or a file of them.
    Screen(ScreenArgs),
    /// Import field responses from CSV.
    Respond {
        #[arg(long)]
        file: PathBuf,
        /// Replace existing responses instead of adding new ones.
        #[arg(long)]
        amend: bool,
    },
    /// Import regulator determinations from line-delimited JSON.
    Determine {
        #[arg(long)]
        file: PathBuf,
    },
    /// Import incidental reports from line-delimited JSON.
    Incidentals {
        #[arg(long)]
        file: PathBuf,
    },
    /// Print a trial report.
    Report(ReportArgs),
    /// Run the seeded simulator; never touches the data directory.
    Simulate(SimArgs),
    /// Serve the HTTP API over the data directory.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
    /// Write the reference scenario to files and/or load it.
    Fixture {
        /// Directory to write the scenario files into.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Load the scenario into the data directory or remote service.
        #[arg(long)]
        load: bool,
    },
}

#[derive(Subcommand)]
enum RunCmd {
    /// Register one run, or every run in a JSON array file.
    Add {
        #[arg(long, required_unless_present = "file", requires_all = ["imagery_date", "dispatched"])]
        id: Option<String>,
        #[arg(long)]
        imagery_date: Option<NaiveDate>,
        #[arg(long)]
        dispatched: Option<NaiveDate>,
        #[arg(long)]
        images: Option<u64>,
        #[arg(long, conflicts_with = "id")]
        file: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum DetectionsCmd {
    Add {
        #[arg(long)]
        run: String,
        #[arg(long)]
        file: PathBuf,
    },
}

#[derive(Args)]
struct ScreenArgs {
    #[arg(long, required_unless_present = "file", requires = "decision")]
    detection: Option<String>,
    #[arg(long, value_enum)]
    decision: Option<DecisionArg>,
    #[arg(long, value_enum)]
    reason: Option<ReasonArg>,
    #[arg(long)]
    note: Option<String>,
    /// Decision date; defaults to today.
    #[arg(long)]
    date: Option<NaiveDate>,
    /// Line-delimited decisions {detection_id, decision, reason?, decided_on}.
    #[arg(long, conflicts_with = "detection")]
    file: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(value_enum)]
    name: ReportArg,
    #[arg(long, value_enum)]
    org: Option<OrgArg>,
    #[arg(long)]
    screened_only: bool,
    /// Comma-separated bucket edges.
    #[arg(long)]
    edges: Option<String>,
    /// Comma-separated categories left out of the group comparison.
    #[arg(long)]
    exclude: Option<String>,
    /// Also write the table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 40)]
    facilities: usize,
    #[arg(long, default_value_t = 6)]
    runs: usize,
    #[arg(long, default_value_t = 120)]
    detections_per_run: usize,
    /// Piecewise-linear score:rate pairs, e.g. 0:0.01,0.5:0.08,1:0.6.
    #[arg(long)]
    tpr_curve: Option<TprCurve>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrgArg {
    Wdnr,
    Elpc,
}

impl From<OrgArg> for Org {
    fn from(o: OrgArg) -> Org {
        match o {
            OrgArg::Wdnr => Org::Wdnr,
            OrgArg::Elpc => Org::Elpc,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DecisionArg {
    Accept,
    Reject,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReasonArg {
    Vegetation,
    Building,
    Roadway,
    Shadow,
    Other,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportArg {
    Confirmation,
    Lift,
    Agreement,
    Compliance,
    Process,
    Groups,
    Crosstab,
    Incidentals,
    Totals,
}

impl From<ReportArg> for ReportName {
    fn from(r: ReportArg) -> ReportName {
        match r {
            ReportArg::Confirmation => ReportName::ConfirmationByBucket,
            ReportArg::Lift => ReportName::Lift,
            ReportArg::Agreement => ReportName::Agreement,
            ReportArg::Compliance => ReportName::Compliance,
            ReportArg::Process => ReportName::Process,
            ReportArg::Groups => ReportName::GroupComparison,
            ReportArg::Crosstab => ReportName::ConfidenceCrosstab,
            ReportArg::Incidentals => ReportName::Incidentals,
            ReportArg::Totals => ReportName::Totals,
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let json_out = cli.json;
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            if json_out {
                println!("{}", e.to_json());
            }
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn config(cli: &Cli) -> CliResult<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::from_file(p)?,
        None => Config::default(),
    }
    .with_env();
    if let Some(d) = &cli.data_dir {
        cfg.data_dir = d.clone();
    }
    Ok(cfg)
}

fn backend(cli: &Cli) -> CliResult<Backend> {
    Ok(match &cli.remote {
        Some(url) => Backend::Remote(Remote::new(url, cli.idempotency_key.clone())),
        None => Backend::Local(Box::new(Engine::open(config(cli)?)?)),
    })
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read(path)?)
        .map_err(|e| Error::validation("malformed_document", path.display().to_string(), e.to_string()).into())
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    read(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::validation("malformed_line", format!("{}:{}", path.display(), i + 1), e.to_string()).into())
        })
        .collect()
}

/// Output of one command: JSON for `--json`, text otherwise.
struct Out {
    json: Value,
    text: String,
}

impl Out {
    fn new(json: Value, text: impl Into<String>) -> Out {
        Out { json, text: text.into() }
    }
}

fn run(cli: Cli) -> CliResult<String> {
    let out = match &cli.cmd {
        Cmd::Simulate(a) => simulate(a)?,
        Cmd::Serve { addr } => return serve(&cli, *addr).map(|_| String::new()),
        Cmd::Fixture { out, load } => fixture(&cli, out.as_deref(), *load)?,
        Cmd::Report(a) => report(&backend(&cli)?, a)?,
        cmd => {
            let mut b = backend(&cli)?;
            command(&mut b, cmd)?
        }
    };
    Ok(if cli.json {
        format!("{}\n", serde_json::to_string_pretty(&out.json)?)
    } else {
        out.text
    })
}

fn command(b: &mut Backend, cmd: &Cmd) -> CliResult<Out> {
    Ok(match cmd {
        Cmd::Ingest { facilities, fields, verifiers } => {
            let docs = RegistryDocs::from_json(&read(facilities)?, &read(fields)?, &read(verifiers)?)?;
            let v = b.load_registry(docs)?;
            let text = format!("loaded registry: {}\n", summary_line(&v));
            Out::new(v, text)
        }
        Cmd::Run { cmd: RunCmd::Add { id, imagery_date, dispatched, images, file } } => {
            let runs: Vec<ModelRun> = match (file, id) {
                (Some(f), _) => read_json(f)?,
                (None, Some(id)) => vec![ModelRun {
                    run_id: id.clone(),
                    imagery_date: imagery_date.ok_or_else(|| CliError::Usage("--imagery-date is required".into()))?,
                    dispatched_on: dispatched.ok_or_else(|| CliError::Usage("--dispatched is required".into()))?,
                    images_scanned: *images,
                }],
                (None, None) => return Err(CliError::Usage("give --id or --file".into())),
            };
            let mut all = Vec::new();
            let mut text = String::new();
            for r in runs {
                let id = r.run_id.clone();
                let v = b.add_run(r)?;
                text.push_str(&format!("registered run {id}\n"));
                for w in v["warnings"].as_array().into_iter().flatten() {
                    text.push_str(&format!("  warning: {}\n", w.as_str().unwrap_or_default()));
                }
                all.push(v);
            }
            Out::new(Value::Array(all), text)
        }
        Cmd::Detections { cmd: DetectionsCmd::Add { run, file } } => {
            let v = b.add_detections(run, read(file)?)?;
            let mut text = format!(
                "{run}: accepted {}, rejected {}\n",
                v["accepted"],
                v["rejected"].as_array().map_or(0, Vec::len)
            );
            for r in v["rejected"].as_array().into_iter().flatten() {
                text.push_str(&format!("  line {}: {} ({})\n", r["line"], r["reason"].as_str().unwrap_or_default(), r["message"].as_str().unwrap_or_default()));
            }
            Out::new(v, text)
        }
        Cmd::Route { run, org } => {
            let v = b.route(run, (*org).into())?;
            let text = match v["kind"].as_str() {
                Some("queue") => format!("{run}: queued {} detections for screening\n", v["items"].as_array().map_or(0, Vec::len)),
                _ => format!("{run}: created {} assignments\n", v["assignments"].as_array().map_or(0, Vec::len)),
            };
            Out::new(v, text)
        }
        Cmd::Screen(a) => {
            let calls: Vec<ScreeningCall> = match (&a.file, &a.detection) {
                (Some(f), _) => read_jsonl(f)?,
                (None, Some(d)) => {
                    let decision = match a.decision {
                        Some(DecisionArg::Accept) => Decision::Accept,
                        Some(DecisionArg::Reject) => Decision::Reject,
                        None => return Err(CliError::Usage("--decision is required".into())),
                    };
                    let reason = a.reason.map(|r| match r {
                        ReasonArg::Vegetation => RejectReason::Vegetation,
                        ReasonArg::Building => RejectReason::Building,
                        ReasonArg::Roadway => RejectReason::Roadway,
                        ReasonArg::Shadow => RejectReason::Shadow,
                        ReasonArg::Other => RejectReason::Other,
                    });
                    let v = b.screen(d, decision, reason, a.note.clone(), a.date)?;
                    let text = format!("{d}: {}\n", v["status"].as_str().unwrap_or_default());
                    return Ok(Out::new(v, text));
                }
                (None, None) => return Err(CliError::Usage("give --detection or --file".into())),
            };
            let mut all = Vec::new();
            for c in calls {
                all.push(b.screen(&c.detection_id, c.decision, c.reason, None, Some(c.decided_on))?);
            }
            let text = format!("recorded {} screening decisions\n", all.len());
            Out::new(Value::Array(all), text)
        }
        Cmd::Respond { file, amend } => {
            let rows = fieldops::parse_response_csv(&read(file)?)?;
            let mut all = Vec::new();
            for r in rows {
                all.push(b.respond(r, *amend)?);
            }
            let text = format!("{} {} responses\n", if *amend { "amended" } else { "recorded" }, all.len());
            Out::new(Value::Array(all), text)
        }
        Cmd::Determine { file } => {
            let rows: Vec<Determination> = read_jsonl(file)?;
            let mut all = Vec::new();
            for d in rows {
                all.push(b.determine(d)?);
            }
            let text = format!("recorded {} determinations\n", all.len());
            Out::new(Value::Array(all), text)
        }
        Cmd::Incidentals { file } => {
            let rows: Vec<IncidentalReport> = read_jsonl(file)?;
            let mut all = Vec::new();
            for r in rows {
                all.push(b.incidental(r)?);
            }
            let text = format!("recorded {} incidental reports\n", all.len());
            Out::new(Value::Array(all), text)
        }
        Cmd::Report(_) | Cmd::Simulate(_) | Cmd::Serve { .. } | Cmd::Fixture { .. } => unreachable!("handled in run"),
    })
}

fn summary_line(v: &Value) -> String {
    v.as_object()
        .map(|o| o.iter().map(|(k, v)| format!("{k} {v}")).collect::<Vec<_>>().join(", "))
        .unwrap_or_default()
}

fn report(b: &Backend, a: &ReportArgs) -> CliResult<Out> {
    let mut pairs: Vec<(&str, String)> = Vec::new();
    if let Some(o) = a.org {
        pairs.push(("org", Org::from(o).as_str().to_string()));
    }
    if a.screened_only {
        pairs.push(("screened_only", "true".into()));
    }
    if let Some(e) = &a.edges {
        pairs.push(("edges", e.clone()));
    }
    if let Some(x) = &a.exclude {
        pairs.push(("exclude", x.clone()));
    }
    let params = ReportParams::from_pairs(pairs.iter().map(|(k, v)| (*k, v.as_str())))?;
    let r = b.report(a.name.into(), &params)?;
    if let Some(path) = &a.csv {
        std::fs::write(path, r.to_csv()?)?;
    }
    Ok(Out::new(serde_json::to_value(&r)?, r.to_text()))
}

fn simulate(a: &SimArgs) -> CliResult<Out> {
    let p = SimParams {
        seed: a.seed,
        facilities: a.facilities,
        runs: a.runs,
        detections_per_run: a.detections_per_run,
        tpr_curve: a.tpr_curve.clone().unwrap_or_default(),
        ..SimParams::default()
    };
    let (_, out) = sim::simulate(&p)?;
    let real = out.truth.iter().filter(|t| t.real).count();
    let mut text = format!(
        "seed {}: {} detections, {} real; state digest {}\n\nadvocacy confirmation by score\n",
        p.seed,
        out.truth.len(),
        real,
        out.state_digest
    );
    text.push_str(&Report::ConfirmationByBucket(out.elpc.clone()).to_text());
    text.push_str("\nregulator confirmation by score\n");
    text.push_str(&Report::ConfirmationByBucket(out.wdnr.clone()).to_text());
    Ok(Out::new(serde_json::to_value(&out)?, text))
}

fn serve(cli: &Cli, addr: SocketAddr) -> CliResult<()> {
    if cli.remote.is_some() {
        return Err(CliError::Usage("serve runs locally; drop --remote".into()));
    }
    let svc = landtriage_service::Service::open(config(cli)?)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(landtriage_service::serve(svc, addr))?;
    Ok(())
}

fn fixture(cli: &Cli, out: Option<&Path>, load: bool) -> CliResult<Out> {
    if out.is_none() && !load {
        return Err(CliError::Usage("give --out DIR, --load, or both".into()));
    }
    let sc = Scenario::build();
    let mut text = String::new();
    if let Some(dir) = out {
        sc.write_files(dir)?;
        text.push_str(&format!("wrote scenario files to {}\n", dir.display()));
    }
    if load {
        let mut b = backend(cli)?;
        b.load_registry(sc.registry.clone())?;
        for (run, (run_id, det)) in sc.runs.iter().zip(&sc.detection_files) {
            b.add_run(run.clone())?;
            b.add_detections(run_id, det.clone())?;
            b.route(run_id, Org::Wdnr)?;
            b.route(run_id, Org::Elpc)?;
        }
        for s in &sc.screenings {
            b.screen(&s.detection_id, s.decision, s.reason, None, Some(s.decided_on))?;
        }
        for r in &sc.responses {
            b.respond(r.clone(), false)?;
        }
        for d in &sc.determinations {
            b.determine(d.clone())?;
        }
        for i in &sc.incidentals {
            b.incidental(i.clone())?;
        }
        text.push_str(&format!(
            "loaded scenario: {} runs, {} responses, {} determinations, {} incidental reports\n",
            sc.runs.len(),
            sc.responses.len(),
            sc.determinations.len(),
            sc.incidentals.len()
        ));
    }
    let json = json!({"out": out.map(|p| p.display().to_string()), "loaded": load, "runs": sc.runs.len()});
    Ok(Out::new(json, text))
}
