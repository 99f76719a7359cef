//! Named reports with JSON, aligned-text and CSV renderings.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analytics::{
    self, AgreementTable, BucketedRates, ComplianceBreakdown, ConfidenceCrosstab, GroupComparison, LiftMetrics,
    ProcessMetrics, TrialReport,
};
use crate::compliance::Compliance;
use crate::config::Config;
use crate::detections::IncidentalBreakdown;
use crate::engine::State;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::registry::Org;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportName {
    ConfirmationByBucket,
    Lift,
    Agreement,
    Compliance,
    Process,
    GroupComparison,
    ConfidenceCrosstab,
    Incidentals,
    Totals,
}

impl ReportName {
    pub const ALL: [ReportName; 9] = [
        ReportName::ConfirmationByBucket,
        ReportName::Lift,
        ReportName::Agreement,
        ReportName::Compliance,
        ReportName::Process,
        ReportName::GroupComparison,
        ReportName::ConfidenceCrosstab,
        ReportName::Incidentals,
        ReportName::Totals,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReportName::ConfirmationByBucket => "confirmation_by_bucket",
            ReportName::Lift => "lift",
            ReportName::Agreement => "agreement",
            ReportName::Compliance => "compliance",
            ReportName::Process => "process",
            ReportName::GroupComparison => "group_comparison",
            ReportName::ConfidenceCrosstab => "confidence_crosstab",
            ReportName::Incidentals => "incidentals",
            ReportName::Totals => "totals",
        }
    }
}

impl FromStr for ReportName {
    type Err = Error;

    /// Accepts the canonical names and the short CLI aliases.
    fn from_str(s: &str) -> Result<ReportName> {
        Ok(match s {
            "confirmation_by_bucket" | "confirmation" => ReportName::ConfirmationByBucket,
            "lift" => ReportName::Lift,
            "agreement" => ReportName::Agreement,
            "compliance" => ReportName::Compliance,
            "process" => ReportName::Process,
            "group_comparison" | "groups" => ReportName::GroupComparison,
            "confidence_crosstab" | "crosstab" => ReportName::ConfidenceCrosstab,
            "incidentals" => ReportName::Incidentals,
            "totals" => ReportName::Totals,
            _ => return Err(Error::not_found("report", s)),
        })
    }
}

/// Optional knobs shared by the reports.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportParams {
    /// Organization for bucketed rates; defaults to the advocacy network.
    pub org: Option<Org>,
    pub screened_only: bool,
    pub edges: Option<Vec<f64>>,
    /// Categories left out of the group comparison.
    pub exclude: Option<Vec<Compliance>>,
}

impl ReportParams {
    /// Reads `org`, `screened_only`, `edges` and `exclude` from query pairs;
    /// lists are comma separated.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<ReportParams> {
        fn enum_value<T: serde::de::DeserializeOwned>(field: &str, v: &str) -> Result<T> {
            serde_json::from_value(serde_json::Value::String(v.trim().to_string()))
                .map_err(|_| Error::validation("invalid_param", field, format!("unknown value '{v}'")))
        }
        let mut p = ReportParams::default();
        for (k, v) in pairs {
            match k {
                "org" => p.org = Some(enum_value("org", v)?),
                "screened_only" => {
                    p.screened_only = v
                        .parse()
                        .map_err(|_| Error::validation("invalid_param", "screened_only", format!("'{v}' is not true or false")))?
                }
                "edges" => {
                    let edges = v
                        .split(',')
                        .map(|e| {
                            e.trim()
                                .parse::<f64>()
                                .map_err(|_| Error::validation("invalid_param", "edges", format!("'{e}' is not a number")))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    p.edges = Some(edges);
                }
                "exclude" => {
                    let cats = v
                        .split(',')
                        .filter(|c| !c.trim().is_empty())
                        .map(|c| enum_value("exclude", c))
                        .collect::<Result<Vec<_>>>()?;
                    p.exclude = Some(cats);
                }
                other => return Err(Error::validation("unknown_param", other, format!("unknown report parameter '{other}'"))),
            }
        }
        Ok(p)
    }

    /// Inverse of [`ReportParams::from_pairs`].
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let name = |v: serde_json::Value| v.as_str().unwrap_or_default().to_string();
        if let Some(org) = self.org {
            out.push(("org".into(), org.as_str().to_string()));
        }
        if self.screened_only {
            out.push(("screened_only".into(), "true".into()));
        }
        if let Some(e) = &self.edges {
            out.push(("edges".into(), e.iter().map(f64::to_string).collect::<Vec<_>>().join(",")));
        }
        if let Some(x) = &self.exclude {
            let names: Vec<String> = x.iter().map(|c| name(serde_json::to_value(c).expect("enum serializes"))).collect();
            out.push(("exclude".into(), names.join(",")));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "report", content = "data", rename_all = "snake_case")]
pub enum Report {
    ConfirmationByBucket(BucketedRates),
    Lift(LiftMetrics),
    Agreement(AgreementTable),
    Compliance(ComplianceBreakdown),
    Process(ProcessMetrics),
    GroupComparison(GroupComparison),
    ConfidenceCrosstab(ConfidenceCrosstab),
    Incidentals(IncidentalBreakdown),
    Totals(TrialReport),
}

pub fn generate(state: &State, cfg: &Config, name: ReportName, p: &ReportParams, exec: Exec) -> Result<Report> {
    let edges = p.edges.clone().unwrap_or_else(analytics::default_edges);
    Ok(match name {
        ReportName::ConfirmationByBucket => Report::ConfirmationByBucket(analytics::confirmation_by_bucket(
            state,
            p.org.unwrap_or(Org::Elpc),
            p.screened_only,
            &edges,
        )?),
        ReportName::Lift => Report::Lift(analytics::lift_from_state(state, cfg.reported_review_reduction)?),
        ReportName::Agreement => Report::Agreement(analytics::agreement_table(state)),
        ReportName::Compliance => Report::Compliance(analytics::compliance_breakdown(state)),
        ReportName::Process => Report::Process(analytics::process_metrics(state, &edges)?),
        ReportName::GroupComparison => {
            let excl = p.exclude.clone().unwrap_or_else(analytics::default_group_exclusions);
            Report::GroupComparison(analytics::group_comparison(state, &excl))
        }
        ReportName::ConfidenceCrosstab => Report::ConfidenceCrosstab(analytics::confidence_crosstab(state, &edges)?),
        ReportName::Incidentals => {
            Report::Incidentals(analytics::incidental_breakdown(state, &cfg.incidental_params(), exec))
        }
        ReportName::Totals => Report::Totals(analytics::trial_totals(state)),
    })
}

/// A rectangular rendering of a report.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub notes: Vec<String>,
}

fn rate3(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

fn pct1(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{:.1}%", v * 100.0))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

fn table(headers: &[&str], rows: Vec<Vec<String>>) -> Table {
    Table {
        headers: headers.iter().map(|h| h.to_string()).collect(),
        rows,
        notes: Vec::new(),
    }
}

impl Report {
    pub fn name(&self) -> ReportName {
        match self {
            Report::ConfirmationByBucket(_) => ReportName::ConfirmationByBucket,
            Report::Lift(_) => ReportName::Lift,
            Report::Agreement(_) => ReportName::Agreement,
            Report::Compliance(_) => ReportName::Compliance,
            Report::Process(_) => ReportName::Process,
            Report::GroupComparison(_) => ReportName::GroupComparison,
            Report::ConfidenceCrosstab(_) => ReportName::ConfidenceCrosstab,
            Report::Incidentals(_) => ReportName::Incidentals,
            Report::Totals(_) => ReportName::Totals,
        }
    }

    /// The report body alone, without the tag wrapper.
    pub fn body(&self) -> serde_json::Value {
        let v = match self {
            Report::ConfirmationByBucket(r) => serde_json::to_value(r),
            Report::Lift(r) => serde_json::to_value(r),
            Report::Agreement(r) => serde_json::to_value(r),
            Report::Compliance(r) => serde_json::to_value(r),
            Report::Process(r) => serde_json::to_value(r),
            Report::GroupComparison(r) => serde_json::to_value(r),
            Report::ConfidenceCrosstab(r) => serde_json::to_value(r),
            Report::Incidentals(r) => serde_json::to_value(r),
            Report::Totals(r) => serde_json::to_value(r),
        };
        v.expect("reports serialize")
    }

    pub fn to_table(&self) -> Table {
        match self {
            Report::ConfirmationByBucket(r) => {
                let rows = r
                    .buckets
                    .iter()
                    .map(|b| {
                        vec![
                            b.label.clone(),
                            b.n_sent.to_string(),
                            opt(b.n_accepted),
                            b.n_followed.to_string(),
                            opt(b.n_visible),
                            b.n_confirmed.to_string(),
                            b.denominator.to_string(),
                            rate3(b.rate),
                            rate3(b.ci_low),
                            rate3(b.ci_high),
                        ]
                    })
                    .collect();
                table(
                    &["bucket", "sent", "accepted", "followed", "visible", "confirmed", "denominator", "rate", "ci_low", "ci_high"],
                    rows,
                )
            }
            Report::Lift(m) => {
                let mut t = table(
                    &["metric", "value"],
                    vec![
                        vec!["total_images".into(), m.total_images.to_string()],
                        vec!["sent".into(), m.sent.to_string()],
                        vec!["confirmed".into(), m.confirmed.to_string()],
                        vec!["review_reduction".into(), pct1(Some(m.review_reduction))],
                        vec!["base_rate".into(), format!("{:.3}%", m.base_rate * 100.0)],
                        vec!["selected_rate".into(), rate3(Some(m.selected_rate))],
                        vec!["top_bucket_rate".into(), rate3(Some(m.top_bucket_rate))],
                        vec!["overall_lift".into(), format!("{:.1}", m.overall_lift)],
                        vec!["top_lift".into(), format!("{:.1}", m.top_lift)],
                    ],
                );
                t.notes = m.notes.clone();
                t
            }
            Report::Agreement(a) => {
                let mut t = table(
                    &["cell", "n", "elpc_confirmed", "elpc_rate", "wdnr_confirmed", "wdnr_rate"],
                    a.cells
                        .iter()
                        .map(|c| {
                            vec![
                                c.cell.clone(),
                                c.n.to_string(),
                                opt(c.elpc_confirmed),
                                pct1(c.elpc_rate),
                                opt(c.wdnr_confirmed),
                                pct1(c.wdnr_rate),
                            ]
                        })
                        .collect(),
                );
                t.notes.push(format!("overlap: {}", a.overlap));
                t
            }
            Report::Compliance(c) => {
                let mut rows: Vec<Vec<String>> = c
                    .counts
                    .iter()
                    .map(|(k, n)| {
                        let share = (c.confirmed > 0).then(|| *n as f64 / c.confirmed as f64);
                        vec![k.as_str().to_string(), n.to_string(), pct1(share)]
                    })
                    .collect();
                rows.push(vec!["confirmed".into(), c.confirmed.to_string(), String::new()]);
                let mut t = table(&["classification", "count", "share"], rows);
                t.notes = vec![
                    format!("share_noncompliant: {}", pct1(c.share_noncompliant)),
                    format!("share_cracks: {}", pct1(c.share_cracks)),
                    format!("share_afo_post_window: {}", pct1(c.share_afo_post_window)),
                ];
                t
            }
            Report::Process(p) => {
                let mut rows: Vec<Vec<String>> = p
                    .followup_by_bucket
                    .iter()
                    .map(|r| vec!["followup".into(), r.label.clone(), r.followed.to_string(), r.sent.to_string(), rate3(r.rate)])
                    .collect();
                rows.extend(p.latency_histogram.iter().map(|b| {
                    vec!["latency_days".into(), b.days.to_string(), b.count.to_string(), p.reached.to_string(), rate3(Some(b.count as f64 / p.reached as f64))]
                }));
                let mut t = table(&["series", "key", "count", "of", "rate"], rows);
                t.notes = vec![
                    format!("followup_rate: {} ({}/{})", rate3(p.followup_rate), p.followed, p.sent),
                    format!("visibility_rate: {} ({}/{})", rate3(p.visibility_rate), p.visible, p.reached),
                    format!("share_within_1_day: {}", rate3(p.share_within_1_day)),
                    format!("max_latency_days: {}", opt(p.max_latency_days)),
                ];
                t
            }
            Report::GroupComparison(g) => {
                let mut rows = Vec::new();
                for grp in &g.groups {
                    for (metric, ci) in [("score", &grp.score), ("bbox_area_m2", &grp.bbox_area_m2)] {
                        rows.push(vec![
                            grp.group.clone(),
                            metric.to_string(),
                            grp.n.to_string(),
                            ci.as_ref().map_or("-".into(), |c| format!("{:.3}", c.mean)),
                            ci.as_ref().and_then(|c| c.ci_low).map_or("-".into(), |v| format!("{v:.3}")),
                            ci.as_ref().and_then(|c| c.ci_high).map_or("-".into(), |v| format!("{v:.3}")),
                        ]);
                    }
                }
                let mut t = table(&["group", "metric", "n", "mean", "ci_low", "ci_high"], rows);
                if let Some(r) = g.area_ratio {
                    t.notes.push(format!("area_ratio: {r:.2}"));
                }
                t
            }
            Report::ConfidenceCrosstab(x) => {
                let mut headers = vec!["confidence"];
                headers.extend(x.labels.iter().map(String::as_str));
                let row = |name: &str, v: &[usize]| {
                    std::iter::once(name.to_string()).chain(v.iter().map(|n| n.to_string())).collect()
                };
                let mut rows = vec![row("high", &x.high), row("medium", &x.medium), row("low", &x.low)];
                rows.push(std::iter::once("high_share".to_string()).chain(x.high_share.iter().map(|s| rate3(*s))).collect());
                table(&headers, rows)
            }
            Report::Incidentals(b) => table(
                &["category", "count"],
                vec![
                    vec!["non_geocodable".into(), b.non_geocodable.to_string()],
                    vec!["detected".into(), b.detected.to_string()],
                    vec!["detected_below_threshold".into(), b.detected_below_threshold.to_string()],
                    vec!["outside_aoi".into(), b.outside_aoi.to_string()],
                    vec!["missed_in_aoi".into(), b.missed_in_aoi.to_string()],
                    vec!["total".into(), b.total.to_string()],
                ],
            ),
            Report::Totals(t) => {
                let row = |o: &analytics::OrgTotals| {
                    vec![
                        o.org.map_or("-".into(), |o| o.as_str().to_string()),
                        o.sent.to_string(),
                        opt(o.accepted),
                        o.followed.to_string(),
                        opt(o.reached),
                        opt(o.visible),
                        o.confirmed.to_string(),
                    ]
                };
                table(
                    &["org", "sent", "accepted", "followed", "reached", "visible", "confirmed"],
                    vec![row(&t.elpc), row(&t.wdnr)],
                )
            }
        }
    }

    pub fn to_text(&self) -> String {
        self.to_table().render()
    }

    pub fn to_csv(&self) -> Result<String> {
        self.to_table().to_csv()
    }
}

impl Table {
    /// Left-aligned first column, right-aligned numbers.
    pub fn render(&self) -> String {
        let ncol = self.headers.len();
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (i, c) in row.iter().enumerate().take(ncol) {
                widths[i] = widths[i].max(c.chars().count());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .enumerate()
                .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&mut out, &self.headers);
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        let _ = writeln!(out, "{}", rule.join("  "));
        for row in &self.rows {
            line(&mut out, row);
        }
        for n in &self.notes {
            let _ = writeln!(out, "{n}");
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("cells are UTF-8"))
    }
}
