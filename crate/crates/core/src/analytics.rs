//! Trial aggregates computed from stored raw records.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::compliance::Compliance;
use crate::detections::{categorize_incidentals, Detection, IncidentalBreakdown, IncidentalParams, IncidentalReport};
use crate::engine::State;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fieldops::{latency_days, ReporterConfidence};
use crate::geo;
use crate::registry::Org;
use crate::routing::{Assignment, ScreeningStatus};
use crate::stats::{self, MeanCi, Z_95};

/// Cut-points 0.0, 0.1, ..., 1.0.
pub fn default_edges() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

pub fn validate_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[1] <= w[0]) || edges.iter().any(|e| !e.is_finite()) {
        return Err(Error::validation("invalid_edges", "edges", "need at least two strictly ascending cut-points"));
    }
    Ok(())
}

/// Bucket of `score`: right-exclusive except the last, which includes its
/// upper edge. `None` outside the edges.
pub fn bucket_of(edges: &[f64], score: f64) -> Option<usize> {
    let k = edges.len() - 1;
    if score < edges[0] || score > edges[k] {
        return None;
    }
    Some(edges[1..].iter().position(|&hi| score < hi).unwrap_or(k - 1))
}

pub fn bucket_label(edges: &[f64], i: usize) -> String {
    let close = if i + 2 == edges.len() { ']' } else { ')' };
    format!("[{:.1},{:.1}{close}", edges[i], edges[i + 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub label: String,
    pub lo: f64,
    pub hi: f64,
    pub n_sent: usize,
    /// Accepted after desk screening; regulator only.
    pub n_accepted: Option<usize>,
    pub n_followed: usize,
    /// Location visible from the road; advocacy verifiers only.
    pub n_visible: Option<usize>,
    pub n_confirmed: usize,
    pub denominator: usize,
    pub rate: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketedRates {
    pub org: Org,
    pub screened_only: bool,
    pub edges: Vec<f64>,
    pub buckets: Vec<BucketRow>,
    pub totals: OrgTotals,
}

impl BucketedRates {
    /// Pooled confirmation rate over buckets whose lower edge is at least `lo`.
    pub fn pooled_from(&self, lo: f64) -> Option<(usize, usize, f64)> {
        let (k, n) = self
            .buckets
            .iter()
            .filter(|b| b.lo >= lo - 1e-12)
            .fold((0, 0), |(k, n), b| (k + b.n_confirmed, n + b.denominator));
        (n > 0).then(|| (k, n, k as f64 / n as f64))
    }

    pub fn bucket_at(&self, lo: f64) -> Option<&BucketRow> {
        self.buckets.iter().find(|b| (b.lo - lo).abs() < 1e-9)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OrgTotals {
    pub org: Option<Org>,
    pub sent: usize,
    pub accepted: Option<usize>,
    pub followed: usize,
    pub reached: Option<usize>,
    pub visible: Option<usize>,
    pub confirmed: usize,
}

/// Per-detection outcome for one organization.
#[derive(Debug, Clone, Copy)]
struct Outcome {
    score: f64,
    accepted: bool,
    followed: bool,
    reached: bool,
    visible: bool,
    confirmed: bool,
}

fn outcomes(state: &State, org: Org) -> Vec<Outcome> {
    match org {
        Org::Wdnr => state
            .screening
            .values()
            .map(|item| {
                let det = state.determinations.get(&Assignment::wdnr_id(&item.detection_id));
                Outcome {
                    score: item.score,
                    accepted: item.status == ScreeningStatus::Accepted,
                    followed: det.is_some(),
                    reached: det.is_some(),
                    visible: det.is_some(),
                    confirmed: det.is_some_and(|d| d.manure_present),
                }
            })
            .collect(),
        Org::Elpc => state
            .assignments
            .values()
            .filter(|a| a.org == Org::Elpc)
            .map(|a| {
                let r = state.responses.get(&a.assignment_id);
                Outcome {
                    score: state.detection_for(a).score,
                    accepted: true,
                    followed: r.is_some(),
                    reached: r.is_some_and(|r| r.site_reached),
                    visible: r.is_some_and(|r| r.location_visible),
                    confirmed: r.is_some_and(|r| r.confirmed()),
                }
            })
            .collect(),
    }
}

pub fn totals(state: &State, org: Org) -> OrgTotals {
    let os = outcomes(state, org);
    let count = |f: fn(&Outcome) -> bool| os.iter().filter(|o| f(o)).count();
    OrgTotals {
        org: Some(org),
        sent: os.len(),
        accepted: (org == Org::Wdnr).then(|| count(|o| o.accepted)),
        followed: count(|o| o.followed),
        reached: (org == Org::Elpc).then(|| count(|o| o.reached)),
        visible: (org == Org::Elpc).then(|| count(|o| o.visible)),
        confirmed: count(|o| o.confirmed),
    }
}

/// Confirmation rate per score bucket. The denominator is everything sent,
/// or for the regulator with `screened_only`, what passed desk screening.
pub fn confirmation_by_bucket(state: &State, org: Org, screened_only: bool, edges: &[f64]) -> Result<BucketedRates> {
    validate_edges(edges)?;
    let k = edges.len() - 1;
    let mut rows: Vec<BucketRow> = (0..k)
        .map(|i| BucketRow {
            label: bucket_label(edges, i),
            lo: edges[i],
            hi: edges[i + 1],
            n_sent: 0,
            n_accepted: (org == Org::Wdnr).then_some(0),
            n_followed: 0,
            n_visible: (org == Org::Elpc).then_some(0),
            n_confirmed: 0,
            denominator: 0,
            rate: None,
            ci_low: None,
            ci_high: None,
        })
        .collect();
    for o in outcomes(state, org) {
        let Some(b) = bucket_of(edges, o.score) else { continue };
        let row = &mut rows[b];
        row.n_sent += 1;
        if let Some(n) = row.n_accepted.as_mut() {
            *n += o.accepted as usize;
        }
        row.n_followed += o.followed as usize;
        if let Some(n) = row.n_visible.as_mut() {
            *n += o.visible as usize;
        }
        row.n_confirmed += o.confirmed as usize;
    }
    for row in &mut rows {
        row.denominator = match (screened_only, row.n_accepted) {
            (true, Some(acc)) => acc,
            _ => row.n_sent,
        };
        if let Some((lo, hi)) = stats::wilson(row.n_confirmed as u64, row.denominator as u64, Z_95) {
            row.rate = Some(row.n_confirmed as f64 / row.denominator as f64);
            row.ci_low = Some(lo);
            row.ci_high = Some(hi);
        }
    }
    Ok(BucketedRates {
        org,
        screened_only,
        edges: edges.to_vec(),
        buckets: rows,
        totals: totals(state, org),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftMetrics {
    pub total_images: u64,
    pub sent: u64,
    pub confirmed: u64,
    pub top_bucket_rate: f64,
    pub review_reduction: f64,
    pub base_rate: f64,
    pub selected_rate: f64,
    pub overall_lift: f64,
    pub top_lift: f64,
    pub notes: Vec<String>,
}

/// Lift of model-selected review over random selection. When a published
/// review-reduction figure is supplied and disagrees with the computed one
/// by more than 0.05 points, a note records both.
pub fn lift_metrics(
    total_images: u64,
    sent: u64,
    confirmed: u64,
    top_bucket_rate: f64,
    reported_review_reduction: Option<f64>,
) -> Result<LiftMetrics> {
    if total_images == 0 || sent == 0 || confirmed == 0 {
        return Err(Error::validation("zero_denominator", "lift", "total_images, sent and confirmed must be positive"));
    }
    if !(total_images >= sent && sent >= confirmed) {
        return Err(Error::validation("inconsistent_counts", "lift", "need total_images >= sent >= confirmed"));
    }
    if !(0.0..=1.0).contains(&top_bucket_rate) {
        return Err(Error::validation("invalid_rate", "top_bucket_rate", "rate must lie in [0, 1]"));
    }
    let (t, s, c) = (total_images as f64, sent as f64, confirmed as f64);
    let review_reduction = 1.0 - s / t;
    let base_rate = c / t;
    let selected_rate = c / s;
    let mut notes = Vec::new();
    if let Some(rep) = reported_review_reduction {
        if (rep - review_reduction).abs() > 0.0005 {
            notes.push(format!(
                "review_reduction computed as {:.1}% (1 - {sent}/{total_images}); the published figure of {:.1}% does not follow from these counts",
                review_reduction * 100.0,
                rep * 100.0
            ));
        }
    }
    Ok(LiftMetrics {
        total_images,
        sent,
        confirmed,
        top_bucket_rate,
        review_reduction,
        base_rate,
        selected_rate,
        overall_lift: selected_rate / base_rate,
        top_lift: top_bucket_rate / base_rate,
        notes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementCell {
    pub cell: String,
    pub n: usize,
    pub elpc_confirmed: Option<usize>,
    pub elpc_rate: Option<f64>,
    pub wdnr_confirmed: Option<usize>,
    pub wdnr_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementTable {
    pub overlap: usize,
    pub cells: Vec<AgreementCell>,
}

impl AgreementTable {
    pub fn cell(&self, name: &str) -> Option<&AgreementCell> {
        self.cells.iter().find(|c| c.cell == name)
    }
}

/// Follow-up crosstab for detections sent to both organizations.
pub fn agreement_table(state: &State) -> AgreementTable {
    let mut elpc: BTreeMap<&str, (bool, bool)> = BTreeMap::new();
    for a in state.assignments.values().filter(|a| a.org == Org::Elpc) {
        let e = elpc.entry(a.detection_id.as_str()).or_default();
        if let Some(r) = state.responses.get(&a.assignment_id) {
            e.0 = true;
            e.1 |= r.confirmed();
        }
    }
    let overlap: BTreeSet<&str> = elpc
        .keys()
        .copied()
        .filter(|id| state.screening.contains_key(*id))
        .collect();
    let names = ["both_followed", "elpc_only", "wdnr_only", "neither"];
    let mut tallies = [(0usize, 0usize, 0usize); 4];
    for id in &overlap {
        let (ef, ec) = elpc[id];
        let det = state.determinations.get(&Assignment::wdnr_id(id));
        let (wf, wc) = (det.is_some(), det.is_some_and(|d| d.manure_present));
        let idx = match (ef, wf) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
        tallies[idx].0 += 1;
        tallies[idx].1 += ec as usize;
        tallies[idx].2 += wc as usize;
    }
    let rate = |k: usize, n: usize| (n > 0).then(|| k as f64 / n as f64);
    let cells = names
        .iter()
        .zip(tallies)
        .enumerate()
        .map(|(i, (name, (n, ec, wc)))| {
            let elpc_followed = i == 0 || i == 1;
            let wdnr_followed = i == 0 || i == 2;
            AgreementCell {
                cell: name.to_string(),
                n,
                elpc_confirmed: elpc_followed.then_some(ec),
                elpc_rate: if elpc_followed { rate(ec, n) } else { None },
                wdnr_confirmed: wdnr_followed.then_some(wc),
                wdnr_rate: if wdnr_followed { rate(wc, n) } else { None },
            }
        })
        .collect();
    AgreementTable {
        overlap: overlap.len(),
        cells,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceBreakdown {
    pub determinations: usize,
    pub confirmed: usize,
    pub counts: BTreeMap<Compliance, usize>,
    pub share_noncompliant: Option<f64>,
    pub share_cracks: Option<f64>,
    pub share_afo_post_window: Option<f64>,
}

impl ComplianceBreakdown {
    pub fn count(&self, c: Compliance) -> usize {
        self.counts.get(&c).copied().unwrap_or(0)
    }
}

pub fn compliance_breakdown(state: &State) -> ComplianceBreakdown {
    let mut counts: BTreeMap<Compliance, usize> = Compliance::ALL.iter().map(|&c| (c, 0)).collect();
    let mut confirmed = 0;
    let mut total = 0;
    for d in state.determinations.values() {
        if state.assignments.get(&d.assignment_id).is_none_or(|a| a.org != Org::Wdnr) {
            continue;
        }
        total += 1;
        if let (true, Some(c)) = (d.manure_present, d.compliance) {
            confirmed += 1;
            *counts.entry(c).or_default() += 1;
        }
    }
    let violations = counts[&Compliance::Violation];
    let pre = counts[&Compliance::CompliantPreWindow];
    let unreg = counts[&Compliance::CompliantUnregulatedEntity];
    let share = |k: usize, n: usize| (n > 0).then(|| k as f64 / n as f64);
    ComplianceBreakdown {
        determinations: total,
        confirmed,
        share_noncompliant: share(violations, confirmed),
        share_cracks: share(confirmed - violations, confirmed),
        share_afo_post_window: share(unreg, confirmed - pre),
        counts,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowupRow {
    pub label: String,
    pub sent: usize,
    pub followed: usize,
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessMetrics {
    pub sent: usize,
    pub followed: usize,
    pub followup_rate: Option<f64>,
    pub followup_by_bucket: Vec<FollowupRow>,
    pub reached: usize,
    pub visible: usize,
    /// Visible over reached.
    pub visibility_rate: Option<f64>,
    /// Days from dispatch to visit over reached sites, ascending.
    pub latency_histogram: Vec<LatencyBin>,
    pub share_within_1_day: Option<f64>,
    pub max_latency_days: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyBin {
    pub days: i64,
    pub count: usize,
}

pub fn process_metrics(state: &State, edges: &[f64]) -> Result<ProcessMetrics> {
    validate_edges(edges)?;
    let mut rows: Vec<FollowupRow> = (0..edges.len() - 1)
        .map(|i| FollowupRow { label: bucket_label(edges, i), sent: 0, followed: 0, rate: None })
        .collect();
    let mut hist = BTreeMap::new();
    let (mut sent, mut followed, mut reached, mut visible) = (0, 0, 0, 0);
    for a in state.assignments.values().filter(|a| a.org == Org::Elpc) {
        sent += 1;
        let r = state.responses.get(&a.assignment_id);
        if let Some(b) = bucket_of(edges, state.detection_for(a).score) {
            rows[b].sent += 1;
            rows[b].followed += r.is_some() as usize;
        }
        let Some(r) = r else { continue };
        followed += 1;
        if r.site_reached {
            reached += 1;
            visible += r.location_visible as usize;
            *hist.entry(latency_days(a, r)).or_insert(0) += 1;
        }
    }
    for row in &mut rows {
        row.rate = (row.sent > 0).then(|| row.followed as f64 / row.sent as f64);
    }
    let within: usize = hist.range(..=1).map(|(_, n)| n).sum();
    Ok(ProcessMetrics {
        sent,
        followed,
        followup_rate: (sent > 0).then(|| followed as f64 / sent as f64),
        followup_by_bucket: rows,
        reached,
        visible,
        visibility_rate: (reached > 0).then(|| visible as f64 / reached as f64),
        share_within_1_day: (reached > 0).then(|| within as f64 / reached as f64),
        max_latency_days: hist.keys().next_back().copied(),
        latency_histogram: hist.into_iter().map(|(days, count)| LatencyBin { days, count }).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub group: String,
    pub categories: Vec<Compliance>,
    pub n: usize,
    pub score: Option<MeanCi>,
    pub bbox_area_m2: Option<MeanCi>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub excluded: Vec<Compliance>,
    pub groups: Vec<GroupStats>,
    /// Mean box area of the noncompliant group over the compliant one.
    pub area_ratio: Option<f64>,
}

/// Categories left out of the comparison unless overridden.
pub fn default_group_exclusions() -> Vec<Compliance> {
    vec![Compliance::CompliantOther, Compliance::Indeterminate]
}

/// Mean detection score and box area, with t-intervals, for confirmed
/// regulator events grouped into noncompliant and compliant.
pub fn group_comparison(state: &State, excluded: &[Compliance]) -> GroupComparison {
    let groups_def = [
        ("noncompliant", vec![Compliance::Violation]),
        (
            "compliant",
            vec![Compliance::CompliantPreWindow, Compliance::CompliantUnregulatedEntity, Compliance::CompliantOther],
        ),
    ];
    let mut groups = Vec::new();
    for (name, cats) in groups_def {
        let cats: Vec<Compliance> = cats.into_iter().filter(|c| !excluded.contains(c)).collect();
        let (mut scores, mut areas) = (Vec::new(), Vec::new());
        for d in state.determinations.values() {
            if !d.manure_present || !d.compliance.is_some_and(|c| cats.contains(&c)) {
                continue;
            }
            let Some(a) = state.assignments.get(&d.assignment_id) else { continue };
            let det = state.detection_for(a);
            scores.push(det.score);
            areas.push(geo::bbox_area_m2(&det.bbox));
        }
        groups.push(GroupStats {
            group: name.to_string(),
            categories: cats,
            n: scores.len(),
            score: stats::mean_ci(&scores, 0.95),
            bbox_area_m2: stats::mean_ci(&areas, 0.95),
        });
    }
    let area_ratio = match (&groups[0].bbox_area_m2, &groups[1].bbox_area_m2) {
        (Some(a), Some(b)) if b.mean > 0.0 => Some(a.mean / b.mean),
        _ => None,
    };
    GroupComparison {
        excluded: excluded.to_vec(),
        groups,
        area_ratio,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceCrosstab {
    pub labels: Vec<String>,
    pub high: Vec<usize>,
    pub medium: Vec<usize>,
    pub low: Vec<usize>,
    /// High over all three, per bucket.
    pub high_share: Vec<Option<f64>>,
}

/// Self-reported confidence of confirmed advocacy responses, per bucket.
pub fn confidence_crosstab(state: &State, edges: &[f64]) -> Result<ConfidenceCrosstab> {
    validate_edges(edges)?;
    let k = edges.len() - 1;
    let mut rows = [vec![0usize; k], vec![0usize; k], vec![0usize; k]];
    for r in state.responses.values().filter(|r| r.confirmed()) {
        let Some(a) = state.assignments.get(&r.assignment_id) else { continue };
        let (Some(conf), Some(b)) = (r.reporter_confidence, bucket_of(edges, state.detection_for(a).score)) else {
            continue;
        };
        let idx = ReporterConfidence::ALL.iter().position(|c| *c == conf).expect("known level");
        rows[idx][b] += 1;
    }
    let [high, medium, low] = rows;
    let high_share = (0..k)
        .map(|i| {
            let n = high[i] + medium[i] + low[i];
            (n > 0).then(|| high[i] as f64 / n as f64)
        })
        .collect();
    Ok(ConfidenceCrosstab {
        labels: (0..k).map(|i| bucket_label(edges, i)).collect(),
        high,
        medium,
        low,
        high_share,
    })
}

/// Lift of the regulator stream: images scanned across all runs, detections
/// queued for screening, confirmed determinations, and the pooled rate for
/// scores of at least 0.8.
pub fn lift_from_state(state: &State, reported_review_reduction: Option<f64>) -> Result<LiftMetrics> {
    let total_images: u64 = state.runs.values().filter_map(|r| r.images_scanned).sum();
    let rates = confirmation_by_bucket(state, Org::Wdnr, false, &default_edges())?;
    let top = rates.pooled_from(0.8).map_or(0.0, |(_, _, r)| r);
    lift_metrics(
        total_images,
        rates.totals.sent as u64,
        rates.totals.confirmed as u64,
        top,
        reported_review_reduction,
    )
}

pub fn incidental_breakdown(state: &State, params: &IncidentalParams, exec: Exec) -> IncidentalBreakdown {
    let reports: Vec<IncidentalReport> = state.incidentals.values().cloned().collect();
    let detections: Vec<Detection> = state.detections.values().cloned().collect();
    categorize_incidentals(&reports, state.registry(), &detections, params, exec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub elpc: OrgTotals,
    pub wdnr: OrgTotals,
}

pub fn trial_totals(state: &State) -> TrialReport {
    TrialReport {
        elpc: totals(state, Org::Elpc),
        wdnr: totals(state, Org::Wdnr),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bucket_edges() {
        let e = default_edges();
        assert_eq!(bucket_of(&e, 0.0), Some(0));
        assert_eq!(bucket_of(&e, 0.5), Some(5));
        assert_eq!(bucket_of(&e, 0.85), Some(8));
        assert_eq!(bucket_of(&e, 1.0), Some(9));
        assert_eq!(bucket_of(&e, 1.01), None);
        assert_eq!(bucket_label(&e, 9), "[0.9,1.0]");
        assert_eq!(bucket_label(&e, 0), "[0.0,0.1)");
    }

    #[test]
    fn lift_identity_and_errors() {
        let m = lift_metrics(100, 100, 5, 0.1, None).unwrap();
        assert_eq!(m.overall_lift, 1.0);
        assert_eq!(m.review_reduction, 0.0);
        assert!(lift_metrics(0, 0, 0, 0.0, None).is_err());
        assert!(lift_metrics(10, 20, 1, 0.1, None).is_err());
    }

    #[test]
    fn empty_state_reports() {
        let s = State::default();
        let t = agreement_table(&s);
        assert!(t.cells.iter().all(|c| c.n == 0));
        let b = confirmation_by_bucket(&s, Org::Elpc, false, &default_edges()).unwrap();
        assert!(b.buckets.iter().all(|r| r.rate.is_none()));
        let x = confidence_crosstab(&s, &default_edges()).unwrap();
        assert!(x.high.iter().chain(&x.medium).chain(&x.low).all(|&n| n == 0));
        assert!(compliance_breakdown(&s).share_noncompliant.is_none());
    }
}
