//! Winter-spreading rule set and imagery corroboration of pre-window claims.

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::CAFO_ANIMAL_UNITS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Compliance {
    Violation,
    CompliantPreWindow,
    CompliantUnregulatedEntity,
    CompliantOther,
    Indeterminate,
}

impl Compliance {
    pub const ALL: [Compliance; 5] = [
        Compliance::Violation,
        Compliance::CompliantPreWindow,
        Compliance::CompliantUnregulatedEntity,
        Compliance::CompliantOther,
        Compliance::Indeterminate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Compliance::Violation => "violation",
            Compliance::CompliantPreWindow => "compliant_pre_window",
            Compliance::CompliantUnregulatedEntity => "compliant_unregulated_entity",
            Compliance::CompliantOther => "compliant_other",
            Compliance::Indeterminate => "indeterminate",
        }
    }

    pub fn is_compliant(self) -> bool {
        matches!(
            self,
            Compliance::CompliantPreWindow | Compliance::CompliantUnregulatedEntity | Compliance::CompliantOther
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityClass {
    Cafo,
    Afo,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpreadPhase {
    Liquid,
    Solid,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surface {
    SnowCovered,
    Frozen,
    BareUnfrozen,
    Unknown,
}

impl Surface {
    fn is_restricted(self) -> Option<bool> {
        match self {
            Surface::SnowCovered | Surface::Frozen => Some(true),
            Surface::BareUnfrozen => Some(false),
            Surface::Unknown => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadEvent {
    pub event_date: NaiveDate,
    pub entity_class: EntityClass,
    #[serde(default)]
    pub animal_units: Option<f64>,
    pub waste_phase: SpreadPhase,
    pub surface: Surface,
    #[serde(default)]
    pub emergency_approved: bool,
    #[serde(default)]
    pub claimed_pre_window: bool,
}

impl SpreadEvent {
    pub fn validate(&self, threshold: f64) -> Result<()> {
        let Some(au) = self.animal_units else {
            return Ok(());
        };
        if !au.is_finite() || au < 0.0 {
            return Err(Error::validation("invalid_animal_units", "animal_units", format!("{au} is not a non-negative number")));
        }
        let consistent = match self.entity_class {
            EntityClass::Cafo => au >= threshold,
            EntityClass::Afo => au < threshold,
            EntityClass::Unknown => true,
        };
        if !consistent {
            return Err(Error::validation(
                "animal_units_kind_mismatch",
                "animal_units",
                format!("{au} animal units inconsistent with {:?} at threshold {threshold}", self.entity_class),
            ));
        }
        Ok(())
    }

    pub fn shifted(&self, days: i64) -> SpreadEvent {
        SpreadEvent {
            event_date: self.event_date + Duration::days(days),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub animal_unit_threshold: f64,
}

impl RuleWindow {
    /// February 1 through March 31 of `year`.
    pub fn for_year(year: i32) -> RuleWindow {
        RuleWindow {
            start: NaiveDate::from_ymd_opt(year, 2, 1).expect("valid date"),
            end: NaiveDate::from_ymd_opt(year, 3, 31).expect("valid date"),
            animal_unit_threshold: CAFO_ANIMAL_UNITS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.start > self.end {
            return Err(Error::validation("invalid_window", "window", format!("start {} after end {}", self.start, self.end)));
        }
        if !(self.animal_unit_threshold.is_finite() && self.animal_unit_threshold > 0.0) {
            return Err(Error::validation(
                "invalid_threshold",
                "window.animal_unit_threshold",
                "threshold must be a positive number",
            ));
        }
        Ok(())
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        d >= self.start && d <= self.end
    }

    pub fn shifted(&self, days: i64) -> RuleWindow {
        RuleWindow {
            start: self.start + Duration::days(days),
            end: self.end + Duration::days(days),
            ..*self
        }
    }
}

impl Default for RuleWindow {
    fn default() -> Self {
        RuleWindow::for_year(2023)
    }
}

/// Classifies a confirmed spreading event.
///
/// Rules apply in order: out-of-window dates, small or AFO operators,
/// emergency approval, attribution gaps, then the phase/surface rules for
/// an in-window CAFO. When one of phase or surface is unknown the result
/// is whatever every possible value of the unknown fact agrees on, and
/// `Indeterminate` if they disagree.
pub fn classify(e: &SpreadEvent, w: &RuleWindow) -> Compliance {
    if !w.contains(e.event_date) {
        return Compliance::CompliantPreWindow;
    }
    if e.entity_class == EntityClass::Afo || e.animal_units.is_some_and(|au| au < w.animal_unit_threshold) {
        return Compliance::CompliantUnregulatedEntity;
    }
    if e.emergency_approved {
        return Compliance::CompliantOther;
    }
    if e.entity_class == EntityClass::Unknown {
        return Compliance::Indeterminate;
    }
    let phases: &[SpreadPhase] = match e.waste_phase {
        SpreadPhase::Unknown => &[SpreadPhase::Liquid, SpreadPhase::Solid],
        SpreadPhase::Liquid => &[SpreadPhase::Liquid],
        SpreadPhase::Solid => &[SpreadPhase::Solid],
    };
    let restricted: &[bool] = match e.surface.is_restricted() {
        Some(true) => &[true],
        Some(false) => &[false],
        None => &[true, false],
    };
    let mut outcome = None;
    for &p in phases {
        for &r in restricted {
            let o = match (p, r) {
                (SpreadPhase::Liquid, _) | (_, true) => Compliance::Violation,
                _ => Compliance::CompliantOther,
            };
            match outcome {
                None => outcome = Some(o),
                Some(prev) if prev != o => return Compliance::Indeterminate,
                _ => {}
            }
        }
    }
    outcome.unwrap_or(Compliance::Indeterminate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub observed_on: NaiveDate,
    pub manure_visible: bool,
    #[serde(default = "yes")]
    pub usable: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corroboration {
    PreWindow,
    Boundary,
    InWindow,
    Unsure,
}

/// Dates a pre-window claim from an imagery time series.
///
/// `F` is the first usable positive and `L` the last usable negative
/// strictly before it.
pub fn corroborate_pre_window(obs: &[Observation], w: &RuleWindow, boundary_days: i64) -> Result<Corroboration> {
    if obs.windows(2).any(|p| p[1].observed_on < p[0].observed_on) {
        return Err(Error::validation("unsorted_observations", "observations", "observations must be sorted by date"));
    }
    let usable = || obs.iter().filter(|o| o.usable);
    let Some(first_pos) = usable().find(|o| o.manure_visible).map(|o| o.observed_on) else {
        return Ok(Corroboration::Unsure);
    };
    if first_pos < w.start {
        return Ok(Corroboration::PreWindow);
    }
    let last_neg = usable()
        .filter(|o| !o.manure_visible && o.observed_on < first_pos)
        .map(|o| o.observed_on)
        .next_back();
    Ok(match last_neg {
        Some(l) if l >= w.start => Corroboration::InWindow,
        Some(l) if l >= w.start - Duration::days(boundary_days) => Corroboration::Boundary,
        _ => Corroboration::Unsure,
    })
}

/// Share of claims backed by imagery (pre-window or boundary).
pub fn substantiation_rate(results: &[Corroboration]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::validation("empty_input", "results", "no corroboration results"));
    }
    let ok = results
        .iter()
        .filter(|c| matches!(c, Corroboration::PreWindow | Corroboration::Boundary))
        .count();
    Ok(ok as f64 / results.len() as f64)
}
