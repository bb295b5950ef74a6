//! Subject-level data records.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::longitudinal::LongitudinalObservation;

/// Observed follow-up of one subject. `time` is measured from study entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalOutcome {
    pub time: f64,
    pub event: bool,
    pub covariates: Vec<f64>,
}

/// One individual: entry age, longitudinal measurements, survival triple.
///
/// Trajectories are functions of age; the hazard is a function of follow-up
/// time `t`, evaluated against the trajectory at age `entry_age + t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    pub entry_age: f64,
    pub observations: Vec<LongitudinalObservation>,
    pub survival: SurvivalOutcome,
}

impl SubjectRecord {
    /// Age at the end of follow-up.
    pub fn exit_age(&self) -> f64 {
        self.entry_age + self.survival.time
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub n_risk_factors: usize,
    pub subjects: Vec<SubjectRecord>,
}

impl Dataset {
    pub fn new(n_risk_factors: usize, subjects: Vec<SubjectRecord>) -> Result<Self> {
        let d = Self {
            n_risk_factors,
            subjects,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn n_covariates(&self) -> usize {
        self.subjects.first().map_or(0, |s| s.survival.covariates.len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.subjects.is_empty() {
            return Err(Error::Validation("dataset has no subjects".into()));
        }
        if self.subjects.iter().all(|s| s.observations.is_empty()) {
            return Err(Error::Validation("no observations".into()));
        }
        let p = self.n_covariates();
        for s in &self.subjects {
            let surv = &s.survival;
            if !(surv.time.is_finite() && surv.time > 0.0) {
                return Err(Error::Validation(format!(
                    "subject {}: follow-up time must be positive, got {}",
                    s.id, surv.time
                )));
            }
            if !(s.entry_age.is_finite() && s.entry_age >= 0.0) {
                return Err(Error::Validation(format!(
                    "subject {}: entry age must be nonnegative, got {}",
                    s.id, s.entry_age
                )));
            }
            if surv.covariates.len() != p {
                return Err(Error::Validation(format!(
                    "subject {}: {} covariates, expected {p}",
                    s.id,
                    surv.covariates.len()
                )));
            }
            if surv.covariates.iter().any(|c| !c.is_finite()) {
                return Err(Error::Validation(format!("subject {}: non-finite covariate", s.id)));
            }
            for o in &s.observations {
                if o.risk_factor >= self.n_risk_factors {
                    return Err(Error::Validation(format!(
                        "subject {}: unknown risk factor {}",
                        s.id,
                        o.risk_factor + 1
                    )));
                }
                if !(o.age.is_finite() && o.age >= 0.0) {
                    return Err(Error::Validation(format!("subject {}: invalid age {}", s.id, o.age)));
                }
                if !o.value.is_finite() {
                    return Err(Error::Validation(format!("subject {}: non-finite value", s.id)));
                }
            }
        }
        Ok(())
    }

    /// Largest age at which any trajectory is observed or evaluated.
    pub fn max_age(&self) -> f64 {
        self.subjects
            .iter()
            .flat_map(|s| {
                s.observations
                    .iter()
                    .map(|o| o.age)
                    .chain(std::iter::once(s.exit_age()))
            })
            .fold(0.0, f64::max)
    }

    pub fn n_events(&self) -> usize {
        self.subjects.iter().filter(|s| s.survival.event).count()
    }
}
