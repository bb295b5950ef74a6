//! Synthetic datasets for the four simulation scenarios.
//!
//! Each subject draws from its own RNG substreams of the master seed: one for
//! the trajectory (entry age, race, random effects, measurement noise) and
//! one for the survival draws (the uniform for the event time and a unit
//! exponential that becomes the censoring time once divided by the rate).
//! Censoring calibration reuses those unit exponentials, so the censored
//! fraction is monotone in the rate.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LongitudinalObservation, SubjectRecord, SurvivalOutcome};
use crate::error::{Error, Result};
use crate::longitudinal::LegendreBasis;
use crate::mcmc::invert_cumulative_hazard;
use crate::numeric::random::{bernoulli, exponential, mvn, open_uniform, standard_normal, uniform};
use crate::numeric::GaussLegendre;
use crate::survival::{BaselineHazard, FeatureKind, FeatureScaling, HazardModel, SplineBasis, SubjectPath};

/// Versioned defaults shipped with the library.
pub const DEFAULTS_TOML: &str = include_str!("simgen_defaults.toml");

/// Allowed distance between realized and target censoring.
pub const CENSORING_TOLERANCE: f64 = 0.03;

const PILOT_STREAMS: u64 = 1 << 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    I,
    II,
    III,
    IV,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::I, Scenario::II, Scenario::III, Scenario::IV];

    /// Nonzero `(risk factor, feature)` pairs of the generating hazard,
    /// zero-based, features ordered value, slope, area, threshold.
    pub fn true_features(self) -> &'static [(usize, usize)] {
        match self {
            Scenario::I => &[(1, 0)],
            Scenario::II => &[(0, 2), (1, 0), (2, 1)],
            Scenario::III => &[(0, 0), (0, 2)],
            Scenario::IV => &[(0, 0), (0, 2), (1, 0), (1, 2)],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::I => "I",
            Scenario::II => "II",
            Scenario::III => "III",
            Scenario::IV => "IV",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Scenario::I),
            "II" | "2" => Ok(Scenario::II),
            "III" | "3" => Ok(Scenario::III),
            "IV" | "4" => Ok(Scenario::IV),
            other => Err(Error::Config(format!("unknown scenario {other:?}"))),
        }
    }
}

/// Visit schedule and subject-level design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Design {
    pub a_max: f64,
    /// administrative censoring time, in years of follow-up
    pub horizon: f64,
    pub visit_spacing: f64,
    pub n_visits: usize,
    pub entry_age_max: f64,
    pub race_prob: f64,
}

/// True longitudinal parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrueLongitudinal {
    /// Legendre coefficients per risk factor
    pub beta: Vec<Vec<f64>>,
    /// random-effect standard deviation per polynomial order
    pub re_sd: Vec<f64>,
    /// within-order correlation between risk factors
    pub re_corr: f64,
    pub sigma: Vec<f64>,
    pub thresholds: Vec<f64>,
}

impl TrueLongitudinal {
    pub fn n_risk_factors(&self) -> usize {
        self.beta.len()
    }

    pub fn poly_order(&self) -> usize {
        self.re_sd.len() - 1
    }

    /// Random-effects covariance blocks by polynomial order, each `G x G`.
    pub fn blocks(&self) -> Vec<DMatrix<f64>> {
        let g_n = self.n_risk_factors();
        self.re_sd
            .iter()
            .map(|sd| {
                DMatrix::from_fn(g_n, g_n, |a, b| {
                    let r = if a == b { 1.0 } else { self.re_corr };
                    r * sd * sd
                })
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratingBaseline {
    Constant {
        log_rate: f64,
    },
    /// `log h0(t) = coeffs[0] + sum_q coeffs[q] B_q(t)` as in the fitted model
    Spline {
        upper: f64,
        interior: Vec<f64>,
        degree: usize,
        coeffs: Vec<f64>,
    },
}

impl GeneratingBaseline {
    pub fn hazard(&self) -> Result<BaselineHazard> {
        match self {
            GeneratingBaseline::Constant { log_rate } => Ok(BaselineHazard::constant(*log_rate)),
            GeneratingBaseline::Spline {
                upper,
                interior,
                degree,
                coeffs,
            } => BaselineHazard::new(
                SplineBasis::new(0.0, *upper, interior.clone(), *degree)?,
                coeffs.clone(),
            ),
        }
    }
}

/// Everything that determines a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n: usize,
    pub seed: u64,
    pub design: Design,
    pub longitudinal: TrueLongitudinal,
    /// association coefficients on the raw feature scale, `G x 4`
    pub true_alpha: Vec<Vec<f64>>,
    /// race coefficient
    pub true_gamma: f64,
    pub baseline: GeneratingBaseline,
    /// target censored fraction; `None` leaves administrative censoring only
    pub censoring_target: Option<f64>,
    /// fixed exponential censoring rate, bypassing calibration
    pub censoring_rate: Option<f64>,
    pub pilot_size: usize,
    pub quadrature_nodes: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SurvivalDefaults {
    gamma: f64,
    censoring_target: f64,
    pilot_size: usize,
    quadrature_nodes: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDefaults {
    log_baseline: f64,
    alpha: Vec<(usize, usize, f64)>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DefaultsFile {
    version: u32,
    design: Design,
    longitudinal: TrueLongitudinal,
    survival: SurvivalDefaults,
    scenarios: BTreeMap<String, ScenarioDefaults>,
}

impl ScenarioSpec {
    /// Scenario with the shipped defaults.
    pub fn new(scenario: Scenario, n: usize, seed: u64) -> Result<Self> {
        let d: DefaultsFile = toml::from_str(DEFAULTS_TOML)?;
        if d.version != 1 {
            return Err(Error::Config(format!("unsupported defaults version {}", d.version)));
        }
        let sc = d
            .scenarios
            .get(scenario.name())
            .ok_or_else(|| Error::Config(format!("no defaults for scenario {scenario}")))?;
        let g_n = d.longitudinal.n_risk_factors();
        let mut true_alpha = vec![vec![0.0; FeatureKind::ALL.len()]; g_n];
        for &(g, j, v) in &sc.alpha {
            true_alpha[g - 1][j - 1] = v;
        }
        let spec = Self {
            scenario,
            n,
            seed,
            design: d.design,
            longitudinal: d.longitudinal,
            true_alpha,
            true_gamma: d.survival.gamma,
            baseline: GeneratingBaseline::Constant {
                log_rate: sc.log_baseline,
            },
            censoring_target: Some(d.survival.censoring_target),
            censoring_rate: None,
            pilot_size: d.survival.pilot_size,
            quadrature_nodes: d.survival.quadrature_nodes,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn n_risk_factors(&self) -> usize {
        self.longitudinal.n_risk_factors()
    }

    pub fn validate(&self) -> Result<()> {
        let g_n = self.n_risk_factors();
        let l = &self.longitudinal;
        if g_n != 3 {
            return Err(Error::Config(format!(
                "scenarios are defined for 3 risk factors, got {g_n}"
            )));
        }
        if self.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        let dim = l.re_sd.len();
        if !(1..=3).contains(&dim) || l.beta.iter().any(|b| b.len() != dim) {
            return Err(Error::Config(
                "beta rows and re_sd must share a length of 1 to 3".into(),
            ));
        }
        if l.sigma.len() != g_n || l.thresholds.len() != g_n {
            return Err(Error::Config(
                "sigma and thresholds need one entry per risk factor".into(),
            ));
        }
        if l.sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) || l.re_sd.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config(
                "standard deviations must be nonnegative (re_sd positive)".into(),
            ));
        }
        if !(l.re_corr > -0.5 && l.re_corr < 1.0) {
            return Err(Error::Config(format!(
                "re_corr {} does not give a valid covariance",
                l.re_corr
            )));
        }
        if self.true_alpha.len() != g_n || self.true_alpha.iter().any(|r| r.len() != FeatureKind::ALL.len()) {
            return Err(Error::Config("true_alpha must be 3 x 4".into()));
        }
        let mut nonzero: Vec<(usize, usize)> = Vec::new();
        for (g, row) in self.true_alpha.iter().enumerate() {
            for (j, a) in row.iter().enumerate() {
                if !a.is_finite() {
                    return Err(Error::Config("true_alpha must be finite".into()));
                }
                if *a != 0.0 {
                    nonzero.push((g, j));
                }
            }
        }
        if nonzero != self.scenario.true_features() {
            return Err(Error::Config(format!(
                "true_alpha sparsity {:?} does not match scenario {} ({:?})",
                nonzero,
                self.scenario,
                self.scenario.true_features()
            )));
        }
        if let Some(t) = self.censoring_target {
            if !(0.05..=0.50).contains(&t) {
                return Err(Error::OutOfRange {
                    what: "censoring_target",
                    detail: format!("{t} not in [0.05, 0.50]"),
                });
            }
        }
        if let Some(c) = self.censoring_rate {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::Config(format!("censoring_rate {c} must be nonnegative")));
            }
        }
        let d = &self.design;
        if !(d.horizon > 0.0 && d.entry_age_max >= 0.0 && d.visit_spacing > 0.0 && d.n_visits >= 1) {
            return Err(Error::Config(
                "design needs positive horizon, spacing and visit count".into(),
            ));
        }
        if d.a_max < d.entry_age_max + d.horizon {
            return Err(Error::Config(format!(
                "a_max {} must cover entry_age_max + horizon = {}",
                d.a_max,
                d.entry_age_max + d.horizon
            )));
        }
        if !(0.0..=1.0).contains(&d.race_prob) {
            return Err(Error::Config("race_prob must lie in [0, 1]".into()));
        }
        if self.quadrature_nodes == 0 {
            return Err(Error::Config("quadrature_nodes must be positive".into()));
        }
        Ok(())
    }

    pub fn basis(&self) -> Result<LegendreBasis> {
        LegendreBasis::new(self.design.a_max, self.longitudinal.poly_order())
    }

    /// Generating hazard on raw features, all four feature kinds.
    pub fn hazard_model(&self) -> Result<HazardModel> {
        let g_n = self.n_risk_factors();
        let j_n = FeatureKind::ALL.len();
        Ok(HazardModel {
            trajectory_basis: self.basis()?,
            baseline: self.baseline.hazard()?,
            gamma: vec![self.true_gamma],
            features: FeatureKind::ALL.to_vec(),
            alpha: self.true_alpha.concat(),
            thresholds: self.longitudinal.thresholds.clone(),
            area_origin: 0.0,
            scaling: FeatureScaling::identity(g_n * j_n),
            hazard_rule: GaussLegendre::new(self.quadrature_nodes),
            area_rule: GaussLegendre::new(self.quadrature_nodes),
        })
    }
}

/// Latent quantities of one generated subject.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectTruth {
    pub id: String,
    pub entry_age: f64,
    pub race: f64,
    /// risk-factor major (`g * dim + k`)
    pub random_effects: Vec<f64>,
    /// `beta_g + b_ig`, same layout
    pub coefs: Vec<f64>,
    /// event time under the generating hazard, `None` past the horizon
    pub latent_event_time: Option<f64>,
    /// unit-rate exponential; the censoring time is this over the rate
    pub censoring_draw: f64,
}

/// A subject's trajectory and every scheduled measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedSubject {
    pub truth: SubjectTruth,
    /// measurements at all scheduled visits, before truncation
    pub observations: Vec<LongitudinalObservation>,
}

/// Truth sidecar of a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub spec: ScenarioSpec,
    pub censoring_rate: f64,
    pub realized_censoring: f64,
    pub subjects: Vec<SubjectTruth>,
}

impl Truth {
    /// `true_alpha` flattened risk-factor major.
    pub fn alpha(&self) -> Vec<f64> {
        self.spec.true_alpha.concat()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(f)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedDataset {
    pub dataset: Dataset,
    pub truth: Truth,
    pub realized_censoring: f64,
}

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn trajectory(
    spec: &ScenarioSpec,
    basis: &LegendreBasis,
    blocks: &[DMatrix<f64>],
    i: usize,
    base: u64,
) -> Result<SimulatedSubject> {
    let l = &spec.longitudinal;
    let d = &spec.design;
    let (g_n, dim) = (l.n_risk_factors(), basis.dim());
    let mut rng = substream(spec.seed, base + 2 * i as u64);
    let entry_age = uniform(&mut rng) * d.entry_age_max;
    let race = bernoulli(&mut rng, d.race_prob) as u8 as f64;
    let mut random_effects = vec![0.0; g_n * dim];
    for (k, block) in blocks.iter().enumerate() {
        let v = mvn(&mut rng, block)?;
        for g in 0..g_n {
            random_effects[g * dim + k] = v[g];
        }
    }
    let coefs: Vec<f64> = (0..g_n * dim)
        .map(|gk| l.beta[gk / dim][gk % dim] + random_effects[gk])
        .collect();
    let mut observations = Vec::with_capacity(d.n_visits * g_n);
    let mut row = [0.0; 3];
    for v in 0..d.n_visits {
        let age = entry_age + v as f64 * d.visit_spacing;
        basis.values_into(age, &mut row)?;
        for g in 0..g_n {
            let mu: f64 = (0..dim).map(|k| row[k] * coefs[g * dim + k]).sum();
            let value = mu + l.sigma[g] * standard_normal(&mut rng);
            observations.push(LongitudinalObservation {
                risk_factor: g,
                age,
                value,
            });
        }
    }
    Ok(SimulatedSubject {
        truth: SubjectTruth {
            id: (i + 1).to_string(),
            entry_age,
            race,
            random_effects,
            coefs,
            latent_event_time: None,
            censoring_draw: f64::INFINITY,
        },
        observations,
    })
}

/// True trajectories and noisy measurements at every scheduled visit.
pub fn generate_trajectories(spec: &ScenarioSpec) -> Result<Vec<SimulatedSubject>> {
    spec.validate()?;
    trajectories(spec, spec.n, 0)
}

fn trajectories(spec: &ScenarioSpec, n: usize, base: u64) -> Result<Vec<SimulatedSubject>> {
    let basis = spec.basis()?;
    let blocks = spec.longitudinal.blocks();
    (0..n)
        .into_par_iter()
        .map(|i| trajectory(spec, &basis, &blocks, i, base))
        .collect()
}

/// Inverse-transform event time for `-ln U` with `U = u`; `(horizon, false)`
/// when the cumulative hazard stays below `-ln u` up to the horizon.
pub fn sample_event_time(model: &HazardModel, path: &SubjectPath<'_>, u: f64, horizon: f64) -> Result<(f64, bool)> {
    if !(u > 0.0 && u <= 1.0) {
        return Err(Error::Domain(format!("uniform draw {u} outside (0, 1]")));
    }
    if u == 1.0 {
        return Ok((0.0, true));
    }
    invert_cumulative_hazard(model, path, -u.ln(), horizon)
}

/// Adds latent event times and censoring draws in place.
fn survival_latents(spec: &ScenarioSpec, subjects: &mut [SimulatedSubject], base: u64) -> Result<()> {
    let model = spec.hazard_model()?;
    let horizon = spec.design.horizon;
    subjects
        .par_iter_mut()
        .enumerate()
        .try_for_each(|(i, s)| -> Result<()> {
            let mut rng = substream(spec.seed, base + 2 * i as u64 + 1);
            let u = open_uniform(&mut rng);
            let e = exponential(&mut rng, 1.0);
            let cov = [s.truth.race];
            let path = SubjectPath {
                entry_age: s.truth.entry_age,
                covariates: &cov,
                coefs: &s.truth.coefs,
            };
            let (t, event) = sample_event_time(&model, &path, u, horizon)?;
            s.truth.latent_event_time = event.then_some(t);
            s.truth.censoring_draw = e;
            Ok(())
        })
}

/// Observed `(time, event)` under exponential censoring at `rate` and the
/// administrative horizon.
pub fn observe(truth: &SubjectTruth, rate: f64, horizon: f64) -> (f64, bool) {
    let c = if rate > 0.0 {
        truth.censoring_draw / rate
    } else {
        f64::INFINITY
    };
    match truth.latent_event_time {
        Some(t) if t <= c => (t.max(1e-9), true),
        _ => (c.min(horizon).max(1e-9), false),
    }
}

fn censored_fraction(subjects: &[SimulatedSubject], rate: f64, horizon: f64) -> f64 {
    let c = subjects.iter().filter(|s| !observe(&s.truth, rate, horizon).1).count();
    c as f64 / subjects.len() as f64
}

/// Exponential censoring rate hitting `spec.censoring_target` on a pilot
/// sample drawn from streams disjoint from the dataset's.
pub fn calibrate_censoring(spec: &ScenarioSpec, pilot_size: usize) -> Result<f64> {
    spec.validate()?;
    if pilot_size < 500 {
        return Err(Error::OutOfRange {
            what: "pilot_size",
            detail: format!("{pilot_size} < 500"),
        });
    }
    let target = spec
        .censoring_target
        .ok_or_else(|| Error::Config("no censoring target to calibrate".into()))?;
    let mut pilot = trajectories(spec, pilot_size, PILOT_STREAMS)?;
    survival_latents(spec, &mut pilot, PILOT_STREAMS)?;
    let horizon = spec.design.horizon;
    let frac = |r: f64| censored_fraction(&pilot, r, horizon);
    let low = frac(0.0);
    let (mut lo, mut hi) = (1e-6f64.ln(), 1e3f64.ln());
    let high = frac(hi.exp());
    if target < low - CENSORING_TOLERANCE || target > high + CENSORING_TOLERANCE {
        return Err(Error::CensoringUnreachable { target, low, high });
    }
    if target <= low {
        return Ok(0.0);
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if frac(mid.exp()) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rate = if (frac(lo.exp()) - target).abs() <= (frac(hi.exp()) - target).abs() {
        lo.exp()
    } else {
        hi.exp()
    };
    let got = frac(rate);
    if (got - target).abs() > CENSORING_TOLERANCE {
        return Err(Error::CensoringUnreachable { target, low, high });
    }
    Ok(rate)
}

/// Generates the dataset and its truth sidecar.
pub fn generate(spec: &ScenarioSpec) -> Result<GeneratedDataset> {
    spec.validate()?;
    let rate = match (spec.censoring_rate, spec.censoring_target) {
        (Some(r), _) => r,
        (None, Some(_)) => calibrate_censoring(spec, spec.pilot_size)?,
        (None, None) => 0.0,
    };
    let mut subjects = trajectories(spec, spec.n, 0)?;
    survival_latents(spec, &mut subjects, 0)?;
    let d = &spec.design;
    let mut records = Vec::with_capacity(subjects.len());
    for s in &subjects {
        let (time, event) = observe(&s.truth, rate, d.horizon);
        let observations = s
            .observations
            .iter()
            .filter(|o| o.age - s.truth.entry_age <= time)
            .cloned()
            .collect();
        records.push(SubjectRecord {
            id: s.truth.id.clone(),
            entry_age: s.truth.entry_age,
            observations,
            survival: SurvivalOutcome {
                time,
                event,
                covariates: vec![s.truth.race],
            },
        });
    }
    let realized = censored_fraction(&subjects, rate, d.horizon);
    let dataset = Dataset::new(spec.n_risk_factors(), records)?;
    Ok(GeneratedDataset {
        dataset,
        truth: Truth {
            spec: spec.clone(),
            censoring_rate: rate,
            realized_censoring: realized,
            subjects: subjects.into_iter().map(|s| s.truth).collect(),
        },
        realized_censoring: realized,
    })
}
