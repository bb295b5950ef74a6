//! Chain driver and the thinned draws it produces.

use std::time::Instant;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::sampler::JointSampler;
use super::structure::Structure;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::selection::empirical_t_update;
use crate::spec::{ChainSettings, ModelSpec, PriorKind};
use crate::survival::FeatureScaling;

/// Identifier of the build that produced a chain.
pub const BUILD_ID: &str = env!("JMSEL_BUILD_ID");

/// Thinned posterior draws of the monitored scalars, column-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub spec_hash: String,
    pub seed: u64,
    pub build_id: String,
    pub prior: PriorKind,
    pub n_risk_factors: usize,
    pub n_features: usize,
    pub columns: Vec<String>,
    #[serde(skip)]
    pub draws: Vec<Vec<f64>>,
    pub scaling: FeatureScaling,
    /// empirical slab-precision rate from the pilot chain
    pub t_hat: Option<f64>,
    /// post-burn-in pilot draws of 1 / s^2
    pub pilot_inv_s2: Vec<f64>,
    pub acceptance: Vec<(String, f64)>,
    pub elapsed_secs: f64,
}

pub fn alpha_column(g: usize, j: usize) -> String {
    format!("alpha[{},{}]", g + 1, j + 1)
}

pub fn inclusion_column(g: usize, j: usize) -> String {
    format!("incl[{},{}]", g + 1, j + 1)
}

pub fn group_column(g: usize) -> String {
    format!("group[{}]", g + 1)
}

impl ChainOutput {
    pub fn n_draws(&self) -> usize {
        self.draws.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .position(|c| c == name)
            .map(|i| self.draws[i].as_slice())
    }

    fn mean_of(&self, name: &str) -> f64 {
        let c = self
            .column(name)
            .unwrap_or_else(|| panic!("chain has no column {name}"));
        c.iter().sum::<f64>() / c.len() as f64
    }

    /// Posterior inclusion frequency of coefficient `(g, j)` (zero-based).
    pub fn inclusion_frequency(&self, g: usize, j: usize) -> f64 {
        self.mean_of(&inclusion_column(g, j))
    }

    pub fn group_frequency(&self, g: usize) -> f64 {
        self.mean_of(&group_column(g))
    }

    /// Posterior mean of `alpha_gj` on the standardized feature scale.
    pub fn alpha_mean(&self, g: usize, j: usize) -> f64 {
        self.mean_of(&alpha_column(g, j))
    }

    /// Posterior mean of `alpha_gj` per unit of the raw feature.
    pub fn alpha_raw_mean(&self, g: usize, j: usize) -> f64 {
        self.alpha_mean(g, j) / self.scaling.scale[g * self.n_features + j]
    }

    /// SHA-256 over the column names and draw bits.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for (name, col) in self.columns.iter().zip(&self.draws) {
            h.update(name.as_bytes());
            for v in col {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

fn column_names(s: &JointSampler) -> Vec<String> {
    let spec = s.spec();
    let (g_n, j_n) = (spec.n_risk_factors, spec.n_features());
    let mut c = Vec::new();
    for g in 0..g_n {
        for j in 0..j_n {
            c.push(alpha_column(g, j));
        }
    }
    for g in 0..g_n {
        for j in 0..j_n {
            c.push(inclusion_column(g, j));
        }
    }
    for g in 0..g_n {
        c.push(group_column(g));
    }
    for g in 0..g_n {
        for j in 0..j_n {
            c.push(format!("pi[{},{}]", g + 1, j + 1));
        }
    }
    if spec.prior != PriorKind::Ss {
        for g in 0..g_n {
            c.push(format!("pi_group[{}]", g + 1));
        }
        c.extend(["s2".to_string(), "inv_s2".to_string(), "t".to_string()]);
    } else {
        c.push("ss_precision".into());
    }
    if spec.prior.is_dirichlet() {
        for g in 0..g_n {
            for k in 0..j_n {
                c.push(format!("a[{},{}]", g + 1, k + 1));
            }
        }
    }
    for g in 0..g_n {
        c.push(format!("sigma2[{}]", g + 1));
    }
    let dim = s.structure().basis.dim();
    for g in 0..g_n {
        for k in 0..dim {
            c.push(format!("beta[{},{}]", g + 1, k));
        }
    }
    for q in 0..s.state().baseline.len() {
        c.push(format!("baseline[{q}]"));
    }
    for p in 0..s.state().gamma.len() {
        c.push(format!("gamma[{}]", p + 1));
    }
    c.push("surv_loglik".into());
    c
}

fn record(s: &JointSampler, out: &mut [Vec<f64>]) {
    let spec = s.spec();
    let (g_n, j_n) = (spec.n_risk_factors, spec.n_features());
    let sel = s.selection();
    let st = &sel.state;
    let mut row: Vec<f64> = Vec::with_capacity(out.len());
    row.extend_from_slice(s.alpha());
    for g in 0..g_n {
        for j in 0..j_n {
            row.push(sel.is_included(g, j) as u8 as f64);
        }
    }
    for g in 0..g_n {
        row.push(sel.group_on(g) as u8 as f64);
    }
    row.extend_from_slice(&st.feature_prob);
    if spec.prior != PriorKind::Ss {
        row.extend_from_slice(&st.group_prob);
        row.extend([st.s2, 1.0 / st.s2, sel.slab_rate()]);
    } else {
        row.push(st.ss_precision);
    }
    if spec.prior.is_dirichlet() {
        for w in &st.weights {
            row.extend_from_slice(w);
        }
    }
    let cs = s.state();
    row.extend_from_slice(&cs.sigma2);
    row.extend_from_slice(&cs.beta);
    row.extend_from_slice(&cs.baseline);
    row.extend_from_slice(&cs.gamma);
    row.push(s.survival_loglik());
    debug_assert_eq!(row.len(), out.len());
    for (col, v) in out.iter_mut().zip(row) {
        col.push(v);
    }
}

/// Independent seed for stream `k` of a master seed.
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng.next_u64()
}

fn run_sweeps(
    s: &mut JointSampler,
    iterations: usize,
    burn_in: usize,
    adapt: bool,
    mut on_draw: impl FnMut(&JointSampler, usize),
) -> Result<()> {
    for it in 0..iterations {
        if it == burn_in {
            s.reset_acceptance();
        }
        s.sweep(adapt && it < burn_in).map_err(|e| match e {
            e @ Error::NonFinite { .. } => e,
            e => Error::Sweep {
                iteration: it + 1,
                source: Box::new(e),
            },
        })?;
        if it >= burn_in {
            on_draw(s, it - burn_in);
        }
    }
    Ok(())
}

/// Whether the two-stage empirical rate procedure applies.
pub fn uses_two_stage(spec: &ModelSpec) -> bool {
    spec.prior.is_bsgs_family() && !spec.selection.single_stage && spec.selection.fixed_slab_variance.is_none()
}

/// Runs the chain (pilot plus final for the BSGS variants) and returns the
/// thinned final draws. Deterministic in `(spec, data, settings, seed)`.
pub fn run_chain(spec: &ModelSpec, data: &Dataset, settings: &ChainSettings, seed: u64) -> Result<ChainOutput> {
    settings.validate()?;
    let start = Instant::now();
    let (structure, prelim) = Structure::resolve(spec, data)?;
    let mut t_hat = None;
    let mut pilot_inv_s2 = Vec::new();
    if uses_two_stage(spec) {
        if settings.pilot_iterations <= settings.pilot_burn_in {
            return Err(Error::Config(format!(
                "pilot needs more iterations ({}) than burn-in ({})",
                settings.pilot_iterations, settings.pilot_burn_in
            )));
        }
        let mut pilot = JointSampler::with_structure(spec, structure.clone(), &prelim, data, derive_seed(seed, 1))?;
        run_sweeps(
            &mut pilot,
            settings.pilot_iterations,
            settings.pilot_burn_in,
            settings.adapt,
            |s, _| pilot_inv_s2.push(1.0 / s.selection_state().s2),
        )?;
        t_hat = Some(empirical_t_update(&pilot_inv_s2)?);
    }
    let mut s = JointSampler::with_structure(spec, structure.clone(), &prelim, data, derive_seed(seed, 2))?;
    if let Some(t) = t_hat {
        s.set_slab_rate(t);
    }
    let columns = column_names(&s);
    let mut draws = vec![Vec::with_capacity(settings.n_draws()); columns.len()];
    let thin = settings.thin;
    run_sweeps(&mut s, settings.iterations, settings.burn_in, settings.adapt, |s, k| {
        if (k + 1) % thin == 0 {
            record(s, &mut draws);
        }
    })?;
    Ok(ChainOutput {
        spec_hash: spec.hash(),
        seed,
        build_id: BUILD_ID.to_string(),
        prior: spec.prior,
        n_risk_factors: spec.n_risk_factors,
        n_features: spec.n_features(),
        columns,
        draws,
        scaling: structure.scaling,
        t_hat,
        pilot_inv_s2,
        acceptance: s.acceptance(),
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}
