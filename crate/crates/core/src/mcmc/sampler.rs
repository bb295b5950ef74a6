//! Metropolis-within-Gibbs sweep over the joint posterior.
//!
//! Per subject the sampler caches, at the hazard quadrature nodes on
//! `[0, T_i]` and at `T_i` itself, the trajectory basis rows, the baseline
//! spline rows, the standardized features, the baseline part of the linear
//! predictor and the association part. Updates touch only the cached pieces
//! they change.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::structure::{Prelim, Structure};
use crate::adapt::Step;
use crate::data::{Dataset, SubjectRecord, SurvivalOutcome};
use crate::error::{Error, Result};
use crate::longitudinal::LongitudinalObservation;
use crate::numeric::random::{gamma, inverse_wishart, mvn, mvn_from_precision, standard_normal, uniform};
use crate::numeric::{pairwise_sum, roots, GaussLegendre};
use crate::selection::{AlphaLikelihood, PriorOnly, SelectionConfig, SelectionSampler, SelectionState};
use crate::spec::ModelSpec;
use crate::survival::{FeatureKind, HazardModel, SubjectPath};

/// Parameters of the joint model other than the selection layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    /// fixed effects, risk-factor major (`g * dim + k`)
    pub beta: Vec<f64>,
    /// random effects per subject, same layout as `beta`
    pub b: Vec<Vec<f64>>,
    /// covariance blocks by polynomial order, each `G x G`
    pub d_blocks: Vec<DMatrix<f64>>,
    pub sigma2: Vec<f64>,
    /// log baseline hazard: intercept then spline coefficients
    pub baseline: Vec<f64>,
    pub gamma: Vec<f64>,
    pub iteration: usize,
}

struct SubjectCache {
    event: bool,
    covariates: Vec<f64>,
    /// quadrature weights on [0, T]
    weights: Vec<f64>,
    /// basis values, derivatives and integrals per point (`pt * dim + k`)
    val: Vec<f64>,
    der: Vec<f64>,
    int: Vec<f64>,
    /// baseline design rows per point (`pt * n_base + q`)
    spline: Vec<f64>,
    /// per risk factor: X'X, X'y, y'y and observation count
    xtx: Vec<DMatrix<f64>>,
    xty: Vec<DVector<f64>>,
    yty: Vec<f64>,
    nobs: Vec<usize>,
}

fn subject_sll(c: &SubjectCache, base: &[f64], assoc: &[f64]) -> f64 {
    let nq = c.weights.len();
    let mut h = 0.0;
    for k in 0..nq {
        h += c.weights[k] * (base[k] + assoc[k]).exp();
    }
    let lh = if c.event { base[nq] + assoc[nq] } else { 0.0 };
    lh - h
}

/// Survival log-likelihood as a function of the association coefficients,
/// over borrowed sampler caches.
struct AlphaView<'a> {
    subjects: &'a [SubjectCache],
    feat: &'a [f64],
    base: &'a [f64],
    assoc: &'a mut Vec<f64>,
    sll: &'a mut Vec<f64>,
    alpha: &'a mut Vec<f64>,
    total: f64,
    npts: usize,
    ncoef: usize,
    pend_assoc: Vec<f64>,
    pend_sll: Vec<f64>,
    pend_alpha: Vec<f64>,
    pend_total: f64,
}

impl AlphaLikelihood for AlphaView<'_> {
    fn current(&self) -> f64 {
        self.total
    }

    fn propose(&mut self, alpha: &[f64]) -> Result<f64> {
        let changed: Vec<(usize, f64)> = alpha
            .iter()
            .zip(self.alpha.iter())
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, (a, b))| (i, a - b))
            .collect();
        self.pend_alpha.clear();
        self.pend_alpha.extend_from_slice(alpha);
        let (npts, ncoef) = (self.npts, self.ncoef);
        for (i, c) in self.subjects.iter().enumerate() {
            let r = i * npts..(i + 1) * npts;
            for pt in r.clone() {
                let f = &self.feat[pt * ncoef..(pt + 1) * ncoef];
                let mut a = self.assoc[pt];
                for &(gj, da) in &changed {
                    a += da * f[gj];
                }
                self.pend_assoc[pt] = a;
            }
            self.pend_sll[i] = subject_sll(c, &self.base[r.clone()], &self.pend_assoc[r]);
        }
        self.pend_total = pairwise_sum(&self.pend_sll);
        Ok(self.pend_total)
    }

    fn accept(&mut self) {
        std::mem::swap(self.assoc, &mut self.pend_assoc);
        std::mem::swap(self.sll, &mut self.pend_sll);
        std::mem::swap(self.alpha, &mut self.pend_alpha);
        self.total = self.pend_total;
    }
}

/// The joint-model sampler: data caches, current state, tuned steps, RNG.
pub struct JointSampler {
    spec: ModelSpec,
    structure: Structure,
    subjects: Vec<SubjectCache>,
    /// longitudinal observations, kept for simulation templates
    records: Vec<SubjectRecord>,
    n_risk_factors: usize,
    dim: usize,
    n_features: usize,
    ncoef: usize,
    nbase: usize,
    npts: usize,
    state: ChainState,
    selection: SelectionSampler,
    feat: Vec<f64>,
    base: Vec<f64>,
    assoc: Vec<f64>,
    sll: Vec<f64>,
    alpha: Vec<f64>,
    base_steps: Vec<Step>,
    gamma_steps: Vec<Step>,
    beta_accept: Vec<Step>,
    b_accept: Step,
    likelihood: bool,
    rng: ChaCha8Rng,
}

impl JointSampler {
    /// Resolves the model structure from `data` and initializes the chain.
    pub fn new(spec: &ModelSpec, data: &Dataset, seed: u64) -> Result<Self> {
        let (structure, prelim) = Structure::resolve(spec, data)?;
        Self::with_structure(spec, structure, &prelim, data, seed)
    }

    pub fn with_structure(
        spec: &ModelSpec,
        structure: Structure,
        prelim: &Prelim,
        data: &Dataset,
        seed: u64,
    ) -> Result<Self> {
        let g_n = spec.n_risk_factors;
        let dim = structure.basis.dim();
        let j_n = spec.n_features();
        let nbase = structure.spline.n_basis();
        let p = data.n_covariates();
        let mut baseline = vec![0.0; nbase];
        baseline[0] = prelim.log_rate;
        let cfg = SelectionConfig::new(spec)?;
        let selection = SelectionSampler::initial(cfg)?;
        let alpha = selection.alpha();
        let n = data.subjects.len();
        let state = ChainState {
            beta: prelim.beta.clone(),
            b: vec![vec![0.0; g_n * dim]; n],
            d_blocks: vec![DMatrix::identity(g_n, g_n); dim],
            sigma2: prelim.sigma2.clone(),
            baseline,
            gamma: vec![0.0; p],
            iteration: 0,
        };
        let mut s = Self {
            spec: spec.clone(),
            structure,
            subjects: Vec::new(),
            records: Vec::new(),
            n_risk_factors: g_n,
            dim,
            n_features: j_n,
            ncoef: g_n * j_n,
            nbase,
            npts: spec.hazard_nodes + 1,
            state,
            selection,
            feat: Vec::new(),
            base: Vec::new(),
            assoc: Vec::new(),
            sll: Vec::new(),
            alpha,
            base_steps: vec![Step::new(0.1); nbase],
            gamma_steps: vec![Step::new(0.1); p],
            beta_accept: vec![Step::new(1.0); g_n],
            b_accept: Step::new(1.0),
            likelihood: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        s.set_data(data)?;
        if !s.sll.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "initial survival likelihood".into(),
                iteration: 0,
                dump: format!("{:?}", s.state.baseline),
            });
        }
        Ok(s)
    }

    /// Replaces the data, keeping the resolved structure and the current
    /// parameters. The subject count must not change.
    pub fn set_data(&mut self, data: &Dataset) -> Result<()> {
        data.validate()?;
        if !self.subjects.is_empty() && data.subjects.len() != self.subjects.len() {
            return Err(Error::Validation(format!(
                "replacement data has {} subjects, sampler has {}",
                data.subjects.len(),
                self.subjects.len()
            )));
        }
        if data.n_covariates() != self.state.gamma.len() {
            return Err(Error::Validation("covariate count changed".into()));
        }
        let basis = self.structure.basis;
        let dim = self.dim;
        let g_n = self.n_risk_factors;
        let rule = GaussLegendre::new(self.spec.hazard_nodes);
        let area_rule = GaussLegendre::new(self.spec.area_nodes);
        let baseline = self
            .structure
            .hazard_model(&self.state.baseline, &self.state.gamma, &self.alpha)?
            .baseline;
        let mut subjects = Vec::with_capacity(data.subjects.len());
        for s in &data.subjects {
            let t = s.survival.time;
            let mut points: Vec<f64> = Vec::with_capacity(self.npts);
            let mut weights = Vec::with_capacity(self.npts - 1);
            for (x, w) in rule.on_interval(0.0, t) {
                points.push(x);
                weights.push(w);
            }
            points.push(t);
            let mut val = vec![0.0; self.npts * dim];
            let mut der = vec![0.0; self.npts * dim];
            let mut int = vec![0.0; self.npts * dim];
            let mut spline = vec![0.0; self.npts * self.nbase];
            for (pt, &x) in points.iter().enumerate() {
                let age = s.entry_age + x;
                basis.values_into(age, &mut val[pt * dim..(pt + 1) * dim])?;
                basis.derivatives_into(age, &mut der[pt * dim..(pt + 1) * dim])?;
                basis.integrals_into(0.0, age, &area_rule, &mut int[pt * dim..(pt + 1) * dim])?;
                baseline.design_row_into(x, &mut spline[pt * self.nbase..(pt + 1) * self.nbase]);
            }
            let mut xtx = vec![DMatrix::zeros(dim, dim); g_n];
            let mut xty = vec![DVector::zeros(dim); g_n];
            let mut yty = vec![0.0; g_n];
            let mut nobs = vec![0; g_n];
            let mut row = [0.0; 3];
            for o in &s.observations {
                basis.values_into(o.age, &mut row)?;
                let x = DVector::from_row_slice(&row[..dim]);
                let g = o.risk_factor;
                xtx[g] += &x * x.transpose();
                xty[g] += &x * o.value;
                yty[g] += o.value * o.value;
                nobs[g] += 1;
            }
            subjects.push(SubjectCache {
                event: s.survival.event,
                covariates: s.survival.covariates.clone(),
                weights,
                val,
                der,
                int,
                spline,
                xtx,
                xty,
                yty,
                nobs,
            });
        }
        self.subjects = subjects;
        self.records = data.subjects.clone();
        if self.state.b.len() != data.subjects.len() {
            self.state.b = vec![vec![0.0; g_n * dim]; data.subjects.len()];
        }
        self.rebuild_caches();
        Ok(())
    }

    fn rebuild_caches(&mut self) {
        let n = self.subjects.len();
        self.feat = vec![0.0; n * self.npts * self.ncoef];
        self.base = vec![0.0; n * self.npts];
        self.assoc = vec![0.0; n * self.npts];
        self.sll = vec![0.0; n];
        for i in 0..n {
            for g in 0..self.n_risk_factors {
                let coef = self.coef(g, &self.state.beta[g * self.dim..(g + 1) * self.dim], &self.state.b[i]);
                let block = self.group_features(i, g, &coef);
                self.store_group_features(i, g, &block);
            }
            self.refresh_base(i);
            self.refresh_assoc(i);
            self.sll[i] = self.subject_sll_at(i);
        }
    }

    fn coef(&self, g: usize, beta_g: &[f64], b_i: &[f64]) -> [f64; 3] {
        let mut c = [0.0; 3];
        for k in 0..self.dim {
            c[k] = beta_g[k] + b_i[g * self.dim + k];
        }
        c
    }

    /// Standardized features of risk factor `g` at every point (`pt * J + j`).
    fn group_features(&self, i: usize, g: usize, coef: &[f64; 3]) -> Vec<f64> {
        let c = &self.subjects[i];
        let (dim, j_n) = (self.dim, self.n_features);
        let mut out = vec![0.0; self.npts * j_n];
        let sc = &self.structure.scaling;
        for pt in 0..self.npts {
            let dot = |rows: &[f64]| -> f64 { (0..dim).map(|k| rows[pt * dim + k] * coef[k]).sum() };
            let value = dot(&c.val);
            for (j, kind) in self.structure.features.iter().enumerate() {
                let raw = match kind {
                    FeatureKind::Value => value,
                    FeatureKind::Slope => dot(&c.der),
                    FeatureKind::Area => dot(&c.int),
                    FeatureKind::Threshold => {
                        if value > self.structure.thresholds[g] {
                            1.0
                        } else {
                            0.0
                        }
                    }
                };
                out[pt * j_n + j] = sc.apply(g * j_n + j, raw);
            }
        }
        out
    }

    fn store_group_features(&mut self, i: usize, g: usize, block: &[f64]) {
        let j_n = self.n_features;
        for pt in 0..self.npts {
            let dst = ((i * self.npts + pt) * self.ncoef) + g * j_n;
            self.feat[dst..dst + j_n].copy_from_slice(&block[pt * j_n..(pt + 1) * j_n]);
        }
    }

    fn refresh_base(&mut self, i: usize) {
        let c = &self.subjects[i];
        let wg: f64 = c.covariates.iter().zip(&self.state.gamma).map(|(w, g)| w * g).sum();
        for pt in 0..self.npts {
            let row = &c.spline[pt * self.nbase..(pt + 1) * self.nbase];
            let lb: f64 = row.iter().zip(&self.state.baseline).map(|(r, b)| r * b).sum();
            self.base[i * self.npts + pt] = lb + wg;
        }
    }

    fn refresh_assoc(&mut self, i: usize) {
        for pt in 0..self.npts {
            let f = &self.feat[(i * self.npts + pt) * self.ncoef..(i * self.npts + pt + 1) * self.ncoef];
            let a: f64 = self
                .alpha
                .iter()
                .zip(f)
                .filter(|(a, _)| **a != 0.0)
                .map(|(a, f)| a * f)
                .sum();
            self.assoc[i * self.npts + pt] = a;
        }
    }

    fn subject_sll_at(&self, i: usize) -> f64 {
        let r = i * self.npts..(i + 1) * self.npts;
        subject_sll(&self.subjects[i], &self.base[r.clone()], &self.assoc[r])
    }

    /// Turns the data likelihood on or off. Off makes the sweep a prior sampler.
    pub fn set_likelihood(&mut self, on: bool) {
        self.likelihood = on;
    }

    pub fn likelihood_enabled(&self) -> bool {
        self.likelihood
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn selection(&self) -> &SelectionSampler {
        &self.selection
    }

    pub fn selection_state(&self) -> &SelectionState {
        &self.selection.state
    }

    /// Association coefficients on the standardized feature scale.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn set_slab_rate(&mut self, t: f64) {
        self.selection.set_slab_rate(t);
    }

    pub fn slab_rate(&self) -> f64 {
        self.selection.slab_rate()
    }

    pub fn survival_loglik(&self) -> f64 {
        pairwise_sum(&self.sll)
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    /// Hazard model at the current parameters.
    pub fn hazard_model(&self) -> Result<HazardModel> {
        self.structure
            .hazard_model(&self.state.baseline, &self.state.gamma, &self.alpha)
    }

    /// Trajectory coefficients `beta_g + b_ig` of subject `i`, risk-factor major.
    pub fn trajectory_coefs(&self, i: usize) -> Vec<f64> {
        (0..self.n_risk_factors * self.dim)
            .map(|k| self.state.beta[k] + self.state.b[i][k])
            .collect()
    }

    fn non_finite(&self, context: &str) -> Error {
        Error::NonFinite {
            context: context.into(),
            iteration: self.state.iteration,
            dump: format!(
                "beta={:?} sigma2={:?} baseline={:?} gamma={:?} alpha={:?}",
                self.state.beta, self.state.sigma2, self.state.baseline, self.state.gamma, self.alpha
            ),
        }
    }

    /// One full sweep in the fixed order: fixed effects, random effects,
    /// covariance blocks, error variances, baseline and covariate
    /// coefficients, selection layer.
    pub fn sweep(&mut self, adapt: bool) -> Result<()> {
        self.state.iteration += 1;
        for g in 0..self.n_risk_factors {
            self.update_beta(g)?;
        }
        let d_inv = self.random_effects_precision()?;
        for i in 0..self.subjects.len() {
            self.update_b(i, &d_inv)?;
        }
        self.update_d()?;
        self.update_sigma2();
        for q in 0..self.nbase {
            self.update_baseline(q, adapt)?;
        }
        for p in 0..self.state.gamma.len() {
            self.update_gamma(p, adapt)?;
        }
        self.update_selection(adapt)?;
        Ok(())
    }

    fn alpha_group_zero(&self, g: usize) -> bool {
        let j_n = self.n_features;
        self.alpha[g * j_n..(g + 1) * j_n].iter().all(|&a| a == 0.0)
    }

    fn update_beta(&mut self, g: usize) -> Result<()> {
        let dim = self.dim;
        let prior_prec = 1.0 / (self.spec.hyper.beta_sd * self.spec.hyper.beta_sd);
        let mut prec = DMatrix::<f64>::identity(dim, dim) * prior_prec;
        let mut rhs = DVector::<f64>::zeros(dim);
        if self.likelihood {
            let s2 = self.state.sigma2[g];
            for (i, c) in self.subjects.iter().enumerate() {
                if c.nobs[g] == 0 {
                    continue;
                }
                let bi = DVector::from_row_slice(&self.state.b[i][g * dim..(g + 1) * dim]);
                prec += &c.xtx[g] / s2;
                rhs += (&c.xty[g] - &c.xtx[g] * bi) / s2;
            }
        }
        let prop = mvn_from_precision(&mut self.rng, &prec, &rhs)?;
        let survival_matters = self.likelihood && !self.alpha_group_zero(g);
        let n = self.subjects.len();
        let mut blocks = Vec::with_capacity(n);
        for i in 0..n {
            let coef = self.coef(g, prop.as_slice(), &self.state.b[i]);
            blocks.push(self.group_features(i, g, &coef));
        }
        if survival_matters {
            let j_n = self.n_features;
            let mut new_sll = vec![0.0; n];
            for i in 0..n {
                let assoc: Vec<f64> = (0..self.npts)
                    .map(|pt| {
                        let off = (i * self.npts + pt) * self.ncoef + g * j_n;
                        let mut a = self.assoc[i * self.npts + pt];
                        for j in 0..j_n {
                            let al = self.alpha[g * j_n + j];
                            if al != 0.0 {
                                a += al * (blocks[i][pt * j_n + j] - self.feat[off + j]);
                            }
                        }
                        a
                    })
                    .collect();
                let r = i * self.npts..(i + 1) * self.npts;
                new_sll[i] = subject_sll(&self.subjects[i], &self.base[r], &assoc);
            }
            let delta = pairwise_sum(&new_sll) - pairwise_sum(&self.sll);
            if delta.is_nan() {
                return Err(self.non_finite("fixed effects"));
            }
            let ok = delta >= 0.0 || uniform(&mut self.rng).ln() < delta;
            self.beta_accept[g].record(ok, false);
            if !ok {
                return Ok(());
            }
            self.sll = new_sll;
        }
        self.state.beta[g * dim..(g + 1) * dim].copy_from_slice(prop.as_slice());
        for (i, block) in blocks.iter().enumerate() {
            self.store_group_features(i, g, block);
            if survival_matters {
                self.refresh_assoc(i);
            }
        }
        Ok(())
    }

    /// Inverse of the block-diagonal random-effects covariance, laid out in
    /// the subject-vector order (`g * dim + k`).
    fn random_effects_precision(&self) -> Result<DMatrix<f64>> {
        let (g_n, dim) = (self.n_risk_factors, self.dim);
        let mut out = DMatrix::zeros(g_n * dim, g_n * dim);
        for k in 0..dim {
            let inv = self.state.d_blocks[k]
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::NotPositiveDefinite(format!("random-effects block {k}")))?;
            for g in 0..g_n {
                for h in 0..g_n {
                    out[(g * dim + k, h * dim + k)] = inv[(g, h)];
                }
            }
        }
        Ok(out)
    }

    fn update_b(&mut self, i: usize, d_inv: &DMatrix<f64>) -> Result<()> {
        let (g_n, dim) = (self.n_risk_factors, self.dim);
        let mut prec = d_inv.clone();
        let mut rhs = DVector::<f64>::zeros(g_n * dim);
        if self.likelihood {
            let c = &self.subjects[i];
            for g in 0..g_n {
                if c.nobs[g] == 0 {
                    continue;
                }
                let s2 = self.state.sigma2[g];
                let bg = DVector::from_row_slice(&self.state.beta[g * dim..(g + 1) * dim]);
                let r = (&c.xty[g] - &c.xtx[g] * bg) / s2;
                for k in 0..dim {
                    rhs[g * dim + k] = r[k];
                    for l in 0..dim {
                        prec[(g * dim + k, g * dim + l)] += c.xtx[g][(k, l)] / s2;
                    }
                }
            }
        }
        let prop = mvn_from_precision(&mut self.rng, &prec, &rhs)?;
        let prop: Vec<f64> = prop.iter().copied().collect();
        let blocks: Vec<Vec<f64>> = (0..g_n)
            .map(|g| {
                let coef = self.coef(g, &self.state.beta[g * dim..(g + 1) * dim], &prop);
                self.group_features(i, g, &coef)
            })
            .collect();
        let survival_matters = self.likelihood && self.alpha.iter().any(|&a| a != 0.0);
        let old_b = std::mem::replace(&mut self.state.b[i], prop);
        let old_feat = self.feat[i * self.npts * self.ncoef..(i + 1) * self.npts * self.ncoef].to_vec();
        let old_assoc = self.assoc[i * self.npts..(i + 1) * self.npts].to_vec();
        for (g, block) in blocks.iter().enumerate() {
            self.store_group_features(i, g, block);
        }
        if survival_matters {
            self.refresh_assoc(i);
            let new = self.subject_sll_at(i);
            if new.is_nan() {
                return Err(self.non_finite("random effects"));
            }
            let delta = new - self.sll[i];
            let ok = delta >= 0.0 || uniform(&mut self.rng).ln() < delta;
            self.b_accept.record(ok, false);
            if ok {
                self.sll[i] = new;
            } else {
                self.state.b[i] = old_b;
                self.feat[i * self.npts * self.ncoef..(i + 1) * self.npts * self.ncoef].copy_from_slice(&old_feat);
                self.assoc[i * self.npts..(i + 1) * self.npts].copy_from_slice(&old_assoc);
            }
        }
        Ok(())
    }

    fn update_d(&mut self) -> Result<()> {
        let (g_n, dim) = (self.n_risk_factors, self.dim);
        let df = self.spec.iw_df() + self.subjects.len() as f64;
        for k in 0..dim {
            let mut psi = DMatrix::<f64>::identity(g_n, g_n) * self.spec.hyper.iw_scale;
            for b in &self.state.b {
                let v = DVector::from_fn(g_n, |g, _| b[g * dim + k]);
                psi += &v * v.transpose();
            }
            self.state.d_blocks[k] = inverse_wishart(&mut self.rng, df, &psi)?;
        }
        Ok(())
    }

    fn update_sigma2(&mut self) {
        let dim = self.dim;
        let [a0, b0] = self.spec.hyper.sigma2_prior;
        for g in 0..self.n_risk_factors {
            let (mut shape, mut rate) = (a0, b0);
            if self.likelihood {
                let mut n = 0usize;
                let mut ssr = 0.0;
                for (i, c) in self.subjects.iter().enumerate() {
                    if c.nobs[g] == 0 {
                        continue;
                    }
                    let coef =
                        DVector::from_fn(dim, |k, _| self.state.beta[g * dim + k] + self.state.b[i][g * dim + k]);
                    ssr += c.yty[g] - 2.0 * coef.dot(&c.xty[g]) + (coef.transpose() * &c.xtx[g] * &coef)[(0, 0)];
                    n += c.nobs[g];
                }
                shape += n as f64 / 2.0;
                rate += ssr.max(0.0) / 2.0;
            }
            self.state.sigma2[g] = 1.0 / gamma(&mut self.rng, shape, rate);
        }
    }

    /// Random-walk step on one linear-predictor coefficient whose change
    /// shifts `base` by `delta * design(i, pt)`.
    fn base_move(
        &mut self,
        delta: f64,
        log_prior_delta: f64,
        design: impl Fn(&SubjectCache, usize) -> f64,
        context: &str,
    ) -> Result<bool> {
        if !self.likelihood {
            return Ok(log_prior_delta >= 0.0 || uniform(&mut self.rng).ln() < log_prior_delta);
        }
        let n = self.subjects.len();
        let mut new_base = self.base.clone();
        let mut new_sll = vec![0.0; n];
        for i in 0..n {
            let c = &self.subjects[i];
            for pt in 0..self.npts {
                new_base[i * self.npts + pt] += delta * design(c, pt);
            }
            let r = i * self.npts..(i + 1) * self.npts;
            new_sll[i] = subject_sll(c, &new_base[r.clone()], &self.assoc[r]);
        }
        let diff = pairwise_sum(&new_sll) - pairwise_sum(&self.sll) + log_prior_delta;
        if diff.is_nan() {
            return Err(self.non_finite(context));
        }
        let ok = diff >= 0.0 || uniform(&mut self.rng).ln() < diff;
        if ok {
            self.base = new_base;
            self.sll = new_sll;
        }
        Ok(ok)
    }

    fn update_baseline(&mut self, q: usize, adapt: bool) -> Result<()> {
        let h = &self.spec.hyper;
        let (mean, sd) = if q == 0 {
            (h.baseline_intercept_mean, h.baseline_intercept_sd)
        } else {
            (0.0, h.baseline_spline_sd)
        };
        let cur = self.state.baseline[q];
        let delta = self.base_steps[q].size() * standard_normal(&mut self.rng);
        let new = cur + delta;
        let lp = ((cur - mean).powi(2) - (new - mean).powi(2)) / (2.0 * sd * sd);
        let nbase = self.nbase;
        let ok = self.base_move(delta, lp, |c, pt| c.spline[pt * nbase + q], "baseline hazard")?;
        if ok {
            self.state.baseline[q] = new;
        }
        self.base_steps[q].record(ok, adapt);
        Ok(())
    }

    fn update_gamma(&mut self, p: usize, adapt: bool) -> Result<()> {
        let sd = self.spec.hyper.gamma_sd;
        let cur = self.state.gamma[p];
        let delta = self.gamma_steps[p].size() * standard_normal(&mut self.rng);
        let new = cur + delta;
        let lp = (cur * cur - new * new) / (2.0 * sd * sd);
        let ok = self.base_move(delta, lp, |c, _| c.covariates[p], "covariate coefficients")?;
        if ok {
            self.state.gamma[p] = new;
        }
        self.gamma_steps[p].record(ok, adapt);
        Ok(())
    }

    fn update_selection(&mut self, adapt: bool) -> Result<()> {
        self.selection.set_iteration(self.state.iteration);
        if !self.likelihood {
            self.selection.sweep(&mut PriorOnly, &mut self.rng, adapt)?;
            self.alpha = self.selection.alpha();
            for i in 0..self.subjects.len() {
                self.refresh_assoc(i);
                self.sll[i] = self.subject_sll_at(i);
            }
            return Ok(());
        }
        let n = self.subjects.len();
        let total = pairwise_sum(&self.sll);
        let mut view = AlphaView {
            subjects: &self.subjects,
            feat: &self.feat,
            base: &self.base,
            assoc: &mut self.assoc,
            sll: &mut self.sll,
            alpha: &mut self.alpha,
            total,
            npts: self.npts,
            ncoef: self.ncoef,
            pend_assoc: vec![0.0; n * self.npts],
            pend_sll: vec![0.0; n],
            pend_alpha: Vec::with_capacity(self.ncoef),
            pend_total: 0.0,
        };
        self.selection.sweep(&mut view, &mut self.rng, adapt)?;
        debug_assert_eq!(self.alpha, self.selection.alpha());
        // the selection sweep refreshes slabs of excluded coefficients only,
        // so the cached coefficients stay in sync
        self.alpha = self.selection.alpha();
        Ok(())
    }

    /// Replaces every parameter by an independent draw from its prior.
    pub fn draw_from_prior(&mut self) -> Result<()> {
        let h = self.spec.hyper.clone();
        let (g_n, dim) = (self.n_risk_factors, self.dim);
        for v in &mut self.state.beta {
            *v = h.beta_sd * standard_normal(&mut self.rng);
        }
        let psi = DMatrix::<f64>::identity(g_n, g_n) * h.iw_scale;
        let df = self.spec.iw_df();
        for k in 0..dim {
            self.state.d_blocks[k] = inverse_wishart(&mut self.rng, df, &psi)?;
        }
        for i in 0..self.state.b.len() {
            for k in 0..dim {
                let v = mvn(&mut self.rng, &self.state.d_blocks[k])?;
                for g in 0..g_n {
                    self.state.b[i][g * dim + k] = v[g];
                }
            }
        }
        for s2 in &mut self.state.sigma2 {
            *s2 = 1.0 / gamma(&mut self.rng, h.sigma2_prior[0], h.sigma2_prior[1]);
        }
        for (q, c) in self.state.baseline.iter_mut().enumerate() {
            *c = if q == 0 {
                h.baseline_intercept_mean + h.baseline_intercept_sd * standard_normal(&mut self.rng)
            } else {
                h.baseline_spline_sd * standard_normal(&mut self.rng)
            };
        }
        for c in &mut self.state.gamma {
            *c = h.gamma_sd * standard_normal(&mut self.rng);
        }
        self.selection.draw_prior(&mut self.rng)?;
        self.alpha = self.selection.alpha();
        self.rebuild_caches();
        Ok(())
    }

    /// Draws new outcomes for the current subjects from the model at the
    /// current parameters: longitudinal values at the existing ages and
    /// event times by inversion of the cumulative hazard, censored at
    /// `horizon`. Observations after the new exit time are kept.
    pub fn simulate_outcomes(&mut self, horizon: f64) -> Result<Dataset> {
        let model = self.hazard_model()?;
        let dim = self.dim;
        let mut subjects = Vec::with_capacity(self.records.len());
        for i in 0..self.records.len() {
            let rec = &self.records[i];
            let coefs = self.trajectory_coefs(i);
            let mut observations = Vec::with_capacity(rec.observations.len());
            let mut row = [0.0; 3];
            for o in &rec.observations {
                self.structure.basis.values_into(o.age, &mut row)?;
                let g = o.risk_factor;
                let mu: f64 = (0..dim).map(|k| row[k] * coefs[g * dim + k]).sum();
                let value = mu + self.state.sigma2[g].sqrt() * standard_normal(&mut self.rng);
                observations.push(LongitudinalObservation {
                    risk_factor: g,
                    age: o.age,
                    value,
                });
            }
            let path = SubjectPath {
                entry_age: rec.entry_age,
                covariates: &rec.survival.covariates,
                coefs: &coefs,
            };
            let u = crate::numeric::random::open_uniform(&mut self.rng);
            let (time, event) = invert_cumulative_hazard(&model, &path, -u.ln(), horizon)?;
            subjects.push(SubjectRecord {
                id: rec.id.clone(),
                entry_age: rec.entry_age,
                observations,
                survival: SurvivalOutcome {
                    time,
                    event,
                    covariates: rec.survival.covariates.clone(),
                },
            });
        }
        Dataset::new(self.n_risk_factors, subjects)
    }

    /// Acceptance rates of every Metropolis step since the last reset.
    pub fn acceptance(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for (g, s) in self.beta_accept.iter().enumerate() {
            out.push((format!("beta[{}]", g + 1), s.acceptance_rate()));
        }
        out.push(("b".into(), self.b_accept.acceptance_rate()));
        for (q, s) in self.base_steps.iter().enumerate() {
            out.push((format!("baseline[{q}]"), s.acceptance_rate()));
        }
        for (p, s) in self.gamma_steps.iter().enumerate() {
            out.push((format!("gamma[{}]", p + 1), s.acceptance_rate()));
        }
        out.extend(self.selection.acceptance());
        out
    }

    pub fn reset_acceptance(&mut self) {
        for s in self
            .beta_accept
            .iter_mut()
            .chain(self.base_steps.iter_mut())
            .chain(self.gamma_steps.iter_mut())
        {
            s.reset_counts();
        }
        self.b_accept.reset_counts();
        self.selection.reset_acceptance();
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Recomputes every cache from scratch and returns the largest absolute
    /// discrepancy in per-subject survival log-likelihood.
    pub fn cache_drift(&mut self) -> f64 {
        let old = self.sll.clone();
        self.rebuild_caches();
        old.iter()
            .zip(&self.sll)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Solves `H(t) = target` for the event time; `(horizon, false)` when the
/// cumulative hazard stays below the target up to the horizon.
pub fn invert_cumulative_hazard(
    model: &HazardModel,
    path: &SubjectPath<'_>,
    target: f64,
    horizon: f64,
) -> Result<(f64, bool)> {
    if model.cumulative_hazard(path, horizon)? < target {
        return Ok((horizon, false));
    }
    let mut err = None;
    let t = roots::brent(
        |t| match model.cumulative_hazard(path, t) {
            Ok(h) => h - target,
            Err(e) => {
                err = Some(e);
                f64::NAN
            }
        },
        0.0,
        horizon,
        1e-10,
        200,
    )?;
    if let Some(e) = err {
        return Err(e);
    }
    // an event at exactly zero follow-up is not representable
    Ok((t.max(1e-9), true))
}
