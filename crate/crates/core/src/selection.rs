//! Spike-and-slab selection over the association coefficients.
//!
//! Each coefficient is `alpha_gj = on_g * on_gj * tau_gj * d_gj`. Slab values
//! of excluded coordinates are retained and refreshed from their priors, so
//! an indicator move compares the likelihood at the retained slab value with
//! the likelihood at zero.
//!
//! Conjugate hyperparameter steps use only the active coordinates and are
//! followed immediately by a prior refresh of the inactive ones.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adapt::Step;
use crate::error::{Error, Result};
use crate::numeric::random::{
    bernoulli, beta, categorical_log, gamma, half_cauchy, half_normal, ln_dirichlet_from_log, ln_half_cauchy,
    log_dirichlet, standard_normal, uniform,
};
use crate::numeric::{log_add_exp, pairwise_sum};
use crate::prior_calculus::{
    build_concentration, enumerate_masks, q_to_pi, CombinationProbs, DirichletWeights, FeatureMask, MaskCatalog,
    WeightScaling,
};
use crate::spec::{Hyperparameters, ModelSpec, PriorKind, SelectionOptions};

/// Log-likelihood as a function of the association coefficients, with a
/// propose/accept protocol so implementations can cache partial results.
pub trait AlphaLikelihood {
    /// Log-likelihood at the accepted coefficients.
    fn current(&self) -> f64;
    /// Log-likelihood at `alpha` (risk-factor major), held as pending.
    fn propose(&mut self, alpha: &[f64]) -> Result<f64>;
    /// Makes the last proposal current.
    fn accept(&mut self);
}

/// Flat likelihood: turns the sampler into a prior sampler.
#[derive(Clone, Copy, Debug, Default)]
pub struct PriorOnly;

impl AlphaLikelihood for PriorOnly {
    fn current(&self) -> f64 {
        0.0
    }

    fn propose(&mut self, _alpha: &[f64]) -> Result<f64> {
        Ok(0.0)
    }

    fn accept(&mut self) {}
}

/// Static configuration of the selection layer.
#[derive(Clone, Debug)]
pub struct SelectionConfig {
    pub prior: PriorKind,
    pub n_groups: usize,
    pub n_features: usize,
    pub hyper: Hyperparameters,
    pub options: SelectionOptions,
    /// rate t of the Gamma prior on 1 / s^2
    pub slab_rate: f64,
    catalog: MaskCatalog,
}

impl SelectionConfig {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let cfg = Self {
            prior: spec.prior,
            n_groups: spec.n_risk_factors,
            n_features: spec.n_features(),
            hyper: spec.hyper.clone(),
            options: spec.selection.clone(),
            slab_rate: spec.hyper.slab_precision_rate,
            catalog: enumerate_masks(spec.n_features())?,
        };
        if let Some(w) = &cfg.options.fixed_dirichlet_weights {
            DirichletWeights::new(w.clone(), cfg.scaling())?;
        }
        if let Some(s2) = cfg.options.fixed_slab_variance {
            if !(s2.is_finite() && s2 > 0.0) {
                return Err(Error::Config(format!("fixed slab variance must be positive, got {s2}")));
            }
        }
        Ok(cfg)
    }

    pub fn catalog(&self) -> &MaskCatalog {
        &self.catalog
    }

    pub fn scaling(&self) -> WeightScaling {
        self.prior.weight_scaling()
    }

    /// Prior probability of the slab given a mixture probability.
    fn slab(&self, p: f64) -> f64 {
        if self.options.literal_mixture_weights {
            1.0 - p
        } else {
            p
        }
    }

    fn n_coef(&self) -> usize {
        self.n_groups * self.n_features
    }
}

/// Current values of every selection-layer variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionState {
    /// group indicators (always true under SS)
    pub group_active: Vec<bool>,
    /// per-coefficient indicator bits; for the Dirichlet priors these are the
    /// group's combination mask
    pub bits: Vec<bool>,
    /// slab magnitudes (fixed at 1 under SS)
    pub tau: Vec<f64>,
    /// slab coordinates
    pub d: Vec<f64>,
    pub group_prob: Vec<f64>,
    pub feature_prob: Vec<f64>,
    /// log combination probabilities per group (Dirichlet priors)
    pub log_q: Vec<Vec<f64>>,
    /// Dirichlet weights per group (Dirichlet priors)
    pub weights: Vec<Vec<f64>>,
    pub s2: f64,
    /// slab precision (SS)
    pub ss_precision: f64,
}

impl SelectionState {
    fn mask(&self, g: usize, n_features: usize) -> FeatureMask {
        let mut bits = 0u16;
        for j in 0..n_features {
            if self.bits[g * n_features + j] {
                bits |= 1 << j;
            }
        }
        FeatureMask::new(bits).expect("nonempty combination mask")
    }
}

/// Metropolis-within-Gibbs updates for the selection layer.
#[derive(Clone, Debug)]
pub struct SelectionSampler {
    cfg: SelectionConfig,
    pub state: SelectionState,
    concentration: Vec<Vec<f64>>,
    tau_steps: Vec<Step>,
    d_steps: Vec<Step>,
    a_steps: Vec<Step>,
    iteration: usize,
}

impl SelectionSampler {
    /// Starting state: every group and feature included with small slab values.
    pub fn initial(cfg: SelectionConfig) -> Result<Self> {
        let (g_n, j_n) = (cfg.n_groups, cfg.n_features);
        let n = cfg.n_coef();
        let literal = cfg.options.literal_mixture_weights;
        let mut bits = vec![true; n];
        if cfg.prior.is_dirichlet() && literal {
            // the mask lists excluded features; keep only the last one out
            for g in 0..g_n {
                for j in 0..j_n - 1 {
                    bits[g * j_n + j] = false;
                }
            }
        }
        let tau = if cfg.prior == PriorKind::Ss {
            vec![1.0; n]
        } else {
            vec![0.1; n]
        };
        let mut weights = Vec::new();
        let mut log_q = Vec::new();
        if cfg.prior.is_dirichlet() {
            let w = cfg
                .options
                .fixed_dirichlet_weights
                .clone()
                .unwrap_or_else(|| (0..j_n).map(|k| (j_n - k) as f64).collect());
            for _ in 0..g_n {
                weights.push(w.clone());
            }
        }
        let s2 = cfg.options.fixed_slab_variance.unwrap_or(1.0);
        let mut s = Self {
            state: SelectionState {
                group_active: vec![true; g_n],
                bits,
                tau,
                d: vec![0.1; n],
                group_prob: vec![0.5; g_n],
                feature_prob: vec![0.5; n],
                log_q: Vec::new(),
                weights,
                s2,
                ss_precision: 1.0,
            },
            concentration: Vec::new(),
            tau_steps: vec![Step::new(0.3); n],
            d_steps: vec![Step::new(0.5); n],
            a_steps: vec![Step::new(0.5); n],
            iteration: 0,
            cfg,
        };
        s.rebuild_concentration()?;
        for g in 0..s.cfg.n_groups.min(s.concentration.len()) {
            let total: f64 = s.concentration[g].iter().sum();
            log_q.push(s.concentration[g].iter().map(|c| (c / total).ln()).collect());
        }
        s.state.log_q = log_q;
        s.refresh_feature_probs()?;
        Ok(s)
    }

    /// Independent draw from the joint prior of the selection layer.
    pub fn from_prior<R: Rng + ?Sized>(cfg: SelectionConfig, rng: &mut R) -> Result<Self> {
        let mut s = Self::initial(cfg)?;
        s.draw_prior(rng)?;
        Ok(s)
    }

    /// Replaces the state by a fresh prior draw.
    pub fn draw_prior<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let cfg = self.cfg.clone();
        let (g_n, j_n) = (cfg.n_groups, cfg.n_features);
        let h = &cfg.hyper;
        let st = &mut self.state;
        st.s2 = match cfg.options.fixed_slab_variance {
            Some(v) => v,
            None => 1.0 / gamma(rng, h.slab_precision_shape, cfg.slab_rate),
        };
        match cfg.prior {
            PriorKind::BsgsD | PriorKind::BsgsDI => {
                for g in 0..g_n {
                    let p = beta(rng, h.group_beta[0], h.group_beta[1]);
                    st.group_prob[g] = p;
                    st.group_active[g] = bernoulli(rng, cfg.slab(p));
                    st.weights[g] = match &cfg.options.fixed_dirichlet_weights {
                        Some(w) => w.clone(),
                        None => {
                            let mut w: Vec<f64> = (0..j_n).map(|_| half_cauchy(rng, 1.0)).collect();
                            w.sort_by(|a, b| b.total_cmp(a));
                            w
                        }
                    };
                }
                self.rebuild_concentration()?;
                let st = &mut self.state;
                for g in 0..g_n {
                    st.log_q[g] = log_dirichlet(rng, &self.concentration[g]);
                    let c = categorical_log(rng, &st.log_q[g]);
                    set_mask(&mut st.bits, g, j_n, cfg.catalog.get(c));
                }
                self.refresh_feature_probs()?;
            }
            PriorKind::Bsgs => {
                let p0 = beta(rng, h.group_beta[0], h.group_beta[1]);
                let p1 = beta(rng, h.feature_beta[0], h.feature_beta[1]);
                st.group_prob.fill(p0);
                st.feature_prob.fill(p1);
                for g in 0..g_n {
                    st.group_active[g] = bernoulli(rng, cfg.slab(p0));
                }
                for b in &mut st.bits {
                    *b = bernoulli(rng, cfg.slab(p1));
                }
            }
            PriorKind::Ss => {
                st.group_active.fill(true);
                st.group_prob.fill(1.0);
                st.ss_precision = gamma(rng, h.ss_precision[0], h.ss_precision[1]);
                for (p, b) in st.feature_prob.iter_mut().zip(&mut st.bits) {
                    *p = beta(rng, h.ss_beta[0], h.ss_beta[1]);
                    *b = bernoulli(rng, cfg.slab(*p));
                }
            }
        }
        let st = &mut self.state;
        if cfg.prior == PriorKind::Ss {
            let sd = 1.0 / st.ss_precision.sqrt();
            for d in &mut st.d {
                *d = sd * standard_normal(rng);
            }
        } else {
            let s = st.s2.sqrt();
            for (t, d) in st.tau.iter_mut().zip(&mut st.d) {
                *t = half_normal(rng, s);
                *d = standard_normal(rng);
            }
        }
        Ok(())
    }

    pub fn config(&self) -> &SelectionConfig {
        &self.cfg
    }

    pub fn set_slab_rate(&mut self, t: f64) {
        self.cfg.slab_rate = t;
    }

    pub fn slab_rate(&self) -> f64 {
        self.cfg.slab_rate
    }

    /// Sweep counter used in diagnostics.
    pub fn set_iteration(&mut self, it: usize) {
        self.iteration = it;
    }

    pub fn group_on(&self, g: usize) -> bool {
        self.cfg.prior == PriorKind::Ss || self.state.group_active[g]
    }

    fn feature_on_bits(&self, bits: &[bool], g: usize, j: usize) -> bool {
        let b = bits[g * self.cfg.n_features + j];
        if self.cfg.prior.is_dirichlet() && self.cfg.options.literal_mixture_weights {
            !b
        } else {
            b
        }
    }

    pub fn feature_on(&self, g: usize, j: usize) -> bool {
        self.feature_on_bits(&self.state.bits, g, j)
    }

    /// Whether coefficient `(g, j)` currently sits in the slab.
    pub fn is_included(&self, g: usize, j: usize) -> bool {
        self.group_on(g) && self.feature_on(g, j)
    }

    pub fn included(&self) -> Vec<bool> {
        let j_n = self.cfg.n_features;
        (0..self.cfg.n_coef())
            .map(|i| self.is_included(i / j_n, i % j_n))
            .collect()
    }

    /// Association coefficients implied by the current state.
    pub fn alpha(&self) -> Vec<f64> {
        let j_n = self.cfg.n_features;
        let st = &self.state;
        (0..self.cfg.n_coef())
            .map(|i| {
                if self.is_included(i / j_n, i % j_n) {
                    st.tau[i] * st.d[i]
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Slab variance of `d` (1 under the BSGS family, 1 / precision under SS).
    fn d_prior_precision(&self) -> f64 {
        if self.cfg.prior == PriorKind::Ss {
            self.state.ss_precision
        } else {
            1.0
        }
    }

    fn rebuild_concentration(&mut self) -> Result<()> {
        self.concentration.clear();
        if self.cfg.prior.is_dirichlet() {
            for w in &self.state.weights {
                let dw = DirichletWeights::new(w.clone(), self.cfg.scaling())?;
                self.concentration.push(build_concentration(&dw, &self.cfg.catalog)?);
            }
        }
        Ok(())
    }

    fn refresh_feature_probs(&mut self) -> Result<()> {
        if !self.cfg.prior.is_dirichlet() {
            return Ok(());
        }
        let j_n = self.cfg.n_features;
        for g in 0..self.cfg.n_groups {
            let q = CombinationProbs::from_log(&self.state.log_q[g]);
            let pi = q_to_pi(&q, &self.cfg.catalog)?;
            self.state.feature_prob[g * j_n..(g + 1) * j_n].copy_from_slice(pi.as_slice());
        }
        Ok(())
    }

    fn non_finite(&self, context: &str) -> Error {
        Error::NonFinite {
            context: context.to_string(),
            iteration: self.iteration,
            dump: format!("{:?}", self.state),
        }
    }

    /// Gibbs draw of a binary variable whose two values imply `alpha_other`
    /// (the flipped value) and the current coefficients.
    fn gibbs_flip<L: AlphaLikelihood, R: Rng + ?Sized>(
        &self,
        lik: &mut L,
        rng: &mut R,
        current: bool,
        log_prior_true: f64,
        log_prior_false: f64,
        alpha_other: &[f64],
        context: &str,
    ) -> Result<bool> {
        let ll_cur = lik.current();
        let ll_other = lik.propose(alpha_other)?;
        if ll_other.is_nan() || ll_cur.is_nan() {
            return Err(self.non_finite(context));
        }
        let (ll_t, ll_f) = if current {
            (ll_cur, ll_other)
        } else {
            (ll_other, ll_cur)
        };
        let lt = log_prior_true + ll_t;
        let lf = log_prior_false + ll_f;
        let norm = log_add_exp(lt, lf);
        if !norm.is_finite() {
            return Err(self.non_finite(context));
        }
        let new = uniform(rng) < (lt - norm).exp();
        if new != current {
            lik.accept();
        }
        Ok(new)
    }

    fn metropolis<L: AlphaLikelihood, R: Rng + ?Sized>(
        &self,
        lik: &mut L,
        rng: &mut R,
        log_prior_delta: f64,
        alpha_new: &[f64],
        context: &str,
    ) -> Result<bool> {
        let ll_new = lik.propose(alpha_new)?;
        if ll_new.is_nan() {
            return Err(self.non_finite(context));
        }
        let log_r = ll_new - lik.current() + log_prior_delta;
        let ok = log_r >= 0.0 || uniform(rng).ln() < log_r;
        if ok {
            lik.accept();
        }
        Ok(ok)
    }

    /// One pass over every selection-layer variable.
    pub fn sweep<L: AlphaLikelihood, R: Rng + ?Sized>(&mut self, lik: &mut L, rng: &mut R, adapt: bool) -> Result<()> {
        for g in 0..self.cfg.n_groups {
            if self.cfg.prior != PriorKind::Ss {
                self.update_group(g, lik, rng)?;
            }
            if self.group_on(g) {
                for j in 0..self.cfg.n_features {
                    self.update_bit(g, j, lik, rng)?;
                }
                for j in 0..self.cfg.n_features {
                    if self.is_included(g, j) {
                        if self.cfg.prior != PriorKind::Ss {
                            self.update_tau(g, j, lik, rng, adapt)?;
                        }
                        self.update_d(g, j, lik, rng, adapt)?;
                    }
                }
            }
        }
        self.update_hyper(rng, adapt)
    }

    fn update_group<L: AlphaLikelihood, R: Rng + ?Sized>(&mut self, g: usize, lik: &mut L, rng: &mut R) -> Result<()> {
        let j_n = self.cfg.n_features;
        let on = self.state.group_active[g];
        let mut alt = self.alpha();
        for j in 0..j_n {
            let i = g * j_n + j;
            alt[i] = if !on && self.feature_on(g, j) {
                self.state.tau[i] * self.state.d[i]
            } else {
                0.0
            };
        }
        let p = self.cfg.slab(self.state.group_prob[g]);
        let new = self.gibbs_flip(lik, rng, on, p.ln(), (1.0 - p).ln(), &alt, "group indicator")?;
        self.state.group_active[g] = new;
        Ok(())
    }

    fn update_bit<L: AlphaLikelihood, R: Rng + ?Sized>(
        &mut self,
        g: usize,
        j: usize,
        lik: &mut L,
        rng: &mut R,
    ) -> Result<()> {
        let j_n = self.cfg.n_features;
        let i = g * j_n + j;
        let cur = self.state.bits[i];
        let (lp1, lp0) = match self.cfg.prior {
            PriorKind::BsgsD | PriorKind::BsgsDI => {
                let mask = self.state.mask(g, j_n);
                let cat = &self.cfg.catalog;
                let lq = &self.state.log_q[g];
                let with = lq[cat.index_of(mask.with(j))];
                let without = mask.without(j).map_or(f64::NEG_INFINITY, |m| lq[cat.index_of(m)]);
                (with, without)
            }
            PriorKind::Bsgs | PriorKind::Ss => {
                let p = self.cfg.slab(self.state.feature_prob[i]);
                (p.ln(), (1.0 - p).ln())
            }
        };
        if (cur && lp0 == f64::NEG_INFINITY) || (!cur && lp1 == f64::NEG_INFINITY) {
            return Ok(());
        }
        let mut flipped = self.state.bits.clone();
        flipped[i] = !cur;
        let mut alt = self.alpha();
        alt[i] = if self.feature_on_bits(&flipped, g, j) {
            self.state.tau[i] * self.state.d[i]
        } else {
            0.0
        };
        let new = self.gibbs_flip(lik, rng, cur, lp1, lp0, &alt, "feature indicator")?;
        self.state.bits[i] = new;
        Ok(())
    }

    fn update_tau<L: AlphaLikelihood, R: Rng + ?Sized>(
        &mut self,
        g: usize,
        j: usize,
        lik: &mut L,
        rng: &mut R,
        adapt: bool,
    ) -> Result<()> {
        let i = g * self.cfg.n_features + j;
        let t = self.state.tau[i];
        let t_new = (t + self.tau_steps[i].size() * standard_normal(rng)).abs();
        let lp = -(t_new * t_new - t * t) / (2.0 * self.state.s2);
        let mut alt = self.alpha();
        alt[i] = t_new * self.state.d[i];
        let ok = self.metropolis(lik, rng, lp, &alt, "slab magnitude")?;
        if ok {
            self.state.tau[i] = t_new;
        }
        self.tau_steps[i].record(ok, adapt);
        Ok(())
    }

    fn update_d<L: AlphaLikelihood, R: Rng + ?Sized>(
        &mut self,
        g: usize,
        j: usize,
        lik: &mut L,
        rng: &mut R,
        adapt: bool,
    ) -> Result<()> {
        let i = g * self.cfg.n_features + j;
        let d = self.state.d[i];
        let d_new = d + self.d_steps[i].size() * standard_normal(rng);
        let lp = -0.5 * self.d_prior_precision() * (d_new * d_new - d * d);
        let mut alt = self.alpha();
        alt[i] = self.state.tau[i] * d_new;
        let ok = self.metropolis(lik, rng, lp, &alt, "slab coordinate")?;
        if ok {
            self.state.d[i] = d_new;
        }
        self.d_steps[i].record(ok, adapt);
        Ok(())
    }

    fn update_hyper<R: Rng + ?Sized>(&mut self, rng: &mut R, adapt: bool) -> Result<()> {
        let cfg = self.cfg.clone();
        let (g_n, j_n) = (cfg.n_groups, cfg.n_features);
        let literal = cfg.options.literal_mixture_weights;
        let h = &cfg.hyper;
        // a Beta "success" is the event whose probability is pi
        let success = |on: bool| on != literal;
        match cfg.prior {
            PriorKind::BsgsD | PriorKind::BsgsDI => {
                for g in 0..g_n {
                    let s = success(self.state.group_active[g]) as u8 as f64;
                    self.state.group_prob[g] = beta(rng, h.group_beta[0] + s, h.group_beta[1] + 1.0 - s);
                }
                for g in 0..g_n {
                    let mut post = self.concentration[g].clone();
                    if self.state.group_active[g] {
                        let m = self.state.mask(g, j_n);
                        post[cfg.catalog.index_of(m)] += 1.0;
                    }
                    self.state.log_q[g] = log_dirichlet(rng, &post);
                    if !self.state.group_active[g] {
                        let c = categorical_log(rng, &self.state.log_q[g]);
                        set_mask(&mut self.state.bits, g, j_n, cfg.catalog.get(c));
                    }
                    if cfg.options.fixed_dirichlet_weights.is_none() {
                        self.update_weights(g, rng, adapt)?;
                    }
                }
                self.refresh_feature_probs()?;
            }
            PriorKind::Bsgs => {
                let n_s = (0..g_n).filter(|&g| success(self.state.group_active[g])).count() as f64;
                let p0 = beta(rng, h.group_beta[0] + n_s, h.group_beta[1] + g_n as f64 - n_s);
                self.state.group_prob.fill(p0);
                let mut trials = 0.0;
                let mut succ = 0.0;
                for g in (0..g_n).filter(|&g| self.state.group_active[g]) {
                    for j in 0..j_n {
                        trials += 1.0;
                        if success(self.state.bits[g * j_n + j]) {
                            succ += 1.0;
                        }
                    }
                }
                let p1 = beta(rng, h.feature_beta[0] + succ, h.feature_beta[1] + trials - succ);
                self.state.feature_prob.fill(p1);
                for g in (0..g_n).filter(|&g| !self.state.group_active[g]) {
                    for j in 0..j_n {
                        self.state.bits[g * j_n + j] = bernoulli(rng, cfg.slab(p1));
                    }
                }
            }
            PriorKind::Ss => {
                for i in 0..cfg.n_coef() {
                    let s = success(self.state.bits[i]) as u8 as f64;
                    self.state.feature_prob[i] = beta(rng, h.ss_beta[0] + s, h.ss_beta[1] + 1.0 - s);
                }
            }
        }

        let included = self.included();
        if cfg.prior == PriorKind::Ss {
            let on: Vec<f64> = (0..cfg.n_coef())
                .filter(|&i| included[i])
                .map(|i| self.state.d[i])
                .collect();
            let (shape, rate) = slab_precision_posterior(h.ss_precision[0], h.ss_precision[1], &on);
            self.state.ss_precision = gamma(rng, shape, rate);
            let sd = 1.0 / self.state.ss_precision.sqrt();
            for i in (0..cfg.n_coef()).filter(|&i| !included[i]) {
                self.state.d[i] = sd * standard_normal(rng);
            }
        } else {
            if cfg.options.fixed_slab_variance.is_none() {
                let on: Vec<f64> = (0..cfg.n_coef())
                    .filter(|&i| included[i])
                    .map(|i| self.state.tau[i])
                    .collect();
                let (shape, rate) = slab_precision_posterior(h.slab_precision_shape, cfg.slab_rate, &on);
                self.state.s2 = 1.0 / gamma(rng, shape, rate);
            }
            let s = self.state.s2.sqrt();
            for i in (0..cfg.n_coef()).filter(|&i| !included[i]) {
                self.state.tau[i] = half_normal(rng, s);
                self.state.d[i] = standard_normal(rng);
            }
        }
        Ok(())
    }

    /// Log-scale random-walk updates of one group's Dirichlet weights under
    /// ordered half-Cauchy priors.
    fn update_weights<R: Rng + ?Sized>(&mut self, g: usize, rng: &mut R, adapt: bool) -> Result<()> {
        let j_n = self.cfg.n_features;
        let scaling = self.cfg.scaling();
        for k in 0..j_n {
            let si = g * j_n + k;
            let a = self.state.weights[g][k];
            let a_new = (a.ln() + self.a_steps[si].size() * standard_normal(rng)).exp();
            let mut prop = self.state.weights[g].clone();
            prop[k] = a_new;
            let dw = DirichletWeights::unchecked(prop.clone(), scaling);
            if !dw.is_ordered() {
                self.a_steps[si].record(false, adapt);
                continue;
            }
            let conc_new = build_concentration(&dw, &self.cfg.catalog)?;
            let lq = &self.state.log_q[g];
            let lp = ln_half_cauchy(a_new) + a_new.ln() - ln_half_cauchy(a) - a.ln()
                + ln_dirichlet_from_log(lq, &conc_new)
                - ln_dirichlet_from_log(lq, &self.concentration[g]);
            if lp.is_nan() {
                return Err(self.non_finite("Dirichlet weights"));
            }
            let ok = lp >= 0.0 || uniform(rng).ln() < lp;
            if ok {
                self.state.weights[g] = prop;
                self.concentration[g] = conc_new;
            }
            self.a_steps[si].record(ok, adapt);
        }
        Ok(())
    }

    /// Acceptance rates of the slab and weight random walks.
    pub fn acceptance(&self) -> Vec<(String, f64)> {
        let j_n = self.cfg.n_features;
        let mut out = Vec::new();
        for i in 0..self.cfg.n_coef() {
            let (g, j) = (i / j_n + 1, i % j_n + 1);
            if self.cfg.prior != PriorKind::Ss {
                out.push((format!("tau[{g},{j}]"), self.tau_steps[i].acceptance_rate()));
            }
            out.push((format!("d[{g},{j}]"), self.d_steps[i].acceptance_rate()));
            if self.cfg.prior.is_dirichlet() && self.cfg.options.fixed_dirichlet_weights.is_none() {
                out.push((format!("a[{g},{j}]"), self.a_steps[i].acceptance_rate()));
            }
        }
        out
    }

    pub fn reset_acceptance(&mut self) {
        for s in self
            .tau_steps
            .iter_mut()
            .chain(&mut self.d_steps)
            .chain(&mut self.a_steps)
        {
            s.reset_counts();
        }
    }
}

fn set_mask(bits: &mut [bool], g: usize, n_features: usize, mask: FeatureMask) {
    for j in 0..n_features {
        bits[g * n_features + j] = mask.contains(j);
    }
}

/// Gamma(shape, rate) full conditional of the slab precision given the
/// active slab magnitudes.
pub fn slab_precision_posterior(shape: f64, rate: f64, active: &[f64]) -> (f64, f64) {
    let ss: Vec<f64> = active.iter().map(|t| t * t).collect();
    (shape + active.len() as f64 / 2.0, rate + pairwise_sum(&ss) / 2.0)
}

/// Empirical rate `1 / mean(1 / s^2)` from stored pilot draws of `1 / s^2`.
pub fn empirical_t_update(inv_s2: &[f64]) -> Result<f64> {
    if inv_s2.is_empty() {
        return Err(Error::EmptyHistory);
    }
    let mean = pairwise_sum(inv_s2) / inv_s2.len() as f64;
    if !(mean.is_finite() && mean > 0.0) {
        return Err(Error::Domain(format!("mean of 1/s^2 draws is {mean}")));
    }
    Ok(1.0 / mean)
}
