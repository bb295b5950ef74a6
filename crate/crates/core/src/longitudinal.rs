//! Mixed-effects longitudinal submodel on a shifted Legendre basis.
//!
//! Fixed and random effects share one basis `(1, P_1, .., P_p)` of the age
//! mapped onto [-1, 1] by `x = 2 age / a_max - 1`. Random effects are stored
//! per subject as `G` consecutive blocks of `p + 1` coefficients, and their
//! covariance is block diagonal by polynomial order: block `k` is the `G x G`
//! covariance of the order-`k` coefficients across risk factors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::SubjectRecord;
use crate::error::{Error, Result};
use crate::numeric::{pairwise_sum, random, GaussLegendre};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Shifted Legendre basis of order 1 or 2 on [0, a_max].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegendreBasis {
    a_max: f64,
    order: usize,
}

impl LegendreBasis {
    pub fn new(a_max: f64, order: usize) -> Result<Self> {
        if !(1..=2).contains(&order) {
            return Err(Error::out_of_range(
                "polynomial order",
                format!("{order} not in [1, 2]"),
            ));
        }
        if !(a_max.is_finite() && a_max > 0.0) {
            return Err(Error::Domain(format!("a_max must be positive, got {a_max}")));
        }
        Ok(Self { a_max, order })
    }

    pub fn a_max(&self) -> f64 {
        self.a_max
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of coefficients per risk factor (`order + 1`).
    pub fn dim(&self) -> usize {
        self.order + 1
    }

    fn check(&self, age: f64) -> Result<()> {
        // tolerate rounding at the upper edge
        if !(age >= 0.0 && age <= self.a_max * (1.0 + 1e-12)) {
            return Err(Error::Domain(format!(
                "age {age} outside basis domain [0, {}]",
                self.a_max
            )));
        }
        Ok(())
    }

    fn shifted(&self, age: f64) -> f64 {
        2.0 * age / self.a_max - 1.0
    }

    pub fn values_into(&self, age: f64, out: &mut [f64]) -> Result<()> {
        self.check(age)?;
        let x = self.shifted(age);
        out[0] = 1.0;
        out[1] = x;
        if self.order == 2 {
            out[2] = 0.5 * (3.0 * x * x - 1.0);
        }
        Ok(())
    }

    /// Derivatives of the basis functions with respect to age.
    pub fn derivatives_into(&self, age: f64, out: &mut [f64]) -> Result<()> {
        self.check(age)?;
        let x = self.shifted(age);
        out[0] = 0.0;
        out[1] = 2.0 / self.a_max;
        if self.order == 2 {
            out[2] = 6.0 * x / self.a_max;
        }
        Ok(())
    }

    /// `int_{from}^{to} basis(s) ds` by Gauss–Legendre quadrature.
    pub fn integrals_into(&self, from: f64, to: f64, rule: &GaussLegendre, out: &mut [f64]) -> Result<()> {
        self.check(from)?;
        self.check(to)?;
        out[..self.dim()].fill(0.0);
        let mut row = [0.0; 3];
        for (s, w) in rule.on_interval(from, to) {
            self.values_into(s.clamp(0.0, self.a_max), &mut row)?;
            for k in 0..self.dim() {
                out[k] += w * row[k];
            }
        }
        Ok(())
    }

    /// Closed-form antiderivative difference of the basis; the cross-check
    /// for [`LegendreBasis::integrals_into`].
    pub fn integrals_exact(&self, from: f64, to: f64) -> Result<Vec<f64>> {
        self.check(from)?;
        self.check(to)?;
        let half = 0.5 * self.a_max;
        let anti = |x: f64| [x, 0.5 * x * x, 0.5 * (x * x * x - x)];
        let (fa, fb) = (anti(self.shifted(from)), anti(self.shifted(to)));
        Ok((0..self.dim()).map(|k| half * (fb[k] - fa[k])).collect())
    }
}

/// `(1, P_1(age), .., P_order(age))`.
pub fn legendre_basis(age: f64, a_max: f64, order: usize) -> Result<Vec<f64>> {
    let basis = LegendreBasis::new(a_max, order)?;
    let mut out = vec![0.0; basis.dim()];
    basis.values_into(age, &mut out)?;
    Ok(out)
}

/// One measurement of one risk factor. `risk_factor` is zero-based.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongitudinalObservation {
    pub risk_factor: usize,
    pub age: f64,
    pub value: f64,
}

/// Population coefficients, one vector of `p + 1` per risk factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedEffects {
    pub beta: Vec<Vec<f64>>,
}

/// Subject-specific coefficients for one subject: `G * (p + 1)` values,
/// risk-factor major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectEffects(pub Vec<f64>);

impl SubjectEffects {
    pub fn zeros(n_risk_factors: usize, dim: usize) -> Self {
        Self(vec![0.0; n_risk_factors * dim])
    }

    pub fn block(&self, g: usize, dim: usize) -> &[f64] {
        &self.0[g * dim..(g + 1) * dim]
    }
}

/// Random effects for every subject, in dataset order.
pub type RandomEffects = Vec<SubjectEffects>;

/// `D = Diag(D_0, .., D_p)`, each block `G x G` and positive definite.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockCovariance {
    blocks: Vec<DMatrix<f64>>,
}

impl BlockCovariance {
    pub fn new(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Err(Error::Validation("block covariance needs at least one block".into()));
        };
        let g = first.nrows();
        for (k, b) in blocks.iter().enumerate() {
            if b.nrows() != g || b.ncols() != g {
                return Err(Error::Validation(format!("block {k} is not {g}x{g}")));
            }
            if (b - b.transpose()).abs().max() > 1e-10 {
                return Err(Error::Validation(format!("block {k} is not symmetric")));
            }
            if b.clone().cholesky().is_none() {
                return Err(Error::NotPositiveDefinite(format!("covariance block {k}")));
            }
        }
        Ok(Self { blocks })
    }

    pub fn identity(n_risk_factors: usize, dim: usize) -> Self {
        Self {
            blocks: vec![DMatrix::identity(n_risk_factors, n_risk_factors); dim],
        }
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn n_risk_factors(&self) -> usize {
        self.blocks[0].nrows()
    }

    pub fn dim(&self) -> usize {
        self.blocks.len()
    }

    /// The full `G(p+1)` covariance in risk-factor-major order.
    pub fn dense(&self) -> DMatrix<f64> {
        let g = self.n_risk_factors();
        let d = self.dim();
        DMatrix::from_fn(g * d, g * d, |r, c| {
            let (gr, kr) = (r / d, r % d);
            let (gc, kc) = (c / d, c % d);
            if kr == kc {
                self.blocks[kr][(gr, gc)]
            } else {
                0.0
            }
        })
    }

    /// Order-`k` coefficients of one subject, gathered across risk factors.
    pub fn gather(effects: &SubjectEffects, k: usize, n_risk_factors: usize, dim: usize) -> DVector<f64> {
        DVector::from_fn(n_risk_factors, |g, _| effects.0[g * dim + k])
    }
}

/// Error standard deviations, one per risk factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorScales {
    pub sigma: Vec<f64>,
}

impl ErrorScales {
    pub fn new(sigma: Vec<f64>) -> Result<Self> {
        if sigma.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::Validation(format!("error scales must be positive: {sigma:?}")));
        }
        Ok(Self { sigma })
    }
}

fn coefficient(fe: &FixedEffects, re: &SubjectEffects, g: usize, k: usize, dim: usize) -> f64 {
    fe.beta[g][k] + re.0[g * dim + k]
}

/// True mean of risk factor `g` at `age`.
pub fn mu(basis: &LegendreBasis, g: usize, age: f64, fe: &FixedEffects, re: &SubjectEffects) -> Result<f64> {
    let mut row = [0.0; 3];
    basis.values_into(age, &mut row)?;
    let d = basis.dim();
    Ok((0..d).map(|k| row[k] * coefficient(fe, re, g, k, d)).sum())
}

/// d mu / d age.
pub fn mu_derivative(basis: &LegendreBasis, g: usize, age: f64, fe: &FixedEffects, re: &SubjectEffects) -> Result<f64> {
    let mut row = [0.0; 3];
    basis.derivatives_into(age, &mut row)?;
    let d = basis.dim();
    Ok((0..d).map(|k| row[k] * coefficient(fe, re, g, k, d)).sum())
}

/// Gaussian log-likelihood of all observations given the trajectories.
pub fn longitudinal_loglik(
    subjects: &[SubjectRecord],
    basis: &LegendreBasis,
    fe: &FixedEffects,
    re: &[SubjectEffects],
    scales: &ErrorScales,
) -> Result<f64> {
    let mut terms = Vec::with_capacity(subjects.len());
    for (s, b) in subjects.iter().zip(re) {
        let mut acc = Vec::with_capacity(s.observations.len());
        for obs in &s.observations {
            let m = mu(basis, obs.risk_factor, obs.age, fe, b)?;
            acc.push(random::ln_normal(obs.value, m, scales.sigma[obs.risk_factor]));
        }
        terms.push(pairwise_sum(&acc));
    }
    Ok(pairwise_sum(&terms))
}

/// `sum_i log N(b_i; 0, D)`, evaluated block by block.
pub fn random_effects_loglik(re: &[SubjectEffects], cov: &BlockCovariance) -> Result<f64> {
    let g = cov.n_risk_factors();
    let d = cov.dim();
    let mut factors = Vec::with_capacity(d);
    for (k, block) in cov.blocks().iter().enumerate() {
        let chol = block
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite(format!("covariance block {k}")))?;
        let l = chol.l();
        let log_det = 2.0 * (0..g).map(|i| l[(i, i)].ln()).sum::<f64>();
        factors.push((l, log_det));
    }
    let mut terms = Vec::with_capacity(re.len());
    for b in re {
        let mut acc = 0.0;
        for (k, (l, log_det)) in factors.iter().enumerate() {
            let x = BlockCovariance::gather(b, k, g, d);
            let z = l
                .solve_lower_triangular(&x)
                .ok_or_else(|| Error::NotPositiveDefinite(format!("covariance block {k}")))?;
            acc += -0.5 * (g as f64 * LN_2PI + log_det + z.norm_squared());
        }
        terms.push(acc);
    }
    Ok(pairwise_sum(&terms))
}
