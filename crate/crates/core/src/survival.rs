//! Proportional-hazards submodel linked to trajectory features.
//!
//! ```text
//! log h_i(t) = log h_0(t) + w_i' gamma + sum_g sum_j alpha_gj f_gj(i, t)
//! log h_0(t) = c_0 + sum_{q >= 1} c_q B_q(t)
//! ```
//!
//! `t` is follow-up time; features read the trajectory at age
//! `entry_age + t`. The first B-spline basis function is dropped so the
//! intercept `c_0` stays identifiable (the full basis sums to one).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::longitudinal::LegendreBasis;
use crate::numeric::GaussLegendre;

/// Clamped B-spline basis on `[lower, upper]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    lower: f64,
    upper: f64,
    interior: Vec<f64>,
    degree: usize,
    #[serde(skip)]
    knots: Vec<f64>,
}

impl SplineBasis {
    pub fn new(lower: f64, upper: f64, interior: Vec<f64>, degree: usize) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::Domain(format!("invalid spline span [{lower}, {upper}]")));
        }
        let mut prev = lower;
        for &k in &interior {
            if !(k > prev && k < upper) {
                return Err(Error::Domain(format!(
                    "interior knots must be strictly ascending inside ({lower}, {upper}): {interior:?}"
                )));
            }
            prev = k;
        }
        let mut s = Self {
            lower,
            upper,
            interior,
            degree,
            knots: Vec::new(),
        };
        s.rebuild();
        Ok(s)
    }

    /// Interior knots at evenly spaced quantiles of `times`.
    pub fn at_quantiles(times: &[f64], upper: f64, n_interior: usize, degree: usize) -> Result<Self> {
        let mut sorted: Vec<f64> = times.iter().copied().filter(|t| t.is_finite()).collect();
        sorted.sort_by(f64::total_cmp);
        let mut interior = Vec::with_capacity(n_interior);
        if !sorted.is_empty() {
            for k in 1..=n_interior {
                let p = k as f64 / (n_interior + 1) as f64;
                let x = quantile_sorted(&sorted, p);
                if x > interior.last().copied().unwrap_or(0.0) && x < upper && x > 0.0 {
                    interior.push(x);
                }
            }
        }
        if interior.len() < n_interior {
            // too few distinct times: fall back to equal spacing
            interior = (1..=n_interior)
                .map(|k| upper * k as f64 / (n_interior + 1) as f64)
                .collect();
        }
        Self::new(0.0, upper, interior, degree)
    }

    /// Restores the derived knot vector after deserialization.
    pub fn rebuild(&mut self) {
        let p = self.degree;
        let mut knots = vec![self.lower; p + 1];
        knots.extend_from_slice(&self.interior);
        knots.extend(std::iter::repeat_n(self.upper, p + 1));
        self.knots = knots;
    }

    pub fn n_basis(&self) -> usize {
        self.interior.len() + self.degree + 1
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn span(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn interior(&self) -> &[f64] {
        &self.interior
    }

    /// All basis function values at `t` (Cox–de Boor). Points outside the
    /// span are clamped to the nearest boundary.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        if self.knots.is_empty() {
            // deserialized without rebuild
            let mut s = self.clone();
            s.rebuild();
            return s.eval_into(t, out);
        }
        let n = self.n_basis();
        let p = self.degree;
        let tol = 1e-9 * (self.upper - self.lower);
        if t < self.lower - tol || t > self.upper + tol {
            log::warn!("spline argument {t} outside [{}, {}]; clamped", self.lower, self.upper);
        }
        let t = t.clamp(self.lower, self.upper);
        let u = &self.knots;
        // span index i with u[i] <= t < u[i+1], last span closed on the right
        let mut i = p;
        while i < n - 1 && t >= u[i + 1] {
            i += 1;
        }
        let mut basis = [0.0f64; 16];
        let mut left = [0.0f64; 16];
        let mut right = [0.0f64; 16];
        basis[0] = 1.0;
        for j in 1..=p {
            left[j] = t - u[i + 1 - j];
            right[j] = u[i + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom == 0.0 { 0.0 } else { basis[r] / denom };
                basis[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            basis[j] = saved;
        }
        out[..n].fill(0.0);
        for r in 0..=p {
            out[i - p + r] = basis[r];
        }
    }
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// B-spline basis at `t`; `knots` holds the lower boundary, the interior
/// knots, and the upper boundary in ascending order.
pub fn bspline_basis(t: f64, knots: &[f64], degree: usize) -> Result<Vec<f64>> {
    if knots.len() < 2 {
        return Err(Error::Domain("need at least the two boundary knots".into()));
    }
    if degree > 14 {
        return Err(Error::out_of_range("spline degree", format!("{degree} > 14")));
    }
    let basis = SplineBasis::new(
        knots[0],
        knots[knots.len() - 1],
        knots[1..knots.len() - 1].to_vec(),
        degree,
    )?;
    let mut out = vec![0.0; basis.n_basis()];
    basis.eval_into(t, &mut out);
    Ok(out)
}

/// `log h_0(t) = coeffs[0] + sum_{q >= 1} coeffs[q] B_q(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineHazard {
    pub basis: SplineBasis,
    pub coeffs: Vec<f64>,
}

impl BaselineHazard {
    pub fn new(basis: SplineBasis, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.n_basis() {
            return Err(Error::Validation(format!(
                "{} baseline coefficients for {} basis functions",
                coeffs.len(),
                basis.n_basis()
            )));
        }
        Ok(Self { basis, coeffs })
    }

    /// Constant hazard `exp(log_rate)`.
    pub fn constant(log_rate: f64) -> Self {
        Self {
            basis: SplineBasis::new(0.0, 1.0, Vec::new(), 0).expect("valid constant basis"),
            coeffs: vec![log_rate],
        }
    }

    /// Length of a design row: intercept plus the non-first basis functions.
    pub fn n_coeffs(&self) -> usize {
        self.coeffs.len()
    }

    /// `(1, B_1(t), .., B_{n-1}(t))`.
    pub fn design_row_into(&self, t: f64, out: &mut [f64]) {
        out[0] = 1.0;
        if self.coeffs.len() > 1 {
            let mut full = [0.0; 32];
            self.basis.eval_into(t, &mut full);
            out[1..self.coeffs.len()].copy_from_slice(&full[1..self.coeffs.len()]);
        }
    }

    pub fn log_value(&self, t: f64) -> f64 {
        if self.coeffs.len() == 1 {
            return self.coeffs[0];
        }
        let mut row = [0.0; 32];
        self.design_row_into(t, &mut row);
        row.iter().zip(&self.coeffs).map(|(b, c)| b * c).sum()
    }
}

/// A trajectory summary entering the hazard.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// current value of the trajectory
    Value,
    /// its derivative in age
    Slope,
    /// its integral from the area origin up to the current age
    Area,
    /// indicator that the current value exceeds the risk factor's threshold
    Threshold,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 4] = [
        FeatureKind::Value,
        FeatureKind::Slope,
        FeatureKind::Area,
        FeatureKind::Threshold,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Value => "value",
            FeatureKind::Slope => "slope",
            FeatureKind::Area => "area",
            FeatureKind::Threshold => "threshold",
        }
    }
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown feature '{s}'")))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Current value of the trajectory with coefficients `coef`.
pub fn feature_value(basis: &LegendreBasis, coef: &[f64], age: f64) -> Result<f64> {
    let mut row = [0.0; 3];
    basis.values_into(age, &mut row)?;
    Ok(dot(&row[..basis.dim()], coef))
}

pub fn feature_slope(basis: &LegendreBasis, coef: &[f64], age: f64) -> Result<f64> {
    let mut row = [0.0; 3];
    basis.derivatives_into(age, &mut row)?;
    Ok(dot(&row[..basis.dim()], coef))
}

/// `int_{origin}^{age} mu(s) ds`.
pub fn feature_area(basis: &LegendreBasis, coef: &[f64], origin: f64, age: f64, rule: &GaussLegendre) -> Result<f64> {
    if age < origin {
        return Err(Error::Domain(format!(
            "area feature needs age >= origin, got {age} < {origin}"
        )));
    }
    let mut row = [0.0; 3];
    basis.integrals_into(origin, age, rule, &mut row)?;
    Ok(dot(&row[..basis.dim()], coef))
}

/// 1 when the current value strictly exceeds `threshold`.
pub fn feature_threshold(basis: &LegendreBasis, coef: &[f64], age: f64, threshold: f64) -> Result<f64> {
    Ok(if feature_value(basis, coef, age)? > threshold {
        1.0
    } else {
        0.0
    })
}

/// Affine standardization `(raw - center) / scale` per (risk factor, feature).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaling {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl FeatureScaling {
    pub fn identity(n: usize) -> Self {
        Self {
            center: vec![0.0; n],
            scale: vec![1.0; n],
        }
    }

    pub fn apply(&self, idx: usize, raw: f64) -> f64 {
        (raw - self.center[idx]) / self.scale[idx]
    }
}

/// Everything needed to evaluate subject hazards apart from the subject.
#[derive(Clone, Debug)]
pub struct HazardModel {
    pub trajectory_basis: LegendreBasis,
    pub baseline: BaselineHazard,
    pub gamma: Vec<f64>,
    pub features: Vec<FeatureKind>,
    /// association coefficients, risk-factor major (`g * J + j`)
    pub alpha: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub area_origin: f64,
    pub scaling: FeatureScaling,
    pub hazard_rule: GaussLegendre,
    pub area_rule: GaussLegendre,
}

/// A subject as the hazard sees it: entry age, covariates, and trajectory
/// coefficients (`beta_g + b_ig`, risk-factor major).
#[derive(Clone, Copy, Debug)]
pub struct SubjectPath<'a> {
    pub entry_age: f64,
    pub covariates: &'a [f64],
    pub coefs: &'a [f64],
}

impl HazardModel {
    pub fn n_risk_factors(&self) -> usize {
        self.thresholds.len()
    }

    /// Raw (unstandardized) feature `kind` of risk factor `g` at `age`.
    pub fn raw_feature(&self, path: &SubjectPath<'_>, g: usize, kind: FeatureKind, age: f64) -> Result<f64> {
        let d = self.trajectory_basis.dim();
        let coef = &path.coefs[g * d..(g + 1) * d];
        let b = &self.trajectory_basis;
        match kind {
            FeatureKind::Value => feature_value(b, coef, age),
            FeatureKind::Slope => feature_slope(b, coef, age),
            FeatureKind::Area => feature_area(b, coef, self.area_origin, age, &self.area_rule),
            FeatureKind::Threshold => feature_threshold(b, coef, age, self.thresholds[g]),
        }
    }

    /// `sum_gj alpha_gj f_gj(t)`; features with zero coefficient are skipped.
    pub fn association(&self, path: &SubjectPath<'_>, t: f64) -> Result<f64> {
        let age = path.entry_age + t;
        let nj = self.features.len();
        let mut acc = 0.0;
        for g in 0..self.n_risk_factors() {
            for (j, &kind) in self.features.iter().enumerate() {
                let a = self.alpha[g * nj + j];
                if a == 0.0 {
                    continue;
                }
                let raw = self.raw_feature(path, g, kind, age)?;
                acc += a * self.scaling.apply(g * nj + j, raw);
            }
        }
        Ok(acc)
    }

    pub fn log_hazard(&self, path: &SubjectPath<'_>, t: f64) -> Result<f64> {
        Ok(self.baseline.log_value(t) + dot(path.covariates, &self.gamma) + self.association(path, t)?)
    }

    /// `int_0^t h(s) ds` by Gauss–Legendre quadrature.
    pub fn cumulative_hazard(&self, path: &SubjectPath<'_>, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        let mut acc = 0.0;
        for (s, w) in self.hazard_rule.on_interval(0.0, t) {
            acc += w * self.log_hazard(path, s)?.exp();
        }
        Ok(acc)
    }

    /// `event * log h(T) - H(T)`.
    pub fn survival_loglik(&self, path: &SubjectPath<'_>, time: f64, event: bool) -> Result<f64> {
        let h = self.cumulative_hazard(path, time)?;
        let lh = if event { self.log_hazard(path, time)? } else { 0.0 };
        Ok(lh - h)
    }
}
