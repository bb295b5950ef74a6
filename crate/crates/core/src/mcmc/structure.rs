//! Fixed model structure resolved from a spec and a dataset before sampling:
//! age domain, baseline spline knots, feature standardization, thresholds.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::longitudinal::LegendreBasis;
use crate::numeric::GaussLegendre;
use crate::spec::ModelSpec;
use crate::survival::{
    feature_area, feature_slope, feature_value, BaselineHazard, FeatureKind, FeatureScaling, HazardModel, SplineBasis,
};

/// Ridge penalty for the per-subject effects in the preliminary fit.
const PRELIM_RIDGE: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Structure {
    pub basis: LegendreBasis,
    pub spline: SplineBasis,
    pub scaling: FeatureScaling,
    pub thresholds: Vec<f64>,
    pub features: Vec<FeatureKind>,
    pub hazard_nodes: usize,
    pub area_nodes: usize,
}

/// Rough estimates used for standardization and initialization.
#[derive(Clone, Debug)]
pub struct Prelim {
    /// pooled least-squares fixed effects, risk-factor major
    pub beta: Vec<f64>,
    /// ridge per-subject effects
    pub b: Vec<Vec<f64>>,
    pub sigma2: Vec<f64>,
    /// log of events per unit exposure
    pub log_rate: f64,
}

pub(crate) fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    a.cholesky()
        .map(|c| c.solve(b))
        .ok_or_else(|| Error::NotPositiveDefinite("normal equations".into()))
}

impl Structure {
    pub fn resolve(spec: &ModelSpec, data: &Dataset) -> Result<(Self, Prelim)> {
        spec.validate()?;
        data.validate()?;
        if data.n_risk_factors != spec.n_risk_factors {
            return Err(Error::Validation(format!(
                "data has {} risk factors, model expects {}",
                data.n_risk_factors, spec.n_risk_factors
            )));
        }
        let g_n = spec.n_risk_factors;
        let data_max = data.max_age();
        let a_max = spec.a_max.unwrap_or(data_max);
        if data_max > a_max * (1.0 + 1e-12) {
            return Err(Error::Validation(format!(
                "data reach age {data_max} beyond a_max = {a_max}"
            )));
        }
        let basis = LegendreBasis::new(a_max, spec.poly_order)?;
        let dim = basis.dim();

        let mut xtx = vec![DMatrix::<f64>::zeros(dim, dim); g_n];
        let mut xty = vec![DVector::<f64>::zeros(dim); g_n];
        let mut counts = vec![0usize; g_n];
        let mut row = [0.0; 3];
        for s in &data.subjects {
            for o in &s.observations {
                basis.values_into(o.age, &mut row)?;
                let x = DVector::from_row_slice(&row[..dim]);
                xtx[o.risk_factor] += &x * x.transpose();
                xty[o.risk_factor] += &x * o.value;
                counts[o.risk_factor] += 1;
            }
        }
        let mut beta = vec![0.0; g_n * dim];
        for g in 0..g_n {
            if counts[g] == 0 {
                return Err(Error::Validation(format!("risk factor {} has no observations", g + 1)));
            }
            let a = &xtx[g] + DMatrix::identity(dim, dim) * 1e-8;
            let bg = solve_spd(a, &xty[g])?;
            beta[g * dim..(g + 1) * dim].copy_from_slice(bg.as_slice());
        }

        let mut ssr = vec![0.0; g_n];
        let mut b_all = Vec::with_capacity(data.subjects.len());
        for s in &data.subjects {
            let mut sx = vec![DMatrix::<f64>::zeros(dim, dim); g_n];
            let mut sr = vec![DVector::<f64>::zeros(dim); g_n];
            for o in &s.observations {
                let g = o.risk_factor;
                basis.values_into(o.age, &mut row)?;
                let x = DVector::from_row_slice(&row[..dim]);
                let fit: f64 = (0..dim).map(|k| row[k] * beta[g * dim + k]).sum();
                ssr[g] += (o.value - fit).powi(2);
                sx[g] += &x * x.transpose();
                sr[g] += &x * (o.value - fit);
            }
            let mut b = vec![0.0; g_n * dim];
            for g in 0..g_n {
                let a = &sx[g] + DMatrix::identity(dim, dim) * PRELIM_RIDGE;
                let bg = solve_spd(a, &sr[g])?;
                b[g * dim..(g + 1) * dim].copy_from_slice(bg.as_slice());
            }
            b_all.push(b);
        }
        let sigma2: Vec<f64> = (0..g_n)
            .map(|g| (ssr[g] / (counts[g].saturating_sub(dim).max(1)) as f64).max(1e-6))
            .collect();

        let area_rule = GaussLegendre::new(spec.area_nodes);
        let coef_of =
            |i: usize, g: usize| -> Vec<f64> { (0..dim).map(|k| beta[g * dim + k] + b_all[i][g * dim + k]).collect() };

        let thresholds = match &spec.thresholds {
            Some(t) => t.clone(),
            None => {
                let mut out = Vec::with_capacity(g_n);
                for g in 0..g_n {
                    let mut vals = Vec::with_capacity(data.subjects.len());
                    for (i, s) in data.subjects.iter().enumerate() {
                        let age = s.entry_age + 0.5 * s.survival.time;
                        vals.push(feature_value(&basis, &coef_of(i, g), age)?);
                    }
                    out.push(median(&mut vals));
                }
                out
            }
        };

        let j_n = spec.n_features();
        let scaling = match &spec.feature_scaling {
            Some(s) => s.clone(),
            None => {
                let mut center = vec![0.0; g_n * j_n];
                let mut scale = vec![1.0; g_n * j_n];
                for g in 0..g_n {
                    for (j, &kind) in spec.features.iter().enumerate() {
                        let mut vals = Vec::with_capacity(data.subjects.len());
                        for (i, s) in data.subjects.iter().enumerate() {
                            let c = coef_of(i, g);
                            let age = s.exit_age();
                            vals.push(match kind {
                                FeatureKind::Value => feature_value(&basis, &c, age)?,
                                FeatureKind::Slope => feature_slope(&basis, &c, age)?,
                                FeatureKind::Area => feature_area(&basis, &c, 0.0, age, &area_rule)?,
                                FeatureKind::Threshold => {
                                    if feature_value(&basis, &c, age)? > thresholds[g] {
                                        1.0
                                    } else {
                                        0.0
                                    }
                                }
                            });
                        }
                        let n = vals.len() as f64;
                        let mean = vals.iter().sum::<f64>() / n;
                        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                        center[g * j_n + j] = mean;
                        scale[g * j_n + j] = if var.sqrt() > 1e-8 { var.sqrt() } else { 1.0 };
                    }
                }
                FeatureScaling { center, scale }
            }
        };

        let max_time = data.subjects.iter().map(|s| s.survival.time).fold(0.0, f64::max);
        let upper = spec.spline_upper.unwrap_or(max_time);
        let spline = match &spec.spline_knots {
            Some(k) => SplineBasis::new(0.0, upper, k.clone(), spec.spline_degree)?,
            None => {
                let events: Vec<f64> = data
                    .subjects
                    .iter()
                    .filter(|s| s.survival.event)
                    .map(|s| s.survival.time)
                    .collect();
                SplineBasis::at_quantiles(
                    &events,
                    upper,
                    spec.spline_coefs - spec.spline_degree,
                    spec.spline_degree,
                )?
            }
        };

        let exposure: f64 = data.subjects.iter().map(|s| s.survival.time).sum();
        let events = match data.n_events() {
            0 => 0.5,
            n => n as f64,
        };
        Ok((
            Self {
                basis,
                spline,
                scaling,
                thresholds,
                features: spec.features.clone(),
                hazard_nodes: spec.hazard_nodes,
                area_nodes: spec.area_nodes,
            },
            Prelim {
                beta,
                b: b_all,
                sigma2,
                log_rate: (events / exposure).ln(),
            },
        ))
    }

    /// Hazard model at the given parameter values.
    pub fn hazard_model(&self, baseline: &[f64], gamma: &[f64], alpha: &[f64]) -> Result<HazardModel> {
        Ok(HazardModel {
            trajectory_basis: self.basis,
            baseline: BaselineHazard::new(self.spline.clone(), baseline.to_vec())?,
            gamma: gamma.to_vec(),
            features: self.features.clone(),
            alpha: alpha.to_vec(),
            thresholds: self.thresholds.clone(),
            area_origin: 0.0,
            scaling: self.scaling.clone(),
            hazard_rule: GaussLegendre::new(self.hazard_nodes),
            area_rule: GaussLegendre::new(self.area_nodes),
        })
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
