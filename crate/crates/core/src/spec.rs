//! Model specification: structure, prior choice, hyperparameters and chain
//! settings.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::prior_calculus::{WeightScaling, MAX_FEATURES};
use crate::survival::{FeatureKind, FeatureScaling};

/// Selection prior on the association coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PriorKind {
    /// group Beta indicator, Dirichlet over feature combinations
    #[serde(rename = "bsgs-d")]
    BsgsD,
    /// as `BsgsD` with binomially scaled Dirichlet weights
    #[serde(rename = "bsgs-d-i")]
    BsgsDI,
    /// shared group-level and feature-level inclusion probabilities
    #[serde(rename = "bsgs")]
    Bsgs,
    /// independent spike-and-slab per coefficient
    #[serde(rename = "ss")]
    Ss,
}

impl PriorKind {
    /// Column order used in reports.
    pub const ALL: [PriorKind; 4] = [PriorKind::BsgsD, PriorKind::Bsgs, PriorKind::BsgsDI, PriorKind::Ss];

    pub fn name(self) -> &'static str {
        match self {
            PriorKind::BsgsD => "bsgs-d",
            PriorKind::BsgsDI => "bsgs-d-i",
            PriorKind::Bsgs => "bsgs",
            PriorKind::Ss => "ss",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PriorKind::BsgsD => "BSGS-D",
            PriorKind::BsgsDI => "BSGS-D I",
            PriorKind::Bsgs => "BSGS",
            PriorKind::Ss => "SS",
        }
    }

    /// Uses the Dirichlet combination layer.
    pub fn is_dirichlet(self) -> bool {
        matches!(self, PriorKind::BsgsD | PriorKind::BsgsDI)
    }

    /// Uses the `tau * d` slab with a shared slab variance.
    pub fn is_bsgs_family(self) -> bool {
        !matches!(self, PriorKind::Ss)
    }

    pub fn weight_scaling(self) -> WeightScaling {
        match self {
            PriorKind::BsgsDI => WeightScaling::BinomialScaled,
            _ => WeightScaling::Plain,
        }
    }
}

impl std::fmt::Display for PriorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for PriorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace([' ', '_'], "-");
        PriorKind::ALL.into_iter().find(|p| p.name() == norm).ok_or_else(|| {
            Error::Config(format!(
                "unknown prior '{s}' (expected one of bsgs-d, bsgs-d-i, bsgs, ss)"
            ))
        })
    }
}

/// Hyperparameters of every prior in the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    /// Beta(a, b) on group inclusion probabilities
    pub group_beta: [f64; 2],
    /// Beta(c, d) on the shared feature inclusion probability (BSGS)
    pub feature_beta: [f64; 2],
    /// Beta prior on each coefficient's inclusion probability (SS)
    pub ss_beta: [f64; 2],
    /// Gamma(shape, rate) on the SS slab precision
    pub ss_precision: [f64; 2],
    /// shape of the Gamma prior on 1 / s^2
    pub slab_precision_shape: f64,
    /// rate t of the Gamma prior on 1 / s^2 (pilot value in the two-stage run)
    pub slab_precision_rate: f64,
    /// prior standard deviation of the longitudinal fixed effects
    pub beta_sd: f64,
    /// inverse-Wishart degrees of freedom; `None` means G + 2
    pub iw_df: Option<f64>,
    /// inverse-Wishart scale matrix is `iw_scale * I`
    pub iw_scale: f64,
    /// inverse-gamma(shape, rate) on the error variances
    pub sigma2_prior: [f64; 2],
    pub baseline_intercept_mean: f64,
    pub baseline_intercept_sd: f64,
    pub baseline_spline_sd: f64,
    pub gamma_sd: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            group_beta: [1.0, 1.0],
            feature_beta: [1.0, 1.0],
            ss_beta: [1.0, 10.0],
            ss_precision: [1.0, 1.0],
            slab_precision_shape: 1.0,
            slab_precision_rate: 1.0,
            beta_sd: 100.0,
            iw_df: None,
            iw_scale: 1.0,
            sigma2_prior: [0.01, 0.01],
            baseline_intercept_mean: 0.0,
            baseline_intercept_sd: 10.0,
            baseline_spline_sd: 10.0,
            gamma_sd: 10.0,
        }
    }
}

/// Switches on the selection layer, mostly for testing and sensitivity runs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionOptions {
    /// read the mixture weights literally: the point mass gets weight pi
    pub literal_mixture_weights: bool,
    /// hold the Dirichlet weights fixed at these values
    pub fixed_dirichlet_weights: Option<Vec<f64>>,
    /// hold s^2 fixed
    pub fixed_slab_variance: Option<f64>,
    /// skip the pilot chain and the empirical rate update
    pub single_stage: bool,
}

/// Run lengths for the pilot and final chains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSettings {
    pub pilot_iterations: usize,
    pub pilot_burn_in: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// tune random-walk steps during burn-in
    pub adapt: bool,
}

impl Default for ChainSettings {
    fn default() -> Self {
        Self {
            pilot_iterations: 5000,
            pilot_burn_in: 2000,
            iterations: 20000,
            burn_in: 5000,
            thin: 5,
            adapt: true,
        }
    }
}

impl ChainSettings {
    pub fn n_draws(&self) -> usize {
        self.iterations.saturating_sub(self.burn_in) / self.thin.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.iterations <= self.burn_in || self.n_draws() == 0 {
            return Err(Error::Config(format!(
                "{} iterations with burn-in {} and thin {} leave no draws",
                self.iterations, self.burn_in, self.thin
            )));
        }
        Ok(())
    }
}

/// Full description of a fitted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub n_risk_factors: usize,
    pub features: Vec<FeatureKind>,
    /// order of the Legendre trajectory basis (1 or 2)
    pub poly_order: usize,
    /// B-spline coefficients of the log baseline hazard beyond the intercept
    pub spline_coefs: usize,
    pub spline_degree: usize,
    pub hazard_nodes: usize,
    pub area_nodes: usize,
    pub prior: PriorKind,
    pub hyper: Hyperparameters,
    pub selection: SelectionOptions,
    /// upper end of the age domain; `None` uses the data maximum
    pub a_max: Option<f64>,
    /// interior baseline knots and upper boundary; `None` places them at event-time quantiles
    pub spline_knots: Option<Vec<f64>>,
    pub spline_upper: Option<f64>,
    /// feature standardization; `None` estimates it from a preliminary fit
    pub feature_scaling: Option<FeatureScaling>,
    /// per risk factor; `None` uses the median trajectory value at mid-follow-up
    pub thresholds: Option<Vec<f64>>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            n_risk_factors: 3,
            features: FeatureKind::ALL.to_vec(),
            poly_order: 2,
            spline_coefs: 5,
            spline_degree: 3,
            hazard_nodes: 15,
            area_nodes: 15,
            prior: PriorKind::BsgsD,
            hyper: Hyperparameters::default(),
            selection: SelectionOptions::default(),
            a_max: None,
            spline_knots: None,
            spline_upper: None,
            feature_scaling: None,
            thresholds: None,
        }
    }
}

impl ModelSpec {
    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn n_coefficients(&self) -> usize {
        self.n_risk_factors * self.n_features()
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.n_risk_factors == 0 {
            return cfg("need at least one risk factor".into());
        }
        if self.features.is_empty() || self.features.len() > MAX_FEATURES {
            return cfg(format!("need 1..={MAX_FEATURES} features"));
        }
        for (i, f) in self.features.iter().enumerate() {
            if self.features[..i].contains(f) {
                return cfg(format!("feature '{f}' listed twice"));
            }
        }
        if !(1..=2).contains(&self.poly_order) {
            return cfg(format!("poly_order must be 1 or 2, got {}", self.poly_order));
        }
        if self.spline_degree > 5 || self.spline_coefs + 1 < self.spline_degree + 1 {
            return cfg(format!(
                "{} spline coefficients cannot carry a degree-{} spline",
                self.spline_coefs, self.spline_degree
            ));
        }
        if self.hazard_nodes < 2 || self.area_nodes < 2 {
            return cfg("quadrature needs at least 2 nodes".into());
        }
        if let Some(k) = &self.spline_knots {
            if k.len() + self.spline_degree != self.spline_coefs {
                return cfg(format!(
                    "{} interior knots do not match {} spline coefficients of degree {}",
                    k.len(),
                    self.spline_coefs,
                    self.spline_degree
                ));
            }
        }
        if let Some(w) = &self.selection.fixed_dirichlet_weights {
            if w.len() != self.n_features() {
                return cfg(format!(
                    "{} fixed Dirichlet weights for {} features",
                    w.len(),
                    self.n_features()
                ));
            }
        }
        if let Some(t) = &self.thresholds {
            if t.len() != self.n_risk_factors {
                return cfg(format!(
                    "{} thresholds for {} risk factors",
                    t.len(),
                    self.n_risk_factors
                ));
            }
        }
        if let Some(s) = &self.feature_scaling {
            if s.center.len() != self.n_coefficients() || s.scale.len() != self.n_coefficients() {
                return cfg("feature scaling has the wrong length".into());
            }
            if s.scale.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
                return cfg("feature scales must be positive".into());
            }
        }
        let h = &self.hyper;
        let positive = [
            ("group_beta", h.group_beta[0].min(h.group_beta[1])),
            ("feature_beta", h.feature_beta[0].min(h.feature_beta[1])),
            ("ss_beta", h.ss_beta[0].min(h.ss_beta[1])),
            ("ss_precision", h.ss_precision[0].min(h.ss_precision[1])),
            ("slab_precision_shape", h.slab_precision_shape),
            ("slab_precision_rate", h.slab_precision_rate),
            ("beta_sd", h.beta_sd),
            ("iw_scale", h.iw_scale),
            ("sigma2_prior", h.sigma2_prior[0].min(h.sigma2_prior[1])),
            ("baseline_intercept_sd", h.baseline_intercept_sd),
            ("baseline_spline_sd", h.baseline_spline_sd),
            ("gamma_sd", h.gamma_sd),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return cfg(format!("hyperparameter {name} must be positive"));
            }
        }
        if let Some(df) = h.iw_df {
            if df <= self.n_risk_factors as f64 - 1.0 {
                return cfg(format!("iw_df {df} too small for {} risk factors", self.n_risk_factors));
            }
        }
        Ok(())
    }

    pub fn iw_df(&self) -> f64 {
        self.hyper.iw_df.unwrap_or(self.n_risk_factors as f64 + 2.0)
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_names_round_trip() {
        for p in PriorKind::ALL {
            assert_eq!(p.name().parse::<PriorKind>().unwrap(), p);
        }
        assert_eq!("BSGS-D I".parse::<PriorKind>().unwrap(), PriorKind::BsgsDI);
        assert!("lasso".parse::<PriorKind>().is_err());
    }

    #[test]
    fn default_spec_is_valid() {
        ModelSpec::default().validate().unwrap();
        ChainSettings::default().validate().unwrap();
        assert_eq!(ChainSettings::default().n_draws(), 3000);
    }

    #[test]
    fn zero_draws_rejected() {
        let c = ChainSettings {
            iterations: 100,
            burn_in: 100,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = ChainSettings {
            iterations: 104,
            burn_in: 100,
            thin: 5,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ModelSpec::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.prior = PriorKind::Ss;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn toml_round_trip() {
        let s = ModelSpec::default();
        let text = toml::to_string(&s).unwrap();
        let back: ModelSpec = toml::from_str(&text).unwrap();
        assert_eq!(s, back);
    }
}
