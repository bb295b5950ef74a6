//! Run configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simgen::{Scenario, ScenarioSpec};
use crate::spec::{ChainSettings, ModelSpec, PriorKind};

/// Where replicate datasets come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// simulate replicate `r` from the scenario with seed `seed + r`
    Scenario {
        scenario: Scenario,
        n: usize,
        /// overrides the shipped censoring target
        #[serde(default, skip_serializing_if = "Option::is_none")]
        censoring_target: Option<f64>,
    },
    /// one dataset on disk, refitted with seed `seed + r` per replicate
    External {
        longitudinal: PathBuf,
        survival: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        truth: Option<PathBuf>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// priors to fit; every prior sees the same replicate datasets and seeds
    pub priors: Vec<PriorKind>,
    pub replicates: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// a feature counts as selected when its inclusion frequency exceeds this
    pub threshold: f64,
    /// worker threads; `None` uses every core
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// write each replicate's chain file under `chains/`
    #[serde(default)]
    pub save_chains: bool,
    pub data: DataSource,
    pub chain: ChainSettings,
    pub model: ModelSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            priors: PriorKind::ALL.to_vec(),
            replicates: 100,
            seed: 20240101,
            output_dir: PathBuf::from("out"),
            threshold: 0.5,
            threads: None,
            save_chains: false,
            data: DataSource::Scenario {
                scenario: Scenario::I,
                n: 800,
                censoring_target: None,
            },
            chain: ChainSettings::default(),
            model: ModelSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold {} not in (0, 1)", self.threshold)));
        }
        if self.priors.is_empty() {
            return Err(Error::Config("no priors to fit".into()));
        }
        for (i, p) in self.priors.iter().enumerate() {
            if self.priors[..i].contains(p) {
                return Err(Error::Config(format!("prior {p} listed twice")));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        self.chain.validate()?;
        for &p in &self.priors {
            self.model_for(p).validate()?;
        }
        if let DataSource::Scenario {
            scenario,
            n,
            censoring_target,
        } = &self.data
        {
            let mut s = ScenarioSpec::new(*scenario, *n, self.seed)?;
            if censoring_target.is_some() {
                s.censoring_target = *censoring_target;
            }
            s.validate()?;
            if self.model.n_risk_factors != s.n_risk_factors() {
                return Err(Error::Config(format!(
                    "scenarios have {} risk factors, model has {}",
                    s.n_risk_factors(),
                    self.model.n_risk_factors
                )));
            }
        }
        Ok(())
    }

    /// Model spec with `prior` substituted.
    pub fn model_for(&self, prior: PriorKind) -> ModelSpec {
        let mut m = self.model.clone();
        m.prior = prior;
        m
    }

    /// Seed of replicate `r` (zero-based).
    pub fn replicate_seed(&self, r: usize) -> u64 {
        self.seed.wrapping_add(r as u64)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str::<Self>(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
            .and_then(|c| c.validate().map(|_| c))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}

/// Text of `config init`: the default run configuration followed by the
/// simulator defaults it draws on, commented out.
pub fn init_text() -> Result<String> {
    let mut out = String::from(
        "# Run configuration. Optional model keys left unset here:\n\
         #   model.a_max            upper end of the age domain (default: data maximum)\n\
         #   model.spline_knots     interior baseline knots (default: event-time quantiles)\n\
         #   model.spline_upper     baseline spline upper boundary (default: longest follow-up)\n\
         #   model.feature_scaling  {center, scale} per feature (default: preliminary fit)\n\
         #   model.thresholds       per risk factor (default: median value at mid-follow-up)\n\
         #   model.hyper.iw_df      inverse-Wishart degrees of freedom (default: G + 2)\n\
         #   threads                worker threads (default: all cores)\n\n",
    );
    out.push_str(&RunConfig::default().to_toml()?);
    out.push_str("\n# Simulator defaults (scenario data sources):\n");
    for line in crate::simgen::DEFAULTS_TOML.lines() {
        if line.is_empty() {
            out.push_str("#\n");
        } else if line.starts_with('#') {
            out.push_str(&format!("#{line}\n"));
        } else {
            out.push_str(&format!("# {line}\n"));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let c = RunConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn init_text_parses() {
        let c = RunConfig::from_toml(&init_text().unwrap()).unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn invalid_values_rejected() {
        let mut c = RunConfig::default();
        c.threshold = 1.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.replicates = 0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.priors = vec![PriorKind::Ss, PriorKind::Ss];
        assert!(c.validate().is_err());
        assert!(RunConfig::from_toml("replicates = 3\nbogus = 1").is_err());
    }
}
