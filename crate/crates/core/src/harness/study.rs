//! Replication studies: R datasets, every configured prior, aggregated.

use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DataSource, RunConfig};
use super::io::read_dataset;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mcmc::{chain_file::save_chain, run_chain, ChainOutput};
use crate::simgen::{generate, ScenarioSpec, Truth};
use crate::spec::PriorKind;
use crate::survival::FeatureKind;

/// Largest tolerated fraction of failed fits.
pub const MAX_FAILURE_RATE: f64 = 0.10;

/// Per-replicate posterior summaries of one fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFit {
    /// inclusion frequency per coefficient, risk-factor major
    pub inclusion: Vec<f64>,
    pub group_inclusion: Vec<f64>,
    /// posterior mean of alpha per unit of the raw feature
    pub alpha_mean: Vec<f64>,
    pub t_hat: Option<f64>,
    pub chain_hash: String,
    pub n_draws: usize,
}

impl ReplicateFit {
    pub fn from_chain(out: &ChainOutput) -> Self {
        let (g_n, j_n) = (out.n_risk_factors, out.n_features);
        let mut inclusion = Vec::with_capacity(g_n * j_n);
        let mut alpha_mean = Vec::with_capacity(g_n * j_n);
        for g in 0..g_n {
            for j in 0..j_n {
                inclusion.push(out.inclusion_frequency(g, j));
                alpha_mean.push(out.alpha_raw_mean(g, j));
            }
        }
        Self {
            inclusion,
            group_inclusion: (0..g_n).map(|g| out.group_frequency(g)).collect(),
            alpha_mean,
            t_hat: out.t_hat,
            chain_hash: out.content_hash(),
            n_draws: out.n_draws(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub seed: u64,
    pub prior: PriorKind,
    pub realized_censoring: Option<f64>,
    pub fit: std::result::Result<ReplicateFit, String>,
}

/// Everything a study produced, in replicate-then-prior order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub config: RunConfig,
    pub features: Vec<FeatureKind>,
    pub n_risk_factors: usize,
    /// true alpha on the raw feature scale, when known
    pub truth: Option<Vec<f64>>,
    pub results: Vec<ReplicateResult>,
}

impl StudyResult {
    pub fn priors(&self) -> Vec<PriorKind> {
        PriorKind::ALL
            .into_iter()
            .filter(|p| self.results.iter().any(|r| r.prior == *p))
            .collect()
    }

    pub fn for_prior(&self, prior: PriorKind) -> impl Iterator<Item = &ReplicateResult> {
        self.results.iter().filter(move |r| r.prior == prior)
    }

    pub fn n_failed(&self) -> usize {
        self.results.iter().filter(|r| r.fit.is_err()).count()
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

/// Dataset of replicate `r` with its truth sidecar, if any.
pub fn replicate_data(config: &RunConfig, r: usize) -> Result<(Dataset, Option<Truth>)> {
    match &config.data {
        DataSource::Scenario {
            scenario,
            n,
            censoring_target,
        } => {
            let mut spec = ScenarioSpec::new(*scenario, *n, config.replicate_seed(r))?;
            if censoring_target.is_some() {
                spec.censoring_target = *censoring_target;
            }
            let g = generate(&spec)?;
            Ok((g.dataset, Some(g.truth)))
        }
        DataSource::External {
            longitudinal,
            survival,
            truth,
        } => {
            let data = read_dataset(longitudinal, survival, Some(config.model.n_risk_factors))?;
            let truth = truth.as_deref().map(Truth::load).transpose()?;
            Ok((data, truth))
        }
    }
}

fn fit_one(config: &RunConfig, data: &Result<(Dataset, Option<Truth>)>, r: usize, prior: PriorKind) -> ReplicateResult {
    let seed = config.replicate_seed(r);
    let (fit, realized) = match data {
        Err(e) => (Err(format!("data: {e}")), None),
        Ok((data, truth)) => {
            let fit = run_chain(&config.model_for(prior), data, &config.chain, seed).and_then(|out| {
                if config.save_chains {
                    let dir = config.output_dir.join("chains");
                    std::fs::create_dir_all(&dir)?;
                    save_chain(&dir.join(format!("r{:03}_{}.chain", r + 1, prior.name())), &out)?;
                }
                Ok(ReplicateFit::from_chain(&out))
            });
            (
                fit.map_err(|e| e.to_string()),
                truth.as_ref().map(|t| t.realized_censoring),
            )
        }
    };
    if let Err(e) = &fit {
        warn!("replicate {} ({prior}) failed: {e}", r + 1);
    }
    ReplicateResult {
        replicate: r + 1,
        seed,
        prior,
        realized_censoring: realized,
        fit,
    }
}

/// Runs every replicate and prior on a pool of `config.threads` workers.
/// Results are ordered by replicate, then prior, regardless of scheduling.
pub fn run_study(config: &RunConfig) -> Result<StudyResult> {
    config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = config.threads {
        builder = builder.num_threads(k);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let reps = config.replicates;
    let (data, results) = pool.install(|| {
        let data: Vec<Result<(Dataset, Option<Truth>)>> =
            (0..reps).into_par_iter().map(|r| replicate_data(config, r)).collect();
        let jobs: Vec<(usize, PriorKind)> = (0..reps)
            .flat_map(|r| config.priors.iter().map(move |&p| (r, p)))
            .collect();
        let results: Vec<ReplicateResult> = jobs.par_iter().map(|&(r, p)| fit_one(config, &data[r], r, p)).collect();
        (data, results)
    });
    let failed = results.iter().filter(|r| r.fit.is_err()).count();
    if failed as f64 > MAX_FAILURE_RATE * results.len() as f64 {
        return Err(Error::TooManyFailures {
            failed,
            total: results.len(),
        });
    }
    let truth = data
        .iter()
        .find_map(|d| d.as_ref().ok().and_then(|(_, t)| t.as_ref()))
        .map(|t| truth_on_model_features(t, &config.model.features));
    Ok(StudyResult {
        config: config.clone(),
        features: config.model.features.clone(),
        n_risk_factors: config.model.n_risk_factors,
        truth,
        results,
    })
}

/// True alpha arranged on the fitted feature list.
fn truth_on_model_features(t: &Truth, features: &[FeatureKind]) -> Vec<f64> {
    let mut out = Vec::new();
    for row in &t.spec.true_alpha {
        for f in features {
            let j = FeatureKind::ALL.iter().position(|k| k == f).expect("feature in ALL");
            out.push(row[j]);
        }
    }
    out
}
