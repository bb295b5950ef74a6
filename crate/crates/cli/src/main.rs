use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use jmsel::harness::{
    compare_priors, init_text, read_dataset, render_comparisons, render_selection, run_study, write_dataset,
    write_outputs, DataSource, RunConfig, StudyResult, TableFormat,
};
use jmsel::mcmc::{chain_file::save_chain, run_chain};
use jmsel::prior_calculus::{
    block_means, build_concentration, enumerate_masks, negativity_scan, pi_covariance, pi_mean, pi_variance,
    DirichletWeights, WeightScaling,
};
use jmsel::simgen::{generate, Scenario, ScenarioSpec};
use jmsel::spec::PriorKind;

#[derive(Parser)]
#[command(
    name = "jmsel",
    version,
    about = "Bayesian joint models with bi-level spike-and-slab feature selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario dataset and its truth sidecar
    Simulate(SimulateArgs),
    /// Fit one dataset and write the chain plus a posterior summary
    Fit(FitArgs),
    /// Run a replication study
    Study(StudyArgs),
    /// Paired comparison of priors across studies with matching seeds
    Compare(CompareArgs),
    /// Tabulate the Dirichlet combination prior
    PriorCalc(PriorCalcArgs),
    /// Configuration file helpers
    Config {
        #[command(subcommand)]
        command: ConfigCommand,
    },
}

#[derive(Subcommand)]
enum ConfigCommand {
    /// Print (or write) the default configuration with every default spelled out
    Init {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "I")]
    scenario: Scenario,
    #[arg(long, default_value_t = 800)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// override the scenario's censoring target
    #[arg(long)]
    censoring_target: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// directory holding longitudinal.csv and survival.csv
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    longitudinal: Option<PathBuf>,
    #[arg(long)]
    survival: Option<PathBuf>,
    #[arg(long)]
    prior: Option<PriorKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// fit only this prior (repeatable)
    #[arg(long)]
    prior: Vec<PriorKind>,
    #[arg(long)]
    scenario: Option<Scenario>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct CompareArgs {
    /// study output directories (or their replicates.json)
    #[arg(required = true)]
    studies: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PriorCalcArgs {
    /// number of features J
    #[arg(long, default_value_t = 4)]
    features: usize,
    /// comma-separated weights a_1 > ... > a_J (default J, J-1, .., 1)
    #[arg(long, value_delimiter = ',')]
    weights: Vec<f64>,
    #[arg(long)]
    binomial_scaled: bool,
    /// negativity scan trials per J in 2..=6
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Study(a) => study(a),
        Command::Compare(a) => compare(a),
        Command::PriorCalc(a) => prior_calc(a),
        Command::Config {
            command: ConfigCommand::Init { out },
        } => {
            let text = init_text()?;
            match out {
                Some(p) => fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
            Ok(())
        }
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut spec = ScenarioSpec::new(a.scenario, a.n, a.seed)?;
    if a.censoring_target.is_some() {
        spec.censoring_target = a.censoring_target;
    }
    let g = generate(&spec)?;
    fs::create_dir_all(&a.out)?;
    write_dataset(&g.dataset, &a.out.join("longitudinal.csv"), &a.out.join("survival.csv"))?;
    g.truth.save(&a.out.join("truth.json"))?;
    println!(
        "scenario {} n={} seed={}: {} events, censoring {:.3} (rate {:.5})",
        a.scenario,
        a.n,
        a.seed,
        g.dataset.n_events(),
        g.realized_censoring,
        g.truth.censoring_rate
    );
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

fn fit(a: FitArgs) -> Result<()> {
    let config = load_config(a.config.as_deref())?;
    let (long, surv) = match (&a.data, &a.longitudinal, &a.survival, &config.data) {
        (Some(d), None, None, _) => (d.join("longitudinal.csv"), d.join("survival.csv")),
        (None, Some(l), Some(s), _) => (l.clone(), s.clone()),
        (
            None,
            None,
            None,
            DataSource::External {
                longitudinal, survival, ..
            },
        ) => (longitudinal.clone(), survival.clone()),
        _ => bail!("give --data DIR, or both --longitudinal and --survival"),
    };
    let data = read_dataset(&long, &surv, Some(config.model.n_risk_factors))?;
    let prior = a.prior.unwrap_or(config.model.prior);
    let spec = config.model_for(prior);
    let seed = a.seed.unwrap_or(config.seed);
    info!("fitting {} subjects with {prior}", data.subjects.len());
    let out = run_chain(&spec, &data, &config.chain, seed)?;
    fs::create_dir_all(&a.out)?;
    save_chain(&a.out.join("chain.jmc"), &out)?;

    let mut text = format!(
        "prior {prior}, seed {seed}, {} draws, t_hat {}\n\n",
        out.n_draws(),
        out.t_hat.map_or("-".to_string(), |t| format!("{t:.6}"))
    );
    text.push_str("risk_factor  feature    group_incl  incl    alpha_std   alpha_raw\n");
    for g in 0..out.n_risk_factors {
        for (j, f) in spec.features.iter().enumerate() {
            text.push_str(&format!(
                "{:<11}  {:<9}  {:>10.3}  {:>5.3}  {:>10.4}  {:>10.4}\n",
                g + 1,
                f.name(),
                out.group_frequency(g),
                out.inclusion_frequency(g, j),
                out.alpha_mean(g, j),
                out.alpha_raw_mean(g, j)
            ));
        }
    }
    text.push_str("\nacceptance rates\n");
    for (name, rate) in &out.acceptance {
        text.push_str(&format!("  {name:<14} {rate:.3}\n"));
    }
    fs::write(a.out.join("posterior.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn study(a: StudyArgs) -> Result<()> {
    let mut config = load_config(a.config.as_deref())?;
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(o) = a.out {
        config.output_dir = o;
    }
    if !a.prior.is_empty() {
        config.priors = a.prior;
    }
    if a.scenario.is_some() || a.n.is_some() {
        let (sc, n, ct) = match &config.data {
            DataSource::Scenario {
                scenario,
                n,
                censoring_target,
            } => (*scenario, *n, *censoring_target),
            DataSource::External { .. } => (Scenario::I, 800, None),
        };
        config.data = DataSource::Scenario {
            scenario: a.scenario.unwrap_or(sc),
            n: a.n.unwrap_or(n),
            censoring_target: ct,
        };
    }
    if let Some(r) = a.replicates {
        config.replicates = r;
    }
    if a.threads.is_some() {
        config.threads = a.threads;
    }
    config.validate()?;
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), config.to_toml()?)?;
    info!(
        "study: {} replicates x {} priors into {}",
        config.replicates,
        config.priors.len(),
        dir.display()
    );
    let result = run_study(&config)?;
    let summaries = write_outputs(&result, &dir)?;
    print!("{}", render_selection(&summaries, TableFormat::Text)?);
    if result.n_failed() > 0 {
        println!("{} fits failed and were excluded", result.n_failed());
    }
    Ok(())
}

fn compare(a: CompareArgs) -> Result<()> {
    let studies = a
        .studies
        .iter()
        .map(|p| {
            let file = if p.is_dir() {
                p.join("replicates.json")
            } else {
                p.clone()
            };
            StudyResult::load(&file).with_context(|| format!("loading {}", file.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let comparisons = compare_priors(&studies)?;
    let text = render_comparisons(&comparisons, TableFormat::Text)?;
    if let Some(dir) = a.out {
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("comparison.txt"), &text)?;
        fs::write(
            dir.join("comparison.csv"),
            render_comparisons(&comparisons, TableFormat::Csv)?,
        )?;
        fs::write(dir.join("comparison.json"), serde_json::to_string_pretty(&comparisons)?)?;
    }
    print!("{text}");
    Ok(())
}

fn prior_calc(a: PriorCalcArgs) -> Result<()> {
    let j_n = a.features;
    let weights = if a.weights.is_empty() {
        (1..=j_n).rev().map(|k| k as f64).collect()
    } else {
        a.weights.clone()
    };
    let scaling = if a.binomial_scaled {
        WeightScaling::BinomialScaled
    } else {
        WeightScaling::Plain
    };
    let w = DirichletWeights::new(weights, scaling)?;
    let catalog = enumerate_masks(j_n)?;
    let conc = build_concentration(&w, &catalog)?;
    let total: f64 = conc.iter().sum();
    println!("J = {j_n}, weights {:?} ({scaling:?})\n", w.weights());
    println!(
        "mask  {:<width$}  concentration  mean q",
        "",
        width = j_n.saturating_sub(4)
    );
    for (c, m) in catalog.masks().iter().enumerate() {
        println!(
            "{:<6}{}  {:>13.4}  {:.5}",
            c + 1,
            m.render(j_n),
            conc[c],
            conc[c] / total
        );
    }
    println!("\nprior probability by number of selected features");
    for (k, p) in block_means(&w).iter().enumerate() {
        println!("  {}: {p:.5}", k + 1);
    }
    if scaling == WeightScaling::Plain {
        println!("\nE[pi_j] = {:.6}", pi_mean(&w));
        println!("Var[pi_j] = {:.6e}", pi_variance(&w, 0, j_n)?);
        if j_n >= 2 {
            println!("Cov[pi_j, pi_k] = {:.6e}", pi_covariance(&w, 0, 1, j_n)?);
        }
    }
    println!("\nnegativity scan ({} trials each)", a.trials);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    for jj in 2..=6 {
        print!("{}", negativity_scan(jj, a.trials, &mut rng)?);
    }
    Ok(())
}
