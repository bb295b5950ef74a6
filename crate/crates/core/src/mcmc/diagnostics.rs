//! Convergence diagnostics across chains.

use serde::{Deserialize, Serialize};

use super::output::ChainOutput;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnDiagnostic {
    pub name: String,
    /// split potential scale reduction
    pub split_rhat: f64,
    /// between-chain reduction factor without splitting, `sqrt(1 + B / (n W))`
    pub rhat: f64,
    pub ess: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub columns: Vec<ColumnDiagnostic>,
    /// largest spread of inclusion frequencies across chains, per indicator
    pub inclusion_spread: Vec<(String, f64)>,
}

impl DiagnosticReport {
    pub fn max_split_rhat(&self) -> f64 {
        self.columns
            .iter()
            .map(|c| c.split_rhat)
            .filter(|r| r.is_finite())
            .fold(1.0, f64::max)
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Returns `(W, B / n)` for equal-length chains.
fn within_between(chains: &[&[f64]]) -> (f64, f64) {
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = chains.iter().map(|c| var(c)).sum::<f64>() / chains.len() as f64;
    (w, var(&means))
}

/// Split-R-hat of equal-length chains; NaN for constant input.
pub fn split_rhat(chains: &[&[f64]]) -> f64 {
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0) / 2;
    if n < 2 {
        return f64::NAN;
    }
    let halves: Vec<&[f64]> = chains.iter().flat_map(|c| [&c[..n], &c[n..2 * n]]).collect();
    let (w, b_over_n) = within_between(&halves);
    if w == 0.0 {
        return if b_over_n == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let nf = n as f64;
    (((nf - 1.0) / nf * w + b_over_n) / w).sqrt()
}

/// Between-chain reduction factor `sqrt(1 + B / (n W))` without splitting.
pub fn rhat(chains: &[&[f64]]) -> f64 {
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if n < 2 {
        return f64::NAN;
    }
    let trimmed: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let (w, b_over_n) = within_between(&trimmed);
    if w == 0.0 {
        return if b_over_n == 0.0 { 1.0 } else { f64::INFINITY };
    }
    (1.0 + b_over_n / w).sqrt()
}

/// Effective sample size with Geyer's initial positive sequence on the
/// chain-averaged autocorrelations.
pub fn ess(chains: &[&[f64]]) -> f64 {
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    let m = chains.len();
    if n < 4 {
        return f64::NAN;
    }
    let total = (m * n) as f64;
    let centered: Vec<Vec<f64>> = chains
        .iter()
        .map(|c| {
            let mu = mean(&c[..n]);
            c[..n].iter().map(|v| v - mu).collect()
        })
        .collect();
    let acov = |lag: usize| -> f64 {
        centered
            .iter()
            .map(|c| (0..n - lag).map(|t| c[t] * c[t + lag]).sum::<f64>() / n as f64)
            .sum::<f64>()
            / m as f64
    };
    let g0 = acov(0);
    if g0 == 0.0 {
        return total;
    }
    let mut sum = 0.0;
    let mut lag = 1;
    while lag + 1 < n {
        let pair = (acov(lag) + acov(lag + 1)) / g0;
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        lag += 2;
    }
    let tau = (-1.0 + 2.0 * (1.0 + sum)).max(1.0 / total.log10().max(1.0));
    total / tau
}

/// Diagnostics for every column shared by all chains.
pub fn diagnostics(outputs: &[ChainOutput]) -> Result<DiagnosticReport> {
    if outputs.len() < 2 {
        return Err(Error::Validation("diagnostics need at least two chains".into()));
    }
    let names = &outputs[0].columns;
    let mut columns = Vec::new();
    let mut inclusion_spread = Vec::new();
    for name in names {
        let chains: Option<Vec<&[f64]>> = outputs.iter().map(|o| o.column(name)).collect();
        let Some(chains) = chains else { continue };
        if name.starts_with("incl[") || name.starts_with("group[") {
            let freqs: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
            let hi = freqs.iter().copied().fold(f64::MIN, f64::max);
            let lo = freqs.iter().copied().fold(f64::MAX, f64::min);
            inclusion_spread.push((name.clone(), hi - lo));
            continue;
        }
        columns.push(ColumnDiagnostic {
            name: name.clone(),
            split_rhat: split_rhat(&chains),
            rhat: rhat(&chains),
            ess: ess(&chains),
        });
    }
    Ok(DiagnosticReport {
        columns,
        inclusion_spread,
    })
}
