//! Selection summaries, tables and paired prior comparisons.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use super::study::StudyResult;
use crate::error::{Error, Result};
use crate::spec::PriorKind;
use crate::survival::FeatureKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    /// zero-based risk factor
    pub risk_factor: usize,
    pub feature: FeatureKind,
    /// percentage of replicates with inclusion frequency above the threshold
    pub selected_pct: f64,
    pub mc_se: f64,
    /// inclusion frequency averaged over replicates, in percent
    pub mean_inclusion_pct: f64,
    pub mean_estimate: f64,
    pub truth: Option<f64>,
    pub bias: Option<f64>,
    pub mse: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub risk_factor: usize,
    /// `None` for priors without a group indicator
    pub selected_pct: Option<f64>,
    pub mc_se: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub prior: PriorKind,
    pub threshold: f64,
    pub n_replicates: usize,
    pub n_failed: usize,
    pub groups: Vec<GroupRow>,
    pub features: Vec<FeatureRow>,
}

/// Percentage and binomial Monte-Carlo standard error of a proportion.
pub fn percentage(hits: usize, n: usize) -> (f64, f64) {
    let p = hits as f64 / n as f64;
    (100.0 * p, 100.0 * (p * (1.0 - p) / n as f64).sqrt())
}

impl SelectionSummary {
    pub fn from_study(study: &StudyResult, prior: PriorKind) -> Result<Self> {
        let threshold = study.config.threshold;
        let fits: Vec<_> = study.for_prior(prior).filter_map(|r| r.fit.as_ref().ok()).collect();
        let n_failed = study.for_prior(prior).filter(|r| r.fit.is_err()).count();
        let n = fits.len();
        if n == 0 {
            return Err(Error::Validation(format!("no successful replicates for {prior}")));
        }
        let (g_n, j_n) = (study.n_risk_factors, study.features.len());
        let groups = (0..g_n)
            .map(|g| {
                if prior == PriorKind::Ss {
                    return GroupRow {
                        risk_factor: g,
                        selected_pct: None,
                        mc_se: None,
                    };
                }
                let hits = fits.iter().filter(|f| f.group_inclusion[g] > threshold).count();
                let (pct, se) = percentage(hits, n);
                GroupRow {
                    risk_factor: g,
                    selected_pct: Some(pct),
                    mc_se: Some(se),
                }
            })
            .collect();
        let mut features = Vec::with_capacity(g_n * j_n);
        for g in 0..g_n {
            for (j, &feature) in study.features.iter().enumerate() {
                let k = g * j_n + j;
                let hits = fits.iter().filter(|f| f.inclusion[k] > threshold).count();
                let (selected_pct, mc_se) = percentage(hits, n);
                let mean_inclusion_pct = 100.0 * fits.iter().map(|f| f.inclusion[k]).sum::<f64>() / n as f64;
                let est: Vec<f64> = fits.iter().map(|f| f.alpha_mean[k]).collect();
                let mean_estimate = est.iter().sum::<f64>() / n as f64;
                let truth = study.truth.as_ref().map(|t| t[k]);
                let bias = truth.map(|t| est.iter().map(|e| e - t).sum::<f64>() / n as f64);
                let mse = truth.map(|t| est.iter().map(|e| (e - t).powi(2)).sum::<f64>() / n as f64);
                features.push(FeatureRow {
                    risk_factor: g,
                    feature,
                    selected_pct,
                    mc_se,
                    mean_inclusion_pct,
                    mean_estimate,
                    truth,
                    bias,
                    mse,
                });
            }
        }
        Ok(Self {
            prior,
            threshold,
            n_replicates: n,
            n_failed,
            groups,
            features,
        })
    }

    pub fn feature(&self, g: usize, feature: FeatureKind) -> &FeatureRow {
        self.features
            .iter()
            .find(|r| r.risk_factor == g && r.feature == feature)
            .expect("feature row present")
    }
}

/// Summaries of every prior in a study, in report column order.
pub fn summarize(study: &StudyResult) -> Result<Vec<SelectionSummary>> {
    study
        .priors()
        .into_iter()
        .map(|p| SelectionSummary::from_study(study, p))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableFormat {
    Text,
    Csv,
}

/// `88 (2.0)`.
pub fn format_cell(pct: f64, se: f64) -> String {
    format!("{pct:.0} ({se:.1})")
}

fn ordered(summaries: &[SelectionSummary]) -> Vec<&SelectionSummary> {
    let mut v: Vec<&SelectionSummary> = summaries.iter().collect();
    v.sort_by_key(|s| PriorKind::ALL.iter().position(|p| *p == s.prior));
    v
}

fn render(header: Vec<String>, rows: Vec<Vec<String>>, format: TableFormat) -> Result<String> {
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&header)?;
            for r in &rows {
                w.write_record(r)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
        }
        TableFormat::Text => {
            let mut widths: Vec<usize> = header.iter().map(String::len).collect();
            for r in &rows {
                for (w, c) in widths.iter_mut().zip(r) {
                    *w = (*w).max(c.len());
                }
            }
            let line = |cells: &[String]| -> String {
                let s: Vec<String> = cells
                    .iter()
                    .zip(&widths)
                    .enumerate()
                    .map(|(i, (c, w))| if i < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                    .collect();
                s.join("  ").trim_end().to_string() + "\n"
            };
            let mut out = line(&header);
            out.push_str(&line(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>()));
            for r in &rows {
                out.push_str(&line(r));
            }
            Ok(out)
        }
    }
}

/// Selection percentages with MC SE: a group row per risk factor followed by
/// its feature rows, one column per prior.
pub fn render_selection(summaries: &[SelectionSummary], format: TableFormat) -> Result<String> {
    let sums = ordered(summaries);
    let mut header = vec!["risk_factor".to_string(), "feature".to_string()];
    header.extend(sums.iter().map(|s| s.prior.label().to_string()));
    let mut rows = Vec::new();
    let Some(first) = sums.first() else {
        return render(header, rows, format);
    };
    for grp in &first.groups {
        let g = grp.risk_factor;
        let mut row = vec![(g + 1).to_string(), "(group)".to_string()];
        for s in &sums {
            let r = &s.groups[g];
            row.push(match (r.selected_pct, r.mc_se) {
                (Some(p), Some(se)) => format_cell(p, se),
                _ => "-".to_string(),
            });
        }
        rows.push(row);
        for f in first.features.iter().filter(|f| f.risk_factor == g) {
            let mut row = vec![(g + 1).to_string(), f.feature.name().to_string()];
            for s in &sums {
                let r = s.feature(g, f.feature);
                row.push(format_cell(r.selected_pct, r.mc_se));
            }
            rows.push(row);
        }
    }
    render(header, rows, format)
}

/// Mean estimate, bias and MSE of every truly nonzero coefficient.
pub fn render_estimates(summaries: &[SelectionSummary], format: TableFormat) -> Result<String> {
    let sums = ordered(summaries);
    let mut header = vec!["risk_factor".to_string(), "feature".to_string(), "truth".to_string()];
    for s in &sums {
        for what in ["mean", "bias", "mse"] {
            header.push(format!("{} {what}", s.prior.label()));
        }
    }
    let mut rows = Vec::new();
    if let Some(first) = sums.first() {
        for f in &first.features {
            let Some(t) = f.truth.filter(|t| *t != 0.0) else {
                continue;
            };
            let mut row = vec![
                (f.risk_factor + 1).to_string(),
                f.feature.name().to_string(),
                format!("{t:.4}"),
            ];
            for s in &sums {
                let r = s.feature(f.risk_factor, f.feature);
                row.push(format!("{:.4}", r.mean_estimate));
                row.push(format!("{:.4}", r.bias.unwrap_or(f64::NAN)));
                row.push(format!("{:.4}", r.mse.unwrap_or(f64::NAN)));
            }
            rows.push(row);
        }
    }
    render(header, rows, format)
}

/// Paired comparison of two priors on one coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedRow {
    pub risk_factor: usize,
    pub feature: FeatureKind,
    pub pct_a: f64,
    pub pct_b: f64,
    /// `pct_a - pct_b`
    pub difference: f64,
    /// replicates selecting under `a` only, and under `b` only
    pub a_only: usize,
    pub b_only: usize,
    /// two-sided exact sign test
    pub p_value: f64,
    /// true coefficient is zero and the two rates differ
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub a: PriorKind,
    pub b: PriorKind,
    pub n_pairs: usize,
    pub rows: Vec<PairedRow>,
}

/// Two-sided exact sign test of `k` successes out of `n`.
pub fn sign_test(k: usize, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let b = Binomial::new(0.5, n as u64).expect("valid binomial");
    let lo = k.min(n - k) as u64;
    (2.0 * b.cdf(lo)).min(1.0)
}

/// Per-replicate selection decisions of one prior, keyed by replicate.
struct Decisions {
    prior: PriorKind,
    by_rep: std::collections::BTreeMap<usize, (u64, Vec<bool>)>,
}

fn decisions(study: &StudyResult, prior: PriorKind) -> Decisions {
    let t = study.config.threshold;
    Decisions {
        prior,
        by_rep: study
            .for_prior(prior)
            .filter_map(|r| {
                r.fit
                    .as_ref()
                    .ok()
                    .map(|f| (r.replicate, (r.seed, f.inclusion.iter().map(|p| *p > t).collect())))
            })
            .collect(),
    }
}

/// Paired differences between every pair of priors across the given
/// studies. Replicate seeds must agree; replicates that failed under either
/// prior are left out of that pair.
pub fn compare_priors(studies: &[StudyResult]) -> Result<Vec<PairedComparison>> {
    let first = studies
        .first()
        .ok_or_else(|| Error::Validation("nothing to compare".into()))?;
    let seeds = |s: &StudyResult| -> Vec<(usize, u64)> {
        let mut v: Vec<(usize, u64)> = s.results.iter().map(|r| (r.replicate, r.seed)).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let reference = seeds(first);
    for s in &studies[1..] {
        if seeds(s) != reference {
            return Err(Error::SeedMismatch(
                "studies were run with different replicate seeds".into(),
            ));
        }
        if s.features != first.features || s.n_risk_factors != first.n_risk_factors || s.truth != first.truth {
            return Err(Error::Validation("studies fit different models or data".into()));
        }
    }
    let mut all: Vec<Decisions> = Vec::new();
    for s in studies {
        for p in s.priors() {
            if all.iter().any(|d| d.prior == p) {
                return Err(Error::Validation(format!("prior {p} appears in more than one study")));
            }
            all.push(decisions(s, p));
        }
    }
    if all.len() < 2 {
        return Err(Error::Validation("need at least two priors".into()));
    }
    all.sort_by_key(|d| PriorKind::ALL.iter().position(|p| *p == d.prior));
    let j_n = first.features.len();
    let mut out = Vec::new();
    for ia in 0..all.len() {
        for ib in ia + 1..all.len() {
            let (a, b) = (&all[ia], &all[ib]);
            let pairs: Vec<(&Vec<bool>, &Vec<bool>)> = a
                .by_rep
                .iter()
                .filter_map(|(r, (_, da))| b.by_rep.get(r).map(|(_, db)| (da, db)))
                .collect();
            let n = pairs.len();
            let mut rows = Vec::new();
            for g in 0..first.n_risk_factors {
                for (j, &feature) in first.features.iter().enumerate() {
                    let k = g * j_n + j;
                    let sa = pairs.iter().filter(|(x, _)| x[k]).count();
                    let sb = pairs.iter().filter(|(_, y)| y[k]).count();
                    let a_only = pairs.iter().filter(|(x, y)| x[k] && !y[k]).count();
                    let b_only = pairs.iter().filter(|(x, y)| !x[k] && y[k]).count();
                    let (pct_a, pct_b) = if n == 0 {
                        (f64::NAN, f64::NAN)
                    } else {
                        (100.0 * sa as f64 / n as f64, 100.0 * sb as f64 / n as f64)
                    };
                    let unimportant = first.truth.as_ref().is_some_and(|t| t[k] == 0.0);
                    rows.push(PairedRow {
                        risk_factor: g,
                        feature,
                        pct_a,
                        pct_b,
                        difference: pct_a - pct_b,
                        a_only,
                        b_only,
                        p_value: sign_test(a_only, a_only + b_only),
                        flagged: unimportant && sa != sb,
                    });
                }
            }
            out.push(PairedComparison {
                a: a.prior,
                b: b.prior,
                n_pairs: n,
                rows,
            });
        }
    }
    Ok(out)
}

/// Text report of paired comparisons; flagged rows carry a `*`.
pub fn render_comparisons(comparisons: &[PairedComparison], format: TableFormat) -> Result<String> {
    let header: Vec<String> = [
        "a",
        "b",
        "risk_factor",
        "feature",
        "pct_a",
        "pct_b",
        "difference",
        "a_only",
        "b_only",
        "p_value",
        "flag",
    ]
    .map(String::from)
    .to_vec();
    let mut rows = Vec::new();
    for c in comparisons {
        for r in &c.rows {
            rows.push(vec![
                c.a.label().to_string(),
                c.b.label().to_string(),
                (r.risk_factor + 1).to_string(),
                r.feature.name().to_string(),
                format!("{:.0}", r.pct_a),
                format!("{:.0}", r.pct_b),
                format!("{:+.0}", r.difference),
                r.a_only.to_string(),
                r.b_only.to_string(),
                format!("{:.3}", r.p_value),
                if r.flagged { "*".into() } else { String::new() },
            ]);
        }
    }
    render(header, rows, format)
}

/// Writes `replicates.json`, `summary.json` and the selection and
/// estimate tables (text and csv) into `dir`. Contents depend only on the
/// study, so reruns of one config give byte-identical files.
pub fn write_outputs(study: &StudyResult, dir: &std::path::Path) -> Result<Vec<SelectionSummary>> {
    std::fs::create_dir_all(dir)?;
    study.save(&dir.join("replicates.json"))?;
    let summaries = summarize(study)?;
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summaries)?)?;
    for (ext, fmt) in [("txt", TableFormat::Text), ("csv", TableFormat::Csv)] {
        std::fs::write(dir.join(format!("selection.{ext}")), render_selection(&summaries, fmt)?)?;
        std::fs::write(dir.join(format!("estimates.{ext}")), render_estimates(&summaries, fmt)?)?;
    }
    Ok(summaries)
}
