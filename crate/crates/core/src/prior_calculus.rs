//! Combinatorics of the Dirichlet-structured feature-selection prior.
//!
//! A risk factor with `J` candidate features has `2^J - 1` nonempty feature
//! combinations ([`FeatureMask`]). A Dirichlet distribution over those
//! combinations induces correlated per-feature selection probabilities: the
//! probability of selecting feature `j` is the total mass of every
//! combination containing `j`. Concentrations are shared within a
//! cardinality block, so the prior can favour small combinations.
//!
//! Feature indices in this API are zero-based.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{binomial, random};

/// Largest supported feature count.
pub const MAX_FEATURES: usize = 16;

/// A nonempty subset of the features of one risk factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureMask(u16);

impl FeatureMask {
    /// `None` for the empty set.
    pub fn new(bits: u16) -> Option<Self> {
        (bits != 0).then_some(Self(bits))
    }

    pub fn singleton(j: usize) -> Self {
        Self(1 << j)
    }

    pub fn full(n_features: usize) -> Self {
        Self(full_bits(n_features))
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn contains(self, j: usize) -> bool {
        self.0 & (1 << j) != 0
    }

    pub fn cardinality(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn with(self, j: usize) -> Self {
        Self(self.0 | (1 << j))
    }

    pub fn without(self, j: usize) -> Option<Self> {
        Self::new(self.0 & !(1 << j))
    }

    /// Feature-index-order string, e.g. `"101"` for features 1 and 3 of three.
    pub fn render(self, n_features: usize) -> String {
        (0..n_features)
            .map(|j| if self.contains(j) { '1' } else { '0' })
            .collect()
    }
}

pub(crate) fn full_bits(n_features: usize) -> u16 {
    if n_features >= 16 {
        u16::MAX
    } else {
        (1u16 << n_features) - 1
    }
}

/// All nonempty masks over `J` features, grouped by ascending cardinality and
/// ordered lexicographically (by lowest feature index) within each group.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskCatalog {
    n_features: usize,
    masks: Vec<FeatureMask>,
    /// position of each bit pattern in `masks`; slot 0 (empty) is unused
    position: Vec<u32>,
    block_starts: Vec<usize>,
}

impl MaskCatalog {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn masks(&self) -> &[FeatureMask] {
        &self.masks
    }

    pub fn get(&self, c: usize) -> FeatureMask {
        self.masks[c]
    }

    pub fn index_of(&self, mask: FeatureMask) -> usize {
        self.position[mask.bits() as usize] as usize
    }

    /// Catalog positions occupied by masks of cardinality `k` (1-based).
    pub fn block(&self, k: usize) -> std::ops::Range<usize> {
        self.block_starts[k - 1]..self.block_starts[k]
    }
}

/// Enumerates the catalog for `n_features` features.
pub fn enumerate_masks(n_features: usize) -> Result<MaskCatalog> {
    if !(1..=MAX_FEATURES).contains(&n_features) {
        return Err(Error::out_of_range(
            "feature count",
            format!("{n_features} not in [1, {MAX_FEATURES}]"),
        ));
    }
    let total = (1usize << n_features) - 1;
    let mut masks = Vec::with_capacity(total);
    let mut block_starts = vec![0];
    for k in 1..=n_features {
        let mut combo: Vec<usize> = (0..k).collect();
        loop {
            let bits = combo.iter().fold(0u16, |acc, &j| acc | (1 << j));
            masks.push(FeatureMask(bits));
            // advance to the next k-combination in lexicographic order
            let mut i = k;
            while i > 0 && combo[i - 1] == n_features - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            combo[i - 1] += 1;
            for t in i..k {
                combo[t] = combo[t - 1] + 1;
            }
        }
        block_starts.push(masks.len());
    }
    let mut position = vec![u32::MAX; total + 1];
    for (c, m) in masks.iter().enumerate() {
        position[m.bits() as usize] = c as u32;
    }
    Ok(MaskCatalog {
        n_features,
        masks,
        position,
        block_starts,
    })
}

/// How the per-cardinality weights map onto Dirichlet concentrations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScaling {
    /// Every mask of cardinality k receives `a_k`.
    Plain,
    /// Every mask of cardinality k receives `a_k / binom(J, k)`, so each
    /// block's total concentration is `a_k` regardless of its size.
    BinomialScaled,
}

/// Per-cardinality Dirichlet weights `a_1 .. a_J` of one risk factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirichletWeights {
    a: Vec<f64>,
    scaling: WeightScaling,
}

impl DirichletWeights {
    pub fn new(a: Vec<f64>, scaling: WeightScaling) -> Result<Self> {
        let w = Self { a, scaling };
        w.validate()?;
        Ok(w)
    }

    /// Checks positivity and the strict decreasing order of `a`. The order
    /// applies to the weights themselves under both scalings.
    pub fn validate(&self) -> Result<()> {
        if self.a.is_empty() || self.a.len() > MAX_FEATURES {
            return Err(Error::InvalidWeights(format!(
                "need between 1 and {MAX_FEATURES} weights, got {}",
                self.a.len()
            )));
        }
        if !self.is_ordered() {
            return Err(Error::InvalidWeights(format!(
                "{:?} weights {:?} violate the strict decreasing order",
                self.scaling, self.a
            )));
        }
        Ok(())
    }

    /// True when all weights are finite, positive and strictly ordered.
    pub fn is_ordered(&self) -> bool {
        if self.a.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
            return false;
        }
        self.a.windows(2).all(|w| w[0] > w[1])
    }

    pub fn weights(&self) -> &[f64] {
        &self.a
    }

    pub fn scaling(&self) -> WeightScaling {
        self.scaling
    }

    pub fn n_features(&self) -> usize {
        self.a.len()
    }

    /// Concentration carried by a single mask of cardinality `k` (1-based).
    pub fn per_mask(&self, k: usize) -> f64 {
        let a = self.a[k - 1];
        match self.scaling {
            WeightScaling::Plain => a,
            WeightScaling::BinomialScaled => a / binomial(self.a.len(), k),
        }
    }

    /// Builds weights without validating; callers check `is_ordered`.
    pub(crate) fn unchecked(a: Vec<f64>, scaling: WeightScaling) -> Self {
        Self { a, scaling }
    }
}

/// Concentration vector indexed by catalog position.
pub fn build_concentration(w: &DirichletWeights, catalog: &MaskCatalog) -> Result<Vec<f64>> {
    w.validate()?;
    if w.n_features() != catalog.n_features() {
        return Err(Error::InvalidWeights(format!(
            "{} weights for a {}-feature catalog",
            w.n_features(),
            catalog.n_features()
        )));
    }
    Ok(catalog.masks().iter().map(|m| w.per_mask(m.cardinality())).collect())
}

/// Probabilities of the feature combinations, indexed by catalog position.
#[derive(Clone, Debug, PartialEq)]
pub struct CombinationProbs {
    q: Vec<f64>,
}

impl CombinationProbs {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if q.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::Validation(format!(
                "combination probabilities outside [0, 1]: {q:?}"
            )));
        }
        let s: f64 = q.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!(
                "combination probabilities sum to {s}, not 1"
            )));
        }
        Ok(Self { q })
    }

    /// From log-probabilities; renormalizes to absorb rounding.
    pub fn from_log(log_q: &[f64]) -> Self {
        let mut q: Vec<f64> = log_q.iter().map(|l| l.exp()).collect();
        let s: f64 = q.iter().sum();
        for x in &mut q {
            *x /= s;
        }
        Self { q }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }
}

/// Per-feature selection probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct InclusionProbs {
    pi: Vec<f64>,
}

impl InclusionProbs {
    pub fn as_slice(&self) -> &[f64] {
        &self.pi
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.pi
    }
}

/// `pi_j` = total probability of the combinations that contain feature `j`.
pub fn q_to_pi(q: &CombinationProbs, catalog: &MaskCatalog) -> Result<InclusionProbs> {
    if q.as_slice().len() != catalog.len() {
        return Err(Error::Validation(format!(
            "{} combination probabilities for a catalog of {}",
            q.as_slice().len(),
            catalog.len()
        )));
    }
    let mut pi = vec![0.0; catalog.n_features()];
    for (m, &qc) in catalog.masks().iter().zip(q.as_slice()) {
        for (j, p) in pi.iter_mut().enumerate() {
            if m.contains(j) {
                *p += qc;
            }
        }
    }
    for p in &mut pi {
        *p = p.clamp(0.0, 1.0);
    }
    Ok(InclusionProbs { pi })
}

fn check_plain(w: &DirichletWeights, n_features: usize) -> Result<()> {
    w.validate()?;
    if w.scaling() != WeightScaling::Plain {
        return Err(Error::InvalidWeights(
            "closed-form moments are defined for plain weights".into(),
        ));
    }
    if w.n_features() != n_features {
        return Err(Error::InvalidWeights(format!(
            "{} weights but J = {n_features}",
            w.n_features()
        )));
    }
    Ok(())
}

/// Total concentration `a_t = sum_k binom(J, k) a_k`.
pub fn total_concentration(w: &DirichletWeights) -> f64 {
    let n = w.n_features();
    (1..=n).map(|k| binomial(n, k) * w.per_mask(k)).sum()
}

/// Closed-form covariance of the selection probabilities of two distinct
/// features under plain weights. Exchangeability makes the value independent
/// of which pair is chosen.
pub fn pi_covariance(w: &DirichletWeights, j: usize, k: usize, n_features: usize) -> Result<f64> {
    check_plain(w, n_features)?;
    if n_features < 2 {
        return Err(Error::out_of_range("feature count", "covariance needs J >= 2"));
    }
    if j >= n_features || k >= n_features {
        return Err(Error::out_of_range(
            "feature index",
            format!("({j}, {k}) with J = {n_features}"),
        ));
    }
    if j == k {
        return Err(Error::Domain(
            "covariance of a feature with itself: use pi_variance".into(),
        ));
    }
    let jj = n_features;
    let a = |m: usize| w.weights()[m - 1];
    let at = total_concentration(w);
    let c = 1.0 / (at * at * (at + 1.0));

    let mut s = -a(1) * a(1);
    for i in 0..=jj - 2 {
        for l in i + 1..=jj - 1 {
            s -= 2.0 * binomial(jj - 1, i) * binomial(jj - 1, l) * a(i + 1) * a(l + 1);
        }
    }
    // the bracket vanishes at index J - 2, so the sum may stop at J - 3
    for l in 0..jj.saturating_sub(2) {
        let bracket = binomial(jj - 1, l + 1).powi(2) - binomial(jj - 2, l);
        s -= bracket * a(l + 2) * a(l + 2);
    }
    for l in 0..=jj - 2 {
        s += binomial(jj - 2, l) * a(l + 2) * (at - a(l + 2));
    }
    Ok(c * s)
}

/// Variance of one feature's selection probability under plain weights.
/// By aggregation `pi_j ~ Beta(A, a_t - A)` with `A = sum_k binom(J-1, k-1) a_k`.
pub fn pi_variance(w: &DirichletWeights, j: usize, n_features: usize) -> Result<f64> {
    check_plain(w, n_features)?;
    if j >= n_features {
        return Err(Error::out_of_range(
            "feature index",
            format!("{j} with J = {n_features}"),
        ));
    }
    let at = total_concentration(w);
    let inc = inclusion_concentration(w);
    Ok((inc * (at - inc) / (at * at * (at + 1.0))).max(0.0))
}

/// Prior mean of every feature's selection probability.
pub fn pi_mean(w: &DirichletWeights) -> f64 {
    inclusion_concentration(w) / total_concentration(w)
}

fn inclusion_concentration(w: &DirichletWeights) -> f64 {
    let n = w.n_features();
    (1..=n).map(|k| binomial(n - 1, k - 1) * w.per_mask(k)).sum()
}

/// Prior probability of each cardinality block (index k-1 for cardinality k)
/// given fixed weights: the Dirichlet mean summed over the block.
pub fn block_means(w: &DirichletWeights) -> Vec<f64> {
    let n = w.n_features();
    let at = total_concentration(w);
    (1..=n).map(|k| binomial(n, k) * w.per_mask(k) / at).collect()
}

/// One offending weight vector found by [`negativity_scan`].
#[derive(Clone, Debug, Serialize)]
pub struct CovarianceViolation {
    pub weights: Vec<f64>,
    pub covariance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct NegativityReport {
    pub n_features: usize,
    pub trials: usize,
    pub min_covariance: f64,
    pub max_covariance: f64,
    pub violations: Vec<CovarianceViolation>,
}

impl std::fmt::Display for NegativityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "J = {}: {} trials, covariance range [{:.6e}, {:.6e}], {} nonnegative",
            self.n_features,
            self.trials,
            self.min_covariance,
            self.max_covariance,
            self.violations.len()
        )?;
        for v in &self.violations {
            writeln!(f, "  weights {:?} -> covariance {:.6e}", v.weights, v.covariance)?;
        }
        Ok(())
    }
}

/// Draws ordered weight vectors and reports any nonnegative covariance.
///
/// Weights come from sorted i.i.d. half-Cauchy draws (the prior the sampler
/// uses), alternating with sorted uniforms so that moderate ratios are also
/// covered.
pub fn negativity_scan<R: Rng + ?Sized>(n_features: usize, trials: usize, rng: &mut R) -> Result<NegativityReport> {
    if !(2..=MAX_FEATURES).contains(&n_features) {
        return Err(Error::out_of_range(
            "feature count",
            format!("{n_features} not in [2, {MAX_FEATURES}]"),
        ));
    }
    let mut report = NegativityReport {
        n_features,
        trials,
        min_covariance: f64::INFINITY,
        max_covariance: f64::NEG_INFINITY,
        violations: Vec::new(),
    };
    let mut done = 0;
    while done < trials {
        let mut a: Vec<f64> = (0..n_features)
            .map(|_| {
                if done % 2 == 0 {
                    random::half_cauchy(rng, 1.0)
                } else {
                    random::open_uniform(rng)
                }
            })
            .collect();
        a.sort_by(|x, y| y.total_cmp(x));
        let Ok(w) = DirichletWeights::new(a, WeightScaling::Plain) else {
            // ties or a degenerate draw; redraw
            continue;
        };
        done += 1;
        let cov = pi_covariance(&w, 0, 1, n_features)?;
        report.min_covariance = report.min_covariance.min(cov);
        report.max_covariance = report.max_covariance.max(cov);
        if cov >= 0.0 {
            report.violations.push(CovarianceViolation {
                weights: w.weights().to_vec(),
                covariance: cov,
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn plain(a: &[f64]) -> DirichletWeights {
        DirichletWeights::new(a.to_vec(), WeightScaling::Plain).unwrap()
    }

    #[test]
    fn three_feature_listing_order() {
        let cat = enumerate_masks(3).unwrap();
        let rendered: Vec<String> = cat.masks().iter().map(|m| m.render(3)).collect();
        assert_eq!(rendered, ["100", "010", "001", "110", "101", "011", "111"]);
    }

    #[test]
    fn single_feature_catalog() {
        let cat = enumerate_masks(1).unwrap();
        assert_eq!(cat.len(), 1);
        assert_eq!(cat.get(0).render(1), "1");
    }

    #[test]
    fn four_feature_block_sizes() {
        let cat = enumerate_masks(4).unwrap();
        assert_eq!(cat.len(), 15);
        let sizes: Vec<usize> = (1..=4).map(|k| cat.block(k).len()).collect();
        assert_eq!(sizes, [4, 6, 4, 1]);
        for k in 1..=4 {
            for c in cat.block(k) {
                assert_eq!(cat.get(c).cardinality(), k);
            }
        }
        for j in 0..4 {
            assert_eq!(cat.get(j), FeatureMask::singleton(j));
        }
    }

    #[test]
    fn feature_count_bounds() {
        assert!(enumerate_masks(0).is_err());
        assert!(enumerate_masks(17).is_err());
        assert_eq!(enumerate_masks(16).unwrap().len(), 65_535);
    }

    #[test]
    fn catalog_is_a_bijection() {
        for n in 1..=10 {
            let cat = enumerate_masks(n).unwrap();
            let mut seen = vec![false; 1 << n];
            for m in cat.masks() {
                assert!(!seen[m.bits() as usize]);
                seen[m.bits() as usize] = true;
            }
            assert!(!seen[0]);
            assert!(seen[1..].iter().all(|&s| s));
            for (c, m) in cat.masks().iter().enumerate() {
                assert_eq!(cat.index_of(*m), c);
            }
        }
    }

    #[test]
    fn plain_concentration() {
        let cat = enumerate_masks(3).unwrap();
        let conc = build_concentration(&plain(&[3.0, 2.0, 1.0]), &cat).unwrap();
        assert_eq!(conc, [3.0, 3.0, 3.0, 2.0, 2.0, 2.0, 1.0]);
        let cat2 = enumerate_masks(2).unwrap();
        let conc2 = build_concentration(&plain(&[2.0, 1.0]), &cat2).unwrap();
        assert_eq!(conc2, [2.0, 2.0, 1.0]);
    }

    #[test]
    fn binomial_scaled_concentration() {
        let cat = enumerate_masks(3).unwrap();
        let w = DirichletWeights::new(vec![3.0, 2.0, 1.0], WeightScaling::BinomialScaled).unwrap();
        let conc = build_concentration(&w, &cat).unwrap();
        let want = [1.0, 1.0, 1.0, 2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 1.0];
        for (g, w) in conc.iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
    }

    #[test]
    fn ordering_violations_rejected() {
        assert!(DirichletWeights::new(vec![1.0, 2.0], WeightScaling::Plain).is_err());
        assert!(DirichletWeights::new(vec![2.0, 2.0], WeightScaling::Plain).is_err());
        assert!(DirichletWeights::new(vec![2.0, 0.0], WeightScaling::Plain).is_err());
        // the order applies to the weights, not the per-mask concentrations
        assert!(DirichletWeights::new(vec![4.0, 3.0, 2.0, 1.0], WeightScaling::BinomialScaled).is_ok());
        assert!(DirichletWeights::new(vec![4.0, 5.0, 3.0, 0.5], WeightScaling::BinomialScaled).is_err());
    }

    #[test]
    fn three_feature_mapping_formulas() {
        let cat = enumerate_masks(3).unwrap();
        let q = [0.05, 0.1, 0.15, 0.2, 0.12, 0.18, 0.2];
        let pi = q_to_pi(&CombinationProbs::new(q.to_vec()).unwrap(), &cat).unwrap();
        let p = pi.as_slice();
        assert!((p[0] - (q[0] + q[3] + q[4] + q[6])).abs() < 1e-15);
        assert!((p[1] - (q[1] + q[3] + q[5] + q[6])).abs() < 1e-15);
        assert!((p[2] - (q[2] + q[4] + q[5] + q[6])).abs() < 1e-15);
    }

    #[test]
    fn uniform_q_gives_four_sevenths() {
        let cat = enumerate_masks(3).unwrap();
        let pi = q_to_pi(&CombinationProbs::new(vec![1.0 / 7.0; 7]).unwrap(), &cat).unwrap();
        for p in pi.as_slice() {
            assert!((p - 4.0 / 7.0).abs() < 1e-15);
        }
    }

    #[test]
    fn mass_on_first_singleton() {
        let cat = enumerate_masks(2).unwrap();
        let pi = q_to_pi(&CombinationProbs::new(vec![1.0, 0.0, 0.0]).unwrap(), &cat).unwrap();
        assert_eq!(pi.as_slice(), [1.0, 0.0]);
    }

    #[test]
    fn each_feature_in_half_the_subsets() {
        for n in 1..=8 {
            let cat = enumerate_masks(n).unwrap();
            for j in 0..n {
                let count = cat.masks().iter().filter(|m| m.contains(j)).count();
                assert_eq!(count, 1 << (n - 1));
            }
        }
    }

    fn closed_form_j2(a: &[f64]) -> f64 {
        let at = 2.0 * a[0] + a[1];
        -a[0] * a[0] / (at * at * (at + 1.0))
    }

    fn closed_form_j3(a: &[f64]) -> f64 {
        let at = 3.0 * a[0] + 3.0 * a[1] + a[2];
        let c = 1.0 / (at * at * (at + 1.0));
        -c * (a[0] * a[0] + a[1] * a[1] + a[0] * (a[1] - a[2]))
    }

    fn closed_form_j4(a: &[f64]) -> f64 {
        let at = 4.0 * a[0] + 6.0 * a[1] + 4.0 * a[2] + a[3];
        let c = 1.0 / (at * at * (at + 1.0));
        -c * (a[0] * a[0] + 3.0 * a[1] * a[1] + a[2] * a[2] + 2.0 * a[0] * (a[1] - a[2]) + a[1] * (2.0 * a[2] - a[3])
            - 2.0 * a[0] * a[3])
    }

    #[test]
    fn covariance_reference_values() {
        let got = pi_covariance(&plain(&[2.0, 1.0]), 0, 1, 2).unwrap();
        assert!((got + 4.0 / 150.0).abs() < 1e-15);
        let a3 = [3.0, 2.0, 1.0];
        let got3 = pi_covariance(&plain(&a3), 0, 2, 3).unwrap();
        // a_t = 16, C = 1/(256 * 17)
        let want3 = -(9.0 + 4.0 + 3.0) / (256.0 * 17.0);
        assert!((got3 - want3).abs() < 1e-15);
        assert!((got3 - closed_form_j3(&a3)).abs() < 1e-15);
    }

    #[test]
    fn covariance_rejects_same_index() {
        assert!(matches!(
            pi_covariance(&plain(&[2.0, 1.0]), 1, 1, 2),
            Err(Error::Domain(_))
        ));
        assert!(pi_covariance(&plain(&[2.0, 1.0]), 0, 2, 2).is_err());
    }

    #[test]
    fn single_feature_variance_is_zero() {
        assert_eq!(pi_variance(&plain(&[5.0]), 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn binomial_scaled_rejected_by_closed_forms() {
        let w = DirichletWeights::new(vec![3.0, 2.0, 1.0], WeightScaling::BinomialScaled).unwrap();
        assert!(pi_covariance(&w, 0, 1, 3).is_err());
    }

    #[test]
    fn singleton_block_dominates_for_steep_weights() {
        for n in 2..=8 {
            let a: Vec<f64> = (0..n).map(|k| 10f64.powi(-k)).collect();
            let means = block_means(&plain(&a));
            for m in &means[1..] {
                assert!(means[0] > *m, "J={n}: {means:?}");
            }
        }
    }

    #[test]
    fn scan_reports_no_violations_for_small_j() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 2..=4 {
            let r = negativity_scan(n, 1000, &mut rng).unwrap();
            assert_eq!(r.trials, 1000);
            assert!(r.violations.is_empty(), "{r}");
            assert!(r.max_covariance < 0.0);
        }
    }

    fn ordered_weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..20.0, n).prop_filter_map("ties", |mut v| {
            v.sort_by(|a, b| b.total_cmp(a));
            v.windows(2).all(|w| w[0] > w[1]).then_some(v)
        })
    }

    fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, n).prop_map(|v| {
            let s: f64 = v.iter().sum::<f64>() + 1e-300;
            v.iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn general_form_reduces_to_specializations(
            a2 in ordered_weights(2), a3 in ordered_weights(3), a4 in ordered_weights(4)
        ) {
            let c2 = pi_covariance(&plain(&a2), 0, 1, 2).unwrap();
            prop_assert!((c2 - closed_form_j2(&a2)).abs() <= 1e-12 * c2.abs().max(1e-300));
            let c3 = pi_covariance(&plain(&a3), 1, 2, 3).unwrap();
            prop_assert!((c3 - closed_form_j3(&a3)).abs() <= 1e-12 * c3.abs());
            let c4 = pi_covariance(&plain(&a4), 0, 3, 4).unwrap();
            prop_assert!((c4 - closed_form_j4(&a4)).abs() <= 1e-11 * c4.abs());
            prop_assert!(c2 < 0.0 && c3 < 0.0 && c4 < 0.0);
        }

        #[test]
        fn counting_identity(n in 1usize..=8, seed in any::<u64>()) {
            let cat = enumerate_masks(n).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw: Vec<f64> = (0..cat.len()).map(|_| random::uniform(&mut rng)).collect();
            let s: f64 = raw.iter().sum();
            let q = CombinationProbs::new(raw.iter().map(|x| x / s).collect()).unwrap();
            let pi = q_to_pi(&q, &cat).unwrap();
            let lhs: f64 = pi.as_slice().iter().sum();
            let rhs: f64 = cat.masks().iter().zip(q.as_slice())
                .map(|(m, qc)| m.cardinality() as f64 * qc).sum();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn pi_within_unit_interval(q in simplex(7)) {
            let s: f64 = q.iter().sum();
            prop_assume!((s - 1.0).abs() < 1e-12);
            let cat = enumerate_masks(3).unwrap();
            let pi = q_to_pi(&CombinationProbs::new(q).unwrap(), &cat).unwrap();
            prop_assert!(pi.as_slice().iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }
}
