//! Random variate generation and log densities used by the samplers.
//!
//! All samplers take an explicit generator; nothing here owns global state.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};

use crate::error::{Error, Result};

pub use statrs::function::gamma::ln_gamma;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

/// Uniform on the open interval (0, 1).
pub fn open_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u = rng.random::<f64>();
        if u > 0.0 {
            return u;
        }
    }
}

pub fn exponential<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    let e: f64 = Exp1.sample(rng);
    e / rate
}

/// Gamma variate with the given shape and *rate*.
pub fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    let g = Gamma::new(shape, 1.0 / rate).expect("gamma parameters must be positive");
    g.sample(rng)
}

/// Logarithm of a Gamma(shape, 1) variate, accurate for tiny shapes where the
/// variate itself underflows.
pub fn log_gamma_variate<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    if shape >= 1.0 {
        return gamma(rng, shape, 1.0).ln();
    }
    // G(a) = G(a + 1) * U^(1/a)
    let g = gamma(rng, shape + 1.0, 1.0);
    g.ln() + open_uniform(rng).ln() / shape
}

pub fn beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    let x = log_gamma_variate(rng, a);
    let y = log_gamma_variate(rng, b);
    let m = x.max(y);
    let ex = (x - m).exp();
    let ey = (y - m).exp();
    ex / (ex + ey)
}

pub fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    rng.random::<f64>() < p
}

/// |N(0, sd^2)|, i.e. the N+(0, sd^2) slab.
pub fn half_normal<R: Rng + ?Sized>(rng: &mut R, sd: f64) -> f64 {
    (sd * standard_normal(rng)).abs()
}

pub fn half_cauchy<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    let u = open_uniform(rng);
    scale * (std::f64::consts::FRAC_PI_2 * u).tan()
}

/// Log of a Dirichlet draw, computed in log space so that components with
/// tiny concentration do not underflow to an exact zero.
pub fn log_dirichlet<R: Rng + ?Sized>(rng: &mut R, concentration: &[f64]) -> Vec<f64> {
    let mut logs: Vec<f64> = concentration.iter().map(|&a| log_gamma_variate(rng, a)).collect();
    let norm = super::log_sum_exp(&logs);
    for l in &mut logs {
        *l -= norm;
    }
    logs
}

/// Index drawn with probabilities proportional to `exp(log_weights)`.
pub fn categorical_log<R: Rng + ?Sized>(rng: &mut R, log_weights: &[f64]) -> usize {
    let m = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_weights.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            return i;
        }
        u -= wi;
    }
    w.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

/// Draw from N(precision^{-1} rhs, precision^{-1}) given the precision matrix.
pub fn mvn_from_precision<R: Rng + ?Sized>(
    rng: &mut R,
    precision: &DMatrix<f64>,
    rhs: &DVector<f64>,
) -> Result<DVector<f64>> {
    let chol = precision
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("conditional precision".into()))?;
    let mean = chol.solve(rhs);
    let z = DVector::from_fn(rhs.len(), |_, _| standard_normal(rng));
    // precision = L L^T, so L^{-T} z has covariance precision^{-1}
    let noise = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::NotPositiveDefinite("triangular solve".into()))?;
    Ok(mean + noise)
}

pub fn mvn<R: Rng + ?Sized>(rng: &mut R, cov: &DMatrix<f64>) -> Result<DVector<f64>> {
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("covariance".into()))?;
    let z = DVector::from_fn(cov.nrows(), |_, _| standard_normal(rng));
    Ok(chol.l() * z)
}

/// Wishart(df, scale) by the Bartlett decomposition.
pub fn wishart<R: Rng + ?Sized>(rng: &mut R, df: f64, scale: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = scale.nrows();
    if df <= p as f64 - 1.0 {
        return Err(Error::Config(format!(
            "Wishart degrees of freedom {df} must exceed dimension - 1 = {}",
            p - 1
        )));
    }
    let l = scale
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("Wishart scale".into()))?
        .l();
    let mut a = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        let chi2 = 2.0 * gamma(rng, 0.5 * (df - i as f64), 1.0);
        a[(i, i)] = chi2.sqrt();
        for j in 0..i {
            a[(i, j)] = standard_normal(rng);
        }
    }
    let la = l * a;
    Ok(&la * la.transpose())
}

/// Inverse-Wishart(df, psi): the inverse of a Wishart(df, psi^{-1}) draw.
pub fn inverse_wishart<R: Rng + ?Sized>(rng: &mut R, df: f64, psi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let psi_inv = psi
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NotPositiveDefinite("inverse-Wishart scale".into()))?;
    let w = wishart(rng, df, &symmetrize(psi_inv))?;
    let inv = w
        .try_inverse()
        .ok_or_else(|| Error::NotPositiveDefinite("Wishart draw".into()))?;
    Ok(symmetrize(inv))
}

pub fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

pub fn ln_normal(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * LN_2PI - sd.ln() - 0.5 * z * z
}

/// Log density of the N+(0, sd^2) slab at x >= 0.
pub fn ln_half_normal(x: f64, sd: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    std::f64::consts::LN_2 + ln_normal(x, 0.0, sd)
}

pub fn ln_half_cauchy(x: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    (2.0 / std::f64::consts::PI).ln() - (1.0 + x * x).ln()
}

/// Log Dirichlet density evaluated from the log of the point.
pub fn ln_dirichlet_from_log(log_q: &[f64], concentration: &[f64]) -> f64 {
    let total: f64 = concentration.iter().sum();
    let mut acc = ln_gamma(total);
    for (&a, &lq) in concentration.iter().zip(log_q) {
        acc += (a - 1.0) * lq - ln_gamma(a);
    }
    acc
}

/// Multivariate normal log density with zero mean, via Cholesky.
pub fn ln_mvn_zero_mean(x: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("covariance".into()))?;
    let l = chol.l();
    let z = l
        .solve_lower_triangular(x)
        .ok_or_else(|| Error::NotPositiveDefinite("triangular solve".into()))?;
    let log_det: f64 = (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
    Ok(-0.5 * (x.len() as f64 * LN_2PI + log_det + z.norm_squared()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn gamma_moments() {
        let mut r = rng();
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| gamma(&mut r, 3.0, 2.0)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        assert!((mean - 1.5).abs() < 0.01, "{mean}");
    }

    #[test]
    fn log_gamma_small_shape_mean() {
        let mut r = rng();
        let n = 200_000;
        let m: f64 = (0..n).map(|_| log_gamma_variate(&mut r, 0.3).exp()).sum::<f64>() / n as f64;
        assert!((m - 0.3).abs() < 0.01, "{m}");
    }

    #[test]
    fn beta_mean() {
        let mut r = rng();
        let n = 200_000;
        let m: f64 = (0..n).map(|_| beta(&mut r, 1.0, 10.0)).sum::<f64>() / n as f64;
        assert!((m - 1.0 / 11.0).abs() < 0.003, "{m}");
    }

    #[test]
    fn half_cauchy_median_is_scale() {
        let mut r = rng();
        let mut xs: Vec<f64> = (0..100_001).map(|_| half_cauchy(&mut r, 1.0)).collect();
        xs.sort_by(f64::total_cmp);
        assert!((xs[50_000] - 1.0).abs() < 0.02);
    }

    #[test]
    fn wishart_mean_is_df_times_scale() {
        let mut r = rng();
        let scale = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
        let n = 40_000;
        let mut acc = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..n {
            acc += wishart(&mut r, 5.0, &scale).unwrap();
        }
        acc /= n as f64;
        let want = &scale * 5.0;
        assert!((acc - want).abs().max() < 0.05);
    }

    #[test]
    fn inverse_wishart_mean() {
        let mut r = rng();
        let psi = DMatrix::<f64>::identity(2, 2);
        let n = 60_000;
        let mut acc = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..n {
            acc += inverse_wishart(&mut r, 6.0, &psi).unwrap();
        }
        acc /= n as f64;
        // E = psi / (df - p - 1) = I / 3
        assert!((acc[(0, 0)] - 1.0 / 3.0).abs() < 0.01);
        assert!(acc[(0, 1)].abs() < 0.01);
    }

    #[test]
    fn mvn_from_precision_covariance() {
        let mut r = rng();
        let prec = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let rhs = DVector::from_vec(vec![1.0, -1.0]);
        let cov = prec.clone().try_inverse().unwrap();
        let mean = &cov * &rhs;
        let n = 100_000;
        let mut s1 = DVector::<f64>::zeros(2);
        let mut s2 = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..n {
            let x = mvn_from_precision(&mut r, &prec, &rhs).unwrap();
            s1 += &x;
            s2 += &x * x.transpose();
        }
        let m = s1 / n as f64;
        let c = s2 / n as f64 - &m * m.transpose();
        assert!((m - mean).abs().max() < 0.01);
        assert!((c - cov).abs().max() < 0.01);
    }

    #[test]
    fn dirichlet_log_space_normalized() {
        let mut r = rng();
        let lq = log_dirichlet(&mut r, &[1e-3, 2.0, 0.5]);
        let s: f64 = lq.iter().map(|l| l.exp()).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mvn_density_identity() {
        let x = DVector::from_vec(vec![0.0, 0.0, 0.0]);
        let got = ln_mvn_zero_mean(&x, &DMatrix::identity(3, 3)).unwrap();
        assert!((got + 1.5 * LN_2PI).abs() < 1e-12);
    }
}
