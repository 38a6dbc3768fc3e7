//! Marginal and conditional (in)dependence statistics.
//!
//! Gaussian family: partial correlation with the Fisher z transform, and
//! Gaussian mutual information. Kernel family: HSIC with an RBF kernel,
//! calibrated by gamma moment matching or by permutation.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};

/// Correlations are clamped to this magnitude before `atanh`.
pub const RHO_CLAMP: f64 = 0.999_999;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Effective sample size the test used.
    pub dof_or_n: usize,
}

/// RBF length scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub bandwidth: f64,
}

impl KernelParams {
    pub fn new(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::Config(format!("bandwidth must be positive, got {bandwidth}")));
        }
        Ok(Self { bandwidth })
    }

    pub fn kernel(&self, a: f64, b: f64) -> f64 {
        let d = (a - b) / self.bandwidth;
        (-0.5 * d * d).exp()
    }

    pub fn gram(&self, x: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = 1.0;
            for j in i + 1..n {
                let v = self.kernel(x[i], x[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }
}

/// ρ(i, j | S) from the inverse of the correlation submatrix over `{i, j} ∪ S`,
/// clamped to ±[`RHO_CLAMP`].
pub fn partial_correlation(corr: &DMatrix<f64>, i: usize, j: usize, s: &[usize]) -> Result<f64> {
    assert!(i != j && !s.contains(&i) && !s.contains(&j), "invalid partial correlation query");
    let r = if s.is_empty() {
        corr[(i, j)]
    } else {
        let idx: Vec<usize> = [i, j].into_iter().chain(s.iter().copied()).collect();
        let k = idx.len();
        let sub = DMatrix::from_fn(k, k, |a, b| corr[(idx[a], idx[b])]);
        let prec = sub.cholesky().map(|c| c.inverse()).ok_or(Error::SingularSubmatrix)?;
        let denom = (prec[(0, 0)] * prec[(1, 1)]).sqrt();
        if !(denom.is_finite() && denom > 0.0) {
            return Err(Error::SingularSubmatrix);
        }
        -prec[(0, 1)] / denom
    };
    Ok(r.clamp(-RHO_CLAMP, RHO_CLAMP))
}

/// Standard normal upper tail `1 - Φ(z)`.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Fisher z test of zero (partial) correlation given a conditioning set of size `s`.
pub fn fisher_z_test(rho: f64, n: usize, s: usize) -> Result<TestResult> {
    let dof = n as i64 - s as i64 - 3;
    if dof < 1 {
        return Err(Error::TooFewSamples(format!("Fisher z needs n - s - 3 >= 1 (n={n}, s={s})")));
    }
    let rho = rho.clamp(-RHO_CLAMP, RHO_CLAMP);
    let z = ((dof as f64).sqrt() * rho.abs().atanh()).copysign(rho);
    let p = (2.0 * normal_sf(z.abs())).clamp(0.0, 1.0);
    Ok(TestResult { statistic: z, p_value: p, dof_or_n: dof as usize })
}

/// Mutual information of a bivariate Gaussian with correlation `rho`, in nats.
pub fn gaussian_mi(rho: f64) -> Result<f64> {
    if !(rho.abs() < 1.0) {
        return Err(Error::DegenerateCorrelation(rho));
    }
    Ok(-0.5 * (1.0 - rho * rho).ln())
}

/// Sample size above which the bandwidth heuristic works on a subsample.
pub const MEDIAN_SUBSAMPLE: usize = 1000;
const MEDIAN_SUBSAMPLE_SEED: u64 = 0x6d65_6469_616e;

/// Median of pairwise absolute differences. Samples larger than
/// [`MEDIAN_SUBSAMPLE`] use a fixed-seed subsample of that size. If more than
/// half the distances are zero, the median of the nonzero ones is used.
pub fn median_heuristic_bandwidth(x: &[f64]) -> Result<KernelParams> {
    if x.len() < 2 {
        return Err(Error::TooFewSamples("bandwidth heuristic needs at least 2 points".into()));
    }
    let sample: Vec<f64> = if x.len() > MEDIAN_SUBSAMPLE {
        let mut rng = ChaCha8Rng::seed_from_u64(MEDIAN_SUBSAMPLE_SEED);
        rand::seq::index::sample(&mut rng, x.len(), MEDIAN_SUBSAMPLE).into_iter().map(|i| x[i]).collect()
    } else {
        x.to_vec()
    };
    let mut d = Vec::with_capacity(sample.len() * (sample.len() - 1) / 2);
    for (a, &xa) in sample.iter().enumerate() {
        for &xb in &sample[a + 1..] {
            d.push((xa - xb).abs());
        }
    }
    let mut med = median(&mut d);
    if med == 0.0 {
        let mut nz: Vec<f64> = d.into_iter().filter(|&v| v > 0.0).collect();
        if nz.is_empty() {
            return Err(Error::DegenerateSample);
        }
        med = median(&mut nz);
    }
    KernelParams::new(med)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_unstable_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HsicMode {
    /// Gamma approximation of the null distribution by its first two moments.
    Gamma,
    Permutation { count: usize, seed: u64 },
}

pub const HSIC_MIN_SAMPLES: usize = 20;

/// Doubly centered Gram matrix `HKH`.
fn center(k: &DMatrix<f64>) -> DMatrix<f64> {
    let n = k.nrows();
    let row_means: Vec<f64> = (0..n).map(|i| k.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    // K is symmetric, so column means equal row means
    DMatrix::from_fn(n, n, |i, j| k[(i, j)] - row_means[i] - row_means[j] + grand)
}

fn frobenius_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Biased HSIC estimate `(1/n²) tr(K_c L_c)` without a p-value.
pub fn hsic_statistic(x: &[f64], y: &[f64], kx: KernelParams, ky: KernelParams) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < HSIC_MIN_SAMPLES {
        return Err(Error::TooFewSamples(format!("HSIC needs at least {HSIC_MIN_SAMPLES} samples, got {n}")));
    }
    // tr(HKH L) = tr(K_c L), so only one Gram needs centering
    let kc = center(&kx.gram(x));
    let l = ky.gram(y);
    let nf = n as f64;
    Ok(frobenius_dot(&kc, &l) / (nf * nf))
}

/// Biased HSIC estimate `(1/n²) tr(K_c L_c)` with its p-value.
pub fn hsic_test(x: &[f64], y: &[f64], kx: KernelParams, ky: KernelParams, mode: HsicMode) -> Result<TestResult> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < HSIC_MIN_SAMPLES {
        return Err(Error::TooFewSamples(format!("HSIC needs at least {HSIC_MIN_SAMPLES} samples, got {n}")));
    }
    let k = kx.gram(x);
    let l = ky.gram(y);
    let kc = center(&k);
    let lc = center(&l);
    let nf = n as f64;
    let stat = frobenius_dot(&kc, &lc) / (nf * nf);

    let p_value = match mode {
        HsicMode::Gamma => gamma_p_value(&k, &l, &kc, &lc, stat),
        HsicMode::Permutation { count, seed } => permutation_p_value(&kc, &lc, stat, count, seed),
    };
    Ok(TestResult { statistic: stat, p_value, dof_or_n: n })
}

/// Null moments of `n·HSIC_b` matched to a gamma law.
fn gamma_p_value(k: &DMatrix<f64>, l: &DMatrix<f64>, kc: &DMatrix<f64>, lc: &DMatrix<f64>, stat: f64) -> f64 {
    let n = k.nrows();
    let nf = n as f64;
    let test_stat = nf * stat;

    let mut var = 0.0;
    for j in 0..n {
        for i in 0..n {
            if i != j {
                let v = kc[(i, j)] * lc[(i, j)] / 6.0;
                var += v * v;
            }
        }
    }
    var /= nf * (nf - 1.0);
    var *= 72.0 * (nf - 4.0) * (nf - 5.0) / (nf * (nf - 1.0) * (nf - 2.0) * (nf - 3.0));

    let off_mean = |m: &DMatrix<f64>| (m.sum() - m.trace()) / (nf * (nf - 1.0));
    let (mu_x, mu_y) = (off_mean(k), off_mean(l));
    let mean = (1.0 + mu_x * mu_y - mu_x - mu_y) / nf;

    if !(var > 0.0 && mean > 0.0) || !var.is_finite() {
        return 1.0;
    }
    let shape = mean * mean / var;
    let scale = var * nf / mean;
    if test_stat <= 0.0 {
        return 1.0;
    }
    gamma_ur(shape, test_stat / scale).clamp(0.0, 1.0)
}

fn permutation_p_value(kc: &DMatrix<f64>, lc: &DMatrix<f64>, stat: f64, count: usize, seed: u64) -> f64 {
    let n = kc.nrows();
    let nf = n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut exceed = 0usize;
    // centering commutes with permutation, so permute the centered Gram directly
    for _ in 0..count {
        perm.shuffle(&mut rng);
        let mut s = 0.0;
        for j in 0..n {
            let pj = perm[j];
            for i in 0..n {
                s += kc[(i, j)] * lc[(perm[i], pj)];
            }
        }
        if s / (nf * nf) >= stat - 1e-15 {
            exceed += 1;
        }
    }
    (1 + exceed) as f64 / (1 + count) as f64
}

/// Benjamini–Hochberg adjusted p-values, returned in input order.
pub fn bh_adjust(p_values: &[f64]) -> Result<Vec<f64>> {
    check_unit(p_values)?;
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (0..m).rev() {
        let idx = order[rank];
        let q = (m as f64 * p_values[idx] / (rank + 1) as f64).min(1.0);
        running = running.min(q);
        // m·p/k ≥ p holds exactly; rounding in the product may break it
        out[idx] = running.max(p_values[idx]);
    }
    Ok(out)
}

pub fn bonferroni_adjust(p_values: &[f64]) -> Result<Vec<f64>> {
    check_unit(p_values)?;
    let m = p_values.len() as f64;
    Ok(p_values.iter().map(|p| (p * m).min(1.0)).collect())
}

fn check_unit(p: &[f64]) -> Result<()> {
    match p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(&bad) => Err(Error::OutOfRange(bad)),
        None => Ok(()),
    }
}
