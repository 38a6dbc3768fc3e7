//! Phase-one recovery of the undirected dependence graph.
//!
//! Four routes: thresholded pairwise tests, network deconvolution of the
//! correlation matrix, graphical lasso, and IAMB Markov blankets.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::MixedGraph;
use crate::indep::{bh_adjust, bonferroni_adjust, fisher_z_test, gaussian_mi, partial_correlation, RHO_CLAMP};
use crate::seed::derive_indexed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairTest {
    PearsonFisherZ,
    /// Gaussian mutual information calibrated by permuting one column.
    GaussianMiPerm { permutations: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    None,
    #[default]
    Bh,
    Bonferroni,
}

fn graph_for(d: &Dataset) -> MixedGraph {
    MixedGraph::with_names(d.names().to_vec()).expect("dataset names are valid")
}

fn upper_pairs(p: usize) -> Vec<(usize, usize)> {
    (0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j))).collect()
}

/// Undirected edge for every pair whose (corrected) marginal test p-value is ≤ `alpha`.
pub fn dependency_graph(d: &Dataset, test: PairTest, alpha: f64, correction: Correction) -> Result<MixedGraph> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let p_values = pairwise_p_values(d, test)?;
    let adjusted = match correction {
        Correction::None => p_values,
        Correction::Bh => bh_adjust(&p_values)?,
        Correction::Bonferroni => bonferroni_adjust(&p_values)?,
    };
    let mut g = graph_for(d);
    for (&(i, j), q) in upper_pairs(d.p()).iter().zip(adjusted) {
        if q <= alpha {
            g.add_undirected(i, j);
        }
    }
    Ok(g)
}

/// Marginal p-values for all pairs `i < j`, in row-major order.
pub fn pairwise_p_values(d: &Dataset, test: PairTest) -> Result<Vec<f64>> {
    let n = d.n();
    let pairs = upper_pairs(d.p());
    match test {
        PairTest::PearsonFisherZ => {
            let corr = d.summary_stats()?.correlation;
            pairs
                .par_iter()
                .map(|&(i, j)| fisher_z_test(corr[(i, j)], n, 0).map(|r| r.p_value))
                .collect()
        }
        PairTest::GaussianMiPerm { permutations, seed } => {
            let z = d.standardize()?;
            Ok(pairs
                .par_iter()
                .enumerate()
                .map(|(k, &(i, j))| {
                    let stream = derive_indexed(seed, k as u64);
                    mi_permutation_p(z.column(i), z.column(j), permutations, stream)
                })
                .collect())
        }
    }
}

fn mi_of(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let r = (x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / n).clamp(-RHO_CLAMP, RHO_CLAMP);
    gaussian_mi(r).expect("clamped correlation")
}

fn mi_permutation_p(x: &[f64], y: &[f64], permutations: usize, seed: u64) -> f64 {
    let observed = mi_of(x, y);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = y.to_vec();
    let mut exceed = 0usize;
    for _ in 0..permutations {
        shuffled.shuffle(&mut rng);
        if mi_of(x, &shuffled) >= observed {
            exceed += 1;
        }
    }
    (1 + exceed) as f64 / (1 + permutations) as f64
}

/// Symmetric weight matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedAdjacency(DMatrix<f64>);

impl WeightedAdjacency {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidGraph("adjacency must be square".into()));
        }
        let p = m.nrows();
        for i in 0..p {
            if m[(i, i)] != 0.0 {
                return Err(Error::InvalidGraph("adjacency diagonal must be zero".into()));
            }
            for j in i + 1..p {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 {
                    return Err(Error::InvalidGraph("adjacency must be symmetric".into()));
                }
            }
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

/// Forward transitive-closure map `G ↦ G (I − G)⁻¹`.
pub fn transitive_closure(direct: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = direct.nrows();
    let inv = (DMatrix::identity(p, p) - direct).try_inverse().ok_or(Error::SolveFailure)?;
    Ok(direct * inv)
}

/// Spectral inverse of [`transitive_closure`] after rescaling `obs` so that its
/// largest-magnitude eigenvalue has magnitude `beta`. The diagonal is kept.
///
/// `beta` must be positive and every rescaled eigenvalue must stay above −1;
/// any `beta` in (0, 1) satisfies the latter.
pub fn spectral_deconvolution(obs: &DMatrix<f64>, beta: f64) -> Result<DMatrix<f64>> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::BetaOutOfRange(beta));
    }
    if !obs.is_square() {
        return Err(Error::InvalidGraph("deconvolution input must be square".into()));
    }
    let p = obs.nrows();
    let asym = (obs - obs.transpose()).amax();
    if asym > 1e-10 * obs.amax().max(1.0) {
        return Err(Error::InvalidGraph("deconvolution input must be symmetric".into()));
    }
    let sym = (obs + obs.transpose()) * 0.5;
    let eig = sym.try_symmetric_eigen(1e-15, 10_000).ok_or(Error::EigenFailure)?;
    let radius = eig.eigenvalues.amax();
    if radius == 0.0 {
        return Ok(DMatrix::zeros(p, p));
    }
    let scale = beta / radius;
    let mapped = eig.eigenvalues.map(|l| {
        let l = l * scale;
        l / (1.0 + l)
    });
    if eig.eigenvalues.iter().any(|&l| l * scale <= -1.0 + 1e-12) {
        return Err(Error::BetaOutOfRange(beta));
    }
    let u = &eig.eigenvectors;
    Ok(u * DMatrix::from_diagonal(&mapped) * u.transpose())
}

/// [`spectral_deconvolution`] with the diagonal zeroed.
pub fn network_deconvolution(obs: &DMatrix<f64>, beta: f64) -> Result<WeightedAdjacency> {
    let mut m = spectral_deconvolution(obs, beta)?;
    m.fill_diagonal(0.0);
    // exact symmetry; the eigen product is symmetric only to rounding
    let m = (&m + m.transpose()) * 0.5;
    WeightedAdjacency::new(m)
}

pub const DEFAULT_BETA: f64 = 0.9;

/// Keeps the `⌈density · p(p−1)/2⌉` strongest pairs of the deconvolved
/// absolute correlation matrix. Ties go to the smaller index pair.
pub fn deconvolved_graph(d: &Dataset, beta: f64, density: f64) -> Result<MixedGraph> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::BetaOutOfRange(beta));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::Config(format!("density must lie in (0, 1], got {density}")));
    }
    let mut obs = d.summary_stats()?.correlation.abs();
    obs.fill_diagonal(0.0);
    let w = network_deconvolution(&obs, beta)?;
    let p = d.p();
    let mut pairs: Vec<((usize, usize), f64)> = upper_pairs(p).into_iter().map(|(i, j)| ((i, j), w.0[(i, j)])).collect();
    pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let keep = (density * pairs.len() as f64).ceil() as usize;
    let mut g = graph_for(d);
    for &((i, j), _) in pairs.iter().take(keep) {
        g.add_undirected(i, j);
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlassoConfig {
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl GlassoConfig {
    pub fn new(lambda: f64) -> Self {
        Self { lambda, tol: 1e-6, max_iter: 200 }
    }
}

#[derive(Debug, Clone)]
pub struct GlassoResult {
    pub precision: DMatrix<f64>,
    /// Working covariance estimate.
    pub covariance: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest violation of the stationarity conditions at `precision`.
    pub kkt_residual: f64,
    /// Penalized log-likelihood after each outer sweep.
    pub objective_trace: Vec<f64>,
}

const INNER_TOL: f64 = 1e-12;
const INNER_MAX_SWEEPS: usize = 10_000;

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Penalized Gaussian log-likelihood `log det Θ − tr(SΘ) − λ Σ_{i≠j} |Θ_ij|`.
pub fn glasso_objective(cov: &DMatrix<f64>, theta: &DMatrix<f64>, lambda: f64) -> f64 {
    let Some(chol) = theta.clone().cholesky() else {
        return f64::NEG_INFINITY;
    };
    let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let p = theta.nrows();
    let mut l1 = 0.0;
    for i in 0..p {
        for j in 0..p {
            if i != j {
                l1 += theta[(i, j)].abs();
            }
        }
    }
    logdet - (cov * theta).trace() - lambda * l1
}

/// Sparse inverse covariance by block coordinate descent over columns of the
/// working covariance `W`, each column solved as a lasso by coordinate descent.
/// The diagonal is not penalized.
///
/// Stops when the largest off-diagonal change of `W` in a sweep is below
/// `tol`. Hitting `max_iter` first returns the last iterate with
/// `converged = false`.
pub fn graphical_lasso(cov: &DMatrix<f64>, cfg: &GlassoConfig) -> Result<GlassoResult> {
    let GlassoConfig { lambda, tol, max_iter } = *cfg;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Config(format!("lambda must be nonnegative, got {lambda}")));
    }
    check_psd(cov)?;
    let p = cov.nrows();
    let mut w = cov.clone();
    let mut betas: Vec<Vec<f64>> = vec![vec![0.0; p.saturating_sub(1)]; p];
    let mut objective_trace = Vec::new();
    let mut converged = p <= 1;
    let mut iterations = 0;

    while !converged && iterations < max_iter {
        iterations += 1;
        let mut max_change = 0.0f64;
        for j in 0..p {
            let idx: Vec<usize> = (0..p).filter(|&k| k != j).collect();
            let beta = &mut betas[j];
            lasso_column(&w, cov, j, &idx, lambda, beta)?;
            for &ka in &idx {
                let w12: f64 = idx.iter().zip(beta.iter()).map(|(&kb, b)| w[(ka, kb)] * b).sum();
                max_change = max_change.max((w[(ka, j)] - w12).abs());
                w[(ka, j)] = w12;
                w[(j, ka)] = w12;
            }
        }
        let theta = precision_from(&w, &betas);
        objective_trace.push(glasso_objective(cov, &theta, lambda));
        converged = max_change < tol;
    }

    let precision = precision_from(&w, &betas);
    let kkt_residual = kkt_residual(cov, &precision, lambda);
    Ok(GlassoResult { precision, covariance: w, iterations, converged, kkt_residual, objective_trace })
}

fn check_psd(cov: &DMatrix<f64>) -> Result<()> {
    if !cov.is_square() || cov.nrows() == 0 {
        return Err(Error::NotPsd);
    }
    if (cov - cov.transpose()).amax() > 1e-10 * cov.amax().max(1.0) {
        return Err(Error::NotPsd);
    }
    if cov.diagonal().iter().any(|&v| !(v > 0.0)) {
        return Err(Error::NotPsd);
    }
    let eig = cov.clone().symmetric_eigenvalues();
    if eig.min() < -1e-10 * eig.amax().max(1.0) {
        return Err(Error::NotPsd);
    }
    Ok(())
}

/// Coordinate descent for `min ½ βᵀ W₁₁ β − s₁₂ᵀ β + λ‖β‖₁`, warm-started from `beta`.
fn lasso_column(w: &DMatrix<f64>, cov: &DMatrix<f64>, j: usize, idx: &[usize], lambda: f64, beta: &mut [f64]) -> Result<()> {
    let m = idx.len();
    for _ in 0..INNER_MAX_SWEEPS {
        let mut delta = 0.0f64;
        for a in 0..m {
            let ka = idx[a];
            let waa = w[(ka, ka)];
            if !(waa > 0.0) {
                return Err(Error::NotPsd);
            }
            let mut r = cov[(ka, j)];
            for b in 0..m {
                if b != a {
                    r -= w[(ka, idx[b])] * beta[b];
                }
            }
            let new = soft_threshold(r, lambda) / waa;
            delta = delta.max((new - beta[a]).abs());
            beta[a] = new;
        }
        if delta < INNER_TOL {
            break;
        }
    }
    Ok(())
}

fn precision_from(w: &DMatrix<f64>, betas: &[Vec<f64>]) -> DMatrix<f64> {
    let p = w.nrows();
    let mut theta = DMatrix::zeros(p, p);
    for j in 0..p {
        let idx: Vec<usize> = (0..p).filter(|&k| k != j).collect();
        let beta = &betas[j];
        let w12b: f64 = idx.iter().zip(beta).map(|(&k, b)| w[(k, j)] * b).sum();
        let tjj = 1.0 / (w[(j, j)] - w12b);
        theta[(j, j)] = tjj;
        for (&k, b) in idx.iter().zip(beta) {
            theta[(k, j)] = -b * tjj;
        }
    }
    // column-wise estimates agree up to convergence error; keep exact zeros exact
    let mut sym = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let (a, b) = (theta[(i, j)], theta[(j, i)]);
            sym[(i, j)] = if a == 0.0 || b == 0.0 { 0.0 } else { 0.5 * (a + b) };
        }
    }
    for i in 0..p {
        sym[(i, i)] = theta[(i, i)];
    }
    sym
}

/// Largest violation of `Θ⁻¹ − S = λ·sign(Θ)` on the support and
/// `|Θ⁻¹ − S| ≤ λ` off it, diagonal held to equality.
pub fn kkt_residual(cov: &DMatrix<f64>, theta: &DMatrix<f64>, lambda: f64) -> f64 {
    let Some(w) = theta.clone().try_inverse() else {
        return f64::INFINITY;
    };
    let p = cov.nrows();
    let mut worst = 0.0f64;
    for i in 0..p {
        for j in 0..p {
            let g = w[(i, j)] - cov[(i, j)];
            let v = if i == j {
                g.abs()
            } else if theta[(i, j)] != 0.0 {
                (g - lambda * theta[(i, j)].signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            };
            worst = worst.max(v);
        }
    }
    worst
}

/// Threshold for treating a precision entry as an edge.
pub const PRECISION_EPS: f64 = 1e-8;

/// Edge wherever the graphical-lasso precision of the correlation matrix is nonzero.
pub fn glasso_graph(d: &Dataset, cfg: &GlassoConfig) -> Result<(MixedGraph, GlassoResult)> {
    let corr = d.summary_stats()?.correlation;
    let res = graphical_lasso(&corr, cfg)?;
    let mut g = graph_for(d);
    for (i, j) in upper_pairs(d.p()) {
        if res.precision[(i, j)].abs() > PRECISION_EPS {
            g.add_undirected(i, j);
        }
    }
    Ok((g, res))
}

/// Markov blanket estimate of one variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Blanket {
    pub target: usize,
    /// Sorted ascending.
    pub members: Vec<usize>,
}

/// Conditional Gaussian test of `target ⟂ v | cond` on a correlation matrix.
fn ci_test(corr: &DMatrix<f64>, n: usize, target: usize, v: usize, cond: &[usize]) -> Result<crate::indep::TestResult> {
    let rho = partial_correlation(corr, target, v, cond)?;
    fisher_z_test(rho, n, cond.len())
}

/// IAMB: grow by the strongest conditionally dependent candidate, then shrink
/// members that test independent given the rest, until nothing changes.
pub fn iamb(d: &Dataset, target: usize, alpha: f64) -> Result<Blanket> {
    let corr = d.summary_stats()?.correlation;
    iamb_with_corr(&corr, d.n(), target, alpha)
}

pub fn iamb_with_corr(corr: &DMatrix<f64>, n: usize, target: usize, alpha: f64) -> Result<Blanket> {
    let p = corr.nrows();
    let mut mb: Vec<usize> = Vec::new();
    loop {
        let mut best: Option<(usize, f64, f64)> = None;
        for v in (0..p).filter(|&v| v != target && !mb.contains(&v)) {
            let r = ci_test(corr, n, target, v, &mb)?;
            if best.is_none_or(|(_, z, _)| r.statistic.abs() > z) {
                best = Some((v, r.statistic.abs(), r.p_value));
            }
        }
        match best {
            Some((v, _, pv)) if pv <= alpha => {
                mb.push(v);
                mb.sort_unstable();
            }
            _ => break,
        }
    }
    'shrink: loop {
        for k in 0..mb.len() {
            let v = mb[k];
            let rest: Vec<usize> = mb.iter().copied().filter(|&u| u != v).collect();
            if ci_test(corr, n, target, v, &rest)?.p_value > alpha {
                mb.remove(k);
                continue 'shrink;
            }
        }
        break;
    }
    Ok(Blanket { target, members: mb })
}

/// One blanket per variable, computed in parallel.
pub fn all_blankets(d: &Dataset, alpha: f64) -> Result<Vec<Blanket>> {
    let corr = d.summary_stats()?.correlation;
    (0..d.p()).into_par_iter().map(|t| iamb_with_corr(&corr, d.n(), t, alpha)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryRule {
    #[default]
    And,
    Or,
}

/// Symmetrizes blankets into an undirected graph. Blankets contain spouses, so
/// the result approximates the moral graph rather than the skeleton.
pub fn blankets_to_skeleton(names: &[String], blankets: &[Blanket], rule: SymmetryRule) -> Result<MixedGraph> {
    let p = names.len();
    if blankets.len() != p {
        return Err(Error::Config(format!("expected {p} blankets, got {}", blankets.len())));
    }
    let mut inb = vec![vec![false; p]; p];
    for b in blankets {
        for &m in &b.members {
            inb[b.target][m] = true;
        }
    }
    let mut g = MixedGraph::with_names(names.to_vec())?;
    for (i, j) in upper_pairs(p) {
        let keep = match rule {
            SymmetryRule::And => inb[i][j] && inb[j][i],
            SymmetryRule::Or => inb[i][j] || inb[j][i],
        };
        if keep {
            g.add_undirected(i, j);
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    }

    fn chain_data(seed: u64, n: usize) -> Dataset {
        chain_with(seed, n, 0.9, 0.5)
    }

    fn chain_with(seed: u64, n: usize, w: f64, noise: f64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = normals(&mut rng, n);
        let ey = normals(&mut rng, n);
        let ez = normals(&mut rng, n);
        let y: Vec<f64> = x.iter().zip(&ey).map(|(a, e)| w * a + noise * e).collect();
        let z: Vec<f64> = y.iter().zip(&ez).map(|(a, e)| w * a + noise * e).collect();
        Dataset::from_columns(vec![x, y, z]).unwrap()
    }

    fn collider_data(seed: u64, n: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = normals(&mut rng, n);
        let y = normals(&mut rng, n);
        let e = normals(&mut rng, n);
        let z: Vec<f64> = (0..n).map(|k| 0.7 * x[k] + 0.7 * y[k] + 0.5 * e[k]).collect();
        Dataset::from_columns(vec![x, y, z]).unwrap()
    }

    fn independent(seed: u64, n: usize, p: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dataset::from_columns((0..p).map(|_| normals(&mut rng, n)).collect()).unwrap()
    }

    fn random_spd(seed: u64, p: usize) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(p, p + 2, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
        &a * a.transpose() / (p + 2) as f64 + DMatrix::identity(p, p) * 0.1
    }

    #[test]
    fn identical_columns_are_dependent() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = normals(&mut rng, 50);
        let d = Dataset::from_columns(vec![x.clone(), x]).unwrap();
        for test in [PairTest::PearsonFisherZ, PairTest::GaussianMiPerm { permutations: 99, seed: 1 }] {
            let g = dependency_graph(&d, test, 0.05, Correction::None).unwrap();
            assert!(g.adjacent(0, 1));
        }
    }

    #[test]
    fn bonferroni_controls_false_edges() {
        let d = independent(3, 1000, 20);
        let g = dependency_graph(&d, PairTest::PearsonFisherZ, 0.05, Correction::Bonferroni).unwrap();
        assert!(g.edge_count() <= 2, "{}", g.edge_count());
        // family-wise error over seeds stays near alpha
        let with_edges = (0..40)
            .filter(|&s| {
                let d = independent(100 + s, 1000, 20);
                dependency_graph(&d, PairTest::PearsonFisherZ, 0.05, Correction::Bonferroni).unwrap().edge_count() > 0
            })
            .count();
        assert!(with_edges <= 6, "{with_edges}/40");
    }

    #[test]
    fn huge_alpha_gives_complete_graph() {
        let d = chain_data(1, 200);
        let g = dependency_graph(&d, PairTest::PearsonFisherZ, 0.999_999, Correction::None).unwrap();
        assert_eq!(g.edge_count(), 3);
    }

    #[test]
    fn mi_permutation_is_seed_deterministic() {
        let d = chain_data(2, 100);
        let t = PairTest::GaussianMiPerm { permutations: 50, seed: 9 };
        assert_eq!(pairwise_p_values(&d, t).unwrap(), pairwise_p_values(&d, t).unwrap());
    }

    #[test]
    fn dependency_graph_is_permutation_equivariant() {
        let d = collider_data(4, 300);
        let perm = [2usize, 0, 1];
        let inv = [1usize, 2, 0];
        let dp = d.select(&inv).unwrap();
        let g = dependency_graph(&d, PairTest::PearsonFisherZ, 0.05, Correction::Bh).unwrap();
        let gp = dependency_graph(&dp, PairTest::PearsonFisherZ, 0.05, Correction::Bh).unwrap();
        // column k of dp is column inv[k] of d, so node i of d is node perm[i] of dp
        assert_eq!(g.permuted(&perm), gp);
    }

    fn chain_direct() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[0.0, 0.5, 0.0, 0.5, 0.0, 0.5, 0.0, 0.5, 0.0])
    }

    #[test]
    fn deconvolution_of_zero_is_zero() {
        let z = DMatrix::zeros(4, 4);
        assert_eq!(network_deconvolution(&z, 0.9).unwrap().into_matrix(), z);
    }

    #[test]
    fn deconvolution_recovers_chain() {
        let g_dir = chain_direct();
        let g_obs = transitive_closure(&g_dir).unwrap();
        let beta = g_obs.clone().symmetric_eigenvalues().amax();
        let out = network_deconvolution(&g_obs, beta).unwrap().into_matrix();
        assert!((&out - &g_dir).amax() < 1e-8, "{out}");
        assert!(out[(0, 2)].abs() < 1e-8);
    }

    #[test]
    fn deconvolution_scalar_map() {
        // rank one with eigenvalue 0.5: output eigenvalue 0.5 / 1.5
        let v = nalgebra::DVector::from_vec(vec![0.6, 0.8]);
        let obs = &v * v.transpose() * 0.5;
        let raw = spectral_deconvolution(&obs, 0.5).unwrap();
        let expect = &v * v.transpose() / 3.0;
        assert!((&raw - &expect).amax() < 1e-12);
        let out = network_deconvolution(&obs, 0.5).unwrap();
        assert!((out.matrix()[(0, 1)] - 0.16).abs() < 1e-12);
    }

    #[test]
    fn deconvolution_rejects_bad_beta() {
        let obs = chain_direct();
        assert!(matches!(network_deconvolution(&obs, 0.0), Err(Error::BetaOutOfRange(_))));
        // symmetric spectrum ±r: scaling to 1 sends −r to −1
        assert!(matches!(network_deconvolution(&obs, 1.0), Err(Error::BetaOutOfRange(_))));
        let d = chain_data(0, 100);
        assert!(matches!(deconvolved_graph(&d, 1.5, 0.5), Err(Error::BetaOutOfRange(_))));
    }

    #[test]
    fn deconvolved_graph_density() {
        let d = chain_data(5, 10_000);
        assert_eq!(deconvolved_graph(&d, 0.9, 1.0).unwrap().edge_count(), 3);
        assert_eq!(deconvolved_graph(&d, 0.9, 1e-9).unwrap().edge_count(), 1);
        let g = deconvolved_graph(&d, 0.9, 2.0 / 3.0).unwrap();
        assert!(g.adjacent(0, 1) && g.adjacent(1, 2) && !g.adjacent(0, 2));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn deconvolution_inverts_forward_map(p in 2usize..8, seed in any::<u64>(), radius in 0.05f64..0.9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = DMatrix::from_fn(p, p, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
            let mut obs = (&a + a.transpose()) * 0.5;
            let r = obs.clone().symmetric_eigenvalues().amax();
            obs *= radius / r;
            let beta = 0.5;
            let raw = spectral_deconvolution(&obs, beta).unwrap();
            let back = transitive_closure(&raw).unwrap();
            let scaled = &obs * (beta / radius);
            prop_assert!((&back - &scaled).amax() < 1e-8);
        }
    }

    #[test]
    fn glasso_zero_penalty_is_inverse() {
        for seed in 0..10 {
            let s = random_spd(seed, 6);
            let res = graphical_lasso(&s, &GlassoConfig::new(0.0)).unwrap();
            let inv = s.clone().try_inverse().unwrap();
            assert!((&res.precision - &inv).amax() < 1e-6, "seed {seed}");
            assert!(res.converged);
        }
    }

    #[test]
    fn glasso_large_penalty_is_diagonal() {
        let s = random_spd(3, 5);
        let mut lam = 0.0f64;
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    lam = lam.max(s[(i, j)].abs());
                }
            }
        }
        let res = graphical_lasso(&s, &GlassoConfig::new(lam)).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                if i == j {
                    assert!((res.precision[(i, i)] - 1.0 / s[(i, i)]).abs() < 1e-10);
                } else {
                    assert_eq!(res.precision[(i, j)], 0.0);
                }
            }
        }
    }

    /// Stationarity check written out from the subgradient conditions.
    fn kkt_oracle(s: &DMatrix<f64>, theta: &DMatrix<f64>, lambda: f64) -> f64 {
        let w = theta.clone().try_inverse().unwrap();
        let mut worst = 0.0f64;
        for i in 0..s.nrows() {
            for j in 0..s.nrows() {
                let diff = w[(i, j)] - s[(i, j)];
                let viol = if i == j {
                    diff.abs()
                } else if theta[(i, j)] == 0.0 {
                    if diff.abs() <= lambda { 0.0 } else { diff.abs() - lambda }
                } else {
                    (diff - lambda * theta[(i, j)].signum()).abs()
                };
                worst = worst.max(viol);
            }
        }
        worst
    }

    #[test]
    fn glasso_kkt_and_shape() {
        for seed in 0..10 {
            let s = random_spd(100 + seed, 5);
            let res = graphical_lasso(&s, &GlassoConfig::new(0.1)).unwrap();
            assert!(res.converged);
            assert!(kkt_oracle(&s, &res.precision, 0.1) <= 1e-4);
            assert!((res.kkt_residual - kkt_oracle(&s, &res.precision, 0.1)).abs() < 1e-12);
            assert!((&res.precision - res.precision.transpose()).amax() == 0.0);
            assert!(res.precision.clone().cholesky().is_some());
            for w in res.objective_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "{:?}", res.objective_trace);
            }
        }
    }

    #[test]
    fn glasso_rejects_non_psd() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(graphical_lasso(&s, &GlassoConfig::new(0.1)), Err(Error::NotPsd)));
    }

    #[test]
    fn glasso_reports_non_convergence() {
        let s = random_spd(7, 6);
        let cfg = GlassoConfig { lambda: 0.05, tol: 0.0, max_iter: 2 };
        let res = graphical_lasso(&s, &cfg).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 2);
    }

    #[test]
    fn glasso_graph_on_chain() {
        let d = chain_with(11, 10_000, 0.5, 1.0);
        let (g, _) = glasso_graph(&d, &GlassoConfig::new(0.1)).unwrap();
        assert!(g.adjacent(0, 1) && g.adjacent(1, 2) && !g.adjacent(0, 2));
        let (g, _) = glasso_graph(&d, &GlassoConfig::new(10.0)).unwrap();
        assert_eq!(g.edge_count(), 0);
        let (g, _) = glasso_graph(&d, &GlassoConfig::new(0.0)).unwrap();
        assert_eq!(g.edge_count(), 3);
    }

    #[test]
    fn iamb_chain_and_collider() {
        let d = chain_data(21, 5000);
        assert_eq!(iamb(&d, 0, 0.01).unwrap().members, vec![1]);
        let d = collider_data(22, 5000);
        assert_eq!(iamb(&d, 0, 0.01).unwrap().members, vec![1, 2]);
    }

    #[test]
    fn iamb_independent_mostly_empty() {
        let empty = (0..50)
            .filter(|&s| iamb(&independent(s, 500, 5), 0, 0.01).unwrap().members.is_empty())
            .count();
        assert!(empty >= 45, "{empty}/50");
    }

    #[test]
    fn iamb_shrink_invariant() {
        for seed in 0..10 {
            let d = independent(seed, 300, 6);
            let mut cols: Vec<Vec<f64>> = d.columns().to_vec();
            for k in 0..300 {
                cols[1][k] += 0.6 * cols[0][k];
                cols[3][k] += 0.5 * cols[1][k] - 0.4 * cols[2][k];
            }
            let d = Dataset::from_columns(cols).unwrap();
            let corr = d.summary_stats().unwrap().correlation;
            for t in 0..6 {
                let b = iamb(&d, t, 0.05).unwrap();
                for &m in &b.members {
                    let rest: Vec<usize> = b.members.iter().copied().filter(|&u| u != m).collect();
                    assert!(ci_test(&corr, 300, t, m, &rest).unwrap().p_value <= 0.05);
                }
            }
        }
    }

    #[test]
    fn blanket_symmetrization() {
        let names: Vec<String> = vec!["X".into(), "Y".into()];
        let both = [Blanket { target: 0, members: vec![1] }, Blanket { target: 1, members: vec![0] }];
        assert!(blankets_to_skeleton(&names, &both, SymmetryRule::And).unwrap().adjacent(0, 1));
        let one = [Blanket { target: 0, members: vec![1] }, Blanket { target: 1, members: vec![] }];
        assert!(!blankets_to_skeleton(&names, &one, SymmetryRule::And).unwrap().adjacent(0, 1));
        assert!(blankets_to_skeleton(&names, &one, SymmetryRule::Or).unwrap().adjacent(0, 1));
        let none = [Blanket { target: 0, members: vec![] }, Blanket { target: 1, members: vec![] }];
        assert_eq!(blankets_to_skeleton(&names, &none, SymmetryRule::Or).unwrap().edge_count(), 0);
    }

    proptest! {
        #[test]
        fn and_rule_is_subset_of_or_rule(p in 1usize..8, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let names: Vec<String> = (0..p).map(|i| format!("V{i}")).collect();
            let blankets: Vec<Blanket> = (0..p)
                .map(|t| Blanket {
                    target: t,
                    members: (0..p).filter(|&m| m != t && rand::Rng::gen_bool(&mut rng, 0.4)).collect(),
                })
                .collect();
            let a = blankets_to_skeleton(&names, &blankets, SymmetryRule::And).unwrap();
            let o = blankets_to_skeleton(&names, &blankets, SymmetryRule::Or).unwrap();
            prop_assert!(a.adjacency_subset_of(&o));
        }
    }
}
