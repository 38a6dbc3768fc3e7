//! Configuration, synthetic data, stage composition and run reports.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::anm::{orient_skeleton_pairwise, AnmConfig, DEFAULT_RIDGE, DEFAULT_THRESHOLD};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::{parse_edge_csv, skeleton_metrics, Format, GraphMetrics, MixedGraph};
use crate::pc::{pc, FisherZOracle, PcConfig};
use crate::score::{hill_climb, SearchConfig};
use crate::seed::{derive_indexed, derive_seed};
use crate::skeleton::{
    all_blankets, blankets_to_skeleton, deconvolved_graph, dependency_graph, glasso_graph, Correction, GlassoConfig,
    PairTest, SymmetryRule, DEFAULT_BETA,
};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    LinearGaussian,
    NonlinearAnm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub p: usize,
    pub expected_degree: f64,
    pub mechanism: Mechanism,
    pub n: usize,
    #[serde(default = "one")]
    pub noise_sigma: f64,
    /// Replaced by the master seed when run through the pipeline.
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(Error::SpecInvalid(format!("p must be at least 2, got {}", self.p)));
        }
        if self.n < 2 {
            return Err(Error::SpecInvalid(format!("n must be at least 2, got {}", self.n)));
        }
        if !(self.expected_degree >= 0.0 && self.expected_degree < self.p as f64) {
            return Err(Error::SpecInvalid(format!(
                "expected_degree must lie in [0, {}), got {}",
                self.p, self.expected_degree
            )));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::SpecInvalid(format!("noise_sigma must be positive, got {}", self.noise_sigma)));
        }
        Ok(())
    }
}

fn sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.gen_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

/// Samples a random DAG and data from it.
///
/// The DAG follows a random topological order with each forward pair included
/// independently with probability `expected_degree / (p - 1)` (capped at 1).
/// Linear nodes sum `w * parent` with `|w| ~ U[0.5, 1.5]`; nonlinear nodes
/// sum `x^3` or `sin(2πx)` of each parent rescaled to `[-1, 1]`. Every node
/// adds `noise_sigma * N(0, 1)`. Graph, weights and noise draw from separate
/// streams derived from `spec.seed`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, MixedGraph)> {
    spec.validate()?;
    let p = spec.p;
    let prob = (spec.expected_degree / (p - 1) as f64).min(1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "synthetic.graph"));
    let mut order: Vec<usize> = (0..p).collect();
    order.shuffle(&mut rng);
    let mut truth = MixedGraph::empty(p);
    for a in 0..p {
        for b in a + 1..p {
            if rng.gen_bool(prob) {
                truth.add_directed(order[a], order[b]);
            }
        }
    }

    let mut wrng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "synthetic.weights"));
    let noise_seed = derive_seed(spec.seed, "synthetic.noise");
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); p];
    for &v in &order {
        let mut nrng = ChaCha8Rng::seed_from_u64(derive_indexed(noise_seed, v as u64));
        let mut col: Vec<f64> = (0..spec.n)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut nrng);
                spec.noise_sigma * e
            })
            .collect();
        for u in truth.parents(v).collect::<Vec<_>>() {
            let parent = &columns[u];
            match spec.mechanism {
                Mechanism::LinearGaussian => {
                    let w = sign(&mut wrng) * wrng.gen_range(0.5..=1.5);
                    for (c, x) in col.iter_mut().zip(parent) {
                        *c += w * x;
                    }
                }
                Mechanism::NonlinearAnm => {
                    let scale = parent.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
                    let cubic = wrng.gen_bool(0.5);
                    for (c, x) in col.iter_mut().zip(parent) {
                        let t = x / scale;
                        *c += if cubic { t * t * t } else { (2.0 * std::f64::consts::PI * t).sin() };
                    }
                }
            }
        }
        columns[v] = col;
    }
    Ok((Dataset::from_columns(columns)?, truth))
}

/// Worker thread count; `Auto` means one per logical CPU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Threads {
    #[default]
    Auto,
    Count(usize),
}

impl Threads {
    pub fn resolve(self) -> usize {
        match self {
            Threads::Auto => std::thread::available_parallelism().map_or(1, |n| n.get()),
            Threads::Count(n) => n.max(1),
        }
    }
}

impl FromStr for Threads {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Threads::Auto);
        }
        match s.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Threads::Count(n)),
            _ => Err(Error::Config(format!("threads must be a positive integer or `auto`, got `{s}`"))),
        }
    }
}

impl fmt::Display for Threads {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threads::Auto => f.write_str("auto"),
            Threads::Count(n) => write!(f, "{n}"),
        }
    }
}

impl Serialize for Threads {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Threads::Auto => s.serialize_str("auto"),
            Threads::Count(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Threads {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            N(u64),
            S(String),
        }
        match Repr::deserialize(d)? {
            Repr::N(n) if n >= 1 => Ok(Threads::Count(n as usize)),
            Repr::N(n) => Err(serde::de::Error::custom(format!("threads must be at least 1, got {n}"))),
            Repr::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairTestKind {
    #[default]
    PearsonFisherZ,
    GaussianMiPerm,
}

fn default_alpha() -> f64 {
    0.01
}
fn default_permutations() -> usize {
    200
}
fn default_beta() -> f64 {
    DEFAULT_BETA
}
fn default_density() -> f64 {
    0.2
}
fn default_lambda() -> f64 {
    0.1
}
fn default_tol() -> f64 {
    1e-6
}
fn default_glasso_iter() -> usize {
    200
}
fn default_cond() -> Option<usize> {
    Some(3)
}
fn default_hc_iters() -> usize {
    10_000
}
fn default_ridge() -> f64 {
    DEFAULT_RIDGE
}
fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum SkeletonStage {
    DependencyGraph {
        #[serde(default)]
        test: PairTestKind,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default)]
        correction: Correction,
        /// Only used by `gaussian_mi_perm`.
        #[serde(default = "default_permutations")]
        permutations: usize,
    },
    Deconvolution {
        #[serde(default = "default_beta")]
        beta: f64,
        #[serde(default = "default_density")]
        density: f64,
    },
    Glasso {
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "default_glasso_iter")]
        max_iter: usize,
    },
    Iamb {
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default)]
        rule: SymmetryRule,
    },
    None,
}

impl Default for SkeletonStage {
    fn default() -> Self {
        SkeletonStage::DependencyGraph {
            test: PairTestKind::default(),
            alpha: default_alpha(),
            correction: Correction::default(),
            permutations: default_permutations(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum OrientationStage {
    Pc {
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_cond")]
        max_cond_size: Option<usize>,
    },
    HillClimb {
        #[serde(default)]
        max_indegree: Option<usize>,
        #[serde(default)]
        tabu_length: usize,
        #[serde(default = "default_hc_iters")]
        max_iters: usize,
    },
    Anm {
        #[serde(default = "default_ridge")]
        ridge: f64,
        #[serde(default = "default_threshold")]
        threshold: f64,
    },
    None,
}

impl Default for OrientationStage {
    fn default() -> Self {
        OrientationStage::Pc { alpha: default_alpha(), max_cond_size: default_cond() }
    }
}

fn default_format() -> Format {
    Format::Edgecsv
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    #[serde(default = "default_format")]
    pub format: Format,
    #[serde(default)]
    pub path: Option<PathBuf>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { format: default_format(), path: None }
    }
}

/// Full run description. Loaded from TOML; every field has a default except
/// the data source (`input` or `synthetic`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: Threads,
    #[serde(default = "yes")]
    pub use_skeleton_as_whitelist: bool,
    #[serde(default)]
    pub input: Option<PathBuf>,
    /// Ground-truth graph (EDGE_CSV) for metrics.
    #[serde(default)]
    pub truth: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default)]
    pub skeleton: SkeletonStage,
    #[serde(default)]
    pub orientation: OrientationStage,
    #[serde(default)]
    pub output: OutputConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: Threads::Auto,
            use_skeleton_as_whitelist: true,
            input: None,
            truth: None,
            synthetic: None,
            skeleton: SkeletonStage::default(),
            orientation: OrientationStage::default(),
            output: OutputConfig::default(),
        }
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")))
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.skeleton == SkeletonStage::None && self.orientation == OrientationStage::None {
            return Err(Error::Config("skeleton and orientation methods cannot both be `none`".into()));
        }
        match &self.skeleton {
            SkeletonStage::DependencyGraph { alpha, permutations, test, .. } => {
                check_unit("skeleton.alpha", *alpha)?;
                if *test == PairTestKind::GaussianMiPerm && *permutations == 0 {
                    return Err(Error::Config("skeleton.permutations must be positive".into()));
                }
            }
            SkeletonStage::Deconvolution { beta, density } => {
                check_unit("skeleton.beta", *beta)?;
                if !(*density > 0.0 && *density <= 1.0) {
                    return Err(Error::Config(format!("skeleton.density must lie in (0, 1], got {density}")));
                }
            }
            SkeletonStage::Glasso { lambda, tol, max_iter } => {
                if !(*lambda >= 0.0 && lambda.is_finite()) || !(*tol > 0.0) || *max_iter == 0 {
                    return Err(Error::Config("glasso needs lambda >= 0, tol > 0, max_iter > 0".into()));
                }
            }
            SkeletonStage::Iamb { alpha, .. } => check_unit("skeleton.alpha", *alpha)?,
            SkeletonStage::None => {}
        }
        match &self.orientation {
            OrientationStage::Pc { alpha, .. } => check_unit("orientation.alpha", *alpha)?,
            OrientationStage::Anm { ridge, threshold } => {
                if !(*ridge > 0.0) || !(*threshold >= 0.0) {
                    return Err(Error::Config("anm needs ridge > 0 and threshold >= 0".into()));
                }
            }
            OrientationStage::HillClimb { .. } | OrientationStage::None => {}
        }
        if let Some(s) = &self.synthetic {
            s.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub ci_queries: Option<usize>,
    pub move_evaluations: Option<usize>,
    pub local_scores: Option<usize>,
    pub pair_decisions: Option<usize>,
    pub glasso_iterations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub nodes: usize,
    pub edges: usize,
    pub directed: usize,
    pub undirected: usize,
}

impl GraphSummary {
    pub fn of(g: &MixedGraph) -> Self {
        Self { nodes: g.node_count(), edges: g.edge_count(), directed: g.directed_count(), undirected: g.undirected_count() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    /// Effective configuration after defaults and overrides.
    pub config: PipelineConfig,
    pub threads: usize,
    pub stages: Vec<StageTiming>,
    pub total_seconds: f64,
    pub counters: Counters,
    pub skeleton: Option<GraphSummary>,
    pub graph: GraphSummary,
    pub metrics: Option<GraphMetrics>,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidDataset(format!("bad report: {e}")))
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub graph: MixedGraph,
    pub report: RunReport,
    pub data: Dataset,
    pub truth: Option<MixedGraph>,
}

/// Result of the first phase. `graph` is `None` when the stage is disabled.
#[derive(Debug, Clone, Default)]
pub struct SkeletonOutcome {
    pub graph: Option<MixedGraph>,
    pub warnings: Vec<String>,
    pub glasso_iterations: Option<usize>,
}

pub fn run_skeleton_stage(d: &Dataset, stage: &SkeletonStage, seed: u64) -> Result<SkeletonOutcome> {
    let mut out = SkeletonOutcome::default();
    out.graph = match stage {
        SkeletonStage::DependencyGraph { test, alpha, correction, permutations } => {
            let test = match test {
                PairTestKind::PearsonFisherZ => PairTest::PearsonFisherZ,
                PairTestKind::GaussianMiPerm => PairTest::GaussianMiPerm {
                    permutations: *permutations,
                    seed: derive_seed(seed, "skeleton.permutation"),
                },
            };
            if let PairTest::GaussianMiPerm { permutations, .. } = test {
                let floor = 1.0 / (permutations + 1) as f64;
                if floor > *alpha {
                    out.warnings.push(format!(
                        "{permutations} permutations cannot give p-values below {floor:.4}, above alpha {alpha}"
                    ));
                }
            }
            Some(dependency_graph(d, test, *alpha, *correction)?)
        }
        SkeletonStage::Deconvolution { beta, density } => Some(deconvolved_graph(d, *beta, *density)?),
        SkeletonStage::Glasso { lambda, tol, max_iter } => {
            let cfg = GlassoConfig { lambda: *lambda, tol: *tol, max_iter: *max_iter };
            let (g, res) = glasso_graph(d, &cfg)?;
            if !res.converged {
                out.warnings.push(format!(
                    "glasso stopped after {} iterations without converging (kkt residual {:.3e})",
                    res.iterations, res.kkt_residual
                ));
            }
            out.glasso_iterations = Some(res.iterations);
            Some(g)
        }
        SkeletonStage::Iamb { alpha, rule } => {
            let blankets = all_blankets(d, *alpha)?;
            Some(blankets_to_skeleton(d.names(), &blankets, *rule)?)
        }
        SkeletonStage::None => None,
    };
    Ok(out)
}

fn load_input(cfg: &PipelineConfig) -> Result<(Dataset, Option<MixedGraph>)> {
    let (data, mut truth) = match (&cfg.input, &cfg.synthetic) {
        (Some(path), None) => (Dataset::load_csv(path)?, None),
        (None, Some(spec)) => {
            let spec = SyntheticSpec { seed: cfg.seed, ..spec.clone() };
            let (d, t) = generate_synthetic(&spec)?;
            (d, Some(t))
        }
        (Some(_), Some(_)) => return Err(Error::Config("give either `input` or `synthetic`, not both".into())),
        (None, None) => return Err(Error::Config("no data source: set `input` or `synthetic`".into())),
    };
    if let Some(path) = &cfg.truth {
        let text = std::fs::read_to_string(path)?;
        truth = Some(parse_edge_csv(&text, Some(data.names()))?);
    }
    Ok((data, truth))
}

/// Runs every stage inside a thread pool of the configured size.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let threads = cfg.threads.resolve();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))?;
    pool.install(|| run_stages(cfg, threads))
}

fn timed<T>(stages: &mut Vec<StageTiming>, name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t0 = Instant::now();
    let out = f().map_err(|e| e.in_stage(name))?;
    stages.push(StageTiming { stage: name.to_string(), seconds: t0.elapsed().as_secs_f64() });
    Ok(out)
}

fn run_stages(cfg: &PipelineConfig, threads: usize) -> Result<PipelineOutput> {
    let start = Instant::now();
    let mut stages = Vec::new();
    let mut counters = Counters::default();
    let mut warnings = Vec::new();

    let (data, truth) = timed(&mut stages, "input", || load_input(cfg))?;

    let sk = timed(&mut stages, "skeleton", || run_skeleton_stage(&data, &cfg.skeleton, cfg.seed))?;
    warnings.extend(sk.warnings);
    counters.glasso_iterations = sk.glasso_iterations;
    let skeleton = sk.graph;
    let whitelist = if cfg.use_skeleton_as_whitelist { skeleton.clone() } else { None };

    let graph = timed(&mut stages, "orientation", || {
        Ok(match &cfg.orientation {
            OrientationStage::Pc { alpha, max_cond_size } => {
                let oracle = FisherZOracle::new(&data)?;
                let pcfg = PcConfig { alpha: *alpha, max_cond_size: *max_cond_size, whitelist: whitelist.clone() };
                let out = pc(&oracle, &pcfg)?;
                counters.ci_queries = Some(out.stats.total_queries());
                for (a, b) in &out.conflicts {
                    warnings.push(format!(
                        "conflicting collider orientations on {} - {}; left undirected",
                        data.names()[*a],
                        data.names()[*b]
                    ));
                }
                out.graph
            }
            OrientationStage::HillClimb { max_indegree, tabu_length, max_iters } => {
                let scfg = SearchConfig {
                    max_indegree: *max_indegree,
                    tabu_length: *tabu_length,
                    max_iters: *max_iters,
                    whitelist: whitelist.clone(),
                };
                let out = hill_climb(&data, &scfg)?;
                counters.move_evaluations = Some(out.move_evaluations);
                counters.local_scores = Some(out.local_scores);
                if out.hit_iteration_cap {
                    warnings.push(format!("hill climbing stopped at the iteration cap ({max_iters})"));
                }
                out.graph
            }
            OrientationStage::Anm { ridge, threshold } => {
                let base = match &skeleton {
                    Some(g) => g.clone(),
                    None => {
                        let mut g = MixedGraph::with_names(data.names().to_vec())?;
                        for i in 0..data.p() {
                            for j in i + 1..data.p() {
                                g.add_undirected(i, j);
                            }
                        }
                        g
                    }
                };
                let out = orient_skeleton_pairwise(&data, &base, &AnmConfig { ridge: *ridge, threshold: *threshold })?;
                counters.pair_decisions = Some(out.decisions.len());
                for (a, b) in &out.reverted {
                    warnings.push(format!(
                        "orientation {} -> {} reverted to break a directed cycle",
                        data.names()[*a],
                        data.names()[*b]
                    ));
                }
                out.graph
            }
            OrientationStage::None => skeleton.clone().expect("validated: one stage is enabled"),
        })
    })?;

    let metrics = timed(&mut stages, "evaluate", || truth.as_ref().map(|t| evaluate(&graph, t)).transpose())?;

    let mut echo = cfg.clone();
    if let Some(s) = &mut echo.synthetic {
        s.seed = cfg.seed;
    }
    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: echo,
        threads,
        stages,
        total_seconds: start.elapsed().as_secs_f64(),
        counters,
        skeleton: skeleton.as_ref().map(GraphSummary::of),
        graph: GraphSummary::of(&graph),
        metrics,
        warnings,
    };
    Ok(PipelineOutput { graph, report, data, truth })
}

/// Compares a predicted graph with the truth; see [`skeleton_metrics`].
pub fn evaluate(pred: &MixedGraph, truth: &MixedGraph) -> Result<GraphMetrics> {
    skeleton_metrics(pred, truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pc::pc as run_pc;

    fn synth(p: usize, deg: f64, n: usize, seed: u64) -> SyntheticSpec {
        SyntheticSpec { p, expected_degree: deg, mechanism: Mechanism::LinearGaussian, n, noise_sigma: 1.0, seed }
    }

    #[test]
    fn two_node_full_degree_has_one_edge() {
        for seed in 0..10 {
            let (d, t) = generate_synthetic(&synth(2, 1.0, 50, seed)).unwrap();
            assert_eq!(t.edge_count(), 1);
            assert!(t.is_dag());
            assert_eq!(d.p(), 2);
        }
    }

    #[test]
    fn zero_degree_is_empty_and_deterministic() {
        let (d, t) = generate_synthetic(&synth(5, 0.0, 100, 3)).unwrap();
        assert_eq!(t.edge_count(), 0);
        let (d2, t2) = generate_synthetic(&synth(5, 0.0, 100, 3)).unwrap();
        assert_eq!(d.to_csv_string(), d2.to_csv_string());
        assert_eq!(t, t2);
        let mut spec = synth(4, 2.0, 80, 9);
        spec.mechanism = Mechanism::NonlinearAnm;
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a.0.to_csv_string(), b.0.to_csv_string());
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn spec_validation() {
        assert!(matches!(generate_synthetic(&synth(1, 0.0, 10, 0)), Err(Error::SpecInvalid(_))));
        assert!(matches!(generate_synthetic(&synth(3, 3.0, 10, 0)), Err(Error::SpecInvalid(_))));
        assert!(matches!(generate_synthetic(&synth(3, 1.0, 1, 0)), Err(Error::SpecInvalid(_))));
    }

    #[test]
    fn expected_degree_is_roughly_met() {
        let mut total = 0;
        for seed in 0..200 {
            total += generate_synthetic(&synth(10, 2.0, 2, seed)).unwrap().1.edge_count();
        }
        // mean degree = 2·edges/p
        let mean_degree = 2.0 * total as f64 / (200.0 * 10.0);
        assert!((mean_degree - 2.0).abs() < 0.2, "{mean_degree}");
    }

    fn base_cfg(spec: SyntheticSpec) -> PipelineConfig {
        PipelineConfig { seed: spec.seed, synthetic: Some(spec), threads: Threads::Count(2), ..Default::default() }
    }

    #[test]
    fn no_skeleton_pc_matches_direct_call() {
        let spec = synth(6, 2.0, 2000, 4);
        let cfg = PipelineConfig {
            skeleton: SkeletonStage::None,
            orientation: OrientationStage::Pc { alpha: 0.01, max_cond_size: Some(3) },
            ..base_cfg(spec.clone())
        };
        let out = run_pipeline(&cfg).unwrap();
        let (d, _) = generate_synthetic(&spec).unwrap();
        let direct = run_pc(&FisherZOracle::new(&d).unwrap(), &PcConfig::data(0.01)).unwrap();
        assert_eq!(out.graph, direct.graph);
        assert!(out.report.metrics.is_some());
    }

    #[test]
    fn skeleton_only_is_undirected() {
        let cfg = PipelineConfig { orientation: OrientationStage::None, ..base_cfg(synth(6, 2.0, 1000, 5)) };
        let out = run_pipeline(&cfg).unwrap();
        assert_eq!(out.graph.directed_count(), 0);
        assert_eq!(out.report.skeleton.as_ref(), Some(&out.report.graph));
    }

    #[test]
    fn both_stages_none_is_rejected() {
        let cfg = PipelineConfig {
            skeleton: SkeletonStage::None,
            orientation: OrientationStage::None,
            ..base_cfg(synth(3, 1.0, 100, 0))
        };
        assert!(matches!(run_pipeline(&cfg), Err(Error::Config(_))));
        let cfg = PipelineConfig { synthetic: None, ..base_cfg(synth(3, 1.0, 100, 0)) };
        assert!(matches!(run_pipeline(&cfg), Err(Error::Stage { stage: "input", .. })));
    }

    #[test]
    fn whitelist_bounds_every_orientation() {
        let spec = synth(7, 2.0, 1000, 6);
        for orientation in [
            OrientationStage::Pc { alpha: 0.01, max_cond_size: Some(3) },
            OrientationStage::HillClimb { max_indegree: None, tabu_length: 0, max_iters: 10_000 },
            OrientationStage::Anm { ridge: 1e-3, threshold: 0.05 },
        ] {
            let cfg = PipelineConfig { orientation, ..base_cfg(spec.clone()) };
            let out = run_pipeline(&cfg).unwrap();
            let skel = run_skeleton_stage(&out.data, &cfg.skeleton, cfg.seed).unwrap().graph.unwrap();
            assert!(out.graph.adjacency_subset_of(&skel));
            assert!(!out.graph.has_directed_cycle());
        }
    }

    #[test]
    fn report_roundtrips_and_timings_add_up() {
        let cfg = PipelineConfig {
            orientation: OrientationStage::HillClimb { max_indegree: Some(3), tabu_length: 2, max_iters: 100 },
            ..base_cfg(synth(6, 2.0, 500, 8))
        };
        let out = run_pipeline(&cfg).unwrap();
        let r = &out.report;
        assert_eq!(RunReport::from_json(&r.to_json()).unwrap(), *r);
        let sum: f64 = r.stages.iter().map(|s| s.seconds).sum();
        assert!(sum <= r.total_seconds && sum >= 0.9 * r.total_seconds, "{sum} vs {}", r.total_seconds);
        assert!(r.counters.move_evaluations.unwrap() > 0);
        assert_eq!(r.config.synthetic.as_ref().unwrap().seed, 8);
    }

    #[test]
    fn toml_config_parses_with_defaults() {
        let cfg = PipelineConfig::from_toml(
            r#"
            seed = 7
            threads = "auto"

            [synthetic]
            p = 5
            expected_degree = 1.5
            mechanism = "nonlinear_anm"
            n = 300

            [skeleton]
            method = "glasso"
            lambda = 0.05

            [orientation]
            method = "anm"

            [output]
            format = "dot"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.threads, Threads::Auto);
        assert!(cfg.use_skeleton_as_whitelist);
        assert_eq!(cfg.skeleton, SkeletonStage::Glasso { lambda: 0.05, tol: 1e-6, max_iter: 200 });
        assert_eq!(cfg.orientation, OrientationStage::Anm { ridge: 1e-3, threshold: 0.05 });
        assert_eq!(cfg.output.format, Format::Dot);
        assert_eq!(PipelineConfig::from_toml("threads = 4").unwrap().threads, Threads::Count(4));
        assert!(PipelineConfig::from_toml("threads = 0").is_err());
        assert!(PipelineConfig::from_toml("bogus = 1").is_err());
        assert!(PipelineConfig::from_toml("[skeleton]\nmethod = \"magic\"").is_err());
    }

    #[test]
    fn threads_parse_and_resolve() {
        assert_eq!("AUTO".parse::<Threads>().unwrap(), Threads::Auto);
        assert_eq!("3".parse::<Threads>().unwrap(), Threads::Count(3));
        assert!("0".parse::<Threads>().is_err());
        assert!(Threads::Auto.resolve() >= 1);
    }

    #[test]
    fn evaluate_checks_sizes() {
        assert!(matches!(evaluate(&MixedGraph::empty(2), &MixedGraph::empty(3)), Err(Error::NodeCountMismatch(..))));
        let m = evaluate(&MixedGraph::empty(3), &MixedGraph::complete(3)).unwrap();
        assert_eq!(m.skeleton_precision, 1.0);
    }
}
