//! Gaussian BIC and greedy DAG search with add/delete/reverse moves.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::MixedGraph;

const MIN_RESIDUAL_VARIANCE: f64 = 1e-12;
/// A move must beat the current score by more than this.
pub const IMPROVEMENT_EPS: f64 = 1e-9;
/// Deltas closer than this count as tied and fall back to move order.
pub const TIE_EPS: f64 = 1e-10;

/// Local BIC scores over a standardized copy of a dataset. Least squares are
/// solved from the cached Gram matrix, so a score costs O(k^3) in the parent
/// count rather than O(n k^2).
#[derive(Debug, Clone)]
pub struct BicScorer {
    n: usize,
    gram: DMatrix<f64>,
}

impl BicScorer {
    pub fn new(d: &Dataset) -> Result<Self> {
        let z = d.standardize()?;
        let (n, p) = (z.n(), z.p());
        let cols = z.columns();
        let entries: Vec<f64> = (0..p * p)
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k % p, k / p);
                if i > j {
                    return 0.0;
                }
                cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum()
            })
            .collect();
        let mut gram = DMatrix::from_vec(p, p, entries);
        for j in 0..p {
            for i in j + 1..p {
                gram[(i, j)] = gram[(j, i)];
            }
        }
        Ok(Self { n, gram })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.gram.nrows()
    }

    /// BIC of `node` regressed on `parents` (no intercept):
    /// `-(n/2)(ln 2π + ln σ² + 1) - ((k+1)/2) ln n` with `σ² = RSS/n`.
    pub fn local(&self, node: usize, parents: &[usize]) -> Result<f64> {
        assert!(!parents.contains(&node), "node {node} listed as its own parent");
        let n = self.n as f64;
        let k = parents.len();
        let yy = self.gram[(node, node)];
        let rss = if k == 0 {
            yy
        } else {
            let xx = DMatrix::from_fn(k, k, |a, b| self.gram[(parents[a], parents[b])]);
            let xy = DVector::from_fn(k, |a, _| self.gram[(parents[a], node)]);
            let chol = xx.cholesky().ok_or(Error::RankDeficient(node))?;
            let l = chol.l();
            let (lo, hi) = l.diagonal().iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            if lo * lo < 1e-10 * hi * hi {
                return Err(Error::RankDeficient(node));
            }
            let c = l.solve_lower_triangular(&xy).ok_or(Error::RankDeficient(node))?;
            (yy - c.norm_squared()).max(0.0)
        };
        let sigma2 = rss / n;
        if sigma2 < MIN_RESIDUAL_VARIANCE {
            return Err(Error::ZeroResidualVariance(node));
        }
        Ok(-0.5 * n * ((2.0 * PI).ln() + sigma2.ln() + 1.0) - 0.5 * (k as f64 + 1.0) * n.ln())
    }
}

/// Local BIC of `node` given `parents`; `d` is standardized internally.
pub fn bic_local(d: &Dataset, node: usize, parents: &[usize]) -> Result<f64> {
    BicScorer::new(d)?.local(node, parents)
}

/// Sum of local scores over the DAG's parent sets.
pub fn score_dag(d: &Dataset, g: &MixedGraph) -> Result<f64> {
    score_dag_with(&BicScorer::new(d)?, g)
}

pub fn score_dag_with(scorer: &BicScorer, g: &MixedGraph) -> Result<f64> {
    if g.node_count() != scorer.p() {
        return Err(Error::NodeCountMismatch(g.node_count(), scorer.p()));
    }
    if !g.is_dag() || g.undirected_count() > 0 {
        return Err(Error::NotADag);
    }
    (0..g.node_count())
        .map(|v| scorer.local(v, &g.parents(v).collect::<Vec<_>>()))
        .sum()
}

/// Memoized local scores keyed by node and sorted parent set.
#[derive(Debug, Clone, Default)]
pub struct LocalScoreCache {
    map: HashMap<(usize, Vec<usize>), f64>,
}

impl LocalScoreCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, node: usize, parents: &[usize]) -> Option<f64> {
        self.map.get(&(node, parents.to_vec())).copied()
    }

    pub fn insert(&mut self, node: usize, parents: Vec<usize>, score: f64) {
        self.map.insert((node, parents), score);
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Scores every missing key in parallel, then stores them.
    fn fill(&mut self, scorer: &BicScorer, keys: Vec<(usize, Vec<usize>)>) -> Result<usize> {
        let mut missing: Vec<(usize, Vec<usize>)> = keys.into_iter().filter(|k| !self.map.contains_key(k)).collect();
        missing.sort();
        missing.dedup();
        let scored: Vec<f64> = missing
            .par_iter()
            .map(|(v, pa)| scorer.local(*v, pa))
            .collect::<Result<_>>()?;
        let count = missing.len();
        self.map.extend(missing.into_iter().zip(scored));
        Ok(count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Add,
    Delete,
    Reverse,
}

/// `Add`: insert `i -> j`. `Delete`: remove `i -> j`. `Reverse`: turn
/// `i -> j` into `j -> i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Move {
    pub op: Op,
    pub i: usize,
    pub j: usize,
}

impl Move {
    fn undo(self) -> Move {
        match self.op {
            Op::Add => Move { op: Op::Delete, ..self },
            Op::Delete => Move { op: Op::Add, ..self },
            Op::Reverse => Move { op: Op::Reverse, i: self.j, j: self.i },
        }
    }

    pub fn apply(self, g: &mut MixedGraph) {
        match self.op {
            Op::Add => g.add_directed(self.i, self.j),
            Op::Delete => g.remove_edge(self.i, self.j),
            Op::Reverse => g.add_directed(self.j, self.i),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// `None` means no cap.
    pub max_indegree: Option<usize>,
    pub tabu_length: usize,
    pub max_iters: usize,
    #[serde(skip)]
    pub whitelist: Option<MixedGraph>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { max_indegree: None, tabu_length: 0, max_iters: 10_000, whitelist: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub mv: Move,
    pub delta: f64,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct HillClimbResult {
    pub graph: MixedGraph,
    pub score: f64,
    pub initial_score: f64,
    pub trace: Vec<TraceStep>,
    /// Candidate moves whose score delta was computed, over all steps.
    pub move_evaluations: usize,
    /// Distinct local scores computed.
    pub local_scores: usize,
    /// True when `max_iters` stopped the search before a local optimum.
    pub hit_iteration_cap: bool,
}

fn with(parents: &[usize], v: usize) -> Vec<usize> {
    let mut out = parents.to_vec();
    let pos = out.binary_search(&v).unwrap_err();
    out.insert(pos, v);
    out
}

fn without(parents: &[usize], v: usize) -> Vec<usize> {
    parents.iter().copied().filter(|&u| u != v).collect()
}

/// Legal moves in (op, i, j) order.
fn legal_moves(g: &MixedGraph, cfg: &SearchConfig, tabu: &VecDeque<Move>) -> Vec<Move> {
    let p = g.node_count();
    let cap = cfg.max_indegree.unwrap_or(usize::MAX);
    let indeg: Vec<usize> = (0..p).map(|v| g.parents(v).count()).collect();
    let mut out = Vec::new();
    for op in [Op::Add, Op::Delete, Op::Reverse] {
        for i in 0..p {
            for j in 0..p {
                if i == j {
                    continue;
                }
                let mv = Move { op, i, j };
                let legal = match op {
                    Op::Add => {
                        !g.adjacent(i, j)
                            && cfg.whitelist.as_ref().is_none_or(|w| w.adjacent(i, j))
                            && indeg[j] < cap
                            && !g.has_directed_path(j, i)
                    }
                    Op::Delete => g.has_directed(i, j),
                    Op::Reverse => {
                        g.has_directed(i, j) && indeg[i] < cap && {
                            let mut h = g.clone();
                            h.remove_edge(i, j);
                            !h.has_directed_path(i, j)
                        }
                    }
                };
                if legal && !tabu.contains(&mv) {
                    out.push(mv);
                }
            }
        }
    }
    out
}

/// Local-score keys a move touches: (node, old parents, new parents).
fn move_terms(mv: Move, parents: &[Vec<usize>]) -> Vec<(usize, Vec<usize>, Vec<usize>)> {
    let Move { op, i, j } = mv;
    match op {
        Op::Add => vec![(j, parents[j].clone(), with(&parents[j], i))],
        Op::Delete => vec![(j, parents[j].clone(), without(&parents[j], i))],
        Op::Reverse => vec![
            (j, parents[j].clone(), without(&parents[j], i)),
            (i, parents[i].clone(), with(&parents[i], j)),
        ],
    }
}

/// Greedy hill climbing over DAGs from the empty graph.
///
/// Each step scores every legal move and applies the best one if it improves
/// the score by more than [`IMPROVEMENT_EPS`]; near-ties go to the first move
/// in (op, i, j) order.
pub fn hill_climb(d: &Dataset, cfg: &SearchConfig) -> Result<HillClimbResult> {
    let scorer = BicScorer::new(d)?;
    let p = scorer.p();
    if let Some(w) = &cfg.whitelist {
        if w.node_count() != p {
            return Err(Error::NodeCountMismatch(w.node_count(), p));
        }
    }
    let mut g = MixedGraph::with_names(d.names().to_vec())?;
    let mut parents: Vec<Vec<usize>> = vec![Vec::new(); p];
    let mut cache = LocalScoreCache::new();
    let mut local_scores = cache.fill(&scorer, (0..p).map(|v| (v, Vec::new())).collect())?;
    let initial_score: f64 = (0..p).map(|v| cache.get(v, &[]).unwrap()).sum();
    let mut score = initial_score;
    let mut trace = Vec::new();
    let mut tabu: VecDeque<Move> = VecDeque::new();
    let mut move_evaluations = 0;
    let mut hit_iteration_cap = true;

    for _ in 0..cfg.max_iters {
        let moves = legal_moves(&g, cfg, &tabu);
        let terms: Vec<_> = moves.iter().map(|&m| move_terms(m, &parents)).collect();
        let keys = terms.iter().flatten().flat_map(|(v, old, new)| [(*v, old.clone()), (*v, new.clone())]).collect();
        local_scores += cache.fill(&scorer, keys)?;
        move_evaluations += moves.len();

        let mut best: Option<(Move, f64)> = None;
        for (mv, t) in moves.iter().zip(&terms) {
            let delta: f64 = t
                .iter()
                .map(|(v, old, new)| cache.get(*v, new).unwrap() - cache.get(*v, old).unwrap())
                .sum();
            if best.is_none_or(|(_, b)| delta > b + TIE_EPS) {
                best = Some((*mv, delta));
            }
        }
        match best {
            Some((mv, delta)) if delta > IMPROVEMENT_EPS => {
                mv.apply(&mut g);
                for (v, _, new) in move_terms(mv, &parents) {
                    parents[v] = new;
                }
                score += delta;
                trace.push(TraceStep { mv, delta, score });
                if cfg.tabu_length > 0 {
                    tabu.push_back(mv);
                    tabu.push_back(mv.undo());
                    while tabu.len() > 2 * cfg.tabu_length {
                        tabu.pop_front();
                    }
                }
            }
            _ => {
                hit_iteration_cap = false;
                break;
            }
        }
    }
    Ok(HillClimbResult { graph: g, score, initial_score, trace, move_evaluations, local_scores, hit_iteration_cap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gauss(rng: &mut ChaCha8Rng) -> f64 {
        StandardNormal.sample(rng)
    }

    fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    }

    /// Direct least squares on the raw standardized columns.
    fn bic_oracle(d: &Dataset, node: usize, parents: &[usize]) -> f64 {
        let z = d.standardize().unwrap();
        let n = z.n();
        let y = DVector::from_column_slice(z.column(node));
        let rss = if parents.is_empty() {
            y.norm_squared()
        } else {
            let x = DMatrix::from_fn(n, parents.len(), |r, c| z.column(parents[c])[r]);
            let beta = x.clone().svd(true, true).solve(&y, 1e-14).unwrap();
            (&y - x * beta).norm_squared()
        };
        let nf = n as f64;
        -0.5 * nf * ((2.0 * PI).ln() + (rss / nf).ln() + 1.0) - 0.5 * (parents.len() as f64 + 1.0) * nf.ln()
    }

    fn linear_data(seed: u64, n: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = normals(&mut rng, n);
        let b: Vec<f64> = a.iter().map(|v| 0.8 * v + 0.6 * gauss(&mut rng)).collect();
        let c: Vec<f64> = b.iter().map(|v| -0.7 * v + 0.7 * gauss(&mut rng)).collect();
        let e = normals(&mut rng, n);
        Dataset::from_columns(vec![a, b, c, e]).unwrap()
    }

    #[test]
    fn no_parent_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = Dataset::from_columns(vec![normals(&mut rng, 100)]).unwrap();
        let s = bic_local(&d, 0, &[]).unwrap();
        assert!((s - (-144.196)).abs() < 1e-3, "{s}");
    }

    #[test]
    fn identical_parent_is_zero_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = normals(&mut rng, 50);
        let d = Dataset::from_columns(vec![x.clone(), x]).unwrap();
        assert!(matches!(bic_local(&d, 1, &[0]), Err(Error::ZeroResidualVariance(1))));
        let mut g = MixedGraph::empty(2);
        g.add_directed(0, 1);
        assert!(matches!(score_dag(&d, &g), Err(Error::ZeroResidualVariance(1))));
    }

    #[test]
    fn collinear_parents_are_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = normals(&mut rng, 50);
        let y = normals(&mut rng, 50);
        let d = Dataset::from_columns(vec![x.clone(), x, y]).unwrap();
        assert!(matches!(bic_local(&d, 2, &[0, 1]), Err(Error::RankDeficient(2))));
    }

    #[test]
    fn gram_scores_match_direct_regression() {
        let d = linear_data(4, 300);
        let s = BicScorer::new(&d).unwrap();
        for (node, pa) in [(0, vec![]), (1, vec![0]), (2, vec![0, 1]), (3, vec![0, 1, 2]), (0, vec![1, 3])] {
            let a = s.local(node, &pa).unwrap();
            let b = bic_oracle(&d, node, &pa);
            assert!((a - b).abs() < 1e-8, "{node} {pa:?}: {a} vs {b}");
        }
    }

    #[test]
    fn independent_parent_is_penalized() {
        let mut better = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = Dataset::from_columns(vec![normals(&mut rng, 1000), normals(&mut rng, 1000)]).unwrap();
            let s = BicScorer::new(&d).unwrap();
            if s.local(0, &[1]).unwrap() < s.local(0, &[]).unwrap() {
                better += 1;
            }
        }
        assert!(better >= 95, "{better}");
    }

    #[test]
    fn score_dag_decomposes() {
        let d = linear_data(5, 200);
        let s = BicScorer::new(&d).unwrap();
        let empty = MixedGraph::empty(4);
        let base = score_dag(&d, &empty).unwrap();
        let per: f64 = (0..4).map(|v| s.local(v, &[]).unwrap()).sum();
        assert!((base - per).abs() < 1e-9);
        let mut g = empty.clone();
        g.add_directed(0, 1);
        g.add_directed(1, 2);
        let before = score_dag(&d, &g).unwrap();
        g.add_directed(0, 2);
        let after = score_dag(&d, &g).unwrap();
        let local = s.local(2, &[0, 1]).unwrap() - s.local(2, &[1]).unwrap();
        assert!((after - before - local).abs() < 1e-8);
        let mut cyc = MixedGraph::empty(4);
        cyc.add_directed(0, 1);
        cyc.add_directed(1, 2);
        cyc.add_directed(2, 0);
        assert!(matches!(score_dag(&d, &cyc), Err(Error::NotADag)));
    }

    #[test]
    fn independent_columns_stay_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d = Dataset::from_columns(vec![normals(&mut rng, 1000), normals(&mut rng, 1000)]).unwrap();
        let r = hill_climb(&d, &SearchConfig::default()).unwrap();
        assert_eq!(r.graph.edge_count(), 0);
        assert!(r.trace.is_empty());
    }

    #[test]
    fn near_copy_gets_one_edge_by_tie_break() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x = normals(&mut rng, 1000);
        let y: Vec<f64> = x.iter().map(|v| v + 0.1 * gauss(&mut rng)).collect();
        let d = Dataset::from_columns(vec![x, y]).unwrap();
        let s = BicScorer::new(&d).unwrap();
        let fwd = s.local(0, &[]).unwrap() + s.local(1, &[0]).unwrap();
        let bwd = s.local(1, &[]).unwrap() + s.local(0, &[1]).unwrap();
        assert!((fwd - bwd).abs() < 1e-10);
        let r = hill_climb(&d, &SearchConfig::default()).unwrap();
        assert_eq!(r.graph.edge_count(), 1);
        assert!(r.graph.has_directed(0, 1));
    }

    #[test]
    fn whitelist_blocks_pair() {
        let d = linear_data(6, 1000);
        let mut wl = MixedGraph::complete(4);
        wl.remove_edge(0, 1);
        let cfg = SearchConfig { whitelist: Some(wl), ..Default::default() };
        let r = hill_climb(&d, &cfg).unwrap();
        assert!(!r.graph.adjacent(0, 1));
        let free = hill_climb(&d, &SearchConfig::default()).unwrap();
        assert!(free.graph.adjacent(0, 1));
        assert!(r.move_evaluations < free.move_evaluations);
    }

    #[test]
    fn indegree_cap_holds() {
        let d = linear_data(7, 500);
        let cfg = SearchConfig { max_indegree: Some(1), ..Default::default() };
        let r = hill_climb(&d, &cfg).unwrap();
        assert!((0..4).all(|v| r.graph.parents(v).count() <= 1));
    }

    #[test]
    fn iteration_cap_is_reported() {
        let d = linear_data(8, 500);
        let r = hill_climb(&d, &SearchConfig { max_iters: 1, ..Default::default() }).unwrap();
        assert_eq!(r.trace.len(), 1);
        assert!(r.hit_iteration_cap);
    }

    #[test]
    fn tabu_forbids_undo() {
        let mut tabu = VecDeque::new();
        let mv = Move { op: Op::Add, i: 0, j: 1 };
        tabu.push_back(mv);
        tabu.push_back(mv.undo());
        let mut g = MixedGraph::empty(3);
        mv.apply(&mut g);
        let moves = legal_moves(&g, &SearchConfig::default(), &tabu);
        assert!(!moves.contains(&Move { op: Op::Delete, i: 0, j: 1 }));
        assert!(moves.contains(&Move { op: Op::Reverse, i: 0, j: 1 }));
        assert_eq!(Move { op: Op::Reverse, i: 2, j: 0 }.undo(), Move { op: Op::Reverse, i: 0, j: 2 });
    }

    fn random_linear(seed: u64, p: usize, n: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cols: Vec<Vec<f64>> = Vec::new();
        for _ in 0..p {
            let mut col = normals(&mut rng, n);
            for parent in &cols {
                if rng.gen_bool(0.4) {
                    let w: f64 = rng.gen_range(0.5..1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    for (c, x) in col.iter_mut().zip(parent) {
                        *c += w * x;
                    }
                }
            }
            cols.push(col);
        }
        Dataset::from_columns(cols).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn trace_is_monotone_and_replayable(seed in 0u64..1_000_000, p in 2usize..6, tabu in 0usize..3) {
            let d = random_linear(seed, p, 200);
            let cfg = SearchConfig { tabu_length: tabu, ..Default::default() };
            let r = hill_climb(&d, &cfg).unwrap();
            let s = BicScorer::new(&d).unwrap();
            let mut g = MixedGraph::with_names(d.names().to_vec()).unwrap();
            let mut prev = r.initial_score;
            for step in &r.trace {
                prop_assert!(step.score > prev);
                prop_assert!(step.delta > IMPROVEMENT_EPS);
                step.mv.apply(&mut g);
                prop_assert!(g.is_dag());
                let fresh = score_dag_with(&s, &g).unwrap();
                prop_assert!((fresh - step.score).abs() < 1e-8);
                prev = step.score;
            }
            prop_assert_eq!(&g, &r.graph);
            prop_assert!(r.score >= r.initial_score);
        }
    }
}
