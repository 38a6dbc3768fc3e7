//! PC-stable: conditional-independence skeleton search with separating-set
//! bookkeeping, then collider orientation and Meek closure.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::{meek_closure, orient_v_structures, d_separated, MixedGraph, SepSets};
use crate::indep::{fisher_z_test, partial_correlation, TestResult};

/// Answers `i ⟂ j | S` queries. Implementations must be symmetric in `i`, `j`
/// and deterministic.
pub trait CiOracle: Sync {
    fn names(&self) -> &[String];

    fn test(&self, i: usize, j: usize, cond: &[usize]) -> Result<TestResult>;

    fn node_count(&self) -> usize {
        self.names().len()
    }
}

/// Exact oracle reading d-separation off a known DAG. Reports p = 1 for
/// separated pairs and p = 0 otherwise.
pub struct DSeparationOracle<'a> {
    dag: &'a MixedGraph,
}

impl<'a> DSeparationOracle<'a> {
    pub fn new(dag: &'a MixedGraph) -> Result<Self> {
        if !dag.is_dag() {
            return Err(Error::NotADag);
        }
        Ok(Self { dag })
    }
}

impl CiOracle for DSeparationOracle<'_> {
    fn names(&self) -> &[String] {
        self.dag.names()
    }

    fn test(&self, i: usize, j: usize, cond: &[usize]) -> Result<TestResult> {
        let sep = d_separated(self.dag, i, j, cond)?;
        Ok(TestResult {
            statistic: if sep { 0.0 } else { f64::INFINITY },
            p_value: if sep { 1.0 } else { 0.0 },
            dof_or_n: 0,
        })
    }
}

/// Fisher z test of partial correlation on sample data.
pub struct FisherZOracle {
    names: Vec<String>,
    corr: DMatrix<f64>,
    n: usize,
}

impl FisherZOracle {
    pub fn new(d: &Dataset) -> Result<Self> {
        Ok(Self { names: d.names().to_vec(), corr: d.summary_stats()?.correlation, n: d.n() })
    }
}

impl CiOracle for FisherZOracle {
    fn names(&self) -> &[String] {
        &self.names
    }

    fn test(&self, i: usize, j: usize, cond: &[usize]) -> Result<TestResult> {
        let rho = partial_correlation(&self.corr, i, j, cond)?;
        fisher_z_test(rho, self.n, cond.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcConfig {
    pub alpha: f64,
    /// `None` means no limit.
    pub max_cond_size: Option<usize>,
    /// Upper bound on the adjacencies; pairs absent here are never tested.
    pub whitelist: Option<MixedGraph>,
}

impl PcConfig {
    /// Defaults for an exact oracle: unlimited conditioning sets.
    pub fn oracle() -> Self {
        Self { alpha: 0.5, max_cond_size: None, whitelist: None }
    }

    /// Defaults for sample data: conditioning sets of at most 3 variables.
    pub fn data(alpha: f64) -> Self {
        Self { alpha, max_cond_size: Some(3), whitelist: None }
    }

    fn validate(&self, p: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if let Some(w) = &self.whitelist {
            if w.node_count() != p {
                return Err(Error::NodeCountMismatch(w.node_count(), p));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PcStats {
    /// CI queries issued at each level of the skeleton search.
    pub queries_per_level: Vec<usize>,
    /// Queries spent finding separating sets for pairs the whitelist excluded.
    pub whitelist_queries: usize,
}

impl PcStats {
    pub fn total_queries(&self) -> usize {
        self.queries_per_level.iter().sum::<usize>() + self.whitelist_queries
    }
}

#[derive(Debug, Clone)]
pub struct PcSkeleton {
    pub graph: MixedGraph,
    pub sepsets: SepSets,
    pub stats: PcStats,
}

/// Lexicographic `k`-subsets of `items` (which must be sorted).
fn for_each_subset<F>(items: &[usize], k: usize, mut f: F) -> Result<bool>
where
    F: FnMut(&[usize]) -> Result<bool>,
{
    if k > items.len() {
        return Ok(false);
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut buf = vec![0usize; k];
    loop {
        for (b, &i) in buf.iter_mut().zip(&idx) {
            *b = items[i];
        }
        if f(&buf)? {
            return Ok(true);
        }
        // advance
        let mut pos = k;
        loop {
            if pos == 0 {
                return Ok(false);
            }
            pos -= 1;
            if idx[pos] < items.len() - k + pos {
                idx[pos] += 1;
                for q in pos + 1..k {
                    idx[q] = idx[q - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Searches level-`l` separating sets for the pair, first from `adj(i) \ {j}`,
/// then from `adj(j) \ {i}` skipping sets already tested.
fn search_pair(
    oracle: &dyn CiOracle,
    alpha: f64,
    adj: &[Vec<usize>],
    i: usize,
    j: usize,
    l: usize,
) -> Result<(Option<Vec<usize>>, usize)> {
    let side_i: Vec<usize> = adj[i].iter().copied().filter(|&v| v != j).collect();
    let side_j: Vec<usize> = adj[j].iter().copied().filter(|&v| v != i).collect();
    let mut queries = 0;
    let mut found = None;
    for (first, cands) in [(true, &side_i), (false, &side_j)] {
        let hit = for_each_subset(cands, l, |s| {
            if !first && s.iter().all(|v| side_i.contains(v)) {
                return Ok(false);
            }
            queries += 1;
            if oracle.test(i, j, s)?.p_value > alpha {
                found = Some(s.to_vec());
                return Ok(true);
            }
            Ok(false)
        })?;
        if hit {
            break;
        }
    }
    Ok((found, queries))
}

/// PC-stable skeleton search.
///
/// Level `l` works on the adjacency snapshot taken when the level starts; all
/// of the level's queries finish before any edge is removed, so the result
/// does not depend on pair order (and queries within a level run in parallel).
pub fn pc_skeleton(oracle: &dyn CiOracle, cfg: &PcConfig) -> Result<PcSkeleton> {
    let p = oracle.node_count();
    cfg.validate(p)?;
    let mut g = MixedGraph::with_names(oracle.names().to_vec())?;
    for i in 0..p {
        for j in i + 1..p {
            if cfg.whitelist.as_ref().is_none_or(|w| w.adjacent(i, j)) {
                g.add_undirected(i, j);
            }
        }
    }
    let mut sepsets = SepSets::new();
    let mut stats = PcStats::default();

    for l in 0.. {
        if cfg.max_cond_size.is_some_and(|m| l > m) {
            break;
        }
        let adj: Vec<Vec<usize>> = (0..p).map(|i| g.neighbors(i).collect()).collect();
        let pairs: Vec<(usize, usize)> = g
            .edges()
            .iter()
            .map(|e| (e.a, e.b))
            .filter(|&(i, j)| adj[i].len() > l || adj[j].len() > l)
            .collect();
        if pairs.is_empty() {
            break;
        }
        let results: Vec<(Option<Vec<usize>>, usize)> = pairs
            .par_iter()
            .map(|&(i, j)| search_pair(oracle, cfg.alpha, &adj, i, j, l))
            .collect::<Result<_>>()?;
        let mut level_queries = 0;
        for (&(i, j), (found, q)) in pairs.iter().zip(results) {
            level_queries += q;
            if let Some(s) = found {
                g.remove_edge(i, j);
                sepsets.insert(i, j, &s);
            }
        }
        stats.queries_per_level.push(level_queries);
    }

    if cfg.whitelist.is_some() {
        fill_excluded_sepsets(oracle, cfg, &g, &mut sepsets, &mut stats)?;
    }
    Ok(PcSkeleton { graph: g, sepsets, stats })
}

/// Pairs dropped by the whitelist were never tested. Those that close an
/// unshielded triple get a separating set from the final adjacencies: the
/// first accepted one, or failing that the set with the largest p-value.
fn fill_excluded_sepsets(
    oracle: &dyn CiOracle,
    cfg: &PcConfig,
    g: &MixedGraph,
    sepsets: &mut SepSets,
    stats: &mut PcStats,
) -> Result<()> {
    let p = g.node_count();
    let max_l = cfg.max_cond_size.unwrap_or(p);
    for i in 0..p {
        for j in i + 1..p {
            if g.adjacent(i, j) || sepsets.contains_pair(i, j) {
                continue;
            }
            if !g.neighbors(i).any(|k| g.adjacent(k, j)) {
                continue;
            }
            let mut cands: Vec<usize> = g.neighbors(i).chain(g.neighbors(j)).filter(|&v| v != i && v != j).collect();
            cands.sort_unstable();
            cands.dedup();
            let mut best: (f64, Vec<usize>) = (-1.0, Vec::new());
            let mut accepted = None;
            for l in 0..=max_l.min(cands.len()) {
                let hit = for_each_subset(&cands, l, |s| {
                    stats.whitelist_queries += 1;
                    let pv = oracle.test(i, j, s)?.p_value;
                    if pv > best.0 {
                        best = (pv, s.to_vec());
                    }
                    if pv > cfg.alpha {
                        accepted = Some(s.to_vec());
                        return Ok(true);
                    }
                    Ok(false)
                })?;
                if hit {
                    break;
                }
            }
            sepsets.insert(i, j, &accepted.unwrap_or(best.1));
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PcOutput {
    pub graph: MixedGraph,
    pub skeleton: MixedGraph,
    pub sepsets: SepSets,
    /// Edges left undirected because colliders disagreed on them.
    pub conflicts: Vec<(usize, usize)>,
    pub stats: PcStats,
}

/// Skeleton search, collider orientation, then Meek closure.
pub fn pc(oracle: &dyn CiOracle, cfg: &PcConfig) -> Result<PcOutput> {
    let sk = pc_skeleton(oracle, cfg)?;
    let oriented = orient_v_structures(&sk.graph, &sk.sepsets)?;
    let graph = meek_closure(&oriented.graph);
    Ok(PcOutput {
        graph,
        skeleton: sk.graph,
        sepsets: sk.sepsets,
        conflicts: oriented.conflicts,
        stats: sk.stats,
    })
}
