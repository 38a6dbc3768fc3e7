use std::collections::BTreeMap;

use super::{MixedGraph, SepSets};
use crate::error::{Error, Result};

/// Result of collider orientation: the graph plus the pairs whose
/// orientation was requested both ways and therefore left undirected.
#[derive(Debug, Clone)]
pub struct VStructureOrientation {
    pub graph: MixedGraph,
    pub conflicts: Vec<(usize, usize)>,
}

/// Orients every unshielded triple `i - k - j` with `k` outside `sepset(i, j)`
/// as `i -> k <- j`.
///
/// All requests are gathered before any edge is changed, so the result does
/// not depend on triple order. An edge requested in both directions stays
/// undirected and is reported in `conflicts`.
pub fn orient_v_structures(skeleton: &MixedGraph, seps: &SepSets) -> Result<VStructureOrientation> {
    let n = skeleton.node_count();
    if skeleton.directed_count() > 0 {
        return Err(Error::InvalidGraph("collider orientation expects an undirected skeleton".into()));
    }
    // (tail, head) -> requested
    let mut requests: BTreeMap<(usize, usize), ()> = BTreeMap::new();
    for i in 0..n {
        for j in i + 1..n {
            if skeleton.adjacent(i, j) {
                continue;
            }
            let common: Vec<usize> = skeleton.neighbors(i).filter(|&k| skeleton.adjacent(k, j)).collect();
            if common.is_empty() {
                continue;
            }
            let sep = seps.get(i, j).ok_or(Error::MissingSepSet(i, j))?;
            for k in common {
                if !sep.contains(&k) {
                    requests.insert((i, k), ());
                    requests.insert((j, k), ());
                }
            }
        }
    }

    let mut graph = skeleton.clone();
    let mut conflicts = Vec::new();
    for &(a, b) in requests.keys() {
        if requests.contains_key(&(b, a)) {
            if a < b {
                conflicts.push((a, b));
            }
            continue;
        }
        graph.add_directed(a, b);
    }
    Ok(VStructureOrientation { graph, conflicts })
}

/// Applies Meek rules R1-R4 until no rule fires.
///
/// Undirected edges are visited in ascending `(a, b)` order and each rule is
/// tried in both directions. An orientation that would close a directed
/// cycle is skipped; on a valid PDAG this never happens.
pub fn meek_closure(g: &MixedGraph) -> MixedGraph {
    let mut g = g.clone();
    let n = g.node_count();
    loop {
        let mut changed = false;
        for a in 0..n {
            for b in a + 1..n {
                if !g.has_undirected(a, b) {
                    continue;
                }
                for (x, y) in [(a, b), (b, a)] {
                    if meek_fires(&g, x, y) && !g.has_directed_path(y, x) {
                        g.add_directed(x, y);
                        changed = true;
                        break;
                    }
                }
            }
        }
        if !changed {
            return g;
        }
    }
}

/// Would one of R1-R4 orient the undirected edge `a - b` as `a -> b`?
fn meek_fires(g: &MixedGraph, a: usize, b: usize) -> bool {
    let n = g.node_count();
    // R1: c -> a - b, c and b non-adjacent
    if g.parents(a).any(|c| c != b && !g.adjacent(c, b)) {
        return true;
    }
    // R2: a -> c -> b
    if g.children(a).any(|c| g.has_directed(c, b)) {
        return true;
    }
    // R3: a - c -> b, a - d -> b, c and d non-adjacent
    let mids: Vec<usize> = (0..n)
        .filter(|&c| c != b && g.has_undirected(a, c) && g.has_directed(c, b))
        .collect();
    for (x, &c) in mids.iter().enumerate() {
        if mids[x + 1..].iter().any(|&d| !g.adjacent(c, d)) {
            return true;
        }
    }
    // R4: a - c -> d -> b, c and b non-adjacent, a adjacent to d
    for c in g.undirected_neighbors(a) {
        if c == b || g.adjacent(c, b) {
            continue;
        }
        if g.children(c).any(|d| d != a && g.has_directed(d, b) && g.adjacent(a, d)) {
            return true;
        }
    }
    false
}

/// Completed PDAG of the Markov equivalence class of a DAG.
pub fn dag_to_cpdag(g: &MixedGraph) -> Result<MixedGraph> {
    if !g.is_dag() {
        return Err(Error::NotADag);
    }
    let mut pattern = g.skeleton();
    for (a, c, b) in g.v_structures() {
        pattern.add_directed(a, c);
        pattern.add_directed(b, c);
    }
    Ok(meek_closure(&pattern))
}
