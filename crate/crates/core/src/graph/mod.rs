//! Mixed graphs (undirected and directed edges in one structure) and the
//! graph algorithms shared by every discovery method.
//!
//! A [`MixedGraph`] covers skeletons, PDAGs/CPDAGs and DAGs. Bidirected or
//! circle marks are not representable.

mod dsep;
mod io;
mod metrics;
mod orient;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dsep::d_separated;
pub use io::{parse_edge_csv, serialize, Format};
pub use metrics::{shd, skeleton_metrics, GraphMetrics};
pub use orient::{dag_to_cpdag, meek_closure, orient_v_structures, VStructureOrientation};

/// Edge mark for an unordered pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mark {
    Undirected,
    Directed,
}

/// Edge as seen from the pair `(a, b)`. For directed edges `a` is the tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub mark: Mark,
}

/// Endpoint state of the ordered cell `(i, j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
enum Cell {
    #[default]
    Empty,
    Undirected,
    /// i -> j
    Out,
    /// i <- j
    In,
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct MixedGraph {
    names: Vec<String>,
    cells: Vec<Cell>,
}

impl MixedGraph {
    /// Empty graph with default names `X0..X{n-1}`.
    pub fn empty(n: usize) -> Self {
        Self::with_names((0..n).map(|i| format!("X{i}")).collect()).expect("default names are unique")
    }

    pub fn with_names(names: Vec<String>) -> Result<Self> {
        validate_names(&names)?;
        let n = names.len();
        Ok(Self {
            names,
            cells: vec![Cell::Empty; n * n],
        })
    }

    /// Complete undirected graph.
    pub fn complete(n: usize) -> Self {
        let mut g = Self::empty(n);
        for i in 0..n {
            for j in i + 1..n {
                g.add_undirected(i, j);
            }
        }
        g
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn cell(&self, i: usize, j: usize) -> Cell {
        self.cells[i * self.node_count() + j]
    }

    fn set(&mut self, i: usize, j: usize, c: Cell) {
        let n = self.node_count();
        assert!(i < n && j < n, "node index out of range");
        assert!(i != j, "self-loops are not allowed");
        let mirror = match c {
            Cell::Empty => Cell::Empty,
            Cell::Undirected => Cell::Undirected,
            Cell::Out => Cell::In,
            Cell::In => Cell::Out,
        };
        self.cells[i * n + j] = c;
        self.cells[j * n + i] = mirror;
    }

    /// Adds or replaces the edge between `i` and `j` with `i - j`.
    pub fn add_undirected(&mut self, i: usize, j: usize) {
        self.set(i, j, Cell::Undirected);
    }

    /// Adds or replaces the edge between `i` and `j` with `i -> j`.
    pub fn add_directed(&mut self, i: usize, j: usize) {
        self.set(i, j, Cell::Out);
    }

    pub fn remove_edge(&mut self, i: usize, j: usize) {
        self.set(i, j, Cell::Empty);
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        i != j && self.cell(i, j) != Cell::Empty
    }

    /// True iff `i -> j`.
    pub fn has_directed(&self, i: usize, j: usize) -> bool {
        i != j && self.cell(i, j) == Cell::Out
    }

    pub fn has_undirected(&self, i: usize, j: usize) -> bool {
        i != j && self.cell(i, j) == Cell::Undirected
    }

    pub fn mark(&self, i: usize, j: usize) -> Option<Mark> {
        match self.cell(i, j) {
            Cell::Empty => None,
            Cell::Undirected => Some(Mark::Undirected),
            _ => Some(Mark::Directed),
        }
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.node_count()).filter(move |&j| self.adjacent(i, j))
    }

    pub fn parents(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.node_count()).filter(move |&j| self.has_directed(j, i))
    }

    pub fn children(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.node_count()).filter(move |&j| self.has_directed(i, j))
    }

    pub fn undirected_neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.node_count()).filter(move |&j| self.has_undirected(i, j))
    }

    /// All edges, ordered by `(a, b)`. Undirected edges have `a < b`.
    pub fn edges(&self) -> Vec<Edge> {
        let n = self.node_count();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                match self.cell(i, j) {
                    Cell::Undirected if i < j => out.push(Edge { a: i, b: j, mark: Mark::Undirected }),
                    Cell::Out => out.push(Edge { a: i, b: j, mark: Mark::Directed }),
                    _ => {}
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.cells.iter().filter(|c| **c != Cell::Empty).count() / 2
    }

    pub fn directed_count(&self) -> usize {
        self.cells.iter().filter(|c| **c == Cell::Out).count()
    }

    pub fn undirected_count(&self) -> usize {
        self.edge_count() - self.directed_count()
    }

    /// Same adjacencies, all edges undirected.
    pub fn skeleton(&self) -> MixedGraph {
        let mut g = self.clone();
        for c in g.cells.iter_mut() {
            if *c != Cell::Empty {
                *c = Cell::Undirected;
            }
        }
        g
    }

    pub fn same_skeleton(&self, other: &MixedGraph) -> bool {
        self.node_count() == other.node_count()
            && self
                .cells
                .iter()
                .zip(&other.cells)
                .all(|(a, b)| (*a == Cell::Empty) == (*b == Cell::Empty))
    }

    /// Adjacency of `self` is a subset of adjacency of `other`.
    pub fn adjacency_subset_of(&self, other: &MixedGraph) -> bool {
        self.node_count() == other.node_count()
            && self
                .cells
                .iter()
                .zip(&other.cells)
                .all(|(a, b)| *a == Cell::Empty || *b != Cell::Empty)
    }

    /// True iff the directed part contains a cycle (undirected edges ignored).
    pub fn has_directed_cycle(&self) -> bool {
        self.directed_order().is_none()
    }

    /// Kahn's algorithm over directed edges, smallest ready index first.
    fn directed_order(&self) -> Option<Vec<usize>> {
        let n = self.node_count();
        let mut indeg: Vec<usize> = (0..n).map(|i| self.parents(i).count()).collect();
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for c in self.children(v) {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// True iff every edge is directed and there is no directed cycle.
    pub fn is_dag(&self) -> bool {
        self.undirected_count() == 0 && !self.has_directed_cycle()
    }

    /// Topological order; ties go to the smallest index.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        if self.undirected_count() > 0 {
            return Err(Error::NotADag);
        }
        self.directed_order().ok_or(Error::NotADag)
    }

    /// Is there a directed path `from ⇝ to` of length ≥ 1?
    pub fn has_directed_path(&self, from: usize, to: usize) -> bool {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([from]);
        while let Some(v) = queue.pop_front() {
            for c in self.children(v) {
                if c == to {
                    return true;
                }
                if !seen[c] {
                    seen[c] = true;
                    queue.push_back(c);
                }
            }
        }
        false
    }

    /// One directed cycle as a node sequence `v0 -> v1 -> ... -> v0`, if any.
    /// The search starts from the smallest index and follows smallest children.
    pub fn find_directed_cycle(&self) -> Option<Vec<usize>> {
        let n = self.node_count();
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state = vec![0u8; n];
        let mut stack: Vec<usize> = Vec::new();
        for root in 0..n {
            if state[root] != 0 {
                continue;
            }
            if let Some(c) = self.cycle_dfs(root, &mut state, &mut stack) {
                return Some(c);
            }
        }
        None
    }

    fn cycle_dfs(&self, v: usize, state: &mut [u8], stack: &mut Vec<usize>) -> Option<Vec<usize>> {
        state[v] = 1;
        stack.push(v);
        let kids: Vec<usize> = self.children(v).collect();
        for c in kids {
            match state[c] {
                1 => {
                    let pos = stack.iter().position(|&x| x == c).expect("on stack");
                    return Some(stack[pos..].to_vec());
                }
                0 => {
                    if let Some(cy) = self.cycle_dfs(c, state, stack) {
                        return Some(cy);
                    }
                }
                _ => {}
            }
        }
        stack.pop();
        state[v] = 2;
        None
    }

    /// V-structures `a -> c <- b` with `a < b` non-adjacent, as `(a, c, b)`.
    pub fn v_structures(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for c in 0..self.node_count() {
            let pa: Vec<usize> = self.parents(c).collect();
            for (x, &a) in pa.iter().enumerate() {
                for &b in &pa[x + 1..] {
                    if !self.adjacent(a, b) {
                        out.push((a, c, b));
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Relabel nodes: node `i` of `self` becomes node `perm[i]` of the result.
    pub fn permuted(&self, perm: &[usize]) -> MixedGraph {
        let n = self.node_count();
        assert_eq!(perm.len(), n);
        let mut names = vec![String::new(); n];
        for i in 0..n {
            names[perm[i]] = self.names[i].clone();
        }
        let mut g = MixedGraph::with_names(names).expect("permutation keeps names unique");
        for e in self.edges() {
            match e.mark {
                Mark::Directed => g.add_directed(perm[e.a], perm[e.b]),
                Mark::Undirected => g.add_undirected(perm[e.a], perm[e.b]),
            }
        }
        g
    }
}

impl fmt::Debug for MixedGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MixedGraph({} nodes; ", self.node_count())?;
        for (k, e) in self.edges().iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            let arrow = if e.mark == Mark::Directed { "->" } else { "--" };
            write!(f, "{} {} {}", self.names[e.a], arrow, self.names[e.b])?;
        }
        write!(f, ")")
    }
}

fn validate_names(names: &[String]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for n in names {
        if n.is_empty() {
            return Err(Error::InvalidGraph("empty node name".into()));
        }
        if !seen.insert(n.as_str()) {
            return Err(Error::DuplicateName(n.clone()));
        }
    }
    Ok(())
}

/// Separating sets recorded by constraint-based search, keyed by unordered pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SepSets {
    map: BTreeMap<(usize, usize), Vec<usize>>,
}

impl SepSets {
    pub fn new() -> Self {
        Self::default()
    }

    fn key(i: usize, j: usize) -> (usize, usize) {
        (i.min(j), i.max(j))
    }

    /// Records `set` for the pair. The set is stored sorted; `i` and `j` must not be in it.
    pub fn insert(&mut self, i: usize, j: usize, set: &[usize]) {
        assert!(i != j && !set.contains(&i) && !set.contains(&j), "separating set contains an endpoint");
        let mut s = set.to_vec();
        s.sort_unstable();
        s.dedup();
        self.map.insert(Self::key(i, j), s);
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&[usize]> {
        self.map.get(&Self::key(i, j)).map(Vec::as_slice)
    }

    pub fn contains_pair(&self, i: usize, j: usize) -> bool {
        self.map.contains_key(&Self::key(i, j))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &[usize])> {
        self.map.iter().map(|(k, v)| (*k, v.as_slice()))
    }
}
