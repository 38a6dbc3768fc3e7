use serde::{Deserialize, Serialize};

use super::MixedGraph;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphMetrics {
    pub shd: usize,
    pub skeleton_precision: f64,
    pub skeleton_recall: f64,
    pub orientation_accuracy: f64,
}

impl GraphMetrics {
    /// Harmonic mean of skeleton precision and recall.
    pub fn skeleton_f1(&self) -> f64 {
        let (p, r) = (self.skeleton_precision, self.skeleton_recall);
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn check_sizes(a: &MixedGraph, b: &MixedGraph) -> Result<()> {
    if a.node_count() != b.node_count() {
        return Err(Error::NodeCountMismatch(a.node_count(), b.node_count()));
    }
    Ok(())
}

/// Structural Hamming distance: one unit per unordered pair whose adjacency
/// or mark (including direction) differs.
pub fn shd(g1: &MixedGraph, g2: &MixedGraph) -> Result<usize> {
    check_sizes(g1, g2)?;
    let n = g1.node_count();
    let mut d = 0;
    for i in 0..n {
        for j in i + 1..n {
            if g1.cell(i, j) != g2.cell(i, j) {
                d += 1;
            }
        }
    }
    Ok(d)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Skeleton precision/recall, orientation accuracy and SHD of `pred` against `truth`.
/// Empty denominators give 1.0.
pub fn skeleton_metrics(pred: &MixedGraph, truth: &MixedGraph) -> Result<GraphMetrics> {
    check_sizes(pred, truth)?;
    let n = pred.node_count();
    let (mut tp, mut n_pred, mut n_truth) = (0, 0, 0);
    let (mut dir_ok, mut dir_total) = (0, 0);
    for i in 0..n {
        for j in i + 1..n {
            let (p, t) = (pred.adjacent(i, j), truth.adjacent(i, j));
            n_pred += p as usize;
            n_truth += t as usize;
            if p && t {
                tp += 1;
                for (a, b) in [(i, j), (j, i)] {
                    if pred.has_directed(a, b) {
                        dir_total += 1;
                        dir_ok += truth.has_directed(a, b) as usize;
                    }
                }
            }
        }
    }
    Ok(GraphMetrics {
        shd: shd(pred, truth)?,
        skeleton_precision: ratio(tp, n_pred),
        skeleton_recall: ratio(tp, n_truth),
        orientation_accuracy: ratio(dir_ok, dir_total),
    })
}
