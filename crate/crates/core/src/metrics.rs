//! Error counts for comparing estimates against a known truth.

use serde::{Deserialize, Serialize};

use crate::equivalence::enumerate_class;
use crate::error::{Error, Result};
use crate::graph::{Digraph, Pdag};
use crate::intervention::ModelState;
use crate::nodeset::NodeSet;
use crate::posterior::{difference_graph, PosteriorSummary};

/// State of an unordered pair in a partially directed graph.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Pair {
    None,
    Forward,
    Backward,
    Undirected,
}

fn pair(g: &Pdag, i: usize, j: usize) -> Pair {
    if g.is_undirected(i, j) {
        Pair::Undirected
    } else if g.is_directed(i, j) {
        Pair::Forward
    } else if g.is_directed(j, i) {
        Pair::Backward
    } else {
        Pair::None
    }
}

/// Structural Hamming distance: one per pair whose state differs, so a
/// missing edge, an extra edge, a flip or a directed/undirected mismatch
/// each count once.
pub fn shd(g1: &Pdag, g2: &Pdag) -> Result<usize> {
    if g1.n() != g2.n() {
        return Err(Error::InvalidInput(format!(
            "graphs have {} and {} vertices",
            g1.n(),
            g2.n()
        )));
    }
    let n = g1.n();
    let mut d = 0;
    for i in 0..n {
        for j in i + 1..n {
            if pair(g1, i, j) != pair(g2, i, j) {
                d += 1;
            }
        }
    }
    Ok(d)
}

/// Convenience wrapper for fully directed graphs.
pub fn shd_directed(g1: &Digraph, g2: &Digraph) -> Result<usize> {
    shd(&Pdag::from_digraph(g1), &Pdag::from_digraph(g2))
}

/// Target false positives plus false negatives, summed over the
/// interventional contexts (index 0 is skipped).
pub fn target_errors(truth: &[NodeSet], est: &[NodeSet]) -> Result<usize> {
    if truth.len() != est.len() {
        return Err(Error::InvalidInput(format!(
            "{} true and {} estimated target sets",
            truth.len(),
            est.len()
        )));
    }
    Ok(truth
        .iter()
        .zip(est)
        .skip(1)
        .map(|(t, e)| t.symmetric_difference(*e).len())
        .sum())
}

/// Edges present in exactly one of the two graphs.
pub fn diff_graph_errors(truth: &Digraph, est: &Digraph) -> Result<usize> {
    if truth.n() != est.n() {
        return Err(Error::InvalidInput(format!(
            "graphs have {} and {} vertices",
            truth.n(),
            est.n()
        )));
    }
    let n = truth.n();
    Ok((0..n)
        .map(|v| truth.parents(v).symmetric_difference(est.parents(v)).len())
        .sum())
}

/// Per-context error counts of one run against its truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// SHD of each context graph, entry 0 being the observational DAG.
    pub shd: Vec<usize>,
    /// SHD between the true and estimated equivalence-class representatives
    /// of the observational DAG.
    pub shd_class: usize,
    /// Target errors per context; entry 0 is always 0.
    pub target_errors: Vec<usize>,
    /// Difference-graph errors between context 0 and context k.
    pub diff_errors: Vec<usize>,
}

impl EvalReport {
    pub fn total_target_errors(&self) -> usize {
        self.target_errors.iter().sum()
    }

    pub fn total_diff_errors(&self) -> usize {
        self.diff_errors.iter().sum()
    }
}

/// Scores a posterior summary against the true state.
///
/// The class-level SHD compares the observational representatives of the
/// true class and of the class of the joint point estimate. When the point
/// estimate is not a valid state, the thresholded observational graph is
/// compared as is, a two-cycle counting as an undirected edge.
pub fn evaluate(truth: &ModelState, est: &PosteriorSummary) -> Result<EvalReport> {
    if truth.q() != est.q || truth.k_count() != est.k_count {
        return Err(Error::InvalidInput(format!(
            "truth has (q={}, K={}), summary has (q={}, K={})",
            truth.q(),
            truth.k_count(),
            est.q,
            est.k_count
        )));
    }
    let k_count = truth.k_count();
    let shd_ctx = (0..k_count)
        .map(|k| shd_directed(&truth.context_graph(k), &est.mpm_graph(k).graph))
        .collect::<Result<Vec<_>>>()?;
    let true_rep = enumerate_class(truth)?.representatives.swap_remove(0);
    let est_rep = match est.mpm_state() {
        Some(s) => enumerate_class(&s)?.representatives.swap_remove(0),
        None => Pdag::from_digraph(&est.mpm_graph(0).graph),
    };
    let true_targets = truth.interventions.target_sets();
    let target_errors = (0..k_count)
        .map(|k| match k {
            0 => 0,
            _ => true_targets[k].symmetric_difference(est.mpm_targets(k)).len(),
        })
        .collect();
    let d0 = truth.context_graph(0);
    let mut diff_errors = vec![0];
    for (k, &t) in true_targets.iter().enumerate().skip(1) {
        let g = difference_graph(&d0, &truth.context_graph(k), t)?;
        diff_errors.push(diff_graph_errors(&g, &est.difference_estimate(k))?);
    }
    Ok(EvalReport {
        shd: shd_ctx,
        shd_class: shd(&true_rep, &est_rep)?,
        target_errors,
        diff_errors,
    })
}
