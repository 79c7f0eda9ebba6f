//! Posterior summaries from chain tallies, point estimates, and exact
//! enumeration of the posterior for tiny problems.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::{Dag, Digraph};
use crate::intervention::{enumerate_states, ContextIntervention, InterventionCollection, ModelState};
use crate::mcmc::Tallies;
use crate::modelprior::{log_prior_joint, PriorHyper};
use crate::nodeset::NodeSet;
use crate::score::BgeScore;

/// Edge threshold: included iff PPI is strictly above.
pub const EDGE_THRESHOLD: f64 = 0.5;
/// Target threshold: included iff probability is at least this.
pub const TARGET_THRESHOLD: f64 = 0.5;
/// Difference-graph threshold: included iff frequency is strictly above.
pub const DIFF_THRESHOLD: f64 = 0.5;

/// Largest state space [`exact_posterior`] will enumerate.
pub const EXACT_LIMIT: usize = 10_000_000;

fn check_nonempty(t: &Tallies) -> Result<f64> {
    if t.iterations == 0 {
        return Err(Error::InvalidInput("no post-burn-in iterations recorded".into()));
    }
    Ok(t.iterations as f64)
}

/// Edge inclusion probabilities per context, row-major `q x q`.
pub fn edge_ppi(t: &Tallies) -> Result<Vec<Vec<f64>>> {
    let s = check_nonempty(t)?;
    Ok(t.edges
        .iter()
        .map(|row| row.iter().map(|&c| c as f64 / s).collect())
        .collect())
}

/// Target inclusion probabilities indexed `[k][j]`; context 0 is all zero.
pub fn target_probability(t: &Tallies) -> Result<Vec<Vec<f64>>> {
    let s = check_nonempty(t)?;
    let mut out: Vec<Vec<f64>> = t
        .targets
        .iter()
        .map(|row| row.iter().map(|&c| c as f64 / s).collect())
        .collect();
    out[0].iter_mut().for_each(|x| *x = 0.0);
    Ok(out)
}

/// Difference-graph edge frequencies per context, row-major `q x q`.
pub fn difference_probability(t: &Tallies) -> Result<Vec<Vec<f64>>> {
    let s = check_nonempty(t)?;
    Ok(t.diff
        .iter()
        .map(|row| row.iter().map(|&c| c as f64 / s).collect())
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorSummary {
    pub q: usize,
    pub k_count: usize,
    pub iterations: u64,
    pub ppi: Vec<Vec<f64>>,
    pub target_prob: Vec<Vec<f64>>,
    pub diff_prob: Vec<Vec<f64>>,
}

impl PosteriorSummary {
    pub fn from_tallies(t: &Tallies) -> Result<Self> {
        Ok(PosteriorSummary {
            q: t.q,
            k_count: t.k_count,
            iterations: t.iterations,
            ppi: edge_ppi(t)?,
            target_prob: target_probability(t)?,
            diff_prob: difference_probability(t)?,
        })
    }

    pub fn mpm_graph(&self, k: usize) -> MpmGraph {
        mpm_graph(&self.ppi[k], self.q)
    }

    pub fn mpm_targets(&self, k: usize) -> NodeSet {
        mpm_targets(&self.target_prob[k])
    }

    pub fn difference_estimate(&self, k: usize) -> Digraph {
        threshold(&self.diff_prob[k], self.q, |p| p > DIFF_THRESHOLD)
    }

    /// Joint point estimate: the DAG from context-0 PPIs, targets from
    /// target probabilities, induced parents from each context's MPM graph.
    /// `None` when the pieces do not form a valid state.
    pub fn mpm_state(&self) -> Option<ModelState> {
        let d = self.mpm_graph(0);
        let dag = Dag::from_digraph(d.graph).ok()?;
        let mut contexts = vec![ContextIntervention::observational(self.q)];
        for k in 1..self.k_count {
            let gk = self.mpm_graph(k).graph;
            let mut c = ContextIntervention::observational(self.q);
            for j in self.mpm_targets(k).iter() {
                c.add_target(j, gk.parents(j));
            }
            contexts.push(c);
        }
        let state = ModelState::new(dag, InterventionCollection::new(contexts).ok()?).ok()?;
        state.is_valid().then_some(state)
    }
}

fn threshold(p: &[f64], q: usize, keep: impl Fn(f64) -> bool) -> Digraph {
    let mut g = Digraph::empty(q);
    for u in 0..q {
        for v in 0..q {
            if u != v && keep(p[u * q + v]) {
                g.add_edge(u, v);
            }
        }
    }
    g
}

/// A thresholded graph, which need not be acyclic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MpmGraph {
    pub graph: Digraph,
    pub acyclic: bool,
}

/// Edges with PPI strictly above one half.
pub fn mpm_graph(ppi: &[f64], q: usize) -> MpmGraph {
    let graph = threshold(ppi, q, |p| p > EDGE_THRESHOLD);
    let acyclic = graph.is_acyclic();
    MpmGraph { graph, acyclic }
}

/// Vertices with target probability at least one half.
pub fn mpm_targets(prob: &[f64]) -> NodeSet {
    prob.iter()
        .enumerate()
        .filter(|(_, &p)| p >= TARGET_THRESHOLD)
        .map(|(j, _)| j)
        .collect()
}

/// Edges `u -> v` with `v` targeted and `u` a parent of `v` in either graph.
pub fn difference_graph(d1: &Digraph, dk: &Digraph, targets: NodeSet) -> Result<Digraph> {
    if d1.n() != dk.n() {
        return Err(Error::InvalidInput("graphs differ in vertex count".into()));
    }
    let mut g = Digraph::empty(d1.n());
    for v in targets.iter() {
        for u in d1.parents(v).union(dk.parents(v)).iter() {
            g.add_edge(u, v);
        }
    }
    Ok(g)
}

/// Normalized posterior over every valid state.
#[derive(Clone, Debug)]
pub struct ExactPosterior {
    pub states: Vec<ModelState>,
    pub log_weights: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ExactPosterior {
    pub fn as_map(&self) -> BTreeMap<&ModelState, f64> {
        self.states.iter().zip(self.probs.iter().copied()).collect()
    }
}

/// Enumerates every valid state and normalizes score plus prior.
pub fn exact_posterior(scorer: &mut BgeScore, priors: &PriorHyper) -> Result<ExactPosterior> {
    let (q, k_count) = (scorer.q(), scorer.k_count());
    if q > 6 {
        return Err(Error::Capacity {
            what: "exact posterior vertex count",
            limit: 6,
            reached: q,
        });
    }
    let states = enumerate_states(q, k_count, q, EXACT_LIMIT)?;
    let log_weights = states
        .iter()
        .map(|s| Ok(scorer.log_marginal_likelihood(s)? + log_prior_joint(s, priors)?))
        .collect::<Result<Vec<f64>>>()?;
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
    let z: f64 = unnorm.iter().sum();
    let probs = unnorm.iter().map(|u| u / z).collect();
    Ok(ExactPosterior { states, log_weights, probs })
}

/// Total-variation distance between the exact posterior and visit counts.
pub fn total_variation(exact: &ExactPosterior, counts: &BTreeMap<ModelState, u64>) -> f64 {
    let total: u64 = counts.values().sum();
    let total = total.max(1) as f64;
    let mut tv = 0.0;
    let mut matched = 0.0;
    for (s, p) in exact.states.iter().zip(&exact.probs) {
        let f = counts.get(s).copied().unwrap_or(0) as f64 / total;
        matched += f;
        tv += (p - f).abs();
    }
    // mass on states outside the enumeration
    tv += 1.0 - matched;
    0.5 * tv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{Hyperparams, MultiEnvDataset};
    use nalgebra::DMatrix;

    fn set(v: &[usize]) -> NodeSet {
        v.iter().copied().collect()
    }

    #[test]
    fn ppi_hand_tally() {
        let yes = ModelState::new(
            Dag::from_edges(2, &[(0, 1)]).unwrap(),
            InterventionCollection::observational(2, 1),
        )
        .unwrap();
        let no = ModelState::empty(2, 1);
        let t = Tallies::from_samples(2, 1, [&yes, &yes, &no, &yes]);
        let j = edge_ppi(&t).unwrap();
        assert_eq!(j[0][1], 0.75);
        assert_eq!(j[0][2], 0.0);
        let t = Tallies::from_samples(2, 1, [&yes, &yes]);
        assert_eq!(edge_ppi(&t).unwrap()[0][1], 1.0);
        assert!(edge_ppi(&Tallies::new(2, 1)).is_err());
    }

    #[test]
    fn target_hand_tally() {
        let mut hit = ModelState::empty(2, 2);
        hit.interventions.context_mut(1).add_target(1, NodeSet::EMPTY);
        let miss = ModelState::empty(2, 2);
        let t = Tallies::from_samples(2, 2, [&hit, &miss, &miss, &miss]);
        let p = target_probability(&t).unwrap();
        assert_eq!(p[1][1], 0.25);
        assert_eq!(p[0], vec![0.0, 0.0]);
        let t = Tallies::from_samples(2, 2, [&hit]);
        assert_eq!(target_probability(&t).unwrap()[1][1], 1.0);
    }

    #[test]
    fn thresholds_at_one_half() {
        let m = mpm_graph(&[0.0, 0.5, 0.51, 0.0], 2);
        assert_eq!(m.graph.edges(), vec![(1, 0)]);
        assert_eq!(mpm_targets(&[0.5, 0.49]), set(&[0]));
        assert!(mpm_graph(&[0.0; 4], 2).graph.edges().is_empty());
        let all = mpm_graph(&[0.0, 1.0, 1.0, 0.0], 2);
        assert_eq!(all.graph.edge_count(), 2);
        assert!(!all.acyclic);
    }

    #[test]
    fn difference_graph_examples() {
        let d1 = Digraph::from_edges(2, &[(0, 1)]).unwrap();
        let empty = Digraph::empty(2);
        assert_eq!(
            difference_graph(&d1, &empty, NodeSet::EMPTY).unwrap().edge_count(),
            0
        );
        assert_eq!(
            difference_graph(&d1, &empty, set(&[1])).unwrap().edges(),
            vec![(0, 1)]
        );
        assert_eq!(
            difference_graph(&d1, &d1, set(&[1])).unwrap().edges(),
            vec![(0, 1)]
        );
    }

    fn scorer(q: usize, k: usize, n: usize) -> BgeScore {
        let x = DMatrix::from_fn(n, q, |i, j| (((i * 5 + j * 11) % 7) as f64 - 3.0) / 2.0);
        let data = MultiEnvDataset::new(q, vec![x; k]).unwrap();
        BgeScore::new(&data, Hyperparams::default_for(q)).unwrap()
    }

    #[test]
    fn exact_small_spaces() {
        let mut s = scorer(1, 1, 4);
        let e = exact_posterior(&mut s, &PriorHyper::default()).unwrap();
        assert_eq!(e.states.len(), 1);
        assert_eq!(e.probs[0], 1.0);

        let mut s = scorer(2, 1, 4);
        let e = exact_posterior(&mut s, &PriorHyper::default()).unwrap();
        assert_eq!(e.states.len(), 3);
        assert!((e.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tv_of_exact_frequencies_is_zero() {
        let mut s = scorer(2, 2, 5);
        let e = exact_posterior(&mut s, &PriorHyper::default()).unwrap();
        // integer counts proportional to rounded probabilities
        let counts: BTreeMap<ModelState, u64> = e
            .states
            .iter()
            .zip(&e.probs)
            .map(|(st, p)| (st.clone(), (p * 1e9).round() as u64))
            .collect();
        assert!(total_variation(&e, &counts) < 1e-6);
        assert!((total_variation(&e, &BTreeMap::new()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mpm_state_round_trip() {
        let mut st = ModelState::empty(3, 2);
        st.dag = Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        st.interventions.context_mut(1).add_target(2, set(&[0]));
        let t = Tallies::from_samples(3, 2, [&st]);
        let sum = PosteriorSummary::from_tallies(&t).unwrap();
        assert_eq!(sum.mpm_state().unwrap(), st);
        assert_eq!(sum.difference_estimate(1).edges(), vec![(0, 2), (1, 2)]);
    }
}
