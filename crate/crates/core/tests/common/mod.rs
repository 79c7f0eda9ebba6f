#![allow(dead_code)]

use gidag::mcmc::proposal_chain_walk;
use gidag::score::{BgeScore, Hyperparams};
use gidag::simulate::{gen_truth, simulate_data};
use gidag::{Dag, Digraph, ModelState, NodeSet};
use proptest::prelude::*;

pub fn set(v: &[usize]) -> NodeSet {
    v.iter().copied().collect()
}

/// A state reached by a proposal-only walk, so every valid state has positive
/// probability.
pub fn random_state(q: usize, k_count: usize, steps: u64, seed: u64) -> ModelState {
    let trace = proposal_chain_walk(&ModelState::empty(q, k_count), steps, seed).unwrap();
    trace.last().unwrap().clone()
}

/// Scorer on data simulated from an unrelated random truth.
pub fn simulated_scorer(q: usize, k_count: usize, n: usize, seed: u64) -> BgeScore {
    let t = gen_truth(q, k_count, seed).unwrap();
    let data = simulate_data(&t.params, &vec![n; k_count], seed ^ 0x5eed).unwrap();
    BgeScore::new(&data, Hyperparams::default_for(q)).unwrap()
}

/// Random DAG on `n` vertices: a permutation plus a forward-edge mask.
pub fn arb_dag_n(n: usize) -> impl Strategy<Value = Dag> {
    let pairs = n * (n - 1) / 2;
    (
        Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
        proptest::collection::vec(any::<bool>(), pairs),
    )
        .prop_map(move |(perm, mask)| {
            let mut g = Digraph::empty(n);
            let mut m = mask.into_iter();
            for i in 0..n {
                for j in i + 1..n {
                    if m.next().unwrap() {
                        g.add_edge(perm[i], perm[j]);
                    }
                }
            }
            Dag::from_digraph(g).unwrap()
        })
}

pub fn arb_dag(max_n: usize) -> impl Strategy<Value = Dag> {
    (1..=max_n).prop_flat_map(arb_dag_n)
}
