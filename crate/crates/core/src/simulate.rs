//! Ground-truth generation and Gaussian SEM sampling.
//!
//! Each context has a linear SEM `x = x B + e` with independent noise of
//! variance `var[j]`. Untargeted nodes share the observational coefficients;
//! targets get their induced parents and freshly drawn coefficients.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::{Dag, Digraph};
use crate::intervention::{ContextIntervention, InterventionCollection, ModelState};
use crate::score::MultiEnvDataset;

/// Probability that a node is targeted in an interventional context.
pub const TARGET_PROB: f64 = 0.2;

/// Per-context coefficient matrices (`coef[k][(l, j)]` is the weight of
/// `l -> j`) and noise variances.
#[derive(Clone, Debug, PartialEq)]
pub struct SemParams {
    pub coef: Vec<DMatrix<f64>>,
    pub var: Vec<Vec<f64>>,
}

impl SemParams {
    pub fn q(&self) -> usize {
        self.coef[0].nrows()
    }

    pub fn k_count(&self) -> usize {
        self.coef.len()
    }

    /// Graph of nonzero coefficients in context `k`.
    pub fn support(&self, k: usize) -> Digraph {
        let q = self.q();
        let mut g = Digraph::empty(q);
        for l in 0..q {
            for j in 0..q {
                if self.coef[k][(l, j)] != 0.0 {
                    g.add_edge(l, j);
                }
            }
        }
        g
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Truth {
    pub state: ModelState,
    pub params: SemParams,
}

/// Per-pair edge probability `3 / (2q - 2)`, capped at 1, giving an expected
/// `1.5 q` edges.
pub fn edge_probability(q: usize) -> f64 {
    if q < 2 {
        return 0.0;
    }
    (3.0 / (2.0 * q as f64 - 2.0)).min(1.0)
}

fn random_ordered_dag(q: usize, p: f64, rng: &mut ChaCha8Rng) -> Digraph {
    let mut g = Digraph::empty(q);
    for j in 0..q {
        for i in 0..j {
            if rng.random::<f64>() < p {
                g.add_edge(i, j);
            }
        }
    }
    g
}

/// A coefficient uniform on `[-1, -0.1] U [0.1, 1]`.
fn coefficient(rng: &mut ChaCha8Rng) -> f64 {
    let m = rng.random_range(0.1..=1.0);
    if rng.random::<bool>() {
        m
    } else {
        -m
    }
}

/// Samples a DAG along the identity order, targets with probability 0.2 per
/// node and context, induced parents from a fresh DAG with the same order,
/// and unit-variance SEM coefficients.
pub fn gen_truth(q: usize, k_count: usize, seed: u64) -> Result<Truth> {
    if q < 2 || !(1..=64).contains(&k_count) {
        return Err(Error::InvalidInput(format!(
            "need q >= 2 and 1 <= K <= 64, got q = {q}, K = {k_count}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = edge_probability(q);
    let dag = Dag::from_digraph(random_ordered_dag(q, p, &mut rng))?;

    let mut contexts = vec![ContextIntervention::observational(q)];
    for _ in 1..k_count {
        let mut c = ContextIntervention::observational(q);
        for j in 0..q {
            if rng.random::<f64>() < TARGET_PROB {
                c.add_target(j, Default::default());
            }
        }
        let fresh = random_ordered_dag(q, p, &mut rng);
        for j in c.targets().iter() {
            c.set_induced_parents(j, fresh.parents(j));
        }
        contexts.push(c);
    }
    let state = ModelState::new(dag, InterventionCollection::new(contexts)?)?;
    debug_assert!(state.is_valid());

    let mut base = DMatrix::zeros(q, q);
    for (l, j) in state.dag.edges() {
        base[(l, j)] = coefficient(&mut rng);
    }
    let mut coef = vec![base.clone()];
    for k in 1..k_count {
        let c = state.interventions.context(k);
        let mut b = base.clone();
        for j in c.targets().iter() {
            b.column_mut(j).fill(0.0);
            for l in c.induced_parents(j).unwrap().iter() {
                b[(l, j)] = coefficient(&mut rng);
            }
        }
        coef.push(b);
    }
    let var = vec![vec![1.0; q]; k_count];
    Ok(Truth {
        state,
        params: SemParams { coef, var },
    })
}

/// Covariance `(I - B)^{-T} D (I - B)^{-1}` of context `k`.
pub fn sigma_from(params: &SemParams, k: usize) -> Result<DMatrix<f64>> {
    let q = params.q();
    let ib = DMatrix::identity(q, q) - &params.coef[k];
    let inv = ib
        .try_inverse()
        .ok_or_else(|| Error::Numeric("I - B is singular".into()))?;
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(params.var[k].clone()));
    Ok(inv.transpose() * d * inv)
}

/// `n` rows drawn by ancestral sampling from context `k`. The stream is
/// determined by `seed` and `k`.
pub fn sample_block(params: &SemParams, k: usize, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let q = params.q();
    let order = params
        .support(k)
        .topological_order()
        .ok_or_else(|| Error::Numeric(format!("context {k} coefficients are cyclic")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    let b = &params.coef[k];
    let sd: Vec<f64> = params.var[k].iter().map(|v| v.sqrt()).collect();
    let mut x = DMatrix::zeros(n, q);
    for r in 0..n {
        for &j in &order {
            let mut v = sd[j] * rng.sample::<f64, _>(StandardNormal);
            for l in 0..q {
                let w = b[(l, j)];
                if w != 0.0 {
                    v += w * x[(r, l)];
                }
            }
            x[(r, j)] = v;
        }
    }
    Ok(x)
}

/// One block per context with `n[k]` rows each.
pub fn simulate_data(params: &SemParams, n: &[usize], seed: u64) -> Result<MultiEnvDataset> {
    if n.len() != params.k_count() {
        return Err(Error::InvalidInput(format!(
            "{} sample sizes for {} contexts",
            n.len(),
            params.k_count()
        )));
    }
    let blocks = n
        .iter()
        .enumerate()
        .map(|(k, &nk)| sample_block(params, k, nk, seed))
        .collect::<Result<Vec<_>>>()?;
    MultiEnvDataset::new(params.q(), blocks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_probability_examples() {
        assert!((edge_probability(10) - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(edge_probability(2), 1.0);
    }

    #[test]
    fn single_context_has_no_targets() {
        let t = gen_truth(5, 1, 3).unwrap();
        assert_eq!(t.state.k_count(), 1);
        assert_eq!(t.params.k_count(), 1);
    }

    #[test]
    fn truths_are_valid_and_invariant() {
        for seed in 0..1000 {
            let t = gen_truth(6, 3, seed).unwrap();
            assert!(t.state.is_valid(), "seed {seed}");
            for k in 1..3 {
                let c = t.state.interventions.context(k);
                assert_eq!(t.params.support(k), t.state.context_graph(k));
                for j in (0..6).filter(|&j| !c.is_target(j)) {
                    assert_eq!(t.params.coef[k].column(j), t.params.coef[0].column(j));
                    assert_eq!(t.params.var[k][j], t.params.var[0][j]);
                }
            }
            for &w in t.params.coef[0].iter().filter(|w| **w != 0.0) {
                assert!((0.1..=1.0).contains(&w.abs()));
            }
        }
    }

    #[test]
    fn sigma_examples() {
        let p = SemParams {
            coef: vec![DMatrix::zeros(3, 3)],
            var: vec![vec![1.0; 3]],
        };
        assert_eq!(sigma_from(&p, 0).unwrap(), DMatrix::identity(3, 3));
        let b = 0.7;
        let mut c = DMatrix::zeros(2, 2);
        c[(0, 1)] = b;
        let p = SemParams { coef: vec![c], var: vec![vec![1.0; 2]] };
        let s = sigma_from(&p, 0).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[1.0, b, b, 1.0 + b * b]);
        assert!((s - want).amax() < 1e-14);
    }

    #[test]
    fn blocks_are_reproducible() {
        let t = gen_truth(4, 2, 11).unwrap();
        let a = sample_block(&t.params, 1, 50, 5).unwrap();
        let b = sample_block(&t.params, 1, 50, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(sample_block(&t.params, 0, 0, 5).unwrap().nrows(), 0);
    }

    #[test]
    fn column_means_near_zero() {
        let t = gen_truth(4, 1, 2).unwrap();
        let n = 100_000;
        let x = sample_block(&t.params, 0, n, 8).unwrap();
        let sigma = sigma_from(&t.params, 0).unwrap();
        for j in 0..4 {
            let mean = x.column(j).sum() / n as f64;
            let se = (sigma[(j, j)] / n as f64).sqrt();
            assert!(mean.abs() < 3.0 * se, "column {j}: {mean} vs {se}");
        }
    }
}
