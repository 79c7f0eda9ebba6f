//! Interventional BGe marginal likelihood.
//!
//! Under a Gaussian model with a Wishart prior on the precision matrix the
//! marginal density of any column subset is available in closed form. The
//! likelihood of a (DAG, intervention) pair factorizes over nodes: node `j`
//! contributes one family/parent ratio pooled over the contexts that leave
//! `j` untouched, plus one ratio per context that targets it.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::intervention::{InterventionCollection, ModelState};
use crate::nodeset::NodeSet;

/// Eigenvalue floor used when the Cholesky factorization fails.
const EIGEN_TOL: f64 = 1e-10;

/// A set of context indices (at most 64 contexts).
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContextSet(u64);

impl ContextSet {
    pub const EMPTY: ContextSet = ContextSet(0);

    pub fn full(k_count: usize) -> Self {
        debug_assert!(k_count <= 64);
        if k_count == 64 {
            ContextSet(u64::MAX)
        } else {
            ContextSet((1u64 << k_count) - 1)
        }
    }

    pub fn singleton(k: usize) -> Self {
        ContextSet(1u64 << k)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn contains(self, k: usize) -> bool {
        k < 64 && (self.0 >> k) & 1 == 1
    }

    pub fn insert(&mut self, k: usize) {
        self.0 |= 1u64 << k;
    }

    pub fn remove(&mut self, k: usize) {
        self.0 &= !(1u64 << k);
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Indices in ascending order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..64).filter(move |&k| self.contains(k))
    }
}

impl std::fmt::Debug for ContextSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Contexts in which `j` is not a target. Always contains context 0.
pub fn contexts_not_intervened(interventions: &InterventionCollection, j: usize) -> ContextSet {
    let mut s = ContextSet::EMPTY;
    for (k, c) in interventions.contexts().iter().enumerate() {
        if !c.is_target(j) {
            s.insert(k);
        }
    }
    s
}

/// Wishart prior hyperparameters: degrees of freedom `a` and scale `U`.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparams {
    a: f64,
    u: DMatrix<f64>,
}

impl Hyperparams {
    pub fn new(a: f64, u: DMatrix<f64>) -> Result<Self> {
        let q = u.nrows();
        if q == 0 || u.ncols() != q {
            return Err(Error::Hyperparameter("U must be a nonempty square matrix".into()));
        }
        if !a.is_finite() || a <= q as f64 - 1.0 {
            return Err(Error::Hyperparameter(format!(
                "degrees of freedom a = {a} must exceed q - 1 = {}",
                q - 1
            )));
        }
        let scale = u.amax().max(1.0);
        for i in 0..q {
            for j in 0..i {
                if (u[(i, j)] - u[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::Hyperparameter("U must be symmetric".into()));
                }
            }
        }
        if u.clone().cholesky().is_none() {
            return Err(Error::Hyperparameter("U must be positive definite".into()));
        }
        Ok(Hyperparams { a, u })
    }

    /// `a = q`, `U = I_q`.
    pub fn default_for(q: usize) -> Self {
        Hyperparams {
            a: q as f64,
            u: DMatrix::identity(q, q),
        }
    }

    pub fn q(&self) -> usize {
        self.u.nrows()
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }
}

/// Observations from `K` contexts; block 0 is observational.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiEnvDataset {
    q: usize,
    blocks: Vec<DMatrix<f64>>,
}

impl MultiEnvDataset {
    /// Each block is an `n_k x q` matrix.
    pub fn new(q: usize, blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        if q == 0 {
            return Err(Error::Data("at least one variable is required".into()));
        }
        if blocks.is_empty() || blocks.len() > 64 {
            return Err(Error::Data("between 1 and 64 contexts are required".into()));
        }
        for (k, b) in blocks.iter().enumerate() {
            if b.ncols() != q {
                return Err(Error::Data(format!(
                    "context {} has {} columns, expected {q}",
                    k + 1,
                    b.ncols()
                )));
            }
            if b.iter().any(|x| !x.is_finite()) {
                return Err(Error::Data(format!("context {} has non-finite values", k + 1)));
            }
        }
        Ok(MultiEnvDataset { q, blocks })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn k_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn n(&self, k: usize) -> usize {
        self.blocks[k].nrows()
    }

    pub fn total_n(&self) -> usize {
        self.blocks.iter().map(|b| b.nrows()).sum()
    }

    pub fn block(&self, k: usize) -> &DMatrix<f64> {
        &self.blocks[k]
    }

    /// Rows of the selected contexts stacked in ascending context order.
    pub fn pooled(&self, contexts: ContextSet) -> DMatrix<f64> {
        let n: usize = contexts.iter().filter(|&k| k < self.k_count()).map(|k| self.n(k)).sum();
        let mut out = DMatrix::zeros(n, self.q);
        let mut r = 0;
        for k in contexts.iter().filter(|&k| k < self.k_count()) {
            let b = &self.blocks[k];
            out.rows_mut(r, b.nrows()).copy_from(b);
            r += b.nrows();
        }
        out
    }
}

/// `log Gamma_p(x)`, the multivariate gamma function.
pub fn log_mvgamma(p: usize, x: f64) -> f64 {
    let pf = p as f64;
    let mut s = pf * (pf - 1.0) / 4.0 * PI.ln();
    for i in 1..=p {
        s += ln_gamma(x + (1.0 - i as f64) / 2.0);
    }
    s
}

/// Log-determinant of a symmetric positive-definite matrix. Falls back to a
/// symmetric eigendecomposition when the Cholesky factorization fails.
pub fn log_det_spd(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    if let Some(ch) = m.clone().cholesky() {
        return Ok(2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>());
    }
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().all(|&l| l > EIGEN_TOL) {
        Ok(eig.eigenvalues.iter().map(|l| l.ln()).sum())
    } else {
        Err(Error::Numeric(format!(
            "matrix of order {} is not positive definite",
            m.nrows()
        )))
    }
}

fn submatrix(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(cols.len(), cols.len(), |i, j| m[(cols[i], cols[j])])
}

/// Closed-form log marginal density given `U_BB`, `U_BB + X_B' X_B` and `n`.
fn log_marginal_core(
    h: &Hyperparams,
    u_bb: &DMatrix<f64>,
    ut_bb: &DMatrix<f64>,
    n: usize,
) -> Result<f64> {
    let p = u_bb.nrows();
    let q = h.q();
    let a_eff = h.a - (q - p) as f64;
    if a_eff / 2.0 <= (p as f64 - 1.0) / 2.0 {
        return Err(Error::Hyperparameter(format!(
            "gamma argument {} not above {} for |B| = {p}",
            a_eff / 2.0,
            (p as f64 - 1.0) / 2.0
        )));
    }
    let nf = n as f64;
    let ld_u = log_det_spd(u_bb)?;
    let ld_ut = log_det_spd(ut_bb)?;
    Ok(-(nf * p as f64 / 2.0) * PI.ln() + (a_eff / 2.0) * ld_u - ((a_eff + nf) / 2.0) * ld_ut
        + log_mvgamma(p, (a_eff + nf) / 2.0)
        - log_mvgamma(p, a_eff / 2.0))
}

/// Log marginal density of the columns `cols` of `rows` (an `n x q` matrix).
pub fn log_marginal_data(rows: &DMatrix<f64>, cols: NodeSet, h: &Hyperparams) -> Result<f64> {
    let q = h.q();
    if rows.ncols() != q {
        return Err(Error::Data(format!(
            "data has {} columns, hyperparameters expect {q}",
            rows.ncols()
        )));
    }
    if !cols.is_subset(NodeSet::full(q)) {
        return Err(Error::InvalidQuery(format!("column set {cols:?} exceeds q = {q}")));
    }
    if cols.is_empty() || rows.nrows() == 0 {
        return Ok(0.0);
    }
    let idx = cols.to_vec();
    let x_b = rows.select_columns(&idx);
    let u_bb = submatrix(&h.u, &idx);
    let ut_bb = &u_bb + x_b.transpose() * &x_b;
    log_marginal_core(h, &u_bb, &ut_bb, rows.nrows())
}

/// Memoized subset terms and pooled Gram matrices.
#[derive(Clone, Debug, Default)]
pub struct ScoreCache {
    terms: HashMap<(NodeSet, ContextSet), f64>,
    grams: HashMap<ContextSet, (DMatrix<f64>, usize)>,
}

impl ScoreCache {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn clear(&mut self) {
        self.terms.clear();
        self.grams.clear();
    }
}

/// Decomposable interventional BGe score over a fixed dataset.
#[derive(Clone, Debug)]
pub struct BgeScore {
    h: Hyperparams,
    grams: Vec<DMatrix<f64>>,
    counts: Vec<usize>,
    cache: ScoreCache,
}

impl BgeScore {
    pub fn new(data: &MultiEnvDataset, h: Hyperparams) -> Result<Self> {
        if data.q() != h.q() {
            return Err(Error::Data(format!(
                "data has q = {}, hyperparameters have q = {}",
                data.q(),
                h.q()
            )));
        }
        let grams = data.blocks.iter().map(|b| b.transpose() * b).collect();
        let counts = data.blocks.iter().map(|b| b.nrows()).collect();
        Ok(BgeScore {
            h,
            grams,
            counts,
            cache: ScoreCache::default(),
        })
    }

    pub fn q(&self) -> usize {
        self.h.q()
    }

    pub fn k_count(&self) -> usize {
        self.grams.len()
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.h
    }

    pub fn cache(&self) -> &ScoreCache {
        &self.cache
    }

    pub fn clear_cache(&mut self) {
        self.cache.clear();
    }

    /// Log marginal density of columns `cols` over the rows of `contexts`.
    pub fn term(&mut self, cols: NodeSet, contexts: ContextSet) -> Result<f64> {
        if cols.is_empty() {
            return Ok(0.0);
        }
        if let Some(&v) = self.cache.terms.get(&(cols, contexts)) {
            return Ok(v);
        }
        if !self.cache.grams.contains_key(&contexts) {
            let q = self.q();
            let mut g = DMatrix::zeros(q, q);
            let mut n = 0;
            for k in contexts.iter().filter(|&k| k < self.grams.len()) {
                g += &self.grams[k];
                n += self.counts[k];
            }
            self.cache.grams.insert(contexts, (g, n));
        }
        let (g, n) = &self.cache.grams[&contexts];
        let v = if *n == 0 {
            0.0
        } else {
            let idx = cols.to_vec();
            let u_bb = submatrix(&self.h.u, &idx);
            let ut_bb = &u_bb + submatrix(g, &idx);
            log_marginal_core(&self.h, &u_bb, &ut_bb, *n)?
        };
        self.cache.terms.insert((cols, contexts), v);
        Ok(v)
    }

    /// Summand of node `j` in the log marginal likelihood.
    pub fn node_score(&mut self, state: &ModelState, j: usize) -> Result<f64> {
        let pooled = contexts_not_intervened(&state.interventions, j);
        let pa = state.dag.parents(j);
        let mut s = self.term(pa.with(j), pooled)? - self.term(pa, pooled)?;
        for k in 1..state.k_count() {
            if let Some(p) = state.interventions.context(k).induced_parents(j) {
                let one = ContextSet::singleton(k);
                s += self.term(p.with(j), one)? - self.term(p, one)?;
            }
        }
        Ok(s)
    }

    pub fn node_scores(&mut self, state: &ModelState) -> Result<Vec<f64>> {
        self.check_state(state)?;
        (0..state.q()).map(|j| self.node_score(state, j)).collect()
    }

    /// Log marginal likelihood of a valid state.
    pub fn log_marginal_likelihood(&mut self, state: &ModelState) -> Result<f64> {
        Ok(self.node_scores(state)?.iter().sum())
    }

    fn check_state(&self, state: &ModelState) -> Result<()> {
        if state.q() != self.q() || state.k_count() != self.k_count() {
            return Err(Error::InvalidInput(format!(
                "state has (q={}, K={}), data has (q={}, K={})",
                state.q(),
                state.k_count(),
                self.q(),
                self.k_count()
            )));
        }
        state.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Dag;
    use crate::intervention::ContextIntervention;

    fn set(v: &[usize]) -> NodeSet {
        v.iter().copied().collect()
    }

    fn toy_data() -> MultiEnvDataset {
        let b0 = DMatrix::from_row_slice(
            5,
            2,
            &[0.3, 1.1, -0.7, -0.2, 1.4, 2.0, 0.1, -0.5, -1.2, -1.9],
        );
        let b1 = DMatrix::from_row_slice(3, 2, &[2.1, 0.4, -0.3, 0.9, 0.8, -1.0]);
        MultiEnvDataset::new(2, vec![b0, b1]).unwrap()
    }

    #[test]
    fn trivial_cases_are_zero() {
        let h = Hyperparams::default_for(2);
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        assert_eq!(log_marginal_data(&x, NodeSet::EMPTY, &h).unwrap(), 0.0);
        let empty = DMatrix::<f64>::zeros(0, 2);
        assert_eq!(log_marginal_data(&empty, set(&[0, 1]), &h).unwrap(), 0.0);
    }

    #[test]
    fn cauchy_case() {
        let h = Hyperparams::new(1.0, DMatrix::from_element(1, 1, 1.0)).unwrap();
        let x = DMatrix::from_element(1, 1, 2.0);
        let lp = log_marginal_data(&x, set(&[0]), &h).unwrap();
        // standard Cauchy density at 2
        let cauchy = (1.0 / (PI * (1.0 + 4.0))).ln();
        assert!((lp - cauchy).abs() < 1e-12, "{lp} vs {cauchy}");
    }

    #[test]
    fn student_t_oracle_single_column() {
        // With q=1 a single observation is Student-t with a degrees of freedom
        // and squared scale U / a.
        let (a, u, x): (f64, f64, f64) = (3.5, 2.0, -0.7);
        let h = Hyperparams::new(a, DMatrix::from_element(1, 1, u)).unwrap();
        let lp = log_marginal_data(&DMatrix::from_element(1, 1, x), set(&[0]), &h).unwrap();
        let s2 = u / a;
        let t = ln_gamma((a + 1.0) / 2.0)
            - ln_gamma(a / 2.0)
            - 0.5 * (a * PI * s2).ln()
            - (a + 1.0) / 2.0 * (1.0 + x * x / (a * s2)).ln();
        assert!((lp - t).abs() < 1e-12);
    }

    #[test]
    fn hyperparameter_checks() {
        assert!(matches!(
            Hyperparams::new(0.5, DMatrix::identity(2, 2)),
            Err(Error::Hyperparameter(_))
        ));
        let not_pd = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(Hyperparams::new(3.0, not_pd).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(Hyperparams::new(3.0, asym).is_err());
    }

    #[test]
    fn eigen_fallback_on_semidefinite_input() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(log_det_spd(&m), Err(Error::Numeric(_))));
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        assert!((log_det_spd(&m).unwrap() - 1.75f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn multivariate_gamma_reduces() {
        assert!((log_mvgamma(1, 2.5) - ln_gamma(2.5)).abs() < 1e-15);
        let two = 0.5 * PI.ln() + ln_gamma(3.0) + ln_gamma(2.5);
        assert!((log_mvgamma(2, 3.0) - two).abs() < 1e-13);
    }

    #[test]
    fn contexts_not_intervened_examples() {
        let c2 = ContextIntervention::new(4, &[(2, NodeSet::EMPTY)]).unwrap();
        let c3 = ContextIntervention::new(4, &[(3, set(&[0, 1, 2]))]).unwrap();
        let coll = InterventionCollection::new(vec![
            ContextIntervention::observational(4),
            c2.clone(),
            c3,
        ])
        .unwrap();
        assert_eq!(contexts_not_intervened(&coll, 3).iter().collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(contexts_not_intervened(&coll, 0), ContextSet::full(3));
        let two = InterventionCollection::new(vec![ContextIntervention::observational(4), c2])
            .unwrap();
        assert_eq!(contexts_not_intervened(&two, 2).iter().collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn empty_dag_factorizes() {
        let data = MultiEnvDataset::new(2, vec![toy_data().block(0).clone()]).unwrap();
        let h = Hyperparams::default_for(2);
        let mut s = BgeScore::new(&data, h.clone()).unwrap();
        let st = ModelState::empty(2, 1);
        let lml = s.log_marginal_likelihood(&st).unwrap();
        let x = data.block(0);
        let direct = log_marginal_data(x, set(&[0]), &h).unwrap()
            + log_marginal_data(x, set(&[1]), &h).unwrap();
        assert!((lml - direct).abs() < 1e-12);
    }

    #[test]
    fn complete_dags_score_equal() {
        let data = MultiEnvDataset::new(2, vec![toy_data().block(0).clone()]).unwrap();
        let mut s = BgeScore::new(&data, Hyperparams::default_for(2)).unwrap();
        let fwd = ModelState::new(
            Dag::from_edges(2, &[(0, 1)]).unwrap(),
            InterventionCollection::observational(2, 1),
        )
        .unwrap();
        let bwd = ModelState::new(
            Dag::from_edges(2, &[(1, 0)]).unwrap(),
            InterventionCollection::observational(2, 1),
        )
        .unwrap();
        let a = s.log_marginal_likelihood(&fwd).unwrap();
        let b = s.log_marginal_likelihood(&bwd).unwrap();
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }

    #[test]
    fn pooling_excludes_intervened_block() {
        let data = toy_data();
        let h = Hyperparams::default_for(2);
        let mut s = BgeScore::new(&data, h.clone()).unwrap();
        let mut st = ModelState::empty(2, 2);
        st.interventions
            .context_mut(1)
            .add_target(1, NodeSet::EMPTY);
        let v = s.node_score(&st, 1).unwrap();
        let obs = log_marginal_data(data.block(0), set(&[1]), &h).unwrap();
        let int = log_marginal_data(data.block(1), set(&[1]), &h).unwrap();
        assert!((v - (obs + int)).abs() < 1e-12);
        // untargeted node uses every row
        let all = data.pooled(ContextSet::full(2));
        let v0 = s.node_score(&st, 0).unwrap();
        assert!((v0 - log_marginal_data(&all, set(&[0]), &h).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn warm_cache_matches_cold_bitwise() {
        let data = toy_data();
        let mut st = ModelState::empty(2, 2);
        st.dag = Dag::from_edges(2, &[(0, 1)]).unwrap();
        st.interventions.context_mut(1).add_target(1, NodeSet::EMPTY);
        let mut warm = BgeScore::new(&data, Hyperparams::default_for(2)).unwrap();
        let first = warm.log_marginal_likelihood(&st).unwrap();
        let second = warm.log_marginal_likelihood(&st).unwrap();
        let mut cold = BgeScore::new(&data, Hyperparams::default_for(2)).unwrap();
        let third = cold.log_marginal_likelihood(&st).unwrap();
        assert_eq!(first.to_bits(), second.to_bits());
        assert_eq!(first.to_bits(), third.to_bits());
    }

    #[test]
    fn empty_context_block_contributes_nothing() {
        let b0 = toy_data().block(0).clone();
        let data = MultiEnvDataset::new(2, vec![b0, DMatrix::zeros(0, 2)]).unwrap();
        let mut s = BgeScore::new(&data, Hyperparams::default_for(2)).unwrap();
        let mut st = ModelState::empty(2, 2);
        st.interventions.context_mut(1).add_target(0, set(&[1]));
        let one = ContextSet::singleton(1);
        assert_eq!(s.term(set(&[0, 1]), one).unwrap(), 0.0);
        assert!(s.log_marginal_likelihood(&st).unwrap().is_finite());
    }
}
