//! Beta-Bernoulli structure priors with the latent probabilities integrated
//! out. Normalizing constants over the DAG space are omitted; only
//! differences of these log priors are ever used.

use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::intervention::{is_valid, ContextIntervention, ModelState};

/// Beta hyperparameters for induced parents (`phi`), targets (`eta`) and DAG
/// edges (`dag`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorHyper {
    pub a_phi: f64,
    pub b_phi: f64,
    pub a_eta: f64,
    pub b_eta: f64,
    pub a_dag: f64,
    pub b_dag: f64,
}

impl Default for PriorHyper {
    fn default() -> Self {
        PriorHyper {
            a_phi: 1.0,
            b_phi: 1.0,
            a_eta: 1.0,
            b_eta: 1.0,
            a_dag: 1.0,
            b_dag: 1.0,
        }
    }
}

impl PriorHyper {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("a_phi", self.a_phi),
            ("b_phi", self.b_phi),
            ("a_eta", self.a_eta),
            ("b_eta", self.b_eta),
            ("a_D", self.a_dag),
            ("b_D", self.b_dag),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Hyperparameter(format!("{name} = {v} must be positive")));
            }
        }
        Ok(())
    }
}

/// `log B(a + m, b + total - m) - log B(a, b)`.
fn beta_binomial(a: f64, b: f64, m: usize, total: usize) -> f64 {
    debug_assert!(m <= total);
    ln_beta(a + m as f64, b + (total - m) as f64) - ln_beta(a, b)
}

/// Prior on the DAG skeleton given its edge count.
pub fn log_prior_dag(d: &Dag, h: &PriorHyper) -> f64 {
    let q = d.n();
    beta_binomial(h.a_dag, h.b_dag, d.edge_count(), q * (q - 1) / 2)
}

/// Prior on the target set of context `k`; zero for the observational one.
pub fn log_prior_targets(c: &ContextIntervention, k: usize, h: &PriorHyper) -> f64 {
    if k == 0 {
        return 0.0;
    }
    beta_binomial(h.a_eta, h.b_eta, c.targets().len(), c.q())
}

/// Prior on the induced parent sets of context `k`. The Beta normalizer uses
/// `q` candidate parents per target.
pub fn log_prior_parent_matrix(
    c: &ContextIntervention,
    k: usize,
    d: &Dag,
    h: &PriorHyper,
) -> Result<f64> {
    if !is_valid(d, c) {
        return Err(Error::InvalidIntervention { context: k });
    }
    let q = c.q();
    Ok(c.targets()
        .iter()
        .map(|j| beta_binomial(h.a_phi, h.b_phi, c.induced_parents(j).unwrap().len(), q))
        .sum())
}

/// Sum of all prior components over contexts.
pub fn log_prior_joint(state: &ModelState, h: &PriorHyper) -> Result<f64> {
    let mut s = log_prior_dag(&state.dag, h);
    for k in 1..state.k_count() {
        let c = state.interventions.context(k);
        s += log_prior_targets(c, k, h);
        s += log_prior_parent_matrix(c, k, &state.dag, h)?;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nodeset::NodeSet;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    fn set(v: &[usize]) -> NodeSet {
        v.iter().copied().collect()
    }

    #[test]
    fn dag_prior_examples() {
        let h = PriorHyper::default();
        assert!(close(log_prior_dag(&Dag::empty(3), &h), (0.25f64).ln()));
        let full = Dag::complete(3);
        assert!(close(log_prior_dag(&full, &h), (0.25f64).ln()));
        let one = Dag::from_edges(2, &[(0, 1)]).unwrap();
        assert!(close(log_prior_dag(&one, &h), (0.5f64).ln()));
    }

    #[test]
    fn target_prior_examples() {
        let h = PriorHyper::default();
        let none = ContextIntervention::observational(3);
        assert!(close(log_prior_targets(&none, 1, &h), (0.25f64).ln()));
        let all = ContextIntervention::new(
            3,
            &[(0, NodeSet::EMPTY), (1, NodeSet::EMPTY), (2, NodeSet::EMPTY)],
        )
        .unwrap();
        assert!(close(log_prior_targets(&all, 1, &h), (0.25f64).ln()));
        assert_eq!(log_prior_targets(&none, 0, &h), 0.0);
    }

    #[test]
    fn parent_matrix_prior_examples() {
        let h = PriorHyper::default();
        let d = Dag::empty(3);
        let none = ContextIntervention::observational(3);
        assert_eq!(log_prior_parent_matrix(&none, 1, &d, &h).unwrap(), 0.0);
        let zero = ContextIntervention::new(3, &[(0, NodeSet::EMPTY)]).unwrap();
        assert!(close(log_prior_parent_matrix(&zero, 1, &d, &h).unwrap(), (0.25f64).ln()));
        let two = ContextIntervention::new(3, &[(0, set(&[1, 2]))]).unwrap();
        assert!(close(
            log_prior_parent_matrix(&two, 1, &d, &h).unwrap(),
            (1.0f64 / 12.0).ln()
        ));
        let cyc = Dag::from_edges(3, &[(0, 1)]).unwrap();
        let bad = ContextIntervention::new(3, &[(0, set(&[1]))]).unwrap();
        assert!(matches!(
            log_prior_parent_matrix(&bad, 1, &cyc, &h),
            Err(Error::InvalidIntervention { context: 1 })
        ));
    }

    #[test]
    fn joint_prior_examples() {
        let h = PriorHyper::default();
        let s = ModelState::empty(3, 2);
        assert!(close(log_prior_joint(&s, &h).unwrap(), 2.0 * (0.25f64).ln()));
        // one target with no induced parents exercises all three factors
        let mut t = ModelState::empty(3, 2);
        t.interventions.context_mut(1).add_target(0, NodeSet::EMPTY);
        let want = (0.25f64).ln() + (1.0f64 / 12.0).ln() + (0.25f64).ln();
        assert!(close(log_prior_joint(&t, &h).unwrap(), want));
        let k1 = ModelState::empty(3, 1);
        assert!(close(log_prior_joint(&k1, &h).unwrap(), log_prior_dag(&k1.dag, &h)));
    }

    #[test]
    fn rejects_nonpositive() {
        let h = PriorHyper { a_eta: 0.0, ..PriorHyper::default() };
        assert!(h.validate().is_err());
    }
}
