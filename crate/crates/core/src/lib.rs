//! Bayesian causal discovery from multi-environment data under unknown
//! general interventions.
//!
//! The crate covers DAG and I-DAG graph algebra, I-Markov equivalence, an
//! interventional BGe marginal likelihood, structure priors, a random-scan
//! Metropolis-Hastings sampler over DAGs, targets and induced parent sets,
//! posterior summaries, a Gaussian SEM simulator and evaluation metrics.

pub mod equivalence;
pub mod error;
pub mod graph;
pub mod intervention;
pub mod mcmc;
pub mod metrics;
pub mod modelprior;
pub mod nodeset;
pub mod posterior;
pub mod score;
pub mod simulate;

pub use error::{Error, Result};
pub use graph::{Dag, Digraph, Pdag};
pub use intervention::{ContextIntervention, IDag, InterventionCollection, ModelState};
pub use nodeset::NodeSet;
