//! Random-scan Metropolis-Hastings over DAGs, targets and induced parents.
//!
//! Each iteration visits the observational component and every
//! interventional context once, in a fresh random order. A component update
//! draws one operator uniformly from that component's set of valid
//! operators and accepts it with the usual MH ratio, the proposal ratio being
//! the ratio of operator-set sizes.
//!
//! Operators address vertices `0..q`; the source `u == q` denotes the
//! context vertex of an I-DAG.

use std::collections::{BTreeMap, HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Digraph;
use crate::intervention::{post_intervention_graph, ModelState};
use crate::modelprior::{log_prior_joint, PriorHyper};
use crate::nodeset::NodeSet;
use crate::score::BgeScore;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scope {
    Observational,
    /// Interventional context `k >= 1`.
    Context(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Insert,
    Delete,
    Reverse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Operator {
    pub kind: OpKind,
    pub u: usize,
    pub v: usize,
    pub scope: Scope,
}

impl Operator {
    fn new(kind: OpKind, u: usize, v: usize, scope: Scope) -> Self {
        Operator { kind, u, v, scope }
    }

    /// The operator undoing this one.
    pub fn inverse(&self) -> Operator {
        match self.kind {
            OpKind::Insert => Operator { kind: OpKind::Delete, ..*self },
            OpKind::Delete => Operator { kind: OpKind::Insert, ..*self },
            OpKind::Reverse => Operator { u: self.v, v: self.u, ..*self },
        }
    }

    /// Vertices whose likelihood summand may change when applied.
    pub fn touched_nodes(&self, q: usize) -> NodeSet {
        let mut s = NodeSet::singleton(self.v);
        if self.kind == OpKind::Reverse && self.u < q {
            s.insert(self.u);
        }
        s
    }
}

/// Post-intervention graphs and their descendant sets, one per context.
struct ContextReach {
    graphs: Vec<Digraph>,
    reach: Vec<Vec<NodeSet>>,
}

impl ContextReach {
    fn new(state: &ModelState) -> Self {
        let graphs: Vec<Digraph> = (0..state.k_count())
            .map(|k| post_intervention_graph(&state.dag, state.interventions.context(k)))
            .collect();
        let reach = graphs.iter().map(|g| g.reachability()).collect();
        ContextReach { graphs, reach }
    }

    /// Whether `u` reaches `v` in context `k` without using the edge `u -> v`.
    fn reaches_avoiding_edge(&self, k: usize, u: usize, v: usize) -> bool {
        self.graphs[k]
            .children(u)
            .without(v)
            .iter()
            .any(|c| self.reach[k][c].contains(v))
    }
}

/// Valid DAG-level operators: every deletion, and every reversal and
/// insertion that keeps all post-intervention graphs acyclic.
pub fn build_operator_set_obs(state: &ModelState) -> Vec<Operator> {
    let q = state.q();
    let cr = ContextReach::new(state);
    let obs = Scope::Observational;
    let mut ops = Vec::new();
    for u in 0..q {
        for v in state.dag.children(u).iter() {
            ops.push(Operator::new(OpKind::Delete, u, v, obs));
            let ok = (0..state.k_count()).all(|k| {
                let c = state.interventions.context(k);
                if c.is_target(u) {
                    // u keeps its induced parents; only u -> v may disappear
                    true
                } else if c.is_target(v) {
                    !cr.reach[k][u].contains(v)
                } else {
                    !cr.reaches_avoiding_edge(k, u, v)
                }
            });
            if ok {
                ops.push(Operator::new(OpKind::Reverse, u, v, obs));
            }
        }
    }
    for u in 0..q {
        for v in 0..q {
            if u == v || state.dag.adjacent(u, v) {
                continue;
            }
            let ok = (0..state.k_count()).all(|k| {
                state.interventions.context(k).is_target(v) || !cr.reach[k][v].contains(u)
            });
            if ok {
                ops.push(Operator::new(OpKind::Insert, u, v, obs));
            }
        }
    }
    ops
}

/// Valid operators on the I-DAG of context `k >= 1`.
pub fn build_operator_set_int(state: &ModelState, k: usize) -> Result<Vec<Operator>> {
    if k == 0 || k >= state.k_count() {
        return Err(Error::InvalidScope(format!(
            "context {k} is not an interventional context of K = {}",
            state.k_count()
        )));
    }
    let q = state.q();
    let zeta = q;
    let scope = Scope::Context(k);
    let c = state.interventions.context(k);
    let t = c.targets();
    let g = post_intervention_graph(&state.dag, c);
    let reach = g.reachability();
    let mut ops = Vec::new();
    for v in (0..q).filter(|&v| !t.contains(v)) {
        ops.push(Operator::new(OpKind::Insert, zeta, v, scope));
    }
    for v in t.iter() {
        let pv = g.parents(v);
        let nondesc = NodeSet::full(q).difference(reach[v]).without(v);
        for u in nondesc.iter() {
            if pv.contains(u) {
                ops.push(Operator::new(OpKind::Delete, u, v, scope));
                let acyclic = !g
                    .children(u)
                    .without(v)
                    .iter()
                    .any(|w| reach[w].contains(v));
                if t.contains(u) && acyclic {
                    ops.push(Operator::new(OpKind::Reverse, u, v, scope));
                }
            } else {
                ops.push(Operator::new(OpKind::Insert, u, v, scope));
            }
        }
        if pv == state.dag.parents(v) {
            ops.push(Operator::new(OpKind::Delete, zeta, v, scope));
        }
    }
    Ok(ops)
}

pub fn build_operator_set(state: &ModelState, scope: Scope) -> Result<Vec<Operator>> {
    match scope {
        Scope::Observational => Ok(build_operator_set_obs(state)),
        Scope::Context(k) => build_operator_set_int(state, k),
    }
}

/// Applies an operator. The result is not checked for validity.
pub fn apply_operator(state: &ModelState, op: Operator) -> Result<ModelState> {
    let q = state.q();
    let (u, v) = (op.u, op.v);
    if v >= q || u > q || u == v {
        return Err(Error::InvalidQuery(format!("bad operator endpoints {u} -> {v}")));
    }
    let mut out = state.clone();
    let bad = |what: &str| Err(Error::InvalidQuery(format!("{op:?}: {what}")));
    match op.scope {
        Scope::Observational => {
            if u == q {
                return bad("context vertex in DAG operator");
            }
            let d = out.dag_mut();
            match op.kind {
                OpKind::Insert if !d.adjacent(u, v) => d.add_edge(u, v),
                OpKind::Delete if d.has_edge(u, v) => d.remove_edge(u, v),
                OpKind::Reverse if d.has_edge(u, v) => {
                    d.remove_edge(u, v);
                    d.add_edge(v, u);
                }
                _ => return bad("not applicable"),
            }
        }
        Scope::Context(k) => {
            if k == 0 || k >= state.k_count() {
                return Err(Error::InvalidScope(format!("no interventional context {k}")));
            }
            let pa_d = state.dag.parents(v);
            let c = out.interventions.context_mut(k);
            let pv = c.induced_parents(v);
            match (op.kind, u == q, pv) {
                (OpKind::Insert, true, None) => c.add_target(v, pa_d),
                (OpKind::Delete, true, Some(p)) if p == pa_d => c.remove_target(v),
                (OpKind::Insert, false, Some(p)) if !p.contains(u) => {
                    c.set_induced_parents(v, p.with(u))
                }
                (OpKind::Delete, false, Some(p)) if p.contains(u) => {
                    c.set_induced_parents(v, p.without(u))
                }
                (OpKind::Reverse, false, Some(p)) if p.contains(u) => {
                    let Some(pu) = c.induced_parents(u) else {
                        return bad("source is not a target");
                    };
                    c.set_induced_parents(v, p.without(u));
                    c.set_induced_parents(u, pu.with(v));
                }
                _ => return bad("not applicable"),
            }
        }
    }
    Ok(out)
}

/// The component scopes of a model with `k_count` contexts.
pub fn scopes(k_count: usize) -> Vec<Scope> {
    std::iter::once(Scope::Observational)
        .chain((1..k_count).map(Scope::Context))
        .collect()
}

/// Per-iteration inclusion counts accumulated after burn-in.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tallies {
    pub q: usize,
    pub k_count: usize,
    /// Number of recorded iterations.
    pub iterations: u64,
    /// `edges[k][u * q + v]`: iterations with `u -> v` in context `k`'s graph.
    pub edges: Vec<Vec<u64>>,
    /// `targets[k][j]`: iterations with `j` targeted in context `k`.
    pub targets: Vec<Vec<u64>>,
    /// `diff[k][u * q + v]`: iterations with `u -> v` in the difference graph
    /// of context `k` (always zero for `k = 0`).
    pub diff: Vec<Vec<u64>>,
}

impl Tallies {
    pub fn new(q: usize, k_count: usize) -> Self {
        Tallies {
            q,
            k_count,
            iterations: 0,
            edges: vec![vec![0; q * q]; k_count],
            targets: vec![vec![0; q]; k_count],
            diff: vec![vec![0; q * q]; k_count],
        }
    }

    pub fn record(&mut self, state: &ModelState) {
        let q = self.q;
        self.iterations += 1;
        for k in 0..self.k_count {
            let c = state.interventions.context(k);
            for v in 0..q {
                for u in c.parents_in(&state.dag, v).iter() {
                    self.edges[k][u * q + v] += 1;
                }
            }
            for v in c.targets().iter() {
                self.targets[k][v] += 1;
                let changed = state.dag.parents(v).union(c.induced_parents(v).unwrap());
                for u in changed.iter() {
                    self.diff[k][u * q + v] += 1;
                }
            }
        }
    }

    /// Adds another set of tallies with the same dimensions.
    pub fn merge(&mut self, other: &Tallies) -> Result<()> {
        if other.q != self.q || other.k_count != self.k_count {
            return Err(Error::InvalidInput("tally dimensions differ".into()));
        }
        self.iterations += other.iterations;
        let add = |a: &mut Vec<Vec<u64>>, b: &Vec<Vec<u64>>| {
            for (x, y) in a.iter_mut().zip(b) {
                for (p, r) in x.iter_mut().zip(y) {
                    *p += r;
                }
            }
        };
        add(&mut self.edges, &other.edges);
        add(&mut self.targets, &other.targets);
        add(&mut self.diff, &other.diff);
        Ok(())
    }

    pub fn from_samples<'a>(
        q: usize,
        k_count: usize,
        samples: impl IntoIterator<Item = &'a ModelState>,
    ) -> Self {
        let mut t = Tallies::new(q, k_count);
        for s in samples {
            t.record(s);
        }
        t
    }
}

/// Proposal and acceptance counts for one scope.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopeStats {
    pub proposed: u64,
    pub accepted: u64,
}

#[derive(Clone, Debug)]
pub struct ChainSettings {
    pub iterations: u64,
    pub burn_in: u64,
    /// Store every `thin`-th post-burn-in state; 0 stores none.
    pub thin: u64,
    pub seed: u64,
    /// Independent RNG stream index, one per chain.
    pub stream: u64,
    /// Count visits of every distinct post-burn-in state.
    pub record_states: bool,
    /// Starting state; the empty state when absent.
    pub init: Option<ModelState>,
}

impl ChainSettings {
    pub fn new(iterations: u64, burn_in: u64, seed: u64) -> Self {
        ChainSettings {
            iterations,
            burn_in,
            thin: 0,
            seed,
            stream: 0,
            record_states: false,
            init: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations > 0 && self.iterations <= self.burn_in {
            return Err(Error::InvalidInput(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ChainOutput {
    pub settings: ChainSettings,
    pub initial_state: ModelState,
    pub final_state: ModelState,
    pub tallies: Tallies,
    pub samples: Vec<ModelState>,
    pub state_counts: Option<BTreeMap<ModelState, u64>>,
    /// Indexed like [`scopes`].
    pub acceptance: Vec<ScopeStats>,
    pub final_log_score: f64,
    pub final_log_prior: f64,
}

/// Current state of a chain with its cached score and prior.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub state: ModelState,
    pub node_scores: Vec<f64>,
    pub log_score: f64,
    pub log_prior: f64,
    pub iteration: u64,
}

/// A single Metropolis-Hastings chain.
pub struct Chain {
    scorer: BgeScore,
    priors: PriorHyper,
    rng: ChaCha8Rng,
    current: ChainState,
    stats: Vec<ScopeStats>,
}

impl Chain {
    pub fn new(
        scorer: BgeScore,
        priors: PriorHyper,
        init: ModelState,
        seed: u64,
        stream: u64,
    ) -> Result<Self> {
        priors.validate()?;
        let mut scorer = scorer;
        let node_scores = scorer.node_scores(&init)?;
        let log_score = node_scores.iter().sum();
        let log_prior = log_prior_joint(&init, &priors)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let k_count = init.k_count();
        Ok(Chain {
            scorer,
            priors,
            rng,
            current: ChainState {
                state: init,
                node_scores,
                log_score,
                log_prior,
                iteration: 0,
            },
            stats: vec![ScopeStats::default(); k_count],
        })
    }

    pub fn current(&self) -> &ChainState {
        &self.current
    }

    pub fn stats(&self) -> &[ScopeStats] {
        &self.stats
    }

    pub fn scorer_mut(&mut self) -> &mut BgeScore {
        &mut self.scorer
    }

    /// One Metropolis-Hastings update of `scope`. Returns whether the move
    /// was accepted.
    pub fn mh_step(&mut self, scope: Scope) -> Result<bool> {
        let ops = build_operator_set(&self.current.state, scope)?;
        let slot = match scope {
            Scope::Observational => 0,
            Scope::Context(k) => k,
        };
        if ops.is_empty() {
            return Ok(false);
        }
        self.stats[slot].proposed += 1;
        let op = ops[self.rng.random_range(0..ops.len())];
        let proposed = apply_operator(&self.current.state, op)?;
        debug_assert!(proposed.is_valid(), "operator {op:?} produced an invalid state");
        let back = build_operator_set(&proposed, scope)?.len();
        debug_assert!(back > 0);

        let q = proposed.q();
        let mut node_scores = self.current.node_scores.clone();
        for j in op.touched_nodes(q).iter() {
            node_scores[j] = self.scorer.node_score(&proposed, j)?;
        }
        let log_score: f64 = node_scores.iter().sum();
        let log_prior = log_prior_joint(&proposed, &self.priors)?;
        let log_alpha = (log_score - self.current.log_score)
            + (log_prior - self.current.log_prior)
            + (ops.len() as f64).ln()
            - (back as f64).ln();
        if !log_alpha.is_finite() && log_alpha != f64::NEG_INFINITY {
            return Err(Error::Numeric(format!(
                "acceptance ratio {log_alpha} for {op:?} (scores {} -> {log_score})",
                self.current.log_score
            )));
        }
        let draw: f64 = self.rng.random();
        let accept = log_alpha >= 0.0 || draw.ln() < log_alpha;
        if accept {
            self.stats[slot].accepted += 1;
            self.current.state = proposed;
            self.current.node_scores = node_scores;
            self.current.log_score = log_score;
            self.current.log_prior = log_prior;
            debug_assert!({
                let full = self.scorer.log_marginal_likelihood(&self.current.state).unwrap();
                (full - log_score).abs() < 1e-9
            });
        }
        Ok(accept)
    }

    /// One sweep over every scope in a fresh random order.
    pub fn sweep(&mut self) -> Result<()> {
        let mut order = scopes(self.current.state.k_count());
        order.shuffle(&mut self.rng);
        for scope in order {
            self.mh_step(scope)?;
        }
        self.current.iteration += 1;
        debug_assert!(self.current.state.is_valid());
        Ok(())
    }
}

/// Runs one chain to completion.
pub fn run_chain(
    scorer: BgeScore,
    priors: &PriorHyper,
    settings: &ChainSettings,
) -> Result<ChainOutput> {
    settings.validate()?;
    let (q, k_count) = (scorer.q(), scorer.k_count());
    let init = settings
        .init
        .clone()
        .unwrap_or_else(|| ModelState::empty(q, k_count));
    let mut chain = Chain::new(scorer, *priors, init.clone(), settings.seed, settings.stream)?;
    let mut tallies = Tallies::new(q, k_count);
    let mut samples = Vec::new();
    let mut counts = settings.record_states.then(BTreeMap::new);
    for s in 1..=settings.iterations {
        chain.sweep()?;
        if s > settings.burn_in {
            let st = &chain.current.state;
            tallies.record(st);
            if settings.thin > 0 && (s - settings.burn_in).is_multiple_of(settings.thin) {
                samples.push(st.clone());
            }
            if let Some(c) = counts.as_mut() {
                *c.entry(st.clone()).or_insert(0u64) += 1;
            }
        }
    }
    Ok(ChainOutput {
        settings: settings.clone(),
        initial_state: init,
        final_state: chain.current.state.clone(),
        tallies,
        samples,
        state_counts: counts,
        acceptance: chain.stats.clone(),
        final_log_score: chain.current.log_score,
        final_log_prior: chain.current.log_prior,
    })
}

/// Proposal-only dynamics: every drawn operator is applied. Returns the
/// initial state followed by the state after every component update.
pub fn proposal_chain_walk(init: &ModelState, steps: u64, seed: u64) -> Result<Vec<ModelState>> {
    init.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cur = init.clone();
    let mut trace = vec![cur.clone()];
    for _ in 0..steps {
        let mut order = scopes(cur.k_count());
        order.shuffle(&mut rng);
        for scope in order {
            let ops = build_operator_set(&cur, scope)?;
            if ops.is_empty() {
                continue;
            }
            let op = ops[rng.random_range(0..ops.len())];
            cur = apply_operator(&cur, op)?;
            trace.push(cur.clone());
        }
    }
    Ok(trace)
}

/// States reachable from `init` through operator moves, in breadth-first
/// order. Fails when more than `limit` states are found.
pub fn reachable_states(init: &ModelState, limit: usize) -> Result<Vec<ModelState>> {
    let mut seen = HashSet::from([init.clone()]);
    let mut order = vec![init.clone()];
    let mut queue = VecDeque::from([init.clone()]);
    while let Some(s) = queue.pop_front() {
        for scope in scopes(s.k_count()) {
            for op in build_operator_set(&s, scope)? {
                let t = apply_operator(&s, op)?;
                if seen.insert(t.clone()) {
                    if order.len() >= limit {
                        return Err(Error::Capacity {
                            what: "reachable states",
                            limit,
                            reached: order.len(),
                        });
                    }
                    order.push(t.clone());
                    queue.push_back(t);
                }
            }
        }
    }
    Ok(order)
}
