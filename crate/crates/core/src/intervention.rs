//! General interventions, post-intervention graphs and augmented I-DAGs.
//!
//! A context intervention replaces the parent set of each target node by an
//! induced parent set. Nontarget parent sets are always read from the
//! observational DAG, so an edit of the DAG propagates to every context.
//!
//! Context indices are 0-based internally; context 0 is observational.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Dag, Digraph};
use crate::nodeset::{NodeSet, MAX_NODES};

/// Targets and induced parent sets of one experimental context.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContextIntervention {
    targets: NodeSet,
    /// Induced parent set per vertex; empty for nontargets.
    induced: Vec<NodeSet>,
}

impl ContextIntervention {
    /// The empty intervention on `q` vertices.
    pub fn observational(q: usize) -> Self {
        ContextIntervention {
            targets: NodeSet::EMPTY,
            induced: vec![NodeSet::EMPTY; q],
        }
    }

    /// Builds an intervention from `(target, induced parents)` pairs.
    pub fn new(q: usize, targets: &[(usize, NodeSet)]) -> Result<Self> {
        let mut c = ContextIntervention::observational(q);
        for &(j, pa) in targets {
            if j >= q {
                return Err(Error::VertexOutOfRange { vertex: j, n: q });
            }
            if c.targets.contains(j) {
                return Err(Error::InvalidInput(format!("target {j} listed twice")));
            }
            if pa.contains(j) || !pa.is_subset(NodeSet::full(q)) {
                return Err(Error::InvalidInput(format!(
                    "induced parents {pa:?} of target {j} must lie in V \\ {{{j}}}"
                )));
            }
            c.add_target(j, pa);
        }
        Ok(c)
    }

    #[inline]
    pub fn q(&self) -> usize {
        self.induced.len()
    }

    #[inline]
    pub fn targets(&self) -> NodeSet {
        self.targets
    }

    #[inline]
    pub fn is_target(&self, j: usize) -> bool {
        self.targets.contains(j)
    }

    #[inline]
    pub fn induced_parents(&self, j: usize) -> Option<NodeSet> {
        self.targets.contains(j).then(|| self.induced[j])
    }

    pub fn induced_parents_map(&self) -> BTreeMap<usize, NodeSet> {
        self.targets.iter().map(|j| (j, self.induced[j])).collect()
    }

    /// Parents of `j` in the post-intervention graph of `d`.
    #[inline]
    pub fn parents_in(&self, d: &Digraph, j: usize) -> NodeSet {
        if self.targets.contains(j) {
            self.induced[j]
        } else {
            d.parents(j)
        }
    }

    pub fn add_target(&mut self, j: usize, parents: NodeSet) {
        debug_assert!(!parents.contains(j));
        self.targets.insert(j);
        self.induced[j] = parents;
    }

    pub fn remove_target(&mut self, j: usize) {
        self.targets.remove(j);
        self.induced[j] = NodeSet::EMPTY;
    }

    /// Replaces the induced parents of an existing target.
    pub fn set_induced_parents(&mut self, j: usize, parents: NodeSet) {
        debug_assert!(self.targets.contains(j) && !parents.contains(j));
        self.induced[j] = parents;
    }
}

/// Interventions for all `K` contexts; the first is observational.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InterventionCollection {
    contexts: Vec<ContextIntervention>,
}

impl InterventionCollection {
    pub fn new(contexts: Vec<ContextIntervention>) -> Result<Self> {
        let Some(first) = contexts.first() else {
            return Err(Error::InvalidInput("at least one context is required".into()));
        };
        if !first.targets.is_empty() {
            return Err(Error::InvalidInput(
                "the observational context cannot have targets".into(),
            ));
        }
        let q = first.q();
        if contexts.iter().any(|c| c.q() != q) {
            return Err(Error::InvalidInput("contexts disagree on vertex count".into()));
        }
        if contexts.len() > 64 {
            return Err(Error::InvalidInput("at most 64 contexts are supported".into()));
        }
        Ok(InterventionCollection { contexts })
    }

    /// `k_count` contexts, none of them intervened.
    pub fn observational(q: usize, k_count: usize) -> Self {
        assert!((1..=64).contains(&k_count));
        InterventionCollection {
            contexts: vec![ContextIntervention::observational(q); k_count],
        }
    }

    #[inline]
    pub fn q(&self) -> usize {
        self.contexts[0].q()
    }

    /// Number of contexts `K`.
    #[inline]
    pub fn k_count(&self) -> usize {
        self.contexts.len()
    }

    #[inline]
    pub fn context(&self, k: usize) -> &ContextIntervention {
        &self.contexts[k]
    }

    /// Mutable access to an interventional context (`k >= 1`).
    pub fn context_mut(&mut self, k: usize) -> &mut ContextIntervention {
        assert!(k >= 1, "the observational context is fixed");
        &mut self.contexts[k]
    }

    pub fn contexts(&self) -> &[ContextIntervention] {
        &self.contexts
    }

    /// Target sets of all contexts.
    pub fn target_sets(&self) -> Vec<NodeSet> {
        self.contexts.iter().map(|c| c.targets).collect()
    }
}

/// Post-intervention graph of `d` under `c`. May contain cycles.
pub fn post_intervention_graph(d: &Digraph, c: &ContextIntervention) -> Digraph {
    let mut g = d.clone();
    for j in c.targets.iter() {
        g.set_parents(j, c.induced[j]);
    }
    g
}

/// Whether the post-intervention graph of `d` under `c` is acyclic.
pub fn is_valid(d: &Digraph, c: &ContextIntervention) -> bool {
    c.targets.is_empty() || post_intervention_graph(d, c).is_acyclic()
}

/// A post-intervention DAG augmented with the context vertex `zeta`, which is
/// stored as vertex index `q` and points to every target.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct IDag {
    graph: Dag,
    context: usize,
}

impl IDag {
    pub fn graph(&self) -> &Dag {
        &self.graph
    }

    pub fn context(&self) -> usize {
        self.context
    }

    /// Number of observed vertices.
    pub fn q(&self) -> usize {
        self.graph.n() - 1
    }

    /// Index of the context vertex.
    pub fn zeta(&self) -> usize {
        self.q()
    }

    /// Builds an I-DAG from an explicit graph on `q + 1` vertices.
    pub fn from_graph(graph: Dag, context: usize) -> Result<Self> {
        let zeta = graph.n() - 1;
        if !graph.parents(zeta).is_empty() {
            return Err(Error::CorruptedState("context vertex has parents".into()));
        }
        Ok(IDag { graph, context })
    }
}

/// Augments the post-intervention DAG of `d` under `c` with its context vertex.
pub fn augment(d: &Dag, c: &ContextIntervention, context: usize) -> Result<IDag> {
    let q = d.n();
    if c.q() != q {
        return Err(Error::InvalidInput("intervention and DAG disagree on q".into()));
    }
    if q + 1 > MAX_NODES {
        return Err(Error::InvalidInput(format!(
            "at most {} observed vertices supported",
            MAX_NODES - 1
        )));
    }
    let mut pa = Vec::with_capacity(q + 1);
    for j in 0..q {
        let mut p = c.parents_in(d, j);
        if c.is_target(j) {
            p.insert(q);
        }
        pa.push(p);
    }
    pa.push(NodeSet::EMPTY);
    let g = Digraph::from_parent_sets(pa)?;
    let graph = Dag::from_digraph(g).map_err(|_| Error::InvalidIntervention { context })?;
    Ok(IDag { graph, context })
}

/// Reads `(T, P)` back from an I-DAG built on `d`.
pub fn recover_intervention(d: &Dag, idag: &IDag) -> Result<ContextIntervention> {
    let q = d.n();
    if idag.q() != q {
        return Err(Error::InvalidInput("I-DAG and DAG disagree on q".into()));
    }
    let zeta = idag.zeta();
    let targets = idag.graph.children(zeta);
    let observed = NodeSet::full(q);
    let mut c = ContextIntervention::observational(q);
    for j in 0..q {
        let pa = idag.graph.parents(j).intersection(observed);
        if targets.contains(j) {
            c.add_target(j, pa);
        } else if pa != d.parents(j) {
            return Err(Error::CorruptedState(format!(
                "nontarget {j} has parents {pa:?} in context {} but {:?} in the DAG",
                idag.context,
                d.parents(j)
            )));
        }
    }
    Ok(c)
}

/// A DAG together with an intervention collection.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModelState {
    pub dag: Dag,
    pub interventions: InterventionCollection,
}

impl ModelState {
    pub fn new(dag: Dag, interventions: InterventionCollection) -> Result<Self> {
        if dag.n() != interventions.q() {
            return Err(Error::InvalidInput("DAG and interventions disagree on q".into()));
        }
        Ok(ModelState { dag, interventions })
    }

    /// Empty DAG and no targets.
    pub fn empty(q: usize, k_count: usize) -> Self {
        ModelState {
            dag: Dag::empty(q),
            interventions: InterventionCollection::observational(q, k_count),
        }
    }

    #[inline]
    pub fn q(&self) -> usize {
        self.dag.n()
    }

    #[inline]
    pub fn k_count(&self) -> usize {
        self.interventions.k_count()
    }

    /// Parents of `j` in the post-intervention graph of context `k`.
    #[inline]
    pub fn context_parents(&self, k: usize, j: usize) -> NodeSet {
        self.interventions.context(k).parents_in(&self.dag, j)
    }

    /// Post-intervention graph of context `k`.
    pub fn context_graph(&self, k: usize) -> Digraph {
        post_intervention_graph(&self.dag, self.interventions.context(k))
    }

    pub fn idag(&self, k: usize) -> Result<IDag> {
        augment(&self.dag, self.interventions.context(k), k)
    }

    /// Index of the first context whose post-intervention graph is cyclic.
    pub fn first_invalid_context(&self) -> Option<usize> {
        (1..self.k_count()).find(|&k| !is_valid(&self.dag, self.interventions.context(k)))
    }

    /// Whether the DAG is acyclic and every post-intervention graph too. The
    /// DAG check only matters for states built by unchecked operator moves.
    pub fn is_valid(&self) -> bool {
        self.dag.is_acyclic() && self.first_invalid_context().is_none()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.dag.is_acyclic() {
            return Err(Error::MalformedGraph("DAG contains a cycle".into()));
        }
        match self.first_invalid_context() {
            None => Ok(()),
            Some(context) => Err(Error::InvalidIntervention { context }),
        }
    }

    pub(crate) fn dag_mut(&mut self) -> &mut Digraph {
        self.dag.as_digraph_mut()
    }
}

/// Whether the DAG edge `u -> v` is covered in the DAG and, for every
/// interventional context, covered in its I-DAG or joins two targets.
pub fn is_simultaneously_covered(
    d: &Dag,
    interventions: &InterventionCollection,
    u: usize,
    v: usize,
) -> Result<bool> {
    if !d.is_covered(u, v)? {
        return Ok(false);
    }
    for k in 1..interventions.k_count() {
        let c = interventions.context(k);
        if c.is_target(u) && c.is_target(v) {
            continue;
        }
        if !is_valid(d, c) {
            return Err(Error::InvalidIntervention { context: k });
        }
        // Parent sets inside the I-DAG; the context vertex is index q.
        let zeta = d.n();
        let pa_k = |j: usize| {
            let p = c.parents_in(d, j);
            if c.is_target(j) {
                p.with(zeta)
            } else {
                p
            }
        };
        let pv = pa_k(v);
        if !pv.contains(u) || pa_k(u).with(u) != pv {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Every valid state on `q` vertices and `k_count` contexts whose
/// interventional target sets have at most `max_targets` elements.
/// Fails with a capacity error when more than `limit` states exist.
pub fn enumerate_states(
    q: usize,
    k_count: usize,
    max_targets: usize,
    limit: usize,
) -> Result<Vec<ModelState>> {
    let dags = crate::graph::all_dags(q);
    let interventions = all_context_interventions(q, max_targets);
    let mut out = Vec::new();
    for d in &dags {
        let valid: Vec<&ContextIntervention> =
            interventions.iter().filter(|c| is_valid(d, c)).collect();
        let per_dag = valid.len().saturating_pow(k_count as u32 - 1);
        if out.len().saturating_add(per_dag) > limit {
            return Err(Error::Capacity {
                what: "state enumeration",
                limit,
                reached: out.len().saturating_add(per_dag),
            });
        }
        let mut idx = vec![0usize; k_count - 1];
        loop {
            let mut contexts = vec![ContextIntervention::observational(q)];
            contexts.extend(idx.iter().map(|&i| valid[i].clone()));
            out.push(ModelState {
                dag: d.clone(),
                interventions: InterventionCollection { contexts },
            });
            // odometer increment
            let mut pos = 0;
            loop {
                if pos == idx.len() {
                    break;
                }
                idx[pos] += 1;
                if idx[pos] < valid.len() {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
            if pos == idx.len() {
                break;
            }
        }
    }
    Ok(out)
}

/// All context interventions on `q` vertices with at most `max_targets`
/// targets, ignoring validity.
pub fn all_context_interventions(q: usize, max_targets: usize) -> Vec<ContextIntervention> {
    let mut out = Vec::new();
    for tbits in 0u128..(1u128 << q) {
        let targets = NodeSet::from_bits(tbits);
        if targets.len() > max_targets {
            continue;
        }
        let tv = targets.to_vec();
        // each target picks a parent subset of the other q-1 vertices
        let per = 1usize << (q - 1);
        let total = per.pow(tv.len() as u32);
        for code in 0..total {
            let mut c = ContextIntervention::observational(q);
            let mut rest = code;
            for &j in &tv {
                let sub = rest % per;
                rest /= per;
                let others: Vec<usize> = (0..q).filter(|&x| x != j).collect();
                let pa: NodeSet = others
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| (sub >> i) & 1 == 1)
                    .map(|(_, &x)| x)
                    .collect();
                c.add_target(j, pa);
            }
            out.push(c);
        }
    }
    out
}

/// Serialized form of an intervention collection, 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterventionCollectionJson {
    #[serde(rename = "K")]
    pub k: usize,
    pub contexts: Vec<ContextInterventionJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextInterventionJson {
    pub k: usize,
    pub targets: Vec<usize>,
    #[serde(default)]
    pub parents: BTreeMap<String, Vec<usize>>,
}

impl InterventionCollectionJson {
    pub fn from_collection(c: &InterventionCollection) -> Self {
        let contexts = c
            .contexts
            .iter()
            .enumerate()
            .map(|(k, ctx)| ContextInterventionJson {
                k: k + 1,
                targets: ctx.targets.iter().map(|j| j + 1).collect(),
                parents: ctx
                    .targets
                    .iter()
                    .map(|j| {
                        (
                            (j + 1).to_string(),
                            ctx.induced[j].iter().map(|p| p + 1).collect(),
                        )
                    })
                    .collect(),
            })
            .collect();
        InterventionCollectionJson { k: c.k_count(), contexts }
    }

    /// Converts to the internal representation on `q` vertices.
    pub fn to_collection(&self, q: usize) -> Result<InterventionCollection> {
        if self.contexts.len() != self.k {
            return Err(Error::InvalidInput(format!(
                "K = {} but {} contexts listed",
                self.k,
                self.contexts.len()
            )));
        }
        let mut slots: Vec<Option<ContextIntervention>> = vec![None; self.k];
        for ctx in &self.contexts {
            if ctx.k == 0 || ctx.k > self.k || slots[ctx.k - 1].is_some() {
                return Err(Error::InvalidInput(format!(
                    "context indices must be a permutation of 1..={}",
                    self.k
                )));
            }
            let one_based = |x: usize| -> Result<usize> {
                if x == 0 || x > q {
                    Err(Error::VertexOutOfRange { vertex: x, n: q })
                } else {
                    Ok(x - 1)
                }
            };
            let mut pairs = Vec::new();
            for &t in &ctx.targets {
                let j = one_based(t)?;
                let pa = match ctx.parents.get(&t.to_string()) {
                    Some(list) => list
                        .iter()
                        .map(|&p| one_based(p))
                        .collect::<Result<NodeSet>>()?,
                    None => NodeSet::EMPTY,
                };
                pairs.push((j, pa));
            }
            for key in ctx.parents.keys() {
                let ok = key
                    .parse::<usize>()
                    .map(|t| ctx.targets.contains(&t))
                    .unwrap_or(false);
                if !ok {
                    return Err(Error::InvalidInput(format!(
                        "context {}: parents given for non-target `{key}`",
                        ctx.k
                    )));
                }
            }
            slots[ctx.k - 1] = Some(ContextIntervention::new(q, &pairs)?);
        }
        InterventionCollection::new(slots.into_iter().map(|s| s.unwrap()).collect())
    }
}

/// Serialized form of a state: 1-based DAG edges plus interventions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelStateJson {
    pub q: usize,
    pub dag: Vec<[usize; 2]>,
    pub interventions: InterventionCollectionJson,
}

impl ModelStateJson {
    pub fn from_state(s: &ModelState) -> Self {
        ModelStateJson {
            q: s.q(),
            dag: s.dag.edges().into_iter().map(|(u, v)| [u + 1, v + 1]).collect(),
            interventions: InterventionCollectionJson::from_collection(&s.interventions),
        }
    }

    pub fn to_state(&self) -> Result<ModelState> {
        let q = self.q;
        let mut edges = Vec::with_capacity(self.dag.len());
        for &[u, v] in &self.dag {
            for x in [u, v] {
                if x == 0 || x > q {
                    return Err(Error::VertexOutOfRange { vertex: x, n: q });
                }
            }
            edges.push((u - 1, v - 1));
        }
        let state = ModelState::new(Dag::from_edges(q, &edges)?, self.interventions.to_collection(q)?)?;
        state.validate()?;
        Ok(state)
    }
}
