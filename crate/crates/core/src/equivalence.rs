//! I-Markov equivalence of (DAG, intervention) pairs.
//!
//! Two pairs are equivalent when, context by context, their I-DAGs share
//! skeleton and v-structures. A d-separation based oracle, Find-Edge, reversal
//! sequences between equivalent pairs and class enumeration live here too.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use crate::error::{Error, Result};
use crate::graph::{Dag, Pdag};
use crate::intervention::{is_simultaneously_covered, ModelState};
use crate::nodeset::NodeSet;

/// Default bound on the size of an enumerated class.
pub const CLASS_LIMIT: usize = 1_000_000;

/// Largest `q` accepted by the semantic oracle.
pub const ORACLE_MAX_Q: usize = 6;

/// Skeleton and v-structures of one I-DAG.
pub type ContextSignature = (Vec<NodeSet>, BTreeSet<(usize, usize, usize)>);

fn check_pair(p1: &ModelState, p2: &ModelState) -> Result<()> {
    if p1.q() != p2.q() || p1.k_count() != p2.k_count() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: (q={}, K={}) vs (q={}, K={})",
            p1.q(),
            p1.k_count(),
            p2.q(),
            p2.k_count()
        )));
    }
    p1.validate()?;
    p2.validate()
}

/// Per-context skeleton and v-structure sets of the I-DAGs of a valid state.
/// Two valid states are I-Markov equivalent iff their signatures are equal.
pub fn markov_signature(p: &ModelState) -> Result<Vec<ContextSignature>> {
    (0..p.k_count())
        .map(|k| {
            let g = p.idag(k)?;
            Ok((g.graph().skeleton(), g.graph().v_structures()))
        })
        .collect()
}

/// Graphical equivalence test: equal skeletons and v-structures in every
/// context's I-DAG.
pub fn i_markov_equivalent(p1: &ModelState, p2: &ModelState) -> Result<bool> {
    check_pair(p1, p2)?;
    for k in 0..p1.k_count() {
        let g1 = p1.idag(k)?;
        let g2 = p2.idag(k)?;
        if g1.graph().skeleton() != g2.graph().skeleton()
            || g1.graph().v_structures() != g2.graph().v_structures()
        {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Bit vector of d-separation statements `A _||_ B | C` over every ordered
/// triple of disjoint vertex sets with `A`, `B` nonempty.
pub fn separation_statements(d: &Dag) -> Result<Vec<u64>> {
    let q = d.n();
    if q > ORACLE_MAX_Q {
        return Err(Error::Capacity {
            what: "semantic oracle vertex count",
            limit: ORACLE_MAX_Q,
            reached: q,
        });
    }
    let total = 4usize.pow(q as u32);
    let mut bits = vec![0u64; total.div_ceil(64)];
    for code in 0..total {
        let (mut a, mut b, mut c) = (NodeSet::EMPTY, NodeSet::EMPTY, NodeSet::EMPTY);
        let mut rest = code;
        for v in 0..q {
            match rest % 4 {
                1 => a.insert(v),
                2 => b.insert(v),
                3 => c.insert(v),
                _ => {}
            }
            rest /= 4;
        }
        if a.is_empty() || b.is_empty() {
            continue;
        }
        if d.d_connected_from(a, c).is_disjoint(b) {
            bits[code / 64] |= 1 << (code % 64);
        }
    }
    Ok(bits)
}

/// Bit vector over disjoint `(A, C)` with `A` nonempty, set when `C`
/// d-separates `A` from the context vertex in the I-DAG.
pub fn invariance_statements(idag: &Dag) -> Result<Vec<u64>> {
    let q = idag.n() - 1;
    if q > ORACLE_MAX_Q {
        return Err(Error::Capacity {
            what: "semantic oracle vertex count",
            limit: ORACLE_MAX_Q,
            reached: q,
        });
    }
    let zeta = NodeSet::singleton(q);
    let total = 3usize.pow(q as u32);
    let mut bits = vec![0u64; total.div_ceil(64)];
    for code in 0..total {
        let (mut a, mut c) = (NodeSet::EMPTY, NodeSet::EMPTY);
        let mut rest = code;
        for v in 0..q {
            match rest % 3 {
                1 => a.insert(v),
                2 => c.insert(v),
                _ => {}
            }
            rest /= 3;
        }
        if a.is_empty() {
            continue;
        }
        if idag.d_connected_from(zeta, c).is_disjoint(a) {
            bits[code / 64] |= 1 << (code % 64);
        }
    }
    Ok(bits)
}

/// Definitional oracle: compares every d-separation statement of each
/// post-intervention DAG and every separation from the context vertex in each
/// I-DAG. Exponential in `q`; refuses `q > 6`.
pub fn semantic_equivalent_oracle(p1: &ModelState, p2: &ModelState) -> Result<bool> {
    check_pair(p1, p2)?;
    if p1.q() > ORACLE_MAX_Q {
        return Err(Error::Capacity {
            what: "semantic oracle vertex count",
            limit: ORACLE_MAX_Q,
            reached: p1.q(),
        });
    }
    for k in 0..p1.k_count() {
        let g1 = Dag::from_digraph(p1.context_graph(k))?;
        let g2 = Dag::from_digraph(p2.context_graph(k))?;
        if separation_statements(&g1)? != separation_statements(&g2)? {
            return Ok(false);
        }
        if invariance_statements(p1.idag(k)?.graph())?
            != invariance_statements(p2.idag(k)?.graph())?
        {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Chickering's Find-Edge: an edge `u -> v` of `d1` reversed in `d2`, with `v`
/// minimal in the topological order of `d1` and `u` maximal among its
/// reversed parents.
pub fn find_edge(d1: &Dag, d2: &Dag) -> Result<(usize, usize)> {
    if d1.n() != d2.n() {
        return Err(Error::InvalidInput("graphs differ in vertex count".into()));
    }
    if d1.skeleton() != d2.skeleton() {
        return Err(Error::InvalidInput("graphs have different skeletons".into()));
    }
    let order = d1.topological_sort();
    let mut pos = vec![0; d1.n()];
    for (i, &v) in order.iter().enumerate() {
        pos[v] = i;
    }
    for &v in &order {
        // parents of v in d1 that are children of v in d2
        let psi = d1.parents(v).intersection(d2.children(v));
        if let Some(u) = psi.iter().max_by_key(|&u| pos[u]) {
            return Ok((u, v));
        }
    }
    Err(Error::NoEdge)
}

/// One edge reversal. `context == 0` reverses a DAG edge (propagating to every
/// context where the endpoint is not a target); `context >= 1` reverses an
/// edge between two targets inside that context's I-DAG.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Reversal {
    pub context: usize,
    pub u: usize,
    pub v: usize,
}

/// Applies a reversal without checking the result for validity.
pub fn apply_reversal(p: &ModelState, r: Reversal) -> Result<ModelState> {
    let mut out = p.clone();
    let (u, v) = (r.u, r.v);
    if r.context == 0 {
        if !p.dag.has_edge(u, v) {
            return Err(Error::InvalidQuery(format!("edge {u} -> {v} not in DAG")));
        }
        let g = out.dag_mut();
        g.remove_edge(u, v);
        g.add_edge(v, u);
    } else {
        if r.context >= p.k_count() {
            return Err(Error::InvalidQuery(format!("no context {}", r.context)));
        }
        let c = out.interventions.context_mut(r.context);
        let (Some(pv), Some(pu)) = (c.induced_parents(v), c.induced_parents(u)) else {
            return Err(Error::InvalidQuery(format!(
                "context {}: {u} and {v} must both be targets",
                r.context
            )));
        };
        if !pv.contains(u) {
            return Err(Error::InvalidQuery(format!(
                "context {}: edge {u} -> {v} absent",
                r.context
            )));
        }
        c.set_induced_parents(v, pv.without(u));
        c.set_induced_parents(u, pu.with(v));
    }
    Ok(out)
}

/// Whether the I-DAG edge `u -> v` of context `k` is covered there.
fn covered_in_context(p: &ModelState, k: usize, u: usize, v: usize) -> bool {
    let c = p.interventions.context(k);
    let zeta = p.q();
    let pa = |j: usize| {
        let s = c.parents_in(&p.dag, j);
        if c.is_target(j) {
            s.with(zeta)
        } else {
            s
        }
    };
    pa(v).contains(u) && pa(u).with(u) == pa(v)
}

/// Reversals available from `p` that stay inside its class: simultaneously
/// covered DAG edges and covered target-target edges of each I-DAG.
pub fn class_moves(p: &ModelState) -> Result<Vec<Reversal>> {
    let mut moves = Vec::new();
    for (u, v) in p.dag.edges() {
        if is_simultaneously_covered(&p.dag, &p.interventions, u, v)? {
            moves.push(Reversal { context: 0, u, v });
        }
    }
    for k in 1..p.k_count() {
        let t = p.interventions.context(k).targets();
        for v in t.iter() {
            for u in p.context_parents(k, v).intersection(t).iter() {
                if covered_in_context(p, k, u, v) {
                    moves.push(Reversal { context: k, u, v });
                }
            }
        }
    }
    Ok(moves)
}

/// The constructive reversal sequence from `p1` to `p2`: first each context's
/// I-DAG of `p1` is rewritten into the one induced by `p2`'s intervention on
/// `p1`'s DAG, then the DAG itself is transformed. Each step is checked; an
/// error is returned if any check fails.
pub fn transform_sequence_constructive(
    p1: &ModelState,
    p2: &ModelState,
) -> Result<Vec<Reversal>> {
    let sig = markov_signature(p1)?;
    let mut cur = p1.clone();
    let mut seq = Vec::new();
    let budget = p1.q() * p1.q() * p1.k_count() + 1;

    for k in 1..p1.k_count() {
        let goal = ModelState {
            dag: cur.dag.clone(),
            interventions: {
                let mut i = cur.interventions.clone();
                *i.context_mut(k) = p2.interventions.context(k).clone();
                i
            },
        };
        goal.validate()?;
        let goal_idag = goal.idag(k)?;
        loop {
            let cur_idag = cur.idag(k)?;
            if cur_idag.graph() == goal_idag.graph() {
                break;
            }
            let (u, v) = find_edge(cur_idag.graph(), goal_idag.graph())?;
            let c = cur.interventions.context(k);
            if !(c.is_target(u) && c.is_target(v)) || !covered_in_context(&cur, k, u, v) {
                return Err(Error::CorruptedState(format!(
                    "context {k}: edge {u} -> {v} is not a covered target edge"
                )));
            }
            let r = Reversal { context: k, u, v };
            cur = apply_reversal(&cur, r)?;
            cur.validate()?;
            if markov_signature(&cur)? != sig {
                return Err(Error::CorruptedState("reversal left the class".into()));
            }
            seq.push(r);
            if seq.len() > budget {
                return Err(Error::CorruptedState("sequence failed to terminate".into()));
            }
        }
        if cur.interventions.context(k) != p2.interventions.context(k) {
            return Err(Error::CorruptedState(format!(
                "context {k} not reached after its phase"
            )));
        }
    }

    while cur.dag != p2.dag {
        let (u, v) = find_edge(&cur.dag, &p2.dag)?;
        if !is_simultaneously_covered(&cur.dag, &cur.interventions, u, v)? {
            return Err(Error::CorruptedState(format!(
                "edge {u} -> {v} is not simultaneously covered"
            )));
        }
        let r = Reversal { context: 0, u, v };
        cur = apply_reversal(&cur, r)?;
        cur.validate()?;
        if markov_signature(&cur)? != sig {
            return Err(Error::CorruptedState("reversal left the class".into()));
        }
        seq.push(r);
        if seq.len() > budget {
            return Err(Error::CorruptedState("sequence failed to terminate".into()));
        }
    }
    if cur != *p2 {
        return Err(Error::CorruptedState("final state differs from target".into()));
    }
    Ok(seq)
}

/// A shortest reversal path from `p1` to `p2` through valid class members.
pub fn transform_sequence_search(p1: &ModelState, p2: &ModelState) -> Result<Vec<Reversal>> {
    let sig = markov_signature(p1)?;
    let mut prev: HashMap<ModelState, Option<(ModelState, Reversal)>> = HashMap::new();
    prev.insert(p1.clone(), None);
    let mut queue = VecDeque::from([p1.clone()]);
    while let Some(s) = queue.pop_front() {
        if s == *p2 {
            let mut seq = Vec::new();
            let mut at = s;
            while let Some(Some((from, r))) = prev.get(&at).cloned() {
                seq.push(r);
                at = from;
            }
            seq.reverse();
            return Ok(seq);
        }
        for r in class_moves(&s)? {
            let t = apply_reversal(&s, r)?;
            if prev.contains_key(&t) || !t.is_valid() || markov_signature(&t)? != sig {
                continue;
            }
            if prev.len() >= CLASS_LIMIT {
                return Err(Error::Capacity {
                    what: "equivalence class",
                    limit: CLASS_LIMIT,
                    reached: prev.len(),
                });
            }
            prev.insert(t.clone(), Some((s.clone(), r)));
            queue.push_back(t);
        }
    }
    Err(Error::CorruptedState(
        "target not reachable by class-preserving reversals".into(),
    ))
}

/// Reversals turning `p1` into the equivalent `p2`, every intermediate state a
/// valid member of the same class. Uses the constructive procedure and falls
/// back to a breadth-first search if one of its checks fails.
pub fn transform_sequence(p1: &ModelState, p2: &ModelState) -> Result<Vec<Reversal>> {
    if !i_markov_equivalent(p1, p2)? {
        return Err(Error::NotEquivalent);
    }
    transform_sequence_constructive(p1, p2).or_else(|_| transform_sequence_search(p1, p2))
}

/// Members of an I-Markov equivalence class and per-context representatives.
#[derive(Clone, Debug)]
pub struct EquivalenceClass {
    /// Members in breadth-first discovery order, starting with the seed.
    pub members: Vec<ModelState>,
    /// One partially directed graph per context over the observed vertices:
    /// an edge is directed iff every member orients it the same way there.
    pub representatives: Vec<Pdag>,
}

impl EquivalenceClass {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, p: &ModelState) -> bool {
        self.members.contains(p)
    }
}

/// Enumerates the class of `p` by closure under class-preserving reversals.
pub fn enumerate_class(p: &ModelState) -> Result<EquivalenceClass> {
    enumerate_class_capped(p, CLASS_LIMIT)
}

pub fn enumerate_class_capped(p: &ModelState, limit: usize) -> Result<EquivalenceClass> {
    p.validate()?;
    let sig = markov_signature(p)?;
    let mut seen: HashSet<ModelState> = HashSet::from([p.clone()]);
    let mut members = vec![p.clone()];
    let mut head = 0;
    while head < members.len() {
        let s = members[head].clone();
        head += 1;
        for r in class_moves(&s)? {
            let t = apply_reversal(&s, r)?;
            if seen.contains(&t) || !t.is_valid() || markov_signature(&t)? != sig {
                continue;
            }
            if members.len() >= limit {
                return Err(Error::Capacity {
                    what: "equivalence class",
                    limit,
                    reached: members.len(),
                });
            }
            seen.insert(t.clone());
            members.push(t);
        }
    }
    let representatives = (0..p.k_count())
        .map(|k| representative(&members, k))
        .collect();
    Ok(EquivalenceClass { members, representatives })
}

fn representative(members: &[ModelState], k: usize) -> Pdag {
    let q = members[0].q();
    let graphs: Vec<_> = members.iter().map(|m| m.context_graph(k)).collect();
    let mut pdag = Pdag::empty(q);
    for (u, v) in graphs[0].edges() {
        if graphs.iter().all(|g| g.has_edge(u, v)) {
            pdag.add_directed(u, v);
        } else {
            pdag.add_undirected(u, v);
        }
    }
    pdag
}
