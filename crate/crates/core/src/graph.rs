//! Directed graphs, DAGs and the observational graph predicates.
//!
//! Vertices are 0-based here. External formats (edge lists, JSON, CSV) are
//! 1-based and converted at the I/O boundary.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::ops::Deref;

use crate::error::{Error, Result};
use crate::nodeset::{NodeSet, MAX_NODES};

/// A directed graph stored as parent and child bitset rows. May contain cycles.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digraph {
    pa: Vec<NodeSet>,
    ch: Vec<NodeSet>,
}

impl std::fmt::Debug for Digraph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Digraph(n={}, ", self.n())?;
        f.debug_list().entries(self.edges()).finish()?;
        write!(f, ")")
    }
}

impl Digraph {
    pub fn empty(n: usize) -> Self {
        assert!(n <= MAX_NODES, "at most {MAX_NODES} vertices supported");
        Digraph {
            pa: vec![NodeSet::EMPTY; n],
            ch: vec![NodeSet::EMPTY; n],
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 || n > MAX_NODES {
            return Err(Error::MalformedGraph(format!(
                "vertex count must be in 1..={MAX_NODES}, got {n}"
            )));
        }
        let mut g = Digraph::empty(n);
        for &(u, v) in edges {
            g.check_vertex(u)?;
            g.check_vertex(v)?;
            if u == v {
                return Err(Error::MalformedGraph(format!("self-loop at vertex {u}")));
            }
            g.add_edge(u, v);
        }
        Ok(g)
    }

    /// Builds a graph from a square 0/1 matrix with `adj[i][j] = 1` iff `i -> j`.
    pub fn from_adjacency<R: AsRef<[u8]>>(adj: &[R]) -> Result<Self> {
        let n = adj.len();
        if n == 0 || n > MAX_NODES {
            return Err(Error::MalformedGraph(format!(
                "vertex count must be in 1..={MAX_NODES}, got {n}"
            )));
        }
        let mut g = Digraph::empty(n);
        for (i, row) in adj.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n {
                return Err(Error::MalformedGraph(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &x) in row.iter().enumerate() {
                match x {
                    0 => {}
                    1 if i == j => {
                        return Err(Error::MalformedGraph(format!("nonzero diagonal at {i}")))
                    }
                    1 => g.add_edge(i, j),
                    other => {
                        return Err(Error::MalformedGraph(format!(
                            "entry ({i},{j}) is {other}, expected 0 or 1"
                        )))
                    }
                }
            }
        }
        Ok(g)
    }

    /// Builds a graph directly from parent rows.
    pub fn from_parent_sets(pa: Vec<NodeSet>) -> Result<Self> {
        let n = pa.len();
        if n == 0 || n > MAX_NODES {
            return Err(Error::MalformedGraph(format!(
                "vertex count must be in 1..={MAX_NODES}, got {n}"
            )));
        }
        let mut ch = vec![NodeSet::EMPTY; n];
        for (v, p) in pa.iter().enumerate() {
            if !p.is_subset(NodeSet::full(n)) || p.contains(v) {
                return Err(Error::MalformedGraph(format!(
                    "invalid parent set {p:?} for vertex {v}"
                )));
            }
            for u in p.iter() {
                ch[u].insert(v);
            }
        }
        Ok(Digraph { pa, ch })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.pa.len()
    }

    pub fn check_vertex(&self, v: usize) -> Result<()> {
        if v < self.n() {
            Ok(())
        } else {
            Err(Error::VertexOutOfRange { vertex: v, n: self.n() })
        }
    }

    #[inline]
    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.pa[v].contains(u)
    }

    #[inline]
    pub fn adjacent(&self, u: usize, v: usize) -> bool {
        self.pa[v].contains(u) || self.pa[u].contains(v)
    }

    #[inline]
    pub fn add_edge(&mut self, u: usize, v: usize) {
        debug_assert_ne!(u, v);
        self.pa[v].insert(u);
        self.ch[u].insert(v);
    }

    #[inline]
    pub fn remove_edge(&mut self, u: usize, v: usize) {
        self.pa[v].remove(u);
        self.ch[u].remove(v);
    }

    /// Replaces the parent set of `v`.
    pub fn set_parents(&mut self, v: usize, parents: NodeSet) {
        debug_assert!(!parents.contains(v));
        for u in self.pa[v].iter() {
            self.ch[u].remove(v);
        }
        for u in parents.iter() {
            self.ch[u].insert(v);
        }
        self.pa[v] = parents;
    }

    #[inline]
    pub fn parents(&self, v: usize) -> NodeSet {
        self.pa[v]
    }

    #[inline]
    pub fn children(&self, v: usize) -> NodeSet {
        self.ch[v]
    }

    #[inline]
    pub fn family(&self, v: usize) -> NodeSet {
        self.pa[v].with(v)
    }

    pub fn parent_sets(&self) -> &[NodeSet] {
        &self.pa
    }

    pub fn edge_count(&self) -> usize {
        self.pa.iter().map(|p| p.len()).sum()
    }

    /// Edges `(u, v)` in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for u in 0..self.n() {
            for v in self.ch[u].iter() {
                out.push((u, v));
            }
        }
        out
    }

    pub fn adjacency_matrix(&self) -> Vec<Vec<u8>> {
        (0..self.n())
            .map(|i| (0..self.n()).map(|j| self.has_edge(i, j) as u8).collect())
            .collect()
    }

    /// Topological order with ties broken by ascending vertex index, or `None`
    /// when the graph has a directed cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.n();
        let mut indeg: Vec<usize> = self.pa.iter().map(|p| p.len()).collect();
        let mut ready: NodeSet = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.first() {
            ready.remove(v);
            order.push(v);
            for c in self.ch[v].iter() {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// Vertices reachable from `v` by a directed path of length at least one.
    pub fn descendants(&self, v: usize) -> NodeSet {
        let mut seen = NodeSet::EMPTY;
        let mut frontier = self.ch[v];
        while let Some(u) = frontier.first() {
            frontier.remove(u);
            if seen.contains(u) {
                continue;
            }
            seen.insert(u);
            frontier = frontier.union(self.ch[u].difference(seen));
        }
        seen
    }

    /// `set` together with all of its ancestors.
    pub fn ancestral_closure(&self, set: NodeSet) -> NodeSet {
        let mut seen = NodeSet::EMPTY;
        let mut frontier = set;
        while let Some(u) = frontier.first() {
            frontier.remove(u);
            if seen.contains(u) {
                continue;
            }
            seen.insert(u);
            frontier = frontier.union(self.pa[u].difference(seen));
        }
        seen
    }

    /// Descendant sets of every vertex.
    pub fn reachability(&self) -> Vec<NodeSet> {
        match self.topological_order() {
            Some(order) => {
                let mut desc = vec![NodeSet::EMPTY; self.n()];
                for &v in order.iter().rev() {
                    let mut d = self.ch[v];
                    for c in self.ch[v].iter() {
                        d = d.union(desc[c]);
                    }
                    desc[v] = d;
                }
                desc
            }
            None => (0..self.n()).map(|v| self.descendants(v)).collect(),
        }
    }

    /// Symmetric neighbour rows of the underlying undirected graph.
    pub fn skeleton(&self) -> Vec<NodeSet> {
        (0..self.n()).map(|v| self.pa[v].union(self.ch[v])).collect()
    }
}

/// A directed acyclic graph.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Dag(Digraph);

impl std::fmt::Debug for Dag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Dag(n={}, ", self.n())?;
        f.debug_list().entries(self.edges()).finish()?;
        write!(f, ")")
    }
}

impl Deref for Dag {
    type Target = Digraph;

    fn deref(&self) -> &Digraph {
        &self.0
    }
}

impl Dag {
    pub fn empty(n: usize) -> Self {
        Dag(Digraph::empty(n))
    }

    pub fn from_digraph(g: Digraph) -> Result<Self> {
        if g.is_acyclic() {
            Ok(Dag(g))
        } else {
            Err(Error::MalformedGraph("graph contains a directed cycle".into()))
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Dag::from_digraph(Digraph::from_edges(n, edges)?)
    }

    pub fn from_adjacency<R: AsRef<[u8]>>(adj: &[R]) -> Result<Self> {
        Dag::from_digraph(Digraph::from_adjacency(adj)?)
    }

    pub fn as_digraph(&self) -> &Digraph {
        &self.0
    }

    /// Mutable access for callers that maintain acyclicity themselves.
    pub(crate) fn as_digraph_mut(&mut self) -> &mut Digraph {
        &mut self.0
    }

    pub fn into_digraph(self) -> Digraph {
        self.0
    }

    /// The complete DAG whose topological order is `0, 1, ..., n-1`.
    pub fn complete(n: usize) -> Self {
        let mut g = Digraph::empty(n);
        for v in 0..n {
            for u in 0..v {
                g.add_edge(u, v);
            }
        }
        Dag(g)
    }

    pub fn topological_sort(&self) -> Vec<usize> {
        self.0
            .topological_order()
            .expect("Dag invariant: acyclic")
    }

    pub fn checked_parents(&self, v: usize) -> Result<NodeSet> {
        self.check_vertex(v)?;
        Ok(self.parents(v))
    }

    pub fn checked_family(&self, v: usize) -> Result<NodeSet> {
        self.check_vertex(v)?;
        Ok(self.family(v))
    }

    /// All v-structures `i -> k <- j` with `i`, `j` non-adjacent, as `(i, k, j)`
    /// with `i < j`.
    pub fn v_structures(&self) -> BTreeSet<(usize, usize, usize)> {
        let mut out = BTreeSet::new();
        for k in 0..self.n() {
            let pa = self.parents(k);
            for i in pa.iter() {
                for j in pa.iter().filter(|&j| j > i) {
                    if !self.adjacent(i, j) {
                        out.insert((i, k, j));
                    }
                }
            }
        }
        out
    }

    /// True iff `fa(u) = pa(v)` for the existing edge `u -> v`.
    pub fn is_covered(&self, u: usize, v: usize) -> Result<bool> {
        self.check_vertex(u)?;
        self.check_vertex(v)?;
        if !self.has_edge(u, v) {
            return Err(Error::InvalidQuery(format!("edge {u} -> {v} not in graph")));
        }
        Ok(self.family(u) == self.parents(v))
    }

    /// Whether `c` d-separates `a` from `b`.
    pub fn d_separated(&self, a: NodeSet, b: NodeSet, c: NodeSet) -> Result<bool> {
        let all = NodeSet::full(self.n());
        if !(a.is_subset(all) && b.is_subset(all) && c.is_subset(all)) {
            return Err(Error::InvalidQuery("vertex set out of range".into()));
        }
        if !(a.is_disjoint(b) && a.is_disjoint(c) && b.is_disjoint(c)) {
            return Err(Error::InvalidQuery("sets must be pairwise disjoint".into()));
        }
        Ok(self.d_connected_from(a, c).is_disjoint(b))
    }

    /// Vertices connected to some vertex of `sources` by a trail that is
    /// active given `given` (Bayes-ball reachability).
    pub fn d_connected_from(&self, sources: NodeSet, given: NodeSet) -> NodeSet {
        let anc = self.ancestral_closure(given);
        // visited[0]: arrived travelling against an edge (from a child)
        // visited[1]: arrived along an edge (from a parent)
        let mut visited = [NodeSet::EMPTY; 2];
        let mut stack: Vec<(usize, bool)> = sources.iter().map(|s| (s, false)).collect();
        let mut reached = NodeSet::EMPTY;
        while let Some((y, from_parent)) = stack.pop() {
            let slot = &mut visited[from_parent as usize];
            if slot.contains(y) {
                continue;
            }
            slot.insert(y);
            if !given.contains(y) {
                reached.insert(y);
            }
            if !from_parent {
                if !given.contains(y) {
                    stack.extend(self.parents(y).iter().map(|p| (p, false)));
                    stack.extend(self.children(y).iter().map(|c| (c, true)));
                }
            } else {
                if !given.contains(y) {
                    stack.extend(self.children(y).iter().map(|c| (c, true)));
                }
                if anc.contains(y) {
                    stack.extend(self.parents(y).iter().map(|p| (p, false)));
                }
            }
        }
        reached
    }
}

/// `true` iff the square 0/1 matrix `adj` (zero diagonal) describes an acyclic
/// graph.
pub fn is_acyclic<R: AsRef<[u8]>>(adj: &[R]) -> Result<bool> {
    Ok(Digraph::from_adjacency(adj)?.is_acyclic())
}

/// All DAGs on `n` labelled vertices. Intended for exhaustive checks with
/// `n <= 5` (29281 graphs).
pub fn all_dags(n: usize) -> Vec<Dag> {
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let total = 3usize.pow(pairs.len() as u32);
    let mut out = Vec::new();
    for code in 0..total {
        let mut g = Digraph::empty(n);
        let mut c = code;
        for &(i, j) in &pairs {
            match c % 3 {
                1 => g.add_edge(i, j),
                2 => g.add_edge(j, i),
                _ => {}
            }
            c /= 3;
        }
        if g.is_acyclic() {
            out.push(Dag(g));
        }
    }
    out
}

/// A partially directed graph: `i -> j` when only `adj[i]` holds `j`,
/// `i - j` when both directions are present.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Pdag {
    adj: Vec<NodeSet>,
}

impl Pdag {
    pub fn empty(n: usize) -> Self {
        Pdag { adj: vec![NodeSet::EMPTY; n] }
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn from_digraph(g: &Digraph) -> Self {
        Pdag {
            adj: (0..g.n()).map(|v| g.children(v)).collect(),
        }
    }

    pub fn add_directed(&mut self, u: usize, v: usize) {
        self.adj[u].insert(v);
        self.adj[v].remove(u);
    }

    pub fn add_undirected(&mut self, u: usize, v: usize) {
        self.adj[u].insert(v);
        self.adj[v].insert(u);
    }

    pub fn is_directed(&self, u: usize, v: usize) -> bool {
        self.adj[u].contains(v) && !self.adj[v].contains(u)
    }

    pub fn is_undirected(&self, u: usize, v: usize) -> bool {
        self.adj[u].contains(v) && self.adj[v].contains(u)
    }

    pub fn adjacent(&self, u: usize, v: usize) -> bool {
        self.adj[u].contains(v) || self.adj[v].contains(u)
    }

    pub fn undirected_count(&self) -> usize {
        (0..self.n())
            .map(|u| self.adj[u].iter().filter(|&v| v > u && self.is_undirected(u, v)).count())
            .sum()
    }

    pub fn adjacency_matrix(&self) -> Vec<Vec<u8>> {
        (0..self.n())
            .map(|i| (0..self.n()).map(|j| self.adj[i].contains(j) as u8).collect())
            .collect()
    }
}

/// Declared vertex count, if any, and 0-based edges.
pub type EdgeList = (Option<usize>, Vec<(usize, usize)>);

/// Parses the `u v` edge-list format (1-based). Blank lines and lines starting
/// with `#` are ignored, except a `# q=N` header which fixes the vertex count.
/// Returns the declared vertex count, if any, and 0-based edges.
pub fn parse_edge_list(text: &str) -> Result<EdgeList> {
    let mut declared = None;
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(q) = rest.trim().strip_prefix("q=") {
                declared = Some(q.trim().parse::<usize>().map_err(|_| {
                    Error::MalformedGraph(format!("line {}: bad vertex count header", lineno + 1))
                })?);
            }
            continue;
        }
        let mut it = line.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<usize> {
            let tok = tok.ok_or_else(|| {
                Error::MalformedGraph(format!("line {}: expected `u v`", lineno + 1))
            })?;
            let x: usize = tok.parse().map_err(|_| {
                Error::MalformedGraph(format!("line {}: `{tok}` is not a vertex", lineno + 1))
            })?;
            if x == 0 {
                return Err(Error::MalformedGraph(format!(
                    "line {}: vertices are 1-based",
                    lineno + 1
                )));
            }
            Ok(x - 1)
        };
        let u = parse(it.next())?;
        let v = parse(it.next())?;
        if it.next().is_some() {
            return Err(Error::MalformedGraph(format!(
                "line {}: trailing tokens",
                lineno + 1
            )));
        }
        edges.push((u, v));
    }
    Ok((declared, edges))
}

/// Renders a graph in the edge-list format with a `# q=N` header.
pub fn write_edge_list(g: &Digraph) -> String {
    let mut s = format!("# q={}\n", g.n());
    for (u, v) in g.edges() {
        let _ = writeln!(s, "{} {}", u + 1, v + 1);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[usize]) -> NodeSet {
        v.iter().copied().collect()
    }

    // Figure-2 style DAG, 0-based: 0->1, 0->2, 1->3, 2->3
    fn diamond() -> Dag {
        Dag::from_edges(4, &[(0, 1), (0, 2), (1, 3), (2, 3)]).unwrap()
    }

    #[test]
    fn acyclicity_examples() {
        assert!(is_acyclic(&[[0u8, 0, 0], [0, 0, 0], [0, 0, 0]]).unwrap());
        assert!(!is_acyclic(&[[0u8, 1, 0], [0, 0, 1], [1, 0, 0]]).unwrap());
        assert!(is_acyclic(&diamond().adjacency_matrix()).unwrap());
    }

    #[test]
    fn acyclicity_rejects_malformed() {
        assert!(matches!(
            is_acyclic(&[vec![0u8, 1], vec![0u8]]),
            Err(Error::MalformedGraph(_))
        ));
        assert!(matches!(
            is_acyclic(&[[1u8, 0], [0, 0]]),
            Err(Error::MalformedGraph(_))
        ));
    }

    #[test]
    fn parents_and_family() {
        let d = diamond();
        assert_eq!(d.checked_parents(3).unwrap(), set(&[1, 2]));
        assert_eq!(d.checked_family(3).unwrap(), set(&[1, 2, 3]));
        let e = Dag::empty(3);
        assert_eq!(e.checked_parents(0).unwrap(), NodeSet::EMPTY);
        assert_eq!(e.checked_family(0).unwrap(), set(&[0]));
        assert_eq!(Dag::complete(3).parents(2), set(&[0, 1]));
        assert!(matches!(
            d.checked_parents(4),
            Err(Error::VertexOutOfRange { vertex: 4, n: 4 })
        ));
    }

    #[test]
    fn skeleton_examples() {
        let d = Dag::from_edges(2, &[(0, 1)]).unwrap();
        assert_eq!(d.skeleton(), vec![set(&[1]), set(&[0])]);
        let s = diamond().skeleton();
        assert_eq!(s, vec![set(&[1, 2]), set(&[0, 3]), set(&[0, 3]), set(&[1, 2])]);
        assert!(Dag::empty(3).skeleton().iter().all(|r| r.is_empty()));
    }

    #[test]
    fn v_structure_examples() {
        let collider = Dag::from_edges(3, &[(0, 2), (1, 2)]).unwrap();
        assert_eq!(collider.v_structures().into_iter().collect::<Vec<_>>(), vec![(0, 2, 1)]);
        let chain = Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert!(chain.v_structures().is_empty());
        assert_eq!(diamond().v_structures().into_iter().collect::<Vec<_>>(), vec![(1, 3, 2)]);
    }

    #[test]
    fn d_separation_examples() {
        let chain = Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert!(chain.d_separated(set(&[0]), set(&[2]), set(&[1])).unwrap());
        assert!(!chain.d_separated(set(&[0]), set(&[2]), NodeSet::EMPTY).unwrap());
        let collider = Dag::from_edges(3, &[(0, 2), (1, 2)]).unwrap();
        assert!(!collider.d_separated(set(&[0]), set(&[1]), set(&[2])).unwrap());
        assert!(collider.d_separated(set(&[0]), set(&[1]), NodeSet::EMPTY).unwrap());
        assert!(diamond().d_separated(set(&[0]), set(&[3]), set(&[1, 2])).unwrap());
    }

    #[test]
    fn d_separation_rejects_overlap() {
        let d = diamond();
        assert!(matches!(
            d.d_separated(set(&[0]), set(&[0, 3]), NodeSet::EMPTY),
            Err(Error::InvalidQuery(_))
        ));
    }

    #[test]
    fn covered_edges() {
        let two = Dag::from_edges(2, &[(0, 1)]).unwrap();
        assert!(two.is_covered(0, 1).unwrap());
        let d = diamond();
        assert!(!d.is_covered(1, 3).unwrap());
        assert!(d.is_covered(0, 2).unwrap());
        assert!(matches!(d.is_covered(3, 0), Err(Error::InvalidQuery(_))));
    }

    #[test]
    fn topological_ties_ascending() {
        let d = Dag::from_edges(4, &[(3, 0), (2, 1)]).unwrap();
        assert_eq!(d.topological_sort(), vec![2, 1, 3, 0]);
    }

    #[test]
    fn dag_counts() {
        // OEIS A003024
        let counts: Vec<usize> = (1..=4).map(|n| all_dags(n).len()).collect();
        assert_eq!(counts, vec![1, 3, 25, 543]);
    }

    #[test]
    fn edge_list_round_trip() {
        let d = diamond();
        let text = write_edge_list(&d);
        let (q, edges) = parse_edge_list(&text).unwrap();
        assert_eq!(q, Some(4));
        assert_eq!(Dag::from_edges(4, &edges).unwrap(), d);
        assert!(parse_edge_list("0 1\n").is_err());
        assert!(parse_edge_list("1 x\n").is_err());
    }
}
