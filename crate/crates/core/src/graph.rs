//! Immutable causal DAGs over named variables.
//!
//! Nodes are identified by name. Each node carries an `observed` flag and an
//! ordered support of printable level labels (binary `{0, 1}` unless stated
//! otherwise). An edge may be *gated* on another parent of its target: the
//! dependence it encodes is only present while the gating parent takes one of
//! a listed set of levels. Graph algorithms here treat gated edges as ordinary
//! edges; the gate only matters once a SWIG fixes the gating variable.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("invalid variable name {0:?}: expected letters, digits or underscores")]
    InvalidName(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("duplicate node {0}")]
    DuplicateNode(VariableId),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(VariableId, VariableId),
    #[error("self-loop on {0}")]
    SelfLoop(VariableId),
    #[error("graph has a cycle: {}", join_ids(.0, " -> "))]
    CycleError(Vec<VariableId>),
    #[error("graph must have at least one node")]
    Empty,
    #[error("node {0} has an empty support")]
    EmptySupport(VariableId),
    #[error("node {node} declares level {level:?} twice")]
    DuplicateLevel { node: VariableId, level: String },
    #[error("query sets overlap on {0}")]
    OverlappingSets(VariableId),
    #[error("edge {from} -> {to} is gated on {on}, which must be another parent of {to}")]
    BadGate {
        from: VariableId,
        to: VariableId,
        on: VariableId,
    },
    #[error("gate on {on} uses level {level}, outside its support")]
    GateLevel { on: VariableId, level: u32 },
}

fn join_ids(ids: &[VariableId], sep: &str) -> String {
    ids.iter().map(|v| v.as_str()).collect::<Vec<_>>().join(sep)
}

/// Name of a variable: a nonempty token of ASCII letters, digits and `_`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct VariableId(String);

impl VariableId {
    pub fn new(name: impl Into<String>) -> Result<Self, GraphError> {
        let name = name.into();
        if is_token(&name) {
            Ok(Self(name))
        } else {
            Err(GraphError::InvalidName(name))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

pub(crate) fn is_token(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl TryFrom<String> for VariableId {
    type Error = GraphError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::new(s)
    }
}

impl TryFrom<&str> for VariableId {
    type Error = GraphError;
    fn try_from(s: &str) -> Result<Self, Self::Error> {
        Self::new(s)
    }
}

impl From<VariableId> for String {
    fn from(v: VariableId) -> String {
        v.0
    }
}

// Hash and Eq are those of the inner string.
impl std::borrow::Borrow<str> for VariableId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl AsRef<str> for VariableId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VariableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSpec {
    pub id: VariableId,
    pub observed: bool,
    pub support: Vec<String>,
}

impl NodeSpec {
    /// Observed binary node with support `{0, 1}`.
    pub fn new(name: &str) -> Result<Self, GraphError> {
        Ok(Self {
            id: VariableId::new(name)?,
            observed: true,
            support: vec!["0".into(), "1".into()],
        })
    }

    pub fn latent(name: &str) -> Result<Self, GraphError> {
        Ok(Self {
            observed: false,
            ..Self::new(name)?
        })
    }

    pub fn with_support<I, S>(mut self, labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.support = labels.into_iter().map(Into::into).collect();
        self
    }

    pub fn level_of(&self, label: &str) -> Option<u32> {
        self.support.iter().position(|l| l == label).map(|i| i as u32)
    }
}

/// The edge it is attached to is only active while `on` takes one of `levels`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Gate {
    pub on: VariableId,
    pub levels: Vec<u32>,
}

impl Gate {
    pub fn is_active(&self, level: u32) -> bool {
        self.levels.contains(&level)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSpec {
    pub from: VariableId,
    pub to: VariableId,
    pub gate: Option<Gate>,
}

impl EdgeSpec {
    pub fn new(from: &str, to: &str) -> Result<Self, GraphError> {
        Ok(Self {
            from: VariableId::new(from)?,
            to: VariableId::new(to)?,
            gate: None,
        })
    }

    pub fn gated(mut self, on: &str, levels: &[u32]) -> Result<Self, GraphError> {
        self.gate = Some(Gate {
            on: VariableId::new(on)?,
            levels: levels.to_vec(),
        });
        Ok(self)
    }
}

/// A validated DAG. Node order is declaration order; `topo_order` breaks ties
/// by declaration order.
#[derive(Debug, Clone)]
pub struct CausalDag {
    nodes: Vec<NodeSpec>,
    index: HashMap<VariableId, usize>,
    edges: Vec<(usize, usize, Option<Gate>)>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    topo: Vec<usize>,
}

impl PartialEq for CausalDag {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

impl Eq for CausalDag {}

impl CausalDag {
    pub fn new(nodes: Vec<NodeSpec>, edges: Vec<EdgeSpec>) -> Result<Self, GraphError> {
        if nodes.is_empty() {
            return Err(GraphError::Empty);
        }
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if n.support.is_empty() {
                return Err(GraphError::EmptySupport(n.id.clone()));
            }
            let mut seen = BTreeSet::new();
            for l in &n.support {
                if !seen.insert(l) {
                    return Err(GraphError::DuplicateLevel {
                        node: n.id.clone(),
                        level: l.clone(),
                    });
                }
            }
            if index.insert(n.id.clone(), i).is_some() {
                return Err(GraphError::DuplicateNode(n.id.clone()));
            }
        }
        let lookup = |v: &VariableId| {
            index
                .get(v)
                .copied()
                .ok_or_else(|| GraphError::UnknownNode(v.to_string()))
        };

        let n = nodes.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        let mut resolved = Vec::with_capacity(edges.len());
        for e in &edges {
            let (u, v) = (lookup(&e.from)?, lookup(&e.to)?);
            if u == v {
                return Err(GraphError::SelfLoop(e.from.clone()));
            }
            if parents[v].contains(&u) {
                return Err(GraphError::DuplicateEdge(e.from.clone(), e.to.clone()));
            }
            parents[v].push(u);
            children[u].push(v);
            resolved.push((u, v, e.gate.clone()));
        }
        for p in parents.iter_mut().chain(children.iter_mut()) {
            p.sort_unstable();
        }
        // Gates may only reference another parent of the target.
        for (u, v, gate) in resolved.iter_mut() {
            if let Some(g) = gate {
                let on = lookup(&g.on)?;
                if on == *u || !parents[*v].contains(&on) {
                    return Err(GraphError::BadGate {
                        from: nodes[*u].id.clone(),
                        to: nodes[*v].id.clone(),
                        on: g.on.clone(),
                    });
                }
                g.levels.sort_unstable();
                g.levels.dedup();
                if let Some(&bad) = g
                    .levels
                    .iter()
                    .find(|&&l| l as usize >= nodes[on].support.len())
                {
                    return Err(GraphError::GateLevel {
                        on: g.on.clone(),
                        level: bad,
                    });
                }
            }
        }

        let topo = topological_order(&parents, &children)
            .map_err(|cycle| GraphError::CycleError(cycle.into_iter().map(|i| nodes[i].id.clone()).collect()))?;

        Ok(Self {
            nodes,
            index,
            edges: resolved,
            parents,
            children,
            topo,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &NodeSpec {
        &self.nodes[i]
    }

    pub fn index_of(&self, name: &str) -> Result<usize, GraphError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| GraphError::UnknownNode(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Option<&NodeSpec> {
        self.index_of(name).ok().map(|i| &self.nodes[i])
    }

    pub fn contains(&self, id: &VariableId) -> bool {
        self.index.contains_key(id)
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in declaration order.
    pub fn edges(&self) -> impl Iterator<Item = EdgeSpec> + '_ {
        self.edges.iter().map(|(u, v, g)| EdgeSpec {
            from: self.nodes[*u].id.clone(),
            to: self.nodes[*v].id.clone(),
            gate: g.clone(),
        })
    }

    pub(crate) fn edge_indices(&self) -> &[(usize, usize, Option<Gate>)] {
        &self.edges
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        match (self.index_of(from), self.index_of(to)) {
            (Ok(u), Ok(v)) => self.parents[v].contains(&u),
            _ => false,
        }
    }

    /// Parent indices of node `i`, sorted by declaration order.
    pub fn parents_of(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn children_of(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    /// The gate on edge `from -> to`, if any.
    pub fn gate(&self, from: usize, to: usize) -> Option<&Gate> {
        self.edges
            .iter()
            .find(|(u, v, _)| *u == from && *v == to)
            .and_then(|(_, _, g)| g.as_ref())
    }

    pub fn topo_order(&self) -> &[usize] {
        &self.topo
    }

    pub fn topo_ids(&self) -> Vec<&VariableId> {
        self.topo.iter().map(|&i| &self.nodes[i].id).collect()
    }

    /// Position of each node in the canonical topological order.
    pub fn topo_positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.nodes.len()];
        for (k, &i) in self.topo.iter().enumerate() {
            pos[i] = k;
        }
        pos
    }

    pub fn descendants(&self, v: &str) -> Result<BTreeSet<VariableId>, GraphError> {
        let i = self.index_of(v)?;
        Ok(self.ids(&closure(&self.children, &[i])))
    }

    pub fn ancestors(&self, v: &str) -> Result<BTreeSet<VariableId>, GraphError> {
        let i = self.index_of(v)?;
        Ok(self.ids(&closure(&self.parents, &[i])))
    }

    fn ids(&self, mask: &[bool]) -> BTreeSet<VariableId> {
        mask.iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| self.nodes[i].id.clone())
            .collect()
    }

    pub(crate) fn resolve_all<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>, GraphError> {
        names.iter().map(|n| self.index_of(n.as_ref())).collect()
    }

    /// Standard d-separation of `a` and `b` given `given`. The `observed` flag
    /// is ignored here.
    pub fn d_separated(
        &self,
        a: &[impl AsRef<str>],
        b: &[impl AsRef<str>],
        given: &[impl AsRef<str>],
    ) -> Result<bool, GraphError> {
        let (a, b, z) = (self.resolve_all(a)?, self.resolve_all(b)?, self.resolve_all(given)?);
        check_disjoint(&a, &b, &z).map_err(|i| GraphError::OverlappingSets(self.nodes[i].id.clone()))?;
        Ok(d_separated_indices(&self.parents, &self.children, &a, &b, &z))
    }

    /// DOT rendering; latent nodes are dashed, gated edges carry a label.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph G {\n");
        for n in &self.nodes {
            if n.observed {
                let _ = writeln!(out, "  \"{}\";", n.id);
            } else {
                let _ = writeln!(out, "  \"{}\" [style=dashed];", n.id);
            }
        }
        for (u, v, g) in &self.edges {
            let _ = write!(out, "  \"{}\" -> \"{}\"", self.nodes[*u].id, self.nodes[*v].id);
            if let Some(g) = g {
                let on = self.index[&g.on];
                let labels: Vec<_> = g
                    .levels
                    .iter()
                    .map(|&l| self.nodes[on].support[l as usize].as_str())
                    .collect();
                let _ = write!(out, " [label=\"{} in {{{}}}\"]", g.on, labels.join(","));
            }
            out.push_str(";\n");
        }
        out.push_str("}\n");
        out
    }
}

pub(crate) fn check_disjoint(a: &[usize], b: &[usize], z: &[usize]) -> Result<(), usize> {
    for &x in a {
        if b.contains(&x) || z.contains(&x) {
            return Err(x);
        }
    }
    for &x in b {
        if z.contains(&x) {
            return Err(x);
        }
    }
    Ok(())
}

/// Kahn's algorithm with a min-heap on declaration index. On failure returns
/// one cycle as a closed node sequence (first node repeated at the end).
fn topological_order(parents: &[Vec<usize>], children: &[Vec<usize>]) -> Result<Vec<usize>, Vec<usize>> {
    let n = parents.len();
    let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut heap: BinaryHeap<Reverse<usize>> = (0..n).filter(|&i| indeg[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(i)) = heap.pop() {
        order.push(i);
        for &c in &children[i] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                heap.push(Reverse(c));
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    // Every remaining node has a remaining parent; walk backwards until a repeat.
    let remaining: Vec<bool> = indeg.iter().map(|&d| d > 0).collect();
    let start = remaining.iter().position(|&r| r).unwrap_or(0);
    let mut walk = vec![start];
    let mut seen_at = HashMap::from([(start, 0usize)]);
    let mut cur = start;
    loop {
        let next = *parents[cur]
            .iter()
            .find(|&&p| remaining[p])
            .expect("node left over by Kahn's algorithm has a remaining parent");
        if let Some(&at) = seen_at.get(&next) {
            let mut cycle: Vec<usize> = walk[at..].to_vec();
            cycle.push(next);
            cycle.reverse();
            return Err(cycle);
        }
        seen_at.insert(next, walk.len());
        walk.push(next);
        cur = next;
    }
}

/// Reflexive closure of `start` along the adjacency lists.
pub(crate) fn closure(adj: &[Vec<usize>], start: &[usize]) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue: VecDeque<usize> = start.iter().copied().collect();
    for &s in start {
        seen[s] = true;
    }
    while let Some(i) = queue.pop_front() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen
}

/// Reachability ("Bayes ball") d-separation test over index lists.
pub(crate) fn d_separated_indices(
    parents: &[Vec<usize>],
    children: &[Vec<usize>],
    a: &[usize],
    b: &[usize],
    given: &[usize],
) -> bool {
    let n = parents.len();
    let mut observed = vec![false; n];
    for &z in given {
        observed[z] = true;
    }
    // Colliders open when they are in `given` or have a descendant in it.
    let opens_collider = closure(parents, given);

    let mut target = vec![false; n];
    for &x in b {
        target[x] = true;
    }
    // (node, arrived_from_child)
    let mut visited = vec![[false; 2]; n];
    let mut stack: Vec<(usize, bool)> = a.iter().map(|&x| (x, true)).collect();
    while let Some((v, up)) = stack.pop() {
        if visited[v][up as usize] {
            continue;
        }
        visited[v][up as usize] = true;
        if !observed[v] && target[v] {
            return false;
        }
        if up {
            if !observed[v] {
                stack.extend(parents[v].iter().map(|&p| (p, true)));
                stack.extend(children[v].iter().map(|&c| (c, false)));
            }
        } else {
            if !observed[v] {
                stack.extend(children[v].iter().map(|&c| (c, false)));
            }
            if opens_collider[v] {
                stack.extend(parents[v].iter().map(|&p| (p, true)));
            }
        }
    }
    true
}
