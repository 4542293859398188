//! Single world intervention graphs.
//!
//! Each intervened node is split into a random part, which keeps the node's
//! incoming edges, and a fixed part, which takes over its outgoing edges.
//! Random nodes are relabelled with their minimal counterfactual label: the
//! interventions whose fixed node has a directed path to them. A regime may
//! carry symbolic settings (`z`), so one graph serves every value they can
//! later be bound to.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::dist::Level;
use crate::graph::{self, CausalDag, GraphError, VariableId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SwigError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("regime sets {0} twice")]
    RepeatedStep(VariableId),
    #[error("regime order contradicts the graph: {later} is an ancestor of the earlier step {earlier}")]
    RegimeOrderError { earlier: VariableId, later: VariableId },
    #[error("level {label:?} is not in the support of {var}")]
    UnknownLevel { var: VariableId, label: String },
    #[error("no outcome designated")]
    NoDesignatedOutcome,
    #[error("outcome {0} is intervened on by the regime")]
    OutcomeIntervened(VariableId),
    #[error("symbol {symbol:?} for {var} is unbound")]
    UnboundSymbol { var: VariableId, symbol: String },
    #[error("{0} is not a random node of this SWIG")]
    UnknownLabel(String),
}

/// The value a regime forces a variable to.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Setting {
    Value { level: Level, label: String },
    /// A placeholder such as `z`, bound to a level at evaluation time.
    Symbol(String),
}

impl Setting {
    pub fn level(&self) -> Option<Level> {
        match self {
            Setting::Value { level, .. } => Some(*level),
            Setting::Symbol(_) => None,
        }
    }

    /// `r=1` for a concrete level of `R`, the bare symbol otherwise.
    pub fn render(&self, var: &VariableId) -> String {
        match self {
            Setting::Value { label, .. } => format!("{}={}", var.as_str().to_lowercase(), label),
            Setting::Symbol(s) => s.clone(),
        }
    }
}

/// An ordered joint intervention.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Regime {
    steps: Vec<(VariableId, Setting)>,
}

impl Regime {
    pub fn new(steps: Vec<(VariableId, Setting)>) -> Result<Self, SwigError> {
        for (i, (v, _)) in steps.iter().enumerate() {
            if steps[..i].iter().any(|(w, _)| w == v) {
                return Err(SwigError::RepeatedStep(v.clone()));
            }
        }
        Ok(Self { steps })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a regime from `(variable, label-or-symbol)` pairs. A token that is
    /// a level label of the variable is concrete; anything else is a symbol.
    pub fn from_tokens(dag: &CausalDag, steps: &[(&str, &str)]) -> Result<Self, SwigError> {
        let mut out = Vec::with_capacity(steps.len());
        for &(var, token) in steps {
            let i = dag.index_of(var)?;
            let node = dag.node(i);
            let setting = match node.level_of(token) {
                Some(l) => Setting::Value {
                    level: Level(l),
                    label: token.to_string(),
                },
                None => Setting::Symbol(token.to_string()),
            };
            out.push((node.id.clone(), setting));
        }
        Self::new(out)
    }

    pub fn steps(&self) -> &[(VariableId, Setting)] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn setting(&self, var: &str) -> Option<&Setting> {
        self.steps.iter().find(|(v, _)| v.as_str() == var).map(|(_, s)| s)
    }

    pub fn position(&self, var: &str) -> Option<usize> {
        self.steps.iter().position(|(v, _)| v.as_str() == var)
    }

    /// Replaces symbols by the labels in `bindings`; unbound symbols remain.
    pub fn bind(&self, dag: &CausalDag, bindings: &BTreeMap<String, String>) -> Result<Self, SwigError> {
        let mut steps = self.steps.clone();
        for (var, setting) in steps.iter_mut() {
            if let Setting::Symbol(sym) = setting {
                if let Some(label) = bindings.get(sym.as_str()) {
                    let node = dag.get(var.as_str()).ok_or_else(|| GraphError::UnknownNode(var.to_string()))?;
                    let level = node.level_of(label).ok_or_else(|| SwigError::UnknownLevel {
                        var: var.clone(),
                        label: label.clone(),
                    })?;
                    *setting = Setting::Value {
                        level: Level(level),
                        label: label.clone(),
                    };
                }
            }
        }
        Ok(Self { steps })
    }

    pub fn is_concrete(&self) -> bool {
        self.steps.iter().all(|(_, s)| s.level().is_some())
    }

    /// Concrete `(variable, level)` pairs; fails on the first unbound symbol.
    pub fn levels(&self) -> Result<Vec<(VariableId, Level)>, SwigError> {
        self.steps
            .iter()
            .map(|(v, s)| match s {
                Setting::Value { level, .. } => Ok((v.clone(), *level)),
                Setting::Symbol(sym) => Err(SwigError::UnboundSymbol {
                    var: v.clone(),
                    symbol: sym.clone(),
                }),
            })
            .collect()
    }

    /// Rejects regimes in which a later step is a proper ancestor of an
    /// earlier one.
    pub fn check_order(&self, dag: &CausalDag) -> Result<(), SwigError> {
        for (i, (earlier, _)) in self.steps.iter().enumerate() {
            let anc = dag.ancestors(earlier.as_str())?;
            for (later, _) in &self.steps[i + 1..] {
                dag.index_of(later.as_str())?;
                if anc.contains(later) {
                    return Err(SwigError::RegimeOrderError {
                        earlier: earlier.clone(),
                        later: later.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .steps
            .iter()
            .map(|(v, s)| match s {
                Setting::Value { label, .. } => format!("{v}={label}"),
                Setting::Symbol(sym) => format!("{v}={sym}"),
            })
            .collect();
        f.write_str(&parts.join(", "))
    }
}

/// `base` indexed by the interventions that reach it, in regime order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CounterfactualLabel {
    pub base: VariableId,
    pub superscript: Vec<(VariableId, Setting)>,
}

impl CounterfactualLabel {
    pub fn factual(base: VariableId) -> Self {
        Self {
            base,
            superscript: Vec::new(),
        }
    }

    pub fn is_factual(&self) -> bool {
        self.superscript.is_empty()
    }

    pub fn superscript_vars(&self) -> Vec<&str> {
        self.superscript.iter().map(|(v, _)| v.as_str()).collect()
    }
}

impl fmt::Display for CounterfactualLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.base.as_str())?;
        if !self.superscript.is_empty() {
            let sup: Vec<String> = self.superscript.iter().map(|(v, s)| s.render(v)).collect();
            write!(f, "^{{{}}}", sup.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomNode {
    pub label: CounterfactualLabel,
    pub observed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedNode {
    pub var: VariableId,
    pub setting: Setting,
}

impl fmt::Display for FixedNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.setting.render(&self.var))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Vertex {
    /// Index of the DAG node whose (random part of the) variable this is.
    Random(usize),
    /// Index of the regime step.
    Fixed(usize),
}

#[derive(Debug, Clone)]
pub struct Swig {
    regime: Regime,
    random: Vec<RandomNode>,
    fixed: Vec<FixedNode>,
    edges: Vec<(Vertex, usize)>,
    // Random-to-random adjacency; fixed nodes are always-blocking and have no
    // parents, so d-separation only needs the random part.
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    topo: Vec<usize>,
}

impl Swig {
    pub fn regime(&self) -> &Regime {
        &self.regime
    }

    /// Random nodes, indexed like the DAG's nodes.
    pub fn random_nodes(&self) -> &[RandomNode] {
        &self.random
    }

    /// Fixed nodes, indexed like the regime's steps.
    pub fn fixed_nodes(&self) -> &[FixedNode] {
        &self.fixed
    }

    pub fn edges(&self) -> &[(Vertex, usize)] {
        &self.edges
    }

    pub fn label_of(&self, base: &str) -> Option<&CounterfactualLabel> {
        self.random.iter().map(|n| &n.label).find(|l| l.base.as_str() == base)
    }

    pub fn vertex_name(&self, v: Vertex) -> String {
        match v {
            Vertex::Random(i) => self.random[i].label.to_string(),
            Vertex::Fixed(k) => self.fixed[k].to_string(),
        }
    }

    /// Edge set with endpoints rendered as in [`Swig::to_dot`].
    pub fn edge_names(&self) -> std::collections::BTreeSet<(String, String)> {
        self.edges
            .iter()
            .map(|&(from, to)| (self.vertex_name(from), self.random[to].label.to_string()))
            .collect()
    }

    fn index_of_label(&self, label: &CounterfactualLabel) -> Result<usize, SwigError> {
        self.random
            .iter()
            .position(|n| &n.label == label)
            .ok_or_else(|| SwigError::UnknownLabel(label.to_string()))
    }

    fn index_of_base(&self, base: &str) -> Result<usize, SwigError> {
        self.random
            .iter()
            .position(|n| n.label.base.as_str() == base)
            .ok_or_else(|| SwigError::Graph(GraphError::UnknownNode(base.to_string())))
    }

    /// d-separation among random nodes; fixed nodes block every path through them.
    pub fn d_separated(
        &self,
        a: &[CounterfactualLabel],
        b: &[CounterfactualLabel],
        given: &[CounterfactualLabel],
    ) -> Result<bool, SwigError> {
        let idx = |set: &[CounterfactualLabel]| -> Result<Vec<usize>, SwigError> {
            set.iter().map(|l| self.index_of_label(l)).collect()
        };
        self.d_separated_indices(&idx(a)?, &idx(b)?, &idx(given)?)
    }

    /// As [`Swig::d_separated`], naming random nodes by their base variable.
    pub fn d_separated_by_base(
        &self,
        a: &[impl AsRef<str>],
        b: &[impl AsRef<str>],
        given: &[impl AsRef<str>],
    ) -> Result<bool, SwigError> {
        let a = self.bases(a)?;
        let b = self.bases(b)?;
        let given = self.bases(given)?;
        self.d_separated_indices(&a, &b, &given)
    }

    fn bases(&self, names: &[impl AsRef<str>]) -> Result<Vec<usize>, SwigError> {
        names.iter().map(|s| self.index_of_base(s.as_ref())).collect()
    }

    fn d_separated_indices(&self, a: &[usize], b: &[usize], z: &[usize]) -> Result<bool, SwigError> {
        graph::check_disjoint(a, b, z)
            .map_err(|i| GraphError::OverlappingSets(self.random[i].label.base.clone()))?;
        Ok(graph::d_separated_indices(&self.parents, &self.children, a, b, z))
    }

    /// Checks `left ⊥ right | given`, with nodes named by base variable.
    pub fn independence(
        &self,
        left: &str,
        right: &str,
        given: &[impl AsRef<str>],
    ) -> Result<IndependenceCondition, SwigError> {
        let l = self.index_of_base(left)?;
        let r = self.index_of_base(right)?;
        let g = self.bases(given)?;
        let holds = self.d_separated_indices(&[l], &[r], &g)?;
        Ok(IndependenceCondition {
            left: self.random[l].label.clone(),
            right: self.random[r].label.clone(),
            given: g.iter().map(|&i| self.random[i].label.clone()).collect(),
            holds,
            warning: None,
        })
    }

    /// DOT rendering: fixed nodes boxed as `name=value`, random nodes as
    /// `base^{sup}`, latent random nodes dashed.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph SWIG {\n");
        for &i in &self.topo {
            let n = &self.random[i];
            let style = if n.observed { "" } else { " [style=dashed]" };
            let _ = writeln!(out, "  \"{}\"{};", n.label, style);
            if let Some(k) = self.regime.position(n.label.base.as_str()) {
                let _ = writeln!(out, "  \"{}\" [shape=box];", self.fixed[k]);
            }
        }
        for &(from, to) in &self.edges {
            let _ = writeln!(out, "  \"{}\" -> \"{}\";", self.vertex_name(from), self.random[to].label);
        }
        out.push_str("}\n");
        out
    }
}

/// `left ⊥ right | given` over the random nodes of one SWIG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndependenceCondition {
    pub left: CounterfactualLabel,
    pub right: CounterfactualLabel,
    pub given: Vec<CounterfactualLabel>,
    pub holds: bool,
    /// Set when also conditioning on earlier latent nodes would flip `holds`.
    pub warning: Option<String>,
}

impl fmt::Display for IndependenceCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ⊥ {}", self.left, self.right)?;
        if !self.given.is_empty() {
            let g: Vec<String> = self.given.iter().map(ToString::to_string).collect();
            write!(f, " | {}", g.join(", "))?;
        }
        Ok(())
    }
}

pub fn build_swig(dag: &CausalDag, regime: &Regime) -> Result<Swig, SwigError> {
    let n = dag.len();
    let mut step_of = vec![None; n];
    for (k, (v, _)) in regime.steps().iter().enumerate() {
        step_of[dag.index_of(v.as_str())?] = Some(k);
    }
    regime.check_order(dag)?;

    let fixed: Vec<FixedNode> = regime
        .steps()
        .iter()
        .map(|(v, s)| FixedNode {
            var: v.clone(),
            setting: s.clone(),
        })
        .collect();

    let mut edges = Vec::new();
    let mut parents = vec![Vec::new(); n];
    let mut children = vec![Vec::new(); n];
    let mut fixed_children = vec![Vec::new(); fixed.len()];
    for (u, v, gate) in dag.edge_indices() {
        if let Some(g) = gate {
            let on = dag.index_of(g.on.as_str())?;
            if let Some(level) = step_of[on].and_then(|k| fixed[k].setting.level()) {
                if !g.is_active(level.0) {
                    continue;
                }
            }
        }
        match step_of[*u] {
            Some(k) => {
                edges.push((Vertex::Fixed(k), *v));
                fixed_children[k].push(*v);
            }
            None => {
                edges.push((Vertex::Random(*u), *v));
                parents[*v].push(*u);
                children[*u].push(*v);
            }
        }
    }

    // Minimal labels: which fixed nodes reach each random node.
    let mut reached_by = vec![Vec::new(); n];
    for (k, kids) in fixed_children.iter().enumerate() {
        let mask = graph::closure(&children, kids);
        for (i, hit) in mask.into_iter().enumerate() {
            if hit {
                reached_by[i].push(k);
            }
        }
    }
    let random = (0..n)
        .map(|i| {
            let node = dag.node(i);
            let superscript = reached_by[i]
                .iter()
                .map(|&k| (fixed[k].var.clone(), fixed[k].setting.clone()))
                .collect();
            RandomNode {
                label: CounterfactualLabel {
                    base: node.id.clone(),
                    superscript,
                },
                observed: node.observed,
            }
        })
        .collect();

    Ok(Swig {
        regime: regime.clone(),
        random,
        fixed,
        edges,
        parents,
        children,
        topo: dag.topo_order().to_vec(),
    })
}

/// Minimal counterfactual label of `node` under `regime`.
pub fn minimal_label(dag: &CausalDag, regime: &Regime, node: &str) -> Result<CounterfactualLabel, SwigError> {
    let swig = build_swig(dag, regime)?;
    swig.label_of(node)
        .cloned()
        .ok_or_else(|| SwigError::Graph(GraphError::UnknownNode(node.to_string())))
}

/// One condition per regime step `D_k`: the outcome's counterfactual is
/// independent of the random part of `D_k` given every observed random node
/// strictly earlier in topological order.
pub fn derive_exchangeability(
    dag: &CausalDag,
    regime: &Regime,
    outcome: &str,
) -> Result<Vec<IndependenceCondition>, SwigError> {
    if outcome.is_empty() {
        return Err(SwigError::NoDesignatedOutcome);
    }
    let swig = build_swig(dag, regime)?;
    let y = dag.index_of(outcome)?;
    if let Some(k) = regime.position(outcome) {
        return Err(SwigError::OutcomeIntervened(regime.steps()[k].0.clone()));
    }
    let pos = dag.topo_positions();
    let mut out = Vec::with_capacity(regime.len());
    for (var, _) in regime.steps() {
        let d = dag.index_of(var.as_str())?;
        let earlier = dag.topo_order()[..pos[d]].iter().copied().filter(|&i| i != y);
        let (given, latent): (Vec<usize>, Vec<usize>) = earlier.partition(|&i| dag.node(i).observed);
        let holds = swig.d_separated_indices(&[y], &[d], &given)?;
        let warning = if latent.is_empty() {
            None
        } else {
            let mut with_latent = given.clone();
            with_latent.extend(&latent);
            let alt = swig.d_separated_indices(&[y], &[d], &with_latent)?;
            (alt != holds).then(|| {
                let names: Vec<&str> = latent.iter().map(|&i| dag.node(i).id.as_str()).collect();
                format!(
                    "verdict would be {} if latent {} could be conditioned on",
                    if alt { "independent" } else { "dependent" },
                    names.join(", ")
                )
            })
        };
        out.push(IndependenceCondition {
            left: swig.random[y].label.clone(),
            right: swig.random[d].label.clone(),
            given: given.iter().map(|&i| swig.random[i].label.clone()).collect(),
            holds,
            warning,
        });
    }
    Ok(out)
}
