//! Sequential g-formula and inverse probability weighting.
//!
//! A [`RegimeSpec`] lays the variables out as baseline covariates, then for
//! each decision its history block followed by the decision, then the outcome.
//! Both functionals are evaluated exactly over a [`DiscreteJoint`]; the
//! g-formula by iterated conditional expectations, IPW cell by cell with
//! weights built from prefix marginals.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde_json::{json, Value};
use thiserror::Error;

use crate::dist::{DiscreteJoint, DistError, Level, Prob, Scalar};
use crate::graph::{CausalDag, GraphError, VariableId};
use crate::scm::{do_law, factual_law, Dataset, Scm, ScmError};
use crate::swig::{derive_exchangeability, Regime, Setting, SwigError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IdentError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Swig(#[from] SwigError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error("{0} appears twice in the regime specification")]
    RepeatedVariable(String),
    #[error("specification order contradicts the graph: {later} is an ancestor of {earlier}")]
    OrderError { earlier: String, later: String },
    #[error("positivity fails: {0}")]
    Positivity(PositivityReport),
    #[error("empty cell at the {step} step: no rows with {decision} among {stratum}")]
    EmptyCell {
        step: String,
        decision: String,
        stratum: String,
    },
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("the model's graph differs from the query graph")]
    GraphMismatch,
}

/// What a decision step represents; IPW groups its weight factors by role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StepRole {
    Engagement,
    Assignment,
    Adherence,
    Censoring,
    Other,
}

impl StepRole {
    pub const ALL: [StepRole; 5] = [
        StepRole::Engagement,
        StepRole::Assignment,
        StepRole::Adherence,
        StepRole::Censoring,
        StepRole::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StepRole::Engagement => "engagement",
            StepRole::Assignment => "assignment",
            StepRole::Adherence => "adherence",
            StepRole::Censoring => "censoring",
            StepRole::Other => "other",
        }
    }
}

impl std::str::FromStr for StepRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        StepRole::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown step role {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionStep {
    pub decision: String,
    pub forced: Level,
    /// Covariates measured after the previous decision and before this one.
    pub history: Vec<String>,
    pub role: StepRole,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegimeSpec {
    pub baseline: Vec<String>,
    pub steps: Vec<DecisionStep>,
    pub outcome: String,
}

impl RegimeSpec {
    pub fn new(baseline: Vec<String>, steps: Vec<DecisionStep>, outcome: impl Into<String>) -> Result<Self, IdentError> {
        let spec = Self {
            baseline,
            steps,
            outcome: outcome.into(),
        };
        let mut seen = BTreeSet::new();
        for v in spec.ordered_vars() {
            if !seen.insert(v) {
                return Err(IdentError::RepeatedVariable(v.to_string()));
            }
        }
        Ok(spec)
    }

    /// Baseline, then each history block and its decision, then the outcome.
    pub fn ordered_vars(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.baseline.iter().map(String::as_str).collect();
        for s in &self.steps {
            out.extend(s.history.iter().map(String::as_str));
            out.push(&s.decision);
        }
        out.push(&self.outcome);
        out
    }

    /// Specification for a concrete `regime`: histories are the observed
    /// nodes that fall between consecutive decisions in topological order.
    /// Nodes after the last decision, other than the outcome, are left out.
    pub fn from_regime(
        dag: &CausalDag,
        regime: &Regime,
        baseline: &[&str],
        outcome: &str,
        roles: &BTreeMap<String, StepRole>,
    ) -> Result<Self, IdentError> {
        let levels = regime.levels()?;
        let mut steps: Vec<DecisionStep> = levels
            .iter()
            .map(|(v, l)| DecisionStep {
                decision: v.to_string(),
                forced: *l,
                history: Vec::new(),
                role: roles.get(v.as_str()).copied().unwrap_or(StepRole::Other),
            })
            .collect();
        let mut k = 0;
        for &i in dag.topo_order() {
            let node = dag.node(i);
            let name = node.id.as_str();
            if k < steps.len() && steps[k].decision == name {
                k += 1;
            } else if k < steps.len()
                && node.observed
                && name != outcome
                && !baseline.contains(&name)
                && regime.position(name).is_none()
            {
                steps[k].history.push(name.to_string());
            }
        }
        let spec = Self::new(baseline.iter().map(|s| s.to_string()).collect(), steps, outcome)?;
        spec.check_order(dag)?;
        Ok(spec)
    }

    /// No variable may be an ancestor of one listed before it.
    pub fn check_order(&self, dag: &CausalDag) -> Result<(), IdentError> {
        let vars = self.ordered_vars();
        for (j, later) in vars.iter().enumerate() {
            let desc = dag.descendants(later)?;
            if let Some(earlier) = vars[..j].iter().find(|e| desc.contains(**e)) {
                return Err(IdentError::OrderError {
                    earlier: earlier.to_string(),
                    later: later.to_string(),
                });
            }
        }
        Ok(())
    }

    /// Concrete regime with the forced levels, labelled from the graph.
    pub fn regime(&self, dag: &CausalDag) -> Result<Regime, IdentError> {
        let steps = self
            .steps
            .iter()
            .map(|s| {
                let id = VariableId::new(s.decision.as_str())?;
                let node = dag.get(&s.decision).ok_or_else(|| GraphError::UnknownNode(s.decision.clone()))?;
                let label = node.support.get(s.forced.0 as usize).cloned().ok_or_else(|| SwigError::UnknownLevel {
                    var: id.clone(),
                    label: s.forced.to_string(),
                })?;
                Ok((id, Setting::Value { level: s.forced, label }))
            })
            .collect::<Result<Vec<_>, IdentError>>()?;
        Ok(Regime::new(steps)?)
    }
}

/// A positive-mass stratum in which the forced decision has probability zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub step: String,
    pub decision: String,
    /// Covariate levels of the stratum (baseline and histories).
    pub stratum: String,
    /// Full conditioning event, including earlier forced decisions.
    pub given: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PositivityReport {
    /// One list per step, in step order.
    pub steps: Vec<(String, Vec<Violation>)>,
    pub pass: bool,
}

impl PositivityReport {
    pub fn violations(&self) -> impl Iterator<Item = &Violation> {
        self.steps.iter().flat_map(|(_, v)| v)
    }

    pub fn to_json(&self) -> Value {
        let violations: Vec<Value> = self
            .violations()
            .map(|v| json!({"step": v.step, "decision": v.decision, "stratum": v.stratum, "given": v.given}))
            .collect();
        json!({"pass": self.pass, "violations": violations})
    }
}

impl fmt::Display for PositivityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.pass {
            return f.write_str("all strata positive");
        }
        let parts: Vec<String> = self
            .violations()
            .map(|v| format!("Pr[{} | {}] = 0", v.decision, v.given))
            .collect();
        f.write_str(&parts.join("; "))
    }
}

/// Spec variables resolved against one joint.
struct Layout<'a, T> {
    spec: &'a RegimeSpec,
    joint: DiscreteJoint<T>,
    names: Vec<String>,
    base: Vec<usize>,
    hist: Vec<Vec<usize>>,
    dec: Vec<usize>,
    y: usize,
}

type Row<T> = (Vec<u32>, T);

impl<'a, T: Scalar> Layout<'a, T> {
    fn new(dist: &DiscreteJoint<T>, spec: &'a RegimeSpec) -> Result<Self, IdentError> {
        let names = spec.ordered_vars();
        let joint = dist.marginal(&names)?;
        let mut i = spec.baseline.len();
        let base = (0..i).collect();
        let mut hist = Vec::new();
        let mut dec = Vec::new();
        for s in &spec.steps {
            hist.push((i..i + s.history.len()).collect());
            i += s.history.len();
            dec.push(i);
            i += 1;
        }
        for (k, s) in spec.steps.iter().enumerate() {
            if s.forced.0 as usize >= joint.vars()[dec[k]].size() {
                return Err(DistError::LevelOutOfRange {
                    var: s.decision.clone(),
                    level: s.forced.0,
                }
                .into());
            }
        }
        Ok(Self {
            spec,
            names: names.iter().map(|s| s.to_string()).collect(),
            joint,
            base,
            hist,
            dec,
            y: i,
        })
    }

    fn rows(&self) -> Vec<Row<T>> {
        self.joint
            .table()
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.is_zero())
            .map(|(c, p)| (self.joint.decode(c), p.clone()))
            .collect()
    }

    fn render(&self, positions: &[usize], levels: &[u32]) -> String {
        positions
            .iter()
            .map(|&i| format!("{}={}", self.names[i], self.joint.vars()[i].support[levels[i] as usize]))
            .collect::<Vec<_>>()
            .join(", ")
    }

    fn forced_label(&self, k: usize) -> String {
        let var = &self.joint.vars()[self.dec[k]];
        format!("{}={}", var.name, var.support[self.spec.steps[k].forced.0 as usize])
    }
}

fn mass<T: Scalar>(rows: &[&Row<T>]) -> T {
    rows.iter().fold(T::zero(), |acc, r| acc + r.1.clone())
}

fn group_by<'r, T>(rows: &[&'r Row<T>], positions: &[usize]) -> BTreeMap<Vec<u32>, Vec<&'r Row<T>>> {
    let mut groups: BTreeMap<Vec<u32>, Vec<&Row<T>>> = BTreeMap::new();
    for r in rows {
        let key = positions.iter().map(|&i| r.0[i]).collect();
        groups.entry(key).or_default().push(r);
    }
    groups
}

/// State of one g-formula traversal.
struct Walk<'l, 'a, T> {
    layout: &'l Layout<'a, T>,
    y: Level,
    violations: Vec<Vec<Violation>>,
    min_mass: Option<T>,
}

impl<T: Scalar> Walk<'_, '_, T> {
    fn note_mass(&mut self, m: &T) {
        if self.min_mass.as_ref().is_none_or(|cur| m < cur) {
            self.min_mass = Some(m.clone());
        }
    }

    /// `E[Q_{k+1} | prefix]` where `rows` are the cells consistent with the
    /// prefix (covariates through step k−1, decisions before k forced).
    fn step(&mut self, rows: &[&Row<T>], k: usize) -> T {
        let l = self.layout;
        let total = mass(rows);
        self.note_mass(&total);
        if k == l.dec.len() {
            let below: Vec<&Row<T>> = rows.iter().copied().filter(|r| r.0[l.y] <= self.y.0).collect();
            return mass(&below) / total;
        }
        let forced = l.spec.steps[k].forced.0;
        let mut acc = T::zero();
        for (_, group) in group_by(rows, &l.hist[k]) {
            let weight = mass(&group) / total.clone();
            let kept: Vec<&Row<T>> = group.iter().copied().filter(|r| r.0[l.dec[k]] == forced).collect();
            if kept.is_empty() {
                let first = &group[0].0;
                let covariates: Vec<usize> = l.base.iter().chain(l.hist[..=k].iter().flatten()).copied().collect();
                let mut given: Vec<usize> = l.base.clone();
                for j in 0..=k {
                    given.extend(&l.hist[j]);
                    if j < k {
                        given.push(l.dec[j]);
                    }
                }
                self.violations[k].push(Violation {
                    step: l.spec.steps[k].decision.clone(),
                    decision: l.forced_label(k),
                    stratum: l.render(&covariates, first),
                    given: l.render(&given, first),
                });
                continue;
            }
            acc = acc + weight * self.step(&kept, k + 1);
        }
        acc
    }
}

struct GOutcome<T> {
    value: T,
    report: PositivityReport,
    min_mass: Option<T>,
}

fn walk<T: Scalar>(layout: &Layout<'_, T>, y: Level) -> GOutcome<T> {
    let rows = layout.rows();
    let refs: Vec<&Row<T>> = rows.iter().collect();
    let mut w = Walk {
        layout,
        y,
        violations: vec![Vec::new(); layout.dec.len()],
        min_mass: None,
    };
    let mut value = T::zero();
    for (_, group) in group_by(&refs, &layout.base) {
        value = value + mass(&group) * w.step(&group, 0);
    }
    let pass = w.violations.iter().all(Vec::is_empty);
    let steps = layout
        .spec
        .steps
        .iter()
        .map(|s| s.decision.clone())
        .zip(w.violations)
        .collect();
    GOutcome {
        value,
        report: PositivityReport { steps, pass },
        min_mass: w.min_mass,
    }
}

/// Sequential g-formula `Pr[Y^g ≤ y]` from the observed law.
pub fn g_formula<T: Scalar>(dist: &DiscreteJoint<T>, spec: &RegimeSpec, y: Level) -> Result<T, IdentError> {
    let out = walk(&Layout::new(dist, spec)?, y);
    if !out.report.pass {
        return Err(IdentError::Positivity(out.report));
    }
    Ok(out.value)
}

/// For each step, the positive-mass strata where the forced decision has zero
/// conditional probability.
pub fn check_positivity<T: Scalar>(dist: &DiscreteJoint<T>, spec: &RegimeSpec) -> Result<PositivityReport, IdentError> {
    Ok(walk(&Layout::new(dist, spec)?, Level(0)).report)
}

/// `E[ I(Y ≤ y, D̄ = d̄) / Π_k Pr[D_k = d_k | past] ]`, one cell at a time.
pub fn ipw<T: Scalar>(dist: &DiscreteJoint<T>, spec: &RegimeSpec, y: Level) -> Result<T, IdentError> {
    let layout = Layout::new(dist, spec)?;
    let report = walk(&layout, y).report;
    if !report.pass {
        return Err(IdentError::Positivity(report));
    }
    Ok(ipw_unchecked(&layout, y)?)
}

fn ipw_unchecked<T: Scalar>(layout: &Layout<'_, T>, y: Level) -> Result<T, DistError> {
    let joint = &layout.joint;
    let names: Vec<&str> = layout.names.iter().map(String::as_str).collect();
    // Prefix marginals up to and including each decision, and up to just before it.
    let mut with_dec = Vec::new();
    let mut before_dec = Vec::new();
    for &d in &layout.dec {
        with_dec.push(joint.marginal(&names[..=d])?);
        before_dec.push(joint.marginal(&names[..d])?);
    }
    let forced: Vec<u32> = layout.spec.steps.iter().map(|s| s.forced.0).collect();
    let mut total = T::zero();
    for (cell, p) in joint.table().iter().enumerate() {
        if p.is_zero() {
            continue;
        }
        let lv = joint.decode(cell);
        if lv[layout.y] > y.0 || layout.dec.iter().zip(&forced).any(|(&d, &f)| lv[d] != f) {
            continue;
        }
        // P_engagement · P_assignment · P_ā · P_c̄ · P_other.
        let mut by_role: BTreeMap<StepRole, T> = BTreeMap::new();
        for (k, &d) in layout.dec.iter().enumerate() {
            let num = with_dec[k].table()[with_dec[k].encode(&lv[..=d])].clone();
            let den = before_dec[k].table()[before_dec[k].encode(&lv[..d])].clone();
            let factor = by_role.entry(layout.spec.steps[k].role).or_insert_with(T::one);
            *factor = factor.clone() * (num / den);
        }
        let weight = by_role.into_values().fold(T::one(), |acc, f| acc * f);
        total = total + p.clone() / weight;
    }
    Ok(total)
}

/// g-formula over the empirical joint of `data`.
pub fn plugin_estimate(data: &Dataset, spec: &RegimeSpec, y: Level) -> Result<Prob, IdentError> {
    let joint = data.empirical_joint()?;
    match g_formula(&joint, spec, y) {
        Err(IdentError::Positivity(report)) => {
            let v = report.violations().next().expect("failed report lists a violation");
            Err(IdentError::EmptyCell {
                step: v.step.clone(),
                decision: v.decision.clone(),
                stratum: v.given.clone(),
            })
        }
        other => other,
    }
}

/// Where the observed law comes from.
#[derive(Debug, Clone, Copy)]
pub enum Source<'a> {
    /// Model with known counterfactual law; enables the oracle column.
    Scm(&'a Scm),
    Dist(&'a DiscreteJoint),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    GFormula,
    Ipw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentResult<T> {
    pub route: Route,
    /// One value per requested threshold, in request order.
    pub values: Vec<(Level, T)>,
    pub positivity: PositivityReport,
    pub min_conditioning_mass: Option<T>,
}

#[derive(Debug, Clone, Default)]
pub struct IdentOptions {
    pub scenario: String,
    /// Evaluate despite positivity failures; undefined strata contribute zero.
    pub allow_nonpositive: bool,
}

pub const FLAG_NO_CAUSAL: &str = "no causal interpretation";
pub const FLAG_PARTIAL: &str = "partially identified region not computed";

#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeabilityEntry {
    pub condition: String,
    pub holds: bool,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentReport<T> {
    pub scenario: String,
    pub regime: String,
    pub outcome_support: Vec<String>,
    pub g_formula: IdentResult<T>,
    pub ipw: IdentResult<T>,
    pub oracle: Option<Vec<T>>,
    pub exchangeability: Vec<ExchangeabilityEntry>,
    pub flags: Vec<String>,
}

impl<T: Scalar> IdentReport<T> {
    /// Largest pairwise gap among the available routes at threshold `i`.
    pub fn max_abs_diff(&self, i: usize) -> T {
        let mut vals = vec![self.g_formula.values[i].1.clone(), self.ipw.values[i].1.clone()];
        if let Some(o) = &self.oracle {
            vals.push(o[i].clone());
        }
        let mut best = T::zero();
        for a in &vals {
            for b in &vals {
                let d = a.abs_diff(b);
                if d > best {
                    best = d;
                }
            }
        }
        best
    }

    pub fn overall_max_abs_diff(&self) -> T {
        (0..self.g_formula.values.len())
            .map(|i| self.max_abs_diff(i))
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }

    pub fn exchangeability_holds(&self) -> bool {
        self.exchangeability.iter().all(|e| e.holds)
    }

    pub fn to_json(&self) -> Value {
        let thresholds: Vec<Value> = self
            .g_formula
            .values
            .iter()
            .enumerate()
            .map(|(i, (y, g))| {
                json!({
                    "y": self.outcome_support[y.0 as usize],
                    "g_formula": g.render(),
                    "ipw": self.ipw.values[i].1.render(),
                    "oracle": self.oracle.as_ref().map(|o| o[i].render()),
                    "max_abs_diff": self.max_abs_diff(i).render(),
                })
            })
            .collect();
        let exchangeability: Vec<Value> = self
            .exchangeability
            .iter()
            .map(|e| {
                let mut v = json!({"condition": e.condition, "holds": e.holds});
                if let Some(w) = &e.warning {
                    v["warning"] = json!(w);
                }
                v
            })
            .collect();
        json!({
            "scenario": self.scenario,
            "regime": self.regime,
            "thresholds": thresholds,
            "exchangeability": exchangeability,
            "positivity": self.g_formula.positivity.to_json(),
            "flags": self.flags,
        })
    }
}

/// Derives the exchangeability conditions for `template` (which may be
/// symbolic), checks positivity, and evaluates both functionals at each
/// threshold. With an SCM source the truncated-factorization CDF of the
/// outcome is reported alongside.
pub fn identify<T: Scalar>(
    dag: &CausalDag,
    source: Source<'_>,
    template: &Regime,
    spec: &RegimeSpec,
    thresholds: &[Level],
    opts: &IdentOptions,
) -> Result<IdentReport<T>, IdentError> {
    spec.check_order(dag)?;
    let conditions = derive_exchangeability(dag, template, &spec.outcome)?;
    let exchangeability: Vec<ExchangeabilityEntry> = conditions
        .iter()
        .map(|c| ExchangeabilityEntry {
            condition: c.to_string(),
            holds: c.holds,
            warning: c.warning.clone(),
        })
        .collect();

    let exact = match source {
        Source::Scm(scm) => {
            if scm.dag() != dag {
                return Err(IdentError::GraphMismatch);
            }
            factual_law(scm)?
        }
        Source::Dist(d) => d.clone(),
    };
    let dist: DiscreteJoint<T> = exact.to_backend();
    let layout = Layout::new(&dist, spec)?;

    let mut flags = Vec::new();
    if !exchangeability.iter().all(|e| e.holds) {
        flags.push(FLAG_NO_CAUSAL.to_string());
    }
    let probe = walk(&layout, Level(0));
    if !probe.report.pass {
        if !opts.allow_nonpositive {
            return Err(IdentError::Positivity(probe.report));
        }
        flags.push(FLAG_PARTIAL.to_string());
    }

    let mut g_values = Vec::with_capacity(thresholds.len());
    let mut ipw_values = Vec::with_capacity(thresholds.len());
    let mut min_mass: Option<T> = None;
    for &y in thresholds {
        let out = walk(&layout, y);
        if let Some(m) = out.min_mass {
            if min_mass.as_ref().is_none_or(|cur| &m < cur) {
                min_mass = Some(m);
            }
        }
        g_values.push((y, out.value));
        ipw_values.push((y, ipw_unchecked(&layout, y)?));
    }

    let oracle = match source {
        Source::Scm(scm) => {
            let law = do_law(scm, &spec.regime(dag)?)?;
            let values = thresholds
                .iter()
                .map(|&y| {
                    law.cond_cdf(&spec.outcome, y, &crate::dist::Event::new())
                        .map(|p| T::from_prob(&p))
                })
                .collect::<Result<Vec<T>, DistError>>()?;
            Some(values)
        }
        Source::Dist(_) => None,
    };

    Ok(IdentReport {
        scenario: opts.scenario.clone(),
        regime: template.to_string(),
        outcome_support: layout.joint.vars()[layout.y].support.clone(),
        g_formula: IdentResult {
            route: Route::GFormula,
            values: g_values,
            positivity: probe.report.clone(),
            min_conditioning_mass: min_mass.clone(),
        },
        ipw: IdentResult {
            route: Route::Ipw,
            values: ipw_values,
            positivity: probe.report,
            min_conditioning_mass: min_mass,
        },
        oracle,
        exchangeability,
        flags,
    })
}
