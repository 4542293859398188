//! The four bundled scenarios: trial engagement, engagement with the
//! exclusion restriction, censoring, and a two-period time-varying treatment.

use std::collections::BTreeMap;

use crate::graph::{CausalDag, EdgeSpec, NodeSpec};
use crate::ident::{IdentError, RegimeSpec, StepRole};
use crate::swig::Regime;

pub const SCENARIOS: [&str; 4] = ["engagement", "exclusion", "censoring", "time_varying"];

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: &'static str,
    pub dag: CausalDag,
    /// Regime with symbolic settings where the value is free (`z`, `a0`).
    pub template: Regime,
    /// Default binding of each symbol to a support label.
    pub bindings: BTreeMap<String, String>,
    pub baseline: Vec<String>,
    pub outcome: String,
    pub roles: BTreeMap<String, StepRole>,
}

impl Scenario {
    pub fn regime(&self) -> Result<Regime, IdentError> {
        Ok(self.template.bind(&self.dag, &self.bindings)?)
    }

    /// Specification with the default bindings.
    pub fn spec(&self) -> Result<RegimeSpec, IdentError> {
        self.spec_with(&self.bindings)
    }

    pub fn spec_with(&self, bindings: &BTreeMap<String, String>) -> Result<RegimeSpec, IdentError> {
        let regime = self.template.bind(&self.dag, bindings)?;
        let baseline: Vec<&str> = self.baseline.iter().map(String::as_str).collect();
        RegimeSpec::from_regime(&self.dag, &regime, &baseline, &self.outcome, &self.roles)
    }
}

fn edges(list: &[(&str, &str)]) -> Vec<EdgeSpec> {
    list.iter().map(|(a, b)| EdgeSpec::new(a, b).expect("valid names")).collect()
}

fn nodes(names: &[&str]) -> Vec<NodeSpec> {
    names.iter().map(|n| NodeSpec::new(n).expect("valid names")).collect()
}

fn roles(list: &[(&str, StepRole)]) -> BTreeMap<String, StepRole> {
    list.iter().map(|(n, r)| (n.to_string(), *r)).collect()
}

fn bindings(list: &[(&str, &str)]) -> BTreeMap<String, String> {
    list.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

const ENGAGEMENT_EDGES: [(&str, &str); 11] = [
    ("X", "R"),
    ("X", "S"),
    ("X", "Z"),
    ("X", "Y"),
    ("R", "S"),
    ("R", "Z"),
    ("R", "Y"),
    ("S", "Z"),
    ("S", "Y"),
    ("Z", "Y"),
    ("U", "Y"),
];

/// Invitation `R`, participation `S`, assignment `Z`, outcome `Y`, baseline
/// covariates `X` and an unmeasured `U` that affects assignment only among
/// non-participants.
pub fn engagement_dag() -> CausalDag {
    let mut ns = nodes(&["X", "R", "S", "Z", "Y"]);
    ns.push(NodeSpec::latent("U").expect("valid name"));
    let mut es = edges(&ENGAGEMENT_EDGES);
    es.insert(10, EdgeSpec::new("U", "Z").unwrap().gated("S", &[0]).expect("valid gate"));
    CausalDag::new(ns, es).expect("engagement graph is acyclic")
}

/// Engagement without direct effects of invitation or participation on the
/// outcome, and without `U`.
pub fn exclusion_dag() -> CausalDag {
    CausalDag::new(
        nodes(&["X", "R", "S", "Z", "Y"]),
        edges(&[
            ("X", "R"),
            ("X", "S"),
            ("X", "Z"),
            ("X", "Y"),
            ("R", "S"),
            ("R", "Z"),
            ("S", "Z"),
            ("Z", "Y"),
        ]),
    )
    .expect("exclusion graph is acyclic")
}

/// Treatment `Z`, censoring `C`, no effect of `C` on `Y`.
pub fn censoring_dag() -> CausalDag {
    CausalDag::new(
        nodes(&["X", "Z", "C", "Y"]),
        edges(&[("X", "Z"), ("X", "C"), ("X", "Y"), ("Z", "C"), ("Z", "Y")]),
    )
    .expect("censoring graph is acyclic")
}

pub const TIME_VARYING_ORDER: [&str; 7] = ["L0", "A0", "C1", "L1", "A1", "C2", "Y"];

/// Engagement, then two periods of covariate `L`, adherence `A` and
/// censoring `C`. Every later node depends on `X`, `R`, `S`, `Z` and all
/// earlier time-varying nodes, except that censoring has no edge into `Y`.
pub fn time_varying_dag() -> CausalDag {
    let mut es = edges(&[("X", "R"), ("X", "S"), ("R", "S"), ("X", "Z"), ("R", "Z"), ("S", "Z")]);
    for (i, &v) in TIME_VARYING_ORDER.iter().enumerate() {
        for &p in ["X", "R", "S", "Z"].iter().chain(&TIME_VARYING_ORDER[..i]) {
            if v == "Y" && p.starts_with('C') {
                continue;
            }
            es.push(EdgeSpec::new(p, v).expect("valid names"));
        }
    }
    let mut ns = nodes(&["X", "R", "S", "Z"]);
    ns.extend(nodes(&TIME_VARYING_ORDER));
    CausalDag::new(ns, es).expect("time-varying graph is acyclic")
}

fn engagement_like(name: &'static str, dag: CausalDag) -> Scenario {
    let template = Regime::from_tokens(&dag, &[("R", "1"), ("S", "1"), ("Z", "z")]).expect("valid regime");
    Scenario {
        name,
        dag,
        template,
        bindings: bindings(&[("z", "1")]),
        baseline: vec!["X".into()],
        outcome: "Y".into(),
        roles: roles(&[
            ("R", StepRole::Engagement),
            ("S", StepRole::Engagement),
            ("Z", StepRole::Assignment),
        ]),
    }
}

pub fn preset(name: &str) -> Result<Scenario, IdentError> {
    Ok(match name {
        "engagement" => engagement_like("engagement", engagement_dag()),
        "exclusion" => engagement_like("exclusion", exclusion_dag()),
        "censoring" => {
            let dag = censoring_dag();
            let template = Regime::from_tokens(&dag, &[("Z", "z"), ("C", "0")]).expect("valid regime");
            Scenario {
                name: "censoring",
                dag,
                template,
                bindings: bindings(&[("z", "1")]),
                baseline: vec!["X".into()],
                outcome: "Y".into(),
                roles: roles(&[("Z", StepRole::Assignment), ("C", StepRole::Censoring)]),
            }
        }
        "time_varying" => {
            let dag = time_varying_dag();
            let template = Regime::from_tokens(
                &dag,
                &[
                    ("R", "1"),
                    ("S", "1"),
                    ("Z", "z"),
                    ("A0", "a0"),
                    ("C1", "0"),
                    ("A1", "a1"),
                    ("C2", "0"),
                ],
            )
            .expect("valid regime");
            Scenario {
                name: "time_varying",
                dag,
                template,
                bindings: bindings(&[("z", "1"), ("a0", "1"), ("a1", "1")]),
                baseline: vec!["X".into()],
                outcome: "Y".into(),
                roles: roles(&[
                    ("R", StepRole::Engagement),
                    ("S", StepRole::Engagement),
                    ("Z", StepRole::Assignment),
                    ("A0", StepRole::Adherence),
                    ("A1", StepRole::Adherence),
                    ("C1", StepRole::Censoring),
                    ("C2", StepRole::Censoring),
                ]),
            }
        }
        other => return Err(IdentError::UnknownScenario(other.to_string())),
    })
}
