//! Causal identification with single world intervention graphs.
//!
//! The crate builds SWIGs from causal DAGs, derives the sequential
//! exchangeability conditions a joint intervention needs, and evaluates the
//! g-formula and inverse-probability-weighting functionals over exact finite
//! distributions. Discrete structural causal models provide ground-truth
//! interventional and counterfactual laws to check them against.

pub mod dist;
pub mod graph;
pub mod ident;
pub mod presets;
pub mod scm;
pub mod swig;

pub use dist::{Atom, Backend, DiscreteJoint, DistError, Event, JointVar, Level, Prob, Scalar};
pub use graph::{CausalDag, EdgeSpec, Gate, GraphError, NodeSpec, VariableId};
pub use ident::{
    check_positivity, g_formula, identify, ipw, plugin_estimate, DecisionStep, IdentError, IdentOptions, IdentReport,
    IdentResult, PositivityReport, RegimeSpec, Route, Source, StepRole, Violation,
};
pub use presets::{preset, Scenario, SCENARIOS};
pub use scm::{
    counterfactual_joint, do_law, factual_law, random_scm, sample, Dataset, Mechanism, NoiseDist, Scm, ScmError,
};
pub use swig::{
    build_swig, derive_exchangeability, minimal_label, CounterfactualLabel, IndependenceCondition, Regime, Setting,
    Swig, SwigError,
};
