//! Python bindings. Probabilities cross the boundary as exact `num/den`
//! strings, which `fractions.Fraction` parses directly.

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use swid_cli::{cmd_check, cmd_identify, IdentifyArgs, ModelFile};
use swid_core::dist::{parse_prob, Backend};
use swid_core::{
    check_positivity, counterfactual_joint, derive_exchangeability, do_law, factual_law, g_formula, ipw,
    minimal_label, random_scm, sample, CausalDag, DiscreteJoint, EdgeSpec, Event, Level, NodeSpec, Regime,
    RegimeSpec, Scenario, Scm,
};

fn value_error<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn regime_of(dag: &CausalDag, steps: &[(String, String)]) -> PyResult<Regime> {
    let tokens: Vec<(&str, &str)> = steps.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
    Regime::from_tokens(dag, &tokens).map_err(value_error)
}

fn event_of(joint: &DiscreteJoint, levels: &BTreeMap<String, String>) -> PyResult<Event> {
    let mut e = Event::new();
    for (var, label) in levels {
        let v = joint.var(var).map_err(value_error)?;
        let l = v
            .support
            .iter()
            .position(|s| s == label)
            .ok_or_else(|| value_error(format!("{label} is not a level of {var}")))?;
        e = e.with_eq(var.as_str(), Level(l as u32));
    }
    Ok(e)
}

/// Directed acyclic graph over named variables.
#[pyclass(name = "Dag", module = "swid", frozen)]
struct PyDag {
    inner: CausalDag,
}

#[pymethods]
impl PyDag {
    #[new]
    #[pyo3(signature = (nodes, edges, latent = Vec::new()))]
    fn new(nodes: Vec<String>, edges: Vec<(String, String)>, latent: Vec<String>) -> PyResult<Self> {
        let specs = nodes
            .iter()
            .map(|n| if latent.contains(n) { NodeSpec::latent(n) } else { NodeSpec::new(n) })
            .collect::<Result<Vec<_>, _>>()
            .map_err(value_error)?;
        let edges = edges
            .iter()
            .map(|(a, b)| EdgeSpec::new(a, b))
            .collect::<Result<Vec<_>, _>>()
            .map_err(value_error)?;
        Ok(Self {
            inner: CausalDag::new(specs, edges).map_err(value_error)?,
        })
    }

    fn nodes(&self) -> Vec<String> {
        self.inner.nodes().iter().map(|n| n.id.to_string()).collect()
    }

    fn edges(&self) -> Vec<(String, String)> {
        self.inner.edges().map(|e| (e.from.to_string(), e.to.to_string())).collect()
    }

    #[pyo3(signature = (a, b, given = Vec::new()))]
    fn d_separated(&self, a: Vec<String>, b: Vec<String>, given: Vec<String>) -> PyResult<bool> {
        self.inner.d_separated(&a, &b, &given).map_err(value_error)
    }

    fn ancestors(&self, node: &str) -> PyResult<Vec<String>> {
        Ok(self.inner.ancestors(node).map_err(value_error)?.iter().map(ToString::to_string).collect())
    }

    fn descendants(&self, node: &str) -> PyResult<Vec<String>> {
        Ok(self.inner.descendants(node).map_err(value_error)?.iter().map(ToString::to_string).collect())
    }

    fn to_dot(&self) -> String {
        self.inner.to_dot()
    }

    /// SWIG of `regime`, given as `[(variable, value)]`, in DOT.
    fn swig_dot(&self, regime: Vec<(String, String)>) -> PyResult<String> {
        let r = regime_of(&self.inner, &regime)?;
        Ok(swid_core::build_swig(&self.inner, &r).map_err(value_error)?.to_dot())
    }

    fn minimal_label(&self, regime: Vec<(String, String)>, node: &str) -> PyResult<String> {
        let r = regime_of(&self.inner, &regime)?;
        Ok(minimal_label(&self.inner, &r, node).map_err(value_error)?.to_string())
    }

    /// `[(condition, holds)]`, one per regime step.
    fn exchangeability(&self, regime: Vec<(String, String)>, outcome: &str) -> PyResult<Vec<(String, bool)>> {
        let r = regime_of(&self.inner, &regime)?;
        Ok(derive_exchangeability(&self.inner, &r, outcome)
            .map_err(value_error)?
            .iter()
            .map(|c| (c.to_string(), c.holds))
            .collect())
    }

    fn __repr__(&self) -> String {
        format!("Dag({} nodes, {} edges)", self.inner.len(), self.inner.edge_count())
    }
}

/// Exact joint distribution over discrete variables.
#[pyclass(name = "Joint", module = "swid", frozen)]
struct PyJoint {
    inner: DiscreteJoint,
}

#[pymethods]
impl PyJoint {
    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: DiscreteJoint::from_csv(text).map_err(value_error)?,
        })
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn variables(&self) -> Vec<String> {
        self.inner.vars().iter().map(|v| v.name.clone()).collect()
    }

    /// Probability that each named variable takes the given level label.
    fn prob(&self, levels: BTreeMap<String, String>) -> PyResult<String> {
        let e = event_of(&self.inner, &levels)?;
        Ok(self.inner.prob(&e).map_err(value_error)?.to_string())
    }

    fn conditional(&self, event: BTreeMap<String, String>, given: BTreeMap<String, String>) -> PyResult<String> {
        let e = event_of(&self.inner, &event)?;
        let g = event_of(&self.inner, &given)?;
        Ok(self.inner.conditional(&e, &g).map_err(value_error)?.to_string())
    }

    fn marginal(&self, names: Vec<String>) -> PyResult<Self> {
        Ok(Self {
            inner: self
                .inner
                .marginal(&names.iter().map(String::as_str).collect::<Vec<_>>())
                .map_err(value_error)?,
        })
    }
}

/// Structural causal model with finite noise.
#[pyclass(name = "Scm", module = "swid", frozen)]
struct PyScm {
    inner: Scm,
}

#[pymethods]
impl PyScm {
    /// Random model on `dag` in which every conditional is at least `min_prob`.
    #[staticmethod]
    #[pyo3(signature = (dag, seed, min_prob = "1/20"))]
    fn random(dag: &PyDag, seed: u64, min_prob: &str) -> PyResult<Self> {
        let p = parse_prob(min_prob).map_err(value_error)?;
        Ok(Self {
            inner: random_scm(&dag.inner, seed, &p).map_err(value_error)?,
        })
    }

    fn factual_law(&self) -> PyResult<PyJoint> {
        Ok(PyJoint {
            inner: factual_law(&self.inner).map_err(value_error)?,
        })
    }

    fn do_law(&self, regime: Vec<(String, String)>) -> PyResult<PyJoint> {
        let r = regime_of(self.inner.dag(), &regime)?;
        Ok(PyJoint {
            inner: do_law(&self.inner, &r).map_err(value_error)?,
        })
    }

    fn counterfactual_joint(&self, regime: Vec<(String, String)>) -> PyResult<PyJoint> {
        let r = regime_of(self.inner.dag(), &regime)?;
        Ok(PyJoint {
            inner: counterfactual_joint(&self.inner, &r).map_err(value_error)?,
        })
    }

    /// `n` rows as CSV with a header.
    fn sample(&self, n: usize, seed: u64) -> String {
        sample(&self.inner, n, seed).to_csv()
    }
}

/// A bundled scenario: graph, regime and outcome.
#[pyclass(name = "Scenario", module = "swid", frozen)]
struct PyScenario {
    inner: Scenario,
    spec: RegimeSpec,
}

impl PyScenario {
    fn levels(&self, joint: &DiscreteJoint, y: &str) -> PyResult<Level> {
        let var = joint.var(&self.spec.outcome).map_err(value_error)?;
        var.support
            .iter()
            .position(|s| s == y)
            .map(|l| Level(l as u32))
            .ok_or_else(|| value_error(format!("{y} is not a level of {}", self.spec.outcome)))
    }
}

#[pymethods]
impl PyScenario {
    #[new]
    #[pyo3(signature = (name, bindings = BTreeMap::new()))]
    fn new(name: &str, bindings: BTreeMap<String, String>) -> PyResult<Self> {
        let inner = swid_core::preset(name).map_err(value_error)?;
        let mut all = inner.bindings.clone();
        all.extend(bindings);
        let spec = inner.spec_with(&all).map_err(value_error)?;
        Ok(Self { inner, spec })
    }

    #[getter]
    fn dag(&self) -> PyDag {
        PyDag {
            inner: self.inner.dag.clone(),
        }
    }

    #[getter]
    fn outcome(&self) -> String {
        self.spec.outcome.clone()
    }

    #[getter]
    fn regime(&self) -> String {
        self.inner.template.to_string()
    }

    /// Pr[Y <= y] under the regime, by the g-formula.
    fn g_formula(&self, joint: &PyJoint, y: &str) -> PyResult<String> {
        let l = self.levels(&joint.inner, y)?;
        Ok(g_formula(&joint.inner, &self.spec, l).map_err(value_error)?.to_string())
    }

    fn ipw(&self, joint: &PyJoint, y: &str) -> PyResult<String> {
        let l = self.levels(&joint.inner, y)?;
        Ok(ipw(&joint.inner, &self.spec, l).map_err(value_error)?.to_string())
    }

    /// The interventional CDF from the model itself.
    fn oracle(&self, scm: &PyScm, y: &str) -> PyResult<String> {
        let regime = self.spec.regime(scm.inner.dag()).map_err(value_error)?;
        let law = do_law(&scm.inner, &regime).map_err(value_error)?;
        let l = self.levels(&law, y)?;
        Ok(law
            .cond_cdf(&self.spec.outcome, l, &Event::new())
            .map_err(value_error)?
            .to_string())
    }

    /// Positivity report as JSON.
    fn positivity(&self, joint: &PyJoint) -> PyResult<String> {
        Ok(check_positivity(&joint.inner, &self.spec).map_err(value_error)?.to_json().to_string())
    }
}

/// A parsed `.swid` file.
#[pyclass(name = "Model", module = "swid", frozen)]
struct PyModel {
    inner: ModelFile,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: swid_cli::parse_model(text).map_err(value_error)?,
        })
    }

    /// Canonical text.
    fn write(&self) -> String {
        swid_cli::write_model(&self.inner)
    }

    #[getter]
    fn dag(&self) -> PyDag {
        PyDag {
            inner: self.inner.dag.clone(),
        }
    }

    /// `(exit code, JSON)` as `swid check` would produce.
    fn check(&self) -> (i32, String) {
        let o = cmd_check(&self.inner);
        (o.code, if o.stdout.is_empty() { o.stderr } else { o.stdout })
    }

    /// `(exit code, JSON)` as `swid identify` would produce.
    #[pyo3(signature = (backend = "rational"))]
    fn identify(&self, backend: &str) -> PyResult<(i32, String)> {
        let args = IdentifyArgs {
            backend: backend.parse::<Backend>().map_err(value_error)?,
            ..Default::default()
        };
        let o = cmd_identify(&self.inner, &args, "model");
        Ok((o.code, if o.stdout.is_empty() { o.stderr } else { o.stdout }))
    }
}

#[pyfunction]
fn presets() -> Vec<&'static str> {
    swid_core::SCENARIOS.to_vec()
}

#[pymodule]
fn swid(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDag>()?;
    m.add_class::<PyJoint>()?;
    m.add_class::<PyScm>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    Ok(())
}
