//! Discrete structural causal models.
//!
//! Every node has its own finite noise variable and a total lookup table from
//! (parent levels, noise level) to its own level. Noise variables are mutually
//! independent, so factual, interventional and counterfactual laws are all
//! exact sums over noise levels, computed here in rational arithmetic.

use std::collections::HashMap;

use num_traits::{ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dist::{self, DiscreteJoint, DistError, JointVar, Prob};
use crate::graph::{CausalDag, GraphError, VariableId};
use crate::swig::{build_swig, Regime, SwigError};

/// Largest noise support per node.
pub const MAX_NOISE_LEVELS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScmError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Swig(#[from] SwigError),
    #[error("expected {expected} mechanisms/noise distributions, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("noise for {node} has {count} levels; allowed 1..={MAX_NOISE_LEVELS}")]
    NoiseLevels { node: VariableId, count: usize },
    #[error("noise for {node} is not a distribution: {reason}")]
    NoiseMass { node: VariableId, reason: String },
    #[error("table for {node} has {got} entries, expected {expected}")]
    TableShape {
        node: VariableId,
        expected: usize,
        got: usize,
    },
    #[error("table for {node} outputs level {level}, outside its support")]
    OutputOutOfRange { node: VariableId, level: u32 },
    #[error("table for {node} depends on {parent} where the edge's gate is closed")]
    GateViolation { node: VariableId, parent: VariableId },
    #[error("cannot give every level of {node} probability at least {min_prob}")]
    InfeasibleFloor { node: VariableId, min_prob: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoiseDist {
    probs: Vec<Prob>,
}

impl NoiseDist {
    pub fn new(probs: Vec<Prob>) -> Result<Self, String> {
        if probs.is_empty() || probs.len() > MAX_NOISE_LEVELS {
            return Err(format!("{} levels", probs.len()));
        }
        if probs.iter().any(|p| *p < Prob::zero()) {
            return Err("negative probability".into());
        }
        let total: Prob = probs.iter().cloned().sum();
        if total != dist::ratio(1, 1) {
            return Err(format!("total {total}"));
        }
        Ok(Self { probs })
    }

    pub fn point() -> Self {
        Self {
            probs: vec![dist::ratio(1, 1)],
        }
    }

    pub fn probs(&self) -> &[Prob] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Output levels laid out by parent configuration (first parent most
/// significant, parents in declaration order) and then noise level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mechanism {
    pub outputs: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scm {
    dag: CausalDag,
    noise: Vec<NoiseDist>,
    mechanisms: Vec<Mechanism>,
}

impl Scm {
    pub fn new(dag: CausalDag, noise: Vec<NoiseDist>, mechanisms: Vec<Mechanism>) -> Result<Self, ScmError> {
        let n = dag.len();
        for got in [noise.len(), mechanisms.len()] {
            if got != n {
                return Err(ScmError::Arity { expected: n, got });
            }
        }
        let scm = Self { dag, noise, mechanisms };
        for v in 0..n {
            let node = scm.dag.node(v);
            let expected = scm.parent_configs(v) * scm.noise[v].len();
            let got = scm.mechanisms[v].outputs.len();
            if got != expected {
                return Err(ScmError::TableShape {
                    node: node.id.clone(),
                    expected,
                    got,
                });
            }
            if let Some(&level) = scm.mechanisms[v].outputs.iter().find(|&&o| o as usize >= node.support.len()) {
                return Err(ScmError::OutputOutOfRange {
                    node: node.id.clone(),
                    level,
                });
            }
            scm.check_gates(v)?;
        }
        Ok(scm)
    }

    fn check_gates(&self, v: usize) -> Result<(), ScmError> {
        let parents = self.dag.parents_of(v);
        for (pos, &u) in parents.iter().enumerate() {
            let Some(gate) = self.dag.gate(u, v) else { continue };
            let on = self.dag.index_of(gate.on.as_str())?;
            let on_pos = parents.iter().position(|&p| p == on).expect("gate on a parent");
            for config in 0..self.parent_configs(v) {
                let mut levels = self.decode_config(v, config);
                if gate.is_active(levels[on_pos]) || levels[pos] == 0 {
                    continue;
                }
                let row = self.row(v, config).to_vec();
                levels[pos] = 0;
                if row != self.row(v, self.config_index(v, &levels)) {
                    return Err(ScmError::GateViolation {
                        node: self.dag.node(v).id.clone(),
                        parent: self.dag.node(u).id.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn dag(&self) -> &CausalDag {
        &self.dag
    }

    pub fn noise(&self, v: usize) -> &NoiseDist {
        &self.noise[v]
    }

    pub fn mechanism(&self, v: usize) -> &Mechanism {
        &self.mechanisms[v]
    }

    pub fn parent_configs(&self, v: usize) -> usize {
        self.dag
            .parents_of(v)
            .iter()
            .map(|&p| self.dag.node(p).support.len())
            .product()
    }

    pub fn config_index(&self, v: usize, parent_levels: &[u32]) -> usize {
        self.dag
            .parents_of(v)
            .iter()
            .zip(parent_levels)
            .fold(0, |acc, (&p, &l)| acc * self.dag.node(p).support.len() + l as usize)
    }

    pub fn decode_config(&self, v: usize, mut config: usize) -> Vec<u32> {
        let parents = self.dag.parents_of(v);
        let mut levels = vec![0; parents.len()];
        for (k, &p) in parents.iter().enumerate().rev() {
            let r = self.dag.node(p).support.len();
            levels[k] = (config % r) as u32;
            config /= r;
        }
        levels
    }

    /// Outputs for each noise level under one parent configuration.
    pub fn row(&self, v: usize, config: usize) -> &[u32] {
        let m = self.noise[v].len();
        &self.mechanisms[v].outputs[config * m..(config + 1) * m]
    }

    pub fn output(&self, v: usize, config: usize, noise: usize) -> u32 {
        self.row(v, config)[noise]
    }

    /// `Pr[v = level | parents]` for every configuration, by summing noise.
    pub fn cpt(&self, v: usize) -> Vec<Vec<Prob>> {
        let k = self.dag.node(v).support.len();
        (0..self.parent_configs(v))
            .map(|c| {
                let mut dist = vec![Prob::zero(); k];
                for (n, q) in self.noise[v].probs().iter().enumerate() {
                    let o = self.output(v, c, n) as usize;
                    dist[o] += q;
                }
                dist
            })
            .collect()
    }

    fn config_of(&self, v: usize, state: &[u32]) -> usize {
        self.dag
            .parents_of(v)
            .iter()
            .fold(0, |acc, &p| acc * self.dag.node(p).support.len() + state[p] as usize)
    }

    pub fn joint_vars(&self) -> Vec<JointVar> {
        self.dag
            .nodes()
            .iter()
            .map(|n| JointVar {
                name: n.id.to_string(),
                support: n.support.clone(),
            })
            .collect()
    }

    /// Product of per-node conditionals; `forced[v]` replaces node `v`'s
    /// mechanism by a constant.
    fn truncated_law(&self, forced: &[Option<u32>]) -> Result<DiscreteJoint, ScmError> {
        let vars = self.joint_vars();
        let cells = dist::cell_count(&vars)?;
        let cpts: Vec<Vec<Vec<Prob>>> = (0..self.dag.len()).map(|v| self.cpt(v)).collect();
        let sizes: Vec<usize> = vars.iter().map(JointVar::size).collect();
        let table: Vec<Prob> = (0..cells)
            .into_par_iter()
            .map(|cell| {
                let mut state = vec![0u32; sizes.len()];
                let mut rest = cell;
                for i in (0..sizes.len()).rev() {
                    state[i] = (rest % sizes[i]) as u32;
                    rest /= sizes[i];
                }
                let mut p = dist::ratio(1, 1);
                for &v in self.dag.topo_order() {
                    match forced[v] {
                        Some(level) if level != state[v] => return Prob::zero(),
                        Some(_) => {}
                        None => {
                            let f = &cpts[v][self.config_of(v, &state)][state[v] as usize];
                            if f.is_zero() {
                                return Prob::zero();
                            }
                            p *= f;
                        }
                    }
                }
                p
            })
            .collect();
        Ok(DiscreteJoint::new(vars, table)?)
    }

    fn forced_levels(&self, regime: &Regime) -> Result<Vec<Option<u32>>, ScmError> {
        let mut forced = vec![None; self.dag.len()];
        for (var, level) in regime.levels()? {
            forced[self.dag.index_of(var.as_str())?] = Some(level.0);
        }
        Ok(forced)
    }
}

/// Exact joint law of all endogenous variables.
pub fn factual_law(scm: &Scm) -> Result<DiscreteJoint, ScmError> {
    scm.truncated_law(&vec![None; scm.dag.len()])
}

/// Joint law after replacing each intervened mechanism by its regime value.
pub fn do_law(scm: &Scm, regime: &Regime) -> Result<DiscreteJoint, ScmError> {
    let forced = scm.forced_levels(regime)?;
    scm.truncated_law(&forced)
}

/// Joint law of the factual variables and their counterfactuals under
/// `regime`, both computed from the same noise draw.
///
/// Counterfactual copies are named by their minimal label (`Y^{r=1,s=1,z=1}`).
/// Nodes whose minimal label is empty equal their factual version in every
/// noise draw, so their factual column stands for them. The copy of an
/// intervened node is its natural value under the earlier steps only.
pub fn counterfactual_joint(scm: &Scm, regime: &Regime) -> Result<DiscreteJoint, ScmError> {
    let dag = &scm.dag;
    let n = dag.len();
    let forced = scm.forced_levels(regime)?;
    let swig = build_swig(dag, regime)?;

    // State: factual levels then counterfactual natural levels.
    let mut states: HashMap<Vec<u32>, Prob> = HashMap::from([(vec![0; 2 * n], dist::ratio(1, 1))]);
    for &v in dag.topo_order() {
        let mut next: HashMap<Vec<u32>, Prob> = HashMap::with_capacity(states.len() * 2);
        for (state, p) in &states {
            let (fact, cf) = state.split_at(n);
            let fc = scm.config_of(v, fact);
            let cf_world: Vec<u32> = (0..n).map(|u| forced[u].unwrap_or(cf[u])).collect();
            let cc = scm.config_of(v, &cf_world);
            for (noise, q) in scm.noise[v].probs().iter().enumerate() {
                if q.is_zero() {
                    continue;
                }
                let mut s = state.clone();
                s[v] = scm.output(v, fc, noise);
                s[n + v] = scm.output(v, cc, noise);
                *next.entry(s).or_insert_with(Prob::zero) += p * q;
            }
        }
        states = next;
    }

    let copies: Vec<usize> = (0..n)
        .filter(|&v| !swig.random_nodes()[v].label.is_factual())
        .collect();
    let mut vars = scm.joint_vars();
    for &v in &copies {
        vars.push(JointVar {
            name: swig.random_nodes()[v].label.to_string(),
            support: dag.node(v).support.clone(),
        });
    }
    let mut rows: HashMap<Vec<u32>, Prob> = HashMap::with_capacity(states.len());
    for (s, p) in states {
        let mut levels = s[..n].to_vec();
        levels.extend(copies.iter().map(|&v| s[n + v]));
        *rows.entry(levels).or_insert_with(Prob::zero) += p;
    }
    Ok(DiscreteJoint::from_rows(vars, rows)?)
}

/// Draws from the factual law.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub vars: Vec<JointVar>,
    pub rows: Vec<Vec<u32>>,
    pub seed: u64,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.vars.iter().map(|v| v.name.as_str()).collect::<Vec<_>>().join(",");
        out.push('\n');
        for row in &self.rows {
            let labels: Vec<&str> = row
                .iter()
                .zip(&self.vars)
                .map(|(&l, v)| v.support[l as usize].as_str())
                .collect();
            out.push_str(&labels.join(","));
            out.push('\n');
        }
        out
    }

    /// Empirical joint: each cell gets `count / n`.
    pub fn empirical_joint(&self) -> Result<DiscreteJoint, DistError> {
        let mut counts: HashMap<&[u32], i64> = HashMap::new();
        for r in &self.rows {
            *counts.entry(r.as_slice()).or_default() += 1;
        }
        let n = self.rows.len() as i64;
        DiscreteJoint::from_rows(
            self.vars.clone(),
            counts.into_iter().map(|(r, c)| (r.to_vec(), dist::ratio(c, n))),
        )
    }
}

/// `n` draws from the factual law. Row `i` uses its own ChaCha stream keyed
/// by `(seed, i)`, so output does not depend on how rows are split across
/// threads.
pub fn sample(scm: &Scm, n: usize, seed: u64) -> Dataset {
    let dag = &scm.dag;
    let cumulative: Vec<Vec<f64>> = scm
        .noise
        .iter()
        .map(|nd| {
            let mut acc = 0.0;
            nd.probs()
                .iter()
                .map(|p| {
                    acc += p.to_f64().unwrap_or(0.0);
                    acc
                })
                .collect()
        })
        .collect();
    let rows = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut state = vec![0u32; dag.len()];
            for &v in dag.topo_order() {
                let u: f64 = rng.gen();
                let cum = &cumulative[v];
                let noise = cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1);
                state[v] = scm.output(v, scm.config_of(v, &state), noise);
            }
            state
        })
        .collect();
    Dataset {
        vars: scm.joint_vars(),
        rows,
        seed,
    }
}

/// Random SCM on `dag` in which every conditional `Pr[v = k | parents]` is at
/// least `min_prob`, and mechanisms ignore gated parents wherever the gate is
/// closed.
pub fn random_scm(dag: &CausalDag, seed: u64, min_prob: &Prob) -> Result<Scm, ScmError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let one = dist::ratio(1, 1);
    let mut noise = Vec::with_capacity(dag.len());
    let mut mechanisms = Vec::with_capacity(dag.len());

    for v in 0..dag.len() {
        let node = dag.node(v);
        let k = node.support.len();
        let infeasible = || ScmError::InfeasibleFloor {
            node: node.id.clone(),
            min_prob: min_prob.to_string(),
        };
        if *min_prob <= Prob::zero() || min_prob * dist::ratio(k as i64, 1) > one || k > MAX_NOISE_LEVELS {
            return Err(infeasible());
        }
        let cap = (one.clone() / min_prob).floor().to_integer().to_usize().unwrap_or(MAX_NOISE_LEVELS);
        let m = rng.gen_range(k..=cap.min(MAX_NOISE_LEVELS));

        // q_i = floor + w_i · (1 − m · floor), with positive integer weights w.
        let weights: Vec<i64> = (0..m).map(|_| rng.gen_range(1..=9)).collect();
        let wsum: i64 = weights.iter().sum();
        let slack = &one - min_prob * dist::ratio(m as i64, 1);
        let probs: Vec<Prob> = weights
            .iter()
            .map(|&w| min_prob + &slack * dist::ratio(w, wsum))
            .collect();
        noise.push(NoiseDist::new(probs).map_err(|reason| ScmError::NoiseMass {
            node: node.id.clone(),
            reason,
        })?);

        let parents = dag.parents_of(v);
        let radices: Vec<usize> = parents.iter().map(|&p| dag.node(p).support.len()).collect();
        let configs: usize = radices.iter().product();
        // (position of gated parent, position of gating parent, gate)
        let gates: Vec<(usize, usize, &crate::graph::Gate)> = parents
            .iter()
            .enumerate()
            .filter_map(|(pos, &u)| {
                let g = dag.gate(u, v)?;
                let on = dag.index_of(g.on.as_str()).ok()?;
                Some((pos, parents.iter().position(|&p| p == on)?, g))
            })
            .collect();
        let mut rows: HashMap<Vec<u32>, Vec<u32>> = HashMap::new();
        let mut outputs = Vec::with_capacity(configs * m);
        for config in 0..configs {
            let mut levels = vec![0u32; radices.len()];
            let mut rest = config;
            for i in (0..radices.len()).rev() {
                levels[i] = (rest % radices[i]) as u32;
                rest /= radices[i];
            }
            for &(pos, on_pos, g) in &gates {
                if !g.is_active(levels[on_pos]) {
                    levels[pos] = 0;
                }
            }
            let row = rows
                .entry(levels)
                .or_insert_with(|| {
                    let mut order: Vec<usize> = (0..m).collect();
                    order.shuffle(&mut rng);
                    let mut row = vec![0u32; m];
                    for (j, &noise_level) in order.iter().enumerate() {
                        row[noise_level] = if j < k { j as u32 } else { rng.gen_range(0..k as u32) };
                    }
                    row
                })
                .clone();
            outputs.extend(row);
        }
        mechanisms.push(Mechanism { outputs });
    }
    Scm::new(dag.clone(), noise, mechanisms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{ratio, Event, Level};
    use crate::graph::{EdgeSpec, NodeSpec};

    fn chain() -> CausalDag {
        CausalDag::new(
            vec![NodeSpec::new("A").unwrap(), NodeSpec::new("B").unwrap()],
            vec![EdgeSpec::new("A", "B").unwrap()],
        )
        .unwrap()
    }

    /// A uniform, B := A.
    fn copy_scm() -> Scm {
        Scm::new(
            chain(),
            vec![NoiseDist::new(vec![ratio(1, 2), ratio(1, 2)]).unwrap(), NoiseDist::point()],
            vec![Mechanism { outputs: vec![0, 1] }, Mechanism { outputs: vec![0, 1] }],
        )
        .unwrap()
    }

    #[test]
    fn passthrough_single_node() {
        let g = CausalDag::new(vec![NodeSpec::new("V").unwrap()], vec![]).unwrap();
        let scm = Scm::new(
            g,
            vec![NoiseDist::new(vec![ratio(1, 2), ratio(1, 2)]).unwrap()],
            vec![Mechanism { outputs: vec![0, 1] }],
        )
        .unwrap();
        let law = factual_law(&scm).unwrap();
        assert_eq!(law.table(), &[ratio(1, 2), ratio(1, 2)]);
    }

    #[test]
    fn copy_mechanism() {
        let law = factual_law(&copy_scm()).unwrap();
        let same = law.table()[0].clone() + law.table()[3].clone();
        assert_eq!(same, ratio(1, 1));
    }

    #[test]
    fn one_step_truncation() {
        // B := A xor noise, noise ~ (1/4, 3/4).
        let scm = Scm::new(
            chain(),
            vec![
                NoiseDist::new(vec![ratio(1, 2), ratio(1, 2)]).unwrap(),
                NoiseDist::new(vec![ratio(1, 4), ratio(3, 4)]).unwrap(),
            ],
            vec![Mechanism { outputs: vec![0, 1] }, Mechanism { outputs: vec![0, 1, 1, 0] }],
        )
        .unwrap();
        let r = Regime::from_tokens(scm.dag(), &[("A", "1")]).unwrap();
        let law = do_law(&scm, &r).unwrap();
        let b1 = law.prob(&Event::new().with_eq("B", Level(1))).unwrap();
        assert_eq!(b1, ratio(1, 4));
        assert_eq!(law.prob(&Event::new().with_eq("A", Level(1))).unwrap(), ratio(1, 1));
    }

    #[test]
    fn noop_intervention_leaves_law_unchanged() {
        let g = chain();
        let scm = Scm::new(
            g,
            vec![NoiseDist::point(), NoiseDist::new(vec![ratio(1, 3), ratio(2, 3)]).unwrap()],
            vec![Mechanism { outputs: vec![1] }, Mechanism { outputs: vec![0, 1, 1, 1] }],
        )
        .unwrap();
        let r = Regime::from_tokens(scm.dag(), &[("A", "1")]).unwrap();
        assert_eq!(do_law(&scm, &r).unwrap(), factual_law(&scm).unwrap());
    }

    #[test]
    fn empty_regime_counterfactual_is_factual() {
        let scm = random_scm(&chain(), 3, &ratio(1, 10)).unwrap();
        let cf = counterfactual_joint(&scm, &Regime::empty()).unwrap();
        assert_eq!(cf, factual_law(&scm).unwrap());
    }

    #[test]
    fn counterfactual_of_sink_intervention() {
        let scm = random_scm(&chain(), 5, &ratio(1, 10)).unwrap();
        let r = Regime::from_tokens(scm.dag(), &[("B", "1")]).unwrap();
        let cf = counterfactual_joint(&scm, &r).unwrap();
        // B has no descendants: no node gets a counterfactual copy.
        assert_eq!(cf.vars().len(), 2);
    }

    #[test]
    fn counterfactual_consistency_on_chain() {
        let scm = random_scm(&chain(), 11, &ratio(1, 10)).unwrap();
        let r = Regime::from_tokens(scm.dag(), &[("A", "1")]).unwrap();
        let cf = counterfactual_joint(&scm, &r).unwrap();
        let names: Vec<&str> = cf.vars().iter().map(|v| v.name.as_str()).collect();
        assert_eq!(names, ["A", "B", "B^{a=1}"]);
        // Given A = 1 the copy agrees with B.
        let a1 = Event::new().with_eq("A", Level(1));
        let disagree = a1
            .clone()
            .with_eq("B", Level(0))
            .with_eq("B^{a=1}", Level(1));
        assert!(cf.prob(&disagree).unwrap().is_zero());
    }

    #[test]
    fn sampling_is_deterministic() {
        let scm = random_scm(&chain(), 1, &ratio(1, 20)).unwrap();
        assert_eq!(sample(&scm, 1, 42), sample(&scm, 1, 42));
        assert_eq!(sample(&scm, 50, 7).rows[..10], sample(&scm, 10, 7).rows[..]);
    }

    #[test]
    fn degenerate_noise_gives_identical_rows() {
        let scm = Scm::new(
            chain(),
            vec![NoiseDist::point(), NoiseDist::point()],
            vec![Mechanism { outputs: vec![1] }, Mechanism { outputs: vec![1, 0] }],
        )
        .unwrap();
        let d = sample(&scm, 20, 9);
        assert!(d.rows.iter().all(|r| r == &vec![1, 0]));
    }

    #[test]
    fn floor_at_half_forces_uniform_conditionals() {
        let scm = random_scm(&chain(), 17, &ratio(1, 2)).unwrap();
        for v in 0..2 {
            for row in scm.cpt(v) {
                assert_eq!(row, vec![ratio(1, 2), ratio(1, 2)]);
            }
        }
    }

    #[test]
    fn floor_respected_and_seeded() {
        let g = chain();
        let a = random_scm(&g, 99, &ratio(1, 20)).unwrap();
        assert_eq!(a, random_scm(&g, 99, &ratio(1, 20)).unwrap());
        for v in 0..2 {
            assert!(a.cpt(v).iter().flatten().all(|p| *p >= ratio(1, 20)));
        }
        assert!(matches!(
            random_scm(&g, 1, &ratio(3, 5)),
            Err(ScmError::InfeasibleFloor { .. })
        ));
        assert!(matches!(
            random_scm(&g, 1, &ratio(0, 1)),
            Err(ScmError::InfeasibleFloor { .. })
        ));
    }

    #[test]
    fn malformed_tables_rejected() {
        let err = Scm::new(
            chain(),
            vec![NoiseDist::point(), NoiseDist::point()],
            vec![Mechanism { outputs: vec![0] }, Mechanism { outputs: vec![0] }],
        );
        assert!(matches!(err, Err(ScmError::TableShape { .. })));
        let err = Scm::new(
            chain(),
            vec![NoiseDist::point(), NoiseDist::point()],
            vec![Mechanism { outputs: vec![2] }, Mechanism { outputs: vec![0, 0] }],
        );
        assert!(matches!(err, Err(ScmError::OutputOutOfRange { .. })));
        assert!(NoiseDist::new(vec![ratio(1, 2)]).is_err());
    }

    #[test]
    fn gates_enforced_in_tables() {
        let g = CausalDag::new(
            vec![NodeSpec::new("S").unwrap(), NodeSpec::new("U").unwrap(), NodeSpec::new("Z").unwrap()],
            vec![
                EdgeSpec::new("S", "Z").unwrap(),
                EdgeSpec::new("U", "Z").unwrap().gated("S", &[0]).unwrap(),
            ],
        )
        .unwrap();
        // Parent order (S, U); Z copies U even when S = 1: violates the gate.
        let bad = Scm::new(
            g.clone(),
            vec![NoiseDist::point(), NoiseDist::point(), NoiseDist::point()],
            vec![
                Mechanism { outputs: vec![0] },
                Mechanism { outputs: vec![0] },
                Mechanism { outputs: vec![0, 1, 0, 1] },
            ],
        );
        assert!(matches!(bad, Err(ScmError::GateViolation { .. })));
        let scm = random_scm(&g, 4, &ratio(1, 20)).unwrap();
        let z = 2;
        assert_eq!(scm.row(z, scm.config_index(z, &[1, 0])), scm.row(z, scm.config_index(z, &[1, 1])));
    }
}
