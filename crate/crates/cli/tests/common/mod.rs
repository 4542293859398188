//! Random `.swid` models for round-trip tests.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swid_cli::dsl::{Claim, ModelFile, Query};
use swid_core::dist::ratio;
use swid_core::{random_scm, CausalDag, DiscreteJoint, EdgeSpec, JointVar, NodeSpec, StepRole};

const LABEL_SETS: [[&str; 3]; 3] = [["0", "1", "2"], ["lo", "mid", "hi"], ["no", "yes", "maybe"]];

fn random_dag(rng: &mut ChaCha8Rng) -> CausalDag {
    let n = rng.gen_range(2..=6);
    let names: Vec<String> = (0..n)
        .map(|i| if rng.gen_bool(0.3) { format!("t_{i}") } else { format!("N{i}") })
        .collect();
    let nodes: Vec<NodeSpec> = names
        .iter()
        .map(|name| {
            let base = if rng.gen_bool(0.15) { NodeSpec::latent(name) } else { NodeSpec::new(name) }.unwrap();
            let k = rng.gen_range(1..=3);
            let set = LABEL_SETS.choose(rng).unwrap();
            base.with_support(set[..k].iter().copied())
        })
        .collect();
    let sizes: Vec<usize> = nodes.iter().map(|n| n.support.len()).collect();
    let mut edges = Vec::new();
    for j in 0..n {
        let parents: Vec<usize> = (0..j).filter(|_| rng.gen_bool(0.45)).collect();
        for &i in &parents {
            let mut e = EdgeSpec::new(&names[i], &names[j]).unwrap();
            let others: Vec<usize> = parents.iter().copied().filter(|&p| p != i && sizes[p] > 1).collect();
            if !others.is_empty() && rng.gen_bool(0.2) {
                let on = *others.choose(rng).unwrap();
                let levels: Vec<u32> = (0..sizes[on] as u32).filter(|_| rng.gen_bool(0.5)).collect();
                let levels = if levels.is_empty() { vec![0] } else { levels };
                e = e.gated(&names[on], &levels).unwrap();
            }
            edges.push(e);
        }
    }
    CausalDag::new(nodes, edges).unwrap()
}

fn random_dist(rng: &mut ChaCha8Rng, dag: &CausalDag) -> DiscreteJoint {
    let mut vars: Vec<JointVar> = dag
        .nodes()
        .iter()
        .filter(|_| rng.gen_bool(0.6))
        .map(|n| JointVar {
            name: n.id.to_string(),
            support: n.support.clone(),
        })
        .collect();
    if vars.is_empty() {
        let n = &dag.nodes()[0];
        vars.push(JointVar {
            name: n.id.to_string(),
            support: n.support.clone(),
        });
    }
    let cells: usize = vars.iter().map(JointVar::size).product();
    let mut w: Vec<i64> = (0..cells).map(|_| if rng.gen_bool(0.2) { 0 } else { rng.gen_range(1..9) }).collect();
    w[0] += 1;
    let total: i64 = w.iter().sum();
    DiscreteJoint::new(vars, w.iter().map(|&x| ratio(x, total)).collect()).unwrap()
}

fn pick_names(rng: &mut ChaCha8Rng, pool: &[String], p: f64) -> Vec<String> {
    pool.iter().filter(|_| rng.gen_bool(p)).cloned().collect()
}

/// A query that resolves: the regime avoids the last node, which is the
/// outcome, and covariates and histories respect the topological order.
fn random_query(rng: &mut ChaCha8Rng, dag: &CausalDag) -> Query {
    let topo: Vec<String> = dag.topo_ids().iter().map(|v| v.to_string()).collect();
    let last = topo.len() - 1;
    let mut q = Query::default();
    if rng.gen_bool(0.2) {
        // Without a regime nothing is resolved, so anything goes.
        q.outcome = rng.gen_bool(0.5).then(|| topo.choose(rng).unwrap().clone());
        q.covariates = rng.gen_bool(0.5).then(|| pick_names(rng, &topo, 0.4));
        q.histories.insert(topo[0].clone(), pick_names(rng, &topo, 0.3));
        q.roles.insert(topo[last].clone(), *StepRole::ALL.choose(rng).unwrap());
        add_claims(rng, &mut q, &topo);
        return q;
    }
    let chosen: Vec<usize> = (0..last).filter(|_| rng.gen_bool(0.4)).collect();
    let mut steps = Vec::new();
    for &k in &chosen {
        let node = dag.get(&topo[k]).unwrap();
        let value = if rng.gen_bool(0.3) {
            let sym = format!("s{k}");
            q.bindings.insert(sym.clone(), node.support.choose(rng).unwrap().clone());
            sym
        } else {
            node.support.choose(rng).unwrap().clone()
        };
        steps.push((topo[k].clone(), value));
    }
    q.regime = Some(steps);
    q.outcome = Some(topo[last].clone());
    if rng.gen_bool(0.6) {
        let y = dag.get(&topo[last]).unwrap();
        q.thresholds = Some(pick_names(rng, &y.support, 0.6));
    }
    let first = chosen.first().copied().unwrap_or(last);
    if rng.gen_bool(0.4) {
        // A topological prefix, so that no later history is an ancestor of it.
        q.covariates = Some(topo[..rng.gen_range(0..=first)].to_vec());
    }
    if chosen.len() >= 2 && rng.gen_bool(0.4) {
        let i = rng.gen_range(1..chosen.len());
        let between = &topo[chosen[i - 1] + 1..chosen[i]];
        q.histories.insert(topo[chosen[i]].clone(), pick_names(rng, between, 0.6));
    }
    if !chosen.is_empty() && rng.gen_bool(0.4) {
        let d = &topo[*chosen.choose(rng).unwrap()];
        q.roles.insert(d.clone(), *StepRole::ALL.choose(rng).unwrap());
    }
    add_claims(rng, &mut q, &topo);
    if rng.gen_bool(0.2) {
        q.options = BTreeSet::from(["allow_nonpositive".to_string()]);
    }
    q
}

fn add_claims(rng: &mut ChaCha8Rng, q: &mut Query, topo: &[String]) {
    for _ in 0..rng.gen_range(0..3) {
        let mut shuffled = topo.to_vec();
        shuffled.shuffle(rng);
        if shuffled.len() < 2 {
            break;
        }
        let split = rng.gen_range(2..=shuffled.len());
        let cut = rng.gen_range(1..split);
        q.claims.push(Claim {
            left: shuffled[..cut].to_vec(),
            right: shuffled[cut..split].to_vec(),
            given: shuffled[split..].to_vec(),
        });
    }
}

/// A random well-formed model; `seed` fixes everything.
pub fn random_model(seed: u64) -> ModelFile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dag = random_dag(&mut rng);
    let (scm, dist) = match rng.gen_range(0..3) {
        0 => (None, None),
        1 => (Some(random_scm(&dag, seed, &ratio(1, 20)).unwrap()), None),
        _ => (None, Some(random_dist(&mut rng, &dag))),
    };
    let query = random_query(&mut rng, &dag);
    ModelFile { dag, scm, dist, query }
}

/// Same tokens with different indentation, blank lines and comments.
pub fn reformat(text: &str, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::from("# reformatted\n");
    for line in text.lines() {
        let pad = " ".repeat(rng.gen_range(0..6));
        let spaced = line.trim().replace(", ", if rng.gen_bool(0.5) { " ,  " } else { "," });
        out.push_str(&pad);
        out.push_str(&spaced);
        if rng.gen_bool(0.3) {
            out.push_str("   # trailing comment");
        }
        out.push('\n');
        if rng.gen_bool(0.2) {
            out.push('\n');
        }
    }
    out
}

pub fn bundled_examples() -> Vec<(String, String)> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("examples");
    let mut out: Vec<(String, String)> = std::fs::read_dir(&dir)
        .unwrap()
        .filter_map(|e| {
            let p = e.ok()?.path();
            (p.extension()? == "swid").then(|| (p.display().to_string(), std::fs::read_to_string(&p).unwrap()))
        })
        .collect();
    out.sort();
    out
}
