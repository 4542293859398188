//! One PASS/FAIL line per acceptance criterion. Runs as a plain binary so the
//! lines appear in order and unbuffered.

mod common;

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rust_decimal::Decimal;
use swid_cli::{expectations, load, parse_model, write_model};
use swid_core::dist::ratio;
use swid_core::ident::FLAG_NO_CAUSAL;
use swid_core::presets::{engagement_dag, exclusion_dag};
use swid_core::{
    build_swig, check_positivity, counterfactual_joint, derive_exchangeability, do_law, factual_law, g_formula,
    identify, ipw, plugin_estimate, preset, random_scm, sample, CausalDag, DiscreteJoint, EdgeSpec, Event,
    IdentOptions, JointVar, Level, NodeSpec, Prob, Regime, RegimeSpec, Scalar, Scm, Source,
};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn min_prob() -> Prob {
    ratio(1, 20)
}

fn oracle_cdf(scm: &Scm, spec: &RegimeSpec, y: Level) -> Result<Prob, String> {
    let law = do_law(scm, &spec.regime(scm.dag()).map_err(err)?).map_err(err)?;
    law.cond_cdf(&spec.outcome, y, &Event::new()).map_err(err)
}

fn bindings(pairs: &[(&str, &str)]) -> std::collections::BTreeMap<String, String> {
    pairs.iter().map(|&(k, v)| (k.to_string(), v.to_string())).collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let s = preset("engagement").map_err(err)?;
    let mut worst_decimal = 0.0f64;
    for seed in 0..100 {
        let scm = random_scm(&s.dag, seed, &min_prob()).map_err(err)?;
        let law = factual_law(&scm).map_err(err)?;
        let law_dec: DiscreteJoint<Decimal> = law.to_backend();
        for z in ["0", "1"] {
            let spec = s.spec_with(&bindings(&[("z", z)])).map_err(err)?;
            for y in 0..2 {
                let oracle = oracle_cdf(&scm, &spec, Level(y))?;
                let g = g_formula(&law, &spec, Level(y)).map_err(err)?;
                ensure(g == oracle, format!("seed {seed}, z={z}, y={y}: g-formula {g} vs oracle {oracle}"))?;
                let gd = g_formula(&law_dec, &spec, Level(y)).map_err(err)?;
                worst_decimal = worst_decimal.max((gd.to_f64() - oracle.to_f64()).abs());
            }
        }
    }
    ensure(worst_decimal <= 1e-10, format!("decimal backend off by {worst_decimal:e}"))?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, format!("took {secs:.1} s"))?;
    Ok(format!("100 SCMs, exact match; decimal max diff {worst_decimal:.1e}; {secs:.1} s"))
}

fn criterion_2() -> Outcome {
    let spec = preset("engagement").map_err(err)?.spec().map_err(err)?;
    let vars: Vec<JointVar> = ["X", "R", "S", "Z", "Y"].iter().map(|v| JointVar::binary(*v)).collect();
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<i64> = (0..32).map(|_| rng.gen_range(1..=50)).collect();
        let total: i64 = w.iter().sum();
        let j = DiscreteJoint::new(vars.clone(), w.iter().map(|&x| ratio(x, total)).collect()).map_err(err)?;
        for y in 0..2 {
            let g = g_formula(&j, &spec, Level(y)).map_err(err)?;
            let i = ipw(&j, &spec, Level(y)).map_err(err)?;
            ensure(g == i, format!("seed {seed}, y={y}: g {g} vs ipw {i}"))?;
        }
    }
    Ok("100 positive joints, ipw = g-formula exactly".into())
}

fn edge_set(list: &[(&str, &str)]) -> BTreeSet<(String, String)> {
    list.iter().map(|&(a, b)| (a.to_string(), b.to_string())).collect()
}

fn criterion_3() -> Outcome {
    let y2 = "Y^{r=1,s=1,z}";
    let fig2_edges = edge_set(&[
        ("X", "R"),
        ("X", "S^{r=1}"),
        ("X", "Z^{r=1,s=1}"),
        ("X", y2),
        ("r=1", "S^{r=1}"),
        ("r=1", "Z^{r=1,s=1}"),
        ("r=1", y2),
        ("s=1", "Z^{r=1,s=1}"),
        ("s=1", y2),
        ("z", y2),
        ("U", y2),
    ]);
    let fig4_edges = edge_set(&[
        ("X", "R"),
        ("X", "S^{r=1}"),
        ("X", "Z^{r=1,s=1}"),
        ("X", "Y^{z}"),
        ("r=1", "S^{r=1}"),
        ("r=1", "Z^{r=1,s=1}"),
        ("s=1", "Z^{r=1,s=1}"),
        ("z", "Y^{z}"),
    ]);
    let fig2_nodes: BTreeSet<String> = ["X", "R", "S^{r=1}", "Z^{r=1,s=1}", y2, "U"].iter().map(|s| s.to_string()).collect();
    let fig4_nodes: BTreeSet<String> = ["X", "R", "S^{r=1}", "Z^{r=1,s=1}", "Y^{z}"].iter().map(|s| s.to_string()).collect();
    for (dag, edges, nodes, fig) in [
        (engagement_dag(), fig2_edges, fig2_nodes, "engagement"),
        (exclusion_dag(), fig4_edges, fig4_nodes, "exclusion"),
    ] {
        let r = Regime::from_tokens(&dag, &[("R", "1"), ("S", "1"), ("Z", "z")]).map_err(err)?;
        let swig = build_swig(&dag, &r).map_err(err)?;
        let got_nodes: BTreeSet<String> = swig.random_nodes().iter().map(|n| n.label.to_string()).collect();
        ensure(got_nodes == nodes, format!("{fig} nodes {got_nodes:?}"))?;
        ensure(swig.edge_names() == edges, format!("{fig} edges {:?}", swig.edge_names()))?;
        let fixed: Vec<String> = swig.fixed_nodes().iter().map(|f| f.to_string()).collect();
        ensure(fixed == ["r=1", "s=1", "z"], format!("{fig} fixed nodes {fixed:?}"))?;
    }
    Ok("engagement and exclusion SWIGs match the expected node and edge sets".into())
}

fn criterion_4() -> Outcome {
    let mut counts = Vec::new();
    for (name, want) in [("engagement", 3), ("censoring", 2), ("time_varying", 7)] {
        let s = preset(name).map_err(err)?;
        let conds = derive_exchangeability(&s.dag, &s.template, &s.outcome).map_err(err)?;
        ensure(conds.len() == want, format!("{name}: {} conditions", conds.len()))?;
        ensure(conds.iter().all(|c| c.holds), format!("{name}: a condition fails"))?;
        counts.push(conds.len().to_string());
    }
    let s = preset("engagement").map_err(err)?;
    let template = Regime::from_tokens(&s.dag, &[("Z", "z")]).map_err(err)?;
    let conds = derive_exchangeability(&s.dag, &template, "Y").map_err(err)?;
    let failing: Vec<String> = conds.iter().filter(|c| !c.holds).map(|c| c.to_string()).collect();
    ensure(!failing.is_empty(), "Z-only regime: every condition holds")?;
    let swig = build_swig(&s.dag, &template).map_err(err)?;
    ensure(!swig.independence("Y", "S", &["X"]).map_err(err)?.holds, "Y^z independent of S given X")?;
    let regime = template.bind(&s.dag, &bindings(&[("z", "1")])).map_err(err)?;
    let spec = RegimeSpec::from_regime(&s.dag, &regime, &["X"], "Y", &Default::default()).map_err(err)?;
    let scm = random_scm(&s.dag, 0, &min_prob()).map_err(err)?;
    let report = identify::<Prob>(&s.dag, Source::Scm(&scm), &template, &spec, &[Level(0)], &IdentOptions::default())
        .map_err(err)?;
    ensure(report.flags.iter().any(|f| f == FLAG_NO_CAUSAL), "identify did not flag the Z-only regime")?;
    Ok(format!("{} conditions, all holding; Z-only regime fails {} and is flagged", counts.join("/"), failing.join("; ")))
}

/// Pr[a, b, g] Pr[g] = Pr[a, g] Pr[b, g] for every joint level of the
/// conditioning set, by explicit event sums.
fn independent(j: &DiscreteJoint, a: &str, b: &str, given: &[String]) -> Result<bool, String> {
    let size = |v: &str| j.var(v).map(|x| x.size()).map_err(err);
    let mut configs = vec![Vec::<u32>::new()];
    for g in given {
        let k = size(g)? as u32;
        configs = configs
            .into_iter()
            .flat_map(|c| (0..k).map(move |l| [c.clone(), vec![l]].concat()))
            .collect();
    }
    for c in configs {
        let ev = given
            .iter()
            .zip(&c)
            .fold(Event::new(), |e, (v, &l)| e.with_eq(v.as_str(), Level(l)));
        let pg = j.prob(&ev).map_err(err)?;
        for la in 0..size(a)? as u32 {
            for lb in 0..size(b)? as u32 {
                let ea = ev.clone().with_eq(a, Level(la));
                let eb = ev.clone().with_eq(b, Level(lb));
                let eab = ea.clone().with_eq(b, Level(lb));
                let lhs = j.prob(&eab).map_err(err)? * pg.clone();
                let rhs = j.prob(&ea).map_err(err)? * j.prob(&eb).map_err(err)?;
                if lhs != rhs {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

fn criterion_5() -> Outcome {
    let s = preset("engagement").map_err(err)?;
    let regime = s.regime().map_err(err)?;
    let conds = derive_exchangeability(&s.dag, &regime, &s.outcome).map_err(err)?;
    for seed in 0..25 {
        let scm = random_scm(&s.dag, seed, &min_prob()).map_err(err)?;
        let cf = counterfactual_joint(&scm, &regime).map_err(err)?;
        for c in &conds {
            let given: Vec<String> = c.given.iter().map(|l| l.to_string()).collect();
            let ok = independent(&cf, &c.left.to_string(), &c.right.to_string(), &given)?;
            ensure(ok, format!("seed {seed}: {c} fails in the counterfactual joint"))?;
        }
    }
    Ok(format!("{} conditions factorize exactly in 25 counterfactual joints", conds.len()))
}

fn three_way(name: &str, count: u64) -> Outcome {
    let start = Instant::now();
    let s = preset(name).map_err(err)?;
    let spec = s.spec().map_err(err)?;
    let y = s.dag.get(&s.outcome).ok_or("no outcome")?;
    let thresholds: Vec<Level> = (0..y.support.len() as u32).map(Level).collect();
    for seed in 0..count {
        let scm = random_scm(&s.dag, seed, &min_prob()).map_err(err)?;
        let report = identify::<Prob>(&s.dag, Source::Scm(&scm), &s.template, &spec, &thresholds, &IdentOptions::default())
            .map_err(err)?;
        let oracle = report.oracle.as_ref().ok_or("no oracle")?;
        for (i, (lvl, g)) in report.g_formula.values.iter().enumerate() {
            let w = &report.ipw.values[i].1;
            ensure(
                g == w && g == &oracle[i],
                format!("seed {seed}, y={}: g {g}, ipw {w}, oracle {}", lvl.0, oracle[i]),
            )?;
        }
    }
    Ok(format!("{count} SCMs, g-formula = IPW = oracle exactly; {:.1} s", start.elapsed().as_secs_f64()))
}

fn criterion_6() -> Outcome {
    three_way("censoring", 50)
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let line = three_way("time_varying", 25)?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 120.0, format!("took {secs:.1} s"))?;
    Ok(line)
}

fn example(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn run_swid(cmd: &str, file: &Path) -> Result<i32, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_swid"))
        .arg(cmd)
        .arg(file)
        .output()
        .map_err(err)?;
    out.status.code().ok_or_else(|| "killed by a signal".to_string())
}

fn criterion_8() -> Outcome {
    let path = example("positivity-violation.swid");
    let model = load(&std::fs::read_to_string(&path).map_err(err)?).map_err(|o| o.stderr)?;
    let spec = model.resolve()?.spec;
    let law = factual_law(model.scm.as_ref().ok_or("no scm")?).map_err(err)?;
    // The cell really is empty.
    let given = Event::new().with_eq("X", Level(0)).with_eq("R", Level(1));
    let p = law.conditional(&Event::new().with_eq("S", Level(1)), &given).map_err(err)?;
    ensure(p == ratio(0, 1), format!("Pr[S=1 | X=0, R=1] = {p}"))?;
    let report = check_positivity(&law, &spec).map_err(err)?;
    let v: Vec<_> = report.violations().collect();
    ensure(v.len() == 1, format!("{} violations reported", v.len()))?;
    let named = (v[0].step.as_str(), v[0].decision.as_str(), v[0].given.as_str());
    ensure(named == ("S", "S=1", "X=0, R=1"), format!("reported {named:?}"))?;
    let code = run_swid("identify", &path)?;
    ensure(code == 4, format!("identify exited {code}"))?;
    Ok(format!("report names only {report}; identify exits 4"))
}

fn dag_from_bits(n: usize, bits: u64) -> (CausalDag, Vec<(usize, usize)>) {
    let mut edges = Vec::new();
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            if bits >> k & 1 == 1 {
                edges.push((i, j));
            }
            k += 1;
        }
    }
    let nodes = (0..n).map(|i| NodeSpec::new(&format!("V{i}")).unwrap()).collect();
    let specs = edges
        .iter()
        .map(|&(a, b)| EdgeSpec::new(&format!("V{a}"), &format!("V{b}")).unwrap())
        .collect();
    (CausalDag::new(nodes, specs).unwrap(), edges)
}

/// Every simple path in the skeleton between `a` and `b`, tested for
/// blockage node by node.
fn path_separated(n: usize, edges: &[(usize, usize)], a: usize, b: usize, z: &[usize]) -> bool {
    let has = |x: usize, y: usize| edges.contains(&(x, y));
    let mut desc = vec![vec![false; n]; n];
    for v in (0..n).rev() {
        desc[v][v] = true;
        for &(x, y) in edges {
            if x == v {
                for w in 0..n {
                    if desc[y][w] {
                        desc[v][w] = true;
                    }
                }
            }
        }
    }
    let open = |p: &[usize]| {
        p.windows(3).all(|w| {
            let (x, m, y) = (w[0], w[1], w[2]);
            if has(x, m) && has(y, m) {
                z.iter().any(|&q| desc[m][q])
            } else {
                !z.contains(&m)
            }
        })
    };
    let mut stack = vec![vec![a]];
    while let Some(path) = stack.pop() {
        let last = *path.last().unwrap();
        if last == b {
            if open(&path) {
                return false;
            }
            continue;
        }
        for v in 0..n {
            if (has(last, v) || has(v, last)) && !path.contains(&v) {
                let mut next = path.clone();
                next.push(v);
                stack.push(next);
            }
        }
    }
    true
}

fn names(set: &[usize]) -> Vec<String> {
    set.iter().map(|i| format!("V{i}")).collect()
}

fn criterion_9() -> Outcome {
    let mut exhaustive = 0usize;
    for n in 2..=5 {
        for bits in 0..1u64 << (n * (n - 1) / 2) {
            let (dag, edges) = dag_from_bits(n, bits);
            for a in 0..n {
                for b in a + 1..n {
                    let rest: Vec<usize> = (0..n).filter(|&v| v != a && v != b).collect();
                    for mask in 0..1u32 << rest.len() {
                        let z: Vec<usize> = rest.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, &v)| v).collect();
                        let got = dag.d_separated(&names(&[a]), &names(&[b]), &names(&z)).map_err(err)?;
                        ensure(got == path_separated(n, &edges, a, b, &z), format!("n={n} bits={bits:#b} {a},{b} | {z:?}"))?;
                        exhaustive += 1;
                    }
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for q in 0..1000 {
        let n = rng.gen_range(2..=7);
        let bits = rng.gen_range(0..1u64 << (n * (n - 1) / 2));
        let (dag, edges) = dag_from_bits(n, bits);
        // Each node lands in A, B, Z or nowhere; A and B nonempty.
        let mut role: Vec<u8> = (0..n).map(|_| rng.gen_range(0..4)).collect();
        role[0] = 0;
        role[1] = 1;
        let pick = |r: u8| (0..n).filter(|&v| role[v] == r).collect::<Vec<_>>();
        let (a, b, z) = (pick(0), pick(1), pick(2));
        let want = a.iter().all(|&x| b.iter().all(|&y| path_separated(n, &edges, x, y, &z)));
        let got = dag.d_separated(&names(&a), &names(&b), &names(&z)).map_err(err)?;
        ensure(got == want, format!("random query {q}: {a:?} vs {b:?} given {z:?} on bits {bits:#b}"))?;
    }
    Ok(format!("{exhaustive} exhaustive queries on DAGs with at most 5 nodes and 1000 random set queries agree"))
}

fn criterion_10() -> Outcome {
    let text = std::fs::read_to_string(example("engagement.swid")).map_err(err)?;
    let model = load(&text).map_err(|o| o.stderr)?;
    let scm = model.scm.as_ref().ok_or("no scm")?;
    let spec = model.resolve()?.spec;
    let law = factual_law(scm).map_err(err)?;
    let mut worst = 0.0f64;
    for seed in 1..=3 {
        let data = sample(scm, 100_000, seed);
        for y in 0..2 {
            let exact = g_formula(&law, &spec, Level(y)).map_err(err)?;
            let est = plugin_estimate(&data, &spec, Level(y)).map_err(err)?;
            worst = worst.max((est.to_f64() - exact.to_f64()).abs());
        }
    }
    ensure(worst <= 0.03, format!("plug-in off by {worst:.4}"))?;
    Ok(format!("3 seeds at n=100000, max |plug-in - exact| = {worst:.4}"))
}

fn criterion_11() -> Outcome {
    for seed in 0..200 {
        let model = common::random_model(seed);
        let text = write_model(&model);
        let parsed = parse_model(&text).map_err(|e| format!("model {seed}: {e}"))?;
        ensure(parsed == model, format!("model {seed} parses to a different model"))?;
        ensure(write_model(&parsed) == text, format!("model {seed} is not a fixed point"))?;
    }
    let mut checked = 0;
    for (path, text) in common::bundled_examples() {
        for (cmd, want) in expectations(&text) {
            let got = run_swid(&cmd, Path::new(&path))?;
            ensure(got == want, format!("{path}: {cmd} exited {got}, expected {want}"))?;
            checked += 1;
        }
    }
    Ok(format!("200 generated models round-trip; {checked} annotated example runs match"))
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 11] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
        (11, criterion_11),
    ];
    let mut failed = 0;
    for (n, f) in criteria {
        match f() {
            Ok(detail) => println!("criterion {n}: PASS - {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n}: FAIL - {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
