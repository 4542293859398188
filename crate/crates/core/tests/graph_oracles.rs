use std::collections::BTreeSet;

use proptest::prelude::*;
use swid_core::{preset, CausalDag, EdgeSpec, NodeSpec};

fn name(i: usize) -> String {
    format!("V{i}")
}

/// DAG on `n` nodes whose edge `i -> j` (i < j) is present when its bit is set.
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
    let nodes = (0..n).map(|i| NodeSpec::new(&name(i)).unwrap()).collect();
    let specs = edges.iter().map(|&(a, b)| EdgeSpec::new(&name(a), &name(b)).unwrap()).collect();
    (CausalDag::new(nodes, specs).unwrap(), edges)
}

fn reach(n: usize, edges: &[(usize, usize)], from: usize) -> Vec<bool> {
    // Boolean matrix closure by repeated squaring until fixpoint.
    let mut m = vec![vec![false; n]; n];
    for i in 0..n {
        m[i][i] = true;
    }
    for &(a, b) in edges {
        m[a][b] = true;
    }
    loop {
        let mut next = m.clone();
        for i in 0..n {
            for k in 0..n {
                if m[i][k] {
                    for j in 0..n {
                        next[i][j] |= m[k][j];
                    }
                }
            }
        }
        if next == m {
            return m[from].clone();
        }
        m = next;
    }
}

/// Enumerates every simple path between `a` and `b` in the skeleton and tests
/// each one for blockage.
fn path_oracle(n: usize, edges: &[(usize, usize)], a: usize, b: usize, z: &[usize]) -> bool {
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|v| {
            edges
                .iter()
                .filter_map(|&(x, y)| if x == v { Some(y) } else if y == v { Some(x) } else { None })
                .collect()
        })
        .collect();
    let has = |x: usize, y: usize| edges.contains(&(x, y));
    let z_or_desc_in_z = |v: usize| {
        let r = reach(n, edges, v);
        z.iter().any(|&w| r[w])
    };
    fn dfs(
        path: &mut Vec<usize>,
        b: usize,
        adj: &[Vec<usize>],
        open: &mut dyn FnMut(&[usize]) -> bool,
    ) -> bool {
        let last = *path.last().unwrap();
        if last == b {
            return open(path);
        }
        for &next in &adj[last] {
            if path.contains(&next) {
                continue;
            }
            path.push(next);
            if dfs(path, b, adj, open) {
                return true;
            }
            path.pop();
        }
        false
    }
    let mut is_open = |p: &[usize]| {
        p.windows(3).all(|w| {
            let (x, m, y) = (w[0], w[1], w[2]);
            if has(x, m) && has(y, m) {
                z_or_desc_in_z(m)
            } else {
                !z.contains(&m)
            }
        })
    };
    !dfs(&mut vec![a], b, &adj, &mut is_open)
}

fn names(set: &[usize]) -> Vec<String> {
    set.iter().map(|&i| name(i)).collect()
}

#[test]
fn exhaustive_four_node_agreement() {
    let n = 4;
    for bits in 0..1u64 << 6 {
        let (dag, edges) = dag_from_bits(n, bits);
        for a in 0..n {
            for b in a + 1..n {
                let rest: Vec<usize> = (0..n).filter(|&v| v != a && v != b).collect();
                for mask in 0..1u32 << rest.len() {
                    let z: Vec<usize> = rest.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, &v)| v).collect();
                    let got = dag.d_separated(&names(&[a]), &names(&[b]), &names(&z)).unwrap();
                    assert_eq!(got, path_oracle(n, &edges, a, b, &z), "bits {bits:#b}, {a} vs {b} given {z:?}");
                }
            }
        }
    }
}

fn arb_query() -> impl Strategy<Value = (usize, u64, usize, usize, u32)> {
    (2usize..=7).prop_flat_map(|n| {
        let pairs = n * (n - 1) / 2;
        (Just(n), 0u64..1 << pairs, 0..n, 0..n, 0u32..1 << n)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn random_queries_match_path_oracle((n, bits, a, b, zmask) in arb_query()) {
        prop_assume!(a != b);
        let (dag, edges) = dag_from_bits(n, bits);
        let z: Vec<usize> = (0..n).filter(|&v| v != a && v != b && zmask >> v & 1 == 1).collect();
        let got = dag.d_separated(&names(&[a]), &names(&[b]), &names(&z)).unwrap();
        prop_assert_eq!(got, path_oracle(n, &edges, a, b, &z));
        // Symmetry.
        prop_assert_eq!(got, dag.d_separated(&names(&[b]), &names(&[a]), &names(&z)).unwrap());
    }

    #[test]
    fn closure_matches_matrix_oracle((n, bits) in (2usize..=7).prop_flat_map(|n| (Just(n), 0u64..1 << (n * (n - 1) / 2)))) {
        let (dag, edges) = dag_from_bits(n, bits);
        for v in 0..n {
            let want: BTreeSet<String> = reach(n, &edges, v).iter().enumerate().filter(|(_, &r)| r).map(|(i, _)| name(i)).collect();
            let got: BTreeSet<String> = dag.descendants(&name(v)).unwrap().iter().map(|x| x.to_string()).collect();
            prop_assert_eq!(got, want);
            let reversed: Vec<(usize, usize)> = edges.iter().map(|&(x, y)| (y, x)).collect();
            let want: BTreeSet<String> = reach(n, &reversed, v).iter().enumerate().filter(|(_, &r)| r).map(|(i, _)| name(i)).collect();
            let got: BTreeSet<String> = dag.ancestors(&name(v)).unwrap().iter().map(|x| x.to_string()).collect();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn removing_an_edge_keeps_separations((n, bits, a, b, zmask, drop) in arb_query().prop_flat_map(|(n, bits, a, b, z)| (Just(n), Just(bits), Just(a), Just(b), Just(z), 0usize..21))) {
        prop_assume!(a != b);
        let (dag, edges) = dag_from_bits(n, bits);
        prop_assume!(!edges.is_empty());
        let z: Vec<usize> = (0..n).filter(|&v| v != a && v != b && zmask >> v & 1 == 1).collect();
        let removed = edges[drop % edges.len()];
        let mut k = 0;
        let mut fewer = 0u64;
        for i in 0..n {
            for j in i + 1..n {
                if bits >> k & 1 == 1 && (i, j) != removed {
                    fewer |= 1 << k;
                }
                k += 1;
            }
        }
        let (smaller, _) = dag_from_bits(n, fewer);
        if dag.d_separated(&names(&[a]), &names(&[b]), &names(&z)).unwrap() {
            prop_assert!(smaller.d_separated(&names(&[a]), &names(&[b]), &names(&z)).unwrap());
        }
    }
}

#[test]
fn disconnected_sets_are_separated() {
    let (dag, _) = dag_from_bits(4, 0b000001);
    assert!(dag.d_separated(&["V2"], &["V3"], &[] as &[&str]).unwrap());
}

#[test]
fn engagement_graph_queries() {
    let dag = preset("engagement").unwrap().dag;
    assert!(!dag.d_separated(&["Z"], &["Y"], &["X", "R", "S"]).unwrap());
    let anc: Vec<String> = dag.ancestors("Y").unwrap().iter().map(|v| v.to_string()).collect();
    assert_eq!(anc, ["R", "S", "U", "X", "Y", "Z"]);
    assert_eq!(dag.topo_ids().iter().map(|v| v.as_str()).collect::<Vec<_>>(), ["X", "R", "S", "U", "Z", "Y"]);
}

#[test]
fn chain_facts() {
    let (dag, _) = dag_from_bits(3, 0b101);
    // V0 -> V1 -> V2
    assert!(dag.d_separated(&["V0"], &["V2"], &["V1"]).unwrap());
    assert_eq!(dag.descendants("V0").unwrap().len(), 3);
    assert!(dag.d_separated(&["V0"], &["V2"], &["V0"]).is_err());
}
