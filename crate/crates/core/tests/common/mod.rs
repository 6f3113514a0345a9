//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::{BTreeSet, VecDeque};

use drn_core::graph::{Graph, NodeId};
use drn_core::subgroup::{CliqueKind, CliqueSet};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Adj = Vec<Vec<bool>>;

pub fn label(i: usize) -> String {
    format!("v{i:02}")
}

pub fn node(i: usize) -> NodeId {
    NodeId::new(label(i)).unwrap()
}

pub fn random_adj(n: usize, density: f64, rng: &mut ChaCha8Rng) -> Adj {
    let mut a = vec![vec![false; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(density) {
                a[i][j] = true;
                a[j][i] = true;
            }
        }
    }
    a
}

pub fn to_graph(a: &Adj) -> Graph {
    let mut g = Graph::new();
    for i in 0..a.len() {
        g.add_node(&node(i));
        for j in i + 1..a.len() {
            if a[i][j] {
                g.add_edge(&node(i), &node(j), None).unwrap();
            }
        }
    }
    g
}

/// All-pairs hop counts by Floyd–Warshall.
pub fn floyd_warshall(a: &Adj) -> Vec<Vec<Option<usize>>> {
    let n = a.len();
    let mut d = vec![vec![None; n]; n];
    for i in 0..n {
        d[i][i] = Some(0);
        for j in 0..n {
            if a[i][j] {
                d[i][j] = Some(1);
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(x), Some(y)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|c| x + y < c) {
                        d[i][j] = Some(x + y);
                    }
                }
            }
        }
    }
    d
}

/// Maximal cliques by checking every vertex subset.
pub fn subset_maximal_cliques(a: &Adj) -> BTreeSet<Vec<usize>> {
    let n = a.len();
    let is_clique = |m: u32| {
        (0..n).all(|i| m & (1 << i) == 0 || (i + 1..n).all(|j| m & (1 << j) == 0 || a[i][j]))
    };
    let mut out = BTreeSet::new();
    for m in 1u32..(1 << n) {
        if !is_clique(m) {
            continue;
        }
        let maximal = (0..n).all(|v| m & (1 << v) != 0 || !is_clique(m | (1 << v)));
        if maximal {
            out.insert((0..n).filter(|i| m & (1 << i) != 0).collect());
        }
    }
    out
}

/// Maximal vertex sets with pairwise distance at most `k` in `a`.
pub fn subset_n_cliques(a: &Adj, k: usize) -> BTreeSet<Vec<usize>> {
    let d = floyd_warshall(a);
    let n = a.len();
    let close: Adj = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| i != j && d[i][j].is_some_and(|x| x <= k))
                .collect()
        })
        .collect();
    subset_maximal_cliques(&close)
}

pub fn as_indices(cs: &CliqueSet) -> BTreeSet<Vec<usize>> {
    cs.cliques
        .iter()
        .map(|c| c.iter().map(|v| v.as_str()[1..].parse().unwrap()).collect())
        .collect()
}

pub fn clique_set(sets: &[Vec<&str>]) -> CliqueSet {
    CliqueSet::new(
        CliqueKind::MaximalClique,
        sets.iter()
            .map(|s| s.iter().map(|m| NodeId::new(*m).unwrap()).collect())
            .collect(),
    )
}

/// Freeman betweenness of `v`: every shortest path between every other
/// pair is enumerated explicitly.
pub fn path_betweenness(a: &Adj, v: usize) -> f64 {
    let n = a.len();
    let mut total = 0.0;
    for s in 0..n {
        for t in s + 1..n {
            if s == v || t == v {
                continue;
            }
            let paths = shortest_paths(a, s, t);
            if paths.is_empty() {
                continue;
            }
            let through = paths.iter().filter(|p| p.contains(&v)).count();
            total += through as f64 / paths.len() as f64;
        }
    }
    total
}

fn shortest_paths(a: &Adj, s: usize, t: usize) -> Vec<Vec<usize>> {
    let mut found: Vec<Vec<usize>> = Vec::new();
    let mut best = usize::MAX;
    let mut queue = VecDeque::from([vec![s]]);
    while let Some(path) = queue.pop_front() {
        if path.len() > best {
            break;
        }
        let last = *path.last().unwrap();
        if last == t {
            best = path.len();
            found.push(path);
            continue;
        }
        for next in 0..a.len() {
            if a[last][next] && !path.contains(&next) {
                let mut p = path.clone();
                p.push(next);
                queue.push_back(p);
            }
        }
    }
    found
}

/// Ego 0 tied to `alters` nodes, alter pairs tied with probability `density`.
pub fn random_ego_adj(alters: usize, density: f64, rng: &mut ChaCha8Rng) -> Adj {
    let mut a = random_adj(alters + 1, density, rng);
    for j in 1..=alters {
        a[0][j] = true;
        a[j][0] = true;
    }
    a
}

/// Mann-Whitney z² with tie-corrected variance, from pairwise comparisons.
pub fn mann_whitney_z2(x: &[f64], y: &[f64]) -> f64 {
    let mut u = 0.0;
    for a in x {
        for b in y {
            u += if a > b {
                1.0
            } else if a == b {
                0.5
            } else {
                0.0
            };
        }
    }
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    let n = n1 + n2;
    let mut all: Vec<f64> = x.iter().chain(y).copied().collect();
    all.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut i = 0;
    while i < all.len() {
        let j = (i..all.len())
            .find(|&j| all[j] != all[i])
            .unwrap_or(all.len());
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    let var = n1 * n2 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    let z = (u - n1 * n2 / 2.0) / var.sqrt();
    z * z
}

pub fn read_fixture_cliques(text: &str) -> Vec<Vec<&str>> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| l.split(',').collect())
        .collect()
}

pub const AGENCY_CLIQUES: &str = include_str!("../fixtures/agency_cliques.txt");
