#![allow(dead_code)]

use mfcca::network::DistanceMatrix;
use mfcca::series::{Panel, PanelKind};
use mfcca::synth;
use rand::Rng;

pub fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("A{i:03}")).collect()
}

/// Symmetric matrix with i.i.d. uniform off-diagonal weights in `(0, 2)`.
pub fn random_distances(n: usize, seed: u64) -> DistanceMatrix {
    let mut r = synth::rng(seed, 7);
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let w: f64 = r.random_range(1e-6..2.0);
            v[i * n + j] = w;
            v[j * n + i] = w;
        }
    }
    DistanceMatrix::from_entries(ids(n), v).unwrap()
}

/// Kruskal with union-find, written separately from the library's Prim.
pub fn kruskal_weight(d: &DistanceMatrix) -> f64 {
    let n = d.n();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            edges.push((d.get(i, j), i, j));
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut total = 0.0;
    let mut used = 0;
    for (w, i, j) in edges {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a != b {
            parent[a] = b;
            total += w;
            used += 1;
            if used == n - 1 {
                break;
            }
        }
    }
    total
}

/// Minimum spanning-tree weight over every labeled tree, via Prüfer codes.
pub fn brute_force_weight(d: &DistanceMatrix) -> f64 {
    let n = d.n();
    let len = n - 2;
    let mut code = vec![0usize; len];
    let mut best = f64::INFINITY;
    loop {
        let mut degree = vec![1usize; n];
        for &c in &code {
            degree[c] += 1;
        }
        let mut w = 0.0;
        for &c in &code {
            let leaf = (0..n).find(|&i| degree[i] == 1).unwrap();
            w += d.get(leaf, c);
            degree[leaf] -= 1;
            degree[c] -= 1;
        }
        let rest: Vec<usize> = (0..n).filter(|&i| degree[i] == 1).collect();
        w += d.get(rest[0], rest[1]);
        best = best.min(w);

        let mut k = 0;
        loop {
            if k == len {
                return best;
            }
            code[k] += 1;
            if code[k] < n {
                break;
            }
            code[k] = 0;
            k += 1;
        }
    }
}

/// Returns panel where every asset follows `A000` with correlation `c`
/// inside `regime` and is independent noise elsewhere.
pub fn hub_panel(n: usize, len: usize, regime: std::ops::Range<usize>, c: f64, seed: u64) -> Panel {
    let hub = synth::iid_gaussian(len, seed);
    let mut cols = vec![hub.clone()];
    for k in 1..n {
        let noise = synth::iid_gaussian(len, seed.wrapping_add(1000 + k as u64));
        let mix = (1.0 - c * c).sqrt();
        cols.push((0..len).map(|t| if regime.contains(&t) { c * hub[t] + mix * noise[t] } else { noise[t] }).collect());
    }
    let grid = (0..len as i64).map(|t| t * 60_000).collect();
    Panel::new(ids(n), grid, cols, 60_000, PanelKind::Returns).unwrap()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
