#![allow(dead_code)]

use std::path::PathBuf;

/// Literal enumeration of every subsample pair, written against a plain
/// adjacency matrix so it shares no code with the library.
pub struct BruteForce {
    pub gamma1: f64,
    /// `ĥ¹` for each node of `sample_r`, in the given order.
    pub h1: Vec<f64>,
}

/// All `k`-subsets of `0..n` as index vectors, in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize == k {
            out.push((0..n).filter(|&i| mask & (1 << i) != 0).collect());
        }
    }
    out
}

pub fn brute_force(
    adj: &[Vec<bool>],
    sample_r: &[usize],
    sample_s: &[usize],
    m_r: usize,
    m_s: usize,
    same_group: bool,
) -> BruteForce {
    let n_r = sample_r.len();
    let subs_r = subsets(n_r, m_r);
    let subs_s = if same_group { vec![Vec::new()] } else { subsets(sample_s.len(), m_s) };
    let mut total = 0.0;
    let mut pairs = 0.0;
    let mut node_sum = vec![0.0; n_r];
    let mut node_count = vec![0.0; n_r];
    for a in &subs_r {
        for b in &subs_s {
            let targets: Vec<usize> = if same_group {
                a.iter().map(|&k| sample_r[k]).collect()
            } else {
                b.iter().map(|&k| sample_s[k]).collect()
            };
            let mut hits = 0.0;
            for &k in a {
                let i = sample_r[k];
                let v = targets.iter().any(|&j| j != i && adj[i][j]);
                if v {
                    hits += 1.0;
                    node_sum[k] += 1.0;
                }
                node_count[k] += 1.0;
            }
            total += hits / m_r as f64;
            pairs += 1.0;
        }
    }
    let gamma1 = total / pairs;
    let h1 = (0..n_r)
        .map(|k| node_sum[k] / node_count[k] / n_r as f64 + (n_r as f64 - 1.0) / n_r as f64 * gamma1)
        .collect();
    BruteForce { gamma1, h1 }
}

pub fn adjacency(num_nodes: usize, edges: &[(usize, usize)]) -> Vec<Vec<bool>> {
    let mut adj = vec![vec![false; num_nodes]; num_nodes];
    for &(a, b) in edges {
        adj[a][b] = true;
        adj[b][a] = true;
    }
    adj
}

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}
