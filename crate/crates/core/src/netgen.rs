//! Grouped network generator with zero-inflated truncated power-law blocks.
//!
//! Each node `i` of group `r` draws a target degree into every group `s`
//! from the block law `(r, s)`. Within-group stubs are paired uniformly at
//! random; cross-group stubs from the two sides are matched uniformly after
//! the two lists are equalised. The longer side loses repeat stubs (never a
//! node's last one) down to the shorter length; if that is not enough, the
//! shorter side is padded with copies of its own stubs, so that neither side
//! gains or loses linked nodes. Self-loops and repeated pairs are rejected; a stub that fails to find a partner in
//! `max_match_attempts` draws is discarded.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GroupedNetwork, NodeId};

/// `P(k) = p_zero` at `k = 0`, `c_norm * k^-alpha` for `1 <= k <= k_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLaw", into = "RawLaw")]
pub struct DegreeLawSpec {
    p_zero: f64,
    alpha: f64,
    k_max: usize,
    // cumulative mass over k = 0..=k_max, last entry pinned to 1
    cdf: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLaw {
    p_zero: f64,
    alpha: f64,
    #[serde(default = "default_k_max")]
    k_max: usize,
}

pub const DEFAULT_K_MAX: usize = 50;

fn default_k_max() -> usize {
    DEFAULT_K_MAX
}

impl TryFrom<RawLaw> for DegreeLawSpec {
    type Error = Error;
    fn try_from(raw: RawLaw) -> Result<Self> {
        DegreeLawSpec::new(raw.p_zero, raw.alpha, raw.k_max)
    }
}

impl From<DegreeLawSpec> for RawLaw {
    fn from(law: DegreeLawSpec) -> Self {
        RawLaw {
            p_zero: law.p_zero,
            alpha: law.alpha,
            k_max: law.k_max,
        }
    }
}

impl DegreeLawSpec {
    pub fn new(p_zero: f64, alpha: f64, k_max: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_zero) {
            return Err(Error::Config(format!("p_zero {p_zero} outside [0, 1]")));
        }
        if !(alpha > 1.0) || !alpha.is_finite() {
            return Err(Error::Config(format!("alpha {alpha} must be finite and > 1")));
        }
        if k_max == 0 {
            return Err(Error::Config("k_max must be >= 1".into()));
        }
        let z: f64 = (1..=k_max).map(|k| (k as f64).powf(-alpha)).sum();
        let c_norm = (1.0 - p_zero) / z;
        let mut cdf = Vec::with_capacity(k_max + 1);
        let mut acc = p_zero;
        cdf.push(acc);
        for k in 1..=k_max {
            acc += c_norm * (k as f64).powf(-alpha);
            cdf.push(acc);
        }
        *cdf.last_mut().unwrap() = 1.0;
        Ok(Self {
            p_zero,
            alpha,
            k_max,
            cdf,
        })
    }

    pub fn p_zero(&self) -> f64 {
        self.p_zero
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Normaliser of the power-law part: `(1 - p_zero) / sum k^-alpha`.
    pub fn c_norm(&self) -> f64 {
        let z: f64 = (1..=self.k_max)
            .map(|k| (k as f64).powf(-self.alpha))
            .sum();
        (1.0 - self.p_zero) / z
    }

    pub fn pmf(&self, k: usize) -> f64 {
        match k {
            0 => self.p_zero,
            k if k <= self.k_max => self.c_norm() * (k as f64).powf(-self.alpha),
            _ => 0.0,
        }
    }

    pub fn mean(&self) -> f64 {
        let c = self.c_norm();
        (1..=self.k_max)
            .map(|k| k as f64 * c * (k as f64).powf(-self.alpha))
            .sum()
    }

    /// `P(D = k | D >= 1)` for `k = 1..=k_max`.
    pub fn conditional_law(&self) -> Vec<(usize, f64)> {
        let z: f64 = (1..=self.k_max)
            .map(|k| (k as f64).powf(-self.alpha))
            .sum();
        (1..=self.k_max)
            .map(|k| (k, (k as f64).powf(-self.alpha) / z))
            .collect()
    }

    /// Inverse-CDF draw over the precomputed mass table.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c <= u).min(self.k_max)
    }
}

/// Free-function form of [`DegreeLawSpec::sample`].
pub fn sample_degree<R: Rng + ?Sized>(spec: &DegreeLawSpec, rng: &mut R) -> usize {
    spec.sample(rng)
}

/// `w x w` grid of block laws; entry `(r, s)` governs `P(D_ri^s = k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<DegreeLawSpec>>", into = "Vec<Vec<DegreeLawSpec>>")]
pub struct BlockDegreeMatrix {
    laws: Vec<Vec<DegreeLawSpec>>,
}

impl TryFrom<Vec<Vec<DegreeLawSpec>>> for BlockDegreeMatrix {
    type Error = Error;
    fn try_from(laws: Vec<Vec<DegreeLawSpec>>) -> Result<Self> {
        BlockDegreeMatrix::new(laws)
    }
}

impl From<BlockDegreeMatrix> for Vec<Vec<DegreeLawSpec>> {
    fn from(m: BlockDegreeMatrix) -> Self {
        m.laws
    }
}

impl BlockDegreeMatrix {
    pub fn new(laws: Vec<Vec<DegreeLawSpec>>) -> Result<Self> {
        let w = laws.len();
        if w == 0 || laws.iter().any(|row| row.len() != w) {
            return Err(Error::Config(
                "degree_laws must be a non-empty square matrix".into(),
            ));
        }
        Ok(Self { laws })
    }

    pub fn single(law: DegreeLawSpec) -> Self {
        Self {
            laws: vec![vec![law]],
        }
    }

    pub fn num_groups(&self) -> usize {
        self.laws.len()
    }

    pub fn get(&self, r: usize, s: usize) -> &DegreeLawSpec {
        &self.laws[r][s]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GeneratorOptions {
    /// Largest tolerated `|T_rs - T_sr| / max(T_rs, T_sr)` between the
    /// expected stub totals of the two sides of a cross-group block.
    pub stub_balance_tolerance: f64,
    pub max_match_attempts: usize,
}

impl Default for GeneratorOptions {
    fn default() -> Self {
        Self {
            stub_balance_tolerance: 0.35,
            max_match_attempts: 100,
        }
    }
}

/// Per-block bookkeeping from one generation run.
#[derive(Debug, Clone, Serialize)]
pub struct BlockReport {
    pub r: usize,
    pub s: usize,
    /// Stubs drawn on the `r` side towards `s`.
    pub stubs_drawn: usize,
    pub stubs_trimmed: usize,
    /// Copies of existing stubs added to balance the opposite side.
    pub stubs_padded: usize,
    pub stubs_discarded: usize,
    /// Fraction of group-`r` nodes with no neighbour in group `s`.
    pub realized_zero_fraction: f64,
    pub max_degree: usize,
    /// `max_degree / sqrt(N_rs)`.
    pub max_degree_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GenerationReport {
    pub blocks: Vec<BlockReport>,
}

/// [`generate_network_with`] under default options, dropping the report.
pub fn generate_network<R: Rng + ?Sized>(
    specs: &BlockDegreeMatrix,
    sizes: &[usize],
    rng: &mut R,
) -> Result<GroupedNetwork> {
    generate_network_with(specs, sizes, &GeneratorOptions::default(), rng).map(|(net, _)| net)
}

pub fn generate_network_with<R: Rng + ?Sized>(
    specs: &BlockDegreeMatrix,
    sizes: &[usize],
    opts: &GeneratorOptions,
    rng: &mut R,
) -> Result<(GroupedNetwork, GenerationReport)> {
    let w = specs.num_groups();
    if sizes.len() != w {
        return Err(Error::Config(format!(
            "{} group sizes for a {w}x{w} degree-law matrix",
            sizes.len()
        )));
    }
    if let Some(g) = sizes.iter().position(|&n| n < 2) {
        return Err(Error::Config(format!("group {} has fewer than 2 nodes", g + 1)));
    }
    for r in 0..w {
        for s in r + 1..w {
            let t_r = sizes[r] as f64 * specs.get(r, s).mean();
            let t_s = sizes[s] as f64 * specs.get(s, r).mean();
            let big = t_r.max(t_s);
            let gap = if big > 0.0 { (t_r - t_s).abs() / big } else { 0.0 };
            if gap > opts.stub_balance_tolerance {
                return Err(Error::StubImbalance {
                    r: r + 1,
                    s: s + 1,
                    total_r: t_r,
                    total_s: t_s,
                    gap,
                    tolerance: opts.stub_balance_tolerance,
                });
            }
        }
    }

    let mut group_of = Vec::with_capacity(sizes.iter().sum());
    let mut offsets = Vec::with_capacity(w);
    for (g, &n) in sizes.iter().enumerate() {
        offsets.push(group_of.len());
        group_of.extend(std::iter::repeat_n(g, n));
    }
    let members = |g: usize| offsets[g]..offsets[g] + sizes[g];

    // targets[r][s][k]: target degree of the k-th node of group r into s
    let mut targets = vec![vec![Vec::new(); w]; w];
    for r in 0..w {
        for _ in members(r) {
            for s in 0..w {
                targets[r][s].push(specs.get(r, s).sample(rng));
            }
        }
    }

    let mut adj: Vec<Vec<NodeId>> = vec![Vec::new(); group_of.len()];
    let mut edges = Vec::new();
    let mut trimmed = vec![vec![0usize; w]; w];
    let mut padded = vec![vec![0usize; w]; w];
    let mut discarded = vec![vec![0usize; w]; w];

    for r in 0..w {
        let stubs = expand_stubs(members(r), &targets[r][r]);
        discarded[r][r] = pair_within(stubs, &mut adj, &mut edges, opts.max_match_attempts, rng);
        for s in r + 1..w {
            let mut a = expand_stubs(members(r), &targets[r][s]);
            let mut b = expand_stubs(members(s), &targets[s][r]);
            if a.len() > b.len() {
                (trimmed[r][s], padded[s][r]) = balance_stubs(&mut a, &mut b, rng);
            } else {
                (trimmed[s][r], padded[r][s]) = balance_stubs(&mut b, &mut a, rng);
            }
            let (lost_a, lost_b) =
                pair_across(a, b, &mut adj, &mut edges, opts.max_match_attempts, rng);
            discarded[r][s] = lost_a;
            discarded[s][r] = lost_b;
        }
    }

    let net = GroupedNetwork::new(w, group_of, edges)?;
    let mut blocks = Vec::with_capacity(w * w);
    for r in 0..w {
        for s in 0..w {
            let nodes = net.group_members(r)?;
            let zero = nodes
                .iter()
                .filter(|&&i| adj_is_empty(&net, i, s))
                .count();
            let max_degree = net.max_degree_between(r, s)?;
            let n_rs = if r == s { sizes[r] } else { sizes[r] + sizes[s] };
            blocks.push(BlockReport {
                r: r + 1,
                s: s + 1,
                stubs_drawn: targets[r][s].iter().sum(),
                stubs_trimmed: trimmed[r][s],
                stubs_padded: padded[r][s],
                stubs_discarded: discarded[r][s],
                realized_zero_fraction: zero as f64 / nodes.len() as f64,
                max_degree,
                max_degree_ratio: max_degree as f64 / (n_rs as f64).sqrt(),
            });
        }
    }
    Ok((net, GenerationReport { blocks }))
}

/// Single-group network whose degree law is `(p_zero, alpha, k_max)`.
pub fn generate_scale_free<R: Rng + ?Sized>(
    n: usize,
    alpha: f64,
    p_zero: f64,
    k_max: usize,
    rng: &mut R,
) -> Result<GroupedNetwork> {
    let law = DegreeLawSpec::new(p_zero, alpha, k_max)?;
    generate_network(&BlockDegreeMatrix::single(law), &[n], rng)
}

fn adj_is_empty(net: &GroupedNetwork, i: NodeId, s: usize) -> bool {
    net.neighbors_in(i, s).map(<[_]>::is_empty).unwrap_or(true)
}

fn expand_stubs(nodes: std::ops::Range<NodeId>, degrees: &[usize]) -> Vec<NodeId> {
    nodes
        .zip(degrees)
        .flat_map(|(node, &d)| std::iter::repeat_n(node, d))
        .collect()
}

/// Equalise `long` and `short` (`long.len() >= short.len()`). Returns
/// `(trimmed from long, padded onto short)`.
fn balance_stubs<R: Rng + ?Sized>(
    long: &mut Vec<NodeId>,
    short: &mut Vec<NodeId>,
    rng: &mut R,
) -> (usize, usize) {
    if short.is_empty() {
        let n = long.len();
        long.clear();
        return (n, 0);
    }
    let distinct = 1 + long.windows(2).filter(|w| w[0] != w[1]).count();
    let target = short.len().max(distinct.min(long.len()));
    let trimmed = trim_stubs(long, target, rng);
    let pad = target - short.len();
    for _ in 0..pad {
        let copy = short[rng.random_range(0..short.len())];
        short.push(copy);
    }
    (trimmed, pad)
}

/// Remove random stubs until `keep` remain. Surplus stubs (all but one per
/// node) go first, so a node only loses its last stub once no node has two.
fn trim_stubs<R: Rng + ?Sized>(stubs: &mut Vec<NodeId>, keep: usize, rng: &mut R) -> usize {
    let excess = stubs.len() - keep;
    if excess == 0 {
        return 0;
    }
    // stubs arrive grouped by node; index the repeats after the first
    let mut surplus: Vec<usize> = (1..stubs.len())
        .filter(|&k| stubs[k] == stubs[k - 1])
        .collect();
    let mut drop = vec![false; stubs.len()];
    let from_surplus = excess.min(surplus.len());
    for k in 0..from_surplus {
        let j = rng.random_range(k..surplus.len());
        surplus.swap(k, j);
        drop[surplus[k]] = true;
    }
    let mut rest: Vec<usize> = (0..stubs.len()).filter(|&k| !drop[k]).collect();
    for k in 0..excess - from_surplus {
        let j = rng.random_range(k..rest.len());
        rest.swap(k, j);
        drop[rest[k]] = true;
    }
    let mut k = 0;
    stubs.retain(|_| {
        k += 1;
        !drop[k - 1]
    });
    excess
}

fn link(adj: &mut [Vec<NodeId>], edges: &mut Vec<(NodeId, NodeId)>, a: NodeId, b: NodeId) {
    adj[a].push(b);
    adj[b].push(a);
    edges.push((a, b));
}

fn pair_within<R: Rng + ?Sized>(
    mut stubs: Vec<NodeId>,
    adj: &mut [Vec<NodeId>],
    edges: &mut Vec<(NodeId, NodeId)>,
    attempts: usize,
    rng: &mut R,
) -> usize {
    let mut lost = 0;
    while stubs.len() >= 2 {
        let a = stubs.swap_remove(rng.random_range(0..stubs.len()));
        let mut matched = false;
        for _ in 0..attempts {
            let j = rng.random_range(0..stubs.len());
            let b = stubs[j];
            if b != a && !adj[a].contains(&b) {
                stubs.swap_remove(j);
                link(adj, edges, a, b);
                matched = true;
                break;
            }
        }
        if !matched {
            lost += 1;
        }
    }
    lost + stubs.len()
}

fn pair_across<R: Rng + ?Sized>(
    mut a_stubs: Vec<NodeId>,
    mut b_stubs: Vec<NodeId>,
    adj: &mut [Vec<NodeId>],
    edges: &mut Vec<(NodeId, NodeId)>,
    attempts: usize,
    rng: &mut R,
) -> (usize, usize) {
    let mut lost_a = 0;
    while !a_stubs.is_empty() && !b_stubs.is_empty() {
        let a = a_stubs.swap_remove(rng.random_range(0..a_stubs.len()));
        let mut matched = false;
        for _ in 0..attempts {
            let j = rng.random_range(0..b_stubs.len());
            let b = b_stubs[j];
            if !adj[a].contains(&b) {
                b_stubs.swap_remove(j);
                link(adj, edges, a, b);
                matched = true;
                break;
            }
        }
        if !matched {
            lost_a += 1;
        }
    }
    (lost_a + a_stubs.len(), b_stubs.len())
}
