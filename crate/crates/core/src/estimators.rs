//! Unadjusted and subsample-adjusted linkage-rate estimators.
//!
//! For an ordered pair `(r, s)` and an observed sample `S_n`:
//!
//! - `v_i = 1` when sampled node `i` of group `r` has an edge into `S_n(s)`;
//!   `θ̃ = mean(v)` is the unadjusted rate.
//! - A subsample `S_m ⊂ S_n` drawn with the same proportions recapitulates
//!   the original sampling; `ṽ_i = 1` when `i ∈ S_m(r)` has an edge into
//!   `S_m(s)`, and `ũ_i = 1` when it has one into `S_n(s)`.
//! - γ̂ = (γ̂₁, γ̂₂, γ̂₃) averages `ṽ`, `ũ` and `v` over the subsample space;
//!   π̂ = γ̂₁/γ̂₂ estimates the detection probability and θ̂ = γ̂₃/π̂.
//!
//! `ũ` and `v` are both "has an edge into `S_n(s)`", so γ̂₂ and γ̂₃ coincide
//! and neither depends on the subsample; both are computed directly as
//! full-sample means. Only γ̂₁ needs the subsample space, either walked
//! exhaustively or sampled by Monte Carlo.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{GroupId, GroupedNetwork, NodeId, Within};
use crate::rng::stream_rng;
use crate::sampling::{LocalPairWalk, PairShape, SampleIndex, ENUMERATION_GUARD};
use crate::variance::{self, SizeInfo};

pub const DEFAULT_MC_REPLICATES: usize = 2000;
/// The automatic backend enumerates when the pair space is at most this large.
pub const AUTO_EXACT_LIMIT: u128 = 100_000;
/// Monte Carlo runs with fewer replicates carry a warning flag.
pub const LOW_REPLICATES: usize = 100;

const MC_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Backend {
    /// Walk every subsample pair; fails above the enumeration guard.
    Exact,
    MonteCarlo { replicates: usize, seed: u64 },
    /// Exact when the space has at most [`AUTO_EXACT_LIMIT`] pairs.
    Auto { replicates: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendUsed {
    Exact { pairs: u128 },
    MonteCarlo { replicates: usize },
}

/// γ̂ with the per-node tallies the projection variance needs.
#[derive(Debug, Clone)]
pub struct GammaEstimate {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub shape: PairShape,
    /// `S_n(r)` in the order of every per-node vector below.
    pub nodes: Vec<NodeId>,
    /// Sum of `ṽ_i` over processed pairs whose `r` side contains `i`.
    pub v_tilde_sum: Vec<u64>,
    /// Number of processed pairs whose `r` side contains `i`.
    pub inclusions: Vec<u64>,
    pub u_tilde: Vec<bool>,
    pub v: Vec<bool>,
    pub backend: BackendUsed,
    pub low_replicates: bool,
}

impl GammaEstimate {
    pub fn as_array(&self) -> [f64; 3] {
        [self.gamma1, self.gamma2, self.gamma3]
    }

    /// Mean of `ṽ_i` over the pairs that include node `i` (by position).
    pub fn v_tilde_mean(&self, k: usize) -> Option<f64> {
        (self.inclusions[k] > 0).then(|| self.v_tilde_sum[k] as f64 / self.inclusions[k] as f64)
    }
}

/// Sampled `r` nodes with their neighbours inside `S_n(s)` as local positions.
struct PairContext {
    nodes: Vec<NodeId>,
    nbrs: Vec<Vec<u32>>,
}

impl PairContext {
    fn new(net: &GroupedNetwork, sample: &SampleIndex, r: GroupId, s: GroupId) -> Result<Self> {
        let mut pos = vec![u32::MAX; net.num_nodes()];
        for (k, &j) in sample.group(s).iter().enumerate() {
            pos[j] = k as u32;
        }
        let nodes = sample.group(r).to_vec();
        let nbrs = nodes
            .iter()
            .map(|&i| {
                Ok(net
                    .neighbors_in(i, s)?
                    .iter()
                    .map(|&j| pos[j])
                    .filter(|&k| k != u32::MAX)
                    .collect())
            })
            .collect::<Result<_>>()?;
        Ok(Self { nodes, nbrs })
    }
}

#[derive(Clone)]
struct Tally {
    hits: u64,
    v_tilde_sum: Vec<u64>,
    inclusions: Vec<u64>,
}

impl Tally {
    fn new(n_r: usize) -> Self {
        Self {
            hits: 0,
            v_tilde_sum: vec![0; n_r],
            inclusions: vec![0; n_r],
        }
    }

    fn record(&mut self, ctx: &PairContext, marked: &mut [bool], r_side: &[usize], s_side: &[usize]) {
        for &k in s_side {
            marked[k] = true;
        }
        for &i in r_side {
            self.inclusions[i] += 1;
            if ctx.nbrs[i].iter().any(|&k| marked[k as usize]) {
                self.hits += 1;
                self.v_tilde_sum[i] += 1;
            }
        }
        for &k in s_side {
            marked[k] = false;
        }
    }

    fn merge(mut self, other: &Tally) -> Self {
        self.hits += other.hits;
        for (a, b) in self.v_tilde_sum.iter_mut().zip(&other.v_tilde_sum) {
            *a += b;
        }
        for (a, b) in self.inclusions.iter_mut().zip(&other.inclusions) {
            *a += b;
        }
        self
    }
}

fn tally_exact(ctx: &PairContext, shape: PairShape) -> Tally {
    let mut tally = Tally::new(shape.n_r);
    let mut marked = vec![false; shape.n_s];
    let mut walk = LocalPairWalk::new(shape);
    while walk.advance() {
        tally.record(ctx, &mut marked, walk.r_side(), walk.s_side());
    }
    tally
}

fn tally_monte_carlo(ctx: &PairContext, shape: PairShape, replicates: usize, seed: u64) -> Tally {
    // Integer tallies make the reduction order-independent, so batches may
    // run in any schedule and still match a sequential pass bit for bit.
    let batches: Vec<Tally> = (0..replicates.div_ceil(MC_BATCH))
        .into_par_iter()
        .map(|batch| {
            let mut tally = Tally::new(shape.n_r);
            let mut marked = vec![false; shape.n_s];
            let lo = batch * MC_BATCH;
            for b in lo..(lo + MC_BATCH).min(replicates) {
                let (a, c) = shape.draw_local(&mut stream_rng(seed, b as u64));
                tally.record(ctx, &mut marked, &a, &c);
            }
            tally
        })
        .collect();
    batches
        .iter()
        .fold(Tally::new(shape.n_r), |acc, t| acc.merge(t))
}

/// γ̂ for the ordered pair `(r, s)`, subsampling with the sample's own proportions.
pub fn gamma_hat(
    net: &GroupedNetwork,
    sample: &SampleIndex,
    r: GroupId,
    s: GroupId,
    backend: Backend,
) -> Result<GammaEstimate> {
    let shape = PairShape::new(sample, sample.proportions(), r, s)?;
    if shape.m_r == 0 {
        return Err(Error::Input(format!("group {} has no sampled nodes", r + 1)));
    }
    if shape.m_s == 0 {
        return Err(Error::Input(format!("group {} has no sampled nodes", s + 1)));
    }
    let ctx = PairContext::new(net, sample, r, s)?;
    let count = shape.count();
    let exact = match backend {
        Backend::Exact if count > ENUMERATION_GUARD => {
            return Err(Error::CombinatorialGuard {
                count,
                limit: ENUMERATION_GUARD,
            })
        }
        Backend::Exact => true,
        Backend::Auto { .. } => count <= AUTO_EXACT_LIMIT,
        Backend::MonteCarlo { .. } => false,
    };
    let (tally, used, processed) = if exact {
        (
            tally_exact(&ctx, shape),
            BackendUsed::Exact { pairs: count },
            count as f64,
        )
    } else {
        let (replicates, seed) = match backend {
            Backend::MonteCarlo { replicates, seed } | Backend::Auto { replicates, seed } => {
                (replicates, seed)
            }
            Backend::Exact => unreachable!(),
        };
        if replicates == 0 {
            return Err(Error::Input("Monte Carlo needs at least one replicate".into()));
        }
        (
            tally_monte_carlo(&ctx, shape, replicates, seed),
            BackendUsed::MonteCarlo { replicates },
            replicates as f64,
        )
    };

    let u_tilde: Vec<bool> = ctx.nbrs.iter().map(|l| !l.is_empty()).collect();
    let v: Vec<bool> = ctx
        .nodes
        .iter()
        .map(|&i| net.linkage_indicator(i, s, Within::Subset(sample.view())))
        .collect::<Result<_>>()?;
    let n_r = shape.n_r as f64;
    let low_replicates = matches!(used, BackendUsed::MonteCarlo { replicates } if replicates < LOW_REPLICATES);
    Ok(GammaEstimate {
        gamma1: tally.hits as f64 / (shape.m_r as f64 * processed),
        gamma2: u_tilde.iter().filter(|&&x| x).count() as f64 / n_r,
        gamma3: v.iter().filter(|&&x| x).count() as f64 / n_r,
        shape,
        nodes: ctx.nodes,
        v_tilde_sum: tally.v_tilde_sum,
        inclusions: tally.inclusions,
        u_tilde,
        v,
        backend: used,
        low_replicates,
    })
}

/// Fraction of sampled `r` nodes with an observed edge into `S_n(s)`.
pub fn unadjusted_theta(
    net: &GroupedNetwork,
    sample: &SampleIndex,
    r: GroupId,
    s: GroupId,
) -> Result<f64> {
    if s >= sample.num_groups() {
        return Err(Error::UnknownGroup(s));
    }
    let nodes = sample.group(r);
    if nodes.is_empty() {
        return Err(Error::Input(format!("group {} has no sampled nodes", r + 1)));
    }
    let mut linked = 0usize;
    for &i in nodes {
        if net.linkage_indicator(i, s, Within::Subset(sample.view()))? {
            linked += 1;
        }
    }
    Ok(linked as f64 / nodes.len() as f64)
}

/// π̂ = γ̂₁/γ̂₂, or `None` when no sampled `r` node has an observed link.
pub fn pi_hat(g: &GammaEstimate) -> Option<f64> {
    (g.gamma2 > 0.0).then(|| g.gamma1 / g.gamma2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointEstimate {
    pub theta_unadjusted: f64,
    pub pi_hat: Option<f64>,
    pub theta_adjusted: Option<f64>,
    pub clipped: bool,
    pub degenerate_pi: bool,
}

impl PointEstimate {
    pub fn from_gamma(g: &GammaEstimate) -> Self {
        let pi = pi_hat(g);
        let (theta_adjusted, clipped, degenerate_pi) = match pi {
            Some(p) if p > 0.0 => {
                let raw = variance::theta_of([g.gamma1, g.gamma2, g.gamma3]);
                (Some(raw.min(1.0)), raw > 1.0, false)
            }
            _ => (None, false, true),
        };
        Self {
            theta_unadjusted: g.gamma3,
            pi_hat: pi,
            theta_adjusted,
            clipped,
            degenerate_pi,
        }
    }
}

/// θ̂ = γ̂₃/π̂ = γ̂₂γ̂₃/γ̂₁, clipped to 1 with a flag.
pub fn adjusted_theta(
    net: &GroupedNetwork,
    sample: &SampleIndex,
    r: GroupId,
    s: GroupId,
    backend: Backend,
) -> Result<PointEstimate> {
    Ok(PointEstimate::from_gamma(&gamma_hat(net, sample, r, s, backend)?))
}

/// Limit of the detection probability: `Σ_d (1 - (1 - p_s)^d) P(D = d | D >= 1)`.
pub fn pi_limit(cond_law: &[(usize, f64)], p_s: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_s) {
        return Err(Error::Input(format!("p_s {p_s} outside [0, 1]")));
    }
    let total: f64 = cond_law.iter().map(|&(_, q)| q).sum();
    if (total - 1.0).abs() > 1e-9 || cond_law.iter().any(|&(d, q)| d == 0 || q < 0.0) {
        return Err(Error::Input(format!(
            "conditional degree law must be supported on d >= 1 and sum to 1 (sums to {total})"
        )));
    }
    Ok(cond_law
        .iter()
        .map(|&(d, q)| (1.0 - (1.0 - p_s).powi(d as i32)) * q)
        .sum())
}

#[derive(Debug, Clone)]
pub struct EstimateOptions {
    pub backend: Backend,
    pub ci_level: f64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            backend: Backend::Auto {
                replicates: DEFAULT_MC_REPLICATES,
                seed: 0,
            },
            ci_level: 0.95,
        }
    }
}

/// Everything reported for one ordered pair.
#[derive(Debug, Clone, Serialize)]
pub struct ThetaReport {
    pub r: usize,
    pub s: usize,
    pub group_r: String,
    pub group_s: String,
    pub theta_unadjusted: f64,
    pub pi_hat: Option<f64>,
    pub theta_adjusted: Option<f64>,
    pub gamma: [f64; 3],
    pub n_r: usize,
    pub n_s: usize,
    pub n_rs: usize,
    pub m_r: usize,
    pub m_s: usize,
    pub population_r: usize,
    pub population_s: usize,
    pub se_adjusted: Option<f64>,
    pub se_unadjusted: Option<f64>,
    pub ci_level: f64,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub backend: BackendUsed,
    pub degenerate_pi: bool,
    pub clipped: bool,
    pub guard_triggered: bool,
    pub low_replicates: bool,
    pub low_inclusion: bool,
}

impl ThetaReport {
    pub fn status(&self) -> String {
        let mut flags = Vec::new();
        if self.degenerate_pi {
            flags.push("degenerate_pi");
        }
        if self.clipped {
            flags.push("clipped");
        }
        if self.guard_triggered {
            flags.push("guard_triggered");
        }
        if self.low_replicates {
            flags.push("low_replicates");
        }
        if self.low_inclusion {
            flags.push("low_inclusion");
        }
        if flags.is_empty() {
            "ok".into()
        } else {
            flags.join("|")
        }
    }
}

/// Point estimates, standard errors and interval for `(r, s)`.
///
/// An exact backend that hits the enumeration guard falls back to Monte
/// Carlo with the default replicate count and seed 0, and sets
/// `guard_triggered`.
pub fn estimate_pair(
    net: &GroupedNetwork,
    sample: &SampleIndex,
    r: GroupId,
    s: GroupId,
    opts: &EstimateOptions,
) -> Result<ThetaReport> {
    let (g, guard_triggered) = match gamma_hat(net, sample, r, s, opts.backend) {
        Err(Error::CombinatorialGuard { .. }) => (
            gamma_hat(
                net,
                sample,
                r,
                s,
                Backend::MonteCarlo {
                    replicates: DEFAULT_MC_REPLICATES,
                    seed: 0,
                },
            )?,
            true,
        ),
        other => (other?, false),
    };
    let point = PointEstimate::from_gamma(&g);
    let sizes = SizeInfo {
        population_r: sample.population_sizes()[r],
        n_r: g.shape.n_r,
        population_s: sample.population_sizes()[s],
        n_s: g.shape.n_s,
        same_group: r == s,
    };
    let proj = variance::projections(&g);
    let se_adjusted = if point.degenerate_pi || sizes.n_r < 2 {
        None
    } else {
        let sigma = variance::sigma_gamma(&proj, &sizes)?;
        Some(variance::delta_method(g.as_array(), &sigma)?.se)
    };
    let se_unadjusted = if sizes.n_r < 2 {
        None
    } else {
        Some(variance::unadjusted_se(&g.v, &sizes)?)
    };
    let (ci_lo, ci_hi) = match (point.theta_adjusted, se_adjusted) {
        (Some(t), Some(se)) => {
            let (lo, hi) = variance::confidence_interval(t, se, opts.ci_level)?;
            (Some(lo), Some(hi))
        }
        _ => (None, None),
    };
    let names = net.group_names();
    Ok(ThetaReport {
        r: r + 1,
        s: s + 1,
        group_r: names[r].clone(),
        group_s: names[s].clone(),
        theta_unadjusted: point.theta_unadjusted,
        pi_hat: point.pi_hat,
        theta_adjusted: point.theta_adjusted,
        gamma: g.as_array(),
        n_r: sizes.n_r,
        n_s: sizes.n_s,
        n_rs: sizes.n_rs(),
        m_r: g.shape.m_r,
        m_s: g.shape.m_s,
        population_r: sizes.population_r,
        population_s: sizes.population_s,
        se_adjusted,
        se_unadjusted,
        ci_level: opts.ci_level,
        ci_lo,
        ci_hi,
        backend: g.backend,
        degenerate_pi: point.degenerate_pi,
        clipped: point.clipped,
        guard_triggered,
        low_replicates: g.low_replicates,
        low_inclusion: proj.low_inclusion,
    })
}
