//! MCAR node samples, nested subsamples and subsample-pair streams.
//!
//! Sizes follow the ceiling rule `|S(r)| = ceil(p_r * |parent(r)|)`. For a
//! pair `(r, s)` the subsample space is every `m_r`-subset of `S_n(r)` times
//! every `m_s`-subset of `S_n(s)`; when `r == s` a single subset plays both
//! roles.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{GroupId, GroupedNetwork, NodeId, NodeSubsetView};
use crate::rng::stream_rng;

/// Largest pair count [`enumerate_subsample_pairs`] will walk.
pub const ENUMERATION_GUARD: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Parent {
    Population,
    Sample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleIndex {
    view: NodeSubsetView,
    proportions: Vec<f64>,
    parent: Parent,
    parent_sizes: Vec<usize>,
    population_sizes: Vec<usize>,
}

/// `ceil(p * n)`, tolerant of representation error in `p * n`.
pub fn sample_size(p: f64, n: usize) -> usize {
    let raw = p * n as f64;
    ((raw - 1e-9).ceil().max(0.0) as usize).min(n)
}

fn check_proportions(p: &[f64], w: usize) -> Result<()> {
    if p.len() != w {
        return Err(Error::Input(format!(
            "{} sampling proportions for {w} groups",
            p.len()
        )));
    }
    if let Some((g, &bad)) = p.iter().enumerate().find(|(_, &x)| !(x > 0.0 && x <= 1.0)) {
        return Err(Error::Input(format!(
            "proportion {bad} for group {} outside (0, 1]",
            g + 1
        )));
    }
    Ok(())
}

fn draw_from<R: Rng + ?Sized>(
    pools: &[&[NodeId]],
    p: &[f64],
    rng: &mut R,
) -> Result<Vec<Vec<NodeId>>> {
    pools
        .iter()
        .zip(p)
        .enumerate()
        .map(|(g, (pool, &pr))| {
            if pool.is_empty() {
                return Err(Error::Input(format!(
                    "cannot sample from empty group {}",
                    g + 1
                )));
            }
            let k = sample_size(pr, pool.len());
            let mut picked: Vec<NodeId> = rand::seq::index::sample(rng, pool.len(), k)
                .into_iter()
                .map(|j| pool[j])
                .collect();
            picked.sort_unstable();
            Ok(picked)
        })
        .collect()
}

impl SampleIndex {
    /// Simple random sample without replacement of `ceil(p_r N_r)` nodes per group.
    pub fn draw<R: Rng + ?Sized>(net: &GroupedNetwork, p: &[f64], rng: &mut R) -> Result<Self> {
        check_proportions(p, net.num_groups())?;
        let pools: Vec<&[NodeId]> = (0..net.num_groups())
            .map(|g| net.group_members(g))
            .collect::<Result<_>>()?;
        let groups = draw_from(&pools, p, rng)?;
        Ok(Self {
            view: NodeSubsetView::new(net, groups)?,
            proportions: p.to_vec(),
            parent: Parent::Population,
            parent_sizes: net.group_sizes(),
            population_sizes: net.group_sizes(),
        })
    }

    /// Nested subsample of this sample, recapitulating the original draw.
    pub fn subsample<R: Rng + ?Sized>(
        &self,
        net: &GroupedNetwork,
        p: &[f64],
        rng: &mut R,
    ) -> Result<Self> {
        check_proportions(p, self.num_groups())?;
        let pools: Vec<&[NodeId]> = self.view.groups().iter().map(Vec::as_slice).collect();
        let groups = draw_from(&pools, p, rng)?;
        Ok(Self {
            view: NodeSubsetView::new(net, groups)?,
            proportions: p.to_vec(),
            parent: Parent::Sample,
            parent_sizes: self.sizes(),
            population_sizes: self.population_sizes.clone(),
        })
    }

    /// A sample given rather than drawn: `groups` were observed out of
    /// populations of `population_sizes`, with sampling proportions `p`.
    pub fn observed(
        net: &GroupedNetwork,
        groups: Vec<Vec<NodeId>>,
        p: &[f64],
        population_sizes: Vec<usize>,
    ) -> Result<Self> {
        check_proportions(p, net.num_groups())?;
        let view = NodeSubsetView::new(net, groups)?;
        if population_sizes.len() != net.num_groups() {
            return Err(Error::Input("population sizes do not match group count".into()));
        }
        for (g, (&n, &big_n)) in view.sizes().iter().zip(&population_sizes).enumerate() {
            if n > big_n {
                return Err(Error::Input(format!(
                    "group {}: sample of {n} exceeds population of {big_n}",
                    g + 1
                )));
            }
        }
        Ok(Self {
            view,
            proportions: p.to_vec(),
            parent: Parent::Population,
            parent_sizes: population_sizes.clone(),
            population_sizes,
        })
    }

    /// Every node of `net` taken as the observed sample.
    pub fn whole(net: &GroupedNetwork, p: &[f64], population_sizes: Vec<usize>) -> Result<Self> {
        let groups = (0..net.num_groups())
            .map(|g| net.group_members(g).map(<[_]>::to_vec))
            .collect::<Result<_>>()?;
        Self::observed(net, groups, p, population_sizes)
    }

    pub fn num_groups(&self) -> usize {
        self.proportions.len()
    }

    pub fn group(&self, g: GroupId) -> &[NodeId] {
        self.view.group(g)
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.view.sizes()
    }

    pub fn proportions(&self) -> &[f64] {
        &self.proportions
    }

    pub fn parent(&self) -> Parent {
        self.parent
    }

    pub fn parent_sizes(&self) -> &[usize] {
        &self.parent_sizes
    }

    /// Population group sizes `N_r`, carried through nested subsamples.
    pub fn population_sizes(&self) -> &[usize] {
        &self.population_sizes
    }

    pub fn view(&self) -> &NodeSubsetView {
        &self.view
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.view.contains(node)
    }
}

/// Sizes of the subsample space for one ordered pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PairShape {
    pub n_r: usize,
    pub m_r: usize,
    pub n_s: usize,
    pub m_s: usize,
    pub same_group: bool,
}

impl PairShape {
    pub fn new(sample: &SampleIndex, p: &[f64], r: GroupId, s: GroupId) -> Result<Self> {
        let w = sample.num_groups();
        if r >= w {
            return Err(Error::UnknownGroup(r));
        }
        if s >= w {
            return Err(Error::UnknownGroup(s));
        }
        check_proportions(p, w)?;
        let n_r = sample.group(r).len();
        let n_s = sample.group(s).len();
        Ok(Self {
            n_r,
            m_r: sample_size(p[r], n_r),
            n_s,
            m_s: sample_size(p[s], n_s),
            same_group: r == s,
        })
    }

    /// Number of subsample pairs; one subset per term when `r == s`.
    pub fn count(&self) -> u128 {
        let c_r = binomial(self.n_r, self.m_r);
        if self.same_group {
            c_r
        } else {
            c_r.saturating_mul(binomial(self.n_s, self.m_s))
        }
    }

    /// Uniform random pair of local index subsets (positions in `S_n(r)`, `S_n(s)`).
    pub(crate) fn draw_local<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
        let mut a = rand::seq::index::sample(rng, self.n_r, self.m_r).into_vec();
        a.sort_unstable();
        if self.same_group {
            let b = a.clone();
            return (a, b);
        }
        let mut b = rand::seq::index::sample(rng, self.n_s, self.m_s).into_vec();
        b.sort_unstable();
        (a, b)
    }
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 0..k {
        // exact at every step: acc * (n - j) is divisible by j + 1
        acc = match acc.checked_mul((n - j) as u128) {
            Some(v) => v / (j as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Advance `comb` to the next `k`-subset of `0..n` in lexicographic order.
pub(crate) fn next_combination(comb: &mut [usize], n: usize) -> bool {
    let k = comb.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if comb[i] < n - k + i {
            comb[i] += 1;
            for j in i + 1..k {
                comb[j] = comb[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Streaming walk over local index pairs in lexicographic order.
pub(crate) struct LocalPairWalk {
    shape: PairShape,
    r_side: Vec<usize>,
    s_side: Vec<usize>,
    started: bool,
    done: bool,
}

impl LocalPairWalk {
    pub(crate) fn new(shape: PairShape) -> Self {
        Self {
            shape,
            r_side: (0..shape.m_r).collect(),
            s_side: (0..shape.m_s).collect(),
            started: false,
            done: false,
        }
    }

    /// Move to the next pair; `false` once the space is exhausted.
    pub(crate) fn advance(&mut self) -> bool {
        if self.done {
            return false;
        }
        if !self.started {
            self.started = true;
            return true;
        }
        if !self.shape.same_group && next_combination(&mut self.s_side, self.shape.n_s) {
            return true;
        }
        if next_combination(&mut self.r_side, self.shape.n_r) {
            if !self.shape.same_group {
                self.s_side = (0..self.shape.m_s).collect();
            }
            return true;
        }
        self.done = true;
        false
    }

    pub(crate) fn r_side(&self) -> &[usize] {
        &self.r_side
    }

    pub(crate) fn s_side(&self) -> &[usize] {
        if self.shape.same_group {
            &self.r_side
        } else {
            &self.s_side
        }
    }
}

/// One subsample pair `(S_m(r), S_m(s))` as node ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsamplePair {
    pub r_nodes: Vec<NodeId>,
    pub s_nodes: Vec<NodeId>,
}

pub struct SubsamplePairs<'a> {
    walk: LocalPairWalk,
    r_pool: &'a [NodeId],
    s_pool: &'a [NodeId],
}

impl Iterator for SubsamplePairs<'_> {
    type Item = SubsamplePair;

    fn next(&mut self) -> Option<SubsamplePair> {
        if !self.walk.advance() {
            return None;
        }
        Some(SubsamplePair {
            r_nodes: self.walk.r_side().iter().map(|&k| self.r_pool[k]).collect(),
            s_nodes: self.walk.s_side().iter().map(|&k| self.s_pool[k]).collect(),
        })
    }
}

/// Every subsample pair exactly once, refusing spaces above [`ENUMERATION_GUARD`].
pub fn enumerate_subsample_pairs<'a>(
    sample: &'a SampleIndex,
    p: &[f64],
    r: GroupId,
    s: GroupId,
) -> Result<SubsamplePairs<'a>> {
    let shape = PairShape::new(sample, p, r, s)?;
    let count = shape.count();
    if count > ENUMERATION_GUARD {
        return Err(Error::CombinatorialGuard {
            count,
            limit: ENUMERATION_GUARD,
        });
    }
    Ok(SubsamplePairs {
        walk: LocalPairWalk::new(shape),
        r_pool: sample.group(r),
        s_pool: sample.group(s),
    })
}

/// `replicates` independent uniform pairs; pair `b` is drawn from stream `b` under `seed`.
pub fn draw_subsample_pairs<'a>(
    sample: &'a SampleIndex,
    p: &[f64],
    r: GroupId,
    s: GroupId,
    replicates: usize,
    seed: u64,
) -> Result<impl Iterator<Item = SubsamplePair> + 'a> {
    let shape = PairShape::new(sample, p, r, s)?;
    if replicates == 0 {
        return Err(Error::Input("replicate count must be >= 1".into()));
    }
    let r_pool = sample.group(r);
    let s_pool = sample.group(s);
    Ok((0..replicates as u64).map(move |b| {
        let (a, c) = shape.draw_local(&mut stream_rng(seed, b));
        SubsamplePair {
            r_nodes: a.iter().map(|&k| r_pool[k]).collect(),
            s_nodes: c.iter().map(|&k| s_pool[k]).collect(),
        }
    }))
}
