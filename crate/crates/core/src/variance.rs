//! Projection variance of γ̂, delta-method standard errors and intervals.
//!
//! γ̂ is a two-sample U-statistic in the sampled nodes of groups `r` and
//! `s`. Its first-order projection onto a node `y_ri` of group `r` is
//!
//! ```text
//! ĥ¹(y_ri) = E[ṽ_ri | i ∈ S_m(r)] / n_r + (n_r - 1)/n_r · γ̂₁
//! ĥ²(y_ri) = ũ_ri / n_r            + (n_r - 1)/n_r · γ̂₂
//! ĥ³(y_ri) = v_ri / n_r            + (n_r - 1)/n_r · γ̂₃
//! ```
//!
//! while the projection onto a group-`s` node is the constant γ̂, so only the
//! `r` side contributes:
//!
//! ```text
//! Σ̂_r   = 1/(n_r - 1) Σ_i (ĥ(y_ri) - γ̂)(ĥ(y_ri) - γ̂)ᵀ
//! Σ̂_γ   = n_rs · (N_r - n_r)/N_r · n_r · Σ̂_r
//! σ̂²_θ  = φᵀ Σ̂_γ φ,   se = sqrt(σ̂²_θ / n_rs)
//! ```
//!
//! with θ = f(γ) = γ₂γ₃/γ₁ (the detection-corrected rate γ₃/π, π = γ₁/γ₂)
//! and φ = ∇f = (−γ₂γ₃/γ₁², γ₃/γ₁, γ₂/γ₁).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{BackendUsed, GammaEstimate};
use crate::graph::{GroupId, GroupedNetwork, Within};
use crate::sampling::SampleIndex;

pub type Matrix3 = [[f64; 3]; 3];

/// Tolerance below zero before a variance is treated as a numerical failure.
pub const NEGATIVE_VARIANCE_TOLERANCE: f64 = 1e-9;
/// Monte Carlo projections warn when a node's expected inclusion count is below this.
pub const MIN_EXPECTED_INCLUSIONS: f64 = 30.0;

/// Sample and population sizes for one ordered pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SizeInfo {
    pub population_r: usize,
    pub n_r: usize,
    pub population_s: usize,
    pub n_s: usize,
    pub same_group: bool,
}

impl SizeInfo {
    pub fn n_rs(&self) -> usize {
        if self.same_group {
            self.n_r
        } else {
            self.n_r + self.n_s
        }
    }

    /// `(N_r - n_r) / N_r`.
    pub fn fpc_r(&self) -> f64 {
        if self.population_r == 0 {
            return 0.0;
        }
        (self.population_r.saturating_sub(self.n_r)) as f64 / self.population_r as f64
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionRecord {
    /// `ĥ(y_ri)` for every sampled `r` node, in `GammaEstimate::nodes` order.
    pub h: Vec<[f64; 3]>,
    pub gamma: [f64; 3],
    /// Nodes never included in a Monte Carlo subsample; their `ĥ¹` is γ̂₁.
    pub fallback_nodes: usize,
    pub low_inclusion: bool,
}

pub fn projections(g: &GammaEstimate) -> ProjectionRecord {
    let n_r = g.shape.n_r as f64;
    let carry = (n_r - 1.0) / n_r;
    let gamma = g.as_array();
    let mut fallback_nodes = 0;
    let h = (0..g.nodes.len())
        .map(|k| {
            let h1 = match g.v_tilde_mean(k) {
                Some(mean) => mean / n_r + carry * gamma[0],
                None => {
                    fallback_nodes += 1;
                    gamma[0]
                }
            };
            let h2 = f64::from(u8::from(g.u_tilde[k])) / n_r + carry * gamma[1];
            let h3 = f64::from(u8::from(g.v[k])) / n_r + carry * gamma[2];
            [h1, h2, h3]
        })
        .collect();
    let expected = match g.backend {
        BackendUsed::MonteCarlo { replicates } => {
            replicates as f64 * g.shape.m_r as f64 / g.shape.n_r as f64
        }
        BackendUsed::Exact { .. } => f64::INFINITY,
    };
    ProjectionRecord {
        h,
        gamma,
        fallback_nodes,
        low_inclusion: fallback_nodes > 0 || expected < MIN_EXPECTED_INCLUSIONS,
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SigmaGamma {
    pub matrix: Matrix3,
    pub fpc_r: f64,
    pub n_rs: usize,
}

/// Σ̂_γ(rs) from the `r`-side projections (the `s` side is constant).
pub fn sigma_gamma(proj: &ProjectionRecord, sizes: &SizeInfo) -> Result<SigmaGamma> {
    let n_r = proj.h.len();
    if n_r < 2 || sizes.n_r != n_r {
        return Err(Error::Input(format!(
            "projection variance needs n_r >= 2 matching the projections (n_r = {}, projections = {n_r})",
            sizes.n_r
        )));
    }
    let mut sigma_r = [[0.0; 3]; 3];
    for h in &proj.h {
        let d = [h[0] - proj.gamma[0], h[1] - proj.gamma[1], h[2] - proj.gamma[2]];
        for a in 0..3 {
            for b in 0..3 {
                sigma_r[a][b] += d[a] * d[b];
            }
        }
    }
    let fpc_r = sizes.fpc_r();
    let scale = sizes.n_rs() as f64 * fpc_r * n_r as f64 / (n_r as f64 - 1.0);
    for row in &mut sigma_r {
        for x in row.iter_mut() {
            *x *= scale;
        }
    }
    Ok(SigmaGamma {
        matrix: sigma_r,
        fpc_r,
        n_rs: sizes.n_rs(),
    })
}

/// θ = γ₂γ₃/γ₁.
pub fn theta_of(gamma: [f64; 3]) -> f64 {
    gamma[1] * gamma[2] / gamma[0]
}

/// ∇θ ordered (∂/∂γ₁, ∂/∂γ₂, ∂/∂γ₃).
pub fn gradient(gamma: [f64; 3]) -> [f64; 3] {
    let [g1, g2, g3] = gamma;
    [-g2 * g3 / (g1 * g1), g3 / g1, g2 / g1]
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct VarianceReport {
    pub sigma2_theta: f64,
    pub se: f64,
    pub gradient: [f64; 3],
    pub sigma_gamma: Matrix3,
    pub fpc_r: f64,
}

pub fn delta_method(gamma: [f64; 3], sigma: &SigmaGamma) -> Result<VarianceReport> {
    if !(gamma[0] > 0.0 && gamma[1] > 0.0) {
        return Err(Error::Degenerate("delta method needs γ̂₁ > 0 and γ̂₂ > 0"));
    }
    let phi = gradient(gamma);
    let mut s2 = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            s2 += phi[a] * sigma.matrix[a][b] * phi[b];
        }
    }
    if s2 < -NEGATIVE_VARIANCE_TOLERANCE {
        return Err(Error::Numerical(format!("negative variance {s2:e}")));
    }
    let s2 = s2.max(0.0);
    Ok(VarianceReport {
        sigma2_theta: s2,
        se: (s2 / sigma.n_rs as f64).sqrt(),
        gradient: phi,
        sigma_gamma: sigma.matrix,
        fpc_r: sigma.fpc_r,
    })
}

/// Inverse standard normal CDF (Wichura's AS241, about 1e-16 relative).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&CENTRAL_NUM, r) / poly(&CENTRAL_DEN, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let z = if r <= 5.0 {
        let r = r - 1.6;
        poly(&NEAR_NUM, r) / poly(&NEAR_DEN, r)
    } else {
        let r = r - 5.0;
        poly(&TAIL_NUM, r) / poly(&TAIL_DEN, r)
    };
    if q < 0.0 {
        -z
    } else {
        z
    }
}

fn poly(coef: &[f64; 8], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

const CENTRAL_NUM: [f64; 8] = [
    3.387_132_872_796_366_608,
    133.141_667_891_784_377_45,
    1_971.590_950_306_551_442_7,
    13_731.693_765_509_461_125,
    45_921.953_931_549_871_457,
    67_265.770_927_008_700_853,
    33_430.575_583_588_128_105,
    2_509.080_928_730_122_672_7,
];
const CENTRAL_DEN: [f64; 8] = [
    1.0,
    42.313_330_701_600_911_252,
    687.187_007_492_057_908_3,
    5_394.196_021_424_751_107_7,
    21_213.794_301_586_595_867,
    39_307.895_800_092_710_61,
    28_729.085_735_721_942_674,
    5_226.495_278_852_545_925,
];
const NEAR_NUM: [f64; 8] = [
    1.423_437_110_749_683_577_34,
    4.630_337_846_156_545_295_9,
    5.769_497_221_460_691_405_5,
    3.647_848_324_763_204_605_04,
    1.270_458_252_452_368_382_58,
    0.241_780_725_177_450_611_77,
    0.022_723_844_989_269_184_583_3,
    7.745_450_142_783_414_076_4e-4,
];
const NEAR_DEN: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87,
    1.676_384_830_183_803_849_4,
    0.689_767_334_985_100_004_55,
    0.148_103_976_427_480_074_59,
    0.015_198_666_563_616_457_196_6,
    5.475_938_084_995_344_946e-4,
    1.050_750_071_644_416_843_24e-9,
];
const TAIL_NUM: [f64; 8] = [
    6.657_904_643_501_103_777_2,
    5.463_784_911_164_114_369_9,
    1.784_826_539_917_291_335_8,
    0.296_560_571_828_504_891_23,
    0.026_532_189_526_576_123_093,
    0.001_242_660_947_388_078_438_6,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
const TAIL_DEN: [f64; 8] = [
    1.0,
    0.599_832_206_555_887_937_69,
    0.136_929_880_922_735_805_31,
    0.014_875_361_290_850_614_852_5,
    7.868_691_311_456_132_591e-4,
    1.846_318_317_510_054_681_8e-5,
    1.421_511_758_316_445_888_7e-7,
    2.044_263_103_389_939_785_64e-15,
];

/// `theta ± z_{(1+level)/2} · se`, intersected with `[0, 1]`.
pub fn confidence_interval(theta: f64, se: f64, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Input(format!("confidence level {level} outside (0, 1)")));
    }
    if !(se >= 0.0) || !se.is_finite() {
        return Err(Error::Degenerate("standard error is not a finite non-negative number"));
    }
    let z = inverse_normal_cdf(0.5 * (1.0 + level));
    Ok(((theta - z * se).max(0.0), (theta + z * se).min(1.0)))
}

/// Standard error of θ̃ from its own projections `ĥ³`, scaled like Σ̂_γ.
pub fn unadjusted_se(v: &[bool], sizes: &SizeInfo) -> Result<f64> {
    let n_r = v.len();
    if n_r < 2 {
        return Err(Error::Input("unadjusted variance needs n_r >= 2".into()));
    }
    let n = n_r as f64;
    let gamma3 = v.iter().filter(|&&x| x).count() as f64 / n;
    let ss: f64 = v
        .iter()
        .map(|&x| {
            let h3 = f64::from(u8::from(x)) / n + (n - 1.0) / n * gamma3;
            (h3 - gamma3).powi(2)
        })
        .sum();
    let sigma2_r3 = ss / (n - 1.0);
    let n_rs = sizes.n_rs() as f64;
    let sigma2_gamma3 = n_rs * sizes.fpc_r() * n * sigma2_r3;
    Ok((sigma2_gamma3 / n_rs).sqrt())
}

/// [`unadjusted_se`] computed from the network and sample directly.
pub fn unadjusted_variance(
    net: &GroupedNetwork,
    sample: &SampleIndex,
    r: GroupId,
    s: GroupId,
) -> Result<f64> {
    if r >= sample.num_groups() {
        return Err(Error::UnknownGroup(r));
    }
    if s >= sample.num_groups() {
        return Err(Error::UnknownGroup(s));
    }
    let v: Vec<bool> = sample
        .group(r)
        .iter()
        .map(|&i| net.linkage_indicator(i, s, Within::Subset(sample.view())))
        .collect::<Result<_>>()?;
    let sizes = SizeInfo {
        population_r: sample.population_sizes()[r],
        n_r: v.len(),
        population_s: sample.population_sizes()[s],
        n_s: sample.group(s).len(),
        same_group: r == s,
    };
    unadjusted_se(&v, &sizes)
}
