//! Replicated coverage simulation and the sampling-proportion sweep.
//!
//! Every replicate draws from its own RNG substreams, derived from the root
//! seed and the replicate index, so results do not depend on scheduling.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{estimate_pair, pi_limit, Backend, EstimateOptions, ThetaReport};
use crate::graph::{GroupId, GroupedNetwork, Within};
use crate::netgen::{
    generate_network_with, BlockDegreeMatrix, DegreeLawSpec, GenerationReport, GeneratorOptions,
};
use crate::rng::{derive_seed, stream_rng, TAG_POPULATION, TAG_SAMPLE, TAG_SUBSAMPLE};
use crate::sampling::{sample_size, SampleIndex};

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub group_names: Vec<String>,
    pub sizes: Vec<usize>,
    pub laws: BlockDegreeMatrix,
    pub proportions: Vec<f64>,
    pub replicates: usize,
    pub mc_subsamples: usize,
    pub ci_level: f64,
    pub seed: u64,
    /// Generate a new population for every replicate (otherwise one fixed population).
    pub fresh_population: bool,
    pub exact: bool,
    pub generator: GeneratorOptions,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let w = self.laws.num_groups();
        if self.sizes.len() != w || self.proportions.len() != w || self.group_names.len() != w {
            return Err(Error::Config(format!(
                "{w}x{w} degree laws need {w} groups with a size and proportion each"
            )));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.mc_subsamples == 0 {
            return Err(Error::Config("mc_subsamples must be at least 1".into()));
        }
        check_proportions(&self.proportions)?;
        check_level(self.ci_level)
    }

    fn backend(&self, seed: u64) -> Backend {
        if self.exact {
            Backend::Exact
        } else {
            Backend::Auto {
                replicates: self.mc_subsamples,
                seed,
            }
        }
    }
}

fn check_proportions(p: &[f64]) -> Result<()> {
    match p.iter().find(|&&x| !(x > 0.0 && x <= 1.0)) {
        Some(x) => Err(Error::Config(format!("sampling proportion {x} outside (0, 1]"))),
        None => Ok(()),
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("ci_level {level} outside (0, 1)")))
    }
}

/// Fraction of group-`r` nodes with at least one edge into group `s`.
pub fn measure_ground_truth(net: &GroupedNetwork, r: GroupId, s: GroupId) -> Result<f64> {
    let members = net.group_members(r)?;
    net.group_members(s)?;
    if members.is_empty() {
        return Err(Error::Input(format!("group {} is empty", r + 1)));
    }
    let mut linked = 0usize;
    for &i in members {
        linked += usize::from(net.linkage_indicator(i, s, Within::All)?);
    }
    Ok(linked as f64 / members.len() as f64)
}

/// One pair's outcome in one replicate.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicateEstimate {
    pub replicate: usize,
    pub theta_true: f64,
    pub theta_unadjusted: f64,
    pub theta_adjusted: Option<f64>,
    pub se_adjusted: Option<f64>,
    pub se_unadjusted: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub covered: Option<bool>,
    pub degenerate_pi: bool,
    pub clipped: bool,
}

impl ReplicateEstimate {
    fn new(replicate: usize, theta_true: f64, rep: &ThetaReport) -> Self {
        let covered = match (rep.ci_lo, rep.ci_hi) {
            (Some(lo), Some(hi)) => Some(lo <= theta_true && theta_true <= hi),
            _ => None,
        };
        Self {
            replicate,
            theta_true,
            theta_unadjusted: rep.theta_unadjusted,
            theta_adjusted: rep.theta_adjusted,
            se_adjusted: rep.se_adjusted,
            se_unadjusted: rep.se_unadjusted,
            ci_lo: rep.ci_lo,
            ci_hi: rep.ci_hi,
            covered,
            degenerate_pi: rep.degenerate_pi,
            clipped: rep.clipped,
        }
    }
}

/// Aggregates over replicates. Adjusted-estimator statistics and coverage
/// exclude degenerate replicates; `coverage_denominator` says how many remain.
#[derive(Debug, Clone, Serialize)]
pub struct PairSummary {
    pub r: usize,
    pub s: usize,
    pub group_r: String,
    pub group_s: String,
    pub replicates: usize,
    pub theta_true_mean: f64,
    pub mean_unadjusted: f64,
    pub mean_adjusted: Option<f64>,
    pub mean_bias_unadjusted: f64,
    pub mean_bias_adjusted: Option<f64>,
    pub mean_abs_bias_unadjusted: f64,
    pub mean_abs_bias_adjusted: Option<f64>,
    /// Fraction of non-degenerate replicates with θ̂ above the truth.
    pub upward_fraction: Option<f64>,
    pub sd_unadjusted: Option<f64>,
    pub sd_adjusted: Option<f64>,
    /// SD of θ̂ minus the replicate's own truth.
    pub sd_error_adjusted: Option<f64>,
    pub mean_se_unadjusted: Option<f64>,
    pub mean_se_adjusted: Option<f64>,
    pub coverage: Option<f64>,
    pub coverage_denominator: usize,
    pub degenerate_count: usize,
    pub clipped_count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairResult {
    pub summary: PairSummary,
    pub replicates: Vec<ReplicateEstimate>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub replicates: usize,
    pub fresh_population: bool,
    /// Generation report of the fixed population, when one is used.
    pub population: Option<GenerationReport>,
    pub pairs: Vec<PairResult>,
}

pub fn run_simulation(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let w = cfg.laws.num_groups();
    let generate = |rep: u64| {
        let mut rng = stream_rng(derive_seed(cfg.seed, &[TAG_POPULATION, rep]), 0);
        generate_network_with(&cfg.laws, &cfg.sizes, &cfg.generator, &mut rng).and_then(
            |(net, report)| Ok((net.with_group_names(cfg.group_names.clone())?, report)),
        )
    };
    let fixed = if cfg.fresh_population {
        None
    } else {
        Some(generate(0)?)
    };

    let per_replicate: Vec<Vec<ReplicateEstimate>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|rep| {
            let owned;
            let net = match &fixed {
                Some((net, _)) => net,
                None => {
                    owned = generate(rep as u64)?.0;
                    &owned
                }
            };
            let mut rng = stream_rng(derive_seed(cfg.seed, &[TAG_SAMPLE, rep as u64]), 0);
            let sample = SampleIndex::draw(net, &cfg.proportions, &mut rng)?;
            let mut out = Vec::with_capacity(w * w);
            for r in 0..w {
                for s in 0..w {
                    let truth = measure_ground_truth(net, r, s)?;
                    let opts = EstimateOptions {
                        backend: cfg.backend(derive_seed(
                            cfg.seed,
                            &[TAG_SUBSAMPLE, rep as u64, r as u64, s as u64],
                        )),
                        ci_level: cfg.ci_level,
                    };
                    let report = estimate_pair(net, &sample, r, s, &opts)?;
                    out.push(ReplicateEstimate::new(rep, truth, &report));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut pairs = Vec::with_capacity(w * w);
    for r in 0..w {
        for s in 0..w {
            let k = r * w + s;
            let replicates: Vec<ReplicateEstimate> =
                per_replicate.iter().map(|row| row[k].clone()).collect();
            let summary = summarize(
                r,
                s,
                &cfg.group_names[r],
                &cfg.group_names[s],
                &replicates,
            );
            pairs.push(PairResult { summary, replicates });
        }
    }
    Ok(ExperimentResult {
        replicates: cfg.replicates,
        fresh_population: cfg.fresh_population,
        population: fixed.map(|(_, report)| report),
        pairs,
    })
}

fn summarize(
    r: usize,
    s: usize,
    group_r: &str,
    group_s: &str,
    reps: &[ReplicateEstimate],
) -> PairSummary {
    let ok: Vec<&ReplicateEstimate> = reps.iter().filter(|e| e.theta_adjusted.is_some()).collect();
    let adj: Vec<f64> = ok.iter().filter_map(|e| e.theta_adjusted).collect();
    let adj_err: Vec<f64> = ok
        .iter()
        .filter_map(|e| e.theta_adjusted.map(|t| t - e.theta_true))
        .collect();
    let unadj: Vec<f64> = reps.iter().map(|e| e.theta_unadjusted).collect();
    let unadj_err: Vec<f64> = reps.iter().map(|e| e.theta_unadjusted - e.theta_true).collect();
    let se_adj: Vec<f64> = reps.iter().filter_map(|e| e.se_adjusted).collect();
    let se_unadj: Vec<f64> = reps.iter().filter_map(|e| e.se_unadjusted).collect();
    let covered: Vec<bool> = reps.iter().filter_map(|e| e.covered).collect();
    let abs = |v: &[f64]| v.iter().map(|x| x.abs()).collect::<Vec<_>>();
    PairSummary {
        r: r + 1,
        s: s + 1,
        group_r: group_r.to_string(),
        group_s: group_s.to_string(),
        replicates: reps.len(),
        theta_true_mean: mean(&reps.iter().map(|e| e.theta_true).collect::<Vec<_>>())
            .unwrap_or(f64::NAN),
        mean_unadjusted: mean(&unadj).unwrap_or(f64::NAN),
        mean_adjusted: mean(&adj),
        mean_bias_unadjusted: mean(&unadj_err).unwrap_or(f64::NAN),
        mean_bias_adjusted: mean(&adj_err),
        mean_abs_bias_unadjusted: mean(&abs(&unadj_err)).unwrap_or(f64::NAN),
        mean_abs_bias_adjusted: mean(&abs(&adj_err)),
        upward_fraction: (!adj_err.is_empty())
            .then(|| adj_err.iter().filter(|&&d| d > 0.0).count() as f64 / adj_err.len() as f64),
        sd_unadjusted: sd(&unadj),
        sd_adjusted: sd(&adj),
        sd_error_adjusted: sd(&adj_err),
        mean_se_unadjusted: mean(&se_unadj),
        mean_se_adjusted: mean(&se_adj),
        coverage: (!covered.is_empty())
            .then(|| covered.iter().filter(|&&c| c).count() as f64 / covered.len() as f64),
        coverage_denominator: covered.len(),
        degenerate_count: reps.iter().filter(|e| e.degenerate_pi).count(),
        clipped_count: reps.iter().filter(|e| e.clipped).count(),
    }
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Sample standard deviation (divisor `n - 1`).
pub fn sd(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

/// Linear-interpolation quantile of sorted data (`q` in `[0, 1]`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticConfig {
    pub population: usize,
    pub law: DegreeLawSpec,
    pub p_grid: Vec<f64>,
    pub replicates: usize,
    pub mc_subsamples: usize,
    pub seed: u64,
    /// Flag a grid point when |median bias| exceeds this fraction of θ.
    pub threshold: f64,
    pub exact: bool,
    pub generator: GeneratorOptions,
}

impl DiagnosticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p_grid.is_empty() {
            return Err(Error::Config("p_grid is empty".into()));
        }
        check_proportions(&self.p_grid)?;
        if self.replicates == 0 || self.mc_subsamples == 0 {
            return Err(Error::Config(
                "replicates and mc_subsamples must be at least 1".into(),
            ));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::Config(format!("threshold {} must be positive", self.threshold)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticRow {
    pub p: f64,
    pub n: usize,
    pub m: usize,
    pub theta_true: f64,
    /// Detection probability implied by the degree law at this `p`.
    pub pi_limit: f64,
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
    pub iqr: Option<f64>,
    pub mean: Option<f64>,
    pub mean_bias: Option<f64>,
    pub median_bias: Option<f64>,
    pub relative_median_bias: Option<f64>,
    pub median_unadjusted: f64,
    pub degenerate_rate: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticResult {
    pub theta_true: f64,
    pub threshold: f64,
    pub rows: Vec<DiagnosticRow>,
    /// Smallest grid value from which every larger value is unflagged.
    pub breakpoint: Option<f64>,
    /// `theta_adjusted[k][b]`: replicate `b` at grid point `k`.
    pub theta_adjusted: Vec<Vec<Option<f64>>>,
    pub theta_unadjusted: Vec<Vec<f64>>,
}

/// θ̂ across a grid of sampling proportions on one fixed single-group network.
pub fn run_diagnostic(cfg: &DiagnosticConfig) -> Result<DiagnosticResult> {
    cfg.validate()?;
    let mut rng = stream_rng(derive_seed(cfg.seed, &[TAG_POPULATION, 0]), 0);
    let (net, _) = generate_network_with(
        &BlockDegreeMatrix::single(cfg.law.clone()),
        &[cfg.population],
        &cfg.generator,
        &mut rng,
    )?;
    let theta = measure_ground_truth(&net, 0, 0)?;
    let cond_law = cfg.law.conditional_law();

    let mut rows = Vec::with_capacity(cfg.p_grid.len());
    let mut all_adj = Vec::with_capacity(cfg.p_grid.len());
    let mut all_unadj = Vec::with_capacity(cfg.p_grid.len());
    for (k, &p) in cfg.p_grid.iter().enumerate() {
        let reps: Vec<(f64, Option<f64>)> = (0..cfg.replicates)
            .into_par_iter()
            .map(|b| {
                let path = [k as u64, b as u64];
                let mut rng = stream_rng(derive_seed(cfg.seed, &[TAG_SAMPLE, path[0], path[1]]), 0);
                let sample = SampleIndex::draw(&net, &[p], &mut rng)?;
                let seed = derive_seed(cfg.seed, &[TAG_SUBSAMPLE, path[0], path[1]]);
                let backend = if cfg.exact {
                    Backend::Exact
                } else {
                    Backend::Auto { replicates: cfg.mc_subsamples, seed }
                };
                let opts = EstimateOptions { backend, ci_level: 0.95 };
                let rep = estimate_pair(&net, &sample, 0, 0, &opts)?;
                Ok((rep.theta_unadjusted, rep.theta_adjusted))
            })
            .collect::<Result<_>>()?;
        let unadj: Vec<f64> = reps.iter().map(|x| x.0).collect();
        let adj: Vec<Option<f64>> = reps.iter().map(|x| x.1).collect();
        let mut ok: Vec<f64> = adj.iter().flatten().copied().collect();
        ok.sort_by(f64::total_cmp);
        let mut unadj_sorted = unadj.clone();
        unadj_sorted.sort_by(f64::total_cmp);
        let median = quantile_sorted(&ok, 0.5);
        let q1 = quantile_sorted(&ok, 0.25);
        let q3 = quantile_sorted(&ok, 0.75);
        let m = mean(&ok);
        let median_bias = median.map(|x| x - theta);
        let relative_median_bias = median_bias.map(|b| b / theta);
        let flagged = match median_bias {
            Some(b) => b.abs() > cfg.threshold * theta,
            None => true,
        };
        let n = sample_size(p, cfg.population);
        rows.push(DiagnosticRow {
            p,
            n,
            m: sample_size(p, n),
            theta_true: theta,
            pi_limit: pi_limit(&cond_law, p)?,
            median,
            q1,
            q3,
            iqr: q1.zip(q3).map(|(a, b)| b - a),
            mean: m,
            mean_bias: m.map(|x| x - theta),
            median_bias,
            relative_median_bias,
            median_unadjusted: quantile_sorted(&unadj_sorted, 0.5).unwrap_or(f64::NAN),
            degenerate_rate: adj.iter().filter(|x| x.is_none()).count() as f64 / adj.len() as f64,
            flagged,
        });
        all_adj.push(adj);
        all_unadj.push(unadj);
    }
    let breakpoint = breakpoint(&rows);
    Ok(DiagnosticResult {
        theta_true: theta,
        threshold: cfg.threshold,
        rows,
        breakpoint,
        theta_adjusted: all_adj,
        theta_unadjusted: all_unadj,
    })
}

fn breakpoint(rows: &[DiagnosticRow]) -> Option<f64> {
    let mut order: Vec<&DiagnosticRow> = rows.iter().collect();
    order.sort_by(|a, b| a.p.total_cmp(&b.p));
    let mut bp = None;
    for row in order.iter().rev() {
        if row.flagged {
            break;
        }
        bp = Some(row.p);
    }
    bp
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(p: f64) -> ExperimentConfig {
        ExperimentConfig {
            group_names: vec!["a".into()],
            sizes: vec![60],
            laws: BlockDegreeMatrix::single(DegreeLawSpec::new(0.5, 2.5, 10).unwrap()),
            proportions: vec![p],
            replicates: 3,
            mc_subsamples: 200,
            ci_level: 0.95,
            seed: 11,
            fresh_population: true,
            exact: false,
            generator: GeneratorOptions::default(),
        }
    }

    #[test]
    fn ground_truth_trivial_cases() {
        let empty = GroupedNetwork::new(1, vec![0; 4], []).unwrap();
        assert_eq!(measure_ground_truth(&empty, 0, 0).unwrap(), 0.0);
        let complete = GroupedNetwork::new(
            1,
            vec![0; 4],
            [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)],
        )
        .unwrap();
        assert_eq!(measure_ground_truth(&complete, 0, 0).unwrap(), 1.0);
        let two = GroupedNetwork::new(2, vec![0, 0, 1], [(0, 2)]).unwrap();
        assert_eq!(measure_ground_truth(&two, 0, 1).unwrap(), 0.5);
        assert_eq!(measure_ground_truth(&two, 1, 0).unwrap(), 1.0);
        assert!(measure_ground_truth(&two, 2, 0).is_err());
    }

    #[test]
    fn full_sampling_recovers_truth() {
        let mut cfg = tiny_config(1.0);
        cfg.replicates = 1;
        let res = run_simulation(&cfg).unwrap();
        let e = &res.pairs[0].replicates[0];
        assert_eq!(e.theta_adjusted, Some(e.theta_true));
        assert_eq!(e.theta_unadjusted, e.theta_true);
        assert_eq!(e.se_adjusted, Some(0.0));
        assert_eq!(res.pairs[0].summary.coverage, Some(1.0));
    }

    #[test]
    fn simulation_is_deterministic_and_keeps_every_replicate() {
        let cfg = tiny_config(0.5);
        let a = serde_json::to_string(&run_simulation(&cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&run_simulation(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
        let res = run_simulation(&cfg).unwrap();
        assert_eq!(res.pairs[0].replicates.len(), 3);
        let cov = res.pairs[0].summary.coverage.unwrap();
        assert!((0.0..=1.0).contains(&cov));
    }

    #[test]
    fn fixed_population_shares_truth() {
        let mut cfg = tiny_config(0.5);
        cfg.fresh_population = false;
        let res = run_simulation(&cfg).unwrap();
        let truths: Vec<f64> = res.pairs[0].replicates.iter().map(|e| e.theta_true).collect();
        assert!(truths.windows(2).all(|w| w[0] == w[1]));
        assert!(res.population.is_some());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = tiny_config(0.5);
        cfg.replicates = 0;
        assert!(run_simulation(&cfg).is_err());
        let cfg = tiny_config(0.0);
        assert!(run_simulation(&cfg).is_err());
        let mut cfg = tiny_config(0.5);
        cfg.sizes.push(4);
        assert!(run_simulation(&cfg).is_err());
    }

    #[test]
    fn summary_statistics() {
        assert_eq!(mean(&[]), None);
        assert_eq!(sd(&[1.0]), None);
        assert!((sd(&[1.0, 2.0, 3.0, 4.0]).unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&xs, 0.5), Some(2.5));
        assert_eq!(quantile_sorted(&xs, 0.25), Some(1.75));
        assert_eq!(quantile_sorted(&xs, 1.0), Some(4.0));
    }

    #[test]
    fn diagnostic_at_full_sampling_is_exact() {
        let cfg = DiagnosticConfig {
            population: 200,
            law: DegreeLawSpec::new(0.5, 3.0, 50).unwrap(),
            p_grid: vec![1.0],
            replicates: 2,
            mc_subsamples: 100,
            seed: 3,
            threshold: 0.05,
            exact: false,
            generator: GeneratorOptions::default(),
        };
        let res = run_diagnostic(&cfg).unwrap();
        assert_eq!(res.rows[0].median_bias, Some(0.0));
        assert!(!res.rows[0].flagged);
        assert_eq!(res.breakpoint, Some(1.0));
    }

    #[test]
    fn breakpoint_needs_a_clean_upper_run() {
        let row = |p: f64, flagged: bool| DiagnosticRow {
            p, n: 0, m: 0, theta_true: 0.5, pi_limit: 1.0, median: None, q1: None, q3: None,
            iqr: None, mean: None, mean_bias: None, median_bias: None,
            relative_median_bias: None, median_unadjusted: 0.0, degenerate_rate: 0.0, flagged,
        };
        assert_eq!(breakpoint(&[row(0.2, true), row(0.3, false), row(0.4, false)]), Some(0.3));
        assert_eq!(breakpoint(&[row(0.2, false), row(0.3, true), row(0.4, false)]), Some(0.4));
        assert_eq!(breakpoint(&[row(0.2, false), row(0.3, true)]), None);
    }
}
