//! Command-line front end. Every command writes its artifacts and a
//! `manifest.json` into `--out-dir`; failures print one JSON line on stderr.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::estimators::{estimate_pair, Backend, EstimateOptions, ThetaReport};
use crate::experiments::{run_diagnostic, run_simulation, DiagnosticResult, ExperimentResult};
use crate::io::{
    distances_to_edges, fmt_f64, load_nodes_edges, write_edges_csv, write_json,
    write_labelled_edges, write_nodes_csv, write_table, PopulationChoice, RunManifest,
    REPORT_SCHEMA_VERSION,
};
use crate::netgen::generate_network_with;
use crate::rng::{derive_seed, stream_rng, TAG_POPULATION, TAG_SAMPLE, TAG_SUBSAMPLE};
use crate::sampling::SampleIndex;

#[derive(Debug, Parser)]
#[command(name = "linkrate", version, about = "Linkage-rate estimation for partially observed grouped networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for outputs (created if missing).
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Record wall-clock timings in the manifest.
    #[arg(long)]
    pub record_timings: bool,
}

#[derive(Debug, Args)]
pub struct EstimatorFlags {
    /// Force full enumeration of subsample pairs.
    #[arg(long)]
    pub exact: bool,
    /// Confidence level of the reported intervals.
    #[arg(long)]
    pub level: Option<f64>,
    /// Monte Carlo subsample pairs per estimate; overrides `mc_subsamples`.
    #[arg(long)]
    pub subsamples: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a population network from `degree_laws` and group sizes.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Also draw a sample with each group's `p`; only sampled edges are written.
        #[arg(long)]
        sample: bool,
    },
    /// Estimate every linkage rate from observed node and edge tables.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        est: EstimatorFlags,
        /// Node table: `id,group[,sampled]`.
        #[arg(long)]
        nodes: PathBuf,
        /// Edge table: `id_a,id_b`.
        #[arg(long)]
        edges: PathBuf,
    },
    /// Replicated coverage simulation.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        est: EstimatorFlags,
        /// Number of replicates; overrides the config.
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Sweep of θ̂ over the sampling proportions in `p_grid`.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        est: EstimatorFlags,
        /// Replicates per grid point; overrides the config.
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Threshold a distance matrix into an edge list (`d < c`).
    Dist2edges {
        #[command(flatten)]
        common: Common,
        /// Square distance matrix with id header row and id first column.
        #[arg(long)]
        matrix: PathBuf,
        /// Distance threshold `c`; overrides the config.
        #[arg(long)]
        threshold: Option<f64>,
    },
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    message: String,
}

/// Parse `args`, run, and return the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let recorded: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let message = e.to_string();
            let line = message.lines().next().unwrap_or("").trim_start_matches("error: ");
            emit_error("usage", line.to_string());
            return 2;
        }
    };
    match run(cli, recorded) {
        Ok(()) => 0,
        Err(e) => {
            emit_error(e.kind(), e.to_string());
            1
        }
    }
}

fn emit_error(kind: &str, message: String) {
    let line = ErrorLine {
        error: kind,
        message: message.replace('\n', " "),
    };
    eprintln!("{}", serde_json::to_string(&line).unwrap_or_else(|_| "{\"error\":\"internal\"}".into()));
}

/// Execute a parsed command; `args` is recorded verbatim in the manifest.
pub fn run(cli: Cli, args: Vec<String>) -> Result<()> {
    match cli.command {
        Command::Generate { common, sample } => cmd_generate(&common, sample, args),
        Command::Estimate { common, est, nodes, edges } => cmd_estimate(&common, &est, &nodes, &edges, args),
        Command::Simulate { common, est, replicates } => cmd_simulate(&common, &est, replicates, args),
        Command::Diagnose { common, est, replicates } => cmd_diagnose(&common, &est, replicates, args),
        Command::Dist2edges { common, matrix, threshold } => cmd_dist2edges(&common, &matrix, threshold, args),
    }
}

/// Loaded config with command-line overrides applied.
fn resolve(common: &Common, est: Option<&EstimatorFlags>) -> Result<(Config, Option<PathBuf>)> {
    let mut cfg = match &common.config {
        Some(path) => Config::from_path(path)?,
        None => Config::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(est) = est {
        cfg.exact |= est.exact;
        if let Some(level) = est.level {
            cfg.ci_level = level;
        }
        if let Some(b) = est.subsamples {
            cfg.mc_subsamples = b;
        }
    }
    Ok((cfg, common.config.clone()))
}

struct Run<'a> {
    dir: &'a Path,
    manifest: RunManifest,
    started: Instant,
    timings: Vec<(String, f64)>,
    record_timings: bool,
}

impl<'a> Run<'a> {
    fn start(command: &str, common: &'a Common, cfg: &Config, config_path: Option<&Path>, args: Vec<String>) -> Result<Self> {
        std::fs::create_dir_all(&common.out_dir).map_err(|source| Error::Io {
            path: common.out_dir.display().to_string(),
            source,
        })?;
        let mut manifest = RunManifest::new(command, args, cfg.seed, serde_json::to_value(cfg)?);
        if let Some(path) = config_path {
            manifest.add_input(path)?;
        }
        Ok(Self {
            dir: &common.out_dir,
            manifest,
            started: Instant::now(),
            timings: Vec::new(),
            record_timings: common.record_timings,
        })
    }

    fn lap(&mut self, phase: &str) {
        self.timings.push((phase.to_string(), self.started.elapsed().as_secs_f64()));
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn finish(mut self, outputs: &[&str]) -> Result<()> {
        for name in outputs {
            self.manifest.add_output(self.dir, name)?;
        }
        if self.record_timings {
            self.lap("total");
            self.manifest.timings = Some(self.timings);
        }
        write_json(&self.dir.join("manifest.json"), &self.manifest)
    }
}

fn cmd_generate(common: &Common, sample: bool, args: Vec<String>) -> Result<()> {
    let (cfg, cfg_path) = resolve(common, None)?;
    let laws = cfg
        .degree_laws
        .clone()
        .ok_or_else(|| Error::Config("degree_laws is required".into()))?;
    let (names, sizes) = cfg.population()?;
    let mut run = Run::start("generate", common, &cfg, cfg_path.as_deref(), args)?;
    let mut rng = stream_rng(derive_seed(cfg.seed, &[TAG_POPULATION, 0]), 0);
    let (net, report) = generate_network_with(&laws, &sizes, &cfg.generator_options(), &mut rng)?;
    let net = net.with_group_names(names)?;
    run.lap("generate");

    let sampled = if sample {
        let p: Vec<f64> = cfg
            .groups
            .iter()
            .map(|g| g.p.ok_or_else(|| Error::Config(format!("group {}: p is required with --sample", g.name))))
            .collect::<Result<_>>()?;
        let mut rng = stream_rng(derive_seed(cfg.seed, &[TAG_SAMPLE, 0]), 0);
        let s = SampleIndex::draw(&net, &p, &mut rng)?;
        (0..net.num_nodes()).map(|i| s.contains(i)).collect()
    } else {
        vec![true; net.num_nodes()]
    };
    write_nodes_csv(&run.path("nodes.csv"), &net, &sampled)?;
    write_edges_csv(&run.path("edges.csv"), &net, |i| sampled[i])?;
    write_json(&run.path("generation.json"), &report)?;
    if sample {
        run.manifest
            .notes
            .push("nodes.csv lists the whole population; edges.csv keeps edges among sampled nodes".into());
    }
    run.finish(&["nodes.csv", "edges.csv", "generation.json"])
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    schema_version: u32,
    command: &'static str,
    populations: &'a [PopulationChoice],
    duplicate_edges: usize,
    pairs: &'a [ThetaReport],
}

pub const ESTIMATE_COLUMNS: [&str; 21] = [
    "r", "s", "group_r", "group_s", "theta_unadjusted", "pi_hat", "theta_adjusted",
    "se_unadjusted", "se_adjusted", "ci_level", "ci_lo", "ci_hi", "n_r", "n_s", "m_r", "m_s",
    "population_r", "population_s", "backend", "subsamples", "status",
];

fn estimate_row(t: &ThetaReport) -> Vec<String> {
    let (backend, subsamples) = match t.backend {
        crate::estimators::BackendUsed::Exact { pairs } => ("exact", pairs.to_string()),
        crate::estimators::BackendUsed::MonteCarlo { replicates } => ("monte_carlo", replicates.to_string()),
    };
    vec![
        t.r.to_string(),
        t.s.to_string(),
        t.group_r.clone(),
        t.group_s.clone(),
        fmt_f64(Some(t.theta_unadjusted)),
        fmt_f64(t.pi_hat),
        fmt_f64(t.theta_adjusted),
        fmt_f64(t.se_unadjusted),
        fmt_f64(t.se_adjusted),
        fmt_f64(Some(t.ci_level)),
        fmt_f64(t.ci_lo),
        fmt_f64(t.ci_hi),
        t.n_r.to_string(),
        t.n_s.to_string(),
        t.m_r.to_string(),
        t.m_s.to_string(),
        t.population_r.to_string(),
        t.population_s.to_string(),
        backend.to_string(),
        subsamples,
        t.status(),
    ]
}

fn cmd_estimate(common: &Common, est: &EstimatorFlags, nodes: &Path, edges: &Path, args: Vec<String>) -> Result<()> {
    let (cfg, cfg_path) = resolve(common, Some(est))?;
    let mut run = Run::start("estimate", common, &cfg, cfg_path.as_deref(), args)?;
    run.manifest.add_input(nodes)?;
    run.manifest.add_input(edges)?;
    let data = load_nodes_edges(nodes, edges)?;
    let (sample, choices) = data.sample_index(&cfg.groups)?;
    run.lap("load");
    for c in &choices {
        run.manifest.notes.push(format!("group {}: {} (n = {}, N = {}, p = {})", c.group, c.source, c.n, c.population, c.p));
    }
    if data.duplicate_edges > 0 {
        run.manifest.notes.push(format!("collapsed {} duplicate edge rows", data.duplicate_edges));
    }

    let net = &data.network;
    let w = net.num_groups();
    let mut reports = Vec::with_capacity(w * w);
    for r in 0..w {
        for s in 0..w {
            let backend = if cfg.exact {
                Backend::Exact
            } else {
                Backend::Auto {
                    replicates: cfg.mc_subsamples,
                    seed: derive_seed(cfg.seed, &[TAG_SUBSAMPLE, r as u64, s as u64]),
                }
            };
            let opts = EstimateOptions { backend, ci_level: cfg.ci_level };
            reports.push(estimate_pair(net, &sample, r, s, &opts)?);
        }
    }
    run.lap("estimate");
    write_json(
        &run.path("report.json"),
        &EstimateReport {
            schema_version: REPORT_SCHEMA_VERSION,
            command: "estimate",
            populations: &choices,
            duplicate_edges: data.duplicate_edges,
            pairs: &reports,
        },
    )?;
    let rows: Vec<Vec<String>> = reports.iter().map(estimate_row).collect();
    write_table(&run.path("estimates.csv"), &ESTIMATE_COLUMNS, &rows)?;
    run.finish(&["report.json", "estimates.csv"])
}

#[derive(Serialize)]
struct SimulationReport<'a> {
    schema_version: u32,
    command: &'static str,
    coverage_excludes_degenerate: bool,
    result: &'a ExperimentResult,
}

pub const SUMMARY_COLUMNS: [&str; 22] = [
    "r", "s", "group_r", "group_s", "replicates", "theta_true_mean", "mean_unadjusted",
    "mean_adjusted", "mean_bias_unadjusted", "mean_bias_adjusted", "mean_abs_bias_unadjusted",
    "mean_abs_bias_adjusted", "upward_fraction", "sd_unadjusted", "sd_adjusted",
    "sd_error_adjusted", "mean_se_unadjusted", "mean_se_adjusted", "coverage",
    "coverage_denominator", "degenerate_count", "clipped_count",
];

fn cmd_simulate(common: &Common, est: &EstimatorFlags, replicates: Option<usize>, args: Vec<String>) -> Result<()> {
    let (mut cfg, cfg_path) = resolve(common, Some(est))?;
    if let Some(r) = replicates {
        cfg.replicates = r;
    }
    let exp = cfg.experiment()?;
    let mut run = Run::start("simulate", common, &cfg, cfg_path.as_deref(), args)?;
    let result = run_simulation(&exp)?;
    run.lap("simulate");
    run.manifest.notes.push(format!(
        "{} population per replicate; coverage excludes degenerate replicates",
        if exp.fresh_population { "fresh" } else { "one fixed" }
    ));

    write_json(
        &run.path("report.json"),
        &SimulationReport {
            schema_version: REPORT_SCHEMA_VERSION,
            command: "simulate",
            coverage_excludes_degenerate: true,
            result: &result,
        },
    )?;
    let summary: Vec<Vec<String>> = result
        .pairs
        .iter()
        .map(|p| {
            let s = &p.summary;
            vec![
                s.r.to_string(),
                s.s.to_string(),
                s.group_r.clone(),
                s.group_s.clone(),
                s.replicates.to_string(),
                fmt_f64(Some(s.theta_true_mean)),
                fmt_f64(Some(s.mean_unadjusted)),
                fmt_f64(s.mean_adjusted),
                fmt_f64(Some(s.mean_bias_unadjusted)),
                fmt_f64(s.mean_bias_adjusted),
                fmt_f64(Some(s.mean_abs_bias_unadjusted)),
                fmt_f64(s.mean_abs_bias_adjusted),
                fmt_f64(s.upward_fraction),
                fmt_f64(s.sd_unadjusted),
                fmt_f64(s.sd_adjusted),
                fmt_f64(s.sd_error_adjusted),
                fmt_f64(s.mean_se_unadjusted),
                fmt_f64(s.mean_se_adjusted),
                fmt_f64(s.coverage),
                s.coverage_denominator.to_string(),
                s.degenerate_count.to_string(),
                s.clipped_count.to_string(),
            ]
        })
        .collect();
    write_table(&run.path("summary.csv"), &SUMMARY_COLUMNS, &summary)?;

    let mut long = Vec::new();
    for p in &result.pairs {
        let pair = format!("{}-{}", p.summary.r, p.summary.s);
        for e in &p.replicates {
            for (name, value) in [
                ("truth", Some(e.theta_true)),
                ("unadjusted", Some(e.theta_unadjusted)),
                ("adjusted", e.theta_adjusted),
            ] {
                long.push(vec![pair.clone(), e.replicate.to_string(), name.to_string(), fmt_f64(value)]);
            }
        }
    }
    write_table(&run.path("replicates.csv"), &["pair", "replicate", "estimator", "value"], &long)?;
    run.finish(&["report.json", "summary.csv", "replicates.csv"])
}

#[derive(Serialize)]
struct DiagnosticReport<'a> {
    schema_version: u32,
    command: &'static str,
    result: &'a DiagnosticResult,
}

pub const DIAGNOSTIC_COLUMNS: [&str; 17] = [
    "p", "n", "m", "theta_true", "pi_limit", "median", "q1", "q3", "iqr", "mean", "mean_bias",
    "median_bias", "relative_median_bias", "median_unadjusted", "degenerate_rate", "flagged",
    "breakpoint",
];

fn cmd_diagnose(common: &Common, est: &EstimatorFlags, replicates: Option<usize>, args: Vec<String>) -> Result<()> {
    let (mut cfg, cfg_path) = resolve(common, Some(est))?;
    if let Some(r) = replicates {
        cfg.replicates = r;
    }
    let diag = cfg.diagnostic()?;
    let mut run = Run::start("diagnose", common, &cfg, cfg_path.as_deref(), args)?;
    let result = run_diagnostic(&diag)?;
    run.lap("diagnose");
    write_json(
        &run.path("report.json"),
        &DiagnosticReport { schema_version: REPORT_SCHEMA_VERSION, command: "diagnose", result: &result },
    )?;
    let rows: Vec<Vec<String>> = result
        .rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(Some(r.p)),
                r.n.to_string(),
                r.m.to_string(),
                fmt_f64(Some(r.theta_true)),
                fmt_f64(Some(r.pi_limit)),
                fmt_f64(r.median),
                fmt_f64(r.q1),
                fmt_f64(r.q3),
                fmt_f64(r.iqr),
                fmt_f64(r.mean),
                fmt_f64(r.mean_bias),
                fmt_f64(r.median_bias),
                fmt_f64(r.relative_median_bias),
                fmt_f64(Some(r.median_unadjusted)),
                fmt_f64(Some(r.degenerate_rate)),
                u8::from(r.flagged).to_string(),
                fmt_f64(result.breakpoint),
            ]
        })
        .collect();
    write_table(&run.path("diagnostic.csv"), &DIAGNOSTIC_COLUMNS, &rows)?;
    let mut long = Vec::new();
    for (k, row) in result.rows.iter().enumerate() {
        let p = fmt_f64(Some(row.p));
        for (b, (adj, unadj)) in result.theta_adjusted[k].iter().zip(&result.theta_unadjusted[k]).enumerate() {
            long.push(vec![p.clone(), b.to_string(), "unadjusted".into(), fmt_f64(Some(*unadj))]);
            long.push(vec![p.clone(), b.to_string(), "adjusted".into(), fmt_f64(*adj)]);
        }
    }
    write_table(&run.path("replicates.csv"), &["p", "replicate", "estimator", "value"], &long)?;
    run.finish(&["report.json", "diagnostic.csv", "replicates.csv"])
}

fn cmd_dist2edges(common: &Common, matrix: &Path, threshold: Option<f64>, args: Vec<String>) -> Result<()> {
    let (mut cfg, cfg_path) = resolve(common, None)?;
    if threshold.is_some() {
        cfg.threshold = threshold;
    }
    let c = cfg
        .threshold
        .ok_or_else(|| Error::Config("a threshold is required (--threshold or config)".into()))?;
    let mut run = Run::start("dist2edges", common, &cfg, cfg_path.as_deref(), args)?;
    run.manifest.add_input(matrix)?;
    let de = distances_to_edges(matrix, c)?;
    run.manifest.notes.push(format!("edge iff distance < {c} (strict)"));
    write_labelled_edges(&run.path("edges.csv"), &de.labelled())?;
    run.finish(&["edges.csv"])
}
