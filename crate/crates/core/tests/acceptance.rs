//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Set `LINKRATE_ACCEPTANCE=smoke` for the reduced R = 100 profile.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use linkrate::config::Config;
use linkrate::estimators::{gamma_hat, pi_limit, unadjusted_theta, Backend};
use linkrate::experiments::{measure_ground_truth, run_diagnostic, run_simulation, ExperimentResult};
use linkrate::graph::{GroupedNetwork, Within};
use linkrate::io::{load_nodes_edges, write_edges_csv};
use linkrate::netgen::{generate_network_with, BlockDegreeMatrix, DegreeLawSpec, GeneratorOptions};
use linkrate::rng::stream_rng;
use linkrate::sampling::SampleIndex;
use linkrate::variance::{
    confidence_interval, delta_method, gradient, projections, sigma_gamma, theta_of, SizeInfo,
};
use rand::Rng;

use common::{adjacency, brute_force, config_path};

struct Outcome {
    pass: bool,
    detail: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self { pass: true, detail: Vec::new() }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.pass &= ok;
        self.detail.push(format!("{} {line}", if ok { "ok  " } else { "MISS" }));
    }
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let start = Instant::now();
    let mut out = f();
    let elapsed = start.elapsed();
    out.check(elapsed < limit, format!("runtime {:.1}s < {}s", elapsed.as_secs_f64(), limit.as_secs()));
    (out, elapsed)
}

fn random_two_group(seed: u64) -> (GroupedNetwork, Vec<(usize, usize)>) {
    let mut rng = stream_rng(seed, 0);
    let n = rng.random_range(8..=12);
    let split = rng.random_range(4..=n - 4);
    let density = rng.random_range(0.15..0.5);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random::<f64>() < density {
                edges.push((a, b));
            }
        }
    }
    let group_of = (0..n).map(|i| usize::from(i >= split)).collect();
    (GroupedNetwork::new(2, group_of, edges.clone()).unwrap(), edges)
}

fn criterion_1() -> Outcome {
    let mut out = Outcome::new();
    let mut networks = 0;
    let mut worst_exact: f64 = 0.0;
    let mut worst_mc: f64 = 0.0;
    for seed in 0..40u64 {
        let (net, edges) = random_two_group(1000 + seed);
        let adj = adjacency(net.num_nodes(), &edges);
        // even seeds: the whole network is the observed sample; odd: a drawn sample
        let sample = if seed % 2 == 0 {
            let sizes = net.group_sizes().iter().map(|n| 2 * n).collect();
            SampleIndex::whole(&net, &[0.5, 0.5], sizes).unwrap()
        } else {
            SampleIndex::draw(&net, &[0.5, 0.5], &mut stream_rng(seed, 1)).unwrap()
        };
        networks += 1;
        for r in 0..2 {
            for s in 0..2 {
                let exact = gamma_hat(&net, &sample, r, s, Backend::Exact).unwrap();
                let bf = brute_force(&adj, sample.group(r), sample.group(s), exact.shape.m_r, exact.shape.m_s, r == s);
                let h_exact = projections(&exact).h;
                worst_exact = worst_exact.max((exact.gamma1 - bf.gamma1).abs());
                for (h, want) in h_exact.iter().zip(&bf.h1) {
                    worst_exact = worst_exact.max((h[0] - want).abs());
                }
                let mc = gamma_hat(&net, &sample, r, s, Backend::MonteCarlo { replicates: 20_000, seed }).unwrap();
                worst_mc = worst_mc.max((mc.gamma1 - bf.gamma1).abs());
                for (h, want) in projections(&mc).h.iter().zip(&bf.h1) {
                    worst_mc = worst_mc.max((h[0] - want).abs());
                }
            }
        }
    }
    out.check(networks >= 20, format!("{networks} networks of 8-12 nodes, p = (0.5, 0.5)"));
    out.check(worst_exact <= 1e-12, format!("exact vs brute force: max |diff| {worst_exact:.2e} <= 1e-12"));
    out.check(worst_mc <= 0.01, format!("Monte Carlo B=20000 vs brute force: max |diff| {worst_mc:.4} <= 0.01"));
    out
}

fn criterion_2() -> Outcome {
    let mut out = Outcome::new();
    let n_s = 10_000;
    let observations = 10_000;
    for &d in &[1usize, 2, 5] {
        // group-0 nodes own disjoint blocks of d group-1 neighbours
        let n_r = observations / d;
        let group_of: Vec<usize> = (0..n_r).map(|_| 0).chain((0..n_s).map(|_| 1)).collect();
        let edges: Vec<(usize, usize)> =
            (0..n_r).flat_map(|i| (0..d).map(move |k| (i, n_r + i * d + k))).collect();
        let net = GroupedNetwork::new(2, group_of, edges).unwrap();
        for &p_s in &[0.3, 0.5, 0.8] {
            let mut hits = 0usize;
            for draw in 0..d {
                let mut rng = stream_rng(77 + d as u64, (p_s * 10.0) as u64 * 100 + draw as u64);
                let sample = SampleIndex::draw(&net, &[1.0, p_s], &mut rng).unwrap();
                for i in 0..n_r {
                    hits += usize::from(net.linkage_indicator(i, 1, Within::Subset(sample.view())).unwrap());
                }
            }
            let q = 1.0 - (1.0 - p_s).powi(d as i32);
            let emp = hits as f64 / observations as f64;
            let se = (q * (1.0 - q) / observations as f64).sqrt();
            out.check(
                (emp - q).abs() <= 3.0 * se,
                format!("d={d} p_s={p_s}: P(linked in sample) {emp:.4} vs {q:.4} (3 SE = {:.4})", 3.0 * se),
            );
        }
    }
    out
}

fn criterion_3() -> Outcome {
    let mut out = Outcome::new();
    let law = DegreeLawSpec::new(0.5, 2.5, 50).unwrap();
    let (net, _) = generate_network_with(
        &BlockDegreeMatrix::single(law.clone()),
        &[5000],
        &GeneratorOptions::default(),
        &mut stream_rng(303, 0),
    )
    .unwrap();
    let theta = measure_ground_truth(&net, 0, 0).unwrap();
    for &p in &[0.3, 0.6] {
        let draws = 200;
        let mut sum = 0.0;
        for b in 0..draws {
            let sample = SampleIndex::draw(&net, &[p], &mut stream_rng(304, b)).unwrap();
            sum += unadjusted_theta(&net, &sample, 0, 0).unwrap();
        }
        let mean = sum / draws as f64;
        let target = pi_limit(&law.conditional_law(), p).unwrap() * theta;
        out.check(
            (mean - target).abs() <= 0.02,
            format!("p={p}: mean θ̃ {mean:.4} vs π·θ = {target:.4} (θ = {theta:.4}), tolerance 0.02"),
        );
    }
    out
}

const TABLE_COVERAGE: [f64; 4] = [0.68, 0.74, 0.64, 0.47];

fn criterion_4(res: &ExperimentResult) -> Outcome {
    let mut out = Outcome::new();
    for (pair, want) in res.pairs.iter().zip(TABLE_COVERAGE) {
        let s = &pair.summary;
        let adj = s.mean_abs_bias_adjusted.unwrap_or(f64::INFINITY);
        out.check(
            adj < s.mean_abs_bias_unadjusted,
            format!("({},{}) (a) mean|bias| θ̂ {adj:.4} < θ̃ {:.4}", s.r, s.s, s.mean_abs_bias_unadjusted),
        );
        let up = s.upward_fraction.unwrap_or(0.0);
        out.check(up > 0.5, format!("({},{}) (b) upward fraction of θ̂ bias {up:.3} > 0.5", s.r, s.s));
        let cov = s.coverage.unwrap_or(f64::NAN);
        out.check(
            (cov - want).abs() <= 0.10,
            format!(
                "({},{}) (c) coverage {cov:.3} vs {want:.2} ± 0.10 (denominator {}, degenerate {})",
                s.r, s.s, s.coverage_denominator, s.degenerate_count
            ),
        );
    }
    out
}

fn criterion_6(res: &ExperimentResult) -> Outcome {
    let mut out = Outcome::new();
    for pair in &res.pairs {
        let s = &pair.summary;
        let (sd, se) = (s.sd_adjusted.unwrap_or(f64::NAN), s.mean_se_adjusted.unwrap_or(f64::NAN));
        let ratio = sd / se;
        out.check(
            ratio <= 1.5 && ratio >= 1.0 / 1.5,
            format!("({},{}) SD(θ̂) {sd:.4} vs mean se {se:.4}: ratio {ratio:.2} within factor 1.5", s.r, s.s),
        );
    }

    let mut rng = stream_rng(606, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let g2: f64 = rng.random_range(0.05..0.95);
        let gamma = [g2 * rng.random_range(0.05..1.0), g2, rng.random_range(0.05..0.95)];
        let phi = gradient(gamma);
        for k in 0..3 {
            let h = 1e-6 * gamma[k];
            let (mut up, mut dn) = (gamma, gamma);
            up[k] += h;
            dn[k] -= h;
            let fd = (theta_of(up) - theta_of(dn)) / (2.0 * h);
            worst = worst.max((fd - phi[k]).abs() / phi[k].abs());
        }
    }
    out.check(worst <= 1e-6, format!("gradient vs central differences at 100 points: max rel err {worst:.2e} <= 1e-6"));

    let law = DegreeLawSpec::new(0.5, 2.5, 20).unwrap();
    let (net, _) = generate_network_with(
        &BlockDegreeMatrix::single(law),
        &[40],
        &GeneratorOptions::default(),
        &mut stream_rng(607, 0),
    )
    .unwrap();
    let sample = SampleIndex::draw(&net, &[1.0], &mut stream_rng(607, 1)).unwrap();
    let g = gamma_hat(&net, &sample, 0, 0, Backend::Exact).unwrap();
    let sizes = SizeInfo { population_r: 40, n_r: 40, population_s: 40, n_s: 40, same_group: true };
    let se = delta_method(g.as_array(), &sigma_gamma(&projections(&g), &sizes).unwrap()).unwrap().se;
    let (lo, hi) = confidence_interval(theta_of(g.as_array()), se, 0.95).unwrap();
    out.check(se == 0.0 && lo == hi, format!("p = 1: se = {se} (exactly 0), interval [{lo}, {hi}]"));
    out
}

fn criterion_5() -> Outcome {
    let mut out = Outcome::new();
    let cfg = Config::from_path(&config_path("diagnostic_alpha3.json")).unwrap().diagnostic().unwrap();
    let res = run_diagnostic(&cfg).unwrap();
    for row in &res.rows {
        out.detail.push(format!(
            "     p={:.1}: median θ̂ {:.4}, θ {:.4}, relative median bias {:+.4}{}",
            row.p,
            row.median.unwrap_or(f64::NAN),
            row.theta_true,
            row.relative_median_bias.unwrap_or(f64::NAN),
            if row.flagged { "  flagged" } else { "" }
        ));
    }
    let bp = res.breakpoint;
    let contiguous = res.rows.iter().all(|r| r.flagged == bp.is_none_or(|b| r.p < b));
    out.check(res.rows.iter().any(|r| r.flagged), "low-p region flagged".into());
    out.check(contiguous, "flags are exactly the grid points below the breakpoint".into());
    out.check(
        bp.is_some_and(|b| (b - 0.40).abs() <= 0.10 + 1e-9),
        format!("breakpoint {bp:?} within 0.40 ± 0.10"),
    );
    out
}

fn run_cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_linkrate"))
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

const SMALL_SIM: &str = r#"{
    "groups": [{"name": "a", "size": 150, "p": 0.5}, {"name": "b", "size": 120, "p": 0.6}],
    "degree_laws": [
        [{"p_zero": 0.5, "alpha": 2.5}, {"p_zero": 0.6, "alpha": 2.6}],
        [{"p_zero": 0.55, "alpha": 2.6}, {"p_zero": 0.7, "alpha": 3.0}]
    ],
    "replicates": 5, "mc_subsamples": 300, "seed": 71
}"#;

const SMALL_DIAG: &str = r#"{
    "groups": [{"name": "all", "size": 400}],
    "degree_laws": [[{"p_zero": 0.5, "alpha": 3.0}]],
    "p_grid": [0.3, 0.6], "replicates": 4, "mc_subsamples": 300, "seed": 72
}"#;

// rows and columns a..e; edges iff d < 0.07: ab, ae, bd, cd, de
const MATRIX: &str = ",a,b,c,d,e
a,0,0.05,0.07,0.12,0.069
b,0.05,0,0.0701,0.01,0.3
c,0.07,0.0701,0,0,0.08
d,0.12,0.01,0,0,0.065
e,0.069,0.3,0.08,0.065,0
";

fn criterion_7() -> Outcome {
    let mut out = Outcome::new();
    let tmp = tempfile::tempdir().unwrap();
    let write = |name: &str, body: &str| {
        let p = tmp.path().join(name);
        std::fs::write(&p, body).unwrap();
        p.display().to_string()
    };
    let sim = write("sim.json", SMALL_SIM);
    let diag = write("diag.json", SMALL_DIAG);
    let matrix = write("dist.csv", MATRIX);
    let data = tmp.path().join("data");
    let data_s = data.display().to_string();
    let sampled_ok = run_cli(&["generate", "--config", &sim, "--out-dir", &data_s, "--sample"]);
    out.check(sampled_ok, "generate --sample succeeds".into());
    let nodes = data.join("nodes.csv").display().to_string();
    let edges = data.join("edges.csv").display().to_string();

    let o = tmp.path().join("out");
    let os = o.display().to_string();
    let commands: [Vec<&str>; 5] = [
        vec!["generate", "--config", &sim, "--out-dir", &os],
        vec!["estimate", "--nodes", &nodes, "--edges", &edges, "--out-dir", &os],
        vec!["simulate", "--config", &sim, "--out-dir", &os],
        vec!["diagnose", "--config", &diag, "--out-dir", &os],
        vec!["dist2edges", "--matrix", &matrix, "--threshold", "0.07", "--out-dir", &os],
    ];
    for args in &commands {
        let first_ok = run_cli(args);
        let first = if first_ok { snapshot(&o) } else { Vec::new() };
        let _ = std::fs::remove_dir_all(&o);
        let second_ok = run_cli(args);
        let second = if second_ok { snapshot(&o) } else { Vec::new() };
        let _ = std::fs::remove_dir_all(&o);
        out.check(
            first_ok && second_ok && first == second && !first.is_empty(),
            format!("{}: rerun byte-identical over {} files", args[0], first.len()),
        );
    }

    let full = tmp.path().join("full");
    let full_s = full.display().to_string();
    out.check(run_cli(&["generate", "--config", &sim, "--out-dir", &full_s]), "generate succeeds".into());
    let loaded = load_nodes_edges(&full.join("nodes.csv"), &full.join("edges.csv")).unwrap();
    let rewritten = tmp.path().join("rewritten.csv");
    write_edges_csv(&rewritten, &loaded.network, |_| true).unwrap();
    let original = std::fs::read(full.join("edges.csv")).unwrap();
    out.check(
        std::fs::read(&rewritten).unwrap() == original,
        format!("generate -> load -> write round-trips {} edges exactly", loaded.network.num_edges()),
    );

    let d2e = tmp.path().join("d2e");
    let d2e_s = d2e.display().to_string();
    let ran = run_cli(&["dist2edges", "--matrix", &matrix, "--threshold", "0.07", "--out-dir", &d2e_s]);
    let got = if ran { std::fs::read_to_string(d2e.join("edges.csv")).unwrap() } else { String::new() };
    let want = "id_a,id_b\na,b\na,e\nb,d\nc,d\nd,e\n";
    out.check(got == want, format!("dist2edges c=0.07 on 5x5 matrix: {:?}", got.lines().skip(1).collect::<Vec<_>>()));
    out
}

fn main() {
    let smoke = std::env::var("LINKRATE_ACCEPTANCE").is_ok_and(|v| v == "smoke");
    let mut rows: Vec<(u32, &str, Outcome, Duration)> = Vec::new();
    let mut push = |id, name, (o, t)| rows.push((id, name, o, t));

    push(1, "exact-oracle equivalence", timed(Duration::from_secs(60), criterion_1));
    push(2, "hypergeometric detection limit", timed(Duration::from_secs(60), criterion_2));
    push(3, "bias identity E[θ̃] = π·θ", timed(Duration::from_secs(120), criterion_3));

    let mut cfg = Config::from_path(&config_path("two_community.json")).unwrap().experiment().unwrap();
    let limit = if smoke {
        cfg.replicates = 100;
        Duration::from_secs(240)
    } else {
        Duration::from_secs(1200)
    };
    let start = Instant::now();
    let sim = run_simulation(&cfg).unwrap();
    let sim_time = start.elapsed();
    let mut c4 = criterion_4(&sim);
    c4.check(
        sim_time < limit,
        format!("runtime {:.1}s < {}s at R = {}", sim_time.as_secs_f64(), limit.as_secs(), cfg.replicates),
    );
    push(4, "two-community reproduction", (c4, sim_time));
    push(5, "diagnostic breakpoint", timed(Duration::from_secs(600), criterion_5));
    let (c6, t6) = timed(Duration::from_secs(60), || criterion_6(&sim));
    push(6, "variance sanity", (c6, t6));
    push(7, "determinism and IO", timed(Duration::from_secs(300), criterion_7));

    println!();
    let mut failed = 0;
    for (id, name, outcome, t) in &rows {
        println!("{} [{id}] {name} ({:.1}s)", if outcome.pass { "PASS" } else { "FAIL" }, t.as_secs_f64());
        for line in &outcome.detail {
            println!("       {line}");
        }
        failed += usize::from(!outcome.pass);
    }
    println!();
    println!("acceptance: {} passed, {failed} failed{}", rows.len() - failed, if smoke { " (smoke profile)" } else { "" });
    if failed > 0 {
        std::process::exit(1);
    }
}
