//! End-to-end acceptance checks, one line of output per criterion.
//! Runs without the libtest harness so the report is always printed.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use common::mean;
use mfcca::config::RunConfig;
use mfcca::fluctuation::{default_q_grid, SegmentationConfig};
use mfcca::network::{
    distance_matrix, mean_path_length, mst, rho_to_distance, rolling_mst, Edge, MetricOptions, MstParams, MstResult,
    PathMetric,
};
use mfcca::rho::{rho_matrices, rho_q};
use mfcca::spectrum::{analyze, singularity_spectrum, FitRange, ScalingExponents, SpectrumParams};
use mfcca::synth::{self, cascade_hurst};
use mfcca::tail::{classify_gamma, fit_tail, fit_tail_k, Regime, TailMethod};
use mfcca::window::RollingWindow;
use rand::Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(start: Instant, limit: Duration) -> Result<Duration, String> {
    let t = start.elapsed();
    if t <= limit {
        Ok(t)
    } else {
        Err(format!("took {t:.1?}, limit {limit:?}"))
    }
}

fn cascade_oracle() -> Outcome {
    let start = Instant::now();
    let params = SpectrumParams::default();
    let qs = [-3.0, -2.0, -1.0, 1.0, 2.0, 3.0];
    let mut worst_mean = 0.0f64;
    let mut worst_seed = 0.0f64;
    for p in [0.6, 0.7, 0.8] {
        let mut est = vec![Vec::new(); qs.len()];
        for seed in 0..20 {
            let x = synth::binomial_cascade(16, p, seed).map_err(|e| e.to_string())?;
            let a = analyze(&x, &params).map_err(|e| e.to_string())?;
            for (i, q) in qs.iter().enumerate() {
                est[i].push(a.exponents.at(*q).ok_or("missing q")?);
            }
        }
        for (i, q) in qs.iter().enumerate() {
            let want = cascade_hurst(*q, p);
            worst_mean = worst_mean.max((mean(&est[i]) - want).abs());
            for h in &est[i] {
                worst_seed = worst_seed.max((h - want).abs());
            }
        }
    }
    let t = within(start, Duration::from_secs(120))?;
    check(
        worst_mean <= 0.05,
        format!(
            "max |mean h(q) - analytic| = {worst_mean:.4} over 20 seeds (single-seed max {worst_seed:.3}), {t:.1?}"
        ),
    )
}

fn monofractal_collapse() -> Outcome {
    let start = Instant::now();
    let params = SpectrumParams::default();
    let (mut worst_h, mut worst_da) = (0.0f64, 0.0f64);
    for hurst in [0.3, 0.5, 0.7] {
        for seed in 0..20 {
            let x = synth::fgn(hurst, 1 << 16, seed).map_err(|e| e.to_string())?;
            let a = analyze(&x, &params).map_err(|e| e.to_string())?;
            worst_h = worst_h.max((a.exponents.at(2.0).ok_or("missing q=2")? - hurst).abs());
            worst_da = worst_da.max(a.spectrum.delta_alpha);
        }
    }
    let t = within(start, Duration::from_secs(120))?;
    check(
        worst_h <= 0.05 && worst_da <= 0.15,
        format!("max |h(2) - H| = {worst_h:.4}, max Δα = {worst_da:.4} over 60 series, {t:.1?}"),
    )
}

fn spectrum_algebra() -> Outcome {
    let q = default_q_grid();
    let exps = ScalingExponents {
        exponents: q.iter().map(|v| 0.5 - 0.05 * v).collect(),
        fit_r2: vec![1.0; q.len()],
        fit_range: FitRange::new(10, 100),
        non_scaling: vec![false; q.len()],
        negative_points: vec![0; q.len()],
        q_grid: q,
    };
    let sp = singularity_spectrum(&exps).map_err(|e| e.to_string())?;
    let (f_lo, f_hi) = (sp.f_alpha[0], *sp.f_alpha.last().unwrap());
    check(
        (sp.delta_alpha - 0.6).abs() <= 0.02 && (f_lo - 0.55).abs() <= 0.02 && (f_hi - 0.55).abs() <= 0.02,
        format!("Δα = {:.6}, f at ends = {f_lo:.6}, {f_hi:.6}, A = {:.2e}", sp.delta_alpha, sp.asymmetry),
    )
}

fn rho_battery() -> Outcome {
    let mut r = synth::rng(2024, 5);
    let mut failures = Vec::new();
    let mut worst_identity = 0.0f64;
    for case in 0..10_000u64 {
        let s = [10usize, 16, 25, 32, 50][r.random_range(0..5)];
        let len = s * r.random_range(4..20);
        let q = r.random_range(0.1..6.0);
        let c = r.random_range(-1.0..1.0);
        let (x, y) = synth::correlated_pair(c, len, case).map_err(|e| e.to_string())?;
        let cfg = SegmentationConfig::new(s).with_degree(r.random_range(1..4));
        let rho = |a: &[f64], b: &[f64]| rho_q(a, b, q, &cfg).map(|v| v.value).map_err(|e| e.to_string());
        let v = rho(&x, &y)?;
        let neg: Vec<f64> = x.iter().map(|a| -a).collect();
        let a = r.random_range(0.01..100.0) * if r.random_bool(0.5) { 1.0 } else { -1.0 };
        let b = r.random_range(-1e3..1e3);
        let affine: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let same = rho(&x, &x)?;
        let opposite = rho(&x, &neg)?;
        let flipped = rho(&neg, &y)?;
        let shifted = rho(&affine, &y)?;
        worst_identity = worst_identity.max((flipped + v).abs()).max((shifted - a.signum() * v).abs());
        if same != 1.0 || opposite != -1.0 {
            failures.push(format!("case {case}: identity {same}, negation {opposite}"));
        }
        if !(-1.0 - 1e-9..=1.0 + 1e-9).contains(&v) {
            failures.push(format!("case {case}: ρ = {v}"));
        }
    }
    check(
        failures.is_empty() && worst_identity <= 1e-9,
        format!(
            "10000 cases, {} violations, max sign/affine deviation {worst_identity:.2e}{}",
            failures.len(),
            failures.first().map(|f| format!(" ({f})")).unwrap_or_default()
        ),
    )
}

fn tail_oracle() -> Outcome {
    let g: Vec<f64> = (0..20)
        .map(|seed| {
            let x = synth::pareto(3.0, 50_000, seed).map_err(|e| e.to_string())?;
            fit_tail(&x, 0.02, TailMethod::Hill).map(|f| f.gamma).map_err(|e| e.to_string())
        })
        .collect::<Result<_, _>>()?;
    let m = mean(&g);
    let spread = g.iter().map(|v| (v - 3.0).abs()).fold(0.0, f64::max);
    let hand = fit_tail_k(&[8.0, 4.0, 2.0, 1.0], 3, TailMethod::Hill).map_err(|e| e.to_string())?.gamma;
    let hand_err = (hand - 3.0 / (6.0 * 2f64.ln())).abs();
    let regimes = classify_gamma(1.8) == Regime::LevyStable
        && classify_gamma(3.2) == Regime::Unstable
        && classify_gamma(2.0) == Regime::LevyStable;
    check(
        (m - 3.0).abs() <= 0.15 && hand_err <= 1e-12 && regimes,
        format!("mean γ = {m:.4} over 20 seeds (single-seed max dev {spread:.3}), 4-point error {hand_err:.1e}, boundary ok = {regimes}"),
    )
}

fn mst_exactness() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let d = common::random_distances(7, seed);
        let t = mst(&d).map_err(|e| e.to_string())?;
        worst = worst.max((t.total_weight - common::brute_force_weight(&d)).abs());
    }
    let mut r = synth::rng(77, 0);
    let mut worst_k = 0.0f64;
    for seed in 0..500 {
        let n = r.random_range(2..=64);
        let d = common::random_distances(n, 10_000 + seed);
        let t = mst(&d).map_err(|e| e.to_string())?;
        worst_k = worst_k.max((t.total_weight - common::kruskal_weight(&d)).abs() / t.total_weight);
    }
    let t = within(start, Duration::from_secs(60))?;
    check(
        worst <= 1e-12 && worst_k <= 1e-12,
        format!(
            "brute force max diff {worst:.1e} (100 × 16807 trees), Kruskal max rel diff {worst_k:.1e} (500), {t:.1?}"
        ),
    )
}

fn topology_closed_forms() -> Outcome {
    let ids = common::ids;
    let mut bad = Vec::new();
    for n in [4usize, 16, 128] {
        let star = MstResult::from_edges(ids(n), (1..n).map(|c| Edge { parent: 0, child: c, weight: 1.0 }).collect())
            .map_err(|e| e.to_string())?;
        let path =
            MstResult::from_edges(ids(n), (1..n).map(|c| Edge { parent: c - 1, child: c, weight: 1.0 }).collect())
                .map_err(|e| e.to_string())?;
        let (ls, lp) = (mean_path_length(&star, PathMetric::Hops), mean_path_length(&path, PathMetric::Hops));
        if ls != 2.0 * (n as f64 - 1.0) / n as f64 {
            bad.push(format!("star N={n}: {ls}"));
        }
        if lp != (n as f64 + 1.0) / 3.0 {
            bad.push(format!("path N={n}: {lp}"));
        }
        if star.degrees.iter().max() != Some(&(n - 1)) {
            bad.push(format!("star N={n}: k_max"));
        }
    }
    let ends = rho_to_distance(1.0) == Some(0.0)
        && rho_to_distance(0.0) == Some(2f64.sqrt())
        && rho_to_distance(-1.0) == Some(2.0);
    check(
        bad.is_empty() && ends,
        format!("star/path ⟨L⟩ exact for N = 4, 16, 128: {}; distance endpoints exact: {ends}", bad.is_empty()),
    )
}

fn n128_structure() -> Outcome {
    let n = 128;
    let len = 2880;
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let (x, y) = synth::correlated_pair(0.3, len, 500 + i as u64 / 2).unwrap();
            if i % 2 == 0 {
                x
            } else {
                y
            }
        })
        .collect();
    let ids = common::ids(n);
    let mut summary = Vec::new();
    for window in [0..1440, 1440..2880] {
        let views: Vec<&[f64]> = cols.iter().map(|c| &c[window.clone()]).collect();
        let mats = rho_matrices(&ids, &views, &[1.0, 4.0], &SegmentationConfig::new(10)).map_err(|e| e.to_string())?;
        for m in &mats {
            let upper = m.upper_triangle();
            let finite = upper.iter().all(|v| v.is_finite());
            let tree = mst(&distance_matrix(m).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            if upper.len() != 8128 || !finite || tree.edges.len() != 127 {
                return Err(format!("q = {}: {} entries, {} edges", m.q, upper.len(), tree.edges.len()));
            }
            summary.push(upper.len());
        }
    }
    Ok(format!("{} window matrices with 8128 entries and 127 tree edges each", summary.len()))
}

fn bundle_config(out: &Path, threads: usize) -> RunConfig {
    let mut cfg = RunConfig::from_toml(
        r#"
        seed = 42

        [[synthetic]]
        assets = ["CASC"]
        generator = { kind = "cascade", p = 0.7 }
        length = 131072

        [[synthetic]]
        assets = ["P1X", "P1Y"]
        generator = { kind = "correlated_pair", c = 0.8 }
        length = 131072

        [[synthetic]]
        assets = ["P2X", "P2Y"]
        generator = { kind = "correlated_pair", c = 0.5 }
        length = 131072

        [[synthetic]]
        assets = ["P3X", "P3Y"]
        generator = { kind = "correlated_pair", c = 0.2 }
        length = 131072

        [spectrum]
        [tails]
        [rho]
        [mst]
        "#,
    )
    .expect("bundle config");
    cfg.out_dir = out.to_path_buf();
    cfg.threads = threads;
    cfg
}

fn snapshot(dir: &Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    let mut files = std::collections::BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
            let mut bytes = std::fs::read(&p).unwrap();
            if rel == "manifest.json" {
                let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
                let obj = v.as_object_mut().unwrap();
                obj.remove("timings_ms");
                obj["config"].as_object_mut().unwrap().remove("out_dir");
                obj["config"].as_object_mut().unwrap().remove("threads");
                obj["report"].as_object_mut().unwrap().remove("out_dir");
                bytes = serde_json::to_vec(&v).unwrap();
            }
            files.insert(rel, bytes);
        }
    }
    files
}

fn end_to_end_determinism() -> Outcome {
    let start = Instant::now();
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut snaps = Vec::new();
    let mut samples = 0;
    for (i, threads) in [1usize, 1, 8].into_iter().enumerate() {
        let out = root.path().join(format!("run{i}"));
        let cfg = bundle_config(&out, threads);
        let t0 = Instant::now();
        let report = mfcca::pipeline::run(&cfg).map_err(|e| e.to_string())?;
        if t0.elapsed() > Duration::from_secs(300) {
            return Err(format!("run took {:.1?}", t0.elapsed()));
        }
        if !report.success() {
            return Err(format!("blocks failed: {:?}", report.blocks));
        }
        samples = report.inputs.iter().map(|i| i.rows).sum::<usize>();
        snaps.push(snapshot(&out));
    }
    let files = snaps[0].len();
    let identical = snaps[1] == snaps[0] && snaps[2] == snaps[0];
    let t = start.elapsed();
    check(
        identical && files > 100,
        format!("{samples} samples, {files} files byte-identical across runs and threads 1/8: {identical}, 3 runs in {t:.1?}"),
    )
}

fn hub_regime() -> Outcome {
    let day = 1440;
    let n = 16;
    let panel = common::hub_panel(n, 30 * day, 10 * day..20 * day, 0.7, 5);
    let params = MstParams {
        qs: vec![1.0, 4.0],
        scales: vec![10, 60],
        poly_degree: 2,
        direction: Default::default(),
        options: MetricOptions::default(),
        keep_edges: false,
    };
    let recs = rolling_mst(&panel, RollingWindow::new(2 * day, day).map_err(|e| e.to_string())?, &params)
        .map_err(|e| e.to_string())?;
    let grid = panel.grid();
    let (inside_from, inside_to) = (grid[10 * day + 2 * day - 1], grid[20 * day - 1]);
    let (mut k_in, mut k_out, mut l_in, mut l_out, mut k_after) = (vec![], vec![], vec![], vec![], vec![]);
    for r in &recs {
        let m = r.metrics.as_ref().ok_or("window without metrics")?;
        let end = r.window_end;
        let start = end - (2 * day as i64 - 1) * 60_000;
        if end >= inside_from && end <= inside_to {
            k_in.push(m.k_max as f64);
            l_in.push(m.mean_path_length);
        } else if end < grid[10 * day] || start >= grid[20 * day] {
            k_out.push(m.k_max as f64);
            l_out.push(m.mean_path_length);
            if start >= grid[20 * day] {
                k_after.push(m.k_max as f64);
            }
        }
    }
    let (ki, ko, li, lo, ka) = (mean(&k_in), mean(&k_out), mean(&l_in), mean(&l_out), mean(&k_after));
    check(
        ki >= 2.0 * ko && li < 0.75 * lo && ka < 0.5 * ki,
        format!("k_max inside {ki:.1} vs outside {ko:.1} (after {ka:.1}); ⟨L⟩ inside {li:.2} vs outside {lo:.2}"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("cascade oracle", cascade_oracle),
        ("monofractal collapse", monofractal_collapse),
        ("spectrum algebra", spectrum_algebra),
        ("rho properties", rho_battery),
        ("tail oracle", tail_oracle),
        ("MST exactness", mst_exactness),
        ("topology closed forms", topology_closed_forms),
        ("N = 128 structure", n128_structure),
        ("end-to-end determinism", end_to_end_determinism),
        ("hub regime transition", hub_regime),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
