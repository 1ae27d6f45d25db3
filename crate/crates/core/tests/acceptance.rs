//! Acceptance suite. Runs every criterion at its stated tolerance, prints
//! one PASS/FAIL line per criterion and exits nonzero if any fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use rvl_core::arena::{pe_certificate, pe_level, FeatureGen, RegressionStream};
use rvl_core::cli::{run_experiment, write_run, ExperimentConfig, RunSummary};
use rvl_core::numerics::{Matrix, SeededRng, Vector};
use rvl_core::oac::{dare_solve, DARE_MAX_ITER, DARE_TOLERANCE};

const CHECKPOINTS: [u64; 3] = [100, 1_000, 10_000];

struct Ctx {
    scratch: tempfile::TempDir,
    /// (config, seed) pairs whose CSVs were regenerated and compared.
    determinism_checked: usize,
    determinism_failures: Vec<String>,
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_file(&configs_dir().join(format!("{name}.cfg")))
        .unwrap_or_else(|e| panic!("{name}: {e}"));
    cfg.seed = seed;
    cfg
}

impl Ctx {
    /// Runs the config twice, writes both CSVs to disk and records whether
    /// the bytes agree.
    fn run(&mut self, name: &str, seed: u64) -> RunSummary {
        let cfg = load(name, seed);
        let mut bytes = Vec::new();
        let mut summary = None;
        for pass in ["first", "second"] {
            let out = run_experiment(&cfg).unwrap_or_else(|e| panic!("{name} seed {seed}: {e}"));
            let dir = self.scratch.path().join(pass);
            let written = write_run(&cfg, &out, &dir, &format!("{name}_{seed}")).unwrap();
            bytes.push(fs::read(&written.csv).unwrap());
            fs::remove_file(&written.csv).unwrap();
            summary.get_or_insert(out.summary);
        }
        self.determinism_checked += 1;
        if bytes[0] != bytes[1] {
            self.determinism_failures.push(format!("{name} seed {seed}"));
        }
        summary.unwrap()
    }
}

fn checkpoint(summary: &RunSummary, t: u64, key: &str) -> f64 {
    summary
        .checkpoints
        .iter()
        .find(|c| c.t == t)
        .and_then(|c| c.values.get(key).copied())
        .unwrap_or_else(|| panic!("missing checkpoint {key} at t = {t}"))
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

type Verdict = (bool, String);

fn regret_bound(ctx: &mut Ctx, factor: f64, name: &str) -> (Verdict, Vec<RunSummary>) {
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut pass = true;
    let mut runs = Vec::new();
    for seed in 0..10 {
        let s = ctx.run(name, seed);
        let g = s.scalar("grad_bound").unwrap();
        let d = s.scalar("diameter").unwrap();
        for t in CHECKPOINTS {
            let reg = checkpoint(&s, t, "regret");
            let bound = factor * g * d * (t as f64).sqrt();
            pass &= reg <= bound;
            worst = worst.max(reg / bound);
        }
        runs.push(s);
    }
    (
        (pass, format!("10 seeds x 3 prefixes, max Reg/({factor}GD√T) = {worst:.4e}")),
        runs,
    )
}

fn criterion_1_2(ctx: &mut Ctx) -> (Verdict, Verdict) {
    let (c1, runs) = regret_bound(ctx, 3.0, "convex_ogd");
    let mut pass = true;
    let mut detail = Vec::new();
    for (seed, s) in runs.iter().enumerate() {
        let avg: Vec<f64> = CHECKPOINTS
            .iter()
            .map(|&t| checkpoint(s, t, "regret") / t as f64)
            .collect();
        if !strictly_decreasing(&avg) {
            pass = false;
            detail.push(format!("seed {seed}: {avg:?}"));
        }
    }
    let c2 = if pass {
        let s = &runs[0];
        let avg: Vec<String> = CHECKPOINTS
            .iter()
            .map(|&t| format!("{:.3e}", checkpoint(s, t, "regret") / t as f64))
            .collect();
        (true, format!("Reg(T)/T strictly decreasing for 10 seeds (seed 0: {})", avg.join(" > ")))
    } else {
        (false, detail.join("; "))
    };
    (c1, c2)
}

fn criterion_3(ctx: &mut Ctx) -> Verdict {
    let ((pass, detail), runs) = regret_bound(ctx, 6.0, "adaptive_grad");
    let mut corollary_ok = true;
    let mut worst: f64 = 0.0;
    for s in &runs {
        let lhs = s.scalar("corollary_lhs").unwrap();
        let rhs = s.scalar("corollary_rhs").unwrap();
        corollary_ok &= lhs <= rhs;
        worst = worst.max(lhs / rhs);
    }
    (
        pass && corollary_ok,
        format!("{detail}; corollary max lhs/(2G√T) = {worst:.4e}"),
    )
}

fn criterion_4(ctx: &mut Ctx) -> Verdict {
    let mut pass = true;
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let s = ctx.run("strongly_convex", seed);
        let r: Vec<f64> = CHECKPOINTS
            .iter()
            .map(|&t| checkpoint(&s, t, "regret") / (t as f64).ln())
            .collect();
        let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        pass &= lo > 0.0 && hi <= 3.0 * lo;
        worst = worst.max(hi / lo);
    }
    (pass, format!("10 seeds, worst max/min of Reg(T)/ln T = {worst:.4} (limit 3)"))
}

fn criterion_5(ctx: &mut Ctx) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, alpha) in [("normalized_alpha05", 0.5), ("normalized_alpha10", 1.0), ("normalized_alpha19", 1.9)] {
        let s = ctx.run(name, 0);
        let max_dv = s.scalar("max_dV").unwrap();
        let sum_e2 = s.scalar("sum_e2").unwrap();
        let v1 = s.scalar("V1").unwrap();
        let x_max = s.scalar("x_max").unwrap();
        let c1 = (1.0 + x_max * x_max) / (alpha * (2.0 - alpha));
        let tail = s.scalar("tail_abs_e").unwrap();
        let ok = max_dv <= 1e-12 && sum_e2 <= c1 * v1 && tail <= 1e-6;
        pass &= ok;
        parts.push(format!(
            "α={alpha}: maxΔV={max_dv:.1e} Σe²={sum_e2:.3e}≤{:.3e} tail|e|={tail:.1e}",
            c1 * v1
        ));
    }
    (pass, parts.join("; "))
}

fn criterion_6(ctx: &mut Ctx) -> Verdict {
    // persistently exciting case
    let pe = load("pe_cycling", 0);
    let mut stream = RegressionStream::clean(
        pe.theta_star.clone(),
        FeatureGen::cycling_basis(pe.n, 1.0).unwrap(),
    )
    .unwrap();
    let xs: Vec<Vector> = (1..=pe.horizon).map(|t| stream.emit(t).unwrap().x).collect();
    let level = pe_level(&xs, pe.pe_window).unwrap();
    let cert = pe_certificate(&xs, pe.pe_window, 0.5).unwrap();
    let s = ctx.run("pe_cycling", 0);
    let errs: Vec<f64> = CHECKPOINTS.iter().map(|&t| checkpoint(&s, t, "theta_err")).collect();
    let slope = s.scalar("log_theta_err_slope").unwrap();
    let pe_ok = cert.verdict && level >= 0.5 && strictly_decreasing(&errs) && slope < 0.0;

    // constant direction: no excitation orthogonal to (1, 0)
    let flat = load("pe_constant", 0);
    let u = Vector::new(vec![1.0, 0.0]).unwrap();
    let tilde1 = flat.theta_init.sub(&flat.theta_star).unwrap();
    let orthogonal = tilde1.axpy(-tilde1.dot(&u).unwrap(), &u).unwrap().norm();
    let s2 = ctx.run("pe_constant", 0);
    let first = s2.scalar("initial_theta_err").unwrap();
    let last = s2.scalar("final_theta_err").unwrap();
    let tail = s2.scalar("tail_abs_e").unwrap();
    let certified = s2.scalar("pe_certified").unwrap() > 0.0;
    let flat_ok = !certified && orthogonal > 0.0 && tail <= 1e-6 && last >= 0.1 * first;

    (
        pe_ok && flat_ok,
        format!(
            "PE: β level {level:.3}, ‖θ̃‖ {:.3e} > {:.3e} > {:.3e}, slope {slope:.2e}; \
             constant: certified={certified}, tail|e|={tail:.1e}, ‖θ̃_T‖/‖θ̃_1‖={:.3}",
            errs[0],
            errs[1],
            errs[2],
            last / first
        ),
    )
}

fn criterion_7(ctx: &mut Ctx) -> Verdict {
    let mut pass = true;
    let mut worst_theta: f64 = 0.0;
    let mut worst_e: f64 = 0.0;
    let mut sign_violations = Vec::new();
    for kind in ["zero", "uniform", "sinusoid", "alternating"] {
        for seed in 0..5 {
            let s = ctx.run(&format!("disturbed_{kind}"), seed);
            let radius = s.scalar("set_radius").unwrap();
            let sup_theta = s.scalar("sup_theta_norm").unwrap();
            let sup_e = s.scalar("sup_abs_e").unwrap();
            let sign = s.verdict("sigma_sign").unwrap();
            pass &= s.horizon == 100_000 && sup_theta <= 10.0 * radius && sup_e <= 1e3 && sign.pass;
            if !sign.pass {
                sign_violations.push(format!("{kind}/{seed}: {}", sign.detail));
            }
            worst_theta = worst_theta.max(sup_theta / radius);
            worst_e = worst_e.max(sup_e);
        }
    }
    (
        pass,
        format!(
            "4 kinds x 5 seeds, T=1e5: max sup‖θ̂‖/R = {worst_theta:.3} (≤10), max sup|e| = {worst_e:.3} (≤1e3), σ-sign violations: {}",
            if sign_violations.is_empty() { "none".into() } else { sign_violations.join(", ") }
        ),
    )
}

fn criterion_8(ctx: &mut Ctx) -> Verdict {
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_rvl"))
            .args(["lemmas", "--trials", "10000"])
            .output()
            .expect("rvl binary runs")
    };
    let out = run();
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    let zero_violations = stdout.lines().filter(|l| l.contains(": 0 violations")).count();
    let again = run();
    ctx.determinism_checked += 1;
    if again.stdout != out.stdout {
        ctx.determinism_failures.push("lemmas".into());
    }
    (
        out.status.success() && zero_violations == 3,
        stdout.lines().map(str::trim).collect::<Vec<_>>().join(" | "),
    )
}

/// Positive root of b²p² + βp − qr = 0, with β = r(1 − a²) − q b², in the
/// cancellation-free form.
fn scalar_dare_oracle(a: f64, b: f64, q: f64, r: f64) -> f64 {
    let beta = r * (1.0 - a * a) - q * b * b;
    let disc = (beta * beta + 4.0 * b * b * q * r).sqrt();
    if beta >= 0.0 {
        2.0 * q * r / (beta + disc)
    } else {
        (-beta + disc) / (2.0 * b * b)
    }
}

fn criterion_9(_: &mut Ctx) -> Verdict {
    let s = |v: f64| Matrix::new(1, 1, vec![v]).unwrap();
    let mut rng = SeededRng::new(2024);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..100 {
        let a = rng.uniform_in(-2.0, 2.0);
        let sign = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
        let b = sign * rng.uniform_in(0.1, 2.0);
        let q = rng.uniform_in(0.1, 2.0);
        let r = rng.uniform_in(0.1, 2.0);
        let oracle = scalar_dare_oracle(a, b, q, r);
        match dare_solve(&s(a), &s(b), &s(q), &s(r), DARE_TOLERANCE, DARE_MAX_ITER) {
            Ok(sol) => {
                let err = (sol.p.get(0, 0) - oracle).abs() / oracle.max(1.0);
                worst = worst.max(err);
                if err > 1e-9 {
                    failures += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    let golden = dare_solve(&s(1.0), &s(1.0), &s(1.0), &s(1.0), DARE_TOLERANCE, DARE_MAX_ITER)
        .map(|sol| (sol.p.get(0, 0) - (1.0 + 5f64.sqrt()) / 2.0).abs())
        .unwrap_or(f64::INFINITY);
    (
        failures == 0 && golden <= 1e-9,
        format!(
            "100 random systems: {failures} mismatches, worst relative error {worst:.2e}; golden-ratio error {golden:.2e}"
        ),
    )
}

fn criterion_10(ctx: &mut Ctx) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["oac_scalar", "oac_two_state"] {
        let runs: Vec<RunSummary> = (0..10).map(|seed| ctx.run(name, seed)).collect();
        let medians: Vec<f64> = CHECKPOINTS
            .iter()
            .map(|&t| median(runs.iter().map(|s| checkpoint(s, t, "reg_oac_per_step")).collect()))
            .collect();
        let worst_est = runs
            .iter()
            .map(|s| s.scalar("estimate_error").unwrap())
            .fold(0.0, f64::max);
        let stable = runs.iter().all(|s| s.aborted.is_none());
        let ok = stable && strictly_decreasing(&medians) && worst_est <= 0.05;
        pass &= ok;
        parts.push(format!(
            "{name}: median Reg/T {:.3e} > {:.3e} > {:.3e}, max estimate error {worst_est:.3e}",
            medians[0], medians[1], medians[2]
        ));
    }
    (pass, parts.join("; "))
}

fn criterion_11(ctx: &mut Ctx) -> Verdict {
    (
        ctx.determinism_failures.is_empty(),
        format!(
            "{} runs regenerated, {} byte mismatches{}",
            ctx.determinism_checked,
            ctx.determinism_failures.len(),
            if ctx.determinism_failures.is_empty() {
                String::new()
            } else {
                format!(": {}", ctx.determinism_failures.join(", "))
            }
        ),
    )
}

type Row = (u8, &'static str, Verdict, f64);

fn timed(results: &mut Vec<Row>, id: u8, name: &'static str, ctx: &mut Ctx, f: fn(&mut Ctx) -> Verdict) {
    let t0 = Instant::now();
    let v = f(ctx);
    results.push((id, name, v, t0.elapsed().as_secs_f64()));
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut ctx = Ctx {
        scratch: tempfile::tempdir().expect("scratch directory"),
        determinism_checked: 0,
        determinism_failures: Vec::new(),
    };
    let mut results: Vec<Row> = Vec::new();

    // criteria 1 and 2 share their runs and report the shared time
    let t0 = Instant::now();
    let (c1, c2) = criterion_1_2(&mut ctx);
    let shared = t0.elapsed().as_secs_f64();
    results.push((1, "projected OGD regret bound", c1, shared));
    results.push((2, "vanishing average regret", c2, shared));
    timed(&mut results, 3, "adaptive-gradient regret and corollary", &mut ctx, criterion_3);
    timed(&mut results, 4, "strongly convex logarithmic regret", &mut ctx, criterion_4);
    timed(&mut results, 5, "normalized descent and convergence", &mut ctx, criterion_5);
    timed(&mut results, 6, "excitation and parameter convergence", &mut ctx, criterion_6);
    timed(&mut results, 7, "sigma-modification robustness", &mut ctx, criterion_7);
    timed(&mut results, 8, "summation lemmas", &mut ctx, criterion_8);
    timed(&mut results, 9, "Riccati oracle", &mut ctx, criterion_9);
    timed(&mut results, 10, "adaptive LQR sublinear regret", &mut ctx, criterion_10);
    timed(&mut results, 11, "determinism", &mut ctx, criterion_11);

    let mut all = true;
    for (id, name, (pass, detail), secs) in &results {
        all &= pass;
        println!(
            "criterion {id:>2} [{}] {name} ({secs:.1}s): {detail}",
            if *pass { "PASS" } else { "FAIL" }
        );
    }
    println!(
        "acceptance: {}/{} criteria passed in {:.1}s",
        results.iter().filter(|r| (r.2).0).count(),
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
