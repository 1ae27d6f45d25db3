use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rvl_core::cli::lemmas::run_lemmas;
use rvl_core::cli::{run_experiment, write_run, CliError, ExperimentConfig, RunSummary};

const DEFAULT_OUT: &str = "rvl_out";

#[derive(Parser)]
#[command(name = "rvl", version, about = "Regret, Lyapunov and adaptive-control experiments")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config and write its CSV trace and summary.
    Run {
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (defaults to $RVL_OUT, then ./rvl_out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every *.cfg file in a directory and print a verdict table.
    Suite {
        dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the summation lemmas on random sequences.
    Lemmas {
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("RVL_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

fn execute(config: &Path, seed: Option<u64>, dir: &Path) -> Result<RunSummary, CliError> {
    let mut cfg = ExperimentConfig::from_file(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let output = run_experiment(&cfg)?;
    let name = format!("{}_seed{}", stem(config), cfg.seed);
    write_run(&cfg, &output, dir, &name)?;
    Ok(output.summary)
}

fn print_summary(summary: &RunSummary) {
    println!(
        "{} seed={} steps={} runtime={:.3}s",
        summary.kind, summary.seed, summary.steps, summary.runtime_seconds
    );
    for (name, value) in &summary.scalars {
        println!("  {name} = {value:.9e}");
    }
    for v in &summary.verdicts {
        println!("  [{}] {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
    }
    if let Some(reason) = &summary.aborted {
        println!("  aborted: {reason}");
    }
}

fn run(config: PathBuf, seed: Option<u64>, out: Option<PathBuf>) -> ExitCode {
    let dir = out_dir(out);
    match execute(&config, seed, &dir) {
        Ok(summary) => {
            print_summary(&summary);
            println!("output written to {}", dir.display());
            if summary.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("{}: {e}", config.display());
            ExitCode::from(2)
        }
    }
}

fn suite(dir: PathBuf, out: Option<PathBuf>) -> ExitCode {
    let out = out_dir(out);
    let mut configs: Vec<PathBuf> = match std::fs::read_dir(&dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "cfg"))
            .collect(),
        Err(e) => {
            eprintln!("cannot read {}: {e}", dir.display());
            return ExitCode::from(2);
        }
    };
    configs.sort();
    if configs.is_empty() {
        eprintln!("no .cfg files in {}", dir.display());
        return ExitCode::from(2);
    }
    let mut all_pass = true;
    println!("{:<32} {:<22} {:>8} {:>9}  verdict", "config", "kind", "steps", "runtime");
    for path in &configs {
        let name = stem(path);
        match execute(path, None, &out) {
            Ok(s) => {
                all_pass &= s.passed;
                let failed: Vec<&str> = s
                    .verdicts
                    .iter()
                    .filter(|v| !v.pass)
                    .map(|v| v.name.as_str())
                    .collect();
                let verdict = if s.passed {
                    "PASS".to_string()
                } else if let Some(reason) = &s.aborted {
                    format!("FAIL (aborted: {reason})")
                } else {
                    format!("FAIL ({})", failed.join(", "))
                };
                println!(
                    "{name:<32} {:<22} {:>8} {:>8.2}s  {verdict}",
                    s.kind, s.steps, s.runtime_seconds
                );
            }
            Err(e) => {
                all_pass = false;
                println!("{name:<32} {:<22} {:>8} {:>9}  ERROR {e}", "-", "-", "-");
            }
        }
    }
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn lemmas(trials: usize, seed: u64) -> ExitCode {
    let r = run_lemmas(trials, seed);
    let line = |name: &str, ok: bool, detail: String| {
        println!("[{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    };
    line(
        "sqrt_sum",
        r.sqrt_sum_violations == 0,
        format!("{} violations for T ≤ {}", r.sqrt_sum_violations, r.sqrt_sum_horizon),
    );
    line(
        "self_normalized",
        r.self_normalized_violations == 0,
        format!(
            "{} violations in {} trials, worst lhs/rhs {:.6}",
            r.self_normalized_violations, r.trials, r.worst_self_normalized_ratio
        ),
    );
    line(
        "corollary",
        r.corollary_violations == 0,
        format!(
            "{} violations in {} trials, worst lhs/rhs {:.6}",
            r.corollary_violations, r.trials, r.worst_corollary_ratio
        ),
    );
    if r.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    match Args::parse().command {
        Command::Run { config, seed, out } => run(config, seed, out),
        Command::Suite { dir, out } => suite(dir, out),
        Command::Lemmas { trials, seed } => lemmas(trials, seed),
    }
}
