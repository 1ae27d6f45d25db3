//! Wires a configuration to its stream, learner and metrics, and turns the
//! outcome into a trace plus a summary of bound verdicts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{DisturbanceKind, ExperimentConfig, ExperimentKind, FeatureSpec};
use super::csv::{emit_csv, OacRow, RegressionRow, Trace};
use super::CliError;
use crate::arena::{pe_certificate, CenterStream, DisturbanceGen, FeatureGen, RegressionStream};
use crate::learners::{OnlineLearner, RateSchedule, SigmaRule, UpdateLaw};
use crate::losses::{squared_error_grad_bound, LossFn};
use crate::metrics::{
    bound_holds, corollary_bound, fit_slope, hindsight_optimum, telescoping_sum, RegretLedger,
};
use crate::numerics::{SeededRng, Vector};
use crate::oac::{oac_rollout, CostWeights, PlantModel, RolloutConfig};

pub const LYAPUNOV_SLACK: f64 = 1e-12;
pub const TAIL_ERROR_LEVEL: f64 = 1e-6;
pub const ESTIMATE_BLOWUP_FACTOR: f64 = 10.0;
pub const ERROR_BLOWUP_LEVEL: f64 = 1e3;
pub const LOG_RATIO_LIMIT: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: u64,
    pub values: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub kind: String,
    pub seed: u64,
    pub horizon: u64,
    pub steps: u64,
    pub runtime_seconds: f64,
    pub scalars: BTreeMap<String, f64>,
    pub checkpoints: Vec<Checkpoint>,
    pub verdicts: Vec<Verdict>,
    pub aborted: Option<String>,
    pub passed: bool,
}

impl RunSummary {
    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.scalars.get(name).copied()
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    /// Value recorded under `name` at every checkpoint, in order.
    pub fn checkpoint_series(&self, name: &str) -> Vec<f64> {
        self.checkpoints
            .iter()
            .filter_map(|c| c.values.get(name).copied())
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub trace: Trace,
}

struct Builder {
    scalars: BTreeMap<String, f64>,
    checkpoints: Vec<Checkpoint>,
    verdicts: Vec<Verdict>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            scalars: BTreeMap::new(),
            checkpoints: Vec::new(),
            verdicts: Vec::new(),
        }
    }

    fn scalar(&mut self, name: &str, v: f64) {
        self.scalars.insert(name.into(), v);
    }

    fn checkpoint(&mut self, t: u64, values: &[(&str, f64)]) {
        self.checkpoints.push(Checkpoint {
            t,
            values: values.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        });
    }

    fn verdict(&mut self, name: &str, pass: bool, detail: String) {
        self.verdicts.push(Verdict {
            name: name.into(),
            pass,
            detail,
        });
    }
}

fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

fn feature_gen(cfg: &ExperimentConfig, rng: SeededRng) -> crate::Result<FeatureGen> {
    match &cfg.features {
        FeatureSpec::CyclingBasis { scale } => FeatureGen::cycling_basis(cfg.n, *scale),
        FeatureSpec::GaussianClipped { x_max } => FeatureGen::gaussian_clipped(cfg.n, *x_max, rng),
        FeatureSpec::SinusoidBank {
            frequencies,
            amplitudes,
        } => FeatureGen::sinusoid_bank(frequencies.clone(), amplitudes.clone()),
        FeatureSpec::ConstantDirection { direction } => {
            FeatureGen::constant_direction(direction.clone())
        }
    }
}

fn disturbance_gen(cfg: &ExperimentConfig, rng: SeededRng) -> DisturbanceGen {
    let bound = cfg.d;
    match cfg.disturbance {
        DisturbanceKind::Zero => DisturbanceGen::Zero,
        DisturbanceKind::Uniform => DisturbanceGen::Uniform { bound, rng },
        DisturbanceKind::Sinusoid => DisturbanceGen::Sinusoid {
            bound,
            frequency: cfg.disturbance_freq,
        },
        DisturbanceKind::Alternating => DisturbanceGen::Alternating { bound },
        DisturbanceKind::Gaussian => DisturbanceGen::GaussianClipped { bound, rng },
    }
}

/// Everything the verdicts need from the online rounds.
struct Rounds {
    ledger: RegretLedger,
    etas: Vec<f64>,
    /// Prediction error per round, NaN when the round has no target.
    errors: Vec<f64>,
    sigmas: Vec<f64>,
    grad_norms: Vec<f64>,
    /// θ̂_1 … θ̂_{T+1}.
    iterates: Vec<Vector>,
    features: Vec<Vector>,
}

fn run_rounds(
    horizon: u64,
    learner: &mut OnlineLearner,
    mut next_loss: impl FnMut(u64) -> crate::Result<LossFn>,
) -> crate::Result<Rounds> {
    let cap = horizon as usize;
    let mut r = Rounds {
        ledger: RegretLedger::new(),
        etas: Vec::with_capacity(cap),
        errors: Vec::with_capacity(cap),
        sigmas: Vec::with_capacity(cap),
        grad_norms: Vec::with_capacity(cap),
        iterates: Vec::with_capacity(cap + 1),
        features: Vec::new(),
    };
    r.iterates.push(learner.estimate().theta_hat.clone());
    for t in 1..=horizon {
        let loss = next_loss(t)?;
        let out = learner.observe(&loss)?;
        r.etas.push(out.eta);
        r.sigmas.push(out.sigma);
        r.grad_norms.push(out.record.gradient.norm());
        r.errors
            .push(out.record.context.as_ref().map_or(f64::NAN, |c| c.e));
        if let Some(x) = loss.features() {
            r.features.push(x.clone());
        }
        r.ledger.push(out.record, loss, &out.theta_before)?;
        r.iterates.push(learner.estimate().theta_hat.clone());
    }
    Ok(r)
}

impl Rounds {
    fn theta_errors(&self, theta_star: &Vector) -> crate::Result<Vec<f64>> {
        self.iterates
            .iter()
            .map(|th| Ok(th.sub(theta_star)?.norm_sq()))
            .collect()
    }

    /// Builds CSV rows with reg_partial measured against `comparator`.
    fn rows(&self, v: &[f64], comparator: &Vector) -> crate::Result<Vec<RegressionRow>> {
        let mut reg = 0.0;
        let mut rows = Vec::with_capacity(self.etas.len());
        for (i, (rec, loss)) in self
            .ledger
            .records()
            .iter()
            .zip(self.ledger.losses())
            .enumerate()
        {
            reg += rec.loss_value - loss.eval(comparator)?;
            rows.push(RegressionRow {
                t: rec.t,
                eta: self.etas[i],
                loss: rec.loss_value,
                e: self.errors[i],
                v: v[i],
                dv: v[i + 1] - v[i],
                reg_partial: reg,
            });
        }
        Ok(rows)
    }
}

fn regression_stream(cfg: &ExperimentConfig, root: &SeededRng) -> crate::Result<RegressionStream> {
    RegressionStream::new(
        cfg.theta_star.clone(),
        feature_gen(cfg, root.derive(1))?,
        disturbance_gen(cfg, root.derive(2)),
    )
}

/// G from the declared stream and set bounds, unless configured.
pub fn resolved_grad_bound(cfg: &ExperimentConfig) -> f64 {
    cfg.grad_bound.unwrap_or_else(|| {
        let y_max = cfg.theta_star.norm() * cfg.x_max() + cfg.d;
        squared_error_grad_bound(cfg.x_max(), y_max, cfg.set.diameter(), cfg.set.max_norm())
    })
}

fn run_convex(cfg: &ExperimentConfig, b: &mut Builder) -> crate::Result<Trace> {
    let root = SeededRng::new(cfg.seed);
    let set = cfg.set.clone();
    let diameter = set.diameter();
    let adaptive = cfg.kind == ExperimentKind::AdaptiveGrad;
    let strongly = cfg.kind == ExperimentKind::StronglyConvex;

    let (schedule, grad_bound) = match cfg.kind {
        ExperimentKind::ConvexOgd => {
            let g = resolved_grad_bound(cfg);
            (RateSchedule::sqrt_t(diameter, g)?, g)
        }
        ExperimentKind::AdaptiveGrad => {
            let g = resolved_grad_bound(cfg);
            (RateSchedule::adaptive_grad(diameter, cfg.eps_floor)?, g)
        }
        _ => (
            RateSchedule::inverse_t(cfg.inverse_t_c)?,
            cfg.mu * (diameter + cfg.center_spread + cfg.theta_star.norm()),
        ),
    };
    let mut learner = OnlineLearner::new(
        cfg.theta_init.clone(),
        schedule,
        UpdateLaw::Projected(set.clone()),
    )?;

    let rounds = if strongly {
        let mut centers = CenterStream::new(cfg.theta_star.clone(), cfg.center_spread, root.derive(3))?;
        run_rounds(cfg.horizon, &mut learner, |_| {
            LossFn::strongly_convex_quadratic(centers.next_center()?, cfg.mu)
        })?
    } else {
        let mut stream = regression_stream(cfg, &root)?;
        run_rounds(cfg.horizon, &mut learner, |t| {
            let s = stream.emit(t)?;
            LossFn::squared_error(s.x, s.y)
        })?
    };

    let theta_bar = hindsight_optimum(&rounds.ledger, &set)?;
    let v = rounds.theta_errors(&cfg.theta_star)?;
    let rows = rounds.rows(&v, &theta_bar)?;
    let regret = rows.last().map_or(0.0, |r| r.reg_partial);

    b.scalar("diameter", diameter);
    b.scalar("grad_bound", grad_bound);
    b.scalar("regret", regret);
    b.scalar("online_loss", rounds.ledger.online_loss());
    b.scalar("final_theta_err", v[v.len() - 1].sqrt());

    let bound_factor = if adaptive { 6.0 } else { 3.0 };
    let mut avg = Vec::new();
    let mut log_ratio = Vec::new();
    let mut bound_ok = true;
    for &t in &cfg.checkpoints {
        let prefix = rounds.ledger.prefix(t as usize);
        let bar = hindsight_optimum(&prefix, &set)?;
        let reg = prefix.online_loss() - prefix.loss_at(&bar)?;
        let bound = bound_factor * grad_bound * diameter * (t as f64).sqrt();
        avg.push(reg / t as f64);
        if strongly {
            let ratio = reg / (t as f64).ln();
            log_ratio.push(ratio);
            b.checkpoint(t, &[("regret", reg), ("regret_over_log_t", ratio)]);
        } else {
            bound_ok &= bound_holds(reg, bound);
            b.checkpoint(
                t,
                &[("regret", reg), ("bound", bound), ("average_regret", reg / t as f64)],
            );
        }
    }

    let outside = rounds
        .iterates
        .iter()
        .filter(|th| !set.contains(th).unwrap_or(false))
        .count();
    b.verdict(
        "iterates_in_set",
        outside == 0,
        format!("{outside} iterates outside the set"),
    );

    if strongly {
        let (lo, hi) = log_ratio
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r)));
        let pass = lo > 0.0 && hi <= LOG_RATIO_LIMIT * lo;
        b.verdict(
            "log_regret_ratio",
            pass,
            format!("Reg(t)/ln t spans [{lo:.6e}, {hi:.6e}] across checkpoints, limit ratio {LOG_RATIO_LIMIT}"),
        );
        return Ok(Trace::Regression(rows));
    }

    b.verdict(
        "regret_bound",
        bound_ok,
        format!("Reg(t) ≤ {bound_factor}·G·D·√t at every checkpoint"),
    );
    if !adaptive {
        b.verdict(
            "average_regret_decreasing",
            strictly_decreasing(&avg),
            format!("Reg(t)/t at checkpoints: {avg:?}"),
        );
    }
    let max_grad = rounds.grad_norms.iter().copied().fold(0.0, f64::max);
    b.scalar("max_grad_norm", max_grad);
    b.verdict(
        "gradient_bound",
        max_grad <= grad_bound,
        format!("max ‖∇ℓ_t‖ = {max_grad:.6e}, G = {grad_bound:.6e}"),
    );
    let (tele_lhs, tele_rhs) = telescoping_sum(
        &rounds.iterates[..rounds.etas.len()],
        &rounds.etas,
        &theta_bar,
        diameter,
    )?;
    b.verdict(
        "telescoping",
        bound_holds(tele_lhs, tele_rhs),
        format!("{tele_lhs:.6e} ≤ D²/η_T = {tele_rhs:.6e}"),
    );
    if adaptive {
        match corollary_bound(&rounds.grad_norms, grad_bound) {
            Ok((lhs, rhs)) => {
                b.scalar("corollary_lhs", lhs);
                b.scalar("corollary_rhs", rhs);
                b.verdict(
                    "corollary_bound",
                    bound_holds(lhs, rhs),
                    format!("Σ‖g_t‖²/√(Σ_τ≤t ‖g_τ‖²) = {lhs:.6e} ≤ 2G√T = {rhs:.6e}"),
                );
            }
            Err(e) => b.verdict("corollary_bound", false, e.to_string()),
        }
    }
    Ok(Trace::Regression(rows))
}

fn run_normalized(cfg: &ExperimentConfig, b: &mut Builder) -> crate::Result<Trace> {
    let root = SeededRng::new(cfg.seed);
    let disturbed = cfg.kind == ExperimentKind::DisturbedSigmaMod;
    let law = if disturbed {
        UpdateLaw::Leaky(SigmaRule::new(cfg.sigma, cfg.set.clone())?)
    } else {
        UpdateLaw::Vanilla
    };
    let mut learner = OnlineLearner::new(
        cfg.theta_init.clone(),
        RateSchedule::normalized(cfg.alpha, cfg.m)?,
        law,
    )?;
    let mut stream = regression_stream(cfg, &root)?;
    let x_max = stream.x_max();
    let rounds = run_rounds(cfg.horizon, &mut learner, |t| {
        let s = stream.emit(t)?;
        LossFn::squared_error(s.x, s.y)
    })?;
    let v = rounds.theta_errors(&cfg.theta_star)?;
    let comparator = if disturbed {
        hindsight_optimum(&rounds.ledger, &cfg.set)?
    } else {
        cfg.theta_star.clone()
    };
    let rows = rounds.rows(&v, &comparator)?;

    let horizon = cfg.horizon as usize;
    let max_dv = rows.iter().map(|r| r.dv).fold(f64::NEG_INFINITY, f64::max);
    let sum_e2: f64 = rounds.errors.iter().map(|e| e * e).sum();
    let tail_e = rounds.errors[horizon / 2..]
        .iter()
        .map(|e| e.abs())
        .fold(0.0, f64::max);
    let sup_e = rounds.errors.iter().map(|e| e.abs()).fold(0.0, f64::max);
    b.scalar("regret", rows.last().map_or(0.0, |r| r.reg_partial));
    b.scalar("max_dV", max_dv);
    b.scalar("sum_e2", sum_e2);
    b.scalar("V1", v[0]);
    b.scalar("tail_abs_e", tail_e);
    b.scalar("sup_abs_e", sup_e);
    b.scalar("x_max", x_max);
    b.scalar("initial_theta_err", v[0].sqrt());
    b.scalar("final_theta_err", v[horizon].sqrt());
    for &t in &cfg.checkpoints {
        b.checkpoint(t, &[("theta_err", v[t as usize - 1].sqrt())]);
    }

    if disturbed {
        let radius = cfg.set.max_norm();
        let sup_theta = rounds.iterates.iter().map(|th| th.norm()).fold(0.0, f64::max);
        let mut active = 0usize;
        let mut violations = 0usize;
        for (th, &sigma) in rounds.iterates.iter().zip(&rounds.sigmas) {
            if sigma > 0.0 {
                active += 1;
                let tilde = th.sub(&cfg.theta_star)?;
                if !(th.dot(&tilde)? > 0.0) {
                    violations += 1;
                }
            }
        }
        b.scalar("set_radius", radius);
        b.scalar("sup_theta_norm", sup_theta);
        b.scalar("sigma_active_steps", active as f64);
        b.verdict(
            "bounded_estimates",
            sup_theta <= ESTIMATE_BLOWUP_FACTOR * radius,
            format!("sup ‖θ̂_t‖ = {sup_theta:.6e}, limit {:.6e}", ESTIMATE_BLOWUP_FACTOR * radius),
        );
        b.verdict(
            "bounded_error",
            sup_e <= ERROR_BLOWUP_LEVEL,
            format!("sup |e_t| = {sup_e:.6e}, limit {ERROR_BLOWUP_LEVEL:e}"),
        );
        b.verdict(
            "sigma_sign",
            violations == 0,
            format!("{violations} of {active} leaky steps with θ̂ᵀθ̃ ≤ 0"),
        );
        return Ok(Trace::Regression(rows));
    }

    let c1 = (cfg.m + x_max * x_max) / (cfg.alpha * (2.0 - cfg.alpha));
    b.scalar("c1", c1);
    b.verdict(
        "lyapunov_descent",
        max_dv <= LYAPUNOV_SLACK,
        format!("max ΔV = {max_dv:.6e}"),
    );
    b.verdict(
        "square_summable",
        bound_holds(sum_e2, c1 * v[0]),
        format!("Σe² = {sum_e2:.6e} ≤ c1·V1 = {:.6e}", c1 * v[0]),
    );

    let tail_verdict = |b: &mut Builder| {
        b.verdict(
            "tail_error",
            tail_e <= TAIL_ERROR_LEVEL,
            format!("max_(t>T/2) |e_t| = {tail_e:.6e}"),
        )
    };
    if cfg.kind == ExperimentKind::NormalizedRegression {
        tail_verdict(b);
        return Ok(Trace::Regression(rows));
    }

    let cert = pe_certificate(&rounds.features, cfg.pe_window, cfg.pe_beta)?;
    b.scalar("pe_certified", if cert.verdict { 1.0 } else { 0.0 });
    b.scalar("pe_worst_margin", cert.worst_margin);
    b.scalar("pe_worst_start", cert.worst_start as f64);
    if cert.verdict {
        let ts: Vec<f64> = cfg.checkpoints.iter().map(|&t| t as f64).collect();
        let errs = b_series(&b.checkpoints, "theta_err");
        let logs: Vec<f64> = errs.iter().map(|e| e.max(f64::MIN_POSITIVE).ln()).collect();
        let slope = if ts.len() >= 2 { fit_slope(&ts, &logs)? } else { f64::NAN };
        b.scalar("log_theta_err_slope", slope);
        b.verdict(
            "parameter_decay",
            strictly_decreasing(&errs) && slope < 0.0,
            format!("‖θ̃_t‖ at checkpoints {errs:?}, log-slope {slope:.6e}"),
        );
    } else {
        tail_verdict(b);
    }
    Ok(Trace::Regression(rows))
}

fn b_series(cps: &[Checkpoint], name: &str) -> Vec<f64> {
    cps.iter().filter_map(|c| c.values.get(name).copied()).collect()
}

fn run_oac(cfg: &ExperimentConfig, b: &mut Builder) -> Result<(Trace, Option<String>), CliError> {
    let spec = &cfg.oac;
    let plant = PlantModel::new(spec.a_star.clone(), spec.b_star.clone(), spec.noise_std)?;
    let weights = CostWeights::new(spec.q.clone(), spec.r.clone())?;
    let rollout = RolloutConfig {
        horizon: cfg.horizon,
        explore_coeff: spec.c_xi,
        refresh_period: spec.refresh_period,
        x0: spec.x0.clone(),
        prior: None,
    };
    let trace = oac_rollout(&plant, &weights, &rollout, &SeededRng::new(cfg.seed))?;
    let rows: Vec<OacRow> = trace
        .steps
        .iter()
        .map(|s| OacRow {
            t: s.t,
            cost: s.cost,
            cost_opt: s.cost_opt,
            reg_partial: s.reg_partial,
            sigma_xi: s.sigma_xi,
            gain_flag: s.status,
        })
        .collect();
    let fallbacks = trace
        .steps
        .iter()
        .filter(|s| s.status == crate::oac::GainStatus::Fallback)
        .count();
    b.scalar("reg_oac", trace.regret());
    b.scalar("reg_oac_per_step", trace.regret() / trace.steps.len() as f64);
    b.scalar("estimate_error", trace.estimate_error(&plant)?);
    b.scalar("fallback_steps", fallbacks as f64);
    b.scalar(
        "omniscient_gain_max_abs",
        trace.omniscient_gain.max_abs(),
    );
    for &t in &cfg.checkpoints {
        if let Some(s) = trace.steps.get(t as usize - 1) {
            b.checkpoint(
                t,
                &[("reg_oac", s.reg_partial), ("reg_oac_per_step", s.reg_partial / t as f64)],
            );
        }
    }
    let aborted = trace
        .aborted_at
        .map(|t| format!("state norm exceeded 1e6 at t = {t}"));
    b.verdict(
        "stable_rollout",
        aborted.is_none(),
        aborted.clone().unwrap_or_else(|| "state stayed bounded".into()),
    );
    Ok((Trace::Oac(rows), aborted))
}

/// Runs one configured experiment. Deterministic in (config, seed).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let start = Instant::now();
    let mut b = Builder::new();
    let (trace, aborted) = match cfg.kind {
        ExperimentKind::ConvexOgd | ExperimentKind::AdaptiveGrad | ExperimentKind::StronglyConvex => {
            (run_convex(cfg, &mut b)?, None)
        }
        ExperimentKind::NormalizedRegression
        | ExperimentKind::DisturbedSigmaMod
        | ExperimentKind::PeStudy => (run_normalized(cfg, &mut b)?, None),
        ExperimentKind::Oac => run_oac(cfg, &mut b)?,
    };
    let passed = aborted.is_none() && b.verdicts.iter().all(|v| v.pass);
    let summary = RunSummary {
        kind: cfg.kind.name().into(),
        seed: cfg.seed,
        horizon: cfg.horizon,
        steps: trace.len() as u64,
        runtime_seconds: start.elapsed().as_secs_f64(),
        scalars: b.scalars,
        checkpoints: b.checkpoints,
        verdicts: b.verdicts,
        aborted,
        passed,
    };
    Ok(RunOutput { summary, trace })
}

#[derive(Clone, Debug)]
pub struct WrittenRun {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub config: PathBuf,
}

/// Writes `<stem>.csv`, `<stem>.summary.json` and the resolved
/// `<stem>.resolved.cfg` into `dir`.
pub fn write_run(
    cfg: &ExperimentConfig,
    output: &RunOutput,
    dir: &Path,
    stem: &str,
) -> Result<WrittenRun, CliError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let csv = dir.join(format!("{stem}.csv"));
    emit_csv(&output.trace, &csv)?;
    let summary = dir.join(format!("{stem}.summary.json"));
    let json = serde_json::to_string_pretty(&output.summary).expect("summary serializes");
    std::fs::write(&summary, json + "\n").map_err(io(&summary))?;
    let config = dir.join(format!("{stem}.resolved.cfg"));
    std::fs::write(&config, cfg.to_string()).map_err(io(&config))?;
    Ok(WrittenRun {
        csv,
        summary,
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(body: &str) -> ExperimentConfig {
        ExperimentConfig::parse(&format!("[experiment]\n{body}")).unwrap()
    }

    #[test]
    fn convex_run_reports_bound() {
        let c = cfg("kind = convex_ogd\nhorizon = 1000\nset_radius = 1\n");
        let out = run_experiment(&c).unwrap();
        assert!(out.summary.passed, "{:?}", out.summary.verdicts);
        let g = out.summary.scalar("grad_bound").unwrap();
        let last = out.summary.checkpoints.last().unwrap();
        assert_eq!(last.t, 1000);
        assert!((last.values["bound"] - 3.0 * g * 2.0 * 1000f64.sqrt()).abs() < 1e-9);
        assert_eq!(out.trace.len(), 1000);
    }

    #[test]
    fn normalized_clean_run_descends() {
        let c = cfg("kind = normalized_regression\nalpha = 1\nm = 1\nhorizon = 500\n");
        let out = run_experiment(&c).unwrap();
        assert!(out.summary.verdict("lyapunov_descent").unwrap().pass);
        assert!(out.summary.passed, "{:?}", out.summary.verdicts);
    }

    #[test]
    fn runs_are_deterministic() {
        for kind in ["adaptive_grad", "strongly_convex", "disturbed_sigma_mod", "oac"] {
            let c = cfg(&format!("kind = {kind}\nhorizon = 300\nseed = 7\n"));
            let a = run_experiment(&c).unwrap();
            let b = run_experiment(&c).unwrap();
            let render = |o: &RunOutput| crate::cli::render_csv(&o.trace).unwrap();
            assert_eq!(render(&a), render(&b), "{kind}");
        }
    }
}
