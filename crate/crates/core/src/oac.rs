//! Certainty-equivalence adaptive LQR.
//!
//! The loop estimates `[A B]` by ridge least squares on observed
//! transitions, maps the estimate to a gain through the discrete Riccati
//! equation, and applies `u_t = −K_t x_t + ξ_t` with exploration whose
//! variance decays like `1/√t`. A twin plant driven by the same process
//! noise runs the gain computed from the true model; the difference in
//! accumulated quadratic cost is the reported regret.
//!
//! Gains follow the `u = −Kx` sign convention throughout.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result, RvlError};
use crate::numerics::{
    min_eig_lower_bound, psd_margin, solve_matrix, spectral_radius, Matrix, SeededRng, SolveMode,
    Vector, PIVOT_TOLERANCE,
};

pub const DARE_TOLERANCE: f64 = 1e-12;
pub const DARE_MAX_ITER: usize = 100_000;
/// Ridge weight of the least-squares estimator.
pub const ESTIMATE_RIDGE: f64 = 1e-6;
/// Gram matrices with smallest eigenvalue below this are flagged.
pub const LOW_EXCITATION_LEVEL: f64 = 1e-6;
/// State norm past which a rollout is declared unstable.
pub const ABORT_STATE_NORM: f64 = 1e6;
/// Riccati iterates beyond this magnitude are treated as divergent.
const DARE_DIVERGENCE: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub struct CostWeights {
    q: Matrix,
    r: Matrix,
}

impl CostWeights {
    /// Requires symmetric `Q ⪰ 0` and `R ≻ 0`.
    pub fn new(q: Matrix, r: Matrix) -> Result<Self> {
        if !min_eig_lower_bound(&q, 0.0)? {
            return Err(RvlError::InvalidParameter(
                "Q must be positive semidefinite".into(),
            ));
        }
        if psd_margin(&r, 0.0)? <= PIVOT_TOLERANCE {
            return Err(RvlError::InvalidParameter(
                "R must be positive definite".into(),
            ));
        }
        Ok(CostWeights { q, r })
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }

    /// xᵀQx + uᵀRu.
    pub fn stage_cost(&self, x: &Vector, u: &Vector) -> Result<f64> {
        Ok(x.dot(&self.q.mul_vec(x)?)? + u.dot(&self.r.mul_vec(u)?)?)
    }
}

/// x_{t+1} = A_* x_t + B_* u_t + w_t with w_t ~ N(0, noise_std² I).
#[derive(Clone, Debug, PartialEq)]
pub struct PlantModel {
    a_star: Matrix,
    b_star: Matrix,
    noise_std: f64,
}

impl PlantModel {
    pub fn new(a_star: Matrix, b_star: Matrix, noise_std: f64) -> Result<Self> {
        if !a_star.is_square() {
            return Err(RvlError::NotSquare {
                rows: a_star.rows(),
                cols: a_star.cols(),
            });
        }
        check_dim(a_star.rows(), b_star.rows())?;
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(RvlError::InvalidParameter(format!(
                "noise_std must be nonnegative, got {noise_std}"
            )));
        }
        Ok(PlantModel {
            a_star,
            b_star,
            noise_std,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a_star.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.b_star.cols()
    }

    pub fn a_star(&self) -> &Matrix {
        &self.a_star
    }

    pub fn b_star(&self) -> &Matrix {
        &self.b_star
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    /// Solves the Riccati equation on the true parameters; fails when the
    /// pair is not stabilizable.
    pub fn optimal_gain(&self, weights: &CostWeights) -> Result<DareSolution> {
        dare_solve(
            &self.a_star,
            &self.b_star,
            weights.q(),
            weights.r(),
            DARE_TOLERANCE,
            DARE_MAX_ITER,
        )
    }

    pub fn draw_noise(&self, rng: &mut SeededRng) -> Vector {
        rng.gaussian_vector(self.state_dim(), self.noise_std)
    }

    pub fn step_with_noise(&self, x: &Vector, u: &Vector, w: &Vector) -> Result<Vector> {
        self.a_star
            .mul_vec(x)?
            .add(&self.b_star.mul_vec(u)?)?
            .add(w)
    }

    pub fn plant_step(&self, x: &Vector, u: &Vector, rng: &mut SeededRng) -> Result<Vector> {
        let w = self.draw_noise(rng);
        self.step_with_noise(x, u, &w)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DareSolution {
    pub p: Matrix,
    pub k: Matrix,
    pub iterations: usize,
    pub closed_loop_radius: f64,
}

/// Right-hand side of the Riccati map and the matching gain:
/// `Q + AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA`, `K = (R + BᵀPB)⁻¹BᵀPA`.
fn riccati_map(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> Result<(Matrix, Matrix)> {
    let bt_p = b.transpose().matmul(p)?;
    let s = r.add(&bt_p.matmul(b)?)?;
    let bt_p_a = bt_p.matmul(a)?;
    let k = solve_matrix(&s, &bt_p_a, SolveMode::Strict)?;
    let next = q
        .add(&a.transpose().matmul(&p.matmul(a)?)?)?
        .sub(&bt_p_a.transpose().matmul(&k)?)?
        .symmetrized();
    Ok((next, k))
}

/// Fixed-point Riccati iteration from `P₀ = Q`.
///
/// Converged when `max|P_{k+1} − P_k| ≤ tol·max(1, max|P|)`. Divergent or
/// non-converging iterations, and gains whose closed loop `A − BK` is not
/// a contraction, are reported as [`RvlError::UnstabilizableEstimate`].
pub fn dare_solve(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
    tol: f64,
    max_iter: usize,
) -> Result<DareSolution> {
    let n = a.rows();
    check_dim(n, a.cols())?;
    check_dim(n, b.rows())?;
    check_dim(n, q.rows())?;
    check_dim(b.cols(), r.rows())?;
    let mut p = q.clone();
    for iteration in 1..=max_iter {
        let (next, _) = match riccati_map(a, b, q, r, &p) {
            Ok(v) => v,
            Err(RvlError::SingularSystem) => {
                return Err(RvlError::UnstabilizableEstimate {
                    iterations: iteration,
                })
            }
            Err(e) => return Err(e),
        };
        if !next.is_finite() || next.max_abs() > DARE_DIVERGENCE {
            return Err(RvlError::UnstabilizableEstimate {
                iterations: iteration,
            });
        }
        let step = next.sub(&p)?.max_abs();
        p = next;
        if step <= tol * p.max_abs().max(1.0) {
            let (_, k) = riccati_map(a, b, q, r, &p)?;
            let closed_loop_radius = spectral_radius(&a.sub(&b.matmul(&k)?)?)?;
            if !(closed_loop_radius < 1.0) {
                return Err(RvlError::UnstabilizableEstimate {
                    iterations: iteration,
                });
            }
            return Ok(DareSolution {
                p,
                k,
                iterations: iteration,
                closed_loop_radius,
            });
        }
    }
    Err(RvlError::UnstabilizableEstimate {
        iterations: max_iter,
    })
}

/// max-abs residual of the Riccati equation at `p`.
pub fn dare_residual(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> Result<f64> {
    let (next, _) = riccati_map(a, b, q, r, p)?;
    Ok(next.sub(p)?.max_abs())
}

/// c_ξ · t^(−1/4), so the exploration variance is c_ξ²/√t.
pub fn exploration_std(t: u64, explore_coeff: f64) -> f64 {
    debug_assert!(t >= 1);
    explore_coeff * (t as f64).powf(-0.25)
}

/// Where the gain currently in force came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GainStatus {
    /// Riccati solution for the latest estimate.
    Fresh = 0,
    /// Latest estimate was not stabilizable; the previous gain is kept.
    Fallback = 1,
    /// No estimate yet; pure exploration.
    WarmUp = 2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParameterFit {
    pub a_hat: Matrix,
    pub b_hat: Matrix,
    /// Fewer than n+m samples; the prior (zeros by default) is held.
    pub held: bool,
    pub low_excitation: bool,
}

/// Running least-squares data and the certainty-equivalent gain.
#[derive(Clone, Debug)]
pub struct ControllerState {
    n: usize,
    m: usize,
    gram: Matrix,
    cross: Matrix,
    samples: usize,
    prior: Matrix,
    has_prior: bool,
    a_hat: Matrix,
    b_hat: Matrix,
    k: Matrix,
    p: Option<Matrix>,
    status: GainStatus,
    explore_coeff: f64,
}

impl ControllerState {
    /// `prior`, when given, seeds the estimates and is the point the ridge
    /// term shrinks toward.
    pub fn new(n: usize, m: usize, explore_coeff: f64, prior: Option<(Matrix, Matrix)>) -> Result<Self> {
        if !(explore_coeff >= 0.0 && explore_coeff.is_finite()) {
            return Err(RvlError::InvalidParameter(format!(
                "exploration coefficient must be nonnegative, got {explore_coeff}"
            )));
        }
        let (a_hat, b_hat, has_prior) = match prior {
            Some((a, b)) => {
                check_dim(n, a.rows())?;
                check_dim(n, a.cols())?;
                check_dim(n, b.rows())?;
                check_dim(m, b.cols())?;
                (a, b, true)
            }
            None => (Matrix::zeros(n, n), Matrix::zeros(n, m), false),
        };
        // stacked [A B]ᵀ, (n+m)×n
        let mut prior_stack = Matrix::zeros(n + m, n);
        for i in 0..n {
            for j in 0..n {
                prior_stack.set(j, i, a_hat.get(i, j));
            }
            for j in 0..m {
                prior_stack.set(n + j, i, b_hat.get(i, j));
            }
        }
        Ok(ControllerState {
            n,
            m,
            gram: Matrix::zeros(n + m, n + m),
            cross: Matrix::zeros(n + m, n),
            samples: 0,
            prior: prior_stack,
            has_prior,
            a_hat,
            b_hat,
            k: Matrix::zeros(m, n),
            p: None,
            status: GainStatus::WarmUp,
            explore_coeff,
        })
    }

    pub fn a_hat(&self) -> &Matrix {
        &self.a_hat
    }

    pub fn b_hat(&self) -> &Matrix {
        &self.b_hat
    }

    pub fn gain(&self) -> &Matrix {
        &self.k
    }

    pub fn riccati_solution(&self) -> Option<&Matrix> {
        self.p.as_ref()
    }

    pub fn status(&self) -> GainStatus {
        self.status
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn has_prior(&self) -> bool {
        self.has_prior
    }

    pub fn explore_coeff(&self) -> f64 {
        self.explore_coeff
    }

    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    /// Adds the transition (x_t, u_t) → x_{t+1}.
    pub fn record(&mut self, x: &Vector, u: &Vector, x_next: &Vector) -> Result<()> {
        check_dim(self.n, x.dim())?;
        check_dim(self.m, u.dim())?;
        check_dim(self.n, x_next.dim())?;
        let z = Vector::from_finite(x.iter().chain(u.iter()).copied().collect());
        self.gram.add_outer(1.0, &z, &z)?;
        self.cross.add_outer(1.0, &z, x_next)?;
        self.samples += 1;
        Ok(())
    }

    /// Ridge least squares `(Σzzᵀ + λI) Θ = Σz x'ᵀ + λ Θ_prior`.
    pub fn estimate_params(&mut self) -> Result<ParameterFit> {
        let low_excitation = !min_eig_lower_bound(&self.gram.symmetrized(), LOW_EXCITATION_LEVEL)?;
        if self.samples < self.n + self.m {
            let fit = ParameterFit {
                a_hat: self.a_hat.clone(),
                b_hat: self.b_hat.clone(),
                held: true,
                low_excitation,
            };
            return Ok(fit);
        }
        let lhs = self.gram.shift_diagonal(ESTIMATE_RIDGE)?;
        let rhs = self.cross.add(&self.prior.scale(ESTIMATE_RIDGE))?;
        let theta = solve_matrix(&lhs, &rhs, SolveMode::Ridge)?.transpose();
        self.a_hat = theta.block(0, self.n, 0, self.n);
        self.b_hat = theta.block(0, self.n, self.n, self.n + self.m);
        Ok(ParameterFit {
            a_hat: self.a_hat.clone(),
            b_hat: self.b_hat.clone(),
            held: false,
            low_excitation,
        })
    }

    /// Replaces the gain with the Riccati gain of the current estimate, or
    /// keeps the previous one (zero before any success) when the estimate
    /// is not stabilizable.
    pub fn ce_gain(&mut self, weights: &CostWeights) -> Result<&Matrix> {
        match dare_solve(
            &self.a_hat,
            &self.b_hat,
            weights.q(),
            weights.r(),
            DARE_TOLERANCE,
            DARE_MAX_ITER,
        ) {
            Ok(sol) => {
                self.k = sol.k;
                self.p = Some(sol.p);
                self.status = GainStatus::Fresh;
            }
            Err(RvlError::UnstabilizableEstimate { .. }) => {
                self.status = GainStatus::Fallback;
            }
            Err(e) => return Err(e),
        }
        Ok(&self.k)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutConfig {
    pub horizon: u64,
    pub explore_coeff: f64,
    pub refresh_period: u64,
    pub x0: Vector,
    pub prior: Option<(Matrix, Matrix)>,
}

/// One step of both the adaptive loop and its omniscient twin.
#[derive(Clone, Debug, PartialEq)]
pub struct OacStep {
    pub t: u64,
    pub x: Vector,
    pub u: Vector,
    pub cost: f64,
    pub x_opt: Vector,
    pub u_opt: Vector,
    pub cost_opt: f64,
    /// Σ_{τ≤t} (cost − cost_opt).
    pub reg_partial: f64,
    pub sigma_xi: f64,
    /// Process noise shared by both plants at this step.
    pub w: Vector,
    pub status: GainStatus,
    /// Estimates and gain in force when u_t was chosen.
    pub a_hat: Matrix,
    pub b_hat: Matrix,
    pub k: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OacTrace {
    pub steps: Vec<OacStep>,
    pub omniscient_gain: Matrix,
    /// Step at which the adaptive state left the ‖x‖ ≤ 1e6 region.
    pub aborted_at: Option<u64>,
    pub final_a_hat: Matrix,
    pub final_b_hat: Matrix,
}

impl OacTrace {
    pub fn regret(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.reg_partial)
    }

    /// max-abs error of the final estimates against the truth.
    pub fn estimate_error(&self, plant: &PlantModel) -> Result<f64> {
        Ok(self
            .final_a_hat
            .sub(plant.a_star())?
            .max_abs()
            .max(self.final_b_hat.sub(plant.b_star())?.max_abs()))
    }
}

/// Runs the certainty-equivalence loop and its omniscient twin.
///
/// Without a prior the first n+m steps apply exploration only. After that,
/// every `refresh_period` steps the estimate and gain are recomputed from
/// all data so far. Exploration and process noise come from separate child
/// streams of `rng`, and each noise draw is applied to both plants.
pub fn oac_rollout(
    plant: &PlantModel,
    weights: &CostWeights,
    cfg: &RolloutConfig,
    rng: &SeededRng,
) -> Result<OacTrace> {
    let n = plant.state_dim();
    let m = plant.input_dim();
    check_dim(n, cfg.x0.dim())?;
    check_dim(n, weights.q().rows())?;
    check_dim(m, weights.r().rows())?;
    if cfg.refresh_period == 0 {
        return Err(RvlError::InvalidParameter(
            "refresh_period must be at least 1".into(),
        ));
    }
    let omniscient = plant.optimal_gain(weights)?;
    let mut ctrl = ControllerState::new(n, m, cfg.explore_coeff, cfg.prior.clone())?;
    let warmup = if ctrl.has_prior() { 0 } else { (n + m) as u64 };
    if ctrl.has_prior() {
        ctrl.ce_gain(weights)?;
    }

    let mut explore_rng = rng.derive(1);
    let mut noise_rng = rng.derive(2);
    let mut x = cfg.x0.clone();
    let mut x_opt = cfg.x0.clone();
    let mut reg = 0.0;
    let mut steps = Vec::with_capacity(cfg.horizon as usize);
    let mut aborted_at = None;

    for t in 1..=cfg.horizon {
        let sigma_xi = exploration_std(t, cfg.explore_coeff);
        let xi = explore_rng.gaussian_vector(m, sigma_xi);
        let in_warmup = t <= warmup;
        let u = if in_warmup {
            xi
        } else {
            ctrl.gain().mul_vec(&x)?.scale(-1.0).add(&xi)?
        };
        let u_opt = omniscient.k.mul_vec(&x_opt)?.scale(-1.0);
        let cost = weights.stage_cost(&x, &u)?;
        let cost_opt = weights.stage_cost(&x_opt, &u_opt)?;
        reg += cost - cost_opt;

        let w = plant.draw_noise(&mut noise_rng);
        let x_next = plant.step_with_noise(&x, &u, &w)?;
        let x_opt_next = plant.step_with_noise(&x_opt, &u_opt, &w)?;

        steps.push(OacStep {
            t,
            x: x.clone(),
            u: u.clone(),
            cost,
            x_opt: x_opt.clone(),
            u_opt,
            cost_opt,
            reg_partial: reg,
            sigma_xi,
            w,
            status: if in_warmup { GainStatus::WarmUp } else { ctrl.status() },
            a_hat: ctrl.a_hat().clone(),
            b_hat: ctrl.b_hat().clone(),
            k: ctrl.gain().clone(),
        });

        if !x_next.is_finite() || x_next.norm() > ABORT_STATE_NORM {
            aborted_at = Some(t);
            break;
        }
        ctrl.record(&x, &u, &x_next)?;
        if t >= warmup && (t - warmup) % cfg.refresh_period == 0 {
            ctrl.estimate_params()?;
            ctrl.ce_gain(weights)?;
        }
        x = x_next;
        x_opt = x_opt_next;
    }

    Ok(OacTrace {
        steps,
        omniscient_gain: omniscient.k,
        aborted_at,
        final_a_hat: ctrl.a_hat().clone(),
        final_b_hat: ctrl.b_hat().clone(),
    })
}
