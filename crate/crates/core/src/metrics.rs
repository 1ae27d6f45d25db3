//! Regret against the best fixed parameter in hindsight, Lyapunov tracking,
//! and numeric validators for the summation lemmas used by the regret
//! analysis.

use crate::error::{check_dim, Result, RvlError};
use crate::learners::ConvexSet;
use crate::losses::{LossFn, LossKind, LossRecord};
use crate::numerics::{solve_linear, Matrix, SolveMode, Vector};

/// Stopping level for the projected-gradient mapping of the mean loss.
pub const HINDSIGHT_TOLERANCE: f64 = 1e-9;
const HINDSIGHT_MAX_ITER: usize = 1_000_000;

/// Append-only record of the online rounds and the losses that produced them.
#[derive(Clone, Debug, Default)]
pub struct RegretLedger {
    records: Vec<LossRecord>,
    losses: Vec<LossFn>,
}

impl RegretLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends round `t = len + 1`, checking that the stored loss value
    /// matches a fresh evaluation at the recorded estimate.
    pub fn push(&mut self, record: LossRecord, loss: LossFn, theta_hat: &Vector) -> Result<()> {
        let expected = self.records.len() as u64 + 1;
        if record.t != expected {
            return Err(RvlError::LedgerOrder {
                expected,
                found: record.t,
            });
        }
        if let Some(first) = self.losses.first() {
            check_dim(first.dim(), loss.dim())?;
        }
        let gap = (loss.eval(theta_hat)? - record.loss_value).abs();
        if gap > 1e-10 * record.loss_value.abs().max(1.0) {
            return Err(RvlError::LedgerMismatch { t: record.t, gap });
        }
        self.records.push(record);
        self.losses.push(loss);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[LossRecord] {
        &self.records
    }

    pub fn losses(&self) -> &[LossFn] {
        &self.losses
    }

    /// The first `len` rounds as a ledger of their own.
    pub fn prefix(&self, len: usize) -> RegretLedger {
        let len = len.min(self.len());
        RegretLedger {
            records: self.records[..len].to_vec(),
            losses: self.losses[..len].to_vec(),
        }
    }

    /// Σ ℓ_t(θ̂_t).
    pub fn online_loss(&self) -> f64 {
        self.records.iter().map(|r| r.loss_value).sum()
    }

    /// Σ ℓ_t(θ).
    pub fn loss_at(&self, theta: &Vector) -> Result<f64> {
        self.losses.iter().map(|l| l.eval(theta)).sum()
    }
}

/// Aggregate objective F(θ) = Σ ℓ_t(θ) in whatever closed form the catalog
/// allows.
enum Aggregate<'a> {
    /// F = ½θᵀSθ − bᵀθ + const.
    Quadratic { gram: Matrix, moment: Vector },
    /// F = (Σμ_t/2)‖θ‖² − (Σμ_t c_t)ᵀθ + const.
    Isotropic { curvature: f64, weighted_center: Vector },
    Generic(&'a [LossFn]),
}

impl Aggregate<'_> {
    fn build(losses: &[LossFn]) -> Result<Aggregate<'_>> {
        let n = losses[0].dim();
        if losses
            .iter()
            .all(|l| matches!(l.kind(), LossKind::SquaredError { .. }))
        {
            let mut gram = Matrix::zeros(n, n);
            let mut moment = Vector::zeros(n);
            for l in losses {
                if let LossKind::SquaredError { x, y } = l.kind() {
                    gram.add_outer(1.0, x, x)?;
                    moment = moment.axpy(*y, x)?;
                }
            }
            return Ok(Aggregate::Quadratic {
                gram: gram.symmetrized(),
                moment,
            });
        }
        if losses
            .iter()
            .all(|l| matches!(l.kind(), LossKind::StronglyConvexQuadratic { .. }))
        {
            let mut curvature = 0.0;
            let mut weighted_center = Vector::zeros(n);
            for l in losses {
                if let LossKind::StronglyConvexQuadratic { center, curvature: mu } = l.kind() {
                    curvature += mu;
                    weighted_center = weighted_center.axpy(*mu, center)?;
                }
            }
            return Ok(Aggregate::Isotropic {
                curvature,
                weighted_center,
            });
        }
        Ok(Aggregate::Generic(losses))
    }

    fn gradient(&self, theta: &Vector) -> Result<Vector> {
        match self {
            Aggregate::Quadratic { gram, moment } => gram.mul_vec(theta)?.sub(moment),
            Aggregate::Isotropic {
                curvature,
                weighted_center,
            } => theta.scale(*curvature).sub(weighted_center),
            Aggregate::Generic(losses) => {
                let mut g = Vector::zeros(theta.dim());
                for l in *losses {
                    g = g.add(&l.grad(theta)?)?;
                }
                Ok(g)
            }
        }
    }

    /// F(θ) up to an additive constant.
    fn value(&self, theta: &Vector) -> Result<f64> {
        match self {
            Aggregate::Quadratic { gram, moment } => {
                Ok(0.5 * theta.dot(&gram.mul_vec(theta)?)? - moment.dot(theta)?)
            }
            Aggregate::Isotropic {
                curvature,
                weighted_center,
            } => Ok(0.5 * curvature * theta.norm_sq() - weighted_center.dot(theta)?),
            Aggregate::Generic(losses) => losses.iter().map(|l| l.eval(theta)).sum(),
        }
    }

    /// Gradient Lipschitz constant when cheaply known.
    fn lipschitz(&self) -> Option<f64> {
        match self {
            Aggregate::Quadratic { gram, .. } => {
                // Frobenius norm bounds the largest eigenvalue
                Some(gram.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt())
            }
            Aggregate::Isotropic { curvature, .. } => Some(*curvature),
            Aggregate::Generic(_) => None,
        }
    }
}

/// θ̄ = argmin over the set of Σ ℓ_t(θ).
///
/// All-squared-error ledgers go through the normal equations (ridge when
/// singular); if that point leaves the set, or the catalog has no closed
/// form, accelerated projected gradient descent runs on the summed loss
/// until the gradient mapping of the mean loss is below
/// [`HINDSIGHT_TOLERANCE`].
pub fn hindsight_optimum(ledger: &RegretLedger, set: &ConvexSet) -> Result<Vector> {
    if ledger.is_empty() {
        return Err(RvlError::InvalidParameter(
            "hindsight optimum needs at least one round".into(),
        ));
    }
    check_dim(set.dim(), ledger.losses[0].dim())?;
    let agg = Aggregate::build(&ledger.losses)?;
    if let Aggregate::Quadratic { gram, moment } = &agg {
        let theta = solve_linear(gram, moment, SolveMode::Ridge)?;
        if set.contains(&theta)? {
            return Ok(theta);
        }
        return projected_descent(&agg, ledger.len(), set, set.project(&theta)?);
    }
    let start = set.project(&Vector::zeros(set.dim()))?;
    projected_descent(&agg, ledger.len(), set, start)
}

fn projected_descent(
    agg: &Aggregate<'_>,
    count: usize,
    set: &ConvexSet,
    start: Vector,
) -> Result<Vector> {
    let count = count as f64;
    let mut step_inv = agg.lipschitz().unwrap_or(1.0).max(1e-12);
    let backtrack = agg.lipschitz().is_none();
    let mut x = start.clone();
    let mut y = start;
    let mut momentum = 1.0_f64;
    for _ in 0..HINDSIGHT_MAX_ITER {
        let gx = agg.gradient(&x)?;
        let mapped = set.project(&x.axpy(-1.0 / step_inv, &gx)?)?;
        let mapping_norm = x.sub(&mapped)?.norm() * step_inv / count;
        if mapping_norm <= HINDSIGHT_TOLERANCE {
            return Ok(x);
        }

        let gy = agg.gradient(&y)?;
        let mut next = set.project(&y.axpy(-1.0 / step_inv, &gy)?)?;
        if backtrack {
            let fy = agg.value(&y)?;
            loop {
                let diff = next.sub(&y)?;
                let model = fy + gy.dot(&diff)? + 0.5 * step_inv * diff.norm_sq();
                if agg.value(&next)? <= model + 1e-12 * fy.abs().max(1.0) {
                    break;
                }
                step_inv *= 2.0;
                next = set.project(&y.axpy(-1.0 / step_inv, &gy)?)?;
            }
        }
        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let mut extrapolated = next.axpy((momentum - 1.0) / next_momentum, &next.sub(&x)?)?;
        // restart on objective increase keeps the scheme monotone
        if agg.value(&next)? > agg.value(&x)? {
            extrapolated = next.clone();
            momentum = 1.0;
        } else {
            momentum = next_momentum;
        }
        x = next;
        y = set.project(&extrapolated)?;
    }
    Ok(x)
}

/// Σ ℓ_t(θ̂_t) − Σ ℓ_t(θ̄). Not clamped; may be negative.
pub fn regret(ledger: &RegretLedger, theta_bar: &Vector) -> Result<f64> {
    Ok(ledger.online_loss() - ledger.loss_at(theta_bar)?)
}

/// V_t = ‖θ̃_t‖² and its one-step difference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LyapunovStep {
    pub v_now: f64,
    pub v_next: f64,
    pub delta: f64,
}

pub fn lyapunov_step(
    theta_now: &Vector,
    theta_next: &Vector,
    theta_star: &Vector,
) -> Result<LyapunovStep> {
    let v_now = theta_now.sub(theta_star)?.norm_sq();
    let v_next = theta_next.sub(theta_star)?.norm_sq();
    Ok(LyapunovStep {
        v_now,
        v_next,
        delta: v_next - v_now,
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LyapunovTrace {
    values: Vec<f64>,
    deltas: Vec<f64>,
}

impl LyapunovTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a step; the first call also records V_1.
    pub fn push(&mut self, step: LyapunovStep) {
        if self.values.is_empty() {
            self.values.push(step.v_now);
        }
        self.values.push(step.v_next);
        self.deltas.push(step.delta);
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn max_delta(&self) -> f64 {
        self.deltas.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// (Σ_{t≤T} 1/√t, 2√T).
pub fn lemma_sqrt_sum(t_max: u64) -> (f64, f64) {
    let lhs = (1..=t_max).map(|t| 1.0 / (t as f64).sqrt()).sum();
    (lhs, 2.0 * (t_max as f64).sqrt())
}

/// Checks Σ_{t≤T} 1/√t ≤ 2√T for every T ≤ `t_max` in one pass and returns
/// the number of violations.
pub fn lemma_sqrt_sum_scan(t_max: u64) -> usize {
    let mut lhs = 0.0;
    let mut violations = 0;
    for t in 1..=t_max {
        lhs += 1.0 / (t as f64).sqrt();
        if !bound_holds(lhs, 2.0 * (t as f64).sqrt()) {
            violations += 1;
        }
    }
    violations
}

/// (Σ b_t / √(Σ_{τ≤t} b_τ), 2√(Σ b_t)). Terms whose running sum is still
/// zero contribute zero.
pub fn lemma_self_normalized(b: &[f64]) -> Result<(f64, f64)> {
    let mut running = 0.0;
    let mut lhs = 0.0;
    for (index, &value) in b.iter().enumerate() {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(RvlError::NegativeEntry { index, value });
        }
        running += value;
        if running > 0.0 {
            lhs += value / running.sqrt();
        }
    }
    Ok((lhs, 2.0 * running.sqrt()))
}

/// Squared-sequence form: returns (lhs, 2D√T) for b_t = a_t², |a_t| ≤ D.
pub fn corollary_bound(a: &[f64], bound: f64) -> Result<(f64, f64)> {
    if let Some((index, &value)) = a.iter().enumerate().find(|(_, v)| v.abs() > bound) {
        return Err(RvlError::InvalidParameter(format!(
            "|a_{}| = {} exceeds the declared bound {bound}",
            index + 1,
            value.abs()
        )));
    }
    let squares: Vec<f64> = a.iter().map(|v| v * v).collect();
    let (lhs, _) = lemma_self_normalized(&squares)?;
    Ok((lhs, 2.0 * bound * (a.len() as f64).sqrt()))
}

/// `lhs ≤ rhs` up to a relative rounding slack of 1e−12.
pub fn bound_holds(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + 1e-12 * rhs.abs()
}

/// Σ ‖θ̂_t − θ̄‖² (1/η_t − 1/η_{t−1}) with 1/η_0 = 0, alongside D²/η_T.
pub fn telescoping_sum(
    iterates: &[Vector],
    etas: &[f64],
    theta_bar: &Vector,
    diameter: f64,
) -> Result<(f64, f64)> {
    check_dim(iterates.len(), etas.len())?;
    let mut lhs = 0.0;
    let mut prev_inv = 0.0;
    for (theta, eta) in iterates.iter().zip(etas) {
        let inv = 1.0 / eta;
        lhs += theta.sub(theta_bar)?.norm_sq() * (inv - prev_inv);
        prev_inv = inv;
    }
    Ok((lhs, diameter * diameter * prev_inv))
}

/// Least-squares slope of `ys` against `ts`.
pub fn fit_slope(ts: &[f64], ys: &[f64]) -> Result<f64> {
    check_dim(ts.len(), ys.len())?;
    if ts.len() < 2 {
        return Err(RvlError::InvalidParameter(
            "slope fit needs at least two points".into(),
        ));
    }
    let n = ts.len() as f64;
    let mt = ts.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = ts.iter().zip(ys).map(|(t, y)| (t - mt) * (y - my)).sum();
    let sxx: f64 = ts.iter().map(|t| (t - mt).powi(2)).sum();
    Ok(sxy / sxx)
}
