//! Gradient update laws, learning-rate schedules, convex sets and the
//! σ-switch of the leaky law.
//!
//! Three updates are provided:
//!
//! ```text
//! vanilla    θ ← θ − η g
//! projected  θ ← Proj_Θ(θ − η g)
//! leaky      θ ← θ − η g − σ_t θ,   σ_t = 0 on Θ, σ outside
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result, RvlError};
use crate::losses::{LossFn, LossRecord};
use crate::numerics::Vector;

/// Relative slack on set membership so that projected points, which may be
/// a rounding error away from the boundary, still count as inside.
const MEMBERSHIP_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct ParameterEstimate {
    pub theta_hat: Vector,
    /// Current step, starting at 1.
    pub t: u64,
}

impl ParameterEstimate {
    pub fn new(theta_hat: Vector) -> Self {
        ParameterEstimate { theta_hat, t: 1 }
    }
}

/// Closed convex constraint set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ConvexSet {
    Ball { center: Vector, radius: f64 },
    Box { lower: Vector, upper: Vector },
}

impl ConvexSet {
    pub fn ball(center: Vector, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(RvlError::InvalidParameter(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        Ok(ConvexSet::Ball { center, radius })
    }

    pub fn boxed(lower: Vector, upper: Vector) -> Result<Self> {
        check_dim(lower.dim(), upper.dim())?;
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l < u)) {
            return Err(RvlError::InvalidParameter(
                "box bounds must satisfy lower < upper componentwise".into(),
            ));
        }
        Ok(ConvexSet::Box { lower, upper })
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::Ball { center, .. } => center.dim(),
            ConvexSet::Box { lower, .. } => lower.dim(),
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            ConvexSet::Ball { radius, .. } => 2.0 * radius,
            ConvexSet::Box { lower, upper } => upper.sub(lower).map_or(0.0, |d| d.norm()),
        }
    }

    /// sup over the set of ‖θ‖.
    pub fn max_norm(&self) -> f64 {
        match self {
            ConvexSet::Ball { center, radius } => center.norm() + radius,
            ConvexSet::Box { lower, upper } => lower
                .iter()
                .zip(upper.iter())
                .map(|(l, u)| l.abs().max(u.abs()).powi(2))
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Closed-set membership; the boundary is inside.
    pub fn contains(&self, z: &Vector) -> Result<bool> {
        check_dim(self.dim(), z.dim())?;
        Ok(match self {
            ConvexSet::Ball { center, radius } => {
                z.sub(center)?.norm() <= radius * (1.0 + MEMBERSHIP_SLACK)
            }
            ConvexSet::Box { lower, upper } => z
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .all(|(&v, (&l, &u))| {
                    let slack = MEMBERSHIP_SLACK * (u - l);
                    v >= l - slack && v <= u + slack
                }),
        })
    }

    /// Euclidean projection.
    pub fn project(&self, z: &Vector) -> Result<Vector> {
        check_dim(self.dim(), z.dim())?;
        match self {
            ConvexSet::Ball { center, radius } => {
                let offset = z.sub(center)?;
                let dist = offset.norm();
                if dist <= *radius {
                    Ok(z.clone())
                } else {
                    center.axpy(radius / dist, &offset)
                }
            }
            ConvexSet::Box { lower, upper } => Ok(Vector::from_finite(
                z.iter()
                    .zip(lower.iter().zip(upper.iter()))
                    .map(|(&v, (&l, &u))| v.clamp(l, u))
                    .collect(),
            )),
        }
    }
}

/// Learning-rate rule together with its running state.
#[derive(Clone, Debug, PartialEq)]
pub enum RateSchedule {
    /// D / (G √t).
    SqrtT { diameter: f64, grad_bound: f64 },
    /// D / √(ε + Σ‖∇ℓ_τ‖²).
    AdaptiveGrad {
        diameter: f64,
        eps_floor: f64,
        accumulated_sq_grad: f64,
        last_t: u64,
    },
    /// c / t.
    InverseT { c: f64 },
    /// α / (m + xᵀx).
    Normalized { alpha: f64, m: f64 },
}

/// What a schedule may need to see at step t.
#[derive(Clone, Copy, Debug)]
pub enum RateContext<'a> {
    None,
    Gradient(&'a Vector),
    Features(&'a Vector),
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(RvlError::InvalidParameter(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

impl RateSchedule {
    pub fn sqrt_t(diameter: f64, grad_bound: f64) -> Result<Self> {
        positive("D", diameter)?;
        positive("G", grad_bound)?;
        Ok(RateSchedule::SqrtT {
            diameter,
            grad_bound,
        })
    }

    pub fn adaptive_grad(diameter: f64, eps_floor: f64) -> Result<Self> {
        positive("D", diameter)?;
        positive("eps_floor", eps_floor)?;
        Ok(RateSchedule::AdaptiveGrad {
            diameter,
            eps_floor,
            accumulated_sq_grad: 0.0,
            last_t: 0,
        })
    }

    pub fn inverse_t(c: f64) -> Result<Self> {
        positive("c", c)?;
        Ok(RateSchedule::InverseT { c })
    }

    pub fn normalized(alpha: f64, m: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(RvlError::InvalidParameter(format!(
                "alpha must lie in (0,2), got {alpha}"
            )));
        }
        positive("m", m)?;
        Ok(RateSchedule::Normalized { alpha, m })
    }

    /// η_t. `AdaptiveGrad` folds the supplied gradient into its running sum,
    /// so it must be called once per step with increasing `t`.
    pub fn rate(&mut self, t: u64, ctx: RateContext<'_>) -> Result<f64> {
        if t == 0 {
            return Err(RvlError::InvalidParameter("t starts at 1".into()));
        }
        let eta = match self {
            RateSchedule::SqrtT {
                diameter,
                grad_bound,
            } => *diameter / (*grad_bound * (t as f64).sqrt()),
            RateSchedule::AdaptiveGrad {
                diameter,
                eps_floor,
                accumulated_sq_grad,
                last_t,
            } => {
                let RateContext::Gradient(g) = ctx else {
                    return Err(RvlError::MissingContext("adaptive rate needs the gradient"));
                };
                if t <= *last_t {
                    return Err(RvlError::CausalityViolation {
                        last: *last_t,
                        requested: t,
                    });
                }
                *last_t = t;
                *accumulated_sq_grad += g.norm_sq();
                *diameter / (*eps_floor + *accumulated_sq_grad).sqrt()
            }
            RateSchedule::InverseT { c } => *c / t as f64,
            RateSchedule::Normalized { alpha, m } => {
                let RateContext::Features(x) = ctx else {
                    return Err(RvlError::MissingContext(
                        "normalized rate needs the features",
                    ));
                };
                *alpha / (*m + x.norm_sq())
            }
        };
        if eta > 0.0 && eta.is_finite() {
            Ok(eta)
        } else {
            Err(RvlError::NonFinite("learning rate"))
        }
    }
}

/// θ − η g.
pub fn step_vanilla(p: &ParameterEstimate, eta: f64, g: &Vector) -> Result<ParameterEstimate> {
    check_step(p, eta, g)?;
    Ok(ParameterEstimate {
        theta_hat: p.theta_hat.axpy(-eta, g)?,
        t: p.t + 1,
    })
}

/// Proj_S(θ − η g).
pub fn step_projected(
    p: &ParameterEstimate,
    eta: f64,
    g: &Vector,
    set: &ConvexSet,
) -> Result<ParameterEstimate> {
    let mut next = step_vanilla(p, eta, g)?;
    next.theta_hat = set.project(&next.theta_hat)?;
    Ok(next)
}

/// θ − η g − σ_t θ.
pub fn step_leaky(
    p: &ParameterEstimate,
    eta: f64,
    g: &Vector,
    sigma_t: f64,
) -> Result<ParameterEstimate> {
    check_step(p, eta, g)?;
    if !(sigma_t >= 0.0 && sigma_t.is_finite()) {
        return Err(RvlError::InvalidParameter(format!(
            "sigma_t must be nonnegative, got {sigma_t}"
        )));
    }
    let mut next = p.theta_hat.axpy(-eta, g)?;
    if sigma_t != 0.0 {
        next = next.axpy(-sigma_t, &p.theta_hat)?;
    }
    Ok(ParameterEstimate {
        theta_hat: next,
        t: p.t + 1,
    })
}

fn check_step(p: &ParameterEstimate, eta: f64, g: &Vector) -> Result<()> {
    check_dim(p.theta_hat.dim(), g.dim())?;
    if !g.is_finite() {
        return Err(RvlError::NonFinite("gradient"));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(RvlError::InvalidParameter(format!(
            "learning rate must be positive, got {eta}"
        )));
    }
    Ok(())
}

/// σ-modification switch: zero on the (closed) set, `sigma` off it.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaRule {
    pub sigma: f64,
    pub set: ConvexSet,
}

impl SigmaRule {
    pub fn new(sigma: f64, set: ConvexSet) -> Result<Self> {
        positive("sigma", sigma)?;
        Ok(SigmaRule { sigma, set })
    }

    pub fn sigma_switch(&self, theta_hat: &Vector) -> Result<f64> {
        Ok(if self.set.contains(theta_hat)? {
            0.0
        } else {
            self.sigma
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum UpdateLaw {
    Vanilla,
    Projected(ConvexSet),
    Leaky(SigmaRule),
}

/// What happened during one call to [`OnlineLearner::observe`].
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub record: LossRecord,
    pub eta: f64,
    pub sigma: f64,
    /// Estimate the loss was evaluated at.
    pub theta_before: Vector,
}

/// Single-owner learner: an estimate, a schedule and an update law.
#[derive(Clone, Debug)]
pub struct OnlineLearner {
    estimate: ParameterEstimate,
    schedule: RateSchedule,
    law: UpdateLaw,
}

impl OnlineLearner {
    /// Projected learners require the initial estimate to lie in the set.
    pub fn new(init: Vector, schedule: RateSchedule, law: UpdateLaw) -> Result<Self> {
        if let UpdateLaw::Projected(set) = &law {
            if !set.contains(&init)? {
                return Err(RvlError::InitialEstimateOutside);
            }
        }
        Ok(OnlineLearner {
            estimate: ParameterEstimate::new(init),
            schedule,
            law,
        })
    }

    /// Like [`OnlineLearner::new`] but projects an outside initial estimate
    /// onto the set once. Returns the original point when it was moved.
    pub fn new_projecting_init(
        init: Vector,
        schedule: RateSchedule,
        law: UpdateLaw,
    ) -> Result<(Self, Option<Vector>)> {
        if let UpdateLaw::Projected(set) = &law {
            if !set.contains(&init)? {
                let inside = set.project(&init)?;
                return Ok((OnlineLearner::new(inside, schedule, law)?, Some(init)));
            }
        }
        Ok((OnlineLearner::new(init, schedule, law)?, None))
    }

    pub fn estimate(&self) -> &ParameterEstimate {
        &self.estimate
    }

    pub fn schedule(&self) -> &RateSchedule {
        &self.schedule
    }

    pub fn law(&self) -> &UpdateLaw {
        &self.law
    }

    /// Evaluates the round's loss at θ̂_t, then applies the update.
    pub fn observe(&mut self, loss: &LossFn) -> Result<StepOutcome> {
        let t = self.estimate.t;
        let theta_before = self.estimate.theta_hat.clone();
        let record = LossRecord::evaluate(t, loss, &theta_before)?;
        let ctx = match &self.schedule {
            RateSchedule::AdaptiveGrad { .. } => RateContext::Gradient(&record.gradient),
            RateSchedule::Normalized { .. } => match loss.features() {
                Some(x) => RateContext::Features(x),
                None => {
                    return Err(RvlError::MissingContext(
                        "normalized rate needs a squared-error loss",
                    ))
                }
            },
            _ => RateContext::None,
        };
        let eta = self.schedule.rate(t, ctx)?;
        let (next, sigma) = match &self.law {
            UpdateLaw::Vanilla => (step_vanilla(&self.estimate, eta, &record.gradient)?, 0.0),
            UpdateLaw::Projected(set) => (
                step_projected(&self.estimate, eta, &record.gradient, set)?,
                0.0,
            ),
            UpdateLaw::Leaky(rule) => {
                let sigma = rule.sigma_switch(&theta_before)?;
                (
                    step_leaky(&self.estimate, eta, &record.gradient, sigma)?,
                    sigma,
                )
            }
        };
        if !next.theta_hat.is_finite() {
            return Err(RvlError::NonFinite("parameter estimate"));
        }
        self.estimate = next;
        Ok(StepOutcome {
            record,
            eta,
            sigma,
            theta_before,
        })
    }
}
