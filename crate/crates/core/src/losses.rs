//! Per-step loss functions and their gradients.

use std::fmt;
use std::sync::Arc;

use crate::error::{check_dim, Result, RvlError};
use crate::numerics::{inner, Vector};

type ValueFn = dyn Fn(&Vector) -> f64 + Send + Sync;
type GradFn = dyn Fn(&Vector) -> Vector + Send + Sync;

/// A convex loss supplied as a value/gradient pair.
#[derive(Clone)]
pub struct GenericLoss {
    dim: usize,
    value: Arc<ValueFn>,
    gradient: Arc<GradFn>,
}

impl GenericLoss {
    pub fn new(
        dim: usize,
        value: impl Fn(&Vector) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        GenericLoss {
            dim,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
        }
    }

    /// `cᵀθ + b`.
    pub fn linear(c: Vector, b: f64) -> Self {
        let g = c.clone();
        GenericLoss::new(
            c.dim(),
            move |th: &Vector| inner(&c, th).unwrap_or(f64::NAN) + b,
            move |_| g.clone(),
        )
    }
}

impl fmt::Debug for GenericLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GenericLoss(dim={})", self.dim)
    }
}

#[derive(Clone, Debug)]
pub enum LossKind {
    /// ½(θᵀx − y)².
    SquaredError { x: Vector, y: f64 },
    GenericConvex(GenericLoss),
    /// (μ/2)‖θ − c‖².
    StronglyConvexQuadratic { center: Vector, curvature: f64 },
}

/// One round's loss together with an optional declared gradient bound G.
#[derive(Clone, Debug)]
pub struct LossFn {
    kind: LossKind,
    grad_bound: Option<f64>,
}

impl LossFn {
    pub fn squared_error(x: Vector, y: f64) -> Result<Self> {
        if !y.is_finite() {
            return Err(RvlError::NonFinite("regression target"));
        }
        Ok(LossFn {
            kind: LossKind::SquaredError { x, y },
            grad_bound: None,
        })
    }

    pub fn strongly_convex_quadratic(center: Vector, curvature: f64) -> Result<Self> {
        if !(curvature > 0.0 && curvature.is_finite()) {
            return Err(RvlError::InvalidParameter(format!(
                "curvature must be positive, got {curvature}"
            )));
        }
        Ok(LossFn {
            kind: LossKind::StronglyConvexQuadratic { center, curvature },
            grad_bound: None,
        })
    }

    pub fn generic(loss: GenericLoss) -> Self {
        LossFn {
            kind: LossKind::GenericConvex(loss),
            grad_bound: None,
        }
    }

    pub fn with_grad_bound(mut self, g: f64) -> Self {
        self.grad_bound = Some(g);
        self
    }

    pub fn kind(&self) -> &LossKind {
        &self.kind
    }

    pub fn grad_bound(&self) -> Option<f64> {
        self.grad_bound
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            LossKind::SquaredError { x, .. } => x.dim(),
            LossKind::GenericConvex(g) => g.dim,
            LossKind::StronglyConvexQuadratic { center, .. } => center.dim(),
        }
    }

    /// Features of a squared-error loss.
    pub fn features(&self) -> Option<&Vector> {
        match &self.kind {
            LossKind::SquaredError { x, .. } => Some(x),
            _ => None,
        }
    }

    pub fn eval(&self, theta: &Vector) -> Result<f64> {
        check_dim(self.dim(), theta.dim())?;
        Ok(match &self.kind {
            LossKind::SquaredError { x, y } => {
                let e = inner(theta, x)? - y;
                0.5 * e * e
            }
            LossKind::GenericConvex(g) => (g.value)(theta),
            LossKind::StronglyConvexQuadratic { center, curvature } => {
                0.5 * curvature * theta.sub(center)?.norm_sq()
            }
        })
    }

    pub fn grad(&self, theta: &Vector) -> Result<Vector> {
        check_dim(self.dim(), theta.dim())?;
        match &self.kind {
            LossKind::SquaredError { x, y } => {
                let e = inner(theta, x)? - y;
                Ok(x.scale(e))
            }
            LossKind::GenericConvex(g) => {
                let out = (g.gradient)(theta);
                check_dim(self.dim(), out.dim())?;
                Ok(out)
            }
            LossKind::StronglyConvexQuadratic { center, curvature } => {
                Ok(theta.sub(center)?.scale(*curvature))
            }
        }
    }

    /// Largest gap between the analytic gradient and a central difference
    /// with step `h`.
    pub fn grad_check(&self, theta: &Vector, h: f64) -> Result<f64> {
        if !(1e-8..=1e-3).contains(&h) {
            return Err(RvlError::InvalidParameter(format!(
                "finite-difference step must lie in [1e-8, 1e-3], got {h}"
            )));
        }
        let g = self.grad(theta)?;
        let mut worst = 0.0_f64;
        for i in 0..theta.dim() {
            let e = Vector::basis(theta.dim(), i);
            let plus = self.eval(&theta.axpy(h, &e)?)?;
            let minus = self.eval(&theta.axpy(-h, &e)?)?;
            let fd = (plus - minus) / (2.0 * h);
            worst = worst.max((fd - g[i]).abs());
        }
        Ok(worst)
    }
}

/// Regression context carried alongside a loss evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionContext {
    pub x: Vector,
    pub y: f64,
    pub y_hat: f64,
    /// ŷ − y.
    pub e: f64,
}

/// One step's loss evaluation at the current estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct LossRecord {
    pub t: u64,
    pub loss_value: f64,
    pub gradient: Vector,
    pub context: Option<RegressionContext>,
}

impl LossRecord {
    /// Evaluates `loss` at `theta` and captures value, gradient and, for
    /// squared error, the regression context.
    pub fn evaluate(t: u64, loss: &LossFn, theta: &Vector) -> Result<Self> {
        let loss_value = loss.eval(theta)?;
        let gradient = loss.grad(theta)?;
        let context = match loss.kind() {
            LossKind::SquaredError { x, y } => {
                let y_hat = inner(theta, x)?;
                Some(RegressionContext {
                    x: x.clone(),
                    y: *y,
                    y_hat,
                    e: y_hat - y,
                })
            }
            _ => None,
        };
        Ok(LossRecord {
            t,
            loss_value,
            gradient,
            context,
        })
    }
}

/// Worst-case gradient norm for squared-error rounds over a set:
/// `X·(R·X + Y)` with `R = max(D, sup‖θ‖)`.
pub fn squared_error_grad_bound(x_max: f64, y_max: f64, diameter: f64, set_norm: f64) -> f64 {
    let reach = diameter.max(set_norm);
    x_max * (reach * x_max + y_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> Vector {
        Vector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn eval_examples() {
        let f = LossFn::squared_error(v(&[1.0, 1.0]), 0.0).unwrap();
        assert_eq!(f.eval(&v(&[1.0, 0.0])).unwrap(), 0.5);
        let g = LossFn::squared_error(v(&[2.0, 3.0]), -1.0).unwrap();
        assert_eq!(g.eval(&v(&[1.0, -1.0])).unwrap(), 0.0);
        let q = LossFn::strongly_convex_quadratic(v(&[0.3, -0.2]), 2.0).unwrap();
        assert_eq!(q.eval(&v(&[0.3, -0.2])).unwrap(), 0.0);
        assert!(f.eval(&v(&[1.0])).is_err());
    }

    #[test]
    fn grad_examples() {
        let f = LossFn::squared_error(v(&[1.0, 1.0]), 0.0).unwrap();
        assert_eq!(f.grad(&v(&[1.0, 0.0])).unwrap(), v(&[1.0, 1.0]));
        let g = LossFn::squared_error(v(&[2.0, 3.0]), -1.0).unwrap();
        assert_eq!(g.grad(&v(&[1.0, -1.0])).unwrap(), v(&[0.0, 0.0]));
        let q = LossFn::strongly_convex_quadratic(v(&[0.3, -0.2]), 2.0).unwrap();
        assert_eq!(q.grad(&v(&[0.3, -0.2])).unwrap(), v(&[0.0, 0.0]));
        assert_eq!(q.grad(&v(&[1.3, -0.2])).unwrap(), v(&[2.0, 0.0]));
    }

    #[test]
    fn curvature_must_be_positive() {
        assert!(LossFn::strongly_convex_quadratic(v(&[0.0]), 0.0).is_err());
    }

    #[test]
    fn grad_check_shipped_kinds() {
        let mut rng = SeededRng::new(5);
        for _ in 0..50 {
            let x = rng.gaussian_vector(3, 1.0);
            let th = rng.gaussian_vector(3, 1.0);
            let f = LossFn::squared_error(x, rng.gaussian()).unwrap();
            assert!(f.grad_check(&th, 1e-5).unwrap() <= 1e-5);
            let q =
                LossFn::strongly_convex_quadratic(rng.gaussian_vector(3, 1.0), 1.7).unwrap();
            assert!(q.grad_check(&th, 1e-5).unwrap() <= 1e-6);
            let lin = LossFn::generic(GenericLoss::linear(rng.gaussian_vector(3, 1.0), 0.5));
            assert!(lin.grad_check(&th, 1e-5).unwrap() <= 1e-9);
        }
        let f = LossFn::squared_error(v(&[1.0]), 0.0).unwrap();
        assert!(f.grad_check(&v(&[0.0]), 1e-2).is_err());
    }

    #[test]
    fn record_captures_context() {
        let f = LossFn::squared_error(v(&[1.0, 1.0]), 0.0).unwrap();
        let r = LossRecord::evaluate(1, &f, &v(&[1.0, 0.0])).unwrap();
        let ctx = r.context.unwrap();
        assert_eq!(ctx.e, 1.0);
        assert_eq!(r.loss_value, 0.5);
    }

    #[test]
    fn declared_gradient_bound_is_honest() {
        // ‖x‖ ≤ 1, |y| ≤ 1.1, θ in Ball(0,1) (D = 2)
        let g = squared_error_grad_bound(1.0, 1.1, 2.0, 1.0);
        let mut rng = SeededRng::new(9);
        for _ in 0..10_000 {
            let mut x = rng.gaussian_vector(2, 1.0);
            if x.norm() > 1.0 {
                x = x.scale(1.0 / x.norm());
            }
            let mut th = rng.gaussian_vector(2, 1.0);
            if th.norm() > 1.0 {
                th = th.scale(1.0 / th.norm());
            }
            let y = rng.uniform_in(-1.1, 1.1);
            let f = LossFn::squared_error(x, y).unwrap();
            assert!(f.grad(&th).unwrap().norm() <= g);
        }
    }

    proptest! {
        #[test]
        fn convexity_witness(
            x in proptest::collection::vec(-3.0..3.0f64, 3),
            y in -3.0..3.0f64,
            a in proptest::collection::vec(-3.0..3.0f64, 3),
            b in proptest::collection::vec(-3.0..3.0f64, 3),
            c in proptest::collection::vec(-3.0..3.0f64, 3),
            mu in 0.1..5.0f64,
            lam in 0.0..1.0f64,
        ) {
            let (a, b) = (v(&a), v(&b));
            let mid = a.scale(lam).add(&b.scale(1.0 - lam)).unwrap();
            let losses = [
                LossFn::squared_error(v(&x), y).unwrap(),
                LossFn::strongly_convex_quadratic(v(&c), mu).unwrap(),
            ];
            for f in &losses {
                let lhs = f.eval(&mid).unwrap();
                let rhs = lam * f.eval(&a).unwrap() + (1.0 - lam) * f.eval(&b).unwrap();
                prop_assert!(lhs <= rhs + 1e-10 * rhs.abs().max(1.0));
            }
        }
    }
}
