//! Streaming environments: the regression truth process, feature and
//! disturbance generators, and the windowed persistent-excitation check.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result, RvlError};
use crate::numerics::{inner, min_eigenvalue, psd_margin, Matrix, SeededRng, Vector, PIVOT_TOLERANCE};

/// Feature sequence with a declared norm bound.
#[derive(Clone, Debug)]
pub enum FeatureGen {
    /// `scale · e_{(t−1) mod n}`.
    CyclingBasis { dim: usize, scale: f64 },
    /// Standard normal draws radially rescaled into the `x_max` ball.
    GaussianClipped { dim: usize, x_max: f64, rng: SeededRng },
    /// Component i is `a_i sin(ω_i t)`.
    SinusoidBank { frequencies: Vec<f64>, amplitudes: Vec<f64> },
    /// The same vector every step.
    ConstantDirection { v: Vector },
}

impl FeatureGen {
    pub fn cycling_basis(dim: usize, scale: f64) -> Result<Self> {
        require_dim(dim)?;
        require_positive("feature scale", scale)?;
        Ok(FeatureGen::CyclingBasis { dim, scale })
    }

    pub fn gaussian_clipped(dim: usize, x_max: f64, rng: SeededRng) -> Result<Self> {
        require_dim(dim)?;
        require_positive("x_max", x_max)?;
        Ok(FeatureGen::GaussianClipped { dim, x_max, rng })
    }

    pub fn sinusoid_bank(frequencies: Vec<f64>, amplitudes: Vec<f64>) -> Result<Self> {
        require_dim(frequencies.len())?;
        check_dim(frequencies.len(), amplitudes.len())?;
        if !frequencies.iter().chain(&amplitudes).all(|v| v.is_finite()) {
            return Err(RvlError::NonFinite("sinusoid bank"));
        }
        Ok(FeatureGen::SinusoidBank {
            frequencies,
            amplitudes,
        })
    }

    pub fn constant_direction(v: Vector) -> Result<Self> {
        require_dim(v.dim())?;
        Ok(FeatureGen::ConstantDirection { v })
    }

    pub fn dim(&self) -> usize {
        match self {
            FeatureGen::CyclingBasis { dim, .. } | FeatureGen::GaussianClipped { dim, .. } => *dim,
            FeatureGen::SinusoidBank { frequencies, .. } => frequencies.len(),
            FeatureGen::ConstantDirection { v } => v.dim(),
        }
    }

    /// Declared bound X_max on ‖x_t‖.
    pub fn x_max(&self) -> f64 {
        match self {
            FeatureGen::CyclingBasis { scale, .. } => *scale,
            FeatureGen::GaussianClipped { x_max, .. } => *x_max,
            FeatureGen::SinusoidBank { amplitudes, .. } => {
                amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt()
            }
            FeatureGen::ConstantDirection { v } => v.norm(),
        }
    }

    fn sample(&mut self, t: u64) -> Vector {
        match self {
            FeatureGen::CyclingBasis { dim, scale } => {
                Vector::basis(*dim, ((t - 1) % *dim as u64) as usize).scale(*scale)
            }
            FeatureGen::GaussianClipped { dim, x_max, rng } => {
                let g = rng.gaussian_vector(*dim, 1.0);
                let norm = g.norm();
                if norm > *x_max {
                    g.scale(*x_max / norm)
                } else {
                    g
                }
            }
            FeatureGen::SinusoidBank {
                frequencies,
                amplitudes,
            } => Vector::from_finite(
                frequencies
                    .iter()
                    .zip(amplitudes.iter())
                    .map(|(w, a)| a * (w * t as f64).sin())
                    .collect(),
            ),
            FeatureGen::ConstantDirection { v } => v.clone(),
        }
    }
}

/// Bounded disturbance d_t with |d_t| ≤ bound.
#[derive(Clone, Debug)]
pub enum DisturbanceGen {
    Zero,
    Uniform { bound: f64, rng: SeededRng },
    Sinusoid { bound: f64, frequency: f64 },
    /// `bound · (−1)^t`.
    Alternating { bound: f64 },
    /// Normal with standard deviation `bound`, clamped to ±bound.
    GaussianClipped { bound: f64, rng: SeededRng },
}

impl DisturbanceGen {
    pub fn bound(&self) -> f64 {
        match self {
            DisturbanceGen::Zero => 0.0,
            DisturbanceGen::Uniform { bound, .. }
            | DisturbanceGen::Sinusoid { bound, .. }
            | DisturbanceGen::Alternating { bound }
            | DisturbanceGen::GaussianClipped { bound, .. } => *bound,
        }
    }

    fn sample(&mut self, t: u64) -> f64 {
        let raw = match self {
            DisturbanceGen::Zero => 0.0,
            DisturbanceGen::Uniform { bound, rng } => rng.uniform_in(-*bound, *bound),
            DisturbanceGen::Sinusoid { bound, frequency } => *bound * (*frequency * t as f64).sin(),
            DisturbanceGen::Alternating { bound } => {
                if t.is_multiple_of(2) {
                    *bound
                } else {
                    -*bound
                }
            }
            DisturbanceGen::GaussianClipped { bound, rng } => *bound * rng.gaussian(),
        };
        let b = self.bound();
        raw.clamp(-b, b)
    }
}

/// One emitted regression sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub t: u64,
    pub x: Vector,
    pub y: f64,
    pub d: f64,
}

/// y_t = θ_*ᵀ x_t + d_t, emitted causally.
#[derive(Clone, Debug)]
pub struct RegressionStream {
    theta_star: Vector,
    features: FeatureGen,
    disturbance: DisturbanceGen,
    last_t: u64,
}

impl RegressionStream {
    pub fn new(theta_star: Vector, features: FeatureGen, disturbance: DisturbanceGen) -> Result<Self> {
        check_dim(theta_star.dim(), features.dim())?;
        if !(disturbance.bound() >= 0.0 && disturbance.bound().is_finite()) {
            return Err(RvlError::InvalidParameter(
                "disturbance bound must be nonnegative".into(),
            ));
        }
        Ok(RegressionStream {
            theta_star,
            features,
            disturbance,
            last_t: 0,
        })
    }

    pub fn clean(theta_star: Vector, features: FeatureGen) -> Result<Self> {
        RegressionStream::new(theta_star, features, DisturbanceGen::Zero)
    }

    pub fn theta_star(&self) -> &Vector {
        &self.theta_star
    }

    pub fn x_max(&self) -> f64 {
        self.features.x_max()
    }

    pub fn d_bound(&self) -> f64 {
        self.disturbance.bound()
    }

    /// Declared bound on |y_t|: ‖θ_*‖ X_max + d.
    pub fn y_max(&self) -> f64 {
        self.theta_star.norm() * self.x_max() + self.d_bound()
    }

    pub fn emit(&mut self, t: u64) -> Result<Sample> {
        if t == 0 || t <= self.last_t {
            return Err(RvlError::CausalityViolation {
                last: self.last_t,
                requested: t,
            });
        }
        self.last_t = t;
        let x = self.features.sample(t);
        let d = self.disturbance.sample(t);
        let y = inner(&self.theta_star, &x)? + d;
        Ok(Sample { t, x, y, d })
    }
}

/// Centers c_t = c_* + offset with ‖offset‖ ≤ spread, for the
/// strongly convex quadratic rounds.
#[derive(Clone, Debug)]
pub struct CenterStream {
    center_star: Vector,
    spread: f64,
    rng: SeededRng,
}

impl CenterStream {
    pub fn new(center_star: Vector, spread: f64, rng: SeededRng) -> Result<Self> {
        if !(spread >= 0.0 && spread.is_finite()) {
            return Err(RvlError::InvalidParameter(
                "center spread must be nonnegative".into(),
            ));
        }
        Ok(CenterStream {
            center_star,
            spread,
            rng,
        })
    }

    pub fn center_star(&self) -> &Vector {
        &self.center_star
    }

    pub fn next_center(&mut self) -> Result<Vector> {
        let g = self.rng.gaussian_vector(self.center_star.dim(), self.spread);
        let norm = g.norm();
        let offset = if norm > self.spread && norm > 0.0 {
            g.scale(self.spread / norm)
        } else {
            g
        };
        self.center_star.add(&offset)
    }
}

/// ŷ = θ̂ᵀ x.
pub fn predict(theta_hat: &Vector, x: &Vector) -> Result<f64> {
    inner(theta_hat, x)
}

/// Outcome of the windowed excitation scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PECertificate {
    pub window: usize,
    pub beta: f64,
    pub verdict: bool,
    /// 1-based start of the first violating window, or of the window with
    /// the smallest pivot margin when every window passes.
    pub worst_start: usize,
    pub worst_margin: f64,
}

/// Gram sums Σ_{τ=t}^{t+T} x_τ x_τᵀ for every start t, 1-based.
fn window_grams(xs: &[Vector], window: usize) -> Result<Vec<Matrix>> {
    if window == 0 || xs.len() < window + 1 {
        return Err(RvlError::WindowTooLong {
            window,
            len: xs.len(),
        });
    }
    let n = xs[0].dim();
    for x in xs {
        check_dim(n, x.dim())?;
    }
    let span = window + 1;
    let mut gram = Matrix::zeros(n, n);
    for x in &xs[..span] {
        gram.add_outer(1.0, x, x)?;
    }
    let mut out = Vec::with_capacity(xs.len() - window);
    out.push(gram.symmetrized());
    for start in 1..=(xs.len() - span) {
        gram.add_outer(-1.0, &xs[start - 1], &xs[start - 1])?;
        gram.add_outer(1.0, &xs[start + window], &xs[start + window])?;
        out.push(gram.symmetrized());
    }
    Ok(out)
}

/// Checks Σ_{τ=t}^{t+T} x_τ x_τᵀ ⪰ βI over every start available in `xs`.
pub fn pe_certificate(xs: &[Vector], window: usize, beta: f64) -> Result<PECertificate> {
    if !(beta > 0.0) {
        return Err(RvlError::InvalidParameter(format!(
            "beta must be positive, got {beta}"
        )));
    }
    let grams = window_grams(xs, window)?;
    let mut worst_start = 1;
    let mut worst_margin = f64::INFINITY;
    for (i, g) in grams.iter().enumerate() {
        let margin = psd_margin(g, beta)?;
        if margin < -PIVOT_TOLERANCE {
            return Ok(PECertificate {
                window,
                beta,
                verdict: false,
                worst_start: i + 1,
                worst_margin: margin,
            });
        }
        if margin < worst_margin {
            worst_margin = margin;
            worst_start = i + 1;
        }
    }
    Ok(PECertificate {
        window,
        beta,
        verdict: true,
        worst_start,
        worst_margin,
    })
}

/// Largest β the sequence certifies: the minimum over windows of the
/// smallest Gram eigenvalue.
pub fn pe_level(xs: &[Vector], window: usize) -> Result<f64> {
    window_grams(xs, window)?
        .iter()
        .map(min_eigenvalue)
        .try_fold(f64::INFINITY, |acc, l| Ok(acc.min(l?)))
}

fn require_dim(n: usize) -> Result<()> {
    if n == 0 {
        Err(RvlError::InvalidParameter("dimension must be positive".into()))
    } else {
        Ok(())
    }
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(RvlError::InvalidParameter(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector {
        Vector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn emit_examples() {
        let mut s = RegressionStream::clean(
            v(&[1.0, -1.0]),
            FeatureGen::constant_direction(v(&[2.0, 3.0])).unwrap(),
        )
        .unwrap();
        assert_eq!(s.emit(1).unwrap().y, -1.0);

        let mut z = RegressionStream::new(
            Vector::zeros(2),
            FeatureGen::cycling_basis(2, 1.0).unwrap(),
            DisturbanceGen::Alternating { bound: 0.3 },
        )
        .unwrap();
        for t in 1..10 {
            let smp = z.emit(t).unwrap();
            assert_eq!(smp.y, smp.d);
        }
    }

    #[test]
    fn emit_is_causal() {
        let mut s = RegressionStream::clean(
            v(&[1.0]),
            FeatureGen::cycling_basis(1, 1.0).unwrap(),
        )
        .unwrap();
        s.emit(3).unwrap();
        assert_eq!(
            s.emit(3).unwrap_err(),
            RvlError::CausalityViolation { last: 3, requested: 3 }
        );
        assert!(s.emit(2).is_err());
        assert!(s.emit(4).is_ok());
    }

    #[test]
    fn disturbances_respect_bound() {
        let root = SeededRng::new(17);
        let kinds = vec![
            DisturbanceGen::GaussianClipped { bound: 0.5, rng: root.derive(1) },
            DisturbanceGen::Uniform { bound: 0.5, rng: root.derive(2) },
            DisturbanceGen::Sinusoid { bound: 0.5, frequency: 0.37 },
            DisturbanceGen::Alternating { bound: 0.5 },
        ];
        for mut d in kinds {
            for t in 1..=100_000 {
                assert!(d.sample(t).abs() <= 0.5);
            }
        }
    }

    #[test]
    fn features_respect_declared_bound() {
        let root = SeededRng::new(4);
        let gens = vec![
            FeatureGen::cycling_basis(3, 2.0).unwrap(),
            FeatureGen::gaussian_clipped(3, 1.5, root.derive(1)).unwrap(),
            FeatureGen::sinusoid_bank(vec![1.0, 2.3], vec![1.0, 0.5]).unwrap(),
            FeatureGen::constant_direction(v(&[0.3, 0.4])).unwrap(),
        ];
        for mut g in gens {
            let xm = g.x_max();
            for t in 1..=20_000 {
                assert!(g.sample(t).norm() <= xm * (1.0 + 1e-15));
            }
        }
    }

    #[test]
    fn predict_examples() {
        let th = v(&[0.5, -2.0]);
        let x = v(&[1.0, 3.0]);
        let y = inner(&th, &x).unwrap();
        assert_eq!(predict(&th, &x).unwrap() - y, 0.0);
        assert_eq!(predict(&Vector::zeros(2), &x).unwrap(), 0.0);
        assert_eq!(predict(&v(&[1.0, 0.0]), &v(&[0.0, 5.0])).unwrap(), 0.0);
    }

    #[test]
    fn clean_stream_identity() {
        let th = v(&[0.7, -0.1, 0.3]);
        let mut s = RegressionStream::clean(
            th.clone(),
            FeatureGen::gaussian_clipped(3, 2.0, SeededRng::new(8)).unwrap(),
        )
        .unwrap();
        for t in 1..=1000 {
            let smp = s.emit(t).unwrap();
            assert_eq!(predict(&th, &smp.x).unwrap() - smp.y, 0.0);
        }
    }

    #[test]
    fn pe_examples() {
        let alt: Vec<Vector> = (0..20).map(|t| Vector::basis(2, t % 2)).collect();
        assert!(pe_certificate(&alt, 2, 1.0).unwrap().verdict);

        let constant: Vec<Vector> = (0..20).map(|_| v(&[1.0, 0.0])).collect();
        for window in [1, 3, 7] {
            let c = pe_certificate(&constant, window, 0.01).unwrap();
            assert!(!c.verdict);
            assert_eq!(c.worst_start, 1);
        }

        let ones: Vec<Vector> = (0..10).map(|_| v(&[1.0])).collect();
        assert!(pe_certificate(&ones, 1, 2.0).unwrap().verdict);
        assert!(!pe_certificate(&ones, 1, 2.5).unwrap().verdict);
        assert!((pe_level(&ones, 1).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn pe_window_errors() {
        let xs: Vec<Vector> = (0..3).map(|_| v(&[1.0])).collect();
        assert!(matches!(
            pe_certificate(&xs, 3, 1.0),
            Err(RvlError::WindowTooLong { .. })
        ));
        assert!(pe_certificate(&xs, 2, 1.0).is_ok());
    }

    /// Smallest eigenvalue of a symmetric 2×2 matrix in closed form.
    fn eig_min_2x2(m: &Matrix) -> f64 {
        let (a, b, d) = (m.get(0, 0), m.get(0, 1), m.get(1, 1));
        0.5 * (a + d) - (0.25 * (a - d).powi(2) + b * b).sqrt()
    }

    #[test]
    fn pe_agrees_with_eigenvalue_oracle() {
        let mut rng = SeededRng::new(21);
        for _ in 0..200 {
            let xs: Vec<Vector> = (0..50)
                .map(|_| {
                    // mix of rich and nearly collinear sequences
                    let a = rng.gaussian();
                    let b = if rng.uniform() < 0.5 { rng.gaussian() } else { 0.3 * a };
                    v(&[a, b])
                })
                .collect();
            let window = 1 + (rng.uniform() * 4.0) as usize;
            let beta = rng.uniform_in(0.01, 1.5);
            let mut oracle_min = f64::INFINITY;
            for start in 0..(xs.len() - window) {
                let mut g = Matrix::zeros(2, 2);
                for x in &xs[start..=start + window] {
                    g.add_outer(1.0, x, x).unwrap();
                }
                oracle_min = oracle_min.min(eig_min_2x2(&g));
            }
            if (oracle_min - beta).abs() < 1e-8 {
                continue;
            }
            let cert = pe_certificate(&xs, window, beta).unwrap();
            assert_eq!(cert.verdict, oracle_min > beta);
            assert!((pe_level(&xs, window).unwrap() - oracle_min).abs() < 1e-7);
        }
    }
}
