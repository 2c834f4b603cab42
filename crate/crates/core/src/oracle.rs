//! Closed forms for the harmonic oscillator `H = (p² + q²)/2`.
//!
//! Leapfrog on this Hamiltonian is the linear map
//! `Ξ = [[1 - h²/2, h], [-h + h³/4, 1 - h²/2]]`, whose powers have the closed
//! form `Ξⁿ = [[cos nθ, sin nθ / c], [-c sin nθ, cos nθ]]` with
//! `θ = arccos(1 - h²/2)` and `c = √(1 - h²/4)`. The expansion coefficients
//! `α`, `β` of `Δ = h²α + h⁴β + O(h⁶)` are valid for `T = 1` and unit mass.
//!
//! Past `h ≈ 1.9` the `1/c` factor makes the closed form ill-conditioned.

use crate::error::{Error, Result};
use crate::model::PhasePoint;

pub type Mat2 = [[f64; 2]; 2];

pub const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

pub fn det(a: &Mat2) -> f64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

/// One leapfrog step on the harmonic oscillator as a matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicLeapfrogMatrix {
    pub h: f64,
    pub theta: f64,
    pub xi: Mat2,
}

impl HarmonicLeapfrogMatrix {
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 0.0 && h < 2.0) {
            return Err(Error::domain(format!("harmonic leapfrog is stable only for 0 < h < 2, got {h}")));
        }
        let a = 1.0 - 0.5 * h * h;
        Ok(Self {
            h,
            theta: a.acos(),
            xi: [[a, h], [-h + 0.25 * h * h * h, a]],
        })
    }

    /// `Ξⁿ` by diagonalisation.
    pub fn power(&self, n: u32) -> Mat2 {
        if n == 0 {
            return IDENTITY;
        }
        let c = (1.0 - 0.25 * self.h * self.h).sqrt();
        let (s, co) = (self.theta * n as f64).sin_cos();
        [[co, s / c], [-c * s, co]]
    }

    /// `Ξⁿ` by repeated multiplication.
    pub fn power_by_multiplication(&self, n: u32) -> Mat2 {
        (0..n).fold(IDENTITY, |acc, _| mat_mul(&acc, &self.xi))
    }
}

/// Closed-form `Ξⁿ`.
pub fn leapfrog_power(h: f64, n: u32) -> Result<Mat2> {
    Ok(HarmonicLeapfrogMatrix::new(h)?.power(n))
}

/// Exact flow: rotation by `t` in every `(q_j, p_j)` plane.
pub fn exact_flow(x: &PhasePoint, t: f64) -> PhasePoint {
    let (s, c) = t.sin_cos();
    let (q, p) = x
        .q
        .iter()
        .zip(&x.p)
        .map(|(&q, &p)| (q * c + p * s, -q * s + p * c))
        .unzip();
    PhasePoint { q, p }
}

/// `Δ = ½ xᵀ(AᵀA - I)x` for the linear map `A`.
pub fn quadratic_energy_increment(a: &Mat2, q: f64, p: f64) -> f64 {
    let q1 = a[0][0] * q + a[0][1] * p;
    let p1 = a[1][0] * q + a[1][1] * p;
    0.5 * ((q1 * q1 + p1 * p1) - (q * q + p * p))
}

/// `α(q,p) = ((p² - q²) sin²1 + pq sin 2) / 8`.
pub fn alpha(q: f64, p: f64) -> f64 {
    let s1 = 1.0_f64.sin();
    ((p * p - q * q) * s1 * s1 + p * q * 2.0_f64.sin()) / 8.0
}

/// `β(q,p) = (-q² sin 2 + pq(2 cos 2 + 3 sin 2) + p²(3 - 3 cos 2 + sin 2)) / 192`.
pub fn beta(q: f64, p: f64) -> f64 {
    let (s2, c2) = 2.0_f64.sin_cos();
    (-q * q * s2 + p * q * (2.0 * c2 + 3.0 * s2) + p * p * (3.0 - 3.0 * c2 + s2)) / 192.0
}

/// Analytic constants of the standard Gaussian with `T = 1`, unit mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicConstants {
    /// `Σ = Var[α] = sin²(1)/16`.
    pub sigma: f64,
    /// `μ = E[β] = sin²(1)/32`.
    pub mu: f64,
    /// `C_J = E[(q(1) - q(0))²] = 2(1 - cos 1)`.
    pub c_j: f64,
}

pub fn harmonic_constants() -> HarmonicConstants {
    let s1 = 1.0_f64.sin();
    HarmonicConstants {
        sigma: s1 * s1 / 16.0,
        mu: s1 * s1 / 32.0,
        c_j: 2.0 * (1.0 - 1.0_f64.cos()),
    }
}
