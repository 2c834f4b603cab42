//! Targets, mass matrices and Hamiltonians for iid product densities
//! `Π(Q) ∝ exp(-Σ_i V(q_i))`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::rng::SimRng;

/// Largest particle dimension accepted for a dense mass matrix.
pub const MAX_DENSE_DIM: usize = 64;

/// Position/momentum pair of one particle.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhasePoint {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::config("phase point needs dimension >= 1"));
        }
        check_dim(q.len(), p.len())?;
        if q.iter().chain(p.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Evaluation("phase point component".into()));
        }
        Ok(Self { q, p })
    }

    /// One-dimensional convenience constructor.
    pub fn scalar(q: f64, p: f64) -> Result<Self> {
        Self::new(vec![q], vec![p])
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// Momentum flip `S(q, p) = (q, -p)`.
    pub fn flipped(&self) -> Self {
        Self {
            q: self.q.clone(),
            p: self.p.iter().map(|v| -v).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.q
            .iter()
            .chain(self.p.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// One iid factor of a product target: a potential `V` on `ℝ^m` and its force
/// `f = -∇V`.
pub trait Target: Send + Sync {
    fn dim(&self) -> usize;

    fn potential(&self, q: &[f64]) -> f64;

    /// Writes `-∇V(q)` into `out`.
    fn force(&self, q: &[f64], out: &mut [f64]);

    fn name(&self) -> String {
        "custom".to_string()
    }

    fn exact_flow_available(&self) -> bool {
        false
    }

    fn exact_sampler_available(&self) -> bool {
        false
    }

    /// Draws `q ~ exp(-V)` into `out`. Returns `false` if the target has no
    /// exact sampler.
    fn sample_exact(&self, _rng: &mut SimRng, _out: &mut [f64]) -> bool {
        false
    }

    /// Advances `(q, p)` along the exact Hamiltonian flow for time `t` under
    /// unit mass. Returns `false` if no closed form is known.
    fn exact_flow(&self, _q: &mut [f64], _p: &mut [f64], _t: f64) -> bool {
        false
    }
}

impl<T: Target + ?Sized> Target for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn potential(&self, q: &[f64]) -> f64 {
        (**self).potential(q)
    }
    fn force(&self, q: &[f64], out: &mut [f64]) {
        (**self).force(q, out)
    }
    fn name(&self) -> String {
        (**self).name()
    }
    fn exact_flow_available(&self) -> bool {
        (**self).exact_flow_available()
    }
    fn exact_sampler_available(&self) -> bool {
        (**self).exact_sampler_available()
    }
    fn sample_exact(&self, rng: &mut SimRng, out: &mut [f64]) -> bool {
        (**self).sample_exact(rng, out)
    }
    fn exact_flow(&self, q: &mut [f64], p: &mut [f64], t: f64) -> bool {
        (**self).exact_flow(q, p, t)
    }
}

impl<T: Target + ?Sized> Target for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn potential(&self, q: &[f64]) -> f64 {
        (**self).potential(q)
    }
    fn force(&self, q: &[f64], out: &mut [f64]) {
        (**self).force(q, out)
    }
    fn name(&self) -> String {
        (**self).name()
    }
    fn exact_flow_available(&self) -> bool {
        (**self).exact_flow_available()
    }
    fn exact_sampler_available(&self) -> bool {
        (**self).exact_sampler_available()
    }
    fn sample_exact(&self, rng: &mut SimRng, out: &mut [f64]) -> bool {
        (**self).sample_exact(rng, out)
    }
    fn exact_flow(&self, q: &mut [f64], p: &mut [f64], t: f64) -> bool {
        (**self).exact_flow(q, p, t)
    }
}

/// Built-in separable targets; every coordinate of a particle carries the same
/// one-dimensional potential.
#[derive(Debug, Clone, PartialEq)]
pub enum BuiltinTarget {
    /// `V(q) = q²/2`.
    StdGaussian { dim: usize },
    /// `V(q) = q²/(2s²)`.
    ScaledGaussian { dim: usize, scale: f64 },
    /// `V(q) = q⁴/4 + q²/2`.
    Quartic { dim: usize },
    /// `V(q) = log cosh q`.
    LogCosh { dim: usize },
    /// `V ≡ 0`: a free particle. Improper, so no exact sampler.
    Flat { dim: usize },
}

impl BuiltinTarget {
    pub const NAMES: [&'static str; 5] = ["std_gaussian", "scaled_gaussian", "quartic", "log_cosh", "flat"];

    /// Looks a target up by name. `scaled_gaussian` reads its `scale` from
    /// `params` (default 1).
    pub fn from_name(name: &str, dim: usize, params: &BTreeMap<String, f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("target dimension must be >= 1"));
        }
        let target = match name {
            "std_gaussian" => Self::StdGaussian { dim },
            "scaled_gaussian" => {
                let scale = params.get("scale").copied().unwrap_or(1.0);
                if !(scale.is_finite() && scale > 0.0) {
                    return Err(Error::config(format!("scaled_gaussian needs scale > 0, got {scale}")));
                }
                Self::ScaledGaussian { dim, scale }
            }
            "quartic" => Self::Quartic { dim },
            "log_cosh" => Self::LogCosh { dim },
            "flat" => Self::Flat { dim },
            other => {
                return Err(Error::config(format!(
                    "unknown target '{other}' (expected one of {})",
                    Self::NAMES.join(", ")
                )))
            }
        };
        Ok(target)
    }

    /// All built-ins in dimension `dim`, with a non-trivial scale for the
    /// scaled Gaussian.
    pub fn all(dim: usize) -> Vec<Self> {
        vec![
            Self::StdGaussian { dim },
            Self::ScaledGaussian { dim, scale: 1.7 },
            Self::Quartic { dim },
            Self::LogCosh { dim },
            Self::Flat { dim },
        ]
    }

    fn unit_potential(&self, x: f64) -> f64 {
        match *self {
            Self::StdGaussian { .. } => 0.5 * x * x,
            Self::ScaledGaussian { scale, .. } => 0.5 * x * x / (scale * scale),
            Self::Quartic { .. } => {
                let x2 = x * x;
                0.25 * x2 * x2 + 0.5 * x2
            }
            // log cosh x = |x| + log(1 + e^{-2|x|}) - log 2, stable for large |x|.
            Self::LogCosh { .. } => {
                let a = x.abs();
                a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
            }
            Self::Flat { .. } => 0.0,
        }
    }

    fn unit_force(&self, x: f64) -> f64 {
        match *self {
            Self::StdGaussian { .. } => -x,
            Self::ScaledGaussian { scale, .. } => -x / (scale * scale),
            Self::Quartic { .. } => -(x * x * x + x),
            Self::LogCosh { .. } => -x.tanh(),
            Self::Flat { .. } => 0.0,
        }
    }

    /// Angular frequency of the harmonic targets under unit mass.
    fn frequency(&self) -> Option<f64> {
        match *self {
            Self::StdGaussian { .. } => Some(1.0),
            Self::ScaledGaussian { scale, .. } => Some(1.0 / scale),
            _ => None,
        }
    }
}

impl Target for BuiltinTarget {
    fn dim(&self) -> usize {
        match *self {
            Self::StdGaussian { dim }
            | Self::ScaledGaussian { dim, .. }
            | Self::Quartic { dim }
            | Self::LogCosh { dim }
            | Self::Flat { dim } => dim,
        }
    }

    fn potential(&self, q: &[f64]) -> f64 {
        q.iter().map(|&x| self.unit_potential(x)).sum()
    }

    fn force(&self, q: &[f64], out: &mut [f64]) {
        for (o, &x) in out.iter_mut().zip(q) {
            *o = self.unit_force(x);
        }
    }

    fn name(&self) -> String {
        match self {
            Self::StdGaussian { .. } => "std_gaussian".into(),
            Self::ScaledGaussian { scale, .. } => format!("scaled_gaussian(scale={scale})"),
            Self::Quartic { .. } => "quartic".into(),
            Self::LogCosh { .. } => "log_cosh".into(),
            Self::Flat { .. } => "flat".into(),
        }
    }

    fn exact_flow_available(&self) -> bool {
        matches!(self, Self::StdGaussian { .. } | Self::ScaledGaussian { .. } | Self::Flat { .. })
    }

    fn exact_sampler_available(&self) -> bool {
        self.frequency().is_some()
    }

    fn sample_exact(&self, rng: &mut SimRng, out: &mut [f64]) -> bool {
        let scale = match *self {
            Self::StdGaussian { .. } => 1.0,
            Self::ScaledGaussian { scale, .. } => scale,
            _ => return false,
        };
        for o in out.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *o = scale * z;
        }
        true
    }

    fn exact_flow(&self, q: &mut [f64], p: &mut [f64], t: f64) -> bool {
        if let Self::Flat { .. } = self {
            for (qi, pi) in q.iter_mut().zip(p.iter()) {
                *qi += t * pi;
            }
            return true;
        }
        let Some(omega) = self.frequency() else {
            return false;
        };
        let (s, c) = (omega * t).sin_cos();
        for (qi, pi) in q.iter_mut().zip(p.iter_mut()) {
            let (q0, p0) = (*qi, *pi);
            *qi = q0 * c + p0 * s / omega;
            *pi = -q0 * omega * s + p0 * c;
        }
        true
    }
}

/// `d` iid copies of one factor target.
#[derive(Debug, Clone)]
pub struct ProductTarget<T> {
    pub factor: T,
    pub d: usize,
}

impl<T: Target> ProductTarget<T> {
    pub fn new(factor: T, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::config("particle count d must be >= 1"));
        }
        if factor.dim() == 0 {
            return Err(Error::config("factor dimension must be >= 1"));
        }
        Ok(Self { factor, d })
    }

    /// Particle dimension `m`.
    pub fn m(&self) -> usize {
        self.factor.dim()
    }

    /// Total dimension `N = m d`.
    pub fn total_dim(&self) -> usize {
        self.m() * self.d
    }
}

#[derive(Debug, Clone)]
enum MassKind {
    Identity,
    Diagonal { diag: Vec<f64>, sqrt: Vec<f64> },
    Dense { matrix: DMatrix<f64>, lower: DMatrix<f64> },
}

/// Symmetric positive definite mass matrix with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct MassSpec {
    dim: usize,
    kind: MassKind,
}

impl MassSpec {
    pub fn identity(dim: usize) -> Self {
        Self { dim, kind: MassKind::Identity }
    }

    pub fn diagonal(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::config("mass diagonal must be non-empty"));
        }
        if let Some(bad) = diag.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::config(format!("mass diagonal entries must be positive, got {bad}")));
        }
        let sqrt = diag.iter().map(|v| v.sqrt()).collect();
        Ok(Self {
            dim: diag.len(),
            kind: MassKind::Diagonal { diag, sqrt },
        })
    }

    /// Dense SPD mass from row-major entries.
    pub fn dense(dim: usize, row_major: &[f64]) -> Result<Self> {
        if dim == 0 || dim > MAX_DENSE_DIM {
            return Err(Error::config(format!("dense mass supports 1..={MAX_DENSE_DIM} dimensions, got {dim}")));
        }
        check_dim(dim * dim, row_major.len())?;
        let matrix = DMatrix::from_row_slice(dim, dim, row_major);
        let asym = (&matrix - matrix.transpose()).abs().max();
        if asym > 1e-12 * matrix.abs().max() {
            return Err(Error::config("dense mass matrix is not symmetric"));
        }
        if matrix.diagonal().iter().any(|v| *v <= 0.0) {
            return Err(Error::config("dense mass matrix has a non-positive diagonal"));
        }
        let chol = matrix
            .clone()
            .cholesky()
            .ok_or_else(|| Error::config("dense mass matrix is not positive definite"))?;
        Ok(Self {
            dim,
            kind: MassKind::Dense { matrix, lower: chol.l() },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, MassKind::Identity)
    }

    /// Lower-triangular Cholesky factor `L` with `M = L Lᵀ`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        match &self.kind {
            MassKind::Identity => DMatrix::identity(self.dim, self.dim),
            MassKind::Diagonal { sqrt, .. } => DMatrix::from_diagonal(&DVector::from_column_slice(sqrt)),
            MassKind::Dense { lower, .. } => lower.clone(),
        }
    }

    /// `M v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        match &self.kind {
            MassKind::Identity => v.to_vec(),
            MassKind::Diagonal { diag, .. } => v.iter().zip(diag).map(|(x, m)| x * m).collect(),
            MassKind::Dense { matrix, .. } => (matrix * DVector::from_column_slice(v)).as_slice().to_vec(),
        }
    }

    /// `M⁻¹ v` written into `out`.
    pub fn apply_inverse_into(&self, v: &[f64], out: &mut [f64]) {
        match &self.kind {
            MassKind::Identity => out.copy_from_slice(v),
            MassKind::Diagonal { diag, .. } => {
                for ((o, x), m) in out.iter_mut().zip(v).zip(diag) {
                    *o = x / m;
                }
            }
            MassKind::Dense { lower, .. } => {
                let y = lower
                    .solve_lower_triangular(&DVector::from_column_slice(v))
                    .expect("Cholesky factor is non-singular");
                let x = lower
                    .transpose()
                    .solve_upper_triangular(&y)
                    .expect("Cholesky factor is non-singular");
                out.copy_from_slice(x.as_slice());
            }
        }
    }

    pub fn apply_inverse(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        self.apply_inverse_into(v, &mut out);
        out
    }

    /// Drift `q ← q + h M⁻¹ p`.
    pub(crate) fn drift(&self, q: &mut [f64], p: &[f64], h: f64) {
        match &self.kind {
            MassKind::Identity => {
                for (qi, pi) in q.iter_mut().zip(p) {
                    *qi += h * pi;
                }
            }
            MassKind::Diagonal { diag, .. } => {
                for ((qi, pi), m) in q.iter_mut().zip(p).zip(diag) {
                    *qi += h * pi / m;
                }
            }
            MassKind::Dense { .. } => {
                let v = self.apply_inverse(p);
                for (qi, vi) in q.iter_mut().zip(&v) {
                    *qi += h * vi;
                }
            }
        }
    }

    /// Kinetic energy `½⟨p, M⁻¹p⟩`.
    pub fn kinetic(&self, p: &[f64]) -> f64 {
        match &self.kind {
            MassKind::Identity => 0.5 * p.iter().map(|v| v * v).sum::<f64>(),
            MassKind::Diagonal { diag, .. } => 0.5 * p.iter().zip(diag).map(|(v, m)| v * v / m).sum::<f64>(),
            MassKind::Dense { .. } => {
                let v = self.apply_inverse(p);
                0.5 * p.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>()
            }
        }
    }

    /// Draws `p ~ N(0, M)` as `L z` into `out`.
    pub fn sample_into(&self, rng: &mut SimRng, out: &mut [f64]) {
        match &self.kind {
            MassKind::Identity => {
                for o in out.iter_mut() {
                    *o = StandardNormal.sample(rng);
                }
            }
            MassKind::Diagonal { sqrt, .. } => {
                for (o, s) in out.iter_mut().zip(sqrt) {
                    let z: f64 = StandardNormal.sample(rng);
                    *o = s * z;
                }
            }
            MassKind::Dense { lower, .. } => {
                let z = DVector::from_fn(self.dim, |_, _| StandardNormal.sample(rng));
                out.copy_from_slice((lower * z).as_slice());
            }
        }
    }
}

/// `H(q, p) = ½⟨p, M⁻¹p⟩ + V(q)`.
pub fn hamiltonian<T: Target + ?Sized>(x: &PhasePoint, target: &T, mass: &MassSpec) -> Result<f64> {
    check_dim(target.dim(), x.dim())?;
    check_dim(mass.dim(), x.dim())?;
    let h = mass.kinetic(&x.p) + target.potential(&x.q);
    if h.is_finite() {
        Ok(h)
    } else {
        Err(Error::Evaluation("hamiltonian".into()))
    }
}

/// Fresh momentum `P ~ N(0, M)`.
pub fn sample_momentum(mass: &MassSpec, rng: &mut SimRng) -> Vec<f64> {
    let mut p = vec![0.0; mass.dim()];
    mass.sample_into(rng, &mut p);
    p
}

/// Largest discrepancy between the coded force and a central difference of the
/// potential, `max_i |f_i(q) + (V(q+εe_i) - V(q-εe_i))/(2ε)| / (1 + |f_i(q)|)`.
pub fn grad_check<T: Target + ?Sized>(target: &T, q: &[f64], eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::config(format!("grad_check needs eps > 0, got {eps}")));
    }
    check_dim(target.dim(), q.len())?;
    let mut force = vec![0.0; q.len()];
    target.force(q, &mut force);
    let mut probe = q.to_vec();
    let mut worst = 0.0_f64;
    for i in 0..q.len() {
        probe[i] = q[i] + eps;
        let up = target.potential(&probe);
        probe[i] = q[i] - eps;
        let down = target.potential(&probe);
        probe[i] = q[i];
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::Evaluation(format!("potential at probe {i} of grad_check")));
        }
        let fd = (up - down) / (2.0 * eps);
        worst = worst.max((force[i] + fd).abs() / (1.0 + force[i].abs()));
    }
    Ok(worst)
}
