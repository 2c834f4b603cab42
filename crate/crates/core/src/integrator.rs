//! Störmer–Verlet (leapfrog) integration.
//!
//! A leg `ψ_h^(T)` is `n_steps` kick–drift–kick steps with the adjacent half
//! kicks fused, so a leg costs `n_steps + 1` force evaluations.

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::model::{hamiltonian, MassSpec, PhasePoint, Target};

/// Energy drift beyond which a leg is abandoned as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

/// How `T / h` is turned into a step count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepRounding {
    /// `max(1, ⌊T/h⌋)`: the leg never overshoots `T`.
    #[default]
    Floor,
    /// `⌈T/h⌉`: the leg never falls short of `T`; this is the step count
    /// charged by the cost model.
    Ceil,
}

impl StepRounding {
    pub fn steps(self, leg_length: f64, h: f64) -> usize {
        let ratio = leg_length / h;
        // Snap ratios that are integers up to rounding, e.g. 1.0 / 0.1.
        let nearest = ratio.round();
        let snapped = if (ratio - nearest).abs() <= 1e-9 * ratio.max(1.0) {
            nearest
        } else {
            match self {
                StepRounding::Floor => ratio.floor(),
                StepRounding::Ceil => ratio.ceil(),
            }
        };
        (snapped as usize).max(1)
    }
}

/// Step size, leg length and the derived number of steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeapfrogParams {
    pub h: f64,
    pub leg_length: f64,
    pub n_steps: usize,
}

impl LeapfrogParams {
    /// `n_steps = max(1, ⌊T/h⌋)`.
    pub fn new(h: f64, leg_length: f64) -> Result<Self> {
        Self::with_rounding(h, leg_length, StepRounding::Floor)
    }

    pub fn with_rounding(h: f64, leg_length: f64, rounding: StepRounding) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::config(format!("step size must be positive, got {h}")));
        }
        if !(leg_length.is_finite() && leg_length > 0.0) {
            return Err(Error::config(format!("leg length must be positive, got {leg_length}")));
        }
        Ok(Self {
            h,
            leg_length,
            n_steps: rounding.steps(leg_length, h),
        })
    }

    /// Force evaluations per leg.
    pub fn grad_evals(&self) -> usize {
        self.n_steps + 1
    }
}

/// Endpoint of one leg with its energy error `Δ = H(end) - H(start)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LegResult {
    pub endpoint: PhasePoint,
    pub delta: f64,
    pub grad_evals: usize,
}

/// In-place leg on raw slices; the hot path behind every kernel.
///
/// Returns the number of force evaluations, or `None` if the trajectory
/// produced a non-finite value. `force` is scratch space of length `m`.
pub(crate) fn leg_in_place<T: Target + ?Sized>(
    q: &mut [f64],
    p: &mut [f64],
    target: &T,
    mass: &MassSpec,
    h: f64,
    n_steps: usize,
    force: &mut [f64],
) -> Option<usize> {
    let half = 0.5 * h;
    target.force(q, force);
    kick(p, force, half);
    for step in 0..n_steps {
        mass.drift(q, p, h);
        target.force(q, force);
        let w = if step + 1 == n_steps { half } else { h };
        kick(p, force, w);
    }
    let finite = q.iter().chain(p.iter()).all(|v| v.is_finite());
    finite.then_some(n_steps + 1)
}

#[inline]
fn kick(p: &mut [f64], force: &[f64], w: f64) {
    for (pi, fi) in p.iter_mut().zip(force) {
        *pi += w * fi;
    }
}

fn check_setup<T: Target + ?Sized>(x: &PhasePoint, target: &T, mass: &MassSpec) -> Result<()> {
    check_dim(target.dim(), x.dim())?;
    check_dim(mass.dim(), x.dim())
}

/// One kick–drift–kick step:
/// `P_{h/2} = P_0 + (h/2) f(Q_0)`, `Q_h = Q_0 + h M⁻¹ P_{h/2}`,
/// `P_h = P_{h/2} + (h/2) f(Q_h)`.
pub fn leapfrog_step<T: Target + ?Sized>(x: &PhasePoint, target: &T, mass: &MassSpec, h: f64) -> Result<PhasePoint> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::config(format!("step size must be positive, got {h}")));
    }
    check_setup(x, target, mass)?;
    let (mut q, mut p) = (x.q.clone(), x.p.clone());
    let mut force = vec![0.0; x.dim()];
    match leg_in_place(&mut q, &mut p, target, mass, h, 1, &mut force) {
        Some(_) => Ok(PhasePoint { q, p }),
        None => Err(Error::Divergence { q, p }),
    }
}

/// `ψ_h^(T)(x)` together with its energy error.
pub fn integrate_leg<T: Target + ?Sized>(
    x: &PhasePoint,
    target: &T,
    mass: &MassSpec,
    params: &LeapfrogParams,
) -> Result<LegResult> {
    check_setup(x, target, mass)?;
    let start = hamiltonian(x, target, mass)?;
    let (mut q, mut p) = (x.q.clone(), x.p.clone());
    let mut force = vec![0.0; x.dim()];
    let Some(grad_evals) = leg_in_place(&mut q, &mut p, target, mass, params.h, params.n_steps, &mut force) else {
        return Err(Error::Divergence { q, p });
    };
    let endpoint = PhasePoint { q, p };
    let end = match hamiltonian(&endpoint, target, mass) {
        Ok(v) => v,
        Err(_) => return Err(Error::Divergence { q: endpoint.q, p: endpoint.p }),
    };
    let delta = end - start;
    if delta.abs() > DIVERGENCE_THRESHOLD {
        return Err(Error::Divergence { q: endpoint.q, p: endpoint.p });
    }
    Ok(LegResult { endpoint, delta, grad_evals })
}

/// Finite-difference step for Jacobian probes, `1e-5 (1 + ‖x‖)`.
pub fn default_fd_eps(x: &PhasePoint) -> f64 {
    1e-5 * (1.0 + x.norm())
}

/// Determinant of the central finite-difference Jacobian of `ψ_h^(T)` at `x`.
pub fn jacobian_det_check<T: Target + ?Sized>(
    x: &PhasePoint,
    target: &T,
    mass: &MassSpec,
    params: &LeapfrogParams,
    eps: f64,
) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::config(format!("finite-difference eps must be positive, got {eps}")));
    }
    let m = x.dim();
    if 2 * m > 20 {
        return Err(Error::config(format!("Jacobian probe limited to 2m <= 20, got 2m = {}", 2 * m)));
    }
    check_setup(x, target, mass)?;
    let n = 2 * m;
    let map = |z: &[f64]| -> Result<Vec<f64>> {
        let (mut q, mut p) = (z[..m].to_vec(), z[m..].to_vec());
        let mut force = vec![0.0; m];
        leg_in_place(&mut q, &mut p, target, mass, params.h, params.n_steps, &mut force)
            .ok_or_else(|| Error::Divergence { q: q.clone(), p: p.clone() })?;
        q.extend_from_slice(&p);
        Ok(q)
    };
    let base: Vec<f64> = x.q.iter().chain(x.p.iter()).copied().collect();
    let mut jac = DMatrix::zeros(n, n);
    let mut probe = base.clone();
    for j in 0..n {
        probe[j] = base[j] + eps;
        let up = map(&probe)?;
        probe[j] = base[j] - eps;
        let down = map(&probe)?;
        probe[j] = base[j];
        for i in 0..n {
            jac[(i, j)] = (up[i] - down[i]) / (2.0 * eps);
        }
    }
    Ok(jac.determinant())
}

/// `‖S ψ S ψ (x) - x‖ / (1 + ‖x‖)` with `S` the momentum flip.
pub fn reversibility_residual<T: Target + ?Sized>(
    x: &PhasePoint,
    target: &T,
    mass: &MassSpec,
    params: &LeapfrogParams,
) -> Result<f64> {
    check_setup(x, target, mass)?;
    let m = x.dim();
    let (mut q, mut p) = (x.q.clone(), x.p.clone());
    let mut force = vec![0.0; m];
    for _ in 0..2 {
        leg_in_place(&mut q, &mut p, target, mass, params.h, params.n_steps, &mut force)
            .ok_or_else(|| Error::Divergence { q: q.clone(), p: p.clone() })?;
        p.iter_mut().for_each(|v| *v = -*v);
    }
    let err = q
        .iter()
        .zip(&x.q)
        .chain(p.iter().zip(&x.p))
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(err / (1.0 + x.norm()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BuiltinTarget;
    use approx::assert_abs_diff_eq;

    fn harmonic() -> BuiltinTarget {
        BuiltinTarget::StdGaussian { dim: 1 }
    }

    #[test]
    fn step_counts() {
        let p = LeapfrogParams::new(0.1, 1.0).unwrap();
        assert_eq!(p.n_steps, 10);
        assert_eq!(LeapfrogParams::new(0.3, 1.0).unwrap().n_steps, 3);
        assert_eq!(LeapfrogParams::new(2.0, 1.0).unwrap().n_steps, 1);
        let ceil = LeapfrogParams::with_rounding(0.3, 1.0, StepRounding::Ceil).unwrap();
        assert_eq!(ceil.n_steps, 4);
        let exact = LeapfrogParams::with_rounding(0.125, 1.0, StepRounding::Ceil).unwrap();
        assert_eq!(exact.n_steps, 8);
        assert!(LeapfrogParams::new(0.0, 1.0).is_err());
        assert!(LeapfrogParams::new(0.1, -1.0).is_err());
        assert_eq!(p.grad_evals(), 11);
    }

    #[test]
    fn single_step_harmonic() {
        let x = PhasePoint::scalar(1.0, 0.0).unwrap();
        let y = leapfrog_step(&x, &harmonic(), &MassSpec::identity(1), 0.1).unwrap();
        assert_abs_diff_eq!(y.q[0], 0.995, epsilon = 1e-15);
        assert_abs_diff_eq!(y.p[0], -0.09975, epsilon = 1e-15);
    }

    #[test]
    fn single_step_free_particle() {
        let x = PhasePoint::scalar(2.0, 1.0).unwrap();
        let y = leapfrog_step(&x, &BuiltinTarget::Flat { dim: 1 }, &MassSpec::identity(1), 0.3).unwrap();
        assert_abs_diff_eq!(y.q[0], 2.3, epsilon = 1e-15);
        assert_eq!(y.p[0], 1.0);
    }

    #[test]
    fn step_flip_step_flip_returns() {
        let x = PhasePoint::scalar(1.0, 0.0).unwrap();
        let mass = MassSpec::identity(1);
        let y = leapfrog_step(&x, &harmonic(), &mass, 0.1).unwrap().flipped();
        let z = leapfrog_step(&y, &harmonic(), &mass, 0.1).unwrap().flipped();
        assert!((z.q[0] - 1.0).abs() <= 1e-14);
        assert!(z.p[0].abs() <= 1e-14);
    }

    #[test]
    fn leg_two_steps() {
        let x = PhasePoint::scalar(1.0, 0.0).unwrap();
        let params = LeapfrogParams::new(0.5, 1.0).unwrap();
        let leg = integrate_leg(&x, &harmonic(), &MassSpec::identity(1), &params).unwrap();
        assert_abs_diff_eq!(leg.endpoint.q[0], 0.53125, epsilon = 1e-15);
        assert_abs_diff_eq!(leg.endpoint.p[0], -0.8203125, epsilon = 1e-15);
        // ½(q² + p²) - ½ evaluated by hand.
        assert_abs_diff_eq!(leg.delta, -0.022430419921875, epsilon = 1e-6);
        assert_eq!(leg.grad_evals, 3);
    }

    #[test]
    fn leg_delta_leading_order() {
        let x = PhasePoint::scalar(1.0, 0.0).unwrap();
        let params = LeapfrogParams::new(0.1, 1.0).unwrap();
        let leg = integrate_leg(&x, &harmonic(), &MassSpec::identity(1), &params).unwrap();
        assert_abs_diff_eq!(leg.delta, -8.851e-4, epsilon = 1e-5);
    }

    #[test]
    fn free_particle_conserves_energy_exactly() {
        let flat = BuiltinTarget::Flat { dim: 2 };
        let x = PhasePoint::new(vec![0.3, -2.0], vec![1.25, 0.5]).unwrap();
        for h in [0.01, 0.1, 0.37] {
            let leg = integrate_leg(&x, &flat, &MassSpec::identity(2), &LeapfrogParams::new(h, 1.0).unwrap()).unwrap();
            assert_eq!(leg.delta, 0.0);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let quartic = BuiltinTarget::Quartic { dim: 1 };
        let x = PhasePoint::scalar(3.0, 0.0).unwrap();
        let params = LeapfrogParams::new(1.5, 15.0).unwrap();
        let err = integrate_leg(&x, &quartic, &MassSpec::identity(1), &params).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn jacobian_examples() {
        let mass = MassSpec::identity(1);
        let x = PhasePoint::scalar(1.0, 0.0).unwrap();
        let det = jacobian_det_check(&x, &harmonic(), &mass, &LeapfrogParams::new(0.1, 1.0).unwrap(), 1e-5).unwrap();
        assert!((det - 1.0).abs() <= 1e-7);

        let quartic = BuiltinTarget::Quartic { dim: 1 };
        let x = PhasePoint::scalar(0.5, 0.3).unwrap();
        let det = jacobian_det_check(&x, &quartic, &mass, &LeapfrogParams::new(0.05, 1.0).unwrap(), 1e-5).unwrap();
        assert!((det - 1.0).abs() <= 1e-6);

        let flat = BuiltinTarget::Flat { dim: 1 };
        let det = jacobian_det_check(&x, &flat, &mass, &LeapfrogParams::new(0.4, 0.4).unwrap(), 1e-5).unwrap();
        assert!((det - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn jacobian_dimension_cap() {
        let t = BuiltinTarget::StdGaussian { dim: 11 };
        let x = PhasePoint::new(vec![0.0; 11], vec![0.0; 11]).unwrap();
        let params = LeapfrogParams::new(0.1, 1.0).unwrap();
        assert!(jacobian_det_check(&x, &t, &MassSpec::identity(11), &params, 1e-5).is_err());
    }

    #[test]
    fn reversibility_examples() {
        let mass = MassSpec::identity(1);
        let x = PhasePoint::scalar(1.0, 0.0).unwrap();
        let r = reversibility_residual(&x, &harmonic(), &mass, &LeapfrogParams::new(0.1, 1.0).unwrap()).unwrap();
        assert!(r <= 1e-12);
        let x = PhasePoint::scalar(0.5, 0.3).unwrap();
        let quartic = BuiltinTarget::Quartic { dim: 1 };
        let r = reversibility_residual(&x, &quartic, &mass, &LeapfrogParams::new(0.05, 1.0).unwrap()).unwrap();
        assert!(r <= 1e-10);
        // Dyadic values keep the free particle exact.
        let x = PhasePoint::scalar(0.5, 0.25).unwrap();
        let flat = BuiltinTarget::Flat { dim: 1 };
        let r = reversibility_residual(&x, &flat, &mass, &LeapfrogParams::new(0.125, 1.0).unwrap()).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn energy_error_is_second_order() {
        let mass = MassSpec::identity(1);
        let x = PhasePoint::scalar(1.0, 0.0).unwrap();
        let hs = [0.2, 0.1, 0.05, 0.025];
        let deltas: Vec<f64> = hs
            .iter()
            .map(|&h| {
                integrate_leg(&x, &harmonic(), &mass, &LeapfrogParams::new(h, 1.0).unwrap())
                    .unwrap()
                    .delta
            })
            .collect();
        for (h, d) in hs.iter().zip(&deltas) {
            assert!(d.abs() / (h * h) < 0.1, "C bound violated at h={h}");
        }
        let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
        let ys: Vec<f64> = deltas.iter().map(|d| d.abs().ln()).collect();
        let slope = crate::stats::ls_slope(&xs, &ys);
        assert!((slope - 2.0).abs() <= 0.1, "slope {slope}");
    }

    #[test]
    fn dense_mass_leg_is_reversible() {
        let t = BuiltinTarget::Quartic { dim: 2 };
        let mass = MassSpec::dense(2, &[2.0, 0.3, 0.3, 0.7]).unwrap();
        let x = PhasePoint::new(vec![0.4, -0.2], vec![0.3, 0.9]).unwrap();
        let params = LeapfrogParams::new(0.05, 1.0).unwrap();
        assert!(reversibility_residual(&x, &t, &mass, &params).unwrap() <= 1e-10);
        let det = jacobian_det_check(&x, &t, &mass, &params, default_fd_eps(&x)).unwrap();
        assert!((det - 1.0).abs() <= 1e-6);
    }
}
