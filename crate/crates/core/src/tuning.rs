//! Cost model and acceptance-probability tuning.
//!
//! Under `h = l d^{-1/4}` the limiting mean acceptance is
//! `a(l) = 2Φ(-l²√Σ/2)`. Rewriting the efficiency `a(l)·l` in terms of `a`
//! gives `(√2/Σ^{1/4}) · a · Φ⁻¹(1 - a/2)^{1/2}`; the prefactor does not move
//! the maximiser, so the optimal acceptance is the same for every target.

use crate::error::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Default leapfrog cost per particle per step.
pub const DEFAULT_C_LF: f64 = 1.0;
/// Default per-particle overhead per proposal.
pub const DEFAULT_C_O: f64 = 0.1;

/// Standard normal CDF, `½ erfc(-z/√2)`.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

pub fn normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal quantile: Acklam's rational approximation followed by one
/// Newton correction against [`normal_cdf`].
pub fn normal_quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::domain(format!("normal quantile needs u in (0, 1), got {u}")));
    }
    if u > 0.5 {
        return normal_quantile(1.0 - u).map(|x| -x);
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if u < P_LOW {
        let q = (-2.0 * u.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    Ok(x - (normal_cdf(x) - u) / normal_pdf(x))
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("Σ must be positive, got {sigma}")))
    }
}

/// `a(l) = 2Φ(-l²√Σ/2)`.
pub fn a_of_l(l: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if !(l.is_finite() && l > 0.0) {
        return Err(Error::domain(format!("l must be positive, got {l}")));
    }
    Ok(2.0 * normal_cdf(-0.5 * l * l * sigma.sqrt()))
}

/// Inverse of [`a_of_l`]: `l = (2Φ⁻¹(1 - a/2)/√Σ)^{1/2}`.
pub fn l_of_a(a: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::domain(format!("acceptance must lie in (0, 1), got {a}")));
    }
    let z = normal_quantile(1.0 - 0.5 * a)?;
    Ok((2.0 * z / sigma.sqrt()).sqrt())
}

/// Target-free efficiency `a · Φ⁻¹(1 - a/2)^{1/2}`, extended by 0 at both ends.
pub fn eff_of_a(a: f64) -> f64 {
    if !(a > 0.0 && a < 1.0) {
        return 0.0;
    }
    match normal_quantile(1.0 - 0.5 * a) {
        Ok(z) => a * z.max(0.0).sqrt(),
        Err(_) => 0.0,
    }
}

/// Multiplies [`eff_of_a`] into the absolute efficiency `a(l)·l`.
pub fn eff_prefactor(sigma: f64) -> f64 {
    SQRT_2 / sigma.powf(0.25)
}

/// Golden-section maximiser of a unimodal function on `[lo, hi]`.
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// The acceptance probability maximising [`eff_of_a`], to `1e-6` in `a`.
pub fn optimal_acceptance() -> f64 {
    golden_section_max(eff_of_a, 0.0, 1.0, 1e-7)
}

/// Per-proposal cost `⌈T d^{1/4}/l⌉ · d · C_LF + d · C_O`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub c_lf: f64,
    pub c_o: f64,
    pub leg_length: f64,
    pub d: usize,
}

impl CostModel {
    pub fn new(c_lf: f64, c_o: f64, leg_length: f64, d: usize) -> Result<Self> {
        if !(c_lf > 0.0 && c_lf.is_finite()) {
            return Err(Error::config(format!("C_LF must be positive, got {c_lf}")));
        }
        if !(c_o >= 0.0 && c_o.is_finite()) {
            return Err(Error::config(format!("C_O must be non-negative, got {c_o}")));
        }
        if !(leg_length > 0.0 && leg_length.is_finite()) {
            return Err(Error::config(format!("T must be positive, got {leg_length}")));
        }
        if d == 0 {
            return Err(Error::config("d must be >= 1"));
        }
        Ok(Self { c_lf, c_o, leg_length, d })
    }

    pub fn with_defaults(leg_length: f64, d: usize) -> Result<Self> {
        Self::new(DEFAULT_C_LF, DEFAULT_C_O, leg_length, d)
    }
}

/// Evaluates the per-proposal cost, ceiling included.
pub fn cost_per_proposal(cost: &CostModel, l: f64) -> Result<f64> {
    if !(l > 0.0) {
        return Err(Error::domain(format!("l must be positive, got {l}")));
    }
    let d = cost.d as f64;
    let steps = (cost.leg_length * d.powf(0.25) / l).ceil().max(1.0);
    Ok(steps * d * cost.c_lf + d * cost.c_o)
}

/// Limit of `d^{5/4} · SJD_d`: `C_J δ a(l) l / (T C_LF)`.
pub fn sjd_rate_prediction(cost: &CostModel, l: f64, sigma: f64, c_j: f64, delta: f64) -> Result<f64> {
    if delta < 0.0 || c_j < 0.0 {
        return Err(Error::domain("C_J and δ must be non-negative"));
    }
    Ok(c_j * delta * a_of_l(l, sigma)? * l / (cost.leg_length * cost.c_lf))
}

/// Largest `λ_d δ` for which the first-order Poisson composition is used.
pub const MAX_CLOCK_PRODUCT: f64 = 1e-3;

/// Empirical `d^{5/4} · SJD_d` to first order in `λ_d δ`:
/// `d^{5/4} · λ_d δ · E[(qⁿ⁺¹ - qⁿ)²]` with `λ_d = 1/C_{l,d}`.
pub fn sjd_empirical(cost: &CostModel, l: f64, jump_sq_mean: f64, delta: f64) -> Result<f64> {
    let lambda = 1.0 / cost_per_proposal(cost, l)?;
    if !(delta >= 0.0) || lambda * delta > MAX_CLOCK_PRODUCT {
        return Err(Error::domain(format!(
            "first-order SJD needs λ_d·δ <= {MAX_CLOCK_PRODUCT}, got {}",
            lambda * delta
        )));
    }
    Ok((cost.d as f64).powf(1.25) * lambda * delta * jump_sq_mean)
}

/// Acceptance grid for curve emission: `n` evenly spaced points in `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { lo: 0.001, hi: 0.999, n: 999 }
    }
}

impl GridSpec {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.lo > 0.0 && self.hi < 1.0 && self.lo < self.hi && self.n >= 2) {
            return Err(Error::config(format!(
                "acceptance grid must satisfy 0 < lo < hi < 1 and n >= 2, got {self:?}"
            )));
        }
        let step = (self.hi - self.lo) / (self.n - 1) as f64;
        Ok((0..self.n).map(|i| self.lo + step * i as f64).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningRow {
    pub a: f64,
    /// Prefactor-free efficiency.
    pub eff: f64,
    pub l: f64,
    /// `a · l`, the efficiency on the absolute scale for this Σ.
    pub eff_absolute: f64,
    pub eff_normalized: f64,
    pub is_argmax: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningCurve {
    pub sigma: f64,
    pub rows: Vec<TuningRow>,
}

impl TuningCurve {
    pub fn argmax(&self) -> &TuningRow {
        self.rows.iter().find(|r| r.is_argmax).expect("curve has an argmax row")
    }

    /// Whether the efficiency column rises then falls with a single turn.
    pub fn is_unimodal(&self) -> bool {
        let effs: Vec<f64> = self.rows.iter().map(|r| r.eff).collect();
        sign_changes(&effs) == 1
    }
}

/// Number of sign changes in the successive differences of `values`.
pub fn sign_changes(values: &[f64]) -> usize {
    let signs: Vec<f64> = values
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d != 0.0)
        .map(f64::signum)
        .collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Tabulates the efficiency curve over an acceptance grid.
pub fn emit_efficiency_curve(sigma: f64, grid: &GridSpec) -> Result<TuningCurve> {
    check_sigma(sigma)?;
    let prefactor = eff_prefactor(sigma);
    let mut rows = grid
        .points()?
        .into_iter()
        .map(|a| {
            let eff = eff_of_a(a);
            Ok(TuningRow {
                a,
                eff,
                l: l_of_a(a, sigma)?,
                eff_absolute: prefactor * eff,
                eff_normalized: 0.0,
                is_argmax: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (best, max) = rows
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, r)| if r.eff > acc.1 { (i, r.eff) } else { acc });
    for r in rows.iter_mut() {
        r.eff_normalized = r.eff / max;
    }
    rows[best].is_argmax = true;
    Ok(TuningCurve { sigma, rows })
}
