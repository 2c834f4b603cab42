//! Dimension-scaling studies for HMC under `h = l d^{-1/4}`.
//!
//! Acceptance is estimated from fresh stationary draws each transition
//! (the limit theorems are statements in stationarity), averaging
//! `1 ∧ e^{R}` rather than the accept indicator. Displacement and the
//! one-step diagnostic use consecutive transitions of stationary chains.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::integrator::{leg_in_place, LeapfrogParams, StepRounding};
use crate::kernel::{ChainState, KernelConfig};
use crate::model::{MassSpec, ProductTarget, Target};
use crate::moments::{estimate_alpha_variance, PhaseSampler};
use crate::oracle::harmonic_constants;
use crate::rng::derived;
use crate::stats::{ks_two_sample, mean_and_se, KsResult};
use crate::tuning::{a_of_l, sjd_empirical, sjd_rate_prediction, CostModel};

/// Independent random streams per scaling row.
pub const N_SHARDS: usize = 64;
/// Reference step for C_J when no exact flow is available.
pub const CJ_REFERENCE_STEP: f64 = 1e-3;
/// Step used to estimate Σ when no closed form applies.
pub const SIGMA_ESTIMATION_STEP: f64 = 0.05;

/// `h = l · d^{-exponent}`.
pub fn scaled_step(l: f64, d: usize, exponent: f64) -> f64 {
    l * (d as f64).powf(-exponent)
}

/// `h = l · d^{-1/4}`.
pub fn hmc_step(l: f64, d: usize) -> f64 {
    scaled_step(l, d, 0.25)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRunConfig {
    pub d_grid: Vec<usize>,
    pub l: f64,
    pub leg_length: f64,
    pub n_transitions: usize,
    /// Warm-start length for targets without an exact sampler.
    pub burn_in: usize,
    /// Chains used in chain mode.
    pub replicates: usize,
    pub seed: u64,
    /// Step-count rule; the cost model charges `⌈T/h⌉`.
    pub rounding: StepRounding,
}

impl ScalingRunConfig {
    pub fn new(d_grid: Vec<usize>, l: f64, n_transitions: usize, seed: u64) -> Self {
        Self {
            d_grid,
            l,
            leg_length: 1.0,
            n_transitions,
            burn_in: crate::kernel::WARM_START_BURN_IN,
            replicates: 16,
            seed,
            rounding: StepRounding::Ceil,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_grid.is_empty() || self.d_grid[0] == 0 || self.d_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("d_grid must be non-empty, strictly increasing and >= 1"));
        }
        if !(self.l > 0.0 && self.l.is_finite()) {
            return Err(Error::config(format!("l must be positive, got {}", self.l)));
        }
        if !(self.leg_length > 0.0) {
            return Err(Error::config("leg length must be positive"));
        }
        if self.n_transitions == 0 || self.replicates == 0 {
            return Err(Error::config("n_transitions and replicates must be >= 1"));
        }
        Ok(())
    }

    pub fn params_for(&self, d: usize) -> Result<LeapfrogParams> {
        LeapfrogParams::with_rounding(hmc_step(self.l, d), self.leg_length, self.rounding)
    }
}

/// Where the constants Σ and C_J came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstantSource {
    /// Closed forms for the standard Gaussian, `T = 1`, unit mass.
    HarmonicOracle,
    Estimated,
}

/// Σ and C_J for a target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryConstants {
    pub sigma: f64,
    pub c_j: f64,
    pub source: ConstantSource,
}

fn oracle_applies<T: Target>(target: &T, mass: &MassSpec, leg_length: f64) -> bool {
    target.name() == "std_gaussian" && target.dim() == 1 && mass.is_identity() && leg_length == 1.0
}

/// Closed forms when they apply, otherwise Monte-Carlo estimates with `n`
/// draws.
pub fn resolve_constants<T: Target>(
    target: &T,
    mass: &MassSpec,
    leg_length: f64,
    n: usize,
    seed: u64,
) -> Result<TheoryConstants> {
    if oracle_applies(target, mass, leg_length) {
        let k = harmonic_constants();
        return Ok(TheoryConstants {
            sigma: k.sigma,
            c_j: k.c_j,
            source: ConstantSource::HarmonicOracle,
        });
    }
    let sigma = estimate_alpha_variance(target, mass, leg_length, SIGMA_ESTIMATION_STEP, n, seed)?;
    let c_j = estimate_cj(target, mass, leg_length, n.max(10_000), seed.wrapping_add(1))?.value;
    Ok(TheoryConstants {
        sigma,
        c_j,
        source: ConstantSource::Estimated,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub d: usize,
    pub h: f64,
    pub n_steps: usize,
    pub acc_mean: f64,
    pub acc_se: f64,
    pub acc_pred: Option<f64>,
    pub jump2_mean: f64,
    pub jump2_se: f64,
    pub jump2_pred: Option<f64>,
    /// Set when the row failed; the numeric fields are then NaN.
    pub error: Option<String>,
}

impl ScalingRow {
    fn failed(d: usize, h: f64, err: &Error) -> Self {
        Self {
            d,
            h,
            n_steps: 0,
            acc_mean: f64::NAN,
            acc_se: f64::NAN,
            acc_pred: None,
            jump2_mean: f64::NAN,
            jump2_se: f64::NAN,
            jump2_pred: None,
            error: Some(err.to_string()),
        }
    }
}

fn shard_sizes(n: usize, shards: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..shards)
        .map(move |s| (s, n / shards + usize::from(s < n % shards)))
        .filter(|(_, size)| *size > 0)
}

/// Acceptance probabilities and jumps from `n` transitions, restarting
/// from an exact stationary draw each time when possible (else one
/// warm-started chain per shard).
fn stationary_transitions<T: Target>(
    target: &ProductTarget<&T>,
    mass: &MassSpec,
    kernel: &KernelConfig,
    n: usize,
    burn_in: usize,
    seed: u64,
    stream: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let exact = target.factor.exact_sampler_available();
    let parts = shard_sizes(n, N_SHARDS)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(s, size)| {
            let mut rng = derived(seed, stream, s as u64);
            let mut acc = Vec::with_capacity(size);
            let mut jumps = Vec::with_capacity(size);
            let mut state = ChainState::stationary_or_warm(target, mass, burn_in, &mut rng)?;
            for _ in 0..size {
                if exact {
                    state = ChainState::stationary(target, &mut rng)?;
                }
                let rec = kernel.transition(&mut state, target, &mut rng)?;
                acc.push(rec.acceptance_prob);
                jumps.push(rec.jump_sq_first);
            }
            Ok((acc, jumps))
        })
        .collect::<Result<Vec<_>>>()?;
    let (acc, jumps): (Vec<Vec<f64>>, Vec<Vec<f64>>) = parts.into_iter().unzip();
    Ok((acc.concat(), jumps.concat()))
}

/// Mean acceptance (and first-particle jump²) per `d` against the
/// predictions `a(l)` and `C_J a(l)` when constants are supplied.
pub fn acceptance_curve<T: Target>(
    config: &ScalingRunConfig,
    target: &T,
    mass: &MassSpec,
    constants: Option<&TheoryConstants>,
) -> Result<Vec<ScalingRow>> {
    config.validate()?;
    let acc_pred = constants.map(|c| a_of_l(config.l, c.sigma)).transpose()?;
    let jump2_pred = match (constants, acc_pred) {
        (Some(c), Some(a)) => Some(c.c_j * a),
        _ => None,
    };
    let rows = config
        .d_grid
        .par_iter()
        .enumerate()
        .map(|(i, &d)| {
            let h = hmc_step(config.l, d);
            let run = || -> Result<ScalingRow> {
                let params = config.params_for(d)?;
                let product = ProductTarget::new(target, d)?;
                let kernel = KernelConfig::Hmc { mass: mass.clone(), params };
                let (acc, jumps) =
                    stationary_transitions(&product, mass, &kernel, config.n_transitions, config.burn_in, config.seed, i as u64)?;
                let (acc_mean, acc_se) = mean_and_se(&acc);
                let (jump2_mean, jump2_se) = mean_and_se(&jumps);
                Ok(ScalingRow {
                    d,
                    h,
                    n_steps: params.n_steps,
                    acc_mean,
                    acc_se,
                    acc_pred,
                    jump2_mean,
                    jump2_se,
                    jump2_pred,
                    error: None,
                })
            };
            run().unwrap_or_else(|e| ScalingRow::failed(d, h, &e))
        })
        .collect();
    Ok(rows)
}

/// Monte-Carlo estimate of `C_J = E[(P_q φ_T(q, p) - q)²]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CjEstimate {
    pub value: f64,
    pub se: f64,
    pub used_exact_flow: bool,
}

/// Uses the exact flow when the target provides one (unit mass only),
/// otherwise a leapfrog reference with `h = CJ_REFERENCE_STEP`.
pub fn estimate_cj<T: Target>(target: &T, mass: &MassSpec, leg_length: f64, n: usize, seed: u64) -> Result<CjEstimate> {
    let exact = target.exact_flow_available() && mass.is_identity();
    cj_impl(target, mass, leg_length, n, seed, exact)
}

/// C_J through the reference leapfrog only.
pub fn estimate_cj_reference<T: Target>(
    target: &T,
    mass: &MassSpec,
    leg_length: f64,
    n: usize,
    seed: u64,
) -> Result<CjEstimate> {
    cj_impl(target, mass, leg_length, n, seed, false)
}

fn cj_impl<T: Target>(
    target: &T,
    mass: &MassSpec,
    leg_length: f64,
    n: usize,
    seed: u64,
    exact: bool,
) -> Result<CjEstimate> {
    if n < 10_000 {
        return Err(Error::config(format!("C_J estimation needs n >= 10000, got {n}")));
    }
    if leg_length < 0.0 {
        return Err(Error::config("leg length must be non-negative"));
    }
    if leg_length == 0.0 {
        return Ok(CjEstimate { value: 0.0, se: 0.0, used_exact_flow: exact });
    }
    let params = LeapfrogParams::new(CJ_REFERENCE_STEP, leg_length)?;
    let m = target.dim();
    let parts = shard_sizes(n, N_SHARDS)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(s, size)| {
            let mut rng = derived(seed, u64::MAX >> 33, s as u64);
            let mut sampler = PhaseSampler::new(target, mass, &mut rng)?;
            let (mut q, mut p, mut force) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
            let mut out = Vec::with_capacity(size);
            for _ in 0..size {
                sampler.draw(&mut rng, &mut q, &mut p)?;
                let q0 = q.clone();
                if exact {
                    target.exact_flow(&mut q, &mut p, leg_length);
                } else if leg_in_place(&mut q, &mut p, target, mass, params.h, params.n_steps, &mut force).is_none() {
                    return Err(Error::Divergence { q, p });
                }
                out.push(q.iter().zip(&q0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>());
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let (value, se) = mean_and_se(&parts.concat());
    Ok(CjEstimate { value, se, used_exact_flow: exact })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacementRow {
    pub d: usize,
    pub h: f64,
    pub jump_sq_mean: f64,
    /// Standard error across replicate chains.
    pub jump_sq_se: f64,
    /// `C_J · a(l)`.
    pub predicted: f64,
    pub mean_acceptance: f64,
}

/// `E[(q₁ⁿ⁺¹ - q₁ⁿ)²]` from stationary chains, per `d`.
pub fn displacement_second_moment<T: Target>(
    config: &ScalingRunConfig,
    target: &T,
    mass: &MassSpec,
    constants: &TheoryConstants,
) -> Result<Vec<DisplacementRow>> {
    config.validate()?;
    let predicted = constants.c_j * a_of_l(config.l, constants.sigma)?;
    config
        .d_grid
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let params = config.params_for(d)?;
            let product = ProductTarget::new(target, d)?;
            let kernel = KernelConfig::Hmc { mass: mass.clone(), params };
            let per_chain = (config.n_transitions / config.replicates).max(1);
            let chains = (0..config.replicates)
                .into_par_iter()
                .map(|r| {
                    let mut rng = derived(config.seed, 1_000 + i as u64, r as u64);
                    let mut state = ChainState::stationary_or_warm(&product, mass, config.burn_in, &mut rng)?;
                    let (mut jump, mut acc) = (0.0, 0.0);
                    for _ in 0..per_chain {
                        let rec = kernel.transition(&mut state, &product, &mut rng)?;
                        jump += rec.jump_sq_first;
                        acc += rec.acceptance_prob;
                    }
                    Ok((jump / per_chain as f64, acc / per_chain as f64))
                })
                .collect::<Result<Vec<_>>>()?;
            let jumps: Vec<f64> = chains.iter().map(|c| c.0).collect();
            let accs: Vec<f64> = chains.iter().map(|c| c.1).collect();
            let (jump_sq_mean, jump_sq_se) = if jumps.len() > 1 {
                mean_and_se(&jumps)
            } else {
                (jumps[0], f64::NAN)
            };
            Ok(DisplacementRow {
                d,
                h: hmc_step(config.l, d),
                jump_sq_mean,
                jump_sq_se,
                predicted,
                mean_acceptance: crate::stats::mean(&accs),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticResult {
    pub ks: KsResult,
    pub n_accepted: usize,
    pub n_reference: usize,
}

/// Two-sample KS comparison of accepted one-step displacements of `q₁`
/// against `reference_scale · (P_q φ_T(q, p) - q)` for independent
/// stationary `(q, p)`. Diagnostic only; `reference_scale = 1` is the
/// meaningful comparison.
pub fn limit_dynamics_diagnostic<T: Target>(
    config: &ScalingRunConfig,
    target: &T,
    mass: &MassSpec,
    reference_scale: f64,
) -> Result<DiagnosticResult> {
    config.validate()?;
    if config.d_grid.len() != 1 {
        return Err(Error::config("the diagnostic takes a single d"));
    }
    if !(target.exact_flow_available() && mass.is_identity()) {
        return Err(Error::config("the diagnostic needs an exact flow under unit mass"));
    }
    let d = config.d_grid[0];
    let params = config.params_for(d)?;
    let product = ProductTarget::new(target, d)?;
    let kernel = KernelConfig::Hmc { mass: mass.clone(), params };
    let per_chain = (config.n_transitions / config.replicates).max(1);
    let chains = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = derived(config.seed, 2_000, r as u64);
            let mut state = ChainState::stationary_or_warm(&product, mass, config.burn_in, &mut rng)?;
            let mut out = Vec::new();
            for _ in 0..per_chain {
                let before = state.first();
                let rec = kernel.transition(&mut state, &product, &mut rng)?;
                if rec.accepted {
                    out.push(state.first() - before);
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let accepted = chains.concat();
    if accepted.len() < 1_000 {
        return Err(Error::InsufficientData(format!(
            "only {} accepted transitions (need 1000)",
            accepted.len()
        )));
    }
    let mut rng = derived(config.seed, 2_001, 0);
    let m = target.dim();
    let mut sampler = PhaseSampler::new(target, mass, &mut rng)?;
    let (mut q, mut p) = (vec![0.0; m], vec![0.0; m]);
    let mut reference = Vec::with_capacity(accepted.len());
    for _ in 0..accepted.len() {
        sampler.draw(&mut rng, &mut q, &mut p)?;
        let q0 = q[0];
        target.exact_flow(&mut q, &mut p, config.leg_length);
        reference.push(reference_scale * (q[0] - q0));
    }
    Ok(DiagnosticResult {
        ks: ks_two_sample(&accepted, &reference)?,
        n_accepted: accepted.len(),
        n_reference: reference.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SjdRow {
    pub l: f64,
    pub prediction: f64,
    pub empirical: f64,
    pub ratio: f64,
    pub jump_sq_mean: f64,
}

/// Empirical first-order `d^{5/4}·SJD_d` against its limit for each `l`,
/// using stationary transitions at one `d`.
#[allow(clippy::too_many_arguments)]
pub fn sjd_study<T: Target>(
    target: &T,
    mass: &MassSpec,
    cost: &CostModel,
    l_values: &[f64],
    delta: f64,
    n_transitions: usize,
    constants: &TheoryConstants,
    seed: u64,
) -> Result<Vec<SjdRow>> {
    l_values
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let mut config = ScalingRunConfig::new(vec![cost.d], l, n_transitions, seed.wrapping_add(i as u64));
            config.leg_length = cost.leg_length;
            let row = acceptance_curve(&config, target, mass, Some(constants))?.remove(0);
            if let Some(e) = row.error {
                return Err(Error::InsufficientData(format!("SJD row l={l} failed: {e}")));
            }
            let prediction = sjd_rate_prediction(cost, l, constants.sigma, constants.c_j, delta)?;
            let empirical = sjd_empirical(cost, l, row.jump2_mean, delta)?;
            Ok(SjdRow {
                l,
                prediction,
                empirical,
                ratio: empirical / prediction,
                jump_sq_mean: row.jump2_mean,
            })
        })
        .collect()
}

/// Proposal family for scheme comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Rwm,
    Mala,
    Hmc,
}

impl Scheme {
    /// Exponent of the standard scaling `h = l d^{-e}`.
    pub fn natural_exponent(self) -> f64 {
        match self {
            Scheme::Rwm => 1.0,
            Scheme::Mala => 1.0 / 3.0,
            Scheme::Hmc => 0.25,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Rwm => "rwm",
            Scheme::Mala => "mala",
            Scheme::Hmc => "hmc",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "rwm" => Ok(Scheme::Rwm),
            "mala" => Ok(Scheme::Mala),
            "hmc" => Ok(Scheme::Hmc),
            other => Err(Error::config(format!("unknown scheme '{other}' (expected rwm, mala or hmc)"))),
        }
    }
}

/// A scheme with its step `h = l d^{-exponent}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeScaling {
    pub scheme: Scheme,
    pub l: f64,
    pub exponent: f64,
    /// HMC only.
    pub leg_length: f64,
}

impl SchemeScaling {
    pub fn natural(scheme: Scheme, l: f64) -> Self {
        Self {
            scheme,
            l,
            exponent: scheme.natural_exponent(),
            leg_length: 1.0,
        }
    }

    pub fn kernel(&self, d: usize, mass: &MassSpec) -> Result<KernelConfig> {
        let h = scaled_step(self.l, d, self.exponent);
        Ok(match self.scheme {
            Scheme::Rwm => KernelConfig::Rwm { h },
            Scheme::Mala => KernelConfig::Mala { h },
            Scheme::Hmc => KernelConfig::Hmc {
                mass: mass.clone(),
                params: LeapfrogParams::with_rounding(h, self.leg_length, StepRounding::Ceil)?,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeRow {
    pub d: usize,
    pub h: f64,
    pub acc_mean: f64,
    pub acc_se: f64,
}

/// Mean acceptance from `n` stationary restarts per `d`.
pub fn scheme_acceptance<T: Target>(
    target: &T,
    mass: &MassSpec,
    scaling: &SchemeScaling,
    d_grid: &[usize],
    n: usize,
    seed: u64,
) -> Result<Vec<SchemeRow>> {
    if !target.exact_sampler_available() {
        return Err(Error::config("scheme comparisons need an exact sampler"));
    }
    if n == 0 || !(scaling.l > 0.0) {
        return Err(Error::config("n and l must be positive"));
    }
    d_grid
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let product = ProductTarget::new(target, d)?;
            let kernel = scaling.kernel(d, mass)?;
            let (acc, _) = stationary_transitions(&product, mass, &kernel, n, 0, seed, i as u64)?;
            let (acc_mean, acc_se) = mean_and_se(&acc);
            Ok(SchemeRow {
                d,
                h: scaled_step(scaling.l, d, scaling.exponent),
                acc_mean,
                acc_se,
            })
        })
        .collect()
}

/// Grid point maximising the empirical speed `l · acceptance` at one `d`.
/// All grid points share random streams. Returns `(l, acceptance)`.
pub fn grid_search_l<T: Target>(
    target: &T,
    mass: &MassSpec,
    scheme: Scheme,
    d: usize,
    l_grid: &[f64],
    n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for &l in l_grid {
        let acc = scheme_acceptance(target, mass, &SchemeScaling::natural(scheme, l), &[d], n, seed)?[0].acc_mean;
        if best.is_none_or(|(bl, ba)| l * acc > bl * ba) {
            best = Some((l, acc));
        }
    }
    best.ok_or_else(|| Error::config("empty l grid"))
}
