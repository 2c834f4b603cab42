//! Metropolis kernels over product targets.
//!
//! Each kernel is split into a deterministic proposal (given its Gaussian
//! noise) and a shared accept/reject step. A proposal is accepted iff
//! `U < 1 ∧ e^{R}` with `U` uniform on `[0, 1)`.

use log::warn;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::integrator::{leg_in_place, LeapfrogParams, DIVERGENCE_THRESHOLD};
use crate::model::{MassSpec, ProductTarget, Target};
use crate::rng::SimRng;
use crate::stats::CompensatedSum;

/// Step size of the HMC chain used to warm-start targets without an exact
/// sampler.
pub const WARM_START_STEP: f64 = 0.1;
/// Burn-in length of the warm-start chain.
pub const WARM_START_BURN_IN: usize = 10_000;

/// Positions `Q = (q_i)` of `d` particles in `ℝ^m`, with cached `V(q_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    m: usize,
    positions: Vec<f64>,
    potentials: Vec<f64>,
}

impl ChainState {
    /// Builds a state from flattened particle positions (`d·m` values).
    pub fn new<T: Target>(target: &ProductTarget<T>, positions: Vec<f64>) -> Result<Self> {
        check_dim(target.total_dim(), positions.len())?;
        let m = target.m();
        let potentials: Vec<f64> = positions.chunks_exact(m).map(|q| target.factor.potential(q)).collect();
        if potentials.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation("potential of initial state".into()));
        }
        Ok(Self { m, positions, potentials })
    }

    /// Exact draw `Q ~ Π`.
    pub fn stationary<T: Target>(target: &ProductTarget<T>, rng: &mut SimRng) -> Result<Self> {
        let mut positions = vec![0.0; target.total_dim()];
        for q in positions.chunks_exact_mut(target.m()) {
            if !target.factor.sample_exact(rng, q) {
                return Err(Error::config(format!(
                    "target '{}' has no exact sampler",
                    target.factor.name()
                )));
            }
        }
        Self::new(target, positions)
    }

    /// Exact draw when available, otherwise the end of a warm-start HMC chain
    /// of `burn_in` transitions at `h = WARM_START_STEP`, `T = 1`.
    pub fn stationary_or_warm<T: Target>(
        target: &ProductTarget<T>,
        mass: &MassSpec,
        burn_in: usize,
        rng: &mut SimRng,
    ) -> Result<Self> {
        if target.factor.exact_sampler_available() {
            return Self::stationary(target, rng);
        }
        warn!(
            "target '{}' has no exact sampler; using a {burn_in}-transition warm-start chain, draws are only approximately stationary",
            target.factor.name()
        );
        let mut state = Self::new(target, vec![0.0; target.total_dim()])?;
        let kernel = KernelConfig::Hmc {
            mass: mass.clone(),
            params: LeapfrogParams::new(WARM_START_STEP, 1.0)?,
        };
        for _ in 0..burn_in {
            kernel.transition(&mut state, target, rng)?;
        }
        Ok(state)
    }

    pub fn d(&self) -> usize {
        self.potentials.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.m..(i + 1) * self.m]
    }

    pub fn potentials(&self) -> &[f64] {
        &self.potentials
    }

    /// First coordinate of the first particle.
    pub fn first(&self) -> f64 {
        self.positions[0]
    }

    /// Largest relative gap between the cache and a fresh evaluation.
    pub fn cache_error<T: Target>(&self, target: &ProductTarget<T>) -> f64 {
        self.positions
            .chunks_exact(self.m)
            .zip(&self.potentials)
            .map(|(q, &v)| {
                let fresh = target.factor.potential(q);
                (fresh - v).abs() / fresh.abs().max(1e-300)
            })
            .fold(0.0, f64::max)
    }
}

/// Everything recorded about one transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRecord {
    pub accepted: bool,
    /// `R = -Σ_i Δ(x_i, h)` for HMC, the log Metropolis–Hastings ratio otherwise.
    pub log_accept_ratio: f64,
    /// `1 ∧ e^{R}`.
    pub acceptance_prob: f64,
    /// `(q₁ⁿ⁺¹ - q₁ⁿ)²`: zero on rejection.
    pub jump_sq_first: f64,
    pub grad_evals: usize,
    /// Squared first-coordinate displacement of the proposal, accepted or not.
    pub proposal_displacement_first: f64,
}

/// A proposed move with its log acceptance ratio.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub positions: Vec<f64>,
    pub potentials: Vec<f64>,
    pub log_ratio: f64,
    pub grad_evals: usize,
    /// A leg left the finite range or broke the energy guard.
    pub diverged: bool,
}

/// `1 ∧ e^{R}`, exactly 1 whenever `R ≥ 0`.
pub fn acceptance_probability(log_ratio: f64) -> f64 {
    if log_ratio >= 0.0 {
        1.0
    } else {
        log_ratio.exp()
    }
}

/// Accepts or rejects `proposal` with uniform draw `u`, updating `state`.
pub fn finish_transition(state: &mut ChainState, proposal: Proposal, u: f64) -> TransitionRecord {
    let acceptance_prob = if proposal.diverged {
        0.0
    } else {
        acceptance_probability(proposal.log_ratio)
    };
    let displacement = proposal.positions[0] - state.positions[0];
    let proposal_displacement_first = if proposal.diverged { 0.0 } else { displacement * displacement };
    let accepted = !proposal.diverged && u < acceptance_prob;
    if accepted {
        state.positions = proposal.positions;
        state.potentials = proposal.potentials;
    }
    TransitionRecord {
        accepted,
        log_accept_ratio: if proposal.diverged { f64::NEG_INFINITY } else { proposal.log_ratio },
        acceptance_prob,
        jump_sq_first: if accepted { proposal_displacement_first } else { 0.0 },
        grad_evals: proposal.grad_evals,
        proposal_displacement_first,
    }
}

fn check_state<T: Target>(state: &ChainState, target: &ProductTarget<T>) -> Result<()> {
    check_dim(target.m(), state.m)?;
    check_dim(target.d, state.d())
}

/// HMC proposal for given momenta (`d·m` values): each particle runs the
/// same leapfrog leg independently.
pub fn hmc_propose<T: Target>(
    state: &ChainState,
    target: &ProductTarget<T>,
    mass: &MassSpec,
    params: &LeapfrogParams,
    momenta: &[f64],
) -> Result<Proposal> {
    check_state(state, target)?;
    check_dim(state.m, mass.dim())?;
    check_dim(state.positions.len(), momenta.len())?;
    let m = state.m;
    let mut positions = state.positions.clone();
    let mut potentials = vec![0.0; state.d()];
    let mut p = vec![0.0; m];
    let mut force = vec![0.0; m];
    let mut delta_sum = CompensatedSum::new();
    let mut diverged = false;
    for (i, q) in positions.chunks_exact_mut(m).enumerate() {
        p.copy_from_slice(&momenta[i * m..(i + 1) * m]);
        let start = mass.kinetic(&p) + state.potentials[i];
        if leg_in_place(q, &mut p, &target.factor, mass, params.h, params.n_steps, &mut force).is_none() {
            diverged = true;
            break;
        }
        let v = target.factor.potential(q);
        let delta = mass.kinetic(&p) + v - start;
        if !delta.is_finite() || delta.abs() > DIVERGENCE_THRESHOLD {
            diverged = true;
            break;
        }
        potentials[i] = v;
        delta_sum.add(delta);
    }
    Ok(Proposal {
        positions,
        potentials,
        log_ratio: -delta_sum.value(),
        grad_evals: params.grad_evals(),
        diverged,
    })
}

/// One HMC transition: fresh `P ~ N(0, M)` for every particle, one leg each,
/// a single global accept/reject.
pub fn hmc_transition<T: Target>(
    state: &mut ChainState,
    target: &ProductTarget<T>,
    mass: &MassSpec,
    params: &LeapfrogParams,
    rng: &mut SimRng,
) -> Result<TransitionRecord> {
    let mut momenta = vec![0.0; state.positions.len()];
    for p in momenta.chunks_exact_mut(state.m) {
        mass.sample_into(rng, p);
    }
    let proposal = hmc_propose(state, target, mass, params, &momenta)?;
    let u: f64 = rng.random();
    Ok(finish_transition(state, proposal, u))
}

fn check_step(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(Error::config(format!("step size must be positive, got {h}")))
    }
}

fn potentials_of<T: Target>(target: &ProductTarget<T>, positions: &[f64]) -> Result<(Vec<f64>, f64)> {
    let potentials: Vec<f64> = positions.chunks_exact(target.m()).map(|q| target.factor.potential(q)).collect();
    if potentials.iter().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation("potential at proposal".into()));
    }
    let total = potentials.iter().copied().collect::<CompensatedSum>().value();
    Ok((potentials, total))
}

/// Random-walk proposal `Q' = Q + √h Z` for given noise `z`.
pub fn rwm_propose<T: Target>(state: &ChainState, target: &ProductTarget<T>, h: f64, z: &[f64]) -> Result<Proposal> {
    check_step(h)?;
    check_state(state, target)?;
    check_dim(state.positions.len(), z.len())?;
    let scale = h.sqrt();
    let positions: Vec<f64> = state.positions.iter().zip(z).map(|(q, z)| q + scale * z).collect();
    let (potentials, new_total) = potentials_of(target, &positions)?;
    let old_total = state.potentials.iter().copied().collect::<CompensatedSum>().value();
    Ok(Proposal {
        positions,
        potentials,
        log_ratio: old_total - new_total,
        grad_evals: 0,
        diverged: false,
    })
}

pub fn rwm_transition<T: Target>(
    state: &mut ChainState,
    target: &ProductTarget<T>,
    h: f64,
    rng: &mut SimRng,
) -> Result<TransitionRecord> {
    let z: Vec<f64> = (0..state.positions.len()).map(|_| StandardNormal.sample(rng)).collect();
    let proposal = rwm_propose(state, target, h, &z)?;
    let u: f64 = rng.random();
    Ok(finish_transition(state, proposal, u))
}

fn forces_of<T: Target>(target: &ProductTarget<T>, positions: &[f64]) -> Vec<f64> {
    let m = target.m();
    let mut out = vec![0.0; positions.len()];
    for (q, f) in positions.chunks_exact(m).zip(out.chunks_exact_mut(m)) {
        target.factor.force(q, f);
    }
    out
}

/// Langevin proposal `Q' = Q + (h/2)∇log Π(Q) + √h Z` with the
/// Metropolis–Hastings correction `T(Q', Q) / T(Q, Q')`.
pub fn mala_propose<T: Target>(state: &ChainState, target: &ProductTarget<T>, h: f64, z: &[f64]) -> Result<Proposal> {
    check_step(h)?;
    check_state(state, target)?;
    check_dim(state.positions.len(), z.len())?;
    let scale = h.sqrt();
    let f0 = forces_of(target, &state.positions);
    let positions: Vec<f64> = state
        .positions
        .iter()
        .zip(&f0)
        .zip(z)
        .map(|((q, f), z)| q + 0.5 * h * f + scale * z)
        .collect();
    if positions.iter().any(|v| !v.is_finite()) {
        return Ok(Proposal {
            positions,
            potentials: vec![0.0; state.d()],
            log_ratio: f64::NEG_INFINITY,
            grad_evals: 2,
            diverged: true,
        });
    }
    let (potentials, new_total) = potentials_of(target, &positions)?;
    let f1 = forces_of(target, &positions);
    let old_total = state.potentials.iter().copied().collect::<CompensatedSum>().value();
    // log T(Q | Q') - log T(Q' | Q); the forward residual is √h Z.
    let mut forward = CompensatedSum::new();
    let mut backward = CompensatedSum::new();
    for i in 0..positions.len() {
        let fwd = positions[i] - state.positions[i] - 0.5 * h * f0[i];
        let bwd = state.positions[i] - positions[i] - 0.5 * h * f1[i];
        forward.add(fwd * fwd);
        backward.add(bwd * bwd);
    }
    let log_q_ratio = (forward.value() - backward.value()) / (2.0 * h);
    Ok(Proposal {
        positions,
        potentials,
        log_ratio: old_total - new_total + log_q_ratio,
        grad_evals: 2,
        diverged: false,
    })
}

pub fn mala_transition<T: Target>(
    state: &mut ChainState,
    target: &ProductTarget<T>,
    h: f64,
    rng: &mut SimRng,
) -> Result<TransitionRecord> {
    let z: Vec<f64> = (0..state.positions.len()).map(|_| StandardNormal.sample(rng)).collect();
    let proposal = mala_propose(state, target, h, &z)?;
    let u: f64 = rng.random();
    Ok(finish_transition(state, proposal, u))
}

/// Kernel selection for chain drivers.
#[derive(Debug, Clone)]
pub enum KernelConfig {
    Hmc { mass: MassSpec, params: LeapfrogParams },
    Rwm { h: f64 },
    Mala { h: f64 },
}

impl KernelConfig {
    pub fn transition<T: Target>(
        &self,
        state: &mut ChainState,
        target: &ProductTarget<T>,
        rng: &mut SimRng,
    ) -> Result<TransitionRecord> {
        match self {
            KernelConfig::Hmc { mass, params } => hmc_transition(state, target, mass, params, rng),
            KernelConfig::Rwm { h } => rwm_transition(state, target, *h, rng),
            KernelConfig::Mala { h } => mala_transition(state, target, *h, rng),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelConfig::Hmc { .. } => "hmc",
            KernelConfig::Rwm { .. } => "rwm",
            KernelConfig::Mala { .. } => "mala",
        }
    }
}

/// Receives every transition of a chain.
pub trait Collector {
    fn observe(&mut self, record: &TransitionRecord, state: &ChainState);
}

/// Mean of `1 ∧ e^R` and of the accept indicator.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AcceptanceCollector {
    pub n: usize,
    pub sum_prob: f64,
    pub sum_prob_sq: f64,
    pub n_accepted: usize,
}

impl AcceptanceCollector {
    pub fn mean_prob(&self) -> f64 {
        self.sum_prob / self.n as f64
    }

    /// Naive standard error of `mean_prob`, ignoring autocorrelation.
    pub fn se_prob(&self) -> f64 {
        let n = self.n as f64;
        let m = self.mean_prob();
        ((self.sum_prob_sq / n - m * m).max(0.0) / (n - 1.0)).sqrt()
    }

    pub fn accept_rate(&self) -> f64 {
        self.n_accepted as f64 / self.n as f64
    }

    pub fn merge(&mut self, other: &Self) {
        self.n += other.n;
        self.sum_prob += other.sum_prob;
        self.sum_prob_sq += other.sum_prob_sq;
        self.n_accepted += other.n_accepted;
    }
}

impl Collector for AcceptanceCollector {
    fn observe(&mut self, record: &TransitionRecord, _state: &ChainState) {
        self.n += 1;
        self.sum_prob += record.acceptance_prob;
        self.sum_prob_sq += record.acceptance_prob * record.acceptance_prob;
        self.n_accepted += usize::from(record.accepted);
    }
}

/// Mean of `(q₁ⁿ⁺¹ - q₁ⁿ)²`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JumpCollector {
    pub n: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl JumpCollector {
    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    pub fn merge(&mut self, other: &Self) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }
}

impl Collector for JumpCollector {
    fn observe(&mut self, record: &TransitionRecord, _state: &ChainState) {
        self.n += 1;
        self.sum += record.jump_sq_first;
        self.sum_sq += record.jump_sq_first * record.jump_sq_first;
    }
}

/// A named scalar test function.
pub type NamedFn = (String, fn(f64) -> f64);

/// Running averages of functions of `q₁` after each transition.
pub struct FirstCoordinateCollector {
    pub functions: Vec<NamedFn>,
    pub sums: Vec<f64>,
    pub n: usize,
}

impl FirstCoordinateCollector {
    pub fn new(functions: Vec<NamedFn>) -> Self {
        let sums = vec![0.0; functions.len()];
        Self { functions, sums, n: 0 }
    }

    pub fn means(&self) -> Vec<f64> {
        self.sums.iter().map(|s| s / self.n as f64).collect()
    }
}

impl Collector for FirstCoordinateCollector {
    fn observe(&mut self, _record: &TransitionRecord, state: &ChainState) {
        self.n += 1;
        let q = state.first();
        for (s, (_, f)) in self.sums.iter_mut().zip(&self.functions) {
            *s += f(q);
        }
    }
}

/// Keeps every record and the first coordinate after each transition.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceCollector {
    pub records: Vec<TransitionRecord>,
    pub first: Vec<f64>,
}

impl Collector for TraceCollector {
    fn observe(&mut self, record: &TransitionRecord, state: &ChainState) {
        self.records.push(*record);
        self.first.push(state.first());
    }
}

/// Totals returned by [`run_chain`].
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSummary {
    pub final_state: ChainState,
    pub n_transitions: usize,
    pub grad_evals: usize,
}

/// Runs `n_transitions` of `kernel` from `initial`, feeding every record to
/// the collectors. On error the collectors keep what they saw so far.
pub fn run_chain<T: Target>(
    initial: ChainState,
    target: &ProductTarget<T>,
    kernel: &KernelConfig,
    n_transitions: usize,
    collectors: &mut [&mut dyn Collector],
    rng: &mut SimRng,
) -> Result<ChainSummary> {
    if n_transitions == 0 {
        return Err(Error::config("run_chain needs at least one transition"));
    }
    let mut state = initial;
    let mut grad_evals = 0;
    for _ in 0..n_transitions {
        let record = kernel.transition(&mut state, target, rng)?;
        grad_evals += record.grad_evals;
        for c in collectors.iter_mut() {
            c.observe(&record, &state);
        }
    }
    Ok(ChainSummary {
        final_state: state,
        n_transitions,
        grad_evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BuiltinTarget;
    use crate::rng::seeded;
    use crate::stats::{ks_one_sample, mean_and_se};
    use crate::tuning::normal_cdf;
    use proptest::prelude::*;

    fn gaussian(d: usize) -> ProductTarget<BuiltinTarget> {
        ProductTarget::new(BuiltinTarget::StdGaussian { dim: 1 }, d).unwrap()
    }

    #[test]
    fn zero_force_target_always_accepts() {
        let target = ProductTarget::new(BuiltinTarget::Flat { dim: 1 }, 16).unwrap();
        let mut state = ChainState::new(&target, vec![0.5; 16]).unwrap();
        let params = LeapfrogParams::new(0.3, 1.7).unwrap();
        let mut rng = seeded(1);
        for _ in 0..100 {
            let rec = hmc_transition(&mut state, &target, &MassSpec::identity(1), &params, &mut rng).unwrap();
            assert_eq!(rec.acceptance_prob, 1.0);
            assert!(rec.accepted);
            assert_eq!(rec.jump_sq_first, rec.proposal_displacement_first);
        }
    }

    #[test]
    fn hmc_is_deterministic_for_a_seed() {
        let target = gaussian(1);
        let params = LeapfrogParams::new(0.1, 1.0).unwrap();
        let start = ChainState::new(&target, vec![0.3]).unwrap();
        let run = || {
            let mut s = start.clone();
            let rec = hmc_transition(&mut s, &target, &MassSpec::identity(1), &params, &mut seeded(42)).unwrap();
            (s, rec)
        };
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(a, b);
        assert_eq!(ra.log_accept_ratio.to_bits(), rb.log_accept_ratio.to_bits());
    }

    #[test]
    fn record_invariants_and_rejection_leaves_state() {
        let target = gaussian(64);
        let mut rng = seeded(8);
        let mut state = ChainState::stationary(&target, &mut rng).unwrap();
        // Large step: many rejections.
        let params = LeapfrogParams::new(0.9, 1.0).unwrap();
        let mass = MassSpec::identity(1);
        let mut rejected = 0;
        for _ in 0..200 {
            let before = state.clone();
            let rec = hmc_transition(&mut state, &target, &mass, &params, &mut rng).unwrap();
            assert!((0.0..=1.0).contains(&rec.acceptance_prob));
            if rec.log_accept_ratio >= 0.0 {
                assert_eq!(rec.acceptance_prob, 1.0);
            }
            if rec.accepted {
                assert_eq!(rec.jump_sq_first, rec.proposal_displacement_first);
            } else {
                rejected += 1;
                assert_eq!(rec.jump_sq_first, 0.0);
                assert_eq!(state, before);
            }
            assert!(state.cache_error(&target) <= 1e-12);
        }
        assert!(rejected > 0);
    }

    #[test]
    fn divergence_forces_rejection() {
        let target = ProductTarget::new(BuiltinTarget::Quartic { dim: 1 }, 2).unwrap();
        let mut state = ChainState::new(&target, vec![3.0, 0.0]).unwrap();
        let params = LeapfrogParams::new(1.5, 15.0).unwrap();
        let before = state.clone();
        let rec = hmc_transition(&mut state, &target, &MassSpec::identity(1), &params, &mut seeded(0)).unwrap();
        assert_eq!(rec.acceptance_prob, 0.0);
        assert!(!rec.accepted);
        assert_eq!(state, before);
    }

    #[test]
    fn rwm_degenerate_and_uphill_probes() {
        let target = gaussian(3);
        let state = ChainState::new(&target, vec![1.0, -2.0, 0.5]).unwrap();
        let prop = rwm_propose(&state, &target, 0.5, &[0.0; 3]).unwrap();
        assert_eq!(acceptance_probability(prop.log_ratio), 1.0);
        // Move every coordinate towards the mode.
        let z = [-1.0, 2.0, -0.5];
        let prop = rwm_propose(&state, &target, 0.25, &z).unwrap();
        assert!(prop.log_ratio > 0.0);
        assert_eq!(acceptance_probability(prop.log_ratio), 1.0);
        assert!(rwm_propose(&state, &target, 0.0, &z).is_err());
    }

    #[test]
    fn mala_fixed_point_probe() {
        let target = gaussian(2);
        let state = ChainState::new(&target, vec![0.0, 0.0]).unwrap();
        let prop = mala_propose(&state, &target, 0.3, &[0.0, 0.0]).unwrap();
        assert_eq!(prop.positions, vec![0.0, 0.0]);
        assert_eq!(acceptance_probability(prop.log_ratio), 1.0);
        assert_eq!(prop.grad_evals, 2);
    }

    #[test]
    fn mala_preserves_standard_gaussian_mean() {
        let target = gaussian(1);
        let mut rng = seeded(21);
        let init = ChainState::stationary(&target, &mut rng).unwrap();
        let mut trace = TraceCollector::default();
        run_chain(init, &target, &KernelConfig::Mala { h: 0.01 }, 100_000, &mut [&mut trace], &mut rng).unwrap();
        // Small steps make the chain strongly correlated; use batch means.
        let batches: Vec<f64> = trace.first.chunks(5_000).map(crate::stats::mean).collect();
        let (m, se) = mean_and_se(&batches);
        assert!(m.abs() <= 4.0 * se, "mean {m} se {se}");
    }

    #[test]
    fn run_chain_counts_and_rejects_zero() {
        let target = gaussian(1);
        let kernel = KernelConfig::Hmc {
            mass: MassSpec::identity(1),
            params: LeapfrogParams::new(0.2, 1.0).unwrap(),
        };
        let init = ChainState::new(&target, vec![0.0]).unwrap();
        assert!(run_chain(init.clone(), &target, &kernel, 0, &mut [], &mut seeded(1)).is_err());
        let mut trace = TraceCollector::default();
        let summary = run_chain(init.clone(), &target, &kernel, 1, &mut [&mut trace], &mut seeded(1)).unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(summary.grad_evals, 6);

        let mut a = TraceCollector::default();
        let mut b = TraceCollector::default();
        run_chain(init.clone(), &target, &kernel, 500, &mut [&mut a], &mut seeded(9)).unwrap();
        run_chain(init, &target, &kernel, 500, &mut [&mut b], &mut seeded(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hmc_keeps_standard_gaussian_invariant() {
        let target = gaussian(1);
        let mut rng = seeded(2024);
        let init = ChainState::stationary(&target, &mut rng).unwrap();
        let kernel = KernelConfig::Hmc {
            mass: MassSpec::identity(1),
            params: LeapfrogParams::new(0.2, 1.0).unwrap(),
        };
        let mut trace = TraceCollector::default();
        run_chain(init, &target, &kernel, 100_000, &mut [&mut trace], &mut rng).unwrap();
        let batches: Vec<f64> = trace
            .first
            .chunks(1_000)
            .map(|c| c.iter().map(|q| q * q).sum::<f64>() / c.len() as f64)
            .collect();
        let (v, se) = mean_and_se(&batches);
        assert!((v - 1.0).abs() <= 3.0 * se, "var {v} se {se}");
        let thinned: Vec<f64> = trace.first.iter().step_by(10).copied().collect();
        assert!(ks_one_sample(&thinned, normal_cdf).unwrap().p_value > 1e-3);
    }

    #[test]
    fn warm_start_for_quartic() {
        let target = ProductTarget::new(BuiltinTarget::Quartic { dim: 1 }, 4).unwrap();
        let mass = MassSpec::identity(1);
        assert!(ChainState::stationary(&target, &mut seeded(1)).is_err());
        let state = ChainState::stationary_or_warm(&target, &mass, 500, &mut seeded(1)).unwrap();
        assert_eq!(state.d(), 4);
        assert!(state.positions().iter().all(|q| q.abs() < 4.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn log_ratio_is_permutation_invariant(seed in 0u64..1000, shift in 0usize..16) {
            let target = ProductTarget::new(BuiltinTarget::Quartic { dim: 1 }, 16).unwrap();
            let mut rng = seeded(seed);
            let q: Vec<f64> = (0..16).map(|_| StandardNormal.sample(&mut rng)).collect();
            let p: Vec<f64> = (0..16).map(|_| StandardNormal.sample(&mut rng)).collect();
            let params = LeapfrogParams::new(0.2, 1.0).unwrap();
            let mass = MassSpec::identity(1);
            let a = hmc_propose(&ChainState::new(&target, q.clone()).unwrap(), &target, &mass, &params, &p).unwrap();
            let mut qr = q.clone();
            let mut pr = p.clone();
            qr.rotate_left(shift);
            pr.rotate_left(shift);
            let b = hmc_propose(&ChainState::new(&target, qr).unwrap(), &target, &mass, &params, &pr).unwrap();
            let scale = a.potentials.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            prop_assert!((a.log_ratio - b.log_ratio).abs() <= 1e-15 * scale);
        }
    }
}
