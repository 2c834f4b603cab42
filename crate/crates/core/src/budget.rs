//! Fixed-budget comparison of step sizes on the product standard Gaussian.
//!
//! Each run starts in stationarity and performs as many HMC transitions as
//! fit in a budget of `B` force evaluations (a leg over `d` particles costs
//! `(n_steps + 1)·d`), then records the squared error of the ergodic
//! average of `f(q₁)` for a few test functions.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::integrator::{LeapfrogParams, StepRounding};
use crate::kernel::{hmc_transition, ChainState};
use crate::model::{BuiltinTarget, MassSpec, ProductTarget};
use crate::rng::derived;
use crate::scaling::{hmc_step, resolve_constants};
use crate::stats::median;
use crate::tuning::l_of_a;

/// Name, function and exact mean under N(0, 1).
pub type TestFunction = (&'static str, fn(f64) -> f64, f64);

pub const TEST_FUNCTIONS: [TestFunction; 4] = [
    ("q", |q| q, 0.0),
    ("q2", |q| q * q, 1.0),
    ("q3", |q| q * q * q, 0.0),
    ("abs_q", f64::abs, 0.797_884_560_802_865_4),
];

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetConfig {
    pub d: usize,
    /// Force evaluations allowed per run.
    pub budget: u64,
    pub replicates: usize,
    /// Target limiting acceptances; each is mapped to `h = l(a) d^{-1/4}`.
    pub acceptance_grid: Vec<f64>,
    pub leg_length: f64,
    pub rounding: StepRounding,
    pub seed: u64,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            d: 10_000,
            budget: 10_000_000,
            replicates: 40,
            acceptance_grid: (0..7).map(|i| 0.3 + 0.65 * i as f64 / 6.0).collect(),
            leg_length: 1.0,
            rounding: StepRounding::Ceil,
            seed: 0,
        }
    }
}

impl BudgetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.replicates == 0 {
            return Err(Error::config("d and replicates must be >= 1"));
        }
        if self.acceptance_grid.is_empty() || self.acceptance_grid.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::config("acceptance grid values must lie in (0, 1)"));
        }
        if !(self.leg_length > 0.0 && self.leg_length.is_finite()) {
            return Err(Error::config("leg length must be positive"));
        }
        Ok(())
    }

    /// Step sizes for the acceptance grid, in grid order.
    pub fn h_values(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let target = BuiltinTarget::StdGaussian { dim: 1 };
        let sigma = resolve_constants(&target, &MassSpec::identity(1), self.leg_length, 100_000, self.seed)?.sigma;
        self.acceptance_grid
            .iter()
            .map(|&a| Ok(hmc_step(l_of_a(a, sigma)?, self.d)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetRow {
    pub h: f64,
    pub grid_index: usize,
    pub replicate: usize,
    pub f_name: &'static str,
    pub sq_error: f64,
    pub mean_acceptance: f64,
    pub n_legs: u64,
    pub n_steps: usize,
}

impl BudgetRow {
    pub fn grad_evals(&self, d: usize) -> u64 {
        self.n_legs * (self.n_steps as u64 + 1) * d as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetResult {
    pub budget: u64,
    pub d: usize,
    pub h_values: Vec<f64>,
    /// Long form: one row per (h, replicate, function).
    pub rows: Vec<BudgetRow>,
}

impl BudgetResult {
    fn select<'a>(&'a self, grid_index: usize, f_name: &'a str) -> impl Iterator<Item = &'a BudgetRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.grid_index == grid_index && r.f_name == f_name)
    }

    pub fn median_sq_error(&self, grid_index: usize, f_name: &str) -> f64 {
        median(&self.select(grid_index, f_name).map(|r| r.sq_error).collect::<Vec<_>>())
    }

    pub fn median_acceptance(&self, grid_index: usize) -> f64 {
        median(&self.select(grid_index, "q").map(|r| r.mean_acceptance).collect::<Vec<_>>())
    }

    /// Grid index with the smallest median squared error for `f_name`.
    pub fn best_index(&self, f_name: &str) -> usize {
        (0..self.h_values.len())
            .min_by(|&a, &b| self.median_sq_error(a, f_name).total_cmp(&self.median_sq_error(b, f_name)))
            .unwrap_or(0)
    }

    pub fn max_grad_evals(&self) -> u64 {
        self.rows.iter().map(|r| r.grad_evals(self.d)).max().unwrap_or(0)
    }
}

fn run_one(
    product: &ProductTarget<BuiltinTarget>,
    mass: &MassSpec,
    params: &LeapfrogParams,
    n_legs: u64,
    seed: u64,
    replicate: usize,
    grid_index: usize,
) -> Result<(Vec<f64>, f64)> {
    let mut rng = derived(seed, replicate as u64, grid_index as u64);
    let mut state = ChainState::stationary(product, &mut rng)?;
    let mut sums = [0.0; TEST_FUNCTIONS.len()];
    let mut acc = 0.0;
    for _ in 0..n_legs {
        let rec = hmc_transition(&mut state, product, mass, params, &mut rng)?;
        acc += rec.acceptance_prob;
        let q = state.first();
        for (s, (_, f, _)) in sums.iter_mut().zip(TEST_FUNCTIONS.iter()) {
            *s += f(q);
        }
    }
    let n = n_legs as f64;
    let errors = sums
        .iter()
        .zip(TEST_FUNCTIONS.iter())
        .map(|(s, (_, _, truth))| (s / n - truth).powi(2))
        .collect();
    Ok((errors, acc / n))
}

/// Runs every (h, replicate) pair in parallel. Fails with a configuration
/// error when the budget does not cover a single leg at some `h`.
pub fn run_budget_experiment(config: &BudgetConfig) -> Result<BudgetResult> {
    let h_values = config.h_values()?;
    let product = ProductTarget::new(BuiltinTarget::StdGaussian { dim: 1 }, config.d)?;
    let mass = MassSpec::identity(1);
    let plans = h_values
        .iter()
        .map(|&h| {
            let params = LeapfrogParams::with_rounding(h, config.leg_length, config.rounding)?;
            let per_leg = (params.n_steps as u64 + 1) * config.d as u64;
            let n_legs = config.budget / per_leg;
            if n_legs == 0 {
                return Err(Error::config(format!(
                    "budget {} is smaller than one leg ({per_leg} force evaluations at h = {h})",
                    config.budget
                )));
            }
            Ok((params, n_legs))
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..plans.len())
        .flat_map(|g| (0..config.replicates).map(move |r| (g, r)))
        .collect();
    let outcomes = jobs
        .par_iter()
        .map(|&(g, r)| run_one(&product, &mass, &plans[g].0, plans[g].1, config.seed, r, g))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(jobs.len() * TEST_FUNCTIONS.len());
    for (&(g, r), (errors, acc)) in jobs.iter().zip(outcomes) {
        for ((name, _, _), sq_error) in TEST_FUNCTIONS.iter().zip(errors) {
            rows.push(BudgetRow {
                h: h_values[g],
                grid_index: g,
                replicate: r,
                f_name: name,
                sq_error,
                mean_acceptance: acc,
                n_legs: plans[g].1,
                n_steps: plans[g].0.n_steps,
            });
        }
    }
    Ok(BudgetResult {
        budget: config.budget,
        d: config.d,
        h_values,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BudgetConfig {
        BudgetConfig {
            d: 64,
            budget: 200_000,
            replicates: 3,
            acceptance_grid: vec![0.5, 0.9],
            seed: 8,
            ..BudgetConfig::default()
        }
    }

    #[test]
    fn half_normal_mean() {
        assert!((TEST_FUNCTIONS[3].2 - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-15);
        assert!((TEST_FUNCTIONS[3].2 - 0.7978846).abs() < 1e-7);
    }

    #[test]
    fn budget_is_respected_and_layout_is_long_form() {
        let c = small();
        let r = run_budget_experiment(&c).unwrap();
        assert_eq!(r.rows.len(), 2 * 3 * 4);
        assert!(r.max_grad_evals() <= c.budget);
        for row in &r.rows {
            assert!(row.n_legs >= 1);
            assert!((0.0..=1.0).contains(&row.mean_acceptance));
            assert!(row.sq_error >= 0.0);
        }
        // Larger target acceptance means a smaller step.
        assert!(r.h_values[1] < r.h_values[0]);
        assert!(r.median_acceptance(1) > r.median_acceptance(0));
    }

    #[test]
    fn deterministic() {
        let c = BudgetConfig { replicates: 1, ..small() };
        assert_eq!(run_budget_experiment(&c).unwrap(), run_budget_experiment(&c).unwrap());
    }

    #[test]
    fn tiny_budget_is_a_config_error() {
        let c = BudgetConfig { budget: 100, ..small() };
        assert!(matches!(run_budget_experiment(&c), Err(Error::Config(_))));
    }

    #[test]
    fn grid_validation() {
        let c = BudgetConfig { acceptance_grid: vec![1.0], ..small() };
        assert!(c.validate().is_err());
        let c = BudgetConfig { replicates: 0, ..small() };
        assert!(c.validate().is_err());
    }
}
