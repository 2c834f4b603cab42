//! Small statistical toolkit: compensated sums, jackknife standard errors,
//! least-squares slopes and Kolmogorov–Smirnov tests.

use crate::error::{Error, Result};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Running sums of several quantities over one block of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSums {
    pub count: usize,
    pub sums: Vec<f64>,
}

impl BlockSums {
    pub fn new(width: usize) -> Self {
        Self { count: 0, sums: vec![0.0; width] }
    }

    pub fn push(&mut self, values: &[f64]) {
        self.count += 1;
        for (s, v) in self.sums.iter_mut().zip(values) {
            *s += v;
        }
    }

    pub fn merge(&mut self, other: &BlockSums) {
        self.count += other.count;
        for (s, v) in self.sums.iter_mut().zip(&other.sums) {
            *s += v;
        }
    }
}

/// Delete-one-block jackknife of `stat`, a function of the pooled means of
/// the block quantities. Returns `(estimate on all data, standard error)`.
pub fn jackknife<F>(blocks: &[BlockSums], stat: F) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    if blocks.len() < 2 {
        return Err(Error::InsufficientData("jackknife needs at least two blocks".into()));
    }
    let width = blocks[0].sums.len();
    let mut total = BlockSums::new(width);
    for b in blocks {
        total.merge(b);
    }
    let means = |s: &BlockSums| -> Vec<f64> { s.sums.iter().map(|v| v / s.count as f64).collect() };
    let full = stat(&means(&total));
    let loo: Vec<f64> = blocks
        .iter()
        .map(|b| {
            let rest = BlockSums {
                count: total.count - b.count,
                sums: total.sums.iter().zip(&b.sums).map(|(t, v)| t - v).collect(),
            };
            stat(&means(&rest))
        })
        .collect();
    let k = loo.len() as f64;
    let centre = loo.iter().sum::<f64>() / k;
    let var = (k - 1.0) / k * loo.iter().map(|v| (v - centre).powi(2)).sum::<f64>();
    Ok((full, var.sqrt()))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Mean and its naive standard error `s/√n`.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    (mean(xs), (variance(xs) / xs.len() as f64).sqrt())
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Ordinary least-squares slope of `ys` on `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = mean(xs);
    let my = mean(ys);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Kolmogorov survival function `P(K > λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.3 {
        // Series below converges slowly here and the tail is ~1 anyway.
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Result of a Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Effective sample size used for the p-value.
    pub n_eff: f64,
}

fn ks_p(statistic: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_sf((s + 0.12 + 0.11 / s) * statistic)
}

/// One-sample KS test of `samples` against the continuous CDF `cdf`.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<KsResult> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("KS test on an empty sample".into()));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d = 0.0_f64;
    for (i, x) in v.iter().enumerate() {
        let f = cdf(*x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(KsResult { statistic: d, p_value: ks_p(d, n), n_eff: n })
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("KS test on an empty sample".into()));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0_f64;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let n_eff = n * m / (n + m);
    Ok(KsResult { statistic: d, p_value: ks_p(d, n_eff), n_eff })
}
