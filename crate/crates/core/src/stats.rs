//! Mergeable moment accumulators, a batched Monte Carlo driver whose output
//! does not depend on the thread count, and binomial intervals.

use serde::{Deserialize, Serialize};

use crate::par;

/// Running count, mean and central moment sums M2..M4 of a scalar.
/// Merging follows Pébay's pairwise update formulas.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.merge(&Moments { n: 1.0, mean: x, m2: 0.0, m3: 0.0, m4: 0.0 });
    }

    pub fn merge(&mut self, b: &Moments) {
        if b.n == 0.0 {
            return;
        }
        if self.n == 0.0 {
            *self = *b;
            return;
        }
        let a = *self;
        let n = a.n + b.n;
        let delta = b.mean - a.mean;
        let d_n = delta / n;
        let ab = a.n * b.n;
        self.n = n;
        self.mean = a.mean + d_n * b.n;
        self.m2 = a.m2 + b.m2 + delta * d_n * ab;
        self.m3 = a.m3 + b.m3 + delta * d_n * d_n * ab * (a.n - b.n) + 3.0 * d_n * (a.n * b.m2 - b.n * a.m2);
        self.m4 = a.m4
            + b.m4
            + delta * d_n * d_n * d_n * ab * (a.n * a.n - ab + b.n * b.n)
            + 6.0 * d_n * d_n * (a.n * a.n * b.m2 + b.n * b.n * a.m2)
            + 4.0 * d_n * (a.n * b.m3 - b.n * a.m3);
    }

    pub fn count(&self) -> u64 {
        self.n as u64
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2.0 { 0.0 } else { self.m2 / (self.n - 1.0) }
    }

    /// Standard error of the mean, s/√n.
    pub fn se_mean(&self) -> f64 {
        if self.n < 2.0 { 0.0 } else { (self.variance() / self.n).sqrt() }
    }

    /// Large-sample standard error of the sample variance,
    /// √((m₄ − (n−3)/(n−1)·s⁴)/n) with m₄ the fourth central moment.
    pub fn se_variance(&self) -> f64 {
        if self.n < 4.0 {
            return 0.0;
        }
        let s2 = self.variance();
        let m4 = self.m4 / self.n;
        ((m4 - (self.n - 3.0) / (self.n - 1.0) * s2 * s2) / self.n).max(0.0).sqrt()
    }
}

/// Component-wise [`Moments`] of a fixed-width vector observation.
#[derive(Clone, Debug, PartialEq)]
pub struct VecMoments {
    parts: Vec<Moments>,
}

impl VecMoments {
    pub fn new(width: usize) -> Self {
        Self { parts: vec![Moments::default(); width] }
    }

    pub fn push(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.parts.len(), "observation width changed");
        for (m, &v) in self.parts.iter_mut().zip(x) {
            m.push(v);
        }
    }

    pub fn merge(&mut self, other: &VecMoments) {
        for (a, b) in self.parts.iter_mut().zip(&other.parts) {
            a.merge(b);
        }
    }

    pub fn width(&self) -> usize {
        self.parts.len()
    }

    pub fn get(&self, i: usize) -> &Moments {
        &self.parts[i]
    }

    pub fn count(&self) -> u64 {
        self.parts.first().map_or(0, |m| m.count())
    }
}

/// Samples per work unit of the Monte Carlo driver.
pub const BATCH: usize = 128;

/// Accumulates `f(sample_index, out)` over `n_samples` samples. Samples are
/// grouped in fixed batches that may run in parallel; batch summaries are
/// merged in index order, so the result is identical for any thread count.
pub fn accumulate<F>(n_samples: usize, width: usize, f: F) -> VecMoments
where
    F: Fn(u64, &mut [f64]) + Sync + Send,
{
    let batches = n_samples.div_ceil(BATCH);
    let parts = par::map_range(batches, |b| {
        let mut m = VecMoments::new(width);
        let mut buf = vec![0.0; width];
        for i in b * BATCH..((b + 1) * BATCH).min(n_samples) {
            buf.iter_mut().for_each(|x| *x = 0.0);
            f(i as u64, &mut buf);
            m.push(&buf);
        }
        m
    });
    let mut total = VecMoments::new(width);
    for p in &parts {
        total.merge(p);
    }
    total
}

/// Binomial proportion with its Wilson score interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

/// z for a two-sided 95% interval.
pub const Z95: f64 = 1.959_963_984_540_054;

pub fn wilson(successes: u64, trials: u64, z: f64) -> Proportion {
    if trials == 0 {
        return Proportion { successes, trials, estimate: 0.0, lower: 0.0, upper: 1.0 };
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Proportion {
        successes,
        trials,
        estimate: p,
        lower: (centre - half).clamp(0.0, p),
        upper: (centre + half).clamp(p, 1.0),
    }
}

/// Binomial standard error √(p̂(1−p̂)/n).
pub fn binomial_se(successes: u64, trials: u64) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    let p = successes as f64 / trials as f64;
    (p * (1.0 - p) / trials as f64).sqrt()
}
