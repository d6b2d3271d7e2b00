//! Ancestor selection for the particle filters.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numeric::KahanSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    /// One uniform offset, stratified traversal of the cumulative weights.
    #[default]
    Systematic,
    /// Independent draws from the weights.
    Multinomial,
}

impl Resampling {
    /// Returns `n` ancestor indices in non-decreasing order.
    pub fn resample<R: Rng + ?Sized>(self, weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
        match self {
            Resampling::Systematic => systematic(weights, n, rng.random::<f64>()),
            Resampling::Multinomial => multinomial(weights, n, rng),
        }
    }
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = KahanSum::new();
    let mut cum: Vec<f64> = weights
        .iter()
        .map(|&w| {
            acc.add(w);
            acc.value()
        })
        .collect();
    let total = acc.value();
    for c in &mut cum {
        *c /= total;
    }
    if let Some(last) = cum.last_mut() {
        *last = 1.0;
    }
    cum
}

/// Systematic resampling with offset `u ∈ [0, 1)`: positions `(u + i) / n`.
pub fn systematic(weights: &[f64], n: usize, u: f64) -> Vec<usize> {
    let cum = cumulative(weights);
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for i in 0..n {
        let pos = (u + i as f64) / n as f64;
        while j + 1 < cum.len() && cum[j] <= pos {
            j += 1;
        }
        out.push(j);
    }
    out
}

/// Multinomial resampling by inversion of sorted uniforms.
pub fn multinomial<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let cum = cumulative(weights);
    let mut out: Vec<usize> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            cum.partition_point(|&c| c <= u).min(cum.len() - 1)
        })
        .collect();
    out.sort_unstable();
    out
}
