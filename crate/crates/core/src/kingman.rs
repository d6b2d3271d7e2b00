//! Kingman's coalescent with mutation as a pure-death dual for the WF
//! diffusion: the block-counting process and its typed refinement.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::Rng;
use rand_distr::{Distribution, Hypergeometric};

use crate::error::{Error, Result};
use crate::mixture::MultiIndex;
use crate::numeric::{ln_gamma, KahanSum};
use crate::wf::WfParams;

/// Largest magnitude an alternating-series term may reach before the
/// result is considered to have lost too many digits.
pub const MAX_SERIES_TERM: f64 = 1e6;

const NORMALIZATION_TOL: f64 = 1e-8;
const NEGATIVE_TOL: f64 = 1e-12;
/// Absolute error per unit of largest term magnitude tolerated in a series entry.
const ROUNDOFF_SLACK: f64 = 1e-13;

fn ln_factorials(n: u32) -> Vec<f64> {
    let mut out = Vec::with_capacity(n as usize + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Rate at which the block count leaves `k`.
pub fn block_count_rate(k: u32, theta: f64) -> f64 {
    let k = k as f64;
    k * (k + theta - 1.0) / 2.0
}

/// Law of the block count at time `t` started from `m_tot`, indexed by the
/// surviving count. Uses the spectral series when it is numerically safe
/// and uniformization of the finite chain otherwise.
pub fn kingman_block_count_probs(m_tot: u32, t: f64, p: &WfParams) -> Vec<f64> {
    block_count_probs(m_tot, t, p.theta())
}

pub fn block_count_probs(m_tot: u32, t: f64, theta: f64) -> Vec<f64> {
    if t <= 0.0 || m_tot == 0 {
        let mut out = vec![0.0; m_tot as usize + 1];
        out[m_tot as usize] = 1.0;
        return out;
    }
    match block_count_series(m_tot, t, theta) {
        Some(probs) => probs,
        None => {
            log::debug!("block-count series unstable at m={m_tot}, t={t}; uniformizing");
            block_count_uniformized(m_tot, t, theta)
        }
    }
}

/// `p_j` of the spectral series together with the largest term magnitude.
/// `m = None` gives the entrance law from infinitely many lineages.
///
/// Terms after the first follow the ratio recurrence in `k`, which keeps
/// relative error growth linear in the number of terms.
fn series_entry(j: u32, m: Option<u32>, t: f64, theta: f64) -> (f64, f64) {
    let k0 = j.max(1);
    if let Some(m) = m {
        if k0 > m {
            return (if j == 0 { 1.0 } else { 0.0 }, 1.0);
        }
    }
    let jf = j as f64;
    let ln_ratio_m = |k: u32| match m {
        Some(m) => {
            let (mf, kf) = (m as f64, k as f64);
            ln_gamma(mf + 1.0) - ln_gamma(mf - kf + 1.0) - ln_gamma(mf + theta + kf)
                + ln_gamma(mf + theta)
        }
        None => 0.0,
    };
    let k0f = k0 as f64;
    let ln_start = -k0f * (k0f + theta - 1.0) * t / 2.0
        + (2.0 * k0f + theta - 1.0).ln()
        + ln_gamma(jf + theta + k0f - 1.0)
        - ln_gamma(jf + theta)
        - ln_gamma(jf + 1.0)
        - ln_gamma(k0f - jf + 1.0)
        + ln_ratio_m(k0);
    let mut terms = Vec::new();
    if j == 0 {
        terms.push(1.0);
    }
    let mut max_abs: f64 = if j == 0 { 1.0 } else { 0.0 };
    let mut ln_abs = ln_start;
    let mut k = k0;
    let mut past_peak = false;
    loop {
        let abs = ln_abs.exp();
        let sign = if (k - j) % 2 == 0 { 1.0 } else { -1.0 };
        terms.push(sign * abs);
        if abs > max_abs {
            max_abs = abs;
        } else {
            past_peak = true;
        }
        if past_peak && (abs < max_abs * 1e-20 || abs == 0.0) {
            break;
        }
        if m.is_some_and(|m| k >= m) {
            break;
        }
        let kf = k as f64;
        let mut ratio = (-(2.0 * kf + theta) * t / 2.0).exp() * (2.0 * kf + theta + 1.0)
            / (2.0 * kf + theta - 1.0)
            * (jf + theta + kf - 1.0)
            / (kf + 1.0 - jf);
        if let Some(m) = m {
            ratio *= (m as f64 - kf) / (m as f64 + theta + kf);
        }
        ln_abs += ratio.ln();
        k += 1;
    }
    (sum_alternating(&mut terms), max_abs)
}

/// Spectral series for the block count; `None` when terms exceed
/// [`MAX_SERIES_TERM`] or the result fails basic sanity checks.
pub fn block_count_series(m: u32, t: f64, theta: f64) -> Option<Vec<f64>> {
    let mut probs = Vec::with_capacity(m as usize + 1);
    let mut max_term: f64 = 0.0;
    for j in 0..=m {
        let (pj, mx) = series_entry(j, Some(m), t, theta);
        if mx > MAX_SERIES_TERM {
            return None;
        }
        max_term = max_term.max(mx);
        probs.push(pj);
    }
    finish_probs(probs, max_term)
}

/// Law of the block count at time `t` when started from infinitely many
/// lineages. `None` when the series is numerically unsafe.
pub fn block_count_entrance_probs(t: f64, theta: f64) -> Option<Vec<f64>> {
    if !(t > 0.0 && t.is_finite()) {
        return None;
    }
    let mut probs: Vec<f64> = Vec::new();
    let mut max_term: f64 = 0.0;
    let mut past_mode = false;
    for j in 0..100_000u32 {
        let (pj, mx) = series_entry(j, None, t, theta);
        if mx > MAX_SERIES_TERM {
            return None;
        }
        max_term = max_term.max(mx);
        if probs.last().is_some_and(|&last| pj < last) {
            past_mode = true;
        }
        probs.push(pj);
        if past_mode && pj.abs() < 1e-20 {
            return finish_probs(probs, max_term);
        }
    }
    None
}

fn sum_alternating(terms: &mut [f64]) -> f64 {
    terms.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    terms.iter().copied().collect::<KahanSum>().value()
}

/// Clamps roundoff-level negatives and renormalizes. Rejects results whose
/// defects exceed what `max_term` worth of cancellation can explain.
fn finish_probs(mut probs: Vec<f64>, max_term: f64) -> Option<Vec<f64>> {
    let slack = NEGATIVE_TOL.max(ROUNDOFF_SLACK * max_term);
    for p in &mut probs {
        if *p < -slack || !p.is_finite() {
            return None;
        }
        *p = p.max(0.0);
    }
    let total = probs.iter().copied().collect::<KahanSum>().value();
    if (total - 1.0).abs() > NORMALIZATION_TOL.max(slack * probs.len() as f64) {
        return None;
    }
    for p in &mut probs {
        *p /= total;
    }
    Some(probs)
}

/// Block-count law by uniformization of the finite pure-death chain.
pub fn block_count_uniformized(m: u32, t: f64, theta: f64) -> Vec<f64> {
    let mu = m as usize;
    let lam = block_count_rate(m, theta);
    let mut out = vec![0.0; mu + 1];
    if lam <= 0.0 || t <= 0.0 {
        out[mu] = 1.0;
        return out;
    }
    let lt = lam * t;
    let n_max = (lt + 12.0 * lt.sqrt() + 30.0).ceil() as u64;
    let leave: Vec<f64> = (0..=m).map(|k| block_count_rate(k, theta) / lam).collect();
    let mut v = vec![0.0; mu + 1];
    v[mu] = 1.0;
    let mut acc: Vec<KahanSum> = vec![KahanSum::new(); mu + 1];
    let ln_lt = lt.ln();
    for n in 0..=n_max {
        let w = (-lt + n as f64 * ln_lt - ln_gamma(n as f64 + 1.0)).exp();
        if w > 0.0 {
            for (a, vi) in acc.iter_mut().zip(&v) {
                if *vi != 0.0 {
                    a.add(w * vi);
                }
            }
        }
        // one step of I + Q/Λ, in place from low to high index
        for k in 0..mu {
            v[k] += v[k + 1] * leave[k + 1];
            v[k + 1] -= v[k + 1] * leave[k + 1];
        }
    }
    for (o, a) in out.iter_mut().zip(&acc) {
        *o = a.value().max(0.0);
    }
    let s: f64 = out.iter().sum();
    for o in &mut out {
        *o /= s;
    }
    out
}

/// `ln [Πᵢ C(mᵢ,nᵢ) / C(|m|,|n|)]`, the multivariate hypergeometric
/// probability that the `|n|` survivors have type profile `n`.
pub fn ln_hypergeometric_profile(m: &MultiIndex, n: &MultiIndex) -> f64 {
    if !n.le(m) {
        return f64::NEG_INFINITY;
    }
    let lf = |k: u64| ln_gamma(k as f64 + 1.0);
    let ln_c = |a: u64, b: u64| lf(a) - lf(b) - lf(a - b);
    let mut acc = -ln_c(m.total(), n.total());
    for (&mi, &ni) in m.coords().iter().zip(n.coords()) {
        acc += ln_c(mi as u64, ni as u64);
    }
    acc
}

/// Memoized block-count laws for a fixed `θ`, keyed by `(|m|, t)`.
#[derive(Debug)]
pub struct BlockCountCache {
    theta: f64,
    entries: Mutex<HashMap<(u32, u64), Arc<Vec<f64>>>>,
}

impl BlockCountCache {
    pub fn new(theta: f64) -> Self {
        Self {
            theta,
            entries: Mutex::new(HashMap::new()),
        }
    }

    pub fn get(&self, m_tot: u32, t: f64) -> Arc<Vec<f64>> {
        let key = (m_tot, t.to_bits());
        if let Some(v) = self.entries.lock().expect("cache poisoned").get(&key) {
            return Arc::clone(v);
        }
        let probs = Arc::new(block_count_probs(m_tot, t, self.theta));
        self.entries
            .lock()
            .expect("cache poisoned")
            .insert(key, Arc::clone(&probs));
        probs
    }
}

impl Clone for BlockCountCache {
    fn clone(&self) -> Self {
        let entries = self.entries.lock().expect("cache poisoned").clone();
        Self {
            theta: self.theta,
            entries: Mutex::new(entries),
        }
    }
}

/// Typed Kingman dual with cached block-count laws.
#[derive(Debug, Clone)]
pub struct KingmanDual {
    params: WfParams,
    cache: BlockCountCache,
}

impl KingmanDual {
    pub fn new(params: WfParams) -> Self {
        let cache = BlockCountCache::new(params.theta());
        Self { params, cache }
    }

    pub fn params(&self) -> &WfParams {
        &self.params
    }

    pub fn block_counts(&self, m_tot: u32, t: f64) -> Arc<Vec<f64>> {
        self.cache.get(m_tot, t)
    }

    pub fn transition(&self, m: &MultiIndex, n: &MultiIndex, t: f64) -> f64 {
        if !n.le(m) {
            return 0.0;
        }
        let d = self.block_counts(m.total() as u32, t);
        let dj = d[n.total() as usize];
        if dj == 0.0 {
            return 0.0;
        }
        dj * ln_hypergeometric_profile(m, n).exp()
    }

    /// Every `n ≤ m` with positive transition probability, ordered by total
    /// then lexicographically.
    pub fn row(&self, m: &MultiIndex, t: f64) -> Vec<(MultiIndex, f64)> {
        let m_tot = m.total() as u32;
        let d = self.block_counts(m_tot, t);
        let lf = ln_factorials(m_tot);
        let mut out = Vec::new();
        let mut cur = vec![0u32; m.dim()];
        for (j, &dj) in d.iter().enumerate() {
            if dj <= 0.0 {
                continue;
            }
            let ln_base = dj.ln() - (lf[m_tot as usize] - lf[j] - lf[m_tot as usize - j]);
            enumerate_profiles(
                m.coords(),
                j as u32,
                0,
                &mut cur,
                0.0,
                &lf,
                &mut |n, ln_w| {
                    out.push((MultiIndex::new(n.to_vec()), (ln_base + ln_w).exp()));
                },
            );
        }
        out
    }

    /// Exact draw: survivors count from the block-count law, then a
    /// uniformly random subset of the lineages.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        m: &MultiIndex,
        t: f64,
        rng: &mut R,
    ) -> Result<MultiIndex> {
        let d = self.block_counts(m.total() as u32, t);
        let j = sample_index(&d, rng);
        hypergeometric_subset(m, j as u64, rng)
    }
}

fn enumerate_profiles<F: FnMut(&[u32], f64)>(
    m: &[u32],
    remaining: u32,
    i: usize,
    cur: &mut Vec<u32>,
    ln_w: f64,
    lf: &[f64],
    emit: &mut F,
) {
    if i + 1 == m.len() {
        if remaining <= m[i] {
            cur[i] = remaining;
            let mi = m[i] as usize;
            let r = remaining as usize;
            emit(cur, ln_w + lf[mi] - lf[r] - lf[mi - r]);
        }
        return;
    }
    let capacity_after: u32 = m[i + 1..].iter().sum();
    let lo = remaining.saturating_sub(capacity_after);
    let hi = remaining.min(m[i]);
    for ni in lo..=hi {
        cur[i] = ni;
        let mi = m[i] as usize;
        let n = ni as usize;
        let w = ln_w + lf[mi] - lf[n] - lf[mi - n];
        enumerate_profiles(m, remaining - ni, i + 1, cur, w, lf, emit);
    }
}

/// Inverse-CDF draw from a probability vector.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_positive
}

/// Uniformly random sub-multiset of size `keep` drawn without replacement.
pub fn hypergeometric_subset<R: Rng + ?Sized>(
    m: &MultiIndex,
    keep: u64,
    rng: &mut R,
) -> Result<MultiIndex> {
    if keep > m.total() {
        return Err(Error::DomainError(format!(
            "cannot keep {keep} of {}",
            m.total()
        )));
    }
    let mut population = m.total();
    let mut draws = keep;
    let mut out = Vec::with_capacity(m.dim());
    for &mi in m.coords() {
        if draws == 0 || mi == 0 {
            out.push(0);
        } else if population == mi as u64 {
            out.push(draws as u32);
            draws = 0;
        } else {
            let h = Hypergeometric::new(population, mi as u64, draws)
                .map_err(|e| Error::Numeric(e.to_string()))?;
            let k = h.sample(rng);
            out.push(k as u32);
            draws -= k;
        }
        population -= mi as u64;
    }
    Ok(MultiIndex::new(out))
}

/// Closed-form typed transition `d_{|m|→|n|}(t)` times the hypergeometric
/// profile probability.
pub fn kingman_typed_transition(m: &MultiIndex, n: &MultiIndex, t: f64, p: &WfParams) -> f64 {
    if !n.le(m) {
        return 0.0;
    }
    if t <= 0.0 {
        return if n == m { 1.0 } else { 0.0 };
    }
    let d = kingman_block_count_probs(m.total() as u32, t, p);
    d[n.total() as usize] * ln_hypergeometric_profile(m, n).exp()
}

pub fn kingman_typed_sample<R: Rng + ?Sized>(
    m: &MultiIndex,
    t: f64,
    p: &WfParams,
    rng: &mut R,
) -> Result<MultiIndex> {
    let d = kingman_block_count_probs(m.total() as u32, t, p);
    let j = sample_index(&d, rng);
    hypergeometric_subset(m, j as u64, rng)
}
