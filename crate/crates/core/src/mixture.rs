//! Finitely supported mixtures over the dual space `ℤ₊ᴷ`.
//!
//! Every filtering, predictive and smoothing law in this crate is a
//! [`DualMixture`]: weights over multi-indices `m`, a shared deterministic
//! dual parameter, and a family tag that says which conjugate kernel
//! `g(x, m, θ)` the indices refer to (Gamma for CIR, Dirichlet for
//! Wright–Fisher).
//!
//! Supports are kept in a `BTreeMap`, so iteration is always lexicographic in
//! the index and every reduction happens in the same order on every platform.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};
use crate::numeric::{kahan_sum, ln_beta_pdf, ln_gamma, ln_gamma_pdf, log_sum_exp, KahanSum};
use crate::observation::ObservationRecord;
use crate::resample::Resampling;

/// Tolerance on `Σ w` for a valid mixture.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Largest kernel mass accepted by [`DualMixture::propagate`].
pub const KERNEL_MASS_TOL: f64 = 1e-8;

/// A point of `ℤ₊ᴷ` with its cached total `|m|`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex {
    coords: Vec<u32>,
    total: u64,
}

impl MultiIndex {
    pub fn new(coords: Vec<u32>) -> Self {
        let total = coords.iter().map(|&c| c as u64).sum();
        Self { coords, total }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(vec![0; dim])
    }

    /// One-dimensional index.
    pub fn scalar(m: u32) -> Self {
        Self::new(vec![m])
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn coords(&self) -> &[u32] {
        &self.coords
    }

    pub fn get(&self, i: usize) -> u32 {
        self.coords[i]
    }

    pub fn is_zero(&self) -> bool {
        self.total == 0
    }

    /// Coordinate-wise sum.
    pub fn add(&self, other: &MultiIndex) -> Result<MultiIndex> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionError {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(MultiIndex::new(
            self.coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| a + b)
                .collect(),
        ))
    }

    /// Coordinate-wise `self ≤ other`.
    pub fn le(&self, other: &MultiIndex) -> bool {
        self.dim() == other.dim() && self.coords.iter().zip(&other.coords).all(|(a, b)| a <= b)
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.coords)
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(coords: Vec<u32>) -> Self {
        MultiIndex::new(coords)
    }
}

/// Deterministic component of the dual process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DualParam {
    /// Gamma rate of the CIR kernels.
    Rate(f64),
    /// The Wright–Fisher duals carry no deterministic component.
    Trivial,
}

impl DualParam {
    pub fn rate(&self) -> Option<f64> {
        match self {
            DualParam::Rate(r) => Some(*r),
            DualParam::Trivial => None,
        }
    }
}

/// Which conjugate kernel the mixture components refer to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Family {
    /// Components `Ga(shape0 + m, θ)`.
    CirGamma { shape0: f64 },
    /// Components `Dirichlet(α + m)`.
    WfDirichlet { alpha: Vec<f64> },
}

impl Family {
    pub fn dim(&self) -> usize {
        match self {
            Family::CirGamma { .. } => 1,
            Family::WfDirichlet { alpha } => alpha.len(),
        }
    }
}

/// Mean and standard deviation per signal coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

/// Normalizes non-negative weights, dropping zero entries.
pub fn normalize(weights: BTreeMap<MultiIndex, f64>) -> Result<BTreeMap<MultiIndex, f64>> {
    if weights.values().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::DegenerateWeights);
    }
    let total = kahan_sum(weights.values().copied());
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    Ok(weights
        .into_iter()
        .filter(|(_, w)| *w > 0.0)
        .map(|(m, w)| (m, w / total))
        .collect())
}

/// A finitely supported mixture `Σ w_m g(x, m, θ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualMixture {
    weights: BTreeMap<MultiIndex, f64>,
    param: DualParam,
    family: Family,
}

/// Result of [`DualMixture::prune`].
#[derive(Debug, Clone)]
pub struct Pruned {
    pub mixture: DualMixture,
    pub removed_mass: f64,
}

/// Result of [`DualMixture::update`].
#[derive(Debug, Clone)]
pub struct Updated {
    pub mixture: DualMixture,
    /// `ln Σ w_m μ_{m,θ}(y)`, the log predictive probability of the batch.
    pub ln_evidence: f64,
}

impl DualMixture {
    /// Builds a mixture from raw weights, normalizing them.
    pub fn from_weights(
        weights: BTreeMap<MultiIndex, f64>,
        param: DualParam,
        family: Family,
    ) -> Result<Self> {
        let weights = normalize(weights)?;
        let dim = family.dim();
        if let Some(m) = weights.keys().find(|m| m.dim() != dim) {
            return Err(Error::DimensionError {
                expected: dim,
                got: m.dim(),
            });
        }
        Ok(Self {
            weights,
            param,
            family,
        })
    }

    /// Point mass at `m`.
    pub fn point(m: MultiIndex, param: DualParam, family: Family) -> Self {
        let mut weights = BTreeMap::new();
        weights.insert(m, 1.0);
        Self {
            weights,
            param,
            family,
        }
    }

    pub fn param(&self) -> DualParam {
        self.param
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight(&self, m: &MultiIndex) -> f64 {
        self.weights.get(m).copied().unwrap_or(0.0)
    }

    /// Support points and weights in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.weights.iter().map(|(m, w)| (m, *w))
    }

    pub fn weights(&self) -> &BTreeMap<MultiIndex, f64> {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        kahan_sum(self.weights.values().copied())
    }

    /// `Σ |w_a − w_b|` over the union of supports.
    pub fn l1_distance(&self, other: &DualMixture) -> f64 {
        let mut acc = KahanSum::new();
        for (m, w) in &self.weights {
            acc.add((w - other.weight(m)).abs());
        }
        for (m, w) in &other.weights {
            if !self.weights.contains_key(m) {
                acc.add(w.abs());
            }
        }
        acc.value()
    }

    /// Removes components whose normalized weight is below `eps`.
    pub fn prune(&self, eps: f64) -> Result<Pruned> {
        if !(0.0..1.0).contains(&eps) {
            return Err(Error::InvalidParams(format!(
                "pruning threshold {eps} not in [0, 1)"
            )));
        }
        if eps == 0.0 {
            return Ok(Pruned {
                mixture: self.clone(),
                removed_mass: 0.0,
            });
        }
        let mut removed = KahanSum::new();
        let kept: BTreeMap<MultiIndex, f64> = self
            .weights
            .iter()
            .filter_map(|(m, &w)| {
                if w < eps {
                    removed.add(w);
                    None
                } else {
                    Some((m.clone(), w))
                }
            })
            .collect();
        let removed_mass = removed.value();
        if removed_mass > 0.0 {
            log::debug!("pruned {removed_mass:e} of mixture mass at eps = {eps:e}");
        }
        let mixture = DualMixture {
            weights: normalize(kept)?,
            param: self.param,
            family: self.family.clone(),
        };
        Ok(Pruned {
            mixture,
            removed_mass,
        })
    }

    /// Pushes the mixture through a dual transition kernel:
    /// `w'_n = Σ_m w_m p_{m,n}(Δ; θ)` with the parameter replaced by
    /// `theta_evolve(θ, Δ)`.
    pub fn propagate<K, E>(&self, mut kernel: K, theta_evolve: E, dt: f64) -> Result<DualMixture>
    where
        K: FnMut(&MultiIndex, &DualParam, f64) -> Result<Vec<(MultiIndex, f64)>>,
        E: Fn(&DualParam, f64) -> DualParam,
    {
        // hash lookups only; per-target accumulation order follows the
        // sorted sources, so sums are deterministic
        let mut acc: HashMap<MultiIndex, KahanSum> = HashMap::new();
        for (m, &w) in &self.weights {
            let row = kernel(m, &self.param, dt)?;
            let mass = kahan_sum(row.iter().map(|(_, p)| *p));
            if !(mass <= 1.0 + KERNEL_MASS_TOL) || row.iter().any(|(_, p)| *p < 0.0) {
                return Err(Error::InvalidKernel { mass });
            }
            for (n, p) in row {
                if p > 0.0 {
                    acc.entry(n).or_default().add(w * p);
                }
            }
        }
        let raw = acc.into_iter().map(|(n, s)| (n, s.value())).collect();
        DualMixture::from_weights(raw, theta_evolve(&self.param, dt), self.family.clone())
    }

    /// Conditions the mixture on a batch `y`: the support moves to
    /// `t(y, m)`, the weights become `∝ w_m μ_{m,θ}(y)` and the parameter
    /// becomes `T(y, θ)`. `ln_marginal` returns `ln μ_{m,θ}(y)`.
    pub fn update<L, S, P>(
        &self,
        y: &ObservationRecord,
        ln_marginal: L,
        index_shift: S,
        param_shift: P,
    ) -> Result<Updated>
    where
        L: Fn(&MultiIndex, &DualParam, &ObservationRecord) -> f64,
        S: Fn(&MultiIndex, &ObservationRecord) -> Result<MultiIndex>,
        P: Fn(&DualParam, &ObservationRecord) -> DualParam,
    {
        let mut shifted = Vec::with_capacity(self.weights.len());
        let mut logs = Vec::with_capacity(self.weights.len());
        for (m, &w) in &self.weights {
            let lm = ln_marginal(m, &self.param, y);
            let lw = if lm.is_nan() {
                f64::NEG_INFINITY
            } else {
                w.ln() + lm
            };
            shifted.push(index_shift(m, y)?);
            logs.push(lw);
        }
        let ln_evidence = log_sum_exp(&logs);
        if !ln_evidence.is_finite() {
            return Err(Error::ZeroLikelihood);
        }
        let mut acc: BTreeMap<MultiIndex, KahanSum> = BTreeMap::new();
        for (n, lw) in shifted.into_iter().zip(logs) {
            let w = (lw - ln_evidence).exp();
            if w > 0.0 {
                acc.entry(n).or_default().add(w);
            }
        }
        let raw = acc.into_iter().map(|(n, s)| (n, s.value())).collect();
        let mixture =
            DualMixture::from_weights(raw, param_shift(&self.param, y), self.family.clone())?;
        Ok(Updated {
            mixture,
            ln_evidence,
        })
    }

    /// Particle approximation of a propagation: draw `n` source indices
    /// from the weights, move each through `sampler` and return the
    /// empirical law of the arrivals.
    #[allow(clippy::too_many_arguments)]
    pub fn dual_particle_propagate<R, S, E>(
        &self,
        mut sampler: S,
        theta_evolve: E,
        n: usize,
        dt: f64,
        resampling: Resampling,
        rng: &mut R,
    ) -> Result<DualMixture>
    where
        R: Rng + ?Sized,
        S: FnMut(&MultiIndex, &DualParam, f64, &mut R) -> Result<MultiIndex>,
        E: Fn(&DualParam, f64) -> DualParam,
    {
        if n == 0 {
            return Err(Error::InvalidParams(
                "particle count must be at least 1".into(),
            ));
        }
        let sources: Vec<&MultiIndex> = self.weights.keys().collect();
        let w: Vec<f64> = self.weights.values().copied().collect();
        let ancestors = resampling.resample(&w, n, rng);
        let mut counts: BTreeMap<MultiIndex, u64> = BTreeMap::new();
        for a in ancestors {
            let arrival = sampler(sources[a], &self.param, dt, rng)?;
            *counts.entry(arrival).or_default() += 1;
        }
        let raw = counts
            .into_iter()
            .map(|(m, c)| (m, c as f64 / n as f64))
            .collect();
        DualMixture::from_weights(raw, theta_evolve(&self.param, dt), self.family.clone())
    }

    /// Exact mixture mean and standard deviation per coordinate.
    pub fn moments(&self) -> Moments {
        match (&self.family, self.param) {
            (Family::CirGamma { shape0 }, DualParam::Rate(rate)) => {
                let mut m1 = KahanSum::new();
                let mut m2 = KahanSum::new();
                for (m, &w) in &self.weights {
                    let a = shape0 + m.get(0) as f64;
                    m1.add(w * a / rate);
                    m2.add(w * a * (a + 1.0) / (rate * rate));
                }
                let mean = m1.value();
                let var = (m2.value() - mean * mean).max(0.0);
                Moments {
                    mean: vec![mean],
                    sd: vec![var.sqrt()],
                }
            }
            (Family::WfDirichlet { alpha }, _) => {
                let k = alpha.len();
                let theta: f64 = alpha.iter().sum();
                let mut m1 = vec![KahanSum::new(); k];
                let mut m2 = vec![KahanSum::new(); k];
                for (m, &w) in &self.weights {
                    let total = theta + m.total() as f64;
                    for i in 0..k {
                        let a = alpha[i] + m.get(i) as f64;
                        m1[i].add(w * a / total);
                        m2[i].add(w * a * (a + 1.0) / (total * (total + 1.0)));
                    }
                }
                let mean: Vec<f64> = m1.iter().map(KahanSum::value).collect();
                let sd = m2
                    .iter()
                    .zip(&mean)
                    .map(|(s, mu)| (s.value() - mu * mu).max(0.0).sqrt())
                    .collect();
                Moments { mean, sd }
            }
            (Family::CirGamma { .. }, DualParam::Trivial) => {
                unreachable!("CIR mixtures always carry a rate parameter")
            }
        }
    }

    /// Mixture density at a signal point (`[x]` for CIR, a simplex point for
    /// Wright–Fisher, density with respect to Lebesgue measure on the first
    /// `K − 1` coordinates).
    pub fn pdf(&self, x: &[f64]) -> Result<f64> {
        match (&self.family, self.param) {
            (Family::CirGamma { shape0 }, DualParam::Rate(rate)) => {
                let [x] = x else {
                    return Err(Error::DimensionError {
                        expected: 1,
                        got: x.len(),
                    });
                };
                if !(*x >= 0.0) || !x.is_finite() {
                    return Err(Error::DomainError(format!("{x} is not in [0, ∞)")));
                }
                Ok(kahan_sum(self.weights.iter().map(|(m, &w)| {
                    w * ln_gamma_pdf(*x, shape0 + m.get(0) as f64, rate).exp()
                })))
            }
            (Family::WfDirichlet { alpha }, _) => {
                check_simplex(x, alpha.len())?;
                Ok(kahan_sum(self.weights.iter().map(|(m, &w)| {
                    let a: Vec<f64> = alpha
                        .iter()
                        .zip(m.coords())
                        .map(|(al, &mi)| al + mi as f64)
                        .collect();
                    w * ln_dirichlet_pdf(x, &a).exp()
                })))
            }
            (Family::CirGamma { .. }, DualParam::Trivial) => {
                unreachable!("CIR mixtures always carry a rate parameter")
            }
        }
    }

    /// Evaluates [`pdf`](Self::pdf) on every grid point.
    pub fn pdf_grid(&self, grid: &[Vec<f64>]) -> Result<Vec<f64>> {
        grid.iter().map(|x| self.pdf(x)).collect()
    }

    /// Marginal density of one signal coordinate: the Gamma mixture itself for
    /// CIR, a Beta mixture for Wright–Fisher.
    pub fn marginal_pdf(&self, coord: usize, x: f64) -> Result<f64> {
        match (&self.family, self.param) {
            (Family::CirGamma { .. }, _) => {
                if coord != 0 {
                    return Err(Error::DimensionError {
                        expected: 1,
                        got: coord + 1,
                    });
                }
                self.pdf(&[x])
            }
            (Family::WfDirichlet { alpha }, _) => {
                if coord >= alpha.len() {
                    return Err(Error::DimensionError {
                        expected: alpha.len(),
                        got: coord + 1,
                    });
                }
                if !(0.0..=1.0).contains(&x) {
                    return Err(Error::DomainError(format!("{x} is not in [0, 1]")));
                }
                let theta: f64 = alpha.iter().sum();
                Ok(kahan_sum(self.weights.iter().map(|(m, &w)| {
                    let a = alpha[coord] + m.get(coord) as f64;
                    let b = theta + m.total() as f64 - a;
                    w * ln_beta_pdf(x, a, b).exp()
                })))
            }
        }
    }

    pub fn marginal_pdf_grid(&self, coord: usize, grid: &[f64]) -> Result<Vec<f64>> {
        grid.iter().map(|&x| self.marginal_pdf(coord, x)).collect()
    }

    /// Marginal CDF of one coordinate.
    pub fn marginal_cdf(&self, coord: usize, x: f64) -> f64 {
        match (&self.family, self.param) {
            (Family::CirGamma { shape0 }, DualParam::Rate(rate)) => {
                if x <= 0.0 {
                    return 0.0;
                }
                kahan_sum(
                    self.weights
                        .iter()
                        .map(|(m, &w)| w * gamma_lr(shape0 + m.get(0) as f64, rate * x)),
                )
            }
            (Family::WfDirichlet { alpha }, _) => {
                if x <= 0.0 {
                    return 0.0;
                }
                if x >= 1.0 {
                    return 1.0;
                }
                let theta: f64 = alpha.iter().sum();
                kahan_sum(self.weights.iter().map(|(m, &w)| {
                    let a = alpha[coord] + m.get(coord) as f64;
                    let b = theta + m.total() as f64 - a;
                    w * beta_reg(a, b, x)
                }))
            }
            (Family::CirGamma { .. }, DualParam::Trivial) => {
                unreachable!("CIR mixtures always carry a rate parameter")
            }
        }
    }

    /// Marginal quantile of one coordinate by bisection on the CDF.
    pub fn marginal_quantile(&self, coord: usize, p: f64) -> f64 {
        let (mut lo, mut hi) = match self.family {
            Family::WfDirichlet { .. } => (0.0, 1.0),
            Family::CirGamma { .. } => {
                let mut hi = 1.0;
                while self.marginal_cdf(coord, hi) < p && hi < 1e12 {
                    hi *= 2.0;
                }
                (0.0, hi)
            }
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.marginal_cdf(coord, mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * hi.max(1e-300) {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

pub(crate) fn check_simplex(x: &[f64], k: usize) -> Result<()> {
    if x.len() != k {
        return Err(Error::DimensionError {
            expected: k,
            got: x.len(),
        });
    }
    let s = kahan_sum(x.iter().copied());
    if x.iter().any(|&v| !(0.0..=1.0).contains(&v)) || (s - 1.0).abs() > 1e-10 {
        return Err(Error::DomainError(format!("{x:?} is not in the simplex")));
    }
    Ok(())
}

/// Log-density of `Dirichlet(a)` on the simplex.
pub(crate) fn ln_dirichlet_pdf(x: &[f64], a: &[f64]) -> f64 {
    let total: f64 = a.iter().sum();
    let mut acc = ln_gamma(total);
    for (&xi, &ai) in x.iter().zip(a) {
        acc -= ln_gamma(ai);
        if ai != 1.0 {
            if xi == 0.0 {
                return if ai > 1.0 {
                    f64::NEG_INFINITY
                } else {
                    f64::INFINITY
                };
            }
            acc += (ai - 1.0) * xi.ln();
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn idx(m: u32) -> MultiIndex {
        MultiIndex::scalar(m)
    }

    fn gamma_family() -> Family {
        Family::CirGamma { shape0: 1.0 }
    }

    fn map(pairs: &[(u32, f64)]) -> BTreeMap<MultiIndex, f64> {
        pairs.iter().map(|&(m, w)| (idx(m), w)).collect()
    }

    #[test]
    fn multi_index_total_is_cached_sum() {
        let m = MultiIndex::new(vec![4, 0, 9, 2]);
        assert_eq!(m.total(), 15);
        assert!(MultiIndex::new(vec![1, 0, 9, 2]).le(&m));
        assert!(!MultiIndex::new(vec![5, 0, 0, 0]).le(&m));
    }

    #[test]
    fn normalize_examples() {
        let n = normalize(map(&[(1, 2.0), (2, 2.0)])).unwrap();
        assert_eq!(n[&idx(1)], 0.5);
        assert_eq!(n[&idx(2)], 0.5);

        let n = normalize(map(&[(1, 3.0), (2, 0.0)])).unwrap();
        assert_eq!(n.len(), 1);
        assert_eq!(n[&idx(1)], 1.0);

        assert_eq!(
            normalize(map(&[(1, 0.0), (2, 0.0)])),
            Err(Error::DegenerateWeights)
        );
        assert_eq!(
            normalize(map(&[(1, f64::NAN)])),
            Err(Error::DegenerateWeights)
        );
    }

    #[test]
    fn prune_examples() {
        let mix = DualMixture::from_weights(
            map(&[(0, 0.7), (1, 0.2999), (2, 0.0001)]),
            DualParam::Rate(1.0),
            gamma_family(),
        )
        .unwrap();
        let p = mix.prune(1e-3).unwrap();
        assert_eq!(p.mixture.len(), 2);
        assert!((p.removed_mass - 1e-4).abs() < 1e-15);
        assert!((p.mixture.weight(&idx(0)) - 0.7 / 0.9999).abs() < 1e-15);
        assert!((p.mixture.weight(&idx(1)) - 0.2999 / 0.9999).abs() < 1e-15);

        let same = mix.prune(0.0).unwrap();
        assert_eq!(same.mixture, mix);
        assert_eq!(same.removed_mass, 0.0);

        assert_eq!(mix.prune(0.8).unwrap_err(), Error::DegenerateWeights);
    }

    #[test]
    fn propagate_identity_and_absorbing_kernels() {
        let mix = DualMixture::from_weights(
            map(&[(0, 0.2), (3, 0.5), (7, 0.3)]),
            DualParam::Rate(2.0),
            gamma_family(),
        )
        .unwrap();
        let same = mix
            .propagate(|m, _, _| Ok(vec![(m.clone(), 1.0)]), |p, _| *p, 0.1)
            .unwrap();
        assert_eq!(same.weights(), mix.weights());

        let zero = mix
            .propagate(|_, _, _| Ok(vec![(idx(0), 1.0)]), |p, _| *p, 0.1)
            .unwrap();
        assert_eq!(zero.len(), 1);
        assert!((zero.weight(&idx(0)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn propagate_rejects_excess_mass() {
        let mix = DualMixture::point(idx(1), DualParam::Rate(1.0), gamma_family());
        let err = mix
            .propagate(
                |_, _, _| Ok(vec![(idx(0), 0.6), (idx(1), 0.6)]),
                |p, _| *p,
                1.0,
            )
            .unwrap_err();
        assert!(matches!(err, Error::InvalidKernel { .. }));
    }

    #[test]
    fn update_examples() {
        let shift =
            |m: &MultiIndex, y: &ObservationRecord| Ok(MultiIndex::scalar(m.get(0) + y.values[0]));
        let y = ObservationRecord::new(0.0, vec![2]);
        let single = DualMixture::point(idx(3), DualParam::Rate(1.0), gamma_family());
        let up = single.update(&y, |_, _, _| -1.3, shift, |p, _| *p).unwrap();
        assert_eq!(up.mixture.len(), 1);
        assert_eq!(up.mixture.weight(&idx(5)), 1.0);

        let two = DualMixture::from_weights(
            map(&[(0, 1.0), (1, 1.0)]),
            DualParam::Rate(1.0),
            gamma_family(),
        )
        .unwrap();
        let up = two.update(&y, |_, _, _| -0.7, shift, |p, _| *p).unwrap();
        assert_eq!(up.mixture.weight(&idx(2)), up.mixture.weight(&idx(3)));
        assert!((up.ln_evidence + 0.7).abs() < 1e-15);

        let err = two
            .update(&y, |_, _, _| f64::NEG_INFINITY, shift, |p, _| *p)
            .unwrap_err();
        assert_eq!(err, Error::ZeroLikelihood);
    }

    #[test]
    fn single_particle_is_point_mass() {
        let mix = DualMixture::from_weights(
            map(&[(0, 0.5), (4, 0.5)]),
            DualParam::Rate(1.0),
            gamma_family(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let out = mix
            .dual_particle_propagate(
                |m, _, _, _: &mut ChaCha8Rng| Ok(m.clone()),
                |p, _| *p,
                1,
                0.1,
                Resampling::Multinomial,
                &mut rng,
            )
            .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.iter().next().unwrap().1, 1.0);
    }

    #[test]
    fn gamma_and_dirichlet_moments() {
        let g = DualMixture::point(
            idx(2),
            DualParam::Rate(4.0),
            Family::CirGamma { shape0: 1.5 },
        );
        let mo = g.moments();
        assert!((mo.mean[0] - 3.5 / 4.0).abs() < 1e-15);
        assert!((mo.sd[0] - 3.5f64.sqrt() / 4.0).abs() < 1e-15);

        let d = DualMixture::point(
            MultiIndex::zeros(2),
            DualParam::Trivial,
            Family::WfDirichlet {
                alpha: vec![1.0, 1.0],
            },
        );
        let mo = d.moments();
        assert_eq!(mo.mean, vec![0.5, 0.5]);
    }

    #[test]
    fn pdf_examples() {
        let g = DualMixture::point(idx(0), DualParam::Rate(1.0), gamma_family());
        assert!((g.pdf(&[0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(g.pdf(&[-1.0]), Err(Error::DomainError(_))));

        let d = DualMixture::point(
            MultiIndex::zeros(3),
            DualParam::Trivial,
            Family::WfDirichlet {
                alpha: vec![1.0, 1.0, 1.0],
            },
        );
        // Uniform on the 2-simplex has density Γ(3) = 2.
        assert!((d.pdf(&[0.2, 0.3, 0.5]).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(
            d.pdf(&[0.2, 0.3, 0.6]),
            Err(Error::DomainError(_))
        ));
    }

    #[test]
    fn quantile_inverts_cdf() {
        let g = DualMixture::from_weights(
            map(&[(1, 0.3), (6, 0.7)]),
            DualParam::Rate(2.0),
            Family::CirGamma { shape0: 5.5 },
        )
        .unwrap();
        let q = g.marginal_quantile(0, 0.9995);
        assert!((g.marginal_cdf(0, q) - 0.9995).abs() < 1e-9);
    }
}
