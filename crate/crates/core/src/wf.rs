//! `K`-type Wright–Fisher diffusion with parent-independent mutation
//! weights `α`, observed through categorical draws. The reversible law is
//! `Dirichlet(α)` and the conjugate kernels are `Dirichlet(α + m)`.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::cir::gamma_draw;
use crate::error::{Error, Result};
use crate::mixture::{check_simplex, MultiIndex};
use crate::numeric::{kahan_sum, ln_gamma};
use crate::observation::ObservationRecord;

/// Mutation weights `α₁…α_K` with cached `θ = Σαᵢ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WfParamsRepr", into = "WfParamsRepr")]
pub struct WfParams {
    alpha: Vec<f64>,
    theta: f64,
}

#[derive(Serialize, Deserialize)]
struct WfParamsRepr {
    alpha: Vec<f64>,
}

impl TryFrom<WfParamsRepr> for WfParams {
    type Error = Error;

    fn try_from(r: WfParamsRepr) -> Result<Self> {
        WfParams::new(r.alpha)
    }
}

impl From<WfParams> for WfParamsRepr {
    fn from(p: WfParams) -> Self {
        WfParamsRepr { alpha: p.alpha }
    }
}

impl WfParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::InvalidParams(format!(
                "need at least two types, got {}",
                alpha.len()
            )));
        }
        if let Some(a) = alpha.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidParams(format!(
                "mutation weight {a} must be positive"
            )));
        }
        let theta = kahan_sum(alpha.iter().copied());
        Ok(Self { alpha, theta })
    }

    /// Same as [`new`](Self::new) but accepting a single type, which only
    /// makes sense for degenerate jump-chain checks.
    pub fn new_unchecked_dim(alpha: Vec<f64>) -> Self {
        let theta = kahan_sum(alpha.iter().copied());
        Self { alpha, theta }
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionError {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }
}

/// A point of the simplex `Δ_K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        check_simplex(&coords, coords.len())?;
        Ok(Self(coords))
    }

    /// Normalizes non-negative coordinates onto the simplex.
    pub fn from_unnormalized(mut coords: Vec<f64>) -> Result<Self> {
        let s = kahan_sum(coords.iter().copied());
        if !(s > 0.0 && s.is_finite()) || coords.iter().any(|c| *c < 0.0) {
            return Err(Error::DomainError(format!("cannot normalize {coords:?}")));
        }
        for c in &mut coords {
            *c /= s;
        }
        Ok(Self(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for SimplexPoint {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Log of the `x`-free prefactor `Γ(θ+|n|)/Γ(θ) Πᵢ Γ(αᵢ)/Γ(αᵢ+nᵢ)`.
pub(crate) fn ln_h_prefactor(n: &MultiIndex, p: &WfParams) -> f64 {
    let mut acc = ln_gamma(p.theta + n.total() as f64) - ln_gamma(p.theta);
    for (a, &ni) in p.alpha.iter().zip(n.coords()) {
        if ni > 0 {
            acc += ln_gamma(*a) - ln_gamma(a + ni as f64);
        }
    }
    acc
}

/// `ln h(x, n)`; `-inf` when some `xᵢ = 0` with `nᵢ > 0`.
pub fn ln_h_wf(x: &SimplexPoint, n: &MultiIndex, p: &WfParams) -> Result<f64> {
    p.check_dim(x.dim())?;
    p.check_dim(n.dim())?;
    let mut acc = ln_h_prefactor(n, p);
    for (&xi, &ni) in x.coords().iter().zip(n.coords()) {
        if ni > 0 {
            if xi == 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            acc += ni as f64 * xi.ln();
        }
    }
    Ok(acc)
}

/// Moran duality function `h(x, n) = Γ(θ+|n|)/Γ(θ) Πᵢ Γ(αᵢ)/Γ(αᵢ+nᵢ) xᵢ^{nᵢ}`.
pub fn h_wf(x: &SimplexPoint, n: &MultiIndex, p: &WfParams) -> Result<f64> {
    Ok(ln_h_wf(x, n, p)?.exp())
}

/// Dirichlet–categorical update `m + counts(y)`.
pub fn wf_update(m: &MultiIndex, y: &ObservationRecord) -> Result<MultiIndex> {
    if y.values.len() != m.dim() {
        return Err(Error::DimensionError {
            expected: m.dim(),
            got: y.values.len(),
        });
    }
    Ok(MultiIndex::new(
        m.coords()
            .iter()
            .zip(&y.values)
            .map(|(a, b)| a + b)
            .collect(),
    ))
}

/// `ln E_{Dir(α+m)}[Πⱼ xⱼ^{cⱼ}]`: log probability of one ordered sample with
/// type counts `c`. The multinomial coefficient is left out.
pub fn ln_wf_marginal_likelihood(
    m: &MultiIndex,
    y: &ObservationRecord,
    p: &WfParams,
) -> Result<f64> {
    p.check_dim(m.dim())?;
    p.check_dim(y.values.len())?;
    let total_c: u64 = y.total();
    if total_c == 0 {
        return Ok(0.0);
    }
    let a_tot = p.theta + m.total() as f64;
    let mut acc = ln_gamma(a_tot) - ln_gamma(a_tot + total_c as f64);
    for ((a, &mi), &c) in p.alpha.iter().zip(m.coords()).zip(&y.values) {
        if c > 0 {
            let ai = a + mi as f64;
            acc += ln_gamma(ai + c as f64) - ln_gamma(ai);
        }
    }
    Ok(acc)
}

pub fn wf_marginal_likelihood(m: &MultiIndex, y: &ObservationRecord, p: &WfParams) -> Result<f64> {
    Ok(ln_wf_marginal_likelihood(m, y, p)?.exp())
}

/// Categorical emission log-likelihood `Σⱼ cⱼ ln xⱼ` of an ordered batch.
pub fn ln_categorical_emission(x: &[f64], y: &ObservationRecord) -> f64 {
    x.iter()
        .zip(&y.values)
        .map(|(&xi, &c)| {
            if c == 0 {
                0.0
            } else if xi <= 0.0 {
                f64::NEG_INFINITY
            } else {
                c as f64 * xi.ln()
            }
        })
        .sum()
}

/// Kingman typed death rates: `m → m − eᵢ` at `mᵢ(θ + |m| − 1)/2`.
pub fn kingman_rates(m: &MultiIndex, p: &WfParams) -> Vec<f64> {
    let scale = (p.theta + m.total() as f64 - 1.0) / 2.0;
    m.coords().iter().map(|&mi| mi as f64 * scale).collect()
}

/// Moran rates: `n → n − eᵢ + eⱼ` at `nᵢ(αⱼ + nⱼ)/2` for every ordered pair
/// `i ≠ j` with `nᵢ > 0`.
pub fn moran_rates(n: &MultiIndex, p: &WfParams) -> Vec<((usize, usize), f64)> {
    let k = n.dim();
    let mut out = Vec::new();
    for i in 0..k {
        let ni = n.get(i);
        if ni == 0 {
            continue;
        }
        for j in (0..k).filter(|&j| j != i) {
            out.push(((i, j), ni as f64 * (p.alpha[j] + n.get(j) as f64) / 2.0));
        }
    }
    out
}

/// Draws from `Dirichlet(a)` through normalized Gamma variates.
pub fn dirichlet_sample<R: Rng + ?Sized>(a: &[f64], rng: &mut R) -> Result<SimplexPoint> {
    let mut g = Vec::with_capacity(a.len());
    for &ai in a {
        g.push(gamma_draw(ai, 1.0, rng)?);
    }
    let s = kahan_sum(g.iter().copied());
    if s > 0.0 {
        return SimplexPoint::from_unnormalized(g);
    }
    // All draws underflowed (only for tiny shapes): put the mass on the
    // coordinate with the largest log-gamma draw surrogate.
    let i = (0..a.len())
        .max_by(|&i, &j| a[i].total_cmp(&a[j]))
        .unwrap_or(0);
    let mut coords = vec![0.0; a.len()];
    coords[i] = 1.0;
    Ok(SimplexPoint(coords))
}

/// `Multinomial(n, probs)` by sequential conditional binomials.
pub fn multinomial_sample<R: Rng + ?Sized>(n: u32, probs: &[f64], rng: &mut R) -> Result<Vec<u32>> {
    let mut out = vec![0u32; probs.len()];
    let mut remaining = n;
    let mut mass = kahan_sum(probs.iter().copied());
    for (i, &pi) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probs.len() {
            out[i] = remaining;
            break;
        }
        let q = if mass > 0.0 {
            (pi / mass).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let draw = Binomial::new(remaining as u64, q)
            .map_err(|e| Error::Numeric(e.to_string()))?
            .sample(rng) as u32;
        out[i] = draw;
        remaining -= draw;
        mass -= pi;
    }
    Ok(out)
}
