//! Cox–Ingersoll–Ross signal `dX = (δσ² − 2γX)dt + 2σ√X dB` observed
//! through Poisson counts, with its two duals:
//!
//! * the pure-death dual `(M_t, Θ_t)`: each of the `m` individuals dies at the
//!   time-varying rate `2σ²Θ_t` while `Θ_t` relaxes deterministically to
//!   `β = γ/σ²`;
//! * the birth-and-death dual with constant `θ`, births `m → m+1` at
//!   `2σ²(δ/2 + m)(θ − β)` and deaths `m → m−1` at `2σ²θm`.
//!
//! The reversible law is `Ga(δ/2, β)` and the conjugate kernels are
//! `g(x, m, θ) = Ga(δ/2 + m, θ)`.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Geometric, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{ln_binomial, ln_factorial, ln_gamma};
use crate::observation::ObservationRecord;

/// Default cap on Gillespie events per path.
pub const DEFAULT_EVENT_BUDGET: u64 = 10_000_000;

/// CIR parameters `(δ, γ, σ)` and the Poisson emission scale `τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CirParams {
    pub delta: f64,
    pub gamma: f64,
    pub sigma: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_tau() -> f64 {
    1.0
}

impl CirParams {
    /// Parameters with emission scale `τ = 1`.
    pub fn new(delta: f64, gamma: f64, sigma: f64) -> Result<Self> {
        let p = Self {
            delta,
            gamma,
            sigma,
            tau: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("delta", self.delta),
            ("gamma", self.gamma),
            ("sigma", self.sigma),
            ("tau", self.tau),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!(
                    "{name} = {v} must be positive"
                )));
            }
        }
        Ok(())
    }

    /// Stationary Gamma shape `δ/2`.
    pub fn alpha(&self) -> f64 {
        self.delta / 2.0
    }

    /// Stationary Gamma rate `γ/σ²`.
    pub fn beta(&self) -> f64 {
        self.gamma / (self.sigma * self.sigma)
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma * self.sigma
    }

    /// Stationary mean `δσ²/2γ`.
    pub fn stationary_mean(&self) -> f64 {
        self.delta * self.sigma2() / (2.0 * self.gamma)
    }

    fn check_theta(&self, theta: f64) -> Result<()> {
        // A few ulps of slack: θ is often produced as β + k in floating point.
        let bound = self.beta();
        if !(theta >= bound * (1.0 - 1e-14)) || !theta.is_finite() {
            return Err(Error::InvalidDualParam { theta, bound });
        }
        Ok(())
    }
}

/// `ln h(x, m, θ)` for the CIR duality function.
pub fn ln_h_cir(x: f64, m: u32, theta: f64, p: &CirParams) -> f64 {
    let a = p.alpha();
    let mf = m as f64;
    let x_term = if m == 0 { 0.0 } else { mf * x.ln() };
    ln_gamma(a) - ln_gamma(a + mf) - a * p.beta().ln() + (a + mf) * theta.ln() + x_term
        - (theta - p.beta()) * x
}

/// `h(x, m, θ) = Γ(δ/2)/Γ(δ/2+m) β^{−δ/2} θ^{δ/2+m} xᵐ e^{−(θ−β)x}`.
///
/// Overflows to `inf` for large `m`; use [`ln_h_cir`] there.
pub fn h_cir(x: f64, m: u32, theta: f64, p: &CirParams) -> f64 {
    ln_h_cir(x, m, theta, p).exp()
}

/// Log of the prefactor of `h` that does not depend on `x`.
pub(crate) fn ln_h_prefactor(m: u32, theta: f64, p: &CirParams) -> f64 {
    let a = p.alpha();
    let mf = m as f64;
    ln_gamma(a) - ln_gamma(a + mf) - a * p.beta().ln() + (a + mf) * theta.ln()
}

/// Gamma–Poisson update: `(m + Σy, θ + kτ)`.
pub fn cir_update(m: u32, theta: f64, y: &ObservationRecord, p: &CirParams) -> (u32, f64) {
    let s: u64 = y.total();
    (m + s as u32, theta + y.batch_len() as f64 * p.tau)
}

/// `ln μ_{m,θ}(y)`: log joint probability of the `k` Poisson(τx) counts under
/// `x ~ Ga(δ/2 + m, θ)`.
pub fn ln_cir_marginal_likelihood(m: u32, theta: f64, y: &ObservationRecord, p: &CirParams) -> f64 {
    let k = y.batch_len() as f64;
    if y.values.is_empty() {
        return 0.0;
    }
    let a = p.alpha() + m as f64;
    let s = y.total() as f64;
    let ln_fact: f64 = y.values.iter().map(|&v| ln_factorial(v as u64)).sum();
    s * p.tau.ln() - ln_fact + a * theta.ln() - ln_gamma(a) + ln_gamma(a + s)
        - (a + s) * (theta + k * p.tau).ln()
}

pub fn cir_marginal_likelihood(m: u32, theta: f64, y: &ObservationRecord, p: &CirParams) -> f64 {
    ln_cir_marginal_likelihood(m, theta, y, p).exp()
}

/// Birth and death rates `(λ_m, μ_m)` of the birth-and-death dual.
pub fn bd_rates(m: u32, theta: f64, p: &CirParams) -> Result<(f64, f64)> {
    p.check_theta(theta)?;
    let s2 = p.sigma2();
    let excess = (theta - p.beta()).max(0.0);
    let mf = m as f64;
    Ok((2.0 * s2 * (p.alpha() + mf) * excess, 2.0 * s2 * theta * mf))
}

/// Up-jump probability of the embedded chain under `α = δ/2`, `β = γ/σ²`,
/// `σ² = 1/2`, `τ = 1` and `θ = β + k`.
pub fn embedded_jump_prob(m: u32, alpha: f64, beta: f64, k: u32) -> f64 {
    if m == 0 {
        return 1.0;
    }
    let up = k as f64 * (alpha + m as f64);
    up / (up + m as f64 * (beta + k as f64))
}

/// Exact event-driven simulation of the birth-and-death dual up to time `t`.
pub fn gillespie_bd<R: Rng + ?Sized>(
    m0: u32,
    t: f64,
    theta: f64,
    p: &CirParams,
    budget: u64,
    rng: &mut R,
) -> Result<u32> {
    p.check_theta(theta)?;
    let mut m = m0;
    let mut clock = 0.0;
    let mut events = 0u64;
    loop {
        let (up, down) = bd_rates(m, theta, p)?;
        let total = up + down;
        if total <= 0.0 {
            return Ok(m);
        }
        clock += exp_draw(total, rng);
        if clock > t {
            return Ok(m);
        }
        events += 1;
        if events > budget {
            return Err(Error::SimulationBudgetExceeded { budget });
        }
        if rng.random::<f64>() * total < up {
            m += 1;
        } else {
            m -= 1;
        }
    }
}

fn exp_draw<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

/// Per-capita birth `λ`, immigration `β` and per-capita death `μ` of the
/// linear birth-death-immigration form of the birth-and-death dual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearBdRates {
    pub birth: f64,
    pub immigration: f64,
    pub death: f64,
}

impl LinearBdRates {
    pub fn new(theta: f64, p: &CirParams) -> Result<Self> {
        p.check_theta(theta)?;
        let s2 = p.sigma2();
        let excess = (theta - p.beta()).max(0.0);
        Ok(Self {
            birth: 2.0 * s2 * excess,
            immigration: s2 * p.delta * excess,
            death: 2.0 * s2 * theta,
        })
    }

    /// `(g(t), h(t))`: survival probability of a single founder's family and
    /// the geometric parameter of its size given survival.
    pub fn family_probs(&self, t: f64) -> (f64, f64) {
        let (l, mu) = (self.birth, self.death);
        let r = l - mu;
        if r.abs() < 1e-12 * l.max(mu) {
            let h = 1.0 / (1.0 + l * t);
            return (h, h);
        }
        // r·t ≤ 0 for these rates, so exp(r·t) cannot overflow; guard anyway.
        let e = (r * t).exp();
        let h = r / (l * e - mu);
        let g = h * e;
        (g.clamp(0.0, 1.0), h.clamp(0.0, 1.0))
    }

    /// Size at time `t` of the descendants of `founders` individuals.
    pub fn family_size<R: Rng + ?Sized>(&self, founders: u32, t: f64, rng: &mut R) -> Result<u32> {
        if founders == 0 {
            return Ok(0);
        }
        let (g, h) = self.family_probs(t);
        if !(g.is_finite() && h.is_finite()) {
            return Err(Error::Numeric(format!(
                "family probabilities g = {g}, h = {h}"
            )));
        }
        if founders == 1 {
            if rng.random::<f64>() >= g {
                return Ok(0);
            }
            return Ok(1 + geometric_failures(h, rng)?);
        }
        let survivors = Binomial::new(founders as u64, g)
            .map_err(|e| Error::Numeric(e.to_string()))?
            .sample(rng) as u32;
        Ok(survivors + negative_binomial(survivors, h, rng)?)
    }
}

fn geometric_failures<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Result<u32> {
    if p >= 1.0 {
        return Ok(0);
    }
    let d = Geometric::new(p).map_err(|e| Error::Numeric(e.to_string()))?;
    u32::try_from(d.sample(rng)).map_err(|_| Error::Numeric("geometric overflow".into()))
}

/// Failures before the `r`-th success with success probability `p`, drawn
/// as a Gamma–Poisson mixture.
pub(crate) fn negative_binomial<R: Rng + ?Sized>(r: u32, p: f64, rng: &mut R) -> Result<u32> {
    if r == 0 || p >= 1.0 {
        return Ok(0);
    }
    let lambda = Gamma::new(r as f64, (1.0 - p) / p)
        .map_err(|e| Error::Numeric(e.to_string()))?
        .sample(rng);
    poisson(lambda, rng)
}

pub(crate) fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u32> {
    if mean <= 0.0 {
        return Ok(0);
    }
    let v = Poisson::new(mean)
        .map_err(|e| Error::Numeric(e.to_string()))?
        .sample(rng);
    if !(v.is_finite() && v < u32::MAX as f64) {
        return Err(Error::Numeric(format!("Poisson draw {v} out of range")));
    }
    Ok(v as u32)
}

/// Draws the birth-and-death dual at time `t` by splitting it into the
/// descendants of the `m0` initial individuals and the families of
/// immigrants arriving as a Poisson process on `[0, t]`.
pub fn linear_bd_sample<R: Rng + ?Sized>(
    m0: u32,
    t: f64,
    theta: f64,
    p: &CirParams,
    rng: &mut R,
) -> Result<u32> {
    let rates = LinearBdRates::new(theta, p)?;
    let native = rates.family_size(m0, t, rng)?;
    let arrivals = poisson(rates.immigration * t, rng)?;
    let mut immigrant = 0u32;
    for _ in 0..arrivals {
        let arrival_time = rng.random::<f64>() * t;
        immigrant += rates.family_size(1, t - arrival_time, rng)?;
    }
    Ok(native + immigrant)
}

/// `Θ_t` solving `dΘ/dt = −2σ²Θ(Θ − β)`, `Θ_0 = θ₀`.
pub fn pure_death_theta(t: f64, theta0: f64, p: &CirParams) -> f64 {
    let beta = p.beta();
    let e = (-2.0 * p.gamma * t).exp();
    beta * theta0 / (theta0 - (theta0 - beta) * e)
}

/// Survival probability `exp(−∫₀ᵗ 2σ²Θ_u du)` of one individual of the
/// pure-death dual, which equals `e^{−2γt} Θ_t / θ₀`.
pub fn pure_death_survival(t: f64, theta0: f64, p: &CirParams) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    let beta = p.beta();
    let e = (-2.0 * p.gamma * t).exp();
    (beta * e / (theta0 - (theta0 - beta) * e)).clamp(0.0, 1.0)
}

/// `P(M_t = n | M_0 = m, Θ_0 = θ₀)` for the pure-death dual: the
/// `Binomial(m, s(t))` pmf.
pub fn pure_death_transition(m: u32, n: u32, t: f64, theta0: f64, p: &CirParams) -> f64 {
    if n > m {
        return 0.0;
    }
    let s = pure_death_survival(t, theta0, p);
    ln_binomial_pmf(m, n, s).exp()
}

/// The whole row `n = 0..=m` of the pure-death transition matrix.
pub fn pure_death_row(m: u32, t: f64, theta0: f64, p: &CirParams) -> Vec<(u32, f64)> {
    let s = pure_death_survival(t, theta0, p);
    (0..=m)
        .map(|n| (n, ln_binomial_pmf(m, n, s).exp()))
        .collect()
}

pub fn pure_death_sample<R: Rng + ?Sized>(
    m: u32,
    t: f64,
    theta0: f64,
    p: &CirParams,
    rng: &mut R,
) -> Result<u32> {
    let s = pure_death_survival(t, theta0, p);
    Ok(Binomial::new(m as u64, s)
        .map_err(|e| Error::Numeric(e.to_string()))?
        .sample(rng) as u32)
}

fn ln_binomial_pmf(m: u32, n: u32, s: f64) -> f64 {
    let (m64, n64) = (m as u64, n as u64);
    let term = |k: u64, q: f64| if k == 0 { 0.0 } else { k as f64 * q.ln() };
    ln_binomial(m64, n64) + term(n64, s) + term(m64 - n64, 1.0 - s)
}

/// Poisson intensity per unit of starting state and Gamma rate of the
/// Gamma–Poisson form of the CIR transition: `X_t | x ~ Ga(δ/2 + J, r(t))`
/// with `J ~ Poisson(x c(t))`.
pub fn cir_transition_constants(t: f64, p: &CirParams) -> (f64, f64) {
    let beta = p.beta();
    let one_minus = -(-2.0 * p.gamma * t).exp_m1();
    let c = beta * (-2.0 * p.gamma * t).exp() / one_minus;
    let r = beta / one_minus;
    (c, r)
}

/// Exact draw of `X_t | X_0 = x`.
pub fn cir_transition_sample<R: Rng + ?Sized>(
    x: f64,
    t: f64,
    p: &CirParams,
    rng: &mut R,
) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::DomainError(format!("{x} is not in [0, ∞)")));
    }
    let (c, r) = cir_transition_constants(t, p);
    let j = poisson(x * c, rng)?;
    gamma_draw(p.alpha() + j as f64, r, rng)
}

/// Draw from the stationary law `Ga(δ/2, β)`.
pub fn cir_stationary_sample<R: Rng + ?Sized>(p: &CirParams, rng: &mut R) -> Result<f64> {
    gamma_draw(p.alpha(), p.beta(), rng)
}

pub(crate) fn gamma_draw<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    Ok(Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::Numeric(e.to_string()))?
        .sample(rng))
}

/// Emission log-likelihood of a Poisson batch at signal value `x`.
pub fn ln_poisson_emission(x: f64, y: &ObservationRecord, p: &CirParams) -> f64 {
    let rate = p.tau * x;
    y.values
        .iter()
        .map(|&v| {
            let v = v as u64;
            let kernel = if v == 0 { 0.0 } else { v as f64 * rate.ln() };
            kernel - rate - ln_factorial(v)
        })
        .sum()
}
