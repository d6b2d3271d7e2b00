//! Filtering recursions: the exact pure-death filter, its pruned variant,
//! the dual-space particle filter and the signal-space bootstrap filter.

mod metrics;
mod smoother;

pub use metrics::{
    error_metrics, grid_l1, predictive_grid, MetricsSummary, MetricsTable, StepMetrics, GRID_POINTS,
};
pub use smoother::{smoother, SmoothingResult, CLOSURE_TOL};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cir::gamma_draw;
use crate::error::{Error, Result};
use crate::mixture::{DualMixture, Family, Moments};
use crate::model::{DualKind, DualModel};
use crate::numeric::{log_sum_exp, KahanSum};
use crate::observation::ObservationRecord;
use crate::resample::Resampling;
use crate::wf::dirichlet_sample;

/// Inference procedure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Exact,
    /// Exact filter with components of weight below `eps` dropped after
    /// every propagation.
    Pruned {
        eps: f64,
    },
    DualParticle {
        n: usize,
        dual: DualKind,
    },
    Bootstrap {
        n: usize,
    },
}

impl Method {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Method::Pruned { eps } if !(0.0..1.0).contains(&eps) => Err(Error::InvalidParams(
                format!("pruning threshold {eps} outside [0, 1)"),
            )),
            Method::DualParticle { n: 0, .. } | Method::Bootstrap { n: 0 } => Err(
                Error::InvalidParams("particle count must be at least 1".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Short label used in result tables.
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Pruned { .. } => "pruned",
            Method::DualParticle { .. } => "dual_particle",
            Method::Bootstrap { .. } => "bootstrap",
        }
    }

    pub fn dual_tag(&self) -> &'static str {
        match self {
            Method::DualParticle { dual, .. } => dual.tag(),
            Method::Exact | Method::Pruned { .. } => "pd",
            Method::Bootstrap { .. } => "none",
        }
    }

    pub fn particles(&self) -> Option<usize> {
        match *self {
            Method::DualParticle { n, .. } | Method::Bootstrap { n } => Some(n),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub method: Method,
    #[serde(default)]
    pub resampling: Resampling,
    pub seed: u64,
}

impl FilterConfig {
    pub fn new(method: Method, seed: u64) -> Self {
        Self {
            method,
            resampling: Resampling::Systematic,
            seed,
        }
    }
}

/// Weighted signal-space particles; weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl ParticleCloud {
    pub fn uniform(points: Vec<Vec<f64>>) -> Self {
        let w = 1.0 / points.len() as f64;
        let weights = vec![w; points.len()];
        Self { points, weights }
    }

    pub fn moments(&self) -> Moments {
        let dim = self.points.first().map_or(0, Vec::len);
        let mut mean = Vec::with_capacity(dim);
        let mut sd = Vec::with_capacity(dim);
        for c in 0..dim {
            let m: KahanSum = self
                .points
                .iter()
                .zip(&self.weights)
                .map(|(x, w)| w * x[c])
                .collect();
            let m = m.value();
            let v: KahanSum = self
                .points
                .iter()
                .zip(&self.weights)
                .map(|(x, w)| w * (x[c] - m) * (x[c] - m))
                .collect();
            mean.push(m);
            sd.push(v.value().max(0.0).sqrt());
        }
        Moments { mean, sd }
    }

    /// Weighted histogram of coordinate `coord` with `⌈2N^{1/3}⌉` equal bins
    /// spanning the uniform midpoint grid, read off at the grid points.
    pub fn histogram_density(&self, coord: usize, grid: &[f64]) -> Vec<f64> {
        if grid.is_empty() {
            return Vec::new();
        }
        let h = if grid.len() > 1 {
            grid[1] - grid[0]
        } else {
            1.0
        };
        let lo = grid[0] - h / 2.0;
        let hi = grid[grid.len() - 1] + h / 2.0;
        let bins = (2.0 * (self.points.len() as f64).cbrt()).ceil().max(1.0) as usize;
        let width = (hi - lo) / bins as f64;
        let mut mass = vec![0.0; bins];
        for (x, w) in self.points.iter().zip(&self.weights) {
            let v = x[coord];
            if v >= lo && v < hi {
                let b = (((v - lo) / width) as usize).min(bins - 1);
                mass[b] += w;
            }
        }
        grid.iter()
            .map(|&g| {
                let b = (((g - lo) / width) as usize).min(bins - 1);
                mass[b] / width
            })
            .collect()
    }
}

/// A filtering or predictive law: an explicit mixture or signal particles.
#[derive(Debug, Clone, PartialEq)]
pub enum Cloud {
    Mixture(DualMixture),
    Particles(ParticleCloud),
}

impl Cloud {
    pub fn moments(&self) -> Moments {
        match self {
            Cloud::Mixture(m) => m.moments(),
            Cloud::Particles(p) => p.moments(),
        }
    }

    /// Density of coordinate `coord` at each grid point.
    pub fn marginal_density(&self, coord: usize, grid: &[f64]) -> Result<Vec<f64>> {
        match self {
            Cloud::Mixture(m) => m.marginal_pdf_grid(coord, grid),
            Cloud::Particles(p) => Ok(p.histogram_density(coord, grid)),
        }
    }

    pub fn as_mixture(&self) -> Option<&DualMixture> {
        match self {
            Cloud::Mixture(m) => Some(m),
            Cloud::Particles(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub time: f64,
    pub predictive: Cloud,
    pub filtering: Cloud,
    pub predictive_moments: Moments,
    pub filtering_moments: Moments,
    /// Log predictive probability of this step's batch.
    pub ln_evidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterTrace {
    pub method: Method,
    pub steps: Vec<StepRecord>,
}

impl FilterTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn ln_likelihood(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.ln_evidence)
            .collect::<KahanSum>()
            .value()
    }

    pub fn filtering_means(&self, coord: usize) -> Vec<f64> {
        self.steps
            .iter()
            .map(|s| s.filtering_moments.mean[coord])
            .collect()
    }
}

/// Draws one signal value from the conjugate kernel `g(·, m, θ)`.
pub fn sample_kernel<R: Rng + ?Sized>(
    mixture: &DualMixture,
    m: &crate::MultiIndex,
    rng: &mut R,
) -> Result<Vec<f64>> {
    match mixture.family() {
        Family::CirGamma { shape0 } => {
            let rate = mixture
                .param()
                .rate()
                .ok_or_else(|| Error::UnsupportedModel("Gamma kernels need a rate".into()))?;
            Ok(vec![gamma_draw(shape0 + m.get(0) as f64, rate, rng)?])
        }
        Family::WfDirichlet { alpha } => {
            let a: Vec<f64> = alpha
                .iter()
                .zip(m.coords())
                .map(|(a, &mi)| a + mi as f64)
                .collect();
            Ok(dirichlet_sample(&a, rng)?.into_inner())
        }
    }
}

/// `n` independent draws from a mixture.
pub fn sample_mixture<R: Rng + ?Sized>(
    mixture: &DualMixture,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let idx: Vec<&crate::MultiIndex> = mixture.weights().keys().collect();
    let w: Vec<f64> = mixture.weights().values().copied().collect();
    let ancestors = Resampling::Multinomial.resample(&w, n, rng);
    ancestors
        .into_iter()
        .map(|a| sample_kernel(mixture, idx[a], rng))
        .collect()
}

/// Pushes a mixture forward by `dt` with one of the mixture-space methods.
pub fn propagate_mixture<M, R>(
    model: &M,
    mixture: &DualMixture,
    dt: f64,
    method: &Method,
    resampling: Resampling,
    rng: &mut R,
) -> Result<DualMixture>
where
    M: DualModel + ?Sized,
    R: Rng,
{
    if dt == 0.0 {
        return Ok(mixture.clone());
    }
    match *method {
        Method::Exact => mixture.propagate(
            |m, p, t| model.pure_death_row(m, p, t),
            |p, t| model.pure_death_param(p, t),
            dt,
        ),
        Method::Pruned { eps } => {
            let full = mixture.propagate(
                |m, p, t| model.pure_death_row(m, p, t),
                |p, t| model.pure_death_param(p, t),
                dt,
            )?;
            Ok(full.prune(eps)?.mixture)
        }
        Method::DualParticle { n, dual } => {
            if !model.supports(dual) {
                return Err(Error::UnsupportedModel(format!(
                    "dual {} unavailable",
                    dual.tag()
                )));
            }
            mixture.dual_particle_propagate(
                |m, p, t, r: &mut R| model.dual_sample(dual, m, p, t, r),
                |p, t| model.dual_param(dual, p, t),
                n,
                dt,
                resampling,
                rng,
            )
        }
        Method::Bootstrap { .. } => Err(Error::UnsupportedModel(
            "bootstrap propagation has no mixture representation".into(),
        )),
    }
}

/// Predictive law `dt` ahead of `mixture` under any method.
pub fn predict<M, R>(
    model: &M,
    mixture: &DualMixture,
    dt: f64,
    method: &Method,
    resampling: Resampling,
    rng: &mut R,
) -> Result<Cloud>
where
    M: DualModel + ?Sized,
    R: Rng,
{
    method.validate()?;
    match *method {
        Method::Bootstrap { n } => {
            let mut points = sample_mixture(mixture, n, rng)?;
            if dt > 0.0 {
                for x in &mut points {
                    *x = model.signal_transition_sample(x, dt, rng)?;
                }
            }
            Ok(Cloud::Particles(ParticleCloud::uniform(points)))
        }
        _ => Ok(Cloud::Mixture(propagate_mixture(
            model, mixture, dt, method, resampling, rng,
        )?)),
    }
}

fn step_dt(data: &[ObservationRecord], i: usize) -> Result<f64> {
    if i == 0 {
        return Ok(0.0);
    }
    let dt = data[i].time - data[i - 1].time;
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(Error::AlignmentError(format!(
            "observation times must be non-decreasing (step {i}: {} after {})",
            data[i].time,
            data[i - 1].time
        )));
    }
    Ok(dt)
}

/// Runs the configured filter over `data`. The first record is conditioned
/// on directly under the stationary prior.
pub fn run_filter<M: DualModel + ?Sized>(
    model: &M,
    data: &[ObservationRecord],
    cfg: &FilterConfig,
) -> Result<FilterTrace> {
    cfg.method.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    match cfg.method {
        Method::Bootstrap { n } => bootstrap_run(model, data, n, cfg, &mut rng),
        _ => mixture_run(model, data, cfg, &mut rng),
    }
}

fn mixture_run<M: DualModel + ?Sized>(
    model: &M,
    data: &[ObservationRecord],
    cfg: &FilterConfig,
    rng: &mut ChaCha8Rng,
) -> Result<FilterTrace> {
    let mut steps = Vec::with_capacity(data.len());
    let mut current = model.prior();
    for (i, y) in data.iter().enumerate() {
        let dt = step_dt(data, i)?;
        let pred = if i == 0 {
            current
        } else {
            propagate_mixture(model, &current, dt, &cfg.method, cfg.resampling, rng)?
        };
        let upd = pred.update(
            y,
            |m, p, y| model.ln_marginal(m, p, y),
            |m, y| model.shift_index(m, y),
            |p, y| model.shift_param(p, y),
        )?;
        let filt = upd.mixture;
        steps.push(StepRecord {
            time: y.time,
            predictive_moments: pred.moments(),
            filtering_moments: filt.moments(),
            predictive: Cloud::Mixture(pred),
            filtering: Cloud::Mixture(filt.clone()),
            ln_evidence: upd.ln_evidence,
        });
        current = filt;
    }
    Ok(FilterTrace {
        method: cfg.method,
        steps,
    })
}

fn bootstrap_run<M: DualModel + ?Sized>(
    model: &M,
    data: &[ObservationRecord],
    n: usize,
    cfg: &FilterConfig,
    rng: &mut ChaCha8Rng,
) -> Result<FilterTrace> {
    let mut steps = Vec::with_capacity(data.len());
    let mut particles: Vec<Vec<f64>> = (0..n)
        .map(|_| model.signal_prior_sample(rng))
        .collect::<Result<_>>()?;
    for (i, y) in data.iter().enumerate() {
        let dt = step_dt(data, i)?;
        if dt > 0.0 {
            for x in &mut particles {
                *x = model.signal_transition_sample(x, dt, rng)?;
            }
        }
        let pred = ParticleCloud::uniform(particles.clone());
        let ln_w: Vec<f64> = particles.iter().map(|x| model.ln_emission(x, y)).collect();
        let lse = log_sum_exp(&ln_w);
        if !lse.is_finite() {
            return Err(Error::ZeroLikelihood);
        }
        let weights: Vec<f64> = ln_w.iter().map(|l| (l - lse).exp()).collect();
        let filt = ParticleCloud {
            points: particles.clone(),
            weights,
        };
        let ancestors = cfg.resampling.resample(&filt.weights, n, rng);
        particles = ancestors
            .into_iter()
            .map(|a| filt.points[a].clone())
            .collect();
        steps.push(StepRecord {
            time: y.time,
            predictive_moments: pred.moments(),
            filtering_moments: filt.moments(),
            predictive: Cloud::Particles(pred),
            filtering: Cloud::Particles(filt),
            ln_evidence: lse - (n as f64).ln(),
        });
    }
    Ok(FilterTrace {
        method: cfg.method,
        steps,
    })
}

pub fn exact_filter<M: DualModel + ?Sized>(
    model: &M,
    data: &[ObservationRecord],
) -> Result<FilterTrace> {
    run_filter(model, data, &FilterConfig::new(Method::Exact, 0))
}

pub fn dual_particle_filter<M: DualModel + ?Sized>(
    model: &M,
    data: &[ObservationRecord],
    n: usize,
    dual: DualKind,
    seed: u64,
) -> Result<FilterTrace> {
    run_filter(
        model,
        data,
        &FilterConfig::new(Method::DualParticle { n, dual }, seed),
    )
}

pub fn bootstrap_pf<M: DualModel + ?Sized>(
    model: &M,
    data: &[ObservationRecord],
    n: usize,
    seed: u64,
) -> Result<FilterTrace> {
    run_filter(
        model,
        data,
        &FilterConfig::new(Method::Bootstrap { n }, seed),
    )
}
