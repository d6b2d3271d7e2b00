//! The model interface consumed by the filter engine, with CIR and WF
//! implementations.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::cir::{self, CirParams, DEFAULT_EVENT_BUDGET};
use crate::error::{Error, Result};
use crate::jump::{gillespie_jump_chain, KingmanProcess, MoranProcess};
use crate::kingman::KingmanDual;
use crate::mixture::{DualMixture, DualParam, Family, MultiIndex};
use crate::observation::ObservationRecord;
use crate::wf::{self, dirichlet_sample, WfParams};
use crate::wf_sampling::{moran_wf_chain_sample, WfTransitionSampler};

/// Dual process used to move particles in the dual-space particle filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualKind {
    /// Exact pure-death draw: binomial thinning (CIR) or the typed Kingman
    /// coalescent (WF).
    PureDeath,
    /// WF pure-death dual simulated event by event.
    PureDeathGillespie,
    /// CIR birth-and-death dual through the linear B&D decomposition.
    BirthDeath,
    /// CIR birth-and-death dual through event-by-event Gillespie simulation.
    BirthDeathGillespie,
    /// Moran dual simulated exactly.
    Moran,
    /// Moran dual approximated by a discrete WF chain.
    WfChain,
    /// Moran dual approximated by a binned WF diffusion draw.
    WfDiffusion,
}

impl DualKind {
    pub fn tag(&self) -> &'static str {
        match self {
            DualKind::PureDeath => "pd",
            DualKind::PureDeathGillespie => "pd_gillespie",
            DualKind::BirthDeath => "bd",
            DualKind::BirthDeathGillespie => "bd_gillespie",
            DualKind::Moran => "moran",
            DualKind::WfChain => "wf_chain",
            DualKind::WfDiffusion => "wf_diffusion",
        }
    }
}

/// Index and parameter of the merged kernel `h(x,m,θ)h(x,n,θ') = C h(x,d,e)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Closure {
    pub index: MultiIndex,
    pub param: DualParam,
    pub ln_c: f64,
}

/// Everything the filter engine needs from a signal/observation model.
/// Signals are coordinate vectors: `[x]` for CIR, simplex points for WF.
pub trait DualModel: Send + Sync {
    fn family(&self) -> Family;

    /// Dimension of both the dual indices and the signal.
    fn dim(&self) -> usize;

    fn prior_param(&self) -> DualParam;

    fn prior(&self) -> DualMixture {
        DualMixture::point(
            MultiIndex::zeros(self.dim()),
            self.prior_param(),
            self.family(),
        )
    }

    fn ln_marginal(&self, m: &MultiIndex, param: &DualParam, y: &ObservationRecord) -> f64;

    fn shift_index(&self, m: &MultiIndex, y: &ObservationRecord) -> Result<MultiIndex>;

    fn shift_param(&self, param: &DualParam, y: &ObservationRecord) -> DualParam;

    /// Full transition row of the pure-death dual.
    fn pure_death_row(
        &self,
        m: &MultiIndex,
        param: &DualParam,
        dt: f64,
    ) -> Result<Vec<(MultiIndex, f64)>>;

    fn pure_death_param(&self, param: &DualParam, dt: f64) -> DualParam;

    fn supports(&self, kind: DualKind) -> bool;

    fn dual_sample(
        &self,
        kind: DualKind,
        m: &MultiIndex,
        param: &DualParam,
        dt: f64,
        rng: &mut dyn rand::RngCore,
    ) -> Result<MultiIndex>;

    /// Parameter after a move of length `dt` under dual `kind`.
    fn dual_param(&self, kind: DualKind, param: &DualParam, dt: f64) -> DualParam;

    fn signal_prior_sample(&self, rng: &mut dyn rand::RngCore) -> Result<Vec<f64>>;

    fn signal_transition_sample(
        &self,
        x: &[f64],
        dt: f64,
        rng: &mut dyn rand::RngCore,
    ) -> Result<Vec<f64>>;

    fn ln_emission(&self, x: &[f64], y: &ObservationRecord) -> f64;

    fn emission_sample(
        &self,
        x: &[f64],
        batch: u32,
        rng: &mut dyn rand::RngCore,
    ) -> Result<Vec<u32>>;

    /// `d(m,n)`, `e(θ,θ')` and `ln C` for the product of two duality
    /// functions.
    fn closure(
        &self,
        m: &MultiIndex,
        theta_m: &DualParam,
        n: &MultiIndex,
        theta_n: &DualParam,
    ) -> Result<Closure>;

    /// `ln h(x, m, θ)`, used to check [`closure`](Self::closure) numerically.
    fn ln_h(&self, x: &[f64], m: &MultiIndex, param: &DualParam) -> Result<f64>;

    /// Points on which closure identities are checked.
    fn closure_grid(&self) -> Vec<Vec<f64>>;
}

/// Largest relative spread over `grid` of `h(x,m,θ)h(x,n,θ') / (C h(x,d,e))`.
pub fn closure_spread<M: DualModel + ?Sized>(
    model: &M,
    m: &MultiIndex,
    theta_m: &DualParam,
    n: &MultiIndex,
    theta_n: &DualParam,
) -> Result<f64> {
    let c = model.closure(m, theta_m, n, theta_n)?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for x in model.closure_grid() {
        let r = model.ln_h(&x, m, theta_m)? + model.ln_h(&x, n, theta_n)?
            - model.ln_h(&x, &c.index, &c.param)?
            - c.ln_c;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Ok((hi - lo).exp_m1().abs())
}

fn rate_of(param: &DualParam) -> Result<f64> {
    param
        .rate()
        .ok_or_else(|| Error::UnsupportedModel("CIR kernels need a rate parameter".into()))
}

fn scalar_index(m: &MultiIndex) -> Result<u32> {
    if m.dim() != 1 {
        return Err(Error::DimensionError {
            expected: 1,
            got: m.dim(),
        });
    }
    Ok(m.get(0))
}

/// CIR signal with Poisson observations.
#[derive(Debug, Clone)]
pub struct CirModel {
    pub params: CirParams,
    pub event_budget: u64,
}

impl CirModel {
    pub fn new(params: CirParams) -> Self {
        Self {
            params,
            event_budget: DEFAULT_EVENT_BUDGET,
        }
    }
}

impl DualModel for CirModel {
    fn family(&self) -> Family {
        Family::CirGamma {
            shape0: self.params.alpha(),
        }
    }

    fn dim(&self) -> usize {
        1
    }

    fn prior_param(&self) -> DualParam {
        DualParam::Rate(self.params.beta())
    }

    fn ln_marginal(&self, m: &MultiIndex, param: &DualParam, y: &ObservationRecord) -> f64 {
        match (scalar_index(m), param.rate()) {
            (Ok(m), Some(theta)) => cir::ln_cir_marginal_likelihood(m, theta, y, &self.params),
            _ => f64::NAN,
        }
    }

    fn shift_index(&self, m: &MultiIndex, y: &ObservationRecord) -> Result<MultiIndex> {
        let m = scalar_index(m)?;
        let s: u64 = y.total();
        let shifted = u32::try_from(m as u64 + s)
            .map_err(|_| Error::DomainError(format!("index overflow at {m}+{s}")))?;
        Ok(MultiIndex::scalar(shifted))
    }

    fn shift_param(&self, param: &DualParam, y: &ObservationRecord) -> DualParam {
        match param {
            DualParam::Rate(theta) => {
                DualParam::Rate(theta + y.batch_len() as f64 * self.params.tau)
            }
            DualParam::Trivial => DualParam::Trivial,
        }
    }

    fn pure_death_row(
        &self,
        m: &MultiIndex,
        param: &DualParam,
        dt: f64,
    ) -> Result<Vec<(MultiIndex, f64)>> {
        let m = scalar_index(m)?;
        let theta = rate_of(param)?;
        Ok(cir::pure_death_row(m, dt, theta, &self.params)
            .into_iter()
            .map(|(n, p)| (MultiIndex::scalar(n), p))
            .collect())
    }

    fn pure_death_param(&self, param: &DualParam, dt: f64) -> DualParam {
        match param {
            DualParam::Rate(theta) => {
                DualParam::Rate(cir::pure_death_theta(dt, *theta, &self.params))
            }
            DualParam::Trivial => DualParam::Trivial,
        }
    }

    fn supports(&self, kind: DualKind) -> bool {
        matches!(
            kind,
            DualKind::PureDeath | DualKind::BirthDeath | DualKind::BirthDeathGillespie
        )
    }

    fn dual_sample(
        &self,
        kind: DualKind,
        m: &MultiIndex,
        param: &DualParam,
        dt: f64,
        rng: &mut dyn rand::RngCore,
    ) -> Result<MultiIndex> {
        let m = scalar_index(m)?;
        let theta = rate_of(param)?;
        let n = match kind {
            DualKind::PureDeath => cir::pure_death_sample(m, dt, theta, &self.params, rng)?,
            DualKind::BirthDeath => cir::linear_bd_sample(m, dt, theta, &self.params, rng)?,
            DualKind::BirthDeathGillespie => {
                cir::gillespie_bd(m, dt, theta, &self.params, self.event_budget, rng)?
            }
            other => {
                return Err(Error::UnsupportedModel(format!(
                    "dual {} is not defined for CIR",
                    other.tag()
                )))
            }
        };
        Ok(MultiIndex::scalar(n))
    }

    fn dual_param(&self, kind: DualKind, param: &DualParam, dt: f64) -> DualParam {
        match kind {
            DualKind::PureDeath => self.pure_death_param(param, dt),
            _ => *param,
        }
    }

    fn signal_prior_sample(&self, rng: &mut dyn rand::RngCore) -> Result<Vec<f64>> {
        Ok(vec![cir::cir_stationary_sample(&self.params, rng)?])
    }

    fn signal_transition_sample(
        &self,
        x: &[f64],
        dt: f64,
        rng: &mut dyn rand::RngCore,
    ) -> Result<Vec<f64>> {
        Ok(vec![cir::cir_transition_sample(
            x[0],
            dt,
            &self.params,
            rng,
        )?])
    }

    fn ln_emission(&self, x: &[f64], y: &ObservationRecord) -> f64 {
        cir::ln_poisson_emission(x[0], y, &self.params)
    }

    fn emission_sample(
        &self,
        x: &[f64],
        batch: u32,
        rng: &mut dyn rand::RngCore,
    ) -> Result<Vec<u32>> {
        let mean = self.params.tau * x[0];
        (0..batch).map(|_| cir::poisson(mean, rng)).collect()
    }

    fn closure(
        &self,
        m: &MultiIndex,
        theta_m: &DualParam,
        n: &MultiIndex,
        theta_n: &DualParam,
    ) -> Result<Closure> {
        let (m, n) = (scalar_index(m)?, scalar_index(n)?);
        let (a, b) = (rate_of(theta_m)?, rate_of(theta_n)?);
        let e = a + b - self.params.beta();
        let d = m + n;
        let ln_c = cir::ln_h_prefactor(m, a, &self.params)
            + cir::ln_h_prefactor(n, b, &self.params)
            - cir::ln_h_prefactor(d, e, &self.params);
        Ok(Closure {
            index: MultiIndex::scalar(d),
            param: DualParam::Rate(e),
            ln_c,
        })
    }

    fn ln_h(&self, x: &[f64], m: &MultiIndex, param: &DualParam) -> Result<f64> {
        Ok(cir::ln_h_cir(
            x[0],
            scalar_index(m)?,
            rate_of(param)?,
            &self.params,
        ))
    }

    fn closure_grid(&self) -> Vec<Vec<f64>> {
        (1..=100).map(|i| vec![i as f64 * 0.1]).collect()
    }
}

/// WF signal with categorical observations.
#[derive(Debug)]
pub struct WfModel {
    pub params: WfParams,
    pub event_budget: u64,
    kingman: KingmanDual,
    transitions: Mutex<HashMap<u64, Arc<WfTransitionSampler>>>,
}

impl Clone for WfModel {
    fn clone(&self) -> Self {
        Self {
            params: self.params.clone(),
            event_budget: self.event_budget,
            kingman: self.kingman.clone(),
            transitions: Mutex::new(self.transitions.lock().expect("cache poisoned").clone()),
        }
    }
}

impl WfModel {
    pub fn new(params: WfParams) -> Self {
        Self {
            kingman: KingmanDual::new(params.clone()),
            params,
            event_budget: DEFAULT_EVENT_BUDGET,
            transitions: Mutex::new(HashMap::new()),
        }
    }

    pub fn kingman(&self) -> &KingmanDual {
        &self.kingman
    }

    /// Cached WF transition sampler for horizon `dt`.
    pub fn transition(&self, dt: f64) -> Result<Arc<WfTransitionSampler>> {
        let key = dt.to_bits();
        if let Some(s) = self.transitions.lock().expect("cache poisoned").get(&key) {
            return Ok(Arc::clone(s));
        }
        let s = Arc::new(WfTransitionSampler::new(&self.params, dt)?);
        self.transitions
            .lock()
            .expect("cache poisoned")
            .insert(key, Arc::clone(&s));
        Ok(s)
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.params.dim() {
            return Err(Error::DimensionError {
                expected: self.params.dim(),
                got,
            });
        }
        Ok(())
    }
}

impl DualModel for WfModel {
    fn family(&self) -> Family {
        Family::WfDirichlet {
            alpha: self.params.alpha().to_vec(),
        }
    }

    fn dim(&self) -> usize {
        self.params.dim()
    }

    fn prior_param(&self) -> DualParam {
        DualParam::Trivial
    }

    fn ln_marginal(&self, m: &MultiIndex, _param: &DualParam, y: &ObservationRecord) -> f64 {
        wf::ln_wf_marginal_likelihood(m, y, &self.params).unwrap_or(f64::NAN)
    }

    fn shift_index(&self, m: &MultiIndex, y: &ObservationRecord) -> Result<MultiIndex> {
        wf::wf_update(m, y)
    }

    fn shift_param(&self, _param: &DualParam, _y: &ObservationRecord) -> DualParam {
        DualParam::Trivial
    }

    fn pure_death_row(
        &self,
        m: &MultiIndex,
        _param: &DualParam,
        dt: f64,
    ) -> Result<Vec<(MultiIndex, f64)>> {
        self.check_dim(m.dim())?;
        Ok(self.kingman.row(m, dt))
    }

    fn pure_death_param(&self, _param: &DualParam, _dt: f64) -> DualParam {
        DualParam::Trivial
    }

    fn supports(&self, kind: DualKind) -> bool {
        matches!(
            kind,
            DualKind::PureDeath
                | DualKind::PureDeathGillespie
                | DualKind::Moran
                | DualKind::WfChain
                | DualKind::WfDiffusion
        )
    }

    fn dual_sample(
        &self,
        kind: DualKind,
        m: &MultiIndex,
        _param: &DualParam,
        dt: f64,
        rng: &mut dyn rand::RngCore,
    ) -> Result<MultiIndex> {
        self.check_dim(m.dim())?;
        match kind {
            DualKind::PureDeath => self.kingman.sample(m, dt, rng),
            DualKind::PureDeathGillespie => gillespie_jump_chain(
                &KingmanProcess {
                    params: &self.params,
                },
                m,
                dt,
                self.event_budget,
                rng,
            ),
            DualKind::Moran => gillespie_jump_chain(
                &MoranProcess {
                    params: &self.params,
                },
                m,
                dt,
                self.event_budget,
                rng,
            ),
            DualKind::WfChain => moran_wf_chain_sample(m, dt, &self.params, rng),
            DualKind::WfDiffusion => self.transition(dt)?.sample_binned(m, rng),
            other => Err(Error::UnsupportedModel(format!(
                "dual {} is not defined for WF",
                other.tag()
            ))),
        }
    }

    fn dual_param(&self, _kind: DualKind, _param: &DualParam, _dt: f64) -> DualParam {
        DualParam::Trivial
    }

    fn signal_prior_sample(&self, rng: &mut dyn rand::RngCore) -> Result<Vec<f64>> {
        Ok(dirichlet_sample(self.params.alpha(), rng)?.into_inner())
    }

    fn signal_transition_sample(
        &self,
        x: &[f64],
        dt: f64,
        rng: &mut dyn rand::RngCore,
    ) -> Result<Vec<f64>> {
        Ok(self.transition(dt)?.sample(x, rng)?.into_inner())
    }

    fn ln_emission(&self, x: &[f64], y: &ObservationRecord) -> f64 {
        wf::ln_categorical_emission(x, y)
    }

    fn emission_sample(
        &self,
        x: &[f64],
        batch: u32,
        rng: &mut dyn rand::RngCore,
    ) -> Result<Vec<u32>> {
        wf::multinomial_sample(batch, x, rng)
    }

    fn closure(
        &self,
        m: &MultiIndex,
        _theta_m: &DualParam,
        n: &MultiIndex,
        _theta_n: &DualParam,
    ) -> Result<Closure> {
        let d = m.add(n)?;
        let ln_c = wf::ln_h_prefactor(m, &self.params) + wf::ln_h_prefactor(n, &self.params)
            - wf::ln_h_prefactor(&d, &self.params);
        Ok(Closure {
            index: d,
            param: DualParam::Trivial,
            ln_c,
        })
    }

    fn ln_h(&self, x: &[f64], m: &MultiIndex, _param: &DualParam) -> Result<f64> {
        wf::ln_h_wf(&wf::SimplexPoint::new(x.to_vec())?, m, &self.params)
    }

    fn closure_grid(&self) -> Vec<Vec<f64>> {
        let k = self.params.dim();
        let steps = 9usize;
        let mut out = Vec::new();
        // interior points with the last coordinate absorbing the remainder
        let mut idx = vec![1usize; k - 1];
        loop {
            let used: usize = idx.iter().sum();
            if used < steps + 1 {
                let mut x: Vec<f64> = idx.iter().map(|&i| i as f64 / (steps + 1) as f64).collect();
                x.push((steps + 1 - used) as f64 / (steps + 1) as f64);
                out.push(x);
            }
            let mut pos = 0;
            loop {
                if pos == k - 1 {
                    return out;
                }
                idx[pos] += 1;
                if idx[pos] <= steps {
                    break;
                }
                idx[pos] = 1;
                pos += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cir_closure_example() {
        let model = CirModel::new(CirParams::new(11.0, 1.1, 1.0).unwrap());
        let s = closure_spread(
            &model,
            &MultiIndex::scalar(2),
            &DualParam::Rate(2.1),
            &MultiIndex::scalar(3),
            &DualParam::Rate(3.1),
        )
        .unwrap();
        assert!(s < 1e-9, "spread {s}");
        let c = model
            .closure(
                &MultiIndex::scalar(2),
                &DualParam::Rate(2.1),
                &MultiIndex::scalar(3),
                &DualParam::Rate(3.1),
            )
            .unwrap();
        assert_eq!(c.index, MultiIndex::scalar(5));
        assert!((c.param.rate().unwrap() - 4.1).abs() < 1e-12);
    }

    #[test]
    fn wf_closure_grid_is_interior() {
        let model = WfModel::new(WfParams::new(vec![1.1, 1.1, 1.1]).unwrap());
        let grid = model.closure_grid();
        assert!(!grid.is_empty());
        for x in &grid {
            assert!(x.iter().all(|&c| c > 0.0));
            assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let s = closure_spread(
            &model,
            &MultiIndex::new(vec![2, 0, 1]),
            &DualParam::Trivial,
            &MultiIndex::new(vec![1, 3, 0]),
            &DualParam::Trivial,
        )
        .unwrap();
        assert!(s < 1e-9, "spread {s}");
    }

    #[test]
    fn cir_trivial_terminal_closure() {
        let p = CirParams::new(11.0, 1.1, 1.0).unwrap();
        let model = CirModel::new(p.clone());
        let c = model
            .closure(
                &MultiIndex::scalar(0),
                &DualParam::Rate(p.beta()),
                &MultiIndex::scalar(4),
                &DualParam::Rate(2.1),
            )
            .unwrap();
        assert!(c.ln_c.abs() < 1e-12);
        assert_eq!(c.index, MultiIndex::scalar(4));
    }
}
