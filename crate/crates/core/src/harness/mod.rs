//! Experiment orchestration: scenario presets, dataset simulation and
//! deterministic, parallel scenario runs with CSV/JSON output.

mod dataset;
mod run;

pub use dataset::{simulate_dataset, write_dataset_csv, Dataset};
pub use run::{
    run_scenario, summarize, write_results, write_summary, CellRecord, Manifest, ResultRow,
    RunReport, SummaryRow, CSV_HEADER, SUMMARY_HEADER,
};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cir::CirParams;
use crate::error::{Error, Result};
use crate::filter::Method;
use crate::model::DualKind;
use crate::wf::WfParams;

/// Upper bound on particle counts and other Monte-Carlo inner loops.
pub const DEFAULT_MC_CAP: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    CirPredictive,
    CirFiltering,
    WfPredictive,
    WfFiltering,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::CirPredictive,
        Scenario::CirFiltering,
        Scenario::WfPredictive,
        Scenario::WfFiltering,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Scenario::CirPredictive => "cir_predictive",
            Scenario::CirFiltering => "cir_filtering",
            Scenario::WfPredictive => "wf_predictive",
            Scenario::WfFiltering => "wf_filtering",
        }
    }

    fn id(&self) -> u64 {
        match self {
            Scenario::CirPredictive => 1,
            Scenario::CirFiltering => 2,
            Scenario::WfPredictive => 3,
            Scenario::WfFiltering => 4,
        }
    }

    pub fn is_predictive(&self) -> bool {
        matches!(self, Scenario::CirPredictive | Scenario::WfPredictive)
    }

    pub fn is_cir(&self) -> bool {
        matches!(self, Scenario::CirPredictive | Scenario::CirFiltering)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.tag() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown scenario `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Cir(CirParams),
    Wf(WfParams),
}

/// Method names as they appear in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodSpec {
    Exact,
    Pruned,
    Pd,
    PdGillespie,
    Bd,
    BdGillespie,
    Moran,
    WfChain,
    WfDiffusion,
    Bootstrap,
}

impl MethodSpec {
    pub fn is_particle(&self) -> bool {
        !matches!(self, MethodSpec::Exact | MethodSpec::Pruned)
    }

    /// Concrete method at particle count `n` (ignored for deterministic
    /// methods).
    pub fn method(&self, n: usize, prune_eps: f64) -> Method {
        let dual = |dual| Method::DualParticle { n, dual };
        match self {
            MethodSpec::Exact => Method::Exact,
            MethodSpec::Pruned => Method::Pruned { eps: prune_eps },
            MethodSpec::Pd => dual(DualKind::PureDeath),
            MethodSpec::PdGillespie => dual(DualKind::PureDeathGillespie),
            MethodSpec::Bd => dual(DualKind::BirthDeath),
            MethodSpec::BdGillespie => dual(DualKind::BirthDeathGillespie),
            MethodSpec::Moran => dual(DualKind::Moran),
            MethodSpec::WfChain => dual(DualKind::WfChain),
            MethodSpec::WfDiffusion => dual(DualKind::WfDiffusion),
            MethodSpec::Bootstrap => Method::Bootstrap { n },
        }
    }
}

/// Declarative description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub model: ModelSpec,
    /// Observation times (filtering scenarios).
    #[serde(default)]
    pub n_times: usize,
    /// Time between observations (filtering scenarios).
    #[serde(default)]
    pub spacing: f64,
    /// Emissions per observation time (filtering scenarios).
    #[serde(default)]
    pub batch_size: u32,
    /// Prediction horizon (predictive scenarios).
    #[serde(default)]
    pub horizon: f64,
    /// Last observed batch the prediction starts from (predictive scenarios).
    #[serde(default)]
    pub start_counts: Vec<u32>,
    pub methods: Vec<MethodSpec>,
    pub particles: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default = "default_prune_eps")]
    pub prune_eps: f64,
    #[serde(default = "default_mc_cap")]
    pub mc_cap: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_prune_eps() -> f64 {
    1e-10
}

fn default_mc_cap() -> usize {
    DEFAULT_MC_CAP
}

fn reference_cir() -> ModelSpec {
    ModelSpec::Cir(CirParams::new(11.0, 1.1, 1.0).expect("valid preset"))
}

impl ExperimentSpec {
    /// Desk-scale preset, or the full-scale one when `full` is set.
    pub fn preset(scenario: Scenario, full: bool) -> Self {
        let base =
            |model, methods: Vec<MethodSpec>, particles: Vec<usize>, replicates| ExperimentSpec {
                scenario,
                model,
                n_times: 0,
                spacing: 0.0,
                batch_size: 0,
                horizon: 0.0,
                start_counts: Vec::new(),
                methods,
                particles,
                replicates,
                seed: 1,
                prune_eps: default_prune_eps(),
                mc_cap: default_mc_cap(),
                out_dir: None,
            };
        use MethodSpec::*;
        match scenario {
            Scenario::CirPredictive => ExperimentSpec {
                horizon: 0.05,
                start_counts: vec![4],
                ..base(
                    reference_cir(),
                    vec![Exact, Pd, Bd, Bootstrap],
                    vec![50, 100, 500, 1000, 1500],
                    if full { 50 } else { 20 },
                )
            },
            Scenario::CirFiltering => ExperimentSpec {
                n_times: if full { 200 } else { 50 },
                spacing: 0.1,
                batch_size: 1,
                ..base(
                    reference_cir(),
                    vec![Pd, Bd, Bootstrap],
                    if full {
                        vec![50, 100, 500, 1000, 1500]
                    } else {
                        vec![50, 100, 500, 1000]
                    },
                    if full { 50 } else { 20 },
                )
            },
            Scenario::WfPredictive => ExperimentSpec {
                horizon: 0.1,
                start_counts: vec![4, 0, 9, 2],
                ..base(
                    ModelSpec::Wf(WfParams::new(vec![3.0; 4]).expect("valid preset")),
                    vec![Exact, PdGillespie, Moran, WfChain, WfDiffusion, Bootstrap],
                    vec![50, 100, 500, 1000, 1500],
                    if full { 50 } else { 20 },
                )
            },
            Scenario::WfFiltering => ExperimentSpec {
                n_times: 10,
                spacing: 1.0,
                batch_size: 20,
                ..base(
                    ModelSpec::Wf(WfParams::new(vec![1.1; 3]).expect("valid preset")),
                    vec![Pd, Moran, WfChain, WfDiffusion, Bootstrap],
                    if full {
                        vec![50, 100, 500, 1000]
                    } else {
                        vec![50, 100, 500]
                    },
                    if full { 100 } else { 20 },
                )
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        match (&self.model, self.scenario.is_cir()) {
            (ModelSpec::Cir(p), true) => p.validate()?,
            (ModelSpec::Wf(_), false) => {}
            _ => {
                return bad(format!(
                    "model kind does not match scenario {}",
                    self.scenario
                ))
            }
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be positive".into());
        }
        if self.methods.iter().any(MethodSpec::is_particle) && self.particles.is_empty() {
            return bad("particle methods need at least one particle count".into());
        }
        if let Some(&n) = self.particles.iter().find(|&&n| n == 0 || n > self.mc_cap) {
            return bad(format!("particle count {n} outside 1..={}", self.mc_cap));
        }
        if !(0.0..1.0).contains(&self.prune_eps) {
            return bad(format!("prune_eps {} outside [0, 1)", self.prune_eps));
        }
        let dim = match &self.model {
            ModelSpec::Cir(_) => 1,
            ModelSpec::Wf(p) => p.dim(),
        };
        if self.scenario.is_predictive() {
            if !(self.horizon > 0.0 && self.horizon.is_finite()) {
                return bad(format!("horizon {} must be positive", self.horizon));
            }
            if self.scenario.is_cir() && self.start_counts.is_empty() {
                return bad("start_counts must hold at least one count".into());
            }
            if !self.scenario.is_cir() && self.start_counts.len() != dim {
                return bad(format!("start_counts must have length {dim}"));
            }
        } else {
            if !(self.spacing > 0.0 && self.spacing.is_finite()) {
                return bad(format!("spacing {} must be positive", self.spacing));
            }
            if self.batch_size == 0 {
                return bad("batch_size must be positive".into());
            }
        }
        let model_supports = |m: &MethodSpec| match (m, self.scenario.is_cir()) {
            (MethodSpec::Bd | MethodSpec::BdGillespie, cir) => cir,
            (
                MethodSpec::PdGillespie
                | MethodSpec::Moran
                | MethodSpec::WfChain
                | MethodSpec::WfDiffusion,
                cir,
            ) => !cir,
            _ => true,
        };
        if let Some(m) = self.methods.iter().find(|m| !model_supports(m)) {
            return bad(format!(
                "method {m:?} is not available for {}",
                self.scenario
            ));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream seed for replicate `replicate` of cell `cell` in `scenario`.
pub fn derive_seed(seed: u64, scenario: Scenario, cell: u64, replicate: u64) -> u64 {
    mix(mix(mix(mix(seed) ^ scenario.id()) ^ cell) ^ replicate)
}

/// Cell index reserved for dataset simulation streams.
pub const DATA_CELL: u64 = u64::MAX;
