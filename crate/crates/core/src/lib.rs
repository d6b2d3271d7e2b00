//! Exact and approximate filtering of Cox–Ingersoll–Ross and Wright–Fisher
//! signals through finite mixtures of conjugate kernels indexed by a dual
//! process.

pub mod cir;
pub mod error;
pub mod filter;
pub mod harness;
pub mod jump;
pub mod kingman;
pub mod mixture;
pub mod model;
pub mod numeric;
pub mod observation;
pub mod resample;
pub mod wf;
pub mod wf_sampling;

pub use error::{Error, Result};
pub use mixture::{DualMixture, DualParam, Family, Moments, MultiIndex};
pub use model::{CirModel, DualKind, DualModel, WfModel};
pub use observation::ObservationRecord;
pub use resample::Resampling;
