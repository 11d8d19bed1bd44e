//! Minimax-fair classification without demographic data.
//!
//! The crate trains a 0-1 loss minimax risk classifier (MRC) whose
//! uncertainty set is defined through a random Fourier feature map, tunes
//! the map's frequency scale and the set's confidence band on validation
//! data without touching sensitive attributes, and certifies the frozen rule
//! with LP-computed lower/upper bounds on group-conditional and overall
//! error together with the distributions attaining them.
//!
//! Module map:
//!
//! - [`dataset`]: loading, toy generation, standardization and splits.
//! - [`spectral`]: the random Fourier (and polynomial) feature maps.
//! - [`mrc`]: uncertainty sets, training and prediction.
//! - [`lp`]: dense revised simplex and nonsmooth (bundle / subgradient) solvers.
//! - [`tuner`]: two-stage σ / λ₀ search with blind selection strategies.
//! - [`guarantees`]: group and overall error bounds, extremal distributions.
//! - [`metrics`]: accuracy and group fairness metrics.

pub mod dataset;
pub mod error;
pub mod guarantees;
pub mod lp;
pub mod metrics;
pub mod mrc;
pub mod spectral;
pub mod tuner;

pub use dataset::{CsvOptions, Dataset, SplitSpec, SplitSets, Standardization};
pub use error::{Error, Result};
pub use guarantees::{AuditSet, BoundConfig, GroupBound, Side, TauSource};
pub use lp::{LinearProgram, LpSolution, LpStatus, SolverConfig};
pub use metrics::GroupedPredictions;
pub use mrc::{MrcModel, UncertaintySet};
pub use spectral::{MapDescriptor, SpectralMap};
pub use tuner::{Strategy, TuneConfig, TuneResult};

