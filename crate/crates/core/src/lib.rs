//! Dimension reduction of panels of continuous-time categorical trajectories.
//!
//! Each state is encoded as a 0-1 indicator function of time and the resulting
//! vector of step functions is analysed by a weighted multivariate functional
//! principal component analysis. Because sample paths are piecewise constant,
//! every integral is computed exactly on the union of their breakpoints.
//!
//! The pipeline is
//! [`ingestion`] → [`estimation`] → [`mfpca`] → [`export`], with
//! [`simulation`] providing synthetic panels and brute-force oracles and
//! [`diagnostics`] measuring how closely a fit meets its identities.

pub mod diagnostics;
pub mod error;
pub mod estimation;
pub mod export;
pub mod ingestion;
pub mod mfpca;
pub mod simulation;
pub mod trajectory;

pub use error::{Error, Result};
pub use estimation::{
    compute_weights, estimate_field, CellPanel, GridPolicy, ProbabilityField, SchemeTag,
    WeightScheme,
};
pub use ingestion::{apply_protocol_normalization, parse_events, Panel, PanelItem};
pub use mfpca::{fit, MfpcaConfig, MfpcaResult, Retention, Solver};
pub use trajectory::{
    CategoricalTrajectory, CellGrid, IndicatorVectorTrajectory, Mode, StateSet, StateSpace,
};
