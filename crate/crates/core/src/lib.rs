//! Single-qubit dynamical decoupling simulator.
//!
//! The crate builds pulse timelines for the common decoupling families (CPMG,
//! UDD, XY-n, CDD, KDD), maps each nominal pulse to an imperfect SU(2)
//! propagator, samples classical dephasing fields, and reduces Monte-Carlo
//! ensembles into Pauli transfer maps and chi matrices.
//!
//! Module layout:
//! - [`su2`]: 2x2 operator algebra and generator extraction
//! - [`timeline`] / [`sequences`]: timeline representation and builders
//! - [`pulse_errors`]: flip-angle / offset error model and finite-pulse schedules
//! - [`noise`]: reproducible dephasing trajectories
//! - [`engine`], [`process`], [`trace`]: evolution, process tomography, traces
//! - [`scenario`]: presets and CSV/JSON output used by the `ddsim` binary

pub mod engine;
pub mod error;
pub mod noise;
pub mod process;
pub mod pulse_errors;
pub mod scenario;
pub mod sequences;
pub mod su2;
pub mod timeline;
pub mod trace;

pub use error::{DdError, Result};
