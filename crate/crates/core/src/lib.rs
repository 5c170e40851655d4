//! Reversible-electroporation drug delivery in a 2-D square tissue.
//!
//! The pipeline has three stages:
//!
//! 1. [`field`] solves the steady potential with field-dependent
//!    conductivity between parallel electrodes and derives the field
//!    magnitude.
//! 2. [`kinetics`] turns the field into membrane quantities: pore
//!    fraction and a mass-transfer coefficient that decays as pores
//!    reseal between pulses.
//! 3. [`transport`] integrates the coupled extracellular/intracellular
//!    concentrations with the explicit FTCS scheme under a multi-pulse
//!    schedule, point-source injection, and Robin drug-loss boundaries,
//!    keeping a per-step mass ledger.
//!
//! [`oracle`] holds the independent verification machinery (closed-form
//! well-mixed solution, naive reference stepper, coefficient-model
//! comparison), [`sweep`] runs parameter sweeps in parallel, and
//! [`output`] defines the on-disk formats.

pub mod config;
pub mod error;
pub mod field;
pub mod grid;
pub mod kinetics;
pub mod oracle;
pub mod output;
pub mod sweep;
pub mod transport;
pub mod units;

pub use config::{
    load_config, stability_limit, validate, validate_with, LoadedConfig, SimulationConfig,
    ValidateOptions, ValidatedConfig,
};
pub use error::{ConfigError, FieldError, OracleError, SimError, SweepError, TransportError};
pub use field::{solve_field, FieldSolution, DEFAULT_FIELD_TOL, DEFAULT_MAX_PICARD};
pub use grid::{Quantity, ScalarField2D};
pub use output::{RunManifest, RunOutput};
pub use sweep::{run_sweep, SweepAxis, SweepOutcome};
pub use transport::{init_concentration, probe, run_pulses, run_schedule, ConcentrationState};
