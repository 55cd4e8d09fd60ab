//! Configuration, scenario runners and output for `conical-ctl`.

// Range checks are written `!(x > 0.0)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod output;
pub mod scenario;

pub use config::{Fidelity, Observe, Scenario, ScenarioConfig};
pub use error::{CtlError, Result, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_PARTIAL};
pub use output::{Diagnostics, Outcome, Table};
