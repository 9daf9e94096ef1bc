//! Verification harness: manufactured solutions, space-time error norms,
//! order-of-convergence tables, projection rate measurements, the
//! positivity/boundedness monitor, the interface trace-inequality sweep and
//! the error-bound constant estimate.

pub mod bounds;
pub mod eoc;
pub mod errors;
pub mod interp;
pub mod kconst;
pub mod mms;
pub mod trace;

pub use bounds::BoundsMonitor;
pub use eoc::{run_eoc, DtRule, EocConfig, EocOutcome, EocTable, ErrorColumn};
pub use errors::{ErrorAccumulator, SpaceTimeErrors};
pub use interp::{interpolation_rate_test, InterpReport};
pub use kconst::{estimate_k, exact_space_time_norms, ExactNorms};
pub use mms::{mms_forcing, ExactSolution, MmsForcing};
pub use trace::{trace_inequality_check, TraceSweep};

#[cfg(test)]
mod tests;
