//! Calibration of the cost model, size sweeps and table output.

mod calibrate;
mod emit;
mod sweep;

pub use calibrate::{calibrate, CalibrationError, CalibrationTargets, FixedParams};
pub use emit::{emit, OutputFormat, CSV_HEADER};
pub use sweep::{benchmark_operands, run_sweep, SweepResult, SweepRow, DEFAULT_SEED, DEFAULT_SIZES};
