//! Output and verification plumbing: trajectory CSV files, observed convergence orders and
//! self-contained identity checks.

pub mod checks;
mod csv;
mod slopes;

pub use checks::{run_check_suite, CheckOutcome, CheckReport, SUITES};
pub use csv::{csv_header, emit_csv, read_csv, write_csv, CsvRecord};
pub use slopes::{convergence_slopes, PairSlope, SlopeSummary, PLATEAU_SLOPE};
