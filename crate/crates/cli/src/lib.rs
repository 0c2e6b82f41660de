//! Scenario runner: wires the federates to the RTI, runs them and writes
//! the resulting metrics.

pub mod cli;
pub mod output;
pub mod run;

pub use run::{run_tau_sweep, simulate, RunError, RunOptions, RunOutcome, SweepRow, TransportKind};
