//! Run commands, configuration parsing, the invariant self-test and
//! learning-curve plots behind the `bilevel` command.

pub mod commands;
pub mod config;
pub mod plot;
pub mod selftest;

pub use commands::{ablate, ablation_series, mean_final, train};
pub use config::{parse_config, parse_config_text};
pub use plot::{ema, emit_plot, PlotSpec, Series};
pub use selftest::{selftest, CheckResult, Fault, SelftestReport};
