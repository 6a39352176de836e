//! Experiment harness for [`pcbb_core`]: TOML scenario files, seed sweeps
//! over the three protocols, CSV and gnuplot outputs, and comparison of
//! sweep summaries.
//!
//! ```no_run
//! use pcbb::config::{load_file, Overrides};
//! use pcbb::experiment::run_experiment;
//!
//! let exp = load_file("configs/highway.cfg".as_ref(), &Overrides::default())?;
//! let report = run_experiment(&exp, &Default::default())?;
//! println!("{} runs, scenario {}", report.runs.len(), report.scenario_hash);
//! # Ok::<(), pcbb::Error>(())
//! ```

pub mod compare;
pub mod config;
mod error;
pub mod experiment;
pub mod inspect;
pub mod output;

pub use error::Error;
