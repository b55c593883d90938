//! File formats, Monte Carlo harness and command-line front end for
//! [`quadfun_core`].

pub mod calibrate;
pub mod error;
pub mod harness;
pub mod io;
pub mod rules;

pub use error::{HarnessError, Result};
pub use harness::{run_trials, summarize, ExperimentConfig, Summary, Task, TrialRecord};
