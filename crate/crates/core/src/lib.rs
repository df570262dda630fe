//! PPG-only blood pressure estimation.
//!
//! Raw PPG and arterial pressure records are aligned, resampled to 20 Hz,
//! FFT-filtered and cut into 8 s windows. A 1-D convolution, batch norm,
//! max-pool and two hard-sigmoid LSTM layers regress systolic and diastolic
//! pressure per window. Evaluation uses leave-one-window-out (or block k-fold)
//! cross-validation with an exclusion radius and reports MAE/SDAE, BHS grades
//! and the AAMI criterion.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod exec;
pub mod net;
pub mod signal;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::RunConfig;
pub use error::{Error, Result};
pub use exec::Execution;
