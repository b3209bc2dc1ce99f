//! Mixed-frequency forecasting: frequency and sampling alignment, MIDAS and
//! U-MIDAS regressions, an LSTM trained by backpropagation through time, and
//! rolling-origin evaluation tools.

pub mod alignment;
pub mod cli;
pub mod error;
pub mod empirical;
pub mod evaluation;
pub mod forecast;
pub mod io;
pub mod linalg;
pub mod lstm;
pub mod midas;
pub mod rng;
pub mod selection;
pub mod series;
pub mod simulation;

pub use error::{Error, Result};
pub use rng::RandomSeed;
pub use series::{MixedFrequencyDataset, Series};
