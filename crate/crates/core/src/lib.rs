//! Deep LSTM surrogates for the cyclic force response of structural braces.
//!
//! The pipeline: [`oracle`] generates a displacement protocol and the force a
//! degrading hysteretic brace produces under it, [`dataset`] splits and
//! windows the pair, [`lstm`] holds the stacked network with exact BPTT
//! gradients, [`training`] fits it with Adam, and [`sweep`] runs the
//! seven-model hyperparameter grid.

pub mod dataset;
pub mod error;
pub mod lstm;
pub mod model;
pub mod oracle;
pub mod par;
pub mod series;
pub mod sweep;
pub mod training;

pub use error::{Error, Result};
pub use series::{BraceRecord, Series, Unit};
