pub mod codec;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod preprocess;
pub mod recurrent;
pub mod runner;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
