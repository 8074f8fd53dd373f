pub mod boundary;
pub mod checkpoint;
pub mod dataio;
pub mod dfc;
pub mod efc;
pub mod error;
pub mod eval;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
pub use training::{TrainConfig, TrainTrace};
