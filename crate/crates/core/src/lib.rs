pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod matrix;
pub mod mmd;
pub mod model;
pub mod nn;
pub mod textconf;
pub mod train;

pub use error::{Result, TradeError};
pub use matrix::Matrix;
