pub mod error;
pub mod export;
pub mod irf;
pub mod linalg;
pub mod panel;
pub mod pc;
pub mod rank_scaling;
pub mod sim;
pub mod simplex;
pub mod sparse_precision;
pub mod svar;
pub mod tuning;

pub use error::{Error, Result};
