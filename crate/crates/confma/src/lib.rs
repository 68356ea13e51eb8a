pub mod linalg;
pub mod residual_models;
pub mod types;
pub mod weights;
pub use types::*;
