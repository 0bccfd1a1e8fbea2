//! Functional linear mixed-effects models: penalized basis expansions,
//! REML-based EM estimation, GCV smoothing-parameter selection, inference,
//! FPCA denoising of functional covariates, and a simulation harness.

pub mod basis;
pub mod design;
pub mod em;
pub mod error;
pub mod fpca;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod quadrature;
pub mod registry;
pub mod selection;
pub mod serde_mat;
pub mod sim;

pub use error::{FlmmError, Result};
