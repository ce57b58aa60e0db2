//! Small dense linear-algebra support: flat-slice kernels for SDE hot
//! loops and a deterministic general eigendecomposition.

pub mod evd;
pub mod small;

pub use evd::RealEvd;
