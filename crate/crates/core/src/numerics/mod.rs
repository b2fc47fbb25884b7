//! Shared numerical kernels.

pub mod fd;
pub mod linalg;
pub mod lse;
pub mod quadrature;

pub use fd::{fd_gradient, fd_hessian};
pub use lse::{log_sum_exp, log_sum_exp_unweighted, NeumaierSum};
pub use quadrature::{integrate_on_polytope, PolytopeQuadrature, QuadratureOptions, QuadratureResult};
