//! Numerical laboratory for the initial value problem for geodesics in the
//! space of torus-invariant Kähler metrics.
//!
//! The geodesic with Cauchy data `(u0, u̇0)` on a Delzant polytope `P` is the
//! Legendre transform potential `ψ(s, x) = (u0 + s·u̇0)*(x)`, which solves the
//! homogeneous real Monge-Ampère equation for as long as `u0 + s·u̇0` stays
//! convex. This crate evaluates `ψ`, its convex lifespan and singular locus,
//! the level-`N` Toeplitz-quantized potentials `φ_N` and `φ̃_N`, and the
//! Alexandrov Monge-Ampère measure of piecewise-linear approximations of `ψ`.
//!
//! All numerical code is generic over a [`Real`] scalar (`f32` or `f64`).
//! Polytope data is integral and vertices are exact rationals.

// NaN must fail the validity checks written as `!(a > b)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convex;
pub mod error;
pub mod field;
pub mod geodesic;
pub mod ma_measure;
pub mod numerics;
pub mod polytope;
pub mod quantize;

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

pub use convex::{
    convex_lifespan, dual_gradient_check, kahler_potential, legendre_on_polytope, legendre_search,
    min_hessian_eigenvalue, ConjugateField, LegendreOptions, LegendreSearch, Lifespan, LifespanGrid, MaximizerSet,
};
pub use error::{Error, Result};
pub use field::{PathField, Polynomial, PotentialField, ScalarField};
pub use geodesic::{velocity_from_kahler_data, GeodesicRay, ProblemData, RayOptions};
pub use ma_measure::{alexandrov_measure, mass_split, pl_convexify, MADecomposition, PLConvexFunction};
pub use numerics::linalg::Matrix;
pub use numerics::quadrature::{integrate_on_polytope, QuadratureResult};
pub use polytope::{DelzantPolytope, LatticeSet};
pub use quantize::{RateFit, SpectralLevel};

/// Floating-point scalar used throughout the crate.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + fmt::Debug
    + fmt::Display
    + fmt::LowerExp
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_int(x: i64) -> Self {
        Self::from_i64(x).expect("integer representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type ProblemF64 = ProblemData<f64>;
pub type ProblemF32 = ProblemData<f32>;
pub type PotentialF64 = PotentialField<f64>;
pub type PolynomialF64 = Polynomial<f64>;
pub type SpectralLevelF64 = SpectralLevel<f64>;
pub type MaximizerSetF64 = MaximizerSet<f64>;
pub type PLConvexF64 = PLConvexFunction<f64>;
pub type MADecompositionF64 = MADecomposition<f64>;
pub type MatrixF64 = Matrix<f64>;
pub type GeodesicRayF64<'a> = GeodesicRay<'a, f64>;
