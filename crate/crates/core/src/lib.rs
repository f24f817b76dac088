#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod barrier;
pub mod error;
pub mod fluctuation;
pub mod hermite;
pub mod integrate;
pub mod model;
pub mod ode;
pub mod roots;

pub use barrier::{
    coeffs_c, coeffs_d, decide_regime, find_b_c, find_b_d, first_passage_h, hjb_residual, j_c, j_d,
    vd_prime_zero, BarrierCoeffsC, BarrierCoeffsD, Problem, Regime, RegimeKind, ValueFunctions,
};
pub use error::{Error, Result};
pub use fluctuation::{build_kit, shifted_kit, BasisValues, FluctuationKit, ScaledBasis};
pub use model::{CapKind, ModelParams, RateCap};
pub use ode::{solve, Numerics, OdeSolution, SolutionKind};
