//! Complete Bernstein functions generated by a weight `α: [0,1] → [0,1]`,
//!
//! ```text
//! φ^(α)(λ) = exp ∫_0^1 (λ−1)/(1+(λ−1)x) α(x) dx,   λ > 0.
//! ```
//!
//! Weights are piecewise constant ([`weights::StepWeight`]), which makes every
//! representation exact: the integral, the product over segments (valid on the
//! upper half-plane), and the `(γ, η)` Stieltjes-type form. On top of that the
//! crate verifies the structural properties numerically ([`analysis`]),
//! extracts the Lévy–Khintchine triple ([`levy`]) and simulates the
//! corresponding subordinator ([`sim`]).

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod error;
pub mod evaluator;
pub mod levy;
pub mod quad;
pub mod sim;
pub mod weights;

pub use error::{Error, Result};
pub use evaluator::{eval_eta, eval_integral, eval_product, gamma_of, normalize, CbfValue, NormalizedCbf};
pub use levy::{killing_and_drift, levy_density, LevyTriple};
pub use weights::{EtaRepresentation, EtaWeight, IntervalWeight, StepWeight};
