//! Numerics for distribution-dependent SDEs driven by two independent
//! fractional Brownian motions: discrete fractional calculus, fBM sampling,
//! empirical-measure algebra, mean-field solvers, backward couplings with
//! Girsanov weights, and Monte Carlo estimators of measure derivatives.

pub mod error;
pub mod frac;
pub mod noise;
pub mod grid;
pub mod measure;
pub mod model;
pub mod quad;
pub mod special;

pub use error::{Error, Result};
pub use frac::{FracOrder, HurstPair};
pub use grid::{GridFunction, TimeGrid};
