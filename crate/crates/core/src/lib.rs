//! Pricing extreme-event weather derivatives.
//!
//! Marginal block maxima follow a GEV law ([`gev`]); joint extremes across
//! stations follow a Schlather max-stable process ([`spatial`]) whose
//! dependence parameters are fitted by pairwise composite likelihood
//! ([`cle`]). Simulated joint events feed the contract payoffs, moments,
//! covariances and covariance-share risk loads in [`pricing`].
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the usual `f64` instantiation.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cle;
pub mod cli;
pub mod data;
pub mod error;
pub mod gev;
pub mod linalg;
pub mod optim;
pub mod pricing;
pub mod rng;
pub mod scalar;
pub mod spatial;
pub mod special;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Gev = gev::GevParams<f64>;
pub type FittedGev = gev::FittedGev<f64>;
pub type Correlation = spatial::CorrelationModel<f64>;
pub type Sites = spatial::SiteSet<f64>;
pub type Events = spatial::EventMatrix<f64>;
pub type Payoff = pricing::PayoffSpec<f64>;
pub type MaxStableFit = cle::CompositeFit<f64>;
pub type Portfolio = pricing::PortfolioReport<f64>;
