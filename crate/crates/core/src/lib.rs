//! Networks of neurons that spike as state-dependent Poisson processes:
//! exact and discretized finite-network simulation, the mean-field
//! (McKean-Vlasov) limit, and the stationary-state analysis of that limit.

pub mod approx_sim;
pub mod constant_rate;
pub mod error;
pub mod exact_sim;
pub mod experiments;
pub mod mckean_vlasov;
pub mod model;
pub mod quad;
pub mod rng;
pub mod stationary;
pub mod stats;

pub use error::{Error, Result};
pub use model::{ExtendedReal, InitialCondition, NetworkConfig, RateFunction, Scaling, WeightDistribution};
pub use rng::RngStream;
