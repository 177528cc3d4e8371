//! Simulation of a two-user NOMA colour-shift-keying visible-light link, with
//! baseline power-allocation rules, a soft actor-critic allocator, illumination
//! metrics and a seeded experiment harness.

pub mod channel;
pub mod config;
pub mod error;
pub mod harness;
pub mod illumination;
pub mod link;
pub mod policy;
pub mod rng;
pub mod sac;
pub mod spectral;

pub use error::{Error, Result};
