//! Byzantine-resilient peer sampling with trusted-node extensions.
//!
//! The crate has two halves. The protocol half is a set of small, pure state
//! machines: min-wise [`sampler`]s, the per-node [`brahms`] round logic and the
//! [`trusted`] extensions (mutual authentication, half-view swaps and
//! eviction of untrusted pull answers). The simulation half drives those
//! state machines in synchronous rounds ([`engine`]) against a global
//! [`adversary`], measures the outcome ([`metrics`]) and runs parameter
//! sweeps from a flat config file ([`config`], [`sweep`]).
//!
//! ```
//! use brahms_tee::{engine::{run_experiment, RunConfig}, metrics};
//!
//! let cfg = RunConfig { n: 200, l1: 20, rounds: 30, f: 0.1, t: 0.05, ..RunConfig::default() };
//! let outcome = run_experiment(&cfg).unwrap();
//! assert_eq!(outcome.rows.len(), 31);
//! assert!(metrics::discovery_time(&outcome.rows, 0.75).is_some());
//! ```

pub mod adversary;
pub mod brahms;
pub mod config;
pub mod engine;
pub mod error;
pub mod id;
pub mod metrics;
pub mod rng;
pub mod sampler;
pub mod sweep;
pub mod trusted;

pub use error::{Error, Result};
pub use id::{NodeClass, NodeId};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/sampling.md")]
    pub struct Sampling;
    #[doc = include_str!("../../../book/src/rounds.md")]
    pub struct Rounds;
    #[doc = include_str!("../../../book/src/trusted.md")]
    pub struct Trusted;
    #[doc = include_str!("../../../book/src/adversary.md")]
    pub struct Adversary;
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub struct Experiments;
}
