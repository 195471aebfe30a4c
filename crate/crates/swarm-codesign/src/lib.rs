//! Morphology/behavior co-design for heterogeneous search-and-rescue swarms.
//!
//! The toolkit runs a four-stage pipeline:
//!
//! 1. **Talent Pareto construction** — NSGA-II over the UAV design space,
//!    maximizing the three talent metrics (search speed, cruising speed,
//!    flight range) subject to sizing feasibility ([`morphology`], [`pareto`],
//!    [`nsga2`]).
//! 2. **Talent surface fitting** — a polynomial surrogate of the Pareto front
//!    plus 5th/95th-percentile quantile envelopes, giving a decoder from raw
//!    `[0,1]` policy outputs onto the front ([`surface`]).
//! 3. **Talent-infused behavior learning** — PPO training of a graph
//!    attention policy on the mission simulator, with the talent triple
//!    sampled once per episode from a constant-output head and held fixed
//!    ([`sim`], [`policy`], [`trainer`]).
//! 4. **Morphology finalization** — mixed-discrete particle swarm search for
//!    the concrete design whose talents best match the learned optimum
//!    ([`finalize`]).
//!
//! Each stage is a library call; `src/bin/swarm-codesign.rs` wraps them in a
//! thin CLI and the `examples/` directory holds one runnable example per
//! capability.

pub mod error;
pub mod eval;
pub mod finalize;
pub mod nn;
pub mod morphology;
pub mod nsga2;
pub mod pareto;
pub mod pipeline;
pub mod policy;
pub mod polyfit;
pub mod sim;
pub mod surface;
pub mod trainer;

pub use error::{Error, Result};
