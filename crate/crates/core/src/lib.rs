//! Question-driven view refinement and gated memory for embodied question
//! answering, with a seeded grid-world simulator to run it in.
//!
//! The pipeline at every waypoint: score the current view against the
//! question ([`relevance`]), look around in place if the score is ambiguous
//! ([`refine`]), and write the best view to memory only if it is relevant
//! and valid ([`memory`]). [`explore`] drives an agent through a [`world`],
//! and [`harness`] runs ablation suites over many episodes.

pub mod config;
pub mod explore;
pub mod harness;
pub mod memory;
pub mod refine;
pub mod relevance;
pub mod rng;
pub mod world;

pub use config::{load_config, RunConfig};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/relevance.md")]
    mod relevance {}
    #[doc = include_str!("../../../book/src/refinement.md")]
    mod refinement {}
    #[doc = include_str!("../../../book/src/memory.md")]
    mod memory {}
    #[doc = include_str!("../../../book/src/simulator.md")]
    mod simulator {}
    #[doc = include_str!("../../../book/src/exploration.md")]
    mod exploration {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
