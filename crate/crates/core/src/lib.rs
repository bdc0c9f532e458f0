//! Simulation and exact analysis of size-counting protocols in one-hop
//! beeping networks.
//!
//! A beeping network is a set of anonymous nodes that, in every synchronous
//! slot, either beep or listen. Four model variants differ in whether
//! beepers (`B_cd`) and listeners (`L_cd`) can tell one beep from several.
//! This crate provides:
//!
//! * [`model`]: the variants, slot resolution, and what each node observes.
//! * [`protocol`]: the counting protocol for every variant, one phase at a time.
//! * [`emulation`]: sender-side collision detection emulated with plain beeps.
//! * [`sim`]: the seeded, deterministic run driver.
//! * [`oracle`]: closed-form phase probabilities and an exact Markov-chain
//!   solver for the expected number of phases.
//! * [`harness`]: batch execution, statistics, regression, and CSV output.

pub mod emulation;
pub mod error;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod protocol;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use model::{ModelVariant, Observation, SlotAction};
pub use protocol::Protocol;
pub use sim::{run_protocol, RunConfig, RunResult};
