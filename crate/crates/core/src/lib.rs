//! Closed-loop design optimization of gate-all-around nanosheet FETs.
//!
//! The pipeline emits structure/device simulation decks for a design point,
//! simulates it (built-in analytic surrogate or an external toolchain),
//! extracts Ion, Ioff, subthreshold swing and on-off ratio, and asks an agent
//! for the next design until the specification targets are met.

pub mod agent;
pub mod backend;
pub mod deckgen;
pub mod numfmt;
pub mod orchestrator;
pub mod params;
pub mod plot;
pub mod postproc;
pub mod surrogate;
