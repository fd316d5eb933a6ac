//! Online model-based testing for input-output labelled transition systems.
//!
//! The crate holds the model ([`iolts`]), its `.aut` serialisation ([`aut`]),
//! a simulated implementation with a TCP front end ([`sim`]), input selection
//! strategies ([`strategy`]), the test loop ([`engine`]), a random model
//! generator ([`generator`]) and the benchmark harness ([`bench`]).

pub mod aut;
pub mod bench;
pub mod engine;
pub mod generator;
pub mod iolts;
pub mod scc;
pub mod sim;
pub mod strategy;

pub use aut::{parse_aut, write_aut};
pub use engine::{run, EngineConfig, RunReport, Verdict};
pub use iolts::{ActionKind, ActionLabel, Iolts, LabelId, StateId, StateSet};
pub use strategy::StrategyKind;
