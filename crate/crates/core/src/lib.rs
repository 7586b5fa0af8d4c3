//! Behavioral simulation of non-ideal memristive crossbars, a circuit-level
//! reference solver, and technology-aware training of fully connected
//! sigmoid networks.
//!
//! All conductances and resistances are normalized: the most conductive
//! device has `G_high = 1`, so its resistance is `R_low = 1` and
//! `R_high = 15`. Technology presets convert ohms into these units.

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod experiments;
pub mod oracle;
pub mod tech;
pub mod train;
pub mod xbar;

pub use error::{Error, Result};
pub use oracle::{nrmsd, CircuitOracle};
pub use tech::{Discretization, NonIdealityConfig, SplitConductance, TechnologyProfile};
pub use train::{Mode, Network, TrainConfig};
pub use xbar::{EffectiveCrossbar, TileGrid};
