//! Simulation and inference for K-group preferential attachment graphs.
//!
//! A graph grows one step at a time. With probability `q` a new node of a
//! random group joins and attaches to an existing node; otherwise an existing
//! node initiates an edge. Targets are chosen by degree, with a bias toward
//! the initiator's own group controlled by `theta` (`theta = 1` is plain
//! preferential attachment, small `theta` is strong homophily).

pub mod changepoint;
pub mod config;
pub mod degree;
pub mod error;
pub mod estimation;
pub mod events;
pub mod graph;
pub mod io;
pub mod model;
pub mod probability;
pub mod selftest;
pub mod simulator;

pub use error::{KpaError, Result};
pub use events::{EventLog, EventRecord};
pub use graph::GraphState;
pub use model::{GroupLabel, MechanisticParams, ModelParams};
