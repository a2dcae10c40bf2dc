//! Conditional quantum mutual information, non-Markovianity of formation
//! and c-squashed entanglement for tripartite quantum states, with a
//! simulator for the party-restricted operation classes and their
//! communication-cost ledgers.

#![forbid(unsafe_code)]

pub mod channel;
pub mod csquashed;
pub mod entropy;
pub mod error;
pub mod fuzz;
pub mod io;
pub mod linalg;
pub mod markov;
pub mod nmf;
pub mod sample;
pub mod scenario;
pub mod state;
pub mod zoo;

pub use channel::{apply_channel, ChannelMap};
pub use error::{Error, Result};
pub use state::{DensityState, Party, PureState, Register, RegisterLayout};
