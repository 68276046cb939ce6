//! Conversational bandits over a unified key-term/item action space.
//!
//! A [`catalog::Catalog`] links items to key-terms. Each round a policy
//! either recommends an item or asks about a key-term, and both kinds of
//! action earn reward and incur regret. The crate provides the Hier-UCB and
//! Hier-LinUCB policies, UCB/LinUCB baselines, a fixed-schedule
//! conversational baseline, synthetic and file-backed environments, and a
//! seeded batch harness producing regret curves with confidence intervals.

pub mod catalog;
pub mod cli;
pub mod config;
pub mod environments;
pub mod error;
pub mod harness;
pub mod keyterm;
pub mod linear;
pub mod policies;

pub use catalog::{Catalog, ItemId, KeyTermId};
pub use environments::{Action, Environment};
pub use error::{Error, Result};
