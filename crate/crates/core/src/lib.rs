//! Double-spending detection for a bank without a central ledger.
//!
//! Coins are chains of signed transfers. Every receive is checked against a
//! set of clerk nodes, each of which stores the chains it has seen and
//! reports any that conflict with the new one. The crate provides the coin
//! model, the clerk protocol, three strategies for choosing clerk sets,
//! a model of the dishonest population, closed-form size bounds and a seeded
//! Monte Carlo harness that measures how often an attack goes unnoticed.

pub mod acceptance;
pub mod adversary;
pub mod bounds;
pub mod coin;
pub mod error;
pub mod protocol;
pub mod sim;
pub mod stats;
pub mod strategies;
