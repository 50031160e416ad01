use thiserror::Error;

use crate::coin::NodeId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CoinError {
    #[error("malformed coin id: expected 32 bytes, got {0}")]
    MalformedCoinId(usize),
    #[error("malformed {0}")]
    MalformedField(&'static str),
    #[error("node {sender} does not own the coin (owner is {owner})")]
    NotOwner { sender: NodeId, owner: NodeId },
    #[error("key of node {key} cannot sign for sender {sender}")]
    KeyMismatch { sender: NodeId, key: NodeId },
    #[error("unsupported coin encoding version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated coin encoding")]
    Truncated,
    #[error("trailing bytes after coin encoding")]
    TrailingBytes,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("clerk refused query: coin chain does not verify")]
    InvalidChain,
    #[error("node {0} is outside the population")]
    UnknownNode(NodeId),
    #[error(transparent)]
    Coin(#[from] CoinError),
}

/// Parameter combinations a construction or bound cannot satisfy.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum InfeasibleError {
    #[error("need at least two supernodes of size f+1: n={n}, f={f}")]
    TooFewSupernodes { n: usize, f: usize },
    #[error("set size {size} exceeds pool of {pool}")]
    SetTooLarge { size: usize, pool: usize },
    #[error("invalid parameters: {0}")]
    Parameters(String),
    #[error("hash iteration cycled after {distinct} distinct clerks, wanted {wanted}")]
    HashCycle { distinct: usize, wanted: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdversaryError {
    #[error("invalid population parameters: {0}")]
    Parameters(String),
    #[error("adaptive corruption budget exhausted")]
    BudgetExceeded,
    #[error("need {needed} honest receivers, only {available} available")]
    NotEnoughReceivers { needed: usize, available: usize },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Infeasible(#[from] InfeasibleError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error("instance too large to enumerate: {0} set tuples")]
    TooLarge(f64),
    #[error("exact probability only available for {0}")]
    Unsupported(&'static str),
}
