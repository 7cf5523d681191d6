//! Sealed-bid knapsack auction without auctioneers.
//!
//! A seller and `n` bidders agree on a selling price with no trusted third
//! party. The seller binds each listed price to a super-increasing secret
//! code; every bidder fetches exactly the (randomizer-masked) code for his
//! chosen price through 1-out-of-k oblivious transfer, the bidders jointly
//! sum the masked codes through additive secret sharing, and the seller
//! decodes the aggregate as an easy knapsack instance to learn *which*
//! prices were chosen without learning who chose what. Discrete-log
//! commitments and an equality-of-exponents proof catch tampering by either
//! side.
//!
//! The crate ships the cryptographic building blocks ([`group`], [`knapsack`],
//! [`ot`], [`sharing`], [`zkp`]), the seller/bidder state machines
//! ([`protocol`]) and a deterministic in-process simulator with scripted
//! adversaries and replayable transcripts ([`harness`]).

pub mod group;
pub mod harness;
pub mod knapsack;
pub mod ot;
pub mod protocol;
pub mod sharing;
pub mod zkp;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("prime generation failed after {attempts} attempts")]
    GenerationFailure { attempts: u32 },
    #[error("value out of domain: {0}")]
    Domain(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("knapsack value unsolvable (residual {residual} left); tie or corrupted share")]
    UnsolvableKnapsack { residual: String },
    #[error("no bids placed")]
    NoBids,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("adversary script error: {0}")]
    Script(String),
    #[error("transcript parse error at record {seq}: {detail}")]
    TranscriptParse { seq: u64, detail: String },
    #[error("protocol violation: {0}")]
    Protocol(String),
}

pub type Result<T> = std::result::Result<T, Error>;
