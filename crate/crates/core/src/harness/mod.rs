//! Deterministic in-process simulator: message bus with three channel
//! classes, scripted adversaries and dropout injection, transcript capture,
//! and offline replay verification.

pub mod adversary;
pub mod bus;
pub mod message;
pub mod runner;
pub mod verify;

pub use adversary::{
    AdversaryScript, CorruptBidder, CorruptBidderAction, CorruptSeller, RuleAction, RuleMatch,
    SlotSwap, WireRule,
};
pub use bus::Bus;
pub use message::{Channel, Message, Recipient, Transcript, TranscriptRecord};
pub use runner::{run_auction, RunReport};
pub use verify::{verify_transcript, verify_transcript_text, CheckResult, VerifyReport};
