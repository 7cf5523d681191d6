//! In-process message bus: one deterministic scheduler, three channel
//! classes, transcript capture, and the hook where wire rules run.

use std::collections::BTreeSet;

use super::adversary::{CompiledScript, WireEffect};
use super::message::{Channel, Message, Recipient, Transcript, TranscriptRecord};
use crate::protocol::{PartyId, Phase};
use crate::{Error, Result};

/// What a send produced: the transcript reflects the wire, so recipients
/// see exactly what was recorded, tampering included.
pub struct DeliveryOutcome {
    pub message: Option<Message>,
    pub recipients: Vec<PartyId>,
}

pub struct Bus {
    transcript: Transcript,
    next_seq: u64,
    live_bidders: BTreeSet<usize>,
    script: CompiledScript,
}

impl Bus {
    pub fn new(bidder_count: usize, script: CompiledScript) -> Self {
        Bus {
            transcript: Transcript::default(),
            next_seq: 0,
            live_bidders: (1..=bidder_count).collect(),
            script,
        }
    }

    pub fn live_bidders(&self) -> Vec<usize> {
        self.live_bidders.iter().copied().collect()
    }

    pub fn is_live(&self, bidder: usize) -> bool {
        self.live_bidders.contains(&bidder)
    }

    pub fn mark_dropped(&mut self, bidder: usize) {
        self.live_bidders.remove(&bidder);
    }

    pub fn script_mut(&mut self) -> &mut CompiledScript {
        &mut self.script
    }

    pub fn script(&self) -> &CompiledScript {
        &self.script
    }

    /// Carry one message: apply matching wire rules, append the on-wire
    /// form to the transcript, and compute the delivery set for the
    /// channel. Bidder-only sends never reach the seller. A message eaten
    /// by a drop rule is neither recorded nor delivered.
    pub fn deliver(
        &mut self,
        phase: Phase,
        channel: Channel,
        from: PartyId,
        to: Recipient,
        message: Message,
    ) -> Result<DeliveryOutcome> {
        if channel == Channel::BidderOnly {
            if let Recipient::Party(PartyId::Seller) = to {
                return Err(Error::Protocol(
                    "bidder-only traffic cannot address the seller".into(),
                ));
            }
        }
        let kind = message.kind_tag().to_string();
        let tagged = serde_json::to_value(&message).expect("message serializes");
        let mut body = tagged
            .get("body")
            .cloned()
            .unwrap_or_else(|| serde_json::Value::Object(Default::default()));
        let receiver = match to {
            Recipient::Party(p) => Some(p),
            _ => None,
        };
        let effect = self.script.apply(phase, from, receiver, &kind, &mut body)?;
        let message = match effect {
            WireEffect::Dropped => {
                return Ok(DeliveryOutcome {
                    message: None,
                    recipients: Vec::new(),
                })
            }
            WireEffect::Intact => message,
            WireEffect::Mutated => {
                let tagged = serde_json::json!({ "kind": kind, "body": body });
                serde_json::from_value(tagged)
                    .map_err(|e| Error::Script(format!("mutated payload no longer parses: {e}")))?
            }
        };

        let recipients: Vec<PartyId> = match (channel, to) {
            (Channel::Private, Recipient::Party(p)) => vec![p],
            (Channel::Public, Recipient::AllParties) => {
                let mut all: Vec<PartyId> = self
                    .live_bidders
                    .iter()
                    .map(|&j| PartyId::Bidder(j))
                    .collect();
                all.push(PartyId::Seller);
                all
            }
            (Channel::BidderOnly, Recipient::AllBidders) => self
                .live_bidders
                .iter()
                .map(|&j| PartyId::Bidder(j))
                .collect(),
            (channel, to) => {
                return Err(Error::Protocol(format!(
                    "channel {} cannot address {to}",
                    channel.tag()
                )))
            }
        };

        self.transcript.records.push(TranscriptRecord {
            seq: self.next_seq,
            phase,
            channel,
            from,
            to,
            message: message.clone(),
        });
        self.next_seq += 1;

        Ok(DeliveryOutcome {
            message: Some(message),
            recipients,
        })
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }
}
