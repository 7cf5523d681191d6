//! Scripted adversaries.
//!
//! Wire rules edit, drop or replace matched messages between sender and
//! bus; they model a tampering network or a party lying on the wire.
//! Deviations that no message edit can express (a bidder committing to a
//! code he never received, a seller answering OT slots out of order) run
//! as corrupt-party behaviors inside the matched engine instead. Dropping
//! a participant models the halted/disconnected cases.

use serde::{Deserialize, Serialize};

use super::message::Message;
use crate::protocol::{PartyId, Phase};
use crate::{Error, Result};

/// Matches records by phase, sender, and message kind. Empty fields match
/// anything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RuleMatch {
    pub phase: Option<String>,
    pub sender: Option<String>,
    pub kind: Option<String>,
    pub receiver: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RuleAction {
    /// Overwrite one body field (dotted path, `entries.2.commit` style)
    /// with a JSON literal.
    MutateField {
        path: String,
        value: serde_json::Value,
    },
    /// Swallow the message; the runner treats the sender as halted there.
    DropMessage,
    /// Remove a bidder at the start of the matched phase.
    DropParticipant { bidder: String },
    /// Substitute the whole body.
    ReplacePayload { body: serde_json::Value },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireRule {
    #[serde(default)]
    pub matches: RuleMatch,
    pub action: RuleAction,
    /// A rule fires once unless marked repeating.
    #[serde(default)]
    pub repeating: bool,
}

/// Seller-side engine corruptions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorruptSeller {
    /// Swap two 1-based OT slots in the message list, for one bidder or
    /// for everyone.
    pub swap_ot_slots: Option<SlotSwap>,
    /// After the OT phase, dispute the named bidder's code. Once the
    /// bidder acknowledged receipt this is rejected on the spot.
    pub dispute_code_of: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotSwap {
    pub first: usize,
    pub second: usize,
    #[serde(default)]
    pub bidder: Option<String>,
}

/// Bidder-side engine corruptions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptBidder {
    pub bidder: String,
    pub action: CorruptBidderAction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CorruptBidderAction {
    /// Publish a code commitment with the given exponent instead of the
    /// code actually received.
    FakeCodeCommit { exponent: String },
    /// Claim the win even when the top flagged price is someone else's.
    AlwaysClaim {},
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdversaryScript {
    pub rules: Vec<WireRule>,
    pub corrupt_seller: Option<CorruptSeller>,
    pub corrupt_bidders: Vec<CorruptBidder>,
}

impl AdversaryScript {
    /// Load-time validation: phases, parties, kinds, and the first path
    /// segment of every field mutation must exist.
    pub fn validate(&self, bidder_count: usize) -> Result<()> {
        let check_party = |raw: &str| -> Result<PartyId> {
            let party: PartyId = raw.parse()?;
            if let PartyId::Bidder(j) = party {
                if j > bidder_count {
                    return Err(Error::Script(format!("no bidder {raw}")));
                }
            }
            Ok(party)
        };
        for (i, rule) in self.rules.iter().enumerate() {
            let ctx = |msg: String| Error::Script(format!("rule {i}: {msg}"));
            if let Some(phase) = &rule.matches.phase {
                phase
                    .parse::<Phase>()
                    .map_err(|_| ctx(format!("unknown phase {phase:?}")))?;
            }
            if let Some(sender) = &rule.matches.sender {
                check_party(sender).map_err(|e| ctx(e.to_string()))?;
            }
            if let Some(receiver) = &rule.matches.receiver {
                check_party(receiver).map_err(|e| ctx(e.to_string()))?;
            }
            if let Some(kind) = &rule.matches.kind {
                if Message::field_names(kind).is_none() {
                    return Err(ctx(format!("unknown message kind {kind:?}")));
                }
            }
            match &rule.action {
                RuleAction::MutateField { path, .. } => {
                    let kind =
                        rule.matches.kind.as_deref().ok_or_else(|| {
                            ctx("mutate_field needs a kind in its matcher".into())
                        })?;
                    let fields = Message::field_names(kind).expect("validated above");
                    let first = path.split('.').next().unwrap_or("");
                    if !fields.contains(&first) {
                        return Err(ctx(format!("message kind {kind:?} has no field {first:?}")));
                    }
                }
                RuleAction::DropParticipant { bidder } => {
                    let party = check_party(bidder).map_err(|e| ctx(e.to_string()))?;
                    if !matches!(party, PartyId::Bidder(_)) {
                        return Err(ctx("only bidders can be dropped".into()));
                    }
                    if rule.matches.phase.is_none() {
                        return Err(ctx("drop_participant needs a phase".into()));
                    }
                }
                RuleAction::DropMessage | RuleAction::ReplacePayload { .. } => {}
            }
        }
        if let Some(seller) = &self.corrupt_seller {
            if let Some(swap) = &seller.swap_ot_slots {
                if swap.first == 0 || swap.second == 0 || swap.first == swap.second {
                    return Err(Error::Script(
                        "slot swap needs two distinct 1-based slots".into(),
                    ));
                }
                if let Some(b) = &swap.bidder {
                    check_party(b)?;
                }
            }
            if let Some(b) = &seller.dispute_code_of {
                check_party(b)?;
            }
        }
        for corrupt in &self.corrupt_bidders {
            check_party(&corrupt.bidder)?;
        }
        Ok(())
    }
}

/// Script with per-rule fired state, consulted by the bus and runner.
pub struct CompiledScript {
    rules: Vec<(WireRule, bool)>,
    pub corrupt_seller: CorruptSeller,
    pub corrupt_bidders: Vec<CorruptBidder>,
}

/// What the wire did to one message.
pub enum WireEffect {
    Intact,
    Mutated,
    Dropped,
}

impl CompiledScript {
    pub fn new(script: Option<&AdversaryScript>, bidder_count: usize) -> Result<Self> {
        let script = script.cloned().unwrap_or_default();
        script.validate(bidder_count)?;
        Ok(CompiledScript {
            rules: script.rules.into_iter().map(|r| (r, false)).collect(),
            corrupt_seller: script.corrupt_seller.unwrap_or_default(),
            corrupt_bidders: script.corrupt_bidders,
        })
    }

    /// Bidders whose drop rule triggers at the start of `phase`.
    pub fn drops_at(&mut self, phase: Phase) -> Vec<usize> {
        let mut out = Vec::new();
        for (rule, fired) in &mut self.rules {
            if *fired && !rule.repeating {
                continue;
            }
            if let RuleAction::DropParticipant { bidder } = &rule.action {
                let at: Phase = rule
                    .matches
                    .phase
                    .as_deref()
                    .expect("validated")
                    .parse()
                    .expect("validated");
                if at == phase {
                    if let Ok(PartyId::Bidder(j)) = bidder.parse() {
                        out.push(j);
                        *fired = true;
                    }
                }
            }
        }
        out
    }

    /// Run the matched wire rules over one message body.
    pub fn apply(
        &mut self,
        phase: Phase,
        sender: PartyId,
        receiver: Option<PartyId>,
        kind: &str,
        body: &mut serde_json::Value,
    ) -> Result<WireEffect> {
        let mut effect = WireEffect::Intact;
        for (rule, fired) in &mut self.rules {
            if *fired && !rule.repeating {
                continue;
            }
            if matches!(rule.action, RuleAction::DropParticipant { .. }) {
                continue;
            }
            let m = &rule.matches;
            if let Some(want) = &m.phase {
                if want != phase.tag() {
                    continue;
                }
            }
            if let Some(want) = &m.sender {
                if *want != sender.to_string() {
                    continue;
                }
            }
            if let Some(want) = &m.receiver {
                match receiver {
                    Some(r) if *want == r.to_string() => {}
                    _ => continue,
                }
            }
            if let Some(want) = &m.kind {
                if want != kind {
                    continue;
                }
            }
            *fired = true;
            match &rule.action {
                RuleAction::MutateField { path, value } => {
                    set_path(body, path, value.clone())?;
                    effect = WireEffect::Mutated;
                }
                RuleAction::ReplacePayload { body: new_body } => {
                    *body = new_body.clone();
                    effect = WireEffect::Mutated;
                }
                RuleAction::DropMessage => return Ok(WireEffect::Dropped),
                RuleAction::DropParticipant { .. } => unreachable!(),
            }
        }
        Ok(effect)
    }

    pub fn corruption_for(&self, bidder: usize) -> Option<&CorruptBidderAction> {
        self.corrupt_bidders
            .iter()
            .find(|c| c.bidder == PartyId::Bidder(bidder).to_string())
            .map(|c| &c.action)
    }
}

/// Walk a dotted path (`entries.2.commit`) and overwrite the target.
fn set_path(body: &mut serde_json::Value, path: &str, value: serde_json::Value) -> Result<()> {
    let mut cursor = body;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, segment) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        let next = match cursor {
            serde_json::Value::Object(map) => map
                .get_mut(*segment)
                .ok_or_else(|| Error::Script(format!("no field {segment:?} on path {path:?}")))?,
            serde_json::Value::Array(items) => {
                let idx: usize = segment.parse().map_err(|_| {
                    Error::Script(format!("index expected at {segment:?} in {path:?}"))
                })?;
                items.get_mut(idx).ok_or_else(|| {
                    Error::Script(format!("index {idx} out of bounds on path {path:?}"))
                })?
            }
            _ => {
                return Err(Error::Script(format!(
                    "path {path:?} descends into a scalar at {segment:?}"
                )))
            }
        };
        if last {
            *next = value;
            return Ok(());
        }
        cursor = next;
    }
    Err(Error::Script(format!("empty path {path:?}")))
}
