//! Wire taxonomy: every protocol message, its channel class, and the
//! line-delimited transcript encoding.
//!
//! One record per line, JSON-encoded with fixed field order
//! `(seq, phase, channel, from, to, kind, body)`. Integers travel as
//! decimal strings and octet strings as lowercase hex; writing then
//! re-reading a record reproduces the exact bytes, which is the contract
//! transcript verification holds every line to.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::group::{GroupElement, Scalar};
use crate::ot::OtSlot;
use crate::protocol::{PartyId, Phase};
use crate::{Error, Result};

/// Decimal-string encoding for machine integers on the wire.
pub mod u64_dec {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u64, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse()
            .map_err(|_| de::Error::custom(format!("not a decimal integer: {raw:?}")))
    }
}

/// Same, for optional integers.
pub mod u64_dec_opt {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<u64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match v {
            Some(v) => s.serialize_some(&v.to_string()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Option<u64>, D::Error> {
        let raw = Option::<String>::deserialize(d)?;
        raw.map(|raw| {
            raw.parse()
                .map_err(|_| de::Error::custom(format!("not a decimal integer: {raw:?}")))
        })
        .transpose()
    }
}

/// Flag bits as "0"/"1" strings.
pub mod bits_dec {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[bool], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|&b| if b { "1" } else { "0" }))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Vec<bool>, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        raw.into_iter()
            .map(|s| match s.as_str() {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(de::Error::custom(format!("not a flag bit: {other:?}"))),
            })
            .collect()
    }
}

/// Channel classes. Bidder-only traffic is never delivered to the seller;
/// that rule is structural, enforced by the bus and re-checked on replay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Private,
    Public,
    BidderOnly,
}

impl Channel {
    pub fn tag(&self) -> &'static str {
        match self {
            Channel::Private => "private",
            Channel::Public => "public",
            Channel::BidderOnly => "bidder_only",
        }
    }
}

impl FromStr for Channel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "private" => Channel::Private,
            "public" => Channel::Public,
            "bidder_only" => Channel::BidderOnly,
            other => return Err(Error::Parameter(format!("unknown channel {other:?}"))),
        })
    }
}

/// Address field of a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipient {
    Party(PartyId),
    AllParties,
    AllBidders,
}

impl fmt::Display for Recipient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Recipient::Party(p) => write!(f, "{p}"),
            Recipient::AllParties => write!(f, "*"),
            Recipient::AllBidders => write!(f, "bidders"),
        }
    }
}

impl FromStr for Recipient {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "*" => Recipient::AllParties,
            "bidders" => Recipient::AllBidders,
            other => Recipient::Party(other.parse()?),
        })
    }
}

/// One share commitment addressed to a specific recipient.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareCommitEntry {
    pub to: String,
    pub commit: GroupElement,
}

/// Every message kind the protocol puts on a wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "snake_case")]
pub enum Message {
    AuctionAnnounce {
        mode: String,
        payment_rule: String,
        #[serde(with = "u64_dec")]
        bidder_count: u64,
        #[serde(with = "u64_dec")]
        price_count: u64,
        prices: Vec<String>,
    },
    SellerCommitments {
        code_commits: Vec<GroupElement>,
        randomizer_commits: Vec<GroupElement>,
    },
    OtRequest {
        blinded_choice: GroupElement,
    },
    OtResponse {
        slots: Vec<OtSlot>,
    },
    OtAccept {},
    OtReject {},
    MaskedCodeCommit {
        commit: GroupElement,
    },
    CodeCommitAids {
        shuffled_code_commits: Vec<GroupElement>,
        randomizer_commits: Vec<GroupElement>,
        neg_randomizer_commits: Vec<GroupElement>,
    },
    MembershipComplaint {
        against: String,
    },
    TieReport {
        groups: Vec<Vec<String>>,
    },
    RebidRequest {
        bidders: Vec<String>,
    },
    RandomizerUpdate {
        bidder: String,
        randomizer_commit: GroupElement,
        randomizer_commit_b: GroupElement,
        neg_randomizer_commit_b: GroupElement,
    },
    ShareCommitRow {
        entries: Vec<ShareCommitEntry>,
    },
    ShareDeliver {
        value: Scalar,
    },
    ShareAccept {
        of: String,
    },
    ShareReject {
        of: String,
    },
    SumCommit {
        commit: GroupElement,
    },
    SigmaDeliver {
        value: Scalar,
    },
    SigmaReject {
        bidder: String,
    },
    FlagsAnnounce {
        #[serde(with = "bits_dec")]
        flags: Vec<bool>,
        #[serde(with = "u64_dec")]
        highest: u64,
        #[serde(with = "u64_dec_opt", default, skip_serializing_if = "Option::is_none")]
        second: Option<u64>,
    },
    WinnerClaim {
        revealed: Scalar,
    },
    ClaimVerdict {
        bidder: String,
        accepted: bool,
    },
    ProofCommit {
        commit_a: GroupElement,
        commit_b: GroupElement,
    },
    ProofChallenge {
        challenge: Scalar,
    },
    ProofResponse {
        response: Scalar,
    },
    ProofVerdict {
        accepted: bool,
    },
    DropoutNotice {
        bidder: String,
        at_phase: String,
        #[serde(with = "u64_dec")]
        case: u64,
    },
    ComplaintRejected {
        against: String,
        reason: String,
    },
    AuctionResult {
        outcome: String,
        #[serde(with = "u64_dec_opt", default, skip_serializing_if = "Option::is_none")]
        highest: Option<u64>,
        #[serde(with = "u64_dec_opt", default, skip_serializing_if = "Option::is_none")]
        second: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        winner: Option<String>,
        #[serde(with = "u64_dec_opt", default, skip_serializing_if = "Option::is_none")]
        paid: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        culprit: Option<String>,
    },
}

impl Message {
    pub fn kind_tag(&self) -> &'static str {
        match self {
            Message::AuctionAnnounce { .. } => "auction_announce",
            Message::SellerCommitments { .. } => "seller_commitments",
            Message::OtRequest { .. } => "ot_request",
            Message::OtResponse { .. } => "ot_response",
            Message::OtAccept {} => "ot_accept",
            Message::OtReject {} => "ot_reject",
            Message::MaskedCodeCommit { .. } => "masked_code_commit",
            Message::CodeCommitAids { .. } => "code_commit_aids",
            Message::MembershipComplaint { .. } => "membership_complaint",
            Message::TieReport { .. } => "tie_report",
            Message::RebidRequest { .. } => "rebid_request",
            Message::RandomizerUpdate { .. } => "randomizer_update",
            Message::ShareCommitRow { .. } => "share_commit_row",
            Message::ShareDeliver { .. } => "share_deliver",
            Message::ShareAccept { .. } => "share_accept",
            Message::ShareReject { .. } => "share_reject",
            Message::SumCommit { .. } => "sum_commit",
            Message::SigmaDeliver { .. } => "sigma_deliver",
            Message::SigmaReject { .. } => "sigma_reject",
            Message::FlagsAnnounce { .. } => "flags_announce",
            Message::WinnerClaim { .. } => "winner_claim",
            Message::ClaimVerdict { .. } => "claim_verdict",
            Message::ProofCommit { .. } => "proof_commit",
            Message::ProofChallenge { .. } => "proof_challenge",
            Message::ProofResponse { .. } => "proof_response",
            Message::ProofVerdict { .. } => "proof_verdict",
            Message::DropoutNotice { .. } => "dropout_notice",
            Message::ComplaintRejected { .. } => "complaint_rejected",
            Message::AuctionResult { .. } => "auction_result",
        }
    }

    /// Top-level body fields per kind; adversary scripts are validated
    /// against this table when they load.
    pub fn field_names(kind: &str) -> Option<&'static [&'static str]> {
        Some(match kind {
            "auction_announce" => &[
                "mode",
                "payment_rule",
                "bidder_count",
                "price_count",
                "prices",
            ],
            "seller_commitments" => &["code_commits", "randomizer_commits"],
            "ot_request" => &["blinded_choice"],
            "ot_response" => &["slots"],
            "ot_accept" | "ot_reject" => &[],
            "masked_code_commit" => &["commit"],
            "code_commit_aids" => &[
                "shuffled_code_commits",
                "randomizer_commits",
                "neg_randomizer_commits",
            ],
            "membership_complaint" => &["against"],
            "tie_report" => &["groups"],
            "rebid_request" => &["bidders"],
            "randomizer_update" => &[
                "bidder",
                "randomizer_commit",
                "randomizer_commit_b",
                "neg_randomizer_commit_b",
            ],
            "share_commit_row" => &["entries"],
            "share_deliver" => &["value"],
            "share_accept" | "share_reject" => &["of"],
            "sum_commit" => &["commit"],
            "sigma_deliver" => &["value"],
            "sigma_reject" => &["bidder"],
            "flags_announce" => &["flags", "highest", "second"],
            "winner_claim" => &["revealed"],
            "claim_verdict" => &["bidder", "accepted"],
            "proof_commit" => &["commit_a", "commit_b"],
            "proof_challenge" => &["challenge"],
            "proof_response" => &["response"],
            "proof_verdict" => &["accepted"],
            "dropout_notice" => &["bidder", "at_phase", "case"],
            "complaint_rejected" => &["against", "reason"],
            "auction_result" => &[
                "outcome", "highest", "second", "winner", "paid", "reason", "culprit",
            ],
            _ => return None,
        })
    }
}

/// One transcript entry.
#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptRecord {
    pub seq: u64,
    pub phase: Phase,
    pub channel: Channel,
    pub from: PartyId,
    pub to: Recipient,
    pub message: Message,
}

#[derive(Serialize, Deserialize)]
struct WireRecord {
    seq: String,
    phase: String,
    channel: String,
    from: String,
    to: String,
    kind: String,
    body: serde_json::Value,
}

impl TranscriptRecord {
    pub fn to_line(&self) -> String {
        let tagged = serde_json::to_value(&self.message).expect("message serializes");
        let kind = tagged
            .get("kind")
            .and_then(|v| v.as_str())
            .expect("adjacently tagged")
            .to_string();
        let body = tagged
            .get("body")
            .cloned()
            .unwrap_or_else(|| serde_json::Value::Object(Default::default()));
        let wire = WireRecord {
            seq: self.seq.to_string(),
            phase: self.phase.tag().to_string(),
            channel: self.channel.tag().to_string(),
            from: self.from.to_string(),
            to: self.to.to_string(),
            kind,
            body,
        };
        serde_json::to_string(&wire).expect("wire record serializes")
    }

    pub fn from_line(line: &str, line_no: u64) -> Result<Self> {
        let parse_err = |detail: String| Error::TranscriptParse {
            seq: line_no,
            detail,
        };
        let wire: WireRecord = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        let seq = wire
            .seq
            .parse::<u64>()
            .map_err(|_| parse_err(format!("bad seq {:?}", wire.seq)))?;
        let phase = wire.phase.parse().map_err(|e| parse_err(format!("{e}")))?;
        let channel = wire
            .channel
            .parse()
            .map_err(|e| parse_err(format!("{e}")))?;
        let from = wire.from.parse().map_err(|e| parse_err(format!("{e}")))?;
        let to = wire.to.parse().map_err(|e| parse_err(format!("{e}")))?;
        let tagged = serde_json::json!({ "kind": wire.kind, "body": wire.body });
        let message: Message =
            serde_json::from_value(tagged).map_err(|e| parse_err(e.to_string()))?;
        Ok(TranscriptRecord {
            seq,
            phase,
            channel,
            from,
            to,
            message,
        })
    }
}

/// An ordered run record, replayable and offline-verifiable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    pub records: Vec<TranscriptRecord>,
}

impl Transcript {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&record.to_line());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, line)| !line.trim().is_empty())
            .map(|(i, line)| TranscriptRecord::from_line(line, i as u64))
            .collect::<Result<Vec<_>>>()?;
        Ok(Transcript { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TranscriptRecord> {
        self.records.iter()
    }
}
