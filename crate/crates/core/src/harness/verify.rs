//! Offline transcript verification.
//!
//! Replays everything a transcript makes checkable without any secret:
//! structural discipline (sequencing, phase order, channel placement,
//! encoding stability), subgroup membership of every carried element, and
//! in detecting mode the full commitment algebra, proof equations and the
//! winner's opening. A clean honest run passes every check; any scripted
//! deviation leaves at least one failing line behind.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::One;

use super::message::{Channel, Message, Recipient, Transcript, TranscriptRecord};
use crate::group::{GroupElement, GroupParams, Scalar};
use crate::knapsack::FlagVector;
use crate::protocol::{AuctionConfig, Mode, PartyId, Phase};
use crate::zkp::{self, EqdlProofSession};
use crate::Result;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for check in &self.checks {
            let status = if check.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!("{status} {}", check.name));
            if let Some(detail) = &check.detail {
                out.push_str(&format!(" ({detail})"));
            }
            out.push('\n');
        }
        out
    }

    fn pass(&mut self, name: &'static str) {
        self.checks.push(CheckResult {
            name,
            passed: true,
            detail: None,
        });
    }

    fn fail(&mut self, name: &'static str, detail: String) {
        self.checks.push(CheckResult {
            name,
            passed: false,
            detail: Some(detail),
        });
    }

    fn record(&mut self, name: &'static str, failure: Option<String>) {
        match failure {
            None => self.pass(name),
            Some(detail) => self.fail(name, detail),
        }
    }
}

/// Verify a serialized transcript. Malformed lines are a hard error (with
/// the offending record number), everything else lands in the report.
pub fn verify_transcript_text(text: &str, config: &AuctionConfig) -> Result<VerifyReport> {
    let transcript = Transcript::parse(text)?;
    let mut report = run_checks(&transcript, config);
    // Encoding stability: re-serializing each parsed line must reproduce
    // the input bytes.
    let mut failure = None;
    for (line, record) in text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .zip(transcript.iter())
    {
        let round = record.to_line();
        if round != line {
            failure = Some(format!("seq {} re-serializes differently", record.seq));
            break;
        }
    }
    report.record("encoding-roundtrip", failure);
    Ok(report)
}

pub fn verify_transcript(transcript: &Transcript, config: &AuctionConfig) -> VerifyReport {
    run_checks(transcript, config)
}

struct ReplayState {
    live: BTreeSet<usize>,
    code_commits: Vec<GroupElement>,
    randomizer_commits: Vec<GroupElement>,
    shuffled_code_commits: Vec<GroupElement>,
    randomizer_commits_b: Vec<GroupElement>,
    neg_randomizer_commits_b: Vec<GroupElement>,
    zetas: BTreeMap<usize, GroupElement>,
    rows: BTreeMap<usize, BTreeMap<usize, GroupElement>>,
    share_values: BTreeMap<(usize, usize), Scalar>,
    sum_commits: BTreeMap<usize, GroupElement>,
    sigma_values: BTreeMap<usize, Scalar>,
    flags: Option<FlagVector>,
    highest: Option<u64>,
    second: Option<u64>,
    claims: BTreeMap<usize, Scalar>,
    accepted_claims: Vec<usize>,
    proof: Option<EqdlProofSession>,
    proof_commits: Option<(GroupElement, GroupElement)>,
    proof_challenge: Option<Scalar>,
    compensated: Vec<usize>,
    complaints: Vec<(u64, String)>,
}

fn run_checks(transcript: &Transcript, config: &AuctionConfig) -> VerifyReport {
    let mut report = VerifyReport::default();
    let params = &config.params;
    let detecting = config.mode == Mode::MaliciousDetecting;

    // seq strictly increasing
    let mut failure = None;
    let mut last: Option<u64> = None;
    for record in transcript.iter() {
        if let Some(prev) = last {
            if record.seq <= prev {
                failure = Some(format!("seq {} after {}", record.seq, prev));
                break;
            }
        }
        last = Some(record.seq);
    }
    report.record("seq-monotone", failure);

    // phase order non-decreasing
    let mut failure = None;
    let mut last_phase = Phase::Init;
    for record in transcript.iter() {
        if record.phase < last_phase {
            failure = Some(format!(
                "seq {}: phase {} after {}",
                record.seq,
                record.phase.tag(),
                last_phase.tag()
            ));
            break;
        }
        last_phase = record.phase;
    }
    report.record("phase-order", failure);

    // channel discipline and mode placement
    let mut failure = None;
    for record in transcript.iter() {
        if let Some(problem) = channel_violation(record, detecting) {
            failure = Some(format!("seq {}: {problem}", record.seq));
            break;
        }
    }
    report.record("channel-discipline", failure);

    // every carried element lives in the subgroup, every scalar below q
    let mut failure = None;
    for record in transcript.iter() {
        if let Some(problem) = element_violation(&record.message, params) {
            failure = Some(format!("seq {}: {problem}", record.seq));
            break;
        }
    }
    report.record("element-validity", failure);

    // announce consistency with the verifier's config
    let mut failure = Some("no announce record".to_string());
    for record in transcript.iter() {
        if let Message::AuctionAnnounce {
            mode,
            bidder_count,
            price_count,
            prices,
            ..
        } = &record.message
        {
            let expected_prices: Vec<String> = config
                .prices
                .prices()
                .iter()
                .map(|p| p.to_string())
                .collect();
            failure = if mode != config.mode.tag() {
                Some(format!("announced mode {mode:?}"))
            } else if *bidder_count as usize != config.bidder_count {
                Some(format!("announced {bidder_count} bidders"))
            } else if *price_count as usize != config.prices.len() || *prices != expected_prices {
                Some("announced price table differs from config".to_string())
            } else {
                None
            };
            break;
        }
    }
    report.record("announce-consistency", failure);

    // fold the transcript into final state
    let state = replay(transcript, config);

    // no rejection or complaint anywhere
    report.record(
        "no-complaints",
        state
            .complaints
            .first()
            .map(|(seq, kind)| format!("seq {seq}: {kind}")),
    );

    // announced winner prices must match the announced flags
    let failure = state.flags.as_ref().and_then(|flags| {
        let set = flags.set_indices_desc();
        let expect_high = set.first().and_then(|&i| config.prices.price(i));
        let expect_second = set.get(1).and_then(|&i| config.prices.price(i));
        if expect_high != state.highest || expect_second != state.second {
            Some(format!(
                "flags imply {:?}/{:?}, announced {:?}/{:?}",
                expect_high, expect_second, state.highest, state.second
            ))
        } else {
            None
        }
    });
    report.record("flag-price-consistency", failure);

    if detecting {
        detecting_checks(&mut report, &state, params);
    }

    report
}

fn detecting_checks(report: &mut VerifyReport, state: &ReplayState, params: &GroupParams) {
    // each live code commitment must unmask into the shuffled list
    let mut failure = None;
    for (&j, zeta) in &state.zetas {
        if !state.live.contains(&j) {
            continue;
        }
        let member = state
            .neg_randomizer_commits_b
            .get(j - 1)
            .map(|neg| {
                crate::sharing::verify_zeta_membership(
                    params,
                    zeta,
                    neg,
                    &state.shuffled_code_commits,
                )
            })
            .unwrap_or(false);
        if !member {
            failure = Some(format!("b{j} code commitment not in the published set"));
            break;
        }
    }
    report.record("code-commit-membership", failure);

    // rows multiply out to the owner's code commitment
    let mut failure = None;
    for (&owner, row) in &state.rows {
        if !state.live.contains(&owner) {
            continue;
        }
        let product = row
            .values()
            .fold(GroupElement::one(), |acc, c| params.mul(&acc, c));
        match state.zetas.get(&owner) {
            Some(zeta) if product == *zeta => {}
            _ => {
                failure = Some(format!("b{owner} share row does not open his commitment"));
                break;
            }
        }
    }
    report.record("share-row-consistency", failure);

    // every recorded share opens its commitment
    let mut failure = None;
    for ((from, to), value) in &state.share_values {
        if !state.live.contains(from) || !state.live.contains(to) {
            continue;
        }
        let committed = state.rows.get(from).and_then(|row| row.get(to));
        let ok = committed
            .map(|c| crate::sharing::verify_share(params, value, c))
            .unwrap_or(false);
        if !ok {
            failure = Some(format!("share b{from} -> b{to} contradicts its commitment"));
            break;
        }
    }
    report.record("share-commitments", failure);

    // column sums: delivered value vs published commitment vs column product
    let mut failure = None;
    for (&j, sum_commit) in &state.sum_commits {
        if !state.live.contains(&j) {
            continue;
        }
        let column: Vec<GroupElement> = state
            .live
            .iter()
            .filter_map(|owner| state.rows.get(owner).and_then(|row| row.get(&j)))
            .cloned()
            .collect();
        if column.len() != state.live.len() {
            failure = Some(format!("missing column commitments for b{j}"));
            break;
        }
        let sigma = match state.sigma_values.get(&j) {
            Some(s) => s,
            None => {
                failure = Some(format!("no delivered sum for b{j}"));
                break;
            }
        };
        if !crate::sharing::verify_sigma(params, sigma, sum_commit, &column) {
            failure = Some(format!("b{j} column sum fails its commitment checks"));
            break;
        }
    }
    report.record("column-sum-commitments", failure);

    // the two aggregate products agree: both commit to the sum of the
    // live masked codes
    let mut failure = None;
    if !state.sum_commits.is_empty() {
        let zeta_product = state
            .live
            .iter()
            .filter_map(|j| state.zetas.get(j))
            .fold(GroupElement::one(), |acc, z| params.mul(&acc, z));
        let sum_product = state
            .live
            .iter()
            .filter_map(|j| state.sum_commits.get(j))
            .fold(GroupElement::one(), |acc, s| params.mul(&acc, s));
        if zeta_product != sum_product {
            failure = Some("code commitments and sum commitments disagree".to_string());
        }
    }
    report.record("aggregate-consistency", failure);

    // the flag-validity proof, replayed against announced data
    let failure = match (&state.proof, &state.flags) {
        (Some(session), Some(flags)) => {
            let mut sum_commits: Vec<GroupElement> = state
                .live
                .iter()
                .filter_map(|j| state.sum_commits.get(j))
                .cloned()
                .collect();
            for &j in &state.compensated {
                match state.randomizer_commits_b.get(j - 1) {
                    Some(commit) => sum_commits.push(commit.clone()),
                    None => sum_commits.push(GroupElement::one()),
                }
            }
            let statement = zkp::proof2_statement(params, &state.code_commits, flags, &sum_commits);
            if zkp::eqdl_verify(params, &statement, session) {
                None
            } else {
                Some("proof session does not verify against announced flags".to_string())
            }
        }
        _ => None,
    };
    report.record("flag-validity-proof", failure);

    // accepted winner claims must unmask to the top flagged code commitment
    let mut failure = None;
    if let Some(flags) = &state.flags {
        if let Some(&top) = flags.set_indices_desc().first() {
            for &j in &state.accepted_claims {
                let revealed = match state.claims.get(&j) {
                    Some(r) => r,
                    None => {
                        failure = Some(format!("verdict for b{j} without a recorded claim"));
                        break;
                    }
                };
                let commits = state
                    .code_commits
                    .get(top - 1)
                    .zip(state.randomizer_commits.get(j - 1));
                let opens = commits.is_some_and(|(code_commit, randomizer_commit)| {
                    params.pow(&params.g_seller, revealed)
                        == params.mul(code_commit, randomizer_commit)
                });
                if !opens {
                    failure = Some(format!("b{j}'s accepted claim does not open the top code"));
                    break;
                }
            }
        }
    }
    report.record("winner-claim-opening", failure);
}

fn replay(transcript: &Transcript, config: &AuctionConfig) -> ReplayState {
    let mut state = ReplayState {
        live: (1..=config.bidder_count).collect(),
        code_commits: Vec::new(),
        randomizer_commits: Vec::new(),
        shuffled_code_commits: Vec::new(),
        randomizer_commits_b: Vec::new(),
        neg_randomizer_commits_b: Vec::new(),
        zetas: BTreeMap::new(),
        rows: BTreeMap::new(),
        share_values: BTreeMap::new(),
        sum_commits: BTreeMap::new(),
        sigma_values: BTreeMap::new(),
        flags: None,
        highest: None,
        second: None,
        claims: BTreeMap::new(),
        accepted_claims: Vec::new(),
        proof_commits: None,
        proof_challenge: None,
        proof: None,
        compensated: Vec::new(),
        complaints: Vec::new(),
    };
    let bidder_of = |party: PartyId| match party {
        PartyId::Bidder(j) => Some(j),
        _ => None,
    };
    for record in transcript.iter() {
        match &record.message {
            Message::SellerCommitments {
                code_commits,
                randomizer_commits,
            } => {
                state.code_commits = code_commits.clone();
                state.randomizer_commits = randomizer_commits.clone();
            }
            Message::CodeCommitAids {
                shuffled_code_commits,
                randomizer_commits,
                neg_randomizer_commits,
            } => {
                state.shuffled_code_commits = shuffled_code_commits.clone();
                state.randomizer_commits_b = randomizer_commits.clone();
                state.neg_randomizer_commits_b = neg_randomizer_commits.clone();
            }
            Message::RandomizerUpdate {
                bidder,
                randomizer_commit,
                randomizer_commit_b,
                neg_randomizer_commit_b,
            } => {
                if let Ok(PartyId::Bidder(j)) = bidder.parse::<PartyId>() {
                    if state.randomizer_commits.len() >= j {
                        state.randomizer_commits[j - 1] = randomizer_commit.clone();
                    }
                    if state.randomizer_commits_b.len() >= j {
                        state.randomizer_commits_b[j - 1] = randomizer_commit_b.clone();
                    }
                    if state.neg_randomizer_commits_b.len() >= j {
                        state.neg_randomizer_commits_b[j - 1] = neg_randomizer_commit_b.clone();
                    }
                }
            }
            Message::MaskedCodeCommit { commit } => {
                if let Some(j) = bidder_of(record.from) {
                    state.zetas.insert(j, commit.clone());
                }
            }
            Message::ShareCommitRow { entries } => {
                if let Some(owner) = bidder_of(record.from) {
                    let mut row = BTreeMap::new();
                    for entry in entries {
                        if let Ok(PartyId::Bidder(to)) = entry.to.parse::<PartyId>() {
                            row.insert(to, entry.commit.clone());
                        }
                    }
                    state.rows.insert(owner, row);
                }
            }
            Message::ShareDeliver { value } => {
                if let (Some(from), Recipient::Party(PartyId::Bidder(to))) =
                    (bidder_of(record.from), record.to)
                {
                    state.share_values.insert((from, to), value.clone());
                }
            }
            Message::SumCommit { commit } => {
                if let Some(j) = bidder_of(record.from) {
                    state.sum_commits.insert(j, commit.clone());
                }
            }
            Message::SigmaDeliver { value } => {
                if let Some(j) = bidder_of(record.from) {
                    state.sigma_values.insert(j, value.clone());
                }
            }
            Message::FlagsAnnounce {
                flags,
                highest,
                second,
            } => {
                state.flags = Some(FlagVector::new(flags.clone()));
                state.highest = Some(*highest);
                state.second = *second;
            }
            Message::WinnerClaim { revealed } => {
                if let Some(j) = bidder_of(record.from) {
                    state.claims.insert(j, revealed.clone());
                }
            }
            Message::ClaimVerdict { bidder, accepted } => {
                if let Ok(PartyId::Bidder(j)) = bidder.parse::<PartyId>() {
                    if *accepted {
                        state.accepted_claims.push(j);
                    } else {
                        state
                            .complaints
                            .push((record.seq, "claim_rejected".to_string()));
                    }
                }
            }
            Message::ProofCommit { commit_a, commit_b } => {
                state.proof_commits = Some((commit_a.clone(), commit_b.clone()));
            }
            Message::ProofChallenge { challenge } => {
                state.proof_challenge = Some(challenge.clone());
            }
            Message::ProofResponse { response } => {
                if let (Some((a, b)), Some(challenge)) =
                    (state.proof_commits.clone(), state.proof_challenge.clone())
                {
                    state.proof = Some(EqdlProofSession {
                        commit_a: a,
                        commit_b: b,
                        challenge,
                        response: response.clone(),
                    });
                }
            }
            Message::ProofVerdict { accepted } => {
                if !accepted {
                    state
                        .complaints
                        .push((record.seq, "proof_rejected".to_string()));
                }
            }
            Message::DropoutNotice { bidder, case, .. } => {
                if let Ok(PartyId::Bidder(j)) = bidder.parse::<PartyId>() {
                    state.live.remove(&j);
                    state.zetas.remove(&j);
                    if *case == 3 {
                        state.compensated.push(j);
                    }
                }
            }
            Message::OtReject {} => {
                state.complaints.push((record.seq, "ot_reject".to_string()));
            }
            Message::ShareReject { .. } => {
                state
                    .complaints
                    .push((record.seq, "share_reject".to_string()));
            }
            Message::SigmaReject { .. } => {
                state
                    .complaints
                    .push((record.seq, "sigma_reject".to_string()));
            }
            Message::MembershipComplaint { .. } => {
                state
                    .complaints
                    .push((record.seq, "membership_complaint".to_string()));
            }
            Message::ComplaintRejected { .. } => {
                state
                    .complaints
                    .push((record.seq, "complaint_rejected".to_string()));
            }
            Message::AuctionResult { outcome, .. } if outcome == "aborted" => {
                state
                    .complaints
                    .push((record.seq, "auction_aborted".to_string()));
            }
            _ => {}
        }
    }
    state
}

/// Placement rule per kind: expected channel, expected sender class, and
/// whether the kind belongs to detecting mode only.
fn channel_violation(record: &TranscriptRecord, detecting: bool) -> Option<String> {
    use Channel::*;
    let kind = record.message.kind_tag();
    let from_seller = record.from == PartyId::Seller;
    let from_bidder = matches!(record.from, PartyId::Bidder(_));
    let from_env = record.from == PartyId::Env;
    let to_seller = matches!(record.to, Recipient::Party(PartyId::Seller));
    let to_bidder = matches!(record.to, Recipient::Party(PartyId::Bidder(_)));

    if record.channel == BidderOnly && to_seller {
        return Some("bidder-only record addressed to the seller".into());
    }
    let (ok, detecting_only) = match kind {
        "auction_announce" => (record.channel == Public && from_seller, false),
        "seller_commitments" => (record.channel == Public && from_seller, true),
        "ot_request" => (record.channel == Private && from_bidder && to_seller, false),
        "ot_response" => (record.channel == Private && from_seller && to_bidder, false),
        "ot_accept" | "ot_reject" => (record.channel == Public && from_bidder, true),
        "masked_code_commit" => (record.channel == BidderOnly && from_bidder, true),
        "code_commit_aids" => (record.channel == Public && from_seller, true),
        "membership_complaint" => (record.channel == BidderOnly && from_bidder, true),
        "tie_report" => (record.channel == Public && from_bidder, true),
        "rebid_request" => (record.channel == Public && from_seller, true),
        "randomizer_update" => (record.channel == Public && from_seller, true),
        "share_commit_row" => (record.channel == BidderOnly && from_bidder, true),
        "share_deliver" => (record.channel == Private && from_bidder && to_bidder, false),
        "share_accept" | "share_reject" => (record.channel == Public && from_bidder, true),
        "sum_commit" => (record.channel == Public && from_bidder, true),
        "sigma_deliver" => (record.channel == Private && from_bidder && to_seller, false),
        "sigma_reject" => (record.channel == Public && from_seller, true),
        "flags_announce" => (record.channel == Public && from_seller, false),
        "winner_claim" => (record.channel == Private && from_bidder && to_seller, false),
        "claim_verdict" => (record.channel == Public && from_seller, false),
        "proof_commit" | "proof_response" => {
            (record.channel == Private && from_seller && to_bidder, true)
        }
        "proof_challenge" => (record.channel == Private && from_bidder && to_seller, true),
        "proof_verdict" => (record.channel == Public && from_bidder, true),
        "dropout_notice" | "complaint_rejected" | "auction_result" => {
            (record.channel == Public && from_env, false)
        }
        other => return Some(format!("unknown kind {other:?}")),
    };
    if !ok {
        return Some(format!(
            "{kind} misplaced: channel {} from {}",
            record.channel.tag(),
            record.from
        ));
    }
    if detecting_only && !detecting {
        return Some(format!("{kind} present in an honest-mode transcript"));
    }
    None
}

fn check_element(params: &GroupParams, e: &GroupElement, what: &str) -> Option<String> {
    if e.value() < &num_bigint::BigUint::from(1u32)
        || e.value() >= &params.p
        || !e.value().modpow(&params.q, &params.p).is_one()
    {
        return Some(format!("{what} outside the order-q subgroup"));
    }
    None
}

fn check_scalar(params: &GroupParams, s: &Scalar, what: &str) -> Option<String> {
    if s.value() >= &params.q {
        return Some(format!("{what} not below q"));
    }
    None
}

fn element_violation(message: &Message, params: &GroupParams) -> Option<String> {
    let es = |items: &[GroupElement], what: &str| -> Option<String> {
        items.iter().find_map(|e| check_element(params, e, what))
    };
    match message {
        Message::SellerCommitments {
            code_commits,
            randomizer_commits,
        } => es(code_commits, "code commitment")
            .or_else(|| es(randomizer_commits, "randomizer commitment")),
        Message::OtRequest { blinded_choice } => {
            check_element(params, blinded_choice, "blinded choice")
        }
        Message::OtResponse { slots } => slots.iter().find_map(|slot| {
            check_element(params, &slot.public, "slot public value").or_else(|| {
                if slot.masked.len() != params.code_byte_len() {
                    Some("slot ciphertext has the wrong length".to_string())
                } else {
                    None
                }
            })
        }),
        Message::MaskedCodeCommit { commit } => check_element(params, commit, "code commitment"),
        Message::CodeCommitAids {
            shuffled_code_commits,
            randomizer_commits,
            neg_randomizer_commits,
        } => es(shuffled_code_commits, "shuffled code commitment")
            .or_else(|| es(randomizer_commits, "randomizer commitment"))
            .or_else(|| es(neg_randomizer_commits, "negated randomizer commitment")),
        Message::RandomizerUpdate {
            randomizer_commit,
            randomizer_commit_b,
            neg_randomizer_commit_b,
            ..
        } => check_element(params, randomizer_commit, "randomizer commitment")
            .or_else(|| check_element(params, randomizer_commit_b, "randomizer commitment"))
            .or_else(|| {
                check_element(
                    params,
                    neg_randomizer_commit_b,
                    "negated randomizer commitment",
                )
            }),
        Message::ShareCommitRow { entries } => entries
            .iter()
            .find_map(|e| check_element(params, &e.commit, "share commitment")),
        Message::ShareDeliver { value } => check_scalar(params, value, "share"),
        Message::SumCommit { commit } => check_element(params, commit, "sum commitment"),
        Message::SigmaDeliver { value } => check_scalar(params, value, "column sum"),
        Message::WinnerClaim { revealed } => check_scalar(params, revealed, "revealed code"),
        Message::ProofCommit { commit_a, commit_b } => {
            check_element(params, commit_a, "proof commitment")
                .or_else(|| check_element(params, commit_b, "proof commitment"))
        }
        Message::ProofChallenge { challenge } => check_scalar(params, challenge, "challenge"),
        Message::ProofResponse { response } => check_scalar(params, response, "response"),
        _ => None,
    }
}
