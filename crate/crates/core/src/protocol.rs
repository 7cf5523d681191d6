//! Seller and bidder state machines.
//!
//! The engines here hold each party's secrets and implement one protocol
//! step per method; the harness decides delivery order and carries every
//! message. Two modes share the phase skeleton: honest mode runs the bare
//! exchange, detecting mode adds commitments after every step and the
//! final flag-validity proof.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::group::{GroupElement, GroupParams, Scalar};
use crate::knapsack::{self, CodeBook, FlagVector, PriceTable};
use crate::ot::{self, OtReceiverState, OtRequest, OtResponse};
use crate::sharing::{self, RandomizerSet};
use crate::zkp::{self, EqdlProofSession, EqdlStatement};
use crate::{Error, Result};

/// Which protocol variant runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Bare exchange; participants follow the steps and nobody checks.
    Honest,
    /// Commitments and proofs at every step; deviations are caught and
    /// attributed.
    MaliciousDetecting,
}

impl Mode {
    pub fn tag(&self) -> &'static str {
        match self {
            Mode::Honest => "honest",
            Mode::MaliciousDetecting => "malicious_detecting",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaymentRule {
    FirstPrice,
    SecondPrice,
}

/// Protocol phases in execution order. Re-runs (tie rounds, re-sharing
/// after a dropout) stay inside the phase that triggered them, so the tags
/// on a transcript never decrease.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Init,
    Bid,
    Ot,
    Commit,
    Share,
    Sigma,
    Solve,
    Claim,
    Proof,
    Done,
}

impl Phase {
    pub fn tag(&self) -> &'static str {
        match self {
            Phase::Init => "init",
            Phase::Bid => "bid",
            Phase::Ot => "ot",
            Phase::Commit => "commit",
            Phase::Share => "share",
            Phase::Sigma => "sigma",
            Phase::Solve => "solve",
            Phase::Claim => "claim",
            Phase::Proof => "proof",
            Phase::Done => "done",
        }
    }
}

impl FromStr for Phase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "init" => Phase::Init,
            "bid" => Phase::Bid,
            "ot" => Phase::Ot,
            "commit" => Phase::Commit,
            "share" => Phase::Share,
            "sigma" => Phase::Sigma,
            "solve" => Phase::Solve,
            "claim" => Phase::Claim,
            "proof" => Phase::Proof,
            "done" => Phase::Done,
            other => return Err(Error::Parameter(format!("unknown phase {other:?}"))),
        })
    }
}

/// A protocol participant. `Env` marks harness-injected records such as
/// dropout notices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PartyId {
    Seller,
    Bidder(usize),
    Env,
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyId::Seller => write!(f, "seller"),
            PartyId::Bidder(j) => write!(f, "b{j}"),
            PartyId::Env => write!(f, "env"),
        }
    }
}

impl FromStr for PartyId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seller" => Ok(PartyId::Seller),
            "env" => Ok(PartyId::Env),
            other => {
                let idx = other
                    .strip_prefix('b')
                    .and_then(|rest| rest.parse::<usize>().ok())
                    .filter(|&j| j >= 1);
                idx.map(PartyId::Bidder)
                    .ok_or_else(|| Error::Parameter(format!("unknown party {other:?}")))
            }
        }
    }
}

/// Per-role seed strings; every bit of randomness in a run flows from
/// these, never from ambient entropy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSpec {
    pub seller: String,
    pub bidders: Vec<String>,
}

impl SeedSpec {
    pub fn uniform(base: &str, n: usize) -> Self {
        SeedSpec {
            seller: format!("{base}-seller"),
            bidders: (1..=n).map(|j| format!("{base}-b{j}")).collect(),
        }
    }
}

pub fn role_rng(label: &str, seed: &str) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    let digest = Sha256::digest(format!("role-rng|{label}|{seed}").as_bytes());
    key.copy_from_slice(&digest);
    ChaCha20Rng::from_seed(key)
}

/// Demo/test overrides pinning quantities that are normally drawn fresh.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedSetup {
    /// Code book, ascending, one code per price.
    pub codes: Option<Vec<String>>,
    /// Randomizers, one per bidder, summing to zero mod q.
    pub randomizers: Option<Vec<String>>,
    /// Share matrix rows: row j is bidder j's split of his masked code.
    /// Used only while all bidders are live.
    pub share_rows: Option<Vec<Vec<String>>>,
}

/// Everything a run needs except the bids and the adversary script.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuctionConfig {
    pub mode: Mode,
    pub payment_rule: PaymentRule,
    pub params: GroupParams,
    pub prices: PriceTable,
    pub bidder_count: usize,
    pub seeds: SeedSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<FixedSetup>,
}

impl AuctionConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.bidder_count < 2 {
            return Err(Error::Config(
                "need at least two bidders (a lone randomizer cannot be nonzero and sum to zero)"
                    .into(),
            ));
        }
        if self.seeds.bidders.len() != self.bidder_count {
            return Err(Error::Config(format!(
                "seeds list has {} entries for {} bidders",
                self.seeds.bidders.len(),
                self.bidder_count
            )));
        }
        Ok(())
    }
}

fn parse_biguint(raw: &str) -> Result<BigUint> {
    BigUint::parse_bytes(raw.as_bytes(), 10)
        .ok_or_else(|| Error::Config(format!("not a decimal integer: {raw:?}")))
}

/// Why a run ended without a winner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    /// A bidder rejected the code delivered over OT.
    OtRejected,
    /// The summed shares decode to no subset of the code book: a tie
    /// slipped through or a share was corrupted.
    UnsolvableKnapsack,
    /// A delivered column sum contradicts its published commitment.
    SigmaInvalid,
    /// The flag-validity proof failed at the winner.
    Proof2Failed,
    /// Tied bidders could not reach distinct bids within the re-bid budget.
    UnresolvedTie,
    /// Nobody passed the winner check.
    NoValidWinnerClaim,
    /// Dropouts left fewer than two bidders.
    TooFewBidders,
    /// The seller stopped responding.
    SellerHalted,
    /// No flag set at all.
    NoBids,
}

impl AbortReason {
    pub fn tag(&self) -> &'static str {
        match self {
            AbortReason::OtRejected => "ot_rejected",
            AbortReason::UnsolvableKnapsack => "unsolvable_knapsack",
            AbortReason::SigmaInvalid => "sigma_invalid",
            AbortReason::Proof2Failed => "proof2_failed",
            AbortReason::UnresolvedTie => "unresolved_tie",
            AbortReason::NoValidWinnerClaim => "no_valid_winner_claim",
            AbortReason::TooFewBidders => "too_few_bidders",
            AbortReason::SellerHalted => "seller_halted",
            AbortReason::NoBids => "no_bids",
        }
    }
}

/// Final state of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Winner {
        highest: u64,
        payer: usize,
        paid: u64,
    },
    Aborted {
        reason: AbortReason,
        culprit: Option<PartyId>,
    },
}

impl Outcome {
    pub fn is_winner(&self) -> bool {
        matches!(self, Outcome::Winner { .. })
    }
}

/// One attributed deviation, caught at its designated check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Detection {
    pub check: String,
    pub culprit: PartyId,
    pub reporter: PartyId,
}

/// A bidder identifying himself by opening his masked code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WinnerClaim {
    pub claimant: usize,
    pub revealed: Scalar,
}

// ---------------------------------------------------------------------------
// Seller
// ---------------------------------------------------------------------------

pub struct SellerEngine {
    params: GroupParams,
    prices: PriceTable,
    rng: ChaCha20Rng,
    codebook: CodeBook,
    randomizers: RandomizerSet,
    /// Commitments under the seller generator, published at init in
    /// detecting mode.
    code_commits: Vec<GroupElement>,
    randomizer_commits: Vec<GroupElement>,
    /// Per-code commitments under the bidder generator, published in a
    /// random order so membership reveals nothing about position.
    shuffled_code_commits: Vec<GroupElement>,
    randomizer_commits_b: Vec<GroupElement>,
    neg_randomizer_commits_b: Vec<GroupElement>,
    /// Bidders whose code receipt was acknowledged; acknowledgement binds.
    acknowledged: BTreeMap<usize, bool>,
    received_sums: BTreeMap<usize, Scalar>,
    /// Randomizers of bidders who left after shares were exchanged; the
    /// seller folds them back into the total himself.
    compensation: Vec<(usize, Scalar)>,
    flags: Option<FlagVector>,
    proof_nonce: Option<Scalar>,
}

impl SellerEngine {
    pub fn new(config: &AuctionConfig) -> Result<Self> {
        let params = config.params.clone();
        let k = config.prices.len();
        let n = config.bidder_count;
        let mut rng = role_rng("seller", &config.seeds.seller);

        let fixed = config.fixed.clone().unwrap_or_default();
        let codebook = match fixed.codes {
            Some(raw) => {
                let codes = raw
                    .iter()
                    .map(|s| parse_biguint(s))
                    .collect::<Result<_>>()?;
                let book = CodeBook::new(codes, params.q.clone())?;
                if book.len() != k {
                    return Err(Error::Config(format!(
                        "{} fixed codes for {k} prices",
                        book.len()
                    )));
                }
                book
            }
            None => knapsack::generate_codes(k, &params.q, &mut rng)?,
        };
        let randomizers = match fixed.randomizers {
            Some(raw) => {
                let rs = raw
                    .iter()
                    .map(|s| parse_biguint(s).and_then(|v| Scalar::new(v, &params.q)))
                    .collect::<Result<Vec<_>>>()?;
                if rs.len() != n {
                    return Err(Error::Config(format!(
                        "{} fixed randomizers for {n} bidders",
                        rs.len()
                    )));
                }
                RandomizerSet::new(rs, params.q.clone())?
            }
            None => sharing::generate_randomizers(n, &params.q, &mut rng)?,
        };

        let code_commits = codebook
            .codes()
            .iter()
            .map(|c| {
                let s = Scalar::new(c.clone(), &params.q).expect("code below q");
                sharing::commit(&params, &params.g_seller, &s)
            })
            .collect();
        let randomizer_commits = randomizers
            .randomizers()
            .iter()
            .map(|r| sharing::commit(&params, &params.g_seller, r))
            .collect();
        let mut shuffled_code_commits: Vec<GroupElement> = codebook
            .codes()
            .iter()
            .map(|c| {
                let s = Scalar::new(c.clone(), &params.q).expect("code below q");
                sharing::commit(&params, &params.g_bidder, &s)
            })
            .collect();
        sharing::shuffle_commits(&mut shuffled_code_commits, &mut rng);
        let randomizer_commits_b = randomizers
            .randomizers()
            .iter()
            .map(|r| sharing::commit(&params, &params.g_bidder, r))
            .collect();
        let neg_randomizer_commits_b = randomizers
            .randomizers()
            .iter()
            .map(|r| sharing::commit(&params, &params.g_bidder, &params.scalar_neg(r)))
            .collect();

        Ok(SellerEngine {
            params,
            prices: config.prices.clone(),
            rng,
            codebook,
            randomizers,
            code_commits,
            randomizer_commits,
            shuffled_code_commits,
            randomizer_commits_b,
            neg_randomizer_commits_b,
            acknowledged: BTreeMap::new(),
            received_sums: BTreeMap::new(),
            compensation: Vec::new(),
            flags: None,
            proof_nonce: None,
        })
    }

    pub fn codebook(&self) -> &CodeBook {
        &self.codebook
    }

    pub fn randomizers(&self) -> &RandomizerSet {
        &self.randomizers
    }

    pub fn code_commits(&self) -> &[GroupElement] {
        &self.code_commits
    }

    pub fn randomizer_commits(&self) -> &[GroupElement] {
        &self.randomizer_commits
    }

    pub fn shuffled_code_commits(&self) -> &[GroupElement] {
        &self.shuffled_code_commits
    }

    pub fn randomizer_commits_b(&self) -> &[GroupElement] {
        &self.randomizer_commits_b
    }

    pub fn neg_randomizer_commits_b(&self) -> &[GroupElement] {
        &self.neg_randomizer_commits_b
    }

    /// The full masked code list for one bidder, as OT slot messages.
    pub fn ot_messages_for(&self, bidder: usize) -> Vec<Vec<u8>> {
        let randomizer = self
            .randomizers
            .randomizer(bidder)
            .expect("live bidder has a randomizer");
        self.codebook
            .codes()
            .iter()
            .map(|c| {
                let code = Scalar::new(c.clone(), &self.params.q).expect("code below q");
                let masked = sharing::randomize_code(&code, randomizer, &self.params.q);
                ot::scalar_to_code_bytes(&masked, &self.params)
            })
            .collect()
    }

    pub fn respond_ot(&mut self, messages: &[Vec<u8>], request: &OtRequest) -> Result<OtResponse> {
        ot::ot_respond(messages, request, &self.params, &mut self.rng)
    }

    pub fn record_acknowledgement(&mut self, bidder: usize, accepted: bool) {
        self.acknowledged.insert(bidder, accepted);
    }

    /// Acknowledged receipt is binding: the seller cannot later dispute
    /// the code held by that bidder.
    pub fn dispute_code(&self, bidder: usize) -> Result<()> {
        if self.acknowledged.get(&bidder) == Some(&true) {
            return Err(Error::Protocol(format!(
                "bidder b{bidder} acknowledged the code; receipt cannot be repudiated"
            )));
        }
        Ok(())
    }

    /// Drop a bidder before his code mattered: erase his randomizer and
    /// fold it into another live bidder's, keeping the zero-sum invariant.
    /// Returns the absorbing bidder.
    pub fn redistribute_randomizer(&mut self, dropped: usize, live: &[usize]) -> Result<usize> {
        let gone = self
            .randomizers
            .randomizer(dropped)
            .cloned()
            .ok_or_else(|| Error::Protocol(format!("no randomizer for b{dropped}")))?;
        let absorber = live
            .iter()
            .copied()
            .filter(|&m| m != dropped)
            .find(|&m| {
                let current = self.randomizers.randomizer(m).expect("live");
                !self.params.scalar_add(current, &gone).is_zero()
            })
            .ok_or_else(|| {
                Error::Protocol("no live bidder can absorb the dropped randomizer".into())
            })?;
        let updated = {
            let current = self.randomizers.randomizer(absorber).expect("live");
            self.params.scalar_add(current, &gone)
        };
        self.set_randomizer(absorber, updated);
        Ok(absorber)
    }

    fn set_randomizer(&mut self, bidder: usize, value: Scalar) {
        self.randomizer_commits[bidder - 1] =
            sharing::commit(&self.params, &self.params.g_seller, &value);
        self.randomizer_commits_b[bidder - 1] =
            sharing::commit(&self.params, &self.params.g_bidder, &value);
        self.neg_randomizer_commits_b[bidder - 1] = sharing::commit(
            &self.params,
            &self.params.g_bidder,
            &self.params.scalar_neg(&value),
        );
        self.randomizers.set(bidder, value);
    }

    /// Fresh randomizers for the tied bidders, preserving their subset sum
    /// so the grand total still vanishes.
    pub fn refresh_randomizers(&mut self, bidders: &[usize]) -> Result<()> {
        if bidders.len() < 2 {
            return Err(Error::Protocol(
                "tie groups have at least two members".into(),
            ));
        }
        let subset_sum = bidders.iter().fold(Scalar::zero(), |acc, &j| {
            self.params
                .scalar_add(&acc, self.randomizers.randomizer(j).expect("tied bidder"))
        });
        loop {
            let mut drawn = Vec::with_capacity(bidders.len());
            let mut partial = Scalar::zero();
            let mut ok = true;
            for _ in 0..bidders.len() - 1 {
                let r = self.params.sample_nonzero_scalar(&mut self.rng);
                partial = self.params.scalar_add(&partial, &r);
                drawn.push(r);
            }
            let last = self.params.scalar_sub(&subset_sum, &partial);
            if last.is_zero() {
                ok = false;
            }
            drawn.push(last);
            if ok {
                for (&j, r) in bidders.iter().zip(drawn) {
                    self.set_randomizer(j, r);
                }
                return Ok(());
            }
        }
    }

    /// A bidder left after shares went out; his randomizer never cancels,
    /// so the seller folds it back into the total himself.
    pub fn compensate_for(&mut self, bidder: usize) {
        let r = self
            .randomizers
            .randomizer(bidder)
            .cloned()
            .expect("dropped bidder had a randomizer");
        self.compensation.push((bidder, r));
    }

    pub fn compensated_bidders(&self) -> Vec<usize> {
        self.compensation.iter().map(|(j, _)| *j).collect()
    }

    pub fn receive_sum(&mut self, bidder: usize, value: Scalar) {
        self.received_sums.insert(bidder, value);
    }

    /// Discard sums from an aborted exchange round.
    pub fn reset_sums(&mut self) {
        self.received_sums.clear();
    }

    /// Detecting mode: a delivered column sum must open the commitment the
    /// bidder published for everyone.
    pub fn sum_matches_commitment(&self, value: &Scalar, published: &GroupElement) -> bool {
        sharing::commit(&self.params, &self.params.g_bidder, value) == *published
    }

    /// Total of everything received plus the self-compensated randomizers
    /// of post-sharing dropouts.
    pub fn knapsack_value(&self) -> Scalar {
        let sum = self
            .received_sums
            .values()
            .fold(Scalar::zero(), |acc, s| self.params.scalar_add(&acc, s));
        self.compensation
            .iter()
            .fold(sum, |acc, (_, r)| self.params.scalar_add(&acc, r))
    }

    pub fn solve(&mut self) -> Result<(FlagVector, u64, Option<u64>)> {
        let value = self.knapsack_value();
        let flags = knapsack::solve(&self.codebook, &value)?;
        let (highest, second) = knapsack::winning_prices(&flags, &self.prices)?;
        self.flags = Some(flags.clone());
        Ok((flags, highest, second))
    }

    pub fn flags(&self) -> Option<&FlagVector> {
        self.flags.as_ref()
    }

    /// The winner check: unmasking the revealed value with the claimant's
    /// randomizer must land exactly on the code of the top flagged price.
    pub fn verify_claim(&self, claim: &WinnerClaim) -> bool {
        let flags = match &self.flags {
            Some(f) => f,
            None => return false,
        };
        let top = match flags.set_indices_desc().first() {
            Some(&i) => i,
            None => return false,
        };
        let randomizer = match self.randomizers.randomizer(claim.claimant) {
            Some(r) => r,
            None => return false,
        };
        let expected = match self.codebook.code(top) {
            Some(c) => c,
            None => return false,
        };
        self.params.scalar_sub(&claim.revealed, randomizer) == expected
    }

    /// Prover move 1 of the flag-validity proof.
    pub fn proof_commit(&mut self) -> (GroupElement, GroupElement) {
        let nonce = self.params.sample_scalar(&mut self.rng);
        let commit_a = self.params.pow(&self.params.g_seller, &nonce);
        let commit_b = self.params.pow(&self.params.g_bidder, &nonce);
        self.proof_nonce = Some(nonce);
        (commit_a, commit_b)
    }

    /// Prover move 3; the witness is the knapsack value the seller
    /// actually decoded.
    pub fn proof_respond(&mut self, challenge: &Scalar) -> Result<Scalar> {
        let nonce = self
            .proof_nonce
            .take()
            .ok_or_else(|| Error::Protocol("proof response before commit".into()))?;
        Ok(zkp::eqdl_respond(
            &self.params,
            &nonce,
            &self.knapsack_value(),
            challenge,
        ))
    }
}

// ---------------------------------------------------------------------------
// Bidder
// ---------------------------------------------------------------------------

/// Announced commitment view a bidder keeps during a detecting-mode run.
#[derive(Debug, Clone, Default)]
pub struct AnnouncedCommitments {
    pub code_commits: Vec<GroupElement>,
    pub randomizer_commits: Vec<GroupElement>,
    pub shuffled_code_commits: Vec<GroupElement>,
    pub randomizer_commits_b: Vec<GroupElement>,
    pub neg_randomizer_commits_b: Vec<GroupElement>,
}

pub struct BidderEngine {
    pub index: usize,
    params: GroupParams,
    mode: Mode,
    rng: ChaCha20Rng,
    choice: Option<usize>,
    ot_state: Option<OtReceiverState>,
    masked_code: Option<Scalar>,
    pub announced: AnnouncedCommitments,
    /// Shares received this round, by sender.
    received_shares: BTreeMap<usize, Scalar>,
    /// Commitment rows seen this round, by row owner.
    seen_rows: BTreeMap<usize, Vec<(usize, GroupElement)>>,
    column_sum: Option<Scalar>,
}

impl BidderEngine {
    pub fn new(index: usize, config: &AuctionConfig) -> Self {
        BidderEngine {
            index,
            params: config.params.clone(),
            mode: config.mode,
            rng: role_rng(&format!("b{index}"), &config.seeds.bidders[index - 1]),
            choice: None,
            ot_state: None,
            masked_code: None,
            announced: AnnouncedCommitments::default(),
            received_shares: BTreeMap::new(),
            seen_rows: BTreeMap::new(),
            column_sum: None,
        }
    }

    pub fn choose(&mut self, price_index: usize, price_count: usize) -> Result<()> {
        if price_index == 0 || price_index > price_count {
            return Err(Error::Parameter(format!(
                "price index {price_index} outside 1..={price_count}"
            )));
        }
        self.choice = Some(price_index);
        Ok(())
    }

    /// Draw a fresh bid for a tie re-round.
    pub fn rebid(&mut self, price_count: usize) -> usize {
        let pick = (self.rng.next_u64() as usize) % price_count + 1;
        self.choice = Some(pick);
        pick
    }

    pub fn choice(&self) -> Option<usize> {
        self.choice
    }

    pub fn masked_code(&self) -> Option<&Scalar> {
        self.masked_code.as_ref()
    }

    pub fn begin_ot(&mut self) -> Result<OtRequest> {
        let choice = self
            .choice
            .ok_or_else(|| Error::Protocol("OT before bidding".into()))?;
        let (request, state) = ot::ot_request(choice, &self.params, &mut self.rng)?;
        self.ot_state = Some(state);
        Ok(request)
    }

    /// Recover the delivered code. In detecting mode the returned flag is
    /// the receipt verdict; honest mode trusts the delivery.
    pub fn finish_ot(&mut self, response: &OtResponse) -> Result<bool> {
        let state = self
            .ot_state
            .take()
            .ok_or_else(|| Error::Protocol("OT response without a request".into()))?;
        let bytes = ot::ot_recover(response, &state, &self.params)?;
        let decoded = ot::code_bytes_to_scalar(&bytes, &self.params).ok();
        match self.mode {
            Mode::Honest => {
                let code = decoded.ok_or_else(|| {
                    Error::Protocol("recovered OT bytes outside the scalar range".into())
                })?;
                self.masked_code = Some(code);
                Ok(true)
            }
            Mode::MaliciousDetecting => {
                let choice = state.choice();
                let commits = self
                    .announced
                    .code_commits
                    .get(choice - 1)
                    .zip(self.announced.randomizer_commits.get(self.index - 1));
                let verdict = decoded.as_ref().is_some_and(|code| {
                    commits.is_some_and(|(code_commit, randomizer_commit)| {
                        sharing::verify_received_code(
                            &self.params,
                            code_commit,
                            randomizer_commit,
                            code,
                        )
                    })
                });
                if verdict {
                    self.masked_code = decoded;
                }
                Ok(verdict)
            }
        }
    }

    /// Commitment to the held masked code, published away from the seller.
    pub fn masked_code_commit(&self) -> Result<GroupElement> {
        let code = self
            .masked_code
            .as_ref()
            .ok_or_else(|| Error::Protocol("no code held yet".into()))?;
        Ok(sharing::commit(&self.params, &self.params.g_bidder, code))
    }

    pub fn verify_peer_commit(&self, peer: usize, commit: &GroupElement) -> bool {
        match self.announced.neg_randomizer_commits_b.get(peer - 1) {
            Some(neg) => sharing::verify_zeta_membership(
                &self.params,
                commit,
                neg,
                &self.announced.shuffled_code_commits,
            ),
            None => false,
        }
    }

    /// Split the held code among `recipients` (which include this bidder).
    /// `fixed_row` pins the split when it matches the live table size.
    pub fn split_code(
        &mut self,
        recipients: &[usize],
        fixed_row: Option<&[String]>,
    ) -> Result<Vec<(usize, Scalar)>> {
        let code = self
            .masked_code
            .clone()
            .ok_or_else(|| Error::Protocol("sharing before OT".into()))?;
        let shares: Vec<Scalar> = match fixed_row {
            Some(raw) if raw.len() == recipients.len() => {
                let parsed = raw
                    .iter()
                    .map(|s| parse_biguint(s).and_then(|v| Scalar::new(v, &self.params.q)))
                    .collect::<Result<Vec<_>>>()?;
                let total = parsed
                    .iter()
                    .fold(Scalar::zero(), |acc, s| self.params.scalar_add(&acc, s));
                if total != code {
                    return Err(Error::Config(format!(
                        "fixed share row for b{} does not sum to the held code",
                        self.index
                    )));
                }
                parsed
            }
            _ => sharing::split_additive(&code, recipients.len(), &self.params.q, &mut self.rng)?,
        };
        Ok(recipients.iter().copied().zip(shares).collect())
    }

    pub fn begin_share_round(&mut self) {
        self.received_shares.clear();
        self.seen_rows.clear();
        self.column_sum = None;
    }

    pub fn record_row(&mut self, owner: usize, row: Vec<(usize, GroupElement)>) {
        self.seen_rows.insert(owner, row);
    }

    /// Row consistency: the published commitments of `owner` must multiply
    /// out to his masked-code commitment.
    pub fn verify_peer_row(&self, owner: usize, owner_code_commit: &GroupElement) -> bool {
        match self.seen_rows.get(&owner) {
            Some(row) => {
                let commits: Vec<GroupElement> = row.iter().map(|(_, c)| c.clone()).collect();
                sharing::verify_row(&self.params, &commits, owner_code_commit)
            }
            None => false,
        }
    }

    /// Accept a share from `sender`; in detecting mode it must open the
    /// commitment `sender` published for this recipient.
    pub fn receive_share(&mut self, sender: usize, value: Scalar) -> bool {
        let verdict = match self.mode {
            Mode::Honest => true,
            Mode::MaliciousDetecting => self
                .seen_rows
                .get(&sender)
                .and_then(|row| {
                    row.iter()
                        .find(|(to, _)| *to == self.index)
                        .map(|(_, commit)| sharing::verify_share(&self.params, &value, commit))
                })
                .unwrap_or(false),
        };
        if verdict {
            self.received_shares.insert(sender, value);
        }
        verdict
    }

    pub fn drop_share_from(&mut self, sender: usize) {
        self.received_shares.remove(&sender);
    }

    pub fn finish_share_round(&mut self, expected_senders: &[usize]) -> Result<Scalar> {
        for sender in expected_senders {
            if !self.received_shares.contains_key(sender) {
                return Err(Error::Protocol(format!(
                    "b{} never received a share from b{sender}",
                    self.index
                )));
            }
        }
        let shares: Vec<Scalar> = self.received_shares.values().cloned().collect();
        let sum = sharing::column_sum(&shares, &self.params.q);
        self.column_sum = Some(sum.clone());
        Ok(sum)
    }

    pub fn column_sum(&self) -> Option<&Scalar> {
        self.column_sum.as_ref()
    }

    /// Everyone can check a published column-sum commitment against the
    /// commitments of the shares feeding that column.
    pub fn verify_peer_sum_commit(
        &self,
        peer: usize,
        sum_commit: &GroupElement,
        row_owners: &[usize],
    ) -> bool {
        let column: Option<Vec<GroupElement>> = row_owners
            .iter()
            .map(|owner| {
                self.seen_rows.get(owner).and_then(|row| {
                    row.iter()
                        .find(|(to, _)| *to == peer)
                        .map(|(_, c)| c.clone())
                })
            })
            .collect();
        match column {
            Some(commits) => {
                let product = commits
                    .iter()
                    .fold(GroupElement::one(), |acc, c| self.params.mul(&acc, c));
                product == *sum_commit
            }
            None => false,
        }
    }

    /// Claim the win by opening the held code.
    pub fn claim(&self) -> Result<WinnerClaim> {
        Ok(WinnerClaim {
            claimant: self.index,
            revealed: self
                .masked_code
                .clone()
                .ok_or_else(|| Error::Protocol("claim without a code".into()))?,
        })
    }

    /// Verifier side of the flag-validity proof.
    pub fn proof_challenge(&mut self) -> Scalar {
        self.params.sample_nonzero_scalar(&mut self.rng)
    }

    pub fn flag_statement(
        &self,
        announced_flags: &FlagVector,
        sum_commits: &[GroupElement],
    ) -> EqdlStatement {
        zkp::proof2_statement(
            &self.params,
            &self.announced.code_commits,
            announced_flags,
            sum_commits,
        )
    }

    pub fn verify_flag_proof(
        &self,
        announced_flags: &FlagVector,
        sum_commits: &[GroupElement],
        session: &EqdlProofSession,
    ) -> bool {
        let statement = self.flag_statement(announced_flags, sum_commits);
        zkp::eqdl_verify(&self.params, &statement, session)
    }
}

/// Group bidders whose code commitments unmask to the same value: equal
/// results mean equal bids, which would collapse the subset-sum decoding
/// and must be resolved before any share moves. Verification is by value
/// equality only; nobody learns *which* price the tied group chose.
pub fn detect_tie(
    params: &GroupParams,
    masked_code_commits: &[(usize, GroupElement)],
    neg_randomizer_commits_b: &[GroupElement],
) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<Vec<u8>, Vec<usize>> = BTreeMap::new();
    for (bidder, commit) in masked_code_commits {
        let unmasked = match neg_randomizer_commits_b.get(bidder - 1) {
            Some(neg) => params.mul(commit, neg),
            None => continue,
        };
        groups
            .entry(unmasked.value().to_bytes_be())
            .or_default()
            .push(*bidder);
    }
    groups
        .into_values()
        .filter(|members| members.len() >= 2)
        .collect()
}

/// Payment under the configured rule. Second price falls back to the
/// lowest listed price when only one flag is set.
pub fn payment(rule: PaymentRule, highest: u64, second: Option<u64>, prices: &PriceTable) -> u64 {
    match rule {
        PaymentRule::FirstPrice => highest,
        PaymentRule::SecondPrice => second.unwrap_or_else(|| prices.prices()[0]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_config() -> AuctionConfig {
        AuctionConfig {
            mode: Mode::Honest,
            payment_rule: PaymentRule::SecondPrice,
            params: GroupParams::toy(),
            prices: PriceTable::new(vec![10, 20, 30, 40, 50, 60, 70, 80]).unwrap(),
            bidder_count: 4,
            seeds: SeedSpec::uniform("unit", 4),
            fixed: Some(FixedSetup {
                codes: Some(
                    ["3", "5", "10", "21", "40", "90", "180", "360"]
                        .map(String::from)
                        .to_vec(),
                ),
                randomizers: Some(["700", "100", "200", "502"].map(String::from).to_vec()),
                share_rows: None,
            }),
        }
    }

    fn scalar(v: u32) -> Scalar {
        Scalar::new(BigUint::from(v), &GroupParams::toy().q).unwrap()
    }

    #[test]
    fn seller_uses_fixed_setup() {
        let seller = SellerEngine::new(&toy_config()).unwrap();
        assert_eq!(seller.codebook().codes()[7], BigUint::from(360u32));
        assert_eq!(seller.randomizers().randomizer(4).unwrap(), &scalar(502));
        assert_eq!(seller.code_commits().len(), 8);
        assert_eq!(seller.randomizer_commits().len(), 4);
    }

    #[test]
    fn shuffled_commits_are_a_permutation() {
        let seller = SellerEngine::new(&toy_config()).unwrap();
        let params = GroupParams::toy();
        let mut expected: Vec<GroupElement> = seller
            .codebook()
            .codes()
            .iter()
            .map(|c| {
                let s = Scalar::new(c.clone(), &params.q).unwrap();
                sharing::commit(&params, &params.g_bidder, &s)
            })
            .collect();
        let mut got = seller.shuffled_code_commits().to_vec();
        expected.sort_by(|a, b| a.value().cmp(b.value()));
        got.sort_by(|a, b| a.value().cmp(b.value()));
        assert_eq!(expected, got);
    }

    #[test]
    fn ot_messages_are_masked_codes() {
        let seller = SellerEngine::new(&toy_config()).unwrap();
        let messages = seller.ot_messages_for(1);
        // slot 3 for bidder 1: 10 + 700 mod 751 = 710
        let params = GroupParams::toy();
        let decoded = ot::code_bytes_to_scalar(&messages[2], &params).unwrap();
        assert_eq!(decoded, scalar(710));
    }

    #[test]
    fn bid_index_validation() {
        let config = toy_config();
        let mut bidder = BidderEngine::new(1, &config);
        assert!(bidder.choose(0, 8).is_err());
        assert!(bidder.choose(9, 8).is_err());
        assert!(bidder.choose(8, 8).is_ok());
    }

    #[test]
    fn claim_check_golden_values() {
        let mut seller = SellerEngine::new(&toy_config()).unwrap();
        for (bidder, sum) in [(1, 290u32), (2, 535), (3, 294), (4, 26)] {
            seller.receive_sum(bidder, scalar(sum));
        }
        let (flags, highest, second) = seller.solve().unwrap();
        assert_eq!(
            flags.bits(),
            &[true, false, true, true, false, false, false, true]
        );
        assert_eq!((highest, second), (80, Some(40)));

        // the true holder of the top code passes: 111 - 502 = 360 mod 751
        assert!(seller.verify_claim(&WinnerClaim {
            claimant: 4,
            revealed: scalar(111),
        }));
        // a false claim with someone else's code fails: 710 - 700 = 10 != 360
        assert!(!seller.verify_claim(&WinnerClaim {
            claimant: 1,
            revealed: scalar(710),
        }));
        // an arbitrary opening fails
        assert!(!seller.verify_claim(&WinnerClaim {
            claimant: 2,
            revealed: Scalar::zero(),
        }));
    }

    #[test]
    fn repudiation_blocked_after_acknowledgement() {
        let mut seller = SellerEngine::new(&toy_config()).unwrap();
        assert!(seller.dispute_code(2).is_ok());
        seller.record_acknowledgement(2, true);
        assert!(seller.dispute_code(2).is_err());
    }

    #[test]
    fn redistribution_keeps_zero_sum() {
        let mut seller = SellerEngine::new(&toy_config()).unwrap();
        let live = [1usize, 3, 4];
        let absorber = seller.redistribute_randomizer(2, &live).unwrap();
        assert_eq!(absorber, 1);
        // 700 + 100 = 800 mod 751 = 49
        assert_eq!(seller.randomizers().randomizer(1).unwrap(), &scalar(49));
        let params = GroupParams::toy();
        let total = live.iter().fold(Scalar::zero(), |acc, &j| {
            params.scalar_add(&acc, seller.randomizers().randomizer(j).unwrap())
        });
        assert!(total.is_zero());
    }

    #[test]
    fn refreshed_tied_randomizers_preserve_subset_sum() {
        let mut seller = SellerEngine::new(&toy_config()).unwrap();
        let params = GroupParams::toy();
        let before = params.scalar_add(
            seller.randomizers().randomizer(2).unwrap(),
            seller.randomizers().randomizer(3).unwrap(),
        );
        seller.refresh_randomizers(&[2, 3]).unwrap();
        let after = params.scalar_add(
            seller.randomizers().randomizer(2).unwrap(),
            seller.randomizers().randomizer(3).unwrap(),
        );
        assert_eq!(before, after);
        assert!(!seller.randomizers().randomizer(2).unwrap().is_zero());
        assert!(!seller.randomizers().randomizer(3).unwrap().is_zero());
    }

    #[test]
    fn compensation_restores_the_total() {
        let mut seller = SellerEngine::new(&toy_config()).unwrap();
        // B4 leaves after sharing: survivors' masked codes sum to
        // 710 + 103 + 221 = 1034 = 283 mod 751; adding back 502 gives 34,
        // the subset sum of the remaining choices {3, 1, 4}.
        seller.receive_sum(1, scalar(283));
        seller.receive_sum(2, Scalar::zero());
        seller.receive_sum(3, Scalar::zero());
        seller.compensate_for(4);
        assert_eq!(seller.knapsack_value(), scalar(34));
        let (flags, highest, second) = seller.solve().unwrap();
        assert_eq!(
            flags.bits(),
            &[true, false, true, true, false, false, false, false]
        );
        assert_eq!((highest, second), (40, Some(30)));
    }

    #[test]
    fn payment_rules() {
        let prices = PriceTable::new(vec![10, 20, 30]).unwrap();
        assert_eq!(payment(PaymentRule::FirstPrice, 30, Some(20), &prices), 30);
        assert_eq!(payment(PaymentRule::SecondPrice, 30, Some(20), &prices), 20);
        // single flag set: fall back to the reserve, the lowest listed price
        assert_eq!(payment(PaymentRule::SecondPrice, 30, None, &prices), 10);
    }

    #[test]
    fn config_validation() {
        let mut config = toy_config();
        config.bidder_count = 1;
        assert!(config.validate().is_err());
        let mut config = toy_config();
        config.seeds.bidders.pop();
        assert!(config.validate().is_err());
        assert!(toy_config().validate().is_ok());
    }

    #[test]
    fn tie_detection_groups_equal_bids() {
        let params = GroupParams::toy();
        let seller = SellerEngine::new(&toy_config()).unwrap();
        let neg = seller.neg_randomizer_commits_b().to_vec();
        let commit_for = |bidder: usize, price_index: usize| {
            let code = seller.codebook().code(price_index).unwrap();
            let masked = sharing::randomize_code(
                &code,
                seller.randomizers().randomizer(bidder).unwrap(),
                &params.q,
            );
            (bidder, sharing::commit(&params, &params.g_bidder, &masked))
        };

        // the worked example's distinct bids produce no groups
        let distinct: Vec<_> = [(1, 3), (2, 1), (3, 4), (4, 8)]
            .iter()
            .map(|&(b, i)| commit_for(b, i))
            .collect();
        assert!(detect_tie(&params, &distinct, &neg).is_empty());

        // two bidders on index 5 form one group
        let pair: Vec<_> = [(1, 5), (2, 1), (3, 5), (4, 8)]
            .iter()
            .map(|&(b, i)| commit_for(b, i))
            .collect();
        assert_eq!(detect_tie(&params, &pair, &neg), vec![vec![1, 3]]);

        // everyone on index 2 forms one group of size n
        let all: Vec<_> = (1..=4).map(|b| commit_for(b, 2)).collect();
        assert_eq!(detect_tie(&params, &all, &neg), vec![vec![1, 2, 3, 4]]);
    }

    #[test]
    fn party_and_phase_tags_roundtrip() {
        for party in [PartyId::Seller, PartyId::Bidder(3), PartyId::Env] {
            assert_eq!(party.to_string().parse::<PartyId>().unwrap(), party);
        }
        for phase in [
            Phase::Init,
            Phase::Bid,
            Phase::Ot,
            Phase::Commit,
            Phase::Share,
            Phase::Sigma,
            Phase::Solve,
            Phase::Claim,
            Phase::Proof,
            Phase::Done,
        ] {
            assert_eq!(phase.tag().parse::<Phase>().unwrap(), phase);
        }
        assert!("b0".parse::<PartyId>().is_err());
        assert!("x1".parse::<PartyId>().is_err());
    }
}
