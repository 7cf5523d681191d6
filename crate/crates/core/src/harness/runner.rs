//! End-to-end auction orchestration.
//!
//! One deterministic scheduler drives the seller and bidder engines
//! phase by phase, pushing every exchanged value through the bus so the
//! transcript records exactly what crossed each wire. Adversary effects
//! (wire edits, corrupt engines, dropouts) land here; honest logic stays
//! in the engines.

use std::collections::BTreeMap;

use num_bigint::BigUint;

use super::adversary::{AdversaryScript, CompiledScript, CorruptBidderAction};
use super::bus::Bus;
use super::message::{Channel, Message, Recipient, ShareCommitEntry, Transcript};
use crate::group::{GroupElement, Scalar};
use crate::knapsack::FlagVector;
use crate::ot::{OtRequest, OtResponse};
use crate::protocol::{
    payment, AbortReason, AuctionConfig, BidderEngine, Detection, Mode, Outcome, PartyId, Phase,
    SellerEngine, WinnerClaim,
};
use crate::zkp::EqdlProofSession;
use crate::{Error, Result};

/// Everything a run produced besides the transcript: the outcome, every
/// attributed detection, and enough interior values to cross-check a run
/// against an independent oracle.
#[derive(Debug)]
pub struct RunReport {
    pub outcome: Outcome,
    pub detections: Vec<Detection>,
    /// Live bidders' effective price choices when the solve ran.
    pub final_bids: Vec<(usize, usize)>,
    /// Masked codes as recovered over OT.
    pub recovered_codes: Vec<(usize, Scalar)>,
    /// Column sums as the seller received them.
    pub column_sums: Vec<(usize, Scalar)>,
    pub knapsack_value: Option<Scalar>,
    pub flags: Option<FlagVector>,
    pub announced_highest: Option<u64>,
    pub announced_second: Option<u64>,
    pub rebid_rounds: usize,
}

/// Run one configured auction to completion.
pub fn run_auction(
    config: &AuctionConfig,
    bids: &[usize],
    script: Option<&AdversaryScript>,
) -> Result<(RunReport, Transcript)> {
    config.validate()?;
    if bids.len() != config.bidder_count {
        return Err(Error::Config(format!(
            "{} bids for {} bidders",
            bids.len(),
            config.bidder_count
        )));
    }
    let compiled = CompiledScript::new(script, config.bidder_count)?;
    let seller = SellerEngine::new(config)?;
    let bidders: BTreeMap<usize, BidderEngine> = (1..=config.bidder_count)
        .map(|j| (j, BidderEngine::new(j, config)))
        .collect();
    let mut runner = Runner {
        config,
        seller,
        bidders,
        bus: Bus::new(config.bidder_count, compiled),
        detections: Vec::new(),
        zetas: BTreeMap::new(),
        sum_commits: BTreeMap::new(),
        delivered_sums: BTreeMap::new(),
        announced_flags: None,
        announced_highest: None,
        announced_second: None,
        shared: false,
        commit_done: false,
        rebid_rounds: 0,
    };
    let outcome = runner.execute(bids)?;
    runner.emit_result(&outcome)?;
    let Runner {
        seller,
        bidders,
        bus,
        detections,
        delivered_sums,
        announced_flags,
        announced_highest,
        announced_second,
        rebid_rounds,
        ..
    } = runner;
    let final_bids = bus
        .live_bidders()
        .into_iter()
        .filter_map(|j| bidders[&j].choice().map(|c| (j, c)))
        .collect();
    let recovered_codes = bus
        .live_bidders()
        .into_iter()
        .filter_map(|j| bidders[&j].masked_code().cloned().map(|c| (j, c)))
        .collect();
    let report = RunReport {
        outcome,
        detections,
        final_bids,
        recovered_codes,
        column_sums: delivered_sums.into_iter().collect(),
        knapsack_value: seller.flags().map(|_| seller.knapsack_value()),
        flags: announced_flags,
        announced_highest,
        announced_second,
        rebid_rounds,
    };
    Ok((report, bus.into_transcript()))
}

struct Runner<'a> {
    config: &'a AuctionConfig,
    seller: SellerEngine,
    bidders: BTreeMap<usize, BidderEngine>,
    bus: Bus,
    detections: Vec<Detection>,
    /// Masked-code commitments as the bidder channel saw them.
    zetas: BTreeMap<usize, GroupElement>,
    /// Column-sum commitments as published.
    sum_commits: BTreeMap<usize, GroupElement>,
    /// Column sums as delivered to the seller.
    delivered_sums: BTreeMap<usize, Scalar>,
    announced_flags: Option<FlagVector>,
    announced_highest: Option<u64>,
    announced_second: Option<u64>,
    /// Set once the first full share exchange completed.
    shared: bool,
    /// Set once the commitment phase ran (re-runs then must re-commit).
    commit_done: bool,
    rebid_rounds: usize,
}

/// Shorthand: protocol-level aborts bubble as `Ok(Some(outcome))`.
type StepResult = Result<Option<Outcome>>;

impl<'a> Runner<'a> {
    fn detecting(&self) -> bool {
        self.config.mode == Mode::MaliciousDetecting
    }

    fn k(&self) -> usize {
        self.config.prices.len()
    }

    fn execute(&mut self, bids: &[usize]) -> Result<Outcome> {
        self.phase_init()?;
        if let Some(out) = self.phase_bid(bids)? {
            return Ok(out);
        }
        if let Some(out) = self.phase_ot()? {
            return Ok(out);
        }
        if self.detecting() {
            if let Some(out) = self.phase_commit()? {
                return Ok(out);
            }
        }
        if let Some(out) = self.phase_share_and_sigma()? {
            return Ok(out);
        }
        if let Some(out) = self.phase_solve()? {
            return Ok(out);
        }
        let winner = match self.phase_claim()? {
            Ok(winner) => winner,
            Err(out) => return Ok(out),
        };
        if self.detecting() {
            if let Some(out) = self.phase_proof(winner)? {
                return Ok(out);
            }
        }
        let highest = self.announced_highest.expect("announced before claim");
        let paid = payment(
            self.config.payment_rule,
            highest,
            self.announced_second,
            &self.config.prices,
        );
        Ok(Outcome::Winner {
            highest,
            payer: winner,
            paid,
        })
    }

    // -- init ---------------------------------------------------------------

    fn phase_init(&mut self) -> Result<()> {
        let announce = Message::AuctionAnnounce {
            mode: self.config.mode.tag().to_string(),
            payment_rule: match self.config.payment_rule {
                crate::protocol::PaymentRule::FirstPrice => "first_price".into(),
                crate::protocol::PaymentRule::SecondPrice => "second_price".into(),
            },
            bidder_count: self.config.bidder_count as u64,
            price_count: self.k() as u64,
            prices: self
                .config
                .prices
                .prices()
                .iter()
                .map(|p| p.to_string())
                .collect(),
        };
        self.bus.deliver(
            Phase::Init,
            Channel::Public,
            PartyId::Seller,
            Recipient::AllParties,
            announce,
        )?;
        if self.detecting() {
            let message = Message::SellerCommitments {
                code_commits: self.seller.code_commits().to_vec(),
                randomizer_commits: self.seller.randomizer_commits().to_vec(),
            };
            let outcome = self.bus.deliver(
                Phase::Init,
                Channel::Public,
                PartyId::Seller,
                Recipient::AllParties,
                message,
            )?;
            match outcome.message {
                Some(Message::SellerCommitments {
                    code_commits,
                    randomizer_commits,
                }) => {
                    if code_commits.len() != self.k()
                        || randomizer_commits.len() != self.config.bidder_count
                    {
                        return Err(Error::Script(
                            "seller_commitments replaced with a wrong-shape payload".into(),
                        ));
                    }
                    for bidder in self.bidders.values_mut() {
                        bidder.announced.code_commits = code_commits.clone();
                        bidder.announced.randomizer_commits = randomizer_commits.clone();
                    }
                }
                Some(_) => return Err(Error::Script("seller_commitments replaced".into())),
                None => {
                    return Err(Error::Script(
                        "seller_commitments dropped; the run cannot start".into(),
                    ))
                }
            }
        }
        Ok(())
    }

    // -- bid ----------------------------------------------------------------

    fn phase_bid(&mut self, bids: &[usize]) -> StepResult {
        if let Some(out) = self.apply_phase_drops(Phase::Bid)? {
            return Ok(Some(out));
        }
        let k = self.k();
        for j in self.bus.live_bidders() {
            self.bidders
                .get_mut(&j)
                .expect("live bidder")
                .choose(bids[j - 1], k)?;
        }
        Ok(None)
    }

    // -- oblivious transfer ---------------------------------------------------

    fn phase_ot(&mut self) -> StepResult {
        if let Some(out) = self.apply_phase_drops(Phase::Ot)? {
            return Ok(Some(out));
        }
        for j in self.bus.live_bidders() {
            match self.run_single_ot(j, Phase::Ot)? {
                OtRun::Completed(true) => {
                    if self.detecting() {
                        if let Some(out) = self.broadcast_ot_verdict(j, true, Phase::Ot)? {
                            return Ok(Some(out));
                        }
                    }
                }
                OtRun::Completed(false) => {
                    if let Some(out) = self.broadcast_ot_verdict(j, false, Phase::Ot)? {
                        return Ok(Some(out));
                    }
                }
                OtRun::SenderHalted => {
                    if let Some(out) = self.handle_dropout(j, Phase::Ot)? {
                        return Ok(Some(out));
                    }
                }
                OtRun::SellerHalted => {
                    return Ok(Some(Outcome::Aborted {
                        reason: AbortReason::SellerHalted,
                        culprit: Some(PartyId::Seller),
                    }))
                }
            }
        }
        // A scripted post-acknowledgement dispute is rejected on the spot:
        // acknowledged receipt cannot be repudiated.
        if let Some(target) = self.bus.script().corrupt_seller.dispute_code_of.clone() {
            if let Ok(PartyId::Bidder(j)) = target.parse::<PartyId>() {
                if self.seller.dispute_code(j).is_err() {
                    self.bus.deliver(
                        Phase::Ot,
                        Channel::Public,
                        PartyId::Env,
                        Recipient::AllParties,
                        Message::ComplaintRejected {
                            against: target,
                            reason: "code receipt acknowledged; cannot repudiate".into(),
                        },
                    )?;
                }
            }
        }
        Ok(None)
    }

    /// One request/response exchange with bidder `j`.
    fn run_single_ot(&mut self, j: usize, phase: Phase) -> Result<OtRun> {
        let request = self.bidders.get_mut(&j).expect("live").begin_ot()?;
        let sent = self.bus.deliver(
            phase,
            Channel::Private,
            PartyId::Bidder(j),
            Recipient::Party(PartyId::Seller),
            Message::OtRequest {
                blinded_choice: request.blinded_choice,
            },
        )?;
        let request = match sent.message {
            Some(Message::OtRequest { blinded_choice }) => OtRequest { blinded_choice },
            Some(_) => {
                return Err(Error::Script(
                    "ot_request replaced with foreign kind".into(),
                ))
            }
            None => return Ok(OtRun::SenderHalted),
        };
        let mut messages = self.seller.ot_messages_for(j);
        if let Some(swap) = self.bus.script().corrupt_seller.swap_ot_slots.clone() {
            let applies = swap
                .bidder
                .as_deref()
                .map(|b| b == PartyId::Bidder(j).to_string())
                .unwrap_or(true);
            if applies && swap.first <= messages.len() && swap.second <= messages.len() {
                messages.swap(swap.first - 1, swap.second - 1);
            }
        }
        let response = self.seller.respond_ot(&messages, &request)?;
        let sent = self.bus.deliver(
            phase,
            Channel::Private,
            PartyId::Seller,
            Recipient::Party(PartyId::Bidder(j)),
            Message::OtResponse {
                slots: response.slots,
            },
        )?;
        let response = match sent.message {
            Some(Message::OtResponse { slots }) => OtResponse { slots },
            Some(_) => {
                return Err(Error::Script(
                    "ot_response replaced with foreign kind".into(),
                ))
            }
            None => return Ok(OtRun::SellerHalted),
        };
        let verdict = self
            .bidders
            .get_mut(&j)
            .expect("live")
            .finish_ot(&response)?;
        Ok(OtRun::Completed(verdict))
    }

    fn broadcast_ot_verdict(&mut self, j: usize, accepted: bool, phase: Phase) -> StepResult {
        let message = if accepted {
            Message::OtAccept {}
        } else {
            Message::OtReject {}
        };
        self.bus.deliver(
            phase,
            Channel::Public,
            PartyId::Bidder(j),
            Recipient::AllParties,
            message,
        )?;
        self.seller.record_acknowledgement(j, accepted);
        if accepted {
            return Ok(None);
        }
        self.detections.push(Detection {
            check: "ot-code-commitment".into(),
            culprit: PartyId::Seller,
            reporter: PartyId::Bidder(j),
        });
        Ok(Some(Outcome::Aborted {
            reason: AbortReason::OtRejected,
            culprit: Some(PartyId::Seller),
        }))
    }

    // -- commitments, membership, ties ----------------------------------------

    fn phase_commit(&mut self) -> StepResult {
        if let Some(out) = self.apply_phase_drops(Phase::Commit)? {
            return Ok(Some(out));
        }
        for j in self.bus.live_bidders() {
            if let Some(out) = self.publish_zeta(j, Phase::Commit)? {
                return Ok(Some(out));
            }
        }
        let aids = Message::CodeCommitAids {
            shuffled_code_commits: self.seller.shuffled_code_commits().to_vec(),
            randomizer_commits: self.seller.randomizer_commits_b().to_vec(),
            neg_randomizer_commits: self.seller.neg_randomizer_commits_b().to_vec(),
        };
        let outcome = self.bus.deliver(
            Phase::Commit,
            Channel::Public,
            PartyId::Seller,
            Recipient::AllParties,
            aids,
        )?;
        match outcome.message {
            Some(Message::CodeCommitAids {
                shuffled_code_commits,
                randomizer_commits,
                neg_randomizer_commits,
            }) => {
                if shuffled_code_commits.len() != self.k()
                    || randomizer_commits.len() != self.config.bidder_count
                    || neg_randomizer_commits.len() != self.config.bidder_count
                {
                    return Err(Error::Script(
                        "code_commit_aids replaced with a wrong-shape payload".into(),
                    ));
                }
                for bidder in self.bidders.values_mut() {
                    bidder.announced.shuffled_code_commits = shuffled_code_commits.clone();
                    bidder.announced.randomizer_commits_b = randomizer_commits.clone();
                    bidder.announced.neg_randomizer_commits_b = neg_randomizer_commits.clone();
                }
            }
            Some(_) => return Err(Error::Script("code_commit_aids replaced".into())),
            None => {
                return Err(Error::Script(
                    "code_commit_aids dropped; bidders cannot verify".into(),
                ))
            }
        }
        self.commit_done = true;

        let live = self.bus.live_bidders();
        for j in live {
            if let Some(out) = self.check_membership(j, Phase::Commit)? {
                return Ok(Some(out));
            }
        }
        self.resolve_ties()
    }

    fn publish_zeta(&mut self, j: usize, phase: Phase) -> StepResult {
        let commit = match self.bus.script().corruption_for(j) {
            Some(CorruptBidderAction::FakeCodeCommit { exponent }) => {
                let raw = BigUint::parse_bytes(exponent.as_bytes(), 10)
                    .ok_or_else(|| Error::Script(format!("bad exponent {exponent:?}")))?;
                let params = &self.config.params;
                let fake = Scalar::new(raw % &params.q, &params.q).expect("reduced");
                params.pow(&params.g_bidder, &fake)
            }
            _ => self.bidders[&j].masked_code_commit()?,
        };
        let sent = self.bus.deliver(
            phase,
            Channel::BidderOnly,
            PartyId::Bidder(j),
            Recipient::AllBidders,
            Message::MaskedCodeCommit { commit },
        )?;
        match sent.message {
            Some(Message::MaskedCodeCommit { commit }) => {
                self.zetas.insert(j, commit);
                Ok(None)
            }
            Some(_) => Err(Error::Script("masked_code_commit replaced".into())),
            None => self.handle_dropout(j, phase),
        }
    }

    /// Every live bidder checks `j`'s code commitment for membership; a
    /// failure disqualifies `j`.
    fn check_membership(&mut self, j: usize, phase: Phase) -> StepResult {
        let zeta = match self.zetas.get(&j) {
            Some(z) => z.clone(),
            None => return Ok(None),
        };
        let verdict_by = self
            .bus
            .live_bidders()
            .into_iter()
            .find(|&v| v != j && !self.bidders[&v].verify_peer_commit(j, &zeta));
        if let Some(reporter) = verdict_by {
            self.bus.deliver(
                phase,
                Channel::BidderOnly,
                PartyId::Bidder(reporter),
                Recipient::AllBidders,
                Message::MembershipComplaint {
                    against: PartyId::Bidder(j).to_string(),
                },
            )?;
            self.detections.push(Detection {
                check: "code-commit-membership".into(),
                culprit: PartyId::Bidder(j),
                reporter: PartyId::Bidder(reporter),
            });
            self.zetas.remove(&j);
            return self.handle_dropout(j, phase);
        }
        Ok(None)
    }

    /// Group live bidders by unmasked code commitment; equal values mean
    /// equal bids. Resolve by re-bidding the tied set with fresh
    /// randomizers, at most three rounds.
    fn resolve_ties(&mut self) -> StepResult {
        loop {
            let live = self.bus.live_bidders();
            let observer = match live.first() {
                Some(&v) => v,
                None => return Ok(None),
            };
            let commits: Vec<(usize, GroupElement)> = live
                .iter()
                .map(|&j| (j, self.zetas.get(&j).expect("live bidder committed").clone()))
                .collect();
            let tied = crate::protocol::detect_tie(
                &self.config.params,
                &commits,
                &self.bidders[&observer].announced.neg_randomizer_commits_b,
            );
            if tied.is_empty() {
                return Ok(None);
            }
            if self.rebid_rounds >= 3 {
                return Ok(Some(Outcome::Aborted {
                    reason: AbortReason::UnresolvedTie,
                    culprit: None,
                }));
            }
            self.rebid_rounds += 1;
            self.bus.deliver(
                Phase::Commit,
                Channel::Public,
                PartyId::Bidder(observer),
                Recipient::AllParties,
                Message::TieReport {
                    groups: tied
                        .iter()
                        .map(|g| g.iter().map(|&j| PartyId::Bidder(j).to_string()).collect())
                        .collect(),
                },
            )?;
            let rebidders: Vec<usize> = tied.into_iter().flatten().collect();
            self.seller.refresh_randomizers(&rebidders)?;
            for &j in &rebidders {
                self.emit_randomizer_update(j, Phase::Commit)?;
            }
            self.bus.deliver(
                Phase::Commit,
                Channel::Public,
                PartyId::Seller,
                Recipient::AllParties,
                Message::RebidRequest {
                    bidders: rebidders
                        .iter()
                        .map(|&j| PartyId::Bidder(j).to_string())
                        .collect(),
                },
            )?;
            let k = self.k();
            for &j in &rebidders {
                self.bidders.get_mut(&j).expect("live").rebid(k);
                match self.run_single_ot(j, Phase::Commit)? {
                    OtRun::Completed(verdict) => {
                        if let Some(out) = self.broadcast_ot_verdict(j, verdict, Phase::Commit)? {
                            return Ok(Some(out));
                        }
                    }
                    OtRun::SenderHalted => {
                        if let Some(out) = self.handle_dropout(j, Phase::Commit)? {
                            return Ok(Some(out));
                        }
                        continue;
                    }
                    OtRun::SellerHalted => {
                        return Ok(Some(Outcome::Aborted {
                            reason: AbortReason::SellerHalted,
                            culprit: Some(PartyId::Seller),
                        }))
                    }
                }
                if self.bus.is_live(j) {
                    if let Some(out) = self.publish_zeta(j, Phase::Commit)? {
                        return Ok(Some(out));
                    }
                    if let Some(out) = self.check_membership(j, Phase::Commit)? {
                        return Ok(Some(out));
                    }
                }
            }
        }
    }

    fn emit_randomizer_update(&mut self, j: usize, phase: Phase) -> Result<()> {
        let update = Message::RandomizerUpdate {
            bidder: PartyId::Bidder(j).to_string(),
            randomizer_commit: self.seller.randomizer_commits()[j - 1].clone(),
            randomizer_commit_b: self.seller.randomizer_commits_b()[j - 1].clone(),
            neg_randomizer_commit_b: self.seller.neg_randomizer_commits_b()[j - 1].clone(),
        };
        let outcome = self.bus.deliver(
            phase,
            Channel::Public,
            PartyId::Seller,
            Recipient::AllParties,
            update,
        )?;
        if let Some(Message::RandomizerUpdate {
            bidder,
            randomizer_commit,
            randomizer_commit_b,
            neg_randomizer_commit_b,
        }) = outcome.message
        {
            if let Ok(PartyId::Bidder(target)) = bidder.parse::<PartyId>() {
                for engine in self.bidders.values_mut() {
                    let announced = &mut engine.announced;
                    if announced.randomizer_commits.len() >= target {
                        announced.randomizer_commits[target - 1] = randomizer_commit.clone();
                    }
                    if announced.randomizer_commits_b.len() >= target {
                        announced.randomizer_commits_b[target - 1] = randomizer_commit_b.clone();
                    }
                    if announced.neg_randomizer_commits_b.len() >= target {
                        announced.neg_randomizer_commits_b[target - 1] =
                            neg_randomizer_commit_b.clone();
                    }
                }
            }
        }
        Ok(())
    }

    // -- sharing and column sums ------------------------------------------------

    fn phase_share_and_sigma(&mut self) -> StepResult {
        if let Some(out) = self.apply_phase_drops(Phase::Share)? {
            return Ok(Some(out));
        }
        let mut phase = Phase::Share;
        'round: loop {
            let live = self.bus.live_bidders();
            if live.len() < 2 {
                return Ok(Some(Outcome::Aborted {
                    reason: AbortReason::TooFewBidders,
                    culprit: None,
                }));
            }
            self.seller.reset_sums();
            self.delivered_sums.clear();
            self.sum_commits.clear();
            for &j in &live {
                self.bidders.get_mut(&j).expect("live").begin_share_round();
            }

            // Split and (in detecting mode) publish commitment rows.
            let use_fixed = live.len() == self.config.bidder_count;
            let mut outgoing: BTreeMap<usize, Vec<(usize, Scalar)>> = BTreeMap::new();
            for &j in &live {
                let fixed_row = if use_fixed {
                    self.config
                        .fixed
                        .as_ref()
                        .and_then(|f| f.share_rows.as_ref())
                        .and_then(|rows| rows.get(j - 1))
                        .map(|row| row.as_slice())
                } else {
                    None
                };
                let shares = self
                    .bidders
                    .get_mut(&j)
                    .expect("live")
                    .split_code(&live, fixed_row)?;
                outgoing.insert(j, shares);
            }
            if self.detecting() {
                for &j in &live {
                    let entries: Vec<ShareCommitEntry> = outgoing[&j]
                        .iter()
                        .map(|(to, share)| ShareCommitEntry {
                            to: PartyId::Bidder(*to).to_string(),
                            commit: crate::sharing::commit(
                                &self.config.params,
                                &self.config.params.g_bidder,
                                share,
                            ),
                        })
                        .collect();
                    let sent = self.bus.deliver(
                        phase,
                        Channel::BidderOnly,
                        PartyId::Bidder(j),
                        Recipient::AllBidders,
                        Message::ShareCommitRow { entries },
                    )?;
                    match sent.message {
                        Some(Message::ShareCommitRow { entries }) => {
                            let row: Vec<(usize, GroupElement)> = entries
                                .into_iter()
                                .filter_map(|e| {
                                    e.to.parse::<PartyId>().ok().and_then(|p| match p {
                                        PartyId::Bidder(v) => Some((v, e.commit)),
                                        _ => None,
                                    })
                                })
                                .collect();
                            for &v in &live {
                                self.bidders
                                    .get_mut(&v)
                                    .expect("live")
                                    .record_row(j, row.clone());
                            }
                        }
                        Some(_) => return Err(Error::Script("share_commit_row replaced".into())),
                        None => {
                            if let Some(out) = self.disqualify_mid_share(j, phase)? {
                                return Ok(Some(out));
                            }
                            continue 'round;
                        }
                    }
                }
                // Row products must open each publisher's code commitment.
                for &j in &live {
                    let zeta = self.zetas[&j].clone();
                    let bad = live
                        .iter()
                        .copied()
                        .find(|&v| v != j && !self.bidders[&v].verify_peer_row(j, &zeta));
                    if let Some(reporter) = bad {
                        self.bus.deliver(
                            phase,
                            Channel::BidderOnly,
                            PartyId::Bidder(reporter),
                            Recipient::AllBidders,
                            Message::MembershipComplaint {
                                against: PartyId::Bidder(j).to_string(),
                            },
                        )?;
                        self.detections.push(Detection {
                            check: "share-row-consistency".into(),
                            culprit: PartyId::Bidder(j),
                            reporter: PartyId::Bidder(reporter),
                        });
                        if let Some(out) = self.disqualify_mid_share(j, phase)? {
                            return Ok(Some(out));
                        }
                        continue 'round;
                    }
                }
            }

            // Private deliveries, own share kept locally.
            for &j in &live {
                for (to, share) in outgoing[&j].clone() {
                    if to == j {
                        self.bidders
                            .get_mut(&j)
                            .expect("live")
                            .receive_share(j, share);
                        continue;
                    }
                    let sent = self.bus.deliver(
                        phase,
                        Channel::Private,
                        PartyId::Bidder(j),
                        Recipient::Party(PartyId::Bidder(to)),
                        Message::ShareDeliver { value: share },
                    )?;
                    let delivered = match sent.message {
                        Some(Message::ShareDeliver { value }) => value,
                        Some(_) => return Err(Error::Script("share_deliver replaced".into())),
                        None => {
                            if let Some(out) = self.disqualify_mid_share(j, phase)? {
                                return Ok(Some(out));
                            }
                            continue 'round;
                        }
                    };
                    let accepted = self
                        .bidders
                        .get_mut(&to)
                        .expect("live")
                        .receive_share(j, delivered);
                    if self.detecting() {
                        let verdict = if accepted {
                            Message::ShareAccept {
                                of: PartyId::Bidder(j).to_string(),
                            }
                        } else {
                            Message::ShareReject {
                                of: PartyId::Bidder(j).to_string(),
                            }
                        };
                        self.bus.deliver(
                            phase,
                            Channel::Public,
                            PartyId::Bidder(to),
                            Recipient::AllParties,
                            verdict,
                        )?;
                        if !accepted {
                            self.detections.push(Detection {
                                check: "share-commitment".into(),
                                culprit: PartyId::Bidder(j),
                                reporter: PartyId::Bidder(to),
                            });
                            if let Some(out) = self.disqualify_mid_share(j, phase)? {
                                return Ok(Some(out));
                            }
                            continue 'round;
                        }
                    }
                }
            }
            self.shared = true;

            // Column sums.
            phase = Phase::Sigma;
            if let Some(out) = self.apply_phase_drops(Phase::Sigma)? {
                return Ok(Some(out));
            }
            if self.bus.live_bidders() != live {
                continue 'round; // a sigma-phase dropout forces a re-share
            }
            for &j in &live {
                let sum = self
                    .bidders
                    .get_mut(&j)
                    .expect("live")
                    .finish_share_round(&live)?;
                if self.detecting() {
                    let commit = crate::sharing::commit(
                        &self.config.params,
                        &self.config.params.g_bidder,
                        &sum,
                    );
                    let sent = self.bus.deliver(
                        phase,
                        Channel::Public,
                        PartyId::Bidder(j),
                        Recipient::AllParties,
                        Message::SumCommit { commit },
                    )?;
                    let published = match sent.message {
                        Some(Message::SumCommit { commit }) => commit,
                        Some(_) => return Err(Error::Script("sum_commit replaced".into())),
                        None => {
                            if let Some(out) = self.disqualify_mid_share(j, phase)? {
                                return Ok(Some(out));
                            }
                            continue 'round;
                        }
                    };
                    // Peers recompute the column from the committed rows.
                    let bad = live.iter().copied().find(|&v| {
                        v != j && !self.bidders[&v].verify_peer_sum_commit(j, &published, &live)
                    });
                    if let Some(reporter) = bad {
                        self.bus.deliver(
                            phase,
                            Channel::BidderOnly,
                            PartyId::Bidder(reporter),
                            Recipient::AllBidders,
                            Message::MembershipComplaint {
                                against: PartyId::Bidder(j).to_string(),
                            },
                        )?;
                        self.detections.push(Detection {
                            check: "sum-commit-consistency".into(),
                            culprit: PartyId::Bidder(j),
                            reporter: PartyId::Bidder(reporter),
                        });
                        if let Some(out) = self.disqualify_mid_share(j, phase)? {
                            return Ok(Some(out));
                        }
                        continue 'round;
                    }
                    self.sum_commits.insert(j, published);
                }

                let sent = self.bus.deliver(
                    phase,
                    Channel::Private,
                    PartyId::Bidder(j),
                    Recipient::Party(PartyId::Seller),
                    Message::SigmaDeliver { value: sum },
                )?;
                let delivered = match sent.message {
                    Some(Message::SigmaDeliver { value }) => value,
                    Some(_) => return Err(Error::Script("sigma_deliver replaced".into())),
                    None => {
                        if let Some(out) = self.disqualify_mid_share(j, phase)? {
                            return Ok(Some(out));
                        }
                        continue 'round;
                    }
                };
                if self.detecting() {
                    let published = self.sum_commits[&j].clone();
                    if !self.seller.sum_matches_commitment(&delivered, &published) {
                        self.bus.deliver(
                            phase,
                            Channel::Public,
                            PartyId::Seller,
                            Recipient::AllParties,
                            Message::SigmaReject {
                                bidder: PartyId::Bidder(j).to_string(),
                            },
                        )?;
                        self.detections.push(Detection {
                            check: "sigma-commitment".into(),
                            culprit: PartyId::Bidder(j),
                            reporter: PartyId::Seller,
                        });
                        return Ok(Some(Outcome::Aborted {
                            reason: AbortReason::SigmaInvalid,
                            culprit: Some(PartyId::Bidder(j)),
                        }));
                    }
                }
                self.delivered_sums.insert(j, delivered.clone());
                self.seller.receive_sum(j, delivered);
            }
            return Ok(None);
        }
    }

    /// A bidder failed or vanished while shares were in flight: discard
    /// him, let the seller fold his randomizer back in, and re-run the
    /// exchange among the survivors.
    fn disqualify_mid_share(&mut self, j: usize, phase: Phase) -> StepResult {
        self.emit_dropout(j, phase, 3)?;
        self.bus.mark_dropped(j);
        self.seller.compensate_for(j);
        self.zetas.remove(&j);
        if self.bus.live_bidders().len() < 2 {
            return Ok(Some(Outcome::Aborted {
                reason: AbortReason::TooFewBidders,
                culprit: None,
            }));
        }
        Ok(None)
    }

    // -- solve, claim, proof ----------------------------------------------------

    fn phase_solve(&mut self) -> StepResult {
        let (flags, highest, second) = match self.seller.solve() {
            Ok(result) => result,
            Err(Error::UnsolvableKnapsack { .. }) => {
                return Ok(Some(Outcome::Aborted {
                    reason: AbortReason::UnsolvableKnapsack,
                    culprit: None,
                }))
            }
            Err(Error::NoBids) => {
                return Ok(Some(Outcome::Aborted {
                    reason: AbortReason::NoBids,
                    culprit: None,
                }))
            }
            Err(other) => return Err(other),
        };
        let sent = self.bus.deliver(
            Phase::Solve,
            Channel::Public,
            PartyId::Seller,
            Recipient::AllParties,
            Message::FlagsAnnounce {
                flags: flags.bits().to_vec(),
                highest,
                second,
            },
        )?;
        match sent.message {
            Some(Message::FlagsAnnounce {
                flags,
                highest,
                second,
            }) => {
                self.announced_flags = Some(FlagVector::new(flags));
                self.announced_highest = Some(highest);
                self.announced_second = second;
                Ok(None)
            }
            Some(_) => Err(Error::Script("flags_announce replaced".into())),
            None => Ok(Some(Outcome::Aborted {
                reason: AbortReason::SellerHalted,
                culprit: Some(PartyId::Seller),
            })),
        }
    }

    /// Claims processed in bidder order; the first opening that unmasks to
    /// the top code wins.
    fn phase_claim(&mut self) -> Result<std::result::Result<usize, Outcome>> {
        let announced = self.announced_flags.as_ref().expect("flags announced");
        let top = announced.set_indices_desc().first().copied();
        let top = match top {
            Some(t) => t,
            None => {
                return Ok(Err(Outcome::Aborted {
                    reason: AbortReason::NoBids,
                    culprit: None,
                }))
            }
        };
        for j in self.bus.live_bidders() {
            let is_holder = self.bidders[&j].choice() == Some(top);
            let compelled = matches!(
                self.bus.script().corruption_for(j),
                Some(CorruptBidderAction::AlwaysClaim {})
            );
            if !is_holder && !compelled {
                continue;
            }
            let claim = self.bidders[&j].claim()?;
            let sent = self.bus.deliver(
                Phase::Claim,
                Channel::Private,
                PartyId::Bidder(j),
                Recipient::Party(PartyId::Seller),
                Message::WinnerClaim {
                    revealed: claim.revealed,
                },
            )?;
            let revealed = match sent.message {
                Some(Message::WinnerClaim { revealed }) => revealed,
                Some(_) => return Err(Error::Script("winner_claim replaced".into())),
                None => continue,
            };
            let accepted = self.seller.verify_claim(&WinnerClaim {
                claimant: j,
                revealed,
            });
            self.bus.deliver(
                Phase::Claim,
                Channel::Public,
                PartyId::Seller,
                Recipient::AllParties,
                Message::ClaimVerdict {
                    bidder: PartyId::Bidder(j).to_string(),
                    accepted,
                },
            )?;
            if accepted {
                return Ok(Ok(j));
            }
        }
        Ok(Err(Outcome::Aborted {
            reason: AbortReason::NoValidWinnerClaim,
            culprit: None,
        }))
    }

    /// The seller proves the announced flags decode the summed shares; the
    /// winner verifies against the announced data.
    fn phase_proof(&mut self, winner: usize) -> StepResult {
        let (commit_a, commit_b) = self.seller.proof_commit();
        let sent = self.bus.deliver(
            Phase::Proof,
            Channel::Private,
            PartyId::Seller,
            Recipient::Party(PartyId::Bidder(winner)),
            Message::ProofCommit { commit_a, commit_b },
        )?;
        let (commit_a, commit_b) = match sent.message {
            Some(Message::ProofCommit { commit_a, commit_b }) => (commit_a, commit_b),
            Some(_) => return Err(Error::Script("proof_commit replaced".into())),
            None => {
                return Ok(Some(Outcome::Aborted {
                    reason: AbortReason::SellerHalted,
                    culprit: Some(PartyId::Seller),
                }))
            }
        };
        let challenge = self
            .bidders
            .get_mut(&winner)
            .expect("winner is live")
            .proof_challenge();
        let sent = self.bus.deliver(
            Phase::Proof,
            Channel::Private,
            PartyId::Bidder(winner),
            Recipient::Party(PartyId::Seller),
            Message::ProofChallenge { challenge },
        )?;
        let challenge = match sent.message {
            Some(Message::ProofChallenge { challenge }) => challenge,
            Some(_) => return Err(Error::Script("proof_challenge replaced".into())),
            None => {
                return Ok(Some(Outcome::Aborted {
                    reason: AbortReason::NoValidWinnerClaim,
                    culprit: Some(PartyId::Bidder(winner)),
                }))
            }
        };
        let response = self.seller.proof_respond(&challenge)?;
        let sent = self.bus.deliver(
            Phase::Proof,
            Channel::Private,
            PartyId::Seller,
            Recipient::Party(PartyId::Bidder(winner)),
            Message::ProofResponse { response },
        )?;
        let response = match sent.message {
            Some(Message::ProofResponse { response }) => response,
            Some(_) => return Err(Error::Script("proof_response replaced".into())),
            None => {
                return Ok(Some(Outcome::Aborted {
                    reason: AbortReason::SellerHalted,
                    culprit: Some(PartyId::Seller),
                }))
            }
        };

        // Commitments feeding the verifier: published column sums plus the
        // public randomizer commitments of anyone the seller compensated.
        let mut sum_commits: Vec<GroupElement> = self
            .bus
            .live_bidders()
            .into_iter()
            .filter_map(|j| self.sum_commits.get(&j).cloned())
            .collect();
        for j in self.seller.compensated_bidders() {
            sum_commits.push(self.bidders[&winner].announced.randomizer_commits_b[j - 1].clone());
        }
        let session = EqdlProofSession {
            commit_a,
            commit_b,
            challenge,
            response,
        };
        let announced = self.announced_flags.clone().expect("flags announced");
        let accepted = self.bidders[&winner].verify_flag_proof(&announced, &sum_commits, &session);
        self.bus.deliver(
            Phase::Proof,
            Channel::Public,
            PartyId::Bidder(winner),
            Recipient::AllParties,
            Message::ProofVerdict { accepted },
        )?;
        if accepted {
            Ok(None)
        } else {
            self.detections.push(Detection {
                check: "flag-validity-proof".into(),
                culprit: PartyId::Seller,
                reporter: PartyId::Bidder(winner),
            });
            Ok(Some(Outcome::Aborted {
                reason: AbortReason::Proof2Failed,
                culprit: Some(PartyId::Seller),
            }))
        }
    }

    // -- dropouts -----------------------------------------------------------------

    fn apply_phase_drops(&mut self, phase: Phase) -> StepResult {
        let drops = self.bus.script_mut().drops_at(phase);
        for j in drops {
            if !self.bus.is_live(j) {
                continue;
            }
            if let Some(out) = self.handle_dropout(j, phase)? {
                return Ok(Some(out));
            }
        }
        Ok(None)
    }

    /// Classify and absorb one halted bidder. Before OT his randomizer is
    /// redistributed; after OT but before sharing the absorber additionally
    /// refreshes his code over a new OT; after sharing the seller
    /// compensates and survivors re-share (handled by the share loop).
    fn handle_dropout(&mut self, j: usize, phase: Phase) -> StepResult {
        let has_code = self.bidders[&j].masked_code().is_some();
        let case = if !has_code {
            1
        } else if !self.shared {
            2
        } else {
            3
        };
        self.emit_dropout(j, phase, case)?;
        self.bus.mark_dropped(j);
        self.zetas.remove(&j);
        let live = self.bus.live_bidders();
        if live.len() < 2 {
            return Ok(Some(Outcome::Aborted {
                reason: AbortReason::TooFewBidders,
                culprit: None,
            }));
        }
        match case {
            1 | 2 => {
                let absorber = self.seller.redistribute_randomizer(j, &live)?;
                if self.detecting() {
                    self.emit_randomizer_update(absorber, phase)?;
                }
                if case == 2 {
                    // the absorber's held code was masked under his old
                    // randomizer; refresh it over a fresh transfer
                    match self.run_single_ot(absorber, phase)? {
                        OtRun::Completed(verdict) => {
                            if self.detecting() || !verdict {
                                if let Some(out) =
                                    self.broadcast_ot_verdict(absorber, verdict, phase)?
                                {
                                    return Ok(Some(out));
                                }
                            }
                        }
                        OtRun::SenderHalted => return self.handle_dropout(absorber, phase),
                        OtRun::SellerHalted => {
                            return Ok(Some(Outcome::Aborted {
                                reason: AbortReason::SellerHalted,
                                culprit: Some(PartyId::Seller),
                            }))
                        }
                    }
                    if self.commit_done {
                        if let Some(out) = self.publish_zeta(absorber, phase)? {
                            return Ok(Some(out));
                        }
                        if let Some(out) = self.check_membership(absorber, phase)? {
                            return Ok(Some(out));
                        }
                    }
                }
            }
            _ => {
                self.seller.compensate_for(j);
            }
        }
        Ok(None)
    }

    fn emit_dropout(&mut self, j: usize, phase: Phase, case: u64) -> Result<()> {
        self.bus.deliver(
            phase,
            Channel::Public,
            PartyId::Env,
            Recipient::AllParties,
            Message::DropoutNotice {
                bidder: PartyId::Bidder(j).to_string(),
                at_phase: phase.tag().to_string(),
                case,
            },
        )?;
        Ok(())
    }

    fn emit_result(&mut self, outcome: &Outcome) -> Result<()> {
        let message = match outcome {
            Outcome::Winner {
                highest,
                payer,
                paid,
            } => Message::AuctionResult {
                outcome: "winner".into(),
                highest: Some(*highest),
                second: self.announced_second,
                winner: Some(PartyId::Bidder(*payer).to_string()),
                paid: Some(*paid),
                reason: None,
                culprit: None,
            },
            Outcome::Aborted { reason, culprit } => Message::AuctionResult {
                outcome: "aborted".into(),
                highest: None,
                second: None,
                winner: None,
                paid: None,
                reason: Some(reason.tag().to_string()),
                culprit: culprit.map(|c| c.to_string()),
            },
        };
        self.bus.deliver(
            Phase::Done,
            Channel::Public,
            PartyId::Env,
            Recipient::AllParties,
            message,
        )?;
        Ok(())
    }
}

enum OtRun {
    Completed(bool),
    SenderHalted,
    SellerHalted,
}
