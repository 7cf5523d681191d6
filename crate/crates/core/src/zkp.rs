//! Interactive proof that two group elements share one exponent.
//!
//! Three moves: the prover commits to a fresh exponent under both
//! generators, the verifier sends a random challenge, the prover answers
//! with `response = commit_exponent + challenge * witness mod q`. Accepting
//! means `g1^response = commit_a * v^challenge` under the first generator
//! and the analogous equation under the second. The auction uses it so the
//! seller can prove the announced flag vector really decodes the summed
//! shares, without opening any code.

use serde::{Deserialize, Serialize};

use crate::group::{GroupElement, GroupParams, Scalar};
use crate::knapsack::FlagVector;

/// Claim: `v = g1^x` and `w = g2^x` for one secret `x`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EqdlStatement {
    pub g1: GroupElement,
    pub g2: GroupElement,
    pub v: GroupElement,
    pub w: GroupElement,
}

/// A complete three-move exchange, as recorded in the transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EqdlProofSession {
    pub commit_a: GroupElement,
    pub commit_b: GroupElement,
    pub challenge: Scalar,
    pub response: Scalar,
}

/// Prover move 1: commit to a fresh exponent under both generators.
/// Returns the commits and the exponent the prover must keep for move 3.
pub fn eqdl_commit<R: rand::RngCore>(
    statement: &EqdlStatement,
    params: &GroupParams,
    rng: &mut R,
) -> (GroupElement, GroupElement, Scalar) {
    let nonce = params.sample_scalar(rng);
    eqdl_commit_with_nonce(statement, params, nonce)
}

/// Deterministic variant used by tests and by replaying provers.
pub fn eqdl_commit_with_nonce(
    statement: &EqdlStatement,
    params: &GroupParams,
    nonce: Scalar,
) -> (GroupElement, GroupElement, Scalar) {
    let commit_a = params.pow(&statement.g1, &nonce);
    let commit_b = params.pow(&statement.g2, &nonce);
    (commit_a, commit_b, nonce)
}

/// Prover move 3: `(nonce + challenge * witness) mod q`.
pub fn eqdl_respond(
    params: &GroupParams,
    nonce: &Scalar,
    witness: &Scalar,
    challenge: &Scalar,
) -> Scalar {
    params.scalar_add(nonce, &params.scalar_mul(challenge, witness))
}

/// Verifier decision over the full session.
pub fn eqdl_verify(
    params: &GroupParams,
    statement: &EqdlStatement,
    session: &EqdlProofSession,
) -> bool {
    let lhs1 = params.pow(&statement.g1, &session.response);
    let rhs1 = params.mul(
        &session.commit_a,
        &params.pow(&statement.v, &session.challenge),
    );
    if lhs1 != rhs1 {
        return false;
    }
    let lhs2 = params.pow(&statement.g2, &session.response);
    let rhs2 = params.mul(
        &session.commit_b,
        &params.pow(&statement.w, &session.challenge),
    );
    lhs2 == rhs2
}

/// The flag-validity statement: the product of the seller's code
/// commitments at the flagged positions must share its exponent (the
/// knapsack value) with the product of the published column-sum
/// commitments. The seller proves it with the knapsack value as witness.
pub fn proof2_statement(
    params: &GroupParams,
    code_commits: &[GroupElement],
    flags: &FlagVector,
    sum_commits: &[GroupElement],
) -> EqdlStatement {
    let v = code_commits
        .iter()
        .zip(flags.bits())
        .filter(|(_, &f)| f)
        .fold(GroupElement::one(), |acc, (c, _)| params.mul(&acc, c));
    let w = sum_commits
        .iter()
        .fold(GroupElement::one(), |acc, c| params.mul(&acc, c));
    EqdlStatement {
        g1: params.g_seller.clone(),
        g2: params.g_bidder.clone(),
        v,
        w,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sharing::commit;
    use num_bigint::BigUint;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::collections::HashSet;

    fn scalar(v: u32, params: &GroupParams) -> Scalar {
        Scalar::new(BigUint::from(v), &params.q).unwrap()
    }

    fn statement_for(params: &GroupParams, witness: &Scalar) -> EqdlStatement {
        EqdlStatement {
            g1: params.g_seller.clone(),
            g2: params.g_bidder.clone(),
            v: params.pow(&params.g_seller, witness),
            w: params.pow(&params.g_bidder, witness),
        }
    }

    /// A micro group (q = 11, p = 23) small enough to sweep exhaustively.
    fn micro_params() -> GroupParams {
        let p = BigUint::from(23u32);
        let q = BigUint::from(11u32);
        let mu = BigUint::from(2u32);
        let elem = |v: u32| GroupElement::from_wire(BigUint::from(v));
        let params = GroupParams {
            p,
            q,
            mu,
            g_seller: elem(4), // 2^2
            g_bidder: elem(9), // 3^2
            g_ot: elem(13),    // 6^2 = 36 mod 23
            h_ot: elem(3),     // 5^2 = 25 mod 23
        };
        params.validate().unwrap();
        params
    }

    #[test]
    fn zero_nonce_commits_to_identity() {
        let params = GroupParams::toy();
        let witness = scalar(7, &params);
        let st = statement_for(&params, &witness);
        let (a, b, _) = eqdl_commit_with_nonce(&st, &params, Scalar::zero());
        assert!(a.is_one() && b.is_one());
    }

    #[test]
    fn fixed_nonce_commits_are_recomputable() {
        let params = GroupParams::toy();
        let witness = scalar(7, &params);
        let st = statement_for(&params, &witness);
        let (a, b, _) = eqdl_commit_with_nonce(&st, &params, scalar(5, &params));
        assert_eq!(a, params.pow(&params.g_seller, &scalar(5, &params)));
        assert_eq!(b, params.pow(&params.g_bidder, &scalar(5, &params)));
    }

    #[test]
    fn nonces_rarely_collide() {
        let params = GroupParams::toy();
        let witness = scalar(7, &params);
        let st = statement_for(&params, &witness);
        let mut rng = ChaCha20Rng::from_seed([1u8; 32]);
        let mut seen = HashSet::new();
        for _ in 0..1000 {
            let (_, _, nonce) = eqdl_commit(&st, &params, &mut rng);
            seen.insert(nonce.value().clone());
        }
        // With q = 751, the birthday bound allows some collisions but the
        // draw must not be degenerate.
        assert!(seen.len() > 400, "only {} distinct nonces", seen.len());
    }

    #[test]
    fn respond_arithmetic() {
        let params = GroupParams::toy();
        // challenge 0 returns the nonce
        assert_eq!(
            eqdl_respond(
                &params,
                &scalar(42, &params),
                &scalar(7, &params),
                &Scalar::zero()
            ),
            scalar(42, &params)
        );
        // z=5, c=3, x=7 -> 26
        assert_eq!(
            eqdl_respond(
                &params,
                &scalar(5, &params),
                &scalar(7, &params),
                &scalar(3, &params)
            ),
            scalar(26, &params)
        );
    }

    #[test]
    fn honest_sessions_always_verify() {
        let params = GroupParams::toy();
        let mut rng = ChaCha20Rng::from_seed([2u8; 32]);
        for _ in 0..100 {
            let witness = params.sample_scalar(&mut rng);
            let st = statement_for(&params, &witness);
            let (commit_a, commit_b, nonce) = eqdl_commit(&st, &params, &mut rng);
            let challenge = params.sample_scalar(&mut rng);
            let response = eqdl_respond(&params, &nonce, &witness, &challenge);
            let session = EqdlProofSession {
                commit_a,
                commit_b,
                challenge,
                response,
            };
            assert!(eqdl_verify(&params, &st, &session));
        }
    }

    #[test]
    fn completeness_exhaustive_over_micro_group() {
        // every (witness, nonce, challenge) triple in the q=11 group
        let params = micro_params();
        for x in 0u32..11 {
            let witness = scalar(x, &params);
            let st = statement_for(&params, &witness);
            for z in 0u32..11 {
                let (commit_a, commit_b, nonce) =
                    eqdl_commit_with_nonce(&st, &params, scalar(z, &params));
                for c in 0u32..11 {
                    let challenge = scalar(c, &params);
                    let response = eqdl_respond(&params, &nonce, &witness, &challenge);
                    let session = EqdlProofSession {
                        commit_a: commit_a.clone(),
                        commit_b: commit_b.clone(),
                        challenge,
                        response,
                    };
                    assert!(eqdl_verify(&params, &st, &session));
                }
            }
        }
    }

    #[test]
    fn perturbed_response_rejected() {
        let params = GroupParams::toy();
        let mut rng = ChaCha20Rng::from_seed([3u8; 32]);
        let witness = scalar(19, &params);
        let st = statement_for(&params, &witness);
        let (commit_a, commit_b, nonce) = eqdl_commit(&st, &params, &mut rng);
        let challenge = params.sample_scalar(&mut rng);
        let response = eqdl_respond(&params, &nonce, &witness, &challenge);
        let bad = EqdlProofSession {
            commit_a,
            commit_b,
            challenge,
            response: params.scalar_add(&response, &scalar(1, &params)),
        };
        assert!(!eqdl_verify(&params, &st, &bad));
    }

    #[test]
    fn mismatched_witness_rejected() {
        // w commits to a different exponent than v; an honest-style prover
        // using x cannot satisfy both equations.
        let params = GroupParams::toy();
        let mut rng = ChaCha20Rng::from_seed([4u8; 32]);
        let x = scalar(19, &params);
        let st = EqdlStatement {
            g1: params.g_seller.clone(),
            g2: params.g_bidder.clone(),
            v: params.pow(&params.g_seller, &x),
            w: params.pow(&params.g_bidder, &scalar(20, &params)),
        };
        let (commit_a, commit_b, nonce) = eqdl_commit(&st, &params, &mut rng);
        let challenge = params.sample_nonzero_scalar(&mut rng);
        let response = eqdl_respond(&params, &nonce, &x, &challenge);
        let session = EqdlProofSession {
            commit_a,
            commit_b,
            challenge,
            response,
        };
        assert!(!eqdl_verify(&params, &st, &session));
    }

    #[test]
    fn two_accepting_sessions_leak_the_witness() {
        // special soundness: same commits, two challenges -> extract x
        let params = GroupParams::toy();
        let witness = scalar(123, &params);
        let st = statement_for(&params, &witness);
        let nonce = scalar(77, &params);
        let (commit_a, commit_b, nonce) = eqdl_commit_with_nonce(&st, &params, nonce);
        let c1 = scalar(11, &params);
        let c2 = scalar(29, &params);
        let r1 = eqdl_respond(&params, &nonce, &witness, &c1);
        let r2 = eqdl_respond(&params, &nonce, &witness, &c2);
        for (c, r) in [(&c1, &r1), (&c2, &r2)] {
            let session = EqdlProofSession {
                commit_a: commit_a.clone(),
                commit_b: commit_b.clone(),
                challenge: c.clone(),
                response: r.clone(),
            };
            assert!(eqdl_verify(&params, &st, &session));
        }
        let dr = params.scalar_sub(&r1, &r2);
        let dc = params.scalar_sub(&c1, &c2);
        let extracted = params.scalar_mul(&dr, &params.scalar_inv(&dc).unwrap());
        assert_eq!(extracted, witness);
    }

    #[test]
    fn flag_statement_over_golden_values() {
        let params = GroupParams::toy();
        let codes = [3u32, 5, 10, 21, 40, 90, 180, 360];
        let code_commits: Vec<GroupElement> = codes
            .iter()
            .map(|&c| commit(&params, &params.g_seller, &scalar(c, &params)))
            .collect();
        let sums = [290u32, 535, 294, 26];
        let sum_commits: Vec<GroupElement> = sums
            .iter()
            .map(|&s| commit(&params, &params.g_bidder, &scalar(s, &params)))
            .collect();
        let flags = FlagVector::new(vec![true, false, true, true, false, false, false, true]);
        let st = proof2_statement(&params, &code_commits, &flags, &sum_commits);
        // both sides commit to the knapsack value 394
        assert_eq!(st.v, params.pow(&params.g_seller, &scalar(394, &params)));
        assert_eq!(st.w, params.pow(&params.g_bidder, &scalar(394, &params)));

        // honest proof over the statement verifies
        let witness = scalar(394, &params);
        let mut rng = ChaCha20Rng::from_seed([5u8; 32]);
        let (commit_a, commit_b, nonce) = eqdl_commit(&st, &params, &mut rng);
        let challenge = params.sample_nonzero_scalar(&mut rng);
        let response = eqdl_respond(&params, &nonce, &witness, &challenge);
        assert!(eqdl_verify(
            &params,
            &st,
            &EqdlProofSession {
                commit_a,
                commit_b,
                challenge,
                response
            }
        ));
    }

    #[test]
    fn flipped_flag_breaks_the_proof() {
        let params = GroupParams::toy();
        let codes = [3u32, 5, 10, 21, 40, 90, 180, 360];
        let code_commits: Vec<GroupElement> = codes
            .iter()
            .map(|&c| commit(&params, &params.g_seller, &scalar(c, &params)))
            .collect();
        let sums = [290u32, 535, 294, 26];
        let sum_commits: Vec<GroupElement> = sums
            .iter()
            .map(|&s| commit(&params, &params.g_bidder, &scalar(s, &params)))
            .collect();
        // seller claims an extra flag at index 5 to inflate the second price
        let lying = FlagVector::new(vec![true, false, true, true, true, false, false, true]);
        let st = proof2_statement(&params, &code_commits, &lying, &sum_commits);
        let witness = scalar(394, &params); // true knapsack value
        let mut rng = ChaCha20Rng::from_seed([6u8; 32]);
        let (commit_a, commit_b, nonce) = eqdl_commit(&st, &params, &mut rng);
        let challenge = params.sample_nonzero_scalar(&mut rng);
        let response = eqdl_respond(&params, &nonce, &witness, &challenge);
        assert!(!eqdl_verify(
            &params,
            &st,
            &EqdlProofSession {
                commit_a,
                commit_b,
                challenge,
                response
            }
        ));
    }

    #[test]
    fn all_zero_flags_give_trivial_statement() {
        let params = GroupParams::toy();
        let flags = FlagVector::new(vec![false; 3]);
        let st = proof2_statement(&params, &[], &flags, &[]);
        assert!(st.v.is_one() && st.w.is_one());
        let (commit_a, commit_b, nonce) = eqdl_commit_with_nonce(&st, &params, Scalar::zero());
        let challenge = scalar(3, &params);
        let response = eqdl_respond(&params, &nonce, &Scalar::zero(), &challenge);
        assert!(eqdl_verify(
            &params,
            &st,
            &EqdlProofSession {
                commit_a,
                commit_b,
                challenge,
                response
            }
        ));
    }
}
