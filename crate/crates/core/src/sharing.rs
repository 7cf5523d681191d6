//! Randomizer masks, n-of-n additive sharing, and exponent commitments.
//!
//! The seller's randomizers sum to zero mod `q`, so masking every delivered
//! code cancels out of the grand total while hiding which code any one
//! bidder received. Each bidder then splits his masked code into `n`
//! additive shares, and column sums of the resulting matrix rebuild the
//! knapsack value without exposing any single code. Commitments under
//! `g_seller` / `g_bidder` pin every quantity so deviations surface at a
//! specific check.

use num_bigint::BigUint;
use num_traits::Zero;
use rand::RngCore;

use crate::group::{GroupElement, GroupParams, Scalar};
use crate::{Error, Result};

/// Per-bidder masks summing to zero mod `q`, all nonzero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomizerSet {
    randomizers: Vec<Scalar>,
    q: BigUint,
}

impl RandomizerSet {
    pub fn new(randomizers: Vec<Scalar>, q: BigUint) -> Result<Self> {
        if randomizers.len() < 2 {
            return Err(Error::Parameter(
                "need at least two randomizers (a single one would have to be zero)".into(),
            ));
        }
        if randomizers.iter().any(Scalar::is_zero) {
            return Err(Error::Parameter("randomizers must be nonzero".into()));
        }
        let sum = randomizers
            .iter()
            .fold(BigUint::zero(), |acc, r| (acc + r.value()) % &q);
        if !sum.is_zero() {
            return Err(Error::Parameter(
                "randomizers must sum to zero mod q".into(),
            ));
        }
        Ok(RandomizerSet { randomizers, q })
    }

    pub fn len(&self) -> usize {
        self.randomizers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.randomizers.is_empty()
    }

    /// Randomizer for a 1-based bidder index.
    pub fn randomizer(&self, bidder: usize) -> Option<&Scalar> {
        bidder.checked_sub(1).and_then(|i| self.randomizers.get(i))
    }

    pub fn randomizers(&self) -> &[Scalar] {
        &self.randomizers
    }

    /// Replace one randomizer in place. The caller re-establishes the
    /// zero-sum invariant (dropout redistribution does exactly that).
    pub fn set(&mut self, bidder: usize, value: Scalar) {
        self.randomizers[bidder - 1] = value;
    }
}

/// Draw `n` nonzero randomizers summing to zero mod `q`: `n-1` uniform,
/// the last the negated partial sum; redrawn whenever a zero appears.
pub fn generate_randomizers<R: RngCore>(
    n: usize,
    q: &BigUint,
    rng: &mut R,
) -> Result<RandomizerSet> {
    if n < 2 {
        return Err(Error::Parameter(
            "need at least two bidders for nonzero randomizers".into(),
        ));
    }
    let params_q = q.clone();
    loop {
        let mut randomizers = Vec::with_capacity(n);
        let mut partial = BigUint::zero();
        for _ in 0..n - 1 {
            let r = sample_nonzero(q, rng);
            partial = (partial + r.value()) % q;
            randomizers.push(r);
        }
        let last_value = (q - &partial) % q;
        if last_value.is_zero() {
            continue;
        }
        randomizers.push(Scalar::new(last_value, q).expect("reduced mod q"));
        return RandomizerSet::new(randomizers, params_q);
    }
}

fn sample_nonzero<R: RngCore>(q: &BigUint, rng: &mut R) -> Scalar {
    use num_bigint::RandBigInt;
    loop {
        let v = rng.gen_biguint_below(q);
        if !v.is_zero() {
            return Scalar::new(v, q).expect("below q");
        }
    }
}

/// Mask a code with a bidder's randomizer: `(code + randomizer) mod q`.
pub fn randomize_code(code: &Scalar, randomizer: &Scalar, q: &BigUint) -> Scalar {
    Scalar::new((code.value() + randomizer.value()) % q, q).expect("reduced mod q")
}

/// Split a secret into `n` additive shares mod `q`.
pub fn split_additive<R: RngCore>(
    secret: &Scalar,
    n: usize,
    q: &BigUint,
    rng: &mut R,
) -> Result<Vec<Scalar>> {
    use num_bigint::RandBigInt;
    if n == 0 {
        return Err(Error::Parameter("cannot split into zero shares".into()));
    }
    let mut shares = Vec::with_capacity(n);
    let mut partial = BigUint::zero();
    for _ in 0..n - 1 {
        let v = rng.gen_biguint_below(q);
        partial = (partial + &v) % q;
        shares.push(Scalar::new(v, q).expect("below q"));
    }
    let last = ((secret.value() + q) - partial) % q;
    shares.push(Scalar::new(last, q).expect("reduced mod q"));
    Ok(shares)
}

/// Sum of the shares one bidder received, mod `q`.
pub fn column_sum(shares: &[Scalar], q: &BigUint) -> Scalar {
    let total = shares
        .iter()
        .fold(BigUint::zero(), |acc, s| (acc + s.value()) % q);
    Scalar::new(total, q).expect("reduced mod q")
}

/// Exponent commitment `g^x mod p`.
pub fn commit(params: &GroupParams, g: &GroupElement, x: &Scalar) -> GroupElement {
    params.pow(g, x)
}

/// The bidder-side receipt check after OT: the seller's published code and
/// randomizer commitments must multiply to a commitment of the delivered
/// masked code.
pub fn verify_received_code(
    params: &GroupParams,
    code_commit: &GroupElement,
    randomizer_commit: &GroupElement,
    masked_code: &Scalar,
) -> bool {
    params.mul(code_commit, randomizer_commit) == commit(params, &params.g_seller, masked_code)
}

/// Membership side of the code-commitment proof: stripping the randomizer
/// from a bidder's commitment must land on one of the seller's shuffled
/// per-code commitments. Verification is by membership only; position
/// carries no meaning.
pub fn verify_zeta_membership(
    params: &GroupParams,
    masked_code_commit: &GroupElement,
    neg_randomizer_commit: &GroupElement,
    shuffled_code_commits: &[GroupElement],
) -> bool {
    let unmasked = params.mul(masked_code_commit, neg_randomizer_commit);
    shuffled_code_commits.contains(&unmasked)
}

/// One received share against its published commitment.
pub fn verify_share(params: &GroupParams, share: &Scalar, published_commit: &GroupElement) -> bool {
    commit(params, &params.g_bidder, share) == *published_commit
}

/// A published commitment row must multiply out to the row owner's masked
/// code commitment.
pub fn verify_row(
    params: &GroupParams,
    share_commit_row: &[GroupElement],
    masked_code_commit: &GroupElement,
) -> bool {
    let product = share_commit_row
        .iter()
        .fold(GroupElement::one(), |acc, c| params.mul(&acc, c));
    product == *masked_code_commit
}

/// A reported column sum against its published commitment, and that
/// commitment against the column of share commitments feeding it.
pub fn verify_sigma(
    params: &GroupParams,
    share_sum: &Scalar,
    sum_commit: &GroupElement,
    column_commits: &[GroupElement],
) -> bool {
    if commit(params, &params.g_bidder, share_sum) != *sum_commit {
        return false;
    }
    let product = column_commits
        .iter()
        .fold(GroupElement::one(), |acc, c| params.mul(&acc, c));
    product == *sum_commit
}

/// Seeded Fisher-Yates shuffle; deterministic for transcript replay.
pub fn shuffle_commits<R: RngCore>(commits: &mut [GroupElement], rng: &mut R) {
    for i in (1..commits.len()).rev() {
        let j = (rng.next_u64() as usize) % (i + 1);
        commits.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn toy_q() -> BigUint {
        BigUint::from(751u32)
    }

    fn scalar(v: u32) -> Scalar {
        Scalar::new(BigUint::from(v), &toy_q()).unwrap()
    }

    #[test]
    fn golden_randomizer_set_accepted() {
        let q = toy_q();
        let set = RandomizerSet::new(vec![scalar(700), scalar(100), scalar(200), scalar(502)], q)
            .unwrap();
        assert_eq!(set.len(), 4);
    }

    #[test]
    fn two_party_randomizers_are_complements() {
        let q = toy_q();
        let mut rng = ChaCha20Rng::from_seed([1u8; 32]);
        let set = generate_randomizers(2, &q, &mut rng).unwrap();
        let sum = (set.randomizer(1).unwrap().value() + set.randomizer(2).unwrap().value()) % &q;
        assert!(sum.is_zero());
    }

    #[test]
    fn generated_randomizers_satisfy_predicates() {
        let q = toy_q();
        let mut rng = ChaCha20Rng::from_seed([2u8; 32]);
        for trial in 0..1000 {
            let n = trial % 7 + 2;
            let set = generate_randomizers(n, &q, &mut rng).unwrap();
            let sum = set
                .randomizers()
                .iter()
                .fold(BigUint::zero(), |acc, r| (acc + r.value()) % &q);
            assert!(sum.is_zero());
            assert!(set.randomizers().iter().all(|r| !r.is_zero()));
        }
    }

    #[test]
    fn single_bidder_rejected() {
        let mut rng = ChaCha20Rng::from_seed([3u8; 32]);
        assert!(generate_randomizers(1, &toy_q(), &mut rng).is_err());
    }

    #[test]
    fn randomize_code_golden_values() {
        let q = toy_q();
        assert_eq!(randomize_code(&scalar(360), &scalar(502), &q), scalar(111));
        assert_eq!(randomize_code(&scalar(10), &scalar(700), &q), scalar(710));
        assert_eq!(randomize_code(&scalar(33), &Scalar::zero(), &q), scalar(33));
    }

    #[test]
    fn golden_split_is_a_valid_split() {
        let q = toy_q();
        let parts = [100u32, 400, 200, 10].map(scalar);
        let sum = column_sum(&parts, &q);
        assert_eq!(sum, scalar(710));
    }

    #[test]
    fn single_share_split_is_the_secret() {
        let q = toy_q();
        let mut rng = ChaCha20Rng::from_seed([4u8; 32]);
        let shares = split_additive(&scalar(111), 1, &q, &mut rng).unwrap();
        assert_eq!(shares, vec![scalar(111)]);
    }

    #[test]
    fn splits_recombine_to_the_secret() {
        let q = toy_q();
        let mut rng = ChaCha20Rng::from_seed([5u8; 32]);
        for trial in 0..200u32 {
            let secret = scalar(trial * 3 % 751);
            let shares = split_additive(&secret, 7, &q, &mut rng).unwrap();
            assert_eq!(column_sum(&shares, &q), secret);
        }
    }

    #[test]
    fn column_sum_golden_values() {
        let q = toy_q();
        assert_eq!(
            column_sum(&[scalar(100), scalar(10), scalar(150), scalar(30)], &q),
            scalar(290)
        );
        assert_eq!(column_sum(&vec![Scalar::zero(); 4], &q), Scalar::zero());
    }

    #[test]
    fn full_golden_matrix_reaches_the_knapsack_value() {
        let q = toy_q();
        let rows = [
            [100u32, 400, 200, 10],
            [10, 50, 40, 3],
            [150, 50, 19, 2],
            [30, 35, 35, 11],
        ];
        let sums: Vec<Scalar> = (0..4)
            .map(|col| {
                let column: Vec<Scalar> = rows.iter().map(|row| scalar(row[col])).collect();
                column_sum(&column, &q)
            })
            .collect();
        assert_eq!(
            sums,
            vec![scalar(290), scalar(535), scalar(294), scalar(26)]
        );
        assert_eq!(column_sum(&sums, &q), scalar(394));
    }

    #[test]
    fn commitment_identities() {
        let params = GroupParams::toy();
        assert_eq!(
            commit(&params, &params.g_seller, &Scalar::zero()),
            GroupElement::one()
        );
        let mut rng = ChaCha20Rng::from_seed([6u8; 32]);
        for _ in 0..100 {
            let a = params.sample_scalar(&mut rng);
            let b = params.sample_scalar(&mut rng);
            let lhs = params.mul(
                &commit(&params, &params.g_seller, &a),
                &commit(&params, &params.g_seller, &b),
            );
            assert_eq!(
                lhs,
                commit(&params, &params.g_seller, &params.scalar_add(&a, &b))
            );
        }
        // c_3 + r_1 = 710 in the toy numbers
        let lhs = params.mul(
            &commit(&params, &params.g_seller, &scalar(10)),
            &commit(&params, &params.g_seller, &scalar(700)),
        );
        assert_eq!(lhs, commit(&params, &params.g_seller, &scalar(710)));
    }

    #[test]
    fn received_code_check_accepts_honest_and_rejects_perturbed() {
        let params = GroupParams::toy();
        let code_commit = commit(&params, &params.g_seller, &scalar(10));
        let rand_commit = commit(&params, &params.g_seller, &scalar(700));
        assert!(verify_received_code(
            &params,
            &code_commit,
            &rand_commit,
            &scalar(710)
        ));
        assert!(!verify_received_code(
            &params,
            &code_commit,
            &rand_commit,
            &scalar(711)
        ));
    }

    #[test]
    fn zeta_membership_accepts_honest_and_rejects_garbage() {
        let params = GroupParams::toy();
        let codes = [3u32, 5, 10, 21, 40, 90, 180, 360];
        let mut shuffled: Vec<GroupElement> = codes
            .iter()
            .map(|&c| commit(&params, &params.g_bidder, &scalar(c)))
            .collect();
        let mut rng = ChaCha20Rng::from_seed([7u8; 32]);
        shuffle_commits(&mut shuffled, &mut rng);

        let randomizer = scalar(502);
        let masked = randomize_code(&scalar(360), &randomizer, &params.q);
        let zeta = commit(&params, &params.g_bidder, &masked);
        let neg = commit(&params, &params.g_bidder, &params.scalar_neg(&randomizer));
        assert!(verify_zeta_membership(&params, &zeta, &neg, &shuffled));

        let fake = commit(&params, &params.g_bidder, &scalar(123));
        assert!(!verify_zeta_membership(&params, &fake, &neg, &shuffled));
    }

    #[test]
    fn tied_bidders_both_pass_membership() {
        let params = GroupParams::toy();
        let shuffled: Vec<GroupElement> = [3u32, 5, 10]
            .iter()
            .map(|&c| commit(&params, &params.g_bidder, &scalar(c)))
            .collect();
        for randomizer in [scalar(100), scalar(651)] {
            let masked = randomize_code(&scalar(5), &randomizer, &params.q);
            let zeta = commit(&params, &params.g_bidder, &masked);
            let neg = commit(&params, &params.g_bidder, &params.scalar_neg(&randomizer));
            assert!(verify_zeta_membership(&params, &zeta, &neg, &shuffled));
        }
    }

    #[test]
    fn share_and_row_checks() {
        let params = GroupParams::toy();
        let q = params.q.clone();
        let mut rng = ChaCha20Rng::from_seed([8u8; 32]);
        let secret = scalar(710);
        let shares = split_additive(&secret, 4, &q, &mut rng).unwrap();
        let row: Vec<GroupElement> = shares
            .iter()
            .map(|s| commit(&params, &params.g_bidder, s))
            .collect();
        let zeta = commit(&params, &params.g_bidder, &secret);

        for (share, published) in shares.iter().zip(&row) {
            assert!(verify_share(&params, share, published));
        }
        assert!(verify_row(&params, &row, &zeta));

        let mutated = params.scalar_add(&shares[2], &scalar(1));
        assert!(!verify_share(&params, &mutated, &row[2]));
        assert!(!verify_row(&params, &row[..3], &zeta));
    }

    #[test]
    fn sigma_check_accepts_honest_and_rejects_liar() {
        let params = GroupParams::toy();
        let column = [scalar(100), scalar(10), scalar(150), scalar(30)];
        let column_commits: Vec<GroupElement> = column
            .iter()
            .map(|s| commit(&params, &params.g_bidder, s))
            .collect();
        let sum = column_sum(&column, &params.q);
        let sum_commit = commit(&params, &params.g_bidder, &sum);
        assert!(verify_sigma(&params, &sum, &sum_commit, &column_commits));

        let lie = params.scalar_add(&sum, &scalar(5));
        assert!(!verify_sigma(&params, &lie, &sum_commit, &column_commits));

        // zero column sums verify too
        let zeros = [Scalar::zero(), Scalar::zero()];
        let zero_commits: Vec<GroupElement> = zeros
            .iter()
            .map(|s| commit(&params, &params.g_bidder, s))
            .collect();
        assert!(verify_sigma(
            &params,
            &Scalar::zero(),
            &commit(&params, &params.g_bidder, &Scalar::zero()),
            &zero_commits,
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn masks_cancel_out_of_the_total(seed in any::<u64>(), n in 2usize..=8) {
            // The algebraic heart of the protocol: randomizers vanish from
            // the sum of masked codes.
            let q = toy_q();
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let set = generate_randomizers(n, &q, &mut rng).unwrap();
            let codes: Vec<Scalar> = (0..n)
                .map(|i| scalar(((seed >> (i % 8)) % 751) as u32))
                .collect();
            let masked_sum = codes
                .iter()
                .zip(set.randomizers())
                .fold(BigUint::zero(), |acc, (c, r)| {
                    (acc + randomize_code(c, r, &q).value()) % &q
                });
            let plain_sum = codes
                .iter()
                .fold(BigUint::zero(), |acc, c| (acc + c.value()) % &q);
            prop_assert_eq!(masked_sum, plain_sum);
        }

        #[test]
        fn split_column_pipeline_matches_direct_sum(seed in any::<u64>(), n in 2usize..=8) {
            let q = toy_q();
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let secrets: Vec<Scalar> = (0..n).map(|_| {
                use num_bigint::RandBigInt;
                Scalar::new(rng.gen_biguint_below(&q), &q).unwrap()
            }).collect();
            let rows: Vec<Vec<Scalar>> = secrets
                .iter()
                .map(|s| split_additive(s, n, &q, &mut rng).unwrap())
                .collect();
            let sums: Vec<Scalar> = (0..n)
                .map(|col| {
                    let column: Vec<Scalar> = rows.iter().map(|r| r[col].clone()).collect();
                    column_sum(&column, &q)
                })
                .collect();
            let via_matrix = column_sum(&sums, &q);
            let direct = column_sum(&secrets, &q);
            prop_assert_eq!(via_matrix, direct);
        }
    }
}
