//! 1-out-of-k oblivious transfer of fixed-length octet strings.
//!
//! Two-generator blinded-choice construction over the order-q subgroup. The
//! receiver commits to slot `c` as `y = g_ot^a * h_ot^c` with a fresh
//! blinding exponent `a`; the sender answers every slot `i` with
//! `u_i = g_ot^{s_i}` and the message XOR-masked under a pad keyed on
//! `(y * h_ot^{-i})^{s_i}`. For the chosen slot that key collapses to
//! `u_i^a`, which the receiver can form; every other slot hides behind the
//! unknown discrete log between the two generators.

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::group::{GroupElement, GroupParams, Scalar};
use crate::{Error, Result};

/// The receiver's blinded slot commitment, sent to the sender.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OtRequest {
    pub blinded_choice: GroupElement,
}

/// Single-use receiver secret: the blinding exponent and the chosen slot.
#[derive(Debug, Clone)]
pub struct OtReceiverState {
    blinding: Scalar,
    choice: usize,
}

impl OtReceiverState {
    pub fn choice(&self) -> usize {
        self.choice
    }
}

/// One masked slot: the sender's per-slot public value and the ciphertext.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OtSlot {
    pub public: GroupElement,
    #[serde(with = "hex::serde")]
    pub masked: Vec<u8>,
}

/// The sender's answer: one masked slot per message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OtResponse {
    pub slots: Vec<OtSlot>,
}

/// XOR pad for slot `index`, expanded from the shared group element.
fn pad(key: &GroupElement, index: usize, len: usize) -> Vec<u8> {
    let key_bytes = key.value().to_bytes_be();
    let mut out = Vec::with_capacity(len);
    let mut counter = 0u32;
    while out.len() < len {
        let mut hasher = Sha256::new();
        hasher.update(b"ot-slot-pad|");
        hasher.update((key_bytes.len() as u32).to_be_bytes());
        hasher.update(&key_bytes);
        hasher.update((index as u32).to_be_bytes());
        hasher.update(counter.to_be_bytes());
        out.extend_from_slice(&hasher.finalize());
        counter += 1;
    }
    out.truncate(len);
    out
}

fn xor_into(mut data: Vec<u8>, mask: &[u8]) -> Vec<u8> {
    for (d, m) in data.iter_mut().zip(mask) {
        *d ^= m;
    }
    data
}

/// `h_ot^{-index}` as `h_ot^{q - (index mod q)}`.
fn h_to_neg_index(params: &GroupParams, index: usize) -> GroupElement {
    let idx = BigUint::from(index as u64) % &params.q;
    let exp = Scalar::new((&params.q - idx) % &params.q, &params.q).expect("reduced mod q");
    params.pow(&params.h_ot, &exp)
}

fn h_to_index(params: &GroupParams, index: usize) -> GroupElement {
    let exp = Scalar::new(BigUint::from(index as u64) % &params.q, &params.q).expect("reduced");
    params.pow(&params.h_ot, &exp)
}

/// Start a transfer for the 1-based slot `choice`.
pub fn ot_request<R: rand::RngCore>(
    choice: usize,
    params: &GroupParams,
    rng: &mut R,
) -> Result<(OtRequest, OtReceiverState)> {
    if choice == 0 {
        return Err(Error::Parameter("choice indices are 1-based".into()));
    }
    let blinding = params.sample_nonzero_scalar(rng);
    let blinded_choice = params.mul(
        &params.pow(&params.g_ot, &blinding),
        &h_to_index(params, choice),
    );
    Ok((
        OtRequest { blinded_choice },
        OtReceiverState { blinding, choice },
    ))
}

/// Mask all `k` messages against the request. Every message must already be
/// exactly [`GroupParams::code_byte_len`] octets.
pub fn ot_respond<R: rand::RngCore>(
    messages: &[Vec<u8>],
    request: &OtRequest,
    params: &GroupParams,
    rng: &mut R,
) -> Result<OtResponse> {
    let len = params.code_byte_len();
    let slots = messages
        .iter()
        .enumerate()
        .map(|(i, message)| {
            if message.len() != len {
                return Err(Error::LengthMismatch {
                    expected: len,
                    got: message.len(),
                });
            }
            let index = i + 1;
            let secret = params.sample_nonzero_scalar(rng);
            let public = params.pow(&params.g_ot, &secret);
            let key = params.pow(
                &params.mul(&request.blinded_choice, &h_to_neg_index(params, index)),
                &secret,
            );
            Ok(OtSlot {
                public,
                masked: xor_into(message.clone(), &pad(&key, index, len)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OtResponse { slots })
}

/// Unmask the chosen slot. Anything recovered with a mismatched state is
/// garbage that only the protocol-layer commitment check can expose.
pub fn ot_recover(
    response: &OtResponse,
    state: &OtReceiverState,
    params: &GroupParams,
) -> Result<Vec<u8>> {
    let slot = response
        .slots
        .get(state.choice - 1)
        .ok_or_else(|| Error::Protocol(format!("response has no slot {}", state.choice)))?;
    let key = params.pow(&slot.public, &state.blinding);
    Ok(xor_into(
        slot.masked.clone(),
        &pad(&key, state.choice, slot.masked.len()),
    ))
}

/// Fixed-length big-endian encoding of a scalar for the OT slots.
pub fn scalar_to_code_bytes(scalar: &Scalar, params: &GroupParams) -> Vec<u8> {
    let mut bytes = scalar.value().to_bytes_be();
    let len = params.code_byte_len();
    let mut out = vec![0u8; len.saturating_sub(bytes.len())];
    out.append(&mut bytes);
    out
}

/// Inverse of [`scalar_to_code_bytes`]; refuses values at or above `q`.
pub fn code_bytes_to_scalar(bytes: &[u8], params: &GroupParams) -> Result<Scalar> {
    Scalar::new(BigUint::from_bytes_be(bytes), &params.q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;
    use proptest::prelude::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::collections::HashSet;

    fn toy() -> GroupParams {
        GroupParams::toy()
    }

    fn code_bytes(v: u32, params: &GroupParams) -> Vec<u8> {
        scalar_to_code_bytes(&Scalar::new(BigUint::from(v), &params.q).unwrap(), params)
    }

    #[test]
    fn request_matches_direct_exponentiation() {
        let params = toy();
        let mut rng = ChaCha20Rng::from_seed([2u8; 32]);
        let (request, state) = ot_request(3, &params, &mut rng).unwrap();
        let expected = params.mul(
            &params.pow(&params.g_ot, &state.blinding),
            &params.pow(
                &params.h_ot,
                &Scalar::new(BigUint::from(3u32), &params.q).unwrap(),
            ),
        );
        assert_eq!(request.blinded_choice, expected);
    }

    #[test]
    fn fresh_blinding_distinguishes_equal_choices() {
        let params = toy();
        let mut rng = ChaCha20Rng::from_seed([4u8; 32]);
        let (r1, _) = ot_request(5, &params, &mut rng).unwrap();
        let (r2, _) = ot_request(5, &params, &mut rng).unwrap();
        assert_ne!(r1.blinded_choice, r2.blinded_choice);
    }

    #[test]
    fn zero_choice_rejected() {
        let params = toy();
        let mut rng = ChaCha20Rng::from_seed([0u8; 32]);
        assert!(ot_request(0, &params, &mut rng).is_err());
    }

    #[test]
    fn degenerate_single_slot_transfer() {
        let params = toy();
        let mut rng = ChaCha20Rng::from_seed([6u8; 32]);
        let message = code_bytes(42, &params);
        let (request, state) = ot_request(1, &params, &mut rng).unwrap();
        let response =
            ot_respond(std::slice::from_ref(&message), &request, &params, &mut rng).unwrap();
        assert_eq!(response.slots.len(), 1);
        assert_eq!(ot_recover(&response, &state, &params).unwrap(), message);
    }

    #[test]
    fn response_always_has_one_slot_per_message() {
        let params = toy();
        let mut rng = ChaCha20Rng::from_seed([8u8; 32]);
        for k in [1usize, 2, 8, 32] {
            let messages: Vec<_> = (0..k).map(|i| code_bytes(i as u32 + 1, &params)).collect();
            let (request, _) = ot_request(1, &params, &mut rng).unwrap();
            let response = ot_respond(&messages, &request, &params, &mut rng).unwrap();
            assert_eq!(response.slots.len(), k);
        }
    }

    #[test]
    fn wrong_length_message_rejected() {
        let params = toy();
        let mut rng = ChaCha20Rng::from_seed([8u8; 32]);
        let (request, _) = ot_request(1, &params, &mut rng).unwrap();
        assert!(matches!(
            ot_respond(&[vec![1u8; 5]], &request, &params, &mut rng),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn scripted_randomness_reproduces_response_bitwise() {
        let params = toy();
        let messages: Vec<_> = (1u32..=4).map(|v| code_bytes(v * 7, &params)).collect();
        let run = |seed: [u8; 32]| {
            let mut rng = ChaCha20Rng::from_seed(seed);
            let (request, _) = ot_request(2, &params, &mut rng).unwrap();
            ot_respond(&messages, &request, &params, &mut rng).unwrap()
        };
        assert_eq!(run([11u8; 32]), run([11u8; 32]));
    }

    #[test]
    fn golden_randomized_code_recovery() {
        // Bidder 1's slot list from the worked example: codes {3,5,10,21,40,
        // 90,180,360} masked by randomizer 700 mod 751; choice 3 yields 710.
        let params = toy();
        let randomizer = 700u32;
        let messages: Vec<_> = [3u32, 5, 10, 21, 40, 90, 180, 360]
            .iter()
            .map(|&c| code_bytes((c + randomizer) % 751, &params))
            .collect();
        let mut rng = ChaCha20Rng::from_seed([12u8; 32]);
        let (request, state) = ot_request(3, &params, &mut rng).unwrap();
        let response = ot_respond(&messages, &request, &params, &mut rng).unwrap();
        let recovered = ot_recover(&response, &state, &params).unwrap();
        let value = code_bytes_to_scalar(&recovered, &params).unwrap();
        assert_eq!(value.value(), &BigUint::from(710u32));
    }

    #[test]
    fn every_choice_recovers_its_message() {
        let params = toy();
        let mut rng = ChaCha20Rng::from_seed([13u8; 32]);
        let k = 8;
        for trial in 0..100u32 {
            let choice = (trial as usize % k) + 1;
            let messages: Vec<_> = (0..k)
                .map(|i| code_bytes((trial * 11 + i as u32 * 3) % 751, &params))
                .collect();
            let (request, state) = ot_request(choice, &params, &mut rng).unwrap();
            let response = ot_respond(&messages, &request, &params, &mut rng).unwrap();
            assert_eq!(
                ot_recover(&response, &state, &params).unwrap(),
                messages[choice - 1]
            );
        }
    }

    #[test]
    fn wrong_state_yields_garbage_failing_commitment_check() {
        // Recover with a state for a different slot; the protocol-layer
        // check eta_i * xi_j = g_s^code must then fail.
        let params = toy();
        let q = params.q.clone();
        let mut rng = ChaCha20Rng::from_seed([14u8; 32]);
        let codes = [3u32, 5, 10, 21, 40, 90, 180, 360];
        let randomizer = Scalar::new(BigUint::from(700u32), &q).unwrap();
        let messages: Vec<_> = codes
            .iter()
            .map(|&c| {
                let masked = (BigUint::from(c) + randomizer.value()) % &q;
                scalar_to_code_bytes(&Scalar::new(masked, &q).unwrap(), &params)
            })
            .collect();
        let (request, _) = ot_request(3, &params, &mut rng).unwrap();
        let (_, wrong_state) = ot_request(5, &params, &mut rng).unwrap();
        let response = ot_respond(&messages, &request, &params, &mut rng).unwrap();
        let garbage = ot_recover(&response, &wrong_state, &params).unwrap();

        let eta_5 = params.pow(
            &params.g_seller,
            &Scalar::new(BigUint::from(codes[4]), &q).unwrap(),
        );
        let xi = params.pow(&params.g_seller, &randomizer);
        let checks_out = match code_bytes_to_scalar(&garbage, &params) {
            Ok(code) => params.mul(&eta_5, &xi) == params.pow(&params.g_seller, &code),
            Err(_) => false,
        };
        assert!(!checks_out);
    }

    #[test]
    fn blinded_request_sweeps_the_subgroup() {
        // For a fixed choice, y = g_ot^a * h_ot^c takes q-1 distinct values
        // as the nonzero blinding a varies: the transcript pins nothing.
        let params = toy();
        let q: u64 = params.q.to_string().parse().unwrap();
        let choice_term = params.pow(
            &params.h_ot,
            &Scalar::new(BigUint::from(3u32), &params.q).unwrap(),
        );
        let mut seen = HashSet::new();
        for a in 1..q {
            let s = Scalar::new(BigUint::from(a), &params.q).unwrap();
            let y = params.mul(&params.pow(&params.g_ot, &s), &choice_term);
            seen.insert(y.value().clone());
        }
        assert_eq!(seen.len() as u64, q - 1);
    }

    #[test]
    fn code_bytes_roundtrip_and_range_check() {
        let params = toy();
        assert_eq!(params.code_byte_len(), 2);
        let s = Scalar::new(BigUint::from(710u32), &params.q).unwrap();
        let bytes = scalar_to_code_bytes(&s, &params);
        assert_eq!(bytes, vec![0x02, 0xc6]);
        assert_eq!(code_bytes_to_scalar(&bytes, &params).unwrap(), s);
        // 751 itself is out of range
        assert!(code_bytes_to_scalar(&[0x02, 0xef], &params).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn transfer_is_identity_on_chosen_slot(seed in any::<u64>(), k in 1usize..=64, raw_choice in 0usize..64) {
            let params = toy();
            let choice = raw_choice % k + 1;
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let messages: Vec<_> = (0..k)
                .map(|i| code_bytes(((seed as u32).wrapping_mul(31).wrapping_add(i as u32 * 17)) % 751, &params))
                .collect();
            let (request, state) = ot_request(choice, &params, &mut rng).unwrap();
            let response = ot_respond(&messages, &request, &params, &mut rng).unwrap();
            prop_assert_eq!(ot_recover(&response, &state, &params).unwrap(), messages[choice - 1].clone());
        }
    }
}
