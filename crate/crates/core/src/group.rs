//! Prime-field and prime-order-subgroup arithmetic.
//!
//! All commitments, oblivious transfers and proofs live in the unique
//! multiplicative subgroup of order `q` inside `Z_p^*`, where `p = mu*q + 1`
//! and both `p` and `q` are prime. Because `q` is prime, any `h^mu != 1` is
//! a generator of that subgroup, and exponent arithmetic reduces mod `q`.

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Zero};
use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Rounds of Miller-Rabin used everywhere primality is decided.
const MILLER_RABIN_ROUNDS: u32 = 40;

/// Serialize big integers as decimal strings (the config/transcript wire form).
pub mod dec_string {
    use num_bigint::BigUint;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_str_radix(10))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BigUint, D::Error> {
        let raw = String::deserialize(d)?;
        BigUint::parse_bytes(raw.as_bytes(), 10)
            .ok_or_else(|| de::Error::custom(format!("not a decimal integer: {raw:?}")))
    }
}

/// An exponent reduced mod `q`.
///
/// Checked constructors guarantee `value < q`; values arriving over the wire
/// are re-validated by the transcript verifier before use.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Scalar(#[serde(with = "dec_string")] BigUint);

impl Scalar {
    pub fn new(value: BigUint, q: &BigUint) -> Result<Self> {
        if &value >= q {
            return Err(Error::Domain(format!(
                "scalar {value} not below subgroup order {q}"
            )));
        }
        Ok(Scalar(value))
    }

    pub fn from_u64(value: u64, q: &BigUint) -> Result<Self> {
        Self::new(BigUint::from(value), q)
    }

    pub fn zero() -> Self {
        Scalar(BigUint::zero())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }

    /// Wire-side constructor; range is checked later, during verification.
    pub fn from_wire(value: BigUint) -> Self {
        Scalar(value)
    }
}

/// A member of the order-`q` subgroup of `Z_p^*`.
///
/// Produced by group operations (closed by construction) or by the checked
/// [`GroupParams::element_from_biguint`]; wire-side values are re-validated
/// by the transcript verifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupElement(#[serde(with = "dec_string")] BigUint);

impl GroupElement {
    pub fn one() -> Self {
        GroupElement(BigUint::one())
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }

    /// Wire-side constructor; membership is checked later, during verification.
    pub fn from_wire(value: BigUint) -> Self {
        GroupElement(value)
    }
}

/// Group description plus the four generators the protocol uses.
///
/// `g_seller` commits the seller to codes and randomizers, `g_bidder`
/// commits the bidders to masked codes and shares, and `g_ot`/`h_ot` carry
/// the oblivious transfer. The latter two are derived by hashing distinct
/// domain labels into the subgroup so that nobody knows their mutual
/// discrete log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupParams {
    #[serde(with = "dec_string")]
    pub p: BigUint,
    #[serde(with = "dec_string")]
    pub q: BigUint,
    #[serde(with = "dec_string")]
    pub mu: BigUint,
    pub g_seller: GroupElement,
    pub g_bidder: GroupElement,
    pub g_ot: GroupElement,
    pub h_ot: GroupElement,
}

impl GroupParams {
    /// The toy tier: `q = 751`, `p = 4507 = 6*751 + 1`. Big enough to run
    /// every protocol path with human-checkable numbers, far too small for
    /// real hiding.
    pub fn toy() -> Self {
        let p = BigUint::from(4507u32);
        let q = BigUint::from(751u32);
        let mu = BigUint::from(6u32);
        // 2^6 and 3^6 land on distinct subgroup members; the OT pair comes
        // from domain-separated hashing like the generated tiers.
        let g_seller = GroupElement(BigUint::from(64u32));
        let g_bidder = GroupElement(BigUint::from(729u32));
        let g_ot = hash_to_subgroup(&p, &q, &mu, b"ot-generator-g", &[&g_seller, &g_bidder]);
        let h_ot = hash_to_subgroup(
            &p,
            &q,
            &mu,
            b"ot-generator-h",
            &[&g_seller, &g_bidder, &g_ot],
        );
        GroupParams {
            p,
            q,
            mu,
            g_seller,
            g_bidder,
            g_ot,
            h_ot,
        }
    }

    /// Checks every structural invariant: primality of `p` and `q`, the
    /// cofactor identity, and that all four generators are distinct
    /// subgroup members of order exactly `q`.
    pub fn validate(&self) -> Result<()> {
        if !is_prime(&self.q) {
            return Err(Error::Parameter(format!("q = {} is not prime", self.q)));
        }
        if !is_prime(&self.p) {
            return Err(Error::Parameter(format!("p = {} is not prime", self.p)));
        }
        if self.mu.clone() * &self.q + BigUint::one() != self.p {
            return Err(Error::Parameter("p != mu*q + 1".into()));
        }
        let gens = [
            ("g_seller", &self.g_seller),
            ("g_bidder", &self.g_bidder),
            ("g_ot", &self.g_ot),
            ("h_ot", &self.h_ot),
        ];
        for (name, g) in &gens {
            self.check_membership(g).map_err(|_| {
                Error::Parameter(format!("{name} is not an order-q subgroup member"))
            })?;
            if g.is_one() {
                return Err(Error::Parameter(format!("{name} is the identity")));
            }
        }
        for i in 0..gens.len() {
            for j in (i + 1)..gens.len() {
                if gens[i].1 == gens[j].1 {
                    return Err(Error::Parameter(format!(
                        "generators {} and {} coincide",
                        gens[i].0, gens[j].0
                    )));
                }
            }
        }
        Ok(())
    }

    /// Checked injection of an arbitrary integer as a subgroup member.
    pub fn element_from_biguint(&self, value: BigUint) -> Result<GroupElement> {
        if value.is_zero() || value >= self.p {
            return Err(Error::Domain(format!("{value} outside [1, p)")));
        }
        let e = GroupElement(value);
        self.check_membership(&e)?;
        Ok(e)
    }

    fn check_membership(&self, e: &GroupElement) -> Result<()> {
        if e.0.is_zero() || e.0 >= self.p {
            return Err(Error::Domain(format!("{} outside [1, p)", e.0)));
        }
        if !e.0.modpow(&self.q, &self.p).is_one() {
            return Err(Error::Domain(format!("{}^q != 1 mod p", e.0)));
        }
        Ok(())
    }

    pub fn pow(&self, base: &GroupElement, exp: &Scalar) -> GroupElement {
        GroupElement(base.0.modpow(&exp.0, &self.p))
    }

    pub fn mul(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        GroupElement((&a.0 * &b.0) % &self.p)
    }

    /// Multiplicative inverse mod `p`; a subgroup member always has one.
    pub fn inv(&self, a: &GroupElement) -> Result<GroupElement> {
        Ok(GroupElement(inv_mod(&a.0, &self.p)?))
    }

    // Scalar arithmetic mod q.

    pub fn scalar_add(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 + &b.0) % &self.q)
    }

    pub fn scalar_sub(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar(((&a.0 + &self.q) - &b.0) % &self.q)
    }

    pub fn scalar_neg(&self, a: &Scalar) -> Scalar {
        if a.0.is_zero() {
            Scalar::zero()
        } else {
            Scalar(&self.q - &a.0)
        }
    }

    pub fn scalar_mul(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 * &b.0) % &self.q)
    }

    pub fn scalar_inv(&self, a: &Scalar) -> Result<Scalar> {
        Ok(Scalar(inv_mod(&a.0, &self.q)?))
    }

    /// Uniform scalar in `[0, q)`.
    pub fn sample_scalar<R: RngCore>(&self, rng: &mut R) -> Scalar {
        Scalar(rng.gen_biguint_below(&self.q))
    }

    /// Uniform scalar in `[1, q)`.
    pub fn sample_nonzero_scalar<R: RngCore>(&self, rng: &mut R) -> Scalar {
        loop {
            let s = self.sample_scalar(rng);
            if !s.is_zero() {
                return s;
            }
        }
    }

    /// Octet length of the OT message slots: one full scalar, big-endian.
    pub fn code_byte_len(&self) -> usize {
        (self.q.bits() as usize).div_ceil(8)
    }
}

/// Raw modular arithmetic on unsigned big integers.
pub fn pow_mod(base: &BigUint, exp: &BigUint, modulus: &BigUint) -> BigUint {
    base.modpow(exp, modulus)
}

pub fn mul_mod(a: &BigUint, b: &BigUint, modulus: &BigUint) -> BigUint {
    (a * b) % modulus
}

/// Inverse mod a prime, via Fermat. Inverting zero is a domain error.
pub fn inv_mod(a: &BigUint, modulus: &BigUint) -> Result<BigUint> {
    if a.is_zero() {
        return Err(Error::Domain("cannot invert 0".into()));
    }
    let two = BigUint::from(2u32);
    Ok(a.modpow(&(modulus - two), modulus))
}

/// Miller-Rabin with [`MILLER_RABIN_ROUNDS`] pseudorandom bases. The bases
/// are drawn from a generator keyed on the candidate itself, so the verdict
/// is reproducible.
pub fn is_prime(n: &BigUint) -> bool {
    let two = BigUint::from(2u32);
    let three = BigUint::from(3u32);
    if *n < two {
        return false;
    }
    if *n == two || *n == three {
        return true;
    }
    if (n % &two).is_zero() {
        return false;
    }

    // n - 1 = 2^s * d with d odd
    let n_minus_1 = n - BigUint::one();
    let mut d = n_minus_1.clone();
    let mut s = 0u64;
    while (&d % &two).is_zero() {
        d >>= 1;
        s += 1;
    }

    let mut seed = [0u8; 32];
    let digest = Sha256::digest([b"miller-rabin".as_slice(), &n.to_bytes_be()].concat());
    seed.copy_from_slice(&digest);
    let mut rng = ChaCha20Rng::from_seed(seed);

    'witness: for _ in 0..MILLER_RABIN_ROUNDS {
        let a = rng.gen_biguint_range(&two, &n_minus_1);
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 0..s.saturating_sub(1) {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Random subgroup generator: `h^mu mod p` for random `h`, retried until
/// the result is not the identity. With `q` prime the order is then
/// exactly `q`.
pub fn find_subgroup_generator<R: RngCore>(
    p: &BigUint,
    q: &BigUint,
    mu: &BigUint,
    rng: &mut R,
) -> GroupElement {
    debug_assert!(&(mu * q + BigUint::one()) == p);
    loop {
        let h = rng.gen_biguint_range(&BigUint::from(2u32), p);
        let g = h.modpow(mu, p);
        if !g.is_one() {
            return GroupElement(g);
        }
    }
}

/// Deterministic hash-to-subgroup: `H(label || ctr)^mu mod p`, skipping the
/// identity and any element in `avoid`. Nobody learns a discrete log
/// relation between two elements derived under different labels.
fn hash_to_subgroup(
    p: &BigUint,
    q: &BigUint,
    mu: &BigUint,
    label: &[u8],
    avoid: &[&GroupElement],
) -> GroupElement {
    debug_assert!(&(mu * q + BigUint::one()) == p);
    for counter in 0u64.. {
        let mut hasher = Sha256::new();
        hasher.update(b"subgroup-element|");
        hasher.update(label);
        hasher.update(counter.to_be_bytes());
        hasher.update(p.to_bytes_be());
        let mut digest = hasher.finalize().to_vec();
        // Widen until the digest covers p.
        while (digest.len() * 8) < p.bits() as usize + 64 {
            let mut h2 = Sha256::new();
            h2.update(b"subgroup-element-ext|");
            h2.update(&digest);
            digest.extend_from_slice(&h2.finalize());
        }
        let h = BigUint::from_bytes_be(&digest) % p;
        if h.is_zero() {
            continue;
        }
        let g = h.modpow(mu, p);
        if g.is_one() {
            continue;
        }
        let g = GroupElement(g);
        if avoid.iter().any(|a| **a == g) {
            continue;
        }
        return g;
    }
    unreachable!("counter space exhausted")
}

/// Generate a fresh parameter set: a random `q_bits`-bit prime `q`, the
/// smallest even cofactor `mu` making `p = mu*q + 1` prime, and the four
/// generators. Deterministic for a fixed seed.
pub fn generate_group_params(q_bits: u64, rng_seed: &[u8]) -> Result<GroupParams> {
    if q_bits < 8 {
        return Err(Error::Parameter(format!(
            "q_bits = {q_bits} below the minimum of 8"
        )));
    }
    let mut seed = [0u8; 32];
    let digest = Sha256::digest([b"group-params|".as_slice(), rng_seed].concat());
    seed.copy_from_slice(&digest);
    let mut rng = ChaCha20Rng::from_seed(seed);

    const MAX_ATTEMPTS: u32 = 100_000;
    let one = BigUint::one();

    let mut q = None;
    for _ in 0..MAX_ATTEMPTS {
        let mut candidate = rng.gen_biguint(q_bits);
        candidate.set_bit(q_bits - 1, true);
        candidate.set_bit(0, true);
        if is_prime(&candidate) {
            q = Some(candidate);
            break;
        }
    }
    let q = q.ok_or(Error::GenerationFailure {
        attempts: MAX_ATTEMPTS,
    })?;

    let mut found = None;
    let mut mu = BigUint::from(2u32);
    for _ in 0..MAX_ATTEMPTS {
        let p = &mu * &q + &one;
        if is_prime(&p) {
            found = Some((p, mu));
            break;
        }
        mu += 2u32;
    }
    let (p, mu) = found.ok_or(Error::GenerationFailure {
        attempts: MAX_ATTEMPTS,
    })?;

    let g_seller = find_subgroup_generator(&p, &q, &mu, &mut rng);
    let g_bidder = loop {
        let g = find_subgroup_generator(&p, &q, &mu, &mut rng);
        if g != g_seller {
            break g;
        }
    };
    let g_ot = hash_to_subgroup(&p, &q, &mu, b"ot-generator-g", &[&g_seller, &g_bidder]);
    let h_ot = hash_to_subgroup(
        &p,
        &q,
        &mu,
        b"ot-generator-h",
        &[&g_seller, &g_bidder, &g_ot],
    );

    let params = GroupParams {
        p,
        q,
        mu,
        g_seller,
        g_bidder,
        g_ot,
        h_ot,
    };
    params.validate()?;
    Ok(params)
}
