//! Super-increasing codes, subset-sum encoding, and the greedy decoder.
//!
//! Each listed price gets a secret code; because every code exceeds the sum
//! of all smaller ones and the whole book stays below `q`, the sum of any
//! subset of codes identifies that subset uniquely and a single greedy pass
//! recovers it.

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Zero};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::group::Scalar;
use crate::{Error, Result};

/// The seller's ascending price list, in whole token units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceTable(Vec<u64>);

impl PriceTable {
    pub fn new(prices: Vec<u64>) -> Result<Self> {
        if prices.is_empty() {
            return Err(Error::Parameter("price table must not be empty".into()));
        }
        if prices.contains(&0) {
            return Err(Error::Parameter("prices must be positive".into()));
        }
        if !prices.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Parameter("prices must be strictly ascending".into()));
        }
        Ok(PriceTable(prices))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Price for a 1-based index.
    pub fn price(&self, index: usize) -> Option<u64> {
        index.checked_sub(1).and_then(|i| self.0.get(i)).copied()
    }

    pub fn prices(&self) -> &[u64] {
        &self.0
    }
}

/// The secret super-increasing code book, one code per price.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeBook {
    codes: Vec<BigUint>,
    q: BigUint,
}

impl CodeBook {
    pub fn new(codes: Vec<BigUint>, q: BigUint) -> Result<Self> {
        if codes.is_empty() {
            return Err(Error::Parameter("code book must not be empty".into()));
        }
        let mut running = BigUint::zero();
        for (i, c) in codes.iter().enumerate() {
            if c.is_zero() || *c >= q {
                return Err(Error::Parameter(format!("code {i} outside [1, q)")));
            }
            if *c <= running {
                return Err(Error::Parameter(format!(
                    "code {i} breaks the super-increasing property"
                )));
            }
            running += c;
        }
        if running >= q {
            return Err(Error::Parameter("codes sum to q or more".into()));
        }
        Ok(CodeBook { codes, q })
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Code for a 1-based price index.
    pub fn code(&self, index: usize) -> Option<Scalar> {
        index
            .checked_sub(1)
            .and_then(|i| self.codes.get(i))
            .map(|c| Scalar::new(c.clone(), &self.q).expect("codes below q by invariant"))
    }

    pub fn codes(&self) -> &[BigUint] {
        &self.codes
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }
}

/// Which prices were chosen; one bit per listed price.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FlagVector(Vec<bool>);

impl FlagVector {
    pub fn new(flags: Vec<bool>) -> Self {
        FlagVector(flags)
    }

    /// Indicator of a set of 1-based indices.
    pub fn from_indices(k: usize, indices: &[usize]) -> Self {
        let mut flags = vec![false; k];
        for &i in indices {
            flags[i - 1] = true;
        }
        FlagVector(flags)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn count_set(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    /// 1-based indices of set flags, descending.
    pub fn set_indices_desc(&self) -> Vec<usize> {
        (1..=self.0.len())
            .rev()
            .filter(|&i| self.0[i - 1])
            .collect()
    }
}

/// Maximum starting code drawn by [`generate_codes`].
const FIRST_CODE_MAX: u64 = 4;

/// Conservative ceiling on the sum a generated book can reach: the running
/// sum at most triples per step (`code = sum + delta`, `delta <= sum`).
fn generation_bound(k: usize) -> BigUint {
    let mut bound = BigUint::from(FIRST_CODE_MAX);
    for _ in 1..k {
        bound *= 3u32;
    }
    bound
}

/// Draw a fresh super-increasing book of `k` codes below `q`.
///
/// The first code is a small random positive value; each later code is the
/// running sum plus a uniform delta in `[1, running sum]`, so consecutive
/// codes roughly double and the final sum stays predictably below `q`.
pub fn generate_codes<R: RngCore>(k: usize, q: &BigUint, rng: &mut R) -> Result<CodeBook> {
    if k == 0 {
        return Err(Error::Parameter("need at least one code".into()));
    }
    if generation_bound(k) >= *q {
        return Err(Error::Parameter(format!(
            "q = {q} too small to hold {k} doubling codes"
        )));
    }
    let one = BigUint::one();
    let first_bound = BigUint::from(FIRST_CODE_MAX) + &one;
    let mut codes = Vec::with_capacity(k);
    let mut running = rng.gen_biguint_range(&one, &first_bound);
    codes.push(running.clone());
    for _ in 1..k {
        let delta = rng.gen_biguint_range(&one, &(&running + &one));
        let code = &running + delta;
        running += &code;
        codes.push(code);
    }
    CodeBook::new(codes, q.clone())
}

/// Subset-sum of the codes selected by `flags`. The book invariant keeps
/// the plain sum below `q`, so no reduction ever happens.
pub fn encode(book: &CodeBook, flags: &FlagVector) -> Result<Scalar> {
    if flags.len() != book.len() {
        return Err(Error::LengthMismatch {
            expected: book.len(),
            got: flags.len(),
        });
    }
    let sum = book
        .codes
        .iter()
        .zip(flags.bits())
        .filter(|(_, &f)| f)
        .fold(BigUint::zero(), |acc, (c, _)| acc + c);
    Scalar::new(sum, &book.q)
}

/// Greedy decode, largest code first: take a code whenever the residual
/// still covers it. With super-increasing codes, a residual equal to some
/// code is representable only by that code, hence the `>=` decision. A
/// nonzero final residual means the value was never a subset sum - a tie
/// between bidders or a corrupted share - and is reported, never truncated.
pub fn solve(book: &CodeBook, sigma: &Scalar) -> Result<FlagVector> {
    let mut residual = sigma.value().clone();
    let mut flags = vec![false; book.len()];
    for (i, code) in book.codes.iter().enumerate().rev() {
        if residual >= *code {
            flags[i] = true;
            residual -= code;
        }
    }
    if !residual.is_zero() {
        return Err(Error::UnsolvableKnapsack {
            residual: residual.to_string(),
        });
    }
    Ok(FlagVector(flags))
}

/// The highest and second-highest flagged prices.
pub fn winning_prices(flags: &FlagVector, table: &PriceTable) -> Result<(u64, Option<u64>)> {
    if flags.len() != table.len() {
        return Err(Error::LengthMismatch {
            expected: table.len(),
            got: flags.len(),
        });
    }
    let mut set = flags.set_indices_desc().into_iter();
    let highest = set.next().ok_or(Error::NoBids)?;
    let second = set.next();
    Ok((
        table.price(highest).expect("index from same-length vector"),
        second.map(|i| table.price(i).expect("index from same-length vector")),
    ))
}
