//! Ballot encoding: a full preference list as one integer.
//!
//! Uses the Myrvold–Ruskey linear-time ranking (`rank1`/`unrank1` variant).
//! Internally permutations are 0-based; the protocol-facing types carry
//! 1-based candidate IDs and the shift happens at this boundary.
//!
//! `unrank1(n, r, π)` starts from the identity and, for `n` down to 1, swaps
//! `π[n-1]` with `π[r mod n]` then sets `r = r div n`. `rank1` undoes those
//! swaps using the inverse permutation and accumulates the mixed-radix digits.
//! The resulting order is not lexicographic.

use std::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("preference list is not a permutation of 1..={0}")]
    InvalidPermutation(usize),
    #[error("rank {rank} is out of range for {n} candidates")]
    RankOutOfRange { rank: String, n: usize },
}

/// Candidate IDs in order of preference, most preferred first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PreferenceList(Vec<u32>);

impl PreferenceList {
    pub fn new(cids: Vec<u32>) -> Result<Self, CodecError> {
        let n = cids.len();
        let mut seen = vec![false; n];
        for &cid in &cids {
            let slot = (cid as usize).wrapping_sub(1);
            if slot >= n || seen[slot] {
                return Err(CodecError::InvalidPermutation(n));
            }
            seen[slot] = true;
        }
        Ok(PreferenceList(cids))
    }

    /// The list `1, 2, ..., n`.
    pub fn identity(n: usize) -> Self {
        PreferenceList((1..=n as u32).collect())
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<u32> {
        self.0
    }

    /// 0-based position of `cid`, if present.
    pub fn position(&self, cid: u32) -> Option<usize> {
        self.0.iter().position(|&c| c == cid)
    }
}

impl Serialize for PreferenceList {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PreferenceList {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<u32>::deserialize(d)?;
        PreferenceList::new(v).map_err(serde::de::Error::custom)
    }
}

/// A ballot rank: an integer in `[0, n!)` identifying one preference list.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BallotRank {
    value: BigUint,
    n: usize,
}

impl BallotRank {
    pub fn new(value: BigUint, n: usize) -> Result<Self, CodecError> {
        check_range(&value, n)?;
        Ok(BallotRank { value, n })
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn candidates(&self) -> usize {
        self.n
    }

    pub fn into_value(self) -> BigUint {
        self.value
    }
}

impl fmt::Display for BallotRank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

pub fn factorial(n: usize) -> BigUint {
    (2..=n as u64).fold(BigUint::one(), |acc, k| acc * k)
}

fn check_range(value: &BigUint, n: usize) -> Result<(), CodecError> {
    if *value >= factorial(n) {
        return Err(CodecError::RankOutOfRange {
            rank: value.to_string(),
            n,
        });
    }
    Ok(())
}

/// Rank a validated preference list.
pub fn rank(prefs: &PreferenceList) -> BallotRank {
    rank_counted(prefs).0
}

/// Validate and rank a raw list of 1-based candidate IDs.
pub fn rank_cids(cids: &[u32]) -> Result<BallotRank, CodecError> {
    Ok(rank(&PreferenceList::new(cids.to_vec())?))
}

/// Rank, also returning the number of elementary arithmetic steps taken
/// (swaps, small-integer multiplications and additions).
pub fn rank_counted(prefs: &PreferenceList) -> (BallotRank, usize) {
    let n = prefs.len();
    let mut perm: Vec<usize> = prefs.as_slice().iter().map(|&c| c as usize - 1).collect();
    let mut inv = vec![0usize; n];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    let mut steps = 0usize;

    // digits[k] is the value s taken when the active prefix has length k + 1
    let mut digits = vec![0usize; n];
    for len in (2..=n).rev() {
        let s = perm[len - 1];
        digits[len - 1] = s;
        let j = inv[len - 1];
        perm.swap(len - 1, j);
        inv.swap(s, len - 1);
        steps += 2;
    }

    let mut value = BigUint::zero();
    for len in 2..=n {
        value = value * len + digits[len - 1];
        steps += 2;
    }
    (BallotRank { value, n }, steps)
}

/// Unrank `value` into the preference list over `n` candidates.
pub fn unrank(value: &BigUint, n: usize) -> Result<PreferenceList, CodecError> {
    unrank_counted(value, n).map(|(p, _)| p)
}

pub fn unrank_counted(value: &BigUint, n: usize) -> Result<(PreferenceList, usize), CodecError> {
    check_range(value, n)?;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut r = value.clone();
    let mut steps = 0usize;
    for len in (1..=n).rev() {
        let (q, m) = r.div_rem(&BigUint::from(len));
        // m < len, always fits
        let m = m.to_usize().unwrap_or_default();
        perm.swap(len - 1, m);
        r = q;
        steps += 2;
    }
    let cids = perm.into_iter().map(|p| p as u32 + 1).collect();
    Ok((PreferenceList(cids), steps))
}
