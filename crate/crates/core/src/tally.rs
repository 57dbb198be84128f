//! Pluggable tallying.
//!
//! A tally rule is two functions over a shared [`TallyStorage`]: `tally` folds
//! one revealed ballot rank into storage, `calculate_result` reads the winner
//! back out. Borda Count keeps cumulative scores per candidate; Tideman keeps
//! a count per distinct rank and runs ranked pairs at result time.
//!
//! Tie-breaks: Borda keeps the lowest CID among equal maxima. Tideman
//! enumerates pairs as `(a, b)` with `a < b`, sorts them by descending margin
//! with a stable insertion sort, produces no pair for an exact pairwise tie,
//! and picks the lowest-CID source of the locked graph.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use crate::codec::{unrank, CodecError};
use crate::ledger::OpCounts;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TallyStorage {
    borda_scores: BTreeMap<u32, u64>,
    rank_counts: BTreeMap<BigUint, u64>,
    rank_list: Vec<BigUint>,
    ballots: u64,
}

impl TallyStorage {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn borda_scores(&self) -> &BTreeMap<u32, u64> {
        &self.borda_scores
    }

    pub fn rank_counts(&self) -> &BTreeMap<BigUint, u64> {
        &self.rank_counts
    }

    pub fn rank_list(&self) -> &[BigUint] {
        &self.rank_list
    }

    /// Number of ballots folded in so far.
    pub fn ballots(&self) -> u64 {
        self.ballots
    }
}

impl Serialize for TallyStorage {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct RankCount {
            rank: String,
            count: u64,
        }
        let counts: Vec<RankCount> = self
            .rank_list
            .iter()
            .map(|r| RankCount { rank: r.to_string(), count: self.rank_counts[r] })
            .collect();
        let mut st = s.serialize_struct("TallyStorage", 3)?;
        st.serialize_field("ballots", &self.ballots)?;
        st.serialize_field("borda_scores", &self.borda_scores)?;
        st.serialize_field("rank_counts", &counts)?;
        st.end()
    }
}

pub trait TallyRule {
    /// Fold one ballot in. Returns the storage touches for metering.
    fn tally(&self, vid: &BigUint, candidates: usize, ts: &mut TallyStorage) -> Result<OpCounts, CodecError>;

    /// Winner CID, or `None` when no winner can be determined.
    fn calculate_result(&self, candidates: usize, ts: &TallyStorage) -> Option<u32>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BordaCount;

#[derive(Debug, Clone, Copy, Default)]
pub struct Tideman;

impl TallyRule for BordaCount {
    fn tally(&self, vid: &BigUint, candidates: usize, ts: &mut TallyStorage) -> Result<OpCounts, CodecError> {
        let prefs = unrank(vid, candidates)?;
        let n = prefs.len() as u64;
        for (i, &cid) in prefs.as_slice().iter().enumerate() {
            *ts.borda_scores.entry(cid).or_insert(0) += n - i as u64;
        }
        ts.ballots += 1;
        Ok(OpCounts { storage_read: n, storage_write: n, ..Default::default() })
    }

    fn calculate_result(&self, candidates: usize, ts: &TallyStorage) -> Option<u32> {
        let mut max = 0;
        let mut winner = None;
        for cid in 1..=candidates as u32 {
            let score = ts.borda_scores.get(&cid).copied().unwrap_or(0);
            if score > max {
                max = score;
                winner = Some(cid);
            }
        }
        winner
    }
}

impl TallyRule for Tideman {
    fn tally(&self, vid: &BigUint, candidates: usize, ts: &mut TallyStorage) -> Result<OpCounts, CodecError> {
        // validates the range
        unrank(vid, candidates)?;
        let mut ops = OpCounts { storage_read: 1, storage_write: 1, ..Default::default() };
        let count = ts.rank_counts.entry(vid.clone()).or_insert(0);
        if *count == 0 {
            ts.rank_list.push(vid.clone());
            ops.storage_write += 1;
        }
        *count += 1;
        ts.ballots += 1;
        Ok(ops)
    }

    fn calculate_result(&self, candidates: usize, ts: &TallyStorage) -> Option<u32> {
        if ts.rank_list.is_empty() {
            return None;
        }
        let locked = locked_graph(candidates, ts);
        (1..=candidates as u32).find(|&c| locked.is_source(c))
    }
}

pub fn borda_tally(vid: &BigUint, candidates: usize, ts: &mut TallyStorage) -> Result<(), CodecError> {
    BordaCount.tally(vid, candidates, ts).map(|_| ())
}

pub fn borda_result(candidates: usize, ts: &TallyStorage) -> Option<u32> {
    BordaCount.calculate_result(candidates, ts)
}

pub fn tideman_tally(vid: &BigUint, candidates: usize, ts: &mut TallyStorage) -> Result<(), CodecError> {
    Tideman.tally(vid, candidates, ts).map(|_| ())
}

pub fn tideman_result(candidates: usize, ts: &TallyStorage) -> Option<u32> {
    Tideman.calculate_result(candidates, ts)
}

/// Tally method selected by name in the election parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TallyMethod {
    #[default]
    Borda,
    Tideman,
}

impl TallyMethod {
    pub fn rule(&self) -> &'static dyn TallyRule {
        match self {
            TallyMethod::Borda => &BordaCount,
            TallyMethod::Tideman => &Tideman,
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "borda" => Some(TallyMethod::Borda),
            "tideman" => Some(TallyMethod::Tideman),
            _ => None,
        }
    }
}

/// Head-to-head counts for one unordered pair `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairTally {
    pub a: u32,
    pub b: u32,
    pub a_over_b: u64,
    pub b_over_a: u64,
}

/// A strict pairwise majority: `winner` beats `loser` by `margin` votes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pair {
    pub winner: u32,
    pub loser: u32,
    pub margin: u64,
}

/// Pairwise counts accumulated over every stored rank.
pub fn preference_matrix(candidates: usize, ts: &TallyStorage) -> Vec<PairTally> {
    let n = candidates as u32;
    let mut matrix: Vec<PairTally> = (1..=n)
        .flat_map(|a| (a + 1..=n).map(move |b| PairTally { a, b, a_over_b: 0, b_over_a: 0 }))
        .collect();
    for rank in &ts.rank_list {
        let count = ts.rank_counts[rank];
        let Ok(prefs) = unrank(rank, candidates) else { continue };
        let mut pos = vec![0usize; candidates + 1];
        for (i, &cid) in prefs.as_slice().iter().enumerate() {
            pos[cid as usize] = i;
        }
        for p in &mut matrix {
            if pos[p.a as usize] < pos[p.b as usize] {
                p.a_over_b += count;
            } else {
                p.b_over_a += count;
            }
        }
    }
    matrix
}

pub fn pairs(matrix: &[PairTally]) -> Vec<Pair> {
    matrix
        .iter()
        .filter_map(|p| match p.a_over_b.cmp(&p.b_over_a) {
            std::cmp::Ordering::Greater => Some(Pair { winner: p.a, loser: p.b, margin: p.a_over_b - p.b_over_a }),
            std::cmp::Ordering::Less => Some(Pair { winner: p.b, loser: p.a, margin: p.b_over_a - p.a_over_b }),
            std::cmp::Ordering::Equal => None,
        })
        .collect()
}

/// Stable insertion sort, descending by margin.
pub fn sort_pairs(mut pairs: Vec<Pair>) -> Vec<Pair> {
    for i in 1..pairs.len() {
        let mut j = i;
        while j > 0 && pairs[j - 1].margin < pairs[j].margin {
            pairs.swap(j - 1, j);
            j -= 1;
        }
    }
    pairs
}

/// Directed graph of locked pairs over CIDs `1..=n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LockedGraph {
    n: usize,
    edges: Vec<bool>,
}

impl LockedGraph {
    pub fn new(n: usize) -> Self {
        LockedGraph { n, edges: vec![false; n * n] }
    }

    fn idx(&self, from: u32, to: u32) -> usize {
        (from as usize - 1) * self.n + (to as usize - 1)
    }

    pub fn is_locked(&self, from: u32, to: u32) -> bool {
        self.edges[self.idx(from, to)]
    }

    fn lock(&mut self, from: u32, to: u32) {
        let i = self.idx(from, to);
        self.edges[i] = true;
    }

    /// Depth-first reachability.
    pub fn reaches(&self, from: u32, to: u32) -> bool {
        let mut seen = vec![false; self.n + 1];
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            if v == to {
                return true;
            }
            if std::mem::replace(&mut seen[v as usize], true) {
                continue;
            }
            stack.extend((1..=self.n as u32).filter(|&w| self.is_locked(v, w)));
        }
        false
    }

    /// Locking `winner → loser` keeps the graph acyclic.
    pub fn has_no_cycle(&self, winner: u32, loser: u32) -> bool {
        !self.reaches(loser, winner)
    }

    pub fn is_source(&self, cid: u32) -> bool {
        (1..=self.n as u32).all(|from| !self.is_locked(from, cid))
    }

    pub fn is_acyclic(&self) -> bool {
        (1..=self.n as u32).all(|v| {
            (1..=self.n as u32)
                .filter(|&w| self.is_locked(v, w))
                .all(|w| !self.reaches(w, v))
        })
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let n = self.n as u32;
        (1..=n).flat_map(move |a| (1..=n).filter(move |&b| self.is_locked(a, b)).map(move |b| (a, b)))
    }
}

pub fn lock_pairs(candidates: usize, sorted: &[Pair]) -> LockedGraph {
    let mut g = LockedGraph::new(candidates);
    for p in sorted {
        if g.has_no_cycle(p.winner, p.loser) {
            g.lock(p.winner, p.loser);
        }
    }
    g
}

pub fn locked_graph(candidates: usize, ts: &TallyStorage) -> LockedGraph {
    let sorted = sort_pairs(pairs(&preference_matrix(candidates, ts)));
    let g = lock_pairs(candidates, &sorted);
    debug_assert!(g.is_acyclic());
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::rank_cids;

    fn storage(method: TallyMethod, profile: &[&[u32]]) -> TallyStorage {
        let mut ts = TallyStorage::new();
        for b in profile {
            let r = rank_cids(b).unwrap();
            method.rule().tally(r.value(), b.len(), &mut ts).unwrap();
        }
        ts
    }

    #[test]
    fn borda_scores_decrease() {
        let ts = storage(TallyMethod::Borda, &[&[1, 2, 3]]);
        assert_eq!(ts.borda_scores(), &BTreeMap::from([(1, 3), (2, 2), (3, 1)]));
        let ts2 = storage(TallyMethod::Borda, &[&[1, 2, 3], &[1, 2, 3]]);
        assert_eq!(ts2.borda_scores(), &BTreeMap::from([(1, 6), (2, 4), (3, 2)]));
    }

    #[test]
    fn borda_tie_goes_to_lowest_cid() {
        let ts = storage(TallyMethod::Borda, &[&[1, 2, 3], &[1, 2, 3], &[2, 3, 1]]);
        assert_eq!(ts.borda_scores(), &BTreeMap::from([(1, 7), (2, 7), (3, 4)]));
        assert_eq!(borda_result(3, &ts), Some(1));
    }

    #[test]
    fn borda_single_and_empty() {
        assert_eq!(borda_result(3, &storage(TallyMethod::Borda, &[&[3, 1, 2]])), Some(3));
        assert_eq!(borda_result(3, &TallyStorage::new()), None);
    }

    #[test]
    fn borda_rejects_out_of_range() {
        let mut ts = TallyStorage::new();
        assert!(borda_tally(&BigUint::from(6u32), 3, &mut ts).is_err());
        assert!(tideman_tally(&BigUint::from(6u32), 3, &mut ts).is_err());
        assert_eq!(ts.ballots(), 0);
    }

    #[test]
    fn tideman_storage() {
        let ts = storage(TallyMethod::Tideman, &[&[1, 2, 3], &[1, 2, 3]]);
        assert_eq!(ts.rank_list().len(), 1);
        assert_eq!(ts.rank_counts().values().sum::<u64>(), 2);
        let ts = storage(TallyMethod::Tideman, &[&[1, 2, 3], &[2, 1, 3], &[3, 1, 2], &[1, 2, 3]]);
        assert_eq!(ts.rank_list().len(), 3);
        assert_eq!(ts.rank_counts().values().sum::<u64>(), 4);
    }

    #[test]
    fn tideman_condorcet_winner() {
        let ts = storage(TallyMethod::Tideman, &[&[1, 2, 3], &[2, 3, 1], &[1, 3, 2]]);
        assert_eq!(tideman_result(3, &ts), Some(1));
    }

    #[test]
    fn tideman_three_cycle() {
        // pairs in enumeration order: 1→2, 3→1, 2→3, all margin 1;
        // 2→3 would close the cycle, leaving 3 as the only source
        let ts = storage(TallyMethod::Tideman, &[&[1, 2, 3], &[2, 3, 1], &[3, 1, 2]]);
        let g = locked_graph(3, &ts);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(1, 2), (3, 1)]);
        assert_eq!(tideman_result(3, &ts), Some(3));
    }

    #[test]
    fn tideman_empty() {
        assert_eq!(tideman_result(3, &TallyStorage::new()), None);
        // one ballot locks a full chain; its top choice is the only source
        let ts = storage(TallyMethod::Tideman, &[&[2, 3, 1]]);
        assert_eq!(tideman_result(3, &ts), Some(2));
    }

    #[test]
    fn insertion_sort_is_stable() {
        let p = |w, l, m| Pair { winner: w, loser: l, margin: m };
        let sorted = sort_pairs(vec![p(1, 2, 1), p(1, 3, 3), p(2, 3, 1), p(4, 1, 3)]);
        assert_eq!(sorted, vec![p(1, 3, 3), p(4, 1, 3), p(1, 2, 1), p(2, 3, 1)]);
    }

    #[test]
    fn storage_dump() {
        let ts = storage(TallyMethod::Tideman, &[&[1, 2, 3]]);
        let v = serde_json::to_value(&ts).unwrap();
        assert_eq!(v["rank_counts"][0]["count"], 1);
        assert_eq!(v["rank_counts"][0]["rank"], "5");
    }
}
