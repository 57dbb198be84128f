//! Fixtures shared by the benchmarks.

use std::collections::BTreeMap;

use electanon_core::codec::{factorial, unrank};
use electanon_core::crypto::{Crypto, Digest};
use electanon_core::election::ElectionParams;
use electanon_core::scenario::{BallotSpec, ProposerSpec, Scenario, VoterSpec};
use electanon_core::tally::TallyMethod;
use num_bigint::BigUint;

/// Deterministic pseudo-random leaves.
pub fn leaves(n: usize) -> Vec<Digest> {
    let c = Crypto::default();
    (0..n as u64).map(|i| c.hash(b"bench-leaf", &[&i.to_be_bytes()])).collect()
}

/// `count` ranks spread evenly over `[0, n!)`.
pub fn spread_ranks(n: usize, count: usize) -> Vec<BigUint> {
    let total = factorial(n);
    let step = &total / BigUint::from(count.max(1) as u64);
    (0..count as u64).map(|i| (&step * i) % &total).collect()
}

/// Preference lists matching [`spread_ranks`].
pub fn spread_ballots(n: usize, count: usize) -> Vec<Vec<u32>> {
    spread_ranks(n, count)
        .iter()
        .map(|r| unrank(r, n).expect("rank below n!").into_vec())
        .collect()
}

/// An all-honest election.
pub fn honest(voters: usize, candidates: usize, tally: TallyMethod) -> Scenario {
    let height = (usize::BITS - voters.max(2).next_power_of_two().leading_zeros() - 1) as usize;
    Scenario {
        params: ElectionParams {
            tree_height: height.max(1),
            max_proposal_count: candidates as u32,
            tally_method: tally,
            ..Default::default()
        },
        voters: VoterSpec { count: voters, behaviors: BTreeMap::new() },
        proposers: (0..candidates)
            .map(|i| ProposerSpec { text: format!("proposal {i}"), no_show: false })
            .collect(),
        ballots: BallotSpec::Random,
        seed: 1,
        gas_table: None,
        gas_cap: None,
        registration_batch: None,
    }
}
