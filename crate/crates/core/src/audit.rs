//! Integrity checks over the public transaction log.
//!
//! Everything here reads the ledger only, so any observer can run it. The
//! election machine is consulted for its phase boundaries and for the values
//! it claims, which the checks then compare against the log.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use serde::Serialize;
use serde_json::Value;

use crate::codec::factorial;
use crate::election::{ElectionMachine, ElectionParams, Phase, PhaseEntry};
use crate::ledger::{Address, EventKind, Ledger, Transaction};
use crate::merkle::TreeRegistration;
use crate::tally::{TallyMethod, TallyStorage};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    /// Winner recomputed from the log alone.
    pub recomputed_winner: Option<u32>,
    pub recomputation_agrees: bool,
    pub plaintext_vids_before_reveal: usize,
    pub identity_commitments_from_commit: usize,
    pub tallied_matches_revealed: bool,
    pub nullifiers_distinct: bool,
    pub commits_against_registered_roots: bool,
    pub fresh_commit_addresses: bool,
    pub authority_writes_after_start: usize,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.recomputation_agrees
            && self.plaintext_vids_before_reveal == 0
            && self.identity_commitments_from_commit == 0
            && self.tallied_matches_revealed
            && self.nullifiers_distinct
            && self.commits_against_registered_roots
            && self.fresh_commit_addresses
            && self.authority_writes_after_start == 0
    }
}

fn first_seq(history: &[PhaseEntry], phase: Phase) -> u64 {
    history
        .iter()
        .find(|e| e.phase == phase)
        .map(|e| e.first_seq)
        .unwrap_or(u64::MAX)
}

fn accepted<'a>(ledger: &'a Ledger, function: &'a str) -> impl Iterator<Item = &'a Transaction> + 'a {
    ledger
        .transactions()
        .iter()
        .filter(move |t| t.function == function && t.outcome.is_accepted())
}

fn str_field<'a>(v: &'a Value, key: &str) -> Option<&'a str> {
    v.get(key).and_then(Value::as_str)
}

/// Ballot ranks of accepted reveals, in log order.
pub fn revealed_vids(ledger: &Ledger) -> Vec<BigUint> {
    accepted(ledger, "revealVote")
        .filter_map(|t| str_field(&t.public_inputs, "vid")?.parse().ok())
        .collect()
}

/// Identity commitments published during registration, as hex.
pub fn registered_commitments(ledger: &Ledger) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for e in ledger.events() {
        let list = match e.kind {
            EventKind::VotersAdded => e.payload.get("identity_commitments"),
            EventKind::TreeRegistered => e.payload.get("leaves"),
            EventKind::Proposed => None,
        };
        if let Some(Value::Array(items)) = list {
            out.extend(items.iter().filter_map(Value::as_str).map(str::to_string));
        }
    }
    out
}

/// Recompute the winner from deployment parameters, proposal events and
/// accepted reveals.
pub fn recompute_winner(ledger: &Ledger) -> Option<u32> {
    let params: ElectionParams = ledger
        .transactions()
        .iter()
        .find(|t| t.function == "deploy" && t.outcome.is_accepted())
        .and_then(|t| serde_json::from_value(t.public_inputs.clone()).ok())?;
    let n_c = ledger.events_of(EventKind::Proposed).count();
    self_tally(params.tally_method, n_c, &revealed_vids(ledger))
}

pub fn self_tally(method: TallyMethod, n_c: usize, vids: &[BigUint]) -> Option<u32> {
    let rule = method.rule();
    let mut ts = TallyStorage::new();
    for v in vids {
        rule.tally(v, n_c, &mut ts).ok()?;
    }
    rule.calculate_result(n_c, &ts)
}

fn walk<'a>(v: &'a Value, key: Option<&str>, f: &mut dyn FnMut(Option<&str>, &'a Value)) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                f(Some(k), x);
                walk(x, Some(k), f);
            }
        }
        Value::Array(xs) => {
            for x in xs {
                f(key, x);
                walk(x, key, f);
            }
        }
        _ => {}
    }
}

/// Records (transaction inputs and event payloads) whose sequence number
/// satisfies `keep`.
fn records(ledger: &Ledger, keep: impl Fn(u64) -> bool) -> Vec<&Value> {
    let txs = ledger
        .transactions()
        .iter()
        .filter(|t| keep(t.seq))
        .map(|t| &t.public_inputs);
    let evs = ledger.events().iter().filter(|e| keep(e.tx_seq)).map(|e| &e.payload);
    txs.chain(evs).collect()
}

/// Count plaintext ballot ranks in records before the Reveal phase: any
/// `vid` field, or any string equal to a rank revealed later.
pub fn count_plaintext_vids(ledger: &Ledger, reveal_seq: u64) -> usize {
    let known: BTreeSet<String> = ledger
        .transactions()
        .iter()
        .filter(|t| t.function == "revealVote")
        .filter_map(|t| str_field(&t.public_inputs, "vid").map(str::to_string))
        .collect();
    let mut hits = 0;
    for rec in records(ledger, |s| s < reveal_seq) {
        walk(rec, None, &mut |k, v| {
            if k == Some("vid") {
                hits += 1;
            } else if k != Some("text") {
                if let Some(s) = v.as_str() {
                    hits += known.contains(s) as usize;
                }
            }
        });
    }
    hits
}

pub fn count_identity_commitments(ledger: &Ledger, from_seq: u64) -> usize {
    let idcs = registered_commitments(ledger);
    let mut hits = 0;
    for rec in records(ledger, |s| s >= from_seq) {
        walk(rec, None, &mut |_, v| {
            if let Some(s) = v.as_str() {
                hits += idcs.contains(s) as usize;
            }
        });
    }
    hits
}

fn registered_roots(ledger: &Ledger) -> BTreeSet<String> {
    let mut roots: BTreeSet<String> = accepted(ledger, "addVoters")
        .filter_map(|t| str_field(&t.public_inputs, "root").map(str::to_string))
        .collect();
    for e in ledger.events_of(EventKind::TreeRegistered) {
        if let Ok(reg) = serde_json::from_value::<TreeRegistration>(e.payload.clone()) {
            roots.insert(reg.tree_root.to_hex());
        }
    }
    roots
}

fn multiset(vids: impl IntoIterator<Item = BigUint>) -> BTreeMap<BigUint, usize> {
    let mut m = BTreeMap::new();
    for v in vids {
        *m.entry(v).or_insert(0) += 1;
    }
    m
}

pub fn audit(ledger: &Ledger, machine: &ElectionMachine) -> AuditReport {
    let history = machine.phase_history(ledger);
    let proposal_seq = first_seq(&history, Phase::Proposal);
    let commit_seq = first_seq(&history, Phase::Commit);
    let reveal_seq = first_seq(&history, Phase::Reveal);

    let recomputed_winner = recompute_winner(ledger);
    let claimed = machine.election_result(ledger.height()).ok();

    let n_c = ledger.events_of(EventKind::Proposed).count();
    let bound = factorial(n_c);
    let revealed = multiset(revealed_vids(ledger).into_iter().filter(|v| *v < bound));
    let tallied = multiset(machine.tallied().iter().cloned());

    let commits: Vec<&Transaction> = accepted(ledger, "commitVote").collect();
    let nullifiers: BTreeSet<&str> = commits
        .iter()
        .filter_map(|t| str_field(&t.public_inputs, "nullifier_hash"))
        .collect();

    let roots = registered_roots(ledger);
    let commits_against_registered_roots = commits.iter().all(|t| {
        t.public_inputs
            .pointer("/proof/computed_root")
            .and_then(Value::as_str)
            .is_some_and(|r| roots.contains(r))
    });

    let register_senders: BTreeSet<Address> = ledger
        .transactions()
        .iter()
        .filter(|t| t.seq < proposal_seq)
        .map(|t| t.sender)
        .collect();
    let commit_senders: BTreeSet<Address> = commits.iter().map(|t| t.sender).collect();
    let fresh_commit_addresses =
        commit_senders.len() == commits.len() && commit_senders.is_disjoint(&register_senders);

    let authority = machine.authority();
    let authority_writes_after_start = ledger
        .transactions()
        .iter()
        .filter(|t| t.seq >= proposal_seq && t.sender == authority && t.outcome.is_accepted())
        .count();

    AuditReport {
        recomputed_winner,
        recomputation_agrees: recomputed_winner == claimed,
        plaintext_vids_before_reveal: count_plaintext_vids(ledger, reveal_seq),
        identity_commitments_from_commit: count_identity_commitments(ledger, commit_seq),
        tallied_matches_revealed: revealed == tallied,
        nullifiers_distinct: nullifiers.len() == commits.len(),
        commits_against_registered_roots,
        fresh_commit_addresses,
        authority_writes_after_start,
    }
}
