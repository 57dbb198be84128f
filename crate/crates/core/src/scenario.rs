//! Scripted end-to-end elections.
//!
//! A [`Scenario`] describes the parameters, the voter population and its
//! behaviors, the proposals and the ballots. [`run`] drives the protocol from
//! deployment to Completed on a fresh ledger and returns a [`RunReport`]
//! together with the ledger and machine for further inspection.
//!
//! All randomness (identity seeds, vote secrets, commit addresses, random
//! ballots) comes from one ChaCha stream seeded by the scenario seed, so a
//! run is a pure function of the scenario.

use std::collections::BTreeMap;

use num_bigint::{BigUint, RandBigInt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::{audit, AuditReport};
use crate::codec::{factorial, rank_cids, PreferenceList};
use crate::crypto::{Crypto, Digest, Identity, IdentityCommitment, VoteSecret};
use crate::election::{ElectionError, ElectionMachine, ElectionParams, Phase, ProposalRecord};
use crate::ledger::{Address, EventKind, GasOverrides, GasReport, GasTable, Ledger, DEFAULT_GAS_CAP};
use crate::membership;
use crate::merkle::{build_tree, hash_leaf_list, ForestMode, MerkleProof, MerkleTree, TreeRegistration};
use crate::tally::{TallyMethod, TallyStorage};

/// Registration batch size when the scenario does not set one.
pub const DEFAULT_BATCH: usize = 1000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    #[default]
    Honest,
    AbandonAfterCommit,
    DoubleVote,
    WrongReveal,
    /// Commits only once the Commit deadline has passed.
    Late,
    /// Never registered; commits with a proof against its own tree.
    Ineligible,
    /// Commits and reveals the out-of-range rank `n_c!`.
    InvalidBallot,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoterSpec {
    pub count: usize,
    #[serde(default)]
    pub behaviors: BTreeMap<usize, Behavior>,
}

impl VoterSpec {
    pub fn behavior(&self, i: usize) -> Behavior {
        self.behaviors.get(&i).copied().unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "ProposerEntry")]
pub struct ProposerSpec {
    pub text: String,
    pub no_show: bool,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ProposerEntry {
    Text(String),
    Full {
        text: String,
        #[serde(default)]
        no_show: bool,
    },
}

impl From<ProposerEntry> for ProposerSpec {
    fn from(e: ProposerEntry) -> Self {
        match e {
            ProposerEntry::Text(text) => ProposerSpec { text, no_show: false },
            ProposerEntry::Full { text, no_show } => ProposerSpec { text, no_show },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallotSpec {
    #[default]
    Random,
    /// One preference list per voter, as candidate ids.
    Explicit(Vec<Vec<u32>>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub params: ElectionParams,
    pub voters: VoterSpec,
    pub proposers: Vec<ProposerSpec>,
    #[serde(default)]
    pub ballots: BallotSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub gas_table: Option<GasOverrides>,
    #[serde(default)]
    pub gas_cap: Option<u64>,
    /// Identity commitments per `addVoters` call outside forest mode.
    #[serde(default)]
    pub registration_batch: Option<usize>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("election setup failed: {0}")]
    Election(#[from] ElectionError),
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    fn expected_candidates(&self) -> usize {
        let shows = self.proposers.iter().filter(|p| !p.no_show).count();
        shows.min(self.params.max_proposal_count as usize)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        self.params.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        if self.voters.count == 0 {
            return invalid("at least one voter is required".into());
        }
        if let Some((&i, _)) = self.voters.behaviors.range(self.voters.count..).next() {
            return invalid(format!("behavior given for undefined voter {i}"));
        }
        let registered = (0..self.voters.count)
            .filter(|&i| self.voters.behavior(i) != Behavior::Ineligible)
            .count();
        if registered == 0 {
            return invalid("no eligible voters".into());
        }
        if let Some(cap) = self.params.voter_capacity() {
            if registered as u64 > cap {
                return invalid(format!("{registered} voters exceed tree capacity {cap}"));
            }
        }
        if self.proposers.len() < 2 {
            return invalid("at least two proposers are required".into());
        }
        if self.registration_batch == Some(0) {
            return invalid("registration_batch must be positive".into());
        }
        if let BallotSpec::Explicit(lists) = &self.ballots {
            if lists.len() != self.voters.count {
                return invalid(format!("{} ballots for {} voters", lists.len(), self.voters.count));
            }
            let n_c = self.expected_candidates();
            for (i, l) in lists.iter().enumerate() {
                if l.len() != n_c || PreferenceList::new(l.clone()).is_err() {
                    return invalid(format!("ballot {i} is not a permutation of 1..={n_c}"));
                }
            }
        }
        Ok(())
    }
}

/// Command-line overrides applied on top of the scenario file.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub tally: Option<TallyMethod>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PhaseSpan {
    pub phase: Phase,
    pub start_block: u64,
    /// First block of the next phase; absent for Completed.
    pub end_block: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TxCounts {
    pub total: u64,
    pub accepted: BTreeMap<String, u64>,
    pub rejected: BTreeMap<String, u64>,
}

impl TxCounts {
    pub fn accepted_total(&self) -> u64 {
        self.accepted.values().sum()
    }

    pub fn rejected_total(&self) -> u64 {
        self.rejected.values().sum()
    }

    pub fn rejected_for(&self, reason: &str) -> u64 {
        self.rejected.get(reason).copied().unwrap_or(0)
    }

    pub fn accepted_for(&self, function: &str) -> u64 {
        self.accepted.get(function).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunReport {
    pub seed: u64,
    pub tally_method: TallyMethod,
    pub election: Address,
    /// `None` when no winner could be determined.
    pub winner: Option<u32>,
    pub result: String,
    pub candidates: Vec<ProposalRecord>,
    pub phases: Vec<PhaseSpan>,
    pub final_height: u64,
    pub registered_voters: usize,
    pub committed: u64,
    pub revealed: u64,
    pub transactions: TxCounts,
    pub gas_report: GasReport,
    pub tally: TallyStorage,
    pub audit: AuditReport,
}

impl RunReport {
    pub fn span(&self, phase: Phase) -> Option<&PhaseSpan> {
        self.phases.iter().find(|s| s.phase == phase)
    }

    /// Blocks from the start of Proposal to the start of Completed.
    pub fn blocks_to_completion(&self) -> Option<u64> {
        let start = self.span(Phase::Proposal)?.start_block;
        let end = self.span(Phase::Completed)?.start_block;
        Some(end - start)
    }
}

/// Everything a run leaves behind.
#[derive(Debug)]
pub struct Run {
    pub report: RunReport,
    pub ledger: Ledger,
    pub machine: ElectionMachine,
}

struct Voter {
    behavior: Behavior,
    identity: Identity,
    vsk: VoteSecret,
    commit_address: Option<Address>,
    vid: BigUint,
}

fn random_address(rng: &mut ChaCha8Rng) -> Address {
    Address(rng.gen())
}

/// Voter-side view of the registered trees, rebuilt from ledger events.
struct VoterTrees {
    trees: Vec<(u64, MerkleTree)>,
}

impl VoterTrees {
    fn from_events(crypto: &Crypto, ledger: &Ledger, height: usize) -> Self {
        let mut flat = Vec::new();
        let mut trees = Vec::new();
        for e in ledger.events() {
            match e.kind {
                EventKind::VotersAdded => {
                    let leaves: Vec<Digest> = e
                        .payload
                        .get("identity_commitments")
                        .and_then(|v| serde_json::from_value(v.clone()).ok())
                        .unwrap_or_default();
                    flat.extend(leaves);
                }
                EventKind::TreeRegistered => {
                    if let Ok(reg) = serde_json::from_value::<TreeRegistration>(e.payload.clone()) {
                        let tree = build_tree(crypto, &reg.leaves, height).expect("registered tree rebuilds");
                        trees.push((reg.tree_index, tree));
                    }
                }
                EventKind::Proposed => {}
            }
        }
        if !flat.is_empty() {
            trees.push((0, build_tree(crypto, &flat, height).expect("registered leaves fit")));
        }
        VoterTrees { trees }
    }

    fn locate(&self, idc: &IdentityCommitment) -> Option<(u64, MerkleProof)> {
        self.trees.iter().find_map(|(index, tree)| {
            let pos = tree.position(&idc.0)?;
            Some((*index, tree.proof(pos).ok()?))
        })
    }
}

pub fn run_json(text: &str, opts: RunOptions) -> Result<Run, ScenarioError> {
    run(&Scenario::from_json(text)?, opts)
}

pub fn run(scenario: &Scenario, opts: RunOptions) -> Result<Run, ScenarioError> {
    scenario.validate()?;
    let mut params = scenario.params.clone();
    if let Some(t) = opts.tally {
        params.tally_method = t;
    }
    let seed = opts.seed.unwrap_or(scenario.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let table = match &scenario.gas_table {
        Some(o) => GasTable::default().with_overrides(o),
        None => GasTable::default(),
    };
    let mut ledger = Ledger::new(table, scenario.gas_cap.unwrap_or(DEFAULT_GAS_CAP));
    let ea = Crypto::default().address(b"election-authority");
    let mut m = ElectionMachine::setup(&mut ledger, ea, params.clone())?;
    let crypto = *m.crypto();

    let mut voters: Vec<Voter> = Vec::with_capacity(scenario.voters.count);
    for i in 0..scenario.voters.count {
        let seed_bytes: [u8; 32] = rng.gen();
        voters.push(Voter {
            behavior: scenario.voters.behavior(i),
            identity: crypto.gen_identity(&seed_bytes).expect("non-empty seed"),
            vsk: VoteSecret(rng.gen()),
            commit_address: None,
            vid: BigUint::default(),
        });
    }

    // Register
    let idcs: Vec<IdentityCommitment> = voters
        .iter()
        .filter(|v| v.behavior != Behavior::Ineligible)
        .map(|v| crypto.commit_identity(&v.identity))
        .collect();
    register(&mut ledger, &mut m, ea, &idcs, scenario)?;
    let proposer_addrs: Vec<Address> = (0..scenario.proposers.len())
        .map(|i| crypto.address(format!("proposer/{i}").as_bytes()))
        .collect();
    m.add_proposers(&mut ledger, ea, &proposer_addrs)?;
    m.start_election(&mut ledger, ea)?;

    // Proposal
    for (p, addr) in scenario.proposers.iter().zip(&proposer_addrs) {
        if !p.no_show {
            let _ = m.propose(&mut ledger, *addr, &p.text);
        }
    }
    expire(&mut ledger, &m, Phase::Proposal);

    // Commit
    let n_c = m.candidate_count();
    let bound = factorial(n_c);
    for (i, v) in voters.iter_mut().enumerate() {
        v.vid = match (&scenario.ballots, v.behavior) {
            (_, Behavior::InvalidBallot) => bound.clone(),
            (BallotSpec::Explicit(lists), _) => rank_cids(&lists[i]).expect("validated ballot").into_value(),
            (BallotSpec::Random, _) => rng.gen_biguint_below(&bound),
        };
    }
    let trees = VoterTrees::from_events(&crypto, &ledger, params.tree_height);
    let ext = m.external_nullifier();
    let attempt_commit = |ledger: &mut Ledger, m: &mut ElectionMachine, v: &mut Voter, rng: &mut ChaCha8Rng| {
        let idc = crypto.commit_identity(&v.identity);
        let (tree_index, path) = match trees.locate(&idc) {
            Some(found) => found,
            None => {
                let own = build_tree(&crypto, &[idc.0], params.tree_height).expect("one leaf fits");
                (0, own.proof(0).expect("leaf 0 exists"))
            }
        };
        let send = |ledger: &mut Ledger, m: &mut ElectionMachine, vid: &BigUint, rng: &mut ChaCha8Rng| {
            let vh = crypto.vote_hash(vid, &v.vsk);
            let proof = membership::prove(&crypto, &v.identity, &path, ext, vh).expect("well-formed path");
            let nh = proof.public().nullifier_hash;
            let addr = random_address(rng);
            m.commit_vote(ledger, addr, vh, nh, &proof, tree_index).ok().map(|_| addr)
        };
        v.commit_address = send(ledger, m, &v.vid.clone(), rng);
        if v.behavior == Behavior::DoubleVote {
            let other = if bound > BigUint::from(1u32) {
                (&v.vid + 1u32) % &bound
            } else {
                v.vid.clone()
            };
            let _ = send(ledger, m, &other, rng);
        }
    };
    // Replays go first: once every registered voter has committed the phase
    // closes and a replay would only meet WrongPhase.
    let (replays, rest): (Vec<_>, Vec<_>) = voters
        .iter_mut()
        .filter(|v| v.behavior != Behavior::Late)
        .partition(|v| v.behavior == Behavior::DoubleVote);
    for v in replays.into_iter().chain(rest) {
        attempt_commit(&mut ledger, &mut m, v, &mut rng);
    }
    expire(&mut ledger, &m, Phase::Commit);
    for v in voters.iter_mut().filter(|v| v.behavior == Behavior::Late) {
        attempt_commit(&mut ledger, &mut m, v, &mut rng);
    }

    // Reveal
    for v in &voters {
        let Some(addr) = v.commit_address else { continue };
        match v.behavior {
            Behavior::AbandonAfterCommit => {}
            Behavior::WrongReveal => {
                let mut wrong = v.vsk;
                wrong.0[0] ^= 0xff;
                let _ = m.reveal_vote(&mut ledger, addr, &v.vid, &wrong);
            }
            _ => {
                let _ = m.reveal_vote(&mut ledger, addr, &v.vid, &v.vsk);
            }
        }
    }
    expire(&mut ledger, &m, Phase::Reveal);

    let report = build_report(&ledger, &m, seed, idcs.len());
    Ok(Run { report, ledger, machine: m })
}

fn register(
    ledger: &mut Ledger,
    m: &mut ElectionMachine,
    ea: Address,
    idcs: &[IdentityCommitment],
    scenario: &Scenario,
) -> Result<(), ScenarioError> {
    let crypto = *m.crypto();
    let params = m.params().clone();
    let leaves: Vec<Digest> = idcs.iter().map(|c| c.0).collect();
    if params.forest_mode {
        for (chunk_leaves, chunk) in leaves.chunks(params.tree_size as usize).zip(idcs.chunks(params.tree_size as usize)) {
            let root = build_tree(&crypto, chunk_leaves, params.tree_height)
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?
                .root();
            match params.forest_registration {
                ForestMode::PublicLeaves => m.add_voters(ledger, ea, chunk, root)?,
                ForestMode::ListHash => {
                    let lh = hash_leaf_list(&crypto, chunk_leaves);
                    m.add_voters_with_list_hash(ledger, ea, chunk, root, lh)?
                }
            }
        }
    } else {
        let batch = scenario.registration_batch.unwrap_or(DEFAULT_BATCH);
        let mut done = 0;
        for chunk in idcs.chunks(batch) {
            done += chunk.len();
            let root = build_tree(&crypto, &leaves[..done], params.tree_height)
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?
                .root();
            m.add_voters(ledger, ea, chunk, root)?;
        }
    }
    Ok(())
}

/// If `phase` is still in force, advance the clock to its deadline.
fn expire(ledger: &mut Ledger, m: &ElectionMachine, phase: Phase) {
    let state = m.effective_state(ledger.height());
    if state.phase == phase {
        let lifetime = m.params().lifetime(phase).expect("timed phase");
        ledger.advance_to(state.phase_start_block + lifetime);
    }
}

fn build_report(ledger: &Ledger, m: &ElectionMachine, seed: u64, registered: usize) -> RunReport {
    let history = m.phase_history(ledger);
    let phases = history
        .iter()
        .enumerate()
        .map(|(i, e)| PhaseSpan {
            phase: e.phase,
            start_block: e.start_block,
            end_block: history.get(i + 1).map(|n| n.start_block),
        })
        .collect();

    let mut counts = TxCounts::default();
    for tx in ledger.transactions() {
        counts.total += 1;
        match &tx.outcome {
            crate::ledger::Outcome::Accepted => *counts.accepted.entry(tx.function.clone()).or_insert(0) += 1,
            crate::ledger::Outcome::Rejected { reason } => *counts.rejected.entry(reason.clone()).or_insert(0) += 1,
        }
    }

    let winner = m.election_result(ledger.height());
    RunReport {
        seed,
        tally_method: m.params().tally_method,
        election: m.address(),
        winner: winner.as_ref().ok().copied(),
        result: match &winner {
            Ok(_) => "winner".to_string(),
            Err(e) => e.reason().to_string(),
        },
        candidates: m.proposals().to_vec(),
        phases,
        final_height: ledger.height(),
        registered_voters: registered,
        committed: m.commitments().committed_count,
        revealed: m.commitments().revealed_count,
        transactions: counts,
        gas_report: ledger.gas_report(),
        tally: m.tally_storage().clone(),
        audit: audit(ledger, m),
    }
}
