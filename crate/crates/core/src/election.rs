//! The timed election state machine.
//!
//! Phases run Setup → Register → Proposal → Commit → Reveal → Completed.
//! Setup and Register are driven by the election authority; from Proposal on
//! each phase ends either at its block deadline or as soon as its actors are
//! done (max proposals reached, everyone committed, every commit revealed).
//!
//! A timed phase started at block `s` with lifetime `l` accepts calls in
//! blocks `s ..= s + l - 1`. At block `s + l` the successor phase is in force
//! and its own clock starts at `s + l`. Expired phases cascade, so the
//! effective phase is a pure function of the stored phase, its start block
//! and the current height.
//!
//! Every call is recorded on the [`Ledger`], accepted or rejected. A rejected
//! call leaves contract storage untouched.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::codec::factorial;
use crate::crypto::{Crypto, Digest, DigestBackend, IdentityCommitment, NullifierHash, VoteHash, VoteSecret};
use crate::ledger::{meter, Address, EventKind, GasTable, Ledger, OpCounts, Outcome};
use crate::membership::{self, ExternalNullifier, MembershipProof};
use crate::merkle::{ForestMode, MerkleError, MerkleForest};
use crate::tally::{TallyMethod, TallyStorage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Setup,
    Register,
    Proposal,
    Commit,
    Reveal,
    Completed,
}

impl Phase {
    pub fn next(self) -> Phase {
        match self {
            Phase::Setup => Phase::Register,
            Phase::Register => Phase::Proposal,
            Phase::Proposal => Phase::Commit,
            Phase::Commit => Phase::Reveal,
            Phase::Reveal | Phase::Completed => Phase::Completed,
        }
    }

    pub fn is_timed(self) -> bool {
        matches!(self, Phase::Proposal | Phase::Commit | Phase::Reveal)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

fn default_digest() -> String {
    "default".to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElectionParams {
    pub tree_height: usize,
    pub max_proposal_count: u32,
    pub proposal_lifetime: u64,
    pub commit_lifetime: u64,
    pub reveal_lifetime: u64,
    #[serde(default)]
    pub tally_method: TallyMethod,
    #[serde(default)]
    pub forest_mode: bool,
    /// Leaves per tree in forest mode.
    #[serde(default)]
    pub tree_size: u64,
    #[serde(default)]
    pub forest_registration: ForestMode,
    #[serde(default = "default_digest")]
    pub digest: String,
}

impl Default for ElectionParams {
    fn default() -> Self {
        ElectionParams {
            tree_height: 10,
            max_proposal_count: 10,
            proposal_lifetime: 30,
            commit_lifetime: 30,
            reveal_lifetime: 30,
            tally_method: TallyMethod::Borda,
            forest_mode: false,
            tree_size: 0,
            forest_registration: ForestMode::PublicLeaves,
            digest: default_digest(),
        }
    }
}

impl ElectionParams {
    pub fn validate(&self) -> Result<DigestBackend, ElectionError> {
        let bad = |m: &str| Err(ElectionError::InvalidParams(m.to_string()));
        if self.tree_height == 0 || self.tree_height > crate::merkle::MAX_HEIGHT {
            return bad("tree_height must be in 1..=32");
        }
        if self.max_proposal_count < 2 {
            return bad("max_proposal_count must be at least 2");
        }
        if self.proposal_lifetime == 0 || self.commit_lifetime == 0 || self.reveal_lifetime == 0 {
            return bad("phase lifetimes must be at least 1 block");
        }
        if self.forest_mode && (self.tree_size == 0 || self.tree_size > 1u64 << self.tree_height) {
            return bad("forest tree_size must be in 1..=2^tree_height");
        }
        DigestBackend::from_name(&self.digest).map_err(|e| ElectionError::InvalidParams(e.to_string()))
    }

    pub fn lifetime(&self, phase: Phase) -> Option<u64> {
        match phase {
            Phase::Proposal => Some(self.proposal_lifetime),
            Phase::Commit => Some(self.commit_lifetime),
            Phase::Reveal => Some(self.reveal_lifetime),
            _ => None,
        }
    }

    /// Maximum number of registered voters.
    pub fn voter_capacity(&self) -> Option<u64> {
        if self.forest_mode {
            None
        } else {
            Some(1u64 << self.tree_height)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ElectionState {
    pub phase: Phase,
    pub phase_start_block: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProposalRecord {
    pub cid: u32,
    pub text: String,
    pub proposer: Address,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CommitmentStore {
    pub by_address: BTreeMap<Address, VoteHash>,
    pub revealed: BTreeSet<Address>,
    pub nullifiers_used: BTreeSet<NullifierHash>,
    pub committed_count: u64,
    pub revealed_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ElectionError {
    #[error("invalid election parameters: {0}")]
    InvalidParams(String),
    #[error("caller is not the election authority")]
    NotAuthority,
    #[error("call not allowed in phase {actual}")]
    WrongPhase { actual: Phase },
    #[error("voter capacity exceeded")]
    CapacityExceeded,
    #[error("transaction needs {gas} gas, cap is {cap}")]
    GasCapExceeded { gas: u64, cap: u64 },
    #[error("registered root does not match the leaf list")]
    RootMismatch,
    #[error("election needs at least one voter and two proposers")]
    NotReady,
    #[error("caller is not an eligible proposer")]
    NotEligibleProposer,
    #[error("caller has already proposed")]
    AlreadyProposed,
    #[error("fewer than two candidates")]
    NotEnoughCandidates,
    #[error("membership proof rejected")]
    InvalidProof,
    #[error("nullifier hash already used")]
    DoubleVote,
    #[error("address already holds a commitment")]
    AddressAlreadyCommitted,
    #[error("unknown tree index {0}")]
    UnknownTreeIndex(u64),
    #[error("no commitment stored for caller")]
    NothingCommitted,
    #[error("vote hash mismatch")]
    HashMismatch,
    #[error("ballot rank outside [0, n_c!)")]
    InvalidBallot,
    #[error("vote already revealed")]
    AlreadyRevealed,
    #[error("winner could not be determined")]
    NoWinner,
}

impl ElectionError {
    /// Stable reason code used in the transaction log.
    pub fn reason(&self) -> &'static str {
        match self {
            ElectionError::InvalidParams(_) => "InvalidParams",
            ElectionError::NotAuthority => "NotAuthority",
            ElectionError::WrongPhase { .. } => "WrongPhase",
            ElectionError::CapacityExceeded => "CapacityExceeded",
            ElectionError::GasCapExceeded { .. } => "GasCapExceeded",
            ElectionError::RootMismatch => "RootMismatch",
            ElectionError::NotReady => "NotReady",
            ElectionError::NotEligibleProposer => "NotEligibleProposer",
            ElectionError::AlreadyProposed => "AlreadyProposed",
            ElectionError::NotEnoughCandidates => "NotEnoughCandidates",
            ElectionError::InvalidProof => "InvalidProof",
            ElectionError::DoubleVote => "DoubleVote",
            ElectionError::AddressAlreadyCommitted => "AddressAlreadyCommitted",
            ElectionError::UnknownTreeIndex(_) => "UnknownTreeIndex",
            ElectionError::NothingCommitted => "NothingCommitted",
            ElectionError::HashMismatch => "HashMismatch",
            ElectionError::InvalidBallot => "InvalidBallot",
            ElectionError::AlreadyRevealed => "AlreadyRevealed",
            ElectionError::NoWinner => "NoWinner",
        }
    }
}

/// A phase actually entered: its start block and the sequence number of the
/// first transaction executed under it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PhaseEntry {
    pub phase: Phase,
    pub start_block: u64,
    pub first_seq: u64,
}

#[derive(Debug, Clone)]
pub struct ElectionMachine {
    crypto: Crypto,
    params: ElectionParams,
    address: Address,
    authority: Address,
    phase: Phase,
    phase_start: u64,
    history: Vec<PhaseEntry>,
    voters: Vec<IdentityCommitment>,
    root: Option<Digest>,
    forest: Option<MerkleForest>,
    registered_roots: BTreeSet<Digest>,
    eligible_proposers: BTreeSet<Address>,
    proposed: BTreeSet<Address>,
    proposals: Vec<ProposalRecord>,
    commitments: CommitmentStore,
    tally: TallyStorage,
    tallied: Vec<BigUint>,
}

/// Snapshot of contract state for debugging and reports.
#[derive(Debug, Clone, Serialize)]
pub struct MachineDump {
    pub address: Address,
    pub authority: Address,
    pub phase: Phase,
    pub phase_start_block: u64,
    pub registered_voters: usize,
    pub root: Option<Digest>,
    pub forest_roots: Option<BTreeMap<u64, Digest>>,
    pub proposals: Vec<ProposalRecord>,
    pub committed_count: u64,
    pub revealed_count: u64,
    pub nullifiers_used: usize,
    pub tally_method: TallyMethod,
    pub tally: TallyStorage,
}

/// Operation traces of the calls whose cost shape matters, excluding the
/// phase read every call pays.
pub mod ops {
    use crate::ledger::OpCounts;

    /// Registration of `n` identity commitments outside forest mode.
    pub fn add_voters(n: u64) -> OpCounts {
        OpCounts {
            storage_write: 2,
            event_emit: 1,
            event_word: n,
            calldata_word: n + 1,
            ..Default::default()
        }
    }

    pub fn commit() -> OpCounts {
        OpCounts {
            storage_read: 3,
            storage_write: 3,
            proof_verify: 1,
            calldata_word: 11,
            ..Default::default()
        }
    }

    /// Reveal bookkeeping before the tally rule's own trace.
    pub fn reveal() -> OpCounts {
        OpCounts {
            storage_read: 1,
            storage_write: 2,
            digest_eval: 1,
            calldata_word: 2,
            ..Default::default()
        }
    }
}

/// Metered cost of a call with trace `ops`, including the phase read.
pub fn call_gas(table: &GasTable, ops: &OpCounts) -> u64 {
    meter(&OpCounts { storage_read: ops.storage_read + 1, ..*ops }, table)
}

fn words(bytes: usize) -> u64 {
    bytes.div_ceil(32) as u64
}

impl ElectionMachine {
    /// Deploy a new election. The contract address doubles as the external
    /// nullifier.
    pub fn setup(ledger: &mut Ledger, authority: Address, params: ElectionParams) -> Result<Self, ElectionError> {
        let params_json = serde_json::to_value(&params).unwrap_or(Value::Null);
        let backend = match params.validate() {
            Ok(b) => b,
            Err(e) => {
                let gas = ledger.gas_table().base_call;
                ledger.record(authority, "deploy", params_json, gas, Outcome::Rejected { reason: e.reason().into() });
                return Err(e);
            }
        };
        let forest = if params.forest_mode {
            Some(
                MerkleForest::new(params.tree_height, params.tree_size, params.forest_registration)
                    .map_err(|e| ElectionError::InvalidParams(e.to_string()))?,
            )
        } else {
            None
        };
        let address = ledger.next_contract_address(&authority);
        let gas = ledger.meter(&OpCounts::writes(8));
        ledger.record(authority, "deploy", params_json, gas, Outcome::Accepted);
        let h = ledger.height();
        let seq = ledger.next_seq();
        Ok(ElectionMachine {
            crypto: Crypto::new(backend),
            params,
            address,
            authority,
            phase: Phase::Register,
            phase_start: h,
            history: vec![
                PhaseEntry { phase: Phase::Setup, start_block: h, first_seq: seq - 1 },
                PhaseEntry { phase: Phase::Register, start_block: h, first_seq: seq },
            ],
            voters: Vec::new(),
            root: None,
            forest,
            registered_roots: BTreeSet::new(),
            eligible_proposers: BTreeSet::new(),
            proposed: BTreeSet::new(),
            proposals: Vec::new(),
            commitments: CommitmentStore::default(),
            tally: TallyStorage::new(),
            tallied: Vec::new(),
        })
    }

    pub fn crypto(&self) -> &Crypto {
        &self.crypto
    }

    pub fn params(&self) -> &ElectionParams {
        &self.params
    }

    pub fn address(&self) -> Address {
        self.address
    }

    pub fn external_nullifier(&self) -> ExternalNullifier {
        ExternalNullifier(self.address)
    }

    pub fn authority(&self) -> Address {
        self.authority
    }

    pub fn voters(&self) -> &[IdentityCommitment] {
        &self.voters
    }

    pub fn root(&self) -> Option<&Digest> {
        self.root.as_ref()
    }

    pub fn forest(&self) -> Option<&MerkleForest> {
        self.forest.as_ref()
    }

    /// Every root accepted during Register, including superseded ones.
    pub fn registered_roots(&self) -> &BTreeSet<Digest> {
        &self.registered_roots
    }

    pub fn proposals(&self) -> &[ProposalRecord] {
        &self.proposals
    }

    pub fn candidate_count(&self) -> usize {
        self.proposals.len()
    }

    pub fn commitments(&self) -> &CommitmentStore {
        &self.commitments
    }

    pub fn tally_storage(&self) -> &TallyStorage {
        &self.tally
    }

    /// Ballot ranks passed to the tally library, in reveal order.
    pub fn tallied(&self) -> &[BigUint] {
        &self.tallied
    }

    pub fn effective_state(&self, height: u64) -> ElectionState {
        let (phase, start, _) = self.cascade(height);
        ElectionState { phase, phase_start_block: start }
    }

    /// Phases entered so far, including any implied by the ledger clock.
    pub fn phase_history(&self, ledger: &Ledger) -> Vec<PhaseEntry> {
        let mut h = self.history.clone();
        h.extend(self.cascade_at(ledger.height(), ledger.next_seq()).2);
        h
    }

    fn cascade(&self, height: u64) -> (Phase, u64, Vec<PhaseEntry>) {
        self.cascade_at(height, 0)
    }

    fn cascade_at(&self, height: u64, seq: u64) -> (Phase, u64, Vec<PhaseEntry>) {
        let mut phase = self.phase;
        let mut start = self.phase_start;
        let mut entered = Vec::new();
        while let Some(l) = self.params.lifetime(phase) {
            let deadline = start + l;
            if height < deadline {
                break;
            }
            phase = phase.next();
            start = deadline;
            entered.push(PhaseEntry { phase, start_block: start, first_seq: seq });
        }
        (phase, start, entered)
    }

    fn sync(&mut self, ledger: &Ledger) {
        let (phase, start, entered) = self.cascade_at(ledger.height(), ledger.next_seq());
        self.phase = phase;
        self.phase_start = start;
        self.history.extend(entered);
    }

    fn enter(&mut self, phase: Phase, ledger: &Ledger) {
        self.phase = phase;
        self.phase_start = ledger.height();
        self.history.push(PhaseEntry { phase, start_block: ledger.height(), first_seq: ledger.next_seq() });
    }

    fn expect_phase(&self, phase: Phase) -> Result<(), ElectionError> {
        if self.phase == phase {
            Ok(())
        } else {
            Err(ElectionError::WrongPhase { actual: self.phase })
        }
    }

    fn expect_authority(&self, caller: &Address) -> Result<(), ElectionError> {
        if *caller == self.authority {
            Ok(())
        } else {
            Err(ElectionError::NotAuthority)
        }
    }

    /// Meter `ops`, enforce the gas cap and log the outcome.
    fn settle<T>(
        &self,
        ledger: &mut Ledger,
        caller: Address,
        function: &str,
        inputs: Value,
        checked: Result<OpCounts, ElectionError>,
        apply: impl FnOnce() -> T,
    ) -> Result<T, ElectionError> {
        let base = ledger.gas_table().base_call;
        let result = checked.and_then(|ops| {
            let gas = call_gas(ledger.gas_table(), &ops);
            if gas > ledger.gas_cap() {
                Err(ElectionError::GasCapExceeded { gas, cap: ledger.gas_cap() })
            } else {
                Ok(gas)
            }
        });
        match result {
            Ok(gas) => {
                ledger.record(caller, function, inputs, gas, Outcome::Accepted);
                Ok(apply())
            }
            Err(e) => {
                let gas = match e {
                    ElectionError::GasCapExceeded { cap, .. } => cap,
                    _ => base,
                };
                ledger.record(caller, function, inputs, gas, Outcome::Rejected { reason: e.reason().into() });
                Err(e)
            }
        }
    }

    pub fn add_voters(
        &mut self,
        ledger: &mut Ledger,
        caller: Address,
        idcs: &[IdentityCommitment],
        root: Digest,
    ) -> Result<(), ElectionError> {
        self.add_voters_inner(ledger, caller, idcs, root, None)
    }

    /// Forest registration in list-hash mode: the caller also supplies the
    /// digest of the leaf list.
    pub fn add_voters_with_list_hash(
        &mut self,
        ledger: &mut Ledger,
        caller: Address,
        idcs: &[IdentityCommitment],
        root: Digest,
        list_hash: Digest,
    ) -> Result<(), ElectionError> {
        self.add_voters_inner(ledger, caller, idcs, root, Some(list_hash))
    }

    fn add_voters_inner(
        &mut self,
        ledger: &mut Ledger,
        caller: Address,
        idcs: &[IdentityCommitment],
        root: Digest,
        list_hash: Option<Digest>,
    ) -> Result<(), ElectionError> {
        self.sync(ledger);
        let leaves: Vec<Digest> = idcs.iter().map(|c| c.0).collect();
        let mut inputs = json!({ "identity_commitments": leaves, "root": root });
        if let Some(lh) = list_hash {
            inputs["list_hash"] = json!(lh);
        }
        let n = idcs.len() as u64;

        let mut staged_forest = None;
        let checked = (|| {
            self.expect_authority(&caller)?;
            self.expect_phase(Phase::Register)?;
            let mut ops = ops::add_voters(n);
            match &self.forest {
                Some(forest) => {
                    let mut f = forest.clone();
                    let reg = f
                        .register(&self.crypto, &leaves, &root, list_hash.as_ref())
                        .map_err(|e| match e {
                            MerkleError::CapacityExceeded { .. } => ElectionError::CapacityExceeded,
                            _ => ElectionError::RootMismatch,
                        })?;
                    ops.proof_verify += 1;
                    ops.event_word += 2;
                    if list_hash.is_some() {
                        ops.digest_eval += 1;
                        ops.calldata_word += 1;
                    }
                    staged_forest = Some((f, reg));
                }
                None => {
                    let cap = self.params.voter_capacity().unwrap_or(u64::MAX);
                    if self.voters.len() as u64 + n > cap {
                        return Err(ElectionError::CapacityExceeded);
                    }
                }
            }
            Ok(ops)
        })();

        let settled = self.settle(ledger, caller, "addVoters", inputs, checked, || ());
        if settled.is_ok() {
            self.voters.extend_from_slice(idcs);
            match staged_forest {
                Some((forest, reg)) => {
                    self.registered_roots.insert(reg.tree_root);
                    self.forest = Some(forest);
                    ledger.emit(EventKind::TreeRegistered, json!(reg));
                }
                None => {
                    self.root = Some(root);
                    self.registered_roots.insert(root);
                    ledger.emit(EventKind::VotersAdded, json!({ "identity_commitments": leaves }));
                }
            }
        }
        settled
    }

    pub fn add_proposers(
        &mut self,
        ledger: &mut Ledger,
        caller: Address,
        proposers: &[Address],
    ) -> Result<(), ElectionError> {
        self.sync(ledger);
        let inputs = json!({ "proposers": proposers });
        let fresh: BTreeSet<Address> = proposers
            .iter()
            .filter(|p| !self.eligible_proposers.contains(p) && !self.proposed.contains(p))
            .copied()
            .collect();
        let checked = (|| {
            self.expect_authority(&caller)?;
            self.expect_phase(Phase::Register)?;
            let n = proposers.len() as u64;
            Ok(OpCounts {
                storage_read: n,
                storage_write: fresh.len() as u64,
                calldata_word: n,
                ..Default::default()
            })
        })();
        self.settle(ledger, caller, "addProposers", inputs, checked, || ())?;
        self.eligible_proposers.extend(fresh);
        Ok(())
    }

    pub fn eligible_proposers(&self) -> &BTreeSet<Address> {
        &self.eligible_proposers
    }

    pub fn start_election(&mut self, ledger: &mut Ledger, caller: Address) -> Result<(), ElectionError> {
        self.sync(ledger);
        let checked = (|| {
            self.expect_authority(&caller)?;
            self.expect_phase(Phase::Register)?;
            if self.voters.is_empty() || self.eligible_proposers.len() < 2 {
                return Err(ElectionError::NotReady);
            }
            Ok(OpCounts { storage_read: 2, storage_write: 2, ..Default::default() })
        })();
        self.settle(ledger, caller, "toProposalState", json!({}), checked, || ())?;
        self.enter(Phase::Proposal, ledger);
        Ok(())
    }

    pub fn propose(&mut self, ledger: &mut Ledger, caller: Address, text: &str) -> Result<u32, ElectionError> {
        self.sync(ledger);
        let inputs = json!({ "text": text });
        let checked = (|| {
            self.expect_phase(Phase::Proposal)?;
            if self.proposed.contains(&caller) {
                return Err(ElectionError::AlreadyProposed);
            }
            if !self.eligible_proposers.contains(&caller) {
                return Err(ElectionError::NotEligibleProposer);
            }
            let w = words(text.len()) + 1;
            Ok(OpCounts {
                storage_read: 2,
                storage_write: 3,
                event_emit: 1,
                event_word: w,
                calldata_word: w,
                ..Default::default()
            })
        })();
        self.settle(ledger, caller, "propose", inputs, checked, || ())?;

        let cid = self.proposals.len() as u32 + 1;
        self.eligible_proposers.remove(&caller);
        self.proposed.insert(caller);
        self.proposals.push(ProposalRecord { cid, text: text.to_string(), proposer: caller });
        ledger.emit(EventKind::Proposed, json!({ "cid": cid, "text": text }));
        if cid == self.params.max_proposal_count {
            self.enter(Phase::Commit, ledger);
        }
        Ok(cid)
    }

    pub fn commit_vote(
        &mut self,
        ledger: &mut Ledger,
        caller: Address,
        vote_hash: VoteHash,
        nullifier_hash: NullifierHash,
        proof: &MembershipProof,
        tree_index: u64,
    ) -> Result<(), ElectionError> {
        self.sync(ledger);
        let inputs = json!({
            "vote_hash": vote_hash,
            "nullifier_hash": nullifier_hash,
            "proof": proof.public(),
            "tree_index": tree_index,
        });
        let checked = (|| {
            self.expect_phase(Phase::Commit)?;
            if self.proposals.len() < 2 {
                return Err(ElectionError::NotEnoughCandidates);
            }
            if self.commitments.by_address.contains_key(&caller) || self.commitments.revealed.contains(&caller) {
                return Err(ElectionError::AddressAlreadyCommitted);
            }
            let root = match &self.forest {
                Some(f) => f.root(tree_index).copied(),
                None if tree_index == 0 => self.root,
                None => None,
            }
            .ok_or(ElectionError::UnknownTreeIndex(tree_index))?;
            let public = proof.public();
            if public.signal != vote_hash || public.nullifier_hash != nullifier_hash {
                return Err(ElectionError::InvalidProof);
            }
            if !membership::verify(&self.crypto, proof, &root, &self.external_nullifier()) {
                return Err(ElectionError::InvalidProof);
            }
            if self.commitments.nullifiers_used.contains(&nullifier_hash) {
                return Err(ElectionError::DoubleVote);
            }
            Ok(ops::commit())
        })();
        self.settle(ledger, caller, "commitVote", inputs, checked, || ())?;

        let c = &mut self.commitments;
        c.by_address.insert(caller, vote_hash);
        c.nullifiers_used.insert(nullifier_hash);
        c.committed_count += 1;
        if c.committed_count == self.voters.len() as u64 {
            self.enter(Phase::Reveal, ledger);
        }
        Ok(())
    }

    pub fn reveal_vote(
        &mut self,
        ledger: &mut Ledger,
        caller: Address,
        vid: &BigUint,
        vsk: &VoteSecret,
    ) -> Result<(), ElectionError> {
        self.sync(ledger);
        let inputs = json!({ "vid": vid.to_string(), "vote_secret": vsk });
        let n_c = self.proposals.len();
        let mut staged = None;
        let checked = (|| {
            self.expect_phase(Phase::Reveal)?;
            if self.commitments.revealed.contains(&caller) {
                return Err(ElectionError::AlreadyRevealed);
            }
            let stored = self
                .commitments
                .by_address
                .get(&caller)
                .ok_or(ElectionError::NothingCommitted)?;
            if self.crypto.vote_hash(vid, vsk) != *stored {
                return Err(ElectionError::HashMismatch);
            }
            if *vid >= factorial(n_c) {
                return Err(ElectionError::InvalidBallot);
            }
            let mut ts = self.tally.clone();
            let tally_ops = self
                .params
                .tally_method
                .rule()
                .tally(vid, n_c, &mut ts)
                .map_err(|_| ElectionError::InvalidBallot)?;
            staged = Some(ts);
            let mut ops = ops::reveal();
            ops += tally_ops;
            Ok(ops)
        })();
        self.settle(ledger, caller, "revealVote", inputs, checked, || ())?;

        if let Some(ts) = staged {
            self.tally = ts;
        }
        self.tallied.push(vid.clone());
        let c = &mut self.commitments;
        c.by_address.remove(&caller);
        c.revealed.insert(caller);
        c.revealed_count += 1;
        if c.revealed_count == c.committed_count {
            self.enter(Phase::Completed, ledger);
        }
        Ok(())
    }

    /// Read-only: no transaction is recorded.
    pub fn election_result(&self, height: u64) -> Result<u32, ElectionError> {
        let state = self.effective_state(height);
        if state.phase != Phase::Completed {
            return Err(ElectionError::WrongPhase { actual: state.phase });
        }
        self.params
            .tally_method
            .rule()
            .calculate_result(self.proposals.len(), &self.tally)
            .ok_or(ElectionError::NoWinner)
    }

    pub fn dump(&self, height: u64) -> MachineDump {
        let state = self.effective_state(height);
        MachineDump {
            address: self.address,
            authority: self.authority,
            phase: state.phase,
            phase_start_block: state.phase_start_block,
            registered_voters: self.voters.len(),
            root: self.root,
            forest_roots: self.forest.as_ref().map(|f| f.roots().clone()),
            proposals: self.proposals.clone(),
            committed_count: self.commitments.committed_count,
            revealed_count: self.commitments.revealed_count,
            nullifiers_used: self.commitments.nullifiers_used.len(),
            tally_method: self.params.tally_method,
            tally: self.tally.clone(),
        }
    }
}
