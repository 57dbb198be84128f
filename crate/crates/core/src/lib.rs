//! Simulator for a ranked-choice, anonymous, commit-reveal voting protocol
//! running on a metered ledger.

pub mod audit;
pub mod codec;
pub mod crypto;
pub mod election;
pub mod ledger;
pub mod membership;
pub mod merkle;
pub mod scenario;
pub mod tally;

pub use codec::{rank, rank_cids, unrank, BallotRank, CodecError, PreferenceList};
pub use crypto::{
    Crypto, CryptoError, Digest, DigestBackend, Identity, IdentityCommitment, NullifierHash, VoteHash,
    VoteSecret,
};
pub use election::{ElectionError, ElectionMachine, ElectionParams, ElectionState, Phase};
pub use ledger::{Address, GasTable, Ledger, OpCounts, Outcome};
pub use membership::{ExternalNullifier, MembershipProof, PublicSignals};
pub use merkle::{ForestMode, MerkleForest, MerkleProof, MerkleTree};
pub use tally::{TallyMethod, TallyStorage};
pub use scenario::{run, run_json, RunOptions, RunReport, Scenario, ScenarioError};
