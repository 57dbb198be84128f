//! Anonymous membership proofs.
//!
//! A [`MembershipProof`] binds an eligible identity, a single-use nullifier
//! hash and a signed signal. The verifier re-executes the relation on the
//! witness: identity commitment folded up the Merkle path equals the root,
//! the nullifier hash is derived from the identity nullifier, election and
//! path, and the signal carries the identity's signature.
//!
//! The witness travels with the proof but has no serialized form; only
//! [`PublicSignals`] ever leaves the process.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::crypto::{sign, verify_sig, Crypto, CryptoError, Digest, Identity, NullifierHash, Signature, VoteHash};
use crate::ledger::Address;
use crate::merkle::MerkleProof;

/// The election instance a proof is bound to: the contract address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExternalNullifier(pub Address);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicSignals {
    pub computed_root: Digest,
    pub nullifier_hash: NullifierHash,
    pub external_nullifier: ExternalNullifier,
    pub signal: VoteHash,
}

#[derive(Clone)]
pub struct Witness {
    identity: Identity,
    merkle_proof: MerkleProof,
    signature: Signature,
}

impl fmt::Debug for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Witness(sealed)")
    }
}

#[derive(Debug, Clone)]
pub struct MembershipProof {
    public: PublicSignals,
    witness: Witness,
}

impl MembershipProof {
    pub fn public(&self) -> &PublicSignals {
        &self.public
    }
}

pub fn prove(
    crypto: &Crypto,
    identity: &Identity,
    merkle_proof: &MerkleProof,
    external_nullifier: ExternalNullifier,
    signal: VoteHash,
) -> Result<MembershipProof, CryptoError> {
    if !merkle_proof.is_well_formed() {
        return Err(CryptoError::PathLengthMismatch {
            expected: merkle_proof.index_bits.len(),
            got: merkle_proof.siblings.len(),
        });
    }
    let leaf = crypto.commit_identity(identity).0;
    let computed_root = merkle_proof
        .fold(crypto, &leaf)
        .expect("well-formed proof folds");
    let nullifier_hash = crypto.nullifier_hash(
        identity.nullifier(),
        &external_nullifier.0,
        &merkle_proof.index_bits,
        merkle_proof.height(),
    )?;
    let signature = sign(identity, signal.0.as_bytes());
    Ok(MembershipProof {
        public: PublicSignals {
            computed_root,
            nullifier_hash,
            external_nullifier,
            signal,
        },
        witness: Witness {
            identity: identity.clone(),
            merkle_proof: merkle_proof.clone(),
            signature,
        },
    })
}

pub fn verify(
    crypto: &Crypto,
    proof: &MembershipProof,
    registered_root: &Digest,
    external_nullifier: &ExternalNullifier,
) -> bool {
    let p = &proof.public;
    let w = &proof.witness;

    if p.external_nullifier != *external_nullifier {
        return false;
    }
    // eligibility
    let leaf = crypto.commit_identity(&w.identity).0;
    match w.merkle_proof.fold(crypto, &leaf) {
        Some(root) if root == p.computed_root && root == *registered_root => {}
        _ => return false,
    }
    // single use
    match crypto.nullifier_hash(
        w.identity.nullifier(),
        &external_nullifier.0,
        &w.merkle_proof.index_bits,
        w.merkle_proof.height(),
    ) {
        Ok(nh) if nh == p.nullifier_hash => {}
        _ => return false,
    }
    // signal authorship
    verify_sig(w.identity.public_key(), p.signal.0.as_bytes(), &w.signature)
}
