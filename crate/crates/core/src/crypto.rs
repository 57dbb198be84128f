//! Digests, identities and signatures.
//!
//! Every hash in the protocol goes through one [`Crypto`] context. Each role
//! (identity commitment, vote hash, nullifier hash, Merkle nodes, ...) has its
//! own domain tag, so the same raw bytes hashed under two roles never collide.

use std::fmt;

use blake2::Blake2s256;
use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use num_bigint::BigUint;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::ledger::Address;

pub const DIGEST_LEN: usize = 32;

pub(crate) mod tag {
    pub const IDENTITY_SIGNING: &[u8] = b"electanon/identity/signing-key";
    pub const IDENTITY_NULLIFIER: &[u8] = b"electanon/identity/nullifier";
    pub const IDENTITY_TRAPDOOR: &[u8] = b"electanon/identity/trapdoor";
    pub const IDENTITY_COMMITMENT: &[u8] = b"electanon/identity-commitment";
    pub const VOTE_HASH: &[u8] = b"electanon/vote-hash";
    pub const NULLIFIER_HASH: &[u8] = b"electanon/nullifier-hash";
    pub const MERKLE_NODE: &[u8] = b"electanon/merkle/node";
    pub const MERKLE_ZERO_LEAF: &[u8] = b"electanon/merkle/zero-leaf";
    pub const LEAF_LIST: &[u8] = b"electanon/merkle/leaf-list";
    pub const ADDRESS: &[u8] = b"electanon/address";
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("identity seed must not be empty")]
    EmptySeed,
    #[error("path has {got} index bits, tree height is {expected}")]
    PathLengthMismatch { expected: usize, got: usize },
    #[error("unknown digest backend `{0}`")]
    UnknownBackend(String),
}

/// A fixed-width 32-byte digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
        let mut out = [0u8; DIGEST_LEN];
        hex::decode_to_slice(s, &mut out)?;
        Ok(Digest(out))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// The hash function behind every protocol digest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DigestBackend {
    #[default]
    Sha256,
    Blake2s,
}

impl DigestBackend {
    /// `"default"` and `"sha256"` select SHA-256; `"blake2s"` selects BLAKE2s-256.
    pub fn from_name(name: &str) -> Result<Self, CryptoError> {
        match name {
            "default" | "sha256" => Ok(DigestBackend::Sha256),
            "blake2s" => Ok(DigestBackend::Blake2s),
            other => Err(CryptoError::UnknownBackend(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DigestBackend::Sha256 => "sha256",
            DigestBackend::Blake2s => "blake2s",
        }
    }
}

/// A 256-bit secret scalar (identity nullifier or trapdoor).
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Scalar(pub [u8; 32]);

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Scalar(..)")
    }
}

/// The vote blinding secret. 256 bits, big-endian.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct VoteSecret(pub [u8; 32]);

impl VoteSecret {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for VoteSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("VoteSecret(..)")
    }
}

impl Serialize for VoteSecret {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for VoteSecret {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let mut out = [0u8; 32];
        hex::decode_to_slice(&s, &mut out).map_err(serde::de::Error::custom)?;
        Ok(VoteSecret(out))
    }
}

/// A voter's secret identity. Never serialized.
#[derive(Clone)]
pub struct Identity {
    signing_key: SigningKey,
    public_key: VerifyingKey,
    nullifier: Scalar,
    trapdoor: Scalar,
}

impl fmt::Debug for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Identity").finish_non_exhaustive()
    }
}

impl PartialEq for Identity {
    fn eq(&self, other: &Self) -> bool {
        self.signing_key.to_bytes() == other.signing_key.to_bytes()
            && self.public_key == other.public_key
            && self.nullifier == other.nullifier
            && self.trapdoor == other.trapdoor
    }
}

impl Eq for Identity {}

impl Identity {
    pub fn public_key(&self) -> &VerifyingKey {
        &self.public_key
    }

    pub fn nullifier(&self) -> &Scalar {
        &self.nullifier
    }

    #[cfg(test)]
    pub(crate) fn trapdoor(&self) -> &Scalar {
        &self.trapdoor
    }

    #[cfg(test)]
    pub(crate) fn with_parts(
        &self,
        public_key: Option<VerifyingKey>,
        nullifier: Option<Scalar>,
        trapdoor: Option<Scalar>,
    ) -> Identity {
        Identity {
            signing_key: self.signing_key.clone(),
            public_key: public_key.unwrap_or(self.public_key),
            nullifier: nullifier.unwrap_or(self.nullifier),
            trapdoor: trapdoor.unwrap_or(self.trapdoor),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IdentityCommitment(pub Digest);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VoteHash(pub Digest);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NullifierHash(pub Digest);

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub ed25519_dalek::Signature);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Signature(..)")
    }
}

/// Hashing context for one digest backend.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Crypto {
    backend: DigestBackend,
}

impl Crypto {
    pub fn new(backend: DigestBackend) -> Self {
        Crypto { backend }
    }

    pub fn backend(&self) -> DigestBackend {
        self.backend
    }

    /// Domain-separated hash of length-prefixed parts.
    pub fn hash(&self, domain: &[u8], parts: &[&[u8]]) -> Digest {
        fn feed<H: sha2::Digest>(h: &mut H, domain: &[u8], parts: &[&[u8]]) {
            h.update((domain.len() as u32).to_be_bytes());
            h.update(domain);
            for p in parts {
                h.update((p.len() as u32).to_be_bytes());
                h.update(p);
            }
        }
        let mut out = [0u8; DIGEST_LEN];
        match self.backend {
            DigestBackend::Sha256 => {
                let mut h = Sha256::new();
                feed(&mut h, domain, parts);
                out.copy_from_slice(&h.finalize());
            }
            DigestBackend::Blake2s => {
                let mut h = Blake2s256::new();
                feed(&mut h, domain, parts);
                out.copy_from_slice(&h.finalize());
            }
        }
        Digest(out)
    }

    pub fn gen_identity(&self, seed: &[u8]) -> Result<Identity, CryptoError> {
        if seed.is_empty() {
            return Err(CryptoError::EmptySeed);
        }
        let sk = self.hash(tag::IDENTITY_SIGNING, &[seed]);
        let signing_key = SigningKey::from_bytes(&sk.0);
        Ok(Identity {
            public_key: signing_key.verifying_key(),
            signing_key,
            nullifier: Scalar(self.hash(tag::IDENTITY_NULLIFIER, &[seed]).0),
            trapdoor: Scalar(self.hash(tag::IDENTITY_TRAPDOOR, &[seed]).0),
        })
    }

    pub fn commit_identity(&self, id: &Identity) -> IdentityCommitment {
        IdentityCommitment(self.hash(
            tag::IDENTITY_COMMITMENT,
            &[id.public_key.as_bytes(), &id.nullifier.0, &id.trapdoor.0],
        ))
    }

    /// Hash of a ballot rank with its blinding secret. The rank is encoded
    /// as a length-prefixed big-endian magnitude, so any integer is accepted,
    /// including out-of-range ones.
    pub fn vote_hash(&self, vid: &BigUint, vsk: &VoteSecret) -> VoteHash {
        let magnitude = vid.to_bytes_be();
        VoteHash(self.hash(tag::VOTE_HASH, &[&magnitude, &vsk.0]))
    }

    pub fn nullifier_hash(
        &self,
        nullifier: &Scalar,
        external_nullifier: &Address,
        path_bits: &[bool],
        height: usize,
    ) -> Result<NullifierHash, CryptoError> {
        if path_bits.len() != height {
            return Err(CryptoError::PathLengthMismatch {
                expected: height,
                got: path_bits.len(),
            });
        }
        let bits: Vec<u8> = path_bits.iter().map(|&b| b as u8).collect();
        Ok(NullifierHash(self.hash(
            tag::NULLIFIER_HASH,
            &[&nullifier.0, external_nullifier.as_bytes(), &bits],
        )))
    }

    pub fn address(&self, label: &[u8]) -> Address {
        let d = self.hash(tag::ADDRESS, &[label]);
        let mut out = [0u8; 20];
        out.copy_from_slice(&d.0[12..]);
        Address(out)
    }
}

pub fn sign(id: &Identity, msg: &[u8]) -> Signature {
    Signature(id.signing_key.sign(msg))
}

pub fn verify_sig(public_key: &VerifyingKey, msg: &[u8], sig: &Signature) -> bool {
    public_key.verify(msg, &sig.0).is_ok()
}
