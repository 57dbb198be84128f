//! Fixed-height Merkle trees, membership proofs and the Merkle forest.
//!
//! Trees are built bottom-up from an ordered leaf list. Slots past the last
//! leaf hold the zero-leaf digest; only the populated prefix of each level is
//! stored, with precomputed zero-subtree digests standing in for the rest.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::crypto::{tag, Crypto, Digest};

/// Heights above this are refused; 2^32 leaves is far beyond any election.
pub const MAX_HEIGHT: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MerkleError {
    #[error("{got} leaves exceed capacity {capacity}")]
    CapacityExceeded { capacity: u64, got: u64 },
    #[error("tree height {0} is not supported")]
    HeightTooLarge(usize),
    #[error("leaf index {index} out of range ({len} leaves)")]
    IndexOutOfRange { index: u64, len: u64 },
    #[error("claimed root does not match the leaf list")]
    RootMismatch,
    #[error("claimed leaf-list hash does not match the leaf list")]
    ListHashMismatch,
    #[error("list-hash registration requires a claimed list hash")]
    MissingListHash,
}

pub fn zero_leaf(crypto: &Crypto) -> Digest {
    crypto.hash(tag::MERKLE_ZERO_LEAF, &[])
}

pub fn hash_node(crypto: &Crypto, left: &Digest, right: &Digest) -> Digest {
    crypto.hash(tag::MERKLE_NODE, &[left.as_bytes(), right.as_bytes()])
}

/// Digest of an ordered leaf list, for the list-hash forest mode.
pub fn hash_leaf_list(crypto: &Crypto, leaves: &[Digest]) -> Digest {
    let parts: Vec<&[u8]> = leaves.iter().map(|l| l.as_bytes().as_slice()).collect();
    crypto.hash(tag::LEAF_LIST, &parts)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MerkleTree {
    height: usize,
    // levels[0] are the leaves; levels[height] holds the root.
    levels: Vec<Vec<Digest>>,
    zeros: Vec<Digest>,
}

impl MerkleTree {
    pub fn build(crypto: &Crypto, leaves: &[Digest], height: usize) -> Result<Self, MerkleError> {
        if height > MAX_HEIGHT {
            return Err(MerkleError::HeightTooLarge(height));
        }
        let capacity = 1u64 << height;
        if leaves.len() as u64 > capacity {
            return Err(MerkleError::CapacityExceeded {
                capacity,
                got: leaves.len() as u64,
            });
        }

        let mut zeros = Vec::with_capacity(height + 1);
        zeros.push(zero_leaf(crypto));
        for k in 0..height {
            zeros.push(hash_node(crypto, &zeros[k], &zeros[k]));
        }

        let mut levels = Vec::with_capacity(height + 1);
        levels.push(leaves.to_vec());
        for k in 0..height {
            let below = &levels[k];
            let next: Vec<Digest> = below
                .chunks(2)
                .map(|pair| {
                    let right = pair.get(1).unwrap_or(&zeros[k]);
                    hash_node(crypto, &pair[0], right)
                })
                .collect();
            levels.push(next);
        }
        Ok(MerkleTree { height, levels, zeros })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn capacity(&self) -> u64 {
        1u64 << self.height
    }

    pub fn leaves(&self) -> &[Digest] {
        &self.levels[0]
    }

    pub fn root(&self) -> Digest {
        self.levels[self.height]
            .first()
            .copied()
            .unwrap_or(self.zeros[self.height])
    }

    fn node(&self, level: usize, index: u64) -> Digest {
        self.levels[level]
            .get(index as usize)
            .copied()
            .unwrap_or(self.zeros[level])
    }

    pub fn proof(&self, leaf_index: u64) -> Result<MerkleProof, MerkleError> {
        let len = self.leaves().len() as u64;
        if leaf_index >= len {
            return Err(MerkleError::IndexOutOfRange { index: leaf_index, len });
        }
        let mut siblings = Vec::with_capacity(self.height);
        let mut index_bits = Vec::with_capacity(self.height);
        let mut idx = leaf_index;
        for level in 0..self.height {
            siblings.push(self.node(level, idx ^ 1));
            index_bits.push(idx & 1 == 1);
            idx >>= 1;
        }
        Ok(MerkleProof { siblings, index_bits })
    }

    pub fn position(&self, leaf: &Digest) -> Option<u64> {
        self.leaves().iter().position(|l| l == leaf).map(|i| i as u64)
    }
}

/// Sibling path from a leaf to the root. `index_bits[k]` is true when the
/// path node at level `k` is a right child.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MerkleProof {
    pub siblings: Vec<Digest>,
    #[serde(serialize_with = "bits_to_str", deserialize_with = "bits_from_str")]
    pub index_bits: Vec<bool>,
}

impl MerkleProof {
    pub fn height(&self) -> usize {
        self.index_bits.len()
    }

    pub fn is_well_formed(&self) -> bool {
        self.siblings.len() == self.index_bits.len()
    }

    /// Fold `leaf` up the path. `None` if the proof is malformed.
    pub fn fold(&self, crypto: &Crypto, leaf: &Digest) -> Option<Digest> {
        if !self.is_well_formed() {
            return None;
        }
        Some(
            self.siblings
                .iter()
                .zip(&self.index_bits)
                .fold(*leaf, |acc, (sib, &right)| {
                    if right {
                        hash_node(crypto, sib, &acc)
                    } else {
                        hash_node(crypto, &acc, sib)
                    }
                }),
        )
    }

    pub fn leaf_index(&self) -> u64 {
        self.index_bits
            .iter()
            .rev()
            .fold(0u64, |acc, &b| (acc << 1) | b as u64)
    }
}

fn bits_to_str<S: Serializer>(bits: &[bool], s: S) -> Result<S::Ok, S::Error> {
    let text: String = bits.iter().map(|&b| if b { '1' } else { '0' }).collect();
    s.serialize_str(&text)
}

fn bits_from_str<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
    let text = String::deserialize(d)?;
    text.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(serde::de::Error::custom(format!("bad index bit `{other}`"))),
        })
        .collect()
}

pub fn build_tree(crypto: &Crypto, leaves: &[Digest], height: usize) -> Result<MerkleTree, MerkleError> {
    MerkleTree::build(crypto, leaves, height)
}

pub fn gen_proof(tree: &MerkleTree, leaf_index: u64) -> Result<MerkleProof, MerkleError> {
    tree.proof(leaf_index)
}

pub fn verify_proof(crypto: &Crypto, root: &Digest, leaf: &Digest, proof: &MerkleProof) -> bool {
    proof.fold(crypto, leaf).is_some_and(|r| r == *root)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestMode {
    /// The full leaf list is the public input; the root is recomputed from it.
    #[default]
    PublicLeaves,
    /// The registrant also supplies a digest of the leaf list, checked first.
    ListHash,
}

/// What a successful registration publishes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeRegistration {
    pub tree_index: u64,
    pub tree_root: Digest,
    pub leaves: Vec<Digest>,
}

/// Equal-height trees registered one batch at a time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MerkleForest {
    height: usize,
    tree_size: u64,
    mode: ForestMode,
    roots: BTreeMap<u64, Digest>,
}

impl MerkleForest {
    /// `tree_size` leaves per tree, each tree of the given height.
    pub fn new(height: usize, tree_size: u64, mode: ForestMode) -> Result<Self, MerkleError> {
        if height > MAX_HEIGHT {
            return Err(MerkleError::HeightTooLarge(height));
        }
        if tree_size > 1u64 << height {
            return Err(MerkleError::CapacityExceeded {
                capacity: 1u64 << height,
                got: tree_size,
            });
        }
        Ok(MerkleForest { height, tree_size, mode, roots: BTreeMap::new() })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn tree_size(&self) -> u64 {
        self.tree_size
    }

    pub fn mode(&self) -> ForestMode {
        self.mode
    }

    pub fn roots(&self) -> &BTreeMap<u64, Digest> {
        &self.roots
    }

    pub fn root(&self, tree_index: u64) -> Option<&Digest> {
        self.roots.get(&tree_index)
    }

    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    /// Recompute the root of `leaves`, compare with the claim and store it at
    /// the next free index.
    pub fn register(
        &mut self,
        crypto: &Crypto,
        leaves: &[Digest],
        claimed_root: &Digest,
        claimed_list_hash: Option<&Digest>,
    ) -> Result<TreeRegistration, MerkleError> {
        if leaves.len() as u64 > self.tree_size {
            return Err(MerkleError::CapacityExceeded {
                capacity: self.tree_size,
                got: leaves.len() as u64,
            });
        }
        if self.mode == ForestMode::ListHash {
            let claimed = claimed_list_hash.ok_or(MerkleError::MissingListHash)?;
            if hash_leaf_list(crypto, leaves) != *claimed {
                return Err(MerkleError::ListHashMismatch);
            }
        }
        let tree = MerkleTree::build(crypto, leaves, self.height)?;
        if tree.root() != *claimed_root {
            return Err(MerkleError::RootMismatch);
        }
        let tree_index = self.roots.len() as u64;
        self.roots.insert(tree_index, tree.root());
        Ok(TreeRegistration {
            tree_index,
            tree_root: tree.root(),
            leaves: leaves.to_vec(),
        })
    }
}
