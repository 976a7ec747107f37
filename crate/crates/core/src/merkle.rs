//! Full binary Merkle tree with level-ordered node storage.
//!
//! `nodes[0]` is the root and the children of node `k` sit at `2k + 1` and
//! `2k + 2`, so leaf `i` of an `N`-leaf tree is `nodes[N - 1 + i]`. Leaf nodes
//! hold `hash(leaf)`; internal nodes hold `hash(left || right)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{CodecError, Reader, Writer};
use crate::crypto::{hash, hash_concat, Digest, DIGEST_LEN};

const TREE_MAGIC: [u8; 4] = *b"OTMT";
const TREE_VERSION: u8 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MerkleError {
    #[error("leaf count {0} is not a power of two >= 2")]
    NotPowerOfTwo(usize),
    #[error("leaf index {index} out of range for {leaf_count} leaves")]
    IndexOutOfRange { index: usize, leaf_count: usize },
    #[error("serialized tree: {0}")]
    Codec(#[from] CodecError),
    #[error("serialized tree nodes are inconsistent")]
    Inconsistent,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct RootHash(pub Digest);

/// Which side of the running hash a sibling sits on.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct MerkleProof {
    pub leaf_index: usize,
    /// Leaf level first.
    pub siblings: Vec<(Digest, Side)>,
}

impl MerkleProof {
    pub fn depth(&self) -> usize {
        self.siblings.len()
    }

    /// Side flags must spell out `leaf_index` bit by bit, and the index must
    /// fit in the proof depth.
    fn is_well_formed(&self) -> bool {
        let depth = self.siblings.len();
        if depth >= usize::BITS as usize || self.leaf_index >> depth != 0 {
            return false;
        }
        self.siblings.iter().enumerate().all(|(level, (_, side))| {
            let is_right_child = self.leaf_index >> level & 1 == 1;
            *side
                == if is_right_child {
                    Side::Left
                } else {
                    Side::Right
                }
        })
    }

    /// Writes the proof in a fixed canonical layout, used inside signed
    /// payloads.
    pub fn encode_into(&self, w: &mut Writer) {
        w.u64(self.leaf_index as u64)
            .u32(self.siblings.len() as u32);
        for (digest, side) in &self.siblings {
            w.u8(matches!(side, Side::Right) as u8)
                .raw(digest.as_bytes());
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct MerkleTree {
    leaf_count: usize,
    nodes: Vec<Digest>,
}

fn node_hash(left: &Digest, right: &Digest) -> Digest {
    hash_concat(&[left.as_bytes(), right.as_bytes()])
}

fn check_leaf_count(n: usize) -> Result<(), MerkleError> {
    if n < 2 || !n.is_power_of_two() {
        return Err(MerkleError::NotPowerOfTwo(n));
    }
    Ok(())
}

impl MerkleTree {
    pub fn build<L: AsRef<[u8]>>(leaves: &[L]) -> Result<Self, MerkleError> {
        let n = leaves.len();
        check_leaf_count(n)?;
        let mut nodes = vec![Digest::ZERO; 2 * n - 1];
        for (slot, leaf) in nodes[n - 1..].iter_mut().zip(leaves) {
            *slot = hash(leaf.as_ref());
        }
        for k in (0..n - 1).rev() {
            nodes[k] = node_hash(&nodes[2 * k + 1], &nodes[2 * k + 2]);
        }
        Ok(Self {
            leaf_count: n,
            nodes,
        })
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    pub fn depth(&self) -> usize {
        self.leaf_count.trailing_zeros() as usize
    }

    pub fn root(&self) -> RootHash {
        RootHash(self.nodes[0])
    }

    pub fn nodes(&self) -> &[Digest] {
        &self.nodes
    }

    pub fn leaf_node(&self, index: usize) -> Option<&Digest> {
        (index < self.leaf_count).then(|| &self.nodes[self.leaf_count - 1 + index])
    }

    pub fn prove(&self, leaf_index: usize) -> Result<MerkleProof, MerkleError> {
        if leaf_index >= self.leaf_count {
            return Err(MerkleError::IndexOutOfRange {
                index: leaf_index,
                leaf_count: self.leaf_count,
            });
        }
        let mut k = self.leaf_count - 1 + leaf_index;
        let mut siblings = Vec::with_capacity(self.depth());
        while k > 0 {
            // odd positions are left children
            let entry = if k % 2 == 1 {
                (self.nodes[k + 1], Side::Right)
            } else {
                (self.nodes[k - 1], Side::Left)
            };
            siblings.push(entry);
            k = (k - 1) / 2;
        }
        Ok(MerkleProof {
            leaf_index,
            siblings,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&TREE_MAGIC)
            .u8(TREE_VERSION)
            .u64(self.leaf_count as u64);
        for node in &self.nodes {
            w.raw(node.as_bytes());
        }
        w.finish()
    }

    /// Parses a serialized tree and checks every internal node against its
    /// children.
    pub fn from_bytes(data: &[u8]) -> Result<Self, MerkleError> {
        let mut r = Reader::new(data);
        r.magic(TREE_MAGIC)?;
        let version = r.u8()?;
        if version != TREE_VERSION {
            return Err(CodecError::UnsupportedVersion(version).into());
        }
        let n = usize::try_from(r.u64()?).map_err(|_| CodecError::Invalid("leaf count"))?;
        check_leaf_count(n)?;
        let body = r.raw((2 * n - 1) * DIGEST_LEN)?;
        r.finish()?;
        let nodes: Vec<Digest> = body
            .chunks_exact(DIGEST_LEN)
            .map(|c| Digest::from_bytes(c.try_into().expect("chunk is 32 bytes")))
            .collect();
        let consistent =
            (0..n - 1).all(|k| nodes[k] == node_hash(&nodes[2 * k + 1], &nodes[2 * k + 2]));
        if !consistent {
            return Err(MerkleError::Inconsistent);
        }
        Ok(Self {
            leaf_count: n,
            nodes,
        })
    }
}

pub fn build_tree<L: AsRef<[u8]>>(leaves: &[L]) -> Result<MerkleTree, MerkleError> {
    MerkleTree::build(leaves)
}

/// Recomputes the root from `leaf` and the sibling path. Malformed proofs
/// (side flags disagreeing with the index, wrong depth) return `false`.
pub fn verify_proof(root: &RootHash, leaf: &[u8], proof: &MerkleProof) -> bool {
    if !proof.is_well_formed() {
        return false;
    }
    let computed = proof
        .siblings
        .iter()
        .fold(hash(leaf), |acc, (sibling, side)| match side {
            Side::Left => node_hash(sibling, &acc),
            Side::Right => node_hash(&acc, sibling),
        });
    computed == root.0
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    use super::*;
    use crate::crypto::OtpValue;

    fn random_leaves(rng: &mut ChaCha20Rng, n: usize) -> Vec<OtpValue> {
        (0..n).map(|_| OtpValue::from_bytes(rng.gen())).collect()
    }

    /// Reference root computed level by level, independent of the node array.
    fn reference_root(leaves: &[OtpValue]) -> Digest {
        let mut level: Vec<Digest> = leaves.iter().map(|l| hash(l.as_bytes())).collect();
        while level.len() > 1 {
            level = level
                .chunks(2)
                .map(|p| {
                    let mut buf = p[0].as_bytes().to_vec();
                    buf.extend_from_slice(p[1].as_bytes());
                    hash(&buf)
                })
                .collect();
        }
        level[0]
    }

    #[test]
    fn two_leaf_root_is_hash_of_leaf_hashes() {
        let a = OtpValue::from_bytes([1; 16]);
        let b = OtpValue::from_bytes([2; 16]);
        let tree = build_tree(&[a, b]).unwrap();
        let mut cat = hash(a.as_bytes()).as_bytes().to_vec();
        cat.extend_from_slice(hash(b.as_bytes()).as_bytes());
        assert_eq!(tree.root().0, hash(&cat));
    }

    #[test]
    fn sixteen_leaves_give_31_nodes_and_depth_four() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let tree = build_tree(&random_leaves(&mut rng, 16)).unwrap();
        assert_eq!(tree.nodes().len(), 31);
        for i in 0..16 {
            assert_eq!(tree.prove(i).unwrap().depth(), 4);
        }
    }

    #[test]
    fn rejects_bad_leaf_counts() {
        let leaves = [OtpValue::from_bytes([0; 16]); 6];
        for n in [0usize, 1, 3, 5, 6] {
            assert_eq!(
                build_tree(&leaves[..n]).unwrap_err(),
                MerkleError::NotPowerOfTwo(n)
            );
        }
    }

    #[test]
    fn swapping_two_leaves_changes_root() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..50 {
            let leaves = random_leaves(&mut rng, 8);
            let root = build_tree(&leaves).unwrap().root();
            for i in 0..8 {
                for j in i + 1..8 {
                    let mut swapped = leaves.clone();
                    swapped.swap(i, j);
                    assert_ne!(build_tree(&swapped).unwrap().root(), root);
                }
            }
        }
    }

    #[test]
    fn node_array_matches_reference_recomputation() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for n in [2usize, 4, 8, 16, 64] {
            let leaves = random_leaves(&mut rng, n);
            let tree = build_tree(&leaves).unwrap();
            assert_eq!(tree.root().0, reference_root(&leaves));
            assert_eq!(build_tree(&leaves).unwrap(), tree);
        }
    }

    #[test]
    fn forged_pairings_fail_exhaustively_at_eight_leaves() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let leaves = random_leaves(&mut rng, 8);
        let tree = build_tree(&leaves).unwrap();
        let root = tree.root();
        for i in 0..8 {
            let proof = tree.prove(i).unwrap();
            for (j, leaf) in leaves.iter().enumerate() {
                assert_eq!(verify_proof(&root, leaf.as_bytes(), &proof), i == j);
            }
        }
    }

    #[test]
    fn every_sibling_bit_flip_fails() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let leaves = random_leaves(&mut rng, 8);
        let tree = build_tree(&leaves).unwrap();
        let proof = tree.prove(5).unwrap();
        for level in 0..proof.depth() {
            for bit in 0..256 {
                let mut forged = proof.clone();
                let mut bytes = *forged.siblings[level].0.as_bytes();
                bytes[bit / 8] ^= 1 << (bit % 8);
                forged.siblings[level].0 = Digest::from_bytes(bytes);
                assert!(!verify_proof(&tree.root(), leaves[5].as_bytes(), &forged));
            }
        }
    }

    #[test]
    fn relabelled_or_resized_proofs_fail() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let leaves = random_leaves(&mut rng, 8);
        let tree = build_tree(&leaves).unwrap();
        let root = tree.root();
        let proof = tree.prove(2).unwrap();

        let mut relabelled = proof.clone();
        relabelled.leaf_index = 3;
        assert!(!verify_proof(&root, leaves[2].as_bytes(), &relabelled));

        let mut short = proof.clone();
        short.siblings.pop();
        assert!(!verify_proof(&root, leaves[2].as_bytes(), &short));

        let mut long = proof.clone();
        long.siblings.push((Digest::ZERO, Side::Right));
        assert!(!verify_proof(&root, leaves[2].as_bytes(), &long));

        let mut flipped = proof;
        flipped.siblings[0].1 = Side::Left;
        assert!(!verify_proof(&root, leaves[2].as_bytes(), &flipped));
    }

    #[test]
    fn prove_rejects_out_of_range() {
        let tree = build_tree(&[OtpValue::from_bytes([0; 16]); 4]).unwrap();
        assert_eq!(
            tree.prove(4).unwrap_err(),
            MerkleError::IndexOutOfRange {
                index: 4,
                leaf_count: 4
            }
        );
    }

    #[test]
    fn golden_root_for_zero_seed_otps() {
        // OTP_i = trunc16(h(trunc16(h(0^32 || be64(i))))), i = 1..4; root
        // computed with Python's hashlib.
        let leaves: Vec<OtpValue> = (1u64..=4)
            .map(|i| {
                let mut buf = vec![0u8; 32];
                buf.extend_from_slice(&i.to_be_bytes());
                let pre = hash(&buf);
                let otp: [u8; 16] = hash(&pre.as_bytes()[..16]).as_bytes()[..16]
                    .try_into()
                    .unwrap();
                OtpValue::from_bytes(otp)
            })
            .collect();
        assert_eq!(
            build_tree(&leaves).unwrap().root().0.to_hex(),
            "a0025d9ffc3ce760b219063f9f25c502029688f362633e47be7908094e5fcd96"
        );
    }

    #[test]
    fn serialization_rejects_tampering() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let tree = build_tree(&random_leaves(&mut rng, 8)).unwrap();
        let bytes = tree.to_bytes();
        assert_eq!(bytes.len(), 4 + 1 + 8 + 15 * 32);
        assert_eq!(MerkleTree::from_bytes(&bytes).unwrap(), tree);

        let mut tampered = bytes.clone();
        let last = tampered.len() - 1;
        tampered[last] ^= 1;
        assert_eq!(
            MerkleTree::from_bytes(&tampered).unwrap_err(),
            MerkleError::Inconsistent
        );
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            MerkleTree::from_bytes(&bad_magic),
            Err(MerkleError::Codec(CodecError::BadMagic { .. }))
        ));
        assert!(MerkleTree::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn prove_verify_round_trip(log_n in 1u32..=6, seed: u64) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let leaves = random_leaves(&mut rng, 1 << log_n);
            let tree = build_tree(&leaves).unwrap();
            for (i, leaf) in leaves.iter().enumerate() {
                let proof = tree.prove(i).unwrap();
                prop_assert!(verify_proof(&tree.root(), leaf.as_bytes(), &proof));
            }
        }
    }
}
