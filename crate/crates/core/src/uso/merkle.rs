//! Per-epoch Merkle tree over leaves sorted by asset id.
//!
//! Tree shape and audit paths follow RFC 9162 (`MTH` with the split at the
//! largest power of two below `n`), with `0x00`/`0x01` domain separation
//! for leaves and interior nodes. Because leaves are sorted and unique per
//! asset, two adjacent leaves that bracket an id prove it is absent.

use serde::{Deserialize, Serialize};

use crate::crypto::{self, Digest};
use crate::error::{Rejection, Result};

const EMPTY_EPOCH_TAG: &[u8] = b"tokenlab/empty-epoch/v1";

/// Root of an epoch with no leaves.
pub fn empty_root() -> Digest {
    crypto::hash(EMPTY_EPOCH_TAG)
}

/// `(asset_id, record digest)`: one state change of one asset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Leaf {
    pub asset_id: Digest,
    pub record: Digest,
}

impl Leaf {
    pub fn hash(&self) -> Digest {
        let mut buf = Vec::with_capacity(65);
        buf.push(0x00);
        buf.extend_from_slice(self.asset_id.as_bytes());
        buf.extend_from_slice(self.record.as_bytes());
        crypto::hash(&buf)
    }
}

pub fn node_hash(left: &Digest, right: &Digest) -> Digest {
    let mut buf = Vec::with_capacity(65);
    buf.push(0x01);
    buf.extend_from_slice(left.as_bytes());
    buf.extend_from_slice(right.as_bytes());
    crypto::hash(&buf)
}

fn split_point(n: usize) -> usize {
    debug_assert!(n > 1);
    let mut k = 1;
    while k * 2 < n {
        k *= 2;
    }
    k
}

fn subtree_root(hashes: &[Digest]) -> Digest {
    match hashes.len() {
        0 => empty_root(),
        1 => hashes[0],
        n => {
            let k = split_point(n);
            node_hash(&subtree_root(&hashes[..k]), &subtree_root(&hashes[k..]))
        }
    }
}

fn audit_path(index: usize, hashes: &[Digest], out: &mut Vec<Digest>) {
    let n = hashes.len();
    if n <= 1 {
        return;
    }
    let k = split_point(n);
    if index < k {
        audit_path(index, &hashes[..k], out);
        out.push(subtree_root(&hashes[k..]));
    } else {
        audit_path(index - k, &hashes[k..], out);
        out.push(subtree_root(&hashes[..k]));
    }
}

/// Recomputes the root from a leaf hash and its audit path.
pub fn root_from_path(index: u64, size: u64, leaf_hash: Digest, path: &[Digest]) -> Option<Digest> {
    if index >= size {
        return None;
    }
    let mut fnode = index;
    let mut snode = size - 1;
    let mut r = leaf_hash;
    for p in path {
        if snode == 0 {
            return None;
        }
        if fnode & 1 == 1 || fnode == snode {
            r = node_hash(p, &r);
            if fnode & 1 == 0 {
                while fnode & 1 == 0 && fnode != 0 {
                    fnode >>= 1;
                    snode >>= 1;
                }
            }
        } else {
            r = node_hash(&r, p);
        }
        fnode >>= 1;
        snode >>= 1;
    }
    (snode == 0).then_some(r)
}

/// A leaf with its position and audit path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeafProof {
    pub leaf: Leaf,
    pub index: u64,
    pub path: Vec<Digest>,
}

impl LeafProof {
    pub fn verify(&self, size: u64, root: &Digest) -> bool {
        root_from_path(self.index, size, self.leaf.hash(), &self.path).as_ref() == Some(root)
    }
}

/// Absence of an asset id: the sorted neighbours on either side. At the
/// ends of the tree one side is missing; an empty tree has neither.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbsenceProof {
    pub left: Option<LeafProof>,
    pub right: Option<LeafProof>,
}

impl AbsenceProof {
    pub fn verify(&self, asset_id: &Digest, size: u64, root: &Digest) -> bool {
        if size == 0 {
            return self.left.is_none() && self.right.is_none() && *root == empty_root();
        }
        if let Some(l) = &self.left {
            if !(l.leaf.asset_id < *asset_id && l.verify(size, root)) {
                return false;
            }
        }
        if let Some(r) = &self.right {
            if !(r.leaf.asset_id > *asset_id && r.verify(size, root)) {
                return false;
            }
        }
        match (&self.left, &self.right) {
            (Some(l), Some(r)) => r.index == l.index + 1,
            (Some(l), None) => l.index + 1 == size,
            (None, Some(r)) => r.index == 0,
            (None, None) => false,
        }
    }
}

/// The leaves of one closed epoch, sorted and unique by asset id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochTree {
    leaves: Vec<Leaf>,
}

impl EpochTree {
    pub fn new(mut leaves: Vec<Leaf>) -> Result<Self> {
        leaves.sort();
        if leaves.windows(2).any(|w| w[0].asset_id == w[1].asset_id) {
            return Err(Rejection::invalid("two leaves for one asset in an epoch"));
        }
        Ok(Self { leaves })
    }

    pub fn leaves(&self) -> &[Leaf] {
        &self.leaves
    }

    pub fn size(&self) -> u64 {
        self.leaves.len() as u64
    }

    fn hashes(&self) -> Vec<Digest> {
        self.leaves.iter().map(Leaf::hash).collect()
    }

    pub fn root(&self) -> Digest {
        subtree_root(&self.hashes())
    }

    fn position(&self, asset_id: &Digest) -> std::result::Result<usize, usize> {
        self.leaves.binary_search_by(|l| l.asset_id.cmp(asset_id))
    }

    pub fn get(&self, asset_id: &Digest) -> Option<&Leaf> {
        self.position(asset_id).ok().map(|i| &self.leaves[i])
    }

    fn leaf_proof(&self, index: usize, hashes: &[Digest]) -> LeafProof {
        let mut path = Vec::new();
        audit_path(index, hashes, &mut path);
        LeafProof {
            leaf: self.leaves[index],
            index: index as u64,
            path,
        }
    }

    /// Inclusion proof if the asset has a leaf here, absence proof otherwise.
    #[allow(clippy::result_large_err)]
    pub fn prove(&self, asset_id: &Digest) -> std::result::Result<LeafProof, AbsenceProof> {
        let hashes = self.hashes();
        match self.position(asset_id) {
            Ok(i) => Ok(self.leaf_proof(i, &hashes)),
            Err(i) => Err(AbsenceProof {
                left: (i > 0).then(|| self.leaf_proof(i - 1, &hashes)),
                right: (i < self.leaves.len()).then(|| self.leaf_proof(i, &hashes)),
            }),
        }
    }
}
