//! Clerk-set constructions: the fixed grid assignment, uniform random sets,
//! and coin-specific clerk spaces derived by iterating a hash on the coin-id.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coin::{CoinId, NodeId};
use crate::error::InfeasibleError;

/// Per-node clerk sets that pairwise intersect in at least f+1 nodes.
///
/// Nodes are clustered into `m = ceil(n/(f+1))` supernodes of f+1 members.
/// Supernodes sit row-major on a grid with `cols = ceil(sqrt(m))` columns;
/// a supernode's super clerk set is its row plus its column, and a node's
/// clerk set is the union of members of its supernode's super clerk set.
/// When f+1 does not divide n, the last supernode is topped up with nodes
/// borrowed from the first supernodes, so some nodes belong to two clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedAssignment {
    pub n: usize,
    pub f: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub supernodes: Vec<Vec<NodeId>>,
    /// Sorted clerk set of each node.
    pub sets: Vec<Vec<NodeId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentCheck {
    pub min_intersection: usize,
    pub max_set_size: usize,
    /// `ceil(2·sqrt(n(f+1)))`.
    pub size_limit: usize,
    pub intersections_ok: bool,
    pub sizes_ok: bool,
}

impl AssignmentCheck {
    pub fn ok(&self) -> bool {
        self.intersections_ok && self.sizes_ok
    }
}

pub fn build_fixed_assignment(n: usize, f: usize) -> Result<FixedAssignment, InfeasibleError> {
    let group = f + 1;
    if n <= group {
        return Err(InfeasibleError::TooFewSupernodes { n, f });
    }
    let m = n.div_ceil(group);
    let mut supernodes: Vec<Vec<NodeId>> =
        (0..m).map(|k| (k * group..((k + 1) * group).min(n)).map(NodeId::from).collect()).collect();
    let last = supernodes.last_mut().expect("m >= 2");
    let mut borrow = 0;
    while last.len() < group {
        last.push(NodeId::from(borrow));
        borrow += 1;
    }

    let cols = (m as f64).sqrt().ceil() as usize;
    let rows = m.div_ceil(cols);
    let super_sets: Vec<Vec<usize>> = (0..m)
        .map(|k| {
            let (row, col) = (k / cols, k % cols);
            let mut s: Vec<usize> = (row * cols..((row + 1) * cols).min(m)).collect();
            s.extend((0..rows).map(|r| r * cols + col).filter(|&j| j < m && j / cols != row));
            s
        })
        .collect();

    let sets = (0..n)
        .map(|i| {
            let home = i / group;
            let mut set: Vec<NodeId> = super_sets[home].iter().flat_map(|&k| supernodes[k].iter().copied()).collect();
            set.sort_unstable();
            set.dedup();
            set
        })
        .collect();

    Ok(FixedAssignment { n, f, grid_rows: rows, grid_cols: cols, supernodes, sets })
}

impl FixedAssignment {
    pub fn clerk_set(&self, node: NodeId) -> &[NodeId] {
        &self.sets[node.index()]
    }

    pub fn size_limit(&self) -> usize {
        (2.0 * ((self.n * (self.f + 1)) as f64).sqrt() - 1e-9).ceil() as usize
    }

    /// Exhaustive check over all ordered pairs, including i = j.
    pub fn check(&self) -> AssignmentCheck {
        let mut min_intersection = usize::MAX;
        for a in &self.sets {
            for b in &self.sets {
                min_intersection = min_intersection.min(sorted_intersection_len(a, b));
            }
        }
        let max_set_size = self.sets.iter().map(Vec::len).max().unwrap_or(0);
        let size_limit = self.size_limit();
        AssignmentCheck {
            min_intersection,
            max_set_size,
            size_limit,
            intersections_ok: min_intersection > self.f,
            sizes_ok: max_set_size <= size_limit,
        }
    }
}

pub(crate) fn sorted_intersection_len(a: &[NodeId], b: &[NodeId]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// Uniform b-subset of `0..n` without replacement, sorted.
pub fn sample_uniform_clerk_set<R: Rng + ?Sized>(
    n: usize,
    b: usize,
    rng: &mut R,
) -> Result<Vec<NodeId>, InfeasibleError> {
    if b > n {
        return Err(InfeasibleError::SetTooLarge { size: b, pool: n });
    }
    let mut set: Vec<NodeId> = index::sample(rng, n, b).into_iter().map(NodeId::from).collect();
    set.sort_unstable();
    Ok(set)
}

/// Hash iterated to build coin-specific clerk spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaceHash {
    /// SHA-256: `h^1 = H(cid)`, `h^{i+1} = H(h^i)` on the raw 32-byte digest.
    #[default]
    Sha256,
}

impl SpaceHash {
    fn digest(self, input: &[u8]) -> [u8; 32] {
        match self {
            SpaceHash::Sha256 => Sha256::digest(input).into(),
        }
    }
}

/// Digest read as a big-endian integer, reduced mod n.
pub fn digest_residue(digest: &[u8], n: usize) -> usize {
    let n = n as u128;
    digest.iter().fold(0u128, |acc, &b| (acc * 256 + b as u128) % n) as usize
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoinClerkSpace {
    pub cid: CoinId,
    pub n: usize,
    /// The first β distinct residues `h^i(cid) mod n`, in discovery order.
    pub members: Vec<NodeId>,
}

impl CoinClerkSpace {
    pub fn beta(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.members.contains(&node)
    }
}

pub fn build_coin_space(
    cid: CoinId,
    n: usize,
    beta: usize,
    hash: SpaceHash,
) -> Result<CoinClerkSpace, InfeasibleError> {
    if n == 0 {
        return Err(InfeasibleError::Parameters("n must be positive".into()));
    }
    if beta > n {
        return Err(InfeasibleError::SetTooLarge { size: beta, pool: n });
    }
    let mut members = Vec::with_capacity(beta);
    let mut seen_residue = vec![false; n];
    let mut seen_state = HashSet::new();
    let mut state = hash.digest(cid.as_bytes());
    while members.len() < beta {
        if !seen_state.insert(state) {
            return Err(InfeasibleError::HashCycle { distinct: members.len(), wanted: beta });
        }
        let res = digest_residue(&state, n);
        if !seen_residue[res] {
            seen_residue[res] = true;
            members.push(NodeId::from(res));
        }
        state = hash.digest(&state);
    }
    Ok(CoinClerkSpace { cid, n, members })
}

/// Uniform b-subset of a clerk space, sorted by node id.
pub fn sample_coin_subset<R: Rng + ?Sized>(
    space: &CoinClerkSpace,
    b: usize,
    rng: &mut R,
) -> Result<Vec<NodeId>, InfeasibleError> {
    let beta = space.beta();
    if b > beta {
        return Err(InfeasibleError::SetTooLarge { size: b, pool: beta });
    }
    let mut set: Vec<NodeId> = index::sample(rng, beta, b).into_iter().map(|i| space.members[i]).collect();
    set.sort_unstable();
    Ok(set)
}
