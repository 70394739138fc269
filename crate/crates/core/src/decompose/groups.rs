use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature index groups over a coordinate space of size `dim`. Each group is
/// stored sorted ascending with 0-based coordinates. Groups may overlap and
/// need not cover the space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexGroups {
    dim: usize,
    groups: Vec<Vec<u32>>,
}

impl IndexGroups {
    pub fn new(dim: usize, groups: Vec<Vec<u32>>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::Invalid("at least one index group is required".into()));
        }
        let mut groups = groups;
        for (g, group) in groups.iter_mut().enumerate() {
            if group.is_empty() {
                return Err(Error::Invalid(format!("index group {g} is empty")));
            }
            group.sort_unstable();
            if group.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Invalid(format!("index group {g} has duplicates")));
            }
            if *group.last().unwrap() as usize >= dim {
                return Err(Error::Invalid(format!(
                    "index group {g} exceeds dimension {dim}"
                )));
            }
        }
        Ok(Self { dim, groups })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn groups(&self) -> &[Vec<u32>] {
        &self.groups
    }

    pub fn group(&self, g: usize) -> &[u32] {
        &self.groups[g]
    }

    /// True when the groups are pairwise disjoint and cover every coordinate.
    pub fn is_partition(&self) -> bool {
        let mut seen = vec![false; self.dim];
        for &i in self.groups.iter().flatten() {
            if std::mem::replace(&mut seen[i as usize], true) {
                return false;
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Coordinate → `(group, position)` lookup in CSR layout.
    pub(crate) fn inverse(&self) -> GroupLookup {
        let mut counts = vec![0usize; self.dim + 1];
        for &i in self.groups.iter().flatten() {
            counts[i as usize + 1] += 1;
        }
        for k in 1..counts.len() {
            counts[k] += counts[k - 1];
        }
        let mut fill = counts.clone();
        let mut entries = vec![(0u32, 0u32); counts[self.dim]];
        for (g, group) in self.groups.iter().enumerate() {
            for (pos, &i) in group.iter().enumerate() {
                let slot = &mut fill[i as usize];
                entries[*slot] = (g as u32, pos as u32);
                *slot += 1;
            }
        }
        GroupLookup {
            offsets: counts,
            entries,
        }
    }
}

pub(crate) struct GroupLookup {
    offsets: Vec<usize>,
    entries: Vec<(u32, u32)>,
}

impl GroupLookup {
    pub(crate) fn targets(&self, coord: usize) -> &[(u32, u32)] {
        &self.entries[self.offsets[coord]..self.offsets[coord + 1]]
    }
}

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seeded grouping: coordinates are shuffled once and groups are cut as
/// consecutive runs of `group_size`. When the shuffle runs out a fresh one is
/// drawn, which makes later groups overlap earlier ones. A coordinate already
/// in the group being filled is deferred to the next group.
pub fn seeded_groups(
    dim: usize,
    n_groups: usize,
    group_size: usize,
    seed: u64,
) -> Result<IndexGroups> {
    if n_groups == 0 || group_size == 0 {
        return Err(Error::Invalid(
            "group count and group size must be positive".into(),
        ));
    }
    if group_size > dim {
        return Err(Error::Invalid(format!(
            "group size {group_size} exceeds feature count {dim}"
        )));
    }
    let mut rng = rng_for(seed, 0);
    let mut pool: VecDeque<u32> = VecDeque::new();
    let mut in_group = vec![false; dim];
    let mut groups = Vec::with_capacity(n_groups);
    for _ in 0..n_groups {
        let mut group = Vec::with_capacity(group_size);
        let mut deferred = Vec::new();
        while group.len() < group_size {
            let i = match pool.pop_front() {
                Some(i) => i,
                None => {
                    let mut fresh: Vec<u32> = (0..dim as u32).collect();
                    fresh.shuffle(&mut rng);
                    pool.extend(fresh);
                    continue;
                }
            };
            if in_group[i as usize] {
                deferred.push(i);
            } else {
                in_group[i as usize] = true;
                group.push(i);
            }
        }
        for &i in &group {
            in_group[i as usize] = false;
        }
        for i in deferred.into_iter().rev() {
            pool.push_front(i);
        }
        groups.push(group);
    }
    IndexGroups::new(dim, groups)
}

/// Seeded disjoint partition into `n_blocks` near-equal blocks (the first
/// `dim % n_blocks` blocks get one extra coordinate).
pub fn seeded_partition(dim: usize, n_blocks: usize, seed: u64) -> Result<IndexGroups> {
    if n_blocks == 0 || n_blocks > dim {
        return Err(Error::Invalid(format!(
            "cannot partition {dim} features into {n_blocks} blocks"
        )));
    }
    let mut order: Vec<u32> = (0..dim as u32).collect();
    order.shuffle(&mut rng_for(seed, 0));
    let base = dim / n_blocks;
    let extra = dim % n_blocks;
    let mut groups = Vec::with_capacity(n_blocks);
    let mut start = 0;
    for b in 0..n_blocks {
        let len = base + usize::from(b < extra);
        groups.push(order[start..start + len].to_vec());
        start += len;
    }
    IndexGroups::new(dim, groups)
}

/// Resizes block-aligned groups to `group_size`: longer blocks keep their
/// first `group_size` coordinates, shorter ones are topped up with a seeded
/// draw of coordinates from outside the block.
pub fn fit_blocks_to_size(blocks: &IndexGroups, group_size: usize, seed: u64) -> Result<IndexGroups> {
    let dim = blocks.dim();
    if group_size == 0 || group_size > dim {
        return Err(Error::Invalid(format!(
            "group size {group_size} not in [1, {dim}]"
        )));
    }
    let groups = blocks
        .groups()
        .iter()
        .enumerate()
        .map(|(b, block)| {
            if block.len() >= group_size {
                return block[..group_size].to_vec();
            }
            let mut inside = vec![false; dim];
            block.iter().for_each(|&i| inside[i as usize] = true);
            let mut outside: Vec<u32> = (0..dim as u32).filter(|&i| !inside[i as usize]).collect();
            outside.shuffle(&mut rng_for(seed, b as u64 + 1));
            let mut g = block.clone();
            g.extend_from_slice(&outside[..group_size - block.len()]);
            g
        })
        .collect();
    IndexGroups::new(dim, groups)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_cover_is_a_partition() {
        let g = seeded_groups(4, 2, 2, 17).unwrap();
        assert!(g.is_partition());
        assert_eq!(g.groups().iter().map(Vec::len).collect::<Vec<_>>(), vec![2, 2]);
    }

    #[test]
    fn determinism() {
        assert_eq!(
            seeded_groups(100, 7, 30, 5).unwrap(),
            seeded_groups(100, 7, 30, 5).unwrap()
        );
        assert_ne!(
            seeded_groups(100, 7, 30, 5).unwrap(),
            seeded_groups(100, 7, 30, 6).unwrap()
        );
    }

    #[test]
    fn oversubscribed_groups_overlap_without_internal_duplicates() {
        // 4 × 40 over 54 coordinates, as in the covtype plan
        let g = seeded_groups(54, 4, 40, 3).unwrap();
        assert_eq!(g.len(), 4);
        for group in g.groups() {
            assert_eq!(group.len(), 40);
        }
        let total: usize = g.groups().iter().map(Vec::len).sum();
        assert!(total > 54);
        assert!(!g.is_partition());
    }

    #[test]
    fn half_subscription_covers_twice() {
        // 4 groups of M/2: every coordinate appears exactly twice.
        let dim = 1000;
        let g = seeded_groups(dim, 4, dim / 2, 9).unwrap();
        let mut count = vec![0; dim];
        g.groups().iter().flatten().for_each(|&i| count[i as usize] += 1);
        assert!(count.iter().all(|&c| c == 2));
    }

    #[test]
    fn group_size_above_dim_is_rejected() {
        assert!(seeded_groups(3, 1, 4, 0).is_err());
    }

    #[test]
    fn partition_blocks_are_near_equal() {
        let p = seeded_partition(54, 4, 1).unwrap();
        assert!(p.is_partition());
        let sizes: Vec<_> = p.groups().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![14, 14, 13, 13]);
    }

    #[test]
    fn resized_blocks_contain_their_block() {
        let p = seeded_partition(54, 4, 1).unwrap();
        let g = fit_blocks_to_size(&p, 27, 2).unwrap();
        for (block, group) in p.groups().iter().zip(g.groups()) {
            assert_eq!(group.len(), 27);
            assert!(block.iter().all(|i| group.contains(i)));
        }
    }

    #[test]
    fn lookup_finds_overlapping_memberships() {
        let g = IndexGroups::new(3, vec![vec![0, 2], vec![2, 1]]).unwrap();
        let inv = g.inverse();
        assert_eq!(inv.targets(2), &[(0, 1), (1, 1)]);
        assert_eq!(inv.targets(1), &[(1, 0)]);
    }
}
