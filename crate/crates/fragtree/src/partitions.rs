//! Mass partitions, finite set partitions, paintbox sampling, and the
//! partition metric.
//!
//! A [`MassPartition`] is a nonincreasing sequence of masses in `[0, 1]`
//! summing to at most 1; the deficit is *dust*. A [`SetPartition`] is a
//! partition of a finite ground set of labels with blocks ordered by least
//! element. [`paintbox_sample`] turns a mass partition into an exchangeable
//! random set partition by dropping iid uniform marks into the mass
//! intervals; marks landing in the dust become singletons.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `Σ parts ≤ 1` when validating a mass partition; absorbs
/// accumulated floating error from atom generators.
pub const MASS_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum PartitionError {
    #[error("mass partition entry {0} is negative")]
    NegativeEntry(f64),
    #[error("mass partition entry {0} exceeds one")]
    EntryAboveOne(f64),
    #[error("mass partition entries sum to {0}, which exceeds one")]
    SumExceedsOne(f64),
    #[error("label {0} is not in the ground set")]
    LabelOutOfRange(u32),
    #[error("set partitions have different ground sets")]
    GroundMismatch,
    #[error("blocks are not disjoint or contain repeated labels")]
    InvalidBlocks,
    #[error("ground set must be nonempty")]
    EmptyGround,
}

/// An element of S↓: a nonincreasing sequence of masses with sum ≤ 1.
///
/// Only the nonzero prefix is stored; trailing zeros are normalized away.
/// The empty partition is the pure-dust (kill) element `(0, 0, …)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MassPartition {
    parts: Vec<f64>,
}

impl MassPartition {
    /// Validates and normalizes a raw sequence: sorts nonincreasing, drops
    /// zeros, checks entry range and the sum constraint.
    pub fn new(raw: &[f64]) -> Result<Self, PartitionError> {
        let mut parts: Vec<f64> = Vec::with_capacity(raw.len());
        let mut sum = 0.0;
        for &x in raw {
            if x < 0.0 {
                return Err(PartitionError::NegativeEntry(x));
            }
            if x > 1.0 {
                return Err(PartitionError::EntryAboveOne(x));
            }
            if x > 0.0 {
                parts.push(x);
                sum += x;
            }
        }
        if sum > 1.0 + MASS_SUM_TOLERANCE {
            return Err(PartitionError::SumExceedsOne(sum));
        }
        parts.sort_by(|a, b| b.partial_cmp(a).expect("entries are finite"));
        Ok(Self { parts })
    }

    /// The pure-dust element `(0, 0, …)`.
    pub fn empty() -> Self {
        Self { parts: Vec::new() }
    }

    /// Nonzero entries, sorted nonincreasing.
    pub fn parts(&self) -> &[f64] {
        &self.parts
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// Largest entry, or 0 for the pure-dust element.
    pub fn s1(&self) -> f64 {
        self.parts.first().copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.parts.iter().sum()
    }

    /// Dust mass `s₀ = 1 − Σ sᵢ` (clamped at 0 against rounding).
    pub fn dust(&self) -> f64 {
        (1.0 - self.total()).max(0.0)
    }

    /// `Σᵢ sᵢ^p` over the nonzero entries, with the convention `0^p = 0`
    /// for every `p` (zero entries are never stored, so they contribute
    /// nothing even for `p ≤ 0`).
    pub fn sum_pow(&self, p: f64) -> f64 {
        self.parts.iter().map(|s| s.powf(p)).sum()
    }

    /// True when `Σ sᵢ = 1` up to the validation tolerance (no dust).
    pub fn is_conservative(&self) -> bool {
        self.dust() <= MASS_SUM_TOLERANCE
    }
}

impl TryFrom<Vec<f64>> for MassPartition {
    type Error = PartitionError;
    fn try_from(raw: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(&raw)
    }
}

impl From<MassPartition> for Vec<f64> {
    fn from(s: MassPartition) -> Vec<f64> {
        s.parts
    }
}

/// Validates a raw sequence of masses into a [`MassPartition`].
pub fn validate_mass_partition(raw: &[f64]) -> Result<MassPartition, PartitionError> {
    MassPartition::new(raw)
}

/// A partition of a finite ground set of labels, with blocks ordered by
/// increasing smallest element.
///
/// The ground set is usually `{1, …, n}` but restriction produces
/// partitions of arbitrary label subsets (original labels are kept).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetPartition {
    /// Sorted, distinct labels.
    ground: Vec<u32>,
    /// Block index (in least-element order) per ground position.
    block_of: Vec<usize>,
    num_blocks: usize,
}

/// JSON shape for set partitions: `{"n": int, "blocks": [[labels…]]}`.
#[derive(Serialize, Deserialize)]
struct SetPartitionJson {
    n: usize,
    blocks: Vec<Vec<u32>>,
}

impl SetPartition {
    /// Canonicalizes raw block ids per (sorted) ground position: blocks are
    /// renumbered in order of first appearance, which is exactly the
    /// least-element order.
    fn canonicalize(ground: Vec<u32>, raw_ids: &[usize]) -> Self {
        let mut remap: Vec<Option<usize>> = vec![None; raw_ids.len()];
        let mut block_of = Vec::with_capacity(raw_ids.len());
        let mut next = 0;
        for &raw in raw_ids {
            let id = *remap[raw].get_or_insert_with(|| {
                let id = next;
                next += 1;
                id
            });
            block_of.push(id);
        }
        Self {
            ground,
            block_of,
            num_blocks: next,
        }
    }

    /// The all-singletons partition of `{1, …, n}`.
    pub fn singletons(n: usize) -> Self {
        Self {
            ground: (1..=n as u32).collect(),
            block_of: (0..n).collect(),
            num_blocks: n,
        }
    }

    /// The single-block partition of `{1, …, n}`.
    pub fn single_block(n: usize) -> Self {
        Self {
            ground: (1..=n as u32).collect(),
            block_of: vec![0; n],
            num_blocks: if n == 0 { 0 } else { 1 },
        }
    }

    /// Builds a partition from explicit blocks; the ground set is their
    /// union. Blocks may be given in any order.
    pub fn from_blocks(blocks: &[Vec<u32>]) -> Result<Self, PartitionError> {
        let mut pairs: Vec<(u32, usize)> = Vec::new();
        for (b, block) in blocks.iter().enumerate() {
            for &label in block {
                pairs.push((label, b));
            }
        }
        if pairs.is_empty() {
            return Err(PartitionError::EmptyGround);
        }
        pairs.sort_unstable();
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(PartitionError::InvalidBlocks);
        }
        let ground: Vec<u32> = pairs.iter().map(|&(l, _)| l).collect();
        let raw_ids: Vec<usize> = pairs.iter().map(|&(_, b)| b).collect();
        Ok(Self::canonicalize(ground, &raw_ids))
    }

    /// Ground-set size.
    pub fn ground_size(&self) -> usize {
        self.ground.len()
    }

    /// The sorted ground labels.
    pub fn ground(&self) -> &[u32] {
        &self.ground
    }

    pub fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    fn position(&self, label: u32) -> Result<usize, PartitionError> {
        self.ground
            .binary_search(&label)
            .map_err(|_| PartitionError::LabelOutOfRange(label))
    }

    /// Index (in least-element order) of the block containing `label`.
    pub fn block_index_of(&self, label: u32) -> Result<usize, PartitionError> {
        Ok(self.block_of[self.position(label)?])
    }

    pub fn same_block(&self, i: u32, j: u32) -> Result<bool, PartitionError> {
        Ok(self.block_index_of(i)? == self.block_index_of(j)?)
    }

    /// Blocks in least-element order, labels ascending within each block.
    pub fn blocks(&self) -> Vec<Vec<u32>> {
        let mut blocks: Vec<Vec<u32>> = vec![Vec::new(); self.num_blocks];
        for (pos, &b) in self.block_of.iter().enumerate() {
            blocks[b].push(self.ground[pos]);
        }
        blocks
    }

    /// Restriction to a label subset `B` (original labels kept, blocks
    /// reindexed by least element).
    pub fn restrict(&self, b: &[u32]) -> Result<SetPartition, PartitionError> {
        let mut labels: Vec<u32> = b.to_vec();
        labels.sort_unstable();
        labels.dedup();
        if labels.is_empty() {
            return Err(PartitionError::EmptyGround);
        }
        let mut raw_ids = Vec::with_capacity(labels.len());
        for &label in &labels {
            raw_ids.push(self.block_of[self.position(label)?]);
        }
        Ok(Self::canonicalize(labels, &raw_ids))
    }

    /// Coarsest partition finer than both: `i ∼ j` iff `i ∼ j` in both.
    pub fn intersect(&self, other: &SetPartition) -> Result<SetPartition, PartitionError> {
        if self.ground != other.ground {
            return Err(PartitionError::GroundMismatch);
        }
        // Pair of block ids → joint id, in order of first appearance.
        let mut seen: Vec<(usize, usize, usize)> = Vec::new();
        let mut raw_ids = Vec::with_capacity(self.ground.len());
        for pos in 0..self.ground.len() {
            let key = (self.block_of[pos], other.block_of[pos]);
            let id = match seen.iter().find(|&&(a, b, _)| (a, b) == key) {
                Some(&(_, _, id)) => id,
                None => {
                    let id = seen.len();
                    seen.push((key.0, key.1, id));
                    id
                }
            };
            raw_ids.push(id);
        }
        Ok(Self::canonicalize(self.ground.clone(), &raw_ids))
    }

    /// `2^{−n(π, π′)}` where `n(π, π′)` is the largest prefix length of the
    /// (sorted) ground set on which the restrictions agree; exactly 0 when
    /// the partitions agree on the whole ground set.
    pub fn distance(&self, other: &SetPartition) -> Result<f64, PartitionError> {
        if self.ground != other.ground {
            return Err(PartitionError::GroundMismatch);
        }
        // Restrictions to a prefix agree iff the partial block-id pairing
        // stays a bijection while scanning positions in ground order.
        let mut fwd: Vec<Option<usize>> = vec![None; self.num_blocks];
        let mut bwd: Vec<Option<usize>> = vec![None; other.num_blocks];
        for pos in 0..self.ground.len() {
            let (a, b) = (self.block_of[pos], other.block_of[pos]);
            match (fwd[a], bwd[b]) {
                (None, None) => {
                    fwd[a] = Some(b);
                    bwd[b] = Some(a);
                }
                (Some(b2), Some(a2)) if b2 == b && a2 == a => {}
                _ => return Ok(0.5f64.powi(pos as i32)),
            }
        }
        Ok(0.0)
    }

    /// Empirical asymptotic-frequency estimate `#(π_(i)) / n` of the block
    /// containing `label` on the finite ground set.
    pub fn block_frequency_estimate(&self, label: u32) -> Result<f64, PartitionError> {
        let id = self.block_index_of(label)?;
        let size = self.block_of.iter().filter(|&&b| b == id).count();
        Ok(size as f64 / self.ground.len() as f64)
    }

    /// JSON export: `{"n": int, "blocks": [[labels…]]}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(SetPartitionJson {
            n: self.ground.len(),
            blocks: self.blocks(),
        })
        .expect("set partition serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, PartitionError> {
        let parsed: SetPartitionJson =
            serde_json::from_value(value.clone()).map_err(|_| PartitionError::InvalidBlocks)?;
        let partition = Self::from_blocks(&parsed.blocks)?;
        if partition.ground_size() != parsed.n {
            return Err(PartitionError::InvalidBlocks);
        }
        Ok(partition)
    }
}

/// Kingman's paintbox: drops one uniform mark per label into the intervals
/// of `s`; labels whose marks share an interval share a block, dust marks
/// become singletons.
pub fn paintbox_sample<R: Rng + ?Sized>(s: &MassPartition, n: usize, rng: &mut R) -> SetPartition {
    let assignment = paintbox_assignment(s, n, rng);
    set_partition_from_assignment(&assignment)
}

/// Per-label paintbox outcome: the entry index of `s` hit by the label's
/// uniform mark, or `None` for dust.
pub fn paintbox_assignment<R: Rng + ?Sized>(
    s: &MassPartition,
    n: usize,
    rng: &mut R,
) -> Vec<Option<usize>> {
    let mut cumulative = Vec::with_capacity(s.len());
    let mut acc = 0.0;
    for &part in s.parts() {
        acc += part;
        cumulative.push(acc);
    }
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            // First entry whose cumulative sum exceeds the mark.
            match cumulative.iter().position(|&c| u < c) {
                Some(idx) => Some(idx),
                None => None, // dust
            }
        })
        .collect()
}

/// Builds the set partition of `{1, …, n}` grouping labels with equal
/// `Some(entry)` assignments; `None` (dust) labels become singletons.
pub fn set_partition_from_assignment(assignment: &[Option<usize>]) -> SetPartition {
    let n = assignment.len();
    // Raw ids: entry index for painted labels, unique ids for dust labels.
    let offset = assignment.iter().flatten().max().map_or(0, |&m| m + 1);
    let mut dust_seen = 0;
    let raw_ids: Vec<usize> = assignment
        .iter()
        .map(|a| match a {
            Some(idx) => *idx,
            None => {
                dust_seen += 1;
                offset + dust_seen - 1
            }
        })
        .collect();
    SetPartition::canonicalize((1..=n as u32).collect(), &raw_ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn validate_sorts_and_computes_dust() {
        let s = validate_mass_partition(&[0.3, 0.5]).unwrap();
        assert_eq!(s.parts(), &[0.5, 0.3]);
        assert!((s.dust() - 0.2).abs() < 1e-15, "dust should be 0.2");
    }

    #[test]
    fn validate_identity_partition() {
        let s = validate_mass_partition(&[1.0]).unwrap();
        assert_eq!(s.parts(), &[1.0]);
        assert_eq!(s.dust(), 0.0);
        assert!(s.is_conservative());
    }

    #[test]
    fn validate_drops_zeros_and_rejects_bad_input() {
        let s = validate_mass_partition(&[0.5, 0.0, 0.3, 0.0]).unwrap();
        assert_eq!(s.len(), 2);
        assert!(matches!(
            validate_mass_partition(&[-0.1]),
            Err(PartitionError::NegativeEntry(_))
        ));
        assert!(matches!(
            validate_mass_partition(&[1.2]),
            Err(PartitionError::EntryAboveOne(_))
        ));
        assert!(matches!(
            validate_mass_partition(&[0.7, 0.7]),
            Err(PartitionError::SumExceedsOne(_))
        ));
    }

    #[test]
    fn paintbox_single_entry_gives_single_block() {
        let s = validate_mass_partition(&[1.0]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..20 {
            let pi = paintbox_sample(&s, 5, &mut rng);
            assert_eq!(pi.num_blocks(), 1, "mass 1 entry paints all labels");
        }
    }

    #[test]
    fn paintbox_all_dust_gives_singletons() {
        let s = MassPartition::empty();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..20 {
            let pi = paintbox_sample(&s, 6, &mut rng);
            assert_eq!(pi.num_blocks(), 6, "dust marks are singletons");
        }
    }

    #[test]
    fn paintbox_pair_merge_probability_matches_sum_of_squares() {
        // Oracle: P(1 ∼ 2) = Σ sᵢ² = 0.5 for s = (0.5, 0.5).
        let s = validate_mass_partition(&[0.5, 0.5]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let reps = 100_000;
        let merged = (0..reps)
            .filter(|_| {
                paintbox_sample(&s, 2, &mut rng)
                    .same_block(1, 2)
                    .unwrap()
            })
            .count();
        let freq = merged as f64 / reps as f64;
        // 5 sigma band: sqrt(0.25/1e5) ≈ 0.00158.
        assert!(
            (freq - 0.5).abs() < 0.008,
            "merge frequency {freq} should be near 0.5"
        );
    }

    #[test]
    fn restrict_keeps_original_labels() {
        let pi = SetPartition::from_blocks(&[vec![1, 3], vec![2]]).unwrap();
        let restricted = pi.restrict(&[1, 2]).unwrap();
        assert_eq!(restricted.blocks(), vec![vec![1], vec![2]]);

        let whole = SetPartition::single_block(3);
        let sub = whole.restrict(&[2, 3]).unwrap();
        assert_eq!(sub.blocks(), vec![vec![2, 3]]);

        // restrict to the full ground set is the identity.
        assert_eq!(pi.restrict(&[1, 2, 3]).unwrap(), pi);
    }

    #[test]
    fn intersect_identity_and_absorbing_elements() {
        let pi = SetPartition::from_blocks(&[vec![1, 2], vec![3]]).unwrap();
        let one = SetPartition::single_block(3);
        let sing = SetPartition::singletons(3);
        assert_eq!(pi.intersect(&one).unwrap(), pi);
        assert_eq!(pi.intersect(&sing).unwrap(), sing);

        let psi = SetPartition::from_blocks(&[vec![1, 3], vec![2]]).unwrap();
        assert_eq!(pi.intersect(&psi).unwrap(), SetPartition::singletons(3));
    }

    #[test]
    fn distance_prefix_agreement() {
        let pi = SetPartition::from_blocks(&[vec![1, 2, 3, 4]]).unwrap();
        // Agree on [3], differ at 4.
        let psi = SetPartition::from_blocks(&[vec![1, 2, 3], vec![4]]).unwrap();
        assert_eq!(pi.distance(&psi).unwrap(), 0.125);
        assert_eq!(pi.distance(&pi).unwrap(), 0.0);
        // Differ at label 2 (first possible disagreement).
        let rho = SetPartition::from_blocks(&[vec![1], vec![2, 3, 4]]).unwrap();
        assert_eq!(pi.distance(&rho).unwrap(), 0.5);
    }

    #[test]
    fn block_frequency_estimates() {
        let one = SetPartition::single_block(10);
        assert_eq!(one.block_frequency_estimate(4).unwrap(), 1.0);
        let sing = SetPartition::singletons(10);
        assert_eq!(sing.block_frequency_estimate(4).unwrap(), 0.1);
    }

    #[test]
    fn block_frequency_concentrates_on_size_biased_entry() {
        // Oracle: |π_(1)| for s = (0.5, 0.5) is 0.5; binomial concentration
        // keeps the n = 10⁴ estimate within 0.02 with probability ≥ 0.95.
        let s = validate_mass_partition(&[0.5, 0.5]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let pi = paintbox_sample(&s, 10_000, &mut rng);
        let est = pi.block_frequency_estimate(1).unwrap();
        assert!(
            (est - 0.5).abs() < 0.02,
            "frequency estimate {est} should be near 0.5"
        );
    }

    #[test]
    fn json_round_trip() {
        let pi = SetPartition::from_blocks(&[vec![1, 3], vec![2]]).unwrap();
        let json = pi.to_json();
        assert_eq!(json["n"], 3);
        assert_eq!(SetPartition::from_json(&json).unwrap(), pi);
    }
}
