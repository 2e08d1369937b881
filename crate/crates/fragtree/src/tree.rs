//! Genealogy trees of fragmentation paths.
//!
//! A path restricted to `n` labels induces a rooted real tree: label `i`'s
//! lineage is a segment from the root (height 0) to its death point `Q_i`
//! at height `D_i`, and the lineages of `i` and `j` coincide exactly up to
//! the split height `D_{i,j}`, so `d(Q_i, Q_j) = D_i + D_j − 2·D_{i,j}`.
//! The tree carries the natural mass function `m(i, t) = |π_(i)(t⁻)|`
//! (exact left-limit block masses from the path), pre-ball measure queries
//! `μ(B(x, C)) = m(x) − Σ_{y∈C} m(y)`, an isometric sparse ℓ¹ embedding of
//! the death points, and resampling of partition paths from the empirical
//! measure on death points.

use crate::fragmentation::{EventKind, FragmentationPath, S_INDEX_DUST};
use crate::partitions::SetPartition;
use rand::Rng;
use serde_json::json;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("labels {0:?} have no observed death time (horizon too short)")]
    InfiniteDeathTime(Vec<u32>),
    #[error("trees are not restrictions of the same path to nested label sets")]
    NotNested,
    #[error("point is not on the tree")]
    PointNotInTree,
    #[error("cutset is not a valid pre-cutset above the base point")]
    InvalidPreCutset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Root,
    Branch,
    Death,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointClass {
    /// Strictly below the label's death height.
    Skeleton,
    /// Death with positive left-limit mass: a sudden shatter (kill or
    /// full-dust atom, or an erosion detachment).
    DeadLeaf,
    /// Death reached by mass decreasing to the floor (the finite-simulation
    /// stand-in for mass vanishing continuously).
    ProperLeaf,
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub height: f64,
    pub kind: NodeKind,
    /// The dying label, for death nodes.
    pub label: Option<u32>,
    /// `|π(t⁻)|` of the block through this node, exact from the path.
    pub mass_left_limit: f64,
}

/// Immutable genealogy tree of a path restricted to `{1, …, n}`; all
/// queries are read-only.
#[derive(Debug, Clone)]
pub struct GenealogyTree {
    pub nodes: Vec<TreeNode>,
    /// Death node id per label (index 0 = label 1).
    death_node: Vec<usize>,
    /// `D_i` per label.
    death: Vec<f64>,
    /// How each label died, for leaf classification.
    death_class: Vec<PointClass>,
    depth: Vec<usize>,
    path: FragmentationPath,
    pub n: u32,
}

/// One sparse ℓ¹ coordinate vector: `(coordinate index, value)` pairs with
/// 1-based coordinates, ascending, zero entries omitted.
pub type L1Vector = Vec<(u32, f64)>;

/// Builds the genealogy tree `T_[n]` of a path. Every label must have an
/// observed death time; simulate with a `UntilDead` horizon (or a kill
/// component) to guarantee this.
pub fn build_tree(path: &FragmentationPath) -> Result<GenealogyTree, TreeError> {
    let n = path.n as usize;
    let death = path.death_times();
    let undead: Vec<u32> = (0..n)
        .filter(|&i| death[i].is_infinite())
        .map(|i| i as u32 + 1)
        .collect();
    if !undead.is_empty() {
        return Err(TreeError::InfiniteDeathTime(undead));
    }

    let mut nodes = vec![TreeNode {
        id: 0,
        parent: None,
        height: 0.0,
        kind: NodeKind::Root,
        label: None,
        mass_left_limit: 1.0,
    }];
    let mut death_node = vec![usize::MAX; n];
    let mut death_class = vec![PointClass::Skeleton; n];
    // Attachment node of each live block, keyed by its least label.
    let mut attach: HashMap<u32, usize> = HashMap::new();
    attach.insert(1, 0);

    for ev in &path.events {
        let key = ev.block[0];
        let parent = *attach.get(&key).expect("block seen before its events");
        match ev.kind {
            EventKind::MassJump => {}
            EventKind::FloorStop => {
                attach.remove(&key);
                let hang = if ev.block.len() == 1 {
                    parent
                } else {
                    nodes.push(TreeNode {
                        id: nodes.len(),
                        parent: Some(parent),
                        height: ev.t,
                        kind: NodeKind::Branch,
                        label: None,
                        mass_left_limit: ev.block_mass,
                    });
                    nodes.len() - 1
                };
                for &l in &ev.block {
                    nodes.push(TreeNode {
                        id: nodes.len(),
                        parent: Some(hang),
                        height: ev.t,
                        kind: NodeKind::Death,
                        label: Some(l),
                        mass_left_limit: ev.block_mass,
                    });
                    death_node[(l - 1) as usize] = nodes.len() - 1;
                    death_class[(l - 1) as usize] = PointClass::ProperLeaf;
                }
            }
            EventKind::Split | EventKind::Erosion => {
                let surviving: Vec<_> = ev
                    .children
                    .iter()
                    .filter(|ch| ch.s_index != S_INDEX_DUST)
                    .collect();
                let dust_labels: Vec<u32> = ev
                    .children
                    .iter()
                    .filter(|ch| ch.s_index == S_INDEX_DUST)
                    .flat_map(|ch| ch.labels.iter().copied())
                    .collect();
                if dust_labels.is_empty() && surviving.len() < 2 {
                    continue;
                }
                attach.remove(&key);
                let hang = if surviving.len() + dust_labels.len() > 1 {
                    nodes.push(TreeNode {
                        id: nodes.len(),
                        parent: Some(parent),
                        height: ev.t,
                        kind: NodeKind::Branch,
                        label: None,
                        mass_left_limit: ev.block_mass,
                    });
                    nodes.len() - 1
                } else {
                    parent
                };
                for &l in &dust_labels {
                    nodes.push(TreeNode {
                        id: nodes.len(),
                        parent: Some(hang),
                        height: ev.t,
                        kind: NodeKind::Death,
                        label: Some(l),
                        mass_left_limit: ev.block_mass,
                    });
                    death_node[(l - 1) as usize] = nodes.len() - 1;
                    death_class[(l - 1) as usize] = PointClass::DeadLeaf;
                }
                for ch in surviving {
                    attach.insert(ch.labels[0], hang);
                }
            }
        }
    }
    assert!(
        death_node.iter().all(|&id| id != usize::MAX),
        "every label with a finite death time gets a death node"
    );

    let mut depth = vec![0usize; nodes.len()];
    for node in nodes.iter().skip(1) {
        depth[node.id] = depth[node.parent.expect("non-root has a parent")] + 1;
    }

    Ok(GenealogyTree {
        nodes,
        death_node,
        death,
        death_class,
        depth,
        path: path.clone(),
        n: path.n,
    })
}

impl GenealogyTree {
    fn check_label(&self, label: u32) -> Result<usize, TreeError> {
        if label == 0 || label > self.n {
            return Err(TreeError::PointNotInTree);
        }
        Ok((label - 1) as usize)
    }

    /// `D_i = ht(Q_i)`.
    pub fn death_height(&self, label: u32) -> Result<f64, TreeError> {
        Ok(self.death[self.check_label(label)?])
    }

    /// Lowest common ancestor of two nodes.
    fn lca(&self, mut a: usize, mut b: usize) -> usize {
        while self.depth[a] > self.depth[b] {
            a = self.nodes[a].parent.unwrap();
        }
        while self.depth[b] > self.depth[a] {
            b = self.nodes[b].parent.unwrap();
        }
        while a != b {
            a = self.nodes[a].parent.unwrap();
            b = self.nodes[b].parent.unwrap();
        }
        a
    }

    /// Split height `D_{i,j} = ht(Q_i ∧ Q_j)`; `D_{i,i} = D_i`.
    pub fn split_height(&self, i: u32, j: u32) -> Result<f64, TreeError> {
        let (a, b) = (self.check_label(i)?, self.check_label(j)?);
        if i == j {
            return Ok(self.death[a]);
        }
        Ok(self.nodes[self.lca(self.death_node[a], self.death_node[b])].height)
    }

    /// Tree distance `d(Q_i, Q_j) = D_i + D_j − 2·D_{i,j}`.
    pub fn distance(&self, i: u32, j: u32) -> Result<f64, TreeError> {
        let d = self.split_height(i, j)?;
        Ok(self.death_height(i)? + self.death_height(j)? - 2.0 * d)
    }

    /// Sparse stick-breaking coordinates: `Q_i^j` is the total height for
    /// which `j` was the least label of `i`'s block, so `Q_i^1 = D_{1,i}`,
    /// `Q_i^j = max_{k≤j} D_{k,i} − max_{k<j} D_{k,i}` for `1 < j < i`, and
    /// `Q_i^i = D_i − max_{k<i} D_{k,i}`. Then `‖Q_i‖₁ = D_i` and pairwise
    /// ℓ¹ distances equal tree distances.
    pub fn embed_l1(&self) -> Result<Vec<L1Vector>, TreeError> {
        let mut out = Vec::with_capacity(self.n as usize);
        for i in 1..=self.n {
            let mut q: L1Vector = Vec::new();
            let mut running = 0.0;
            for j in 1..i {
                let d = self.split_height(j, i)?;
                if d > running {
                    q.push((j, d - running));
                    running = d;
                }
            }
            let d_i = self.death_height(i)?;
            if d_i > running || q.is_empty() {
                q.push((i, d_i - running));
            }
            out.push(q);
        }
        Ok(out)
    }

    /// Natural mass `m(i, t) = |π_(i)(t⁻)|` at a skeleton point (exact from
    /// the path's tracked masses; defined for `0 ≤ t ≤ D_i`).
    pub fn natural_mass(&self, label: u32, t: f64) -> Result<f64, TreeError> {
        let idx = self.check_label(label)?;
        if t < 0.0 || t > self.death[idx] {
            return Err(TreeError::PointNotInTree);
        }
        let trace = self
            .path
            .tagged_fragment(label)
            .map_err(|_| TreeError::PointNotInTree)?;
        Ok(trace.mass_left_at(t))
    }

    /// Whether point `(j, s)` lies in the subtree above point `(i, t)`:
    /// `t ≤ s` and the lineages agree up to `t`.
    fn is_above(&self, i: u32, t: f64, j: u32, s: f64) -> Result<bool, TreeError> {
        Ok(t <= s && (i == j || t <= self.split_height(i, j)?))
    }

    /// `μ(B(x, C)) = m(x) − Σ_{y∈C} m(y)` for a base point `x = (i, t)` and
    /// a pre-cutset `C` of points above `x`, no two comparable. Clamped to
    /// 0 within 1e−12.
    pub fn preball_mass(
        &self,
        x: (u32, f64),
        cutset: &[(u32, f64)],
    ) -> Result<f64, TreeError> {
        let (i, t) = x;
        let mut total = self.natural_mass(i, t)?;
        for (a, &(j, s)) in cutset.iter().enumerate() {
            if !self.is_above(i, t, j, s)? {
                return Err(TreeError::InvalidPreCutset);
            }
            for &(k, r) in &cutset[a + 1..] {
                let comparable = j == k || self.split_height(j, k)? >= s.min(r);
                if comparable {
                    return Err(TreeError::InvalidPreCutset);
                }
            }
            total -= self.natural_mass(j, s)?;
        }
        if total < -1e-12 {
            return Err(TreeError::InvalidPreCutset);
        }
        Ok(total.max(0.0))
    }

    /// Classifies the point `(i, t)`: skeleton below `D_i`; at `D_i`, dead
    /// leaf (sudden shatter with positive pre-death mass) or proper leaf.
    pub fn classify_point(&self, label: u32, t: f64) -> Result<PointClass, TreeError> {
        let idx = self.check_label(label)?;
        if t < 0.0 || t > self.death[idx] {
            return Err(TreeError::PointNotInTree);
        }
        if t < self.death[idx] {
            Ok(PointClass::Skeleton)
        } else {
            Ok(self.death_class[idx])
        }
    }

    /// Empirical subtree mass `μ_[n](T_{(i,t)})`: the fraction of death
    /// points above the point.
    pub fn empirical_subtree_mass(&self, label: u32, t: f64) -> Result<f64, TreeError> {
        let idx = self.check_label(label)?;
        if t < 0.0 || t > self.death[idx] {
            return Err(TreeError::PointNotInTree);
        }
        let mut count = 0usize;
        for j in 1..=self.n {
            if self.is_above(label, t, j, self.death[(j - 1) as usize])? {
                count += 1;
            }
        }
        Ok(count as f64 / self.n as f64)
    }

    /// Hausdorff distance between the embedded segment unions of two
    /// nested trees from the same path. Exact: the larger tree contains
    /// the smaller, so the distance is the largest overhang of a new
    /// death point beyond its attachment to the smaller tree.
    pub fn hausdorff_distance(&self, other: &GenealogyTree) -> Result<f64, TreeError> {
        let (small, large) = if self.n <= other.n {
            (self, other)
        } else {
            (other, self)
        };
        for i in 1..=small.n {
            if (small.death_height(i)? - large.death_height(i)?).abs() > 1e-9 {
                return Err(TreeError::NotNested);
            }
            for j in 1..i {
                if (small.split_height(j, i)? - large.split_height(j, i)?).abs() > 1e-9 {
                    return Err(TreeError::NotNested);
                }
            }
        }
        let mut dist: f64 = 0.0;
        for i in small.n + 1..=large.n {
            let mut best_attach: f64 = 0.0;
            for k in 1..=small.n {
                best_attach = best_attach.max(large.split_height(k, i)?);
            }
            dist = dist.max(large.death_height(i)? - best_attach);
        }
        Ok(dist)
    }

    /// Samples `m` points from the empirical measure on death points
    /// (uniform weight `1/n` each) and returns their induced partition
    /// path on `{1, …, m}`.
    pub fn resample_partition_from_tree<R: Rng + ?Sized>(
        &self,
        m: usize,
        rng: &mut R,
    ) -> ResampledPartition {
        assert!(m >= 1, "need at least one sampled point");
        let labels: Vec<u32> = (0..m)
            .map(|_| rng.random_range(1..=self.n))
            .collect();
        let deaths: Vec<f64> = labels
            .iter()
            .map(|&l| self.death[(l - 1) as usize])
            .collect();
        let mut lca_heights = vec![vec![0.0f64; m]; m];
        for a in 0..m {
            for b in 0..m {
                lca_heights[a][b] = if labels[a] == labels[b] {
                    deaths[a]
                } else {
                    self.split_height(labels[a], labels[b])
                        .expect("sampled labels are in range")
                };
            }
        }
        ResampledPartition {
            source_labels: labels,
            deaths,
            lca_heights,
        }
    }

    /// JSON export: node list plus the sparse ℓ¹ coordinates.
    pub fn to_json(&self) -> Result<serde_json::Value, TreeError> {
        let nodes: Vec<_> = self
            .nodes
            .iter()
            .map(|nd| {
                json!({
                    "id": nd.id,
                    "parent_id": nd.parent,
                    "height": nd.height,
                    "kind": match nd.kind {
                        NodeKind::Root => "root",
                        NodeKind::Branch => "branch",
                        NodeKind::Death => "death",
                    },
                    "label": nd.label,
                    "mass_left_limit": nd.mass_left_limit,
                })
            })
            .collect();
        let l1: serde_json::Map<String, serde_json::Value> = self
            .embed_l1()?
            .into_iter()
            .enumerate()
            .map(|(i, q)| {
                (
                    (i + 1).to_string(),
                    json!(q.iter().map(|&(c, v)| json!([c, v])).collect::<Vec<_>>()),
                )
            })
            .collect();
        Ok(json!({"nodes": nodes, "l1": l1}))
    }

    /// Newick-like text with heights as branch lengths; death points are
    /// named `Q<label>`.
    pub fn to_newick(&self) -> String {
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        for nd in self.nodes.iter().skip(1) {
            children[nd.parent.unwrap()].push(nd.id);
        }
        fn emit(
            tree: &GenealogyTree,
            children: &[Vec<usize>],
            id: usize,
            out: &mut String,
        ) {
            let kids = &children[id];
            if !kids.is_empty() {
                out.push('(');
                for (k, &child) in kids.iter().enumerate() {
                    if k > 0 {
                        out.push(',');
                    }
                    emit(tree, children, child, out);
                }
                out.push(')');
            }
            let nd = &tree.nodes[id];
            if let Some(l) = nd.label {
                out.push_str(&format!("Q{l}"));
            }
            if let Some(p) = nd.parent {
                out.push_str(&format!(":{}", nd.height - tree.nodes[p].height));
            }
        }
        let mut out = String::new();
        emit(self, &children, 0, &mut out);
        out.push(';');
        out
    }
}

/// A partition path on `{1, …, m}` induced by points sampled from a tree:
/// labels `a, b` share a block at height `t` while `t < lca(a, b)`, and a
/// label is a dead singleton from its point's height on.
#[derive(Debug, Clone)]
pub struct ResampledPartition {
    /// Tree label each sampled point came from.
    pub source_labels: Vec<u32>,
    /// Height of each sampled point (its death time in the induced path).
    pub deaths: Vec<f64>,
    lca_heights: Vec<Vec<f64>>,
}

impl ResampledPartition {
    pub fn m(&self) -> usize {
        self.deaths.len()
    }

    /// Induced partition at height `t` (dead labels are singletons).
    pub fn partition_at(&self, t: f64) -> SetPartition {
        let m = self.m();
        let mut assigned = vec![false; m];
        let mut blocks: Vec<Vec<u32>> = Vec::new();
        for a in 0..m {
            if assigned[a] {
                continue;
            }
            let mut block = vec![a as u32 + 1];
            assigned[a] = true;
            if t < self.deaths[a] {
                for b in a + 1..m {
                    if !assigned[b] && t < self.deaths[b] && t < self.lca_heights[a][b] {
                        block.push(b as u32 + 1);
                        assigned[b] = true;
                    }
                }
            }
            blocks.push(block);
        }
        SetPartition::from_blocks(&blocks).expect("grouping is a partition")
    }
}
