//! Fractal dimension estimation of the leaf set.
//!
//! The leaf set of a self-similar fragmentation tree with negative index
//! has Hausdorff dimension `p*/|α|` whenever the Malthusian exponent `p*`
//! exists and the process survives. This module provides the empirical
//! side: greedy box counting over finite leaf samples with the tree
//! metric, the ε-stopping-line covering functional whose boundedness
//! certifies upper bounds, and a combined report comparing the estimate
//! with the theoretical value.
//!
//! Leaf sampling follows the natural measure: for conservative kill-free
//! measures the floor-stopped blocks are (approximate) proper leaves; in
//! dissipative cases points are taken on a shallow stopping line and
//! weighted by `mass^{p*}` (the leaf measure of the subtree below),
//! excluding dead lineages, since the unweighted death points would be
//! biased toward mass that never reaches the leaf set.

use crate::fragmentation::{simulate, EventKind, FragmentationError, FragmentationPath,
    FragmentationParams, Horizon};
use crate::malthus::{solve_malthus, MalthusError};
use crate::seeds::replicate_rng;
use crate::stats::{linear_fit, mean_se, MeanSe};
use crate::tree::{build_tree, TreeError};
use rand::Rng;
use std::collections::HashMap;
use thiserror::Error;

/// Shallow stopping-line threshold for dissipative leaf sampling.
const LINE_EPS: f64 = 1.0 / 8192.0;

/// Mass floor for conservative leaf sampling.
const CONSERVATIVE_FLOOR: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DimensionError {
    #[error("fewer than 4 usable scales between the diameter and the point resolution")]
    DegenerateScales,
    #[error("every replicate went extinct (countable leaf set, dimension 0)")]
    ExtinctionOnly,
    #[error("surviving replicates yielded too few leaf points for box counting; increase the label count")]
    InsufficientLeaves,
    #[error(transparent)]
    Analytic(#[from] MalthusError),
    #[error(transparent)]
    Simulation(#[from] FragmentationError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// Box-counting fit: `log N(r)` against `log(1/r)`.
#[derive(Debug, Clone)]
pub struct BoxCount {
    pub slope: f64,
    pub r_squared: f64,
    /// `(scale, greedy cover count)` per usable scale.
    pub scales: Vec<(f64, usize)>,
}

/// Greedy (farthest-point) cover count at radius `r`: a constant-factor
/// surrogate for the minimal covering number that does not affect slopes.
pub fn greedy_cover_count(dists: &[Vec<f64>], r: f64) -> usize {
    let n = dists.len();
    let mut min_dist = dists[0].clone();
    let mut count = 1;
    loop {
        let (far, &gap) = min_dist
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("distances are not NaN"))
            .expect("nonempty point set");
        if gap <= r {
            return count;
        }
        count += 1;
        for j in 0..n {
            if dists[far][j] < min_dist[j] {
                min_dist[j] = dists[far][j];
            }
        }
    }
}

/// Least-squares box-counting dimension over a geometric scale grid from
/// `diameter/4` down to the 5th percentile of nearest-neighbor distances.
/// `dists` is the full symmetric distance matrix of the sample.
pub fn box_counting_estimate(dists: &[Vec<f64>]) -> Result<BoxCount, DimensionError> {
    let n = dists.len();
    assert!(n >= 2, "box counting needs at least two points");
    let mut diam = 0.0f64;
    let mut nn = vec![f64::INFINITY; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                diam = diam.max(dists[i][j]);
                nn[i] = nn[i].min(dists[i][j]);
            }
        }
    }
    if diam == 0.0 {
        // All points identical: one box at every scale.
        return Ok(BoxCount {
            slope: 0.0,
            r_squared: 1.0,
            scales: Vec::new(),
        });
    }
    nn.sort_by(|a, b| a.partial_cmp(b).expect("distances are not NaN"));
    let resolution = nn[n / 20].max(diam * 1e-12);
    // Below `saturation` the cover count tracks the sample size instead of
    // the underlying set and would bias the slope down, so such scales are
    // dropped even when they sit above the nearest-neighbor resolution.
    let saturation = (n / 4).max(8);
    let mut scales = Vec::new();
    let mut r = diam / 4.0;
    while r >= resolution {
        let count = greedy_cover_count(dists, r);
        if count > saturation {
            break;
        }
        scales.push((r, count));
        r /= 2.0;
    }
    if scales.len() < 4 {
        return Err(DimensionError::DegenerateScales);
    }
    let xs: Vec<f64> = scales.iter().map(|&(r, _)| (1.0 / r).ln()).collect();
    let ys: Vec<f64> = scales.iter().map(|&(_, c)| (c as f64).ln()).collect();
    let (slope, _, r_squared) = linear_fit(&xs, &ys);
    Ok(BoxCount {
        slope,
        r_squared,
        scales,
    })
}

/// `Σ_{blocks of Π^ε} (τ^ε)^{γ/|α|}`: the covering functional at the
/// ε-stopping line of a self-similar path whose labels have all died.
/// `τ^ε` is the remaining extinction time of each surviving block; dead
/// lineages contribute nothing (for `γ = 0` the value counts surviving
/// blocks).
pub fn covering_functional(path: &FragmentationPath, eps: f64, gamma: f64) -> f64 {
    assert!(path.alpha < 0.0, "covering functional needs a self-similar path");
    assert!(eps > 0.0 && gamma >= 0.0);
    let beta = -path.alpha;
    let line = path.stopping_line_first_below(eps);
    let deaths = path.death_times();
    // Group labels into line blocks by their (a.s. distinct) line times.
    let mut blocks: HashMap<u64, (f64, f64)> = HashMap::new();
    for (idx, &l) in line.times.iter().enumerate() {
        let label = idx as u32 + 1;
        let mass = path
            .tagged_fragment(label)
            .expect("labels in range")
            .mass_at(l);
        if mass <= 0.0 {
            continue;
        }
        let entry = blocks.entry(l.to_bits()).or_insert((l, 0.0));
        entry.1 = entry.1.max(deaths[idx] - l);
    }
    // Fixed summation order keeps the result bit-reproducible.
    let mut taus: Vec<(f64, f64)> = blocks.into_values().collect();
    taus.sort_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).expect("times are not NaN"));
    taus.iter()
        .map(|&(_, tau)| if gamma == 0.0 { 1.0 } else { tau.powf(gamma / beta) })
        .sum()
}

/// Combined dimension report over independent replicates.
#[derive(Debug, Clone)]
pub struct DimensionReport {
    /// Mean box-counting slope over surviving replicates.
    pub estimate: f64,
    /// `mean ± 1.96·SE`.
    pub ci: (f64, f64),
    /// `p*/|α|` when the Malthusian exponent exists.
    pub theory: Option<f64>,
    /// `p′/|α|`: the smallest exponent with `ψ ≥ 0`, the covering upper
    /// bound.
    pub upper_bound: f64,
    /// Fraction of replicates with surviving mass.
    pub survival: MeanSe,
    /// Replicates contributing a slope.
    pub used: usize,
    /// `(scale, cover count)` table of each contributing replicate.
    pub scale_counts: Vec<Vec<(f64, usize)>>,
}

/// Estimates the leaf-set dimension of `params` by box counting over
/// leaf samples from `replicates` independent trees, each using at most
/// `leaf_budget` points, and compares with `p*/|α|`.
pub fn dimension_report(
    params: &FragmentationParams,
    leaf_budget: usize,
    replicates: u64,
    master_seed: u64,
) -> Result<DimensionReport, DimensionError> {
    assert!(params.alpha < 0.0, "dimension needs a negative index");
    let beta = -params.alpha;
    let analytic = solve_malthus(&params.nu, params.c, 1e-10)?;
    let theory = analytic.p_star.map(|p| p / beta);
    let upper_bound = analytic.p_prime / beta;
    let p_weight = analytic.p_star.unwrap_or(analytic.p_prime);
    let conservative = params.nu.kill_rate() == 0.0 && params.nu.is_conservative();

    let mut run = params.clone();
    run.horizon = Horizon::UntilDead {
        mass_floor: if conservative {
            CONSERVATIVE_FLOOR
        } else {
            LINE_EPS / 16.0
        },
    };

    let mut slopes = Vec::new();
    let mut survived = Vec::new();
    let mut scale_counts = Vec::new();
    for r in 0..replicates {
        let mut rng = replicate_rng(master_seed, r);
        let path = simulate(&run, &mut rng)?;
        let points = leaf_points(&path, conservative, p_weight);
        if points.is_empty() {
            survived.push(0.0);
            continue;
        }
        survived.push(1.0);
        let chosen = weighted_subsample(&points, leaf_budget, &mut rng);
        if chosen.len() < 16 {
            continue;
        }
        let tree = build_tree(&path)?;
        let m = chosen.len();
        let mut dists = vec![vec![0.0f64; m]; m];
        for a in 0..m {
            for b in a + 1..m {
                let (la, ha) = (chosen[a].0, chosen[a].1);
                let (lb, hb) = (chosen[b].0, chosen[b].1);
                let split = tree.split_height(la, lb)?.min(ha).min(hb);
                let d = ha + hb - 2.0 * split;
                dists[a][b] = d;
                dists[b][a] = d;
            }
        }
        match box_counting_estimate(&dists) {
            Ok(fit) => {
                slopes.push(fit.slope);
                scale_counts.push(fit.scales);
            }
            Err(DimensionError::DegenerateScales) => {}
            Err(e) => return Err(e),
        }
    }
    if slopes.is_empty() {
        return Err(if survived.iter().all(|&s| s == 0.0) {
            DimensionError::ExtinctionOnly
        } else {
            DimensionError::InsufficientLeaves
        });
    }
    let est = mean_se(&slopes);
    Ok(DimensionReport {
        estimate: est.mean,
        ci: (est.mean - 1.96 * est.se, est.mean + 1.96 * est.se),
        theory,
        upper_bound,
        survival: mean_se(&survived),
        used: slopes.len(),
        scale_counts,
    })
}

/// `(representative label, height, sampling weight)` of each leaf proxy:
/// floor-stopped blocks in the conservative case, surviving blocks on the
/// shallow stopping line otherwise, weighted by `mass^{p*}`.
fn leaf_points(
    path: &FragmentationPath,
    conservative: bool,
    p_weight: f64,
) -> Vec<(u32, f64, f64)> {
    if conservative {
        path.events
            .iter()
            .filter(|ev| ev.kind == EventKind::FloorStop)
            .map(|ev| (ev.block[0], ev.t, ev.block_mass.powf(p_weight)))
            .collect()
    } else {
        let line = path.stopping_line_first_below(LINE_EPS);
        let mut blocks: HashMap<u64, (u32, f64, f64)> = HashMap::new();
        for (idx, &l) in line.times.iter().enumerate() {
            let label = idx as u32 + 1;
            let mass = path
                .tagged_fragment(label)
                .expect("labels in range")
                .mass_at(l);
            if mass <= 0.0 {
                continue;
            }
            blocks
                .entry(l.to_bits())
                .or_insert((label, l, mass.powf(p_weight)));
        }
        // Label order keeps downstream subsampling bit-reproducible.
        let mut points: Vec<_> = blocks.into_values().collect();
        points.sort_by_key(|p| p.0);
        points
    }
}

/// Samples up to `budget` distinct points with probability proportional
/// to weight (without replacement).
fn weighted_subsample<R: Rng + ?Sized>(
    points: &[(u32, f64, f64)],
    budget: usize,
    rng: &mut R,
) -> Vec<(u32, f64)> {
    if points.len() <= budget {
        return points.iter().map(|&(l, h, _)| (l, h)).collect();
    }
    let mut weights: Vec<f64> = points.iter().map(|p| p.2).collect();
    let mut total: f64 = weights.iter().sum();
    let mut chosen = Vec::with_capacity(budget);
    for _ in 0..budget {
        let mut u = rng.random::<f64>() * total;
        let mut pick = 0;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                u -= w;
                pick = i;
                if u <= 0.0 {
                    break;
                }
            }
        }
        chosen.push((points[pick].0, points[pick].1));
        total -= weights[pick];
        weights[pick] = 0.0;
    }
    chosen
}
