//! The truncation operator on mass partitions, measures, and paths.
//!
//! `G_{N,ε}` keeps the `N` largest entries of a mass partition when
//! `s₁ ≤ 1 − ε`, and only `s₁` otherwise; the rest becomes dust. Pushing a
//! dislocation measure ν forward under `G_{N,ε}` gives a measure whose
//! `ψ_{N,ε}` is finite for every `p > 0`, nonincreasing in `N` and
//! nondecreasing in `ε`, with `inf_{N,ε} ψ_{N,ε} = ψ` on the finite domain
//! and `p* = sup_{N} p*_{N,1/N}` along the diagonal. Coupling a simulated
//! path with its reduction (same atom draws, truncation applied to each)
//! yields a partition process that is almost surely finer.

use crate::dislocation::{DislocationMeasure, Reduction};
use crate::fragmentation::{EventKind, FragmentationPath, PathEvent, ChildBlock,
    S_INDEX_DUST};
use crate::malthus::{psi, solve_malthus, MalthusError, PsiValue};
use crate::partitions::MassPartition;

/// `G_{N,ε}(s)`: `(s₁, …, s_N)` if `s₁ ≤ 1 − ε`, else `(s₁)`.
pub fn reduce_mass_partition(s: &MassPartition, cap: usize, eps: f64) -> MassPartition {
    check_params(cap, eps);
    crate::dislocation::reduce_partition(s, Reduction { cap, eps })
}

/// Pushforward of ν under `G_{N,ε}`.
pub fn reduce_measure(nu: &DislocationMeasure, cap: usize, eps: f64) -> DislocationMeasure {
    check_params(cap, eps);
    nu.reduce(cap, eps)
}

fn check_params(cap: usize, eps: f64) {
    assert!(cap >= 1, "entry cap must be at least 1");
    assert!(eps > 0.0 && eps < 1.0, "eps must lie in (0, 1)");
}

/// `ψ_{N,ε}(p)`: finite for every `p > 0` (each reduced atom has at most
/// `N` entries and the non-trivial region has finite total weight).
pub fn psi_reduced(
    nu: &DislocationMeasure,
    c: f64,
    cap: usize,
    eps: f64,
    p: f64,
    tol: f64,
) -> Result<f64, MalthusError> {
    match psi(&reduce_measure(nu, cap, eps), c, p, tol)? {
        PsiValue::Finite(v) => Ok(v),
        PsiValue::MinusInfinity => unreachable!(
            "reduced atoms have at most max(cap, 1) entries; ψ is finite"
        ),
    }
}

/// Malthusian exponent of the reduced measure, when it exists.
pub fn malthus_reduced(
    nu: &DislocationMeasure,
    c: f64,
    cap: usize,
    eps: f64,
    tol: f64,
) -> Result<Option<f64>, MalthusError> {
    Ok(solve_malthus(&reduce_measure(nu, cap, eps), c, tol)?.p_star)
}

/// Diagonal sweep `p*_{N,1/N}` for `N` in `caps` (nondecreasing in `N`,
/// sup = p*). Entries without an exponent are `None`.
pub fn diagonal_sweep(
    nu: &DislocationMeasure,
    c: f64,
    caps: &[usize],
    tol: f64,
) -> Result<Vec<(usize, f64, Option<f64>)>, MalthusError> {
    let mut out = Vec::with_capacity(caps.len());
    for &cap in caps {
        assert!(cap >= 2, "diagonal needs N ≥ 2 so that ε = 1/N < 1");
        let eps = 1.0 / cap as f64;
        out.push((cap, eps, malthus_reduced(nu, c, cap, eps, tol)?));
    }
    Ok(out)
}

/// Couples a simulated path with its `G_{N,ε}` reduction: the same atom
/// draws, with entries beyond the cap (or all entries but the largest,
/// when the largest holds more than `1 − ε`) turned to dust. The reduced
/// partition process is finer than the original at every time.
///
/// The largest entry of each atom is read off the recorded event: the
/// `s_index = 0` child when a label landed there, otherwise it is bounded
/// below by the unrepresented remainder `1 − Σ(represented entries)`; the
/// rare overestimate only produces extra dust, preserving finer-ness.
pub fn reduce_path(path: &FragmentationPath, cap: usize, eps: f64) -> FragmentationPath {
    check_params(cap, eps);
    let mut dead: Vec<bool> = vec![false; path.n as usize];
    let mut events: Vec<PathEvent> = Vec::with_capacity(path.events.len());
    for ev in &path.events {
        let block: Vec<u32> = ev
            .block
            .iter()
            .copied()
            .filter(|&l| !dead[(l - 1) as usize])
            .collect();
        if block.is_empty() {
            continue;
        }
        let mut children: Vec<ChildBlock> = Vec::new();
        let mut dust_labels: Vec<u32> = Vec::new();
        match ev.kind {
            EventKind::FloorStop => {
                events.push(PathEvent {
                    t: ev.t,
                    kind: ev.kind,
                    block,
                    block_mass: ev.block_mass,
                    children: ev.children.clone(),
                });
                continue;
            }
            EventKind::MassJump | EventKind::Erosion | EventKind::Split => {
                let s1 = largest_entry(ev);
                let keep_only_first = s1 > 1.0 - eps;
                for ch in &ev.children {
                    let labels: Vec<u32> = ch
                        .labels
                        .iter()
                        .copied()
                        .filter(|&l| !dead[(l - 1) as usize])
                        .collect();
                    if labels.is_empty() {
                        continue;
                    }
                    let cut = ch.s_index >= 0
                        && (ch.s_index as usize >= cap
                            || (keep_only_first && ch.s_index != 0));
                    if ch.s_index == S_INDEX_DUST || cut {
                        dust_labels.extend(&labels);
                    } else {
                        children.push(ChildBlock {
                            labels,
                            s_index: ch.s_index,
                            mass: ch.mass,
                        });
                    }
                }
            }
        }
        for &l in &dust_labels {
            dead[(l - 1) as usize] = true;
        }
        let gained_dust = !dust_labels.is_empty();
        dust_labels.sort_unstable();
        for l in dust_labels {
            // One dust child per label, matching the engine's convention
            // (dead labels become singleton blocks on replay).
            children.push(ChildBlock {
                labels: vec![l],
                s_index: S_INDEX_DUST,
                mass: 0.0,
            });
        }
        if children.is_empty() {
            continue;
        }
        // An event that gained dust must be visible to partition replay
        // even if the original was an invisible single-child mass jump.
        let kind = if gained_dust { EventKind::Split } else { ev.kind };
        events.push(PathEvent {
            t: ev.t,
            kind,
            block,
            block_mass: ev.block_mass,
            children,
        });
    }
    FragmentationPath {
        alpha: path.alpha,
        c: path.c,
        n: path.n,
        events,
        erosion_times: path.erosion_times.clone(),
    }
}

/// Largest atom entry of an event: exact when entry 0 carries a label,
/// otherwise a lower-bounding remainder estimate (see [`reduce_path`]).
fn largest_entry(ev: &PathEvent) -> f64 {
    let mut represented = 0.0;
    for ch in &ev.children {
        if ch.s_index == 0 {
            return ch.mass / ev.block_mass;
        }
        if ch.s_index >= 0 {
            represented += ch.mass / ev.block_mass;
        }
    }
    (1.0 - represented).max(0.0)
}
