//! Event-driven simulation of homogeneous `(0, c, ν)` fragmentations
//! restricted to the labels `{1, …, n}`, with exact block-mass tracking,
//! erosion, the Lamperti time change to self-similar `(α, c, ν)` processes,
//! and stopping lines.
//!
//! # Engine
//!
//! Every live block carries an exponential clock at the *total* atom rate
//! `W = Σ_k w_k` of the (finite or truncated) dislocation measure. At each
//! ring an atom is drawn proportionally to its weight and an unconditioned
//! paintbox assigns the block's labels to its entries. Outcomes that do not
//! visibly split the labels (all labels land in one entry) are recorded as
//! single-child mass-jump events: they leave the observed partition
//! unchanged but multiply the block mass by the entry size, which is what
//! makes the tracked masses exact — a visible-rate engine would silently
//! skip those jumps and break every `mass^q` moment identity. By
//! memorylessness this is exactly the restricted Poisson construction.
//!
//! Erosion contributes a continuous `e^{−ct}` decay of every mass and one
//! exponential time `T_i ~ Exp(c)` per label at which the label detaches as
//! a mass-0 dust singleton.
//!
//! Self-similar paths are produced by simulating the homogeneous process
//! and applying the deterministic Lamperti time change, whose piecewise
//! integrals `∫ (m e^{−cr})^{−α} dr` have closed forms in both directions.
//!
//! # Event encoding
//!
//! Children carry the paintbox entry index in `s_index`; the sentinel
//! [`S_INDEX_DUST`] marks mass-0 dust singletons (kill atoms, dust marks,
//! erosion detachments) and [`S_INDEX_CARRY`] marks a block continuing
//! unchanged (erosion remainder, mass-floor stops).

use crate::dislocation::{DislocationError, DislocationMeasure};
use crate::partitions::{paintbox_assignment, SetPartition};
use rand::Rng;
use serde_json::json;
use thiserror::Error;

/// Exponential sample with the given rate by inverse CDF (the uniform is
/// flipped to (0, 1] so the logarithm is finite).
fn exp_sample<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    debug_assert!(rate > 0.0);
    -(1.0 - rng.random::<f64>()).ln() / rate
}

/// `s_index` sentinel for a mass-0 dust singleton child.
pub const S_INDEX_DUST: i64 = -1;
/// `s_index` sentinel for a child that is the parent block continuing
/// without an atom entry (erosion remainder, floor stop).
pub const S_INDEX_CARRY: i64 = -2;

/// Internal tolerance used to truncate countable families for simulation.
const FAMILY_TRUNCATION_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum FragmentationError {
    #[error("self-similar index must be negative (got {0})")]
    NonNegativeAlpha(f64),
    #[error("erosion rate must be nonnegative (got {0})")]
    NegativeErosion(f64),
    #[error("need at least one label")]
    NoLabels,
    #[error("c = 0 with a zero dislocation measure is the trivial constant process")]
    TrivialProcess,
    #[error(
        "the restricted process never dies in homogeneous time; give a time horizon \
         or a positive mass floor"
    )]
    HorizonRequired,
    #[error("path is not homogeneous (alpha = {0})")]
    NotHomogeneous(f64),
    #[error("path is not self-similar (alpha = 0)")]
    NotSelfSimilar,
    #[error("label {0} is not in the path")]
    UnknownLabel(u32),
    #[error(transparent)]
    Measure(#[from] DislocationError),
}

/// How long to run a simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    /// Stop at this (homogeneous) time; surviving blocks simply end there.
    Time(f64),
    /// Run until every label is dead (dust, kill, erosion) or its block
    /// mass has fallen below `mass_floor`, at which point the block is
    /// stopped and its labels marked dead at the stop time.
    UntilDead { mass_floor: f64 },
}

/// Parameter triple `(α, c, ν)` plus the label count and horizon.
#[derive(Debug, Clone)]
pub struct FragmentationParams {
    pub nu: DislocationMeasure,
    /// Self-similarity index, ≤ 0 (0 = homogeneous).
    pub alpha: f64,
    /// Erosion rate, ≥ 0.
    pub c: f64,
    /// Number of tracked labels.
    pub n: u32,
    pub horizon: Horizon,
}

impl FragmentationParams {
    pub fn validate(&self) -> Result<(), FragmentationError> {
        if self.alpha > 0.0 {
            return Err(FragmentationError::NonNegativeAlpha(self.alpha));
        }
        if self.c < 0.0 {
            return Err(FragmentationError::NegativeErosion(self.c));
        }
        if self.n == 0 {
            return Err(FragmentationError::NoLabels);
        }
        // Countable families always carry positive weight.
        let zero_measure = self.nu.total_weight().is_some_and(|w| w == 0.0);
        if self.c == 0.0 && zero_measure {
            return Err(FragmentationError::TrivialProcess);
        }
        if let Horizon::UntilDead { mass_floor } = self.horizon {
            // Without erosion or kill mass, blocks keep positive mass for
            // all homogeneous time, so termination needs a positive floor.
            let dies_without_floor = self.c > 0.0 || self.nu.kill_rate() > 0.0;
            if mass_floor <= 0.0 && !dies_without_floor {
                return Err(FragmentationError::HorizonRequired);
            }
        }
        Ok(())
    }
}

/// One child block created by an event.
#[derive(Debug, Clone)]
pub struct ChildBlock {
    /// Ascending labels (nonempty).
    pub labels: Vec<u32>,
    /// Paintbox entry index, or a negative sentinel (see module docs).
    pub s_index: i64,
    /// Mass at creation (parent mass × entry size; 0 for dust).
    pub mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// Visible split: two or more children, or dust.
    Split,
    /// Atom landed all labels in one entry: single child, smaller mass.
    MassJump,
    /// One label detached as a mass-0 dust singleton at its `T_i`.
    Erosion,
    /// Block stopped at the mass floor; its labels are dead from here on.
    FloorStop,
}

/// One event on one block.
#[derive(Debug, Clone)]
pub struct PathEvent {
    /// Event time on the path's own clock (homogeneous or self-similar).
    pub t: f64,
    pub kind: EventKind,
    /// Labels of the affected block, ascending.
    pub block: Vec<u32>,
    /// Block mass immediately before the event.
    pub block_mass: f64,
    pub children: Vec<ChildBlock>,
}

/// A simulated fragmentation path restricted to labels `{1, …, n}`.
///
/// `alpha == 0.0` means event times are homogeneous; otherwise they are
/// self-similar times produced by [`apply_lamperti`]. `erosion_times` are
/// always the raw homogeneous `T_i` samples (∞ when `c = 0` or unsampled).
#[derive(Debug, Clone)]
pub struct FragmentationPath {
    pub alpha: f64,
    pub c: f64,
    pub n: u32,
    /// Events sorted by time, ties broken by least block label.
    pub events: Vec<PathEvent>,
    /// Per-label homogeneous erosion times `T_i` (index 0 = label 1).
    pub erosion_times: Vec<f64>,
}

/// Per-label stopping times with the consistency property: labels sharing
/// a block at their time share the same time.
#[derive(Debug, Clone)]
pub struct StoppingLine {
    /// Index 0 = label 1.
    pub times: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Homogeneous simulation.
// ---------------------------------------------------------------------------

struct LiveBlock {
    labels: Vec<u32>,
    /// Product of atom entries along the split history (mass without the
    /// erosion factor): mass(r) = factor · e^{−c r}.
    factor: f64,
    /// Homogeneous birth time.
    born: f64,
}

/// Simulates the homogeneous `(0, c, ν)` process restricted to `[n]`.
///
/// The returned path has `alpha = 0` regardless of `params.alpha`; apply
/// [`apply_lamperti`] for the self-similar process (or use [`simulate`]).
pub fn simulate_homogeneous<R: Rng + ?Sized>(
    params: &FragmentationParams,
    rng: &mut R,
) -> Result<FragmentationPath, FragmentationError> {
    params.validate()?;
    let nu = params.nu.truncate(FAMILY_TRUNCATION_TOL)?;
    let (weights, atoms) = nu.atoms().expect("truncate returns a finite measure");
    let total_rate: f64 = weights.iter().sum();
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in weights {
        acc += w;
        cumulative.push(acc);
    }
    let c = params.c;
    let n = params.n;

    // Erosion times, sampled up front (independent of everything else).
    let erosion_times: Vec<f64> = if c > 0.0 {
        (0..n).map(|_| exp_sample(rng, c)).collect()
    } else {
        vec![f64::INFINITY; n as usize]
    };

    let (t_max, floor) = match params.horizon {
        Horizon::Time(t) => (t, 0.0),
        Horizon::UntilDead { mass_floor } => (f64::INFINITY, mass_floor),
    };

    let mut events: Vec<PathEvent> = Vec::new();
    // Depth-first over blocks; order is deterministic given the RNG stream.
    let mut stack = vec![LiveBlock {
        labels: (1..=n).collect(),
        factor: 1.0,
        born: 0.0,
    }];

    while let Some(mut block) = stack.pop() {
        loop {
            let mut t = block.born;
            let mass_now = block.factor * (-c * t).exp();
            // Mass floor crossing: either already below it (child born under
            // the floor) or by erosion decay at a computable future time.
            if floor > 0.0 && mass_now <= floor {
                events.push(PathEvent {
                    t,
                    kind: EventKind::FloorStop,
                    block: block.labels.clone(),
                    block_mass: mass_now,
                    children: vec![ChildBlock {
                        labels: block.labels.clone(),
                        s_index: S_INDEX_CARRY,
                        mass: mass_now,
                    }],
                });
                break;
            }
            let t_floor = if floor > 0.0 && c > 0.0 {
                (block.factor / floor).ln() / c
            } else {
                f64::INFINITY
            };
            // Next erosion among this block's labels.
            let (t_erode, erode_label) = block
                .labels
                .iter()
                .map(|&l| (erosion_times[(l - 1) as usize], l))
                .filter(|&(te, _)| te > t)
                .min_by(|a, b| a.0.partial_cmp(&b.0).expect("finite times"))
                .unwrap_or((f64::INFINITY, 0));
            // Next atom ring.
            let t_atom = if total_rate > 0.0 {
                t + exp_sample(rng, total_rate)
            } else {
                f64::INFINITY
            };

            let t_next = t_atom.min(t_erode).min(t_floor).min(t_max);
            if t_next == f64::INFINITY || t_next >= t_max {
                // Survived to the horizon.
                break;
            }
            t = t_next;
            let mass = block.factor * (-c * t).exp();

            if t == t_floor && t < t_atom && t < t_erode {
                events.push(PathEvent {
                    t,
                    kind: EventKind::FloorStop,
                    block: block.labels.clone(),
                    block_mass: floor,
                    children: vec![ChildBlock {
                        labels: block.labels.clone(),
                        s_index: S_INDEX_CARRY,
                        mass: floor,
                    }],
                });
                break;
            }

            if t_erode <= t_atom {
                // Label `erode_label` detaches as dust.
                let rest: Vec<u32> = block
                    .labels
                    .iter()
                    .copied()
                    .filter(|&l| l != erode_label)
                    .collect();
                let mut children = Vec::new();
                if !rest.is_empty() {
                    children.push(ChildBlock {
                        labels: rest.clone(),
                        s_index: S_INDEX_CARRY,
                        mass,
                    });
                }
                children.push(ChildBlock {
                    labels: vec![erode_label],
                    s_index: S_INDEX_DUST,
                    mass: 0.0,
                });
                events.push(PathEvent {
                    t,
                    kind: EventKind::Erosion,
                    block: block.labels.clone(),
                    block_mass: mass,
                    children,
                });
                if rest.is_empty() {
                    break;
                }
                block.labels = rest;
                block.born = t;
                continue;
            }

            // Atom event: draw the atom by weight (unconditioned) and
            // paintbox-assign the labels.
            let u: f64 = rng.random::<f64>() * total_rate;
            let k = cumulative
                .partition_point(|&cw| cw <= u)
                .min(atoms.len() - 1);
            let atom = &atoms[k];
            let assignment = paintbox_assignment(atom, block.labels.len(), rng);

            // Group labels by entry; dust labels become mass-0 singletons.
            let mut groups: Vec<(usize, Vec<u32>)> = Vec::new();
            let mut dust: Vec<u32> = Vec::new();
            for (pos, assigned) in assignment.iter().enumerate() {
                let label = block.labels[pos];
                match assigned {
                    Some(entry) => match groups.iter_mut().find(|(e, _)| e == entry) {
                        Some((_, ls)) => ls.push(label),
                        None => groups.push((*entry, vec![label])),
                    },
                    None => dust.push(label),
                }
            }
            groups.sort_by_key(|(_, ls)| ls[0]);

            let mut children: Vec<ChildBlock> = groups
                .iter()
                .map(|(entry, ls)| ChildBlock {
                    labels: ls.clone(),
                    s_index: *entry as i64,
                    mass: mass * atom.parts()[*entry],
                })
                .collect();
            for &l in &dust {
                children.push(ChildBlock {
                    labels: vec![l],
                    s_index: S_INDEX_DUST,
                    mass: 0.0,
                });
            }

            let kind = if children.len() == 1 && dust.is_empty() {
                EventKind::MassJump
            } else {
                EventKind::Split
            };
            events.push(PathEvent {
                t,
                kind,
                block: block.labels.clone(),
                block_mass: mass,
                children: children.clone(),
            });

            match kind {
                EventKind::MassJump => {
                    let entry = children[0].s_index as usize;
                    block.factor *= atom.parts()[entry];
                    block.born = t;
                }
                _ => {
                    // Visible split: push each non-dust child.
                    for child in children.into_iter().filter(|ch| ch.s_index >= 0) {
                        let entry = child.s_index as usize;
                        stack.push(LiveBlock {
                            labels: child.labels,
                            factor: block.factor * atom.parts()[entry],
                            born: t,
                        });
                    }
                    break;
                }
            }
        }
    }

    events.sort_by(|a, b| {
        a.t.partial_cmp(&b.t)
            .expect("finite event times")
            .then(a.block[0].cmp(&b.block[0]))
    });
    Ok(FragmentationPath {
        alpha: 0.0,
        c,
        n,
        events,
        erosion_times,
    })
}

/// Simulates the `(α, c, ν)` process: homogeneous simulation followed by
/// the Lamperti time change when `α < 0`.
pub fn simulate<R: Rng + ?Sized>(
    params: &FragmentationParams,
    rng: &mut R,
) -> Result<FragmentationPath, FragmentationError> {
    let path = simulate_homogeneous(params, rng)?;
    if params.alpha < 0.0 {
        apply_lamperti(&path, params.alpha)
    } else {
        Ok(path)
    }
}

// ---------------------------------------------------------------------------
// Lamperti time change.
// ---------------------------------------------------------------------------

/// `∫_{u0}^{u1} e^{−cβr} dr` (the mass-history integral without the
/// `factor^β` prefactor), with `β = |α|`.
fn lamperti_segment(c: f64, beta: f64, u0: f64, u1: f64) -> f64 {
    if c == 0.0 {
        u1 - u0
    } else {
        let cb = c * beta;
        ((-cb * u0).exp() - (-cb * u1).exp()) / cb
    }
}

/// Inverse of [`lamperti_segment`] in `u1`: returns the homogeneous
/// endpoint such that the segment integral equals `target` (∞ if the
/// integral saturates below `target`).
fn lamperti_segment_inverse(c: f64, beta: f64, u0: f64, target: f64) -> f64 {
    if c == 0.0 {
        u0 + target
    } else {
        let cb = c * beta;
        let a = (-cb * u0).exp() - cb * target;
        if a <= 0.0 {
            f64::INFINITY
        } else {
            -a.ln() / cb
        }
    }
}

/// Per-block clock state shared by the two time-change directions.
#[derive(Clone, Copy)]
struct ClockState {
    /// Homogeneous time of the block's last event.
    u0: f64,
    /// Self-similar time of the block's last event.
    t0: f64,
    /// Mass factor (mass without erosion decay) since then.
    factor: f64,
}

/// Applies the Lamperti time change to a homogeneous path, producing the
/// self-similar path with index `alpha < 0`. Masses are preserved; each
/// event time is mapped through the closed-form piecewise integral of the
/// block's mass history.
pub fn apply_lamperti(
    path: &FragmentationPath,
    alpha: f64,
) -> Result<FragmentationPath, FragmentationError> {
    if alpha >= 0.0 {
        return Err(FragmentationError::NonNegativeAlpha(alpha));
    }
    if path.alpha != 0.0 {
        return Err(FragmentationError::NotHomogeneous(path.alpha));
    }
    let transformed = change_time(path, alpha, true);
    Ok(FragmentationPath {
        alpha,
        c: path.c,
        n: path.n,
        events: transformed,
        erosion_times: path.erosion_times.clone(),
    })
}

/// Inverts the Lamperti time change of a self-similar path, recovering the
/// homogeneous path exactly (closed-form piecewise inversion).
pub fn invert_lamperti(path: &FragmentationPath) -> Result<FragmentationPath, FragmentationError> {
    if path.alpha >= 0.0 {
        return Err(FragmentationError::NotSelfSimilar);
    }
    let transformed = change_time(path, path.alpha, false);
    Ok(FragmentationPath {
        alpha: 0.0,
        c: path.c,
        n: path.n,
        events: transformed,
        erosion_times: path.erosion_times.clone(),
    })
}

/// Shared replay for both directions. `forward` maps homogeneous →
/// self-similar. Blocks are keyed by least label (unique within a
/// partition); a child's state starts at its parent's event.
fn change_time(path: &FragmentationPath, alpha: f64, forward: bool) -> Vec<PathEvent> {
    let beta = -alpha;
    let c = path.c;
    let mut states: std::collections::HashMap<u32, ClockState> =
        std::collections::HashMap::new();
    states.insert(
        1,
        ClockState {
            u0: 0.0,
            t0: 0.0,
            factor: 1.0,
        },
    );
    // Label 1 may not be the least of every block; insert the root for all
    // labels lazily: every block's least label first appears as a child of
    // some earlier event, except the root block's least label 1.
    let mut out = Vec::with_capacity(path.events.len());
    for ev in &path.events {
        let key = ev.block[0];
        let state = *states.get(&key).unwrap_or(&ClockState {
            u0: 0.0,
            t0: 0.0,
            factor: 1.0,
        });
        // Map the event time.
        let (u1, t1) = if forward {
            let u1 = ev.t;
            let t1 =
                state.t0 + state.factor.powf(beta) * lamperti_segment(c, beta, state.u0, u1);
            (u1, t1)
        } else {
            let t1 = ev.t;
            let target = (t1 - state.t0) / state.factor.powf(beta);
            let u1 = lamperti_segment_inverse(c, beta, state.u0, target);
            (u1, t1)
        };
        let new_t = if forward { t1 } else { u1 };
        // Update clock states for continuing/child blocks.
        for child in &ev.children {
            if child.s_index == S_INDEX_DUST {
                continue;
            }
            let child_factor = if c > 0.0 {
                child.mass * (c * u1).exp()
            } else {
                child.mass
            };
            states.insert(
                child.labels[0],
                ClockState {
                    u0: u1,
                    t0: t1,
                    factor: child_factor,
                },
            );
        }
        out.push(PathEvent {
            t: new_t,
            kind: ev.kind,
            block: ev.block.clone(),
            block_mass: ev.block_mass,
            children: ev.children.clone(),
        });
    }
    out.sort_by(|a, b| {
        a.t.partial_cmp(&b.t)
            .expect("finite event times")
            .then(a.block[0].cmp(&b.block[0]))
    });
    out
}

// ---------------------------------------------------------------------------
// Path queries.
// ---------------------------------------------------------------------------

/// One constant-factor piece of a tagged fragment's mass trace: on path
/// times `[t0, t1)` the mass is `factor · e^{−c·u(t)}` where `u(t)` is the
/// homogeneous time (equal to `t` for homogeneous paths).
#[derive(Debug, Clone, Copy)]
pub struct TraceSegment {
    pub t0: f64,
    pub t1: f64,
    pub factor: f64,
    /// Homogeneous time at `t0`.
    pub u0: f64,
}

/// Exact mass trace of the block containing one label.
#[derive(Debug, Clone)]
pub struct TaggedTrace {
    pub segments: Vec<TraceSegment>,
    /// Path time at which the label's mass drops to 0 (∞ if not observed).
    pub death: f64,
    alpha: f64,
    c: f64,
}

impl TaggedTrace {
    /// Mass of the tagged block at path time `t` (0 from `death` on).
    /// Beyond the last observed segment the trace is extrapolated with no
    /// further jumps.
    pub fn mass_at(&self, t: f64) -> f64 {
        if t >= self.death {
            return 0.0;
        }
        let seg = match self
            .segments
            .iter()
            .rev()
            .find(|s| s.t0 <= t)
        {
            Some(s) => s,
            None => return 1.0,
        };
        self.eval_segment(seg, t)
    }

    /// Left limit `|π(t⁻)|`: the mass just before `t`, using the segment
    /// active on `(t − δ, t)`. Nonzero at `t = death` (the pre-death mass).
    pub fn mass_left_at(&self, t: f64) -> f64 {
        if t > self.death {
            return 0.0;
        }
        let seg = match self.segments.iter().rev().find(|s| s.t0 < t) {
            Some(s) => s,
            None => return 1.0,
        };
        self.eval_segment(seg, t)
    }

    fn eval_segment(&self, seg: &TraceSegment, t: f64) -> f64 {
        let u = if self.alpha == 0.0 {
            seg.u0 + (t - seg.t0)
        } else {
            let beta = -self.alpha;
            let target = (t - seg.t0) / seg.factor.powf(beta);
            lamperti_segment_inverse(self.c, beta, seg.u0, target)
        };
        if u.is_infinite() {
            // Past the self-similar accumulation point of pure erosion.
            return 0.0;
        }
        seg.factor * (-self.c * u).exp()
    }

    /// Mass factor immediately after the last event at or before `t`
    /// (the left limit at `t⁺` without erosion decay).
    pub fn factor_at(&self, t: f64) -> f64 {
        self.segments
            .iter()
            .rev()
            .find(|s| s.t0 <= t)
            .map_or(1.0, |s| s.factor)
    }
}

impl FragmentationPath {
    /// Exact mass trace of the block containing `label`.
    pub fn tagged_fragment(&self, label: u32) -> Result<TaggedTrace, FragmentationError> {
        if label == 0 || label > self.n {
            return Err(FragmentationError::UnknownLabel(label));
        }
        let mut segments: Vec<TraceSegment> = Vec::new();
        let mut death = f64::INFINITY;
        let mut cur = TraceSegment {
            t0: 0.0,
            t1: f64::INFINITY,
            factor: 1.0,
            u0: 0.0,
        };
        for ev in &self.events {
            if !ev.block.contains(&label) {
                continue;
            }
            let t = ev.t;
            let child = ev
                .children
                .iter()
                .find(|ch| ch.labels.contains(&label))
                .expect("events partition their block");
            // Homogeneous time of the event on this block.
            let u1 = if self.alpha == 0.0 {
                t
            } else {
                let beta = -self.alpha;
                let target = (t - cur.t0) / cur.factor.powf(beta);
                lamperti_segment_inverse(self.c, beta, cur.u0, target)
            };
            cur.t1 = t;
            segments.push(cur);
            if child.s_index == S_INDEX_DUST {
                death = t;
                break;
            }
            if ev.kind == EventKind::FloorStop {
                death = t;
                break;
            }
            let factor = if self.c > 0.0 {
                child.mass * (self.c * u1).exp()
            } else {
                child.mass
            };
            cur = TraceSegment {
                t0: t,
                t1: f64::INFINITY,
                factor,
                u0: u1,
            };
        }
        if death.is_infinite() {
            segments.push(cur);
        }
        Ok(TaggedTrace {
            segments,
            death,
            alpha: self.alpha,
            c: self.c,
        })
    }

    /// The set partition of `{1, …, n}` at time `t` (dead labels are
    /// singleton blocks).
    pub fn partition_at(&self, t: f64) -> SetPartition {
        let mut blocks: Vec<Vec<u32>> = vec![(1..=self.n).collect()];
        for ev in &self.events {
            if ev.t > t {
                break;
            }
            if matches!(ev.kind, EventKind::MassJump | EventKind::FloorStop) {
                continue;
            }
            // Replace the block equal to ev.block by the children.
            if let Some(pos) = blocks.iter().position(|b| *b == ev.block) {
                blocks.swap_remove(pos);
                for ch in &ev.children {
                    blocks.push(ch.labels.clone());
                }
            }
        }
        SetPartition::from_blocks(&blocks).expect("events keep blocks disjoint")
    }

    /// Death time `D_i` of every label (∞ when not observed to die).
    pub fn death_times(&self) -> Vec<f64> {
        let mut d = vec![f64::INFINITY; self.n as usize];
        for ev in &self.events {
            match ev.kind {
                EventKind::FloorStop => {
                    for &l in &ev.block {
                        let slot = &mut d[(l - 1) as usize];
                        if slot.is_infinite() {
                            *slot = ev.t;
                        }
                    }
                }
                _ => {
                    for ch in &ev.children {
                        if ch.s_index == S_INDEX_DUST {
                            for &l in &ch.labels {
                                let slot = &mut d[(l - 1) as usize];
                                if slot.is_infinite() {
                                    *slot = ev.t;
                                }
                            }
                        }
                    }
                }
            }
        }
        d
    }

    /// First time labels `i` and `j` are in different blocks (∞ if never
    /// observed apart). Erosion detachments count as splits.
    pub fn split_time(&self, i: u32, j: u32) -> f64 {
        if i == j {
            return f64::INFINITY;
        }
        for ev in &self.events {
            if ev.kind == EventKind::Split || ev.kind == EventKind::Erosion {
                if ev.block.contains(&i) && ev.block.contains(&j) {
                    let ci = ev.children.iter().position(|ch| ch.labels.contains(&i));
                    let cj = ev.children.iter().position(|ch| ch.labels.contains(&j));
                    if ci != cj {
                        return ev.t;
                    }
                }
            }
        }
        f64::INFINITY
    }

    /// First-passage stopping line `L_i = inf{t: |Π_(i)(t)| < eps}`.
    /// `L_i = 0` when `eps > 1`; `L_i = D_i` at the latest (mass hits 0).
    pub fn stopping_line_first_below(&self, eps: f64) -> StoppingLine {
        assert!(eps > 0.0, "threshold must be positive");
        let mut times = Vec::with_capacity(self.n as usize);
        for label in 1..=self.n {
            let trace = self.tagged_fragment(label).expect("label in range");
            if eps > 1.0 {
                times.push(0.0);
                continue;
            }
            let mut hit = trace.death;
            for seg in &trace.segments {
                // Mass on this segment: factor · e^{−c·u}. Jumps happen at
                // segment starts; continuous decay may cross in between.
                if trace.mass_at(seg.t0) < eps {
                    hit = seg.t0;
                    break;
                }
                if self.c > 0.0 {
                    // Crossing time in homogeneous coordinates.
                    let u_cross = (seg.factor / eps).ln() / self.c;
                    let t_cross = if self.alpha == 0.0 {
                        seg.t0 + (u_cross - seg.u0)
                    } else {
                        let beta = -self.alpha;
                        seg.t0
                            + seg.factor.powf(beta)
                                * lamperti_segment(self.c, beta, seg.u0, u_cross)
                    };
                    if t_cross < seg.t1 {
                        hit = t_cross;
                        break;
                    }
                }
            }
            times.push(hit);
        }
        StoppingLine { times }
    }

    /// Restriction to labels `{1, …, m}`: drops the other labels from
    /// blocks and children; events whose restricted block keeps labels in
    /// only one child become mass jumps, events with no retained labels
    /// disappear. Distributionally this is a direct size-`m` simulation.
    pub fn restrict(&self, m: u32) -> FragmentationPath {
        assert!(m >= 1 && m <= self.n);
        let mut events = Vec::new();
        for ev in &self.events {
            let block: Vec<u32> = ev.block.iter().copied().filter(|&l| l <= m).collect();
            if block.is_empty() {
                continue;
            }
            let children: Vec<ChildBlock> = ev
                .children
                .iter()
                .filter_map(|ch| {
                    let labels: Vec<u32> =
                        ch.labels.iter().copied().filter(|&l| l <= m).collect();
                    if labels.is_empty() {
                        None
                    } else {
                        Some(ChildBlock {
                            labels,
                            s_index: ch.s_index,
                            mass: ch.mass,
                        })
                    }
                })
                .collect();
            let kind = match ev.kind {
                EventKind::Split
                    if children.len() == 1 && children[0].s_index >= 0 =>
                {
                    EventKind::MassJump
                }
                k => k,
            };
            events.push(PathEvent {
                t: ev.t,
                kind,
                block,
                block_mass: ev.block_mass,
                children,
            });
        }
        FragmentationPath {
            alpha: self.alpha,
            c: self.c,
            n: m,
            events,
            erosion_times: self.erosion_times[..m as usize].to_vec(),
        }
    }

    /// Path export: `{"alpha", "c", "n", "events": [{"t", "block",
    /// "children": [{"labels", "s_index", "mass"}]}], "erosion_times"}`.
    pub fn to_json(&self) -> serde_json::Value {
        let events: Vec<_> = self
            .events
            .iter()
            .map(|ev| {
                json!({
                    "t": ev.t,
                    "block": ev.block,
                    "children": ev.children.iter().map(|ch| json!({
                        "labels": ch.labels,
                        "s_index": ch.s_index,
                        "mass": ch.mass,
                    })).collect::<Vec<_>>(),
                })
            })
            .collect();
        json!({
            "alpha": self.alpha,
            "c": self.c,
            "n": self.n,
            "events": events,
            "erosion_times": self.erosion_times,
        })
    }
}

impl StoppingLine {
    /// Checks the consistency property on a path: labels sharing a block
    /// at their line time have equal times.
    pub fn is_consistent(&self, path: &FragmentationPath) -> bool {
        for i in 1..=path.n {
            let li = self.times[(i - 1) as usize];
            if li.is_infinite() {
                continue;
            }
            // Mass is cadlag; check the partition just before L_i: labels
            // in the same block at L_i⁻ must share the same L.
            let pi = path.partition_at(li * (1.0 - 1e-12));
            for j in 1..=path.n {
                if j != i && pi.same_block(i, j).unwrap_or(false) {
                    let lj = self.times[(j - 1) as usize];
                    // Same block just before: both cross together or the
                    // partner crossed earlier via its own block history.
                    if (li - lj).abs() > 1e-9 * li.max(1.0) && lj > li {
                        return false;
                    }
                }
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::replicate_rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn binary_params(n: u32, horizon: Horizon) -> FragmentationParams {
        FragmentationParams {
            nu: DislocationMeasure::binary(0.5).unwrap(),
            alpha: 0.0,
            c: 0.0,
            n,
            horizon,
        }
    }

    #[test]
    fn validation_rejects_trivial_and_floorless() {
        let trivial = FragmentationParams {
            nu: DislocationMeasure::finite(vec![]).unwrap(),
            alpha: 0.0,
            c: 0.0,
            n: 1,
            horizon: Horizon::Time(1.0),
        };
        assert!(matches!(
            trivial.validate(),
            Err(FragmentationError::TrivialProcess)
        ));
        let floorless = FragmentationParams {
            horizon: Horizon::UntilDead { mass_floor: 0.0 },
            ..binary_params(2, Horizon::Time(1.0))
        };
        assert!(matches!(
            floorless.validate(),
            Err(FragmentationError::HorizonRequired)
        ));
    }

    #[test]
    fn pure_erosion_only_erosion_events() {
        // ν = 0, c > 0: only erosion; T₁ ~ Exp(c).
        let params = FragmentationParams {
            nu: DislocationMeasure::finite(vec![]).unwrap(),
            alpha: 0.0,
            c: 2.0,
            n: 2,
            horizon: Horizon::UntilDead { mass_floor: 0.0 },
        };
        let mut sum = 0.0;
        let reps = 20_000;
        for r in 0..reps {
            let mut rng = replicate_rng(100, r);
            let path = simulate_homogeneous(&params, &mut rng).unwrap();
            assert!(path.events.iter().all(|e| e.kind == EventKind::Erosion));
            sum += path.death_times()[0];
        }
        let mean = sum / reps as f64;
        // E[T₁] = 1/c = 0.5; SE = 0.5/√reps ≈ 0.0035.
        assert!(
            (mean - 0.5).abs() < 0.012,
            "mean erosion death {mean} ≈ 0.5"
        );
    }

    #[test]
    fn binary_pair_split_time_is_exponential_half() {
        // Oracle: split_rate(binary(1/2), 2) = 1/2, so the visible split of
        // {1,2} is Exp(1/2) even though the engine runs clocks at rate 1.
        let params = binary_params(2, Horizon::Time(50.0));
        let mut sum = 0.0;
        let reps = 20_000;
        for r in 0..reps {
            let mut rng = replicate_rng(101, r);
            let path = simulate_homogeneous(&params, &mut rng).unwrap();
            sum += path.split_time(1, 2);
        }
        let mean = sum / reps as f64;
        // E = 2, SE = 2/√reps ≈ 0.014.
        assert!((mean - 2.0).abs() < 0.06, "mean split time {mean} ≈ 2");
    }

    #[test]
    fn kill_only_death_time_is_exponential() {
        let params = FragmentationParams {
            nu: DislocationMeasure::kill_only(0.8).unwrap(),
            alpha: 0.0,
            c: 0.0,
            n: 1,
            horizon: Horizon::UntilDead { mass_floor: 0.0 },
        };
        let mut sum = 0.0;
        let reps = 20_000;
        for r in 0..reps {
            let mut rng = replicate_rng(102, r);
            let path = simulate_homogeneous(&params, &mut rng).unwrap();
            sum += path.death_times()[0];
        }
        let mean = sum / reps as f64;
        // E[Exp(0.8)] = 1.25, SE ≈ 0.009.
        assert!((mean - 1.25).abs() < 0.03, "mean kill time {mean} ≈ 1.25");
    }

    #[test]
    fn mass_additivity_at_every_split() {
        let params = FragmentationParams {
            nu: DislocationMeasure::uniform_split(2, &[0.25, 0.0, 0.75]).unwrap(),
            alpha: 0.0,
            c: 0.3,
            n: 8,
            horizon: Horizon::UntilDead { mass_floor: 1e-4 },
        };
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..50 {
            let path = simulate_homogeneous(&params, &mut rng).unwrap();
            for ev in &path.events {
                // Children with distinct entries: each mass = parent × entry;
                // entries sum ≤ 1 with dust making up the rest.
                let child_sum: f64 = ev
                    .children
                    .iter()
                    .map(|ch| ch.mass)
                    .sum();
                assert!(
                    child_sum <= ev.block_mass + 1e-12,
                    "child masses exceed parent"
                );
            }
        }
    }

    #[test]
    fn mass_jump_events_preserve_partition_but_shrink_mass() {
        // A singleton block under binary(1/2) only ever mass-jumps.
        let params = binary_params(1, Horizon::Time(3.0));
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let path = simulate_homogeneous(&params, &mut rng).unwrap();
        assert!(!path.events.is_empty(), "rate-1 clock on [0,3] rings");
        assert!(path
            .events
            .iter()
            .all(|e| e.kind == EventKind::MassJump));
        let trace = path.tagged_fragment(1).unwrap();
        // Each jump halves the mass.
        let expected = 0.5f64.powi(path.events.len() as i32);
        assert!(
            (trace.mass_at(3.0) - expected).abs() < 1e-12,
            "mass after {} halvings",
            path.events.len()
        );
    }

    #[test]
    fn tagged_moment_matches_laplace_exponent() {
        // Oracle from the analytic layer: E[|Π_(1)(t)|^q] = e^{−tφ(q)} with
        // φ(q) = ψ(q+1) = 1 − 2^{−q} for binary(1/2), c = 0.
        let params = binary_params(1, Horizon::Time(1.0));
        let t = 1.0;
        let q = 1.0;
        let reps = 10_000u64;
        let mut samples = Vec::with_capacity(reps as usize);
        for r in 0..reps {
            let mut rng = replicate_rng(103, r);
            let path = simulate_homogeneous(&params, &mut rng).unwrap();
            samples.push(path.tagged_fragment(1).unwrap().mass_at(t).powf(q));
        }
        let est = crate::stats::mean_se(&samples);
        let expect = (-t * (1.0 - 0.5f64.powf(q))).exp();
        assert!(
            est.z_against(expect) < 3.0,
            "E[mass^1] {} vs {expect} (z = {})",
            est.mean,
            est.z_against(expect)
        );
    }

    #[test]
    fn lamperti_constant_mass_identity_and_half_mass_stretch() {
        // Hand path: one mass jump to 1/2 at homogeneous time 1 on a
        // single-label block, c = 0.
        let path = FragmentationPath {
            alpha: 0.0,
            c: 0.0,
            n: 1,
            events: vec![PathEvent {
                t: 1.0,
                kind: EventKind::MassJump,
                block: vec![1],
                block_mass: 1.0,
                children: vec![ChildBlock {
                    labels: vec![1],
                    s_index: 0,
                    mass: 0.5,
                }],
            }],
            erosion_times: vec![f64::INFINITY],
        };
        let ss = apply_lamperti(&path, -1.0).unwrap();
        // Mass 1 before the jump: identity up to t = 1.
        assert!((ss.events[0].t - 1.0).abs() < 1e-15);
        let trace = ss.tagged_fragment(1).unwrap();
        // After the jump, mass 1/2: ss time runs at half speed, so at ss
        // time 1 + Δ the mass is still 1/2 and homogeneous time is 1 + 2Δ.
        assert!((trace.mass_at(1.5) - 0.5).abs() < 1e-12);
        let back = invert_lamperti(&ss).unwrap();
        assert!((back.events[0].t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lamperti_round_trip_on_simulated_paths() {
        let params = FragmentationParams {
            nu: DislocationMeasure::binary(0.4).unwrap(),
            alpha: -1.0,
            c: 0.5,
            n: 6,
            horizon: Horizon::UntilDead { mass_floor: 1e-3 },
        };
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..20 {
            let hom = simulate_homogeneous(&params, &mut rng).unwrap();
            let ss = apply_lamperti(&hom, -1.0).unwrap();
            let back = invert_lamperti(&ss).unwrap();
            assert_eq!(back.events.len(), hom.events.len());
            for (a, b) in hom.events.iter().zip(&back.events) {
                let rel = (a.t - b.t).abs() / a.t.max(1e-12);
                assert!(rel < 1e-9, "round trip time error {rel}");
            }
        }
    }

    #[test]
    fn erosion_death_time_closed_form_under_lamperti() {
        // c > 0, ν = 0, α = −1, n = 1: D₁ = (1 − e^{−cT₁})/c.
        let params = FragmentationParams {
            nu: DislocationMeasure::finite(vec![]).unwrap(),
            alpha: -1.0,
            c: 2.0,
            n: 1,
            horizon: Horizon::UntilDead { mass_floor: 0.0 },
        };
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        for _ in 0..50 {
            let hom = simulate_homogeneous(&params, &mut rng).unwrap();
            let t1 = hom.erosion_times[0];
            let ss = apply_lamperti(&hom, -1.0).unwrap();
            let d1 = ss.death_times()[0];
            let expect = (1.0 - (-2.0 * t1).exp()) / 2.0;
            assert!(
                (d1 - expect).abs() < 1e-12,
                "D₁ {d1} vs closed form {expect}"
            );
        }
    }

    #[test]
    fn self_similar_death_times_finite() {
        // Conservative binary with α = −1 and a mass floor: every label
        // gets a finite death time.
        let params = FragmentationParams {
            nu: DislocationMeasure::binary(0.5).unwrap(),
            alpha: -1.0,
            c: 0.0,
            n: 4,
            horizon: Horizon::UntilDead { mass_floor: 1e-6 },
        };
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for _ in 0..20 {
            let path = simulate(&params, &mut rng).unwrap();
            assert!(path
                .death_times()
                .iter()
                .all(|d| d.is_finite()));
        }
    }

    #[test]
    fn partition_path_is_decreasing() {
        let params = FragmentationParams {
            nu: DislocationMeasure::uniform_split(3, &[0.1, 0.0, 0.4, 0.5]).unwrap(),
            alpha: 0.0,
            c: 0.5,
            n: 10,
            horizon: Horizon::Time(4.0),
        };
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let path = simulate_homogeneous(&params, &mut rng).unwrap();
        let times = [0.0, 0.5, 1.0, 2.0, 4.0];
        for w in times.windows(2) {
            let early = path.partition_at(w[0]);
            let late = path.partition_at(w[1]);
            // later is finer: intersecting changes nothing.
            assert_eq!(late.intersect(&early).unwrap(), late);
        }
    }

    #[test]
    fn split_times_bounded_by_death_times() {
        let params = FragmentationParams {
            nu: DislocationMeasure::binary(0.5).unwrap(),
            alpha: -0.5,
            c: 0.1,
            n: 5,
            horizon: Horizon::UntilDead { mass_floor: 1e-5 },
        };
        let mut rng = ChaCha12Rng::seed_from_u64(15);
        let path = simulate(&params, &mut rng).unwrap();
        let d = path.death_times();
        for i in 1..=5u32 {
            for j in (i + 1)..=5 {
                let dij = path.split_time(i, j);
                let bound = d[(i - 1) as usize].min(d[(j - 1) as usize]);
                assert!(
                    dij <= bound + 1e-12,
                    "D_{{i,j}} {dij} ≤ min(D_i, D_j) {bound}"
                );
            }
        }
    }

    #[test]
    fn stopping_line_pure_erosion_closed_form() {
        // L_i = min(T_i, ln(1/eps)/c).
        let params = FragmentationParams {
            nu: DislocationMeasure::finite(vec![]).unwrap(),
            alpha: 0.0,
            c: 1.5,
            n: 3,
            horizon: Horizon::UntilDead { mass_floor: 0.0 },
        };
        let mut rng = ChaCha12Rng::seed_from_u64(16);
        let path = simulate_homogeneous(&params, &mut rng).unwrap();
        let eps = 0.2;
        let line = path.stopping_line_first_below(eps);
        for i in 0..3 {
            let expect = path.erosion_times[i].min((1.0 / eps).ln() / 1.5);
            assert!(
                (line.times[i] - expect).abs() < 1e-9,
                "L {} vs {expect}",
                line.times[i]
            );
        }
    }

    #[test]
    fn stopping_line_above_one_is_zero_and_consistent() {
        let params = binary_params(6, Horizon::Time(10.0));
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let path = simulate_homogeneous(&params, &mut rng).unwrap();
        let everything = path.stopping_line_first_below(1.5);
        assert!(everything.times.iter().all(|&t| t == 0.0));
        for eps in [0.5, 0.1] {
            let line = path.stopping_line_first_below(eps);
            assert!(line.is_consistent(&path), "stopping line at {eps}");
        }
    }

    #[test]
    fn restriction_preserves_marginal_law() {
        // KS test: death time of label 1 from direct n = 1 runs vs
        // restricted n = 8 runs, uniform-split measure with kill.
        let direct = FragmentationParams {
            nu: DislocationMeasure::uniform_split(2, &[0.25, 0.0, 0.75]).unwrap(),
            alpha: 0.0,
            c: 0.0,
            n: 1,
            horizon: Horizon::UntilDead { mass_floor: 0.0 },
        };
        let joint = FragmentationParams {
            n: 8,
            ..direct.clone()
        };
        let reps = 10_000u64;
        let mut a = Vec::new();
        let mut b = Vec::new();
        for r in 0..reps {
            let mut rng = replicate_rng(104, r);
            a.push(simulate_homogeneous(&direct, &mut rng).unwrap().death_times()[0]);
            let mut rng = replicate_rng(105, r);
            b.push(
                simulate_homogeneous(&joint, &mut rng)
                    .unwrap()
                    .restrict(1)
                    .death_times()[0],
            );
        }
        let p = crate::stats::ks_two_sample_pvalue(&a, &b);
        assert!(p > 0.01, "KS p-value {p} for restriction coupling");
    }

    #[test]
    fn json_export_shape() {
        let params = binary_params(3, Horizon::Time(2.0));
        let mut rng = ChaCha12Rng::seed_from_u64(18);
        let path = simulate_homogeneous(&params, &mut rng).unwrap();
        let v = path.to_json();
        assert_eq!(v["n"], 3);
        assert_eq!(v["alpha"], 0.0);
        assert!(v["events"].is_array());
        assert_eq!(v["erosion_times"].as_array().unwrap().len(), 3);
        if let Some(ev) = v["events"].as_array().unwrap().first() {
            assert!(ev["t"].is_number());
            assert!(ev["block"].is_array());
            assert!(ev["children"][0]["s_index"].is_number());
        }
    }
}
