//! The tilted (spine) fragmentation and the martingale leaf measure.
//!
//! Under the size-biased change of measure with exponent `p*`, the tagged
//! fragment becomes a *spine* that never dies: its jumps form a Poisson
//! point process whose atoms pick a dislocation atom `k` with weight
//! `w_k·Σᵢ (sᵢᵏ)^{p*}` and an entry `i` with weight `(sᵢᵏ)^{p*}` (kill
//! atoms get weight 0 and are never seen). The spine's log-mass is a
//! subordinator with Laplace exponent `φ*(q) = ψ(q + p*)`, and
//! `I = ∫₀^∞ mass(t)^{|α|} dt` is the self-similar height of the tagged
//! leaf. The same tilting evaluated on plain paths is the reweighting by
//! `|Π₁(t)|^{p*−1}`; [`tilted_marginal_check`] compares the two estimators.

use crate::dislocation::{DislocationError, DislocationMeasure};
use crate::fragmentation::{FragmentationParams, FragmentationPath, Horizon, S_INDEX_DUST,
    simulate_homogeneous};
use crate::malthus::{psi, MalthusError, PsiValue};
use crate::partitions::MassPartition;
use crate::seeds::replicate_rng;
use crate::stats::{mean_se, MeanSe};
use rand::Rng;
use thiserror::Error;

/// Family measures are replaced by their truncation at this tolerance for
/// spine sampling (the discarded atoms move the spine by less than this
/// much total rate).
const SPINE_FAMILY_TOL: f64 = 1e-6;

/// Event cap for the adaptive height integration.
const MAX_SPINE_EVENTS: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum TiltedError {
    #[error("the tilted atom rate is zero (ν has no surviving entries)")]
    ZeroSpineRate,
    #[error("height tail bound not met within {0} spine events")]
    HorizonExhausted(usize),
    #[error(transparent)]
    Measure(#[from] DislocationError),
    #[error(transparent)]
    Analytic(#[from] MalthusError),
}

/// One atom of the spine point process.
#[derive(Debug, Clone)]
pub struct SpineAtom {
    /// Homogeneous time.
    pub t: f64,
    /// Chosen entry index within the partition.
    pub index: usize,
    /// Chosen entry value `s_i` (the spine mass factor).
    pub entry: f64,
    pub partition: MassPartition,
    /// Off-spine children `(entry index j ≠ i, mass at birth)`.
    pub off_spine: Vec<(usize, f64)>,
}

/// A spine realization on `[0, horizon]` (homogeneous time).
#[derive(Debug, Clone)]
pub struct SpinePath {
    pub c: f64,
    pub p_star: f64,
    pub horizon: f64,
    pub atoms: Vec<SpineAtom>,
}

impl SpinePath {
    /// Product of chosen entries up to and including time `t`.
    pub fn factor_at(&self, t: f64) -> f64 {
        self.atoms
            .iter()
            .take_while(|a| a.t <= t)
            .map(|a| a.entry)
            .product()
    }

    /// Spine mass `e^{−ct}·Π_{u≤t} s_{i(u)}`; strictly positive.
    pub fn mass_at(&self, t: f64) -> f64 {
        self.factor_at(t) * (-self.c * t).exp()
    }

    /// Number of mass-changing atoms up to `t`.
    pub fn jump_count_at(&self, t: f64) -> usize {
        self.atoms
            .iter()
            .take_while(|a| a.t <= t)
            .filter(|a| a.entry < 1.0)
            .count()
    }

    /// `∫₀^{horizon} mass(t)^{|α|} dt`, exactly, piecewise; when `c > 0`
    /// the erosion-only tail beyond the horizon is added in closed form.
    pub fn height_integral(&self, alpha: f64) -> f64 {
        assert!(alpha < 0.0, "height integral needs a negative index");
        let beta = -alpha;
        let mut total = 0.0;
        let mut factor = 1.0f64;
        let mut t0 = 0.0;
        for atom in &self.atoms {
            total += segment_integral(factor, self.c, beta, t0, atom.t);
            factor *= atom.entry;
            t0 = atom.t;
        }
        total += segment_integral(factor, self.c, beta, t0, self.horizon);
        if self.c > 0.0 {
            total += segment_integral(factor, self.c, beta, self.horizon, f64::INFINITY);
        }
        total
    }
}

/// `∫_{t0}^{t1} (f·e^{−cu})^β du` in closed form.
fn segment_integral(f: f64, c: f64, beta: f64, t0: f64, t1: f64) -> f64 {
    let fb = f.powf(beta);
    if c == 0.0 {
        fb * (t1 - t0)
    } else {
        let cb = c * beta;
        let upper = if t1.is_infinite() { 0.0 } else { (-cb * t1).exp() };
        fb * ((-cb * t0).exp() - upper) / cb
    }
}

/// Prepared sampler for the tilted atom process.
struct SpineSampler {
    partitions: Vec<MassPartition>,
    /// Cumulative tilted atom weights `w_k·Σᵢ sᵢ^{p*}`.
    cumulative: Vec<f64>,
    /// Per-atom cumulative entry weights `sᵢ^{p*}`.
    entry_cumulative: Vec<Vec<f64>>,
    total: f64,
}

impl SpineSampler {
    fn new(nu: &DislocationMeasure, p_star: f64) -> Result<SpineSampler, TiltedError> {
        let finite;
        let (weights, partitions): (Vec<f64>, Vec<MassPartition>) = match nu.atoms() {
            Some((w, s)) => (w.to_vec(), s.to_vec()),
            None => {
                finite = nu.truncate(SPINE_FAMILY_TOL)?;
                let (w, s) = finite.atoms().expect("truncation is finite");
                (w.to_vec(), s.to_vec())
            }
        };
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut entry_cumulative = Vec::with_capacity(weights.len());
        let mut total = 0.0;
        for (w, s) in weights.iter().zip(&partitions) {
            let mut ec = Vec::with_capacity(s.parts().len());
            let mut acc = 0.0;
            for &e in s.parts() {
                acc += e.powf(p_star);
                ec.push(acc);
            }
            total += w * acc;
            cumulative.push(total);
            entry_cumulative.push(ec);
        }
        if total <= 0.0 {
            return Err(TiltedError::ZeroSpineRate);
        }
        Ok(SpineSampler {
            partitions,
            cumulative,
            entry_cumulative,
            total,
        })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let u = rng.random::<f64>() * self.total;
        let k = self.cumulative.partition_point(|&c| c <= u);
        let k = k.min(self.cumulative.len() - 1);
        let ec = &self.entry_cumulative[k];
        let base = if k == 0 { 0.0 } else { self.cumulative[k - 1] };
        let w_total = self.cumulative[k] - base;
        let scale = ec.last().copied().unwrap_or(0.0) / w_total.max(f64::MIN_POSITIVE);
        let v = (u - base) * scale;
        let i = ec.partition_point(|&c| c <= v).min(ec.len() - 1);
        (k, i)
    }
}

fn exp_sample<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    -(1.0 - rng.random::<f64>()).ln() / rate
}

/// Simulates the spine point process on `[0, horizon]` (homogeneous time).
/// Kill atoms have tilted weight 0 and never appear; the spine never dies.
pub fn simulate_spine<R: Rng + ?Sized>(
    nu: &DislocationMeasure,
    c: f64,
    p_star: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<SpinePath, TiltedError> {
    let sampler = SpineSampler::new(nu, p_star)?;
    let mut atoms = Vec::new();
    let mut t = 0.0;
    let mut factor = 1.0f64;
    loop {
        t += exp_sample(rng, sampler.total);
        if t > horizon {
            break;
        }
        let (k, i) = sampler.sample(rng);
        let partition = sampler.partitions[k].clone();
        let entry = partition.parts()[i];
        let birth_mass = factor * (-c * t).exp();
        let off_spine = partition
            .parts()
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(j, &s)| (j, birth_mass * s))
            .collect();
        factor *= entry;
        atoms.push(SpineAtom {
            t,
            index: i,
            entry,
            partition,
            off_spine,
        });
    }
    Ok(SpinePath {
        c,
        p_star,
        horizon,
        atoms,
    })
}

/// Self-similar height `I = ∫₀^∞ mass(t)^{|α|} dt` of the tagged leaf,
/// by adaptive spine simulation: the window is extended until the expected
/// remaining contribution `mass(t)^{|α|}/φ*(|α|)` drops below `tol`.
pub fn spine_height<R: Rng + ?Sized>(
    nu: &DislocationMeasure,
    c: f64,
    p_star: f64,
    alpha: f64,
    tol: f64,
    rng: &mut R,
) -> Result<f64, TiltedError> {
    assert!(alpha < 0.0, "height needs a negative index");
    let beta = -alpha;
    // E[remaining | mass m] = m^β·E[I] = m^β/φ*(β).
    let phi_beta = match psi(nu, c, beta + p_star, 1e-9)? {
        PsiValue::Finite(v) if v > 0.0 => v,
        _ => return Err(TiltedError::HorizonExhausted(0)),
    };
    let sampler = SpineSampler::new(nu, p_star)?;
    let mut t = 0.0;
    let mut factor = 1.0f64;
    let mut total = 0.0;
    for _ in 0..MAX_SPINE_EVENTS {
        let mass = factor * (-c * t).exp();
        if mass.powf(beta) / phi_beta < tol {
            return Ok(total);
        }
        let t1 = t + exp_sample(rng, sampler.total);
        total += segment_integral(factor, c, beta, t, t1);
        let (k, i) = sampler.sample(rng);
        factor *= sampler.partitions[k].parts()[i];
        t = t1;
    }
    Err(TiltedError::HorizonExhausted(MAX_SPINE_EVENTS))
}

/// Truncated-martingale approximation of the leaf measure μ*: every block
/// recorded by a homogeneous path gets the weight
/// `W = Σ_{descendant blocks alive at the horizon} mass(horizon)^{p*}`.
#[derive(Debug, Clone)]
pub struct LeafMeasureApprox {
    pub horizon: f64,
    /// ≈ W, the total martingale limit mass.
    pub root_weight: f64,
    /// Per path event (index-aligned, events after the horizon skipped as
    /// `None`): weight of the block undergoing the event and of each child.
    pub event_weights: Vec<Option<EventWeight>>,
}

#[derive(Debug, Clone)]
pub struct EventWeight {
    pub block_weight: f64,
    pub child_weights: Vec<f64>,
}

/// Computes μ* node weights on a homogeneous path at a fixed horizon by a
/// single reverse sweep; additivity `W_block = Σ W_children` is exact by
/// construction and dead (dust) children get exactly 0.
pub fn mu_star_weights(
    path: &FragmentationPath,
    p_star: f64,
    horizon: f64,
) -> LeafMeasureApprox {
    use std::collections::HashMap;
    // Weight of the live block whose least label is the key.
    let mut weight: HashMap<u32, f64> = HashMap::new();
    let partition = path.partition_at(horizon);
    for block in partition.blocks() {
        let least = block[0];
        let mass = path
            .tagged_fragment(least)
            .expect("partition labels in range")
            .mass_at(horizon);
        weight.insert(least, if mass > 0.0 { mass.powf(p_star) } else { 0.0 });
    }
    let mut event_weights: Vec<Option<EventWeight>> = vec![None; path.events.len()];
    for (idx, ev) in path.events.iter().enumerate().rev() {
        if ev.t > horizon {
            continue;
        }
        let mut child_weights = Vec::with_capacity(ev.children.len());
        let mut total = 0.0;
        for ch in &ev.children {
            let w = if ch.s_index == S_INDEX_DUST {
                0.0
            } else {
                weight.remove(&ch.labels[0]).unwrap_or(0.0)
            };
            total += w;
            child_weights.push(w);
        }
        weight.insert(ev.block[0], total);
        event_weights[idx] = Some(EventWeight {
            block_weight: total,
            child_weights,
        });
    }
    let root_weight = weight.get(&1).copied().unwrap_or(0.0);
    LeafMeasureApprox {
        horizon,
        root_weight,
        event_weights,
    }
}

/// Bounded statistics of the tagged mass trajectory on `[0, t]`, evaluable
/// both on a spine realization and on a plain path's tagged fragment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Statistic {
    /// f ≡ 1 (the reweighted estimate is exactly the martingale mean).
    One,
    /// Tagged mass at `t`.
    Mass,
    /// Tagged mass squared at `t`.
    MassSquared,
    /// Indicator that the tagged mass at `t` exceeds the threshold.
    IndicatorAbove(f64),
    /// Number of mass-changing jumps up to `t`.
    JumpCount,
}

impl Statistic {
    pub fn eval_spine(&self, spine: &SpinePath, t: f64) -> f64 {
        match *self {
            Statistic::One => 1.0,
            Statistic::Mass => spine.mass_at(t),
            Statistic::MassSquared => spine.mass_at(t).powi(2),
            Statistic::IndicatorAbove(x) => {
                if spine.mass_at(t) > x {
                    1.0
                } else {
                    0.0
                }
            }
            Statistic::JumpCount => spine.jump_count_at(t) as f64,
        }
    }

    /// Evaluated on the tagged fragment (label 1) of a homogeneous path.
    pub fn eval_forward(&self, path: &FragmentationPath, t: f64) -> f64 {
        let trace = path.tagged_fragment(1).expect("label 1 exists");
        match *self {
            Statistic::One => 1.0,
            Statistic::Mass => trace.mass_at(t),
            Statistic::MassSquared => trace.mass_at(t).powi(2),
            Statistic::IndicatorAbove(x) => {
                if trace.mass_at(t) > x {
                    1.0
                } else {
                    0.0
                }
            }
            Statistic::JumpCount => {
                let mut count = 0;
                let mut mass = 1.0;
                for seg in &trace.segments {
                    if seg.t0 > t {
                        break;
                    }
                    if seg.factor < mass {
                        count += 1;
                    }
                    mass = seg.factor;
                }
                count as f64
            }
        }
    }
}

/// Result of comparing the two estimators of a tilted expectation.
#[derive(Debug, Clone, Copy)]
pub struct TiltedCheck {
    pub spine: MeanSe,
    pub reweighted: MeanSe,
    /// `|A − B| / sqrt(se_A² + se_B²)`.
    pub z_joint: f64,
}

/// Estimates `E*[f]` two ways: directly from spine simulation, and from
/// plain simulation reweighted by `|Π₁(t)|^{p*−1}·1_{alive}`; the two must
/// agree within Monte Carlo error.
pub fn tilted_marginal_check(
    nu: &DislocationMeasure,
    c: f64,
    p_star: f64,
    t: f64,
    statistic: Statistic,
    replicates: u64,
    master_seed: u64,
) -> Result<TiltedCheck, TiltedError> {
    let mut spine_samples = Vec::with_capacity(replicates as usize);
    let mut forward_samples = Vec::with_capacity(replicates as usize);
    let params = FragmentationParams {
        nu: nu.clone(),
        alpha: 0.0,
        c,
        n: 1,
        horizon: Horizon::Time(t),
    };
    for r in 0..replicates {
        let mut rng = replicate_rng(master_seed, 2 * r);
        let spine = simulate_spine(nu, c, p_star, t, &mut rng)?;
        spine_samples.push(statistic.eval_spine(&spine, t));

        let mut rng = replicate_rng(master_seed, 2 * r + 1);
        let path = simulate_homogeneous(&params, &mut rng).map_err(MalthusError::from)?;
        let mass = path.tagged_fragment(1).expect("label 1").mass_at(t);
        let sample = if mass > 0.0 {
            mass.powf(p_star - 1.0) * statistic.eval_forward(&path, t)
        } else {
            0.0
        };
        forward_samples.push(sample);
    }
    let spine = mean_se(&spine_samples);
    let reweighted = mean_se(&forward_samples);
    let z_joint = (spine.mean - reweighted.mean).abs()
        / (spine.se.powi(2) + reweighted.se.powi(2)).sqrt().max(f64::MIN_POSITIVE);
    Ok(TiltedCheck {
        spine,
        reweighted,
        z_joint,
    })
}

/// `E[I^{−γ}]`: Monte Carlo over spine heights for `γ ≤ 1`, and the
/// moment recursion `E[I^{−γ}] = (−φ*(α(γ−1))/(γ−1))·E[I^{−γ+1}]` above 1.
pub fn inverse_height_moment(
    nu: &DislocationMeasure,
    c: f64,
    p_star: f64,
    alpha: f64,
    gamma: f64,
    replicates: u64,
    master_seed: u64,
) -> Result<f64, TiltedError> {
    assert!(gamma > 0.0, "moment order must be positive");
    if gamma > 1.0 {
        let coeff = match psi(nu, c, p_star + alpha.abs() * -(gamma - 1.0), 1e-9)? {
            PsiValue::Finite(v) if v < 0.0 => -v / (gamma - 1.0),
            // φ*(α(γ−1)) ≥ 0 or −∞: the recursion coefficient is 0 or ∞.
            PsiValue::Finite(_) => 0.0,
            PsiValue::MinusInfinity => return Ok(f64::INFINITY),
        };
        let lower = inverse_height_moment(nu, c, p_star, alpha, gamma - 1.0,
            replicates, master_seed)?;
        return Ok(coeff * lower);
    }
    if gamma == 0.0 {
        return Ok(1.0);
    }
    let mut samples = Vec::with_capacity(replicates as usize);
    for r in 0..replicates {
        let mut rng = replicate_rng(master_seed, r);
        let i = spine_height(nu, c, p_star, alpha, 1e-9, &mut rng)?;
        samples.push(i.powf(-gamma));
    }
    Ok(mean_se(&samples).mean)
}

/// Frostman energy bound factorization: the product of `E[I^{−γ}]`,
/// `1/φ*(p* + αγ)`, and `∫ Σᵢ sᵢ^{p*} Σ_{j≠i} sⱼ^{p*+αγ} dν`; `+∞` when
/// the middle factor's argument leaves the positivity region (exactly the
/// `γ ≥ p*/|α|` boundary) or any factor is infinite. Finite for
/// `0 < γ < p*/|α|`, certifying the dimension lower bound.
pub fn frostman_energy(
    nu: &DislocationMeasure,
    c: f64,
    p_star: f64,
    alpha: f64,
    gamma: f64,
    replicates: u64,
    master_seed: u64,
) -> Result<f64, TiltedError> {
    assert!(gamma > 0.0, "energy order must be positive");
    let q = p_star + alpha * gamma;
    let second = match psi(nu, c, q + p_star, 1e-9)? {
        PsiValue::Finite(v) if v > 0.0 => 1.0 / v,
        _ => return Ok(f64::INFINITY),
    };
    let third = nu_cross_integral(nu, p_star, q)?;
    if !third.is_finite() {
        return Ok(f64::INFINITY);
    }
    let first = inverse_height_moment(nu, c, p_star, alpha, gamma, replicates, master_seed)?;
    Ok(first * second * third)
}

/// `∫ Σᵢ sᵢ^{p} Σ_{j≠i} sⱼ^{q} dν = ∫ [(Σ sᵖ)(Σ s^q) − Σ s^{p+q}] dν`.
fn nu_cross_integral(
    nu: &DislocationMeasure,
    p: f64,
    q: f64,
) -> Result<f64, TiltedError> {
    let finite;
    let (weights, partitions) = match nu.atoms() {
        Some((w, s)) => (w, s),
        None => {
            finite = nu.truncate(SPINE_FAMILY_TOL)?;
            let (w, s) = finite.atoms().expect("truncation is finite");
            (w, s)
        }
    };
    let mut total = 0.0;
    for (w, s) in weights.iter().zip(partitions) {
        let a = s.sum_pow(p);
        let b = s.sum_pow(q);
        let cross = a * b - s.sum_pow(p + q);
        total += w * cross;
        if !total.is_finite() {
            return Ok(f64::INFINITY);
        }
    }
    Ok(total)
}
