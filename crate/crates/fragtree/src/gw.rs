//! Possibly-infinite Galton-Watson processes and their fragmentation coupling.
//!
//! Offspring distributions may put mass on `∞`; the generating function
//! uses the convention `x^∞ := 0` for `x < 1`, so `F` can be
//! discontinuous at 1 and the smallest fixed point (the extinction
//! probability) is still found by monotone iteration from 0.
//!
//! A supercritical GW tree with at most `N` children per vertex and
//! geometric edge rescaling by `1/a` embeds into a self-similar
//! fragmentation with `c = 0`, `α = −log a / log N`, and dislocation
//! measure `Σ p_i δ_{s^i}` where `s^i` has `i` entries equal to `1/N`
//! (with `p₀` as kill weight). Its boundary dimension `log m / log a` is
//! the fragmentation leaf-set dimension, which this module checks
//! empirically.

use crate::dimension::{dimension_report, DimensionError, DimensionReport};
use crate::dislocation::{DislocationError, DislocationMeasure};
use crate::fragmentation::{FragmentationParams, Horizon};
use crate::seeds::replicate_rng;
use crate::stats::{mean_se, MeanSe};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GwError {
    #[error("invalid offspring distribution: {0}")]
    InvalidDistribution(String),
    #[error("offspring support is unbounded; truncate to a finite maximum first")]
    InfiniteSupport,
    #[error(transparent)]
    Measure(#[from] DislocationError),
    #[error(transparent)]
    Dimension(#[from] DimensionError),
}

/// Offspring law on `{0, 1, 2, …} ∪ {∞}`.
#[derive(Debug, Clone)]
pub struct OffspringDistribution {
    /// `probs[k] = P(Z = k)`.
    probs: Vec<f64>,
    /// `P(Z = ∞)`.
    p_inf: f64,
}

impl OffspringDistribution {
    pub fn new(probs: Vec<f64>, p_inf: f64) -> Result<Self, GwError> {
        if probs.iter().chain([&p_inf]).any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(GwError::InvalidDistribution(
                "probabilities must lie in [0, 1]".to_string(),
            ));
        }
        let total: f64 = probs.iter().sum::<f64>() + p_inf;
        if (total - 1.0).abs() > 1e-12 {
            return Err(GwError::InvalidDistribution(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        let mut probs = probs;
        while probs.len() > 1 && probs.last() == Some(&0.0) {
            probs.pop();
        }
        Ok(Self { probs, p_inf })
    }

    /// Finite-support law: `probs[k] = P(Z = k)`, no mass at infinity.
    pub fn finite(probs: Vec<f64>) -> Result<Self, GwError> {
        Self::new(probs, 0.0)
    }

    pub fn p_inf(&self) -> f64 {
        self.p_inf
    }

    /// Largest `k` with `p_k > 0`, or `None` when `p_∞ > 0`.
    pub fn max_offspring(&self) -> Option<usize> {
        if self.p_inf > 0.0 {
            return None;
        }
        Some(
            self.probs
                .iter()
                .rposition(|&p| p > 0.0)
                .unwrap_or(0),
        )
    }

    /// `m = Σ k·p_k`, `+∞` when `p_∞ > 0`.
    pub fn mean_offspring(&self) -> f64 {
        if self.p_inf > 0.0 {
            return f64::INFINITY;
        }
        self.probs
            .iter()
            .enumerate()
            .map(|(k, &p)| k as f64 * p)
            .sum()
    }

    /// `F(x) = E[x^Z]` with `x^∞ := 0` for `x < 1` (so `F(1) = 1` but
    /// `F(1⁻)` may jump).
    pub fn pgf(&self, x: f64) -> f64 {
        assert!((0.0..=1.0).contains(&x), "pgf argument must lie in [0, 1]");
        let finite: f64 = self
            .probs
            .iter()
            .enumerate()
            .map(|(k, &p)| p * x.powi(k as i32))
            .sum();
        if x == 1.0 {
            finite + self.p_inf
        } else {
            finite
        }
    }

    /// Draws one offspring count; `None` means `∞`.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<usize> {
        let mut u = rng.random::<f64>();
        for (k, &p) in self.probs.iter().enumerate() {
            u -= p;
            if u <= 0.0 {
                return Some(k);
            }
        }
        if self.p_inf > 0.0 {
            None
        } else {
            Some(self.probs.len() - 1)
        }
    }
}

/// Smallest fixed point of `F` in `[0, 1]`: the extinction probability.
/// Monotone iteration from 0 converges because `F` is nondecreasing; the
/// iteration error is polished to `tol` using the contraction rate.
/// `q = 1` exactly iff `m ≤ 1` and `p_∞ = 0`.
pub fn extinction_probability(dist: &OffspringDistribution, tol: f64) -> f64 {
    assert!(tol > 0.0);
    if dist.p_inf == 0.0 && dist.mean_offspring() <= 1.0 {
        return 1.0;
    }
    let mut x = 0.0f64;
    for _ in 0..1_000_000 {
        let next = dist.pgf(x);
        // F'(q) < 1 at the smallest fixed point in the supercritical
        // case, so the remaining error is at most delta/(1 − F'(x)).
        let slope: f64 = dist
            .probs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &p)| k as f64 * p * x.powi(k as i32 - 1))
            .sum();
        let delta = next - x;
        x = next;
        if delta <= tol * (1.0 - slope.min(1.0 - 1e-6)) {
            break;
        }
    }
    x
}

/// One simulated population trajectory.
#[derive(Debug, Clone)]
pub struct GwTrajectory {
    /// `populations[g]` = generation-`g` size, starting from 1; saturates
    /// at the cap once escape is detected.
    pub populations: Vec<u64>,
    /// Population exceeded the cap or an individual drew `∞` offspring.
    /// Conservative extinction bookkeeping: a capped supercritical
    /// population tends to infinity, never back to 0.
    pub escaped: bool,
}

impl GwTrajectory {
    pub fn extinct(&self) -> bool {
        !self.escaped && self.populations.last() == Some(&0)
    }
}

/// Simulates `generations` steps from a single ancestor, saturating at
/// `cap` individuals (with the `escaped` flag) so `∞`-valued populations
/// stay representable.
pub fn simulate_generations<R: Rng + ?Sized>(
    dist: &OffspringDistribution,
    generations: usize,
    cap: u64,
    rng: &mut R,
) -> GwTrajectory {
    assert!(cap > 0);
    let mut populations = vec![1u64];
    let mut escaped = false;
    for _ in 0..generations {
        let current = *populations.last().expect("nonempty trajectory");
        if escaped || current >= cap {
            escaped = true;
            populations.push(cap);
            continue;
        }
        if current == 0 {
            populations.push(0);
            continue;
        }
        let mut next = 0u64;
        for _ in 0..current {
            match dist.sample(rng) {
                Some(k) => next += k as u64,
                None => {
                    escaped = true;
                    break;
                }
            }
            if next >= cap {
                escaped = true;
                break;
            }
        }
        populations.push(if escaped { cap } else { next });
    }
    GwTrajectory {
        populations,
        escaped,
    }
}

/// Fraction of independent trajectories that die out; escaped counts as
/// survived.
pub fn extinction_fraction(
    dist: &OffspringDistribution,
    generations: usize,
    cap: u64,
    replicates: u64,
    master_seed: u64,
) -> MeanSe {
    let outcomes: Vec<f64> = (0..replicates)
        .map(|r| {
            let mut rng = replicate_rng(master_seed, r);
            let traj = simulate_generations(dist, generations, cap, &mut rng);
            if traj.extinct() {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    mean_se(&outcomes)
}

/// Maps a finite-support offspring law with rescaling factor `a > 1` to
/// the fragmentation triple `c = 0`, `α = −log a / log N`,
/// `ν = Σ p_i δ_{s^i}` with `s^i = (1/N, …, 1/N)` (`i` entries) and `p₀`
/// as kill weight. The result carries default label count and horizon;
/// adjust the fields before simulating if needed.
pub fn gw_fragmentation_params(
    dist: &OffspringDistribution,
    a: f64,
) -> Result<FragmentationParams, GwError> {
    assert!(a > 1.0, "rescaling factor a must exceed 1");
    let n_max = dist.max_offspring().ok_or(GwError::InfiniteSupport)?;
    if n_max < 2 {
        return Err(GwError::InvalidDistribution(
            "fragmentation coupling needs max offspring N ≥ 2".to_string(),
        ));
    }
    let nu = DislocationMeasure::uniform_split(n_max, &dist.probs[..=n_max])?;
    Ok(FragmentationParams {
        nu,
        alpha: -(a.ln() / (n_max as f64).ln()),
        c: 0.0,
        n: 20_000,
        horizon: Horizon::UntilDead { mass_floor: 1e-9 },
    })
}

/// Boundary-dimension check for a supercritical GW tree with geometric
/// edge rescaling.
#[derive(Debug, Clone)]
pub struct BoundaryDimReport {
    /// `log m / log a`.
    pub theory: f64,
    pub dimension: DimensionReport,
    /// Extinction probability of the offspring law.
    pub q: f64,
    /// Per-generation extinction fraction, to compare with `q`.
    pub extinct_fraction: MeanSe,
}

/// Estimates the boundary dimension of the GW tree via the fragmentation
/// coupling and compares survival statistics with `1 − q`.
pub fn boundary_dimension_experiment(
    dist: &OffspringDistribution,
    a: f64,
    leaf_budget: usize,
    dim_replicates: u64,
    gw_replicates: u64,
    master_seed: u64,
) -> Result<BoundaryDimReport, GwError> {
    let m = dist.mean_offspring();
    assert!(m > 1.0, "boundary dimension needs a supercritical law");
    let params = gw_fragmentation_params(dist, a)?;
    let dimension = dimension_report(&params, leaf_budget, dim_replicates, master_seed)?;
    let q = extinction_probability(dist, 1e-12);
    let extinct_fraction =
        extinction_fraction(dist, 30, 100_000, gw_replicates, master_seed ^ 0x9e3779b97f4a7c15);
    Ok(BoundaryDimReport {
        theory: m.ln() / a.ln(),
        dimension,
        q,
        extinct_fraction,
    })
}
