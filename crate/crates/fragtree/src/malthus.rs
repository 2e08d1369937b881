//! The analytic layer: ψ, φ, φ*, the Malthusian exponent p*, the
//! integrability hypotheses, additive martingales, and parameter sweeps.
//!
//! `ψ(p) = c·p + ∫(1 − Σᵢ sᵢᵖ) dν` is nondecreasing and concave on its
//! finite domain with `ψ(1) ≥ 0`; the Malthusian exponent `p*` is its root
//! in `(0, 1]`, found by bisection from the finiteness threshold `p0`.
//! `−∞` values (divergent within-atom power sums) count as negative in the
//! bisection, so the search converges to the first nonnegative point even
//! when ψ jumps at `p0`; the root is only accepted when ψ is actually small
//! there.

use crate::dislocation::{DislocationError, DislocationMeasure, Extended, PsiIntegral};
use crate::fragmentation::{simulate_homogeneous, FragmentationError, FragmentationParams,
    FragmentationPath, Horizon};
use crate::seeds::replicate_rng;
use crate::stats::{mean_se, MeanSe};
use serde_json::json;
use thiserror::Error;

/// Bisection tolerance on the exponent p.
const P_TOL: f64 = 1e-12;

/// Smallest exponent ψ is evaluated at; some measures (reduced families)
/// only define ψ for p > 0.
const P_EVAL_MIN: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MalthusError {
    #[error("ψ has no root in (0, 1]: the measure has no Malthusian exponent")]
    NoMalthusianExponent,
    #[error(transparent)]
    Measure(#[from] DislocationError),
    #[error(transparent)]
    Simulation(#[from] FragmentationError),
}

/// `ψ(p)`: a finite value or certified `−∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PsiValue {
    Finite(f64),
    MinusInfinity,
}

impl PsiValue {
    pub fn finite(&self) -> Option<f64> {
        match self {
            PsiValue::Finite(v) => Some(*v),
            PsiValue::MinusInfinity => None,
        }
    }

    fn is_nonnegative(&self) -> bool {
        matches!(self, PsiValue::Finite(v) if *v >= 0.0)
    }
}

/// Evaluation tolerance for ψ: exact for finite atom lists, tail-certified
/// for countable families.
fn eval_tol(nu: &DislocationMeasure) -> f64 {
    if nu.is_finite_atoms() {
        1e-12
    } else {
        1e-5
    }
}

/// Acceptance band for |ψ(p*)| at the bisection limit.
fn root_tol(nu: &DislocationMeasure) -> f64 {
    if nu.is_finite_atoms() {
        1e-9
    } else {
        1e-4
    }
}

/// `ψ(p) = c·p + ∫(1 − Σᵢ sᵢᵖ) dν` within `tol`.
pub fn psi(
    nu: &DislocationMeasure,
    c: f64,
    p: f64,
    tol: f64,
) -> Result<PsiValue, MalthusError> {
    match nu.psi_integral(p, tol)? {
        PsiIntegral::Finite { value, .. } => Ok(PsiValue::Finite(c * p + value)),
        PsiIntegral::MinusInfinity => Ok(PsiValue::MinusInfinity),
    }
}

/// `φ(q) = ψ(q + 1)`, the Laplace exponent of the tagged-fragment
/// subordinator.
pub fn phi(
    nu: &DislocationMeasure,
    c: f64,
    q: f64,
    tol: f64,
) -> Result<PsiValue, MalthusError> {
    psi(nu, c, q + 1.0, tol)
}

/// `φ*(p) = ψ(p + p*)`, the Laplace exponent under the tilted law.
pub fn phi_star(
    nu: &DislocationMeasure,
    c: f64,
    p_star: f64,
    p: f64,
    tol: f64,
) -> Result<PsiValue, MalthusError> {
    psi(nu, c, p + p_star, tol)
}

/// Everything `solve_malthus` determines about `(c, ν)`.
#[derive(Debug, Clone)]
pub struct MalthusReport {
    /// Root of ψ in (0, 1], when it exists.
    pub p_star: Option<f64>,
    /// ψ takes a finite strictly negative value somewhere on [0, 1].
    pub holds_h: bool,
    /// `inf{p ≥ 0: ψ(p) > −∞}`.
    pub p0: f64,
    /// `inf{p ≥ 0: ψ(p) ≥ 0}` (−∞ counts as < 0).
    pub p_prime: f64,
    /// `p̲ = sup{q ≥ 0: φ*(−q) > −∞} = p* − p0`, reported as the open
    /// supremum (endpoint membership left unresolved); `None` without p*.
    pub p_lower: Option<f64>,
    /// `(q, whether ∫|1 − Σ sᵢ^{p*}|^q dν < ∞)` on a fixed q grid.
    pub mq_flags: Vec<(f64, bool)>,
}

impl MalthusReport {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "p_star": self.p_star,
            "holds_H": self.holds_h,
            "p0": self.p0,
            "p_prime": self.p_prime,
            "p_lower": self.p_lower,
            "mq_flags": self.mq_flags.iter()
                .map(|(q, ok)| json!({"q": q, "finite": ok}))
                .collect::<Vec<_>>(),
        })
    }
}

/// Bisection for the first `p ∈ [0, 1]` with `ψ(p) + shift ≥ 0`
/// (monotonicity; −∞ counts as negative). Returns the boundary point and
/// ψ + shift there.
fn first_nonnegative(
    nu: &DislocationMeasure,
    c: f64,
    shift: f64,
    tol: f64,
) -> Result<(f64, PsiValue), MalthusError> {
    let value = |p: f64| -> Result<PsiValue, MalthusError> {
        // Reduced family measures define ψ only for p > 0 (ψ(0⁺) may be
        // −∞); a tiny positive floor leaves root finding unchanged.
        Ok(match psi(nu, c, p.max(P_EVAL_MIN), tol)? {
            PsiValue::Finite(v) => PsiValue::Finite(v + shift),
            PsiValue::MinusInfinity => PsiValue::MinusInfinity,
        })
    };
    if value(0.0)?.is_nonnegative() {
        return Ok((0.0, value(0.0)?));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    // ψ(1) + shift ≥ 0 always (ψ(1) ≥ 0, shift ≥ 0 in every sweep).
    while hi - lo > P_TOL {
        let mid = 0.5 * (lo + hi);
        if value(mid)?.is_nonnegative() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((hi, value(hi)?))
}

/// Solves for the Malthusian exponent and fills the full report.
pub fn solve_malthus(
    nu: &DislocationMeasure,
    c: f64,
    tol: f64,
) -> Result<MalthusReport, MalthusError> {
    let p0 = nu.p_finite_threshold();
    let vtol = root_tol(nu).max(tol);
    let etol = eval_tol(nu);

    // (H): ψ finite and strictly negative somewhere on [0, 1]. Scan a grid
    // clipped to the finite domain; concavity/monotonicity make a coarse
    // grid sufficient.
    let mut holds_h = false;
    for i in 0..=20 {
        let p = (p0 + (1.0 - p0) * i as f64 / 20.0).max(P_EVAL_MIN);
        match psi(nu, c, p, etol) {
            Ok(PsiValue::Finite(v)) if v < -etol => {
                holds_h = true;
                break;
            }
            // Tail bounds can be uncertifiable just above p0; skip those
            // grid points — (H) needs only one certified negative value.
            Err(MalthusError::Measure(DislocationError::InconclusiveTail { .. })) => {}
            Err(e) => return Err(e),
            Ok(_) => {}
        }
    }

    // p* and p′.
    let (p_star, p_prime) = if nu.is_conservative() && c == 0.0 {
        // Conservative, no erosion: ψ(1) = 0 exactly.
        (Some(1.0), 1.0)
    } else {
        let (boundary, value_there) = first_nonnegative(nu, c, 0.0, etol)?;
        let is_root = matches!(value_there, PsiValue::Finite(v) if v.abs() <= vtol)
            && boundary > 0.0;
        (if is_root { Some(boundary) } else { None }, boundary)
    };

    let p_lower = p_star.map(|ps| (ps - p0).max(0.0));
    let mq_flags = match p_star {
        Some(ps) => [1.5, 2.0, 3.0, 5.0]
            .iter()
            .map(|&q| (q, nu.mq_is_finite(ps, q)))
            .collect(),
        None => Vec::new(),
    };

    Ok(MalthusReport {
        p_star,
        holds_h,
        p0,
        p_prime,
        p_lower,
        mq_flags,
    })
}

/// Whether `∫ |1 − Σᵢ sᵢ^{p*}|^q dν < ∞`.
pub fn check_mq(nu: &DislocationMeasure, p_star: f64, q: f64) -> bool {
    nu.mq_is_finite(p_star, q)
}

/// `∫(s₁⁻¹ − 1) dν`: finite value or certified divergence.
pub fn check_hprime(nu: &DislocationMeasure, tol: f64) -> Result<Extended, MalthusError> {
    Ok(nu.hprime_integral(tol)?)
}

/// One observation of the additive martingale.
#[derive(Debug, Clone, Copy)]
pub struct AdditiveMartingaleSample {
    pub t: f64,
    /// `Σ_{blocks of Π(t) meeting [n]} mass^{p*}` (dead labels contribute 0).
    pub value: f64,
    pub n: u32,
}

/// Evaluates `M_n(t) = Σ_{blocks} mass^{p*}` exactly from the path's
/// tracked masses.
pub fn additive_martingale(
    path: &FragmentationPath,
    p_star: f64,
    t: f64,
) -> AdditiveMartingaleSample {
    let partition = path.partition_at(t);
    let mut value = 0.0;
    for block in partition.blocks() {
        let trace = path
            .tagged_fragment(block[0])
            .expect("partition labels are in range");
        let mass = trace.mass_at(t);
        if mass > 0.0 {
            value += mass.powf(p_star);
        }
    }
    AdditiveMartingaleSample {
        t,
        value,
        n: path.n,
    }
}

/// Monte Carlo estimate of `W = lim M_n(t)`.
#[derive(Debug, Clone, Copy)]
pub struct WEstimate {
    pub estimate: MeanSe,
    /// Replicates with `W = 0` (all observed mass extinct by `t_max`).
    pub extinct: usize,
}

/// Estimates `W ≈ M_n(t_max)` over independent replicates (homogeneous
/// simulation; `params.horizon` is overridden by `t_max`). Finite-`n`,
/// finite-`t_max` bias is not corrected.
pub fn estimate_w(
    params: &FragmentationParams,
    p_star: f64,
    t_max: f64,
    replicates: u64,
    master_seed: u64,
) -> Result<WEstimate, MalthusError> {
    let run_params = FragmentationParams {
        horizon: Horizon::Time(t_max),
        alpha: 0.0,
        ..params.clone()
    };
    let mut samples = Vec::with_capacity(replicates as usize);
    let mut extinct = 0;
    for r in 0..replicates {
        let mut rng = replicate_rng(master_seed, r);
        let path = simulate_homogeneous(&run_params, &mut rng)?;
        let w = additive_martingale(&path, p_star, t_max).value;
        if w == 0.0 {
            extinct += 1;
        }
        samples.push(w);
    }
    Ok(WEstimate {
        estimate: mean_se(&samples),
        extinct,
    })
}

/// Malthusian exponent of `(c, ν + k·δ_{(0,0,…)})`: the root of
/// `ψ(p) + k = 0` (each unit of kill weight adds 1 to the integrand).
pub fn malthus_vs_kill(
    nu: &DislocationMeasure,
    c: f64,
    k: f64,
    tol: f64,
) -> Result<f64, MalthusError> {
    assert!(k >= 0.0, "kill weight must be nonnegative");
    let etol = eval_tol(nu);
    let (boundary, value) = first_nonnegative(nu, c, k, etol)?;
    match value {
        PsiValue::Finite(v) if v.abs() <= root_tol(nu).max(tol) && boundary > 0.0 => {
            Ok(boundary)
        }
        _ => Err(MalthusError::NoMalthusianExponent),
    }
}

/// Malthusian exponent of `(c, ν)` as a function of the erosion rate.
pub fn malthus_vs_erosion(
    nu: &DislocationMeasure,
    c: f64,
    tol: f64,
) -> Result<f64, MalthusError> {
    assert!(c >= 0.0, "erosion rate must be nonnegative");
    solve_malthus(nu, c, tol)?
        .p_star
        .ok_or(MalthusError::NoMalthusianExponent)
}
