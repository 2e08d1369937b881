//! Cross-module properties that tie the analytic exponents, the reduced
//! measures, and the empirical dimension estimates together.

use fragtree::dimension::{covering_functional, dimension_report};
use fragtree::dislocation::DislocationMeasure;
use fragtree::fragmentation::{simulate, FragmentationParams, Horizon};
use fragtree::malthus::solve_malthus;
use fragtree::reduced::reduce_measure;
use fragtree::stats::linear_fit;
use fragtree::seeds::replicate_rng;

fn uniform_n() -> DislocationMeasure {
    DislocationMeasure::uniform_split(2, &[0.25, 0.0, 0.75]).expect("valid measure")
}

/// Doubling `log a` in the uniform-split family halves the dimension:
/// estimates at a = 2 and a = 4 should sit near ratio 2.
#[test]
fn dimension_halves_when_log_rescaling_doubles() {
    let nu = uniform_n();
    let mut estimates = Vec::new();
    for (i, a) in [2.0f64, 4.0].into_iter().enumerate() {
        let params = FragmentationParams {
            nu: nu.clone(),
            alpha: -(a.ln() / 2.0f64.ln()),
            c: 0.0,
            n: 20_000,
            horizon: Horizon::UntilDead { mass_floor: 1e-9 },
        };
        let report =
            dimension_report(&params, 500, 10, 12_000 + i as u64).expect("dimension report");
        estimates.push(report.estimate);
    }
    let ratio = estimates[0] / estimates[1];
    assert!(
        (1.6..=2.4).contains(&ratio),
        "estimate ratio between a=2 and a=4 should be near 2, got {ratio} \
         (estimates {estimates:?})"
    );
}

/// The smallest exponent whose covering functional stays bounded as the
/// stopping-line threshold shrinks should not undercut the box-counting
/// estimate by more than the calibration slack.
#[test]
fn covering_upper_bound_dominates_box_estimate() {
    let params = FragmentationParams {
        nu: DislocationMeasure::binary(0.5).expect("valid measure"),
        alpha: -1.0,
        c: 0.0,
        n: 300,
        horizon: Horizon::UntilDead { mass_floor: 1e-9 },
    };
    let report = dimension_report(&params, 300, 5, 12_100).expect("dimension report");

    // The trend must be read well above the label resolution: blocks at
    // the 2^{-k} line number about 2^k, so keep 2^k well below n.
    let scan_params = FragmentationParams {
        n: 2_000,
        horizon: Horizon::UntilDead { mass_floor: 1e-6 },
        ..params.clone()
    };
    let paths: Vec<_> = (0..12u64)
        .map(|r| {
            let mut rng = replicate_rng(12_200, r);
            simulate(&scan_params, &mut rng).expect("simulation")
        })
        .collect();
    let mut smallest_bounded = None;
    for gamma in [0.8, 0.95, 1.1, 1.25, 1.4] {
        // Geometric growth rate of the MC mean per threshold halving:
        // bounded exponents sit near or below zero, unbounded ones grow.
        let ks: Vec<f64> = (2..=8).map(f64::from).collect();
        let logs: Vec<f64> = ks
            .iter()
            .map(|&k| {
                let eps = 0.5f64.powf(k);
                let total: f64 = paths
                    .iter()
                    .map(|path| covering_functional(path, eps, gamma))
                    .sum();
                (total / paths.len() as f64).log2()
            })
            .collect();
        let (slope, _, _) = linear_fit(&ks, &logs);
        if slope < 0.12 {
            smallest_bounded = Some(gamma);
            break;
        }
    }
    let gamma = smallest_bounded.expect("some exponent in the scan is bounded");
    assert!(
        gamma >= report.estimate - 0.15,
        "scan exponent {gamma} should dominate box estimate {} minus 0.15",
        report.estimate
    );
}

/// Every reduced measure is finite with bounded fragment count, so the
/// higher-moment condition holds for all orders and the lower exponent
/// matches the Malthusian one (the finiteness threshold is 0).
#[test]
fn reduced_measures_have_all_moments_and_tight_lower_exponent() {
    let cases = [
        (DislocationMeasure::nu2(), 2, 0.3),
        (DislocationMeasure::nu2(), 4, 0.1),
        (DislocationMeasure::nu1(), 3, 0.2),
        (uniform_n(), 2, 0.25),
    ];
    for (nu, cap, eps) in cases {
        let reduced = reduce_measure(&nu, cap, eps);
        let report = solve_malthus(&reduced, 0.0, 1e-9).expect("reduced report");
        assert!(
            report.mq_flags.iter().all(|&(_, finite)| finite),
            "all moment orders should be finite for cap={cap}, eps={eps}: {:?}",
            report.mq_flags
        );
        assert!(
            (report.p0 - 0.0).abs() < 1e-12,
            "reduced measures have finiteness threshold 0, got {}",
            report.p0
        );
        if let (Some(p_star), Some(p_lower)) = (report.p_star, report.p_lower) {
            assert!(
                p_lower >= p_star - 1e-9,
                "lower exponent {p_lower} should reach the Malthusian exponent {p_star}"
            );
        }
    }
}
