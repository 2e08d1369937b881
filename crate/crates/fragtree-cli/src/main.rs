//! Batch front door for the fragtree library: reproducible, seeded
//! experiment runs writing JSON/CSV artifacts plus a run manifest.
//!
//! Exit codes: 0 on success, 1 when a `check`-style subcommand's
//! statistical or analytic assertion fails, 2 on configuration errors.

mod output;
mod parse;

use clap::{Args, Parser, Subcommand};
use fragtree::dimension::{dimension_report, DimensionError};
use fragtree::dislocation::{DislocationMeasure, Extended};
use fragtree::fragmentation::{
    simulate, simulate_homogeneous, EventKind, FragmentationParams, Horizon,
};
use fragtree::gw::{
    boundary_dimension_experiment, extinction_fraction, extinction_probability,
    simulate_generations,
};
use fragtree::malthus::{
    check_hprime, estimate_w, malthus_vs_erosion, malthus_vs_kill, solve_malthus,
};
use fragtree::reduced::diagonal_sweep;
use fragtree::seeds::replicate_rng;
use fragtree::stats::mean_se;
use fragtree::tilted::{tilted_marginal_check, Statistic};
use fragtree::tree::build_tree;
use output::{sig9, write_csv, write_json, write_manifest};
use serde_json::json;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "fragtree",
    version,
    about = "Seeded Monte Carlo experiments on self-similar fragmentation processes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dislocation measure inspection.
    Measure {
        #[command(subcommand)]
        cmd: MeasureCmd,
    },
    /// Malthusian exponent solving and parameter sweeps.
    Malthus {
        #[command(subcommand)]
        cmd: MalthusCmd,
    },
    /// Simulate one fragmentation path and write it as JSON.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Genealogy tree construction and export.
    Tree {
        #[command(subcommand)]
        cmd: TreeCmd,
    },
    /// Additive/tagged martingale identity checks.
    Martingale {
        #[command(subcommand)]
        cmd: MartingaleCmd,
    },
    /// Spine (tilted-law) consistency checks.
    Tilt {
        #[command(subcommand)]
        cmd: TiltCmd,
    },
    /// Reduced-measure (truncation) sweeps.
    Reduced {
        #[command(subcommand)]
        cmd: ReducedCmd,
    },
    /// Leaf-set dimension estimation.
    Dimension {
        #[command(subcommand)]
        cmd: DimensionCmd,
    },
    /// Galton-Watson processes and their fragmentation coupling.
    Gw {
        #[command(subcommand)]
        cmd: GwCmd,
    },
    /// Canned end-to-end reproductions.
    Experiment {
        #[command(subcommand)]
        cmd: ExperimentCmd,
    },
}

#[derive(Subcommand)]
enum MeasureCmd {
    /// Parse a measure spec and summarize its invariants.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum MalthusCmd {
    /// Solve for p* and related exponents.
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// p* as a function of added kill weight k.
    SweepKill {
        #[command(flatten)]
        common: Common,
        /// Largest kill weight.
        #[arg(long, default_value_t = 0.9)]
        kmax: f64,
        #[arg(long, default_value_t = 10)]
        steps: usize,
    },
    /// p* as a function of the erosion rate c.
    SweepErosion {
        #[command(flatten)]
        common: Common,
        /// Largest erosion rate.
        #[arg(long, default_value_t = 10.0)]
        cmax: f64,
        #[arg(long, default_value_t = 10)]
        steps: usize,
    },
}

#[derive(Subcommand)]
enum TreeCmd {
    /// Simulate a path and write its genealogy tree as JSON.
    Build {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate a path and write its genealogy tree in Newick format.
    Export {
        #[command(flatten)]
        common: Common,
    },
    /// Per-replicate tree summary statistics (CSV).
    Stats {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum MartingaleCmd {
    /// Check E[|Π₁(t)|^{p*−1}·1_{alive}] = 1 within 3 SE.
    Check {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
    },
}

#[derive(Subcommand)]
enum TiltCmd {
    /// Compare spine simulation against reweighted plain simulation.
    Check {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
    },
}

#[derive(Subcommand)]
enum ReducedCmd {
    /// Diagonal sweep p*_{N,1/N} over truncation caps.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated caps N (each with ε = 1/N).
        #[arg(long, default_value = "2,3,4,6,8")]
        caps: String,
    },
}

#[derive(Subcommand)]
enum DimensionCmd {
    /// Box-counting dimension estimate vs the theoretical p*/|α|.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Maximum leaf sample size per replicate.
        #[arg(long, default_value_t = 500)]
        leaf_budget: usize,
    },
}

#[derive(Subcommand)]
enum GwCmd {
    /// Extinction probability: fixed point of the pgf plus simulation.
    Extinction {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        offspring: OffspringArgs,
    },
    /// Population trajectories (CSV).
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        offspring: OffspringArgs,
    },
    /// Boundary dimension of the GW tree via the fragmentation coupling.
    BoundaryDim {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        offspring: OffspringArgs,
        /// Geometric edge rescaling factor.
        #[arg(long, default_value_t = 2.0)]
        a: f64,
        #[arg(long, default_value_t = 400)]
        leaf_budget: usize,
        /// Fragmentation replicates for the dimension estimate (GW
        /// extinction replicates come from --replicates).
        #[arg(long, default_value_t = 5)]
        dim_replicates: u64,
    },
}

#[derive(Args, Clone)]
struct OffspringArgs {
    /// Offspring probabilities p0,p1,p2,…
    #[arg(long, default_value = "0.25,0,0.75")]
    offspring: String,
    /// Probability of infinitely many offspring.
    #[arg(long, default_value_t = 0.0)]
    p_inf: f64,
    #[arg(long, default_value_t = 30)]
    generations: usize,
    /// Population cap standing in for infinity.
    #[arg(long, default_value_t = 100_000)]
    cap: u64,
}

#[derive(Subcommand)]
enum ExperimentCmd {
    /// Countable family where (H′) holds with integral 1 but (H) fails.
    Nu1 {
        #[command(flatten)]
        common: Common,
    },
    /// Countable family where (H) holds but (H′) diverges.
    Nu2 {
        #[command(flatten)]
        common: Common,
    },
    /// Conservative binary pipeline: p* = 1 and dimension ≈ 1.
    Binary {
        #[command(flatten)]
        common: Common,
    },
    /// Supercritical GW tree boundary dimension (N = 2, m = 1.5, a = 2).
    Gw73 {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// Measure: binary:a=0.5 | uniformN:N=2,probs=0.25|0|0.75 | nu1 | nu2
    /// | @file.json
    #[arg(long, default_value = "binary:a=0.5")]
    measure: String,
    /// Self-similarity index (≤ 0; 0 = homogeneous).
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    alpha: f64,
    /// Erosion rate.
    #[arg(long, default_value_t = 0.0)]
    c: f64,
    /// Tracked label count.
    #[arg(long, default_value_t = 200)]
    n: u32,
    /// time:<t> or until-dead:<mass floor>.
    #[arg(long, default_value = "until-dead:1e-9")]
    horizon: String,
    #[arg(long, default_value_t = 200)]
    replicates: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Analytic tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// JSON config file; keys present there override the flags above.
    #[arg(long)]
    config: Option<PathBuf>,
}

enum CliError {
    Config(String),
    CheckFailed(String),
}

fn cfg<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

struct Resolved {
    measure: DislocationMeasure,
    alpha: f64,
    c: f64,
    n: u32,
    horizon: Horizon,
    replicates: u64,
    seed: u64,
    out: PathBuf,
    tol: f64,
    echo: serde_json::Value,
}

impl Common {
    fn resolve(&self) -> Result<Resolved, CliError> {
        let mut c = self.clone();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .map_err(|e| cfg(format!("cannot read {}: {e}", path.display())))?;
            let v: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| cfg(format!("{}: invalid JSON: {e}", path.display())))?;
            let obj = v.as_object().ok_or_else(|| {
                cfg(format!("{}: config must be a JSON object", path.display()))
            })?;
            for key in obj.keys() {
                let known = [
                    "measure", "alpha", "c", "n", "horizon", "replicates", "seed",
                    "out", "tol",
                ];
                if !known.contains(&key.as_str()) {
                    return Err(cfg(format!(
                        "{}: unknown config field {key:?}",
                        path.display()
                    )));
                }
            }
            let take_f64 = |key: &str, into: &mut f64| -> Result<(), CliError> {
                if let Some(v) = obj.get(key) {
                    *into = v
                        .as_f64()
                        .ok_or_else(|| cfg(format!("config field {key:?} must be a number")))?;
                }
                Ok(())
            };
            if let Some(v) = obj.get("measure") {
                c.measure = v
                    .as_str()
                    .ok_or_else(|| cfg("config field \"measure\" must be a string"))?
                    .to_string();
            }
            if let Some(v) = obj.get("horizon") {
                c.horizon = v
                    .as_str()
                    .ok_or_else(|| cfg("config field \"horizon\" must be a string"))?
                    .to_string();
            }
            if let Some(v) = obj.get("out") {
                c.out = PathBuf::from(
                    v.as_str()
                        .ok_or_else(|| cfg("config field \"out\" must be a string"))?,
                );
            }
            take_f64("alpha", &mut c.alpha)?;
            take_f64("c", &mut c.c)?;
            take_f64("tol", &mut c.tol)?;
            if let Some(v) = obj.get("n") {
                c.n = v
                    .as_u64()
                    .ok_or_else(|| cfg("config field \"n\" must be an integer"))?
                    as u32;
            }
            if let Some(v) = obj.get("replicates") {
                c.replicates = v
                    .as_u64()
                    .ok_or_else(|| cfg("config field \"replicates\" must be an integer"))?;
            }
            if let Some(v) = obj.get("seed") {
                c.seed = v
                    .as_u64()
                    .ok_or_else(|| cfg("config field \"seed\" must be an integer"))?;
            }
        }
        let measure = parse::parse_measure(&c.measure).map_err(CliError::Config)?;
        let horizon = parse::parse_horizon(&c.horizon).map_err(CliError::Config)?;
        let echo = json!({
            "measure": measure.to_spec_json(),
            "alpha": c.alpha,
            "c": c.c,
            "n": c.n,
            "horizon": c.horizon,
            "replicates": c.replicates,
            "seed": c.seed,
            "out": c.out.display().to_string(),
            "tol": c.tol,
        });
        Ok(Resolved {
            measure,
            alpha: c.alpha,
            c: c.c,
            n: c.n,
            horizon,
            replicates: c.replicates,
            seed: c.seed,
            out: c.out,
            tol: c.tol,
            echo,
        })
    }
}

impl Resolved {
    fn prepare(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.out)
            .map_err(|e| cfg(format!("cannot create {}: {e}", self.out.display())))?;
        write_manifest(&self.out, &self.echo).map_err(CliError::Config)
    }

    fn params(&self) -> Result<FragmentationParams, CliError> {
        let params = FragmentationParams {
            nu: self.measure.clone(),
            alpha: self.alpha,
            c: self.c,
            n: self.n,
            horizon: self.horizon.clone(),
        };
        params.validate().map_err(cfg)?;
        Ok(params)
    }

    fn p_star(&self) -> Result<f64, CliError> {
        solve_malthus(&self.measure, self.c, self.tol)
            .map_err(cfg)?
            .p_star
            .ok_or_else(|| cfg("measure has no Malthusian exponent"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::CheckFailed(msg)) => {
            eprintln!("CHECK FAILED: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Measure { cmd: MeasureCmd::Validate { common } } => measure_validate(&common),
        Command::Malthus { cmd } => match cmd {
            MalthusCmd::Solve { common } => malthus_solve(&common),
            MalthusCmd::SweepKill { common, kmax, steps } => {
                malthus_sweep_kill(&common, kmax, steps)
            }
            MalthusCmd::SweepErosion { common, cmax, steps } => {
                malthus_sweep_erosion(&common, cmax, steps)
            }
        },
        Command::Simulate { common } => simulate_cmd(&common),
        Command::Tree { cmd } => match cmd {
            TreeCmd::Build { common } => tree_build(&common, false),
            TreeCmd::Export { common } => tree_build(&common, true),
            TreeCmd::Stats { common } => tree_stats(&common),
        },
        Command::Martingale { cmd: MartingaleCmd::Check { common, t } } => {
            martingale_check(&common, t)
        }
        Command::Tilt { cmd: TiltCmd::Check { common, t } } => tilt_check(&common, t),
        Command::Reduced { cmd: ReducedCmd::Sweep { common, caps } } => {
            reduced_sweep(&common, &caps)
        }
        Command::Dimension { cmd: DimensionCmd::Estimate { common, leaf_budget } } => {
            dimension_estimate(&common, leaf_budget)
        }
        Command::Gw { cmd } => match cmd {
            GwCmd::Extinction { common, offspring } => gw_extinction(&common, &offspring),
            GwCmd::Simulate { common, offspring } => gw_simulate(&common, &offspring),
            GwCmd::BoundaryDim { common, offspring, a, leaf_budget, dim_replicates } => {
                gw_boundary_dim(&common, &offspring, a, leaf_budget, dim_replicates)
            }
        },
        Command::Experiment { cmd } => match cmd {
            ExperimentCmd::Nu1 { common } => experiment_nu_family(&common, true),
            ExperimentCmd::Nu2 { common } => experiment_nu_family(&common, false),
            ExperimentCmd::Binary { common } => experiment_binary(&common),
            ExperimentCmd::Gw73 { common } => experiment_gw73(&common),
        },
    }
}

fn measure_validate(common: &Common) -> Result<(), CliError> {
    let r = common.resolve()?;
    r.prepare()?;
    let m = &r.measure;
    let report = json!({
        "spec": m.to_spec_json(),
        "total_weight": m.total_weight(),
        "kill_rate": m.kill_rate(),
        "conservative": m.is_conservative(),
        "p_finite_threshold": m.p_finite_threshold(),
    });
    write_json(&r.out.join("measure.json"), &report).map_err(CliError::Config)?;
    println!(
        "measure ok: conservative={}, kill_rate={}",
        m.is_conservative(),
        m.kill_rate()
    );
    Ok(())
}

fn malthus_solve(common: &Common) -> Result<(), CliError> {
    let r = common.resolve()?;
    r.prepare()?;
    let report = solve_malthus(&r.measure, r.c, r.tol).map_err(cfg)?;
    write_json(&r.out.join("malthus.json"), &report.to_json()).map_err(CliError::Config)?;
    println!("p_star = {:?}, holds_H = {}", report.p_star, report.holds_h);
    Ok(())
}

fn malthus_sweep_kill(common: &Common, kmax: f64, steps: usize) -> Result<(), CliError> {
    let r = common.resolve()?;
    r.prepare()?;
    let mut rows = Vec::new();
    for i in 0..=steps {
        let k = kmax * i as f64 / steps as f64;
        let p = malthus_vs_kill(&r.measure, r.c, k, r.tol).ok();
        rows.push(format!(
            "{},{}",
            sig9(k),
            p.map(sig9).unwrap_or_default()
        ));
    }
    write_csv(&r.out.join("malthus_kill.csv"), "k,p_star", &rows).map_err(CliError::Config)?;
    println!("wrote {} kill-sweep rows", rows.len());
    Ok(())
}

fn malthus_sweep_erosion(common: &Common, cmax: f64, steps: usize) -> Result<(), CliError> {
    let r = common.resolve()?;
    r.prepare()?;
    let mut rows = Vec::new();
    for i in 0..=steps {
        let c = cmax * i as f64 / steps as f64;
        let p = malthus_vs_erosion(&r.measure, c, r.tol).ok();
        rows.push(format!(
            "{},{},{}",
            sig9(c),
            p.map(sig9).unwrap_or_default(),
            p.map(|p| sig9(c * p)).unwrap_or_default()
        ));
    }
    write_csv(
        &r.out.join("malthus_erosion.csv"),
        "c,p_star,c_times_p_star",
        &rows,
    )
    .map_err(CliError::Config)?;
    println!("wrote {} erosion-sweep rows", rows.len());
    Ok(())
}

fn simulate_cmd(common: &Common) -> Result<(), CliError> {
    let r = common.resolve()?;
    r.prepare()?;
    let params = r.params()?;
    let mut rng = replicate_rng(r.seed, 0);
    let path = simulate(&params, &mut rng).map_err(cfg)?;
    write_json(&r.out.join("path.json"), &path.to_json()).map_err(CliError::Config)?;
    println!("simulated path: {} events, {} labels", path.events.len(), path.n);
    Ok(())
}

fn tree_build(common: &Common, newick: bool) -> Result<(), CliError> {
    let r = common.resolve()?;
    r.prepare()?;
    let params = r.params()?;
    let mut rng = replicate_rng(r.seed, 0);
    let path = simulate(&params, &mut rng).map_err(cfg)?;
    let tree = build_tree(&path).map_err(cfg)?;
    if newick {
        let file = r.out.join("tree.nwk");
        fs::write(&file, tree.to_newick() + "\n")
            .map_err(|e| cfg(format!("cannot write {}: {e}", file.display())))?;
        println!("wrote Newick tree");
    } else {
        write_json(&r.out.join("tree.json"), &tree.to_json().map_err(cfg)?)
            .map_err(CliError::Config)?;
        println!("wrote genealogy tree JSON");
    }
    Ok(())
}

fn tree_stats(common: &Common) -> Result<(), CliError> {
    let r = common.resolve()?;
    r.prepare()?;
    let params = r.params()?;
    let mut rows = Vec::new();
    for rep in 0..r.replicates {
        let mut rng = replicate_rng(r.seed, rep);
        let path = simulate(&params, &mut rng).map_err(cfg)?;
        let height = path.death_times().into_iter().fold(0.0f64, f64::max);
        let proper: usize = path
            .events
            .iter()
            .filter(|ev| ev.kind == EventKind::FloorStop)
            .map(|ev| ev.block.len())
            .sum();
        rows.push(format!(
            "{rep},{},{proper},{},{}",
            sig9(height),
            path.n as usize - proper,
            path.events.len()
        ));
    }
    write_csv(
        &r.out.join("tree_stats.csv"),
        "replicate,height,proper_leaves,dead_leaves,events",
        &rows,
    )
    .map_err(CliError::Config)?;
    println!("wrote {} tree-stat rows", rows.len());
    Ok(())
}

fn martingale_check(common: &Common, t: f64) -> Result<(), CliError> {
    let r = common.resolve()?;
    r.prepare()?;
    let p_star = r.p_star()?;
    // Exact tagged-fragment identity: E[|Π₁(t)|^{p*−1}·1_{alive}] = 1.
    let params = FragmentationParams {
        nu: r.measure.clone(),
        alpha: 0.0,
        c: r.c,
        n: 1,
        horizon: Horizon::Time(t),
    };
    let samples: Vec<f64> = (0..r.replicates)
        .map(|rep| {
            let mut rng = replicate_rng(r.seed, rep);
            let path = simulate_homogeneous(&params, &mut rng).map_err(cfg)?;
            let mass = path.tagged_fragment(1).map_err(cfg)?.mass_at(t);
            Ok(if mass > 0.0 { mass.powf(p_star - 1.0) } else { 0.0 })
        })
        .collect::<Result<_, CliError>>()?;
    let tagged = mean_se(&samples);
    let z = tagged.z_against(1.0);
    // Additive martingale over n labels, for reference (biased low for
    // finite n, so not part of the pass/fail decision).
    let full = FragmentationParams {
        nu: r.measure.clone(),
        alpha: 0.0,
        c: r.c,
        n: r.n,
        horizon: Horizon::Time(t),
    };
    let w = estimate_w(&full, p_star, t, r.replicates, r.seed ^ 1).map_err(cfg)?;
    let report = json!({
        "t": t,
        "p_star": p_star,
        "tagged_mean": tagged.mean,
        "tagged_se": tagged.se,
        "z": z,
        "additive_mean": w.estimate.mean,
        "additive_se": w.estimate.se,
        "additive_extinct": w.extinct,
    });
    write_json(&r.out.join("martingale.json"), &report).map_err(CliError::Config)?;
    println!("tagged martingale mean = {} ± {} (z = {z:.3})", tagged.mean, tagged.se);
    if z.abs() > 3.0 {
        return Err(CliError::CheckFailed(format!(
            "tagged martingale mean {} deviates from 1 by z = {z:.3}",
            tagged.mean
        )));
    }
    Ok(())
}

fn tilt_check(common: &Common, t: f64) -> Result<(), CliError> {
    let r = common.resolve()?;
    r.prepare()?;
    let p_star = r.p_star()?;
    let statistics = [
        ("one", Statistic::One),
        ("mass", Statistic::Mass),
        ("mass_squared", Statistic::MassSquared),
        ("indicator_above_0.25", Statistic::IndicatorAbove(0.25)),
        ("jump_count", Statistic::JumpCount),
    ];
    let mut rows = Vec::new();
    let mut worst: (f64, &str) = (0.0, "");
    for (i, (name, stat)) in statistics.iter().enumerate() {
        let check = tilted_marginal_check(
            &r.measure,
            r.c,
            p_star,
            t,
            *stat,
            r.replicates,
            r.seed.wrapping_add(i as u64),
        )
        .map_err(cfg)?;
        if check.z_joint > worst.0 {
            worst = (check.z_joint, name);
        }
        rows.push(json!({
            "statistic": name,
            "spine_mean": check.spine.mean,
            "spine_se": check.spine.se,
            "reweighted_mean": check.reweighted.mean,
            "reweighted_se": check.reweighted.se,
            "z_joint": check.z_joint,
        }));
    }
    let report = json!({"t": t, "p_star": p_star, "statistics": rows});
    write_json(&r.out.join("tilt.json"), &report).map_err(CliError::Config)?;
    println!("worst joint z = {:.3} ({})", worst.0, worst.1);
    if worst.0 > 3.0 {
        return Err(CliError::CheckFailed(format!(
            "statistic {} disagrees between spine and reweighted laws (z = {:.3})",
            worst.1, worst.0
        )));
    }
    Ok(())
}

fn reduced_sweep(common: &Common, caps: &str) -> Result<(), CliError> {
    let r = common.resolve()?;
    r.prepare()?;
    let caps = parse::parse_usize_list(caps).map_err(CliError::Config)?;
    let sweep = diagonal_sweep(&r.measure, r.c, &caps, r.tol).map_err(cfg)?;
    let rows: Vec<String> = sweep
        .iter()
        .map(|(cap, eps, p)| {
            format!("{cap},{},{}", sig9(*eps), p.map(sig9).unwrap_or_default())
        })
        .collect();
    write_csv(&r.out.join("reduced_diagonal.csv"), "cap,eps,p_star", &rows)
        .map_err(CliError::Config)?;
    println!("wrote {} diagonal-sweep rows", rows.len());
    Ok(())
}

fn dimension_estimate(common: &Common, leaf_budget: usize) -> Result<(), CliError> {
    let r = common.resolve()?;
    r.prepare()?;
    let params = r.params()?;
    match dimension_report(&params, leaf_budget, r.replicates, r.seed) {
        Ok(report) => {
            let summary = json!({
                "estimate": report.estimate,
                "ci_low": report.ci.0,
                "ci_high": report.ci.1,
                "theory": report.theory,
                "upper_bound": report.upper_bound,
                "survival": report.survival.mean,
                "survival_se": report.survival.se,
                "used": report.used,
                "countable_leaf_set": false,
            });
            write_json(&r.out.join("dimension.json"), &summary).map_err(CliError::Config)?;
            let mut rows = Vec::new();
            for (rep, scales) in report.scale_counts.iter().enumerate() {
                for (scale, count) in scales {
                    rows.push(format!("{rep},{},{count}", sig9(*scale)));
                }
            }
            write_csv(
                &r.out.join("dimension_scales.csv"),
                "replicate,scale,cover_count",
                &rows,
            )
            .map_err(CliError::Config)?;
            println!(
                "dimension estimate = {} (theory {:?})",
                report.estimate, report.theory
            );
        }
        Err(DimensionError::ExtinctionOnly) => {
            // Countable leaf set: every replicate died, dimension 0.
            let summary = json!({
                "estimate": 0.0,
                "ci_low": 0.0,
                "ci_high": 0.0,
                "theory": null,
                "upper_bound": null,
                "survival": 0.0,
                "survival_se": 0.0,
                "used": 0,
                "countable_leaf_set": true,
            });
            write_json(&r.out.join("dimension.json"), &summary).map_err(CliError::Config)?;
            println!("all replicates extinct: countable leaf set, dimension 0");
        }
        Err(e) => return Err(cfg(e)),
    }
    Ok(())
}

fn gw_extinction(common: &Common, off: &OffspringArgs) -> Result<(), CliError> {
    let r = common.resolve()?;
    r.prepare()?;
    let dist = parse::parse_offspring(&off.offspring, off.p_inf).map_err(CliError::Config)?;
    let q = extinction_probability(&dist, r.tol.min(1e-12));
    let frac = extinction_fraction(&dist, off.generations, off.cap, r.replicates, r.seed);
    let m = dist.mean_offspring();
    let report = json!({
        "q": q,
        "mean_offspring": if m.is_finite() { Some(m) } else { None },
        "mean_offspring_infinite": !m.is_finite(),
        "extinct_fraction": frac.mean,
        "extinct_se": frac.se,
        "z": frac.z_against(q),
    });
    write_json(&r.out.join("gw_extinction.json"), &report).map_err(CliError::Config)?;
    println!("q = {q}, simulated extinction = {} ± {}", frac.mean, frac.se);
    Ok(())
}

fn gw_simulate(common: &Common, off: &OffspringArgs) -> Result<(), CliError> {
    let r = common.resolve()?;
    r.prepare()?;
    let dist = parse::parse_offspring(&off.offspring, off.p_inf).map_err(CliError::Config)?;
    let mut rows = Vec::new();
    for rep in 0..r.replicates {
        let mut rng = replicate_rng(r.seed, rep);
        let traj = simulate_generations(&dist, off.generations, off.cap, &mut rng);
        for (g, pop) in traj.populations.iter().enumerate() {
            rows.push(format!("{rep},{g},{pop},{}", u8::from(traj.escaped)));
        }
    }
    write_csv(
        &r.out.join("gw_trajectories.csv"),
        "replicate,generation,population,escaped",
        &rows,
    )
    .map_err(CliError::Config)?;
    println!("wrote {} trajectory rows", rows.len());
    Ok(())
}

fn gw_boundary_dim(
    common: &Common,
    off: &OffspringArgs,
    a: f64,
    leaf_budget: usize,
    dim_replicates: u64,
) -> Result<(), CliError> {
    let r = common.resolve()?;
    r.prepare()?;
    let dist = parse::parse_offspring(&off.offspring, off.p_inf).map_err(CliError::Config)?;
    let report =
        boundary_dimension_experiment(&dist, a, leaf_budget, dim_replicates, r.replicates, r.seed)
            .map_err(cfg)?;
    let summary = json!({
        "theory": report.theory,
        "estimate": report.dimension.estimate,
        "ci_low": report.dimension.ci.0,
        "ci_high": report.dimension.ci.1,
        "q": report.q,
        "extinct_fraction": report.extinct_fraction.mean,
        "extinct_se": report.extinct_fraction.se,
        "fragmentation_survival": report.dimension.survival.mean,
    });
    write_json(&r.out.join("gw_boundary.json"), &summary).map_err(CliError::Config)?;
    println!(
        "boundary dimension = {} (theory {})",
        report.dimension.estimate, report.theory
    );
    Ok(())
}

fn experiment_nu_family(common: &Common, is_nu1: bool) -> Result<(), CliError> {
    let mut common = common.clone();
    common.measure = if is_nu1 { "nu1" } else { "nu2" }.to_string();
    let r = common.resolve()?;
    r.prepare()?;
    let report = solve_malthus(&r.measure, 0.0, r.tol).map_err(cfg)?;
    let hprime = check_hprime(&r.measure, 1e-9).map_err(cfg)?;
    let (name, file) = if is_nu1 {
        ("nu1", "experiment_nu1.json")
    } else {
        ("nu2", "experiment_nu2.json")
    };
    let hprime_value = match hprime {
        Extended::Finite(v) => Some(v),
        Extended::Infinite => None,
    };
    let summary = json!({
        "family": name,
        "holds_H": report.holds_h,
        "hprime_integral": hprime_value,
        "hprime_divergent": hprime_value.is_none(),
        "p0": report.p0,
        "p_prime": report.p_prime,
        "p_star": report.p_star,
    });
    write_json(&r.out.join(file), &summary).map_err(CliError::Config)?;
    if is_nu1 {
        let v = hprime_value.ok_or_else(|| {
            CliError::CheckFailed("nu1: (H') integral should be finite".to_string())
        })?;
        println!("nu1: (H') integral = {v}, holds (H) = {}", report.holds_h);
        if (v - 1.0).abs() > 1e-6 {
            return Err(CliError::CheckFailed(format!(
                "nu1: (H') integral {v} should be 1 within 1e-6"
            )));
        }
        if report.holds_h {
            return Err(CliError::CheckFailed(
                "nu1: (H) should fail for this family".to_string(),
            ));
        }
    } else {
        println!(
            "nu2: holds (H) = {}, (H') divergent = {}",
            report.holds_h,
            hprime_value.is_none()
        );
        if !report.holds_h {
            return Err(CliError::CheckFailed("nu2: (H) should hold".to_string()));
        }
        if hprime_value.is_some() {
            return Err(CliError::CheckFailed(
                "nu2: (H') integral should diverge".to_string(),
            ));
        }
    }
    Ok(())
}

fn experiment_binary(common: &Common) -> Result<(), CliError> {
    let mut common = common.clone();
    common.measure = "binary:a=0.5".to_string();
    common.alpha = -1.0;
    common.c = 0.0;
    let r = common.resolve()?;
    r.prepare()?;
    let report = solve_malthus(&r.measure, 0.0, r.tol).map_err(cfg)?;
    write_json(&r.out.join("malthus.json"), &report.to_json()).map_err(CliError::Config)?;
    let p_star = report.p_star.ok_or_else(|| cfg("binary must have p*"))?;
    let params = FragmentationParams {
        nu: r.measure.clone(),
        alpha: -1.0,
        c: 0.0,
        n: 300,
        horizon: Horizon::UntilDead { mass_floor: 1e-9 },
    };
    let dim = dimension_report(&params, 300, 5, r.seed).map_err(cfg)?;
    let summary = json!({
        "estimate": dim.estimate,
        "ci_low": dim.ci.0,
        "ci_high": dim.ci.1,
        "theory": dim.theory,
    });
    write_json(&r.out.join("dimension.json"), &summary).map_err(CliError::Config)?;
    println!("binary: p* = {p_star}, dimension estimate = {}", dim.estimate);
    if (p_star - 1.0).abs() > 1e-9 {
        return Err(CliError::CheckFailed(format!("binary p* = {p_star}, expected 1")));
    }
    if !(0.7..=1.3).contains(&dim.estimate) {
        return Err(CliError::CheckFailed(format!(
            "binary dimension estimate {} outside [0.7, 1.3]",
            dim.estimate
        )));
    }
    Ok(())
}

fn experiment_gw73(common: &Common) -> Result<(), CliError> {
    let r = common.resolve()?;
    r.prepare()?;
    let dist = parse::parse_offspring("0.25,0,0.75", 0.0).map_err(CliError::Config)?;
    let gw_replicates = r.replicates.max(2_000);
    let report = boundary_dimension_experiment(&dist, 2.0, 400, 6, gw_replicates, r.seed)
        .map_err(cfg)?;
    let summary = json!({
        "theory": report.theory,
        "estimate": report.dimension.estimate,
        "ci_low": report.dimension.ci.0,
        "ci_high": report.dimension.ci.1,
        "q": report.q,
        "extinct_fraction": report.extinct_fraction.mean,
        "extinct_se": report.extinct_fraction.se,
    });
    write_json(&r.out.join("experiment_gw73.json"), &summary).map_err(CliError::Config)?;
    println!(
        "gw73: estimate = {} (theory {}), q = {}",
        report.dimension.estimate, report.theory, report.q
    );
    if (report.q - 1.0 / 3.0).abs() > 1e-10 {
        return Err(CliError::CheckFailed(format!("q = {}, expected 1/3", report.q)));
    }
    if !(0.4..=0.8).contains(&report.dimension.estimate) {
        return Err(CliError::CheckFailed(format!(
            "gw73 estimate {} outside [0.4, 0.8]",
            report.dimension.estimate
        )));
    }
    if report.extinct_fraction.z_against(report.q).abs() > 3.0 {
        return Err(CliError::CheckFailed(format!(
            "gw73 extinction fraction {} vs q = {}",
            report.extinct_fraction.mean, report.q
        )));
    }
    Ok(())
}
