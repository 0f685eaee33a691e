//! Command-line entry point: scenario ingestion, pipeline orchestration
//! (design → bounds → simulate → verify), and artifact emission.
//!
//! Exit code 0 means every invoked check passed; 1 means a check failed or
//! an input was rejected. The output directory resolves from `--out`, then
//! the `ETCON_OUT` environment variable, then `./etcon-out`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::{inter_event_stats, verify_trace};
use crate::artifacts::{
    BOUNDS_SCHEMA, BoundsArtifact, DesignArtifact, META_SCHEMA, RunMeta,
    VERIFY_SCHEMA, VerifyArtifact, check_hash, check_schema, read_json, read_trace, write_bounds_grid_csv,
    write_events_csv, write_json, write_trace_csv,
};
use crate::bounds::{
    BoundConstants, BoundsReport, bound_constants, bounds_grid, bounds_report, h3, h3_asymptote,
};
use crate::bundled;
use crate::design::{
    ControllerDesign, DecayCertificate, DesignReport, lmi_residual_max_eig, synthesize,
    verify_design,
};
use crate::error::{Error, Result};
use crate::graph::{has_spanning_tree, laplacian};
use crate::scenario::{Overrides, Scenario, load_scenario};
use crate::sim::{DEFAULT_STEP, ScenarioConfig, SimTrace, run};
use crate::spectral::{SpectralDecomposition, spectral_transform};

#[derive(Parser)]
#[command(
    name = "etcon",
    about = "Event-triggered consensus: controller synthesis, guarantees, simulation, verification",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the controller (P, F, c, Â) and its decay certificate.
    Design(DesignArgs),
    /// Evaluate the guarantee constants, τ, ε, and the t_k-grid curves.
    Bounds(BoundsArgs),
    /// Simulate the closed loop and write trace/event CSVs.
    Simulate(SimulateArgs),
    /// Check a recorded trace against every analytical guarantee.
    Verify(VerifyArgs),
    /// Run the bundled six-agent reference pipeline and check the
    /// published values.
    #[command(name = "reproduce-paper")]
    ReproducePaper(ReproduceArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory (default: $ETCON_OUT or ./etcon-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the Riccati margin α > 0.
    #[arg(long)]
    alpha: Option<f64>,
    /// Override the coupling safety factor (≥ 1).
    #[arg(long)]
    c_safety: Option<f64>,
}

#[derive(Args)]
struct DesignArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Use a fixed certificate amplitude β̂ instead of the computed one.
    #[arg(long, requires = "lambda_hat")]
    beta_hat: Option<f64>,
    /// Use a fixed certificate rate λ̂ instead of the computed one.
    #[arg(long, requires = "beta_hat")]
    lambda_hat: Option<f64>,
    /// Largest t_k on the guarantee-curve grid.
    #[arg(long, default_value_t = 100.0)]
    grid_max: f64,
    #[arg(long, default_value_t = 200)]
    grid_points: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    delay: Option<f64>,
    /// Draw x0 from this seed instead of the scenario's value.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    x0_scale: Option<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Scenario the artifacts were produced from.
    #[arg(long)]
    scenario: PathBuf,
    /// Directory holding bounds.json, run_meta.json, trace.csv, events.csv.
    #[arg(long)]
    artifacts: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    // The same scenario-affecting overrides as `simulate`, so the effective
    // configuration (and its hash) can be reproduced here.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    c_safety: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    delay: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    x0_scale: Option<f64>,
}

#[derive(Args)]
struct ReproduceArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run only the undelayed pipeline.
    #[arg(long)]
    delay_free: bool,
    /// Replace the bundled x0 with a seeded draw (invariant checks only;
    /// the fixed-x0 decay ratio is skipped).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
}

/// Everything the pipeline derives from a scenario before simulating.
#[derive(Clone)]
pub struct DesignStage {
    pub spec: SpectralDecomposition,
    pub design: ControllerDesign,
    pub certificate: DecayCertificate,
    pub report: DesignReport,
}

pub fn stage_design(scenario: &Scenario) -> Result<DesignStage> {
    if scenario.graph.n_agents() < 2 {
        return Err(Error::InvalidGraph(
            "consensus synthesis needs at least two agents".into(),
        ));
    }
    if !has_spanning_tree(&scenario.graph) {
        return Err(Error::NoSpanningTree(
            "design requires the connectivity hypothesis".into(),
        ));
    }
    scenario.dynamics.require_controllable()?;
    let spec = spectral_transform(&laplacian(&scenario.graph))?;
    let (design, certificate) =
        synthesize(&scenario.dynamics, &spec, scenario.alpha, scenario.c_safety)?;
    let report = verify_design(&scenario.dynamics, &design)?;
    Ok(DesignStage {
        spec,
        design,
        certificate,
        report,
    })
}

pub struct BoundsStage {
    pub constants: BoundConstants,
    pub report: BoundsReport,
}

pub fn stage_bounds(
    scenario: &Scenario,
    stage: &DesignStage,
    certificate: &DecayCertificate,
) -> Result<BoundsStage> {
    let constants = bound_constants(
        &stage.design,
        certificate,
        &stage.spec,
        &scenario.trigger,
        &scenario.x0,
        &scenario.dynamics,
    )?;
    let report = bounds_report(&constants, certificate, &scenario.trigger)?;
    Ok(BoundsStage { constants, report })
}

/// Build the runnable configuration. A step pinned by the scenario (or CLI)
/// is taken as-is; otherwise the default min(1e-3, τ/4) applies with the
/// τ/4 guard armed, where τ is the asymptotic inter-event bound of the
/// relevant family.
pub fn sim_config(
    scenario: &Scenario,
    stage: &DesignStage,
    bounds: Option<&BoundsReport>,
) -> Result<ScenarioConfig> {
    let tau = bounds.map(|b| {
        if scenario.delay > 0.0 {
            b.delayed_tau_asymptote.unwrap_or(b.tau_asymptote)
        } else {
            b.tau_asymptote
        }
    });
    let (step, tau_floor) = match scenario.step {
        Some(s) => (s, None),
        None => match tau {
            Some(t) => ((t / 4.0).min(DEFAULT_STEP), Some(t)),
            None => (DEFAULT_STEP, None),
        },
    };
    let cfg = ScenarioConfig {
        graph: scenario.graph.clone(),
        dynamics: scenario.dynamics.clone(),
        design: stage.design.clone(),
        trigger: scenario.trigger.clone(),
        per_agent_trigger: scenario.per_agent_trigger.clone(),
        delay_d: scenario.delay,
        x0: scenario.x0.clone(),
        t_end: scenario.t_end,
        step_h: step,
        seed: scenario.seed,
        tau_floor,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(flag: &Option<PathBuf>) -> PathBuf {
    flag.clone()
        .or_else(|| std::env::var_os("ETCON_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("etcon-out"))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn scenario_with_overrides(path: &Path, o: &Overrides) -> Result<Scenario> {
    load_scenario(path)?.apply_overrides(o)
}

fn cmd_design(args: &DesignArgs) -> Result<bool> {
    let scenario = scenario_with_overrides(
        &args.common.scenario,
        &Overrides {
            alpha: args.common.alpha,
            c_safety: args.common.c_safety,
            ..Default::default()
        },
    )?;
    let stage = stage_design(&scenario)?;
    let dir = out_dir(&args.common.out);
    ensure_dir(&dir)?;
    let artifact = DesignArtifact::new(
        &scenario.hash,
        scenario.dynamics.a(),
        scenario.dynamics.b(),
        &stage.design,
        &stage.certificate,
        stage.report.clone(),
    );
    write_json(&dir.join("design.json"), &artifact)?;
    for check in &stage.report.checks {
        println!(
            "{}  {}  value={:.6e}",
            if check.pass { "PASS" } else { "FAIL" },
            check.name,
            check.value
        );
    }
    println!(
        "design written to {} (lambda2={}, c={}, lambda_hat={}, beta_hat={})",
        dir.join("design.json").display(),
        stage.design.lambda2_real,
        stage.design.c_gain,
        stage.certificate.lambda_hat,
        stage.certificate.beta_hat
    );
    Ok(stage.report.all_pass())
}

fn cmd_bounds(args: &BoundsArgs) -> Result<bool> {
    let scenario = scenario_with_overrides(
        &args.common.scenario,
        &Overrides {
            alpha: args.common.alpha,
            c_safety: args.common.c_safety,
            ..Default::default()
        },
    )?;
    let stage = stage_design(&scenario)?;
    let certificate = match (args.beta_hat, args.lambda_hat) {
        (Some(beta_hat), Some(lambda_hat)) => {
            if !(beta_hat > 0.0) || !(lambda_hat > 0.0) {
                return Err(Error::InvalidParams(
                    "certificate overrides must be positive".into(),
                ));
            }
            DecayCertificate { beta_hat, lambda_hat }
        }
        _ => stage.certificate,
    };
    let bounds = stage_bounds(&scenario, &stage, &certificate)?;
    let dir = out_dir(&args.common.out);
    ensure_dir(&dir)?;
    write_json(
        &dir.join("bounds.json"),
        &BoundsArtifact {
            schema: BOUNDS_SCHEMA.into(),
            scenario_hash: scenario.hash.clone(),
            report: bounds.report.clone(),
        },
    )?;
    let grid = bounds_grid(
        &bounds.constants,
        &certificate,
        &scenario.trigger,
        args.grid_max,
        args.grid_points,
    )?;
    write_bounds_grid_csv(&dir.join("bounds_grid.csv"), &grid)?;
    println!(
        "tau: uniform={:.6e} asymptotic={:.6e}",
        bounds.report.tau_uniform, bounds.report.tau_asymptote
    );
    if let (Some(dt), Some(eps)) = (
        bounds.report.delayed_tau_asymptote,
        bounds.report.epsilon_asymptote,
    ) {
        println!("delayed tau asymptotic={dt:.6e}  epsilon asymptotic={eps:.6e}");
    }
    println!("bounds written to {}", dir.display());
    Ok(true)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<bool> {
    let scenario = scenario_with_overrides(
        &args.common.scenario,
        &Overrides {
            alpha: args.common.alpha,
            c_safety: args.common.c_safety,
            delay: args.delay,
            t_end: args.t_end,
            step: args.step,
            seed: args.seed,
            x0_scale: args.x0_scale,
        },
    )?;
    let stage = stage_design(&scenario)?;
    let bounds = stage_bounds(&scenario, &stage, &stage.certificate)?;
    let cfg = sim_config(&scenario, &stage, Some(&bounds.report))?;
    let trace = run(&cfg)?;
    let dir = out_dir(&args.common.out);
    ensure_dir(&dir)?;
    write_sim_artifacts(&dir, &scenario, &stage, &bounds, &trace, &cfg)?;
    println!(
        "simulated {} s in {} steps ({} events, wall {:.2}s); trace written to {}",
        cfg.t_end,
        trace.diagnostics.steps,
        trace.events.len(),
        trace.diagnostics.wall_seconds,
        dir.display()
    );
    Ok(true)
}

fn write_sim_artifacts(
    dir: &Path,
    scenario: &Scenario,
    stage: &DesignStage,
    bounds: &BoundsStage,
    trace: &SimTrace,
    cfg: &ScenarioConfig,
) -> Result<()> {
    let design_artifact = DesignArtifact::new(
        &scenario.hash,
        scenario.dynamics.a(),
        scenario.dynamics.b(),
        &stage.design,
        &stage.certificate,
        stage.report.clone(),
    );
    write_json(&dir.join("design.json"), &design_artifact)?;
    write_json(
        &dir.join("bounds.json"),
        &BoundsArtifact {
            schema: BOUNDS_SCHEMA.into(),
            scenario_hash: scenario.hash.clone(),
            report: bounds.report.clone(),
        },
    )?;
    write_trace_csv(&dir.join("trace.csv"), trace)?;
    write_events_csv(&dir.join("events.csv"), trace)?;
    write_json(
        &dir.join("run_meta.json"),
        &RunMeta {
            schema: META_SCHEMA.into(),
            scenario_hash: scenario.hash.clone(),
            n_agents: trace.n_agents,
            n: trace.n,
            m: trace.m,
            delay: trace.delay_d,
            step_h: cfg.step_h,
            t_end: cfg.t_end,
            event_count: trace.events.len(),
            diagnostics: trace.diagnostics.clone(),
        },
    )?;
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> Result<bool> {
    let scenario = scenario_with_overrides(
        &args.scenario,
        &Overrides {
            alpha: args.alpha,
            c_safety: args.c_safety,
            delay: args.delay,
            t_end: args.t_end,
            step: args.step,
            seed: args.seed,
            x0_scale: args.x0_scale,
        },
    )?;
    let stage = stage_design(&scenario)?;

    let bounds_artifact: BoundsArtifact = read_json(&args.artifacts.join("bounds.json"))?;
    check_schema(&bounds_artifact.schema, BOUNDS_SCHEMA)?;
    check_hash(&bounds_artifact.scenario_hash, &scenario.hash)?;
    let meta: RunMeta = read_json(&args.artifacts.join("run_meta.json"))?;
    check_schema(&meta.schema, META_SCHEMA)?;
    check_hash(&meta.scenario_hash, &scenario.hash)?;
    let trace = read_trace(
        &args.artifacts.join("trace.csv"),
        &args.artifacts.join("events.csv"),
        &meta,
    )?;

    let certificate = DecayCertificate {
        beta_hat: bounds_artifact.report.beta_hat,
        lambda_hat: bounds_artifact.report.lambda_hat,
    };
    let report = verify_trace(
        &trace,
        &stage.spec,
        &certificate,
        &scenario.trigger,
        &bounds_artifact.report,
    )?;
    print!("{}", report.to_text());
    let pass = report.all_pass();

    let dir = args
        .out
        .clone()
        .unwrap_or_else(|| args.artifacts.clone());
    ensure_dir(&dir)?;
    write_json(
        &dir.join("report.json"),
        &VerifyArtifact {
            schema: VERIFY_SCHEMA.into(),
            scenario_hash: scenario.hash.clone(),
            report: report.clone(),
        },
    )?;
    std::fs::write(dir.join("report.txt"), report.to_text())?;
    Ok(pass)
}

struct SummaryLine {
    pass: bool,
    name: String,
    detail: String,
}

/// Bisect the feasibility boundary in α of the design inequality for a
/// fixed P; returns (largest feasible α found, residual at half that α).
pub fn published_p_alpha_range(
    dynamics: &crate::dynamics::LtiDynamics,
    p: &crate::linalg::RMatrix,
) -> Result<(f64, f64)> {
    let mut lo = 1e-9;
    if lmi_residual_max_eig(dynamics, p, lo)? >= 0.0 {
        return Err(Error::InvalidParams(
            "P fails the design inequality even as alpha -> 0".into(),
        ));
    }
    let mut hi = 1.0;
    while lmi_residual_max_eig(dynamics, p, hi)? < 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if lmi_residual_max_eig(dynamics, p, mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let residual = lmi_residual_max_eig(dynamics, p, lo / 2.0)?;
    Ok((lo, residual))
}

/// One closed-loop variant of the reference pipeline: simulate, verify,
/// write artifacts into `dir`, and append summary lines.
fn reproduce_variant(
    dir: &Path,
    label: &str,
    scenario: &Scenario,
    stage: &DesignStage,
    seeded: bool,
    lines: &mut Vec<SummaryLine>,
) -> Result<String> {
    ensure_dir(dir)?;
    let bounds = stage_bounds(scenario, stage, &stage.certificate)?;
    let cfg = sim_config(scenario, stage, Some(&bounds.report))?;
    let trace = run(&cfg)?;
    write_sim_artifacts(dir, scenario, stage, &bounds, &trace, &cfg)?;
    let grid = bounds_grid(&bounds.constants, &stage.certificate, &scenario.trigger, 100.0, 200)?;
    write_bounds_grid_csv(&dir.join("bounds_grid.csv"), &grid)?;
    let report = verify_trace(
        &trace,
        &stage.spec,
        &stage.certificate,
        &scenario.trigger,
        &bounds.report,
    )?;
    write_json(
        &dir.join("report.json"),
        &VerifyArtifact {
            schema: VERIFY_SCHEMA.into(),
            scenario_hash: scenario.hash.clone(),
            report: report.clone(),
        },
    )?;
    std::fs::write(dir.join("report.txt"), report.to_text())?;

    for check in &report.checks {
        lines.push(SummaryLine {
            pass: check.pass,
            name: format!("{label}: {}", check.name.replace('_', "-")),
            detail: format!("worst = {:.3e} ({})", check.worst, check.detail),
        });
    }

    // The 2% decay ratio is a full-horizon claim for the bundled x0.
    if !seeded && scenario.t_end >= 40.0 {
        lines.push(SummaryLine {
            pass: report.disagreement_ratio < 0.02,
            name: format!("{label}: disagreement-decay"),
            detail: format!(
                "disagreement(t_end)/disagreement(0) = {:.6} < 0.02",
                report.disagreement_ratio
            ),
        });
    }

    if scenario.delay > 0.0 && scenario.t_end >= 30.0 {
        // Late inter-event gaps sit above the published asymptotic bound.
        let mut min_late = f64::INFINITY;
        for agent in 0..trace.n_agents {
            let events = trace.agent_events(agent);
            for w in events.windows(2) {
                if w[0].t_event >= 20.0 {
                    min_late = min_late.min(w[1].t_event - w[0].t_event);
                }
            }
        }
        lines.push(SummaryLine {
            pass: min_late >= 0.001,
            name: format!("{label}: late-gap-floor"),
            detail: format!("min gap after t=20 is {min_late:.6} >= 0.001"),
        });
    }

    let mut tail = format!(
        "\n[{label}] delay {}  t_end {}  events {}\n",
        scenario.delay,
        scenario.t_end,
        trace.events.len()
    );
    for s in inter_event_stats(&trace) {
        tail.push_str(&format!(
            "agent {}: {} events, min gap {}, mean gap {}\n",
            s.agent + 1,
            s.count,
            s.min_gap.map(|g| format!("{g:.6}")).unwrap_or("-".into()),
            s.mean_gap.map(|g| format!("{g:.6}")).unwrap_or("-".into()),
        ));
    }
    Ok(tail)
}

fn cmd_reproduce(args: &ReproduceArgs) -> Result<bool> {
    let dir = out_dir(&args.out);
    ensure_dir(&dir)?;
    bundled::materialize(&dir)?;

    let overrides = Overrides {
        t_end: args.t_end,
        step: args.step,
        seed: args.seed,
        ..Default::default()
    };
    let scenario = bundled::six_agent_scenario()?.apply_overrides(&overrides)?;
    let seeded = args.seed.is_some();

    let mut lines: Vec<SummaryLine> = Vec::new();

    // Published positive-definite solution satisfies the design inequality
    // for a positive margin found by bisection.
    let (alpha_max, residual) =
        published_p_alpha_range(&scenario.dynamics, &bundled::published_p())?;
    lines.push(SummaryLine {
        pass: alpha_max > 0.0 && residual < 0.0,
        name: "published-p-design-inequality".into(),
        detail: format!("feasible alpha up to {alpha_max:.4}; residual at alpha/2 = {residual:.3e}"),
    });

    // Bound reproduction with the published certificate.
    let stage = stage_design(&scenario)?;
    let published = bundled::published_certificate();
    let pub_bounds = stage_bounds(&scenario, &stage, &published)?;
    let eps_inf = pub_bounds.report.epsilon_asymptote.unwrap_or(f64::NAN);
    let dtau_inf = pub_bounds.report.delayed_tau_asymptote.unwrap_or(f64::NAN);
    lines.push(SummaryLine {
        pass: (0.002..=0.008).contains(&eps_inf) && (0.0005..=0.002).contains(&dtau_inf),
        name: "published-bound-reproduction".into(),
        detail: format!(
            "epsilon_inf = {eps_inf:.6} in [0.002, 0.008]; tau_inf = {dtau_inf:.6} in [0.0005, 0.002]"
        ),
    });

    // H3 decreases monotonically to its asymptote, within 1e-3 by t_k = 200.
    {
        let params = &scenario.trigger;
        let h3_inf = h3_asymptote(&pub_bounds.constants, params)?;
        let mut monotone = true;
        let mut prev = f64::INFINITY;
        for i in 0..=400 {
            let t_k = i as f64 * 0.5;
            let v = h3(&pub_bounds.constants, &published, params, t_k)?;
            if v > prev * (1.0 + 1e-12) {
                monotone = false;
            }
            prev = v;
        }
        let rel_gap = (prev - h3_inf).abs() / h3_inf;
        lines.push(SummaryLine {
            pass: monotone && rel_gap < 1e-3,
            name: "h3-monotone-convergence".into(),
            detail: format!("monotone = {monotone}; relative gap at t_k=200 is {rel_gap:.3e}"),
        });
    }

    // Closed-loop variants: the delayed reference run and the undelayed
    // setting (only the latter with --delay-free).
    let mut tails = String::new();
    if !args.delay_free {
        tails += &reproduce_variant(
            &dir.join("delayed"),
            "delayed",
            &scenario,
            &stage,
            seeded,
            &mut lines,
        )?;
    }
    let delay_free_scenario = scenario.clone().apply_overrides(&Overrides {
        delay: Some(0.0),
        ..Default::default()
    })?;
    tails += &reproduce_variant(
        &dir.join("delay-free"),
        "delay-free",
        &delay_free_scenario,
        &stage,
        seeded,
        &mut lines,
    )?;

    let mut summary = format!("scenario hash {}\n\n", scenario.hash);
    let mut all_pass = true;
    for line in &lines {
        all_pass &= line.pass;
        summary.push_str(&format!(
            "{}  {:44}  {}\n",
            if line.pass { "PASS" } else { "FAIL" },
            line.name,
            line.detail
        ));
    }
    summary.push_str(&tails);
    print!("{summary}");
    std::fs::write(dir.join("summary.txt"), &summary)?;
    println!("artifacts written to {}", dir.display());
    Ok(all_pass)
}

/// Parse argv, dispatch, and map the outcome to an exit code.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Design(args) => cmd_design(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Verify(args) => cmd_verify(args),
        Command::ReproducePaper(args) => cmd_reproduce(args),
    };
    match outcome {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("FAILED: one or more checks did not pass");
            1
        }
        Err(err) => {
            eprintln!("error: {err}");
            1
        }
    }
}
