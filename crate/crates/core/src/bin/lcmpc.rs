use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use lcmpc::config::{ExperimentConfig, FeasibleMode};
use lcmpc::cycle::LimitCycle;
use lcmpc::io::{read_json, to_canonical_json, write_json, write_vertices_csv};
use lcmpc::lyap::verify_terminal_cost;
use lcmpc::model::SwitchedAffineSystem;
use lcmpc::pipeline::{CycleArtifact, Pipeline, TerminalCostArtifact, TubeArtifact};
use lcmpc::tube::{sampled_invariance, verify_state_tube, verify_tube, TubeKind, TubeSets, VERIFY_TOL};
use lcmpc::{Error, Result};

const VERIFY_SAMPLES: usize = 100;

#[derive(Parser)]
#[command(name = "lcmpc", version, about = "Limit-cycle FCS-MPC design and simulation")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact directory; defaults to the config's output dir, then `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for sampled checks.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for the parallel searches.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit the discrete-time system.
    Discretize,
    /// Solve the configured cycle or synthesize the optimal one.
    Cycle,
    /// Solve and verify the periodic terminal cost.
    TerminalCost,
    /// Compute and verify a periodic invariant tube.
    Tube {
        #[arg(long, value_enum)]
        kind: KindArg,
    },
    /// Compute the N-step feasible sets.
    Feasible {
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Run the closed loop.
    Simulate {
        /// Also run the output-tracking baseline.
        #[arg(long)]
        baseline: bool,
    },
    /// Re-check the stored artifacts in the output directory.
    Verify,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Ellipsoidal,
    Polytopic,
}

impl From<KindArg> for TubeKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Ellipsoidal => TubeKind::Ellipsoidal,
            KindArg::Polytopic => TubeKind::Polytopic,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Hull,
}

enum Failure {
    Error(Error),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Error(e.into())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(4)
        }
    }
}

fn run(cli: &Cli) -> std::result::Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    let config = match &cli.config {
        Some(path) => Some(ExperimentConfig::from_path(path)?),
        None => None,
    };
    let out = cli
        .out
        .clone()
        .or_else(|| config.as_ref().and_then(|c| c.output.as_ref()).map(|o| PathBuf::from(&o.dir)))
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out)?;

    if let Command::Verify = cli.command {
        return verify(&out, cli.seed);
    }
    let config = config.ok_or_else(|| Error::InvalidArgument("--config is required".into()))?;
    let pipeline = Pipeline::new(config)?.with_threads(cli.threads);
    write_json(out.join("system.json"), &pipeline.system)?;

    match &cli.command {
        Command::Discretize => Ok(()),
        Command::Cycle => {
            emit_cycle(&out, &pipeline)?;
            Ok(())
        }
        Command::TerminalCost => {
            let cycle = emit_cycle(&out, &pipeline)?;
            let artifact = pipeline.terminal_cost(&cycle)?;
            write_json(out.join("terminal_cost.json"), &artifact)?;
            if !artifact.report.passed {
                return Err(Failure::Verification(format!(
                    "terminal cost decrease margin {:.3e}",
                    artifact.report.worst_decrease()
                )));
            }
            Ok(())
        }
        Command::Tube { kind } => {
            let cycle = emit_cycle(&out, &pipeline)?;
            let terminal = pipeline.terminal_cost(&cycle)?;
            write_json(out.join("terminal_cost.json"), &terminal)?;
            let kind = TubeKind::from(*kind);
            let artifact = pipeline.tube(&cycle, &terminal.terminal, kind)?;
            emit_tube(&out, &pipeline.system, kind, &artifact)?;
            if !artifact.report.passed || !artifact.state_report.passed {
                return Err(Failure::Verification(format!(
                    "tube margins {:.3e} (error) and {:.3e} (state)",
                    artifact.report.worst(),
                    artifact.state_report.worst()
                )));
            }
            Ok(())
        }
        Command::Feasible { mode, horizon } => {
            let mode = match mode {
                Some(ModeArg::Exact) => FeasibleMode::Exact,
                Some(ModeArg::Hull) => FeasibleMode::Hull,
                None => pipeline.config.feasible.as_ref().map_or(FeasibleMode::Exact, |f| f.mode),
            };
            let cycle = emit_cycle(&out, &pipeline)?;
            let terminal = pipeline.terminal_cost(&cycle)?;
            let tube = pipeline.tube(&cycle, &terminal.terminal, TubeKind::Polytopic)?;
            let result = pipeline.feasible(&tube.state_tube, mode, *horizon)?;
            let name = match mode {
                FeasibleMode::Exact => "feasible_exact",
                FeasibleMode::Hull => "feasible_hull",
            };
            write_json(out.join(format!("{name}.json")), &result)?;
            if pipeline.system.n_x() == 2 {
                let mut w = csv::Writer::from_writer(BufWriter::new(File::create(out.join(format!("{name}.csv")))?));
                w.write_record(["step", "piece", "vertex", "x0", "x1"]).map_err(Error::from)?;
                for (i, pieces) in result.per_step.iter().enumerate() {
                    for (k, piece) in pieces.iter().enumerate() {
                        for (v, [x, y]) in piece.vertices_2d()?.into_iter().enumerate() {
                            w.write_record([
                                i.to_string(),
                                k.to_string(),
                                v.to_string(),
                                format!("{x:.16e}"),
                                format!("{y:.16e}"),
                            ])
                            .map_err(Error::from)?;
                        }
                    }
                }
                w.flush()?;
            }
            if let Some(x0) = pipeline.config.x0() {
                if !result.contains(result.horizon, &x0) {
                    log::warn!("x0 lies outside the {}-step feasible set", result.horizon);
                }
            }
            Ok(())
        }
        Command::Simulate { baseline } => {
            let artifact = pipeline.simulate(*baseline)?;
            artifact.trace.write_csv(BufWriter::new(File::create(out.join("trace.csv"))?))?;
            write_json(out.join("metrics.json"), &Metrics::of(&artifact.trace, &artifact.metrics))?;
            if let Some(b) = &artifact.baseline {
                b.write_csv(BufWriter::new(File::create(out.join("baseline_trace.csv"))?))?;
                write_json(out.join("baseline_metrics.json"), &Metrics::of(b, &artifact.baseline_metrics))?;
            }
            if !artifact.trace.all_feasible() {
                return Err(Error::Infeasible {
                    k: artifact.trace.k0 + artifact.trace.steps(),
                }
                .into());
            }
            Ok(())
        }
        Command::Verify => unreachable!(),
    }
}

#[derive(Serialize)]
struct Metrics<'a> {
    steps: usize,
    all_feasible: bool,
    total_nodes_expanded: u64,
    final_tracking_error: Option<f64>,
    min_decrease_margin: Option<f64>,
    steady_state: &'a Option<lcmpc::sim::SteadyStateMetrics>,
}

impl<'a> Metrics<'a> {
    fn of(trace: &lcmpc::sim::ClosedLoopTrace, steady_state: &'a Option<lcmpc::sim::SteadyStateMetrics>) -> Self {
        Metrics {
            steps: trace.steps(),
            all_feasible: trace.all_feasible(),
            total_nodes_expanded: trace.nodes_expanded.iter().sum(),
            final_tracking_error: trace.tracking_error.last().copied(),
            min_decrease_margin: trace.decrease_margin.iter().copied().reduce(f64::min),
            steady_state,
        }
    }
}

fn emit_cycle(out: &Path, pipeline: &Pipeline) -> Result<LimitCycle> {
    let artifact = pipeline.cycle()?;
    write_json(out.join("cycle.json"), &artifact)?;
    let cycle = &artifact.cycle;
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(out.join("cycle.csv"))?));
    let n_x = cycle.states.first().map_or(0, |x| x.len());
    let n_y = cycle.outputs.first().map_or(0, |y| y.len());
    let mut header = vec!["j".to_string(), "u_index".to_string()];
    header.extend((0..n_x).map(|i| format!("x{i}")));
    header.extend((0..n_y).map(|i| format!("y{i}")));
    w.write_record(&header)?;
    for j in 0..cycle.period() {
        let mut row = vec![j.to_string(), cycle.input_indices[j].to_string()];
        row.extend(cycle.states[j].iter().map(|v| format!("{v:.16e}")));
        row.extend(cycle.outputs[j].iter().map(|v| format!("{v:.16e}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(artifact.cycle)
}

fn emit_tube(out: &Path, sys: &SwitchedAffineSystem, kind: TubeKind, artifact: &TubeArtifact) -> Result<()> {
    let name = match kind {
        TubeKind::Ellipsoidal => "tube_ellipsoidal",
        TubeKind::Polytopic => "tube_polytopic",
    };
    write_json(out.join(format!("{name}.json")), artifact)?;
    if sys.n_x() == 2 {
        if let (TubeSets::Polytopic(err), TubeSets::Polytopic(state)) =
            (&artifact.error_tube.sets, &artifact.state_tube.sets)
        {
            write_vertices_csv(BufWriter::new(File::create(out.join(format!("{name}_error.csv")))?), err)?;
            write_vertices_csv(BufWriter::new(File::create(out.join(format!("{name}_state.csv")))?), state)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct VerifyReport {
    checks: Vec<Check>,
    passed: bool,
    seed: u64,
}

#[derive(Serialize)]
struct Check {
    artifact: String,
    margin: f64,
    passed: bool,
}

fn verify(out: &Path, seed: u64) -> std::result::Result<(), Failure> {
    let sys: SwitchedAffineSystem = read_json(out.join("system.json"))?;
    let cycle_artifact: CycleArtifact = read_json(out.join("cycle.json"))?;
    let cycle = &cycle_artifact.cycle;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let defect = match cycle.validate(&sys) {
        Ok(()) => cycle.dynamics_defect(&sys),
        Err(e) => {
            log::error!("cycle: {e}");
            f64::INFINITY
        }
    };
    checks.push(Check {
        artifact: "cycle.json".into(),
        margin: -defect,
        passed: defect.is_finite(),
    });

    let terminal_path = out.join("terminal_cost.json");
    if terminal_path.exists() {
        let t: TerminalCostArtifact = read_json(&terminal_path)?;
        let report = verify_terminal_cost(&sys, cycle, &t.q, &t.terminal.p)?;
        checks.push(Check {
            artifact: "terminal_cost.json".into(),
            margin: report.min_eig_p.iter().copied().fold(report.worst_decrease(), f64::min),
            passed: report.passed,
        });
    }

    for name in ["tube_polytopic.json", "tube_ellipsoidal.json"] {
        let path = out.join(name);
        if !path.exists() {
            continue;
        }
        let t: TubeArtifact = read_json(&path)?;
        let report = verify_tube(&sys, cycle, &t.error_tube)?;
        let state = verify_state_tube(&sys, cycle, &t.state_tube)?;
        let sampled = sampled_invariance(&sys, cycle, &t.error_tube, VERIFY_SAMPLES, &mut rng)?;
        checks.push(Check {
            artifact: name.into(),
            margin: report.worst().min(state.worst()).min(sampled),
            passed: report.passed && state.passed && sampled >= -VERIFY_TOL,
        });
    }

    let passed = checks.iter().all(|c| c.passed);
    let report = VerifyReport { checks, passed, seed };
    write_json(out.join("verify.json"), &report)?;
    println!("{}", to_canonical_json(&report)?);
    if passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.artifact.as_str()).collect();
        Err(Failure::Verification(failed.join(", ")))
    }
}
