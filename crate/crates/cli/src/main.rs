use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use varimorph::analytic::{geodesic_dirac0, geodesic_dirac1};
use varimorph::dynamics::{point_masses, rk4_shoot, Costate, Model, ShootingParams, ShootingProblem};
use varimorph::eval::{chamfer, gamma_sweep, write_sweep_csv, Histogram};
use varimorph::io::{
    default_kernels, read_curve_file, read_obj_file, read_trajectory, read_varifold, write_result_bundle,
    write_trajectory_bundle, write_varifold, RegistrationConfig,
};
use varimorph::kernels::DeformKernelSpec;
use varimorph::registration::{displayed_snapshots, register, synth_circle_ellipse, synth_partial, PartialShape};
use varimorph::varifold::{curve_to_varifold, mesh_to_varifold, total_mass};
use varimorph::{Error, Execution, Result};

const AFTER_HELP: &str = "\
Exit codes:
  0  success
  2  invalid command line
  3  file system error
  4  malformed input file
  5  document does not match its schema
  6  invalid input (dimensions, weights, empty sets, antipodal directions)
  7  degenerate geometry (collapsed frames, non-positive Jacobians, singular maps)
  8  numerical failure (non-finite values, infeasible start, failed line search)
  9  internal consistency failure

Environment:
  RAYON_NUM_THREADS  number of worker threads used for per-atom parallelism";

#[derive(Parser)]
#[command(name = "varimorph", version, about = "Varifold registration with diffeomorphic and weight-change models", after_help = AFTER_HELP)]
struct Cli {
    /// Seed for the synthetic generators.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Run every per-atom loop sequentially.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn a CSV polyline or an OBJ triangle mesh into a varifold JSON document.
    Convert {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, value_enum)]
        kind: InputKind,
        /// Join the last vertex of a curve to the first.
        #[arg(long)]
        closed: bool,
    },
    /// Run a registration described by a JSON config and write a result bundle.
    Register { config: PathBuf, out_dir: PathBuf },
    /// Shoot a varifold from given initial momenta and write the trajectory.
    Shoot(ShootArgs),
    /// Sample the exact geodesic between two weighted Diracs.
    GeodesicDirac(GeodesicArgs),
    /// Compare a result bundle with a ground-truth varifold.
    Eval {
        result_dir: PathBuf,
        ground_truth: PathBuf,
        out_csv: PathBuf,
        /// Also write a histogram of final weights here.
        #[arg(long)]
        histogram: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        bins: usize,
    },
    /// Write a synthetic benchmark instance.
    Synth {
        #[arg(value_enum)]
        instance: SynthKind,
        out_dir: PathBuf,
        #[arg(long, default_value_t = 64)]
        segments: usize,
        /// Fraction of the ground truth removed from the partial target.
        #[arg(long, default_value_t = 0.25)]
        removed: f64,
    },
    /// Rerun a registration config for several values of gamma.
    Sweep {
        config: PathBuf,
        out_csv: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        gammas: Vec<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum InputKind {
    Curve,
    Mesh,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    CircleEllipse,
    Partial,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Lddmm,
    L2,
    Fr,
}

#[derive(Args)]
struct ShootArgs {
    varifold: PathBuf,
    /// JSON `{"momenta": [..], "controls": [..]}`; momenta per atom, position then frame.
    costates: PathBuf,
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "lddmm")]
    model: ModelKind,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_v: f64,
    #[arg(long, default_value_t = 15)]
    steps: usize,
}

#[derive(Args)]
struct GeodesicArgs {
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    x0: Vec<f64>,
    #[arg(long)]
    r0: f64,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    x1: Vec<f64>,
    #[arg(long)]
    r1: f64,
    /// Unit direction at the start; with --u1 selects the oriented (1-Dirac) case.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, requires = "u1")]
    u0: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, requires = "u0")]
    u1: Option<Vec<f64>>,
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_v: f64,
    #[arg(long, default_value_t = 11)]
    samples: usize,
    out_csv: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CostateDoc {
    momenta: Vec<f64>,
    #[serde(default)]
    controls: Vec<f64>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 3,
        Error::Parse(_) => 4,
        Error::Schema(_) => 5,
        Error::DimensionMismatch(_)
        | Error::InvalidInput(_)
        | Error::MissingFrame
        | Error::AntipodalDirections
        | Error::InvalidWeights(_)
        | Error::EmptySet => 6,
        Error::DegenerateFrame { .. } | Error::SingularMap { .. } | Error::NonPositiveJacobian { .. } => 7,
        Error::NonFinite { .. } | Error::LineSearchFailure { .. } | Error::NonFiniteObjective | Error::InfeasibleInit(_) => 8,
        Error::Consistency(_) => 9,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn execution(cli: &Cli, configured: Execution) -> Execution {
    if cli.deterministic {
        Execution::Sequential
    } else {
        configured
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Convert { input, output, kind, closed } => {
            let v = match kind {
                InputKind::Curve => curve_to_varifold(&read_curve_file(input, *closed)?)?,
                InputKind::Mesh => mesh_to_varifold(&read_obj_file(input)?)?,
            };
            write_varifold(output, &v)?;
            println!("{} atoms, total mass {}", v.len(), total_mass(&v));
        }
        Command::Register { config, out_dir } => {
            let (_, mut problem) = RegistrationConfig::load(config)?;
            problem.params.exec = execution(cli, problem.params.exec);
            let result = register(&problem)?;
            write_result_bundle(out_dir, &result, &point_masses(&problem.source))?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            let e = result.energies;
            println!(
                "deformation {} weight {} fidelity {} total {} ({} iterations, {:?})",
                e.deformation, e.weight, e.fidelity, e.total, result.diagnostics.iterations, result.diagnostics.termination
            );
        }
        Command::Shoot(args) => shoot(cli, args)?,
        Command::GeodesicDirac(args) => geodesic(args)?,
        Command::Eval {
            result_dir,
            ground_truth,
            out_csv,
            histogram,
            bins,
        } => {
            let traj = read_trajectory(&result_dir.join("trajectory.json"))?;
            let last = traj
                .snapshots
                .last()
                .ok_or_else(|| Error::Schema("trajectory has no snapshots".into()))?
                .to_varifold()?;
            let truth = read_varifold(ground_truth)?;
            let dist = chamfer(&last.positions(), &truth.positions())?;
            let mut out = fs::File::create(out_csv)?;
            writeln!(out, "metric,value")?;
            writeln!(out, "chamfer,{dist}")?;
            writeln!(out, "final_mass,{}", total_mass(&last))?;
            writeln!(out, "ground_truth_mass,{}", total_mass(&truth))?;
            writeln!(out, "atoms,{}", last.len())?;
            if let Some(path) = histogram {
                Histogram::new(&last.weights(), *bins)?.write_csv(fs::File::create(path)?)?;
            }
            println!("chamfer {dist}");
        }
        Command::Synth {
            instance,
            out_dir,
            segments,
            removed,
        } => {
            fs::create_dir_all(out_dir)?;
            match instance {
                SynthKind::CircleEllipse => {
                    let (source, target) = synth_circle_ellipse(*segments)?;
                    write_varifold(&out_dir.join("source.json"), &source)?;
                    write_varifold(&out_dir.join("target.json"), &target)?;
                }
                SynthKind::Partial => {
                    let (source, target, truth) = synth_partial(PartialShape::default(), *segments, *removed, cli.seed)?;
                    write_varifold(&out_dir.join("source.json"), &source)?;
                    write_varifold(&out_dir.join("target.json"), &target)?;
                    write_varifold(&out_dir.join("ground_truth.json"), &truth)?;
                }
            }
        }
        Command::Sweep { config, out_csv, gammas } => {
            let (_, mut problem) = RegistrationConfig::load(config)?;
            problem.params.exec = execution(cli, problem.params.exec);
            let rows = gamma_sweep(&problem, gammas)?;
            write_sweep_csv(&rows, fs::File::create(out_csv)?)?;
        }
    }
    Ok(())
}

fn shoot(cli: &Cli, args: &ShootArgs) -> Result<()> {
    let source = read_varifold(&args.varifold)?;
    let doc: CostateDoc = serde_json::from_str(&fs::read_to_string(&args.costates)?)?;
    let model = match args.model {
        ModelKind::Lddmm => Model::Lddmm,
        ModelKind::L2 => Model::L2 { gamma: args.gamma },
        ModelKind::Fr => Model::FisherRao { gamma: args.gamma },
    };
    let params = ShootingParams {
        deform: DeformKernelSpec::gaussian(args.sigma_v),
        fidelity: default_kernels().1,
        lambda: 0.0,
        steps: args.steps,
        exec: execution(cli, Execution::Parallel),
    };
    let problem = ShootingProblem::new(&source, source.clone(), model, &params)?;
    let layout = problem.layout();
    let plain = layout.n + layout.d * layout.n;
    if doc.momenta.len() != layout.atoms * plain {
        return Err(Error::Schema(format!(
            "expected {} momenta, got {}",
            layout.atoms * plain,
            doc.momenta.len()
        )));
    }
    let want = if model == Model::Lddmm { 0 } else { layout.atoms };
    if doc.controls.len() != want {
        return Err(Error::Schema(format!("expected {want} controls, got {}", doc.controls.len())));
    }
    let mut p0 = Vec::with_capacity(layout.len());
    for i in 0..layout.atoms {
        p0.extend_from_slice(&doc.momenta[i * plain..(i + 1) * plain]);
        if layout.weight_slot {
            p0.push(doc.controls[i]);
        }
    }
    let p0 = Costate::from_flat(layout, p0)?;
    let traj = rk4_shoot(problem.system(), problem.initial_state(), &p0, args.steps)?;
    let alpha = if matches!(model, Model::L2 { .. }) { doc.controls.clone() } else { Vec::new() };
    let snapshots = displayed_snapshots(&traj, model, problem.system().point_mass(), &alpha);
    write_trajectory_bundle(&args.out_dir, &traj.times, &snapshots)?;
    let energy = problem.system().energy_parts(&problem.initial_state().data, &p0.data)?;
    let drift = varimorph::dynamics::hamiltonian_drift(&traj, problem.system())?;
    let summary = serde_json::json!({
        "deformation": energy.deformation,
        "weight": energy.weight,
        "drift": drift,
    });
    fs::write(args.out_dir.join("energy.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    println!("deformation {} weight {} drift {drift:e}", energy.deformation, energy.weight);
    Ok(())
}

fn geodesic(args: &GeodesicArgs) -> Result<()> {
    if args.samples < 2 {
        return Err(Error::InvalidInput("at least two samples are required".into()));
    }
    let n = args.x0.len();
    let times: Vec<f64> = (0..args.samples)
        .map(|k| if k + 1 == args.samples { 1.0 } else { k as f64 / (args.samples - 1) as f64 })
        .collect();
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((0..n).map(|k| format!("x{k}")));
    let rows: Vec<Vec<f64>>;
    let cost;
    match (&args.u0, &args.u1) {
        (Some(u0), Some(u1)) => {
            let kernel = DeformKernelSpec::gaussian(args.sigma_v);
            let g = geodesic_dirac1(&args.x0, u0, args.r0, &args.x1, u1, args.r1, args.gamma, &kernel)?;
            header.extend((0..n).map(|k| format!("u{k}")));
            rows = times
                .iter()
                .map(|&t| {
                    let mut r = vec![t];
                    r.extend(g.position(t));
                    r.extend(g.direction(t));
                    r.push(g.weight(t));
                    r
                })
                .collect();
            cost = g.cost;
        }
        _ => {
            let g = geodesic_dirac0(&args.x0, args.r0, &args.x1, args.r1, args.gamma)?;
            rows = times
                .iter()
                .map(|&t| {
                    let mut r = vec![t];
                    r.extend(g.position(t));
                    r.push(g.weight(t));
                    r
                })
                .collect();
            cost = g.cost;
        }
    }
    header.push("r".into());
    write_rows(&args.out_csv, &header, &rows)?;
    println!("cost {cost} distance {}", cost.sqrt());
    Ok(())
}

fn write_rows(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{}", header.join(","))?;
    for r in rows {
        let cells: Vec<String> = r.iter().map(f64::to_string).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}
