use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tlao::grid::NumericalPolicy;
use tlao::harness::{self, Provenance, RunMetadata, SolverKind, SweepParam, SweepSpec};
use tlao::model::{Preset, ProtocolSpec};
use tlao::{Error, Result};

/// Three-trap atom optics simulator.
#[derive(Parser)]
#[command(name = "tlao", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in protocols.
    Presets,
    /// Print a protocol as JSON, suitable for `--spec`.
    Show(Source),
    /// Simulate one protocol and write its time series.
    Run(RunArgs),
    /// Sweep one protocol parameter.
    Scan(ScanArgs),
    /// Check that terminal observables are stable under grid refinement.
    Converge(ConvergeArgs),
}

#[derive(Args)]
struct Source {
    /// Built-in protocol name.
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    preset: Option<String>,
    /// Protocol JSON file.
    #[arg(long)]
    spec: Option<PathBuf>,
}

impl Source {
    fn load(&self) -> Result<(ProtocolSpec, Option<String>)> {
        match (&self.preset, &self.spec) {
            (Some(name), _) => Ok((tlao::model::preset(name)?, Some(name.clone()))),
            (None, Some(path)) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                Ok((ProtocolSpec::from_json(&text)?, None))
            }
            (None, None) => unreachable!("clap requires one source"),
        }
    }

    fn stem(&self) -> String {
        match (&self.preset, &self.spec) {
            (Some(name), _) => name.clone(),
            (None, Some(path)) => path
                .file_stem()
                .map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned()),
            (None, None) => "run".into(),
        }
    }
}

#[derive(Args)]
struct Numerics {
    /// three_mode, grid_1d or grid_2d.
    #[arg(long, default_value = "grid_1d")]
    solver: SolverKind,
    /// Time step in units of 1/omega_x.
    #[arg(long)]
    dt: Option<f64>,
    /// Grid spacing in units of 1/alpha.
    #[arg(long, conflicts_with = "points")]
    spacing: Option<f64>,
    /// Points along the trap axis (power of two).
    #[arg(long)]
    points: Option<usize>,
    /// Record every N-th step.
    #[arg(long)]
    sample_every: Option<usize>,
}

impl Numerics {
    fn policy(&self, spec: &ProtocolSpec) -> Result<NumericalPolicy> {
        let mut p = match self.solver {
            SolverKind::Grid2d => NumericalPolicy::default_2d(),
            _ => NumericalPolicy::default(),
        };
        if let Some(dt) = self.dt {
            p.dt = dt;
        }
        if let Some(h) = self.spacing {
            p.spacing = h;
        }
        if let Some(n) = self.points {
            if n < tlao::grid::MIN_POINTS || !n.is_power_of_two() {
                return Err(Error::InvalidParameter(format!(
                    "--points must be a power of two of at least {}, got {n}",
                    tlao::grid::MIN_POINTS
                )));
            }
            p.spacing = 2.0 * (spec.max_distance() + p.margin) / n as f64;
        }
        if let Some(k) = self.sample_every {
            p.sample_every = k;
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    numerics: Numerics,
    /// Times at which to export |psi|^2 (grid solvers only).
    #[arg(long, value_delimiter = ',')]
    snapshots: Vec<f64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    numerics: Numerics,
    /// delay, t_ramp, d_min or d_max.
    #[arg(long, default_value = "delay")]
    param: SweepParam,
    /// Explicit values, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    values: Vec<f64>,
    /// Range as START:STOP:STEP, inclusive of STOP.
    #[arg(long, conflicts_with = "values", allow_hyphen_values = true)]
    range: Option<String>,
    /// Simulations run at once.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output directory; the table goes to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConvergeArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    numerics: Numerics,
}

fn parse_range(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidParameter(format!("range must be START:STOP:STEP, got `{text}`"));
    let parts: Vec<f64> = text
        .split(':')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let [start, stop, step] = parts[..] else {
        return Err(bad());
    };
    if !(step > 0.0) || stop < start {
        return Err(bad());
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

fn run(args: &RunArgs) -> Result<()> {
    let (spec, preset) = args.source.load()?;
    let policy = args.numerics.policy(&spec)?;
    let solver = args.numerics.solver;
    if solver == SolverKind::ThreeMode && !args.snapshots.is_empty() {
        return Err(Error::InvalidParameter(
            "snapshots need a grid solver".into(),
        ));
    }
    let result = harness::run_solver_with_snapshots(&spec, solver, &policy, &args.snapshots)?;
    let meta = RunMetadata::new(
        Provenance {
            preset,
            solver,
            policy,
            version: harness::VERSION,
        },
        &spec,
        &result,
    );
    let stem = args.source.stem();
    for path in harness::write_run(&args.out, &stem, &result, &meta)? {
        println!("wrote {}", path.display());
    }
    let last = result.final_sample();
    println!(
        "t={:.3} p_L={:.6} p_M={:.6} p_R={:.6} p_dark={:.6} coherence={:.6}",
        last.time, last.p_l, last.p_m, last.p_r, last.p_dark, last.coherence
    );
    Ok(())
}

fn scan(args: &ScanArgs) -> Result<()> {
    let (base, preset) = args.source.load()?;
    let values = match &args.range {
        Some(r) => parse_range(r)?,
        None => args.values.clone(),
    };
    let request = SweepSpec {
        policy: args.numerics.policy(&base)?,
        base,
        preset,
        parameter: args.param,
        values,
        solver: args.numerics.solver,
        jobs: args.jobs,
    };
    let result = request.run()?;
    match &args.out {
        Some(dir) => {
            let stem = format!("{}_{}", args.source.stem(), args.param);
            for path in harness::write_sweep(dir, &stem, &result, &request.base)? {
                println!("wrote {}", path.display());
            }
        }
        None => print!("{}", result.to_csv()),
    }
    Ok(())
}

fn converge(args: &ConvergeArgs) -> Result<bool> {
    let (spec, _) = args.source.load()?;
    let policy = args.numerics.policy(&spec)?;
    let ladder = harness::default_ladder(&policy);
    let report = harness::convergence_report(&spec, &ladder, args.numerics.solver)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(report.passed)
}

fn show(source: &Source) -> Result<()> {
    let (spec, _) = source.load()?;
    println!("{}", spec.to_json());
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Presets => {
            for p in Preset::ALL {
                println!("{:<16}{}", p.name(), p.description());
            }
            Ok(true)
        }
        Command::Show(s) => show(s).map(|_| true),
        Command::Run(a) => run(a).map(|_| true),
        Command::Scan(a) => scan(a).map(|_| true),
        Command::Converge(a) => converge(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: not converged");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
