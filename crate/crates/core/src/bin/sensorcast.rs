use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sensorcast::harness::{default_out_dir, run_matrix, run_scenario, CellStatus, MatrixSpec};
use sensorcast::scenario::ScenarioOverrides;
use sensorcast::{Scenario, SimError};

const EXIT_CONFIG: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "sensorcast", version, about = "Sensor-field dissemination simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario with its replications.
    Run(RunArgs),
    /// Run a sweep matrix from a preset or a matrix file.
    Matrix(MatrixArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML key = value); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// flooding | filtercast | rfiltercast | unbiased | biased, optionally `name:param`
    #[arg(long)]
    protocol: Option<String>,
    /// Filter window for Filtercast and RFiltercast.
    #[arg(long)]
    n: Option<u64>,
    /// Forwarding probability for the unbiased protocol.
    #[arg(long)]
    p: Option<f64>,
    /// Hop buckets for the biased protocol, e.g. `1-3:0.8,4-6:0.6,7+:0.3`.
    #[arg(long)]
    buckets: Option<String>,
    #[arg(long)]
    ttl: Option<u32>,
    /// grid | random
    #[arg(long)]
    topology: Option<String>,
    /// Reports per second per node.
    #[arg(long)]
    rate: Option<f64>,
    /// Give every node a random report phase (default true).
    #[arg(long)]
    stagger: Option<bool>,
    #[arg(long)]
    tx_range: Option<f64>,
    /// Maximum waypoint speed, m/s; 0 means static.
    #[arg(long)]
    speed: Option<f64>,
    /// linear | zone
    #[arg(long)]
    data_model: Option<String>,
    /// ideal | contended
    #[arg(long)]
    channel: Option<String>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    nodes: Option<usize>,
    /// Side of the square field, m.
    #[arg(long)]
    area: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    /// Output directory; defaults to $SENSORCAST_OUT or ./results.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run replications one after another.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct MatrixArgs {
    /// static-grid | mobility
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Matrix file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    sequential: bool,
}

impl RunArgs {
    fn overrides(&self) -> ScenarioOverrides {
        ScenarioOverrides {
            protocol: self.protocol.clone(),
            n: self.n,
            p: self.p,
            ttl: self.ttl,
            buckets: self.buckets.clone(),
            topology: self.topology.clone(),
            rate: self.rate,
            stagger: self.stagger,
            tx_range: self.tx_range,
            speed: self.speed,
            data_model: self.data_model.clone(),
            channel: self.channel.clone(),
            duration: self.duration,
            nodes: self.nodes,
            area: self.area,
            replications: self.replications,
            seed: self.seed,
            ..ScenarioOverrides::default()
        }
    }
}

fn run(args: RunArgs) -> Result<ExitCode, SimError> {
    let mut ov = match &args.config {
        Some(path) => ScenarioOverrides::from_file(path)?,
        None => ScenarioOverrides::default(),
    };
    ov.merge(&args.overrides());
    let scenario = ov.apply(&Scenario::default())?;
    let out = args.out.clone().unwrap_or_else(default_out_dir);
    let result = run_scenario(&scenario, &out, !args.sequential)?;
    println!("scenario {}", result.scenario_id);
    for r in &result.runs {
        let s = &r.summary;
        println!(
            "seed {:>20}  energy {:10.3} J  tx {:>9}  drops {:>7}  collisions {:>8}  werr {:.4}  coverage {:.3}",
            s.seed, s.total_energy_j, s.tx_count, s.drop_count, s.collision_count, s.mean_weighted_err, s.coverage
        );
    }
    println!("wrote {} and {}", result.samples_path.display(), result.summary_path.display());
    Ok(ExitCode::SUCCESS)
}

fn matrix(args: MatrixArgs) -> Result<ExitCode, SimError> {
    let mut spec = match (&args.config, &args.preset) {
        (Some(path), _) => MatrixSpec::from_file(path)?,
        (None, Some(name)) => MatrixSpec::preset(name)?,
        (None, None) => MatrixSpec::static_grid(),
    };
    let ov = ScenarioOverrides {
        duration: args.duration,
        replications: args.replications,
        seed: args.seed,
        ..ScenarioOverrides::default()
    };
    spec.base = ov.apply_unchecked(&spec.base)?;
    let out = args.out.clone().unwrap_or_else(default_out_dir);
    let report = run_matrix(&spec, &out, !args.sequential)?;
    for c in &report.cells {
        match &c.status {
            CellStatus::Ok => println!("ok      {}", c.cell),
            CellStatus::Failed(e) => println!("failed  {}: {e}", c.cell),
        }
    }
    println!("manifest {}", report.manifest.display());
    if report.failed() > 0 {
        eprintln!("{} of {} cells failed", report.failed(), report.cells.len());
        return Ok(ExitCode::from(EXIT_PARTIAL));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Matrix(a) => matrix(a),
    };
    match result {
        Ok(code) => code,
        Err(e @ SimError::Config(_)) => {
            eprintln!("sensorcast: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("sensorcast: {e}");
            ExitCode::FAILURE
        }
    }
}
