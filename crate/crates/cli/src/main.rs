use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dualfilter::harness::{
    derive_seed, run_scenario, simulate_dataset, write_dataset_csv, write_results, write_summary,
    ExperimentSpec, ModelSpec, Scenario, DATA_CELL,
};
use dualfilter::model::{CirModel, DualModel, WfModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EXIT_CELL_FAILED: u8 = 2;
const EXIT_CONFIG: u8 = 64;
const EXIT_IO: u8 = 1;

#[derive(Parser)]
#[command(
    name = "dualfilter",
    version,
    about = "Duality-based filtering experiments for CIR and Wright–Fisher signals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario (or `all`) and write `<scenario>.csv`, an across-replicate summary and a manifest.
    Run(RunArgs),
    /// Simulate one replicate's hidden signal and observations as CSV.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct SpecArgs {
    /// cir_predictive, cir_filtering, wf_predictive, wf_filtering or all.
    #[arg(long, conflicts_with = "config")]
    scenario: Option<String>,
    /// TOML experiment file; overrides the preset entirely.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Use the larger grid of particle counts and replicates.
    #[arg(long)]
    full: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Comma-separated particle counts.
    #[arg(long, value_delimiter = ',')]
    particles: Option<Vec<usize>>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, default_value_t = 0)]
    replicate: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Io(String),
}

fn load_specs(args: &SpecArgs) -> Result<Vec<ExperimentSpec>, Failure> {
    let mut specs = match (&args.config, args.scenario.as_deref()) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            vec![toml::from_str::<ExperimentSpec>(&text)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?]
        }
        (None, Some("all")) => Scenario::ALL
            .into_iter()
            .map(|s| ExperimentSpec::preset(s, args.full))
            .collect(),
        (None, Some(tag)) => {
            let sc: Scenario = tag
                .parse()
                .map_err(|e: dualfilter::Error| Failure::Config(e.to_string()))?;
            vec![ExperimentSpec::preset(sc, args.full)]
        }
        (None, None) => {
            return Err(Failure::Config(
                "either --scenario or --config is required".into(),
            ))
        }
    };
    if let Some(seed) = args.seed {
        specs.iter_mut().for_each(|s| s.seed = seed);
    }
    Ok(specs)
}

fn run(args: RunArgs) -> Result<bool, Failure> {
    let mut specs = load_specs(&args.spec)?;
    for spec in &mut specs {
        if let Some(p) = &args.particles {
            spec.particles = p.clone();
        }
        if let Some(r) = args.replicates {
            spec.replicates = r;
        }
        if let Some(dir) = &args.out_dir {
            spec.out_dir = Some(dir.clone());
        }
        spec.validate()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    let mut all_ok = true;
    for spec in &specs {
        let report =
            run_scenario(spec, args.threads).map_err(|e| Failure::Config(e.to_string()))?;
        let dir = spec
            .out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("results"));
        let (csv, manifest) =
            write_results(&report, &dir).map_err(|e| Failure::Io(e.to_string()))?;
        let summary = write_summary(&report, &dir).map_err(|e| Failure::Io(e.to_string()))?;
        let failed = report.failed_cells();
        log::info!(
            "{}: wrote {}, {} and {}",
            spec.scenario,
            csv.display(),
            summary.display(),
            manifest.display()
        );
        if failed > 0 {
            log::error!(
                "{}: {failed} of {} cells failed",
                spec.scenario,
                report.manifest.cells.len()
            );
            all_ok = false;
        }
    }
    Ok(all_ok)
}

fn simulate(args: SimulateArgs) -> Result<bool, Failure> {
    let specs = load_specs(&args.spec)?;
    let [spec] = specs.as_slice() else {
        return Err(Failure::Config("simulate takes a single scenario".into()));
    };
    spec.validate()
        .map_err(|e| Failure::Config(e.to_string()))?;
    let model: Box<dyn DualModel> = match &spec.model {
        ModelSpec::Cir(p) => Box::new(CirModel::new(p.clone())),
        ModelSpec::Wf(p) => Box::new(WfModel::new(p.clone())),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        spec.seed,
        spec.scenario,
        DATA_CELL,
        args.replicate,
    ));
    let data = simulate_dataset(
        model.as_ref(),
        spec.n_times,
        spec.spacing,
        spec.batch_size,
        &mut rng,
    )
    .map_err(|e| Failure::Config(e.to_string()))?;
    let written = match &args.out {
        Some(path) => write_to_file(path, |f| write_dataset_csv(&data, f)),
        None => write_dataset_csv(&data, std::io::stdout().lock()).map_err(|e| e.to_string()),
    };
    written.map_err(Failure::Io)?;
    Ok(true)
}

fn write_to_file(
    path: &Path,
    f: impl FnOnce(fs::File) -> dualfilter::Result<()>,
) -> Result<(), String> {
    let file = fs::File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
    f(file).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Simulate(args) => simulate(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CELL_FAILED),
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("i/o error: {msg}");
            ExitCode::from(EXIT_IO)
        }
    }
}
