use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use msopinf::error::Result;
use msopinf::experiment::{files, ExperimentConfig, Pipeline};

#[derive(Parser)]
#[command(name = "msopinf", version, about = "Structure-preserving operator inference experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StageArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Replaces the stage's primary input artifact.
    #[arg(long)]
    stage_input: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Full-order run; `--stage-input` takes the initial state from a snapshot container.
    SimulateFom(StageArgs),
    /// Extended snapshots and POD basis; `--stage-input` is the snapshot container.
    BuildBasis(StageArgs),
    /// Learned and intrusive reduced operators; `--stage-input` is the basis container.
    Train(StageArgs),
    /// Reduced trajectories; `--stage-input` is the learned operator container.
    SimulateRom(StageArgs),
    /// Energies, errors and summary; `--stage-input` is the learned reduced trajectory.
    Diagnose(StageArgs),
    /// All stages plus the manifest; `--stage-input` replaces the full-order run.
    Pipeline(StageArgs),
    /// Prints a reference configuration (wave, kdv or zk).
    Preset { name: String },
}

fn load(args: &StageArgs) -> Result<Pipeline> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(Pipeline::new(cfg))
}

fn input(args: &StageArgs) -> Option<&Path> {
    args.stage_input.as_deref()
}

fn report(p: &Pipeline, names: &[&str]) {
    for n in names {
        println!("{}", p.path(n).display());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preset { name } => {
            println!("{}", ExperimentConfig::preset(&name)?.to_json());
        }
        Command::SimulateFom(a) => {
            let mut p = load(&a)?;
            let ic = match input(&a) {
                Some(path) => Some(p.initial_from(&p.load_snapshots(Some(path))?)?),
                None => None,
            };
            p.simulate_fom(ic.as_ref())?;
            report(&p, &[files::SNAPSHOTS]);
        }
        Command::BuildBasis(a) => {
            let mut p = load(&a)?;
            let snaps = p.load_snapshots(input(&a))?;
            p.build_basis(&snaps)?;
            report(&p, &[files::EXTENDED, files::BASIS]);
        }
        Command::Train(a) => {
            let mut p = load(&a)?;
            let snaps = p.load_snapshots(None)?;
            let basis = p.load_basis(input(&a))?;
            let m = p.train(&snaps, &basis)?;
            report(&p, &[files::OPERATORS, files::INTRUSIVE]);
            println!("loss learned={:e} intrusive={:e}", m.loss_learned, m.loss_intrusive);
        }
        Command::SimulateRom(a) => {
            let mut p = load(&a)?;
            let snaps = p.load_snapshots(None)?;
            let basis = p.load_basis(None)?;
            let models = p.load_models(input(&a))?;
            p.simulate_rom(&snaps, &basis, &models)?;
            report(&p, &[files::ROM, files::ROM_INTRUSIVE]);
        }
        Command::Diagnose(a) => {
            let mut p = load(&a)?;
            let snaps = p.load_snapshots(None)?;
            let basis = p.load_basis(None)?;
            let models = p.load_models(None)?;
            let runs = p.load_runs(input(&a))?;
            let s = p.diagnose(&snaps, &basis, &models, &runs)?;
            report(&p, &[files::SUMMARY]);
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
        Command::Pipeline(a) => {
            let mut p = load(&a)?;
            let snaps = input(&a).map(|path| p.load_snapshots(Some(path))).transpose()?;
            let m = p.run_with(snaps)?;
            report(&p, &[files::MANIFEST]);
            if let Some(s) = m.summary {
                println!("{}", serde_json::to_string_pretty(&s)?);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
