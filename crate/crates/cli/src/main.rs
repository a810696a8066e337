use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use hmb_core::codebook::build_codebook;
use hmb_core::config::{ExperimentKind, ExperimentSpec};
use hmb_core::experiment::{run, run_training_log, write_csv};
use hmb_core::multiarm::{build_hmb_codebook, HmbCodebook};
use hmb_core::training::station_families;

#[derive(Parser)]
#[command(name = "hmb", version, about = "Near-field hashing multi-arm beam training simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Codebook construction.
    Codebook {
        #[command(subcommand)]
        action: CodebookAction,
    },
    /// Beam training runs.
    Train {
        #[command(subcommand)]
        action: TrainAction,
    },
    /// Monte Carlo sweeps written as CSV.
    Sweep {
        kind: SweepKind,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum CodebookAction {
    /// Write the single-beam codebook, and optionally one round of multi-arm beams.
    Build {
        #[command(flatten)]
        common: Common,
        /// Where to write the round-0 multi-arm codebook.
        #[arg(long)]
        hmb_out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum TrainAction {
    /// Per-trial HMB training log.
    Run {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    Accuracy,
    Softhard,
    Farfield,
    Overhead,
}

impl From<SweepKind> for ExperimentKind {
    fn from(k: SweepKind) -> Self {
        match k {
            SweepKind::Accuracy => ExperimentKind::Accuracy,
            SweepKind::Softhard => ExperimentKind::SoftHard,
            SweepKind::Farfield => ExperimentKind::FarField,
            SweepKind::Overhead => ExperimentKind::Overhead,
        }
    }
}

#[derive(Args)]
struct Common {
    /// Flat key = value file; unknown keys are rejected.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
}

impl Common {
    fn spec(&self, kind: ExperimentKind) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                ExperimentSpec::from_config_text_as(&text, kind).with_context(|| format!("in {}", p.display()))?
            }
            None => ExperimentSpec::new(kind),
        };
        if let Some(seed) = self.seed {
            spec = spec.with_seed(seed);
        }
        if let Some(t) = self.trials {
            spec.trials = t;
        }
        if let Some(out) = &self.out {
            spec.out_path = Some(out.clone());
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => std::io::stdout().write_all(bytes).context("writing stdout"),
    }
}

fn codebook_build(common: &Common, hmb_out: Option<&Path>) -> Result<()> {
    let spec = common.spec(ExperimentKind::Accuracy)?;
    let book = build_codebook(&spec.geometry, &spec.codebook)?;
    eprintln!("codebook: {} codewords, fingerprint {}", book.len(), book.fingerprint());
    emit(spec.out_path.as_deref(), book.to_text().as_bytes())?;
    if let Some(p) = hmb_out {
        let family = station_families(book.len(), spec.scenario.buckets, 1, spec.seed)?[0];
        let table = family.draw(0);
        let cws = build_hmb_codebook(&book, &table, &spec.scenario.phase)?;
        let hmb = HmbCodebook::new(&book, &table, &spec.scenario.phase, cws);
        fs::write(p, hmb.to_text()).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn train_run(common: &Common) -> Result<()> {
    let spec = common.spec(ExperimentKind::Accuracy)?;
    let (log, hits, total) = run_training_log(&spec)?;
    eprintln!("correct: {hits}/{total}");
    emit(spec.out_path.as_deref(), log.as_bytes())
}

fn sweep(kind: SweepKind, common: &Common) -> Result<()> {
    let spec = common.spec(kind.into())?;
    let rows = run(&spec)?;
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf)?;
    emit(spec.out_path.as_deref(), &buf)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Codebook { action: CodebookAction::Build { common, hmb_out } } => codebook_build(common, hmb_out.as_deref()),
        Command::Train { action: TrainAction::Run { common } } => train_run(common),
        Command::Sweep { kind, common } => sweep(*kind, common),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
