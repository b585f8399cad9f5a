//! `giantatom`: batch front-end for designing and simulating giant atoms.
//!
//! Each invocation runs one experiment document (or a bundled scenario) and
//! writes `#`-headed tables, the fully resolved `document.json` and a
//! `manifest.json` into the output directory.

mod commands;
mod doc;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use commands::{Command, Output, SCENARIOS};
use doc::{sequence_override, ExperimentDoc};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("document: {0}")]
    Document(String),
    #[error("sequence rejected by constraints:\n{0}")]
    Validation(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Library(#[from] giantatom::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Document(_) | CliError::Validation(_) => 2,
            CliError::Io(_) | CliError::Library(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "giantatom", version, about = "Design and simulate giant-atom coupling sequences")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment document (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides run.seed and disorder.base_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Optimize a coupling sequence against a target profile.
    Design(Common),
    /// Single-atom population dynamics.
    Dynamics(Common),
    /// Bound-state energy, residue and photon profile.
    BoundState(Common),
    /// Chiral factor sweep.
    Chirality(Common),
    /// Dipole-dipole coupling and two-atom exchange.
    Dipole(Common),
    /// Disorder ensembles.
    Disorder(Common),
    /// Bundled reproduction scenarios.
    Reproduce {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(SCENARIOS))]
        scenario: Option<String>,
        /// Builtin id or sequence file replacing the scenario's sequence.
        #[arg(long)]
        sequence: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(dir) => {
            println!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(cli: Cli) -> Result<PathBuf, CliError> {
    let (command, common, scenario, sequence) = match cli.command {
        Cmd::Design(c) => (Command::Design, c, None, None),
        Cmd::Dynamics(c) => (Command::Dynamics, c, None, None),
        Cmd::BoundState(c) => (Command::BoundState, c, None, None),
        Cmd::Chirality(c) => (Command::Chirality, c, None, None),
        Cmd::Dipole(c) => (Command::Dipole, c, None, None),
        Cmd::Disorder(c) => (Command::Disorder, c, None, None),
        Cmd::Reproduce { common, scenario, sequence } => (Command::Reproduce, common, scenario, sequence),
    };
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Document(format!("--threads: {e}")))?;
    }
    let mut doc = match &common.config {
        Some(path) => ExperimentDoc::load(path)?,
        None if command == Command::Reproduce => ExperimentDoc::default(),
        None => return Err(CliError::Document(format!("{} needs --config", command.name()))),
    };
    if let Some(c) = &doc.command {
        if c != command.name() {
            return Err(CliError::Document(format!("document is for '{c}', not '{}'", command.name())));
        }
    }
    if command == Command::Reproduce {
        let name = scenario
            .or_else(|| doc.scenario.clone())
            .ok_or_else(|| CliError::Document("reproduce needs --scenario".into()))?;
        if let Some(s) = sequence {
            let mut src = sequence_override(&s);
            if let doc::SequenceSource::File(p) = &mut src {
                *p = absolute(p);
            }
            doc.sequence = Some(src);
        }
        doc = commands::scenario_doc(&name, &doc)?.1;
    } else {
        doc.command = Some(command.name().into());
    }
    if let Some(seed) = common.seed {
        doc.run.get_or_insert_with(Default::default).seed = seed;
        if let Some(d) = doc.disorder.as_mut() {
            d.base_seed = seed;
        }
    }
    let base = common.config.as_deref().and_then(Path::parent).map(absolute);
    let doc = doc.resolved(base.as_deref());
    let label = doc.scenario.clone().unwrap_or_else(|| command.name().into());
    let dir = common.out.clone().or_else(|| doc.output.clone()).unwrap_or_else(|| PathBuf::from("out").join(&label));

    let header = vec![("tool", format!("giantatom {}", giantatom::VERSION)), ("run", label.clone())];
    let mut out = Output::new(&dir, header)?;
    let start = Instant::now();
    commands::run(command, &doc, &mut out)?;
    let wall = start.elapsed().as_secs_f64();

    let document = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Io(e.to_string()))?;
    write(&dir.join("document.json"), &document)?;
    let run = doc.run();
    let manifest = json!({
        "tool": "giantatom",
        "version": giantatom::VERSION,
        "command": command.name(),
        "scenario": doc.scenario,
        "document": doc,
        "seeds": {
            "run": run.seed,
            "disorder": doc.disorder.as_ref().map(|d| d.base_seed),
        },
        "threads": rayon::current_num_threads(),
        "wall_time_s": wall,
        "outputs": out.files,
        "summary": out.summary,
    });
    let manifest = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    write(&dir.join("manifest.json"), &manifest)?;
    Ok(dir)
}

fn absolute(p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        std::env::current_dir().map(|d| d.join(p)).unwrap_or_else(|_| p.to_path_buf())
    }
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
