use std::path::PathBuf;
use std::process::ExitCode;

use arena_harness::{aggregate, emit_plots, output_path, run_scenario, scenario, verify_appendix, Summary};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "arena", about = "Repeated-auction arena experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset, a TOML scenario file or a manifest.json replay.
    Run {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Defaults to runs/<run id>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate run directories into a summary JSON file.
    Aggregate {
        #[arg(long = "in", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = arena_harness::aggregate::DEFAULT_SMOOTHING)]
        smoothing: usize,
    },
    /// Render the four SVG charts of a summary.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the bundled game-theory instances.
    Verify {
        #[arg(long, default_value = concat!(env!("CARGO_MANIFEST_DIR"), "/instances"))]
        instances: PathBuf,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// List the built-in presets.
    Presets,
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> Result<ExitCode, arena_harness::HarnessError> {
    match cmd {
        Command::Run { scenario: spec, seed, episodes, out } => {
            let mut s = scenario::resolve(&spec)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            if let Some(n) = episodes {
                s.episodes = n;
            }
            s.validate()?;
            let out = output_path(&out.unwrap_or_else(|| PathBuf::from("runs").join(s.run_id())));
            let result = run_scenario(&s, &out)?;
            if let Some(last) = result.episodes.last() {
                println!(
                    "{}: {} episodes, last J-index {}",
                    result.manifest.run_id,
                    result.episodes.len(),
                    last.j_index.map_or("-".into(), |j| format!("{j:.4}"))
                );
            }
            println!("{}", out.display());
        }
        Command::Aggregate { inputs, out, smoothing } => {
            let dirs: Vec<PathBuf> = inputs.iter().map(|p| output_path(p)).collect();
            let refs: Vec<&std::path::Path> = dirs.iter().map(|p| p.as_path()).collect();
            let summary = aggregate(&refs, smoothing)?;
            let out = output_path(&out);
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| arena_harness::HarnessError::io(parent, e))?;
            }
            summary.write(&out)?;
            println!("{}", out.display());
        }
        Command::Plot { input, out } => {
            let summary = Summary::read(&output_path(&input))?;
            for p in emit_plots(&summary, &output_path(&out))? {
                println!("{}", p.display());
            }
        }
        Command::Verify { instances, trials, seed } => {
            let report = verify_appendix(&instances, trials, seed)?;
            print!("{}", report.render());
            if !report.passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Presets => {
            for name in scenario::preset_names() {
                println!("{name}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
