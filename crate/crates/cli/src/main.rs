use anyhow::Result;
use clap::{Parser, Subcommand};
use plateau_cli::config::{apply_overrides, ExperimentConfig};
use plateau_cli::{presets, runner};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "plateau",
    about = "Config-driven runner for saddle-to-saddle gradient-flow experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a TOML config file.
    Run {
        /// Path to the config file.
        config: PathBuf,
        /// Output directory (overrides output_dir in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dotted-path overrides, e.g. --set train.eta=0.02
        #[arg(long = "set")]
        set: Vec<String>,
    },
    /// Run a named preset.
    Preset {
        /// Preset name (see list-presets).
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "set")]
        set: Vec<String>,
        /// Print the preset's config instead of running it.
        #[arg(long)]
        show: bool,
    },
    /// List the available presets.
    ListPresets,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // machine-readable error naming the offending key where known
            let msg = e.to_string();
            let key = msg
                .split(':')
                .next()
                .filter(|head| head.contains('.') && !head.contains(' '))
                .map(str::to_string);
            let err = serde_json::json!({ "error": { "message": msg, "key": key } });
            eprintln!("{err}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out, set } => {
            let raw = std::fs::read_to_string(&config)?;
            let cfg = apply_overrides(&raw, &set)?;
            execute(&cfg, out, "out")
        }
        Command::Preset { name, out, set, show } => {
            let raw = presets::preset_toml(&name)?;
            let cfg = apply_overrides(raw, &set)?;
            if show {
                print!("{}", cfg.to_toml_string());
                return Ok(());
            }
            execute(&cfg, out, &format!("out/{name}"))
        }
        Command::ListPresets => {
            for name in presets::PRESET_NAMES {
                println!("{name}");
            }
            Ok(())
        }
    }
}

fn execute(cfg: &ExperimentConfig, out: Option<PathBuf>, fallback: &str) -> Result<()> {
    let out_dir = out.unwrap_or_else(|| runner::default_out_dir(cfg, fallback));
    let results = runner::run(cfg, &out_dir)?;
    for (label, summary) in &results {
        let final_loss = summary["final_loss"].as_f64().unwrap_or(f64::NAN);
        let plateaus = &summary["plateau_count"];
        println!("{label}: final loss {final_loss:.3e}, {plateaus} plateaus -> {}", out_dir.display());
    }
    Ok(())
}
