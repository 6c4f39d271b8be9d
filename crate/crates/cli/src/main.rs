// SPDX-License-Identifier: Apache-2.0

//! `sgxsim`: runs one named scenario and writes its report.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};
use sgxsim_core::config::{ConfigFile, SimConfig};
use sgxsim_core::scenarios::{ScenarioInput, ScenarioRegistry};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "sgxsim", version, about = "Enclave memory side-channel simulator")]
struct Args {
    /// Scenario to run.
    #[arg(long, required_unless_present = "list")]
    scenario: Option<String>,

    /// TOML or JSON configuration with `schema_version = 1`.
    #[arg(long, env = "SGXSIM_CONFIG")]
    config: Option<PathBuf>,

    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,

    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Base machine configuration (testbed, noiseless).
    #[arg(long)]
    preset: Option<String>,

    /// Print the scenario names and exit.
    #[arg(long)]
    list: bool,
}

fn load(args: &Args) -> Result<(SimConfig, serde_json::Value)> {
    let file = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(ConfigFile::parse(&text).with_context(|| format!("parsing {}", p.display()))?)
        }
        None => None,
    };
    let preset = args.preset.as_deref().or(file.as_ref().and_then(|f| f.preset.as_deref()));
    let base = match preset {
        Some(name) => SimConfig::preset(name)?,
        None => SimConfig::default(),
    };
    match file {
        Some(f) => Ok((f.apply(&base)?, f.scenario)),
        None => {
            base.validate()?;
            Ok((base, serde_json::Value::Null))
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(args: Args) -> Result<()> {
    let registry = ScenarioRegistry::default();
    if args.list {
        for name in registry.names() {
            println!("{name}\t{}", registry.get(name)?.description());
        }
        return Ok(());
    }
    let Some(name) = args.scenario.as_deref() else { bail!("--scenario is required") };
    registry.get(name)?;
    let (config, params) = load(&args)?;
    let report = registry.run(name, &ScenarioInput::new(config, args.seed).with_params(params))?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let stem = args.out.join(name);
    let main = match args.format {
        Format::Json => {
            let p = stem.with_extension("json");
            write(&p, &report.to_json())?;
            p
        }
        Format::Csv => {
            let p = stem.with_extension("csv");
            write(&p, &report.to_csv()?)?;
            p
        }
    };
    println!("{}", main.display());
    if let Some(h) = report.histogram_csv() {
        let p = args.out.join(format!("{name}.hist.csv"));
        write(&p, &h)?;
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sgxsim: {e:#}");
            ExitCode::FAILURE
        }
    }
}
