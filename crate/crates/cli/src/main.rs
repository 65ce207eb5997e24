//! `autocw`: run the context-window pipeline stage by stage.

mod config;
mod report;
mod run;
mod stages;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};

use config::{ExperimentConfig, RawConfig};
use run::{MissingInputs, RunDir};
use stages::Ctx;

/// Default parent for run directories when neither `--out` nor
/// `output.dir` is given.
const OUT_ROOT_ENV: &str = "AUTOCW_OUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Stage {
    Gen,
    Ir,
    Contaminate,
    Features,
    Train,
    Probe,
    Compose,
    Autocw,
    Grid,
    Xcorr,
    Report,
    /// Every stage in order; grid only when `search.run_grid` is set.
    All,
}

#[derive(Debug, Parser)]
#[command(
    name = "autocw",
    version,
    about = "Gradient-guided context-window search pipeline"
)]
struct Cli {
    #[arg(value_enum)]
    stage: Stage,
    /// Sectioned key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one value, e.g. `--set search.cw_max=9`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    /// Run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for candidate trainings.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Recompute stages whose recorded inputs changed.
    #[arg(long)]
    force: bool,
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

fn load_config(cli: &Cli) -> Result<(RawConfig, ExperimentConfig), Failure> {
    let mut raw = match &cli.config {
        Some(p) if !p.exists() => {
            return Err(Failure::Runtime(MissingInputs(vec![p.clone()]).into()))
        }
        Some(p) => RawConfig::load(p).map_err(Failure::Usage)?,
        None => RawConfig::defaults(),
    };
    for kv in &cli.overrides {
        raw.apply_override(kv).map_err(Failure::Usage)?;
    }
    if let Some(seed) = cli.seed {
        raw.set("global.seed", &seed.to_string())
            .map_err(Failure::Usage)?;
    }
    let cfg = ExperimentConfig::from_raw(&raw).map_err(Failure::Usage)?;
    Ok((raw, cfg))
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(o) = &cli.out {
        return o.clone();
    }
    if let Some(o) = &cfg.output_dir {
        return o.clone();
    }
    let stem = cli
        .config
        .as_deref()
        .and_then(Path::file_stem)
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "default".into());
    let root = std::env::var_os(OUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"));
    root.join(stem)
}

fn run_stage(ctx: &Ctx, stage: Stage) -> Result<()> {
    match stage {
        Stage::Gen => stages::gen(ctx),
        Stage::Ir => stages::ir(ctx),
        Stage::Contaminate => stages::contaminate_stage(ctx),
        Stage::Features => stages::features(ctx),
        Stage::Train => stages::train(ctx),
        Stage::Probe => stages::probe(ctx),
        Stage::Compose => stages::compose(ctx),
        Stage::Autocw => stages::autocw_stage(ctx),
        Stage::Grid => stages::grid(ctx),
        Stage::Xcorr => stages::xcorr(ctx),
        Stage::Report => report::report(ctx),
        Stage::All => {
            let mut order = vec![
                Stage::Gen,
                Stage::Ir,
                Stage::Contaminate,
                Stage::Features,
                Stage::Train,
                Stage::Probe,
                Stage::Compose,
                Stage::Autocw,
            ];
            if ctx.cfg.run_grid {
                order.push(Stage::Grid);
            }
            order.extend([Stage::Xcorr, Stage::Report]);
            order.into_iter().try_for_each(|s| run_stage(ctx, s))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = load_config(&cli).and_then(|(raw, cfg)| {
        let root = out_dir(&cli, &cfg);
        let run = RunDir::new(root, cli.force).map_err(Failure::Runtime)?;
        run::write_atomic(&run.path("config.resolved.cfg"), raw.to_text().as_bytes())
            .context("writing resolved config")
            .map_err(Failure::Runtime)?;
        let ctx = Ctx {
            run,
            cfg,
            raw,
            jobs: cli.jobs,
        };
        run_stage(&ctx, cli.stage).map_err(Failure::Runtime)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<MissingInputs>().is_some() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
