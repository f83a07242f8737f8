use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mfcca::config::{self, RunConfig, Span, SyntheticInput};
use mfcca::pipeline::{self, BlockStatus};
use mfcca::series::{write_price_file, write_prices};
use mfcca::synth::GeneratorKind;

/// Multifractal cross-correlation analysis of price series.
#[derive(Parser, Debug)]
#[command(name = "mfcca", version, about)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML run configuration.
    #[arg(long, global = true, env = "MFCCA_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true, env = "MFCCA_OUT")]
    out: Option<PathBuf>,
    /// Worker threads, 0 for all cores (overrides the config).
    #[arg(long, global = true, env = "MFCCA_THREADS")]
    threads: Option<usize>,
    /// Run seed for synthetic inputs (overrides the config).
    #[arg(long, global = true, env = "MFCCA_SEED")]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every block enabled in the config.
    Run,
    /// Check the config without running it.
    Validate,
    /// Write a synthetic price file.
    Synth(SynthArgs),
    /// Rolling singularity spectra.
    Spectrum(BlockArgs),
    /// Rolling tail exponents.
    Tails(BlockArgs),
    /// Rolling ρ(q,s) per pair.
    Rho(BlockArgs),
    /// Rolling minimal-spanning-tree metrics.
    Mst(BlockArgs),
}

#[derive(Args, Debug)]
struct BlockArgs {
    /// Price files or glob patterns (replace the config inputs).
    #[arg(long = "input", short = 'i')]
    inputs: Vec<String>,
    /// Window length, e.g. `30d`.
    #[arg(long)]
    window: Option<String>,
    /// Window step, e.g. `1d`.
    #[arg(long)]
    step: Option<String>,
    /// Column naming the asset in multi-asset files.
    #[arg(long)]
    asset_column: Option<String>,
    /// Assets to analyze (spectrum, tails, mst).
    #[arg(long = "asset")]
    assets: Vec<String>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Kind {
    Cascade,
    Fgn,
    IidGaussian,
    Pareto,
    CorrelatedPair,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    /// Number of returns.
    #[arg(long, default_value_t = 65536)]
    length: usize,
    /// Cascade weight.
    #[arg(long, default_value_t = 0.7)]
    p: f64,
    #[arg(long, default_value_t = 0.5)]
    hurst: f64,
    /// Pareto tail exponent.
    #[arg(long, default_value_t = 3.0)]
    gamma: f64,
    /// Pair correlation.
    #[arg(long, default_value_t = 0.5)]
    c: f64,
    /// Asset ids; two for a correlated pair.
    #[arg(long = "asset")]
    assets: Vec<String>,
    /// Sampling interval.
    #[arg(long, default_value = "1m")]
    interval: String,
    /// Destination CSV.
    #[arg(long, short = 'o')]
    output: PathBuf,
}

fn load_config(global: &Global, required: bool) -> Result<RunConfig> {
    let mut cfg = match &global.config {
        Some(path) => RunConfig::from_path(path).with_context(|| format!("reading {}", path.display()))?,
        None if required => bail!("--config is required"),
        None => RunConfig::default(),
    };
    if let Some(out) = &global.out {
        cfg.out_dir = out.clone();
    }
    if let Some(t) = global.threads {
        cfg.threads = t;
    }
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn span(text: &Option<String>) -> Result<Option<Span>> {
    text.as_deref().map(Span::parse).transpose().map_err(anyhow::Error::msg)
}

fn block_config(global: &Global, which: &Command, args: &BlockArgs) -> Result<RunConfig> {
    let mut cfg = load_config(global, false)?;
    if !args.inputs.is_empty() {
        cfg.input.files = args.inputs.clone();
    }
    if args.asset_column.is_some() {
        cfg.input.asset_column = args.asset_column.clone();
    }
    let (window, step) = (span(&args.window)?, span(&args.step)?);
    let spectrum = cfg.spectrum.take();
    let tails = cfg.tails.take();
    let rho = cfg.rho.take();
    let mst = cfg.mst.take();
    macro_rules! keep {
        ($value:expr) => {{
            let mut b = $value.unwrap_or_default();
            b.enabled = true;
            if let Some(w) = window {
                b.window = w;
            }
            if let Some(s) = step {
                b.step = s;
            }
            b
        }};
    }
    match which {
        Command::Spectrum(_) => {
            let mut b = keep!(spectrum);
            if !args.assets.is_empty() {
                b.assets = args.assets.clone();
            }
            cfg.spectrum = Some(b);
        }
        Command::Tails(_) => {
            let mut b = keep!(tails);
            if !args.assets.is_empty() {
                b.assets = args.assets.clone();
            }
            cfg.tails = Some(b);
        }
        Command::Rho(_) => cfg.rho = Some(keep!(rho)),
        Command::Mst(_) => {
            let mut b = keep!(mst);
            if !args.assets.is_empty() {
                b.assets = args.assets.clone();
            }
            cfg.mst = Some(b);
        }
        _ => unreachable!(),
    }
    Ok(cfg)
}

fn execute(cfg: &RunConfig) -> Result<ExitCode> {
    let violations = config::validate(cfg);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("invalid: {v}");
        }
        return Ok(ExitCode::from(2));
    }
    let report = pipeline::run(cfg)?;
    for b in &report.blocks {
        match b.status {
            BlockStatus::Ok => {
                println!("{}: {} records, {} flagged, {} files", b.name, b.records, b.flagged, b.outputs.len())
            }
            BlockStatus::Failed => eprintln!("{}: failed: {}", b.name, b.error.as_deref().unwrap_or("")),
        }
    }
    println!("wrote {}", report.out_dir.join("manifest.json").display());
    Ok(if report.success() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn synth(global: &Global, args: &SynthArgs) -> Result<ExitCode> {
    let generator = match args.kind {
        Kind::Cascade => GeneratorKind::Cascade { p: args.p },
        Kind::Fgn => GeneratorKind::Fgn { hurst: args.hurst },
        Kind::IidGaussian => GeneratorKind::IidGaussian,
        Kind::Pareto => GeneratorKind::Pareto { gamma: args.gamma },
        Kind::CorrelatedPair => GeneratorKind::CorrelatedPair { c: args.c },
    };
    let pair = matches!(args.kind, Kind::CorrelatedPair);
    let assets = match (args.assets.len(), pair) {
        (0, false) => vec!["SYN".to_string()],
        (0, true) => vec!["SYN_X".to_string(), "SYN_Y".to_string()],
        (1, false) | (2, true) => args.assets.clone(),
        (n, _) => bail!("{n} asset ids given; {} expected", if pair { 2 } else { 1 }),
    };
    let interval = Span::parse(&args.interval).map_err(anyhow::Error::msg)?;
    let entry = SyntheticInput {
        assets,
        generator,
        length: args.length,
        seed: Some(global.seed.unwrap_or(0)),
        start_ms: 0,
        return_scale: 1e-3,
    };
    let series = pipeline::synthetic_prices(&entry, 0, 0, interval.ms)?;
    if series.len() == 1 {
        write_prices(&args.output, &series[0])?;
    } else {
        write_price_file(&args.output, &series)?;
    }
    println!("wrote {} ({} prices per asset)", args.output.display(), series[0].len());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run => load_config(&cli.global, true).and_then(|c| execute(&c)),
        Command::Validate => load_config(&cli.global, true).map(|cfg| {
            let violations = config::validate(&cfg);
            for v in &violations {
                println!("{v}");
            }
            if violations.is_empty() {
                println!("ok");
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }),
        Command::Synth(args) => synth(&cli.global, args),
        cmd @ (Command::Spectrum(a) | Command::Tails(a) | Command::Rho(a) | Command::Mst(a)) => {
            block_config(&cli.global, cmd, a).and_then(|c| execute(&c))
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
