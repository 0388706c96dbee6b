use anyhow::{anyhow, Result};
use clap::{Parser, Subcommand};
use minktens_cli::commands;
use minktens_cli::config::{ExperimentConfig, PsfSpec};
use std::path::PathBuf;
use std::process::ExitCode;

/// Minkowski tensor estimation from blurred grey-scale images: synthesis,
/// estimation, convergence sweeps, and limit-theorem verification.
#[derive(Parser)]
#[command(name = "minktens", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override: single resolution.
    #[arg(long)]
    a: Option<f64>,
    /// Override: random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override: number of lattice translations.
    #[arg(long)]
    translations: Option<usize>,
    /// Override: output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override: position exponent of the estimator.
    #[arg(long)]
    r: Option<u32>,
    /// Override: normal exponent of the estimator.
    #[arg(long)]
    s: Option<u32>,
    /// Override: lower threshold.
    #[arg(long)]
    beta: Option<f64>,
    /// Override: upper threshold (2-block surface estimator).
    #[arg(long)]
    omega: Option<f64>,
    /// Override: box widening in signed-distance units (3-block).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Override: estimate from this image file (single translation).
    #[arg(long)]
    image: Option<PathBuf>,
}

impl CommonArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        cfg.apply_overrides(self.a, self.seed, self.translations, self.out.clone())?;
        cfg.apply_estimator_overrides(self.r, self.s, self.beta, self.omega, self.epsilon)?;
        if let Some(img) = &self.image {
            cfg.image = Some(img.clone());
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render the configured scene to an image file.
    Render(CommonArgs),
    /// Run the configured estimator once and print the tensor.
    Estimate(CommonArgs),
    /// Estimate across the resolution schedule with oracle bias columns.
    Sweep(CommonArgs),
    /// Calibrate the mean-curvature constant on reference disks.
    Calibrate(CommonArgs),
    /// Check the first- and second-order limit predictions numerically.
    Verify(CommonArgs),
    /// McMullen relation residuals from oracle (and optionally estimated)
    /// tensors.
    #[command(name = "mcmullen-check")]
    McMullenCheck {
        #[command(flatten)]
        common: CommonArgs,
        /// Also check the estimable relations from estimated tensors.
        #[arg(long)]
        estimated: bool,
    },
    /// Render a sweep CSV as a log-log bias chart (SVG).
    Plot {
        /// Input sweep CSV.
        #[arg(long)]
        input: PathBuf,
        /// Output SVG path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Export the blurred-halfspace profile as a two-column table.
    Profile {
        /// PSF kind: gaussian or ball.
        #[arg(long, default_value = "gaussian")]
        psf: String,
        /// Ball kernel radius (ball PSF only).
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 201)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_or_print(text: &str, out: &Option<PathBuf>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::Render(args) => {
            let cfg = args.load()?;
            let out = cfg
                .output
                .clone()
                .ok_or_else(|| anyhow!("render needs an output path (--out or config.output)"))?;
            commands::run_render(&cfg, &out)?;
            eprintln!("wrote {}", out.display());
            Ok(true)
        }
        Command::Estimate(args) => {
            let cfg = args.load()?;
            let out = commands::run_estimate(&cfg)?;
            write_or_print(&out.text, &cfg.output)?;
            Ok(out.pass)
        }
        Command::Sweep(args) => {
            let cfg = args.load()?;
            let out = commands::run_sweep(&cfg)?;
            write_or_print(&out.text, &cfg.output)?;
            Ok(out.pass)
        }
        Command::Calibrate(args) => {
            let cfg = args.load()?;
            let out = commands::run_calibrate(&cfg)?;
            write_or_print(&out.text, &cfg.output)?;
            Ok(out.pass)
        }
        Command::Verify(args) => {
            let cfg = args.load()?;
            let out = commands::run_verify(&cfg)?;
            write_or_print(&out.text, &cfg.output)?;
            Ok(out.pass)
        }
        Command::McMullenCheck { common, estimated } => {
            let cfg = common.load()?;
            let out = commands::run_mcmullen(&cfg, estimated)?;
            write_or_print(&out.text, &cfg.output)?;
            Ok(out.pass)
        }
        Command::Plot { input, out } => {
            let csv = std::fs::read_to_string(&input)?;
            let svg = commands::emit_plot(&csv)?;
            std::fs::write(&out, svg)?;
            eprintln!("wrote {}", out.display());
            Ok(true)
        }
        Command::Profile {
            psf,
            radius,
            dim,
            points,
            out,
        } => {
            let spec = match psf.as_str() {
                "gaussian" => PsfSpec::Gaussian,
                "ball" => PsfSpec::Ball { radius },
                other => return Err(anyhow!("unknown psf `{other}`")),
            };
            let table = commands::run_profile(&spec, dim, points)?;
            write_or_print(&table, &out)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more tolerance gates failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
