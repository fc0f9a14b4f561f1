//! `mmd`: synthesize test signals, run GMD/MMD decompositions and compute
//! diagnostics from the command line.
//!
//! Exit codes: 0 on success, 1 on invalid input or arguments, 2 on I/O failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use mmd_core::diagnostics::{autocorrelation, partition_counts, well_diff_stats, WellDiffStats};
use mmd_core::gmd::{gmd_decompose, GmdConfig, Scheme};
use mmd_core::io::{
    read_phases_csv, read_signal_csv, write_gmd_decomposition, write_json, write_mmd_decomposition,
    write_phases_csv, write_report, write_shape_csv, write_signal_csv, PhaseFile, RunConfig,
    RunReport,
};
use mmd_core::mmd::{mmd_decompose, MmdConfig};
use mmd_core::signal_model::{PhasePrior, SampledSignal};
use mmd_core::synth::{
    add_noise, gen_example_4_1, gen_gimf, sample_grid, snr, ComponentSpec, GridMode, Shape,
    RNG_IDENTITY,
};
use mmd_core::{Error, Result};

/// Step side used for the well-differentiation figures in run reports.
const REPORT_STEP: f64 = 0.05;
/// Bins used when tabulating ground-truth shapes.
const TRUTH_BINS: usize = 1024;

#[derive(Parser)]
#[command(
    name = "mmd",
    version,
    about = "Multiresolution mode decomposition toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic signal with known phases and ground truth.
    Synth(SynthArgs),
    /// Generalized mode decomposition (one shape per component).
    Gmd(GmdArgs),
    /// Multiresolution mode decomposition (band coefficients and shapes).
    Mmd(MmdArgs),
    /// Well-differentiation statistics of phases, or whiteness of a residual.
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Built-in example.
    #[arg(long, value_parser = ["ex4_1"], conflicts_with = "spec", required_unless_present = "spec")]
    example: Option<String>,
    /// JSON file with a `components` list.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 1 << 15)]
    samples: usize,
    #[arg(long, default_value_t = 0.0)]
    noise_var: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "uniform")]
    grid: GridMode,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InputArgs {
    /// CSV with columns t,value.
    #[arg(long)]
    signal: PathBuf,
    /// CSV with columns t,p_1..p_K and optionally q_1..q_K.
    #[arg(long)]
    phases: PathBuf,
}

#[derive(Args)]
struct GmdArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, default_value_t = 200)]
    bins: usize,
    #[arg(long, default_value = "gauss_seidel")]
    scheme: Scheme,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MmdArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Band-width parameter M0.
    #[arg(long, default_value_t = 10)]
    m0: usize,
    #[arg(long, default_value_t = 1e-6)]
    eps1: f64,
    #[arg(long, default_value_t = 1e-6)]
    eps2: f64,
    #[arg(long, default_value_t = 200)]
    j1: usize,
    #[arg(long, default_value_t = 10)]
    j2: usize,
    #[arg(long, default_value_t = 200)]
    bins: usize,
    #[arg(long, default_value = "gauss_seidel")]
    scheme: Scheme,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("source").required(true).multiple(true).args(["phases", "residual"]))]
struct DiagnoseArgs {
    #[arg(long)]
    phases: Option<PathBuf>,
    /// Step side of the phase partition; 1/h must be an integer.
    #[arg(long, default_value_t = REPORT_STEP)]
    h: f64,
    /// Bound M used in the contraction figure M²(K−1)β.
    #[arg(long, default_value_t = 1.0)]
    m: f64,
    #[arg(long)]
    residual: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    max_lag: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Deserialize)]
struct SynthSpec {
    components: Vec<ComponentSpec>,
}

#[derive(Serialize)]
struct SynthMeta {
    generator: &'static str,
    seed: u64,
    samples: usize,
    grid: GridMode,
    noise_variance: f64,
    /// SNR of each clean component in dB; absent without noise.
    component_snr_db: Vec<Option<f64>>,
}

#[derive(Serialize)]
struct Whiteness {
    max_lag: usize,
    max_abs_rho: f64,
    bound: f64,
    white: bool,
}

fn synth(args: SynthArgs) -> Result<()> {
    let out = &args.out;
    let truth = out.join("truth");
    create_dir(&truth)?;
    let (signal, priors, modes, shapes, leading) = match (&args.example, &args.spec) {
        (Some(_), _) => {
            let ex = gen_example_4_1(args.samples, args.noise_var, args.seed, args.grid)?;
            let modes = ex
                .components
                .iter()
                .map(|c| c.mode.clone())
                .collect::<Vec<_>>();
            let shapes = ex.components.iter().map(|c| c.shape.clone()).collect();
            let leading = ex.components.iter().map(|c| c.leading.clone()).collect();
            (ex.signal, ex.priors, modes, shapes, leading)
        }
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            let spec: SynthSpec = serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: path.clone(),
                line: e.line(),
                message: e.to_string(),
            })?;
            if spec.components.is_empty() {
                return Err(Error::InvalidConfig("spec has no components".into()));
            }
            let grid = sample_grid(args.samples, args.grid, args.seed)?;
            let modes = spec
                .components
                .iter()
                .map(|c| gen_gimf(c, &grid))
                .collect::<Result<Vec<_>>>()?;
            let priors = spec
                .components
                .iter()
                .map(|c| c.prior(&grid))
                .collect::<Result<Vec<_>>>()?;
            let shapes = spec
                .components
                .iter()
                .map(|c| Shape::from_spec(&c.shape))
                .collect::<Result<Vec<_>>>()?;
            let clean = SampledSignal::new(
                grid.clone(),
                (0..grid.len())
                    .map(|i| modes.iter().map(|m| m.values()[i]).sum())
                    .collect(),
            )?;
            let signal = add_noise(&clean, args.noise_var, args.seed)?;
            (signal, priors, modes, shapes, Vec::new())
        }
        (None, None) => unreachable!("clap requires --example or --spec"),
    };
    write_signal_csv(out.join("signal.csv"), &signal)?;
    write_phases_csv(out.join("phases.csv"), signal.times(), &priors)?;
    for (k, (mode, shape)) in modes.iter().zip(&shapes).enumerate() {
        write_signal_csv(truth.join(format!("mode_{}.csv", k + 1)), mode)?;
        write_shape_csv(
            truth.join(format!("shape_{}.csv", k + 1)),
            &shape.tabulate(TRUTH_BINS)?,
        )?;
    }
    for (k, l) in leading.iter().enumerate() {
        write_signal_csv(truth.join(format!("leading_{}.csv", k + 1)), l)?;
    }
    let component_snr_db = modes
        .iter()
        .map(|m| {
            (args.noise_var > 0.0)
                .then(|| snr(m.values(), args.noise_var))
                .transpose()
        })
        .collect::<Result<Vec<_>>>()?;
    write_json(
        out.join("synth.json"),
        &SynthMeta {
            generator: RNG_IDENTITY,
            seed: args.seed,
            samples: args.samples,
            grid: args.grid,
            noise_variance: args.noise_var,
            component_snr_db,
        },
    )
}

fn load_inputs(input: &InputArgs) -> Result<(SampledSignal, Vec<PhasePrior>)> {
    let signal = read_signal_csv(&input.signal)?;
    let phases: PhaseFile = read_phases_csv(&input.phases)?;
    phases.check_grid(&signal)?;
    Ok((signal, phases.priors))
}

fn report_stats(priors: &[PhasePrior]) -> Result<WellDiffStats> {
    well_diff_stats(partition_counts(priors, REPORT_STEP)?, 1.0)
}

fn gmd(args: GmdArgs) -> Result<()> {
    let cfg = GmdConfig {
        eps: args.eps,
        max_iter: args.max_iter,
        bins: args.bins,
        scheme: args.scheme,
    };
    cfg.validate()?;
    let (signal, priors) = load_inputs(&args.input)?;
    let result = gmd_decompose(&signal, &priors, &cfg)?;
    let stats = report_stats(&priors)?;
    create_dir(&args.out)?;
    write_gmd_decomposition(&args.out, &result)?;
    let run = RunConfig::from_gmd(
        &cfg,
        args.input.signal.clone(),
        args.input.phases.clone(),
        args.out.clone(),
    );
    write_report(&args.out, &RunReport::new(&result.trace, Some(&stats), run))?;
    Ok(())
}

fn mmd(args: MmdArgs) -> Result<()> {
    let cfg = MmdConfig {
        bandwidth: args.m0,
        eps_outer: args.eps1,
        eps_inner: args.eps2,
        max_outer: args.j1,
        max_inner: args.j2,
        bins: args.bins,
        scheme: args.scheme,
    };
    cfg.validate()?;
    let (signal, priors) = load_inputs(&args.input)?;
    let result = mmd_decompose(&signal, &priors, &cfg)?;
    let stats = report_stats(&priors)?;
    create_dir(&args.out)?;
    write_mmd_decomposition(&args.out, &result)?;
    let run = RunConfig::from_mmd(
        &cfg,
        args.input.signal.clone(),
        args.input.phases.clone(),
        args.out.clone(),
    );
    write_report(
        &args.out,
        &RunReport::new(&result.report, Some(&stats), run),
    )?;
    Ok(())
}

fn diagnose(args: DiagnoseArgs) -> Result<()> {
    create_dir(&args.out)?;
    if let Some(path) = &args.phases {
        let phases = read_phases_csv(path)?;
        let stats = well_diff_stats(partition_counts(&phases.priors, args.h)?, args.m)?;
        write_json(args.out.join("well_differentiation.json"), &stats)?;
    }
    if let Some(path) = &args.residual {
        let residual = read_signal_csv(path)?;
        let rho = autocorrelation(residual.values(), args.max_lag)?;
        let mut text = String::from("lag,rho\n");
        for (lag, r) in rho.iter().enumerate() {
            text.push_str(&format!("{lag},{}\n", mmd_core::io::fmt_f64(*r)));
        }
        let p = args.out.join("autocorrelation.csv");
        fs::write(&p, text).map_err(|source| Error::Io { path: p, source })?;
        let max_abs_rho = rho[1..].iter().map(|r| r.abs()).fold(0.0, f64::max);
        let bound = 4.0 / (residual.len() as f64).sqrt();
        write_json(
            args.out.join("whiteness.json"),
            &Whiteness {
                max_lag: args.max_lag,
                max_abs_rho,
                bound,
                white: max_abs_rho <= bound,
            },
        )?;
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("MMD_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::InvalidConfig(format!("MMD_THREADS={raw:?} is not a positive integer"))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::InvalidConfig(e.to_string()))
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Gmd(a) => gmd(a),
        Command::Mmd(a) => mmd(a),
        Command::Diagnose(a) => diagnose(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
