use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use geoform::config::{resolve, ConfigError, KeyValues};
use geoform::control::PredictionMode;
use geoform::dmd::{batch_fit, DmdState, SnapshotPair};
use geoform::harness::{
    camera_table, compare_modes, default_seeds, generate_reference_csv, simulate_to_dir, to_json, HarnessError,
    ScenarioConfig, Track,
};
use geoform::linalg::Matrix;
use geoform::rng::{stream, Stream};
use geoform::sensors::CameraModel;
use log::info;
use rand::Rng;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "geoform", version, about = "Leader-follower formation simulation on a curved surface")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write steps.csv and metrics.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        track: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the ideal leader path and follower reference points as CSV.
    Reference {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run both prediction modes over a range of seeds and write the ratio report.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long)]
        track: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare streaming and batch operator fits on a synthetic linear system.
    DmdBench {
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1e-6)]
        ridge: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the noise-free pan and side-length calibration tables.
    CameraTable {
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Config(ConfigError),
    Io { path: PathBuf, source: std::io::Error },
    Run(HarnessError),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(c) => Failure::Config(c),
            HarnessError::Io { path, source } => Failure::Io { path, source },
            other => Failure::Run(other),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl Failure {
    fn report(&self) -> ExitCode {
        match self {
            Failure::Usage(m) => {
                eprintln!("error: {m}");
                ExitCode::from(1)
            }
            Failure::Config(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
            Failure::Run(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
            Failure::Io { path, source } => {
                eprintln!("error: {}: {source}", path.display());
                ExitCode::from(2)
            }
        }
    }
}

fn load_config(path: &Path, overrides: &[(&str, Option<String>)]) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|source| Failure::Io { path: path.to_path_buf(), source })?;
    let mut kv = KeyValues::parse(&text)?;
    for (key, value) in overrides {
        if let Some(v) = value {
            kv.set(key, v);
        }
    }
    Ok(resolve(&kv)?)
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|source| Failure::Io { path: path.to_path_buf(), source })
}

#[derive(Serialize)]
struct BenchReport {
    dim: usize,
    steps: usize,
    seed: u64,
    ridge: f64,
    /// ‖T_online − T_batch‖_F after the last update.
    frobenius_gap: f64,
    /// Largest gap seen at any checkpoint.
    max_frobenius_gap: f64,
    /// max |P·(A Aᵀ + ridge·I) − I| after the last update.
    precision_residual: f64,
    mean_update_ns: f64,
    batch_refit_ns: f64,
}

fn dmd_bench(dim: usize, steps: usize, seed: u64, ridge: f64) -> Result<BenchReport, Failure> {
    if dim == 0 || steps == 0 {
        return Err(Failure::Usage("--dim and --steps must be positive".into()));
    }
    if !(ridge >= 0.0) {
        return Err(Failure::Usage("--ridge must be non-negative".into()));
    }
    let mut rng = stream(seed, Stream::Bench);
    // Random operator scaled to spectral norm below 0.9, driven by process noise.
    let mut m = Matrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            m[(i, j)] = rng.random_range(-1.0..1.0);
        }
    }
    let m = m.scale(0.9 / m.frobenius_norm().max(1e-12));
    let seed_cols = dim + 1;
    let total = seed_cols + steps + 1;
    let mut xs: Vec<Vec<f64>> = vec![(0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()];
    while xs.len() < total {
        let mut next = m.mul_vec(xs.last().unwrap());
        for v in &mut next {
            *v += rng.random_range(-0.1..0.1);
        }
        xs.push(next);
    }
    let cols = |r: std::ops::Range<usize>| Matrix::from_columns(&xs[r]);
    let dmd_err = |e: geoform::dmd::DmdError| Failure::Usage(e.to_string());

    let mut st = DmdState::init_online(&cols(0..seed_cols), &cols(1..seed_cols + 1), ridge).map_err(dmd_err)?;
    let mut elapsed = 0u128;
    let mut max_gap: f64 = 0.0;
    let checkpoint = (steps / 10).max(1);
    for (i, k) in (seed_cols..seed_cols + steps).enumerate() {
        let pair = SnapshotPair::new(xs[k].clone(), xs[k + 1].clone());
        let t0 = Instant::now();
        st = st.update(&pair).map_err(dmd_err)?;
        elapsed += t0.elapsed().as_nanos();
        if (i + 1) % checkpoint == 0 {
            let batch = batch_fit(&cols(0..k + 1), &cols(1..k + 2), ridge).map_err(dmd_err)?;
            max_gap = max_gap.max((&st.t - &batch).frobenius_norm());
        }
    }
    let last = seed_cols + steps;
    let t0 = Instant::now();
    let batch = batch_fit(&cols(0..last), &cols(1..last + 1), ridge).map_err(dmd_err)?;
    let batch_refit_ns = t0.elapsed().as_nanos() as f64;
    let gap = (&st.t - &batch).frobenius_norm();
    let a = cols(0..last);
    let gram = &(&a * &a.transpose()) + &Matrix::identity(dim).scale(ridge);
    let precision_residual = (&(&st.p * &gram) - &Matrix::identity(dim)).max_abs();
    Ok(BenchReport {
        dim,
        steps,
        seed,
        ridge,
        frobenius_gap: gap,
        max_frobenius_gap: max_gap.max(gap),
        precision_residual,
        mean_update_ns: elapsed as f64 / steps as f64,
        batch_refit_ns,
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { config, seed, mode, track, out } => {
            if let Some(m) = &mode {
                m.parse::<PredictionMode>().map_err(|e| ConfigError::new("--mode", e))?;
            }
            if let Some(t) = &track {
                t.parse::<Track>().map_err(|e| ConfigError::new("--track", e))?;
            }
            let cfg = load_config(&config, &[("track", track), ("mode", mode), ("seed", seed.map(|s| s.to_string()))])?;
            let outcome = simulate_to_dir(&cfg, &out)?;
            let s = &outcome.summary;
            info!("track {} mode {} seed {}", s.track.as_str(), s.mode.as_str(), s.seed);
            println!(
                "{} steps, total correction {:.3} cm, lost steps {}, mean formation error {:.3} cm",
                s.steps, s.total_correction, s.lost_steps, s.mean_formation_error
            );
        }
        Command::Reference { config, out } => {
            let cfg = load_config(&config, &[])?;
            generate_reference_csv(&cfg, &out)?;
        }
        Command::Compare { config, seeds, track, out } => {
            if let Some(t) = &track {
                t.parse::<Track>().map_err(|e| ConfigError::new("--track", e))?;
            }
            let cfg = load_config(&config, &[("track", track)])?;
            let report = compare_modes(&cfg, &default_seeds(&cfg, seeds))?;
            write(&out, &to_json(&report))?;
            println!("mean ratio DMD/NonDMD {:.3}", report.mean_ratio);
        }
        Command::DmdBench { dim, steps, seed, ridge, out } => {
            let report = dmd_bench(dim, steps, seed, ridge)?;
            write(&out, &to_json(&report))?;
        }
        Command::CameraTable { out } => {
            write(&out, &camera_table(&CameraModel::default().noise_free()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}
