use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use eitgpr_core::harness::{
    emit_csv, emit_svg, run_entropy_sweep, run_kernel_slices, run_learn, run_snr_sweep, run_surface_scan, CsvTable,
    ExperimentConfig, SvgPlot,
};
use eitgpr_core::{em_kernel, estimate_azimuth, Error, KernelParams, Result, Vec3};

#[derive(Parser)]
#[command(name = "eitgpr", version, about = "EM-kernel Gaussian-process channel estimation experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration (all keys optional).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set sweep.trials=200`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo NMSE versus SNR for the configured estimators.
    Sweep,
    /// Log-likelihood over a log-spaced (μ_x, μ_z) grid.
    Surface,
    /// Kernel entropy versus concentration for each spacing.
    Entropy,
    /// y-polarized kernel over x–z planes.
    Slices,
    /// Learn a kernel on one noisy observation and print the report.
    Learn {
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        snr_db: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Number of sub-kernels; defaults to `learning.sub_kernels`.
        #[arg(long)]
        sub_kernels: Option<usize>,
    },
    /// Print the 3×3 kernel K(r, Δt) for the given hyperparameters.
    KernelEval {
        /// Displacement in metres, `x,y,z`.
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        r: Vec3,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        dt: f64,
        #[arg(long, value_parser = parse_vec3, default_value = "0,0,0", allow_hyphen_values = true)]
        mu: Vec3,
        #[arg(long, value_parser = parse_vec3, default_value = "0,0,0", allow_hyphen_values = true)]
        velocity: Vec3,
        #[arg(long, default_value_t = 1.0)]
        sigma2: f64,
        /// Wavenumber; defaults to the configured carrier.
        #[arg(long)]
        k0: Option<f64>,
    },
}

fn parse_vec3(s: &str) -> std::result::Result<Vec3, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match parts[..] {
        [x, y, z] => Ok(Vec3::new(x, y, z)),
        _ => Err(format!("expected three comma-separated values, got {}", parts.len())),
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let base = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let cfg = base.with_overrides(&common.overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn write_outputs<T: CsvTable + SvgPlot + ?Sized>(cfg: &ExperimentConfig, stem: &str, table: &T) -> Result<()> {
    let dir = Path::new(&cfg.output.dir);
    fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
    let csv = dir.join(format!("{stem}.csv"));
    emit_csv(table, &csv)?;
    println!("wrote {}", csv.display());
    if cfg.output.svg {
        let svg = dir.join(format!("{stem}.svg"));
        emit_svg(table, &svg)?;
        println!("wrote {}", svg.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Sweep => {
            let result = run_snr_sweep(&cfg)?;
            for row in &result.rows {
                println!(
                    "{:>10} {:>6.1} dB  nmse {:.5} ± {:.5}  ({} trials, {} failed)",
                    row.estimator.name(),
                    row.snr_db,
                    row.nmse_mean,
                    row.nmse_stderr,
                    row.trials,
                    row.failed
                );
            }
            println!("wall clock {:.2} s", result.wall_clock_s);
            write_outputs(&cfg, "sweep", &result)
        }
        Command::Surface => {
            let result = run_surface_scan(&cfg)?;
            if let Some(best) = result.argmax() {
                println!(
                    "argmax mu_x {:.4e} mu_z {:.4e} loglik {:.6}",
                    best.mu_x,
                    best.mu_z,
                    best.loglik.unwrap_or(f64::NAN)
                );
            }
            write_outputs(&cfg, "surface", &result)
        }
        Command::Entropy => {
            let rows = run_entropy_sweep(&cfg)?;
            write_outputs(&cfg, "entropy", rows.as_slice())
        }
        Command::Slices => {
            for slice in run_kernel_slices(&cfg)? {
                let name = slice.name.clone();
                write_outputs(&cfg, &name, &slice)?;
            }
            Ok(())
        }
        Command::Learn { snr_db, seed, sub_kernels } => {
            let s = sub_kernels.unwrap_or(cfg.learning.sub_kernels);
            let report = run_learn(&cfg, s, snr_db, seed)?;
            for (i, (p, w)) in report.kernel.sub_params().iter().zip(report.kernel.weights()).enumerate() {
                let az = estimate_azimuth(&p.mu).map(|a| format!("{a:.3}°")).unwrap_or_else(|_| "n/a".into());
                println!("kernel {i}: weight {w:.6} mu [{:.6e}, {:.6e}, {:.6e}] azimuth {az}", p.mu.x, p.mu.y, p.mu.z);
            }
            println!("sigma2 {:.6e}", report.sigma2);
            println!(
                "objective {:.9} after {} iterations (converged: {}, accepted {}, rejected {})",
                report.objective_trace.last().copied().unwrap_or(f64::NAN),
                report.iterations,
                report.converged,
                report.accepted_steps,
                report.rejected_steps
            );
            if let Some(f) = &report.failure {
                println!("stopped early: {f}");
            }
            Ok(())
        }
        Command::KernelEval { r, dt, mu, velocity, sigma2, k0 } => {
            let params = KernelParams::new(mu, sigma2, velocity, k0.unwrap_or_else(|| cfg.array.k0()))?;
            let k = em_kernel(&r, dt, &Vec3::zeros(), 0.0, &params);
            if let Some(idx) = k.iter().position(|z| !z.is_finite()) {
                return Err(Error::NonFiniteKernel { row: idx % 3, col: idx / 3 });
            }
            for i in 0..3 {
                let row: Vec<String> =
                    (0..3).map(|j| format!("{:+.12e}{:+.12e}i", k[(i, j)].re, k[(i, j)].im)).collect();
                println!("{}", row.join("  "));
            }
            Ok(())
        }
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
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
