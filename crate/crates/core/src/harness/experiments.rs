//! Monte-Carlo NMSE sweeps, likelihood surfaces, entropy curves and kernel slices.

use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;

use super::config::{ChannelKind, Estimator, ExperimentConfig};
use crate::baselines::{amp_estimate, ls_estimate, mmse_isotropic, omp_estimate, AngularDictionary};
use crate::channel::{add_awgn, geometric_channel, sv_channel, user_position, ArrayGeometry};
use crate::error::{Error, Result};
use crate::gpr::{
    assemble_kernel_matrix, eit_gpr_estimate, kernel_entropy, CVector, MixedKernel, SampleSet, SpacetimeSample,
};
use crate::kernel::{em_kernel_scalar, KernelParams, Vec3};
use crate::learning::{init_sigma2, learn_kernel, log_likelihood, LearnOptions, LearnReport};

/// `‖ĥ − h‖² / ‖h‖²`.
pub fn nmse(h_hat: &CVector, h: &CVector) -> Result<f64> {
    if h_hat.len() != h.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} entries", h_hat.len(), h.len())));
    }
    let energy = h.norm_squared();
    if energy == 0.0 {
        return Err(Error::Degenerate("true channel is zero".into()));
    }
    Ok((h_hat - h).norm_squared() / energy)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one work item, derived from the master seed and integer indices.
pub fn derive_seed(master: u64, indices: &[u64]) -> u64 {
    indices.iter().fold(splitmix64(master), |acc, &i| splitmix64(acc ^ splitmix64(i)))
}

/// Channel draw for the configured model. Geometric channels are rescaled to
/// `‖h‖² = N` so that the SNR refers to the per-antenna channel energy.
pub fn draw_channel(cfg: &ExperimentConfig, geom: &ArrayGeometry, seed: u64) -> Result<CVector> {
    let c = &cfg.channel;
    match c.model {
        ChannelKind::Sv => Ok(sv_channel(geom, c.azimuth_deg, c.paths, c.rician_k_db, seed).h),
        ChannelKind::Geometric => {
            let user = user_position(&geom.centroid(), c.range_m, c.azimuth_deg);
            let h = geometric_channel(geom, &user, c.path_loss_exponent)?.h;
            let scale = (geom.len() as f64).sqrt() / h.norm();
            Ok(h * Complex64::new(scale, 0.0))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub estimator: Estimator,
    pub snr_db: f64,
    pub nmse_mean: f64,
    pub nmse_stderr: f64,
    /// Trials that produced an estimate.
    pub trials: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub wall_clock_s: f64,
}

impl SweepResult {
    pub fn row(&self, estimator: Estimator, snr_db: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.estimator == estimator && r.snr_db == snr_db)
    }
}

/// Shared, read-only state of a sweep.
pub struct TrialContext<'a> {
    pub cfg: &'a ExperimentConfig,
    pub geom: ArrayGeometry,
    pub samples: SampleSet,
    pub dict: AngularDictionary,
}

impl<'a> TrialContext<'a> {
    pub fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let geom = cfg.array.geometry()?;
        let dict = if cfg.sweep.dictionary_size == 0 {
            AngularDictionary::oversampled(&geom)
        } else {
            AngularDictionary::new(&geom, cfg.sweep.dictionary_size)?
        };
        Ok(Self { cfg, samples: geom.samples(), geom, dict })
    }

    fn learn_options(&self, sub_kernels: usize) -> LearnOptions {
        let mut o = LearnOptions::new(sub_kernels, self.cfg.learning.n_iter, self.geom.k0());
        o.tol = self.cfg.learning.tol;
        o
    }

    /// Learns a kernel and applies EIT-GPR over the array itself.
    pub fn gpr(&self, y: &CVector, noise_var: f64, sub_kernels: usize) -> Result<(CVector, LearnReport)> {
        let report = learn_kernel(&self.samples, y, noise_var, &self.learn_options(sub_kernels))?;
        let h = eit_gpr_estimate(&self.samples, y, &self.samples, &report.kernel, noise_var)?;
        Ok((h, report))
    }

    pub fn estimate(&self, est: Estimator, y: &CVector, noise_var: f64) -> Result<CVector> {
        let s = &self.cfg.sweep;
        match est {
            Estimator::GprSingle => Ok(self.gpr(y, noise_var, 1)?.0),
            Estimator::GprMixed => Ok(self.gpr(y, noise_var, self.cfg.learning.sub_kernels)?.0),
            Estimator::Ls => Ok(ls_estimate(y)),
            Estimator::MmseIso => mmse_isotropic(y, &self.geom, init_sigma2(y, noise_var), noise_var),
            Estimator::Omp => Ok(omp_estimate(y, &self.dict, s.omp_paths)?.estimate),
            Estimator::Amp => Ok(amp_estimate(y, s.amp_lambda, s.amp_iterations)?.estimate),
        }
    }

    /// One Monte-Carlo trial; every estimator sees the same `(h, y)`.
    pub fn run_trial(&self, snr_index: usize, trial: usize) -> Vec<Option<f64>> {
        let snr_db = self.cfg.sweep.snr_db[snr_index];
        let seed = derive_seed(self.cfg.sweep.seed, &[snr_index as u64, trial as u64]);
        let Ok(h) = draw_channel(self.cfg, &self.geom, derive_seed(seed, &[0])) else {
            return vec![None; self.cfg.sweep.estimators.len()];
        };
        let (y, noise_var) = add_awgn(&h, snr_db, derive_seed(seed, &[1]));
        self.cfg
            .sweep
            .estimators
            .iter()
            .map(|&e| self.estimate(e, &y, noise_var).and_then(|hh| nmse(&hh, &h)).ok())
            .collect()
    }
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// NMSE-versus-SNR Monte-Carlo sweep.
///
/// Trial results are collected in index order before reduction, so the
/// output does not depend on the thread count or scheduling.
pub fn run_snr_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    let start = Instant::now();
    let ctx = TrialContext::new(cfg)?;
    let trials = cfg.sweep.trials;
    let work = |snr_index: usize| -> Vec<Vec<Option<f64>>> {
        match cfg.sweep.threads {
            1 => (0..trials).map(|t| ctx.run_trial(snr_index, t)).collect(),
            _ => (0..trials).into_par_iter().map(|t| ctx.run_trial(snr_index, t)).collect(),
        }
    };
    let pool = match cfg.sweep.threads {
        0 | 1 => None,
        n => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?,
        ),
    };
    let mut rows = Vec::new();
    for (si, &snr_db) in cfg.sweep.snr_db.iter().enumerate() {
        let results = match &pool {
            Some(p) => p.install(|| work(si)),
            None => work(si),
        };
        for (ei, &estimator) in cfg.sweep.estimators.iter().enumerate() {
            let ok: Vec<f64> = results.iter().filter_map(|r| r[ei]).collect();
            let (nmse_mean, nmse_stderr) = mean_stderr(&ok);
            rows.push(SweepRow {
                estimator,
                snr_db,
                nmse_mean,
                nmse_stderr,
                trials: ok.len(),
                failed: trials - ok.len(),
            });
        }
    }
    Ok(SweepResult { rows, wall_clock_s: start.elapsed().as_secs_f64() })
}

/// Noisy observation of the configured channel at one SNR.
pub fn observe(
    cfg: &ExperimentConfig,
    geom: &ArrayGeometry,
    snr_db: f64,
    seed: u64,
) -> Result<(CVector, CVector, f64)> {
    let h = draw_channel(cfg, geom, derive_seed(seed, &[0]))?;
    let (y, noise_var) = add_awgn(&h, snr_db, derive_seed(seed, &[1]));
    Ok((h, y, noise_var))
}

/// One kernel-learning run on a fresh observation.
pub fn run_learn(cfg: &ExperimentConfig, sub_kernels: usize, snr_db: f64, seed: u64) -> Result<LearnReport> {
    let ctx = TrialContext::new(cfg)?;
    let (_, y, noise_var) = observe(cfg, &ctx.geom, snr_db, seed)?;
    learn_kernel(&ctx.samples, &y, noise_var, &ctx.learn_options(sub_kernels))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceCell {
    pub mu_x: f64,
    pub mu_z: f64,
    pub loglik: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceResult {
    /// log10 grid shared by |μ_x| and μ_z
    pub lg: Vec<f64>,
    pub cells: Vec<SurfaceCell>,
}

/// Least-squares line `lg|μ_x| = slope·lg μ_z + intercept` through the row-wise maxima.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgeFit {
    pub slope: f64,
    pub intercept: f64,
    /// `mean(lg|μ_x| − lg μ_z)`: the intercept if the slope is pinned to one.
    pub unit_slope_intercept: f64,
    pub rows_used: usize,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

impl SurfaceResult {
    pub fn argmax(&self) -> Option<SurfaceCell> {
        self.cells
            .iter()
            .filter(|c| c.loglik.is_some())
            .max_by(|a, b| a.loglik.unwrap().total_cmp(&b.loglik.unwrap()))
            .copied()
    }

    /// Fits the ridge on the `sign(μ_x) = sign` half using μ_z rows whose
    /// maximum is within `window` of the global maximum. Row maxima are
    /// refined by parabolic interpolation in log coordinates.
    pub fn ridge_fit(&self, sign: f64, window: f64) -> Option<RidgeFit> {
        let global = self
            .cells
            .iter()
            .filter(|c| c.mu_x * sign > 0.0)
            .filter_map(|c| c.loglik)
            .fold(f64::NEG_INFINITY, f64::max);
        if !global.is_finite() {
            return None;
        }
        let mut pts = Vec::new();
        for &lz in &self.lg {
            let mz = 10f64.powf(lz);
            let row: Vec<Option<f64>> = self
                .lg
                .iter()
                .map(|&lx| {
                    let mx = sign * 10f64.powf(lx);
                    self.cells.iter().find(|c| c.mu_x == mx && c.mu_z == mz).and_then(|c| c.loglik)
                })
                .collect();
            let Some((k, best)) =
                row.iter().enumerate().filter_map(|(k, v)| v.map(|v| (k, v))).max_by(|a, b| a.1.total_cmp(&b.1))
            else {
                continue;
            };
            if best < global - window {
                continue;
            }
            let mut lx = self.lg[k];
            if k > 0 && k + 1 < self.lg.len() {
                if let (Some(l), Some(r)) = (row[k - 1], row[k + 1]) {
                    let denom = l - 2.0 * best + r;
                    if denom < 0.0 {
                        let step = self.lg[k + 1] - self.lg[k];
                        lx += 0.5 * step * (l - r) / denom;
                    }
                }
            }
            pts.push((lz, lx));
        }
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let slope = sxy / sxx;
        Some(RidgeFit { slope, intercept: my - slope * mx, unit_slope_intercept: my - mx, rows_used: pts.len() })
    }
}

/// Single-kernel log-likelihood over a log-spaced (μ_x, μ_z) grid with μ_y = 0,
/// covering both signs of μ_x.
pub fn run_surface_scan(cfg: &ExperimentConfig) -> Result<SurfaceResult> {
    cfg.validate()?;
    let geom = cfg.array.geometry()?;
    let samples = geom.samples();
    let sc = &cfg.surface;
    let (_, y, noise_var) = observe(cfg, &geom, sc.snr_db, sc.seed)?;
    let sigma2 = init_sigma2(&y, noise_var);
    let lg = linspace(sc.lg_min, sc.lg_max, sc.points);
    let mut grid = Vec::new();
    for &lz in &lg {
        for sign in [-1.0, 1.0] {
            for &lx in &lg {
                grid.push((sign * 10f64.powf(lx), 10f64.powf(lz)));
            }
        }
    }
    let k0 = geom.k0();
    let cells = grid
        .par_iter()
        .map(|&(mu_x, mu_z)| {
            let loglik = KernelParams::stationary(Vec3::new(mu_x, 0.0, mu_z), sigma2, k0)
                .and_then(|p| log_likelihood(&samples, &y, &MixedKernel::single(p), noise_var))
                .ok();
            SurfaceCell { mu_x, mu_z, loglik }
        })
        .collect();
    Ok(SurfaceResult { lg, cells })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyRow {
    /// Element spacing in wavelengths.
    pub spacing: f64,
    pub mu: f64,
    pub entropy: Option<f64>,
}

/// `log det(πeK)` of the noiseless array kernel versus concentration, per spacing.
pub fn run_entropy_sweep(cfg: &ExperimentConfig) -> Result<Vec<EntropyRow>> {
    cfg.validate()?;
    let ec = &cfg.entropy;
    let dir = Vec3::from(ec.direction).normalize();
    let mus = linspace(0.0, ec.mu_max, ec.points);
    let mut out = Vec::new();
    for &spacing in &ec.spacings {
        let mut ac = cfg.array.clone();
        ac.n = ec.n;
        ac.spacing = spacing;
        let samples = ac.geometry()?.samples();
        let k0 = ac.k0();
        let rows: Vec<EntropyRow> = mus
            .par_iter()
            .map(|&mu| {
                let entropy = KernelParams::stationary(dir * mu, 1.0, k0)
                    .and_then(|p| assemble_kernel_matrix(&samples, &MixedKernel::single(p), 0.0))
                    .and_then(|k| kernel_entropy(&k))
                    .ok();
                EntropyRow { spacing, mu, entropy }
            })
            .collect();
        out.extend(rows);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSlice {
    pub name: String,
    pub axis1: &'static str,
    pub axis2: &'static str,
    /// `(axis1, axis2, K)`
    pub values: Vec<(f64, f64, Complex64)>,
}

/// y-polarized kernel `K(r, Δt; 0, 0)` over x–z planes at each configured lag.
pub fn run_kernel_slices(cfg: &ExperimentConfig) -> Result<Vec<KernelSlice>> {
    cfg.validate()?;
    let sc = &cfg.slices;
    let params = KernelParams::new(Vec3::from(sc.mu), 1.0, Vec3::from(sc.velocity), cfg.array.k0())?;
    let half = sc.extent * cfg.array.wavelength();
    let axis = linspace(-half, half, sc.points);
    let origin = SpacetimeSample::y_polarized(Vec3::zeros(), 0.0);
    let mut out = Vec::new();
    for (i, &dt) in sc.dt_s.iter().enumerate() {
        let mut values = Vec::with_capacity(axis.len() * axis.len());
        for &z in &axis {
            for &x in &axis {
                let a = SpacetimeSample::y_polarized(Vec3::new(x, 0.0, z), dt);
                values.push((x, z, em_kernel_scalar(&a, &origin, &params)?));
            }
        }
        out.push(KernelSlice { name: format!("slice_xz_{i}"), axis1: "x_m", axis2: "z_m", values });
    }
    Ok(out)
}
