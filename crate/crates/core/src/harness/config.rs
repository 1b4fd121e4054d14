//! Declarative experiment configuration.
//!
//! Every key has a default matching the reference setup (3.5 GHz, 32-antenna
//! half-wavelength ULA, user at −15°), so an empty file is a valid config.
//! Individual keys can be overridden with `section.key=value` strings.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{ula_geometry, ArrayGeometry, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::kernel::Vec3;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub array: ArrayConfig,
    pub channel: ChannelConfig,
    pub sweep: SweepConfig,
    pub learning: LearningConfig,
    pub output: OutputConfig,
    pub surface: SurfaceConfig,
    pub entropy: EntropyConfig,
    pub slices: SlicesConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayConfig {
    pub n: usize,
    /// Element spacing in wavelengths.
    pub spacing: f64,
    pub carrier_hz: f64,
    pub polarization: [f64; 3],
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self { n: 32, spacing: 0.5, carrier_hz: 3.5e9, polarization: [0.0, 1.0, 0.0] }
    }
}

impl ArrayConfig {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn k0(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.wavelength()
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ula_geometry(self.n, self.spacing * self.wavelength(), self.carrier_hz, Vec3::from(self.polarization))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelKind {
    /// Saleh–Valenzuela multipath with a Rician LoS component.
    Sv,
    /// Near-field free-space point source.
    Geometric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub model: ChannelKind,
    pub azimuth_deg: f64,
    /// Geometric model: user distance from the array centroid.
    pub range_m: f64,
    pub path_loss_exponent: f64,
    pub paths: usize,
    pub rician_k_db: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            model: ChannelKind::Sv,
            azimuth_deg: -15.0,
            range_m: 10.0,
            path_loss_exponent: 1.0,
            paths: 6,
            rician_k_db: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    GprSingle,
    GprMixed,
    Ls,
    MmseIso,
    Omp,
    Amp,
}

impl Estimator {
    pub const ALL: [Estimator; 6] =
        [Estimator::GprSingle, Estimator::GprMixed, Estimator::Ls, Estimator::MmseIso, Estimator::Omp, Estimator::Amp];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::GprSingle => "gpr-single",
            Estimator::GprMixed => "gpr-mixed",
            Estimator::Ls => "ls",
            Estimator::MmseIso => "mmse-iso",
            Estimator::Omp => "omp",
            Estimator::Amp => "amp",
        }
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown estimator '{s}'")))
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub estimators: Vec<Estimator>,
    pub seed: u64,
    /// Worker threads; 0 uses the global rayon pool, 1 runs serially.
    pub threads: usize,
    pub omp_paths: usize,
    /// Dictionary atoms; 0 means 4N.
    pub dictionary_size: usize,
    pub amp_lambda: f64,
    pub amp_iterations: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            snr_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0],
            trials: 1000,
            estimators: Estimator::ALL.to_vec(),
            seed: 2024,
            threads: 0,
            omp_paths: 7,
            dictionary_size: 0,
            amp_lambda: 1.2,
            amp_iterations: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningConfig {
    /// Sub-kernel count of the mixed estimator; the single estimator always uses 1.
    pub sub_kernels: usize,
    pub n_iter: usize,
    pub tol: f64,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self { sub_kernels: 2, n_iter: 100, tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub svg: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), svg: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceConfig {
    pub snr_db: f64,
    pub seed: u64,
    /// Grid bounds in log10 of |μ_x| and |μ_z|.
    pub lg_min: f64,
    pub lg_max: f64,
    pub points: usize,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self { snr_db: 0.0, seed: 7, lg_min: -1.0, lg_max: 3.0, points: 40 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropyConfig {
    pub n: usize,
    /// Element spacings in wavelengths, one curve each.
    pub spacings: Vec<f64>,
    pub direction: [f64; 3],
    pub mu_max: f64,
    pub points: usize,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        Self { n: 12, spacings: vec![0.25, 0.5, 1.0], direction: [0.0, 1.0, 1.0], mu_max: 100.0, points: 101 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlicesConfig {
    pub mu: [f64; 3],
    pub velocity: [f64; 3],
    /// Half-width of the square x–z window in wavelengths.
    pub extent: f64,
    pub points: usize,
    /// One x–z slice per time lag.
    pub dt_s: Vec<f64>,
}

impl Default for SlicesConfig {
    fn default() -> Self {
        Self { mu: [0.0, 10.0, 10.0], velocity: [20.0, 0.0, 20.0], extent: 3.0, points: 81, dt_s: vec![0.0, 2e-3] }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Applies `section.key=value` overrides; `value` is parsed as a TOML
    /// literal and falls back to a bare string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut root = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) =
                item.split_once('=').ok_or_else(|| Error::Config(format!("override '{item}' is not key=value")))?;
            let (section, field) = key
                .trim()
                .split_once('.')
                .ok_or_else(|| Error::Config(format!("override key '{key}' must be section.key")))?;
            let value = parse_literal(raw.trim());
            let table = root
                .get_mut(section)
                .and_then(|v| v.as_table_mut())
                .ok_or_else(|| Error::Config(format!("unknown section '{section}'")))?;
            if !table.contains_key(field) {
                return Err(Error::Config(format!("unknown key '{field}' in [{section}]")));
            }
            table.insert(field.to_string(), value);
        }
        let cfg: Self =
            toml::Value::Table(root).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.array.n == 0 {
            return bad("array.n must be >= 1".into());
        }
        if !(self.array.spacing > 0.0) || !(self.array.carrier_hz > 0.0) {
            return bad("array.spacing and array.carrier_hz must be positive".into());
        }
        if (Vec3::from(self.array.polarization).norm() - 1.0).abs() > 1e-9 {
            return bad("array.polarization must be a unit vector".into());
        }
        if self.sweep.snr_db.is_empty() {
            return bad("sweep.snr_db must be non-empty".into());
        }
        if self.sweep.trials == 0 {
            return bad("sweep.trials must be >= 1".into());
        }
        if self.sweep.estimators.is_empty() {
            return bad("sweep.estimators must be non-empty".into());
        }
        if self.sweep.omp_paths > self.array.n {
            return bad(format!("sweep.omp_paths {} exceeds array.n", self.sweep.omp_paths));
        }
        if self.sweep.dictionary_size != 0 && self.sweep.dictionary_size < self.array.n {
            return bad("sweep.dictionary_size must be 0 or >= array.n".into());
        }
        if self.sweep.amp_iterations == 0 {
            return bad("sweep.amp_iterations must be >= 1".into());
        }
        if self.learning.sub_kernels == 0 {
            return bad("learning.sub_kernels must be >= 1".into());
        }
        if self.channel.range_m <= 0.0 {
            return bad("channel.range_m must be positive".into());
        }
        if self.surface.points < 2 || !(self.surface.lg_max > self.surface.lg_min) {
            return bad("surface grid needs points >= 2 and lg_max > lg_min".into());
        }
        if self.entropy.n == 0 || self.entropy.points < 2 || self.entropy.spacings.iter().any(|&d| !(d > 0.0)) {
            return bad("entropy needs n >= 1, points >= 2 and positive spacings".into());
        }
        if Vec3::from(self.entropy.direction).norm() == 0.0 {
            return bad("entropy.direction must be non-zero".into());
        }
        if self.slices.points < 2 || !(self.slices.extent > 0.0) {
            return bad("slices need points >= 2 and positive extent".into());
        }
        Ok(())
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key was just parsed"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
