//! Ground-truth channels and noisy pilot observations for the uplink model
//! `y = h + n`.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gpr::{CVector, SampleSet, SpacetimeSample};
use crate::kernel::{check_unit, Vec3};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Antenna positions, polarizations and carrier of a base-station array.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    pub positions: Vec<Vec3>,
    pub polarizations: Vec<Vec3>,
    pub carrier_hz: f64,
}

impl ArrayGeometry {
    pub fn new(positions: Vec<Vec3>, polarizations: Vec<Vec3>, carrier_hz: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidParameter("array needs at least one antenna".into()));
        }
        if positions.len() != polarizations.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} positions but {} polarizations",
                positions.len(),
                polarizations.len()
            )));
        }
        if !(carrier_hz > 0.0) || !carrier_hz.is_finite() {
            return Err(Error::InvalidParameter(format!("carrier frequency must be positive, got {carrier_hz}")));
        }
        for p in &polarizations {
            check_unit(p)?;
        }
        for (i, a) in positions.iter().enumerate() {
            if positions[..i].iter().any(|b| a == b) {
                return Err(Error::InvalidParameter(format!("antenna {i} duplicates an earlier position")));
            }
        }
        Ok(Self { positions, polarizations, carrier_hz })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn k0(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.wavelength()
    }

    pub fn centroid(&self) -> Vec3 {
        self.positions.iter().sum::<Vec3>() / self.len() as f64
    }

    /// The antennas as static evidence samples at `t = 0`.
    pub fn samples(&self) -> SampleSet {
        let v = self
            .positions
            .iter()
            .zip(&self.polarizations)
            .map(|(x, p)| SpacetimeSample { position: *x, time: 0.0, polarization: *p })
            .collect();
        SampleSet::new(v).expect("geometry is validated non-empty with unit polarizations")
    }

    /// Far-field ULA steering vector `e^{ik₀ x_n sin φ}` along the x axis.
    pub fn steering(&self, azimuth_rad: f64) -> CVector {
        let k = self.k0() * azimuth_rad.sin();
        DVector::from_iterator(self.len(), self.positions.iter().map(|x| Complex64::from_polar(1.0, k * x[0])))
    }
}

/// Uniform linear array along x: antenna `i` at `(i·spacing, 0, 0)`.
pub fn ula_geometry(n: usize, spacing: f64, carrier_hz: f64, polarization: Vec3) -> Result<ArrayGeometry> {
    if n == 0 {
        return Err(Error::InvalidParameter("array needs at least one antenna".into()));
    }
    if !(spacing > 0.0) {
        return Err(Error::InvalidParameter(format!("spacing must be positive, got {spacing}")));
    }
    let positions = (0..n).map(|i| Vec3::new(i as f64 * spacing, 0.0, 0.0)).collect();
    ArrayGeometry::new(positions, vec![polarization; n], carrier_hz)
}

/// Point in the xOz plane at `range` from `center`, at azimuth `φ` from the
/// broadside (+z) axis. Negative azimuths lie towards +x, which makes the
/// far-field phase progression equal to [`ArrayGeometry::steering`].
pub fn user_position(center: &Vec3, range: f64, azimuth_deg: f64) -> Vec3 {
    let a = azimuth_deg.to_radians();
    center + Vec3::new(-a.sin(), 0.0, a.cos()) * range
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelModel {
    Geometric { user_position: Vec3, path_loss_exponent: f64 },
    SalehValenzuela { azimuth_deg: f64, paths: usize, rician_k_db: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: CVector,
    pub model: ChannelModel,
}

/// Free-space coefficients `h_n = λ/(4π d_nʳ) e^{ik d_n}`, unnormalized.
pub fn geometric_channel(geom: &ArrayGeometry, user: &Vec3, r_exp: f64) -> Result<ChannelRealization> {
    let lambda = geom.wavelength();
    let k = geom.k0();
    let mut h = CVector::zeros(geom.len());
    for (n, x) in geom.positions.iter().enumerate() {
        let d = (user - x).norm();
        if !(d > 0.0) {
            return Err(Error::InvalidParameter(format!("user coincides with antenna {n}")));
        }
        h[n] = Complex64::from_polar(lambda / (4.0 * std::f64::consts::PI * d.powf(r_exp)), k * d);
    }
    Ok(ChannelRealization { h, model: ChannelModel::Geometric { user_position: *user, path_loss_exponent: r_exp } })
}

fn complex_gaussian(rng: &mut ChaCha8Rng, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// Saleh–Valenzuela channel: Rician LoS at `phi_ue` plus `paths` equal-power
/// NLoS components with uniform AoAs on [−π/2, π/2].
///
/// Scaled analytically so that `E‖h‖² = N`.
pub fn sv_channel(
    geom: &ArrayGeometry,
    phi_ue_deg: f64,
    paths: usize,
    rician_k_db: f64,
    seed: u64,
) -> ChannelRealization {
    let k = 10f64.powf(rician_k_db / 10.0);
    let (los, nlos) = if k.is_infinite() { (1.0, 0.0) } else { (k / (k + 1.0), 1.0 / (k + 1.0)) };
    let nlos = if paths == 0 { 0.0 } else { nlos };
    let scale = 1.0 / (los + nlos).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = geom.steering(phi_ue_deg.to_radians()) * Complex64::new(los.sqrt(), 0.0);
    if nlos > 0.0 {
        let amp = (nlos / paths as f64).sqrt();
        for _ in 0..paths {
            let phi = rng.random_range(-std::f64::consts::FRAC_PI_2..=std::f64::consts::FRAC_PI_2);
            let g = complex_gaussian(&mut rng, 1.0);
            h += geom.steering(phi) * (g * amp);
        }
    }
    ChannelRealization {
        h: h * Complex64::new(scale, 0.0),
        model: ChannelModel::SalehValenzuela { azimuth_deg: phi_ue_deg, paths, rician_k_db, seed },
    }
}

/// `y = h + n`, `n ~ CN(0, γ⁻¹I)` with `γ = 10^{γ_dB/10}`; returns `(y, γ⁻¹)`.
pub fn add_awgn(h: &CVector, gamma_db: f64, seed: u64) -> (CVector, f64) {
    let noise_var = 10f64.powf(-gamma_db / 10.0);
    if noise_var == 0.0 {
        return (h.clone(), 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = h.map(|v| v + complex_gaussian(&mut rng, noise_var));
    (y, noise_var)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FC: f64 = 3.5e9;

    fn lambda() -> f64 {
        SPEED_OF_LIGHT / FC
    }

    #[test]
    fn ula_layout() {
        let g = ula_geometry(1, lambda() / 2.0, FC, Vec3::y()).unwrap();
        assert_eq!(g.positions, vec![Vec3::zeros()]);
        let g = ula_geometry(12, lambda() / 2.0, FC, Vec3::y()).unwrap();
        let aperture = g.positions[11][0] - g.positions[0][0];
        assert!((aperture - 5.5 * lambda()).abs() < 1e-15);
        assert!(ula_geometry(0, 0.1, FC, Vec3::y()).is_err());
        assert!(ula_geometry(3, 0.1, FC, Vec3::new(1.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn friis_magnitude_and_phase() {
        let g = ula_geometry(2, lambda() / 2.0, FC, Vec3::y()).unwrap();
        // equidistant point on the perpendicular bisector
        let user = Vec3::new(lambda() / 4.0, 0.0, (100.0 - lambda() * lambda() / 16.0).sqrt());
        let h = geometric_channel(&g, &user, 1.0).unwrap().h;
        assert!((h[0].norm() - lambda() / (4.0 * std::f64::consts::PI * 10.0)).abs() < 1e-15);
        assert!((h[0].norm() - 6.816e-4).abs() < 1e-6);
        assert!((h[0] - h[1]).norm() < 1e-15);
        assert!(geometric_channel(&g, &Vec3::zeros(), 1.0).is_err());
    }

    #[test]
    fn phase_difference_is_wavenumber_times_path_difference() {
        let g = ula_geometry(3, 0.04, FC, Vec3::y()).unwrap();
        let user = Vec3::new(1.0, 0.0, 2.0);
        let h = geometric_channel(&g, &user, 1.0).unwrap().h;
        let d0 = (user - g.positions[0]).norm();
        let d2 = (user - g.positions[2]).norm();
        let dphi = (h[2] * h[0].conj()).arg();
        let expect = (g.k0() * (d2 - d0)).rem_euclid(2.0 * std::f64::consts::PI);
        let got = dphi.rem_euclid(2.0 * std::f64::consts::PI);
        assert!((got - expect).abs() < 1e-9);
    }

    #[test]
    fn rician_limits() {
        let g = ula_geometry(8, lambda() / 2.0, FC, Vec3::y()).unwrap();
        let a = g.steering((-15f64).to_radians());
        let h = sv_channel(&g, -15.0, 6, f64::INFINITY, 3).h;
        assert!((h - &a).norm() < 1e-12);
        let h = sv_channel(&g, -15.0, 0, 10.0, 3).h;
        assert!((h - &a).norm() < 1e-12);
    }

    #[test]
    fn awgn_limits() {
        let h = CVector::from_element(4, Complex64::new(1.0, -1.0));
        let (y, nv) = add_awgn(&h, f64::INFINITY, 1);
        assert_eq!(nv, 0.0);
        assert_eq!(y, h);
        let (_, nv) = add_awgn(&h, 0.0, 1);
        assert_eq!(nv, 1.0);
    }

    #[test]
    fn seeds_are_reproducible() {
        let g = ula_geometry(8, lambda() / 2.0, FC, Vec3::y()).unwrap();
        assert_eq!(sv_channel(&g, 10.0, 6, 10.0, 42), sv_channel(&g, 10.0, 6, 10.0, 42));
        assert_ne!(sv_channel(&g, 10.0, 6, 10.0, 42).h, sv_channel(&g, 10.0, 6, 10.0, 43).h);
        let h = CVector::zeros(8);
        assert_eq!(add_awgn(&h, 3.0, 9).0, add_awgn(&h, 3.0, 9).0);
    }
}
