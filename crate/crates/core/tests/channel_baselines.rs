use eitgpr_core::baselines::{
    amp_estimate, isotropic_kernel, ls_estimate, mmse_isotropic, omp_estimate, sinc, unitary_dft, AngularDictionary,
};
use eitgpr_core::channel::{add_awgn, geometric_channel, sv_channel, ula_geometry, user_position, ArrayGeometry};
use eitgpr_core::{CMatrix, CVector, Vec3};
use num_complex::Complex64;
use proptest::prelude::*;

const FC: f64 = 3.5e9;

fn ula(n: usize) -> ArrayGeometry {
    let lambda = eitgpr_core::channel::SPEED_OF_LIGHT / FC;
    ula_geometry(n, lambda / 2.0, FC, Vec3::y()).unwrap()
}

#[test]
fn sv_channel_energy_and_determinism() {
    let geom = ula(32);
    let trials = 4000;
    let mean: f64 =
        (0..trials).map(|s| sv_channel(&geom, -15.0, 6, 10.0, s).h.norm_squared()).sum::<f64>() / trials as f64;
    assert!((mean / 32.0 - 1.0).abs() < 0.03, "E|h|²/N = {}", mean / 32.0);
    assert_eq!(sv_channel(&geom, -15.0, 6, 10.0, 9), sv_channel(&geom, -15.0, 6, 10.0, 9));
    assert_ne!(sv_channel(&geom, -15.0, 6, 10.0, 9).h, sv_channel(&geom, -15.0, 6, 10.0, 10).h);
}

#[test]
fn pure_los_is_steering_vector() {
    let geom = ula(16);
    let h = sv_channel(&geom, 20.0, 6, f64::INFINITY, 1).h;
    assert!((h - geom.steering(20f64.to_radians())).norm() < 1e-12);
    let rayleigh = sv_channel(&geom, 20.0, 0, 10.0, 1).h;
    assert!((rayleigh - geom.steering(20f64.to_radians())).norm() < 1e-12);
}

#[test]
fn awgn_variance_matches_snr() {
    let h = CVector::zeros(20_000);
    for snr in [-10.0, 0.0, 15.0] {
        let (y, nv) = add_awgn(&h, snr, 5);
        let expected = 10f64.powf(-snr / 10.0);
        assert!((nv - expected).abs() < 1e-15 * expected);
        let est = y.norm_squared() / y.len() as f64;
        assert!((est / expected - 1.0).abs() < 0.03);
    }
    let (y, nv) = add_awgn(&CVector::from_element(3, Complex64::new(1.0, 0.0)), f64::INFINITY, 0);
    assert_eq!(nv, 0.0);
    assert_eq!(y, CVector::from_element(3, Complex64::new(1.0, 0.0)));
}

#[test]
fn far_field_geometric_channel_is_steering() {
    let geom = ula(32);
    let user = user_position(&geom.centroid(), 1e5, -15.0);
    let h = geometric_channel(&geom, &user, 1.0).unwrap().h;
    let a = geom.steering((-15f64).to_radians());
    let corr = (a.adjoint() * &h)[0].norm() / (a.norm() * h.norm());
    assert!(corr > 1.0 - 1e-6, "correlation {corr}");
    // Nearby users see more curvature.
    let near = geometric_channel(&geom, &user_position(&geom.centroid(), 2.0, -15.0), 1.0).unwrap().h;
    assert!((a.adjoint() * &near)[0].norm() / (a.norm() * near.norm()) < corr);
    let on_antenna = geom.positions[0];
    assert!(geometric_channel(&geom, &on_antenna, 1.0).is_err());
}

#[test]
fn geometry_validation() {
    assert!(ula_geometry(0, 0.04, FC, Vec3::y()).is_err());
    assert!(ula_geometry(4, 0.0, FC, Vec3::y()).is_err());
    assert!(ula_geometry(4, 0.04, FC, Vec3::new(1.0, 1.0, 0.0)).is_err());
    assert!(ArrayGeometry::new(vec![Vec3::zeros()], vec![Vec3::y()], -1.0).is_err());
    let g = ula(4);
    assert_eq!(g.samples().len(), 4);
    assert!((g.k0() * g.wavelength() - 2.0 * std::f64::consts::PI).abs() < 1e-12);
}

#[test]
fn ls_and_sinc() {
    let y = CVector::from_element(4, Complex64::new(0.5, -1.0));
    assert_eq!(ls_estimate(&y), y);
    assert_eq!(sinc(0.0), 1.0);
    assert!(sinc(1.0).abs() < 1e-15);
    assert!((sinc(0.5) - 2.0 / std::f64::consts::PI).abs() < 1e-15);
}

#[test]
fn mmse_iso_closed_form() {
    let geom = ula(8);
    let y = CVector::from_fn(8, |i, _| Complex64::new((i as f64).cos(), (i as f64 * 0.7).sin()));
    let k = isotropic_kernel(&geom, 1.0);
    // With half-wavelength spacing the isotropic kernel is the identity.
    assert!((&k - CMatrix::identity(8, 8)).norm() < 1e-12);
    let h = mmse_isotropic(&y, &geom, 1.0, 0.25).unwrap();
    assert!((h - &y * Complex64::new(1.0 / 1.25, 0.0)).norm() < 1e-12);
    assert!(mmse_isotropic(&CVector::zeros(3), &geom, 1.0, 0.25).is_err());
}

#[test]
fn omp_recovers_on_grid_paths() {
    let geom = ula(32);
    let dict = AngularDictionary::oversampled(&geom);
    assert_eq!(dict.grid.len(), 128);
    let (a, b) = (17, 90);
    let h = dict.atoms.column(a) * Complex64::new(1.0, 0.5) + dict.atoms.column(b) * Complex64::new(-0.3, 0.2);
    let out = omp_estimate(&h, &dict, 2).unwrap();
    let mut support = out.support.clone();
    support.sort();
    assert_eq!(support, vec![a, b]);
    assert!((out.estimate - &h).norm() < 1e-10 * h.norm());
    assert!(out.residual_norms.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    assert!(omp_estimate(&h, &dict, 40).is_err());
}

#[test]
fn amp_on_dft_sparse_signal() {
    let n = 32;
    let f = unitary_dft(n);
    assert!((&f.adjoint() * &f - CMatrix::identity(n, n)).norm() < 1e-12);
    let mut x = CVector::zeros(n);
    x[3] = Complex64::new(4.0, 0.0);
    x[20] = Complex64::new(0.0, -3.0);
    let h = &f * &x;
    let (y, _) = add_awgn(&h, 20.0, 4);
    let out = amp_estimate(&y, 1.2, 30).unwrap();
    assert!(out.converged);
    assert!((out.estimate - &h).norm_squared() < (&y - &h).norm_squared());
    assert!(amp_estimate(&y, 1.2, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn omp_residual_is_orthogonal_to_support(seed in 0u64..500, k in 1usize..8) {
        let geom = ula(16);
        let dict = AngularDictionary::oversampled(&geom);
        let h = sv_channel(&geom, 10.0, 6, 3.0, seed).h;
        let out = omp_estimate(&h, &dict, k).unwrap();
        let resid = &h - &out.estimate;
        for &j in &out.support {
            let ip = (dict.atoms.column(j).adjoint() * &resid)[0].norm();
            prop_assert!(ip < 1e-9 * h.norm());
        }
    }

    #[test]
    fn mirrored_user_mirrors_steering(az in -80.0..80.0f64) {
        let geom = ula(8);
        let a = geom.steering(az.to_radians());
        let b = geom.steering((-az).to_radians());
        prop_assert!((a.map(|z| z.conj()) - b).norm() < 1e-9);
    }
}
