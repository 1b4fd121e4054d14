mod common;

use approx::assert_relative_eq;
use eitgpr_core::kernel::{em_kernel_grad_mu, em_kernel_grad_sigma2, sigma_gradient, sigma_matrix};
use eitgpr_core::special::{f_n, jakes_correlation, vmf_normalizer, vmf_normalizer_derivative};
use eitgpr_core::{em_kernel, em_kernel_scalar, ComplexVec3, KernelParams, Matrix3C, SpacetimeSample, Vec3};
use num_complex::Complex64;
use proptest::prelude::*;

use common::{fn_by_quadrature, max_abs, sphere_kernel};

const K0: f64 = 73.36;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn vec3() -> impl Strategy<Value = Vec3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn cvec3() -> impl Strategy<Value = ComplexVec3> {
    (vec3(), vec3()).prop_map(|(re, im)| ComplexVec3::from_fn(|i, _| c(20.0 * re[i], 10.0 * im[i])))
}

fn params() -> impl Strategy<Value = KernelParams> {
    (vec3(), 0.0..40.0f64, 0.1..5.0f64, vec3()).prop_map(|(d, m, s2, v)| {
        let mu = if d.norm() > 1e-3 { d.normalize() * m } else { Vec3::zeros() };
        KernelParams::new(mu, s2, v * 30.0, K0).unwrap()
    })
}

#[test]
fn f_n_trivial_values() {
    assert_relative_eq!(f_n(0, c(0.0, 0.0)).re, 2.0, epsilon = 1e-15);
    assert_eq!(f_n(1, c(0.0, 0.0)).norm(), 0.0);
    assert_relative_eq!(f_n(2, c(0.0, 0.0)).re, 2.0 / 3.0, epsilon = 1e-15);
    let b = c(1.3, 0.7);
    assert!((f_n(0, b) - fn_by_quadrature(0, b)).norm() <= 1e-10 * f_n(0, b).norm());
}

#[test]
fn vmf_normalizer_values() {
    assert_eq!(vmf_normalizer(0.0), 1.0);
    assert_relative_eq!(vmf_normalizer(2.0), 2f64.sinh() / 2.0, max_relative = 1e-12);
    assert_eq!(vmf_normalizer_derivative(0.0), 0.0);
    let h = 1e-5;
    let fd = (vmf_normalizer(3.0 + h) - vmf_normalizer(3.0 - h)) / (2.0 * h);
    assert_relative_eq!(vmf_normalizer_derivative(3.0), fd, max_relative = 1e-8);
}

#[test]
fn jakes_values() {
    let lambda = 0.0857;
    assert_eq!(jakes_correlation(0.0, 20.0, lambda, 2.5), 2.5);
    assert_eq!(jakes_correlation(0.3, 0.0, lambda, 2.5), 2.5);
    let dt = 2.404_825_557_695_773 * lambda / (2.0 * std::f64::consts::PI * 20.0);
    assert!(jakes_correlation(dt, 20.0, lambda, 1.0).abs() < 1e-9);
}

#[test]
fn sigma_at_origin_is_third_identity() {
    let s = sigma_matrix(&ComplexVec3::zeros());
    assert!(max_abs(&(s - Matrix3C::identity() * c(1.0 / 3.0, 0.0))) < 1e-15);
    let p = KernelParams::stationary(Vec3::zeros(), 3.0, K0).unwrap();
    let k = em_kernel(&Vec3::zeros(), 0.0, &Vec3::zeros(), 0.0, &p);
    assert!(max_abs(&(k - Matrix3C::identity())) < 1e-14);
}

#[test]
fn sigma_matches_quadrature_on_real_axis() {
    // Real w = (β, 0, 0) corresponds to μ = 0 and r = (β/k₀, 0, 0).
    for beta in [0.05, 0.7, 3.0, 11.0] {
        let p = KernelParams::stationary(Vec3::zeros(), 1.0, K0).unwrap();
        let r = Vec3::new(beta / K0, 0.0, 0.0);
        let s = sigma_matrix(&ComplexVec3::new(c(beta, 0.0), c(0.0, 0.0), c(0.0, 0.0)));
        assert!(max_abs(&(s - sphere_kernel(&r, &p, 64, 64))) < 1e-12);
    }
}

#[test]
fn null_pseudo_norm_is_regular() {
    // wᵀw = 0 for w = (a, ia, 0): the factored rank-one form is singular there.
    let w = ComplexVec3::new(c(2.0, 0.0), c(0.0, 2.0), c(0.0, 0.0));
    let s = sigma_matrix(&w);
    assert!(s.iter().all(|z| z.is_finite()));
    let nudged = ComplexVec3::new(c(2.0, 0.0), c(1e-4, 2.0), c(0.0, 0.0));
    assert!(max_abs(&(s - sigma_matrix(&nudged))) < 1e-3);
    let g = sigma_gradient(&w);
    assert!(g.iter().all(|m| m.iter().all(|z| z.is_finite())));
}

#[test]
fn kernel_grad_sigma2_is_kernel_over_sigma2() {
    let p = KernelParams::new(Vec3::new(1.0, -2.0, 4.0), 2.5, Vec3::new(3.0, 0.0, 1.0), K0).unwrap();
    let (a, b) = (Vec3::new(0.01, 0.02, -0.03), Vec3::new(-0.02, 0.0, 0.01));
    let k = em_kernel(&a, 1e-3, &b, 0.0, &p);
    let d = em_kernel_grad_sigma2(&a, 1e-3, &b, 0.0, &p);
    assert!(max_abs(&(d * c(2.5, 0.0) - k)) < 1e-14);
}

#[test]
fn kernel_grad_mu_finite_at_zero_concentration() {
    let p = KernelParams::stationary(Vec3::zeros(), 1.0, K0).unwrap();
    let (a, b) = (Vec3::new(0.013, 0.0, 0.02), Vec3::zeros());
    let an = em_kernel_grad_mu(&a, 0.0, &b, 0.0, &p);
    let h = 1e-5;
    for k in 0..3 {
        let mut plus = p;
        let mut minus = p;
        plus.mu[k] = h;
        minus.mu[k] = -h;
        let fd = (em_kernel(&a, 0.0, &b, 0.0, &plus) - em_kernel(&a, 0.0, &b, 0.0, &minus)) * c(0.5 / h, 0.0);
        assert!(max_abs(&(fd - an[k])) <= 1e-6 * max_abs(&an[k]).max(1e-3));
    }
}

#[test]
fn cross_polarized_colocated_is_zero() {
    let p = KernelParams::stationary(Vec3::zeros(), 1.0, K0).unwrap();
    let a = SpacetimeSample::new(Vec3::zeros(), 0.0, Vec3::x()).unwrap();
    let b = SpacetimeSample::new(Vec3::zeros(), 0.0, Vec3::y()).unwrap();
    assert!(em_kernel_scalar(&a, &b, &p).unwrap().norm() < 1e-16);
    assert!(SpacetimeSample::new(Vec3::zeros(), 0.0, Vec3::new(1.0, 1.0, 0.0)).is_err());
}

#[test]
fn slice_peak_translates_with_velocity() {
    let v = Vec3::new(20.0, 0.0, 20.0);
    let p = KernelParams::new(Vec3::new(0.0, 10.0, 10.0), 1.0, v, K0).unwrap();
    let dt = 2e-3;
    let magnitude = |x: Vec3, t: f64| em_kernel(&x, t, &Vec3::zeros(), 0.0, &p)[(1, 1)].norm();
    let peak = magnitude(-v * dt, dt);
    for off in [Vec3::new(0.01, 0.0, 0.0), Vec3::new(0.0, 0.0, -0.01), Vec3::new(0.02, 0.0, 0.02)] {
        assert!(magnitude(-v * dt + off, dt) < peak);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn trace_normalization(p in params(), x in vec3(), t in -1e-2..1e-2f64) {
        let k = em_kernel(&x, t, &x, t, &p);
        prop_assert!((k.trace().re - p.sigma2).abs() <= 1e-9 * p.sigma2);
        prop_assert!(k.trace().im.abs() <= 1e-9 * p.sigma2);
    }

    #[test]
    fn hermitian_symmetry(p in params(), a in vec3(), b in vec3(), ta in 0.0..1e-2f64, tb in 0.0..1e-2f64) {
        let (a, b) = (a * 0.1, b * 0.1);
        let ab = em_kernel(&a, ta, &b, tb, &p);
        let ba = em_kernel(&b, tb, &a, ta, &p);
        prop_assert!(max_abs(&(ab - ba.adjoint())) <= 1e-12 * max_abs(&ab).max(1e-300));
    }

    #[test]
    fn scalar_swap_conjugates(p in params(), a in vec3(), b in vec3(), pa in vec3(), pb in vec3()) {
        prop_assume!(pa.norm() > 0.1 && pb.norm() > 0.1);
        let sa = SpacetimeSample::new(a * 0.1, 0.0, pa.normalize()).unwrap();
        let sb = SpacetimeSample::new(b * 0.1, 0.0, pb.normalize()).unwrap();
        let ab = em_kernel_scalar(&sa, &sb, &p).unwrap();
        let ba = em_kernel_scalar(&sb, &sa, &p).unwrap();
        prop_assert!((ab - ba.conj()).norm() <= 1e-12 * ab.norm().max(1e-300));
        let aa = em_kernel_scalar(&sa, &sa, &p).unwrap();
        prop_assert!(aa.im.abs() <= 1e-12 * p.sigma2 && aa.re > 0.0 && aa.re <= p.sigma2 * (1.0 + 1e-12));
    }

    #[test]
    fn sigma_is_even(w in cvec3()) {
        let s = sigma_matrix(&w);
        prop_assert!(max_abs(&(s - sigma_matrix(&(-w)))) <= 1e-12 * max_abs(&s));
        let g = sigma_gradient(&w);
        let gn = sigma_gradient(&(-w));
        for k in 0..3 {
            prop_assert!(max_abs(&(g[k] + gn[k])) <= 1e-10 * max_abs(&g[k]).max(1e-12 * max_abs(&s)));
        }
    }

    #[test]
    fn sigma_gradient_matches_finite_differences(w in cvec3()) {
        let g = sigma_gradient(&w);
        let h = 1e-6 * w.norm().max(1.0);
        let scale = max_abs(&sigma_matrix(&w));
        for k in 0..3 {
            let mut plus = w;
            let mut minus = w;
            plus[k] += c(h, 0.0);
            minus[k] -= c(h, 0.0);
            let fd = (sigma_matrix(&plus) - sigma_matrix(&minus)) * c(0.5 / h, 0.0);
            // Σ is holomorphic: the complex derivative is the real-direction derivative.
            prop_assert!(max_abs(&(fd - g[k])) <= 1e-6 * max_abs(&g[k]).max(scale));
        }
    }

    #[test]
    fn doppler_is_displacement(p in params(), x in vec3(), dt in -1e-2..1e-2f64) {
        let a = em_kernel(&x, dt, &Vec3::zeros(), 0.0, &p);
        let b = em_kernel(&(x + p.velocity * dt), 0.0, &Vec3::zeros(), 0.0, &p);
        prop_assert_eq!(a, b);
    }
}
