//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use eitgpr_core::{KernelParams, Matrix3C, Vec3};
use num_complex::Complex64;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// One Gauss–Kronrod 7/15 panel: `(kronrod, |kronrod − gauss|)`.
fn gk15<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let fx = f(c - h * XGK[j]) + f(c + h * XGK[j]);
        k += fx * WGK[j];
        if j % 2 == 1 {
            g += fx * WG[j / 2];
        }
    }
    (k * h, ((k - g) * h).norm())
}

fn adapt<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> Complex64 {
    let (whole, err) = gk15(f, a, b);
    // |K − G| tracks the Gauss error; the Kronrod value is far more accurate.
    if err <= tol || depth == 0 {
        return whole;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, tol, depth - 1) + adapt(f, m, b, tol, depth - 1)
}

/// Adaptive Gauss–Kronrod quadrature of a complex integrand; panels are
/// bisected until their Kronrod–Gauss discrepancy is at most `tol`.
pub fn integrate<F: Fn(f64) -> Complex64>(f: F, a: f64, b: f64, tol: f64) -> Complex64 {
    adapt(&f, a, b, tol, 24)
}

/// `∫₋₁¹ xⁿ e^{iβx} dx` by adaptive quadrature, relative to the integrand's L1 scale.
pub fn fn_by_quadrature(n: usize, beta: Complex64) -> Complex64 {
    let i = Complex64::i();
    let f = |x: f64| (i * beta * x).exp() * x.powi(n as i32);
    let scale = integrate(|x| Complex64::new(f(x).norm(), 0.0), -1.0, 1.0, 1e-6).re;
    integrate(f, -1.0, 1.0, 1e-13 * scale)
}

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// `σ²/(2C(‖μ‖)) · ⟨(I − κκᵀ) e^{ik₀κ·r} e^{κ·μ}⟩` over the unit sphere,
/// by Gauss–Legendre in `cos θ` times the trapezoid rule in `φ`.
pub fn sphere_kernel(r: &Vec3, p: &KernelParams, n_theta: usize, n_phi: usize) -> Matrix3C {
    let (u, wu) = gauss_legendre(n_theta);
    let mut acc = Matrix3C::zeros();
    for (&c, &w) in u.iter().zip(&wu) {
        let s = (1.0 - c * c).sqrt();
        for j in 0..n_phi {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / n_phi as f64;
            let kappa = Vec3::new(s * phi.cos(), s * phi.sin(), c);
            let phase = Complex64::new(kappa.dot(&p.mu), p.k0 * kappa.dot(r)).exp();
            let weight = phase * (w / n_phi as f64 / 2.0);
            for a in 0..3 {
                for b in 0..3 {
                    let proj = if a == b { 1.0 } else { 0.0 } - kappa[a] * kappa[b];
                    acc[(a, b)] += weight * proj;
                }
            }
        }
    }
    let m = p.mu.norm();
    let c = if m == 0.0 { 1.0 } else { m.sinh() / m };
    acc * Complex64::new(p.sigma2 / (2.0 * c), 0.0)
}

pub fn max_abs(m: &Matrix3C) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
