//! The electromagnetic space-time kernel.
//!
//! For two space-time points the kernel is the 3×3 polarization correlation
//!
//! ```text
//! K(x, t; x', t') = σ² / C(‖μ‖) · Σ(k₀ z),    z = (x − x') + v (t − t') − i μ / k₀
//! Σ(w) = ⅛ (f₀ + f₂)(|w|) I + ⅛ (f₀ − 3f₂)(|w|) ŵŵᵀ
//! ```
//!
//! with `|w| = √(wᵀw)` the complex pseudo-norm. Σ is an entire, even function of
//! `w`, so the rank-one term is evaluated as `g(|w|) wwᵀ` with
//! `g = (f₀ − 3f₂)/|w|²`, which never divides by a vanishing pseudo-norm and does
//! not depend on the square-root branch.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::special::{fn_table, vmf_log_derivative_over_mu, vmf_normalizer_scaled};

pub type Vec3 = Vector3<f64>;
pub type ComplexVec3 = Vector3<Complex64>;
pub type Matrix3C = Matrix3<Complex64>;

/// Pseudo-norm threshold on `|wᵀw|` below which the analytic gradient is
/// replaced by central differences.
pub const DEGENERACY_EPS: f64 = 1e-8;

/// Relative step for the finite-difference gradient fallback.
const FD_REL_STEP: f64 = 1e-6;

/// Tolerance on `‖p‖ − 1` for polarization vectors.
pub const UNIT_TOL: f64 = 1e-9;

/// Complex bilinear (unconjugated) forms on 3-vectors.
pub trait PseudoNorm {
    /// `wᵀw`.
    fn pseudo_dot(&self) -> Complex64;
    /// Principal square root of `wᵀw`.
    fn pseudo_norm(&self) -> Complex64 {
        self.pseudo_dot().sqrt()
    }
}

impl PseudoNorm for ComplexVec3 {
    fn pseudo_dot(&self) -> Complex64 {
        self[0] * self[0] + self[1] * self[1] + self[2] * self[2]
    }
}

/// Hyperparameters of one EM sub-kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    /// Concentration vector (dimensionless).
    pub mu: Vec3,
    /// Channel energy, `tr K(x; x)`.
    pub sigma2: f64,
    /// Velocity in m/s.
    pub velocity: Vec3,
    /// Wavenumber in rad/m.
    pub k0: f64,
}

impl KernelParams {
    pub fn new(mu: Vec3, sigma2: f64, velocity: Vec3, k0: f64) -> Result<Self> {
        let p = Self { mu, sigma2, velocity, k0 };
        p.validate()?;
        Ok(p)
    }

    /// Static kernel (zero velocity).
    pub fn stationary(mu: Vec3, sigma2: f64, k0: f64) -> Result<Self> {
        Self::new(mu, sigma2, Vec3::zeros(), k0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        if !(self.k0 > 0.0 && self.k0.is_finite()) {
            return Err(Error::InvalidParameter(format!("k0 must be positive, got {}", self.k0)));
        }
        if !self.mu.iter().chain(self.velocity.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("mu and velocity must be finite".into()));
        }
        Ok(())
    }

    /// `w = k₀ [(xa − xb) + v (ta − tb)] − i μ`.
    pub fn scaled_displacement(&self, xa: &Vec3, ta: f64, xb: &Vec3, tb: f64) -> ComplexVec3 {
        let r = (xa - xb) + self.velocity * (ta - tb);
        ComplexVec3::from_fn(|i, _| Complex64::new(self.k0 * r[i], -self.mu[i]))
    }
}

/// Σ(w)·e^{-shift}.
fn sigma_scaled(w: &ComplexVec3, shift: f64) -> Matrix3C {
    let beta = w.pseudo_norm();
    let t = fn_table(beta, shift);
    let iso = (t.f[0] + t.f[2]) * 0.125;
    let rank = t.rank_one * 0.125;
    let mut m = w * w.transpose() * rank;
    for i in 0..3 {
        m[(i, i)] += iso;
    }
    m
}

/// The matrix-valued correlation function Σ(w).
pub fn sigma_matrix(w: &ComplexVec3) -> Matrix3C {
    sigma_scaled(w, 0.0)
}

fn sigma_gradient_scaled(w: &ComplexVec3, shift: f64) -> [Matrix3C; 3] {
    if w.pseudo_dot().norm() < DEGENERACY_EPS {
        return sigma_gradient_fd(w, shift);
    }
    let beta = w.pseudo_norm();
    let t = fn_table(beta, shift);
    let [f0, f1, f2, f3] = t.f;
    let i = Complex64::i();
    let w_hat = w / beta;
    let outer = w_hat * w_hat.transpose();
    let iso_coef = i * (f1 + f3);
    let outer_coef = i * (f1 - 3.0 * f3);
    let rank_coef = f0 - 3.0 * f2;
    std::array::from_fn(|k| {
        let mut e_k = ComplexVec3::zeros();
        e_k[k] = Complex64::new(1.0, 0.0);
        let d_hat = (e_k - w_hat * w_hat[k]) / beta;
        let sym = d_hat * w_hat.transpose() + w_hat * d_hat.transpose();
        let mut m = outer * (outer_coef * w_hat[k]) + sym * rank_coef;
        for d in 0..3 {
            m[(d, d)] += iso_coef * w_hat[k];
        }
        m * Complex64::new(0.125, 0.0)
    })
}

fn sigma_gradient_fd(w: &ComplexVec3, shift: f64) -> [Matrix3C; 3] {
    let scale = w.iter().map(|c| c.norm()).fold(1.0, f64::max);
    let h = FD_REL_STEP * scale;
    std::array::from_fn(|k| {
        let mut plus = *w;
        let mut minus = *w;
        plus[k] += h;
        minus[k] -= h;
        (sigma_scaled(&plus, shift) - sigma_scaled(&minus, shift)) / Complex64::new(2.0 * h, 0.0)
    })
}

/// `∂Σ/∂w(k)` for `k = 0, 1, 2`.
///
/// Uses the closed-form derivative when `|wᵀw| ≥ DEGENERACY_EPS`, central
/// differences otherwise.
pub fn sigma_gradient(w: &ComplexVec3) -> [Matrix3C; 3] {
    sigma_gradient_scaled(w, 0.0)
}

/// The EM kernel `K(xa, ta; xb, tb)`.
pub fn em_kernel(xa: &Vec3, ta: f64, xb: &Vec3, tb: f64, p: &KernelParams) -> Matrix3C {
    let w = p.scaled_displacement(xa, ta, xb, tb);
    kernel_from_w(&w, p)
}

pub(crate) fn kernel_from_w(w: &ComplexVec3, p: &KernelParams) -> Matrix3C {
    let mu = p.mu.norm();
    sigma_scaled(w, mu) * Complex64::new(p.sigma2 / vmf_normalizer_scaled(mu), 0.0)
}

/// Kernel value together with its derivatives with respect to `μ(k)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct KernelWithGrad {
    pub value: Matrix3C,
    pub grad_mu: [Matrix3C; 3],
}

pub(crate) fn kernel_with_grad_from_w(w: &ComplexVec3, p: &KernelParams) -> KernelWithGrad {
    let mu = p.mu.norm();
    let amp = p.sigma2 / vmf_normalizer_scaled(mu);
    let sigma = sigma_scaled(w, mu);
    let d_sigma = sigma_gradient_scaled(w, mu);
    let ratio = vmf_log_derivative_over_mu(mu);
    let i = Complex64::i();
    let grad_mu = std::array::from_fn(|k| {
        (d_sigma[k] * i + sigma * Complex64::new(ratio * p.mu[k], 0.0)) * Complex64::new(-amp, 0.0)
    });
    KernelWithGrad { value: sigma * Complex64::new(amp, 0.0), grad_mu }
}

/// `∂K/∂μ(k) = −(σ²/C)[i ∂Σ/∂w(k) + C'(μ) μ(k) / (C(μ) μ) Σ]`.
pub fn em_kernel_grad_mu(xa: &Vec3, ta: f64, xb: &Vec3, tb: f64, p: &KernelParams) -> [Matrix3C; 3] {
    let w = p.scaled_displacement(xa, ta, xb, tb);
    kernel_with_grad_from_w(&w, p).grad_mu
}

/// `∂K/∂σ² = Σ(w)/C(μ)`.
pub fn em_kernel_grad_sigma2(xa: &Vec3, ta: f64, xb: &Vec3, tb: f64, p: &KernelParams) -> Matrix3C {
    let w = p.scaled_displacement(xa, ta, xb, tb);
    let mu = p.mu.norm();
    sigma_scaled(&w, mu) / Complex64::new(vmf_normalizer_scaled(mu), 0.0)
}

pub(crate) fn check_unit(p: &Vec3) -> Result<()> {
    let n = p.norm();
    if (n - 1.0).abs() > UNIT_TOL || !n.is_finite() {
        return Err(Error::InvalidParameter(format!("polarization must be a unit vector, |p| = {n}")));
    }
    Ok(())
}

/// Projects a 3×3 kernel onto two polarizations: `paᵀ K pb`.
pub(crate) fn project(k: &Matrix3C, pa: &Vec3, pb: &Vec3) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..3 {
        for j in 0..3 {
            acc += k[(i, j)] * (pa[i] * pb[j]);
        }
    }
    acc
}

/// Projects the kernel between two polarized antennas.
pub fn em_kernel_scalar(
    a: &crate::gpr::SpacetimeSample,
    b: &crate::gpr::SpacetimeSample,
    p: &KernelParams,
) -> Result<Complex64> {
    check_unit(&a.polarization)?;
    check_unit(&b.polarization)?;
    let k = em_kernel(&a.position, a.time, &b.position, b.time, p);
    Ok(project(&k, &a.polarization, &b.polarization))
}
