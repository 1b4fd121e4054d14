//! Scalar special functions behind the EM kernel.
//!
//! `f_n(β) = ∫₋₁¹ xⁿ e^{iβx} dx` for `n = 0..=3`, the von Mises–Fisher
//! normalizer `C(μ) = sinh(μ)/μ` with its derivative, and the Clarke/Jakes
//! temporal correlation used for comparison plots.
//!
//! Every `f_n` routine has an exponentially scaled twin that returns
//! `f_n(β)·e^{-shift}`. The kernel evaluates `Σ(w)/C(‖μ‖)`, where both factors
//! grow like `e^{‖μ‖}`; scaling both by `e^{-‖μ‖}` keeps the ratio finite for
//! concentrations far beyond the `sinh` overflow point.

use num_complex::Complex64;

/// Below this magnitude of `β` the power series is used instead of the
/// trigonometric closed forms.
pub const BETA_SWITCH: f64 = 1.0;

/// The series stops once the next term drops below this fraction of the
/// partial sum.
const SERIES_REL_TOL: f64 = 1e-17;

const SERIES_MAX_TERMS: usize = 200;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Values `[f₀, f₁, f₂, f₃]` at one argument, all scaled by `e^{-shift}`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FnTable {
    pub f: [Complex64; 4],
    /// `(f₀ − 3f₂)/β²`, the entire coefficient of the rank-one term of Σ.
    pub rank_one: Complex64,
}

/// `∫₋₁¹ xⁿ e^{iβx} dx`.
///
/// Panics if `n > 3`.
pub fn f_n(n: usize, beta: Complex64) -> Complex64 {
    assert!(n <= 3, "f_n is only defined here for n in 0..=3, got {n}");
    if beta.norm() < BETA_SWITCH {
        f_n_series(n, beta)
    } else {
        f_n_closed(n, beta)
    }
}

/// Truncated power series `Σ_m 2(iβ)^m / (m!(n+m+1))` over `m` with `n+m` even.
pub fn f_n_series(n: usize, beta: Complex64) -> Complex64 {
    assert!(n <= 3);
    let ib = I * beta;
    // term_m = (iβ)^m / m!, advanced two orders at a time
    let start = n % 2;
    let mut power = if start == 0 { Complex64::new(1.0, 0.0) } else { ib };
    let mut m = start;
    let mut sum = Complex64::new(0.0, 0.0);
    for _ in 0..SERIES_MAX_TERMS {
        let term = power * (2.0 / (n + m + 1) as f64);
        sum += term;
        let next_power = power * ib * ib / (((m + 1) * (m + 2)) as f64);
        let next_term = next_power.norm() * 2.0 / (n + m + 3) as f64;
        if next_term < SERIES_REL_TOL * sum.norm() || next_power.norm() == 0.0 {
            break;
        }
        power = next_power;
        m += 2;
    }
    sum
}

/// Closed forms obtained from `f₀(β) = 2 sin β / β` and `f_{n+1} = −i f_n'`.
pub fn f_n_closed(n: usize, beta: Complex64) -> Complex64 {
    closed_table(beta, 0.0).f[n]
}

fn closed_table(beta: Complex64, shift: f64) -> FnTable {
    let e_plus = (I * beta - shift).exp();
    let e_minus = (-I * beta - shift).exp();
    let s = (e_plus - e_minus) / (2.0 * I);
    let c = (e_plus + e_minus) * 0.5;
    let b1 = beta.inv();
    let b2 = b1 * b1;
    let b3 = b2 * b1;
    let b4 = b2 * b2;
    let f0 = 2.0 * s * b1;
    let f1 = 2.0 * I * (s * b2 - c * b1);
    let f2 = 2.0 * s * b1 + 4.0 * c * b2 - 4.0 * s * b3;
    let f3 = 2.0 * I * (-c * b1 + 3.0 * s * b2 + 6.0 * c * b3 - 6.0 * s * b4);
    let rank_one = (-4.0 * s * b1 - 12.0 * c * b2 + 12.0 * s * b3) * b2;
    FnTable { f: [f0, f1, f2, f3], rank_one }
}

/// Series for `(f₀ − 3f₂)/β² = Σ_{j≥1} 8j(−1)^{j+1} β^{2j−2} / ((2j)!(2j+1)(2j+3))`.
fn rank_one_series(beta: Complex64) -> Complex64 {
    let b2 = beta * beta;
    // p_j = (−1)^{j+1} β^{2j−2} / (2j)!
    let mut p = Complex64::new(0.5, 0.0);
    let mut sum = Complex64::new(0.0, 0.0);
    for j in 1..SERIES_MAX_TERMS {
        let jf = j as f64;
        let term = p * (8.0 * jf / ((2.0 * jf + 1.0) * (2.0 * jf + 3.0)));
        sum += term;
        let next = -p * b2 / ((2.0 * jf + 1.0) * (2.0 * jf + 2.0));
        let nj = jf + 1.0;
        let next_term = next.norm() * 8.0 * nj / ((2.0 * nj + 1.0) * (2.0 * nj + 3.0));
        if next_term < SERIES_REL_TOL * sum.norm() || next.norm() == 0.0 {
            break;
        }
        p = next;
    }
    sum
}

/// `f₀..f₃` and the rank-one coefficient at `β`, scaled by `e^{-shift}`.
pub(crate) fn fn_table(beta: Complex64, shift: f64) -> FnTable {
    if beta.norm() < BETA_SWITCH {
        let scale = (-shift).exp();
        FnTable { f: [0, 1, 2, 3].map(|n| f_n_series(n, beta) * scale), rank_one: rank_one_series(beta) * scale }
    } else {
        closed_table(beta, shift)
    }
}

/// Below this `μ` the normalizer and its derivative use Taylor expansions.
const VMF_SERIES_THRESHOLD: f64 = 1e-3;

/// The von Mises–Fisher normalizer `C(μ) = sinh(μ)/μ`, equal to 1 at `μ = 0`.
pub fn vmf_normalizer(mu: f64) -> f64 {
    debug_assert!(mu >= 0.0);
    if mu < VMF_SERIES_THRESHOLD {
        let m2 = mu * mu;
        1.0 + m2 / 6.0 + m2 * m2 / 120.0
    } else {
        mu.sinh() / mu
    }
}

/// `C(μ)·e^{-μ} = (1 − e^{-2μ})/(2μ)`, finite for every `μ ≥ 0`.
pub(crate) fn vmf_normalizer_scaled(mu: f64) -> f64 {
    if mu < VMF_SERIES_THRESHOLD {
        vmf_normalizer(mu) * (-mu).exp()
    } else {
        -(-2.0 * mu).exp_m1() / (2.0 * mu)
    }
}

/// `C'(μ) = μ⁻²(μ cosh μ − sinh μ)`.
pub fn vmf_normalizer_derivative(mu: f64) -> f64 {
    debug_assert!(mu >= 0.0);
    if mu < VMF_SERIES_THRESHOLD {
        mu / 3.0 + mu.powi(3) / 30.0
    } else {
        (mu * mu.cosh() - mu.sinh()) / (mu * mu)
    }
}

/// `C'(μ)/(C(μ)·μ) = (coth μ − 1/μ)/μ`, tending to 1/3 at the origin.
pub fn vmf_log_derivative_over_mu(mu: f64) -> f64 {
    if mu < VMF_SERIES_THRESHOLD {
        let m2 = mu * mu;
        1.0 / 3.0 - m2 / 45.0 + 2.0 * m2 * m2 / 945.0
    } else {
        (1.0 / mu.tanh() - 1.0 / mu) / mu
    }
}

/// Clarke/Jakes temporal correlation `σ_h² J₀(2π v Δt / λ)`.
pub fn jakes_correlation(dt: f64, speed: f64, wavelength: f64, sigma_h2: f64) -> f64 {
    assert!(wavelength > 0.0, "wavelength must be positive");
    sigma_h2 * libm::j0(2.0 * std::f64::consts::PI * speed * dt / wavelength)
}
