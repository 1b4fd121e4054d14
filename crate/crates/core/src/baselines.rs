//! Reference estimators: least squares, isotropic-kernel MMSE, OMP and AMP.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::channel::ArrayGeometry;
use crate::error::{Error, Result};
use crate::gpr::{add_noise, factor, CMatrix, CVector};

/// `ĥ = y`.
pub fn ls_estimate(y: &CVector) -> CVector {
    y.clone()
}

/// Normalized sinc `sin(πu)/(πu)`.
pub fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-8 {
        1.0 - (std::f64::consts::PI * u).powi(2) / 6.0
    } else {
        let x = std::f64::consts::PI * u;
        x.sin() / x
    }
}

/// `[K_iso]_{αβ} = σ² sinc(2‖x_α − x_β‖/λ)`.
pub fn isotropic_kernel(geom: &ArrayGeometry, sigma2: f64) -> CMatrix {
    let lambda = geom.wavelength();
    let n = geom.len();
    CMatrix::from_fn(n, n, |i, j| {
        let r = (geom.positions[i] - geom.positions[j]).norm();
        Complex64::new(sigma2 * sinc(2.0 * r / lambda), 0.0)
    })
}

/// `ĥ = K_iso(K_iso + γ⁻¹I)⁻¹y`.
pub fn mmse_isotropic(y: &CVector, geom: &ArrayGeometry, sigma2: f64, noise_var: f64) -> Result<CVector> {
    if y.len() != geom.len() {
        return Err(Error::DimensionMismatch(format!("{} observations for {} antennas", y.len(), geom.len())));
    }
    let k = isotropic_kernel(geom, sigma2);
    let mut ky = k.clone();
    add_noise(&mut ky, noise_var);
    let a = factor(ky)?.solve(y);
    Ok(k * a)
}

/// Oversampled far-field steering atoms on a uniform grid in `u = sin φ`.
#[derive(Debug, Clone)]
pub struct AngularDictionary {
    pub atoms: CMatrix,
    /// Grid points in sine space, `u_g = −1 + 2g/G`.
    pub grid: Vec<f64>,
}

impl AngularDictionary {
    pub fn new(geom: &ArrayGeometry, size: usize) -> Result<Self> {
        let n = geom.len();
        if size < n {
            return Err(Error::InvalidParameter(format!("dictionary size {size} is below array size {n}")));
        }
        let k0 = geom.k0();
        let grid: Vec<f64> = (0..size).map(|g| -1.0 + 2.0 * g as f64 / size as f64).collect();
        let mut atoms =
            CMatrix::from_fn(n, size, |i, g| Complex64::from_polar(1.0, k0 * geom.positions[i][0] * grid[g]));
        for mut col in atoms.column_iter_mut() {
            let norm = col.norm();
            col /= Complex64::new(norm, 0.0);
        }
        Ok(Self { atoms, grid })
    }

    /// The default `4N`-atom grid.
    pub fn oversampled(geom: &ArrayGeometry) -> Self {
        Self::new(geom, 4 * geom.len()).expect("4N atoms always cover N antennas")
    }

    pub fn len(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.ncols() == 0
    }
}

#[derive(Debug, Clone)]
pub struct OmpResult {
    pub estimate: CVector,
    pub support: Vec<usize>,
    /// Residual norm after each iteration, starting with `‖y‖`.
    pub residual_norms: Vec<f64>,
}

/// Orthogonal matching pursuit with `n_paths` greedy selections.
pub fn omp_estimate(y: &CVector, dict: &AngularDictionary, n_paths: usize) -> Result<OmpResult> {
    let n = y.len();
    if dict.atoms.nrows() != n {
        return Err(Error::DimensionMismatch(format!("dictionary rows {} vs {n} observations", dict.atoms.nrows())));
    }
    if n_paths > n {
        return Err(Error::InvalidParameter(format!("n_paths {n_paths} exceeds {n} observations")));
    }
    let mut excluded = vec![false; dict.len()];
    let mut support: Vec<usize> = Vec::new();
    let mut estimate = CVector::zeros(n);
    let mut residual = y.clone();
    let mut residual_norms = vec![residual.norm()];
    let floor = 1e-14 * y.norm();
    for _ in 0..n_paths {
        if residual.norm() <= floor {
            break;
        }
        let corr = dict.atoms.adjoint() * &residual;
        let best = (0..dict.len()).filter(|&g| !excluded[g]).max_by(|&a, &b| corr[a].norm().total_cmp(&corr[b].norm()));
        let Some(g) = best else { break };
        excluded[g] = true;
        support.push(g);
        match support_fit(y, dict, &support) {
            Some(fit) => {
                estimate = fit;
                residual = y - &estimate;
            }
            None => {
                // linearly dependent on the current support
                support.pop();
            }
        }
        residual_norms.push(residual.norm());
    }
    Ok(OmpResult { estimate, support, residual_norms })
}

/// Least-squares projection of `y` onto the span of the supported atoms.
fn support_fit(y: &CVector, dict: &AngularDictionary, support: &[usize]) -> Option<CVector> {
    let a = dict.atoms.select_columns(support);
    let gram = a.adjoint() * &a;
    let scale = gram.diagonal().iter().map(|v| v.re).fold(0.0, f64::max);
    let chol = factor(gram).ok()?;
    // reject near-singular supports whose fit would amplify round-off
    let l = chol.l_dirty();
    let min_pivot = (0..l.nrows()).map(|i| l[(i, i)].re).fold(f64::INFINITY, f64::min);
    if min_pivot * min_pivot < 1e-10 * scale {
        return None;
    }
    let coef = chol.solve(&(a.adjoint() * y));
    Some(a * coef)
}

#[derive(Debug, Clone)]
pub struct AmpResult {
    pub estimate: CVector,
    pub iterations: usize,
    /// False when the residual blew up and an earlier iterate was returned.
    pub converged: bool,
}

/// Unitary DFT `F[n,k] = e^{i2πnk/N}/√N`.
pub fn unitary_dft(n: usize) -> CMatrix {
    let s = 1.0 / (n as f64).sqrt();
    CMatrix::from_fn(n, n, |a, b| {
        let phase = 2.0 * std::f64::consts::PI * ((a * b) % n) as f64 / n as f64;
        Complex64::from_polar(s, phase)
    })
}

fn soft_threshold(u: Complex64, theta: f64) -> Complex64 {
    let m = u.norm();
    if m > theta {
        u * ((m - theta) / m)
    } else {
        Complex64::new(0.0, 0.0)
    }
}

/// Approximate message passing in the DFT angular domain with complex soft
/// thresholding at `λσ_t`, `σ_t = ‖z_t‖/√N`.
pub fn amp_estimate(y: &CVector, shrink_lambda: f64, n_iter: usize) -> Result<AmpResult> {
    if n_iter == 0 {
        return Err(Error::InvalidParameter("AMP needs at least one iteration".into()));
    }
    let n = y.len();
    let f = unitary_dft(n);
    let fh = f.adjoint();
    let mut x = CVector::zeros(n);
    let mut z = y.clone();
    let z0 = z.norm();
    let mut best = (z0, x.clone());
    for t in 0..n_iter {
        let sigma = z.norm() / (n as f64).sqrt();
        let theta = shrink_lambda * sigma;
        let u = &x + &fh * &z;
        let mut onsager = 0.0;
        let next = DVector::from_iterator(
            n,
            u.iter().map(|&v| {
                let m = v.norm();
                if m > theta {
                    onsager += 1.0 - theta / (2.0 * m);
                }
                soft_threshold(v, theta)
            }),
        );
        let z_next = y - &f * &next + &z * Complex64::new(onsager / n as f64, 0.0);
        let z_norm = z_next.norm();
        if !z_norm.is_finite() || z_norm > 10.0 * z0.max(f64::MIN_POSITIVE) {
            return Ok(AmpResult { estimate: &f * best.1, iterations: t + 1, converged: false });
        }
        x = next;
        z = z_next;
        let fit = (y - &f * &x).norm();
        if fit <= best.0 {
            best = (fit, x.clone());
        }
    }
    Ok(AmpResult { estimate: f * x, iterations: n_iter, converged: true })
}
