//! Kernel-matrix assembly, Gaussian-process posterior and the two-stage
//! EIT-GPR channel inference.
//!
//! Rows and columns of every matrix follow the order of the [`SampleSet`]
//! they were built from. Assembly evaluates the 3×3 kernel once per distinct
//! space-time displacement and projects it onto each polarization pair, so a
//! uniform array costs `O(N)` kernel evaluations instead of `O(N²)`.

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{check_unit, kernel_from_w, kernel_with_grad_from_w, project, KernelParams, Matrix3C, Vec3};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Weight-sum tolerance for [`MixedKernel`].
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Unique displacements beyond this count are evaluated on the rayon pool.
const PARALLEL_THRESHOLD: usize = 512;

/// One observation or prediction site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacetimeSample {
    pub position: Vec3,
    pub time: f64,
    pub polarization: Vec3,
}

impl SpacetimeSample {
    pub fn new(position: Vec3, time: f64, polarization: Vec3) -> Result<Self> {
        check_unit(&polarization)?;
        if !position.iter().all(|v| v.is_finite()) || !time.is_finite() {
            return Err(Error::InvalidParameter("sample coordinates must be finite".into()));
        }
        Ok(Self { position, time, polarization })
    }

    pub fn y_polarized(position: Vec3, time: f64) -> Self {
        Self { position, time, polarization: Vec3::y() }
    }
}

/// Ordered, non-empty collection of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet(Vec<SpacetimeSample>);

impl SampleSet {
    pub fn new(samples: Vec<SpacetimeSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParameter("sample set must be non-empty".into()));
        }
        for s in &samples {
            check_unit(&s.polarization)?;
        }
        Ok(Self(samples))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[SpacetimeSample] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SpacetimeSample> {
        self.0.iter()
    }

    /// Reorders the samples; `order[i]` is the old index placed at position `i`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        Self::new(order.iter().map(|&i| self.0[i]).collect())
    }
}

/// Convex combination of EM sub-kernels sharing one channel energy.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedKernel {
    sub_params: Vec<KernelParams>,
    weights: Vec<f64>,
}

impl MixedKernel {
    pub fn new(sub_params: Vec<KernelParams>, weights: Vec<f64>) -> Result<Self> {
        if sub_params.is_empty() {
            return Err(Error::InvalidParameter("mixed kernel needs at least one sub-kernel".into()));
        }
        if sub_params.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} sub-kernels but {} weights",
                sub_params.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::InvalidParameter("weights must be non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidParameter(format!("weights sum to {total}, expected 1")));
        }
        let sigma2 = sub_params[0].sigma2;
        for p in &sub_params {
            p.validate()?;
            if p.sigma2 != sigma2 {
                return Err(Error::InvalidParameter("sub-kernels must share sigma2".into()));
            }
        }
        Ok(Self { sub_params, weights })
    }

    pub fn single(params: KernelParams) -> Self {
        Self { sub_params: vec![params], weights: vec![1.0] }
    }

    pub fn sub_params(&self) -> &[KernelParams] {
        &self.sub_params
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sigma2(&self) -> f64 {
        self.sub_params[0].sigma2
    }

    pub fn len(&self) -> usize {
        self.sub_params.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Dense Hermitian kernel matrix, optionally carrying a noise diagonal.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub matrix: CMatrix,
    pub noise_var: f64,
}

impl KernelMatrix {
    pub fn noisy(&self) -> bool {
        self.noise_var > 0.0
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Hash key merging displacements that differ only by round-off
/// (`i·d − j·d` is not bit-identical across pairs with equal `i − j`).
/// The quanta sit far below any physically meaningful scale.
fn displacement_key(r: &Vec3, dt: f64) -> [u64; 4] {
    const STEPS_PER_METRE: f64 = 1e15;
    const STEPS_PER_SECOND: f64 = 1e17;
    // adding 0.0 folds -0.0 into +0.0
    [
        (r[0] * STEPS_PER_METRE).round() + 0.0,
        (r[1] * STEPS_PER_METRE).round() + 0.0,
        (r[2] * STEPS_PER_METRE).round() + 0.0,
        (dt * STEPS_PER_SECOND).round() + 0.0,
    ]
    .map(f64::to_bits)
}

/// Distinct displacements between two sample lists, with the entry → displacement map.
#[derive(Debug, Clone)]
pub(crate) struct PairPlan {
    rows: Vec<SpacetimeSample>,
    cols: Vec<SpacetimeSample>,
    symmetric: bool,
    displacements: Vec<(Vec3, f64)>,
    /// (row, col, displacement index); upper triangle only when symmetric
    entries: Vec<(usize, usize, usize)>,
}

impl PairPlan {
    pub fn symmetric(samples: &SampleSet) -> Self {
        Self::build(samples.as_slice(), samples.as_slice(), true)
    }

    pub fn cross(rows: &SampleSet, cols: &SampleSet) -> Self {
        Self::build(rows.as_slice(), cols.as_slice(), false)
    }

    fn build(rows: &[SpacetimeSample], cols: &[SpacetimeSample], symmetric: bool) -> Self {
        let mut lookup: HashMap<[u64; 4], usize> = HashMap::new();
        let mut displacements = Vec::new();
        let mut entries = Vec::with_capacity(rows.len() * cols.len());
        for (i, a) in rows.iter().enumerate() {
            let start = if symmetric { i } else { 0 };
            for (j, b) in cols.iter().enumerate().skip(start) {
                let r = a.position - b.position;
                let dt = a.time - b.time;
                let key = displacement_key(&r, dt);
                let idx = *lookup.entry(key).or_insert_with(|| {
                    displacements.push((r, dt));
                    displacements.len() - 1
                });
                entries.push((i, j, idx));
            }
        }
        Self { rows: rows.to_vec(), cols: cols.to_vec(), symmetric, displacements, entries }
    }

    #[cfg(test)]
    pub fn unique_count(&self) -> usize {
        self.displacements.len()
    }

    fn evaluate<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&Vec3, f64) -> T + Sync,
    {
        if self.displacements.len() > PARALLEL_THRESHOLD {
            self.displacements.par_iter().map(|(r, dt)| f(r, *dt)).collect()
        } else {
            self.displacements.iter().map(|(r, dt)| f(r, *dt)).collect()
        }
    }

    /// Projects per-displacement 3×3 blocks into an `rows × cols` matrix.
    fn fill(&self, blocks: &[Matrix3C]) -> Result<CMatrix> {
        let mut m = CMatrix::zeros(self.rows.len(), self.cols.len());
        for &(i, j, idx) in &self.entries {
            let mut v = project(&blocks[idx], &self.rows[i].polarization, &self.cols[j].polarization);
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::NonFiniteKernel { row: i, col: j });
            }
            if self.symmetric {
                if i == j {
                    v.im = 0.0;
                } else {
                    m[(j, i)] = v.conj();
                }
            }
            m[(i, j)] = v;
        }
        Ok(m)
    }

    pub fn kernel(&self, p: &KernelParams) -> Result<CMatrix> {
        let origin = Vec3::zeros();
        let blocks = self.evaluate(|r, dt| kernel_from_w(&p.scaled_displacement(r, dt, &origin, 0.0), p));
        self.fill(&blocks)
    }

    /// Noiseless sub-kernel matrix and its three `μ(k)` derivatives.
    pub fn kernel_with_grad(&self, p: &KernelParams) -> Result<(CMatrix, [CMatrix; 3])> {
        let origin = Vec3::zeros();
        let evals = self.evaluate(|r, dt| kernel_with_grad_from_w(&p.scaled_displacement(r, dt, &origin, 0.0), p));
        let values: Vec<Matrix3C> = evals.iter().map(|e| e.value).collect();
        let value = self.fill(&values)?;
        let mut grads: [CMatrix; 3] = std::array::from_fn(|_| CMatrix::zeros(0, 0));
        for (k, g) in grads.iter_mut().enumerate() {
            let blocks: Vec<Matrix3C> = evals.iter().map(|e| e.grad_mu[k]).collect();
            *g = self.fill(&blocks)?;
        }
        Ok((value, grads))
    }

    pub fn mixed(&self, k: &MixedKernel) -> Result<CMatrix> {
        let mut acc = CMatrix::zeros(self.rows.len(), self.cols.len());
        for (p, &w) in k.sub_params.iter().zip(&k.weights) {
            if w == 0.0 {
                continue;
            }
            acc += self.kernel(p)? * Complex64::new(w, 0.0);
        }
        Ok(acc)
    }
}

pub(crate) fn add_noise(m: &mut CMatrix, noise_var: f64) {
    for i in 0..m.nrows() {
        m[(i, i)] += Complex64::new(noise_var, 0.0);
    }
}

pub(crate) fn factor(m: CMatrix) -> Result<Cholesky<Complex64, Dyn>> {
    let n = m.nrows();
    Cholesky::new(m).ok_or_else(|| {
        Error::NotPositiveDefinite(format!(
            "Cholesky factorization of {n}x{n} kernel matrix failed; rank deficient or indefinite"
        ))
    })
}

/// Assembles `K_αα' = Σ_s w_s p_αᵀ K_EM(α; α' | θ_s) p_α' + σ_ε² δ_αα'`.
pub fn assemble_kernel_matrix(samples: &SampleSet, kernel: &MixedKernel, noise_var: f64) -> Result<KernelMatrix> {
    if !(noise_var >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise variance must be >= 0, got {noise_var}")));
    }
    let mut matrix = PairPlan::symmetric(samples).mixed(kernel)?;
    add_noise(&mut matrix, noise_var);
    Ok(KernelMatrix { matrix, noise_var })
}

/// Cross-covariance `W_βα = p_βᵀ K(β; α) p_α` between prediction and evidence sets.
pub fn cross_kernel_matrix(predict: &SampleSet, evidence: &SampleSet, kernel: &MixedKernel) -> Result<CMatrix> {
    PairPlan::cross(predict, evidence).mixed(kernel)
}

/// Posterior mean and variance over the prediction set.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub mean: CVector,
    pub variance: DVector<f64>,
}

fn check_len(y: &CVector, samples: &SampleSet) -> Result<()> {
    if y.len() != samples.len() {
        return Err(Error::DimensionMismatch(format!("{} observations for {} samples", y.len(), samples.len())));
    }
    Ok(())
}

/// Zero-mean GP posterior at `predict` given observations `y` at `evidence`.
pub fn gpr_posterior(
    evidence: &SampleSet,
    y: &CVector,
    predict: &SampleSet,
    kernel: &MixedKernel,
    noise_var: f64,
) -> Result<Posterior> {
    check_len(y, evidence)?;
    let cy = assemble_kernel_matrix(evidence, kernel, noise_var)?;
    let chol = factor(cy.matrix)?;
    let k_ab = cross_kernel_matrix(evidence, predict, kernel)?;
    let alpha = chol.solve(y);
    let mean = k_ab.adjoint() * alpha;

    // var_β = k(β,β) − ‖L⁻¹ k_β‖²
    let mut v = k_ab;
    chol.l_dirty().solve_lower_triangular_unchecked_mut(&mut v);
    let prior = PairPlan::symmetric(predict).mixed(kernel)?;
    let variance = DVector::from_fn(predict.len(), |j, _| {
        let explained: f64 = v.column(j).iter().map(|c| c.norm_sqr()).sum();
        (prior[(j, j)].re - explained).max(0.0)
    });
    Ok(Posterior { mean, variance })
}

/// The two-stage EIT-GPR channel inference: `a = K⁻¹y`, then `ĥ = W a`.
pub fn eit_gpr_estimate(
    evidence: &SampleSet,
    y: &CVector,
    predict: &SampleSet,
    kernel: &MixedKernel,
    noise_var: f64,
) -> Result<CVector> {
    check_len(y, evidence)?;
    // Stage 1
    let k = assemble_kernel_matrix(evidence, kernel, noise_var)?;
    let a = factor(k.matrix)?.solve(y);
    // Stage 2
    let w = cross_kernel_matrix(predict, evidence, kernel)?;
    Ok(w * a)
}

/// Eigenvalues below this are clamped before taking logs.
const EIGEN_FLOOR: f64 = 1e-300;

/// `log det(π e K)` from the eigenvalues of a Hermitian PSD matrix.
pub fn kernel_entropy(k: &KernelMatrix) -> Result<f64> {
    let eig = k.matrix.clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-8 * max.abs() {
        return Err(Error::NotPositiveDefinite(format!(
            "eigenvalue {min:e} is negative beyond tolerance (max {max:e})"
        )));
    }
    let pi_e = std::f64::consts::PI * std::f64::consts::E;
    Ok(eig.iter().map(|&l| (pi_e * l.max(EIGEN_FLOOR)).ln()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ula(n: usize, d: f64) -> SampleSet {
        SampleSet::new((0..n).map(|i| SpacetimeSample::y_polarized(Vec3::new(i as f64 * d, 0.0, 0.0), 0.0)).collect())
            .unwrap()
    }

    fn kernel(mu: [f64; 3]) -> MixedKernel {
        MixedKernel::single(KernelParams::stationary(Vec3::from(mu), 2.0, 73.3).unwrap())
    }

    #[test]
    fn single_sample_matrix() {
        let a = ula(1, 0.04);
        let k = assemble_kernel_matrix(&a, &kernel([0.0, 3.0, 4.0]), 0.25).unwrap();
        let v = k.matrix[(0, 0)];
        assert_eq!(v.im, 0.0);
        assert!(v.re > 0.25);
        let direct = crate::kernel::em_kernel_scalar(
            &a.as_slice()[0],
            &a.as_slice()[0],
            &kernel([0.0, 3.0, 4.0]).sub_params()[0],
        )
        .unwrap();
        assert!((v.re - direct.re - 0.25).abs() < 1e-14);
    }

    #[test]
    fn mixed_with_single_unit_weight_matches_plain() {
        let a = ula(6, 0.03);
        let p = KernelParams::stationary(Vec3::new(1.0, 0.0, 2.0), 1.0, 73.3).unwrap();
        let q = KernelParams::stationary(Vec3::new(-3.0, 0.0, 1.0), 1.0, 73.3).unwrap();
        let plain = assemble_kernel_matrix(&a, &MixedKernel::single(p), 0.1).unwrap();
        let mixed = assemble_kernel_matrix(&a, &MixedKernel::new(vec![p, q], vec![1.0, 0.0]).unwrap(), 0.1).unwrap();
        assert!((plain.matrix - mixed.matrix).norm() < 1e-15);
    }

    #[test]
    fn dedup_matches_direct_evaluation() {
        let a = ula(8, 0.02);
        let p = kernel([2.0, -1.0, 5.0]);
        let plan = PairPlan::symmetric(&a);
        assert_eq!(plan.unique_count(), 8);
        let m = plan.mixed(&p).unwrap();
        for (i, x) in a.iter().enumerate() {
            for (j, z) in a.iter().enumerate() {
                let d = crate::kernel::em_kernel_scalar(x, z, &p.sub_params()[0]).unwrap();
                assert!((m[(i, j)] - d).norm() < 1e-14, "({i},{j})");
            }
        }
    }

    #[test]
    fn scalar_wiener_filter() {
        let a = ula(1, 0.04);
        let k = kernel([0.0; 3]);
        let prior = 2.0 / 3.0;
        let y = CVector::from_element(1, Complex64::new(0.7, -0.2));
        let post = gpr_posterior(&a, &y, &a, &k, 0.5).unwrap();
        let expect = y[0] * (prior / (prior + 0.5));
        assert!((post.mean[0] - expect).norm() < 1e-14);
        assert!((post.variance[0] - prior * 0.5 / (prior + 0.5)).abs() < 1e-14);
    }

    #[test]
    fn noiseless_interpolation() {
        let a = ula(5, 0.05);
        let k = kernel([0.0, 0.0, 1.0]);
        let y = CVector::from_fn(5, |i, _| Complex64::new(i as f64, 1.0 - i as f64));
        let h = eit_gpr_estimate(&a, &y, &a, &k, 0.0).unwrap();
        assert!((h - &y).norm() < 1e-8 * y.norm());
    }

    #[test]
    fn singular_noiseless_kernel_is_reported() {
        let s = SpacetimeSample::y_polarized(Vec3::zeros(), 0.0);
        let a = SampleSet::new(vec![s, s]).unwrap();
        let y = CVector::from_element(2, Complex64::new(1.0, 0.0));
        let err = eit_gpr_estimate(&a, &y, &a, &kernel([0.0; 3]), 0.0).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite(_)));
    }

    #[test]
    fn entropy_of_scaled_identity() {
        let n = 5;
        let pi_e = std::f64::consts::PI * std::f64::consts::E;
        let k = KernelMatrix { matrix: CMatrix::identity(n, n), noise_var: 0.0 };
        assert!((kernel_entropy(&k).unwrap() - n as f64 * pi_e.ln()).abs() < 1e-12);
        let k = KernelMatrix { matrix: CMatrix::identity(n, n) * Complex64::new(3.0, 0.0), noise_var: 0.0 };
        assert!((kernel_entropy(&k).unwrap() - n as f64 * (pi_e * 3.0).ln()).abs() < 1e-12);
        let mut bad = CMatrix::identity(2, 2);
        bad[(1, 1)] = Complex64::new(-0.5, 0.0);
        assert!(kernel_entropy(&KernelMatrix { matrix: bad, noise_var: 0.0 }).is_err());
    }

    #[test]
    fn mixed_kernel_validation() {
        let p = KernelParams::stationary(Vec3::zeros(), 1.0, 1.0).unwrap();
        let q = KernelParams::stationary(Vec3::zeros(), 2.0, 1.0).unwrap();
        assert!(MixedKernel::new(vec![], vec![]).is_err());
        assert!(MixedKernel::new(vec![p, p], vec![0.7, 0.7]).is_err());
        assert!(MixedKernel::new(vec![p, p], vec![1.2, -0.2]).is_err());
        assert!(MixedKernel::new(vec![p, q], vec![0.5, 0.5]).is_err());
        assert!(MixedKernel::new(vec![p, p], vec![0.25, 0.75]).is_ok());
    }
}
