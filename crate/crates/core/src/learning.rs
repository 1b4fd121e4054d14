//! Maximum-likelihood learning of mixed EM-kernel hyperparameters.
//!
//! The objective is `ℓ = −yᴴK_y⁻¹y − log det K_y` with
//! `K_y = Σ_s w_s K_s + σ_ε²I`. With `a = K_y⁻¹y` and `M = aaᴴ − K_y⁻¹`,
//!
//! ```text
//! ∂ℓ/∂μ_s(k) = w_s Re tr(∂K_s/∂μ_s(k) · M)
//! ∂ℓ/∂w_s    =     Re tr(K_s · M)
//! ```
//!
//! Parameters are updated block-wise (each `μ_s`, then the weight vector)
//! by projected gradient ascent with Armijo backtracking.

use nalgebra::{DVector, Matrix3};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gpr::{add_noise, factor, CMatrix, CVector, MixedKernel, PairPlan, SampleSet};
use crate::kernel::{KernelParams, Vec3};

/// Armijo sufficient-increase parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoParams {
    pub c1: f64,
    pub rho: f64,
    pub initial_step: f64,
    pub max_backtracks: usize,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        Self { c1: 1e-4, rho: 0.5, initial_step: 1.0, max_backtracks: 30 }
    }
}

/// Hyperparameter-learning configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnOptions {
    pub sub_kernels: usize,
    pub n_iter: usize,
    pub k0: f64,
    pub velocity: Vec3,
    pub armijo: ArmijoParams,
    /// Relative objective change below which the ascent stops.
    pub tol: f64,
    /// Per-block step sizes never grow beyond this.
    pub max_step: f64,
    /// Precondition the `μ_s` ascent directions with a BFGS inverse-Hessian
    /// estimate; plain gradient steps otherwise.
    pub quasi_newton: bool,
    /// Trial points with `‖μ_s‖` above this are infeasible. Far beyond it the
    /// `e^{-‖μ‖}`-scaled kernel loses all significant digits of its exponent.
    pub max_concentration: f64,
    /// Independent ascents from rotated initializations; the best objective wins.
    pub starts: usize,
}

impl LearnOptions {
    pub fn new(sub_kernels: usize, n_iter: usize, k0: f64) -> Self {
        Self {
            sub_kernels,
            n_iter,
            k0,
            velocity: Vec3::zeros(),
            armijo: ArmijoParams::default(),
            tol: 1e-8,
            max_step: 1e6,
            quasi_newton: true,
            starts: 1,
            max_concentration: 1e6,
        }
    }
}

/// Iterate of the block ascent.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnState {
    pub iteration: usize,
    pub mus: Vec<Vec3>,
    pub weights: Vec<f64>,
    pub sigma2: f64,
    pub objective: f64,
    /// One step size per `μ_s` block, then one for the weight block.
    pub step_sizes: Vec<f64>,
    /// Inverse-Hessian estimate per `μ_s` block (of −ℓ), if curvature has been observed.
    pub curvature: Vec<Option<Matrix3<f64>>>,
    /// Point and gradient at the previous update of each `μ_s` block.
    previous: Vec<Option<(Vec3, Vec3)>>,
}

#[derive(Debug, Clone)]
pub struct LearnReport {
    pub kernel: MixedKernel,
    pub sigma2: f64,
    /// Objective after initialization and after every sweep.
    pub objective_trace: Vec<f64>,
    /// Euclidean norm of the full gradient at the start of every sweep.
    pub gradient_norms: Vec<f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Set when an evaluation failed mid-run and the last feasible state was kept.
    pub failure: Option<String>,
}

/// Likelihood machinery over a fixed evidence set.
struct Objective<'a> {
    plan: PairPlan,
    y: &'a CVector,
    noise_var: f64,
}

/// `K_y⁻¹` related quantities at one point.
struct Solved {
    value: f64,
    /// `aaᴴ − K_y⁻¹`
    m: CMatrix,
}

fn trace_product_re(a: &CMatrix, b: &CMatrix) -> f64 {
    // Re Σ_ij A_ij B_ji
    let n = a.nrows();
    let mut acc = 0.0;
    for j in 0..n {
        for i in 0..n {
            let (x, z) = (a[(i, j)], b[(j, i)]);
            acc += x.re * z.re - x.im * z.im;
        }
    }
    acc
}

impl<'a> Objective<'a> {
    fn new(samples: &SampleSet, y: &'a CVector, noise_var: f64) -> Result<Self> {
        if y.len() != samples.len() {
            return Err(Error::DimensionMismatch(format!("{} observations for {} samples", y.len(), samples.len())));
        }
        Ok(Self { plan: PairPlan::symmetric(samples), y, noise_var })
    }

    fn combine(&self, subs: &[CMatrix], weights: &[f64]) -> CMatrix {
        let n = self.y.len();
        let mut k = CMatrix::zeros(n, n);
        for (m, &w) in subs.iter().zip(weights) {
            if w != 0.0 {
                k += m * Complex64::new(w, 0.0);
            }
        }
        add_noise(&mut k, self.noise_var);
        k
    }

    fn value(&self, subs: &[CMatrix], weights: &[f64]) -> Result<f64> {
        let chol = factor(self.combine(subs, weights))?;
        let a = chol.solve(self.y);
        finite(-self.y.dotc(&a).re - log_det(&chol))
    }

    fn solve(&self, subs: &[CMatrix], weights: &[f64]) -> Result<Solved> {
        let chol = factor(self.combine(subs, weights))?;
        let a = chol.solve(self.y);
        let value = finite(-self.y.dotc(&a).re - log_det(&chol))?;
        let m = &a * a.adjoint() - chol.inverse();
        Ok(Solved { value, m })
    }
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NotPositiveDefinite("log-likelihood is not finite".into()))
    }
}

fn log_det(chol: &nalgebra::Cholesky<Complex64, nalgebra::Dyn>) -> f64 {
    let l = chol.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>()
}

fn sub_matrices(obj: &Objective, k: &MixedKernel) -> Result<Vec<CMatrix>> {
    k.sub_params().iter().map(|p| obj.plan.kernel(p)).collect()
}

/// `−yᴴK_y⁻¹y − log det K_y`, from one Cholesky factorization.
pub fn log_likelihood(samples: &SampleSet, y: &CVector, k: &MixedKernel, noise_var: f64) -> Result<f64> {
    let obj = Objective::new(samples, y, noise_var)?;
    obj.value(&sub_matrices(&obj, k)?, k.weights())
}

/// `∂ℓ/∂μ_s` for sub-kernel `s`.
pub fn grad_mu(samples: &SampleSet, y: &CVector, k: &MixedKernel, noise_var: f64, s: usize) -> Result<Vec3> {
    if s >= k.len() {
        return Err(Error::InvalidParameter(format!("sub-kernel index {s} out of range")));
    }
    let obj = Objective::new(samples, y, noise_var)?;
    let solved = obj.solve(&sub_matrices(&obj, k)?, k.weights())?;
    let (_, d) = obj.plan.kernel_with_grad(&k.sub_params()[s])?;
    let w = k.weights()[s];
    Ok(Vec3::from_fn(|i, _| w * trace_product_re(&d[i], &solved.m)))
}

/// `∂ℓ/∂w_s` for every sub-kernel.
pub fn grad_weights(samples: &SampleSet, y: &CVector, k: &MixedKernel, noise_var: f64) -> Result<Vec<f64>> {
    let obj = Objective::new(samples, y, noise_var)?;
    let subs = sub_matrices(&obj, k)?;
    let solved = obj.solve(&subs, k.weights())?;
    Ok(subs.iter().map(|m| trace_product_re(m, &solved.m)).collect())
}

/// `∂ℓ/∂σ²` for the shared channel energy.
pub fn grad_sigma2(samples: &SampleSet, y: &CVector, k: &MixedKernel, noise_var: f64) -> Result<f64> {
    let obj = Objective::new(samples, y, noise_var)?;
    let subs = sub_matrices(&obj, k)?;
    let solved = obj.solve(&subs, k.weights())?;
    let mut kh = obj.combine(&subs, k.weights());
    add_noise(&mut kh, -noise_var);
    Ok(trace_product_re(&kh, &solved.m) / k.sigma2())
}

/// `σ̂² = 2Σ|y_α|² / (|A|(1 + σ_ε²))`.
pub fn init_sigma2(y: &CVector, noise_var: f64) -> f64 {
    2.0 * y.iter().map(|v| v.norm_sqr()).sum::<f64>() / (y.len() as f64 * (1.0 + noise_var))
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(w: &[f64]) -> Vec<f64> {
    if w.is_empty() {
        return Vec::new();
    }
    let mut u = w.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    w.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Maps a trial point back onto the feasible set.
pub type Projection = dyn Fn(&[f64]) -> Vec<f64>;

/// Outcome of one backtracking search.
#[derive(Debug, Clone, PartialEq)]
pub enum ArmijoOutcome {
    Accepted {
        point: Vec<f64>,
        value: f64,
        step: f64,
    },
    /// No sufficient increase within the backtrack budget; `step` is the last one tried.
    Rejected {
        step: f64,
    },
    /// The gradient vanished; nothing to do.
    Stationary,
}

/// Backtracking line search for ascent along `direction` from `x`.
///
/// `objective` returns `None` for infeasible trial points, which count as
/// failed tests. With `project`, trial points are mapped back onto the feasible
/// set and the sufficient-increase test uses `⟨∇ℓ, x_trial − x⟩`.
#[allow(clippy::too_many_arguments)]
pub fn armijo_ascent_step<F>(
    x: &[f64],
    value: f64,
    grad: &[f64],
    direction: &[f64],
    step: f64,
    params: &ArmijoParams,
    project: Option<&Projection>,
    mut objective: F,
) -> ArmijoOutcome
where
    F: FnMut(&[f64]) -> Option<f64>,
{
    if grad.iter().all(|&g| g == 0.0) {
        return ArmijoOutcome::Stationary;
    }
    let mut eta = step;
    for _ in 0..=params.max_backtracks {
        let raw: Vec<f64> = x.iter().zip(direction).map(|(xi, di)| xi + eta * di).collect();
        let trial = match project {
            Some(p) => p(&raw),
            None => raw,
        };
        let lin: f64 = grad.iter().zip(trial.iter().zip(x)).map(|(g, (t, xi))| g * (t - xi)).sum();
        if lin > 0.0 {
            if let Some(v) = objective(&trial) {
                if v >= value + params.c1 * lin && v > value {
                    return ArmijoOutcome::Accepted { point: trial, value: v, step: eta };
                }
            }
        }
        eta *= params.rho;
    }
    ArmijoOutcome::Rejected { step: eta / params.rho }
}

/// Initial concentrations: `S` azimuths evenly spread over [−60°, 60°] in the
/// xOz plane, unit norm.
pub fn initial_mus(sub_kernels: usize) -> Vec<Vec3> {
    initial_mus_for_start(sub_kernels, 1, 0)
}

/// Initialization of start `j` out of `starts`: the `S·starts` azimuths evenly
/// spread over [−60°, 60°] are dealt out so that start `j` takes every
/// `starts`-th one, beginning at `j`.
pub fn initial_mus_for_start(sub_kernels: usize, starts: usize, j: usize) -> Vec<Vec3> {
    let total = sub_kernels * starts;
    (0..sub_kernels)
        .map(|s| {
            let idx = s * starts + j;
            let deg = if total == 1 { 0.0 } else { -60.0 + 120.0 * idx as f64 / (total - 1) as f64 };
            let a = deg.to_radians();
            Vec3::new(a.sin(), 0.0, a.cos())
        })
        .collect()
}

fn build_kernel(state: &LearnState, opts: &LearnOptions) -> Result<MixedKernel> {
    let subs = state
        .mus
        .iter()
        .map(|mu| KernelParams::new(*mu, state.sigma2, opts.velocity, opts.k0))
        .collect::<Result<Vec<_>>>()?;
    MixedKernel::new(subs, state.weights.clone())
}

fn params_for(mu: &[f64], state: &LearnState, opts: &LearnOptions) -> Option<KernelParams> {
    let mu = Vec3::new(mu[0], mu[1], mu[2]);
    if mu.norm() > opts.max_concentration {
        return None;
    }
    KernelParams::new(mu, state.sigma2, opts.velocity, opts.k0).ok()
}

/// Gradient-based maximum-likelihood kernel learning over the evidence set.
///
/// `σ̂²` is fixed by [`init_sigma2`]; each sweep updates every `μ_s` and then
/// the weights, each with a freshly evaluated gradient. With several starts
/// the report of the run reaching the highest objective is returned.
pub fn learn_kernel(samples: &SampleSet, y: &CVector, noise_var: f64, opts: &LearnOptions) -> Result<LearnReport> {
    if opts.starts == 0 {
        return Err(Error::InvalidParameter("at least one start is required".into()));
    }
    let mut best: Option<LearnReport> = None;
    for j in 0..opts.starts {
        let init = initial_mus_for_start(opts.sub_kernels.max(1), opts.starts, j);
        let report = learn_from(samples, y, noise_var, opts, init)?;
        let better = best.as_ref().is_none_or(|b| report.objective_trace.last() > b.objective_trace.last());
        if better {
            best = Some(report);
        }
    }
    Ok(best.expect("at least one start ran"))
}

fn learn_from(
    samples: &SampleSet,
    y: &CVector,
    noise_var: f64,
    opts: &LearnOptions,
    init: Vec<Vec3>,
) -> Result<LearnReport> {
    if samples.len() < 2 {
        return Err(Error::InvalidParameter("learning needs at least two samples".into()));
    }
    if opts.sub_kernels == 0 {
        return Err(Error::InvalidParameter("at least one sub-kernel is required".into()));
    }
    let sigma2 = init_sigma2(y, noise_var);
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::Degenerate(format!("estimated channel energy {sigma2} is not positive")));
    }
    let s_count = opts.sub_kernels;
    let obj = Objective::new(samples, y, noise_var)?;
    let mut state = LearnState {
        iteration: 0,
        mus: init,
        weights: vec![1.0 / s_count as f64; s_count],
        sigma2,
        objective: 0.0,
        step_sizes: vec![opts.armijo.initial_step; s_count + 1],
        curvature: vec![None; s_count],
        previous: vec![None; s_count],
    };
    let mut subs = sub_matrices(&obj, &build_kernel(&state, opts)?)?;
    state.objective = obj.value(&subs, &state.weights)?;

    let mut report = LearnReport {
        kernel: build_kernel(&state, opts)?,
        sigma2,
        objective_trace: vec![state.objective],
        gradient_norms: Vec::new(),
        accepted_steps: 0,
        rejected_steps: 0,
        iterations: 0,
        converged: false,
        failure: None,
    };

    let result = (|| -> Result<()> {
        for _ in 0..opts.n_iter {
            let start = state.objective;
            let mut grad_sq = 0.0;
            for s in 0..s_count {
                let step = sweep_mu(&obj, &mut subs, &mut state, opts, s, &mut report)?;
                grad_sq += step;
            }
            if s_count > 1 {
                grad_sq += sweep_weights(&obj, &subs, &mut state, opts, &mut report)?;
            }
            state.iteration += 1;
            report.iterations = state.iteration;
            report.gradient_norms.push(grad_sq.sqrt());
            report.objective_trace.push(state.objective);
            if (state.objective - start).abs() < opts.tol * (1.0 + state.objective.abs()) {
                report.converged = true;
                break;
            }
        }
        Ok(())
    })();
    if let Err(e) = result {
        report.failure = Some(e.to_string());
    }
    report.kernel = build_kernel(&state, opts)?;
    Ok(report)
}

/// One Armijo update of `μ_s`; returns the squared gradient norm of the block.
fn sweep_mu(
    obj: &Objective,
    subs: &mut [CMatrix],
    state: &mut LearnState,
    opts: &LearnOptions,
    s: usize,
    report: &mut LearnReport,
) -> Result<f64> {
    let p = KernelParams::new(state.mus[s], state.sigma2, opts.velocity, opts.k0)?;
    let (_, d) = obj.plan.kernel_with_grad(&p)?;
    let solved = obj.solve(subs, &state.weights)?;
    let w = state.weights[s];
    let grad = Vec3::from_fn(|k, _| w * trace_product_re(&d[k], &solved.m));
    let mu = state.mus[s];
    let (direction, step) = if opts.quasi_newton {
        update_curvature(state, s, &mu, &grad);
        state.previous[s] = Some((mu, grad));
        match state.curvature[s].map(|h| h * grad) {
            Some(dir) if dir.dot(&grad) > 0.0 => (dir, opts.armijo.initial_step),
            _ => {
                state.curvature[s] = None;
                (grad, state.step_sizes[s])
            }
        }
    } else {
        (grad, state.step_sizes[s])
    };
    let g = [grad[0], grad[1], grad[2]];
    let x = [mu[0], mu[1], mu[2]];
    let dir = [direction[0], direction[1], direction[2]];
    let weights = state.weights.clone();
    let mut trial_mat = None;
    let outcome = armijo_ascent_step(&x, solved.value, &g, &dir, step, &opts.armijo, None, |t| {
        let p = params_for(t, state, opts)?;
        let m = obj.plan.kernel(&p).ok()?;
        let keep = std::mem::replace(&mut subs[s], m);
        let v = obj.value(subs, &weights).ok();
        trial_mat = Some(std::mem::replace(&mut subs[s], keep));
        v
    });
    apply(outcome, state, report, s, opts, |state, point| {
        state.mus[s] = Vec3::new(point[0], point[1], point[2]);
        // the most recent trial is the accepted one
        subs[s] = trial_mat.take().expect("accepted trial was evaluated");
    });
    Ok(grad.norm_squared())
}

/// BFGS update of the inverse Hessian of `−ℓ` in block `s` from the step
/// since its previous update. Pairs without positive curvature are skipped.
fn update_curvature(state: &mut LearnState, s: usize, mu: &Vec3, grad: &Vec3) {
    let Some((x_prev, g_prev)) = state.previous[s] else { return };
    let step = mu - x_prev;
    // gradient change of −ℓ
    let change = g_prev - grad;
    let sy = step.dot(&change);
    if !(sy > 1e-12 * step.norm() * change.norm()) {
        return;
    }
    let h = state.curvature[s].unwrap_or_else(|| Matrix3::identity() * (sy / change.norm_squared()));
    let rho = 1.0 / sy;
    let left = Matrix3::identity() - step * change.transpose() * rho;
    state.curvature[s] = Some(left * h * left.transpose() + step * step.transpose() * rho);
}

/// One projected Armijo update of the weight simplex.
fn sweep_weights(
    obj: &Objective,
    subs: &[CMatrix],
    state: &mut LearnState,
    opts: &LearnOptions,
    report: &mut LearnReport,
) -> Result<f64> {
    let solved = obj.solve(subs, &state.weights)?;
    let g: Vec<f64> = subs.iter().map(|m| trace_product_re(m, &solved.m)).collect();
    let slot = state.mus.len();
    let project = |v: &[f64]| project_simplex(v);
    let outcome = armijo_ascent_step(
        &state.weights,
        solved.value,
        &g,
        &g,
        state.step_sizes[slot],
        &opts.armijo,
        Some(&project),
        |t| obj.value(subs, t).ok(),
    );
    apply(outcome, state, report, slot, opts, |state, point| {
        state.weights = point.to_vec();
    });
    Ok(g.iter().map(|v| v * v).sum())
}

fn apply<F: FnOnce(&mut LearnState, &[f64])>(
    outcome: ArmijoOutcome,
    state: &mut LearnState,
    report: &mut LearnReport,
    slot: usize,
    opts: &LearnOptions,
    commit: F,
) {
    match outcome {
        ArmijoOutcome::Accepted { point, value, step } => {
            commit(state, &point);
            state.objective = value;
            state.step_sizes[slot] = (2.0 * step).min(opts.max_step);
            report.accepted_steps += 1;
        }
        ArmijoOutcome::Rejected { step } => {
            state.step_sizes[slot] = step;
            report.rejected_steps += 1;
        }
        ArmijoOutcome::Stationary => {}
    }
}

/// Azimuth `atan(μ_x/μ_z)` in degrees, folded into (−90°, 90°].
pub fn estimate_azimuth(mu: &Vec3) -> Result<f64> {
    if mu.norm() < 1e-6 {
        return Err(Error::Degenerate(format!("concentration |mu| = {:e} has no defined direction", mu.norm())));
    }
    let mut deg = mu[0].atan2(mu[2]).to_degrees();
    if deg > 90.0 {
        deg -= 180.0;
    } else if deg <= -90.0 {
        deg += 180.0;
    }
    Ok(deg)
}

/// The observation vector as an nalgebra column.
pub fn to_cvector(values: &[Complex64]) -> CVector {
    DVector::from_column_slice(values)
}
