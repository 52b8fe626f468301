//! Augmented chi-squared, posterior-mode fits and derivative tensors.
//!
//! With `W = Σ̂⁻¹` (Hartlap-corrected, kept block) and `r = ȳ - f(a)`:
//!
//! - `χ̂² = rᵀ W r`, `χ̃² = (a - ã)ᵀ P (a - ã)` with `P = Σ̃⁻¹`;
//! - per sample `χ_i² = (y_i - f)ᵀ (W/N) (y_i - f)`, so that the per-sample
//!   gradients sum to the gradient of `χ̂²`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{compute_stats, DataSet, SampleStats, SubsetPartition};
use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, symmetrize, Tensor3};
use crate::models::{ModelDerivs, ModelSpec};

/// Everything needed to evaluate the chi-squared functions of one candidate.
#[derive(Clone, Debug)]
pub struct ChiSqContext {
    pub stats: SampleStats,
    pub model: ModelSpec,
    pub part: SubsetPartition,
    coords: Vec<f64>,
    /// Kept columns of the samples, `N x d_K`.
    samples: DMatrix<f64>,
}

/// Value and derivatives of `χ²_aug` at one point.
#[derive(Clone, Debug)]
struct AugEval {
    value: f64,
    chi2_hat: f64,
    chi2_prior: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
    /// Gauss-Newton part `2 (Jᵀ W J + P)`, always positive definite.
    gn: DMatrix<f64>,
}

impl ChiSqContext {
    pub fn new(ds: &DataSet, part: SubsetPartition, model: ModelSpec) -> Result<Self> {
        let stats = compute_stats(ds, &part)?;
        let coords = part.kept().iter().map(|&j| ds.coords()[j]).collect();
        let samples = ds.samples().select_columns(part.kept());
        Ok(Self { stats, model, part, coords, samples })
    }

    pub fn k(&self) -> usize {
        self.model.k()
    }

    pub fn n(&self) -> usize {
        self.stats.n
    }

    pub fn d_kept(&self) -> usize {
        self.part.d_kept()
    }

    pub fn d_cut(&self) -> usize {
        self.part.cut_count()
    }

    /// Kept coordinates.
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Kept columns of the samples.
    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn predict(&self, a: &DVector<f64>) -> Result<DVector<f64>> {
        self.model.predict(&self.coords, a.as_slice())
    }

    pub fn chi2_hat(&self, a: &DVector<f64>) -> Result<f64> {
        let r = &self.stats.mean - self.predict(a)?;
        Ok(r.dot(&(&self.stats.inv_err_cov * &r)))
    }

    pub fn chi2_prior(&self, a: &DVector<f64>) -> Result<f64> {
        self.check_len(a)?;
        Ok(self.model.prior.chi2(a))
    }

    pub fn chi2_aug(&self, a: &DVector<f64>) -> Result<f64> {
        Ok(self.chi2_hat(a)? + self.chi2_prior(a)?)
    }

    /// `χ_i²(a)` for every sample.
    pub fn chi2_samples(&self, a: &DVector<f64>) -> Result<DVector<f64>> {
        let f = self.predict(a)?;
        let winv = &self.stats.inv_err_cov / self.n() as f64;
        let mut res = self.samples.clone();
        for mut row in res.row_iter_mut() {
            row -= f.transpose();
        }
        let wr = &res * &winv;
        Ok(DVector::from_iterator(
            self.n(),
            (0..self.n()).map(|i| res.row(i).dot(&wr.row(i))),
        ))
    }

    /// `∂χ²_aug/∂a`.
    pub fn gradient(&self, a: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.eval_aug(a, 1)?.grad)
    }

    /// `∂²χ²_aug/∂a∂a`.
    pub fn hessian(&self, a: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.eval_aug(a, 2)?.hess)
    }

    /// `∂³χ²_aug/∂a∂a∂a` (the prior contributes nothing at this order).
    pub fn third(&self, a: &DVector<f64>) -> Result<Tensor3> {
        self.check_len(a)?;
        let md = self.model.model_derivatives(&self.coords, a.as_slice(), 3)?;
        Ok(self.third_from(&md))
    }

    fn check_len(&self, a: &DVector<f64>) -> Result<()> {
        if a.len() != self.k() {
            return Err(Error::Dimension(format!("{} parameters, model has {}", a.len(), self.k())));
        }
        Ok(())
    }

    fn eval_aug(&self, a: &DVector<f64>, order: usize) -> Result<AugEval> {
        self.check_len(a)?;
        let w = &self.stats.inv_err_cov;
        let p = self.model.prior.inv_cov();
        let md = self.model.model_derivatives(&self.coords, a.as_slice(), order.max(1))?;
        let r = &self.stats.mean - &md.values;
        let wr = w * &r;
        let chi2_hat = r.dot(&wr);
        let da = a - self.model.prior.mean();
        let pda = p * &da;
        let chi2_prior = da.dot(&pda);
        let j = &md.jacobian;
        let grad = (pda - j.transpose() * &wr) * 2.0;
        let k = self.k();
        let (hess, gn) = if order >= 2 {
            let gn = symmetrize(&((j.transpose() * w * j + p) * 2.0));
            let mut curv = DMatrix::zeros(k, k);
            for (x, h) in md.hessians.iter().enumerate() {
                curv += h * wr[x];
            }
            (symmetrize(&(&gn - curv * 2.0)), gn)
        } else {
            (DMatrix::zeros(k, k), DMatrix::zeros(k, k))
        };
        Ok(AugEval { value: chi2_hat + chi2_prior, chi2_hat, chi2_prior, grad, hess, gn })
    }

    fn third_from(&self, md: &ModelDerivs) -> Tensor3 {
        let k = self.k();
        let w = &self.stats.inv_err_cov;
        let r = &self.stats.mean - &md.values;
        let wr = w * &r;
        let wj = w * &md.jacobian;
        let mut t = Tensor3::zeros(k);
        for a in 0..k {
            for b in a..k {
                for c in b..k {
                    let mut s = 0.0;
                    for x in 0..self.coords.len() {
                        let h = &md.hessians[x];
                        s += -md.thirds[x].get(a, b, c) * wr[x]
                            + h[(a, b)] * wj[(x, c)]
                            + h[(a, c)] * wj[(x, b)]
                            + h[(b, c)] * wj[(x, a)];
                    }
                    t.set_sym(a, b, c, 2.0 * s);
                }
            }
        }
        t
    }

    /// Derivative tensors at `a` (normally the posterior mode).
    pub fn tensors(&self, a: &DVector<f64>, sigma_star: &DMatrix<f64>) -> Result<DerivTensors> {
        self.check_len(a)?;
        let n = self.n();
        let md = self.model.model_derivatives(&self.coords, a.as_slice(), 3)?;
        let p = self.model.prior.inv_cov();
        let da = a - self.model.prior.mean();
        let g_tilde = (p * &da) * 2.0;
        let h_tilde = p * 2.0;

        let winv = &self.stats.inv_err_cov / n as f64;
        let mut res = self.samples.clone();
        for mut row in res.row_iter_mut() {
            row -= md.values.transpose();
        }
        // Row i of u is Σ⁻¹ (y_i - f).
        let u = &res * &winv;
        let j = &md.jacobian;
        let g_i = (&u * j) * -2.0;
        let base = j.transpose() * &winv * j;
        let h_i = crate::par::map_range(n, |i| {
            let mut h = base.clone();
            for (x, hx) in md.hessians.iter().enumerate() {
                let c = u[(i, x)];
                if c != 0.0 {
                    h -= hx * c;
                }
            }
            symmetrize(&(h * 2.0))
        });
        let mut t = self.third_from(&md);
        t.scale(1.0 / 6.0);
        Ok(DerivTensors {
            g_tilde,
            h_tilde,
            g_i,
            h_i,
            t,
            sigma_star: sigma_star.clone(),
        })
    }
}

/// Posterior mode, parameter covariance and fit quality.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitResult {
    pub a_star: Vec<f64>,
    /// `Σ* = [½ ∂²χ²_aug(a*)]⁻¹`, row-major `k x k`.
    pub sigma_star: Vec<f64>,
    pub chi2_hat: f64,
    /// Prior quadratic form only, without normalization constants.
    pub chi2_prior: f64,
    pub chi2_aug: f64,
    pub q_value: f64,
    pub converged: bool,
    pub n_iter: usize,
    pub grad_norm: f64,
    pub d_kept: usize,
}

impl FitResult {
    pub fn k(&self) -> usize {
        self.a_star.len()
    }

    pub fn a_star_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.a_star)
    }

    pub fn sigma_star_mat(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.k(), self.k(), &self.sigma_star)
    }

    /// One-sigma error of parameter `j`, `sqrt(Σ*_jj)`.
    pub fn param_error(&self, j: usize) -> f64 {
        self.sigma_star[j * self.k() + j].sqrt()
    }
}

/// Derivative tensors at the posterior mode.
#[derive(Clone, Debug)]
pub struct DerivTensors {
    /// `∂χ̃²`.
    pub g_tilde: DVector<f64>,
    /// `∂²χ̃²`.
    pub h_tilde: DMatrix<f64>,
    /// Row `i` is `∂χ_i²`, `N x k`.
    pub g_i: DMatrix<f64>,
    /// `∂²χ_i²` per sample.
    pub h_i: Vec<DMatrix<f64>>,
    /// `⅙ ∂³χ²_aug`.
    pub t: Tensor3,
    /// `Σ*`; the fourth-order `Σ₂*` is `3 Σ*_ab Σ*_cd` and never stored.
    pub sigma_star: DMatrix<f64>,
}

impl DerivTensors {
    /// `∂χ̂² = Σ_i ∂χ_i²`.
    pub fn g_hat(&self) -> DVector<f64> {
        self.g_i.row_sum().transpose()
    }
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Number of extra starts drawn from the prior when the prior-mean start
    /// does not converge.
    pub restarts: usize,
    /// Converged when `max |∂χ²_aug| < grad_tol (1 + χ²_aug)`.
    pub grad_tol: f64,
    /// Seed for the restart draws.
    pub seed: u64,
    /// Starting point; the prior mean when `None`.
    pub start: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iter: 500, restarts: 8, grad_tol: 1e-8, seed: 0, start: None }
    }
}

/// `Q(d/2, χ²/2)`, the regularized upper incomplete gamma function.
pub fn q_value(chi2: f64, dof: usize) -> Result<f64> {
    if !(chi2 >= 0.0) {
        return Err(Error::Domain(format!("chi-squared {chi2} must be non-negative")));
    }
    if dof == 0 {
        return Err(Error::Domain("degrees of freedom must be positive".into()));
    }
    if chi2 == 0.0 {
        return Ok(1.0);
    }
    if chi2.is_infinite() {
        return Ok(0.0);
    }
    Ok(statrs::function::gamma::gamma_ur(dof as f64 / 2.0, chi2 / 2.0))
}

struct Descent {
    a: DVector<f64>,
    eval: AugEval,
    iters: usize,
    converged: bool,
}

fn grad_max(g: &DVector<f64>) -> f64 {
    g.amax()
}

fn is_converged(e: &AugEval, tol: f64) -> bool {
    if grad_max(&e.grad) < tol * (1.0 + e.value) {
        return true;
    }
    // Newton decrement: the predicted remaining decrease of χ²_aug. Catches
    // optima where rounding keeps the gradient just above the threshold.
    match e.hess.clone().cholesky() {
        Some(ch) => {
            let step = ch.solve(&e.grad);
            step.dot(&e.grad) < 1e-10 * (1.0 + e.value)
        }
        None => false,
    }
}

fn descend(ctx: &ChiSqContext, start: DVector<f64>, opts: &FitOptions) -> Result<Descent> {
    let mut a = start;
    let mut eval = ctx.eval_aug(&a, 2)?;
    if !eval.value.is_finite() {
        return Ok(Descent { a, eval, iters: 0, converged: false });
    }
    let mut lambda = 1e-3;
    let k = ctx.k();
    for iter in 0..opts.max_iter {
        if is_converged(&eval, opts.grad_tol) {
            let (a, eval) = polish(ctx, a, eval);
            return Ok(Descent { a, eval, iters: iter, converged: true });
        }
        loop {
            if lambda > 1e16 {
                // No damping yields a decrease: stuck at (or numerically at)
                // a stationary point.
                let converged = is_converged(&eval, opts.grad_tol);
                return Ok(Descent { a, eval, iters: iter, converged });
            }
            if let Some(step) = damped_step(&eval, lambda, k) {
                let trial = &a + &step;
                if let Ok(te) = ctx.eval_aug(&trial, 2) {
                    if te.value.is_finite() && te.value < eval.value {
                        a = trial;
                        eval = te;
                        lambda = (lambda / 3.0).max(1e-12);
                        break;
                    }
                }
            }
            lambda *= 4.0;
        }
    }
    let converged = is_converged(&eval, opts.grad_tol);
    Ok(Descent { a, eval, iters: opts.max_iter, converged })
}

/// A few undamped Newton steps from a converged point, kept while they do
/// not increase `χ²_aug`. Linear models land on the exact optimum.
fn polish(ctx: &ChiSqContext, mut a: DVector<f64>, mut eval: AugEval) -> (DVector<f64>, AugEval) {
    for _ in 0..3 {
        let Some(ch) = eval.hess.clone().cholesky() else { break };
        let trial = &a - ch.solve(&eval.grad);
        match ctx.eval_aug(&trial, 2) {
            Ok(te) if te.value <= eval.value && grad_max(&te.grad) <= grad_max(&eval.grad) => {
                let done = grad_max(&te.grad) == grad_max(&eval.grad);
                a = trial;
                eval = te;
                if done {
                    break;
                }
            }
            _ => break,
        }
    }
    (a, eval)
}

/// Solve `(H + λ D) δ = -g`, using the exact Hessian when the damped system
/// is positive definite and the Gauss-Newton matrix otherwise.
fn damped_step(e: &AugEval, lambda: f64, k: usize) -> Option<DVector<f64>> {
    for base in [&e.hess, &e.gn] {
        let mut m = base.clone();
        for i in 0..k {
            m[(i, i)] += lambda * e.gn[(i, i)].max(1e-300);
        }
        if let Some(ch) = m.cholesky() {
            let step = ch.solve(&(-&e.grad));
            if step.iter().all(|v| v.is_finite()) {
                return Some(step);
            }
        }
    }
    None
}

fn result_from(ctx: &ChiSqContext, d: &Descent, sigma_star: &DMatrix<f64>) -> Result<FitResult> {
    let k = ctx.k();
    Ok(FitResult {
        a_star: d.a.as_slice().to_vec(),
        sigma_star: (0..k * k).map(|idx| sigma_star[(idx / k, idx % k)]).collect(),
        chi2_hat: d.eval.chi2_hat,
        chi2_prior: d.eval.chi2_prior,
        chi2_aug: d.eval.value,
        q_value: q_value(d.eval.value.max(0.0), ctx.d_kept())?,
        converged: d.converged,
        n_iter: d.iters,
        grad_norm: grad_max(&d.eval.grad),
        d_kept: ctx.d_kept(),
    })
}

/// Minimize `χ²_aug` and evaluate the derivative tensors at the optimum.
///
/// Starts at the prior mean (or `opts.start`); if that does not converge, up
/// to `opts.restarts` starts are drawn from the prior and the converged
/// result with the lowest `χ²_aug` is kept.
pub fn fit(ctx: &ChiSqContext, opts: &FitOptions) -> Result<(FitResult, DerivTensors)> {
    let first = match &opts.start {
        Some(s) => {
            if s.len() != ctx.k() {
                return Err(Error::Dimension(format!(
                    "start of length {} for k = {}",
                    s.len(),
                    ctx.k()
                )));
            }
            DVector::from_column_slice(s)
        }
        None => ctx.model.prior.mean().clone(),
    };
    let mut best = descend(ctx, first, opts)?;
    let mut total_iters = best.iters;
    if !best.converged {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.restarts {
            let start = ctx.model.prior.sample(&mut rng)?;
            let d = descend(ctx, start, opts)?;
            total_iters += d.iters;
            let better = match (d.converged, best.converged) {
                (true, false) => true,
                (false, true) => false,
                _ => d.eval.value < best.eval.value,
            };
            if better {
                best = d;
            }
            if best.converged {
                break;
            }
        }
    }
    let half_hess = &best.eval.hess * 0.5;
    let sigma = spd_inverse(&half_hess);
    if !best.converged {
        let placeholder = sigma.clone().unwrap_or_else(|| DMatrix::from_element(ctx.k(), ctx.k(), f64::NAN));
        let mut res = result_from(ctx, &best, &placeholder)?;
        res.n_iter = total_iters;
        log::warn!(
            "{} on {} kept points did not converge (gradient {:.3e})",
            ctx.model.name,
            ctx.d_kept(),
            res.grad_norm
        );
        return Err(Error::NonConvergence {
            iterations: total_iters,
            grad_norm: res.grad_norm,
            best: Some(Box::new(res)),
        });
    }
    let sigma_star = sigma.ok_or(Error::SingularHessian)?;
    let mut res = result_from(ctx, &best, &sigma_star)?;
    res.n_iter = total_iters;
    let tensors = ctx.tensors(&best.a, &sigma_star)?;
    Ok((res, tensors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Family;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn noisy_poly(n: usize, seed: u64) -> DataSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (1..=6).map(f64::from).collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                xs.iter()
                    .map(|x| 1.0 + 0.5 * x + 0.3 * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        DataSet::from_rows(xs, &rows).unwrap()
    }

    #[test]
    fn q_value_edges() {
        assert_eq!(q_value(0.0, 4).unwrap(), 1.0);
        assert!(q_value(-1.0, 4).is_err());
        let q = q_value(28.85, 15).unwrap();
        assert!((q - 0.0168).abs() < 1e-3, "{q}");
    }

    #[test]
    fn one_dim_chi2() {
        // ȳ = 3 with a single column; f = a0 = 1.
        let rows = vec![vec![1.0], vec![3.0], vec![5.0], vec![3.0], vec![3.0]];
        let ds = DataSet::from_rows(vec![1.0], &rows).unwrap();
        let m = Family::Polynomial { degree: 0, scale: 1.0 }.build(None, None, None, 1.0).unwrap();
        let ctx = ChiSqContext::new(&ds, SubsetPartition::full(1), m).unwrap();
        let a = DVector::from_vec(vec![1.0]);
        let w = ctx.stats.inv_err_cov[(0, 0)];
        assert!((ctx.chi2_hat(&a).unwrap() - 4.0 * w).abs() < 1e-12);
        let two = DVector::from_vec(vec![-1.0]);
        assert!((ctx.chi2_hat(&two).unwrap() - 4.0 * ctx.chi2_hat(&a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn linear_fit_matches_normal_equations() {
        let ds = noisy_poly(40, 3);
        let m = Family::Polynomial { degree: 2, scale: 4.0 }.build(None, None, None, 1.0).unwrap();
        let ctx = ChiSqContext::new(&ds, SubsetPartition::full(6), m).unwrap();
        let (res, _) = fit(&ctx, &FitOptions::default()).unwrap();
        let md = ctx.model.model_derivatives(ctx.coords(), &[0.0; 3], 1).unwrap();
        let j = md.jacobian;
        let w = &ctx.stats.inv_err_cov;
        let p = ctx.model.prior.inv_cov();
        let lhs = j.transpose() * w * &j + p;
        let rhs = j.transpose() * w * &ctx.stats.mean + p * ctx.model.prior.mean();
        let exact = lhs.clone().lu().solve(&rhs).unwrap();
        for (u, v) in res.a_star.iter().zip(exact.iter()) {
            assert!((u - v).abs() <= 1e-8 * v.abs().max(1e-3), "{u} vs {v}");
        }
        let sigma = res.sigma_star_mat();
        assert!(((sigma * lhs) - DMatrix::identity(3, 3)).abs().max() < 1e-8);
    }

    #[test]
    fn stationarity_at_optimum() {
        let ds = noisy_poly(30, 9);
        let m = Family::Polynomial { degree: 1, scale: 4.0 }.build(None, None, None, 1.0).unwrap();
        let ctx = ChiSqContext::new(&ds, SubsetPartition::full(6), m).unwrap();
        let (_, t) = fit(&ctx, &FitOptions::default()).unwrap();
        let s = &t.g_tilde + t.g_hat();
        assert!(s.amax() < 1e-6 * (1.0 + t.g_tilde.amax()));
    }

    #[test]
    fn noiseless_exponential_recovered() {
        let truth = [2.0, 0.8];
        let ts: Vec<f64> = (1..=10).map(f64::from).collect();
        // Tiny multiplicative jitter keeps the covariance invertible while the
        // mean stays essentially exact.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                ts.iter()
                    .map(|t| {
                        truth[0] * (-truth[1] * t).exp() * (1.0 + 1e-9 * rng.sample::<f64, _>(StandardNormal))
                    })
                    .collect()
            })
            .collect();
        let ds = DataSet::from_rows(ts, &rows).unwrap();
        let m = Family::Exponential { n_states: 1 }.build(None, None, None, 1.0).unwrap();
        let ctx = ChiSqContext::new(&ds, SubsetPartition::full(10), m).unwrap();
        let (res, _) = fit(&ctx, &FitOptions::default()).unwrap();
        assert!((res.a_star[0] - 2.0).abs() < 1e-6, "{:?}", res.a_star);
        assert!((res.a_star[1] - 0.8).abs() < 1e-6, "{:?}", res.a_star);
    }
}
