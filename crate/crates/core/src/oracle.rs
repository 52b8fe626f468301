//! Importance-sampling evaluation of posterior expectations.
//!
//! Draws come from a Gaussian proposal centred on the posterior mode with
//! covariance `scale * Σ*`. Expectations are self-normalized ratios
//! `Σ w ψ / Σ w` with `w ∝ exp(-½ χ²_aug) / q`. Draws are generated in fixed
//! chunks, each with its own ChaCha stream, so results do not depend on the
//! thread count.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::criteria::{model_prior_term, subset_penalty, ICKind};
use crate::error::{Error, Result};
use crate::fitter::{ChiSqContext, FitResult};
use crate::linalg::trace_product;

const CHUNK: usize = 2048;
const MIN_ESS: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCConfig {
    pub n_draws: usize,
    pub seed: u64,
    /// Proposal covariance is `scale * Σ*`.
    pub scale: f64,
}

impl Default for MCConfig {
    fn default() -> Self {
        Self { n_draws: 200_000, seed: 0, scale: 1.5 }
    }
}

impl MCConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_draws < 1000 {
            return Err(Error::Config(format!("n_draws = {} is below 1000", self.n_draws)));
        }
        if !(self.scale >= 1.0) {
            return Err(Error::Config(format!("proposal scale {} is below 1", self.scale)));
        }
        Ok(())
    }
}

/// Monte-Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub mc_sigma: f64,
}

#[derive(Clone, Debug)]
struct Partial {
    w: f64,
    w2: f64,
    /// Per integrand: `Σ w ψ`, `Σ w² ψ²`, `Σ w² ψ`.
    s1: Vec<f64>,
    s2: Vec<f64>,
    s3: Vec<f64>,
}

impl Partial {
    fn zeros(n: usize) -> Self {
        Self { w: 0.0, w2: 0.0, s1: vec![0.0; n], s2: vec![0.0; n], s3: vec![0.0; n] }
    }

    fn merge(&mut self, o: &Partial) {
        self.w += o.w;
        self.w2 += o.w2;
        for i in 0..self.s1.len() {
            self.s1[i] += o.s1[i];
            self.s2[i] += o.s2[i];
            self.s3[i] += o.s3[i];
        }
    }
}

/// Integrate `n_psi` functions at once. `eval_chunk` maps a chunk of draws to
/// an `n_psi x m` matrix of integrand values.
fn integrate<F>(
    ctx: &ChiSqContext,
    fit: &FitResult,
    cfg: &MCConfig,
    n_psi: usize,
    eval_chunk: F,
) -> Result<Vec<Estimate>>
where
    F: Fn(&[DVector<f64>]) -> Result<DMatrix<f64>> + Sync,
{
    cfg.validate()?;
    let k = ctx.k();
    let center = fit.a_star_vec();
    let cov = fit.sigma_star_mat() * cfg.scale;
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::FactorizationFailure("proposal covariance".into()))?;
    let l = chol.l();
    let chi2_star = ctx.chi2_aug(&center)?;
    let n_chunks = cfg.n_draws.div_ceil(CHUNK);

    let partials = crate::par::map_range(n_chunks, |c| -> Result<Partial> {
        let m = CHUNK.min(cfg.n_draws - c * CHUNK);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(c as u64);
        let mut draws = Vec::with_capacity(m);
        let mut logw = Vec::with_capacity(m);
        for _ in 0..m {
            let z = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
            let a = &center + &l * &z;
            let chi2 = ctx.chi2_aug(&a)?;
            logw.push(-0.5 * (chi2 - chi2_star) + 0.5 * z.norm_squared());
            draws.push(a);
        }
        let psi = eval_chunk(&draws)?;
        let mut p = Partial::zeros(n_psi);
        for (j, lw) in logw.iter().enumerate() {
            let w = if lw.is_finite() { lw.exp() } else { 0.0 };
            if w == 0.0 {
                continue;
            }
            p.w += w;
            p.w2 += w * w;
            for i in 0..n_psi {
                let v = psi[(i, j)];
                p.s1[i] += w * v;
                p.s2[i] += w * w * v * v;
                p.s3[i] += w * w * v;
            }
        }
        Ok(p)
    });
    let mut total = Partial::zeros(n_psi);
    for p in partials {
        total.merge(&p?);
    }
    let ess = if total.w2 > 0.0 { total.w * total.w / total.w2 } else { 0.0 };
    if !(ess >= MIN_ESS) {
        return Err(Error::DegenerateWeights { ess, min: MIN_ESS });
    }
    Ok((0..n_psi)
        .map(|i| {
            let est = total.s1[i] / total.w;
            let var = (total.s2[i] - 2.0 * est * total.s3[i] + est * est * total.w2) / (total.w * total.w);
            Estimate { value: est, mc_sigma: var.max(0.0).sqrt() }
        })
        .collect())
}

/// `∫ exp(-½ χ²_aug) ψ / ∫ exp(-½ χ²_aug)`.
pub fn posterior_ratio<P>(ctx: &ChiSqContext, fit: &FitResult, psi: P, cfg: &MCConfig) -> Result<Estimate>
where
    P: Fn(&DVector<f64>) -> f64 + Sync,
{
    let est = integrate(ctx, fit, cfg, 1, |draws| {
        Ok(DMatrix::from_iterator(1, draws.len(), draws.iter().map(&psi)))
    })?;
    Ok(est[0])
}

/// `χ²_aug(a*) - E[χ̃²] + 3k`, plus the BPIC subset penalty and model-prior
/// term of the candidate.
pub fn bpic_exact(ctx: &ChiSqContext, fit: &FitResult, cfg: &MCConfig) -> Result<Estimate> {
    let prior = &ctx.model.prior;
    let e = posterior_ratio(ctx, fit, |a| prior.chi2(a), cfg)?;
    let value = fit.chi2_aug - e.value
        + 3.0 * ctx.k() as f64
        + subset_penalty(ICKind::Bpic, ctx.d_cut(), ctx.n())
        + model_prior_term(ctx.model.model_prior);
    Ok(Estimate { value, mc_sigma: e.mc_sigma })
}

/// Per-sample ratios `E[exp(-½ (χ_i²(a) - χ_i²(a*)))]`.
pub fn ppic_ratios(ctx: &ChiSqContext, fit: &FitResult, cfg: &MCConfig) -> Result<Vec<Estimate>> {
    let (resid, winv, f_star) = residual_setup(ctx, fit)?;
    let n = ctx.n();
    integrate(ctx, fit, cfg, n, |draws| {
        let (m, c) = chunk_shifts(ctx, draws, &resid, &winv, &f_star)?;
        // χ_i²(a) - χ_i²(a*) = -2 r_i·u + c.
        let mut psi = m;
        for j in 0..draws.len() {
            for i in 0..n {
                psi[(i, j)] = (psi[(i, j)] - 0.5 * c[j]).exp();
            }
        }
        Ok(psi)
    })
}

/// PPIC from the exact per-sample posterior-predictive integrals:
/// `χ̂²(a*) + 2k - 2 Σ_i log ratio_i` plus subset penalty and model-prior
/// term. The model-independent `Σ_i (y_i - ȳ)ᵀ Σ⁻¹ (y_i - ȳ)` is dropped so
/// the value is on the same scale as the expansion.
///
/// The standard error comes from a second pass over the same draws with the
/// linearized integrand `Σ_i ψ_i / ratio_i`, which accounts for the
/// correlation between the per-sample estimates.
pub fn ppic_exact(ctx: &ChiSqContext, fit: &FitResult, cfg: &MCConfig) -> Result<Estimate> {
    let ratios = ppic_ratios(ctx, fit, cfg)?;
    let mut sum = 0.0;
    for (i, r) in ratios.iter().enumerate() {
        if !(r.value > 0.0) {
            return Err(Error::NonPositiveRatio { sample: i, value: r.value });
        }
        sum += r.value.ln();
    }
    let inv: Vec<f64> = ratios.iter().map(|r| 1.0 / r.value).collect();
    let (resid, winv, f_star) = residual_setup(ctx, fit)?;
    let lin = integrate(ctx, fit, cfg, 1, |draws| {
        let (m, c) = chunk_shifts(ctx, draws, &resid, &winv, &f_star)?;
        Ok(DMatrix::from_fn(1, draws.len(), |_, j| {
            (0..inv.len()).map(|i| (m[(i, j)] - 0.5 * c[j]).exp() * inv[i]).sum()
        }))
    })?;
    let value = fit.chi2_hat + 2.0 * ctx.k() as f64 - 2.0 * sum
        + subset_penalty(ICKind::Ppic, ctx.d_cut(), ctx.n())
        + model_prior_term(ctx.model.model_prior);
    Ok(Estimate { value, mc_sigma: 2.0 * lin[0].mc_sigma })
}

/// Per-sample Jensen comparison: `E[log pr(y_i|a)]` against
/// `log E[pr(y_i|a)]`, both relative to `a*`.
#[derive(Clone, Copy, Debug)]
pub struct JensenSample {
    pub mean_log: Estimate,
    pub log_mean: Estimate,
}

pub fn jensen_check(ctx: &ChiSqContext, fit: &FitResult, cfg: &MCConfig) -> Result<Vec<JensenSample>> {
    let (resid, winv, f_star) = residual_setup(ctx, fit)?;
    let n = ctx.n();
    let est = integrate(ctx, fit, cfg, 2 * n, |draws| {
        let (m, c) = chunk_shifts(ctx, draws, &resid, &winv, &f_star)?;
        let mut psi = DMatrix::zeros(2 * n, draws.len());
        for j in 0..draws.len() {
            for i in 0..n {
                let log_pr = m[(i, j)] - 0.5 * c[j];
                psi[(i, j)] = log_pr;
                psi[(n + i, j)] = log_pr.exp();
            }
        }
        Ok(psi)
    })?;
    Ok((0..n)
        .map(|i| {
            let r = est[n + i];
            JensenSample {
                mean_log: est[i],
                log_mean: Estimate { value: r.value.ln(), mc_sigma: r.mc_sigma / r.value },
            }
        })
        .collect())
}

type ResidualSetup = (DMatrix<f64>, DMatrix<f64>, DVector<f64>);

fn residual_setup(ctx: &ChiSqContext, fit: &FitResult) -> Result<ResidualSetup> {
    let f_star = ctx.predict(&fit.a_star_vec())?;
    let mut resid = ctx.samples().clone();
    for mut row in resid.row_iter_mut() {
        row -= f_star.transpose();
    }
    let winv = &ctx.stats.inv_err_cov / ctx.n() as f64;
    Ok((resid, winv, f_star))
}

/// For each draw, `u = Σ⁻¹ (f(a) - f*)` and `c = (f(a) - f*)·u`; returns
/// `R U` (`N x m`, rows = samples) and `c`.
fn chunk_shifts(
    ctx: &ChiSqContext,
    draws: &[DVector<f64>],
    resid: &DMatrix<f64>,
    winv: &DMatrix<f64>,
    f_star: &DVector<f64>,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let d = f_star.len();
    let mut df = DMatrix::zeros(d, draws.len());
    for (j, a) in draws.iter().enumerate() {
        df.set_column(j, &(ctx.predict(a)? - f_star));
    }
    let u = winv * &df;
    let c = (0..draws.len()).map(|j| df.column(j).dot(&u.column(j))).collect();
    Ok((resid * u, c))
}

/// `E[(a - m1)ᵀ Σ1⁻¹ (a - m1)]` for `a ~ N(m0, Σ0)`:
/// `ξᵀ Σ1⁻¹ ξ + tr(Σ0 Σ1⁻¹)` with `ξ = m0 - m1`.
pub fn gaussian_quadratic_expectation(
    xi: &DVector<f64>,
    sigma0: &DMatrix<f64>,
    sigma1_inv: &DMatrix<f64>,
) -> f64 {
    xi.dot(&(sigma1_inv * xi)) + trace_product(sigma0, sigma1_inv)
}
