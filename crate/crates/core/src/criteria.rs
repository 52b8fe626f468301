//! Information criteria for a fitted candidate.
//!
//! Every value includes the data-subset penalty for the `d_C` cut points and
//! the model-prior term `-2 log pr(M)`. BPIC and PPIC use the next-to-leading
//! order Laplace expansion with optimal truncation: a correction is only kept
//! while it is smaller in magnitude than the leading term.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitter::{ChiSqContext, DerivTensors, FitResult};
use crate::linalg::{gradient_skew_contraction, trace_product};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ICKind {
    #[serde(rename = "BAIC")]
    Baic,
    #[serde(rename = "BPIC")]
    Bpic,
    #[serde(rename = "PPIC")]
    Ppic,
    #[serde(rename = "PAIC")]
    Paic,
    #[serde(rename = "ABIC_CV")]
    AbicCv,
}

impl ICKind {
    pub const ALL: [ICKind; 5] = [ICKind::Baic, ICKind::Bpic, ICKind::Ppic, ICKind::Paic, ICKind::AbicCv];

    pub fn name(self) -> &'static str {
        match self {
            ICKind::Baic => "BAIC",
            ICKind::Bpic => "BPIC",
            ICKind::Ppic => "PPIC",
            ICKind::Paic => "PAIC",
            ICKind::AbicCv => "ABIC_CV",
        }
    }
}

impl fmt::Display for ICKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for ICKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.to_ascii_uppercase().replace('-', "_");
        ICKind::ALL
            .into_iter()
            .find(|k| k.name() == up || (up == "ABICCV" && *k == ICKind::AbicCv))
            .ok_or_else(|| Error::Config(format!("unknown information criterion {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ICReport {
    pub kind: ICKind,
    pub value: f64,
    /// The `d_C`-dependent part of `value`.
    pub subset_penalty: f64,
    /// The whole-expansion correction was dropped (BPIC, PAIC).
    pub truncated: bool,
    /// PPIC samples whose per-sample correction was dropped.
    pub n_truncated_samples: usize,
    /// Monte-Carlo standard error when the value came from the oracle.
    #[serde(default)]
    pub mc_sigma: Option<f64>,
}

/// Penalty for `d_C` cut data points.
pub fn subset_penalty(kind: ICKind, d_c: usize, n: usize) -> f64 {
    let dc = d_c as f64;
    match kind {
        ICKind::Baic | ICKind::AbicCv => 2.0 * dc,
        ICKind::Bpic | ICKind::Paic => 3.0 * dc,
        ICKind::Ppic => {
            if d_c == 0 {
                0.0
            } else {
                let nf = n as f64;
                dc + nf * dc * (1.0 / nf).ln_1p()
            }
        }
    }
}

/// `-2 log pr(M)`.
pub fn model_prior_term(model_prior: f64) -> f64 {
    -2.0 * model_prior.ln()
}

fn report(kind: ICKind, base: f64, d_c: usize, n: usize, model_prior: f64) -> ICReport {
    let penalty = subset_penalty(kind, d_c, n);
    ICReport {
        kind,
        value: base + penalty + model_prior_term(model_prior),
        subset_penalty: penalty,
        truncated: false,
        n_truncated_samples: 0,
        mc_sigma: None,
    }
}

/// `χ̂² + 2k + 2d_C`.
pub fn baic(fit: &FitResult, k: usize, d_c: usize, model_prior: f64) -> ICReport {
    report(ICKind::Baic, fit.chi2_hat + 2.0 * k as f64, d_c, 0, model_prior)
}

/// `χ²_aug + 2k + 2d_C`.
pub fn abic_cv(fit: &FitResult, k: usize, d_c: usize, model_prior: f64) -> ICReport {
    report(ICKind::AbicCv, fit.chi2_aug + 2.0 * k as f64, d_c, 0, model_prior)
}

/// NLO correction `-½ tr(H̃ Σ*) + ½ g̃ T Σ₂*` shared by BPIC.
pub fn bpic_correction(t: &DerivTensors) -> f64 {
    -0.5 * trace_product(&t.h_tilde, &t.sigma_star)
        + 0.5 * gradient_skew_contraction(&t.g_tilde, &t.t, &t.sigma_star)
}

/// `χ̂² + correction + 3k + 3d_C`. For nonlinear models the correction is
/// dropped unless `|correction| < χ̂²`.
pub fn bpic(
    fit: &FitResult,
    tensors: Option<&DerivTensors>,
    k: usize,
    d_c: usize,
    model_prior: f64,
    linear: bool,
) -> Result<ICReport> {
    let t = tensors.ok_or(Error::MissingTensors("BPIC"))?;
    let corr = bpic_correction(t);
    let keep = linear || corr.abs() < fit.chi2_hat;
    let base = fit.chi2_hat + if keep { corr } else { 0.0 } + 3.0 * k as f64;
    let mut r = report(ICKind::Bpic, base, d_c, 0, model_prior);
    r.truncated = !keep;
    Ok(r)
}

/// Per-sample corrections `SL_i`.
pub fn ppic_sample_corrections(t: &DerivTensors) -> Vec<f64> {
    let sigma = &t.sigma_star;
    let v = t.t.contract_last_two(sigma);
    (0..t.g_i.nrows())
        .map(|i| {
            let g = t.g_i.row(i).transpose();
            let sg = sigma * &g;
            let quad = g.dot(&sg);
            let tr = trace_product(&t.h_i[i], sigma);
            let skew = 3.0 * v.dot(&sg);
            0.5 * (0.25 * quad - 0.5 * tr) + 0.25 * skew
        })
        .collect()
}

/// `χ̂² + 2k - 2 Σ_{|SL_i|<1} log(1 + SL_i)` plus the PPIC subset penalty.
pub fn ppic(
    fit: &FitResult,
    tensors: Option<&DerivTensors>,
    k: usize,
    d_c: usize,
    n: usize,
    model_prior: f64,
) -> Result<ICReport> {
    let t = tensors.ok_or(Error::MissingTensors("PPIC"))?;
    if t.g_i.nrows() == 0 || t.h_i.len() != t.g_i.nrows() {
        return Err(Error::MissingSamples);
    }
    let sl = ppic_sample_corrections(t);
    let mut sum = 0.0;
    let mut dropped = 0;
    for &s in &sl {
        if s.abs() < 1.0 {
            let arg = 1.0 + s;
            assert!(arg > 0.0, "logarithm argument {arg} must be positive");
            sum += arg.ln();
        } else {
            dropped += 1;
        }
    }
    let mut r = report(ICKind::Ppic, fit.chi2_hat + 2.0 * k as f64 - 2.0 * sum, d_c, n, model_prior);
    r.n_truncated_samples = dropped;
    Ok(r)
}

/// PAIC. Nonlinear models use the truncated form, `χ̂² + 3k` when `k < χ̂²`
/// and `χ̂² + 2k` otherwise; linear models keep the exact
/// `χ̂² + ½ tr(Ĥ Σ*) + 2k` with `½ tr(Ĥ Σ*) = k - ½ tr(H̃ Σ*)`.
pub fn paic(
    fit: &FitResult,
    tensors: Option<&DerivTensors>,
    k: usize,
    d_c: usize,
    model_prior: f64,
    linear: bool,
) -> Result<ICReport> {
    let kf = k as f64;
    let (base, truncated) = if linear {
        let t = tensors.ok_or(Error::MissingTensors("PAIC"))?;
        let half_tr_hat = kf - 0.5 * trace_product(&t.h_tilde, &t.sigma_star);
        (fit.chi2_hat + half_tr_hat + 2.0 * kf, false)
    } else if kf < fit.chi2_hat {
        (fit.chi2_hat + 3.0 * kf, false)
    } else {
        (fit.chi2_hat + 2.0 * kf, true)
    };
    let mut r = report(ICKind::Paic, base, d_c, 0, model_prior);
    r.truncated = truncated;
    Ok(r)
}

/// Evaluate one criterion for a fitted candidate.
pub fn evaluate(
    kind: ICKind,
    ctx: &ChiSqContext,
    fit: &FitResult,
    tensors: Option<&DerivTensors>,
) -> Result<ICReport> {
    let k = ctx.k();
    let d_c = ctx.d_cut();
    let mp = ctx.model.model_prior;
    let linear = ctx.model.is_linear();
    match kind {
        ICKind::Baic => Ok(baic(fit, k, d_c, mp)),
        ICKind::Bpic => bpic(fit, tensors, k, d_c, mp, linear),
        ICKind::Ppic => ppic(fit, tensors, k, d_c, ctx.n(), mp),
        ICKind::Paic => paic(fit, tensors, k, d_c, mp, linear),
        ICKind::AbicCv => Ok(abic_cv(fit, k, d_c, mp)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    use crate::linalg::Tensor3;

    fn fit_with(chi2_hat: f64, chi2_prior: f64) -> FitResult {
        FitResult {
            a_star: vec![0.0],
            sigma_star: vec![1.0],
            chi2_hat,
            chi2_prior,
            chi2_aug: chi2_hat + chi2_prior,
            q_value: 0.5,
            converged: true,
            n_iter: 1,
            grad_norm: 0.0,
            d_kept: 15,
        }
    }

    fn flat_tensors(k: usize, n: usize) -> DerivTensors {
        DerivTensors {
            g_tilde: DVector::zeros(k),
            h_tilde: DMatrix::zeros(k, k),
            g_i: DMatrix::zeros(n, k),
            h_i: vec![DMatrix::zeros(k, k); n],
            t: Tensor3::zeros(k),
            sigma_star: DMatrix::identity(k, k),
        }
    }

    #[test]
    fn baic_table_rows() {
        assert!((baic(&fit_with(28.85, 0.0), 1, 0, 1.0).value - 30.85).abs() < 1e-12);
        assert!((baic(&fit_with(14.23, 0.0), 3, 0, 1.0).value - 20.23).abs() < 1e-12);
        assert_eq!(baic(&fit_with(0.0, 0.0), 0, 0, 1.0).value, 0.0);
    }

    #[test]
    fn subset_penalties() {
        for kind in ICKind::ALL {
            assert_eq!(subset_penalty(kind, 0, 10), 0.0);
        }
        let p = subset_penalty(ICKind::Ppic, 5, 100);
        assert!((p - (5.0 + 500.0 * 1.01f64.ln())).abs() < 1e-12);
        assert!((p - 9.97517).abs() < 1e-5);
        assert!((p - (10.0 - 5.0 / 200.0)).abs() < 1e-3);
        assert_eq!(subset_penalty(ICKind::Bpic, 7, 1), 21.0);
    }

    #[test]
    fn paic_branches() {
        let f = fit_with(10.0, 0.0);
        assert_eq!(paic(&f, None, 2, 0, 1.0, false).unwrap().value, 16.0);
        let g = fit_with(1.0, 0.0);
        let r = paic(&g, None, 2, 0, 1.0, false).unwrap();
        assert_eq!(r.value, 5.0);
        assert!(r.truncated);
    }

    #[test]
    fn abic_cv_arithmetic() {
        assert_eq!(abic_cv(&fit_with(10.0, 0.5), 2, 3, 1.0).value, 20.5);
        let f = fit_with(7.0, 0.0);
        assert_eq!(abic_cv(&f, 2, 1, 1.0).value, baic(&f, 2, 1, 1.0).value);
    }

    #[test]
    fn diffuse_limits() {
        let f = fit_with(12.0, 0.0);
        let t = flat_tensors(2, 5);
        let b = bpic(&f, Some(&t), 2, 1, 1.0, false).unwrap();
        assert_eq!(b.value, 12.0 + 6.0 + 3.0);
        let p = ppic(&f, Some(&t), 2, 0, 5, 1.0).unwrap();
        assert_eq!(p.value, 12.0 + 4.0);
        assert_eq!(p.n_truncated_samples, 0);
        let pa = paic(&f, Some(&t), 2, 1, 1.0, true).unwrap();
        assert_eq!(pa.value, b.value);
    }

    #[test]
    fn missing_inputs() {
        let f = fit_with(1.0, 0.0);
        assert!(matches!(bpic(&f, None, 1, 0, 1.0, true), Err(Error::MissingTensors(_))));
        let t = flat_tensors(1, 0);
        assert!(matches!(ppic(&f, Some(&t), 1, 0, 0, 1.0), Err(Error::MissingSamples)));
    }

    #[test]
    fn bpic_truncates_large_correction() {
        let f = fit_with(1.0, 0.0);
        let mut t = flat_tensors(1, 3);
        t.h_tilde[(0, 0)] = 4.0;
        let trunc = bpic(&f, Some(&t), 1, 0, 1.0, false).unwrap();
        assert!(trunc.truncated);
        assert_eq!(trunc.value, 4.0);
        let lin = bpic(&f, Some(&t), 1, 0, 1.0, true).unwrap();
        assert!(!lin.truncated);
        assert_eq!(lin.value, 1.0 - 2.0 + 3.0);
    }

    #[test]
    fn ppic_counts_dropped_samples() {
        let f = fit_with(5.0, 0.0);
        let mut t = flat_tensors(1, 4);
        // SL = ½ (¼ g² - ½ h) with Σ* = 1.
        t.g_i[(0, 0)] = 4.0; // SL = 2, dropped
        t.h_i[1][(0, 0)] = 8.0; // SL = -2, dropped
        t.h_i[2][(0, 0)] = 1.0; // SL = -0.25
        let r = ppic(&f, Some(&t), 1, 0, 4, 1.0).unwrap();
        assert_eq!(r.n_truncated_samples, 2);
        assert!((r.value - (5.0 + 2.0 - 2.0 * 0.75f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn model_prior_shift() {
        let f = fit_with(3.0, 0.0);
        let flat = baic(&f, 1, 0, 1.0).value;
        let p = baic(&f, 1, 0, 0.25).value;
        assert!((p - flat - (-2.0 * 0.25f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn kind_parsing() {
        for kind in ICKind::ALL {
            assert_eq!(kind.name().parse::<ICKind>().unwrap(), kind);
        }
        assert_eq!("abic-cv".parse::<ICKind>().unwrap(), ICKind::AbicCv);
        assert!("AIC".parse::<ICKind>().is_err());
    }
}
