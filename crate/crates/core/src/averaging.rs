//! Model weights from information criteria and averaged estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalized model weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    pub ids: Vec<String>,
    pub weights: Vec<f64>,
    /// Candidates with a non-finite criterion, given weight zero.
    pub n_invalid: usize,
}

/// `w ∝ exp(-(IC - min IC)/2)`, normalized. Non-finite entries get weight 0.
pub fn weights_from_ics(ics: &[f64]) -> Result<WeightTable> {
    let ids = (0..ics.len()).map(|i| i.to_string()).collect();
    weights_from_named(ids, ics)
}

pub fn weights_from_named(ids: Vec<String>, ics: &[f64]) -> Result<WeightTable> {
    if ids.len() != ics.len() {
        return Err(Error::Dimension(format!("{} ids for {} criteria", ids.len(), ics.len())));
    }
    let min = ics
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::AllInvalid);
    }
    let raw: Vec<f64> = ics
        .iter()
        .map(|&v| if v.is_finite() { (-(v - min) / 2.0).exp() } else { 0.0 })
        .collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / total).collect();
    let n_invalid = ics.iter().filter(|v| !v.is_finite()).count();
    Ok(WeightTable { ids, weights, n_invalid })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragedEstimate {
    pub quantity: String,
    pub mean: f64,
    pub sigma: f64,
    /// `Σ w σ²`.
    pub stat_var: f64,
    /// `Σ w m² - (Σ w m)²`.
    pub syst_var: f64,
}

/// Weighted average of per-model estimates. Weights are renormalized to sum
/// to one over the entries given.
pub fn model_average(means: &[f64], sigmas: &[f64], weights: &[f64]) -> Result<AveragedEstimate> {
    if means.len() != sigmas.len() || means.len() != weights.len() {
        return Err(Error::Dimension(format!(
            "{} means, {} sigmas, {} weights",
            means.len(),
            sigmas.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::Domain("weights must be non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::AllInvalid);
    }
    let w: Vec<f64> = weights.iter().map(|x| x / total).collect();
    let terms = || means.iter().zip(sigmas).zip(&w).filter(|(_, &wi)| wi > 0.0);
    let mean: f64 = terms().map(|((m, _), wi)| wi * m).sum();
    let stat_var: f64 = terms().map(|((_, s), wi)| wi * s * s).sum();
    // Centered form of Σ w m² - (Σ w m)², never negative.
    let syst_var: f64 = terms().map(|((m, _), wi)| wi * (m - mean).powi(2)).sum();
    Ok(AveragedEstimate {
        quantity: String::new(),
        mean,
        sigma: (stat_var + syst_var).sqrt(),
        stat_var,
        syst_var,
    })
}
