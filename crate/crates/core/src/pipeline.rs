//! Candidate sweeps and model averages.
//!
//! A candidate is a model together with a data partition. Candidates are
//! fitted and scored independently (in parallel with the `parallel`
//! feature); results are then sorted by `(model name, t_min, kept columns)`
//! so that every downstream table is independent of the input order.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::averaging::{model_average, weights_from_named, AveragedEstimate, WeightTable};
use crate::criteria::{evaluate, ICKind, ICReport};
use crate::data::{DataSet, SubsetPartition};
use crate::error::{Error, Result};
use crate::fitter::{fit, ChiSqContext, FitOptions, FitResult};
use crate::models::ModelSpec;
use crate::oracle::{bpic_exact, ppic_exact, MCConfig};

#[derive(Clone, Debug)]
pub struct Candidate {
    pub model: ModelSpec,
    pub part: SubsetPartition,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub criteria: Vec<ICKind>,
    /// Replace the BPIC and PPIC expansions by Monte-Carlo integration.
    pub exact: Option<MCConfig>,
    pub fit: FitOptions,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { criteria: ICKind::ALL.to_vec(), exact: None, fit: FitOptions::default() }
    }
}

/// Fitted parameter with its one-sigma error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub name: String,
    pub value: f64,
    pub error: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CandidateOutcome {
    pub id: String,
    pub model: String,
    /// Coordinate of the first kept column.
    pub t_min: f64,
    pub kept: Vec<usize>,
    pub d_kept: usize,
    pub d_cut: usize,
    pub k: usize,
    pub n: usize,
    /// Present for converged fits, and for non-converged ones when a best
    /// iterate is available.
    pub fit: Option<FitResult>,
    pub params: Vec<ParamEstimate>,
    pub ics: BTreeMap<ICKind, ICReport>,
    /// Why the candidate carries no criteria, if it failed.
    pub error: Option<String>,
}

impl CandidateOutcome {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }

    pub fn param(&self, name: &str) -> Option<&ParamEstimate> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Order-independent seed for a candidate.
fn candidate_seed(base: u64, model: &str, kept: &[usize]) -> u64 {
    // FNV-1a over the identifying bytes, then mixed with the base seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |b: u8| {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    };
    model.bytes().for_each(&mut eat);
    for &j in kept {
        (j as u64).to_le_bytes().into_iter().for_each(&mut eat);
    }
    let mut z = h ^ base.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn format_coord(t: f64) -> String {
    format!("{t}")
}

/// Fit and score one candidate.
pub fn evaluate_candidate(ds: &DataSet, cand: &Candidate, opts: &RunOptions) -> CandidateOutcome {
    let kept = cand.part.kept().to_vec();
    let t_min = ds.coords().get(kept[0]).copied().unwrap_or(f64::NAN);
    let mut out = CandidateOutcome {
        id: format!("{}@{}", cand.model.name, format_coord(t_min)),
        model: cand.model.name.clone(),
        t_min,
        d_kept: cand.part.d_kept(),
        d_cut: cand.part.cut_count(),
        kept,
        k: cand.model.k(),
        n: ds.n(),
        fit: None,
        params: Vec::new(),
        ics: BTreeMap::new(),
        error: None,
    };
    if let Err(e) = score(ds, cand, opts, &mut out) {
        if let Error::NonConvergence { best, .. } = &e {
            out.fit = best.as_deref().cloned();
        }
        log::warn!("candidate {} excluded: {e}", out.id);
        out.error = Some(e.to_string());
        out.ics.clear();
    }
    out
}

fn score(ds: &DataSet, cand: &Candidate, opts: &RunOptions, out: &mut CandidateOutcome) -> Result<()> {
    let ctx = ChiSqContext::new(ds, cand.part.clone(), cand.model.clone())?;
    let seed = candidate_seed(opts.fit.seed, &cand.model.name, cand.part.kept());
    let fit_opts = FitOptions { seed, ..opts.fit.clone() };
    let (res, tensors) = fit(&ctx, &fit_opts)?;
    out.params = cand
        .model
        .param_names()
        .into_iter()
        .enumerate()
        .map(|(j, name)| ParamEstimate { name, value: res.a_star[j], error: res.param_error(j) })
        .collect();
    for &kind in &opts.criteria {
        let report = match (&opts.exact, kind) {
            (Some(mc), ICKind::Bpic | ICKind::Ppic) => {
                let mc = MCConfig { seed: candidate_seed(mc.seed, &cand.model.name, cand.part.kept()), ..mc.clone() };
                let est = if kind == ICKind::Bpic {
                    bpic_exact(&ctx, &res, &mc)?
                } else {
                    ppic_exact(&ctx, &res, &mc)?
                };
                let mut r = evaluate(kind, &ctx, &res, Some(&tensors))?;
                r.value = est.value;
                r.mc_sigma = Some(est.mc_sigma);
                r.truncated = false;
                r.n_truncated_samples = 0;
                r
            }
            _ => evaluate(kind, &ctx, &res, Some(&tensors))?,
        };
        if !report.value.is_finite() {
            return Err(Error::Domain(format!("{kind} is not finite")));
        }
        out.ics.insert(kind, report);
    }
    out.fit = Some(res);
    Ok(())
}

fn outcome_order(a: &CandidateOutcome, b: &CandidateOutcome) -> Ordering {
    a.model
        .cmp(&b.model)
        .then(a.t_min.partial_cmp(&b.t_min).unwrap_or(Ordering::Equal))
        .then(a.kept.cmp(&b.kept))
}

/// Evaluate every candidate and sort the outcomes deterministically.
pub fn evaluate_candidates(ds: &DataSet, cands: &[Candidate], opts: &RunOptions) -> Vec<CandidateOutcome> {
    let mut out = crate::par::map_slice(cands, |c| evaluate_candidate(ds, c, opts));
    out.sort_by(outcome_order);
    out
}

/// Quantity to average, by parameter name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantitySpec {
    pub name: String,
    /// Candidates without the parameter are skipped instead of failing.
    #[serde(default)]
    pub optional: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuantityAverage {
    pub estimate: Option<AveragedEstimate>,
    /// Successful candidates that lack the parameter.
    pub n_missing: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AverageSummary {
    pub kind: ICKind,
    /// Over successful candidates, in outcome order.
    pub weights: WeightTable,
    pub quantities: BTreeMap<String, QuantityAverage>,
}

/// Weights and per-quantity averages for one criterion.
pub fn average(outcomes: &[CandidateOutcome], kind: ICKind, quantities: &[QuantitySpec]) -> Result<AverageSummary> {
    let scored: Vec<&CandidateOutcome> = outcomes.iter().filter(|o| o.ics.contains_key(&kind)).collect();
    let ids = scored.iter().map(|o| o.id.clone()).collect();
    let ics: Vec<f64> = scored.iter().map(|o| o.ics[&kind].value).collect();
    let weights = weights_from_named(ids, &ics)?;
    let mut out = BTreeMap::new();
    for q in quantities {
        let mut means = Vec::new();
        let mut sigmas = Vec::new();
        let mut w = Vec::new();
        let mut missing = 0;
        for (o, &wi) in scored.iter().zip(&weights.weights) {
            match o.param(&q.name) {
                Some(p) => {
                    means.push(p.value);
                    sigmas.push(p.error);
                    w.push(wi);
                }
                None => missing += 1,
            }
        }
        let result = if missing > 0 && !q.optional {
            Err(Error::Config(format!("{missing} candidates have no parameter {:?}", q.name)))
        } else {
            model_average(&means, &sigmas, &w).map(|mut e| {
                e.quantity = q.name.clone();
                e
            })
        };
        let entry = match result {
            Ok(e) => QuantityAverage { estimate: Some(e), n_missing: missing, error: None },
            Err(e) => QuantityAverage { estimate: None, n_missing: missing, error: Some(e.to_string()) },
        };
        out.insert(q.name.clone(), entry);
    }
    Ok(AverageSummary { kind, weights, quantities: out })
}

/// Candidates for every model over every partition.
pub fn sweep(models: &[ModelSpec], parts: &[SubsetPartition]) -> Vec<Candidate> {
    models
        .iter()
        .flat_map(|m| parts.iter().map(move |p| Candidate { model: m.clone(), part: p.clone() }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Family;
    use crate::synth::{gen_poly, PolySynthConfig};

    fn poly_models() -> Vec<ModelSpec> {
        (0..=3)
            .map(|deg| {
                Family::Polynomial { degree: deg, scale: 16.0 }
                    .build(None, None, None, 0.25)
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn permutation_leaves_results_unchanged() {
        let ds = gen_poly(&PolySynthConfig { n: 160, seed: 4, ..Default::default() }).unwrap();
        let parts = vec![SubsetPartition::full(15), SubsetPartition::drop_leading(15, 3).unwrap()];
        let cands = sweep(&poly_models(), &parts);
        let mut rev = cands.clone();
        rev.reverse();
        let opts = RunOptions::default();
        let a = evaluate_candidates(&ds, &cands, &opts);
        let b = evaluate_candidates(&ds, &rev, &opts);
        assert_eq!(a.len(), 8);
        let q = [QuantitySpec { name: "a0".into(), optional: false }];
        for kind in ICKind::ALL {
            let sa = average(&a, kind, &q).unwrap();
            let sb = average(&b, kind, &q).unwrap();
            assert_eq!(sa.weights, sb.weights);
            let (ea, eb) = (&sa.quantities["a0"].estimate, &sb.quantities["a0"].estimate);
            assert_eq!(ea, eb);
            let total: f64 = sa.weights.weights.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_quantity_handling() {
        let ds = gen_poly(&PolySynthConfig { n: 100, seed: 1, ..Default::default() }).unwrap();
        let cands = sweep(&poly_models(), &[SubsetPartition::full(15)]);
        let out = evaluate_candidates(&ds, &cands, &RunOptions::default());
        let req = [QuantitySpec { name: "a2".into(), optional: false }];
        let s = average(&out, ICKind::Baic, &req).unwrap();
        assert!(s.quantities["a2"].error.is_some());
        let opt = [QuantitySpec { name: "a2".into(), optional: true }];
        let s = average(&out, ICKind::Baic, &opt).unwrap();
        assert_eq!(s.quantities["a2"].n_missing, 2);
        assert!(s.quantities["a2"].estimate.is_some());
    }

    #[test]
    fn seeds_depend_on_identity_only() {
        assert_eq!(candidate_seed(1, "exp1", &[2, 3]), candidate_seed(1, "exp1", &[2, 3]));
        assert_ne!(candidate_seed(1, "exp1", &[2, 3]), candidate_seed(1, "exp1", &[3]));
        assert_ne!(candidate_seed(1, "exp1", &[2]), candidate_seed(2, "exp1", &[2]));
    }
}
