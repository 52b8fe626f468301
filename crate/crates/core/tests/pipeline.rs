use std::io::Cursor;

use modelavg::criteria::{model_prior_term, subset_penalty};
use modelavg::data::{load_dataset, write_dataset};
use modelavg::oracle::{bpic_exact, gaussian_quadratic_expectation};
use modelavg::pipeline::{average, evaluate_candidate, evaluate_candidates, sweep, QuantitySpec, RunOptions};
use modelavg::synth::{gen_exp, gen_poly, ExpSynthConfig, PolySynthConfig};
use modelavg::*;
use proptest::prelude::*;

fn poly_models() -> Vec<ModelSpec> {
    (0..=3)
        .map(|d| Family::Polynomial { degree: d, scale: 16.0 }.build(None, None, None, 0.25).unwrap())
        .collect()
}

// For a linear model with a Gaussian prior the posterior is exactly
// N(a*, Σ*), so E[χ²_prior] has a closed form to hold the sampler against.
#[test]
fn bpic_exact_matches_gaussian_posterior() {
    let ds = gen_poly(&PolySynthConfig { n: 80, seed: 5, ..Default::default() }).unwrap();
    let part = SubsetPartition::drop_leading(ds.d(), 2).unwrap();
    let model = Family::Polynomial { degree: 2, scale: 16.0 }.build(None, None, None, 1.0).unwrap();
    let ctx = ChiSqContext::new(&ds, part, model).unwrap();
    let (res, _) = fit(&ctx, &FitOptions::default()).unwrap();
    let prior = &ctx.model.prior;
    let xi = res.a_star_vec() - prior.mean();
    let e_prior = gaussian_quadratic_expectation(&xi, &res.sigma_star_mat(), prior.inv_cov());
    let closed = res.chi2_aug - e_prior
        + 3.0 * ctx.k() as f64
        + subset_penalty(ICKind::Bpic, ctx.d_cut(), ctx.n())
        + model_prior_term(1.0);
    let mc = bpic_exact(&ctx, &res, &MCConfig { n_draws: 50_000, seed: 11, scale: 1.5 }).unwrap();
    let z = (mc.value - closed) / mc.mc_sigma;
    assert!(z.abs() < 4.0, "MC {} ± {} vs closed form {closed}", mc.value, mc.mc_sigma);
}

#[test]
fn comma_and_space_separated_files_agree() {
    let spaced = "#coords 1 2 3\n1.0 2.0 3.0\n\n# note\n4 5 6\n7\t8 9\n";
    let commas = "#coords 1,2,3\n1.0,2.0,3.0\n4, 5, 6\n7,8,9\n";
    let a = load_dataset(Cursor::new(spaced), None).unwrap();
    let b = load_dataset(Cursor::new(commas), None).unwrap();
    assert_eq!(a.coords(), b.coords());
    assert_eq!(a.samples(), b.samples());
    assert_eq!((a.n(), a.d()), (3, 3));
}

#[test]
fn ragged_rows_are_rejected() {
    assert!(load_dataset(Cursor::new("1 2 3\n4 5\n"), None).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dataset_round_trips_exactly(
        n in 3usize..6,
        d in 1usize..5,
        vals in prop::collection::vec(-1e6f64..1e6, 30),
    ) {
        let coords: Vec<f64> = (0..d).map(|j| j as f64 * 0.5 + 1.0).collect();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..d).map(|j| vals[i * d + j]).collect()).collect();
        let ds = DataSet::from_rows(coords, &rows).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let back = load_dataset(Cursor::new(buf), None).unwrap();
        prop_assert_eq!(back.coords(), ds.coords());
        prop_assert_eq!(back.samples(), ds.samples());
    }
}

#[test]
fn batch_evaluation_matches_one_at_a_time() {
    let ds = gen_poly(&PolySynthConfig { n: 60, seed: 2, ..Default::default() }).unwrap();
    let parts: Vec<_> = (0..3).map(|c| SubsetPartition::drop_leading(ds.d(), c).unwrap()).collect();
    let cands = sweep(&poly_models(), &parts);
    let opts = RunOptions::default();
    let batch = evaluate_candidates(&ds, &cands, &opts);
    assert_eq!(batch.len(), cands.len());
    for (c, b) in cands.iter().zip(&batch) {
        let one = evaluate_candidate(&ds, c, &opts);
        assert_eq!(serde_json::to_string(&one).unwrap(), serde_json::to_string(b).unwrap());
    }
}

#[test]
fn averages_do_not_depend_on_candidate_order() {
    let ds = gen_poly(&PolySynthConfig { n: 60, seed: 4, ..Default::default() }).unwrap();
    let parts: Vec<_> = (0..3).map(|c| SubsetPartition::drop_leading(ds.d(), c).unwrap()).collect();
    let mut cands = sweep(&poly_models(), &parts);
    let opts = RunOptions::default();
    let q = [QuantitySpec { name: "a0".into(), optional: false }];
    let fwd = evaluate_candidates(&ds, &cands, &opts);
    cands.reverse();
    let rev = evaluate_candidates(&ds, &cands, &opts);
    for kind in ICKind::ALL {
        let a = average(&fwd, kind, &q).unwrap();
        let b = average(&rev, kind, &q).unwrap();
        for (id, w) in a.weights.ids.iter().zip(&a.weights.weights) {
            let j = b.weights.ids.iter().position(|x| x == id).unwrap();
            assert!((w - b.weights.weights[j]).abs() < 1e-12, "{kind} {id}");
        }
        let (ea, eb) = (a.quantities["a0"].estimate.as_ref().unwrap(), b.quantities["a0"].estimate.as_ref().unwrap());
        assert!((ea.mean - eb.mean).abs() < 1e-12 && (ea.sigma - eb.sigma).abs() < 1e-12, "{kind}");
    }
}

#[test]
fn generators_are_seeded() {
    let p = |seed| gen_poly(&PolySynthConfig { n: 20, seed, ..Default::default() }).unwrap();
    assert_eq!(p(1).samples(), p(1).samples());
    assert_ne!(p(1).samples(), p(2).samples());
    let e = |seed| gen_exp(&ExpSynthConfig { n: 20, seed, ..Default::default() }).unwrap();
    assert_eq!(e(1).samples(), e(1).samples());
    assert_ne!(e(1).samples(), e(2).samples());
}

#[test]
fn poly_generator_is_unbiased() {
    let cfg = PolySynthConfig { n: 20_000, seed: 9, ..Default::default() };
    let ds = gen_poly(&cfg).unwrap();
    let stats = compute_stats(&ds, &SubsetPartition::full(ds.d())).unwrap();
    let se = stats.std_errors();
    for (j, &x) in ds.coords().iter().enumerate() {
        let z = (stats.mean[j] - cfg.truth(x)) / se[j];
        assert!(z.abs() < 5.0, "x = {x}: z = {z}");
    }
}
