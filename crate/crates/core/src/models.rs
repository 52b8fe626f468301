//! Model functions, Gaussian parameter priors and the built-in families.
//!
//! A model is evaluated pointwise: `f(x; a)` for one abscissa `x`. The
//! families supply analytic derivatives in `a` up to third order; any other
//! [`ModelFunction`] falls back to central finite differences.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, sym_sqrt, symmetrize, Tensor3};

/// Value and parameter derivatives of a model at a single abscissa.
#[derive(Clone, Debug)]
pub struct PointDerivs {
    pub value: f64,
    pub grad: DVector<f64>,
    /// Zero when fewer than two orders were requested.
    pub hess: DMatrix<f64>,
    /// Zero when fewer than three orders were requested.
    pub third: Tensor3,
}

impl PointDerivs {
    fn zeros(k: usize) -> Self {
        Self {
            value: 0.0,
            grad: DVector::zeros(k),
            hess: DMatrix::zeros(k, k),
            third: Tensor3::zeros(k),
        }
    }
}

pub trait ModelFunction: Send + Sync + Debug {
    fn n_params(&self) -> usize;

    fn param_names(&self) -> Vec<String>;

    fn eval(&self, x: f64, a: &[f64]) -> f64;

    /// Derivatives up to `order` (1..=3). The default uses finite differences
    /// of [`eval`](Self::eval).
    fn point_derivs(&self, x: f64, a: &[f64], order: usize) -> PointDerivs {
        finite_difference_derivs(self, x, a, order)
    }

    /// True when `f` is linear in the parameters, so second and higher
    /// derivatives vanish identically.
    fn is_linear(&self) -> bool {
        false
    }
}

fn fd_step(a: f64, rel: f64) -> f64 {
    rel * (1.0 + a.abs())
}

/// Central finite-difference derivatives of `m.eval`.
pub fn finite_difference_derivs<M: ModelFunction + ?Sized>(
    m: &M,
    x: f64,
    a: &[f64],
    order: usize,
) -> PointDerivs {
    let k = a.len();
    let mut out = PointDerivs::zeros(k);
    out.value = m.eval(x, a);
    let f = |shift: &[(usize, f64)]| {
        let mut b = a.to_vec();
        for &(i, h) in shift {
            b[i] += h;
        }
        m.eval(x, &b)
    };
    for i in 0..k {
        let h = fd_step(a[i], 1e-6);
        out.grad[i] = (f(&[(i, h)]) - f(&[(i, -h)])) / (2.0 * h);
    }
    if order >= 2 {
        for i in 0..k {
            for j in i..k {
                let hi = fd_step(a[i], 1e-4);
                let hj = fd_step(a[j], 1e-4);
                let v = (f(&[(i, hi), (j, hj)]) - f(&[(i, hi), (j, -hj)]) - f(&[(i, -hi), (j, hj)])
                    + f(&[(i, -hi), (j, -hj)]))
                    / (4.0 * hi * hj);
                out.hess[(i, j)] = v;
                out.hess[(j, i)] = v;
            }
        }
    }
    if order >= 3 {
        for i in 0..k {
            for j in i..k {
                for l in j..k {
                    let (hi, hj, hl) =
                        (fd_step(a[i], 2e-3), fd_step(a[j], 2e-3), fd_step(a[l], 2e-3));
                    let mut s = 0.0;
                    for si in [1.0, -1.0] {
                        for sj in [1.0, -1.0] {
                            for sl in [1.0, -1.0] {
                                s += si * sj * sl * f(&[(i, si * hi), (j, sj * hj), (l, sl * hl)]);
                            }
                        }
                    }
                    out.third.set_sym(i, j, l, s / (8.0 * hi * hj * hl));
                }
            }
        }
    }
    out
}

/// `Σ_j a_j (x/scale)^j`.
#[derive(Clone, Debug)]
pub struct Polynomial {
    pub degree: usize,
    pub scale: f64,
}

impl ModelFunction for Polynomial {
    fn n_params(&self) -> usize {
        self.degree + 1
    }

    fn param_names(&self) -> Vec<String> {
        (0..=self.degree).map(|j| format!("a{j}")).collect()
    }

    fn eval(&self, x: f64, a: &[f64]) -> f64 {
        let u = x / self.scale;
        a.iter().rev().fold(0.0, |acc, &c| acc * u + c)
    }

    fn point_derivs(&self, x: f64, a: &[f64], _order: usize) -> PointDerivs {
        let k = self.n_params();
        let mut out = PointDerivs::zeros(k);
        out.value = self.eval(x, a);
        let u = x / self.scale;
        let mut p = 1.0;
        for j in 0..k {
            out.grad[j] = p;
            p *= u;
        }
        out
    }

    fn is_linear(&self) -> bool {
        true
    }
}

/// Sum of decaying exponentials `Σ_n A_n exp(-E_n t)` with ordered energies.
///
/// Parameters are `(A0, E0, A1, ldE1, A2, ldE2, ...)` and
/// `E_n = E_{n-1} + exp(ldE_n)`, so the energies increase for any real
/// parameter values.
#[derive(Clone, Debug)]
pub struct Exponential {
    pub n_states: usize,
}

impl Exponential {
    /// Energies `E_0..E_{n-1}` for a parameter vector.
    pub fn energies(&self, a: &[f64]) -> Vec<f64> {
        let mut e = Vec::with_capacity(self.n_states);
        let mut cur = a[1];
        e.push(cur);
        for n in 1..self.n_states {
            cur += a[2 * n + 1].exp();
            e.push(cur);
        }
        e
    }
}

impl ModelFunction for Exponential {
    fn n_params(&self) -> usize {
        2 * self.n_states
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = vec!["A0".to_string(), "E0".to_string()];
        for n in 1..self.n_states {
            names.push(format!("A{n}"));
            names.push(format!("ldE{n}"));
        }
        names
    }

    fn eval(&self, t: f64, a: &[f64]) -> f64 {
        self.energies(a)
            .iter()
            .enumerate()
            .map(|(n, e)| a[2 * n] * (-e * t).exp())
            .sum()
    }

    fn point_derivs(&self, t: f64, a: &[f64], order: usize) -> PointDerivs {
        let k = self.n_params();
        let mut out = PointDerivs::zeros(k);
        let energies = self.energies(a);
        for (n, &e) in energies.iter().enumerate() {
            // Term A exp(q) with q = -E_n t. The exponent depends on E0 and on
            // ldE_m for m <= n; each ldE_m enters through exp(ldE_m), so its
            // own higher derivatives equal its first.
            let amp_idx = 2 * n;
            let amp = a[amp_idx];
            let phi = (-e * t).exp();
            let mut q1 = vec![0.0; k];
            let mut q_diag = vec![0.0; k];
            q1[1] = -t;
            for m in 1..=n {
                let v = -t * a[2 * m + 1].exp();
                q1[2 * m + 1] = v;
                q_diag[2 * m + 1] = v;
            }
            let q2 = |i: usize, j: usize| if i == j { q_diag[i] } else { 0.0 };
            let phi1 = |i: usize| phi * q1[i];
            let phi2 = |i: usize, j: usize| phi * (q1[i] * q1[j] + q2(i, j));
            let phi3 = |i: usize, j: usize, l: usize| {
                let q3 = if i == j && j == l { q_diag[i] } else { 0.0 };
                phi * (q1[i] * q1[j] * q1[l]
                    + q2(i, j) * q1[l]
                    + q2(i, l) * q1[j]
                    + q2(j, l) * q1[i]
                    + q3)
            };
            let d = |i: usize| if i == amp_idx { 1.0 } else { 0.0 };

            out.value += amp * phi;
            for i in 0..k {
                out.grad[i] += d(i) * phi + amp * phi1(i);
            }
            if order >= 2 {
                for i in 0..k {
                    for j in i..k {
                        let v = d(i) * phi1(j) + d(j) * phi1(i) + amp * phi2(i, j);
                        out.hess[(i, j)] += v;
                        if i != j {
                            out.hess[(j, i)] += v;
                        }
                    }
                }
            }
            if order >= 3 {
                for i in 0..k {
                    for j in i..k {
                        for l in j..k {
                            let v = d(i) * phi2(j, l)
                                + d(j) * phi2(i, l)
                                + d(l) * phi2(i, j)
                                + amp * phi3(i, j, l);
                            let cur = out.third.get(i, j, l);
                            out.third.set_sym(i, j, l, cur + v);
                        }
                    }
                }
            }
        }
        out
    }
}

/// Multivariate Gaussian prior `N(mean, cov)` on the parameters.
#[derive(Clone, Debug)]
pub struct GaussianPrior {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    inv: DMatrix<f64>,
}

impl GaussianPrior {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::Dimension(format!(
                "prior covariance {}x{} for {} parameters",
                cov.nrows(),
                cov.ncols(),
                mean.len()
            )));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite prior".into()));
        }
        if (&cov - cov.transpose()).abs().max() > 1e-12 * cov.abs().max().max(1.0) {
            return Err(Error::Domain("prior covariance is not symmetric".into()));
        }
        let cov = symmetrize(&cov);
        let inv = spd_inverse(&cov)
            .ok_or_else(|| Error::Domain("prior covariance is not positive definite".into()))?;
        Ok(Self { mean, cov, inv })
    }

    /// Independent priors `mean_j ± width_j`.
    pub fn diagonal(mean: &[f64], width: &[f64]) -> Result<Self> {
        if mean.len() != width.len() {
            return Err(Error::Dimension(format!(
                "{} prior means but {} widths",
                mean.len(),
                width.len()
            )));
        }
        if width.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Domain("prior widths must be positive".into()));
        }
        let var = DVector::from_iterator(width.len(), width.iter().map(|w| w * w));
        Self::new(DVector::from_column_slice(mean), DMatrix::from_diagonal(&var))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// `Σ̃⁻¹`.
    pub fn inv_cov(&self) -> &DMatrix<f64> {
        &self.inv
    }

    /// `(a - ã)ᵀ Σ̃⁻¹ (a - ã)`.
    pub fn chi2(&self, a: &DVector<f64>) -> f64 {
        let r = a - &self.mean;
        r.dot(&(&self.inv * &r))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        let root = sym_sqrt(&self.cov)?;
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        Ok(&self.mean + root * z)
    }
}

/// A candidate model: function, parameter prior and model prior probability.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub name: String,
    pub function: Arc<dyn ModelFunction>,
    pub prior: GaussianPrior,
    /// `pr(M)`, in `(0, 1]`.
    pub model_prior: f64,
}

/// Model values and derivatives at every coordinate.
#[derive(Clone, Debug)]
pub struct ModelDerivs {
    pub values: DVector<f64>,
    /// `d x k`.
    pub jacobian: DMatrix<f64>,
    /// One `k x k` Hessian per coordinate (empty below order 2).
    pub hessians: Vec<DMatrix<f64>>,
    /// One third-derivative tensor per coordinate (empty below order 3).
    pub thirds: Vec<Tensor3>,
}

impl ModelSpec {
    pub fn new(
        name: impl Into<String>,
        function: Arc<dyn ModelFunction>,
        prior: GaussianPrior,
        model_prior: f64,
    ) -> Result<Self> {
        if prior.dim() != function.n_params() {
            return Err(Error::Dimension(format!(
                "prior over {} parameters for a model with {}",
                prior.dim(),
                function.n_params()
            )));
        }
        if !(model_prior > 0.0 && model_prior <= 1.0) {
            return Err(Error::Domain(format!("model prior {model_prior} not in (0, 1]")));
        }
        Ok(Self { name: name.into(), function, prior, model_prior })
    }

    /// Number of parameters `k`.
    pub fn k(&self) -> usize {
        self.function.n_params()
    }

    pub fn param_names(&self) -> Vec<String> {
        self.function.param_names()
    }

    pub fn is_linear(&self) -> bool {
        self.function.is_linear()
    }

    fn check_params(&self, a: &[f64]) -> Result<()> {
        if a.len() != self.k() {
            return Err(Error::Dimension(format!(
                "{} parameters given to {} (k = {})",
                a.len(),
                self.name,
                self.k()
            )));
        }
        Ok(())
    }

    pub fn predict(&self, coords: &[f64], a: &[f64]) -> Result<DVector<f64>> {
        self.check_params(a)?;
        Ok(DVector::from_iterator(
            coords.len(),
            coords.iter().map(|&x| self.function.eval(x, a)),
        ))
    }

    pub fn model_derivatives(&self, coords: &[f64], a: &[f64], order: usize) -> Result<ModelDerivs> {
        self.check_params(a)?;
        if !(1..=3).contains(&order) {
            return Err(Error::Domain(format!("derivative order {order} not in 1..=3")));
        }
        let k = self.k();
        let d = coords.len();
        let mut out = ModelDerivs {
            values: DVector::zeros(d),
            jacobian: DMatrix::zeros(d, k),
            hessians: Vec::new(),
            thirds: Vec::new(),
        };
        for (x_idx, &x) in coords.iter().enumerate() {
            let p = self.function.point_derivs(x, a, order);
            out.values[x_idx] = p.value;
            out.jacobian.set_row(x_idx, &p.grad.transpose());
            if order >= 2 {
                out.hessians.push(p.hess);
            }
            if order >= 3 {
                out.thirds.push(p.third);
            }
        }
        Ok(out)
    }
}

/// Largest disagreement between the model's derivatives and central finite
/// differences over `points`, relative to the largest entry of each tensor.
///
/// Each order is checked against differences of the order below it (the
/// gradient against `eval`, the Hessian against the gradient, the third
/// derivative against the Hessian), with step `1e-5 (1 + |a_i|)`.
pub fn validate_derivatives(spec: &ModelSpec, coords: &[f64], points: &[Vec<f64>]) -> Result<f64> {
    fn rel(an: &[f64], fd: &[f64]) -> f64 {
        let scale = an.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = an.iter().zip(fd).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
        if scale == 0.0 {
            diff
        } else {
            diff / scale
        }
    }
    let func = spec.function.as_ref();
    let k = spec.k();
    let mut worst: f64 = 0.0;
    for a in points {
        spec.check_params(a)?;
        for &x in coords {
            let an = func.point_derivs(x, a, 3);
            let mut grad = vec![0.0; k];
            let mut hess = DMatrix::zeros(k, k);
            let mut third = Tensor3::zeros(k);
            for i in 0..k {
                let h = fd_step(a[i], 1e-5);
                let mut up = a.clone();
                let mut dn = a.clone();
                up[i] += h;
                dn[i] -= h;
                grad[i] = (func.eval(x, &up) - func.eval(x, &dn)) / (2.0 * h);
                let pu = func.point_derivs(x, &up, 2);
                let pd = func.point_derivs(x, &dn, 2);
                for j in 0..k {
                    hess[(i, j)] = (pu.grad[j] - pd.grad[j]) / (2.0 * h);
                    for l in 0..k {
                        third.set(i, j, l, (pu.hess[(j, l)] - pd.hess[(j, l)]) / (2.0 * h));
                    }
                }
            }
            worst = worst
                .max(rel(an.grad.as_slice(), &grad))
                .max(rel(an.hess.as_slice(), hess.as_slice()))
                .max(rel(an.third.as_slice(), third.as_slice()));
        }
    }
    Ok(worst)
}

/// Built-in model families, as named in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    Polynomial {
        degree: usize,
        #[serde(default = "default_poly_scale")]
        scale: f64,
    },
    Exponential { n_states: usize },
}

fn default_poly_scale() -> f64 {
    1.0
}

impl Family {
    pub fn function(&self) -> Result<Arc<dyn ModelFunction>> {
        match *self {
            Family::Polynomial { degree, scale } => {
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(Error::Config(format!("polynomial scale {scale} must be positive")));
                }
                Ok(Arc::new(Polynomial { degree, scale }))
            }
            Family::Exponential { n_states } => {
                if n_states == 0 {
                    return Err(Error::Config("exponential model needs n_states >= 1".into()));
                }
                Ok(Arc::new(Exponential { n_states }))
            }
        }
    }

    pub fn default_name(&self) -> String {
        match self {
            Family::Polynomial { degree, .. } => format!("poly{degree}"),
            Family::Exponential { n_states } => format!("exp{n_states}"),
        }
    }

    /// Prior mean and width per parameter.
    pub fn default_prior(&self) -> (Vec<f64>, Vec<f64>) {
        match *self {
            Family::Polynomial { degree, .. } => (vec![0.0; degree + 1], vec![10.0; degree + 1]),
            Family::Exponential { n_states } => {
                let mut mean = vec![0.0, 0.5];
                let mut width = vec![100.0, 0.5];
                for _ in 1..n_states {
                    mean.extend([0.0, -0.5]);
                    width.extend([100.0, 1.0]);
                }
                (mean, width)
            }
        }
    }

    /// Build a spec, overriding the default prior where given.
    pub fn build(
        &self,
        name: Option<String>,
        prior_mean: Option<Vec<f64>>,
        prior_width: Option<Vec<f64>>,
        model_prior: f64,
    ) -> Result<ModelSpec> {
        let function = self.function()?;
        let (m0, w0) = self.default_prior();
        let mean = prior_mean.unwrap_or(m0);
        let width = prior_width.unwrap_or(w0);
        if mean.len() != function.n_params() || width.len() != function.n_params() {
            return Err(Error::Config(format!(
                "{} needs {} prior entries",
                self.default_name(),
                function.n_params()
            )));
        }
        let prior = GaussianPrior::diagonal(&mean, &width)?;
        ModelSpec::new(name.unwrap_or_else(|| self.default_name()), function, prior, model_prior)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(family: Family) -> ModelSpec {
        family.build(None, None, None, 1.0).unwrap()
    }

    #[test]
    fn polynomial_truth_at_sixteen() {
        let m = spec(Family::Polynomial { degree: 2, scale: 16.0 });
        let v = m.predict(&[16.0], &[1.80, -0.53, 0.31]).unwrap();
        assert!((v[0] - 1.58).abs() < 1e-14);
    }

    #[test]
    fn exponential_at_origin() {
        let one = spec(Family::Exponential { n_states: 1 });
        assert_eq!(one.predict(&[0.0], &[2.0, 0.8]).unwrap()[0], 2.0);
        let two = spec(Family::Exponential { n_states: 2 });
        let v = two.predict(&[0.0], &[2.0, 0.8, 10.4, 0.36f64.ln()]).unwrap();
        assert!((v[0] - 12.4).abs() < 1e-14);
    }

    #[test]
    fn exponential_hand_derivatives() {
        let m = spec(Family::Exponential { n_states: 1 });
        let d = m.model_derivatives(&[1.0], &[1.0, 1.0], 1).unwrap();
        let e = (-1.0f64).exp();
        assert!((d.jacobian[(0, 0)] - e).abs() < 1e-15);
        assert!((d.jacobian[(0, 1)] + e).abs() < 1e-15);
    }

    #[test]
    fn linear_higher_derivatives_vanish() {
        let m = spec(Family::Polynomial { degree: 1, scale: 16.0 });
        let d = m.model_derivatives(&[1.0, 5.0], &[0.3, 2.0], 3).unwrap();
        assert!(d.hessians.iter().all(|h| h.iter().all(|&v| v == 0.0)));
        assert!(d.thirds.iter().all(|t| t.max_abs() == 0.0));
    }

    #[test]
    fn wrong_parameter_length() {
        let m = spec(Family::Exponential { n_states: 2 });
        assert!(matches!(m.predict(&[1.0], &[1.0, 2.0]), Err(Error::Dimension(_))));
        assert!(matches!(m.model_derivatives(&[1.0], &[1.0], 1), Err(Error::Dimension(_))));
    }

    #[test]
    fn finite_difference_fallback_matches_family() {
        #[derive(Debug)]
        struct Plain(Exponential);
        impl ModelFunction for Plain {
            fn n_params(&self) -> usize {
                self.0.n_params()
            }
            fn param_names(&self) -> Vec<String> {
                self.0.param_names()
            }
            fn eval(&self, x: f64, a: &[f64]) -> f64 {
                self.0.eval(x, a)
            }
        }
        let a = [1.3, 0.7, 2.0, -0.4];
        let fam = Exponential { n_states: 2 };
        let fd = Plain(Exponential { n_states: 2 }).point_derivs(2.0, &a, 3);
        let an = fam.point_derivs(2.0, &a, 3);
        assert!((&fd.grad - &an.grad).abs().max() < 1e-7);
        assert!((&fd.hess - &an.hess).abs().max() < 1e-5);
        for (u, v) in fd.third.as_slice().iter().zip(an.third.as_slice()) {
            assert!((u - v).abs() < 1e-3 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn default_priors_have_expected_shape() {
        let (m, w) = Family::Exponential { n_states: 2 }.default_prior();
        assert_eq!(m, vec![0.0, 0.5, 0.0, -0.5]);
        assert_eq!(w, vec![100.0, 0.5, 100.0, 1.0]);
    }

    #[test]
    fn non_spd_prior_rejected() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianPrior::new(DVector::zeros(2), cov).is_err());
        assert!(GaussianPrior::diagonal(&[0.0], &[0.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn energies_ordered(e0 in -2.0f64..2.0, ld in -10.0f64..10.0) {
            let m = Exponential { n_states: 2 };
            let e = m.energies(&[1.0, e0, 1.0, ld]);
            prop_assert!(e[1] > e[0]);
        }

        #[test]
        fn polynomial_is_linear(
            a in prop::collection::vec(-5.0f64..5.0, 4),
            b in prop::collection::vec(-5.0f64..5.0, 4),
            al in -3.0f64..3.0,
            be in -3.0f64..3.0,
        ) {
            let m = spec(Family::Polynomial { degree: 3, scale: 16.0 });
            let xs: Vec<f64> = (1..=15).map(f64::from).collect();
            let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| al * x + be * y).collect();
            let lhs = m.predict(&xs, &mix).unwrap();
            let rhs = m.predict(&xs, &a).unwrap() * al + m.predict(&xs, &b).unwrap() * be;
            prop_assert!((lhs - rhs).abs().max() < 1e-12);
        }

        #[test]
        fn exponential_derivatives_match_finite_differences(
            a0 in 0.5f64..3.0, e0 in 0.2f64..1.2, a1 in 0.5f64..12.0, ld in -2.0f64..0.5,
        ) {
            let m = spec(Family::Exponential { n_states: 2 });
            let err = validate_derivatives(&m, &[1.0, 3.0, 6.0], &[vec![a0, e0, a1, ld]]).unwrap();
            prop_assert!(err < 1e-4, "relative error {err}");
        }

        #[test]
        fn derivative_tensors_symmetric(
            a0 in 0.5f64..3.0, e0 in 0.2f64..1.2, a1 in 0.5f64..12.0, ld in -2.0f64..0.5, t in 0.0f64..10.0,
        ) {
            let p = Exponential { n_states: 2 }.point_derivs(t, &[a0, e0, a1, ld], 3);
            prop_assert_eq!(p.hess.clone(), p.hess.transpose());
            for i in 0..4 { for j in 0..4 { for l in 0..4 {
                prop_assert_eq!(p.third.get(i, j, l), p.third.get(l, i, j));
                prop_assert_eq!(p.third.get(i, j, l), p.third.get(j, i, l));
            }}}
        }
    }
}
