//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Condition number above which a covariance block is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Ratio of largest to smallest absolute eigenvalue of a symmetric matrix.
/// Returns infinity when the smallest eigenvalue is zero or negative.
pub fn sym_condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) || !max.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse of a symmetric positive-definite matrix, symmetrized.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = m.clone().cholesky()?;
    let inv = chol.inverse();
    Some(symmetrize(&inv))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetric square root `S` with `S S = m` from the eigendecomposition.
pub fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut roots = DVector::zeros(eig.eigenvalues.len());
    for (i, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev < -1e-12 * scale.max(1.0) {
            return Err(Error::FactorizationFailure(format!(
                "negative eigenvalue {ev:e} in a covariance matrix"
            )));
        }
        roots[i] = ev.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&roots) * q.transpose())
}

/// Trace of `a * b` without forming the product.
pub fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(&b.transpose()).sum()
}

/// Dense rank-3 tensor over a single index range `0..k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    k: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(k: usize) -> Self {
        Self { k, data: vec![0.0; k * k * k] }
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[(a * self.k + b) * self.k + c]
    }

    #[inline]
    pub fn set(&mut self, a: usize, b: usize, c: usize, v: f64) {
        let k = self.k;
        self.data[(a * k + b) * k + c] = v;
    }

    /// Write `v` to every permutation of `(a, b, c)`.
    pub fn set_sym(&mut self, a: usize, b: usize, c: usize, v: f64) {
        for (i, j, l) in [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)] {
            self.set(i, j, l, v);
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `v_c = T_{cab} M_{ab}`.
    pub fn contract_last_two(&self, m: &DMatrix<f64>) -> DVector<f64> {
        let k = self.k;
        DVector::from_fn(k, |c, _| {
            let mut s = 0.0;
            for a in 0..k {
                for b in 0..k {
                    s += self.get(c, a, b) * m[(a, b)];
                }
            }
            s
        })
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `g_d T_{cba} (Σ₂)_{abcd}` with `(Σ₂)_{abcd} = 3 Σ_{ab} Σ_{cd}`.
pub fn gradient_skew_contraction(g: &DVector<f64>, t: &Tensor3, sigma: &DMatrix<f64>) -> f64 {
    let v = t.contract_last_two(sigma);
    let w = sigma * g;
    3.0 * v.dot(&w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_number_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0, 2.0]));
        assert!((sym_condition_number(&m) - 4.0).abs() < 1e-12);
        let z = DMatrix::<f64>::zeros(2, 2);
        assert!(sym_condition_number(&z).is_infinite());
    }

    #[test]
    fn sqrt_squares_back() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.6, 0.36, 0.6, 2.0, 0.6, 0.36, 0.6, 2.0]);
        let s = sym_sqrt(&m).unwrap();
        assert!((&s * &s - &m).abs().max() < 1e-12);
    }

    #[test]
    fn skew_contraction_matches_brute_force() {
        let k = 3;
        let mut t = Tensor3::zeros(k);
        for a in 0..k {
            for b in a..k {
                for c in b..k {
                    t.set_sym(a, b, c, (1 + a + 2 * b + 3 * c) as f64 * 0.1);
                }
            }
        }
        let s = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.1, 0.2, 2.0, 0.3, 0.1, 0.3, 1.5]);
        let g = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let mut brute = 0.0;
        for a in 0..k {
            for b in 0..k {
                for c in 0..k {
                    for d in 0..k {
                        brute += g[d] * t.get(c, b, a) * 3.0 * s[(a, b)] * s[(c, d)];
                    }
                }
            }
        }
        assert!((gradient_skew_contraction(&g, &t, &s) - brute).abs() < 1e-12);
    }
}
