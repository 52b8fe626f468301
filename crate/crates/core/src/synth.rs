//! Seeded synthetic data.
//!
//! Row `r` draws from `ChaCha8Rng::seed_from_u64(seed)` switched to stream
//! `r`, so a dataset is identical whether rows are generated in parallel or
//! not, and a prefix of a larger dataset equals the smaller dataset.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::linalg::sym_sqrt;

fn row_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

fn grid(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(f64::from).collect()
}

/// `y = (1 + η) f(x)` with `f(x) = Σ_j c_j (x/scale)^j` and iid `η`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolySynthConfig {
    pub coefficients: Vec<f64>,
    pub scale: f64,
    pub coords: Vec<f64>,
    pub n: usize,
    pub sigma_eta: f64,
    pub seed: u64,
}

impl Default for PolySynthConfig {
    fn default() -> Self {
        Self {
            coefficients: vec![1.80, -0.53, 0.31],
            scale: 16.0,
            coords: grid(1, 15),
            n: 160,
            sigma_eta: 1.0,
            seed: 0,
        }
    }
}

impl PolySynthConfig {
    pub fn truth(&self, x: f64) -> f64 {
        let u = x / self.scale;
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * u + c)
    }
}

pub fn gen_poly(cfg: &PolySynthConfig) -> Result<DataSet> {
    if cfg.n < 4 {
        return Err(Error::Config(format!("synthetic N = {} is below 4", cfg.n)));
    }
    if !(cfg.sigma_eta >= 0.0) || !(cfg.scale > 0.0) {
        return Err(Error::Config("sigma_eta must be >= 0 and scale > 0".into()));
    }
    let truth: Vec<f64> = cfg.coords.iter().map(|&x| cfg.truth(x)).collect();
    let d = truth.len();
    let rows = crate::par::map_range(cfg.n, |r| {
        let mut rng = row_rng(cfg.seed, r);
        truth
            .iter()
            .map(|f| (1.0 + cfg.sigma_eta * rng.sample::<f64, _>(StandardNormal)) * f)
            .collect::<Vec<f64>>()
    });
    let samples = DMatrix::from_fn(cfg.n, d, |i, j| rows[i][j]);
    DataSet::new(cfg.coords.clone(), samples)
}

/// `y = (1 + η) f(t) + θ` with `f(t) = Σ_n A_n exp(-E_n t)`, `η` Gaussian
/// with covariance `σ_η² ρ^|t - t'|` and `θ` iid with width `σ_θ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpSynthConfig {
    pub amplitudes: Vec<f64>,
    pub energies: Vec<f64>,
    pub coords: Vec<f64>,
    pub n: usize,
    pub sigma_eta: f64,
    pub sigma_theta: f64,
    pub rho: f64,
    pub seed: u64,
}

impl Default for ExpSynthConfig {
    fn default() -> Self {
        Self {
            amplitudes: vec![2.0, 10.4],
            energies: vec![0.80, 1.16],
            coords: grid(1, 31),
            n: 200,
            sigma_eta: 0.3,
            sigma_theta: 0.0,
            rho: 0.6,
            seed: 0,
        }
    }
}

impl ExpSynthConfig {
    pub fn truth(&self, t: f64) -> f64 {
        self.amplitudes
            .iter()
            .zip(&self.energies)
            .map(|(a, e)| a * (-e * t).exp())
            .sum()
    }

    fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::Config(format!("synthetic N = {} is below 4", self.n)));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho = {} not in [0, 1)", self.rho)));
        }
        if self.amplitudes.len() != self.energies.len() || self.energies.is_empty() {
            return Err(Error::Config("need one energy per amplitude".into()));
        }
        if self.energies.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("energies must increase".into()));
        }
        if !(self.sigma_eta >= 0.0) || !(self.sigma_theta >= 0.0) {
            return Err(Error::Config("noise widths must be non-negative".into()));
        }
        Ok(())
    }
}

pub fn gen_exp(cfg: &ExpSynthConfig) -> Result<DataSet> {
    cfg.validate()?;
    let t = &cfg.coords;
    let d = t.len();
    let cov = DMatrix::from_fn(d, d, |i, j| {
        cfg.sigma_eta * cfg.sigma_eta * cfg.rho.powf((t[i] - t[j]).abs())
    });
    let root = sym_sqrt(&cov)?;
    let truth = DVector::from_iterator(d, t.iter().map(|&x| cfg.truth(x)));
    let rows = crate::par::map_range(cfg.n, |r| {
        let mut rng = row_rng(cfg.seed, r);
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let eta = &root * z;
        (0..d)
            .map(|j| {
                let theta = cfg.sigma_theta * rng.sample::<f64, _>(StandardNormal);
                (1.0 + eta[j]) * truth[j] + theta
            })
            .collect::<Vec<f64>>()
    });
    let samples = DMatrix::from_fn(cfg.n, d, |i, j| rows[i][j]);
    DataSet::new(cfg.coords.clone(), samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_poly_rows_are_truth() {
        let cfg = PolySynthConfig { sigma_eta: 0.0, n: 5, ..Default::default() };
        let ds = gen_poly(&cfg).unwrap();
        for row in ds.samples().row_iter() {
            for (j, v) in row.iter().enumerate() {
                assert_eq!(*v, cfg.truth(cfg.coords[j]));
            }
        }
        assert!((cfg.truth(8.0) - 1.6125).abs() < 1e-14);
    }

    #[test]
    fn noiseless_exp_rows_are_truth() {
        let cfg = ExpSynthConfig { sigma_eta: 0.0, n: 4, ..Default::default() };
        let ds = gen_exp(&cfg).unwrap();
        let f = |t: f64| 2.0 * (-0.8 * t).exp() + 10.4 * (-1.16 * t).exp();
        for row in ds.samples().row_iter() {
            for (j, v) in row.iter().enumerate() {
                assert!((v - f(cfg.coords[j])).abs() <= 1e-15 * f(cfg.coords[j]));
            }
        }
    }

    #[test]
    fn seeded_and_prefix_stable() {
        let cfg = ExpSynthConfig { n: 20, seed: 42, ..Default::default() };
        let a = gen_exp(&cfg).unwrap();
        let b = gen_exp(&cfg).unwrap();
        assert_eq!(a, b);
        let small = gen_exp(&ExpSynthConfig { n: 10, ..cfg.clone() }).unwrap();
        assert_eq!(a.prefix(10).unwrap(), small);
        let other = gen_exp(&ExpSynthConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn invalid_configs() {
        assert!(gen_poly(&PolySynthConfig { n: 3, ..Default::default() }).is_err());
        assert!(gen_exp(&ExpSynthConfig { rho: 1.0, ..Default::default() }).is_err());
        assert!(gen_exp(&ExpSynthConfig { energies: vec![1.2, 0.8], ..Default::default() }).is_err());
    }
}
