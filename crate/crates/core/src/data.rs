//! Sample matrices, summary statistics and kept/cut partitions.
//!
//! Text format: one sample per line, values separated by whitespace and/or
//! commas. A header line `#coords v1 v2 ... vd` gives the abscissa of each
//! column; other lines starting with `#` are comments. Without a header the
//! coordinates default to the column indices `0..d`.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, sym_condition_number, MAX_CONDITION};

/// `N` samples of a `d`-dimensional observation.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSet {
    coords: Vec<f64>,
    samples: DMatrix<f64>,
}

impl DataSet {
    /// Build from coordinates and an `N x d` sample matrix (row = sample).
    pub fn new(coords: Vec<f64>, samples: DMatrix<f64>) -> Result<Self> {
        if samples.ncols() != coords.len() {
            return Err(Error::Dimension(format!(
                "{} coordinates for {} columns",
                coords.len(),
                samples.ncols()
            )));
        }
        if coords.is_empty() {
            return Err(Error::Dimension("dataset has no columns".into()));
        }
        if samples.nrows() < 3 {
            return Err(Error::Domain(format!(
                "need at least 3 samples, got {}",
                samples.nrows()
            )));
        }
        if coords.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("coordinates must be strictly increasing".into()));
        }
        if coords.iter().chain(samples.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite value in dataset".into()));
        }
        Ok(Self { coords, samples })
    }

    pub fn from_rows(coords: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let d = coords.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::Dimension(format!(
                "row of length {} in a dataset with {} columns",
                bad.len(),
                d
            )));
        }
        let samples = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Self::new(coords, samples)
    }

    /// Number of samples `N`.
    pub fn n(&self) -> usize {
        self.samples.nrows()
    }

    /// Observation dimension `d`.
    pub fn d(&self) -> usize {
        self.samples.ncols()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    /// Keep only the partition's columns.
    pub fn restrict(&self, part: &SubsetPartition) -> Result<Self> {
        part.check_total(self.d())?;
        let coords = part.kept().iter().map(|&j| self.coords[j]).collect();
        let samples = self.samples.select_columns(part.kept());
        Self::new(coords, samples)
    }

    /// The first `n` samples.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n > self.n() {
            return Err(Error::Dimension(format!(
                "prefix of {n} samples from a dataset of {}",
                self.n()
            )));
        }
        Self::new(self.coords.clone(), self.samples.rows(0, n).into_owned())
    }
}

/// Parse the tabular text format. `coords` overrides any `#coords` header.
pub fn load_dataset<R: BufRead>(reader: R, coords: Option<Vec<f64>>) -> Result<DataSet> {
    let mut header: Option<Vec<f64>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("#coords") {
            header = Some(parse_fields(rest, line_no)?);
            continue;
        }
        if trimmed.starts_with('#') {
            continue;
        }
        let row = parse_fields(trimmed, line_no)?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Dimension(format!(
                    "line {line_no} has {} values, expected {w}",
                    row.len()
                )))
            }
            _ => {}
        }
        rows.push(row);
    }
    let d = width.ok_or(Error::Parse { line: 0, msg: "no data rows".into() })?;
    let coords = coords
        .or(header)
        .unwrap_or_else(|| (0..d).map(|j| j as f64).collect());
    DataSet::from_rows(coords, &rows)
}

fn parse_fields(s: &str, line: usize) -> Result<Vec<f64>> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>().map_err(|e| Error::Parse {
                line,
                msg: format!("{t:?}: {e}"),
            })
        })
        .collect()
}

/// Write in the format read by [`load_dataset`]. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_dataset<W: Write>(ds: &DataSet, mut w: W) -> Result<()> {
    write!(w, "#coords")?;
    for c in ds.coords() {
        write!(w, " {c}")?;
    }
    writeln!(w)?;
    for row in ds.samples().row_iter() {
        let mut first = true;
        for v in row.iter() {
            if !first {
                write!(w, " ")?;
            }
            write!(w, "{v}")?;
            first = false;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Split of the `total` columns into a kept block (modeled) and a cut block.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubsetPartition {
    kept: Vec<usize>,
    total: usize,
}

impl SubsetPartition {
    pub fn new(mut kept: Vec<usize>, total: usize) -> Result<Self> {
        kept.sort_unstable();
        if kept.is_empty() {
            return Err(Error::Domain("partition keeps no columns".into()));
        }
        if kept.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain("duplicate kept index".into()));
        }
        if let Some(&last) = kept.last() {
            if last >= total {
                return Err(Error::Domain(format!("kept index {last} out of range 0..{total}")));
            }
        }
        Ok(Self { kept, total })
    }

    pub fn full(total: usize) -> Self {
        Self { kept: (0..total).collect(), total }
    }

    /// Cut the first `n_cut` columns.
    pub fn drop_leading(total: usize, n_cut: usize) -> Result<Self> {
        Self::new((n_cut.min(total)..total).collect(), total)
    }

    /// Keep the columns whose coordinate is at least `t_min`.
    pub fn from_min_coord(coords: &[f64], t_min: f64) -> Result<Self> {
        let kept = coords
            .iter()
            .enumerate()
            .filter(|(_, &c)| c >= t_min)
            .map(|(j, _)| j)
            .collect();
        Self::new(kept, coords.len())
    }

    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// `d_K`.
    pub fn d_kept(&self) -> usize {
        self.kept.len()
    }

    /// `d_C = d - d_K`.
    pub fn cut_count(&self) -> usize {
        self.total - self.kept.len()
    }

    fn check_total(&self, d: usize) -> Result<()> {
        if self.total != d {
            return Err(Error::Dimension(format!(
                "partition over {} columns applied to {d}",
                self.total
            )));
        }
        Ok(())
    }
}

/// Mean, covariance and bias-corrected inverse of the kept block.
#[derive(Clone, Debug)]
pub struct SampleStats {
    pub n: usize,
    /// `ȳ`.
    pub mean: DVector<f64>,
    /// Sample covariance with divisor `N - 1`.
    pub cov: DMatrix<f64>,
    /// Standard-error covariance `cov / N`.
    pub err_cov: DMatrix<f64>,
    /// `hartlap * err_cov⁻¹`.
    pub inv_err_cov: DMatrix<f64>,
    pub hartlap: f64,
}

impl SampleStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Standard errors, `sqrt(diag(err_cov))`.
    pub fn std_errors(&self) -> DVector<f64> {
        self.err_cov.diagonal().map(f64::sqrt)
    }
}

/// `(N - d - 2) / (N - 1)`.
pub fn hartlap_factor(n: usize, d: usize) -> f64 {
    (n as f64 - d as f64 - 2.0) / (n as f64 - 1.0)
}

/// Statistics of the kept columns. The inverse is of the kept sub-block
/// covariance, scaled by the Hartlap factor for `d_K`.
pub fn compute_stats(ds: &DataSet, part: &SubsetPartition) -> Result<SampleStats> {
    part.check_total(ds.d())?;
    let n = ds.n();
    let dk = part.d_kept();
    if n <= dk + 2 {
        return Err(Error::InsufficientSamples { n, d_kept: dk });
    }
    let y = ds.samples().select_columns(part.kept());
    let mean = DVector::from_fn(dk, |j, _| y.column(j).mean());
    let mut centered = y;
    for j in 0..dk {
        let m = mean[j];
        centered.column_mut(j).add_scalar_mut(-m);
    }
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let cov = crate::linalg::symmetrize(&cov);

    // Condition on the correlation matrix so that columns whose scales differ
    // by many decades (decaying correlators) are not flagged.
    let sd = cov.diagonal().map(|v| v.max(0.0).sqrt());
    if sd.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::SingularCovariance { cond: f64::INFINITY });
    }
    let corr = DMatrix::from_fn(dk, dk, |i, j| cov[(i, j)] / (sd[i] * sd[j]));
    let cond = sym_condition_number(&corr);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::SingularCovariance { cond });
    }
    let corr_inv = spd_inverse(&corr).ok_or(Error::SingularCovariance { cond })?;

    let nf = n as f64;
    let err_cov = &cov / nf;
    let hartlap = hartlap_factor(n, dk);
    // (cov/N)^-1 = N D^-1 C^-1 D^-1
    let inv_err_cov =
        DMatrix::from_fn(dk, dk, |i, j| hartlap * nf * corr_inv[(i, j)] / (sd[i] * sd[j]));
    Ok(SampleStats { n, mean, cov, err_cov, inv_err_cov, hartlap })
}

/// `|ȳ_j| / sqrt(err_cov_jj)` for every column.
pub fn column_snr(stats: &SampleStats) -> Vec<f64> {
    stats
        .mean
        .iter()
        .zip(stats.std_errors().iter())
        .map(|(m, e)| m.abs() / e)
        .collect()
}

/// Keep the leading columns up to (not including) the first one whose
/// signal-to-noise ratio falls below `snr_min`.
pub fn snr_cut(ds: &DataSet, stats: &SampleStats, snr_min: f64) -> Result<SubsetPartition> {
    if stats.dim() != ds.d() {
        return Err(Error::Dimension(format!(
            "statistics over {} columns, dataset has {}",
            stats.dim(),
            ds.d()
        )));
    }
    if !(snr_min >= 0.0) {
        return Err(Error::Domain(format!("snr_min must be non-negative, got {snr_min}")));
    }
    let snr = column_snr(stats);
    let first_low = snr.iter().position(|&s| s < snr_min).unwrap_or(snr.len());
    if first_low == 0 {
        return Err(Error::EmptyKeep { snr_min });
    }
    SubsetPartition::new((0..first_low).collect(), ds.d())
}
