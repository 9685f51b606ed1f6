//! Sparse datasets in LIBSVM text format, uniform sampling, and `lambda_max`.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::losses::LossModel;
use crate::regularizers::GroupRegularizer;

/// One sample `x_i` stored as ascending `(index, value)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    indices: Vec<usize>,
    values: Vec<f64>,
    dim: usize,
}

impl SparseRow {
    pub fn new(indices: Vec<usize>, values: Vec<f64>, dim: usize) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: indices.len(),
                got: values.len(),
            });
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "row indices must be strictly ascending".into(),
            ));
        }
        if let Some(&last) = indices.last() {
            if last >= dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: last + 1,
                });
            }
        }
        Ok(Self {
            indices,
            values,
            dim,
        })
    }

    /// Dense vector to sparse row, dropping exact zeros.
    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, v)| (j, *v))
            .unzip();
        Self {
            indices,
            values,
            dim: dense.len(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(j, v)| v * dense[j]).sum()
    }

    /// `out += alpha * x`
    pub fn axpy(&self, alpha: f64, out: &mut [f64]) {
        for (j, v) in self.iter() {
            out[j] += alpha * v;
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.axpy(1.0, &mut out);
        out
    }

    /// Re-index through `map` (old index -> new index), dropping unmapped entries.
    pub fn restrict(&self, map: &[Option<usize>], new_dim: usize) -> Self {
        let mut pairs: Vec<(usize, f64)> = self
            .iter()
            .filter_map(|(j, v)| map[j].map(|k| (k, v)))
            .collect();
        // a permuting map can break ordering
        if pairs.windows(2).any(|w| w[0].0 >= w[1].0) {
            pairs.sort_by_key(|p| p.0);
        }
        let (indices, values) = pairs.into_iter().unzip();
        Self {
            indices,
            values,
            dim: new_dim,
        }
    }
}

/// Samples `{(x_i, y_i)}` with uniform empirical weights `1/m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Vec<SparseRow>,
    labels: Vec<f64>,
    n: usize,
}

impl Dataset {
    pub fn new(rows: Vec<SparseRow>, labels: Vec<f64>, n: usize) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: labels.len(),
            });
        }
        if let Some(r) = rows.iter().find(|r| r.dim != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: r.dim,
            });
        }
        Ok(Self { rows, labels, n })
    }

    pub fn rows(&self) -> &[SparseRow] {
        &self.rows
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &SparseRow {
        &self.rows[i]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    /// Feature count.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Sample count.
    pub fn m(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(SparseRow::nnz).sum()
    }

    /// Widen the feature space to `n` (trailing all-zero features).
    pub fn with_feature_count(mut self, n: usize) -> Result<Self> {
        if n < self.n {
            return Err(Error::InvalidParameter(format!(
                "feature count override {n} is smaller than the largest index {}",
                self.n
            )));
        }
        for r in &mut self.rows {
            r.dim = n;
        }
        self.n = n;
        Ok(self)
    }

    /// Scale every feature column by its maximum absolute value.
    pub fn normalize_max_abs(&mut self) {
        let mut scale = vec![0.0f64; self.n];
        for r in &self.rows {
            for (j, v) in r.iter() {
                scale[j] = scale[j].max(v.abs());
            }
        }
        for r in &mut self.rows {
            for (j, v) in r.indices.iter().zip(r.values.iter_mut()) {
                if scale[*j] > 0.0 {
                    *v /= scale[*j];
                }
            }
        }
    }

    /// Keep only the mapped features, re-indexed through `map`.
    pub fn restrict_features(&self, map: &[Option<usize>], new_dim: usize) -> Dataset {
        Dataset {
            rows: self.rows.iter().map(|r| r.restrict(map, new_dim)).collect(),
            labels: self.labels.clone(),
            n: new_dim,
        }
    }

    /// Column-wise `(1/m) Σ_i w_i x_i` for per-sample scalars `w`.
    pub fn weighted_mean_row(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        if self.rows.is_empty() {
            return out;
        }
        let inv_m = 1.0 / self.m() as f64;
        for (r, w) in self.rows.iter().zip(weights) {
            r.axpy(w * inv_m, &mut out);
        }
        out
    }

    /// `x_i^T beta` for every sample.
    pub fn margins(&self, beta: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.dot(beta)).collect()
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Parse `label idx:val idx:val ...` lines with 1-based ascending indices.
///
/// The feature count is the largest index seen; use
/// [`Dataset::with_feature_count`] to widen it.
pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut rows_raw: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0usize;

    for (k, line) in reader.lines().enumerate() {
        let lineno = k + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("nonempty line has a token");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad label {label_tok:?}")))?;
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for tok in tokens {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, format!("malformed token {tok:?}")))?;
            let idx: usize = i
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad index in {tok:?}")))?;
            let val: f64 = v
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad value in {tok:?}")))?;
            if idx < 1 {
                return Err(parse_err(lineno, "feature indices are 1-based"));
            }
            if let Some(&prev) = indices.last() {
                if idx - 1 <= prev {
                    return Err(parse_err(lineno, "indices must be strictly ascending"));
                }
            }
            indices.push(idx - 1);
            values.push(val);
        }
        if let Some(&last) = indices.last() {
            n = n.max(last + 1);
        }
        rows_raw.push((indices, values));
        labels.push(label);
    }

    let rows = rows_raw
        .into_iter()
        .map(|(indices, values)| SparseRow {
            indices,
            values,
            dim: n,
        })
        .collect();
    Dataset::new(rows, labels, n)
}

/// Write a dataset back out in LIBSVM format (1-based indices).
pub fn write_libsvm<W: Write>(data: &Dataset, mut out: W) -> std::io::Result<()> {
    for (r, y) in data.rows.iter().zip(&data.labels) {
        write!(out, "{y}")?;
        for (j, v) in r.iter() {
            write!(out, " {}:{v}", j + 1)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Uniform sampling with replacement over `{0, ..., m-1}`.
///
/// The draw sequence depends only on `(seed, m)`, so runs that share a seed
/// see the same samples even when they operate on differently restricted
/// copies of the same dataset.
#[derive(Debug, Clone)]
pub struct SampleStream {
    rng: ChaCha8Rng,
    m: usize,
    draws: u64,
}

impl SampleStream {
    pub fn new(m: usize, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            m,
            draws: 0,
        }
    }

    pub fn for_dataset(data: &Dataset, seed: u64) -> Self {
        Self::new(data.m(), seed)
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub fn next_index(&mut self) -> Result<usize> {
        if self.m == 0 {
            return Err(Error::EmptyDataset);
        }
        self.draws += 1;
        Ok(self.rng.random_range(0..self.m))
    }

    /// Draw one `(x, y)` pair from `data`.
    pub fn sample<'a>(&mut self, data: &'a Dataset) -> Result<(&'a SparseRow, f64)> {
        if data.m() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: data.m(),
            });
        }
        let i = self.next_index()?;
        Ok((&data.rows[i], data.labels[i]))
    }
}

/// Smallest `lambda` for which `beta = 0` is optimal:
/// `Ω^D((1/m) Σ_i f'_{y_i}(0) x_i)`.
pub fn lambda_max(data: &Dataset, loss: &LossModel, reg: &GroupRegularizer) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    loss.validate_labels(data.labels())?;
    let grads: Vec<f64> = data.labels.iter().map(|&y| loss.d(0.0, y)).collect();
    Ok(reg.omega_dual(&data.weighted_mean_row(&grads)))
}
