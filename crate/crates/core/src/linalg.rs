//! Dense-matrix primitives shared by every other module: representation
//! matrices with a centering flag, Gram matrices, covariance spectra and the
//! seeded random source.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::similarity::{KernelMatrix, KernelSpec};

/// Relative cutoff below which covariance eigenvalues are treated as zero.
pub const EIGEN_CLAMP_RELATIVE: f64 = 1e-12;

/// An `n x p` activation matrix: one row per example, one column per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationMatrix {
    data: Array2<f64>,
    centered: bool,
}

impl RepresentationMatrix {
    /// Wraps `data`, checking `n >= 2`, `p >= 1` and that every entry is finite.
    /// The centered flag starts unset.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (n, p) = data.dim();
        if n < 2 {
            return Err(Error::InvalidMatrix(format!(
                "need at least 2 rows, got {n}"
            )));
        }
        if p < 1 {
            return Err(Error::InvalidMatrix("need at least 1 column".into()));
        }
        if let Some(((i, j), v)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidMatrix(format!(
                "non-finite entry {v} at ({i}, {j})"
            )));
        }
        Ok(Self {
            data,
            centered: false,
        })
    }

    pub(crate) fn from_parts(data: Array2<f64>, centered: bool) -> Self {
        Self { data, centered }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidMatrix("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((rows.len(), p), flat)
            .map_err(|e| Error::InvalidMatrix(e.to_string()))?;
        Self::new(data)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn p(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    /// Mean of `‖x‖²` over rows.
    pub fn mean_sq_row_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>() / self.n() as f64
    }

    /// Root-mean-square row norm; the natural length scale of the data.
    pub fn rms_row_norm(&self) -> f64 {
        self.mean_sq_row_norm().sqrt()
    }

    pub fn column_means(&self) -> Array1<f64> {
        self.data.mean_axis(Axis(0)).expect("n >= 2")
    }
}

/// Subtracts column means. Idempotent; the result carries `centered = true`.
pub fn center_columns(x: &RepresentationMatrix) -> Result<RepresentationMatrix> {
    if x.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidMatrix("non-finite entry".into()));
    }
    let means = x.column_means();
    let data = &x.data - &means.insert_axis(Axis(0));
    Ok(RepresentationMatrix::from_parts(data, true))
}

/// Centers only when the flag is unset.
pub(crate) fn ensure_centered(
    x: &RepresentationMatrix,
) -> Result<std::borrow::Cow<'_, RepresentationMatrix>> {
    if x.is_centered() {
        Ok(std::borrow::Cow::Borrowed(x))
    } else {
        Ok(std::borrow::Cow::Owned(center_columns(x)?))
    }
}

/// Linear Gram matrix `K = X Xᵀ`.
pub fn gram(x: &RepresentationMatrix) -> KernelMatrix {
    let k = x.data.dot(&x.data.t());
    KernelMatrix::from_parts(symmetrize(k), KernelSpec::Linear)
}

fn symmetrize(mut k: Array2<f64>) -> Array2<f64> {
    let n = k.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (k[[i, j]] + k[[j, i]]);
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    k
}

/// Eigenvalues of the biased covariance `(1/n) XᵀX`, largest first.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSummary {
    pub eigenvalues: Vec<f64>,
    pub total_variance: f64,
}

impl SpectrumSummary {
    /// Builds a summary from raw eigenvalues (any order).
    pub fn from_eigenvalues(mut eigenvalues: Vec<f64>) -> Self {
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        let total_variance = eigenvalues.iter().sum();
        Self {
            eigenvalues,
            total_variance,
        }
    }

    /// Eigenvalues with everything below `1e-12 × λ_max` (including solver
    /// negatives) set to zero.
    pub fn clamped(&self) -> Vec<f64> {
        let max = self.eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
        let cutoff = EIGEN_CLAMP_RELATIVE * max;
        self.eigenvalues
            .iter()
            .map(|&l| if l < cutoff || l <= 0.0 { 0.0 } else { l })
            .collect()
    }
}

/// Covariance spectrum of a centered matrix. The eigenproblem is solved on
/// whichever of `(1/n) XᵀX` (p×p) or `(1/n) XXᵀ` (n×n) is smaller; both share
/// their nonzero eigenvalues. Returns `min(n, p)` values.
pub fn covariance_spectrum(x: &RepresentationMatrix) -> Result<SpectrumSummary> {
    if !x.is_centered() {
        return Err(Error::NotCentered);
    }
    let (n, p) = (x.n(), x.p());
    let scale = 1.0 / n as f64;
    let small = if p <= n {
        x.data.t().dot(&x.data) * scale
    } else {
        x.data.dot(&x.data.t()) * scale
    };
    let m = small.nrows();
    let dm = DMatrix::from_fn(m, m, |i, j| 0.5 * (small[[i, j]] + small[[j, i]]));
    let eig = SymmetricEigen::new(dm);
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values.truncate(n.min(p));
    Ok(SpectrumSummary::from_eigenvalues(values))
}

/// Deterministic random source addressed by `(seed, stream)`.
///
/// Parallel tasks never share one of these; each derives its own stream so
/// results do not depend on scheduling.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// A fresh generator on another stream of the same seed.
    pub fn derive(&self, stream: u64) -> Self {
        Self::new(self.seed, stream)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.inner
    }
}

/// A direction drawn uniformly from the unit sphere in `ℝᵖ` (normalised
/// Gaussian sample).
pub fn sample_unit_direction(rng: &mut SeededRng, p: usize) -> Result<Array1<f64>> {
    if p == 0 {
        return Err(Error::InvalidParameter(
            "direction dimension must be >= 1".into(),
        ));
    }
    loop {
        let v: Array1<f64> = (0..p).map(|_| rng.standard_normal()).collect();
        let norm = v.dot(&v).sqrt();
        if norm > 1e-8 {
            return Ok(v / norm);
        }
    }
}

pub(crate) fn frobenius_sq(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}
