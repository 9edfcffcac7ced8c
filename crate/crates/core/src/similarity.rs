//! Kernels and CKA/HSIC estimators.
//!
//! Two families live here. The biased estimator `tr(KHLH)/(n-1)²` backs the
//! full-data CKA; the unbiased `HSIC₁` estimator backs minibatch CKA, where
//! per-batch terms are averaged before normalising.
//!
//! Full-data CKA never materialises `n x n` matrices: the linear kernel goes
//! through the feature-space identity `tr(XXᵀYYᵀ) = ‖XᵀY‖²_F` and the RBF
//! kernel through a condensed pairwise accumulation. [`hsic_biased`] on
//! explicit [`KernelMatrix`] values is the reference route the fast paths are
//! tested against.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{ensure_centered, frobenius_sq, gram, RepresentationMatrix, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    Linear,
    /// Gaussian kernel with `σ = median_fraction × median pairwise distance`.
    Rbf {
        median_fraction: f64,
    },
}

impl KernelSpec {
    pub fn rbf(median_fraction: f64) -> Result<Self> {
        if !(median_fraction > 0.0 && median_fraction.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "median fraction must be a positive finite number, got {median_fraction}"
            )));
        }
        Ok(Self::Rbf { median_fraction })
    }

    /// Column-friendly label: `linear` or `rbf_f0.2`.
    pub fn label(&self) -> String {
        match self {
            Self::Linear => "linear".to_string(),
            Self::Rbf { median_fraction } => format!("rbf_f{median_fraction}"),
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear => write!(f, "linear"),
            Self::Rbf { median_fraction } => write!(f, "rbf:{median_fraction}"),
        }
    }
}

/// A symmetric `n x n` kernel realisation.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    values: Array2<f64>,
    source: KernelSpec,
}

impl KernelMatrix {
    /// Wraps an explicit symmetric matrix (symmetry checked within 1e-10
    /// relative to the largest entry).
    pub fn new(values: Array2<f64>, source: KernelSpec) -> Result<Self> {
        let (r, c) = values.dim();
        if r != c {
            return Err(Error::ShapeMismatch(format!(
                "kernel must be square, got {r}x{c}"
            )));
        }
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for i in 0..r {
            for j in (i + 1)..r {
                if (values[[i, j]] - values[[j, i]]).abs() > 1e-10 * scale {
                    return Err(Error::InvalidMatrix(format!(
                        "kernel not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite kernel entry".into()));
        }
        Ok(Self { values, source })
    }

    pub(crate) fn from_parts(values: Array2<f64>, source: KernelSpec) -> Self {
        Self { values, source }
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn source(&self) -> KernelSpec {
        self.source
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    BiasedFull,
    UnbiasedMinibatch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CkaResult {
    pub value: f64,
    pub estimator: Estimator,
    pub kernel: KernelSpec,
}

/// Where minibatch CKA takes its RBF bandwidth from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BandwidthMode {
    #[default]
    PerBatch,
    /// One bandwidth per representation, from the full data set.
    Global,
}

/// Squared Euclidean distances for all pairs `i < j`, row-major
/// (`(0,1), (0,2), …, (1,2), …`).
#[derive(Debug, Clone)]
pub struct PairwiseSqDistances {
    n: usize,
    values: Vec<f64>,
}

impl PairwiseSqDistances {
    pub fn compute(x: ArrayView2<'_, f64>) -> Self {
        let n = x.nrows();
        let mut values = vec![0.0; n * n.saturating_sub(1) / 2];
        for_each_pair_row(&mut values, n, |i, row| {
            let xi = x.row(i);
            for (slot, j) in row.iter_mut().zip((i + 1)..n) {
                let xj = x.row(j);
                *slot = xi
                    .iter()
                    .zip(xj.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
            }
        });
        Self { n, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Median pairwise (non-squared) distance; the even-count median is the
    /// mean of the two middle distances.
    pub fn median_distance(&self) -> f64 {
        let mut scratch = self.values.clone();
        let m = scratch.len();
        let hi = m / 2;
        let (left, &mut upper, _) = scratch.select_nth_unstable_by(hi, f64::total_cmp);
        if m % 2 == 1 {
            upper.sqrt()
        } else {
            let lower = left.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            0.5 * (lower.sqrt() + upper.sqrt())
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Off-diagonal RBF kernel values `exp(-d²/(2σ²))` in condensed order.
    fn rbf_values(&self, sigma: f64) -> Vec<f64> {
        let scale = -1.0 / (2.0 * sigma * sigma);
        self.values
            .par_iter()
            .map(|d2| (d2 * scale).exp())
            .collect()
    }
}

/// Splits a condensed pair buffer into per-row slices and visits them in
/// parallel. Row `i` holds the pairs `(i, j)` for `j > i`.
fn for_each_pair_row<F>(values: &mut [f64], n: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let mut rows = Vec::with_capacity(n);
    let mut rest = values;
    for i in 0..n {
        let (head, tail) = rest.split_at_mut(n - 1 - i);
        rows.push((i, head));
        rest = tail;
    }
    rows.into_par_iter().for_each(|(i, row)| f(i, row));
}

fn row_offset(n: usize, i: usize) -> usize {
    i * n - i * (i + 1) / 2
}

/// `σ = fraction × median pairwise Euclidean distance`.
pub fn rbf_bandwidth(x: &RepresentationMatrix, fraction: f64) -> Result<f64> {
    bandwidth_from_distances(&PairwiseSqDistances::compute(x.data()), fraction)
}

fn bandwidth_from_distances(d: &PairwiseSqDistances, fraction: f64) -> Result<f64> {
    if !(fraction > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "median fraction must be > 0, got {fraction}"
        )));
    }
    if d.max() == 0.0 {
        return Err(Error::DegenerateData(
            "all rows identical; median distance is zero".into(),
        ));
    }
    Ok(fraction * d.median_distance())
}

/// RBF kernel `exp(-‖xᵢ-xⱼ‖²/(2σ²))` with an explicit bandwidth; the
/// diagonal is exactly 1. `source` records the rule `sigma` came from.
pub fn rbf_kernel_with_bandwidth(
    x: &RepresentationMatrix,
    sigma: f64,
    source: KernelSpec,
) -> Result<KernelMatrix> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidBandwidth(sigma));
    }
    let d = PairwiseSqDistances::compute(x.data());
    Ok(KernelMatrix::from_parts(
        expand_condensed(x.n(), &d.rbf_values(sigma), 1.0),
        source,
    ))
}

fn expand_condensed(n: usize, values: &[f64], diagonal: f64) -> Array2<f64> {
    let mut k = Array2::from_elem((n, n), diagonal);
    for i in 0..n {
        let off = row_offset(n, i);
        for j in (i + 1)..n {
            let v = values[off + j - i - 1];
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    k
}

/// Kernel realisation for `spec`; RBF bandwidths come from `x`'s own
/// pairwise distances.
pub fn kernel_matrix(x: &RepresentationMatrix, spec: KernelSpec) -> Result<KernelMatrix> {
    match spec {
        KernelSpec::Linear => Ok(gram(x)),
        KernelSpec::Rbf { median_fraction } => {
            let sigma = rbf_bandwidth(x, median_fraction)?;
            rbf_kernel_with_bandwidth(x, sigma, spec)
        }
    }
}

/// `HKH` computed as `K - row means - column means + grand mean`.
pub fn double_center(k: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = k.nrows() as f64;
    let row_means = k.sum_axis(Axis(1)) / n;
    let col_means = k.sum_axis(Axis(0)) / n;
    let grand = row_means.sum() / n;
    let mut out = k.to_owned();
    for ((i, j), v) in out.indexed_iter_mut() {
        *v += grand - row_means[i] - col_means[j];
    }
    out
}

fn check_same_size(k: &KernelMatrix, l: &KernelMatrix) -> Result<usize> {
    if k.n() != l.n() {
        return Err(Error::ShapeMismatch(format!(
            "kernel sizes {} and {} differ",
            k.n(),
            l.n()
        )));
    }
    Ok(k.n())
}

/// Biased HSIC `tr(KHLH)/(n-1)²`.
pub fn hsic_biased(k: &KernelMatrix, l: &KernelMatrix) -> Result<f64> {
    let n = check_same_size(k, l)?;
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let kc = double_center(k.values());
    // tr(K̃ L) = Σ_ij K̃_ij L_ji
    let t: f64 = kc
        .iter()
        .zip(l.values().t().iter())
        .map(|(a, b)| a * b)
        .sum();
    Ok(t / ((n - 1) as f64).powi(2))
}

/// Biased CKA `HSIC(K,L)/√(HSIC(K,K) HSIC(L,L))` from explicit kernels.
pub fn cka_from_kernels(k: &KernelMatrix, l: &KernelMatrix) -> Result<f64> {
    let kl = hsic_biased(k, l)?;
    let kk = hsic_biased(k, k)?;
    let ll = hsic_biased(l, l)?;
    normalise(kl, kk, ll)
}

fn normalise(xy: f64, xx: f64, yy: f64) -> Result<f64> {
    if !(xx > 0.0) || !(yy > 0.0) {
        return Err(Error::DegenerateData(
            "zero self-HSIC (constant representation)".into(),
        ));
    }
    Ok(xy / (xx * yy).sqrt())
}

fn check_rows(x: &RepresentationMatrix, y: &RepresentationMatrix) -> Result<()> {
    if x.n() != y.n() {
        return Err(Error::ShapeMismatch(format!(
            "row counts {} and {} differ",
            x.n(),
            y.n()
        )));
    }
    Ok(())
}

/// Full-data biased CKA. Inputs are centered internally when their flag is
/// unset. The value is clamped to `[0, 1]`.
pub fn cka(
    x: &RepresentationMatrix,
    y: &RepresentationMatrix,
    spec: KernelSpec,
) -> Result<CkaResult> {
    check_rows(x, y)?;
    let x = ensure_centered(x)?;
    let y = ensure_centered(y)?;
    let value = match spec {
        KernelSpec::Linear => linear_cka_centered(&x, &y)?,
        KernelSpec::Rbf { median_fraction } => {
            let dx = PairwiseSqDistances::compute(x.data());
            let dy = PairwiseSqDistances::compute(y.data());
            rbf_cka_from_distances(&dx, median_fraction, &dy, median_fraction)?
        }
    };
    Ok(CkaResult {
        value: value.clamp(0.0, 1.0),
        estimator: Estimator::BiasedFull,
        kernel: spec,
    })
}

/// Unclamped linear CKA of two centered matrices, choosing the cheaper of the
/// feature-space and Gram-space forms.
pub(crate) fn linear_cka_centered(
    x: &RepresentationMatrix,
    y: &RepresentationMatrix,
) -> Result<f64> {
    let n = x.n() as f64;
    let (px, py) = (x.p() as f64, y.p() as f64);
    let feature_cost = n * (px * py + px * px + py * py);
    let gram_cost = n * n * (px + py);
    let (xy, xx, yy) = if feature_cost <= gram_cost {
        let xd = x.data();
        let yd = y.data();
        (
            frobenius_sq(&xd.t().dot(&yd)),
            frobenius_sq(&xd.t().dot(&xd)),
            frobenius_sq(&yd.t().dot(&yd)),
        )
    } else {
        let k = gram(x);
        let l = gram(y);
        let kc = double_center(k.values());
        let lc = double_center(l.values());
        let dot = |a: &Array2<f64>, b: &Array2<f64>| {
            a.iter().zip(b.iter()).map(|(u, v)| u * v).sum::<f64>()
        };
        (dot(&kc, &lc), dot(&kc, &kc), dot(&lc, &lc))
    };
    normalise(xy, xx, yy)
}

/// Unclamped biased RBF CKA from precomputed pairwise squared distances.
///
/// Each side gets its own bandwidth, `fraction × median distance` of that
/// side. Nothing of size `n x n` is allocated beyond the condensed kernels.
pub fn rbf_cka_from_distances(
    dx: &PairwiseSqDistances,
    fraction_x: f64,
    dy: &PairwiseSqDistances,
    fraction_y: f64,
) -> Result<f64> {
    if dx.n() != dy.n() {
        return Err(Error::ShapeMismatch(format!(
            "row counts {} and {} differ",
            dx.n(),
            dy.n()
        )));
    }
    let sx = bandwidth_from_distances(dx, fraction_x)?;
    let sy = bandwidth_from_distances(dy, fraction_y)?;
    if !(sx > 0.0) {
        return Err(Error::InvalidBandwidth(sx));
    }
    if !(sy > 0.0) {
        return Err(Error::InvalidBandwidth(sy));
    }
    let kx = CondensedKernel::new(dx.n(), dx.rbf_values(sx), 1.0);
    let ky = CondensedKernel::new(dy.n(), dy.rbf_values(sy), 1.0);
    let (xy, xx, yy) = CondensedKernel::centered_products(&kx, &ky);
    normalise(xy, xx, yy)
}

/// Symmetric kernel stored as its strict upper triangle plus a constant
/// diagonal, with cached row sums.
struct CondensedKernel {
    n: usize,
    off: Vec<f64>,
    diagonal: f64,
    row_means: Array1<f64>,
    grand_mean: f64,
}

impl CondensedKernel {
    fn new(n: usize, off: Vec<f64>, diagonal: f64) -> Self {
        let mut sums = vec![diagonal; n];
        for i in 0..n {
            let o = row_offset(n, i);
            for (j, v) in ((i + 1)..n).zip(&off[o..o + n - 1 - i]) {
                sums[i] += v;
                sums[j] += v;
            }
        }
        let row_means = Array1::from(sums) / n as f64;
        let grand_mean = row_means.sum() / n as f64;
        Self {
            n,
            off,
            diagonal,
            row_means,
            grand_mean,
        }
    }

    fn centered(&self, i: usize, j: usize, v: f64) -> f64 {
        v - self.row_means[i] - self.row_means[j] + self.grand_mean
    }

    /// `(Σ K̃∘L̃, Σ K̃∘K̃, Σ L̃∘L̃)` over all `n²` entries.
    fn centered_products(a: &Self, b: &Self) -> (f64, f64, f64) {
        let n = a.n;
        let per_row: Vec<[f64; 3]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let ad = a.centered(i, i, a.diagonal);
                let bd = b.centered(i, i, b.diagonal);
                let mut acc = [ad * bd, ad * ad, bd * bd];
                let o = row_offset(n, i);
                for (j, (&av, &bv)) in
                    ((i + 1)..n).zip(a.off[o..o + n - 1 - i].iter().zip(&b.off[o..o + n - 1 - i]))
                {
                    let ac = a.centered(i, j, av);
                    let bc = b.centered(i, j, bv);
                    acc[0] += 2.0 * ac * bc;
                    acc[1] += 2.0 * ac * ac;
                    acc[2] += 2.0 * bc * bc;
                }
                acc
            })
            .collect();
        let mut total = [0.0; 3];
        for r in per_row {
            for k in 0..3 {
                total[k] += r[k];
            }
        }
        (total[0], total[1], total[2])
    }
}

/// Unbiased `HSIC₁` on kernels with their diagonals zeroed:
/// `[tr(K̃L̃) + (1ᵀK̃1)(1ᵀL̃1)/((n-1)(n-2)) - 2/(n-2)·1ᵀK̃L̃1] / (n(n-3))`.
pub fn hsic_unbiased(k: &KernelMatrix, l: &KernelMatrix) -> Result<f64> {
    let n = check_same_size(k, l)?;
    if n < 4 {
        return Err(Error::TooFewSamples { needed: 4, got: n });
    }
    Ok(hsic_unbiased_raw(k.values(), l.values()))
}

fn hsic_unbiased_raw(k: ArrayView2<'_, f64>, l: ArrayView2<'_, f64>) -> f64 {
    let n = k.nrows();
    let mut trace = 0.0;
    let mut k_sum = 0.0;
    let mut l_sum = 0.0;
    let mut k_cols = vec![0.0; n];
    let mut l_rows = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let kv = k[[i, j]];
            let lv = l[[i, j]];
            trace += kv * l[[j, i]];
            k_sum += kv;
            l_sum += lv;
            k_cols[j] += kv;
            l_rows[i] += lv;
        }
    }
    let cross: f64 = k_cols.iter().zip(&l_rows).map(|(a, b)| a * b).sum();
    let nf = n as f64;
    (trace + k_sum * l_sum / ((nf - 1.0) * (nf - 2.0)) - 2.0 / (nf - 2.0) * cross)
        / (nf * (nf - 3.0))
}

/// Full-data CKA with the unbiased estimator (one batch holding every row).
pub fn unbiased_cka(
    x: &RepresentationMatrix,
    y: &RepresentationMatrix,
    spec: KernelSpec,
) -> Result<CkaResult> {
    check_rows(x, y)?;
    let k = kernel_matrix(x, spec)?;
    let l = kernel_matrix(y, spec)?;
    let value = normalise(
        hsic_unbiased(&k, &l)?,
        hsic_unbiased(&k, &k)?,
        hsic_unbiased(&l, &l)?,
    )?;
    Ok(CkaResult {
        value,
        estimator: Estimator::UnbiasedMinibatch,
        kernel: spec,
    })
}

/// Minibatch CKA: rows shuffled once, split into `⌊n/batch_size⌋` full
/// batches (the remainder is dropped), `HSIC₁` averaged over batches for the
/// cross and both self terms, then normalised. The result is not clamped.
pub fn minibatch_cka(
    x: &RepresentationMatrix,
    y: &RepresentationMatrix,
    spec: KernelSpec,
    batch_size: usize,
    rng: &mut SeededRng,
    mode: BandwidthMode,
) -> Result<CkaResult> {
    check_rows(x, y)?;
    let n = x.n();
    if batch_size < 4 {
        return Err(Error::TooFewSamples {
            needed: 4,
            got: batch_size,
        });
    }
    if n < batch_size {
        return Err(Error::TooFewSamples {
            needed: batch_size,
            got: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let batches = n / batch_size;
    if batches > 1 || batch_size != n {
        order.shuffle(rng.rng_mut());
    }

    let global = match (spec, mode) {
        (KernelSpec::Rbf { median_fraction }, BandwidthMode::Global) => Some((
            rbf_bandwidth(x, median_fraction)?,
            rbf_bandwidth(y, median_fraction)?,
        )),
        _ => None,
    };

    let terms: Vec<Result<[f64; 3]>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let rows = &order[b * batch_size..(b + 1) * batch_size];
            let xb = RepresentationMatrix::from_parts(x.data().select(Axis(0), rows), false);
            let yb = RepresentationMatrix::from_parts(y.data().select(Axis(0), rows), false);
            let (k, l) = match (spec, global) {
                (KernelSpec::Rbf { .. }, Some((sx, sy))) => (
                    rbf_kernel_with_bandwidth(&xb, sx, spec)?,
                    rbf_kernel_with_bandwidth(&yb, sy, spec)?,
                ),
                _ => (kernel_matrix(&xb, spec)?, kernel_matrix(&yb, spec)?),
            };
            let kk = hsic_unbiased_raw(k.values(), k.values());
            let ll = hsic_unbiased_raw(l.values(), l.values());
            if !(kk > 0.0) || !(ll > 0.0) {
                return Err(Error::DegenerateData(format!(
                    "batch {b} has zero self-HSIC"
                )));
            }
            Ok([hsic_unbiased_raw(k.values(), l.values()), kk, ll])
        })
        .collect();
    let terms: Vec<[f64; 3]> = terms.into_iter().collect::<Result<_>>()?;

    let mean = |idx: usize| {
        pairwise_sum(&terms.iter().map(|t| t[idx]).collect::<Vec<_>>()) / batches as f64
    };
    let value = normalise(mean(0), mean(1), mean(2))?;
    Ok(CkaResult {
        value,
        estimator: Estimator::UnbiasedMinibatch,
        kernel: spec,
    })
}

/// Fixed-shape tree reduction; the result depends only on the input order.
pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        len => {
            let (a, b) = values.split_at(len / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}
