//! Representation transforms: subset translation, margin-preserving
//! directions, separation checks and random invertible linear maps.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg::{sample_unit_direction, RepresentationMatrix, SeededRng};

/// Which rows stay put (`subset_mask[i] == true`, the set `S`), the unit
/// direction the others move along, and how far.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationSpec {
    subset_mask: Vec<bool>,
    direction: Array1<f64>,
    distance: f64,
}

impl TranslationSpec {
    pub fn new(subset_mask: Vec<bool>, direction: Array1<f64>, distance: f64) -> Result<Self> {
        let norm = direction.dot(&direction).sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "direction must be unit length, has norm {norm}"
            )));
        }
        if !(distance >= 0.0 && distance.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "distance must be finite and >= 0, got {distance}"
            )));
        }
        validate_proper_mask(&subset_mask)?;
        Ok(Self {
            subset_mask,
            direction,
            distance,
        })
    }

    pub fn subset_mask(&self) -> &[bool] {
        &self.subset_mask
    }

    pub fn direction(&self) -> &Array1<f64> {
        &self.direction
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    /// Same subset and direction at another distance.
    pub fn with_distance(&self, distance: f64) -> Result<Self> {
        Self::new(self.subset_mask.clone(), self.direction.clone(), distance)
    }
}

pub(crate) fn validate_proper_mask(mask: &[bool]) -> Result<()> {
    let kept = mask.iter().filter(|&&m| m).count();
    if kept == 0 || kept == mask.len() {
        return Err(Error::InvalidSubset(format!(
            "mask must be neither all-true nor all-false ({kept} of {} set)",
            mask.len()
        )));
    }
    Ok(())
}

/// Moves every row outside `S` by `distance · direction`. Rows in `S` are
/// copied bit-for-bit. The result is not centered.
pub fn subset_translate(
    x: &RepresentationMatrix,
    spec: &TranslationSpec,
) -> Result<RepresentationMatrix> {
    if spec.subset_mask.len() != x.n() {
        return Err(Error::ShapeMismatch(format!(
            "mask has {} entries for {} rows",
            spec.subset_mask.len(),
            x.n()
        )));
    }
    if spec.direction.len() != x.p() {
        return Err(Error::ShapeMismatch(format!(
            "direction has {} entries for {} columns",
            spec.direction.len(),
            x.p()
        )));
    }
    let shift = &spec.direction * spec.distance;
    let mut data = x.data().to_owned();
    for (mut row, _) in data
        .rows_mut()
        .into_iter()
        .zip(&spec.subset_mask)
        .filter(|(_, &keep)| !keep)
    {
        row += &shift;
    }
    Ok(RepresentationMatrix::from_parts(data, false))
}

/// Affine hyperplane `{x : ⟨w, x⟩ = k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperplane {
    normal: Array1<f64>,
    offset: f64,
}

impl Hyperplane {
    pub fn new(normal: Array1<f64>, offset: f64) -> Result<Self> {
        let norm = normal.dot(&normal).sqrt();
        if !(norm > 0.0 && norm.is_finite()) || !offset.is_finite() {
            return Err(Error::InvalidParameter(
                "hyperplane normal must be nonzero and finite".into(),
            ));
        }
        Ok(Self { normal, offset })
    }

    pub fn normal(&self) -> &Array1<f64> {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// `⟨w, xᵢ⟩` for every row.
    pub fn project(&self, x: &RepresentationMatrix) -> Result<Array1<f64>> {
        if x.p() != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "hyperplane in {} dims, data has {}",
                self.dim(),
                x.p()
            )));
        }
        Ok(x.data().dot(&self.normal))
    }
}

/// A unit vector orthogonal to the hyperplane normal: translating along it
/// leaves every projection onto the normal unchanged.
pub fn margin_preserving_direction(h: &Hyperplane, rng: &mut SeededRng) -> Result<Array1<f64>> {
    let p = h.dim();
    if p < 2 {
        return Err(Error::NoOrthogonalDirection);
    }
    let w = &h.normal;
    let ww = w.dot(w);
    loop {
        let v = sample_unit_direction(rng, p)?;
        let projected = &v - &(w * (v.dot(w) / ww));
        let norm = projected.dot(&projected).sqrt();
        if norm >= 1e-8 {
            return Ok(projected / norm);
        }
    }
}

/// Removes the component of `v` along `w`.
pub fn project_out(v: &Array1<f64>, w: &Array1<f64>) -> Array1<f64> {
    v - &(w * (v.dot(w) / w.dot(w)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationReport {
    pub separated: bool,
    /// `k - max_{x ∈ S} ⟨w, x⟩`
    pub margin_s: f64,
    /// `min_{x ∉ S} ⟨w, x⟩ - k`
    pub margin_complement: f64,
}

/// Whether `S` lies strictly on the `⟨w,x⟩ < k` side and its complement
/// strictly on the other.
pub fn check_separation(
    x: &RepresentationMatrix,
    h: &Hyperplane,
    mask: &[bool],
) -> Result<SeparationReport> {
    if mask.len() != x.n() {
        return Err(Error::ShapeMismatch(format!(
            "mask has {} entries for {} rows",
            mask.len(),
            x.n()
        )));
    }
    let proj = h.project(x)?;
    let mut max_s = f64::NEG_INFINITY;
    let mut min_c = f64::INFINITY;
    for (&v, &in_s) in proj.iter().zip(mask) {
        if in_s {
            max_s = max_s.max(v);
        } else {
            min_c = min_c.min(v);
        }
    }
    let margin_s = h.offset - max_s;
    let margin_complement = min_c - h.offset;
    Ok(SeparationReport {
        separated: margin_s > 0.0 && margin_complement > 0.0,
        margin_s,
        margin_complement,
    })
}

/// An accepted Gaussian matrix and how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertibleDraw {
    pub matrix: Array2<f64>,
    /// `σ_max / σ_min`
    pub condition: f64,
    pub attempts: usize,
}

pub const MAX_INVERTIBILITY_ATTEMPTS: usize = 50;
const INVERTIBILITY_RATIO: f64 = 1e-10;

/// Draws `p x p` matrices with i.i.d. `N(mu, sigma²)` entries until one has
/// `σ_min > 1e-10 · σ_max`.
pub fn random_invertible_gaussian(
    p: usize,
    mu: f64,
    sigma: f64,
    rng: &mut SeededRng,
) -> Result<InvertibleDraw> {
    if p == 0 {
        return Err(Error::InvalidParameter(
            "matrix dimension must be >= 1".into(),
        ));
    }
    if !(sigma >= 0.0) || !mu.is_finite() || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "need finite mu and sigma >= 0, got mu = {mu}, sigma = {sigma}"
        )));
    }
    if sigma == 0.0 && mu == 0.0 {
        return Err(Error::InvalidParameter(
            "mu = 0 with sigma = 0 gives the zero matrix".into(),
        ));
    }
    for attempt in 1..=MAX_INVERTIBILITY_ATTEMPTS {
        let matrix = Array2::from_shape_fn((p, p), |_| mu + sigma * rng.standard_normal());
        let (smin, smax) = singular_value_range(&matrix);
        if smin > INVERTIBILITY_RATIO * smax {
            return Ok(InvertibleDraw {
                matrix,
                condition: smax / smin,
                attempts: attempt,
            });
        }
    }
    Err(Error::InvertibilityFailure {
        attempts: MAX_INVERTIBILITY_ATTEMPTS,
        mu,
        sigma,
    })
}

/// `(σ_min, σ_max)` of a dense matrix.
pub fn singular_value_range(m: &Array2<f64>) -> (f64, f64) {
    let dm = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]]);
    let sv = dm.singular_values();
    (sv.min(), sv.max())
}

/// Inverse of a square matrix via LU.
pub fn invert(m: &Array2<f64>) -> Result<Array2<f64>> {
    let (r, c) = m.dim();
    if r != c {
        return Err(Error::ShapeMismatch(format!(
            "cannot invert a {r}x{c} matrix"
        )));
    }
    let dm = DMatrix::from_fn(r, c, |i, j| m[[i, j]]);
    let inv = dm
        .try_inverse()
        .ok_or_else(|| Error::DegenerateData("matrix is singular".into()))?;
    Ok(Array2::from_shape_fn((r, c), |(i, j)| inv[(i, j)]))
}

/// `Y = X M`. Column means stay zero under a linear map, so the centered flag
/// carries over.
pub fn apply_linear(x: &RepresentationMatrix, m: &Array2<f64>) -> Result<RepresentationMatrix> {
    if m.nrows() != x.p() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} map for {} columns",
            m.nrows(),
            m.ncols(),
            x.p()
        )));
    }
    let data = x.data().dot(m);
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidMatrix(
            "linear map produced non-finite values".into(),
        ));
    }
    Ok(RepresentationMatrix::from_parts(data, x.is_centered()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::center_columns;
    use ndarray::array;

    fn cloud(n: usize, p: usize, seed: u64) -> RepresentationMatrix {
        let mut rng = SeededRng::new(seed, 0);
        center_columns(
            &RepresentationMatrix::new(Array2::from_shape_fn((n, p), |_| rng.standard_normal()))
                .unwrap(),
        )
        .unwrap()
    }

    fn e(p: usize, i: usize) -> Array1<f64> {
        let mut v = Array1::zeros(p);
        v[i] = 1.0;
        v
    }

    #[test]
    fn spec_validation() {
        assert!(TranslationSpec::new(vec![true, false], array![2.0, 0.0], 1.0).is_err());
        assert!(TranslationSpec::new(vec![true, true], e(2, 0), 1.0).is_err());
        assert!(TranslationSpec::new(vec![false, false], e(2, 0), 1.0).is_err());
        assert!(TranslationSpec::new(vec![true, false], e(2, 0), -1.0).is_err());
        assert!(TranslationSpec::new(vec![true, false], e(2, 0), 0.0).is_ok());
    }

    #[test]
    fn zero_distance_is_identity() {
        let x = cloud(6, 3, 1);
        let spec = TranslationSpec::new(vec![true, false, true, false, true, false], e(3, 1), 0.0)
            .unwrap();
        let y = subset_translate(&x, &spec).unwrap();
        assert_eq!(y.data(), x.data());
        assert!(!y.is_centered());
    }

    #[test]
    fn singleton_translation_moves_one_row() {
        let x = cloud(5, 2, 2);
        let mut mask = vec![true; 5];
        mask[3] = false;
        let y = subset_translate(&x, &TranslationSpec::new(mask, e(2, 0), 4.0).unwrap()).unwrap();
        for i in 0..5 {
            if i == 3 {
                assert_eq!(y.row(i)[0], x.row(i)[0] + 4.0);
            } else {
                assert_eq!(y.row(i), x.row(i));
            }
        }
    }

    #[test]
    fn mean_shift_after_translation() {
        let x = cloud(10, 3, 3);
        let v = array![0.6, 0.0, 0.8];
        let mask: Vec<bool> = (0..10).map(|i| i < 7).collect();
        let y = subset_translate(&x, &TranslationSpec::new(mask, v.clone(), 5.0).unwrap()).unwrap();
        let shift = y.column_means();
        let expected = &v * (3.0 / 10.0 * 5.0);
        for (a, b) in shift.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_checks() {
        let x = cloud(4, 2, 4);
        let spec = TranslationSpec::new(vec![true, false, true], e(2, 0), 1.0).unwrap();
        assert!(matches!(
            subset_translate(&x, &spec),
            Err(Error::ShapeMismatch(_))
        ));
        let spec = TranslationSpec::new(vec![true, false, true, true], e(3, 0), 1.0).unwrap();
        assert!(matches!(
            subset_translate(&x, &spec),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(
            apply_linear(&x, &Array2::eye(3)),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn orthogonal_direction_for_axis_normal() {
        let h = Hyperplane::new(e(3, 0), 0.0).unwrap();
        let mut rng = SeededRng::new(1, 1);
        for _ in 0..20 {
            let v = margin_preserving_direction(&h, &mut rng).unwrap();
            assert_eq!(v[0], 0.0);
            assert!((v.dot(&v).sqrt() - 1.0).abs() < 1e-12);
        }
        let line = Hyperplane::new(array![1.0], 0.0).unwrap();
        assert!(matches!(
            margin_preserving_direction(&line, &mut rng),
            Err(Error::NoOrthogonalDirection)
        ));
    }

    #[test]
    fn orthogonal_direction_for_generic_normal() {
        let mut rng = SeededRng::new(2, 0);
        for p in [2, 5, 40] {
            let w = sample_unit_direction(&mut rng, p).unwrap() * 3.7;
            let h = Hyperplane::new(w.clone(), 1.0).unwrap();
            let v = margin_preserving_direction(&h, &mut rng).unwrap();
            assert!(v.dot(&w).abs() < 1e-10);
        }
    }

    #[test]
    fn separation_margins() {
        let x = RepresentationMatrix::from_rows(&[
            vec![-2.0, 0.0],
            vec![-1.0, 5.0],
            vec![3.0, 1.0],
            vec![4.0, -2.0],
        ])
        .unwrap();
        let h = Hyperplane::new(e(2, 0), 0.5).unwrap();
        let mask = [true, true, false, false];
        let r = check_separation(&x, &h, &mask).unwrap();
        assert!(r.separated);
        assert_eq!(r.margin_s, 1.5);
        assert_eq!(r.margin_complement, 2.5);
        let r = check_separation(&x, &h, &[true, false, true, false]).unwrap();
        assert!(!r.separated);
    }

    #[test]
    fn translating_along_normal_shifts_margins() {
        let x = cloud(12, 3, 5);
        let w = array![2.0, 0.0, 0.0];
        let h = Hyperplane::new(w.clone(), 0.1).unwrap();
        let mask: Vec<bool> = (0..12).map(|i| x.row(i)[0] < 0.1).collect();
        if mask.iter().all(|&m| m) || mask.iter().all(|&m| !m) {
            return;
        }
        let before = check_separation(&x, &h, &mask).unwrap();
        let c = 3.0;
        let y =
            subset_translate(&x, &TranslationSpec::new(mask.clone(), e(3, 0), c).unwrap()).unwrap();
        let after = check_separation(&y, &h, &mask).unwrap();
        assert_eq!(after.margin_s, before.margin_s);
        assert!((after.margin_complement - before.margin_complement - c * 2.0).abs() < 1e-12);
    }

    #[test]
    fn invertible_gaussian_preconditions() {
        let mut rng = SeededRng::new(0, 0);
        assert!(random_invertible_gaussian(3, 0.0, 0.0, &mut rng).is_err());
        assert!(random_invertible_gaussian(3, 1.0, -1.0, &mut rng).is_err());
        // constant matrix is rank one: every draw is rejected
        assert!(matches!(
            random_invertible_gaussian(3, 2.0, 0.0, &mut rng),
            Err(Error::InvertibilityFailure { attempts: 50, .. })
        ));
        let d = random_invertible_gaussian(1, 2.0, 0.0, &mut rng).unwrap();
        assert_eq!(d.matrix[[0, 0]], 2.0);
    }

    #[test]
    fn standard_gaussian_accepted_first_draw() {
        let mut rng = SeededRng::new(9, 0);
        for p in [1, 5, 20, 50] {
            let d = random_invertible_gaussian(p, 0.0, 1.0, &mut rng).unwrap();
            assert_eq!(d.attempts, 1);
            assert!(d.condition >= 1.0);
        }
    }

    #[test]
    fn inverse_roundtrip() {
        let x = cloud(15, 6, 6);
        let mut rng = SeededRng::new(10, 0);
        let d = random_invertible_gaussian(6, 0.0, 1.0, &mut rng).unwrap();
        let y = apply_linear(&x, &d.matrix).unwrap();
        assert!(y.is_centered());
        let back = apply_linear(&y, &invert(&d.matrix).unwrap()).unwrap();
        let scale = x.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        let err = (&back.data() - &x.data())
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-6 * scale);
    }

    #[test]
    fn identity_map_is_noop() {
        let x = cloud(5, 3, 7);
        assert_eq!(apply_linear(&x, &Array2::eye(3)).unwrap().data(), x.data());
    }
}
