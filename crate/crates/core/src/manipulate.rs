//! Pushing linear CKA to a chosen value without changing what a linear
//! read-out sees.
//!
//! The optimisation variable is one translation vector `t` added to a fixed
//! group of rows. When `t` is kept orthogonal to a hyperplane normal `w`,
//! every projection `⟨w, yᵢ⟩` is untouched, so any classifier thresholding
//! `⟨w, ·⟩` makes identical predictions on every iterate.
//!
//! Also here: the log-cosh loss between CKA maps and the multiplicative
//! λ scheduler that balances it against a task loss during training.

use std::io::Write;

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::linalg::{
    ensure_centered, frobenius_sq, sample_unit_direction, RepresentationMatrix, SeededRng,
};
use crate::similarity::{cka, KernelSpec};
use crate::transforms::{project_out, Hyperplane};

/// Symmetric `L x L` matrix of pairwise CKA values with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CkaMap {
    values: Array2<f64>,
}

impl CkaMap {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (r, c) = values.dim();
        if r != c {
            return Err(Error::ShapeMismatch(format!(
                "CKA map must be square, got {r}x{c}"
            )));
        }
        for i in 0..r {
            if (values[[i, i]] - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidParameter(format!(
                    "diagonal entry {i} is {}, not 1",
                    values[[i, i]]
                )));
            }
            for j in 0..r {
                let v = values[[i, j]];
                if !(0.0..=1.0 + 1e-10).contains(&v) {
                    return Err(Error::InvalidParameter(format!(
                        "entry ({i}, {j}) = {v} outside [0, 1]"
                    )));
                }
                if (v - values[[j, i]]).abs() > 1e-10 {
                    return Err(Error::InvalidParameter(format!(
                        "map not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { values })
    }

    /// Pairwise CKA between every pair of representation sets.
    pub fn from_representations(reps: &[RepresentationMatrix], spec: KernelSpec) -> Result<Self> {
        let l = reps.len();
        let mut values = Array2::eye(l);
        for i in 0..l {
            for j in (i + 1)..l {
                let v = cka(&reps[i], &reps[j], spec)?.value;
                values[[i, j]] = v;
                values[[j, i]] = v;
            }
        }
        Self::new(values)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn ln_cosh(d: f64) -> f64 {
    let a = d.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `Σ_ij ln cosh(current_ij - target_ij)` over every entry, diagonal included.
pub fn log_cosh_map_loss(current: &CkaMap, target: &CkaMap) -> Result<f64> {
    if current.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "maps of size {} and {}",
            current.len(),
            target.len()
        )));
    }
    Ok(current
        .values
        .iter()
        .zip(target.values.iter())
        .map(|(a, b)| ln_cosh(a - b))
        .sum())
}

/// Multiplicative schedule for the weight of a CKA-map loss: shrink λ when
/// accuracy has dropped more than the threshold below the original, grow it
/// otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSchedulerState {
    pub lambda: f64,
    pub scaling_factor: f64,
    pub accuracy_threshold: f64,
    pub original_accuracy: f64,
}

impl LambdaSchedulerState {
    pub fn new(
        lambda: f64,
        scaling_factor: f64,
        accuracy_threshold: f64,
        original_accuracy: f64,
    ) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be > 0, got {lambda}"
            )));
        }
        if !(scaling_factor > 0.0 && scaling_factor <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "scaling factor must be in (0, 1], got {scaling_factor}"
            )));
        }
        if !(accuracy_threshold >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "accuracy threshold must be >= 0, got {accuracy_threshold}"
            )));
        }
        if !(0.0..=100.0).contains(&original_accuracy) {
            return Err(Error::InvalidParameter(format!(
                "original accuracy must be in [0, 100], got {original_accuracy}"
            )));
        }
        Ok(Self {
            lambda,
            scaling_factor,
            accuracy_threshold,
            original_accuracy,
        })
    }
}

pub fn lambda_step(state: &LambdaSchedulerState, current_accuracy: f64) -> LambdaSchedulerState {
    let drop = state.original_accuracy - current_accuracy;
    let lambda = if drop > state.accuracy_threshold {
        state.lambda * state.scaling_factor
    } else {
        state.lambda / state.scaling_factor
    };
    LambdaSchedulerState { lambda, ..*state }
}

/// `∂ CKA_lin(X, Y) / ∂Y`, including the column centering applied to `Y`.
///
/// With `N = ‖XᵀY‖²`, `D_x = ‖XᵀX‖`, `D_y = ‖YᵀY‖` on centered data,
/// `∂CKA/∂Y = 2·X(XᵀY)/(D_x D_y) - CKA·2·Y(YᵀY)/D_y²`, then centered.
/// Intermediates are `p x p` or `n x n`, whichever is smaller.
pub fn linear_cka_gradient(
    x: &RepresentationMatrix,
    y: &RepresentationMatrix,
) -> Result<Array2<f64>> {
    if x.n() != y.n() {
        return Err(Error::ShapeMismatch(format!(
            "row counts {} and {} differ",
            x.n(),
            y.n()
        )));
    }
    let x = ensure_centered(x)?;
    let y = ensure_centered(y)?;
    let xd = x.data();
    let yd = y.data();
    let (n, px, py) = (x.n() as f64, x.p() as f64, y.p() as f64);

    let (x_xty, y_yty, numerator, dx, dy) = if px.max(py) <= n {
        let xty = xd.t().dot(&yd);
        let yty = yd.t().dot(&yd);
        let xtx = xd.t().dot(&xd);
        (
            xd.dot(&xty),
            yd.dot(&yty),
            frobenius_sq(&xty),
            frobenius_sq(&xtx).sqrt(),
            frobenius_sq(&yty).sqrt(),
        )
    } else {
        let k = xd.dot(&xd.t());
        let l = yd.dot(&yd.t());
        let kl: f64 = k.iter().zip(l.iter()).map(|(a, b)| a * b).sum();
        (
            k.dot(&yd),
            l.dot(&yd),
            kl,
            frobenius_sq(&k).sqrt(),
            frobenius_sq(&l).sqrt(),
        )
    };
    if !(dx > 0.0) || !(dy > 0.0) {
        return Err(Error::DegenerateData(
            "zero self-HSIC (constant representation)".into(),
        ));
    }
    let value = numerator / (dx * dy);
    let mut grad = x_xty * (2.0 / (dx * dy)) - y_yty * (2.0 * value / (dy * dy));
    let means = grad.mean_axis(Axis(0)).expect("n >= 2");
    grad -= &means.insert_axis(Axis(0));
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    Unconstrained,
    /// Keep the translation orthogonal to this hyperplane's normal.
    OrthogonalToHyperplane(Hyperplane),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManipulationConfig {
    pub target_cka: f64,
    pub constraint: Constraint,
    /// Initial step rate, in units of the RMS row norm of `Y0`.
    pub step_size: f64,
    pub max_iters: usize,
    pub tolerance: f64,
    /// Seeds the initial nudge away from a stationary start.
    pub seed: u64,
}

impl ManipulationConfig {
    pub fn new(target_cka: f64, constraint: Constraint) -> Self {
        Self {
            target_cka,
            constraint,
            step_size: 1.0,
            max_iters: 5000,
            tolerance: 0.01,
            seed: 0,
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.target_cka) {
            return Err(Error::InvalidParameter(format!(
                "target CKA must be in [0, 1], got {}",
                self.target_cka
            )));
        }
        if !(self.step_size > 0.0) || !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter(
                "step size and tolerance must be > 0".into(),
            ));
        }
        if let Constraint::OrthogonalToHyperplane(h) = &self.constraint {
            if h.dim() != p {
                return Err(Error::ShapeMismatch(format!(
                    "hyperplane in {} dims, data has {p}",
                    h.dim()
                )));
            }
            if p < 2 {
                return Err(Error::NoOrthogonalDirection);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub cka: f64,
    pub translation_norm: f64,
    /// `(CKA - target)²`
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ManipulationTrace {
    pub records: Vec<IterationRecord>,
}

impl ManipulationTrace {
    pub const CSV_HEADER: &'static str = "iter,cka,translation_norm,loss";

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{}",
                r.iter, r.cka, r.translation_norm, r.loss
            )?;
        }
        Ok(())
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }
}

#[derive(Debug, Clone)]
pub struct ManipulationOutcome {
    /// `Y0` with `translation` added to every moved row; not recentered.
    pub y: RepresentationMatrix,
    pub translation: Array1<f64>,
    pub trace: ManipulationTrace,
    pub converged: bool,
}

impl ManipulationOutcome {
    pub fn iterations(&self) -> usize {
        self.trace.last().map_or(0, |r| r.iter)
    }

    pub fn final_cka(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.cka)
    }
}

const STALL_DELTA: f64 = 1e-12;
const STALL_WINDOW: usize = 50;
const NUDGE: f64 = 1e-3;
const RATE_GROWTH: f64 = 1.1;
const RATE_SHRINK: f64 = 0.5;
const MAX_RATE_MULTIPLE: f64 = 1e3;

/// Linear CKA of `X` against `Y0 + ā tᵀ` as a function of `t`, where `ā` is
/// the centered indicator of the moved rows. Everything is precomputed so an
/// evaluation costs `O(p²)`.
pub(crate) struct TranslationObjective {
    a0: Array2<f64>,
    u: Array1<f64>,
    b0: Array2<f64>,
    g: Array1<f64>,
    alpha: f64,
    dx: f64,
}

impl TranslationObjective {
    pub(crate) fn new(
        x: &RepresentationMatrix,
        y0: &RepresentationMatrix,
        moved: &[bool],
    ) -> Result<Self> {
        let x = ensure_centered(x)?;
        let y0 = ensure_centered(y0)?;
        let n = x.n() as f64;
        let share = moved.iter().filter(|&&m| m).count() as f64 / n;
        let a_bar: Array1<f64> = moved
            .iter()
            .map(|&m| if m { 1.0 } else { 0.0 } - share)
            .collect();
        let xd = x.data();
        let yd = y0.data();
        let dx = frobenius_sq(&xd.t().dot(&xd)).sqrt();
        if !(dx > 0.0) {
            return Err(Error::DegenerateData("X is constant".into()));
        }
        Ok(Self {
            a0: xd.t().dot(&yd),
            u: xd.t().dot(&a_bar),
            b0: yd.t().dot(&yd),
            g: yd.t().dot(&a_bar),
            alpha: a_bar.dot(&a_bar),
            dx,
        })
    }

    /// `(CKA, ∂CKA/∂t)`.
    pub(crate) fn evaluate(&self, t: &Array1<f64>) -> Result<(f64, Array1<f64>)> {
        let a = &self.a0 + &outer(&self.u, t);
        let gt = outer(&self.g, t);
        let c = &self.b0 + &gt + gt.t() + &(outer(t, t) * self.alpha);
        let numerator = frobenius_sq(&a);
        let dy = frobenius_sq(&c).sqrt();
        if !(dy > 0.0) {
            return Err(Error::DegenerateData(
                "translated representation is constant".into(),
            ));
        }
        let value = numerator / (self.dx * dy);
        let d_num = a.t().dot(&self.u) * 2.0;
        let d_dy = c.dot(&(&self.g + &(t * self.alpha))) * (2.0 / dy);
        let grad = d_num / (self.dx * dy) - d_dy * (value / dy);
        Ok((value, grad))
    }
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let a2 = a.view().insert_axis(Axis(1));
    let b2 = b.view().insert_axis(Axis(0));
    a2.dot(&b2)
}

/// Gradient descent on `(CKA(X, Y) - target)²` over a translation `t` added to
/// the rows where `mask` is false (the complement of `S`), starting from
/// `t = 0`. Under [`Constraint::OrthogonalToHyperplane`], `t` is projected
/// onto the normal's orthogonal complement after every step.
///
/// The step rate starts at `step_size`, grows by 10% after every step that
/// brings CKA closer to the target (up to `1000 × step_size`), and halves
/// after a step that does not, which is then discarded.
///
/// Returns with `converged = false` when `max_iters` runs out, and
/// [`Error::Stalled`] when CKA moves less than `1e-12` for 50 consecutive
/// iterations while still outside the tolerance.
pub fn manipulate_to_target(
    x: &RepresentationMatrix,
    y0: &RepresentationMatrix,
    cfg: &ManipulationConfig,
    mask: &[bool],
) -> Result<ManipulationOutcome> {
    if x.n() != y0.n() || x.p() != y0.p() {
        return Err(Error::ShapeMismatch(format!(
            "X is {}x{}, Y0 is {}x{}",
            x.n(),
            x.p(),
            y0.n(),
            y0.p()
        )));
    }
    if mask.len() != x.n() {
        return Err(Error::ShapeMismatch(format!(
            "mask has {} entries for {} rows",
            mask.len(),
            x.n()
        )));
    }
    crate::transforms::validate_proper_mask(mask)?;
    cfg.validate(y0.p())?;

    let moved: Vec<bool> = mask.iter().map(|m| !m).collect();
    let objective = TranslationObjective::new(x, y0, &moved)?;
    let scale = ensure_centered(y0)?.rms_row_norm();
    if !(scale > 0.0) {
        return Err(Error::DegenerateData("Y0 is constant".into()));
    }
    let project = |v: Array1<f64>| match &cfg.constraint {
        Constraint::Unconstrained => v,
        Constraint::OrthogonalToHyperplane(h) => project_out(&v, h.normal()),
    };

    let p = y0.p();
    let mut unit_t = Array1::<f64>::zeros(p);
    let mut trace = ManipulationTrace::default();
    let (mut value, mut grad) = objective.evaluate(&unit_t)?;
    let record = |iter: usize, value: f64, t: &Array1<f64>| IterationRecord {
        iter,
        cka: value,
        translation_norm: t.dot(t).sqrt() * scale,
        loss: (value - cfg.target_cka).powi(2),
    };
    trace.records.push(record(0, value, &unit_t));

    let mut converged = (value - cfg.target_cka).abs() < cfg.tolerance;
    let mut rate = cfg.step_size;
    let mut still = 0;
    let mut iter = 0;
    while !converged && iter < cfg.max_iters {
        iter += 1;
        // d loss / d unit_t
        let step = project(grad.clone() * (2.0 * (value - cfg.target_cka) * scale));
        let step_norm = step.dot(&step).sqrt();
        let candidate = if iter == 1 && step_norm < 1e-10 {
            let mut rng = SeededRng::new(cfg.seed, 0);
            let nudge = loop {
                let v = project(sample_unit_direction(&mut rng, p)?);
                let norm = v.dot(&v).sqrt();
                if norm > 1e-8 {
                    break v / norm;
                }
            };
            nudge * NUDGE
        } else {
            project(&unit_t - &(step * rate))
        };
        let previous = value;
        let (next_value, next_grad) = objective.evaluate(&(&candidate * scale))?;
        let improved = (next_value - cfg.target_cka).abs() <= (value - cfg.target_cka).abs();
        if improved || iter == 1 {
            unit_t = candidate;
            (value, grad) = (next_value, next_grad);
            rate = (rate * RATE_GROWTH).min(cfg.step_size * MAX_RATE_MULTIPLE);
        } else {
            rate *= RATE_SHRINK;
        }
        trace.records.push(record(iter, value, &unit_t));
        converged = (value - cfg.target_cka).abs() < cfg.tolerance;
        if converged {
            break;
        }
        still = if (value - previous).abs() < STALL_DELTA {
            still + 1
        } else {
            0
        };
        if still >= STALL_WINDOW {
            return Err(Error::Stalled {
                trace: Box::new(trace),
            });
        }
    }

    let translation = &unit_t * scale;
    let mut data = y0.data().to_owned();
    for (mut row, _) in data.rows_mut().into_iter().zip(&moved).filter(|(_, &m)| m) {
        row += &translation;
    }
    let y = RepresentationMatrix::new(data)?;
    Ok(ManipulationOutcome {
        y,
        translation,
        trace,
        converged,
    })
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

    #[test]
    fn map_validation() {
        assert!(CkaMap::new(array![[1.0, 0.5], [0.5, 1.0]]).is_ok());
        assert!(CkaMap::new(array![[0.9, 0.5], [0.5, 1.0]]).is_err());
        assert!(CkaMap::new(array![[1.0, 0.5], [0.4, 1.0]]).is_err());
        assert!(CkaMap::new(array![[1.0, 1.5], [1.5, 1.0]]).is_err());
        assert!(CkaMap::new(array![[1.0, -0.1], [-0.1, 1.0]]).is_err());
    }

    #[test]
    fn map_from_representations() {
        let a = cloud(20, 3, 1);
        let b = cloud(20, 4, 2);
        let m =
            CkaMap::from_representations(&[a.clone(), b.clone(), a.clone()], KernelSpec::Linear)
                .unwrap();
        assert_eq!(m.len(), 3);
        assert!((m.values()[[0, 2]] - 1.0).abs() < 1e-10);
        assert_eq!(
            m.values()[[0, 1]],
            cka(&a, &b, KernelSpec::Linear).unwrap().value
        );
    }

    #[test]
    fn map_loss_examples() {
        let m = CkaMap::new(array![[1.0, 0.3, 0.2], [0.3, 1.0, 0.6], [0.2, 0.6, 1.0]]).unwrap();
        assert_eq!(log_cosh_map_loss(&m, &m).unwrap(), 0.0);
        let t = CkaMap::new(array![[1.0, 0.7, 0.2], [0.7, 1.0, 0.6], [0.2, 0.6, 1.0]]).unwrap();
        let expected = 2.0 * (0.4f64).cosh().ln();
        assert!((log_cosh_map_loss(&m, &t).unwrap() - expected).abs() < 1e-15);
        let small = CkaMap::new(Array2::eye(2)).unwrap();
        assert!(matches!(
            log_cosh_map_loss(&m, &small),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn ln_cosh_is_stable() {
        assert_eq!(ln_cosh(0.0), 0.0);
        assert!((ln_cosh(800.0) - (800.0 - std::f64::consts::LN_2)).abs() < 1e-9);
        assert!((ln_cosh(-0.3) - 0.3f64.cosh().ln()).abs() < 1e-15);
    }

    #[test]
    fn lambda_paths() {
        let s = LambdaSchedulerState::new(500.0, 0.8, 1.0, 90.0).unwrap();
        assert!((lambda_step(&s, 84.0).lambda - 400.0).abs() < 1e-12);
        assert!((lambda_step(&s, 90.0).lambda - 625.0).abs() < 1e-12);
        // drop equal to the threshold does not count as a breach
        assert!((lambda_step(&s, 89.0).lambda - 625.0).abs() < 1e-12);
        let back = lambda_step(&lambda_step(&s, 50.0), 95.0);
        assert!((back.lambda - 500.0).abs() < 1e-12);
        assert!(LambdaSchedulerState::new(0.0, 0.8, 1.0, 90.0).is_err());
        assert!(LambdaSchedulerState::new(1.0, 0.0, 1.0, 90.0).is_err());
        assert!(LambdaSchedulerState::new(1.0, 0.8, -1.0, 90.0).is_err());
        assert!(LambdaSchedulerState::new(1.0, 0.8, 1.0, 101.0).is_err());
    }

    #[test]
    fn gradient_vanishes_at_orthogonal_copy() {
        let x = cloud(10, 3, 4);
        let q = array![[0.0, 1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]];
        let y = RepresentationMatrix::new(x.data().dot(&q)).unwrap();
        let g = linear_cka_gradient(&x, &y).unwrap();
        assert!(frobenius_sq(&g).sqrt() < 1e-8);
    }

    #[test]
    fn gradient_symmetric_in_arguments() {
        let x = cloud(9, 3, 5);
        let y = cloud(9, 3, 6);
        let a = linear_cka_gradient(&x, &y).unwrap();
        // CKA(Y, X) as a function of its first argument
        let h = 1e-6;
        for i in 0..9 {
            for j in 0..3 {
                let mut plus = y.data().to_owned();
                plus[[i, j]] += h;
                let mut minus = y.data().to_owned();
                minus[[i, j]] -= h;
                let f = |m: Array2<f64>| {
                    cka(
                        &RepresentationMatrix::new(m).unwrap(),
                        &x,
                        KernelSpec::Linear,
                    )
                    .unwrap()
                    .value
                };
                let fd = (f(plus) - f(minus)) / (2.0 * h);
                assert!((fd - a[[i, j]]).abs() < 1e-6, "{fd} vs {}", a[[i, j]]);
            }
        }
    }

    #[test]
    fn wide_gradient_matches_finite_differences() {
        // p > n takes the Gram-space route
        let x = cloud(6, 9, 7);
        let y = cloud(6, 8, 8);
        let wide = linear_cka_gradient(&x, &y).unwrap();
        let h = 1e-6;
        for i in 0..6 {
            for j in 0..8 {
                let mut plus = y.data().to_owned();
                plus[[i, j]] += h;
                let mut minus = y.data().to_owned();
                minus[[i, j]] -= h;
                let f = |m: Array2<f64>| {
                    cka(
                        &x,
                        &RepresentationMatrix::new(m).unwrap(),
                        KernelSpec::Linear,
                    )
                    .unwrap()
                    .value
                };
                let fd = (f(plus) - f(minus)) / (2.0 * h);
                assert!((fd - wide[[i, j]]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn objective_matches_full_gradient() {
        let x = cloud(15, 4, 9);
        let y0 = cloud(15, 4, 10);
        let moved: Vec<bool> = (0..15).map(|i| i % 4 == 1).collect();
        let obj = TranslationObjective::new(&x, &y0, &moved).unwrap();
        let t = array![0.7, -1.2, 0.3, 2.0];
        let (value, grad_t) = obj.evaluate(&t).unwrap();

        let mut yd = y0.data().to_owned();
        for (mut row, _) in yd.rows_mut().into_iter().zip(&moved).filter(|(_, &m)| m) {
            row += &t;
        }
        let y = RepresentationMatrix::new(yd).unwrap();
        let direct = cka(&x, &y, KernelSpec::Linear).unwrap().value;
        assert!((value - direct).abs() < 1e-12);
        let full = linear_cka_gradient(&x, &y).unwrap();
        let mut chained = Array1::<f64>::zeros(4);
        for (row, _) in full.rows().into_iter().zip(&moved).filter(|(_, &m)| m) {
            chained += &row;
        }
        for (a, b) in grad_t.iter().zip(chained.iter()) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn already_on_target_takes_no_steps() {
        let x = cloud(20, 3, 11);
        let y0 = cloud(20, 3, 12);
        let start = cka(&x, &y0, KernelSpec::Linear).unwrap().value;
        let mask: Vec<bool> = (0..20).map(|i| i >= 5).collect();
        let out = manipulate_to_target(
            &x,
            &y0,
            &ManipulationConfig::new(start, Constraint::Unconstrained),
            &mask,
        )
        .unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations(), 0);
        assert!(out.translation.iter().all(|&v| v == 0.0));
        assert_eq!(out.y.data(), y0.data());

        let out = manipulate_to_target(
            &x,
            &x,
            &ManipulationConfig::new(1.0, Constraint::Unconstrained),
            &mask,
        )
        .unwrap();
        assert_eq!(out.iterations(), 0);
    }

    #[test]
    fn reaches_moderate_target_from_identity() {
        let x = cloud(60, 4, 13);
        let mask: Vec<bool> = (0..60).map(|i| i >= 10).collect();
        let h = Hyperplane::new(array![1.0, 1.0, 0.0, 0.0], 0.0).unwrap();
        let cfg = ManipulationConfig::new(0.5, Constraint::OrthogonalToHyperplane(h.clone()));
        let out = manipulate_to_target(&x, &x, &cfg, &mask).unwrap();
        assert!(out.converged, "{:?}", out.trace.last());
        assert!((cka(&x, &out.y, KernelSpec::Linear).unwrap().value - 0.5).abs() < 0.01);
        let before = h.project(&x).unwrap();
        let after = h.project(&out.y).unwrap();
        let bound = 1e-9
            * h.normal().dot(h.normal()).sqrt()
            * (1.0 + out.translation.dot(&out.translation).sqrt());
        for (a, b) in before.iter().zip(after.iter()) {
            assert!((a - b).abs() <= bound);
        }
    }

    #[test]
    fn trace_csv_layout() {
        let trace = ManipulationTrace {
            records: vec![IterationRecord {
                iter: 0,
                cka: 1.0,
                translation_norm: 0.0,
                loss: 0.25,
            }],
        };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "iter,cka,translation_norm,loss\n0,1,0,0.25\n"
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = cloud(10, 2, 14);
        let mask: Vec<bool> = (0..10).map(|i| i < 5).collect();
        let bad_target = ManipulationConfig::new(1.5, Constraint::Unconstrained);
        assert!(manipulate_to_target(&x, &x, &bad_target, &mask).is_err());
        let cfg = ManipulationConfig::new(0.5, Constraint::Unconstrained);
        assert!(matches!(
            manipulate_to_target(&x, &x, &cfg, &[true; 10]),
            Err(Error::InvalidSubset(_))
        ));
        assert!(matches!(
            manipulate_to_target(&x, &x, &cfg, &[true; 3]),
            Err(Error::ShapeMismatch(_))
        ));
        let line = Hyperplane::new(array![1.0, 0.0, 0.0], 0.0).unwrap();
        let cfg = ManipulationConfig::new(0.5, Constraint::OrthogonalToHyperplane(line));
        assert!(matches!(
            manipulate_to_target(&x, &x, &cfg, &mask),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
