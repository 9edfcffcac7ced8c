//! Translation sweeps: CKA between `X` and a translated copy over a grid of
//! distances, next to the closed-form large-distance limit.

use std::io::Write;

use ckascope::similarity::{rbf_cka_from_distances, PairwiseSqDistances};
use ckascope::{
    center_columns, check_separation, cka, margin_preserving_direction, sample_unit_direction,
    subset_translate, Hyperplane, KernelSpec, LimitPrediction, RepresentationMatrix, SeededRng,
    TranslationSpec,
};
use ndarray::Array1;
use rayon::prelude::*;

use crate::error::{HarnessError, Result};

/// Distances as multiples of the RMS row norm of `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    /// `count` points spaced geometrically from `lo` to `hi` inclusive.
    pub fn geometric(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) || count < 2 {
            return Err(HarnessError::Usage(format!(
                "bad geometric grid {lo}..{hi} with {count} points"
            )));
        }
        let (a, b) = (lo.log10(), hi.log10());
        let step = (b - a) / (count - 1) as f64;
        let mut points: Vec<f64> = (0..count)
            .map(|k| 10f64.powf(a + step * k as f64))
            .collect();
        points[0] = lo;
        points[count - 1] = hi;
        Ok(Self { points })
    }

    pub fn explicit(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(HarnessError::Usage("empty distance grid".into()));
        }
        if points.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(HarnessError::Usage(
                "grid distances must be finite and >= 0".into(),
            ));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(HarnessError::Usage(
                "grid distances must be strictly increasing".into(),
            ));
        }
        Ok(Self { points })
    }

    /// 20 points from 0.1 to 10⁴.
    pub fn default_sweep() -> Self {
        Self::geometric(0.1, 1e4, 20).expect("valid default grid")
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DirectionMode {
    Random,
    /// Orthogonal to the separating hyperplane's normal.
    MarginPreserving(Hyperplane),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub kernels: Vec<KernelSpec>,
    pub grid: Grid,
    pub direction: DirectionMode,
    pub seed: u64,
}

/// How far translation moved the projections onto the hyperplane normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginCheck {
    /// `max_i |⟨w, yᵢ⟩ - ⟨w, xᵢ⟩|`
    pub max_projection_drift: f64,
    /// Largest change of either separation margin.
    pub margin_drift: f64,
    /// `1e-9 · ‖w‖ · (1 + c)` with `c` the absolute distance.
    pub bound: f64,
}

impl MarginCheck {
    pub fn new(
        h: &Hyperplane,
        before: &RepresentationMatrix,
        after: &RepresentationMatrix,
        subset_mask: &[bool],
        distance: f64,
    ) -> Result<Self> {
        let px = h.project(before)?;
        let py = h.project(after)?;
        let max_projection_drift = px
            .iter()
            .zip(py.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let r0 = check_separation(before, h, subset_mask)?;
        let r1 = check_separation(after, h, subset_mask)?;
        let margin_drift = (r0.margin_s - r1.margin_s)
            .abs()
            .max((r0.margin_complement - r1.margin_complement).abs());
        Ok(Self {
            max_projection_drift,
            margin_drift,
            bound: 1e-9 * h.normal().dot(h.normal()).sqrt() * (1.0 + distance),
        })
    }

    pub fn ok(&self) -> bool {
        self.max_projection_drift < self.bound && self.margin_drift < self.bound
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// Multiple of the RMS row norm.
    pub distance: f64,
    /// One value per kernel, in [`SweepConfig::kernels`] order.
    pub cka: Vec<f64>,
    pub margin: Option<MarginCheck>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub kernels: Vec<KernelSpec>,
    pub prediction: LimitPrediction,
    pub rms: f64,
    pub direction: Array1<f64>,
    pub rows: Vec<SweepRow>,
}

/// RNG stream of the translation direction; grid point `k` owns stream `k + 1`.
const DIRECTION_STREAM: u64 = 0;

/// Moves the rows where `subset_mask` is false along one direction by each
/// grid distance and measures CKA against `x`.
///
/// Grid points are evaluated in parallel and returned in grid order; the
/// result does not depend on the thread count.
pub fn run_sweep(
    x: &RepresentationMatrix,
    subset_mask: &[bool],
    prediction: LimitPrediction,
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    if cfg.kernels.is_empty() {
        return Err(HarnessError::Usage("no kernels requested".into()));
    }
    let x = if x.is_centered() {
        x.clone()
    } else {
        center_columns(x)?
    };
    let rms = x.rms_row_norm();
    let mut rng = SeededRng::new(cfg.seed, DIRECTION_STREAM);
    let direction = match &cfg.direction {
        DirectionMode::Random => sample_unit_direction(&mut rng, x.p())?,
        DirectionMode::MarginPreserving(h) => margin_preserving_direction(h, &mut rng)?,
    };
    let base = TranslationSpec::new(subset_mask.to_vec(), direction.clone(), 0.0)?;
    let dx = cfg
        .kernels
        .iter()
        .any(|k| matches!(k, KernelSpec::Rbf { .. }))
        .then(|| PairwiseSqDistances::compute(x.data()));
    let rows: Vec<Result<SweepRow>> = cfg
        .grid
        .points()
        .par_iter()
        .map(|&rel| {
            let c = rel * rms;
            let moved = subset_translate(&x, &base.with_distance(c)?)?;
            let margin = match &cfg.direction {
                DirectionMode::MarginPreserving(h) => {
                    Some(MarginCheck::new(h, &x, &moved, subset_mask, c)?)
                }
                DirectionMode::Random => None,
            };
            let y = center_columns(&moved)?;
            let dy = dx.as_ref().map(|_| PairwiseSqDistances::compute(y.data()));
            let cka = cfg
                .kernels
                .iter()
                .map(|&spec| match spec {
                    KernelSpec::Linear => Ok(cka(&x, &y, spec)?.value),
                    KernelSpec::Rbf { median_fraction: f } => {
                        let dx = dx.as_ref().expect("distances computed for rbf");
                        let dy = dy.as_ref().expect("distances computed for rbf");
                        Ok(rbf_cka_from_distances(dx, f, dy, f)?.clamp(0.0, 1.0))
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(SweepRow {
                distance: rel,
                cka,
                margin,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        kernels: cfg.kernels.clone(),
        prediction,
        rms,
        direction,
        rows,
    })
}

impl SweepResult {
    pub fn header(&self) -> String {
        let mut cols = vec!["distance".to_string()];
        cols.extend(self.kernels.iter().map(|k| match k {
            KernelSpec::Linear => "cka_linear".to_string(),
            KernelSpec::Rbf { median_fraction } => format!("cka_rbf_f{median_fraction}"),
        }));
        cols.push("predicted_limit".into());
        cols.push("margin_ok".into());
        cols.join(",")
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.header())?;
        for row in &self.rows {
            write!(out, "{}", row.distance)?;
            for v in &row.cka {
                write!(out, ",{v}")?;
            }
            let margin = match row.margin {
                Some(m) => m.ok().to_string(),
                None => "na".to_string(),
            };
            writeln!(out, ",{},{margin}", self.prediction.predicted_cka_limit)?;
        }
        Ok(())
    }

    /// Column values for one kernel, if it was part of the sweep.
    pub fn column(&self, spec: KernelSpec) -> Option<Vec<f64>> {
        let idx = self.kernels.iter().position(|k| *k == spec)?;
        Some(self.rows.iter().map(|r| r.cka[idx]).collect())
    }
}

pub const PREDICTION_HEADER: &str = "rho,gamma,mean_s_sq_norm,mean_sq_norm,pr,predicted_limit";

pub fn write_prediction_csv<W: Write>(mut out: W, p: &LimitPrediction) -> std::io::Result<()> {
    writeln!(out, "{PREDICTION_HEADER}")?;
    writeln!(
        out,
        "{},{},{},{},{},{}",
        p.rho, p.gamma, p.mean_s_sq_norm, p.mean_sq_norm, p.pr, p.predicted_cka_limit
    )
}
