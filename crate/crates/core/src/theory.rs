//! Closed-form limit of linear CKA under subset translation.
//!
//! Translating every row outside a subset `S` of a centered `X` by `c·v`
//! drives `CKA_lin(X, X_{S,v,c})` towards
//!
//! ```text
//! Γ(ρ) · ‖E_S[x]‖² / E_X[‖x‖²] · √PR(X),   ρ = |S|/n,  Γ(ρ) = ρ/(1-ρ)
//! ```
//!
//! as `c → ∞`, for any unit `v`. The value is symmetric in `S` and its
//! complement.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::linalg::{covariance_spectrum, RepresentationMatrix, SpectrumSummary};

/// Predicted large-distance CKA together with each factor that produces it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitPrediction {
    pub rho: f64,
    pub gamma: f64,
    /// `‖mean of S‖²`
    pub mean_s_sq_norm: f64,
    /// Mean squared row norm of the centered data.
    pub mean_sq_norm: f64,
    /// Participation ratio of the covariance spectrum.
    pub pr: f64,
    pub predicted_cka_limit: f64,
}

/// `Γ(ρ) = ρ/(1-ρ)` on `(0, 1)`.
pub fn gamma(rho: f64) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidRho(rho));
    }
    Ok(rho / (1.0 - rho))
}

/// `(Σλ)² / Σλ²` over the clamped spectrum.
pub fn participation_ratio(spectrum: &SpectrumSummary) -> Result<f64> {
    let lambdas = spectrum.clamped();
    let sum: f64 = lambdas.iter().sum();
    let sum_sq: f64 = lambdas.iter().map(|l| l * l).sum();
    if !(sum > 0.0) {
        return Err(Error::DegenerateData(
            "all covariance eigenvalues are zero".into(),
        ));
    }
    Ok(sum * sum / sum_sq)
}

/// Limit prediction for translating the rows where `subset_mask` is false.
pub fn predict_limit(x: &RepresentationMatrix, subset_mask: &[bool]) -> Result<LimitPrediction> {
    if !x.is_centered() {
        return Err(Error::NotCentered);
    }
    let n = x.n();
    if subset_mask.len() != n {
        return Err(Error::InvalidSubset(format!(
            "mask length {} != {n} rows",
            subset_mask.len()
        )));
    }
    let size = subset_mask.iter().filter(|&&m| m).count();
    if size == 0 || size == n {
        return Err(Error::InvalidSubset(format!(
            "subset must be a proper non-empty subset, has {size} of {n} rows"
        )));
    }

    let rho = size as f64 / n as f64;
    let gamma = gamma(rho)?;
    let mut mean_s = Array1::<f64>::zeros(x.p());
    for (i, _) in subset_mask.iter().enumerate().filter(|(_, &m)| m) {
        mean_s += &x.row(i);
    }
    mean_s /= size as f64;
    let mean_s_sq_norm = mean_s.dot(&mean_s);
    let mean_sq_norm = x.mean_sq_row_norm();
    if !(mean_sq_norm > 0.0) {
        return Err(Error::DegenerateData(
            "all rows are zero after centering".into(),
        ));
    }
    let pr = participation_ratio(&covariance_spectrum(x)?)?;
    let predicted_cka_limit = gamma * mean_s_sq_norm / mean_sq_norm * pr.sqrt();
    Ok(LimitPrediction {
        rho,
        gamma,
        mean_s_sq_norm,
        mean_sq_norm,
        pr,
        predicted_cka_limit,
    })
}

/// Limit prediction when a single row is pushed away from the rest.
pub fn predict_limit_outlier(x: &RepresentationMatrix, index: usize) -> Result<LimitPrediction> {
    let n = x.n();
    if index >= n {
        return Err(Error::InvalidSubset(format!(
            "row {index} out of range for {n} rows"
        )));
    }
    if n < 3 {
        return Err(Error::TooFewSamples { needed: 3, got: n });
    }
    let mut mask = vec![false; n];
    mask[index] = true;
    predict_limit(x, &mask)
}
