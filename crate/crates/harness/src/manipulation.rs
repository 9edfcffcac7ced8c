//! Translating part of a representation until its CKA with the original hits
//! a target.

use std::io::Write;

use ckascope::{
    manipulate_to_target, Hyperplane, ManipulationConfig, ManipulationOutcome, RepresentationMatrix,
};

use crate::error::{HarnessError, Result};
use crate::sweep::MarginCheck;

/// Mask for [`manipulate_to_target`] (`true` = fixed) that moves the first
/// `⌈fraction · |complement|⌉` rows of the complement of `subset`.
pub fn partial_complement_mask(subset: &[bool], fraction: f64) -> Result<Vec<bool>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(HarnessError::Usage(format!(
            "move fraction must be in (0, 1], got {fraction}"
        )));
    }
    let complement = subset.iter().filter(|&&m| !m).count();
    let wanted = (fraction * complement as f64).ceil() as usize;
    let mut left = wanted;
    let mask = subset
        .iter()
        .map(|&in_s| {
            if !in_s && left > 0 {
                left -= 1;
                false
            } else {
                true
            }
        })
        .collect();
    Ok(mask)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManipulationSummary {
    pub target_cka: f64,
    pub final_cka: f64,
    pub iterations: usize,
    pub converged: bool,
    pub translation_norm: f64,
    pub moved_rows: usize,
    /// Present when a hyperplane was given; `c` is the translation norm.
    pub margin: Option<MarginCheck>,
}

/// Runs from `y0` (or `X` when `None`). `separation_subset` is the `S` the
/// hyperplane separates, used for the margin comparison.
pub fn run_manipulation(
    x: &RepresentationMatrix,
    y0: Option<&RepresentationMatrix>,
    cfg: &ManipulationConfig,
    mask: &[bool],
    hyperplane: Option<&Hyperplane>,
    separation_subset: &[bool],
) -> Result<(ManipulationOutcome, ManipulationSummary)> {
    let start = y0.unwrap_or(x);
    let outcome = manipulate_to_target(x, start, cfg, mask)?;
    let translation_norm = outcome.translation.dot(&outcome.translation).sqrt();
    let margin = hyperplane
        .map(|h| MarginCheck::new(h, start, &outcome.y, separation_subset, translation_norm))
        .transpose()?;
    let summary = ManipulationSummary {
        target_cka: cfg.target_cka,
        final_cka: outcome.final_cka(),
        iterations: outcome.iterations(),
        converged: outcome.converged,
        translation_norm,
        moved_rows: mask.iter().filter(|&&m| !m).count(),
        margin,
    };
    Ok((outcome, summary))
}

pub fn write_summary<W: Write>(mut out: W, s: &ManipulationSummary) -> std::io::Result<()> {
    let opt = |f: fn(&MarginCheck) -> String| s.margin.as_ref().map_or("na".to_string(), f);
    writeln!(out, "target_cka,{}", s.target_cka)?;
    writeln!(out, "final_cka,{}", s.final_cka)?;
    writeln!(out, "iterations,{}", s.iterations)?;
    writeln!(out, "converged,{}", s.converged)?;
    writeln!(out, "translation_norm,{}", s.translation_norm)?;
    writeln!(out, "moved_rows,{}", s.moved_rows)?;
    writeln!(
        out,
        "max_projection_drift,{}",
        opt(|m| m.max_projection_drift.to_string())
    )?;
    writeln!(out, "margin_drift,{}", opt(|m| m.margin_drift.to_string()))?;
    writeln!(out, "bound,{}", opt(|m| m.bound.to_string()))?;
    writeln!(out, "margins_preserved,{}", opt(|m| m.ok().to_string()))
}
