//! CKA between `X` and `X·M` for random Gaussian matrices `M`.

use std::io::Write;

use ckascope::{
    apply_linear, cka, random_invertible_gaussian, KernelSpec, RepresentationMatrix, SeededRng,
};
use rayon::prelude::*;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct InvmapConfig {
    pub mus: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub repeats: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvmapRow {
    pub mu: f64,
    pub sigma: f64,
    pub mean_cka: f64,
    /// Population standard deviation over repeats.
    pub std_cka: f64,
}

pub const INVMAP_HEADER: &str = "mu,sigma,mean_cka,std_cka";

/// Linear CKA over the `mus x sigmas` grid, `repeats` draws each.
///
/// Draw `j` of cell `k` (row-major over `mus`, then `sigmas`) uses RNG stream
/// `k · repeats + j`.
pub fn run_invmap(x: &RepresentationMatrix, cfg: &InvmapConfig) -> Result<Vec<InvmapRow>> {
    let cells: Vec<(f64, f64)> = cfg
        .mus
        .iter()
        .flat_map(|&mu| cfg.sigmas.iter().map(move |&s| (mu, s)))
        .collect();
    let repeats = cfg.repeats.max(1);
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|k| (0..repeats).map(move |j| (k, j)))
        .collect();
    let values: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(k, j)| {
            let (mu, sigma) = cells[k];
            let mut rng = SeededRng::new(cfg.seed, (k * repeats + j) as u64);
            let draw = random_invertible_gaussian(x.p(), mu, sigma, &mut rng)?;
            let y = apply_linear(x, &draw.matrix)?;
            Ok(cka(x, &y, KernelSpec::Linear)?.value)
        })
        .collect();
    let values = values.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(cells
        .iter()
        .enumerate()
        .map(|(k, &(mu, sigma))| {
            let chunk = &values[k * repeats..(k + 1) * repeats];
            let mean = chunk.iter().sum::<f64>() / repeats as f64;
            let var = chunk.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / repeats as f64;
            InvmapRow {
                mu,
                sigma,
                mean_cka: mean,
                std_cka: var.sqrt(),
            }
        })
        .collect())
}

pub fn write_invmap_csv<W: Write>(mut out: W, rows: &[InvmapRow]) -> std::io::Result<()> {
    writeln!(out, "{INVMAP_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.mu, r.sigma, r.mean_cka, r.std_cka)?;
    }
    Ok(())
}
