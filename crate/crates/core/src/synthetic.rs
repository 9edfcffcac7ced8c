//! Synthetic representation sets: two linearly separable unit cubes and
//! Gaussian clouds.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg::{center_columns, RepresentationMatrix, SeededRng};
use crate::transforms::Hyperplane;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoCubeConfig {
    pub points_per_cube: usize,
    pub dims: usize,
    /// Displacement of the second cube along the first axis.
    pub offset: f64,
    pub seed: u64,
}

impl TwoCubeConfig {
    pub const DEFAULT_OFFSET: f64 = 1.1;

    /// 2000 points per cube in 100 dimensions.
    pub fn reduced(seed: u64) -> Self {
        Self {
            points_per_cube: 2000,
            dims: 100,
            offset: Self::DEFAULT_OFFSET,
            seed,
        }
    }

    /// 10000 points per cube in 1000 dimensions.
    pub fn full(seed: u64) -> Self {
        Self {
            points_per_cube: 10_000,
            dims: 1000,
            offset: Self::DEFAULT_OFFSET,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwoCubes {
    /// Centered data; rows `0..points_per_cube` are the first cube.
    pub x: RepresentationMatrix,
    /// `true` for first-cube rows.
    pub mask: Vec<bool>,
    /// `⟨e₁, x⟩ = k` halfway between the cubes, in centered coordinates.
    pub hyperplane: Hyperplane,
    /// Set when `offset <= 1`: the cubes may overlap and the hyperplane need
    /// not separate them.
    pub overlapping: bool,
}

/// First cube uniform on `[-0.5, 0.5]^p`, second on the same cube shifted by
/// `offset` along axis 0. The data is centered afterwards and the hyperplane
/// offset moved with it.
pub fn two_cubes(cfg: &TwoCubeConfig) -> Result<TwoCubes> {
    if cfg.points_per_cube < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 points per cube, got {}",
            cfg.points_per_cube
        )));
    }
    if cfg.dims < 1 {
        return Err(Error::InvalidParameter("need at least 1 dimension".into()));
    }
    if !cfg.offset.is_finite() {
        return Err(Error::InvalidParameter("offset must be finite".into()));
    }
    let m = cfg.points_per_cube;
    let mut rng = SeededRng::new(cfg.seed, 0);
    let mut data = Array2::from_shape_fn((2 * m, cfg.dims), |_| rng.uniform() - 0.5);
    for mut row in data.rows_mut().into_iter().skip(m) {
        row[0] += cfg.offset;
    }
    let raw = RepresentationMatrix::new(data)?;
    let shift = raw.column_means()[0];
    let x = center_columns(&raw)?;

    let mut normal = Array1::zeros(cfg.dims);
    normal[0] = 1.0;
    let hyperplane = Hyperplane::new(normal, cfg.offset / 2.0 - shift)?;
    let mask = (0..2 * m).map(|i| i < m).collect();
    Ok(TwoCubes {
        x,
        mask,
        hyperplane,
        overlapping: cfg.offset <= 1.0,
    })
}

/// `n x p` i.i.d. standard normal entries, column-centered.
pub fn gaussian_cloud(n: usize, p: usize, seed: u64) -> Result<RepresentationMatrix> {
    let mut rng = SeededRng::new(seed, 0);
    let data = Array2::from_shape_fn((n, p), |_| rng.standard_normal());
    center_columns(&RepresentationMatrix::new(data)?)
}
