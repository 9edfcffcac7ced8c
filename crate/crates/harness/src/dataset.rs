//! Where the representation matrix comes from: a generated data set or
//! files on disk.

use std::path::{Path, PathBuf};

use ckascope::io::{decode_matrix, parse_csv_matrix, parse_mask};
use ckascope::{
    center_columns, gaussian_cloud, two_cubes, Hyperplane, RepresentationMatrix, SeededRng,
    TwoCubeConfig,
};
use ndarray::Array1;
use rand::seq::SliceRandom;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

/// RNG stream for random subsets of loaded or Gaussian data.
const SUBSET_STREAM: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    TwoCubes(TwoCubeConfig),
    Gaussian {
        n: usize,
        p: usize,
        seed: u64,
    },
    File {
        path: PathBuf,
        mask: Option<PathBuf>,
        hyperplane: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    TwoCubes {
        points_per_cube: usize,
        dims: usize,
        offset: f64,
        seed: u64,
    },
    Gaussian {
        n: usize,
        p: usize,
        seed: u64,
    },
    File {
        path: String,
        sha256: String,
        mask_path: Option<String>,
        mask_sha256: Option<String>,
    },
}

/// A centered representation matrix plus whatever structure came with it.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: RepresentationMatrix,
    /// `true` = member of `S`.
    pub mask: Option<Vec<bool>>,
    pub hyperplane: Option<Hyperplane>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn load(source: &DatasetSource) -> Result<Self> {
        match source {
            DatasetSource::TwoCubes(cfg) => {
                let cubes = two_cubes(cfg)?;
                if cubes.overlapping {
                    eprintln!(
                        "warning: offset {} <= 1, cubes may overlap and need not be separable",
                        cfg.offset
                    );
                }
                Ok(Self {
                    x: cubes.x,
                    mask: Some(cubes.mask),
                    hyperplane: Some(cubes.hyperplane),
                    provenance: Provenance::TwoCubes {
                        points_per_cube: cfg.points_per_cube,
                        dims: cfg.dims,
                        offset: cfg.offset,
                        seed: cfg.seed,
                    },
                })
            }
            &DatasetSource::Gaussian { n, p, seed } => Ok(Self {
                x: gaussian_cloud(n, p, seed)?,
                mask: None,
                hyperplane: None,
                provenance: Provenance::Gaussian { n, p, seed },
            }),
            DatasetSource::File {
                path,
                mask: mask_file,
                hyperplane,
            } => {
                let (raw, sha256) = read_matrix_file(path)?;
                let means = raw.column_means();
                let x = center_columns(&raw)?;
                let (mask, mask_sha256) = match mask_file {
                    Some(mp) => {
                        let bytes = read_bytes(mp)?;
                        let text = String::from_utf8_lossy(&bytes);
                        let m = parse_mask(&text).map_err(|source| input_error(mp, source))?;
                        if m.len() != x.n() {
                            return Err(input_error(
                                mp,
                                ckascope::Error::ShapeMismatch(format!(
                                    "mask has {} entries for {} rows",
                                    m.len(),
                                    x.n()
                                )),
                            ));
                        }
                        (Some(m), Some(hex::encode(Sha256::digest(&bytes))))
                    }
                    None => (None, None),
                };
                let hyperplane = match hyperplane {
                    Some(hp) => Some(read_hyperplane(hp, &means)?),
                    None => None,
                };
                Ok(Self {
                    x,
                    mask,
                    hyperplane,
                    provenance: Provenance::File {
                        path: path.display().to_string(),
                        sha256,
                        mask_path: mask_file.as_ref().map(|p| p.display().to_string()),
                        mask_sha256,
                    },
                })
            }
        }
    }

    /// The dataset's own mask, or a seeded random subset holding `fraction`
    /// of the rows.
    pub fn subset_or_random(&self, fraction: f64, seed: u64) -> Result<Vec<bool>> {
        if let Some(mask) = &self.mask {
            return Ok(mask.clone());
        }
        random_subset(self.x.n(), fraction, seed)
    }
}

/// Exactly `round(fraction · n)` rows (at least 1, at most `n - 1`), chosen
/// by a seeded shuffle.
pub fn random_subset(n: usize, fraction: f64, seed: u64) -> Result<Vec<bool>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(HarnessError::Usage(format!(
            "subset fraction must be in (0, 1), got {fraction}"
        )));
    }
    let size = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut rng = SeededRng::new(seed, SUBSET_STREAM);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng.rng_mut());
    let mut mask = vec![false; n];
    for &i in &order[..size] {
        mask[i] = true;
    }
    Ok(mask)
}

fn input_error(path: &Path, source: ckascope::Error) -> HarnessError {
    HarnessError::Input {
        path: path.to_path_buf(),
        source,
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| input_error(path, ckascope::Error::Io(e)))
}

/// Reads a matrix file and the SHA-256 of its exact bytes.
pub fn read_matrix_file(path: &Path) -> Result<(RepresentationMatrix, String)> {
    let bytes = read_bytes(path)?;
    let x = decode_matrix(&bytes).map_err(|source| input_error(path, source))?;
    Ok((x, hex::encode(Sha256::digest(&bytes))))
}

/// One CSV row `w₁,…,w_p,k` in the file's raw coordinates; the offset is
/// moved into the centered frame.
fn read_hyperplane(path: &Path, column_means: &Array1<f64>) -> Result<Hyperplane> {
    let bytes = read_bytes(path)?;
    let row = parse_csv_matrix(&bytes[..])
        .or_else(|_| {
            // a single row is not a valid representation matrix; parse it twice over
            let doubled = [&bytes[..], b"\n", &bytes[..]].concat();
            parse_csv_matrix(&doubled[..])
        })
        .map_err(|source| input_error(path, source))?;
    let values = row.row(0).to_vec();
    let p = column_means.len();
    if values.len() != p + 1 {
        return Err(input_error(
            path,
            ckascope::Error::ShapeMismatch(format!(
                "hyperplane needs {} values (normal + offset), found {}",
                p + 1,
                values.len()
            )),
        ));
    }
    let normal = Array1::from(values[..p].to_vec());
    let offset = values[p] - normal.dot(column_means);
    Hyperplane::new(normal, offset).map_err(|source| input_error(path, source))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_subset_size_and_determinism() {
        let a = random_subset(100, 0.3, 5).unwrap();
        assert_eq!(a.iter().filter(|&&m| m).count(), 30);
        assert_eq!(a, random_subset(100, 0.3, 5).unwrap());
        assert_ne!(a, random_subset(100, 0.3, 6).unwrap());
        assert_eq!(
            random_subset(10, 0.01, 1)
                .unwrap()
                .iter()
                .filter(|&&m| m)
                .count(),
            1
        );
        assert!(random_subset(10, 1.0, 1).is_err());
    }

    #[test]
    fn file_dataset_moves_hyperplane_offset() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("x.csv");
        std::fs::write(&data, "0,0\n1,0\n4,2\n5,2\n").unwrap();
        let hp = dir.path().join("h.csv");
        std::fs::write(&hp, "1,0,2.5\n").unwrap();
        let ds = Dataset::load(&DatasetSource::File {
            path: data,
            mask: None,
            hyperplane: Some(hp),
        })
        .unwrap();
        let h = ds.hyperplane.unwrap();
        assert!((h.offset() - 0.0).abs() < 1e-12);
        assert!(ds.x.is_centered());
        match ds.provenance {
            Provenance::File { sha256, .. } => assert_eq!(sha256.len(), 64),
            other => panic!("unexpected provenance {other:?}"),
        }
    }
}
