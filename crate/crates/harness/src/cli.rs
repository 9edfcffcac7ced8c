//! Command-line interface. All configuration comes from flags.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use ckascope::io::{format_mask, write_matrix, MatrixFormat};
use ckascope::{
    cka, minibatch_cka, predict_limit, predict_limit_outlier, unbiased_cka, BandwidthMode,
    Constraint, KernelSpec, ManipulationConfig, SeededRng, TwoCubeConfig,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dataset::{read_matrix_file, Dataset, DatasetSource};
use crate::error::{HarnessError, Result};
use crate::invmap::{run_invmap, write_invmap_csv, InvmapConfig};
use crate::manifest::{sibling, InputFile, RunManifest};
use crate::manipulation::{partial_complement_mask, run_manipulation, write_summary};
use crate::sweep::{run_sweep, write_prediction_csv, DirectionMode, Grid, SweepConfig};

#[derive(Debug, Parser)]
#[command(
    name = "ckascope",
    version,
    about = "Centered kernel alignment experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// CKA between two matrix files.
    Cka(CkaArgs),
    /// Translate the complement of a subset over a distance grid.
    Sweep(SweepArgs),
    /// Push a single row away from the rest.
    Outlier(OutlierArgs),
    /// CKA between X and X·M for random Gaussian M.
    Invmap(InvmapArgs),
    /// Translate part of the data until CKA reaches a target.
    Manipulate(ManipulateArgs),
    /// Write a generated data set and its subset mask.
    Gen(GenArgs),
}

/// `linear` or `rbf:<median fraction>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelArg(pub KernelSpec);

impl FromStr for KernelArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "linear" {
            return Ok(Self(KernelSpec::Linear));
        }
        let fraction = s
            .strip_prefix("rbf:")
            .ok_or_else(|| format!("expected `linear` or `rbf:<fraction>`, got `{s}`"))?;
        let f: f64 = fraction
            .parse()
            .map_err(|_| format!("bad rbf fraction `{fraction}`"))?;
        KernelSpec::rbf(f).map(Self).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Binary,
}

impl From<FormatArg> for MatrixFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => MatrixFormat::Csv,
            FormatArg::Binary => MatrixFormat::Binary,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetKind {
    TwoCubes,
    Gaussian,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; sidecars are written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Repeatable. Defaults depend on the subcommand.
    #[arg(long = "kernel")]
    pub kernels: Vec<KernelArg>,
}

#[derive(Debug, Clone, Args)]
pub struct DatasetArgs {
    #[arg(long, value_enum)]
    pub dataset: Option<DatasetKind>,
    /// Two-cube data at 10000 points per cube in 1000 dimensions.
    #[arg(long)]
    pub full: bool,
    #[arg(long)]
    pub points_per_cube: Option<usize>,
    #[arg(long)]
    pub dims: Option<usize>,
    #[arg(long, default_value_t = TwoCubeConfig::DEFAULT_OFFSET)]
    pub offset: f64,
    /// Gaussian rows.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Gaussian columns.
    #[arg(long, default_value_t = 50)]
    pub p: usize,
    /// Matrix file (CSV or RSM1 binary); overrides `--dataset`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Subset mask for `--input`, one 0/1 per row.
    #[arg(long, requires = "input")]
    pub mask: Option<PathBuf>,
    /// One CSV row `w1,...,wp,k` for `--input`.
    #[arg(long, requires = "input")]
    pub hyperplane: Option<PathBuf>,
    /// Share of rows placed in a random subset when the data has no mask.
    #[arg(long, default_value_t = 0.5)]
    pub subset_fraction: f64,
}

impl DatasetArgs {
    fn source(&self, default: DatasetKind, seed: u64) -> DatasetSource {
        if let Some(path) = &self.input {
            return DatasetSource::File {
                path: path.clone(),
                mask: self.mask.clone(),
                hyperplane: self.hyperplane.clone(),
            };
        }
        match self.dataset.unwrap_or(default) {
            DatasetKind::TwoCubes => {
                let mut cfg = if self.full {
                    TwoCubeConfig::full(seed)
                } else {
                    TwoCubeConfig::reduced(seed)
                };
                cfg.points_per_cube = self.points_per_cube.unwrap_or(cfg.points_per_cube);
                cfg.dims = self.dims.unwrap_or(cfg.dims);
                cfg.offset = self.offset;
                DatasetSource::TwoCubes(cfg)
            }
            DatasetKind::Gaussian => DatasetSource::Gaussian {
                n: self.n,
                p: self.p,
                seed,
            },
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Explicit comma-separated distances in RMS units.
    #[arg(long, value_delimiter = ',')]
    pub distances: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.1)]
    pub grid_min: f64,
    #[arg(long, default_value_t = 1e4)]
    pub grid_max: f64,
    #[arg(long, default_value_t = 20)]
    pub grid_points: usize,
}

impl GridArgs {
    fn grid(&self) -> Result<Grid> {
        match &self.distances {
            Some(d) => Grid::explicit(d.clone()),
            None => Grid::geometric(self.grid_min, self.grid_max, self.grid_points),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Random,
    Margin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Biased,
    Unbiased,
    Minibatch,
}

#[derive(Debug, Clone, Args)]
pub struct CkaArgs {
    pub x: PathBuf,
    pub y: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value = "biased")]
    pub estimator: EstimatorArg,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, value_enum, default_value = "random")]
    pub direction: DirectionArg,
}

#[derive(Debug, Clone, Args)]
pub struct OutlierArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Row that is moved.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
}

#[derive(Debug, Clone, Args)]
pub struct InvmapArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long = "mu", value_delimiter = ',', default_value = "0,1")]
    pub mus: Vec<f64>,
    #[arg(long = "sigma", value_delimiter = ',', default_value = "0.1,1")]
    pub sigmas: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConstraintArg {
    None,
    Orthogonal,
}

#[derive(Debug, Clone, Args)]
pub struct ManipulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long, default_value_t = 0.05)]
    pub target: f64,
    /// Share of the complement rows that are translated.
    #[arg(long, default_value_t = 0.1)]
    pub move_fraction: f64,
    #[arg(long, value_enum, default_value = "orthogonal")]
    pub constraint: ConstraintArg,
    #[arg(long, default_value_t = 1.0)]
    pub step_size: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 0.01)]
    pub tolerance: f64,
    /// Starting representation Y0; defaults to the data set itself.
    #[arg(long)]
    pub start: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
}

fn kernels_or(common: &CommonArgs, default: &[KernelSpec]) -> Vec<KernelSpec> {
    if common.kernels.is_empty() {
        default.to_vec()
    } else {
        common.kernels.iter().map(|k| k.0).collect()
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn finish(mut manifest: RunManifest, out: &Path, started: Instant) -> Result<()> {
    manifest.wall_time_secs = started.elapsed().as_secs_f64();
    let path = manifest.write(out)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    let started = Instant::now();
    match cli.command {
        Command::Cka(args) => cmd_cka(args, started),
        Command::Sweep(args) => cmd_sweep(args, started),
        Command::Outlier(args) => cmd_outlier(args, started),
        Command::Invmap(args) => cmd_invmap(args, started),
        Command::Manipulate(args) => cmd_manipulate(args, started),
        Command::Gen(args) => cmd_gen(args, started),
    }
}

fn cmd_cka(args: CkaArgs, started: Instant) -> Result<()> {
    let (x, x_sha) = read_matrix_file(&args.x)?;
    let (y, y_sha) = read_matrix_file(&args.y)?;
    if x.n() != y.n() {
        return Err(
            ckascope::Error::ShapeMismatch(format!("{} rows vs {} rows", x.n(), y.n())).into(),
        );
    }
    let mut lines = String::new();
    let kernels = kernels_or(&args.common, &[KernelSpec::Linear]);
    for spec in kernels.iter().copied() {
        let value = match args.estimator {
            EstimatorArg::Biased => cka(&x, &y, spec)?.value,
            EstimatorArg::Unbiased => unbiased_cka(&x, &y, spec)?.value,
            EstimatorArg::Minibatch => {
                let mut rng = SeededRng::new(args.common.seed, 0);
                minibatch_cka(
                    &x,
                    &y,
                    spec,
                    args.batch_size,
                    &mut rng,
                    BandwidthMode::PerBatch,
                )?
                .value
            }
        };
        if kernels.len() == 1 {
            lines.push_str(&format!("{value:.12}\n"));
        } else {
            lines.push_str(&format!("{spec}\t{value:.12}\n"));
        }
    }
    print!("{lines}");
    let out = args.common.out.unwrap_or_else(|| PathBuf::from("cka.txt"));
    std::fs::write(&out, &lines)?;
    let mut manifest = RunManifest::new("cka", args.common.seed);
    manifest.inputs = vec![
        InputFile {
            path: args.x.display().to_string(),
            sha256: x_sha,
        },
        InputFile {
            path: args.y.display().to_string(),
            sha256: y_sha,
        },
    ];
    manifest.kernels = kernels.iter().map(|k| k.to_string()).collect();
    manifest.outputs = vec![out.display().to_string()];
    finish(manifest, &out, started)
}

fn cmd_sweep(args: SweepArgs, started: Instant) -> Result<()> {
    let seed = args.common.seed;
    let ds = Dataset::load(&args.data.source(DatasetKind::TwoCubes, seed))?;
    let subset = ds.subset_or_random(args.data.subset_fraction, seed)?;
    let direction = match args.direction {
        DirectionArg::Random => DirectionMode::Random,
        DirectionArg::Margin => DirectionMode::MarginPreserving(
            ds.hyperplane
                .clone()
                .ok_or_else(|| HarnessError::Usage("margin direction needs a hyperplane".into()))?,
        ),
    };
    let cfg = SweepConfig {
        kernels: kernels_or(
            &args.common,
            &[
                KernelSpec::Linear,
                KernelSpec::Rbf {
                    median_fraction: 0.2,
                },
                KernelSpec::Rbf {
                    median_fraction: 0.8,
                },
            ],
        ),
        grid: args.grid.grid()?,
        direction,
        seed,
    };
    let prediction = predict_limit(&ds.x, &subset)?;
    let result = run_sweep(&ds.x, &subset, prediction, &cfg)?;
    let out = args
        .common
        .out
        .unwrap_or_else(|| PathBuf::from("sweep.csv"));
    write_sweep_outputs(&out, &result)?;
    let mut manifest = RunManifest::new("sweep", seed);
    manifest.dataset = Some(ds.provenance);
    manifest.grid = Some(cfg.grid.points().to_vec());
    manifest.kernels = cfg.kernels.iter().map(|k| k.to_string()).collect();
    manifest.outputs = vec![
        out.display().to_string(),
        sibling(&out, "limit.csv").display().to_string(),
    ];
    finish(manifest, &out, started)
}

fn write_sweep_outputs(out: &Path, result: &crate::sweep::SweepResult) -> Result<()> {
    let mut w = create(out)?;
    result.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&sibling(out, "limit.csv"))?;
    write_prediction_csv(&mut w, &result.prediction)?;
    w.flush()?;
    Ok(())
}

fn cmd_outlier(args: OutlierArgs, started: Instant) -> Result<()> {
    let seed = args.common.seed;
    let ds = Dataset::load(&args.data.source(DatasetKind::Gaussian, seed))?;
    let prediction = predict_limit_outlier(&ds.x, args.index)?;
    let mut subset = vec![true; ds.x.n()];
    subset[args.index] = false;
    let cfg = SweepConfig {
        kernels: kernels_or(&args.common, &[KernelSpec::Linear]),
        grid: args.grid.grid()?,
        direction: DirectionMode::Random,
        seed,
    };
    let result = run_sweep(&ds.x, &subset, prediction, &cfg)?;
    let out = args
        .common
        .out
        .unwrap_or_else(|| PathBuf::from("outlier.csv"));
    write_sweep_outputs(&out, &result)?;
    let mut manifest = RunManifest::new("outlier", seed);
    manifest.dataset = Some(ds.provenance);
    manifest.grid = Some(cfg.grid.points().to_vec());
    manifest.kernels = cfg.kernels.iter().map(|k| k.to_string()).collect();
    manifest.outputs = vec![
        out.display().to_string(),
        sibling(&out, "limit.csv").display().to_string(),
    ];
    finish(manifest, &out, started)
}

fn cmd_invmap(args: InvmapArgs, started: Instant) -> Result<()> {
    let seed = args.common.seed;
    let ds = Dataset::load(&args.data.source(DatasetKind::TwoCubes, seed))?;
    let cfg = InvmapConfig {
        mus: args.mus,
        sigmas: args.sigmas,
        repeats: args.repeats,
        seed,
    };
    let rows = run_invmap(&ds.x, &cfg)?;
    let out = args
        .common
        .out
        .unwrap_or_else(|| PathBuf::from("invmap.csv"));
    let mut w = create(&out)?;
    write_invmap_csv(&mut w, &rows)?;
    w.flush()?;
    let mut manifest = RunManifest::new("invmap", seed);
    manifest.dataset = Some(ds.provenance);
    manifest.kernels = vec![KernelSpec::Linear.to_string()];
    manifest.outputs = vec![out.display().to_string()];
    finish(manifest, &out, started)
}

fn cmd_manipulate(args: ManipulateArgs, started: Instant) -> Result<()> {
    let seed = args.common.seed;
    let ds = Dataset::load(&args.data.source(DatasetKind::TwoCubes, seed))?;
    let subset = ds.subset_or_random(args.data.subset_fraction, seed)?;
    let mask = partial_complement_mask(&subset, args.move_fraction)?;
    let constraint = match args.constraint {
        ConstraintArg::None => Constraint::Unconstrained,
        ConstraintArg::Orthogonal => {
            Constraint::OrthogonalToHyperplane(ds.hyperplane.clone().ok_or_else(|| {
                HarnessError::Usage("orthogonal constraint needs a hyperplane".into())
            })?)
        }
    };
    let mut cfg = ManipulationConfig::new(args.target, constraint);
    cfg.step_size = args.step_size;
    cfg.max_iters = args.max_iters;
    cfg.tolerance = args.tolerance;
    cfg.seed = seed;

    let mut inputs = Vec::new();
    let start = match &args.start {
        Some(path) => {
            let (y0, sha256) = read_matrix_file(path)?;
            inputs.push(InputFile {
                path: path.display().to_string(),
                sha256,
            });
            Some(y0)
        }
        None => None,
    };
    let out = args
        .common
        .out
        .unwrap_or_else(|| PathBuf::from("manipulate.csv"));
    let mut manifest = RunManifest::new("manipulate", seed);
    manifest.dataset = Some(ds.provenance.clone());
    manifest.kernels = vec![KernelSpec::Linear.to_string()];
    manifest.inputs = inputs;
    match run_manipulation(
        &ds.x,
        start.as_ref(),
        &cfg,
        &mask,
        ds.hyperplane.as_ref(),
        &subset,
    ) {
        Ok((outcome, summary)) => {
            let mut w = create(&out)?;
            outcome.trace.write_csv(&mut w)?;
            w.flush()?;
            let summary_path = sibling(&out, "summary.csv");
            let mut w = create(&summary_path)?;
            write_summary(&mut w, &summary)?;
            w.flush()?;
            write_summary(std::io::stdout().lock(), &summary)?;
            if !summary.converged {
                eprintln!(
                    "warning: target not reached after {} iterations (cka {})",
                    summary.iterations, summary.final_cka
                );
            }
            manifest.outputs = vec![
                out.display().to_string(),
                summary_path.display().to_string(),
            ];
            finish(manifest, &out, started)
        }
        Err(HarnessError::Core(ckascope::Error::Stalled { trace })) => {
            let mut w = create(&out)?;
            trace.write_csv(&mut w)?;
            w.flush()?;
            manifest.outputs = vec![out.display().to_string()];
            finish(manifest, &out, started)?;
            Err(ckascope::Error::Stalled { trace }.into())
        }
        Err(e) => Err(e),
    }
}

fn cmd_gen(args: GenArgs, started: Instant) -> Result<()> {
    let seed = args.common.seed;
    let ds = Dataset::load(&args.data.source(DatasetKind::TwoCubes, seed))?;
    let subset = ds.subset_or_random(args.data.subset_fraction, seed)?;
    let default_name = match args.format {
        FormatArg::Csv => "dataset.csv",
        FormatArg::Binary => "dataset.bin",
    };
    let out = args
        .common
        .out
        .unwrap_or_else(|| PathBuf::from(default_name));
    write_matrix(&out, &ds.x, args.format.into())?;
    let mask_path = sibling(&out, "mask.csv");
    std::fs::write(&mask_path, format_mask(&subset))?;
    let mut outputs = vec![out.display().to_string(), mask_path.display().to_string()];
    if let Some(h) = &ds.hyperplane {
        let hp_path = sibling(&out, "hyperplane.csv");
        let values: Vec<String> = h
            .normal()
            .iter()
            .chain(std::iter::once(&h.offset()))
            .map(|v| v.to_string())
            .collect();
        std::fs::write(&hp_path, values.join(",") + "\n")?;
        outputs.push(hp_path.display().to_string());
    }
    let mut manifest = RunManifest::new("gen", seed);
    manifest.dataset = Some(ds.provenance);
    manifest.outputs = outputs;
    finish(manifest, &out, started)
}
