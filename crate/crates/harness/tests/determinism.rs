use ckascope::{predict_limit, two_cubes, KernelSpec, TwoCubeConfig};
use ckascope_cli::sweep::{run_sweep, DirectionMode, Grid, SweepConfig};

fn sweep_bytes(threads: usize) -> Vec<u8> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    pool.install(|| {
        let cubes = two_cubes(&TwoCubeConfig {
            points_per_cube: 150,
            dims: 12,
            offset: 1.1,
            seed: 5,
        })
        .unwrap();
        let prediction = predict_limit(&cubes.x, &cubes.mask).unwrap();
        let cfg = SweepConfig {
            kernels: vec![
                KernelSpec::Linear,
                KernelSpec::Rbf {
                    median_fraction: 0.2,
                },
                KernelSpec::Rbf {
                    median_fraction: 0.8,
                },
            ],
            grid: Grid::default_sweep(),
            direction: DirectionMode::MarginPreserving(cubes.hyperplane.clone()),
            seed: 5,
        };
        let mut out = Vec::new();
        run_sweep(&cubes.x, &cubes.mask, prediction, &cfg)
            .unwrap()
            .write_csv(&mut out)
            .unwrap();
        out
    })
}

#[test]
fn sweep_csv_identical_across_thread_counts() {
    let one = sweep_bytes(1);
    assert_eq!(one, sweep_bytes(4));
    assert_eq!(one, sweep_bytes(3));
}
