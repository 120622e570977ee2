use hetblas_core::bench::{
    calibrate, emit, run_sweep, CalibrationTargets, FixedParams, OutputFormat, DEFAULT_SEED, DEFAULT_SIZES,
};
use hetblas_core::cluster::ClusterConfig;
use hetblas_core::runtime::OffloadPath;

#[test]
fn calibration_is_a_fixed_point_of_the_sweep() {
    let cfg = ClusterConfig::default();
    let cases = [
        CalibrationTargets::default(),
        CalibrationTargets {
            target_speedup: 1.8,
            target_copy_fraction: 0.3,
            target_map_advantage: 4.0,
            anchor_size: 96,
        },
        CalibrationTargets {
            target_speedup: 3.2,
            target_copy_fraction: 0.6,
            target_map_advantage: 12.0,
            anchor_size: 160,
        },
    ];
    for targets in cases {
        let params = calibrate(&targets, &cfg, &FixedParams::default()).unwrap();
        let n = targets.anchor_size;
        let sweep = run_sweep(&[n], &[OffloadPath::Copy, OffloadPath::ZeroCopy], &params, &cfg, DEFAULT_SEED).unwrap();
        let copy = sweep.get(n, OffloadPath::Copy).unwrap();
        let zero = sweep.get(n, OffloadPath::ZeroCopy).unwrap();

        let rel = |got: f64, want: f64| (got / want - 1.0).abs();
        assert!(rel(copy.speedup_vs_host, targets.target_speedup) < 1e-3, "{targets:?}");
        assert!(rel(copy.breakdown().copy_fraction(), targets.target_copy_fraction) < 1e-3, "{targets:?}");
        // page quantization only; these anchors are whole pages
        let map_ratio = copy.data_copy_cycles as f64 / zero.data_copy_cycles as f64;
        assert!(rel(map_ratio, targets.target_map_advantage) < 1e-3, "{targets:?}: {map_ratio}");
    }
}

#[test]
fn identical_inputs_give_identical_csv() {
    let cfg = ClusterConfig::default();
    let params = calibrate(&CalibrationTargets::default(), &cfg, &FixedParams::default()).unwrap();
    let run = || {
        let r = run_sweep(&DEFAULT_SIZES, &OffloadPath::ALL, &params, &cfg, DEFAULT_SEED).unwrap();
        emit(&r, OutputFormat::Csv)
    };
    assert_eq!(run(), run());
}

#[test]
fn copy_path_scaling_between_64_and_128() {
    let cfg = ClusterConfig::default();
    let params = calibrate(&CalibrationTargets::default(), &cfg, &FixedParams::default()).unwrap();
    let r = run_sweep(&[64, 128], &[OffloadPath::Copy], &params, &cfg, DEFAULT_SEED).unwrap();
    let (small, big) = (r.get(64, OffloadPath::Copy).unwrap(), r.get(128, OffloadPath::Copy).unwrap());
    let compute = big.compute_cycles as f64 / small.compute_cycles as f64;
    let copy = big.data_copy_cycles as f64 / small.data_copy_cycles as f64;
    assert!((compute / 8.0 - 1.0).abs() <= 0.05, "{compute}");
    assert!((copy / 4.0 - 1.0).abs() <= 0.05, "{copy}");
}
