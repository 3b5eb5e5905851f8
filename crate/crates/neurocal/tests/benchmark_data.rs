//! Invariants of the benchmark dataset shipped under `data/london/`.

use neurocal::data::{convenience_from_distances, load_hw_dataset, load_matrix_csv, HwDataPaths};
use neurocal::hw::kappa_truth;
use neurocal::tensor::Shape;
use std::path::PathBuf;

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/london")
}

#[test]
fn zone_counts_and_units() {
    let paths = HwDataPaths {
        network: dir().join("exp_times.csv"),
        origin_zones: dir().join("origin_sizes.csv"),
        destination_zones: dir().join("dest_sizes.csv"),
    };
    let ds = load_hw_dataset(&paths, false).unwrap();
    assert_eq!(ds.origin.len(), 625, "one origin zone per ward");
    assert_eq!(ds.dest.len(), 49, "one destination zone per town centre");
    // Largest centre: 4.74456·10^5 m² of occupied retail floor space.
    let max = ds.dest.iter().cloned().fold(0.0_f64, f64::max);
    assert_eq!(ds.dest[0], 4.74456);
    assert_eq!(max, 4.74456);
    assert!((kappa_truth(&ds.origin, &ds.dest) - 8.301).abs() < 1e-9);
}

#[test]
fn anchor_trip_and_convenience_transform() {
    let times = load_matrix_csv(&dir().join("times.csv")).unwrap();
    let Shape::Matrix { rows, cols } = times.shape() else {
        panic!("matrix")
    };
    assert_eq!((rows, cols), (625, 49));

    // The anchor trip wins by public transport: 19.7 minutes.
    let anchor = times.data()[310 * cols];
    assert_eq!(anchor, 19.7 * 60.0);

    // The shipped convenience network is exactly the exponential transform
    // of the shipped times at the observed cost scale.
    let expect = convenience_from_distances(&times).unwrap();
    let shipped = load_matrix_csv(&dir().join("exp_times.csv")).unwrap();
    assert_eq!(expect, shipped);

    let max = times.data().iter().cloned().fold(0.0_f64, f64::max);
    assert!((shipped.data()[310 * cols] - (-anchor / max).exp()).abs() < 1e-15);
    assert!(shipped.data().iter().all(|&c| c > 0.0 && c <= 1.0));
}

#[test]
fn spatial_metric_files_are_consistent() {
    let distances = load_matrix_csv(&dir().join("distances.csv")).unwrap();
    let expect = convenience_from_distances(&distances).unwrap();
    let shipped = load_matrix_csv(&dir().join("exp_distances.csv")).unwrap();
    assert_eq!(expect, shipped);
}
