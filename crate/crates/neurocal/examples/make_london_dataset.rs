//! Builds the London-style benchmark dataset shipped under `data/london/`:
//! 625 origin wards, 49 retail centres, pairwise travel times and distances
//! for two transport modes (combined by taking the faster one), and the
//! derived convenience networks.
//!
//! The figures are synthetic but calibrated to the real geography's
//! landmarks: the West End is the largest centre with 4.74456·10⁵ m² of
//! retail floor space, the cost ratio Σ origin / Σ destination comes out at
//! exactly 8.301 (in £1000 per annum per m²), and the Kentish Town → West
//! End trip takes 19.7 minutes by public transport against 22.35 by car.
//!
//! Units on disk: origin sizes 10⁸ £/a, destination sizes 10⁵ m², times in
//! seconds, distances in metres.
//!
//! Run with `cargo run -p neurocal --example make_london_dataset --release`.

use neurocal::data::{
    convenience_from_distances, min_mode_distance, write_matrix_csv, write_vector_csv,
};
use neurocal::hw::kappa_truth;
use neurocal::tensor::Tensor;
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use rand_distr::{Distribution, LogNormal, Normal};
use std::path::Path;

const N_WARDS: usize = 625;
const N_CENTRES: usize = 49;
const KAPPA: f64 = 8.301;
const WEST_END_FLOORSPACE: f64 = 4.74456;
/// Ward index used for the Kentish Town anchor trip.
const KENTISH_TOWN: usize = 310;
const WEST_END: usize = 0;

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/london");
    let mut rng = StdRng::seed_from_u64(20160625);

    // Ward centroids over a Greater-London-sized disc (km), retail centres
    // clustered towards the middle with the West End at the origin.
    let wards: Vec<[f64; 2]> = (0..N_WARDS).map(|_| disc_point(&mut rng, 22.0)).collect();
    let mut centres: Vec<[f64; 2]> = vec![[0.0, 0.0]];
    centres.extend((1..N_CENTRES).map(|_| disc_point(&mut rng, 14.0)));

    // Pairwise travel costs per mode: crow-flight distance inflated by a
    // route factor, a boarding/parking overhead, and mode-specific speeds.
    let route_noise: LogNormal<f64> = LogNormal::new(0.0, 0.16).unwrap();
    let mut transit = Vec::with_capacity(N_WARDS * N_CENTRES);
    let mut driving = Vec::with_capacity(N_WARDS * N_CENTRES);
    let mut metres = Vec::with_capacity(N_WARDS * N_CENTRES);
    for ward in &wards {
        for centre in &centres {
            let km = euclid(ward, centre) * route_noise.sample(&mut rng).max(0.85);
            metres.push((km * 1000.0).round());
            let transit_kmh = 24.0;
            let driving_kmh = 21.0;
            transit.push((km / transit_kmh * 3600.0 + 300.0).round());
            driving.push((km / driving_kmh * 3600.0 + 240.0).round());
        }
    }
    let mut transit = Tensor::matrix(N_WARDS, N_CENTRES, transit);
    let mut driving = Tensor::matrix(N_WARDS, N_CENTRES, driving);
    // Anchor trip: 19.7 minutes by public transport, 22.35 by car.
    transit.data_mut()[KENTISH_TOWN * N_CENTRES + WEST_END] = 19.7 * 60.0;
    driving.data_mut()[KENTISH_TOWN * N_CENTRES + WEST_END] = 22.35 * 60.0;
    let times = min_mode_distance(&transit, &driving).expect("same shape");
    let distances = Tensor::matrix(N_WARDS, N_CENTRES, metres);

    // Retail floor space per centre (10⁵ m²): heavy-tailed with the West End
    // on top.
    let size_noise: LogNormal<f64> = LogNormal::new(-0.45, 0.55).unwrap();
    let mut dest: Vec<f64> = vec![WEST_END_FLOORSPACE];
    dest.extend((1..N_CENTRES).map(|_| (size_noise.sample(&mut rng)).clamp(0.12, 3.1)));

    // Ward spending budgets (10⁸ £/a), rescaled so the implied cost per unit
    // floor space is exactly KAPPA.
    let budget_noise: Normal<f64> = Normal::new(1.0, 0.35).unwrap();
    let mut origin: Vec<f64> = (0..N_WARDS)
        .map(|_| budget_noise.sample(&mut rng).max(0.15))
        .collect();
    let total_dest: f64 = dest.iter().sum();
    let total_origin: f64 = origin.iter().sum();
    let scale = KAPPA * total_dest / total_origin;
    for o in &mut origin {
        *o *= scale;
    }

    assert!((kappa_truth(&origin, &dest) - KAPPA).abs() < 1e-12);
    assert!(
        dest.iter().all(|&w| w <= WEST_END_FLOORSPACE),
        "West End is the largest centre"
    );
    assert_eq!(
        times.data()[KENTISH_TOWN * N_CENTRES + WEST_END],
        19.7 * 60.0,
        "transit wins the anchor trip"
    );

    let prov = vec![
        "synthetic Greater-London benchmark (make_london_dataset example, seed 20160625)"
            .to_string(),
        "units: origin 1e8 GBP/a, destination 1e5 m^2, times s, distances m".to_string(),
    ];
    write_vector_csv(
        &root.join("origin_sizes.csv"),
        "origin_size",
        &origin,
        &prov,
    )
    .unwrap();
    write_vector_csv(&root.join("dest_sizes.csv"), "dest_size", &dest, &prov).unwrap();
    write_matrix_csv(&root.join("times.csv"), &times, &prov).unwrap();
    write_matrix_csv(&root.join("distances.csv"), &distances, &prov).unwrap();
    write_matrix_csv(
        &root.join("exp_times.csv"),
        &convenience_from_distances(&times).unwrap(),
        &prov,
    )
    .unwrap();
    write_matrix_csv(
        &root.join("exp_distances.csv"),
        &convenience_from_distances(&distances).unwrap(),
        &prov,
    )
    .unwrap();
    println!("wrote {}", root.display());
}

fn disc_point(rng: &mut StdRng, radius: f64) -> [f64; 2] {
    loop {
        let x = rng.random_range(-radius..radius);
        let y = rng.random_range(-radius..radius);
        if x * x + y * y <= radius * radius {
            return [x, y];
        }
    }
}

fn euclid(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}
