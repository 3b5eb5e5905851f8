//! Posterior marginal densities from loss-potential samples.
//!
//! Samples (λ̂, J) collected during training are weighted by exp(−J) under a
//! uniform prior, histogrammed per parameter, smoothed with a Gaussian
//! kernel and normalized to unit integral. Losses are shifted by their
//! minimum before exponentiation; this rescales the unnormalized posterior
//! by a constant (the normalized density is unchanged) and keeps the weights
//! from underflowing early in training.

use crate::error::{Error, Result};
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct DensityOptions {
    pub n_bins: usize,
    /// Kernel bandwidth override; otherwise Silverman's rule on the
    /// exp-weighted effective sample size.
    pub bandwidth: Option<f64>,
    /// Peak detection threshold as a fraction of the global maximum.
    pub prominence: f64,
}

impl Default for DensityOptions {
    fn default() -> Self {
        DensityOptions {
            n_bins: 100,
            bandwidth: None,
            prominence: 0.05,
        }
    }
}

/// Smoothed, normalized marginal density of one parameter on a uniform grid.
#[derive(Debug, Clone, Serialize)]
pub struct MarginalDensity {
    pub parameter: String,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Peak {
    pub location: f64,
    pub height: f64,
    /// Width at half height, linearly interpolated between grid points.
    pub width: f64,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct PeakStats {
    pub peaks: Vec<Peak>,
    pub mean_width: f64,
    /// Standard deviation of the widths across peaks; 0 for a single peak.
    pub std_width: f64,
}

/// Exp(−J)-weighted, kernel-smoothed marginal of `values`.
pub fn marginal(
    parameter: &str,
    values: &[f64],
    losses: &[f64],
    opts: &DensityOptions,
) -> Result<MarginalDensity> {
    if values.len() != losses.len() {
        return Err(Error::Density(format!(
            "{} values vs {} losses",
            values.len(),
            losses.len()
        )));
    }
    let pairs: Vec<(f64, f64)> = values
        .iter()
        .zip(losses)
        .filter(|(v, j)| v.is_finite() && j.is_finite())
        .map(|(&v, &j)| (v, j))
        .collect();
    if pairs.len() < 2 {
        return Err(Error::Density(format!(
            "need at least 2 finite samples, got {}",
            pairs.len()
        )));
    }
    if opts.n_bins < 2 {
        return Err(Error::Density(format!(
            "need at least 2 bins, got {}",
            opts.n_bins
        )));
    }

    let j_min = pairs.iter().map(|(_, j)| *j).fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = pairs.iter().map(|(_, j)| (-(j - j_min)).exp()).collect();
    let total_weight: f64 = weights.iter().sum();
    if !(total_weight > 0.0) || !total_weight.is_finite() {
        return Err(Error::Density(
            "all sample weights underflowed; shift losses before exponentiating".into(),
        ));
    }

    let mut lo = pairs.iter().map(|(v, _)| *v).fold(f64::INFINITY, f64::min);
    let mut hi = pairs
        .iter()
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        // Degenerate sample cloud: give the grid a tiny physical extent.
        let pad = lo.abs().max(1.0) * 1e-6;
        lo -= pad;
        hi += pad;
    }
    let n = opts.n_bins;
    let spacing = (hi - lo) / (n - 1) as f64;
    let grid: Vec<f64> = (0..n).map(|i| lo + spacing * i as f64).collect();

    // Nearest-grid-point histogram of the weights.
    let mut hist = vec![0.0; n];
    for ((v, _), w) in pairs.iter().zip(&weights) {
        let idx = (((v - lo) / spacing).round() as usize).min(n - 1);
        hist[idx] += w;
    }

    let bandwidth = match opts.bandwidth {
        Some(b) if b > 0.0 => b,
        Some(b) => {
            return Err(Error::Density(format!(
                "bandwidth must be positive, got {b}"
            )))
        }
        None => silverman_bandwidth(&pairs, &weights, total_weight).unwrap_or(spacing),
    };

    // Kernel columns are normalized per source bin: smoothing moves mass
    // around but neither creates nor destroys it.
    let mut density = vec![0.0; n];
    let cutoff = (6.0 * bandwidth / spacing).ceil() as usize;
    for (j, &mass) in hist.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let lo_i = j.saturating_sub(cutoff);
        let hi_i = (j + cutoff).min(n - 1);
        let mut kernel = Vec::with_capacity(hi_i - lo_i + 1);
        let mut ksum = 0.0;
        for i in lo_i..=hi_i {
            let z = (grid[i] - grid[j]) / bandwidth;
            let k = (-0.5 * z * z).exp();
            kernel.push(k);
            ksum += k;
        }
        for (offset, k) in kernel.iter().enumerate() {
            density[lo_i + offset] += mass * k / ksum;
        }
    }

    let integral = trapezoid(&grid, &density);
    if !(integral > 0.0) {
        return Err(Error::Density("density integrates to zero".into()));
    }
    for d in &mut density {
        *d /= integral;
    }
    Ok(MarginalDensity {
        parameter: parameter.to_string(),
        grid,
        density,
        bandwidth,
    })
}

/// Silverman's rule of thumb over the weighted sample, with the Kish
/// effective sample size.
fn silverman_bandwidth(pairs: &[(f64, f64)], weights: &[f64], total: f64) -> Option<f64> {
    let mean: f64 = pairs
        .iter()
        .zip(weights)
        .map(|((v, _), w)| v * w)
        .sum::<f64>()
        / total;
    let var: f64 = pairs
        .iter()
        .zip(weights)
        .map(|((v, _), w)| w * (v - mean) * (v - mean))
        .sum::<f64>()
        / total;
    let std = var.sqrt();

    let mut sorted: Vec<(f64, f64)> = pairs
        .iter()
        .zip(weights)
        .map(|((v, _), &w)| (*v, w))
        .collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let quantile = |q: f64| -> f64 {
        let target = q * total;
        let mut acc = 0.0;
        for (v, w) in &sorted {
            acc += w;
            if acc >= target {
                return *v;
            }
        }
        sorted.last().expect("non-empty").0
    };
    let iqr = quantile(0.75) - quantile(0.25);

    let spread = if iqr > 0.0 { std.min(iqr / 1.34) } else { std };
    if !(spread > 0.0) {
        return None;
    }
    let n_eff = total * total / weights.iter().map(|w| w * w).sum::<f64>();
    Some(0.9 * spread * n_eff.powf(-0.2))
}

fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(g, v)| 0.5 * (v[0] + v[1]) * (g[1] - g[0]))
        .sum()
}

/// Grid point of maximum density; ties break toward the lower value.
pub fn mle(density: &MarginalDensity) -> f64 {
    let mut best = 0;
    for (i, &d) in density.density.iter().enumerate() {
        if d > density.density[best] {
            best = i;
        }
    }
    density.grid[best]
}

/// Trapezoid-rule mean and standard deviation of the density.
pub fn expectation_std(density: &MarginalDensity) -> (f64, f64) {
    let first: Vec<f64> = density
        .grid
        .iter()
        .zip(&density.density)
        .map(|(&x, &d)| x * d)
        .collect();
    let second: Vec<f64> = density
        .grid
        .iter()
        .zip(&density.density)
        .map(|(&x, &d)| x * x * d)
        .collect();
    let mean = trapezoid(&density.grid, &first);
    let var = (trapezoid(&density.grid, &second) - mean * mean).max(0.0);
    (mean, var.sqrt())
}

/// Local maxima above `prominence · max(density)`, with widths at half
/// height. No qualifying peak is a valid (empty) outcome.
pub fn peak_stats(density: &MarginalDensity, prominence: f64) -> PeakStats {
    let d = &density.density;
    let g = &density.grid;
    let n = d.len();
    let global_max = d.iter().fold(0.0_f64, |m, &x| m.max(x));
    let threshold = prominence * global_max;

    // A peak is a maximal run of equal values bracketed by strictly lower
    // neighbours; the grid boundary counts as lower, but a run spanning the
    // whole grid is flat, not peaked.
    let mut peaks = Vec::new();
    let mut i = 0;
    while i < n {
        let mut k = i;
        while k + 1 < n && d[k + 1] == d[i] {
            k += 1;
        }
        let left_lower = i == 0 || d[i - 1] < d[i];
        let right_lower = k == n - 1 || d[k + 1] < d[k];
        let spans_grid = i == 0 && k == n - 1;
        if left_lower && right_lower && !spans_grid && d[i] >= threshold && d[i] > 0.0 {
            let half = d[i] / 2.0;
            let left = cross_half(g, d, i, half, -1);
            let right = cross_half(g, d, k, half, 1);
            peaks.push(Peak {
                location: g[i],
                height: d[i],
                width: right - left,
            });
        }
        i = k + 1;
    }

    let mean_width = if peaks.is_empty() {
        0.0
    } else {
        peaks.iter().map(|p| p.width).sum::<f64>() / peaks.len() as f64
    };
    let std_width = if peaks.len() < 2 {
        0.0
    } else {
        let var = peaks
            .iter()
            .map(|p| (p.width - mean_width).powi(2))
            .sum::<f64>()
            / peaks.len() as f64;
        var.sqrt()
    };
    PeakStats {
        peaks,
        mean_width,
        std_width,
    }
}

/// Walk from the peak until the density crosses half height; linear
/// interpolation between the bracketing grid points, clamped to the grid.
fn cross_half(grid: &[f64], density: &[f64], peak: usize, half: f64, dir: isize) -> f64 {
    let n = density.len() as isize;
    let mut i = peak as isize;
    loop {
        let next = i + dir;
        if next < 0 || next >= n {
            return grid[i as usize];
        }
        if density[next as usize] < half {
            let (a, b) = (i as usize, next as usize);
            let t = (density[a] - half) / (density[a] - density[b]);
            return grid[a] + t * (grid[b] - grid[a]);
        }
        i = next;
    }
}
