//! Dataset I/O: plain-text CSV ingestion and emission, the travel-cost to
//! convenience-factor transform, and the Harris-Wilson dataset loader.
//!
//! CSV dialect: comma separated, `.` decimal, one header row, `#`-prefixed
//! provenance comments. Values are written with Rust's shortest
//! round-trippable float formatting, so emit-then-load reproduces arrays
//! exactly. Loaders also accept headerless numeric files.

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Origin income figures are spending-share scaled, destination floor space
/// comes in raw m²; both are rescaled into the model's overflow-safe units.
pub const GLA_SPENDING_SHARE: f64 = 0.21;
pub const ORIGIN_UNIT: f64 = 1e8;
pub const DEST_UNIT: f64 = 1e5;

/// Parse numeric CSV text into rows. Comment lines start with `#`; a first
/// row that does not parse as numbers is treated as a header.
pub fn parse_numeric_csv(text: &str, label: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    let mut first_data_row = true;
    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> =
            fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(values) => {
                if let Some(w) = width {
                    if values.len() != w {
                        return Err(Error::Parse {
                            path: label.to_string(),
                            line: line_no + 1,
                            message: format!("expected {w} columns, found {}", values.len()),
                        });
                    }
                } else {
                    width = Some(values.len());
                }
                rows.push(values);
            }
            Err(e) => {
                if first_data_row {
                    // Header row; column names are not interpreted.
                    first_data_row = false;
                    continue;
                }
                return Err(Error::Parse {
                    path: label.to_string(),
                    line: line_no + 1,
                    message: format!("not a number: {e}"),
                });
            }
        }
        first_data_row = false;
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: label.to_string(),
            line: 0,
            message: "no data rows".into(),
        });
    }
    Ok(rows)
}

pub fn matrix_from_rows(rows: Vec<Vec<f64>>, label: &str) -> Result<Tensor> {
    let cols = rows[0].len();
    if cols == 0 {
        return Err(Error::Parse {
            path: label.into(),
            line: 1,
            message: "empty row".into(),
        });
    }
    let n = rows.len();
    let mut data = Vec::with_capacity(n * cols);
    for row in rows {
        data.extend(row);
    }
    Ok(Tensor::matrix(n, cols, data))
}

/// A single-column (or single-row) numeric CSV as a vector.
pub fn vector_from_rows(rows: Vec<Vec<f64>>, label: &str) -> Result<Vec<f64>> {
    if rows.len() == 1 {
        return Ok(rows.into_iter().next().expect("one row"));
    }
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            if row.len() == 1 {
                Ok(row[0])
            } else {
                Err(Error::Parse {
                    path: label.into(),
                    line: i + 1,
                    message: format!("expected one column, found {}", row.len()),
                })
            }
        })
        .collect()
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_matrix_csv(path: &Path) -> Result<Tensor> {
    let label = path.display().to_string();
    matrix_from_rows(parse_numeric_csv(&read_to_string(path)?, &label)?, &label)
}

pub fn load_vector_csv(path: &Path) -> Result<Vec<f64>> {
    let label = path.display().to_string();
    vector_from_rows(parse_numeric_csv(&read_to_string(path)?, &label)?, &label)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn push_provenance(out: &mut String, provenance: &[String]) {
    for line in provenance {
        for part in line.lines() {
            let _ = writeln!(out, "# {part}");
        }
    }
}

pub fn write_matrix_csv(path: &Path, matrix: &Tensor, provenance: &[String]) -> Result<()> {
    let Shape::Matrix { rows, cols } = matrix.shape() else {
        return Err(Error::BadShape {
            op: "write_matrix_csv",
            shape: matrix.shape(),
        });
    };
    let mut out = String::new();
    push_provenance(&mut out, provenance);
    let header: Vec<String> = (0..cols).map(|c| format!("c{c}")).collect();
    let _ = writeln!(out, "{}", header.join(","));
    for r in 0..rows {
        let row: Vec<String> = (0..cols)
            .map(|c| matrix.data()[r * cols + c].to_string())
            .collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    write_file(path, &out)
}

pub fn write_vector_csv(
    path: &Path,
    name: &str,
    values: &[f64],
    provenance: &[String],
) -> Result<()> {
    let mut out = String::new();
    push_provenance(&mut out, provenance);
    let _ = writeln!(out, "{name}");
    for v in values {
        let _ = writeln!(out, "{v}");
    }
    write_file(path, &out)
}

/// Density time series as `t,S,I,R`.
pub fn write_density_series_csv(
    path: &Path,
    frames: &[[f64; 3]],
    provenance: &[String],
) -> Result<()> {
    let mut out = String::new();
    push_provenance(&mut out, provenance);
    let _ = writeln!(out, "t,S,I,R");
    for (t, f) in frames.iter().enumerate() {
        let _ = writeln!(out, "{t},{},{},{}", f[0], f[1], f[2]);
    }
    write_file(path, &out)
}

pub fn load_density_series_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let label = path.display().to_string();
    parse_density_series(&read_to_string(path)?, &label)
}

/// Parse `t,S,I,R` rows into state frames.
pub fn parse_density_series(text: &str, label: &str) -> Result<Vec<Vec<f64>>> {
    let rows = parse_numeric_csv(text, label)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, row)| {
            if row.len() == 4 {
                Ok(row[1..].to_vec())
            } else {
                Err(Error::Parse {
                    path: label.to_string(),
                    line: i + 1,
                    message: format!("expected t,S,I,R (4 columns), found {}", row.len()),
                })
            }
        })
        .collect()
}

/// Convenience factors from raw travel costs: `c_ij = exp(−d_ij / max d)`.
/// The scale is the largest observed cost, so exponents are unitless.
pub fn convenience_from_distances(distances: &Tensor) -> Result<Tensor> {
    if let Some(i) = distances.data().iter().position(|&d| !(d >= 0.0)) {
        return Err(Error::InvalidData(format!(
            "travel cost {} at flat index {i} must be non-negative",
            distances.data()[i]
        )));
    }
    let max = distances.data().iter().fold(0.0_f64, |m, &d| m.max(d));
    if max == 0.0 {
        return Err(Error::InvalidData(
            "all travel costs are zero; no cost scale to normalize by".into(),
        ));
    }
    Ok(distances.map(|d| (-d / max).exp()))
}

/// Elementwise minimum over two transport modes.
pub fn min_mode_distance(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "min_mode_distance",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    Ok(a.zip(b, f64::min))
}

/// File locations of one Harris-Wilson dataset.
#[derive(Debug, Clone)]
pub struct HwDataPaths {
    pub network: std::path::PathBuf,
    pub origin_zones: std::path::PathBuf,
    pub destination_zones: std::path::PathBuf,
}

impl HwDataPaths {
    /// Conventional layout: `origin_sizes.csv`, `dest_sizes.csv`,
    /// `network.csv` in one directory.
    pub fn from_dir(dir: &Path) -> Self {
        HwDataPaths {
            network: dir.join("network.csv"),
            origin_zones: dir.join("origin_sizes.csv"),
            destination_zones: dir.join("dest_sizes.csv"),
        }
    }
}

/// Loaded, validated Harris-Wilson inputs.
#[derive(Debug, Clone)]
pub struct HwDataset {
    pub origin: Vec<f64>,
    pub dest: Vec<f64>,
    pub conv: Tensor,
}

/// Load origin sizes, destination sizes and the convenience matrix.
///
/// With `raw_gla`, origin figures are ward incomes in £/a (scaled by the
/// retail spending share into units of 10⁸ £/a) and destination figures are
/// floor spaces in m² (scaled to 10⁵ m²); pre-scaled files skip both.
pub fn load_hw_dataset(paths: &HwDataPaths, raw_gla: bool) -> Result<HwDataset> {
    let mut origin = load_vector_csv(&paths.origin_zones)?;
    let mut dest = load_vector_csv(&paths.destination_zones)?;
    let conv = load_matrix_csv(&paths.network)?;
    if raw_gla {
        for o in &mut origin {
            *o *= GLA_SPENDING_SHARE / ORIGIN_UNIT;
        }
        for w in &mut dest {
            *w /= DEST_UNIT;
        }
    }
    let Shape::Matrix { rows, cols } = conv.shape() else {
        unreachable!("matrix loader")
    };
    if rows != origin.len() || cols != dest.len() {
        return Err(Error::InvalidData(format!(
            "network is {rows}x{cols} but there are {} origin and {} destination zones",
            origin.len(),
            dest.len()
        )));
    }
    if let Some(i) = origin.iter().position(|&o| o <= 0.0) {
        return Err(Error::InvalidData(format!(
            "origin zone {i} has non-positive size {}",
            origin[i]
        )));
    }
    if let Some(j) = dest.iter().position(|&w| w <= 0.0) {
        return Err(Error::InvalidData(format!(
            "destination zone {j} has non-positive size {}",
            dest[j]
        )));
    }
    if let Some(i) = conv.data().iter().position(|&c| !(c > 0.0 && c <= 1.0)) {
        return Err(Error::InvalidData(format!(
            "network weight {} at row {} column {} outside (0, 1]",
            conv.data()[i],
            i / cols,
            i % cols
        )));
    }
    Ok(HwDataset { origin, dest, conv })
}
