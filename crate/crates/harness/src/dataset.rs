//! Synthetic labeled datasets and their CSV form.

use std::io::{BufRead, Write};

use cfnn_core::numerics::{make_rng, RngStream};

use crate::error::{HarnessError, Result};

pub type LabeledData = Vec<(Vec<f64>, usize)>;

/// Knobs shared by the generators; each generator reads the fields it needs.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetParams {
    /// Input dimension (shell only; the 2-D sets ignore it).
    pub dim: usize,
    /// Ball radius separating the shell labels.
    pub radius: f64,
    /// Radius intervals the shell samples from; must avoid `radius`.
    pub intervals: Vec<(f64, f64)>,
    /// Gaussian jitter for the moons set.
    pub noise: f64,
}

impl Default for DatasetParams {
    fn default() -> Self {
        DatasetParams {
            dim: 10,
            radius: 1.0,
            intervals: vec![(0.2, 0.8), (1.2, 3.0)],
            noise: 0.1,
        }
    }
}

/// Generate a named dataset. Names: `shell`, `circles`, `moons`, `blobs`.
pub fn gen_dataset(
    name: &str,
    size: usize,
    seed: u64,
    params: &DatasetParams,
) -> Result<LabeledData> {
    if size == 0 {
        return Err(HarnessError::Config("dataset size must be >= 1".into()));
    }
    let mut rng = make_rng(seed);
    match name {
        "shell" => shell(size, params, &mut rng),
        "circles" => Ok(circles(size, &mut rng)),
        "moons" => Ok(moons(size, params.noise, &mut rng)),
        "blobs" => Ok(blobs(size, &mut rng)),
        other => Err(HarnessError::Config(format!(
            "unknown dataset {other:?}; expected shell|circles|moons|blobs"
        ))),
    }
}

/// Points with `||x||` uniform over the given radius intervals (weighted by
/// interval length), direction uniform on the sphere; label 1 outside the
/// `radius` ball.
fn shell(size: usize, params: &DatasetParams, rng: &mut RngStream) -> Result<LabeledData> {
    if params.dim == 0 {
        return Err(HarnessError::Config("shell dimension must be >= 1".into()));
    }
    if params.intervals.is_empty() {
        return Err(HarnessError::Config("shell needs radius intervals".into()));
    }
    for &(lo, hi) in &params.intervals {
        if !(0.0 <= lo && lo < hi) {
            return Err(HarnessError::Config(format!(
                "bad radius interval [{lo}, {hi}]"
            )));
        }
    }
    let total_len: f64 = params.intervals.iter().map(|(lo, hi)| hi - lo).sum();
    let mut data = Vec::with_capacity(size);
    for _ in 0..size {
        let mut pick = rng.next_f64() * total_len;
        let mut r = params.intervals[0].0;
        for &(lo, hi) in &params.intervals {
            let len = hi - lo;
            if pick <= len {
                r = lo + pick;
                break;
            }
            pick -= len;
        }
        let mut x: Vec<f64> = (0..params.dim).map(|_| rng.next_std_normal()).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut x {
            *v *= r / norm;
        }
        data.push((x, usize::from(r > params.radius)));
    }
    Ok(data)
}

const CIRCLES_DISK_RADIUS: f64 = 0.5;
const CIRCLES_ANNULUS: (f64, f64) = (1.3, 1.6);

/// Balanced 2-D inside-disk (class 0) vs annulus (class 1).
fn circles(size: usize, rng: &mut RngStream) -> LabeledData {
    let mut data = Vec::with_capacity(size);
    for i in 0..size {
        let class1 = i % 2 == 1;
        let r = if class1 {
            CIRCLES_ANNULUS.0 + (CIRCLES_ANNULUS.1 - CIRCLES_ANNULUS.0) * rng.next_f64()
        } else {
            CIRCLES_DISK_RADIUS * rng.next_f64()
        };
        let theta = 2.0 * std::f64::consts::PI * rng.next_f64();
        data.push((
            vec![r * theta.cos(), r * theta.sin()],
            usize::from(class1),
        ));
    }
    data
}

/// Balanced two interleaved half-moons with Gaussian jitter.
fn moons(size: usize, noise: f64, rng: &mut RngStream) -> LabeledData {
    let mut data = Vec::with_capacity(size);
    for i in 0..size {
        let class1 = i % 2 == 1;
        let t = std::f64::consts::PI * rng.next_f64();
        let (mut x, mut y) = if class1 {
            (1.0 - t.cos(), 0.5 - t.sin())
        } else {
            (t.cos(), t.sin())
        };
        x += noise * rng.next_std_normal();
        y += noise * rng.next_std_normal();
        data.push((vec![x, y], usize::from(class1)));
    }
    data
}

/// Balanced pair of well-separated Gaussian blobs.
fn blobs(size: usize, rng: &mut RngStream) -> LabeledData {
    let mut data = Vec::with_capacity(size);
    for i in 0..size {
        let class1 = i % 2 == 1;
        let cx = if class1 { 1.5 } else { -1.5 };
        data.push((
            vec![
                cx + 0.4 * rng.next_std_normal(),
                0.4 * rng.next_std_normal(),
            ],
            usize::from(class1),
        ));
    }
    data
}

/// Write a dataset as CSV with header `x0,...,x{d-1},label`.
pub fn write_dataset_csv<W: Write>(data: &LabeledData, mut out: W) -> Result<()> {
    let d = data
        .first()
        .map(|(x, _)| x.len())
        .ok_or_else(|| HarnessError::Config("empty dataset".into()))?;
    let header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    writeln!(out, "{},label", header.join(","))?;
    for (x, y) in data {
        let coords: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{},{y}", coords.join(","))?;
    }
    Ok(())
}

/// Read a dataset written by [`write_dataset_csv`].
pub fn read_dataset_csv<R: BufRead>(reader: R) -> Result<LabeledData> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| HarnessError::Config("empty dataset file".into()))??;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.last() != Some(&"label") {
        return Err(HarnessError::Config(
            "dataset header must end with 'label'".into(),
        ));
    }
    let d = cols.len() - 1;
    let mut data = Vec::new();
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 1 {
            return Err(HarnessError::Config(format!(
                "row has {} fields, expected {}",
                fields.len(),
                d + 1
            )));
        }
        let x = fields[..d]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| HarnessError::Config(format!("bad coordinate: {e}")))?;
        let y: usize = fields[d]
            .parse()
            .map_err(|e| HarnessError::Config(format!("bad label: {e}")))?;
        data.push((x, y));
    }
    Ok(data)
}
