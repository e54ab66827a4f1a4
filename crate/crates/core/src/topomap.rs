//! Electrode-to-pixel projection and scalp image interpolation.
//!
//! Electrodes are placed on a K x K grid at `(round(y (K-1)), round(x (K-1)))`.
//! Remaining pixels are filled either by inverse distance weighting over the
//! sensors within `d_max` pixels, or by one of the classic schemes. Every
//! method leaves sensor pixels holding exactly the sensor value.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureSlot, Provenance};
use crate::io::Montage;

pub const DEFAULT_GRID_SIZE: usize = 15;
pub const ACCEPTED_GRID_SIZES: [usize; 4] = [10, 15, 20, 25];

#[derive(Debug, Clone, PartialEq)]
pub struct SensorProjection {
    pub grid_size: usize,
    pub channels: Vec<String>,
    /// `(row, col)` of each channel, aligned with `channels`.
    pub pixels: Vec<(usize, usize)>,
    /// Row-major; `Some(c)` where channel `c` sits.
    occupancy: Vec<Option<usize>>,
}

impl SensorProjection {
    pub fn sensor_at(&self, row: usize, col: usize) -> Option<usize> {
        self.occupancy[row * self.grid_size + col]
    }

    pub fn pixel_of(&self, channel: &str) -> Option<(usize, usize)> {
        self.channels
            .iter()
            .position(|c| c == channel)
            .map(|i| self.pixels[i])
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }
}

pub fn project_montage(montage: &Montage, grid_size: usize) -> Result<SensorProjection> {
    if grid_size < 4 {
        return Err(Error::invalid(format!("grid size {grid_size} < 4")));
    }
    let scale = (grid_size - 1) as f64;
    let mut occupancy: Vec<Option<usize>> = vec![None; grid_size * grid_size];
    let mut channels: Vec<String> = Vec::with_capacity(montage.len());
    let mut pixels = Vec::with_capacity(montage.len());
    for (i, (name, [x, y])) in montage.entries().iter().enumerate() {
        let row = (y * scale).round() as usize;
        let col = (x * scale).round() as usize;
        let slot = &mut occupancy[row * grid_size + col];
        if let Some(other) = *slot {
            return Err(Error::PixelCollision {
                first: channels[other].clone(),
                second: name.clone(),
                row,
                col,
            });
        }
        *slot = Some(i);
        channels.push(name.clone());
        pixels.push((row, col));
    }
    Ok(SensorProjection {
        grid_size,
        channels,
        pixels,
        occupancy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpMethod {
    IdwNearestBorder,
    IdwZeroBorder,
    Nearest,
    Bilinear,
    CubicBSpline,
}

impl InterpMethod {
    pub fn is_idw(self) -> bool {
        matches!(self, InterpMethod::IdwNearestBorder | InterpMethod::IdwZeroBorder)
    }
}

impl std::str::FromStr for InterpMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "idw_nearest_border" | "idw" => InterpMethod::IdwNearestBorder,
            "idw_zero_border" => InterpMethod::IdwZeroBorder,
            "nearest" => InterpMethod::Nearest,
            "bilinear" => InterpMethod::Bilinear,
            "cubic_b_spline" | "cubic" => InterpMethod::CubicBSpline,
            _ => return Err(Error::invalid(format!("unknown interpolation method {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpConfig {
    pub method: InterpMethod,
    /// Search radius in pixels.
    pub d_max: f64,
    pub idw_power: f64,
}

impl Default for InterpConfig {
    fn default() -> Self {
        InterpConfig {
            method: InterpMethod::IdwNearestBorder,
            d_max: 3.0,
            idw_power: 1.0,
        }
    }
}

impl InterpConfig {
    pub fn with_method(method: InterpMethod) -> Self {
        InterpConfig {
            method,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_max > 0.0 && self.d_max.is_finite()) {
            return Err(Error::invalid(format!("d_max must be positive, got {}", self.d_max)));
        }
        if !self.idw_power.is_finite() {
            return Err(Error::invalid("idw_power must be finite"));
        }
        Ok(())
    }
}

/// A single K x K image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub size: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.size + col]
    }
}

fn check_values(values: &[f64], proj: &SensorProjection) -> Result<()> {
    if proj.is_empty() {
        return Err(Error::invalid("empty sensor set"));
    }
    if values.len() != proj.len() {
        return Err(Error::Shape(format!(
            "{} values for {} projected sensors",
            values.len(),
            proj.len()
        )));
    }
    Ok(())
}

fn pixel_distance(a: (usize, usize), b: (usize, usize)) -> f64 {
    let dr = a.0 as f64 - b.0 as f64;
    let dc = a.1 as f64 - b.1 as f64;
    dr.hypot(dc)
}

/// Closest sensor to a pixel; ties go to the lower channel index.
fn nearest_sensor(proj: &SensorProjection, pixel: (usize, usize)) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, &p) in proj.pixels.iter().enumerate() {
        let d = pixel_distance(pixel, p);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Values are aligned with `proj.channels`.
pub fn idw_interpolate(values: &[f64], proj: &SensorProjection, cfg: &InterpConfig) -> Result<Grid> {
    check_values(values, proj)?;
    cfg.validate()?;
    if !cfg.method.is_idw() {
        return Err(Error::invalid(format!("{:?} is not an IDW method", cfg.method)));
    }
    let k = proj.grid_size;
    let mut data = vec![0.0; k * k];
    for row in 0..k {
        for col in 0..k {
            let out = &mut data[row * k + col];
            if let Some(c) = proj.sensor_at(row, col) {
                *out = values[c];
                continue;
            }
            let mut num = 0.0;
            let mut den = 0.0;
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for (i, &p) in proj.pixels.iter().enumerate() {
                let d = pixel_distance((row, col), p);
                if d <= cfg.d_max {
                    let w = d.powf(-cfg.idw_power);
                    num += w * values[i];
                    den += w;
                    lo = lo.min(values[i]);
                    hi = hi.max(values[i]);
                }
            }
            *out = if den > 0.0 {
                // the quotient can round one ulp past a convex combination
                (num / den).clamp(lo, hi)
            } else {
                match cfg.method {
                    InterpMethod::IdwNearestBorder => values[nearest_sensor(proj, (row, col))],
                    _ => 0.0,
                }
            };
        }
    }
    Ok(Grid { size: k, data })
}

const LINEAR_KERNEL: [f64; 3] = [0.25, 0.5, 0.25];

/// Cubic B-spline at twice the pixel pitch, sampled at integer offsets -3..=3.
fn cubic_kernel() -> [f64; 7] {
    let b3 = |t: f64| {
        let t = t.abs();
        if t < 1.0 {
            2.0 / 3.0 - t * t + t * t * t / 2.0
        } else if t < 2.0 {
            (2.0 - t).powi(3) / 6.0
        } else {
            0.0
        }
    };
    let mut k = [0.0; 7];
    for (i, v) in k.iter_mut().enumerate() {
        *v = b3((i as f64 - 3.0) / 2.0) / 2.0;
    }
    k
}

/// Separable smoothing with edge clamping.
fn smooth(data: &[f64], size: usize, kernel: &[f64]) -> Vec<f64> {
    let half = (kernel.len() / 2) as isize;
    let last = size as isize - 1;
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; size * size];
        for r in 0..size {
            for c in 0..size {
                let mut acc = 0.0;
                for (i, w) in kernel.iter().enumerate() {
                    let off = i as isize - half;
                    let (rr, cc) = if horizontal {
                        (r as isize, (c as isize + off).clamp(0, last))
                    } else {
                        ((r as isize + off).clamp(0, last), c as isize)
                    };
                    acc += w * src[rr as usize * size + cc as usize];
                }
                out[r * size + c] = acc;
            }
        }
        out
    };
    pass(&pass(data, true), false)
}

/// Nearest-sensor fill, optionally smoothed, then sensors re-pinned.
pub fn classic_interpolate(values: &[f64], proj: &SensorProjection, cfg: &InterpConfig) -> Result<Grid> {
    check_values(values, proj)?;
    let k = proj.grid_size;
    let mut data = vec![0.0; k * k];
    for row in 0..k {
        for col in 0..k {
            data[row * k + col] = values[nearest_sensor(proj, (row, col))];
        }
    }
    data = match cfg.method {
        InterpMethod::Nearest => data,
        InterpMethod::Bilinear => smooth(&data, k, &LINEAR_KERNEL),
        InterpMethod::CubicBSpline => smooth(&data, k, &cubic_kernel()),
        m => return Err(Error::invalid(format!("{m:?} is not a classic method"))),
    };
    for (i, &(r, c)) in proj.pixels.iter().enumerate() {
        data[r * k + c] = values[i];
    }
    Ok(Grid { size: k, data })
}

pub fn interpolate(values: &[f64], proj: &SensorProjection, cfg: &InterpConfig) -> Result<Grid> {
    if cfg.method.is_idw() {
        idw_interpolate(values, proj, cfg)
    } else {
        classic_interpolate(values, proj, cfg)
    }
}

/// `bands` stacked K x K images, slice-major (`data[b][row][col]`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    pub size: usize,
    pub depth: usize,
    pub data: Vec<f64>,
    pub layout: Vec<FeatureSlot>,
    pub provenance: Provenance,
}

impl FeatureGrid {
    pub fn get(&self, slice: usize, row: usize, col: usize) -> f64 {
        self.data[(slice * self.size + row) * self.size + col]
    }

    pub fn slice(&self, b: usize) -> Grid {
        let n = self.size * self.size;
        Grid {
            size: self.size,
            data: self.data[b * n..(b + 1) * n].to_vec(),
        }
    }
}

/// Interpolates each feature column of a model-1 matrix onto the grid.
pub fn model2_tensor(
    matrix: &FeatureMatrix,
    proj: &SensorProjection,
    cfg: &InterpConfig,
) -> Result<FeatureGrid> {
    let rows: Vec<usize> = proj
        .channels
        .iter()
        .map(|ch| {
            matrix
                .channels
                .iter()
                .position(|c| c == ch)
                .ok_or_else(|| Error::UnknownChannel(ch.clone()))
        })
        .collect::<Result<_>>()?;
    let k = proj.grid_size;
    let mut data = Vec::with_capacity(k * k * matrix.cols);
    for b in 0..matrix.cols {
        let values: Vec<f64> = rows.iter().map(|&r| matrix.get(r, b)).collect();
        data.extend(interpolate(&values, proj, cfg)?.data);
    }
    Ok(FeatureGrid {
        size: k,
        depth: matrix.cols,
        data,
        layout: matrix.layout.clone(),
        provenance: matrix.provenance.clone(),
    })
}

pub fn write_grid_csv(grid: &Grid, mut out: impl Write) -> std::io::Result<()> {
    for r in 0..grid.size {
        let line: Vec<String> = (0..grid.size).map(|c| grid.get(r, c).to_string()).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Plain (ASCII) PGM scaled linearly from the grid minimum to maximum.
pub fn write_grid_pgm(grid: &Grid, mut out: impl Write) -> std::io::Result<()> {
    let lo = grid.data.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = grid.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    writeln!(out, "P2\n{} {}\n255", grid.size, grid.size)?;
    for r in 0..grid.size {
        let line: Vec<String> = (0..grid.size)
            .map(|c| (((grid.get(r, c) - lo) / span) * 255.0).round().to_string())
            .collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}
