//! Label-preserving shift augmentation of training samples.
//!
//! A shift moves every plane of a sample by `(dy, dx)` over its two spatial
//! axes. Rows and columns that fall off one edge are dropped, and the vacated
//! ones at the other edge repeat the nearest surviving row or column.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::sample::{Representation, Sample};
use crate::topomap::FeatureGrid;

pub const MAX_SHIFT: i32 = 2;

/// Shift over the last two axes of a `(planes, height, width)` tensor with
/// edge replication: `out[y][x] = in[clamp(y - dy)][clamp(x - dx)]`.
pub fn shift_planes(data: &[f64], shape: (usize, usize, usize), dy: i32, dx: i32) -> Vec<f64> {
    let (planes, h, w) = shape;
    let mut out = vec![0.0; data.len()];
    for p in 0..planes {
        for y in 0..h {
            let sy = (y as i64 - dy as i64).clamp(0, h as i64 - 1) as usize;
            for x in 0..w {
                let sx = (x as i64 - dx as i64).clamp(0, w as i64 - 1) as usize;
                out[(p * h + y) * w + x] = data[(p * h + sy) * w + sx];
            }
        }
    }
    out
}

/// Shifts the channel rows of a model-1 matrix by `dy`.
pub fn shift_model1(m: &FeatureMatrix, dy: i32) -> Result<FeatureMatrix> {
    if dy.unsigned_abs() as usize >= m.rows {
        return Err(Error::invalid(format!(
            "row shift {dy} out of range for {} rows",
            m.rows
        )));
    }
    Ok(FeatureMatrix {
        data: shift_planes(&m.data, (1, m.rows, m.cols), dy, 0),
        ..m.clone()
    })
}

/// Shifts the feature columns of a model-1 matrix by `dx`.
pub fn shift_model1_columns(m: &FeatureMatrix, dx: i32) -> Result<FeatureMatrix> {
    if dx.unsigned_abs() as usize >= m.cols {
        return Err(Error::invalid(format!(
            "column shift {dx} out of range for {} columns",
            m.cols
        )));
    }
    Ok(FeatureMatrix {
        data: shift_planes(&m.data, (1, m.rows, m.cols), 0, dx),
        ..m.clone()
    })
}

/// Shifts every slice of a grid by the same `(dy, dx)`; the slice axis is untouched.
pub fn shift_model2(g: &FeatureGrid, dy: i32, dx: i32) -> Result<FeatureGrid> {
    if dy.abs() > MAX_SHIFT || dx.abs() > MAX_SHIFT {
        return Err(Error::invalid(format!("shift ({dy}, {dx}) exceeds {MAX_SHIFT}")));
    }
    Ok(FeatureGrid {
        data: shift_planes(&g.data, (g.depth, g.size, g.size), dy, dx),
        ..g.clone()
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentPlan {
    pub shifts: Vec<(i32, i32)>,
    pub apply_to: Representation,
}

impl AugmentPlan {
    /// Identity only.
    pub fn none(apply_to: Representation) -> Self {
        AugmentPlan {
            shifts: vec![(0, 0)],
            apply_to,
        }
    }

    /// Identity plus one-pixel shifts up, down, left and right.
    pub fn single(apply_to: Representation) -> Self {
        AugmentPlan {
            shifts: vec![(0, 0), (0, 1), (0, -1), (1, 0), (-1, 0)],
            apply_to,
        }
    }

    /// [`AugmentPlan::single`] plus the same moves by two pixels.
    pub fn extended(apply_to: Representation) -> Self {
        let mut plan = Self::single(apply_to);
        plan.shifts.extend([(0, 2), (0, -2), (2, 0), (-2, 0)]);
        plan
    }

    pub fn validate(&self) -> Result<()> {
        if !self.shifts.contains(&(0, 0)) {
            return Err(Error::invalid("augmentation plan must keep the original (0, 0)"));
        }
        for (i, &(dy, dx)) in self.shifts.iter().enumerate() {
            if dy.abs() > MAX_SHIFT || dx.abs() > MAX_SHIFT {
                return Err(Error::invalid(format!("shift ({dy}, {dx}) exceeds {MAX_SHIFT}")));
            }
            if self.shifts[..i].contains(&(dy, dx)) {
                return Err(Error::invalid(format!("shift ({dy}, {dx}) listed twice")));
            }
        }
        Ok(())
    }
}

/// Every training sample under every shift of the plan, originals first.
///
/// Only ever call this on the training portion of a split.
pub fn expand_training_set(samples: &[Sample], plan: &AugmentPlan) -> Result<Vec<Sample>> {
    plan.validate()?;
    if let Some(s) = samples.iter().find(|s| s.repr != plan.apply_to) {
        return Err(Error::invalid(format!(
            "plan targets {:?} but got a {:?} sample",
            plan.apply_to, s.repr
        )));
    }
    let mut out = Vec::with_capacity(samples.len() * plan.shifts.len());
    for &(dy, dx) in &plan.shifts {
        for s in samples {
            let (_, h, w) = s.shape;
            if dy.unsigned_abs() as usize >= h || dx.unsigned_abs() as usize >= w {
                return Err(Error::invalid(format!(
                    "shift ({dy}, {dx}) too large for {h} x {w}"
                )));
            }
            out.push(Sample {
                data: shift_planes(&s.data, s.shape, dy, dx),
                ..s.clone()
            });
        }
    }
    Ok(out)
}
