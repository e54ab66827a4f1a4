//! Referencing, normalization, resampling and windowing.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::io::{LabeledRecording, RawRecording};

/// A fixed-length window of a labeled recording.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSegment {
    pub subject_id: String,
    pub trial_id: String,
    pub window_index: usize,
    pub channels: Arc<Vec<String>>,
    /// `data[c]` has exactly `len()` samples.
    pub data: Vec<Vec<f64>>,
    pub label: u8,
}

impl WindowSegment {
    pub fn len(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Subtracts the across-channel mean at every time index.
pub fn common_average_reference(rec: &RawRecording) -> Result<RawRecording> {
    let m = rec.n_channels();
    if m < 2 {
        return Err(Error::invalid(format!(
            "common average reference needs at least 2 channels, got {m}"
        )));
    }
    let t = rec.n_samples();
    let mut out = rec.clone();
    for i in 0..t {
        let mean = rec.data.iter().map(|row| row[i]).sum::<f64>() / m as f64;
        for row in &mut out.data {
            row[i] -= mean;
        }
    }
    Ok(out)
}

/// Per-channel z-score over the whole recording. Constant channels become zeros.
pub fn normalize_channel(rec: &RawRecording) -> RawRecording {
    let mut out = rec.clone();
    for row in &mut out.data {
        zscore_in_place(row);
    }
    out
}

pub(crate) fn zscore_in_place(row: &mut [f64]) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    // spread at rounding-noise level counts as constant
    if sd == 0.0 || sd <= 1e-12 * mean.abs() {
        row.iter_mut().for_each(|v| *v = 0.0);
    } else {
        row.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentParams {
    pub window_seconds: f64,
    pub shift_seconds: f64,
    pub baseline_trim_seconds: f64,
}

impl SegmentParams {
    pub fn new(window_seconds: f64, shift_seconds: f64) -> Self {
        SegmentParams {
            window_seconds,
            shift_seconds,
            baseline_trim_seconds: 0.0,
        }
    }

    pub fn with_baseline_trim(mut self, seconds: f64) -> Self {
        self.baseline_trim_seconds = seconds;
        self
    }
}

fn seconds_to_samples(seconds: f64, rate: f64) -> usize {
    (seconds * rate).round() as usize
}

/// Number of whole windows that fit; trailing partial windows are dropped.
pub fn window_count(n_samples: usize, rate: f64, params: &SegmentParams) -> Result<usize> {
    if !(params.window_seconds > 0.0 && params.shift_seconds > 0.0) {
        return Err(Error::invalid("window and shift must be positive"));
    }
    if params.baseline_trim_seconds < 0.0 {
        return Err(Error::invalid("baseline trim must be non-negative"));
    }
    let len = seconds_to_samples(params.window_seconds, rate);
    let shift = seconds_to_samples(params.shift_seconds, rate);
    let trim = seconds_to_samples(params.baseline_trim_seconds, rate);
    if len < 2 || shift == 0 {
        return Err(Error::invalid(format!(
            "window of {len} samples / shift of {shift} samples is too short"
        )));
    }
    let needed = trim + len;
    if n_samples < needed {
        return Err(Error::TooShort {
            needed,
            available: n_samples,
        });
    }
    Ok((n_samples - needed) / shift + 1)
}

pub fn segment(rec: &LabeledRecording, params: &SegmentParams) -> Result<Vec<WindowSegment>> {
    let raw = &rec.recording;
    let rate = raw.sample_rate_hz;
    let count = window_count(raw.n_samples(), rate, params)?;
    let len = seconds_to_samples(params.window_seconds, rate);
    let shift = seconds_to_samples(params.shift_seconds, rate);
    let trim = seconds_to_samples(params.baseline_trim_seconds, rate);
    let channels = Arc::new(raw.channels.clone());
    Ok((0..count)
        .map(|i| {
            let start = trim + i * shift;
            WindowSegment {
                subject_id: raw.subject_id.clone(),
                trial_id: raw.trial_id.clone(),
                window_index: i,
                channels: Arc::clone(&channels),
                data: raw
                    .data
                    .iter()
                    .map(|row| row[start..start + len].to_vec())
                    .collect(),
                label: rec.label,
            }
        })
        .collect())
}

/// Linear-phase windowed-sinc lowpass (Hamming) with the given cutoff as a
/// fraction of the input sample rate. Odd length, unit DC gain.
pub fn lowpass_fir(cutoff: f64, taps: usize) -> Vec<f64> {
    let taps = taps | 1;
    let mid = (taps / 2) as f64;
    let mut h: Vec<f64> = (0..taps)
        .map(|i| {
            let n = i as f64 - mid;
            let sinc = if n == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * n).sin() / (PI * n)
            };
            let window = 0.54 - 0.46 * (2.0 * PI * i as f64 / (taps - 1) as f64).cos();
            sinc * window
        })
        .collect();
    let dc: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= dc);
    h
}

/// Integer-factor decimation: zero-phase anti-alias filtering at the new
/// Nyquist frequency, then keeping every `factor`-th sample.
pub fn downsample(rec: &RawRecording, factor: usize) -> Result<RawRecording> {
    if factor == 0 {
        return Err(Error::invalid("decimation factor must be >= 1"));
    }
    if factor == 1 {
        return Ok(rec.clone());
    }
    let h = lowpass_fir(0.5 / factor as f64, 16 * factor + 1);
    let half = (h.len() / 2) as isize;
    let t = rec.n_samples() as isize;
    let data = rec
        .data
        .iter()
        .map(|row| {
            (0..t)
                .step_by(factor)
                .map(|i| {
                    h.iter()
                        .enumerate()
                        .map(|(k, hk)| {
                            // symmetric edge extension
                            let mut j = i + k as isize - half;
                            if j < 0 {
                                j = -j;
                            }
                            if j >= t {
                                j = 2 * (t - 1) - j;
                            }
                            hk * row[j.clamp(0, t - 1) as usize]
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    RawRecording::new(
        rec.subject_id.clone(),
        rec.trial_id.clone(),
        rec.sample_rate_hz / factor as f64,
        rec.channels.clone(),
        data,
    )
}

/// Downsamples to `target_hz` when the rate is an integer multiple of it.
pub fn resample_to(rec: &RawRecording, target_hz: f64) -> Result<RawRecording> {
    let ratio = rec.sample_rate_hz / target_hz;
    let factor = ratio.round();
    if factor < 1.0 || (ratio - factor).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "cannot decimate {} Hz to {} Hz by an integer factor",
            rec.sample_rate_hz, target_hz
        )));
    }
    downsample(rec, factor as usize)
}
