//! Wavelet packet decomposition with the 8-tap Daubechies filter pair.
//!
//! Every level splits every node into a lowpass (approximation) and highpass
//! (detail) half, with periodic extension at the boundaries, so each analysis
//! step is an orthogonal transform and energy is preserved exactly.
//!
//! The tree emits leaves in natural order: node `n` at one level has children
//! `2n` (lowpass) and `2n + 1` (highpass). Because decimating a highpass
//! branch mirrors its spectrum, natural order is not frequency order;
//! [`frequency_order`] gives the Gray-code permutation between the two.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LEVEL: usize = 4;

/// Orthonormal two-channel filter pair. `highpass[k] = (-1)^k lowpass[len-1-k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QmfPair {
    pub lowpass: Vec<f64>,
    pub highpass: Vec<f64>,
}

impl QmfPair {
    pub fn from_lowpass(lowpass: Vec<f64>) -> Self {
        let n = lowpass.len();
        let highpass = (0..n)
            .map(|k| if k % 2 == 0 { 1.0 } else { -1.0 } * lowpass[n - 1 - k])
            .collect();
        QmfPair { lowpass, highpass }
    }

    pub fn len(&self) -> usize {
        self.lowpass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lowpass.is_empty()
    }
}

/// Daubechies scaling filter with four vanishing moments (minimum phase).
pub fn make_db4() -> QmfPair {
    QmfPair::from_lowpass(vec![
        0.230_377_813_308_855_23,
        0.714_846_570_552_541_5,
        0.630_880_767_929_590_4,
        -0.027_983_769_416_983_85,
        -0.187_034_811_718_881_14,
        0.030_841_381_835_986_965,
        0.032_883_011_666_982_945,
        -0.010_597_401_784_997_278,
    ])
}

/// One analysis level: filter and keep every other output, circularly.
///
/// `approx[n] = sum_k lowpass[k] * x[(2n + k) mod L]`, likewise for detail.
pub fn analysis_step(signal: &[f64], qmf: &QmfPair) -> Result<(Vec<f64>, Vec<f64>)> {
    let len = signal.len();
    if len < 2 || !len.is_multiple_of(2) {
        return Err(Error::Length { len, divisor: 2 });
    }
    let half = len / 2;
    let mut approx = vec![0.0; half];
    let mut detail = vec![0.0; half];
    for n in 0..half {
        let mut a = 0.0;
        let mut d = 0.0;
        for (k, (lo, hi)) in qmf.lowpass.iter().zip(&qmf.highpass).enumerate() {
            let x = signal[(2 * n + k) % len];
            a += lo * x;
            d += hi * x;
        }
        approx[n] = a;
        detail[n] = d;
    }
    Ok((approx, detail))
}

/// Leaves of a full packet tree, in natural (filter-tree) order.
#[derive(Debug, Clone, PartialEq)]
pub struct WpdLeaves {
    pub level: usize,
    pub leaves: Vec<Vec<f64>>,
}

impl WpdLeaves {
    pub fn leaf_len(&self) -> usize {
        self.leaves.first().map_or(0, Vec::len)
    }

    pub fn energy(&self) -> f64 {
        self.leaves.iter().flatten().map(|c| c * c).sum()
    }

    /// Leaf covering the `freq_index`-th band from the bottom of the spectrum.
    pub fn by_frequency(&self, freq_index: usize) -> &[f64] {
        &self.leaves[natural_index(freq_index)]
    }
}

pub fn wpd_decompose(signal: &[f64], level: usize, qmf: &QmfPair) -> Result<WpdLeaves> {
    if level == 0 {
        return Err(Error::invalid("decomposition level must be >= 1"));
    }
    let divisor = 1usize << level;
    if signal.is_empty() || !signal.len().is_multiple_of(divisor) {
        return Err(Error::Length {
            len: signal.len(),
            divisor,
        });
    }
    let mut nodes = vec![signal.to_vec()];
    for _ in 0..level {
        let mut next = Vec::with_capacity(nodes.len() * 2);
        for node in &nodes {
            let (a, d) = analysis_step(node, qmf)?;
            next.push(a);
            next.push(d);
        }
        nodes = next;
    }
    Ok(WpdLeaves {
        level,
        leaves: nodes,
    })
}

/// Natural tree index of the leaf at frequency position `f` (binary to Gray code).
pub fn natural_index(freq_index: usize) -> usize {
    freq_index ^ (freq_index >> 1)
}

/// `perm[f]` is the natural leaf index holding the `f`-th lowest band.
pub fn frequency_order(level: usize) -> Vec<usize> {
    (0..1usize << level).map(natural_index).collect()
}

/// Inverse of [`frequency_order`]: `inv[n]` is the frequency position of natural leaf `n`.
pub fn inverse_frequency_order(level: usize) -> Vec<usize> {
    let perm = frequency_order(level);
    let mut inv = vec![0; perm.len()];
    for (f, &n) in perm.iter().enumerate() {
        inv[n] = f;
    }
    inv
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Band {
    Delta,
    Theta,
    Alpha,
    Beta,
    Gamma,
}

impl Band {
    pub fn name(self) -> &'static str {
        match self {
            Band::Delta => "delta",
            Band::Theta => "theta",
            Band::Alpha => "alpha",
            Band::Beta => "beta",
            Band::Gamma => "gamma",
        }
    }

    pub fn hz_range(self) -> (f64, f64) {
        match self {
            Band::Delta => (0.0, 4.0),
            Band::Theta => (4.0, 8.0),
            Band::Alpha => (8.0, 12.0),
            Band::Beta => (12.0, 32.0),
            Band::Gamma => (32.0, 48.0),
        }
    }
}

/// A band and the frequency-ordered leaves that make it up.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSpec {
    pub band: Band,
    pub hz_range: (f64, f64),
    pub leaf_indices: Vec<usize>,
}

impl BandSpec {
    /// Leaves whose span lies inside the band, for a tree of `level` at `sample_rate_hz`.
    pub fn for_rate(band: Band, sample_rate_hz: f64, level: usize) -> Self {
        let (lo, hi) = band.hz_range();
        let width = sample_rate_hz / 2.0 / (1usize << level) as f64;
        let leaf_indices = (0..1usize << level)
            .filter(|&f| {
                let start = f as f64 * width;
                start >= lo - 1e-9 && start + width <= hi + 1e-9
            })
            .collect();
        BandSpec {
            band,
            hz_range: (lo, hi),
            leaf_indices,
        }
    }
}

/// Delta through gamma at 128 Hz, level 4.
pub fn five_bands() -> Vec<BandSpec> {
    [Band::Delta, Band::Theta, Band::Alpha, Band::Beta, Band::Gamma]
        .into_iter()
        .map(|b| BandSpec::for_rate(b, 128.0, DEFAULT_LEVEL))
        .collect()
}

/// The five bands without delta.
pub fn four_bands() -> Vec<BandSpec> {
    five_bands()
        .into_iter()
        .filter(|b| b.band != Band::Delta)
        .collect()
}

/// Concatenated coefficients of the band's leaves, lowest frequency first.
pub fn band_extract(leaves: &WpdLeaves, spec: &BandSpec) -> Result<Vec<f64>> {
    let limit = leaves.leaves.len();
    let mut out = Vec::with_capacity(spec.leaf_indices.len() * leaves.leaf_len());
    for &f in &spec.leaf_indices {
        if f >= limit {
            return Err(Error::IndexOutOfRange { index: f, limit });
        }
        out.extend_from_slice(leaves.by_frequency(f));
    }
    Ok(out)
}
