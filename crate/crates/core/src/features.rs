//! Band energy and wavelet entropy features, and the channel-by-feature matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::WindowSegment;
use crate::wavelet::{band_extract, wpd_decompose, BandSpec, QmfPair, DEFAULT_LEVEL};

/// Mean squared coefficient of one band.
pub fn mean_band_energy(coeffs: &[f64]) -> Result<f64> {
    if coeffs.is_empty() {
        return Err(Error::invalid("mean energy of an empty coefficient vector"));
    }
    Ok(coeffs.iter().map(|c| c * c).sum::<f64>() / coeffs.len() as f64)
}

/// Each band's share of the summed mean energies.
pub fn relative_energies(band_energies: &[f64]) -> Result<Vec<f64>> {
    if band_energies.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(Error::invalid("band energies must be finite and non-negative"));
    }
    let total: f64 = band_energies.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateEnergies);
    }
    Ok(band_energies.iter().map(|e| e / total).collect())
}

/// `-q ln q` per band, with `0 ln 0 = 0`.
pub fn wavelet_entropy(q: &[f64]) -> Result<Vec<f64>> {
    q.iter()
        .map(|&p| {
            if !(0.0..=1.0).contains(&p) {
                Err(Error::invalid(format!("relative energy {p} outside [0, 1]")))
            } else if p == 0.0 {
                Ok(0.0)
            } else {
                Ok(-p * p.ln())
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandFeatures {
    pub mean_energy: Vec<f64>,
    pub relative_energy: Vec<f64>,
    pub entropy: Vec<f64>,
    pub total_energy: f64,
}

impl BandFeatures {
    /// Fails on an all-zero signal, where relative energy is undefined.
    pub fn from_energies(mean_energy: Vec<f64>) -> Result<Self> {
        let relative_energy = relative_energies(&mean_energy)?;
        let entropy = wavelet_entropy(&relative_energy)?;
        Ok(BandFeatures {
            total_energy: mean_energy.iter().sum(),
            mean_energy,
            relative_energy,
            entropy,
        })
    }
}

/// Per-band mean energies of one channel's window.
pub fn channel_band_energies(signal: &[f64], bands: &[BandSpec], qmf: &QmfPair) -> Result<Vec<f64>> {
    let leaves = wpd_decompose(signal, DEFAULT_LEVEL, qmf)?;
    bands
        .iter()
        .map(|b| mean_band_energy(&band_extract(&leaves, b)?))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureKind {
    Energy,
    Entropy,
}

/// Name of one feature column, e.g. `alpha_energy`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSlot {
    pub band: crate::wavelet::Band,
    pub kind: FeatureKind,
}

impl FeatureSlot {
    pub fn label(&self) -> String {
        let kind = match self.kind {
            FeatureKind::Energy => "energy",
            FeatureKind::Entropy => "entropy",
        };
        format!("{}_{}", self.band.name(), kind)
    }
}

/// Column layout: band energies, then (optionally) band entropies.
pub fn feature_layout(bands: &[BandSpec], include_entropy: bool) -> Vec<FeatureSlot> {
    let mut layout: Vec<FeatureSlot> = bands
        .iter()
        .map(|b| FeatureSlot {
            band: b.band,
            kind: FeatureKind::Energy,
        })
        .collect();
    if include_entropy {
        layout.extend(bands.iter().map(|b| FeatureSlot {
            band: b.band,
            kind: FeatureKind::Entropy,
        }));
    }
    layout
}

/// Where a sample came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub subject: String,
    pub trial: String,
    pub window_index: usize,
    pub label: u8,
}

impl Provenance {
    pub fn of(window: &WindowSegment) -> Self {
        Provenance {
            subject: window.subject_id.clone(),
            trial: window.trial_id.clone(),
            window_index: window.window_index,
            label: window.label,
        }
    }
}

/// `rows` channels by `layout.len()` features, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub layout: Vec<FeatureSlot>,
    pub channels: Vec<String>,
    pub provenance: Provenance,
}

impl FeatureMatrix {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }
}

pub fn model1_matrix(
    window: &WindowSegment,
    bands: &[BandSpec],
    include_entropy: bool,
    qmf: &QmfPair,
) -> Result<FeatureMatrix> {
    let layout = feature_layout(bands, include_entropy);
    let cols = layout.len();
    let mut data = Vec::with_capacity(window.data.len() * cols);
    for signal in &window.data {
        let energies = channel_band_energies(signal, bands, qmf)?;
        if include_entropy {
            // a flat-zero channel has no defined distribution; its entropies are zero
            let entropy = match BandFeatures::from_energies(energies.clone()) {
                Ok(f) => f.entropy,
                Err(Error::DegenerateEnergies) => vec![0.0; energies.len()],
                Err(e) => return Err(e),
            };
            data.extend_from_slice(&energies);
            data.extend_from_slice(&entropy);
        } else {
            data.extend_from_slice(&energies);
        }
    }
    Ok(FeatureMatrix {
        rows: window.data.len(),
        cols,
        data,
        layout,
        channels: window.channels.as_ref().clone(),
        provenance: Provenance::of(window),
    })
}
