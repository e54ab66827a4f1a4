//! Synthetic cohorts with a spatially localized, class-dependent alpha rhythm.
//!
//! Every channel carries white noise plus a few subject-specific background
//! tones. Class-1 subjects additionally carry an alpha-band oscillation on
//! three adjacent electrodes: a centre electrode and its two nearest
//! neighbours. The centre varies between subjects, so the informative
//! channels differ from one subject to the next while staying in the same
//! scalp neighbourhood.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{LabeledRecording, Montage, RawRecording};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub subjects: usize,
    pub trials_per_subject: usize,
    pub seconds: f64,
    pub rate_hz: f64,
    /// Peak amplitude of the planted alpha oscillation (noise has unit variance).
    pub alpha_amplitude: f64,
    /// Alpha frequency range in Hz.
    pub alpha_hz: (f64, f64),
    pub background_tones: usize,
    pub background_amplitude: f64,
    /// Upper bound of an independent alpha-band tone on every channel.
    pub alpha_noise: f64,
    /// Electrodes that may centre the planted triplet; empty means all.
    pub centers: Vec<String>,
    pub seed: u64,
}

/// Parietal and occipital electrodes of the bundled montages.
pub const POSTERIOR_CENTERS: [&str; 12] = [
    "P3", "Pz", "P4", "PO3", "PO4", "O1", "Oz", "O2", "CP1", "CP2", "P7", "P8",
];

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            subjects: 64,
            trials_per_subject: 1,
            seconds: 5.0,
            rate_hz: 128.0,
            alpha_amplitude: 4.0,
            alpha_hz: (8.5, 11.5),
            background_tones: 0,
            background_amplitude: 1.0,
            alpha_noise: 1.0,
            centers: POSTERIOR_CENTERS.iter().map(|s| s.to_string()).collect(),
            seed: 7,
        }
    }
}

/// Indices of `center` and its two nearest other electrodes.
pub fn triplet(montage: &Montage, center: usize) -> [usize; 3] {
    let entries = montage.entries();
    let [cx, cy] = entries[center].1;
    let mut others: Vec<(f64, usize)> = entries
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != center)
        .map(|(i, (_, [x, y]))| ((x - cx).powi(2) + (y - cy).powi(2), i))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    [center, others[0].1, others[1].1]
}

/// Subject-level ground truth of a generated cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSubject {
    pub id: String,
    pub label: u8,
    /// Planted electrodes, empty for class 0.
    pub planted: Vec<String>,
}

pub fn synthetic_cohort(
    cfg: &SyntheticConfig,
    montage: &Montage,
) -> Result<(Vec<LabeledRecording>, Vec<SyntheticSubject>)> {
    if cfg.subjects < 2 || cfg.trials_per_subject == 0 {
        return Err(Error::invalid("need at least 2 subjects and 1 trial each"));
    }
    if montage.len() < 3 {
        return Err(Error::invalid("montage needs at least 3 electrodes"));
    }
    let n = (cfg.seconds * cfg.rate_hz).round() as usize;
    let centers: Vec<usize> = if cfg.centers.is_empty() {
        (0..montage.len()).collect()
    } else {
        cfg.centers
            .iter()
            .map(|c| {
                montage
                    .names()
                    .position(|m| m == c)
                    .ok_or_else(|| Error::UnknownChannel(c.clone()))
            })
            .collect::<Result<_>>()?
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut labels: Vec<u8> = (0..cfg.subjects).map(|i| u8::from(i % 2 == 1)).collect();
    labels.shuffle(&mut rng);
    let names: Vec<String> = montage.names().map(str::to_string).collect();
    let width = cfg.subjects.to_string().len().max(2);
    let mut recordings = Vec::new();
    let mut subjects = Vec::new();
    for (s, &label) in labels.iter().enumerate() {
        let id = format!("S{:0width$}", s + 1);
        let planted = if label == 1 {
            triplet(montage, centers[rng.gen_range(0..centers.len())]).to_vec()
        } else {
            Vec::new()
        };
        let alpha_f = rng.gen_range(cfg.alpha_hz.0..cfg.alpha_hz.1);
        for t in 0..cfg.trials_per_subject {
            let mut data = Vec::with_capacity(names.len());
            for ch in 0..names.len() {
                let tones: Vec<(f64, f64, f64)> = (0..cfg.background_tones)
                    .map(|_| {
                        (
                            rng.gen_range(1.0..40.0),
                            rng.gen_range(0.0..cfg.background_amplitude),
                            rng.gen_range(0.0..std::f64::consts::TAU),
                        )
                    })
                    .collect();
                let alpha_phase = rng.gen_range(0.0..std::f64::consts::TAU);
                let stray = (
                    rng.gen_range(cfg.alpha_hz.0..cfg.alpha_hz.1),
                    rng.gen_range(0.0..=cfg.alpha_noise),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                );
                let boosted = planted.contains(&ch);
                let row = (0..n)
                    .map(|k| {
                        let time = k as f64 / cfg.rate_hz;
                        let mut v: f64 = rng.sample(StandardNormal);
                        for &(f, a, p) in tones.iter().chain([&stray]) {
                            v += a * (std::f64::consts::TAU * f * time + p).sin();
                        }
                        if boosted {
                            v += cfg.alpha_amplitude
                                * (std::f64::consts::TAU * alpha_f * time + alpha_phase).sin();
                        }
                        v
                    })
                    .collect();
                data.push(row);
            }
            let recording = RawRecording::new(
                id.clone(),
                format!("T{:02}", t + 1),
                cfg.rate_hz,
                names.clone(),
                data,
            )?;
            recordings.push(LabeledRecording { recording, label });
        }
        subjects.push(SyntheticSubject {
            id,
            label,
            planted: planted.iter().map(|&i| names[i].clone()).collect(),
        });
    }
    Ok((recordings, subjects))
}
