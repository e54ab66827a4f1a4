//! Classifier-ready samples in a common channels x height x width form.

use serde::{Deserialize, Serialize};

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureSlot, Provenance};
use crate::io::{read_container, write_container, PayloadKind};
use crate::topomap::FeatureGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Representation {
    /// Channel-by-feature matrix, stored as one plane of `M x B`.
    Model1,
    /// `B` interpolated `K x K` scalp images.
    Model2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub repr: Representation,
    /// `(planes, height, width)`.
    pub shape: (usize, usize, usize),
    pub data: Vec<f64>,
    pub provenance: Provenance,
}

impl Sample {
    pub fn label(&self) -> u8 {
        self.provenance.label
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let (c, h, w) = self.shape;
        if c * h * w != self.data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} does not hold {} values",
                self.shape,
                self.data.len()
            )));
        }
        Ok(())
    }
}

impl From<FeatureMatrix> for Sample {
    fn from(m: FeatureMatrix) -> Self {
        Sample {
            repr: Representation::Model1,
            shape: (1, m.rows, m.cols),
            data: m.data,
            provenance: m.provenance,
        }
    }
}

impl From<FeatureGrid> for Sample {
    fn from(g: FeatureGrid) -> Self {
        Sample {
            repr: Representation::Model2,
            shape: (g.depth, g.size, g.size),
            data: g.data,
            provenance: g.provenance,
        }
    }
}

/// Samples plus the description shared by all of them.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub repr: Representation,
    pub shape: (usize, usize, usize),
    pub layout: Vec<FeatureSlot>,
    pub samples: Vec<Sample>,
}

impl SampleSet {
    pub fn new(
        repr: Representation,
        shape: (usize, usize, usize),
        layout: Vec<FeatureSlot>,
        samples: Vec<Sample>,
    ) -> Result<Self> {
        for s in &samples {
            s.validate()?;
            if s.shape != shape || s.repr != repr {
                return Err(Error::Shape(format!(
                    "sample {:?}/{:?} in a {:?}/{:?} set",
                    s.repr, s.shape, repr, shape
                )));
            }
        }
        Ok(SampleSet {
            repr,
            shape,
            layout,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
struct SampleSetMeta {
    repr: Representation,
    shape: (usize, usize, usize),
    layout: Vec<FeatureSlot>,
    provenance: Vec<Provenance>,
}

/// Values are stored as `f32`.
pub fn encode_sample_set(set: &SampleSet) -> Vec<u8> {
    let meta = SampleSetMeta {
        repr: set.repr,
        shape: set.shape,
        layout: set.layout.clone(),
        provenance: set.samples.iter().map(|s| s.provenance.clone()).collect(),
    };
    let values: Vec<f32> = set
        .samples
        .iter()
        .flat_map(|s| s.data.iter().map(|&v| v as f32))
        .collect();
    write_container(PayloadKind::SampleSet, &meta, &values)
}

pub fn decode_sample_set(bytes: &[u8]) -> Result<SampleSet> {
    let (meta, values): (SampleSetMeta, Vec<f32>) = read_container(bytes, PayloadKind::SampleSet)?;
    let (c, h, w) = meta.shape;
    let per = c * h * w;
    if per == 0 || values.len() != per * meta.provenance.len() {
        return Err(Error::Container(format!(
            "{} values for {} samples of {:?}",
            values.len(),
            meta.provenance.len(),
            meta.shape
        )));
    }
    let samples = meta
        .provenance
        .into_iter()
        .zip(values.chunks_exact(per))
        .map(|(provenance, chunk)| Sample {
            repr: meta.repr,
            shape: meta.shape,
            data: chunk.iter().map(|&v| f64::from(v)).collect(),
            provenance,
        })
        .collect();
    SampleSet::new(meta.repr, meta.shape, meta.layout, samples)
}

pub fn save_sample_set(set: &SampleSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_sample_set(set)).map_err(|e| Error::io(path, e))
}

pub fn load_sample_set(path: impl AsRef<Path>) -> Result<SampleSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_sample_set(&bytes)
}

/// Rounds every value through `f32`, matching what a saved set holds.
pub fn quantize(sample: &mut Sample) {
    for v in &mut sample.data {
        *v = f64::from(*v as f32);
    }
}
