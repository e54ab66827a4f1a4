//! Recordings, montages, label files and the `raw_f32` container.
//!
//! Two recording formats are supported. The CSV form starts with four header
//! lines and then holds one row of samples per channel, in header order:
//!
//! ```text
//! subject,S01
//! trial,rest
//! rate_hz,128
//! channels,Fp1,Fp2,Cz
//! 0.1,0.2,0.3,...
//! ...
//! ```
//!
//! The binary form is the `raw_f32` container: an 8-byte magic `EEGRID01`,
//! a little-endian `u32` payload kind, a little-endian `u32` metadata length
//! (16 bytes so far), the JSON metadata block, then a `u64` value count
//! followed by that many little-endian `f32` values.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"EEGRID01";

const STANDARD_34: &str = include_str!("../montages/standard_34.csv");
const STANDARD_32: &str = include_str!("../montages/standard_32.csv");

/// A multichannel recording. `data[c]` holds the samples of `channels[c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    pub subject_id: String,
    pub trial_id: String,
    pub sample_rate_hz: f64,
    pub channels: Vec<String>,
    pub data: Vec<Vec<f64>>,
}

impl RawRecording {
    pub fn new(
        subject_id: impl Into<String>,
        trial_id: impl Into<String>,
        sample_rate_hz: f64,
        channels: Vec<String>,
        data: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let rec = RawRecording {
            subject_id: subject_id.into(),
            trial_id: trial_id.into(),
            sample_rate_hz,
            channels,
            data,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::MalformedHeader(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        if self.channels.is_empty() {
            return Err(Error::MalformedHeader("no channels".into()));
        }
        if self.channels.len() != self.data.len() {
            return Err(Error::MalformedHeader(format!(
                "{} channel names but {} data rows",
                self.channels.len(),
                self.data.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &self.channels {
            if !seen.insert(name.as_str()) {
                return Err(Error::Duplicate(name.clone()));
            }
        }
        let expected = self.data[0].len();
        if expected == 0 {
            return Err(Error::MalformedHeader("recording has no samples".into()));
        }
        for (name, row) in self.channels.iter().zip(&self.data) {
            if row.len() != expected {
                return Err(Error::RaggedRows {
                    channel: name.clone(),
                    found: row.len(),
                    expected,
                });
            }
            if let Some(index) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    channel: name.clone(),
                    index,
                });
            }
        }
        Ok(())
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn n_samples(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn duration_seconds(&self) -> f64 {
        self.n_samples() as f64 / self.sample_rate_hz
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordingFormat {
    Csv,
    RawF32,
}

impl RecordingFormat {
    /// Picks the format from a file extension; anything but `.csv` is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => RecordingFormat::Csv,
            _ => RecordingFormat::RawF32,
        }
    }
}

pub fn load_recording(path: impl AsRef<Path>, format: RecordingFormat) -> Result<RawRecording> {
    let path = path.as_ref();
    match format {
        RecordingFormat::Csv => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_recording_csv(&text, &path.display().to_string())
        }
        RecordingFormat::RawF32 => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            decode_recording(&bytes)
        }
    }
}

pub fn save_recording(
    rec: &RawRecording,
    path: impl AsRef<Path>,
    format: RecordingFormat,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        RecordingFormat::Csv => recording_to_csv(rec).into_bytes(),
        RecordingFormat::RawF32 => encode_recording(rec),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn parse_err(context: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        context: context.to_string(),
        line,
        message: message.into(),
    }
}

pub fn parse_recording_csv(text: &str, context: &str) -> Result<RawRecording> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let mut header = |key: &str| -> Result<(usize, Vec<String>)> {
        let (no, line) = lines
            .next()
            .ok_or_else(|| Error::MalformedHeader(format!("{context}: missing `{key}` line")))?;
        let mut fields = line.split(',').map(|f| f.trim().to_string());
        match fields.next() {
            Some(k) if k == key => {}
            other => {
                return Err(Error::MalformedHeader(format!(
                    "{context}: line {no}: expected `{key}`, found {:?}",
                    other.unwrap_or_default()
                )))
            }
        }
        Ok((no, fields.collect()))
    };

    let (_, subject) = header("subject")?;
    let (_, trial) = header("trial")?;
    let (rate_line, rate) = header("rate_hz")?;
    let (_, channels) = header("channels")?;
    let single = |v: Vec<String>, key: &str| -> Result<String> {
        match v.as_slice() {
            [one] if !one.is_empty() => Ok(one.clone()),
            _ => Err(Error::MalformedHeader(format!(
                "{context}: `{key}` needs exactly one value"
            ))),
        }
    };
    let subject = single(subject, "subject")?;
    let trial = single(trial, "trial")?;
    let rate: f64 = single(rate, "rate_hz")?
        .parse()
        .map_err(|_| Error::MalformedHeader(format!("{context}: line {rate_line}: bad rate_hz")))?;
    if channels.is_empty() || channels.iter().any(String::is_empty) {
        return Err(Error::MalformedHeader(format!(
            "{context}: empty channel list or channel name"
        )));
    }

    let mut data = Vec::with_capacity(channels.len());
    for (no, line) in lines {
        let row = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(context, no, format!("bad sample {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        data.push(row);
    }
    if data.len() != channels.len() {
        return Err(Error::MalformedHeader(format!(
            "{context}: header lists {} channels but file has {} data rows",
            channels.len(),
            data.len()
        )));
    }
    RawRecording::new(subject, trial, rate, channels, data)
}

pub fn recording_to_csv(rec: &RawRecording) -> String {
    let mut out = String::new();
    out.push_str(&format!("subject,{}\n", rec.subject_id));
    out.push_str(&format!("trial,{}\n", rec.trial_id));
    out.push_str(&format!("rate_hz,{}\n", rec.sample_rate_hz));
    out.push_str(&format!("channels,{}\n", rec.channels.join(",")));
    for row in &rec.data {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Payload kinds stored in the container header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum PayloadKind {
    Recording = 1,
    SampleSet = 2,
    Checkpoint = 3,
}

/// Encodes a container: magic, kind, metadata JSON and an `f32` payload.
pub fn write_container<M: Serialize>(kind: PayloadKind, meta: &M, values: &[f32]) -> Vec<u8> {
    let meta = serde_json::to_vec(meta).expect("metadata serializes");
    let mut out = Vec::with_capacity(16 + meta.len() + 8 + values.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(kind as u32).to_le_bytes());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_container<M: for<'de> Deserialize<'de>>(
    bytes: &[u8],
    expected: PayloadKind,
) -> Result<(M, Vec<f32>)> {
    let mut cursor = bytes;
    let mut magic = [0u8; 8];
    read_exact(&mut cursor, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Container("bad magic".into()));
    }
    let kind = read_u32(&mut cursor)?;
    if kind != expected as u32 {
        return Err(Error::Container(format!(
            "payload kind {kind}, expected {}",
            expected as u32
        )));
    }
    let meta_len = read_u32(&mut cursor)? as usize;
    if cursor.len() < meta_len {
        return Err(Error::Container("truncated metadata".into()));
    }
    let (meta_bytes, rest) = cursor.split_at(meta_len);
    let meta: M = serde_json::from_slice(meta_bytes)
        .map_err(|e| Error::Container(format!("metadata: {e}")))?;
    cursor = rest;
    let mut count = [0u8; 8];
    read_exact(&mut cursor, &mut count)?;
    let count = u64::from_le_bytes(count) as usize;
    if cursor.len() != count * 4 {
        return Err(Error::Container(format!(
            "payload has {} bytes, header promises {count} values",
            cursor.len()
        )));
    }
    let values = cursor
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((meta, values))
}

fn read_exact(cursor: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    cursor
        .read_exact(buf)
        .map_err(|_| Error::Container("truncated header".into()))
}

fn read_u32(cursor: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(cursor, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[derive(Serialize, Deserialize)]
struct RecordingMeta {
    subject: String,
    trial: String,
    rate_hz: f64,
    channels: Vec<String>,
    samples: usize,
}

/// Samples are stored as `f32`; values that are not `f32`-representable are rounded.
pub fn encode_recording(rec: &RawRecording) -> Vec<u8> {
    let meta = RecordingMeta {
        subject: rec.subject_id.clone(),
        trial: rec.trial_id.clone(),
        rate_hz: rec.sample_rate_hz,
        channels: rec.channels.clone(),
        samples: rec.n_samples(),
    };
    let values: Vec<f32> = rec.data.iter().flatten().map(|&v| v as f32).collect();
    write_container(PayloadKind::Recording, &meta, &values)
}

pub fn decode_recording(bytes: &[u8]) -> Result<RawRecording> {
    let (meta, values): (RecordingMeta, _) = read_container(bytes, PayloadKind::Recording)?;
    if meta.samples == 0 || values.len() != meta.samples * meta.channels.len() {
        return Err(Error::Container(format!(
            "{} values do not fill {} channels x {} samples",
            values.len(),
            meta.channels.len(),
            meta.samples
        )));
    }
    let data = values
        .chunks_exact(meta.samples)
        .map(|row| row.iter().map(|&v| f64::from(v)).collect())
        .collect();
    RawRecording::new(meta.subject, meta.trial, meta.rate_hz, meta.channels, data)
}

/// Electrode positions in normalized scalp coordinates, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Montage {
    entries: Vec<(String, [f64; 2])>,
}

impl Montage {
    pub fn new(entries: Vec<(String, [f64; 2])>) -> Result<Self> {
        let mut names = HashSet::new();
        let mut positions = HashSet::new();
        for (name, [x, y]) in &entries {
            if !(0.0..=1.0).contains(x) || !(0.0..=1.0).contains(y) {
                return Err(Error::CoordinateRange {
                    name: name.clone(),
                    x: *x,
                    y: *y,
                });
            }
            if !names.insert(name.clone()) {
                return Err(Error::Duplicate(name.clone()));
            }
            if !positions.insert((x.to_bits(), y.to_bits())) {
                return Err(Error::Duplicate(format!("position of {name}")));
            }
        }
        Ok(Montage { entries })
    }

    /// 34-electrode 10-20 layout (32 DEAP channels plus TP9/TP10), flat projection.
    pub fn standard_34() -> Self {
        parse_montage(STANDARD_34, "standard_34").expect("bundled montage is valid")
    }

    /// The 32-channel DEAP subset of [`Montage::standard_34`].
    pub fn standard_32() -> Self {
        parse_montage(STANDARD_32, "standard_32").expect("bundled montage is valid")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn entries(&self) -> &[(String, [f64; 2])] {
        &self.entries
    }

    pub fn position(&self, name: &str) -> Option<[f64; 2]> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, p)| *p)
    }

    /// Keeps only the named channels, in the order given.
    pub fn subset(&self, names: &[String]) -> Result<Montage> {
        let entries = names
            .iter()
            .map(|n| {
                self.position(n)
                    .map(|p| (n.clone(), p))
                    .ok_or_else(|| Error::UnknownChannel(n.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Montage::new(entries)
    }

    /// Fails if any recording channel lacks a position.
    pub fn covers(&self, rec: &RawRecording) -> Result<()> {
        match rec.channels.iter().find(|c| self.position(c).is_none()) {
            Some(c) => Err(Error::UnknownChannel(c.clone())),
            None => Ok(()),
        }
    }
}

pub fn load_montage(path: impl AsRef<Path>) -> Result<Montage> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_montage(&text, &path.display().to_string())
}

pub fn parse_montage(text: &str, context: &str) -> Result<Montage> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if i == 0 && fields.first() == Some(&"name") {
            continue;
        }
        let [name, x, y] = fields.as_slice() else {
            return Err(parse_err(context, i + 1, "expected name,x,y"));
        };
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| parse_err(context, i + 1, format!("bad coordinate {s:?}")))
        };
        entries.push((name.to_string(), [parse(x)?, parse(y)?]));
    }
    Montage::new(entries)
}

pub fn save_montage(montage: &Montage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::from("name,x,y\n");
    for (n, [x, y]) in montage.entries() {
        text.push_str(&format!("{n},{x},{y}\n"));
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(alias = "sad")]
    Sad,
    #[serde(alias = "valence")]
    Valence,
    #[serde(alias = "arousal")]
    Arousal,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sad" => Ok(Task::Sad),
            "valence" => Ok(Task::Valence),
            "arousal" => Ok(Task::Arousal),
            _ => Err(Error::invalid(format!("unknown task {s:?}"))),
        }
    }
}

/// A self-assessment rating or an already binary class label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LabelValue {
    Rating(f64),
    Binary(u8),
}

/// Wildcard trial id: the entry applies to every trial of the subject.
pub const ANY_TRIAL: &str = "*";

#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    pub task: Task,
    pub labels: BTreeMap<(String, String), LabelValue>,
}

impl LabelSet {
    pub fn lookup(&self, subject: &str, trial: &str) -> Option<LabelValue> {
        self.labels
            .get(&(subject.to_string(), trial.to_string()))
            .or_else(|| {
                self.labels
                    .get(&(subject.to_string(), ANY_TRIAL.to_string()))
            })
            .copied()
    }
}

/// Parses `subject,trial,rating` (ratings) or `subject,trial,label` (binary labels).
pub fn parse_labels(text: &str, task: Task, context: &str) -> Result<LabelSet> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::MalformedHeader(format!("{context}: empty label file")))?;
    let binary = match header.split(',').map(str::trim).collect::<Vec<_>>().as_slice() {
        ["subject", "trial", "rating"] => false,
        ["subject", "trial", "label"] => true,
        _ => {
            return Err(Error::MalformedHeader(format!(
                "{context}: expected `subject,trial,rating` or `subject,trial,label`"
            )))
        }
    };
    let mut labels = BTreeMap::new();
    for (no, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [subject, trial, value] = fields.as_slice() else {
            return Err(parse_err(context, no, "expected three fields"));
        };
        let value = if binary {
            match *value {
                "0" => LabelValue::Binary(0),
                "1" => LabelValue::Binary(1),
                v => return Err(parse_err(context, no, format!("label must be 0 or 1, got {v:?}"))),
            }
        } else {
            let r: f64 = value
                .parse()
                .map_err(|_| parse_err(context, no, format!("bad rating {value:?}")))?;
            if !r.is_finite() {
                return Err(parse_err(context, no, "non-finite rating"));
            }
            LabelValue::Rating(r)
        };
        let key = (subject.to_string(), trial.to_string());
        if labels.insert(key, value).is_some() {
            return Err(Error::Duplicate(format!("label for {subject}/{trial}")));
        }
    }
    Ok(LabelSet { task, labels })
}

pub fn load_labels(path: impl AsRef<Path>, task: Task) -> Result<LabelSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, task, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRecording {
    pub recording: RawRecording,
    pub label: u8,
}

pub const DEFAULT_RATING_THRESHOLD: f64 = 5.0;

pub fn binarize(value: LabelValue, threshold: f64) -> u8 {
    match value {
        LabelValue::Binary(b) => b,
        LabelValue::Rating(r) => u8::from(r >= threshold),
    }
}

pub fn apply_labels(
    recordings: Vec<RawRecording>,
    labels: &LabelSet,
    threshold: f64,
) -> Result<Vec<LabeledRecording>> {
    recordings
        .into_iter()
        .map(|recording| {
            let value = labels
                .lookup(&recording.subject_id, &recording.trial_id)
                .ok_or_else(|| Error::MissingLabel {
                    subject: recording.subject_id.clone(),
                    trial: recording.trial_id.clone(),
                })?;
            Ok(LabeledRecording {
                label: binarize(value, threshold),
                recording,
            })
        })
        .collect()
}
