//! Config-driven pipeline: extraction, cross-validated evaluation and paired
//! comparison of two configurations.

use std::collections::BTreeMap;
use std::fs;
use std::hash::Hasher;
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{expand_training_set, AugmentPlan};
use crate::cnn::{self, build_preset, Dataset, Network, Preset, TrainConfig};
use crate::error::{Error, Result};
use crate::features::model1_matrix;
use crate::io::{
    apply_labels, load_labels, load_montage, load_recording, LabeledRecording, Montage,
    RecordingFormat, Task,
};
use crate::mlcore::{
    grid_search, knn_classify, make_folds, subject_vote, svm_predict, svm_train, unit_labels,
    wilcoxon_signed_rank, ConfusionMatrix, FoldMode, FoldPlan, Standardizer, Unit,
    WilcoxonResult,
};
use crate::preprocess::{common_average_reference, normalize_channel, resample_to, segment, SegmentParams};
use crate::sample::{quantize, save_sample_set, Representation, Sample, SampleSet};
use crate::synth::{synthetic_cohort, SyntheticConfig};
use crate::topomap::{model2_tensor, project_montage, write_grid_csv, write_grid_pgm, InterpConfig, ACCEPTED_GRID_SIZES};
use crate::wavelet::{five_bands, four_bands, make_db4, BandSpec};

/// Rate every recording is brought to before feature extraction.
pub const PIPELINE_RATE_HZ: f64 = 128.0;
pub const DATA_DIR_ENV: &str = "EEGRID_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    #[default]
    Energy,
    EnergyEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandSet {
    Five,
    Four,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentKind {
    #[default]
    None,
    Single,
    Extended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classifier {
    Knn3,
    Knn5,
    Svm,
    Cnn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmGrid {
    pub cs: Vec<f64>,
    pub sigmas: Vec<f64>,
}

impl Default for SvmGrid {
    fn default() -> Self {
        SvmGrid {
            cs: vec![0.1, 1.0, 10.0],
            sigmas: vec![0.2, 0.4, 0.8],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// A directory of recordings (`.csv` or `.f32`) and a label file.
    Files {
        recordings: PathBuf,
        labels: PathBuf,
    },
    Synthetic(SyntheticConfig),
}

fn default_folds() -> usize {
    8
}
fn default_grid() -> usize {
    15
}
fn default_threshold() -> f64 {
    crate::io::DEFAULT_RATING_THRESHOLD
}
fn default_montage() -> String {
    "standard_34".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    /// 1 = channel-by-feature matrix, 2 = interpolated scalp grid.
    pub model: u8,
    #[serde(default)]
    pub features: FeatureSet,
    /// Defaults to five bands for SAD and four otherwise.
    #[serde(default)]
    pub bands: Option<BandSet>,
    pub window_seconds: f64,
    /// Defaults to the window length for SAD and half of it otherwise.
    #[serde(default)]
    pub shift_seconds: Option<f64>,
    #[serde(default)]
    pub baseline_trim_seconds: f64,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
    #[serde(default)]
    pub interp: InterpConfig,
    #[serde(default)]
    pub augment: AugmentKind,
    pub classifier: Classifier,
    #[serde(default = "default_folds")]
    pub folds: usize,
    pub mode: FoldMode,
    pub seed: u64,
    #[serde(default = "default_threshold")]
    pub rating_threshold: f64,
    /// Subject-level majority voting; defaults to on for SAD.
    #[serde(default)]
    pub vote: Option<bool>,
    #[serde(default)]
    pub svm: SvmGrid,
    #[serde(default)]
    pub train: TrainConfig,
    /// `standard_34`, `standard_32` or a montage CSV path.
    #[serde(default = "default_montage")]
    pub montage: String,
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub data: DataSource,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Parses TOML, then applies `key = value` overrides (dotted keys reach
    /// into tables) before validation.
    pub fn from_toml_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for (key, raw) in overrides {
            set_dotted(&mut doc, key, parse_override(raw))?;
        }
        let cfg: ExperimentConfig = doc
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !matches!(self.model, 1 | 2) {
            return bad(format!("model must be 1 or 2, got {}", self.model));
        }
        if !ACCEPTED_GRID_SIZES.contains(&self.grid_size) {
            return bad(format!(
                "grid_size must be one of {ACCEPTED_GRID_SIZES:?}, got {}",
                self.grid_size
            ));
        }
        if self.window_seconds.is_nan() || self.window_seconds <= 0.0 || self.shift() <= 0.0 || self.baseline_trim_seconds < 0.0 {
            return bad("window, shift and baseline trim must be positive".into());
        }
        // train, validation and test each take at least one fold
        if self.folds < 3 {
            return bad(format!("need at least 3 folds, got {}", self.folds));
        }
        if self.svm.cs.is_empty() || self.svm.sigmas.is_empty() {
            return bad("svm grid must not be empty".into());
        }
        self.interp.validate()?;
        self.train.validate()?;
        Ok(())
    }

    pub fn shift(&self) -> f64 {
        self.shift_seconds.unwrap_or(match self.task {
            Task::Sad => self.window_seconds,
            _ => self.window_seconds / 2.0,
        })
    }

    pub fn band_specs(&self) -> Vec<BandSpec> {
        match self.bands.unwrap_or(match self.task {
            Task::Sad => BandSet::Five,
            _ => BandSet::Four,
        }) {
            BandSet::Five => five_bands(),
            BandSet::Four => four_bands(),
        }
    }

    pub fn votes(&self) -> bool {
        self.vote.unwrap_or(self.task == Task::Sad)
    }

    pub fn representation(&self) -> Representation {
        if self.model == 1 {
            Representation::Model1
        } else {
            Representation::Model2
        }
    }

    pub fn augment_plan(&self) -> AugmentPlan {
        let r = self.representation();
        match self.augment {
            AugmentKind::None => AugmentPlan::none(r),
            AugmentKind::Single => AugmentPlan::single(r),
            AugmentKind::Extended => AugmentPlan::extended(r),
        }
    }

    /// Sorted-key JSON of the whole config.
    pub fn canonical_text(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    /// 64-bit FNV-1a of [`ExperimentConfig::canonical_text`], as 16 hex digits.
    pub fn hash(&self) -> String {
        let mut h = FnvHasher::default();
        h.write(self.canonical_text().as_bytes());
        format!("{:016x}", h.finish())
    }

    pub fn data_root(&self) -> PathBuf {
        self.data_dir
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.data_root().join(p)
        }
    }

    pub fn output_root(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("eegrid-out"))
    }
}

fn parse_override(raw: &str) -> toml::Value {
    // bare words that are not TOML literals are taken as strings
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_dotted(doc: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| Error::Config(format!("bad key {key:?}")))?;
    let mut table = doc;
    for p in parts {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{p} in {key:?} is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

pub fn montage_for(cfg: &ExperimentConfig) -> Result<Montage> {
    match cfg.montage.as_str() {
        "standard_34" => Ok(Montage::standard_34()),
        "standard_32" => Ok(Montage::standard_32()),
        path => load_montage(cfg.resolve(Path::new(path))),
    }
}

/// Labeled recordings named by the config, sorted by subject then trial.
pub fn load_cohort(cfg: &ExperimentConfig, montage: &Montage) -> Result<Vec<LabeledRecording>> {
    let mut recs = match &cfg.data {
        DataSource::Synthetic(s) => synthetic_cohort(s, montage)?.0,
        DataSource::Files { recordings, labels } => {
            let dir = cfg.resolve(recordings);
            let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
                .map_err(|e| Error::io(&dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    matches!(
                        p.extension().and_then(|e| e.to_str()),
                        Some("csv" | "f32" | "raw")
                    )
                })
                .collect();
            paths.sort();
            if paths.is_empty() {
                return Err(Error::invalid(format!("no recordings in {}", dir.display())));
            }
            let raws = paths
                .iter()
                .map(|p| load_recording(p, RecordingFormat::from_path(p)))
                .collect::<Result<Vec<_>>>()?;
            let labels = load_labels(cfg.resolve(labels), cfg.task)?;
            apply_labels(raws, &labels, cfg.rating_threshold)?
        }
    };
    recs.sort_by(|a, b| {
        (&a.recording.subject_id, &a.recording.trial_id)
            .cmp(&(&b.recording.subject_id, &b.recording.trial_id))
    });
    Ok(recs)
}

/// Resampling, re-referencing, normalization and segmentation of one recording.
pub fn prepare_windows(rec: &LabeledRecording, cfg: &ExperimentConfig) -> Result<Vec<crate::preprocess::WindowSegment>> {
    let mut raw = rec.recording.clone();
    if raw.sample_rate_hz != PIPELINE_RATE_HZ {
        raw = resample_to(&raw, PIPELINE_RATE_HZ)?;
    }
    let raw = normalize_channel(&common_average_reference(&raw)?);
    let params = SegmentParams::new(cfg.window_seconds, cfg.shift())
        .with_baseline_trim(cfg.baseline_trim_seconds);
    segment(
        &LabeledRecording {
            recording: raw,
            label: rec.label,
        },
        &params,
    )
}

/// Feature samples of one recording in the configured representation.
fn recording_samples(rec: &LabeledRecording, cfg: &ExperimentConfig, montage: &Montage) -> Result<Vec<Sample>> {
    let qmf = make_db4();
    let bands = cfg.band_specs();
    let entropy = cfg.features == FeatureSet::EnergyEntropy;
    let proj = if cfg.model == 2 {
        Some(project_montage(&montage.subset(&rec.recording.channels)?, cfg.grid_size)?)
    } else {
        None
    };
    prepare_windows(rec, cfg)?
        .iter()
        .map(|w| {
            let m = model1_matrix(w, &bands, entropy, &qmf)?;
            let mut s = match &proj {
                None => Sample::from(m),
                Some(p) => Sample::from(model2_tensor(&m, p, &cfg.interp)?),
            };
            quantize(&mut s);
            Ok(s)
        })
        .collect()
}

pub fn build_sample_set(cfg: &ExperimentConfig, recs: &[LabeledRecording], montage: &Montage) -> Result<SampleSet> {
    let per_rec = recs
        .par_iter()
        .map(|r| recording_samples(r, cfg, montage))
        .collect::<Result<Vec<_>>>()?;
    let samples: Vec<Sample> = per_rec.into_iter().flatten().collect();
    let first = samples.first().ok_or_else(|| Error::invalid("no windows extracted"))?;
    let layout = crate::features::feature_layout(&cfg.band_specs(), cfg.features == FeatureSet::EnergyEntropy);
    SampleSet::new(first.repr, first.shape, layout, samples)
}

fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Samples for the config, from files or the synthetic generator.
pub fn extract(cfg: &ExperimentConfig, jobs: usize) -> Result<SampleSet> {
    cfg.validate()?;
    let montage = montage_for(cfg)?;
    let recs = load_cohort(cfg, &montage)?;
    with_jobs(jobs, || build_sample_set(cfg, &recs, &montage))?
}

pub fn sample_set_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_root().join(format!("samples-{}.eeg", cfg.hash()))
}

/// Extracts and writes the sample set; returns where it went.
pub fn run_extract(cfg: &ExperimentConfig, jobs: usize) -> Result<(PathBuf, SampleSet)> {
    let set = extract(cfg, jobs)?;
    let path = sample_set_path(cfg);
    let dir = cfg.output_root();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    save_sample_set(&set, &path)?;
    Ok((path, set))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FoldId {
    Index(usize),
    Name(String),
}

/// One line of a metrics report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: FoldId,
    pub accuracy: f64,
    pub f1: Option<f64>,
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
    pub p_value: Option<f64>,
    pub config_hash: String,
    pub seed: u64,
}

impl FoldRecord {
    fn new(fold: FoldId, cm: ConfusionMatrix, cfg_hash: &str, seed: u64) -> Result<Self> {
        let m = cm.metrics()?;
        Ok(FoldRecord {
            fold,
            accuracy: m.accuracy,
            f1: m.f1,
            tp: cm.tp,
            fn_: cm.fn_,
            fp: cm.fp,
            tn: cm.tn,
            p_value: None,
            config_hash: cfg_hash.to_string(),
            seed,
        })
    }

    pub fn confusion(&self) -> ConfusionMatrix {
        ConfusionMatrix {
            tp: self.tp,
            fn_: self.fn_,
            fp: self.fp,
            tn: self.tn,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_hash: String,
    pub seed: u64,
    pub folds: Vec<FoldRecord>,
    pub aggregate: FoldRecord,
    /// Units per fold, for checking that two runs used the same plan.
    pub fold_units: Vec<Vec<String>>,
}

impl Report {
    /// One JSON object per fold, then the aggregate.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in self.folds.iter().chain(std::iter::once(&self.aggregate)) {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn fold_accuracies(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.accuracy).collect()
    }
}

/// Per-fold seed derived from the config seed.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ (fold as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fold_plan(cfg: &ExperimentConfig, set: &SampleSet) -> Result<FoldPlan> {
    let (units, labels) = unit_labels(set.samples.iter().map(|s| &s.provenance), cfg.mode);
    make_folds(&units, &labels, cfg.folds, cfg.mode, cfg.seed)
}

fn window_predictions(
    cfg: &ExperimentConfig,
    train: &[Sample],
    valid: &[&Sample],
    test: &[&Sample],
    seed: u64,
) -> Result<Vec<u8>> {
    match cfg.classifier {
        Classifier::Knn3 | Classifier::Knn5 | Classifier::Svm => {
            let rows: Vec<&[f64]> = train.iter().map(|s| s.data.as_slice()).collect();
            let scaler = Standardizer::fit(&rows);
            let z = |s: &Sample| scaler.transform(&s.data);
            let tr: Vec<Vec<f64>> = train.iter().map(z).collect();
            let tr_rows: Vec<&[f64]> = tr.iter().map(Vec::as_slice).collect();
            let tr_y: Vec<u8> = train.iter().map(Sample::label).collect();
            let te: Vec<Vec<f64>> = test.iter().map(|s| z(s)).collect();
            if cfg.classifier == Classifier::Svm {
                let va: Vec<Vec<f64>> = valid.iter().map(|s| z(s)).collect();
                let va_rows: Vec<&[f64]> = va.iter().map(Vec::as_slice).collect();
                let va_y: Vec<u8> = valid.iter().map(|s| s.label()).collect();
                let (params, _) = grid_search(&tr_rows, &tr_y, &va_rows, &va_y, &cfg.svm.cs, &cfg.svm.sigmas)?;
                let model = svm_train(&tr_rows, &tr_y, &params)?;
                Ok(te.iter().map(|q| svm_predict(&model, q)).collect())
            } else {
                let k = if cfg.classifier == Classifier::Knn3 { 3 } else { 5 };
                te.iter().map(|q| knn_classify(&tr_rows, &tr_y, q, k)).collect()
            }
        }
        Classifier::Cnn => {
            let preset = if cfg.task == Task::Sad {
                Preset::SadNet
            } else {
                Preset::DeapNet
            };
            let train_refs: Vec<&Sample> = train.iter().collect();
            let tr = Dataset::from_samples(&train_refs)?;
            let va = Dataset::from_samples(valid)?;
            let te = Dataset::from_samples(test)?;
            let mut net = Network::new(build_preset(preset, train[0].shape)?, seed)?;
            let tc = TrainConfig {
                seed,
                ..cfg.train.clone()
            };
            cnn::train(&mut net, &tr, &va, &tc)?;
            cnn::train::predict_dataset(&mut net, &te.x, tc.batch_size)
        }
    }
}

/// Inputs of one fold: the augmented training set, and the untouched
/// validation and test samples.
#[derive(Debug, Clone)]
pub struct FoldData<'a> {
    pub train: Vec<Sample>,
    pub validation: Vec<&'a Sample>,
    pub test: Vec<&'a Sample>,
}

pub fn fold_data<'a>(cfg: &ExperimentConfig, set: &'a SampleSet, plan: &FoldPlan, fold: usize) -> Result<FoldData<'a>> {
    let split = plan.split(fold);
    let provs: Vec<&crate::features::Provenance> = set.samples.iter().map(|s| &s.provenance).collect();
    let (tr, va, te) = split.partition(&provs, cfg.mode)?;
    if tr.is_empty() || va.is_empty() || te.is_empty() {
        return Err(Error::invalid(format!("fold {fold} leaves an empty partition")));
    }
    let pick = |idx: &[usize]| -> Vec<&'a Sample> { idx.iter().map(|&i| &set.samples[i]).collect() };
    let train_raw: Vec<Sample> = pick(&tr).into_iter().cloned().collect();
    Ok(FoldData {
        train: expand_training_set(&train_raw, &cfg.augment_plan())?,
        validation: pick(&va),
        test: pick(&te),
    })
}

fn evaluate_fold(cfg: &ExperimentConfig, set: &SampleSet, plan: &FoldPlan, fold: usize, hash: &str) -> Result<FoldRecord> {
    let FoldData { train, validation, test } = fold_data(cfg, set, plan, fold)?;
    let pred = window_predictions(cfg, &train, &validation, &test, fold_seed(cfg.seed, fold))?;
    let mut cm = ConfusionMatrix::default();
    if cfg.votes() {
        let mut by_unit: BTreeMap<Unit, (u8, Vec<u8>)> = BTreeMap::new();
        for (s, &p) in test.iter().zip(&pred) {
            let e = by_unit
                .entry(Unit::of(&s.provenance, cfg.mode))
                .or_insert((s.label(), Vec::new()));
            e.1.push(p);
        }
        let truths = unit_labels(test.iter().map(|s| &s.provenance), cfg.mode);
        for (u, truth) in truths.0.iter().zip(truths.1) {
            cm.record(truth, subject_vote(&by_unit[u].1)?);
        }
    } else {
        for (s, &p) in test.iter().zip(&pred) {
            cm.record(s.label(), p);
        }
    }
    FoldRecord::new(FoldId::Index(fold), cm, hash, cfg.seed)
}

/// Cross-validation over an already extracted sample set.
pub fn run_experiment_on(cfg: &ExperimentConfig, set: &SampleSet, jobs: usize) -> Result<Report> {
    cfg.validate()?;
    if set.repr != cfg.representation() {
        return Err(Error::Config(format!(
            "sample set holds {:?} but the config asks for model {}",
            set.repr, cfg.model
        )));
    }
    let plan = fold_plan(cfg, set)?;
    for s in plan.splits() {
        s.check_disjoint()?;
    }
    let hash = cfg.hash();
    let folds = with_jobs(jobs, || {
        (0..cfg.folds)
            .into_par_iter()
            .map(|f| evaluate_fold(cfg, set, &plan, f, &hash))
            .collect::<Result<Vec<_>>>()
    })??;
    let total: ConfusionMatrix = folds.iter().map(FoldRecord::confusion).sum();
    let aggregate = FoldRecord::new(FoldId::Name("aggregate".into()), total, &hash, cfg.seed)?;
    let mut fold_units = vec![Vec::new(); cfg.folds];
    for (u, &f) in &plan.assignment {
        fold_units[f].push(u.to_string());
    }
    Ok(Report {
        config_hash: hash,
        seed: cfg.seed,
        folds,
        aggregate,
        fold_units,
    })
}

/// Extraction fused with evaluation.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<Report> {
    let set = extract(cfg, jobs)?;
    run_experiment_on(cfg, &set, jobs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline_hash: String,
    pub candidate_hash: String,
    pub baseline_accuracy: Vec<f64>,
    pub candidate_accuracy: Vec<f64>,
    /// One-sided test that the candidate is more accurate than the baseline.
    pub wilcoxon: WilcoxonResult,
    pub p_value: f64,
}

/// Pairs the per-fold accuracies of two reports over the same fold plan.
pub fn compare_reports(baseline: &Report, candidate: &Report) -> Result<Comparison> {
    if baseline.fold_units != candidate.fold_units {
        return Err(Error::FoldMismatch);
    }
    let (a, b) = (baseline.fold_accuracies(), candidate.fold_accuracies());
    let w = wilcoxon_signed_rank(&b, &a)?;
    Ok(Comparison {
        baseline_hash: baseline.config_hash.clone(),
        candidate_hash: candidate.config_hash.clone(),
        baseline_accuracy: a,
        candidate_accuracy: b,
        p_value: w.p_value,
        wilcoxon: w,
    })
}

pub fn run_compare(baseline: &ExperimentConfig, candidate: &ExperimentConfig, jobs: usize) -> Result<Comparison> {
    let a = run_experiment(baseline, jobs)?;
    let b = run_experiment(candidate, jobs)?;
    compare_reports(&a, &b)
}

/// Writes every feature slice of one window's grid as PGM and CSV files.
pub fn run_interp_dump(
    cfg: &ExperimentConfig,
    subject: &str,
    window_index: usize,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let montage = montage_for(cfg)?;
    let recs = load_cohort(cfg, &montage)?;
    let rec = recs
        .iter()
        .find(|r| r.recording.subject_id == subject)
        .ok_or_else(|| Error::invalid(format!("no recording for subject {subject:?}")))?;
    let windows = prepare_windows(rec, cfg)?;
    let w = windows.get(window_index).ok_or(Error::IndexOutOfRange {
        index: window_index,
        limit: windows.len(),
    })?;
    let m = model1_matrix(w, &cfg.band_specs(), cfg.features == FeatureSet::EnergyEntropy, &make_db4())?;
    let proj = project_montage(&montage.subset(&rec.recording.channels)?, cfg.grid_size)?;
    let grid = model2_tensor(&m, &proj, &cfg.interp)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for (b, slot) in grid.layout.iter().enumerate() {
        let stem = format!("{}_{}_w{}_{}", subject, rec.recording.trial_id, window_index, slot.label());
        let slice = grid.slice(b);
        for ext in ["pgm", "csv"] {
            let path = out_dir.join(format!("{stem}.{ext}"));
            let mut buf = Vec::new();
            if ext == "pgm" {
                write_grid_pgm(&slice, &mut buf)
            } else {
                write_grid_csv(&slice, &mut buf)
            }
            .map_err(|e| Error::io(&path, e))?;
            fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}
