//! Stratified k-fold plans over subjects or (subject, trial) pairs.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Provenance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldMode {
    /// Whole subjects are held out.
    SubjectIndependent,
    /// Subjects are shared across folds but a (subject, trial) never is.
    SubjectDependent,
}

impl std::str::FromStr for FoldMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" | "subject_independent" => Ok(FoldMode::SubjectIndependent),
            "dependent" | "subject_dependent" => Ok(FoldMode::SubjectDependent),
            _ => Err(Error::invalid(format!("unknown fold mode {s:?}"))),
        }
    }
}

/// The thing that is never split across folds.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Unit {
    pub subject: String,
    pub trial: Option<String>,
}

impl Unit {
    pub fn of(p: &Provenance, mode: FoldMode) -> Self {
        Unit {
            subject: p.subject.clone(),
            trial: match mode {
                FoldMode::SubjectIndependent => None,
                FoldMode::SubjectDependent => Some(p.trial.clone()),
            },
        }
    }
}

impl std::fmt::Display for Unit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.trial {
            Some(t) => write!(f, "{}/{}", self.subject, t),
            None => f.write_str(&self.subject),
        }
    }
}

/// Distinct units of a sample list with their majority label (ties count as 1).
pub fn unit_labels<'a>(
    provenance: impl IntoIterator<Item = &'a Provenance>,
    mode: FoldMode,
) -> (Vec<Unit>, Vec<u8>) {
    let mut counts: BTreeMap<Unit, (usize, usize)> = BTreeMap::new();
    for p in provenance {
        let c = counts.entry(Unit::of(p, mode)).or_default();
        if p.label == 1 {
            c.1 += 1;
        } else {
            c.0 += 1;
        }
    }
    counts
        .into_iter()
        .map(|(u, (zeros, ones))| (u, u8::from(ones >= zeros)))
        .unzip()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub mode: FoldMode,
    pub seed: u64,
    pub assignment: BTreeMap<Unit, usize>,
}

/// One round of cross-validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub test_fold: usize,
    pub validation_fold: usize,
    pub train: BTreeSet<Unit>,
    pub validation: BTreeSet<Unit>,
    pub test: BTreeSet<Unit>,
}

/// Stratified assignment: each class is shuffled and dealt round-robin, the
/// dealer continuing where the previous class stopped so fold sizes differ by
/// at most one unit.
pub fn make_folds(
    units: &[Unit],
    labels: &[u8],
    k: usize,
    mode: FoldMode,
    seed: u64,
) -> Result<FoldPlan> {
    if units.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} units but {} labels",
            units.len(),
            labels.len()
        )));
    }
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    if k > units.len() {
        return Err(Error::invalid(format!(
            "{k} folds for only {} units",
            units.len()
        )));
    }
    let mut by_class: [Vec<&Unit>; 2] = [Vec::new(), Vec::new()];
    let mut seen = BTreeSet::new();
    for (u, &l) in units.iter().zip(labels) {
        if l > 1 {
            return Err(Error::invalid(format!("label {l} is not binary")));
        }
        if !seen.insert(u) {
            return Err(Error::Duplicate(u.to_string()));
        }
        if mode == FoldMode::SubjectDependent && u.trial.is_none() {
            return Err(Error::invalid("subject-dependent units need a trial"));
        }
        by_class[l as usize].push(u);
    }
    if by_class.iter().any(Vec::is_empty) {
        return Err(Error::invalid("both classes must be present"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    let mut next = 0;
    for class in &mut by_class {
        class.sort();
        class.shuffle(&mut rng);
        for u in class.iter() {
            assignment.insert((*u).clone(), next);
            next = (next + 1) % k;
        }
    }
    Ok(FoldPlan {
        k,
        mode,
        seed,
        assignment,
    })
}

impl FoldPlan {
    pub fn fold_of(&self, unit: &Unit) -> Option<usize> {
        self.assignment.get(unit).copied()
    }

    pub fn fold_of_sample(&self, p: &Provenance) -> Option<usize> {
        self.fold_of(&Unit::of(p, self.mode))
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// Test on `test_fold`, validate on the next fold, train on the rest.
    pub fn split(&self, test_fold: usize) -> Split {
        let validation_fold = (test_fold + 1) % self.k;
        let mut split = Split {
            test_fold,
            validation_fold,
            train: BTreeSet::new(),
            validation: BTreeSet::new(),
            test: BTreeSet::new(),
        };
        for (u, &f) in &self.assignment {
            let bucket = if f == test_fold {
                &mut split.test
            } else if f == validation_fold {
                &mut split.validation
            } else {
                &mut split.train
            };
            bucket.insert(u.clone());
        }
        split
    }

    pub fn splits(&self) -> impl Iterator<Item = Split> + '_ {
        (0..self.k).map(|f| self.split(f))
    }
}

impl Split {
    /// Errors if any unit lands in two of train/validation/test.
    pub fn check_disjoint(&self) -> Result<()> {
        let pairs = [
            ("train", &self.train, "validation", &self.validation),
            ("train", &self.train, "test", &self.test),
            ("validation", &self.validation, "test", &self.test),
        ];
        for (an, a, bn, b) in pairs {
            if let Some(u) = a.intersection(b).next() {
                return Err(Error::Leakage(format!(
                    "unit {u} is in both {an} and {bn} (test fold {})",
                    self.test_fold
                )));
            }
        }
        Ok(())
    }

    /// Sample indices of train, validation and test, checking that every
    /// sample belongs to exactly one of them and that unit sets are disjoint.
    pub fn partition(
        &self,
        provenance: &[&Provenance],
        mode: FoldMode,
    ) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
        self.check_disjoint()?;
        let mut parts = (Vec::new(), Vec::new(), Vec::new());
        for (i, p) in provenance.iter().enumerate() {
            let u = Unit::of(p, mode);
            if self.train.contains(&u) {
                parts.0.push(i);
            } else if self.validation.contains(&u) {
                parts.1.push(i);
            } else if self.test.contains(&u) {
                parts.2.push(i);
            } else {
                return Err(Error::Leakage(format!("sample unit {u} has no fold")));
            }
        }
        Ok(parts)
    }
}
