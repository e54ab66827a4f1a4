use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Mode, Network, Tensor};
use crate::error::{Error, Result};
use crate::sample::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            learning_rate: 1e-3,
            max_epochs: 100,
            patience: 10,
            optimizer: Optimizer::Adam,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::invalid("batch size must be at least 2"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.max_epochs == 0 || self.patience == 0 || self.patience >= self.max_epochs {
            return Err(Error::invalid(
                "need 0 < patience < max_epochs",
            ));
        }
        Ok(())
    }
}

/// Inputs stacked into one tensor with a label per item.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Tensor,
    pub y: Vec<u8>,
}

impl Dataset {
    pub fn new(x: Tensor, y: Vec<u8>) -> Result<Self> {
        if x.batch() != y.len() {
            return Err(Error::Shape(format!(
                "{} items but {} labels",
                x.batch(),
                y.len()
            )));
        }
        Ok(Dataset { x, y })
    }

    pub fn from_samples(samples: &[&Sample]) -> Result<Self> {
        let first = samples.first().ok_or_else(|| Error::invalid("no samples"))?;
        let (c, h, w) = first.shape;
        let mut data = Vec::with_capacity(samples.len() * c * h * w);
        for s in samples {
            if s.shape != first.shape {
                return Err(Error::Shape(format!(
                    "mixed sample shapes {:?} and {:?}",
                    first.shape, s.shape
                )));
            }
            data.extend_from_slice(&s.data);
        }
        Dataset::new(
            Tensor::from_vec([samples.len(), c, h, w], data)?,
            samples.iter().map(|s| s.label()).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let l = self.x.item_len();
        let mut data = Vec::with_capacity(idx.len() * l);
        for &i in idx {
            data.extend_from_slice(self.x.item(i));
        }
        let mut shape = self.x.shape;
        shape[0] = idx.len();
        Dataset {
            x: Tensor { shape, data },
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// 1-based epoch whose weights were returned.
    pub best_epoch: usize,
    pub epochs_run: usize,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn step(net: &mut Network, cfg: &TrainConfig, adam: &mut Option<Adam>) {
    let lr = cfg.learning_rate;
    let params = net.params_mut();
    match adam {
        None => {
            for (p, g) in params {
                for (pv, gv) in p.iter_mut().zip(g.iter()) {
                    *pv -= lr * gv;
                }
            }
        }
        Some(a) => {
            if a.m.is_empty() {
                a.m = params.iter().map(|(p, _)| vec![0.0; p.len()]).collect();
                a.v = a.m.clone();
            }
            a.t += 1;
            let c1 = 1.0 - BETA1.powi(a.t);
            let c2 = 1.0 - BETA2.powi(a.t);
            for ((p, g), (m, v)) in params.into_iter().zip(a.m.iter_mut().zip(a.v.iter_mut())) {
                for k in 0..p.len() {
                    m[k] = BETA1 * m[k] + (1.0 - BETA1) * g[k];
                    v[k] = BETA2 * v[k] + (1.0 - BETA2) * g[k] * g[k];
                    p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

/// Mean eval-mode cross-entropy over a dataset, in chunks.
pub fn evaluate_loss(net: &mut Network, data: &Dataset, chunk: usize) -> Result<f64> {
    let mut total = 0.0;
    let idx: Vec<usize> = (0..data.len()).collect();
    for part in idx.chunks(chunk.max(1)) {
        let batch = data.subset(part);
        let p = net.predict_proba(&batch.x)?;
        total += Network::loss(&p, &batch.y) * part.len() as f64;
    }
    Ok(total / data.len() as f64)
}

pub fn predict_dataset(net: &mut Network, x: &Tensor, chunk: usize) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(x.batch());
    let idx: Vec<usize> = (0..x.batch()).collect();
    for part in idx.chunks(chunk.max(1)) {
        let l = x.item_len();
        let mut data = Vec::with_capacity(part.len() * l);
        for &i in part {
            data.extend_from_slice(x.item(i));
        }
        let mut shape = x.shape;
        shape[0] = part.len();
        out.extend(net.predict(&Tensor { shape, data })?);
    }
    Ok(out)
}

/// Mini-batch training with early stopping on validation loss.
///
/// Training stops once the validation loss has not improved for `patience`
/// consecutive epochs; the network is left holding the weights of the best
/// epoch. A final batch of one item is folded into the batch before it.
pub fn train(net: &mut Network, train: &Dataset, valid: &Dataset, cfg: &TrainConfig) -> Result<History> {
    cfg.validate()?;
    if train.len() < 2 || valid.is_empty() {
        return Err(Error::invalid("training needs at least 2 training and 1 validation item"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = match cfg.optimizer {
        Optimizer::Sgd => None,
        Optimizer::Adam => Some(Adam {
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }),
    };
    let mut history = History {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        best_epoch: 0,
        epochs_run: 0,
    };
    let mut best: Option<(f64, Network)> = None;
    let mut stale = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut batches: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
        if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
            batches.pop();
            let n = batches.len();
            batches[n - 1] = &order[(n - 1) * cfg.batch_size..];
        }
        let mut epoch_loss = 0.0;
        for idx in batches {
            let batch = train.subset(idx);
            let p = net.forward(&batch.x, Mode::Train, &mut rng)?;
            epoch_loss += Network::loss(&p, &batch.y) * idx.len() as f64;
            net.backward(&batch.y)?;
            step(net, cfg, &mut adam);
        }
        history.train_loss.push(epoch_loss / train.len() as f64);
        let val = evaluate_loss(net, valid, cfg.batch_size)?;
        history.val_loss.push(val);
        history.epochs_run = epoch;
        if best.as_ref().is_none_or(|(b, _)| val < *b) {
            let mut snapshot = net.clone();
            snapshot.clear_cache();
            best = Some((val, snapshot));
            history.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    if let Some((_, snapshot)) = best {
        *net = snapshot;
    }
    Ok(history)
}
