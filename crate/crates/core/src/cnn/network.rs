use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Layer, LayerSpec, Padding};
use super::{Mode, Tensor};
use crate::error::{Error, Result};
use crate::io::{read_container, write_container, PayloadKind};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// `(channels, height, width)` of one input item.
    pub input: (usize, usize, usize),
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Input shape followed by the output shape of every layer.
    pub fn shape_trace(&self) -> Result<Vec<(usize, usize, usize)>> {
        let mut trace = vec![self.input];
        for l in &self.layers {
            trace.push(l.output_shape(*trace.last().expect("non-empty"))?);
        }
        Ok(trace)
    }

    pub fn validate(&self) -> Result<()> {
        let trace = self.shape_trace()?;
        if self.layers.last() != Some(&LayerSpec::Softmax) {
            return Err(Error::invalid("network must end in softmax"));
        }
        if trace.last() != Some(&(2, 1, 1)) {
            return Err(Error::invalid(format!(
                "network must output 2 classes, got {:?}",
                trace.last()
            )));
        }
        Ok(())
    }

    /// Spatial sizes after each convolution or pooling layer.
    pub fn spatial_trace(&self) -> Result<Vec<(usize, usize)>> {
        let trace = self.shape_trace()?;
        let mut out = vec![(trace[0].1, trace[0].2)];
        for (l, s) in self.layers.iter().zip(&trace[1..]) {
            if matches!(l, LayerSpec::Conv2d { .. } | LayerSpec::MaxPool { .. }) {
                out.push((s.1, s.2));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    SadNet,
    DeapNet,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sad_net" | "sad" => Ok(Preset::SadNet),
            "deap_net" | "deap" => Ok(Preset::DeapNet),
            _ => Err(Error::invalid(format!("unknown network preset {s:?}"))),
        }
    }
}

fn preset_layers(preset: Preset, padding: Padding) -> Vec<LayerSpec> {
    use LayerSpec::*;
    let conv = |f| [LayerSpec::conv3x3(f, padding), BatchNorm, Relu];
    let mut layers = vec![BatchNorm];
    match preset {
        Preset::SadNet => {
            layers.extend(conv(64));
            layers.extend(conv(64));
            layers.extend([MaxPool { size: 2 }, Dropout { rate: 0.25 }, Flatten]);
            layers.extend([Dense { units: 128 }, Relu, Dropout { rate: 0.2 }]);
        }
        Preset::DeapNet => {
            layers.extend(conv(32));
            layers.push(MaxPool { size: 2 });
            layers.extend(conv(64));
            layers.extend([MaxPool { size: 2 }, Dropout { rate: 0.45 }, Flatten]);
            layers.extend([Dense { units: 64 }, Relu, Dropout { rate: 0.25 }]);
        }
    }
    layers.extend([Dense { units: 2 }, Softmax]);
    layers
}

/// The preset for an input shape. Convolutions are unpadded unless that
/// empties a spatial axis (narrow model-1 inputs), in which case every
/// convolution pads to keep its input size.
pub fn build_preset(preset: Preset, input: (usize, usize, usize)) -> Result<NetworkSpec> {
    let valid = NetworkSpec {
        input,
        layers: preset_layers(preset, Padding::Valid),
    };
    if valid.validate().is_ok() {
        return Ok(valid);
    }
    let same = NetworkSpec {
        input,
        layers: preset_layers(preset, Padding::Same),
    };
    same.validate()?;
    Ok(same)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub layers: Vec<Layer>,
    probabilities: Option<Tensor>,
}

impl Network {
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let trace = spec.shape_trace()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec
            .layers
            .iter()
            .zip(&trace)
            .map(|(l, &s)| Layer::build(l, s, &mut rng))
            .collect::<Result<_>>()?;
        Ok(Network {
            spec,
            layers,
            probabilities: None,
        })
    }

    /// Class probabilities, one row of two per item.
    pub fn forward(&mut self, x: &Tensor, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        if x.item_shape() != self.spec.input {
            return Err(Error::Shape(format!(
                "network expects {:?}, got {:?}",
                self.spec.input,
                x.item_shape()
            )));
        }
        let mut h = x.clone();
        for l in &mut self.layers {
            h = l.forward(&h, mode, rng)?;
        }
        self.probabilities = Some(h.clone());
        Ok(h)
    }

    /// Eval-mode forward; dropout is off so no randomness is consumed.
    pub fn predict_proba(&mut self, x: &Tensor) -> Result<Tensor> {
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        self.forward(x, Mode::Eval, &mut unused)
    }

    pub fn predict(&mut self, x: &Tensor) -> Result<Vec<u8>> {
        let p = self.predict_proba(x)?;
        Ok(p.data.chunks(2).map(|r| u8::from(r[1] > r[0])).collect())
    }

    /// Mean cross-entropy of the cached probabilities.
    pub fn loss(probabilities: &Tensor, labels: &[u8]) -> f64 {
        let n = labels.len().max(1) as f64;
        probabilities
            .data
            .chunks(2)
            .zip(labels)
            .map(|(r, &l)| -r[l as usize].max(1e-300).ln())
            .sum::<f64>()
            / n
    }

    /// Gradients of the mean cross-entropy of the last forward pass.
    pub fn backward(&mut self, labels: &[u8]) -> Result<()> {
        let p = self.probabilities.take().ok_or(Error::NoForwardCache)?;
        if p.batch() != labels.len() {
            return Err(Error::Shape(format!(
                "{} outputs but {} labels",
                p.batch(),
                labels.len()
            )));
        }
        self.zero_grad();
        // softmax and cross-entropy combined: (p - onehot) / n
        let n = labels.len() as f64;
        let mut g = p;
        for (row, &l) in g.data.chunks_mut(2).zip(labels) {
            row[l as usize] -= 1.0;
            row.iter_mut().for_each(|v| *v /= n);
        }
        let last = self.layers.len() - 1;
        for l in self.layers[..last].iter_mut().rev() {
            g = l.backward(&g)?;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.layers.iter_mut().for_each(Layer::zero_grad);
    }

    pub fn clear_cache(&mut self) {
        self.layers.iter_mut().for_each(Layer::clear_cache);
        self.probabilities = None;
    }

    pub fn params_mut(&mut self) -> Vec<(&mut Vec<f64>, &mut Vec<f64>)> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.state())
            .map(Vec::len)
            .sum()
    }

    pub fn state(&self) -> Vec<&Vec<f64>> {
        self.layers.iter().flat_map(Layer::state).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    version: u32,
    spec: NetworkSpec,
    tensors: Vec<usize>,
}

/// Layer shapes plus every parameter and running statistic as `f32`.
pub fn save_checkpoint(net: &Network) -> Vec<u8> {
    let state = net.state();
    let meta = CheckpointMeta {
        version: CHECKPOINT_VERSION,
        spec: net.spec.clone(),
        tensors: state.iter().map(|t| t.len()).collect(),
    };
    let values: Vec<f32> = state.iter().flat_map(|t| t.iter().map(|&v| v as f32)).collect();
    write_container(PayloadKind::Checkpoint, &meta, &values)
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<Network> {
    let (meta, values): (CheckpointMeta, Vec<f32>) =
        read_container(bytes, PayloadKind::Checkpoint)?;
    if meta.version != CHECKPOINT_VERSION {
        return Err(Error::Container(format!(
            "checkpoint version {} is not supported",
            meta.version
        )));
    }
    let mut net = Network::new(meta.spec, 0)?;
    let mut state = net.layers.iter_mut().flat_map(Layer::state_mut).collect::<Vec<_>>();
    let lens: Vec<usize> = state.iter().map(|t| t.len()).collect();
    if lens != meta.tensors || values.len() != lens.iter().sum::<usize>() {
        return Err(Error::Container("checkpoint tensors do not match the network".into()));
    }
    let mut it = values.into_iter();
    for t in &mut state {
        for v in t.iter_mut() {
            *v = f64::from(it.next().expect("length checked"));
        }
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_input(shape: [usize; 4], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor {
            shape,
            data: (0..shape.iter().product::<usize>())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
        }
    }

    #[test]
    fn preset_shape_traces() {
        let sad = build_preset(Preset::SadNet, (10, 15, 15)).unwrap();
        assert_eq!(
            sad.spatial_trace().unwrap(),
            vec![(15, 15), (13, 13), (11, 11), (5, 5)]
        );
        let trace = sad.shape_trace().unwrap();
        assert!(trace.contains(&(1600, 1, 1)));
        assert!(trace.contains(&(128, 1, 1)));
        let deap = build_preset(Preset::DeapNet, (8, 15, 15)).unwrap();
        assert_eq!(
            deap.spatial_trace().unwrap(),
            vec![(15, 15), (13, 13), (6, 6), (4, 4), (2, 2)]
        );
        assert!(deap.shape_trace().unwrap().contains(&(256, 1, 1)));
        let rates = |s: &NetworkSpec| -> Vec<f64> {
            s.layers
                .iter()
                .filter_map(|l| match l {
                    LayerSpec::Dropout { rate } => Some(*rate),
                    _ => None,
                })
                .collect()
        };
        assert_eq!(rates(&sad), vec![0.25, 0.2]);
        assert_eq!(rates(&deap), vec![0.45, 0.25]);
    }

    #[test]
    fn narrow_inputs_fall_back_to_padding() {
        let m1 = build_preset(Preset::SadNet, (1, 34, 5)).unwrap();
        assert!(m1.layers.contains(&LayerSpec::conv3x3(64, Padding::Same)));
        assert_eq!(*m1.spatial_trace().unwrap().last().unwrap(), (17, 2));
        let d1 = build_preset(Preset::DeapNet, (1, 32, 8)).unwrap();
        assert_eq!(*d1.spatial_trace().unwrap().last().unwrap(), (8, 2));
        assert!(build_preset(Preset::DeapNet, (1, 2, 2)).is_err());
    }

    #[test]
    fn probabilities_are_normalized_and_eval_is_deterministic() {
        let mut net = Network::new(build_preset(Preset::DeapNet, (3, 12, 12)).unwrap(), 1).unwrap();
        let x = random_input([4, 3, 12, 12], 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = net.forward(&x, Mode::Train, &mut rng).unwrap();
        for row in p.data.chunks(2) {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-9);
        }
        let a = net.predict_proba(&x).unwrap();
        let b = net.predict_proba(&x).unwrap();
        assert_eq!(a, b);
        assert!(net.forward(&random_input([2, 3, 11, 12], 0), Mode::Eval, &mut rng).is_err());
    }

    #[test]
    fn zero_weights_give_uniform_output() {
        let mut net = Network::new(build_preset(Preset::SadNet, (2, 9, 9)).unwrap(), 3).unwrap();
        for (p, _) in net.params_mut() {
            p.iter_mut().for_each(|v| *v = 0.0);
        }
        let p = net.predict_proba(&random_input([3, 2, 9, 9], 4)).unwrap();
        assert!(p.data.iter().all(|v| (*v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn backward_needs_forward() {
        let mut net = Network::new(build_preset(Preset::SadNet, (2, 9, 9)).unwrap(), 3).unwrap();
        assert!(matches!(net.backward(&[0]), Err(Error::NoForwardCache)));
    }

    #[test]
    fn duplicated_batch_gives_identical_gradients() {
        let spec = NetworkSpec {
            input: (1, 4, 4),
            layers: vec![
                LayerSpec::conv3x3(2, Padding::Valid),
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 2 },
                LayerSpec::Softmax,
            ],
        };
        let mut net = Network::new(spec, 5).unwrap();
        let x = random_input([3, 1, 4, 4], 6);
        let labels = [0, 1, 1];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        net.forward(&x, Mode::Train, &mut rng).unwrap();
        net.backward(&labels).unwrap();
        let g1: Vec<Vec<f64>> = net.params_mut().into_iter().map(|(_, g)| g.clone()).collect();
        let mut x2 = x.clone();
        x2.shape[0] = 6;
        x2.data.extend_from_slice(&x.data);
        net.forward(&x2, Mode::Train, &mut rng).unwrap();
        net.backward(&[0, 1, 1, 0, 1, 1]).unwrap();
        let g2: Vec<Vec<f64>> = net.params_mut().into_iter().map(|(_, g)| g.clone()).collect();
        for (a, b) in g1.iter().flatten().zip(g2.iter().flatten()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn saturated_correct_prediction_has_no_gradient() {
        let spec = NetworkSpec {
            input: (3, 1, 1),
            layers: vec![LayerSpec::Dense { units: 2 }, LayerSpec::Softmax],
        };
        let mut net = Network::new(spec, 0).unwrap();
        if let Layer::Dense(d) = &mut net.layers[0] {
            d.weight = vec![0.0; 6];
            d.bias = vec![-40.0, 40.0];
        }
        let x = random_input([2, 3, 1, 1], 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        net.forward(&x, Mode::Train, &mut rng).unwrap();
        net.backward(&[1, 1]).unwrap();
        let norm: f64 = net
            .params_mut()
            .into_iter()
            .flat_map(|(_, g)| g.clone())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        assert!(norm < 1e-6);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut net = Network::new(build_preset(Preset::DeapNet, (2, 10, 10)).unwrap(), 8).unwrap();
        let x = random_input([4, 2, 10, 10], 9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        net.forward(&x, Mode::Train, &mut rng).unwrap();
        let bytes = save_checkpoint(&net);
        let mut loaded = load_checkpoint(&bytes).unwrap();
        assert_eq!(loaded.spec, net.spec);
        let (a, b) = (net.predict_proba(&x).unwrap(), loaded.predict_proba(&x).unwrap());
        for (u, v) in a.data.iter().zip(&b.data) {
            assert!((u - v).abs() < 1e-4);
        }
        assert_eq!(save_checkpoint(&loaded), bytes);
        let mut bad = bytes.clone();
        bad.truncate(bytes.len() - 4);
        assert!(load_checkpoint(&bad).is_err());
    }
}
