//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use eegrid::cnn::{Layer, LayerSpec, Mode, Network, NetworkSpec, Padding, Preset, Tensor};
use eegrid::mlcore::SvmModel;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;

/// Daubechies lowpass filter with `p` vanishing moments, by spectral
/// factorization of the half-band polynomial, keeping the roots inside the
/// unit circle (minimum phase). Normalized to sum to sqrt(2).
pub fn daubechies_by_factorization(p: usize) -> Vec<f64> {
    // P(y) = sum_k C(p-1+k, k) y^k
    let coeffs: Vec<f64> = (0..p).map(|k| binomial(p - 1 + k, k)).collect();
    let y_roots = polynomial_roots(&coeffs);
    // each y root gives z + 1/z = 2 - 4y; keep |z| < 1
    let mut poly = vec![Complex64::new(1.0, 0.0)];
    for y in y_roots {
        let b = Complex64::new(2.0, 0.0) - 4.0 * y;
        let disc = (b * b - 4.0).sqrt();
        let (z1, z2) = ((b + disc) / 2.0, (b - disc) / 2.0);
        let z = if z1.norm() < 1.0 { z1 } else { z2 };
        poly = convolve_c(&poly, &[Complex64::new(1.0, 0.0), -z]);
    }
    for _ in 0..p {
        poly = convolve_c(&poly, &[Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)]);
    }
    let h: Vec<f64> = poly.iter().map(|c| c.re).collect();
    let s: f64 = h.iter().sum();
    h.iter().map(|v| v * std::f64::consts::SQRT_2 / s).collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn convolve_c(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Roots of `sum c_k y^k` by Durand-Kerner iteration.
fn polynomial_roots(c: &[f64]) -> Vec<Complex64> {
    let n = c.len() - 1;
    let lead = c[n];
    let eval = |y: Complex64| c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &v| acc * y + v) / lead;
    let mut roots: Vec<Complex64> = (0..n).map(|i| Complex64::new(0.4, 0.9).powu(i as u32)).collect();
    for _ in 0..500 {
        for i in 0..n {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
        }
    }
    roots
}

/// |H(e^{i w})|^2 of a filter on an `n`-point frequency grid, by FFT.
pub fn power_response(taps: &[f64], n: usize) -> Vec<f64> {
    let mut buf: Vec<Complex64> = (0..n)
        .map(|k| Complex64::new(taps.get(k).copied().unwrap_or(0.0), 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf.iter().map(|c| c.norm_sqr()).collect()
}

/// Frequency responses of a two-channel filter bank, for predicting how a
/// packet tree splits the energy of a pure tone.
pub struct PacketResponse {
    responses: [Vec<f64>; 2],
}

impl PacketResponse {
    const GRID: usize = 1 << 14;

    pub fn new(lowpass: &[f64], highpass: &[f64]) -> Self {
        PacketResponse {
            responses: [power_response(lowpass, Self::GRID), power_response(highpass, Self::GRID)],
        }
    }

    /// Predicted share of a periodic tone's energy in each natural-order node
    /// at depth `level`.
    ///
    /// Each split keeps `|H_b|^2 / 2` of the energy on branch `b`, and halving
    /// the rate folds frequencies above the new Nyquist back down. Invalid
    /// when the tone lands exactly on DC or Nyquist of an intermediate rate,
    /// where the decimated energy depends on phase.
    pub fn tone_shares(&self, level: usize, tone_hz: f64, rate_hz: f64) -> Vec<f64> {
        (0..1usize << level)
            .map(|node| {
                let (mut f, mut r, mut share) = (tone_hz, rate_hz, 1.0);
                for depth in 0..level {
                    let branch = (node >> (level - 1 - depth)) & 1;
                    let bin = (f / r * Self::GRID as f64).round() as usize % Self::GRID;
                    share *= self.responses[branch][bin] / 2.0;
                    r /= 2.0;
                    f %= r;
                    if f > r / 2.0 {
                        f = r - f;
                    }
                }
                share
            })
            .collect()
    }

    /// Frequency-ordered position of a natural-order leaf, from the peak of
    /// its cascaded response.
    pub fn leaf_position(&self, level: usize, leaf: usize) -> usize {
        let bins = 1usize << level;
        let probes = 64;
        let rate = 2.0 * bins as f64;
        let mut best = (f64::NEG_INFINITY, 0);
        for p in 0..bins * probes {
            let f = (p as f64 + 0.5) / probes as f64;
            let s = self.tone_shares(level, f, rate)[leaf];
            if s > best.0 {
                best = (s, p / probes);
            }
        }
        best.1
    }
}

/// Exact upper-tail p-value of the signed-rank statistic by enumerating all
/// 2^n sign assignments of the nonzero differences.
pub fn signed_rank_enumeration(d: &[f64]) -> f64 {
    let nz: Vec<f64> = d.iter().copied().filter(|v| *v != 0.0).collect();
    let n = nz.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| nz[a].abs().total_cmp(&nz[b].abs()));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && nz[order[j + 1]].abs() == nz[order[i]].abs() {
            j += 1;
        }
        for &t in &order[i..=j] {
            ranks[t] = (i + j + 2) as f64 / 2.0;
        }
        i = j + 1;
    }
    let observed: f64 = (0..n).filter(|&t| nz[t] > 0.0).map(|t| ranks[t]).sum();
    let hits = (0u32..1 << n)
        .filter(|mask| (0..n).filter(|t| mask >> t & 1 == 1).map(|t| ranks[t]).sum::<f64>() >= observed - 1e-9)
        .count();
    hits as f64 / f64::from(1u32 << n)
}

/// Majority label of the k nearest rows by exhaustive scan, distance ties
/// going to the lower index.
pub fn knn_exhaustive(x: &[Vec<f64>], y: &[u8], q: &[f64], k: usize) -> u8 {
    let mut d: Vec<(f64, usize)> = x
        .iter()
        .enumerate()
        .map(|(i, r)| (r.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum(), i))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let ones = d[..k].iter().filter(|(_, i)| y[*i] == 1).count();
    u8::from(2 * ones > k)
}

/// Two classes in the plane split by an empty strip of width one around
/// `x = 0`.
pub fn margin_blobs(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = (i % 2) as u8;
            let side = if label == 1 { 1.0 } else { -1.0 };
            (vec![side * rng.gen_range(0.5..2.0), rng.gen_range(-1.5..1.5)], label)
        })
        .unzip()
}

/// Violation of the dual optimality conditions of a trained SVM:
/// `max_{I_up} (y_i - g_i) - min_{I_low} (y_i - g_i)`, with `g_i` the
/// decision value without bias. SMO stops once this is at most `tol`.
pub fn dual_kkt_gap(m: &SvmModel, x: &[Vec<f64>], y: &[u8]) -> f64 {
    let mut up = f64::NEG_INFINITY;
    let mut low = f64::INFINITY;
    for (xi, &l) in x.iter().zip(y) {
        let s = if l == 1 { 1.0 } else { -1.0 };
        let alpha: f64 = m
            .support_vectors
            .iter()
            .zip(&m.alphas)
            .filter(|(sv, _)| *sv == xi)
            .map(|(_, a)| *a)
            .sum();
        let v = s - (m.decision(xi) - m.bias);
        let below_c = alpha < m.c;
        let above_zero = alpha > 0.0;
        if (s > 0.0 && below_c) || (s < 0.0 && above_zero) {
            up = up.max(v);
        }
        if (s < 0.0 && below_c) || (s > 0.0 && above_zero) {
            low = low.min(v);
        }
    }
    up - low
}

fn relative(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(floor)
}

/// Worst relative error between backpropagated and central-difference
/// gradients (inputs and parameters) of `sum(r * layer(x))`.
pub fn layer_gradcheck(spec: &LayerSpec, shape: [usize; 4], mode: Mode, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layer = Layer::build(spec, (shape[1], shape[2], shape[3]), &mut rng).unwrap();
    if let Layer::BatchNorm(bn) = &mut layer {
        for v in bn.gamma.iter_mut().chain(bn.running_var.iter_mut()) {
            *v = rng.gen_range(0.5..1.5);
        }
        for v in bn.beta.iter_mut().chain(bn.running_mean.iter_mut()) {
            *v = rng.gen_range(-0.5..0.5);
        }
    }
    let x = Tensor::from_vec(shape, (0..shape.iter().product()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let mask_seed: u64 = rng.gen();
    let run = |l: &mut Layer, x: &Tensor| {
        let mut m = ChaCha8Rng::seed_from_u64(mask_seed);
        l.forward(x, mode, &mut m).unwrap()
    };
    let mut work = layer.clone();
    let out = run(&mut work, &x);
    let r: Vec<f64> = (0..out.data.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let objective = |l: &Layer, x: &Tensor| -> f64 {
        let mut l = l.clone();
        run(&mut l, x).data.iter().zip(&r).map(|(a, b)| a * b).sum()
    };
    let gx = work.backward(&Tensor::from_vec(out.shape, r.clone()).unwrap()).unwrap();
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..x.data.len() {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp.data[k] += eps;
        xm.data[k] -= eps;
        let num = (objective(&layer, &xp) - objective(&layer, &xm)) / (2.0 * eps);
        worst = worst.max(relative(gx.data[k], num, 1e-7));
    }
    let grads: Vec<Vec<f64>> = work.params_mut().into_iter().map(|(_, g)| g.clone()).collect();
    for (p, g) in grads.iter().enumerate() {
        for (k, &analytic) in g.iter().enumerate() {
            let (mut lp, mut lm) = (layer.clone(), layer.clone());
            lp.params_mut()[p].0[k] += eps;
            lm.params_mut()[p].0[k] -= eps;
            let num = (objective(&lp, &x) - objective(&lm, &x)) / (2.0 * eps);
            worst = worst.max(relative(analytic, num, 1e-7));
        }
    }
    worst
}

/// Worst relative error of the network's cross-entropy parameter gradients
/// in train mode, checking at most `per_tensor` random entries of each tensor.
pub fn network_gradcheck(spec: NetworkSpec, batch: usize, per_tensor: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Network::new(spec.clone(), rng.gen()).unwrap();
    let (c, h, w) = spec.input;
    let x = Tensor::from_vec([batch, c, h, w], (0..batch * c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let labels: Vec<u8> = (0..batch).map(|i| (i % 2) as u8).collect();
    let mask_seed: u64 = rng.gen();
    let loss = |n: &mut Network| {
        let mut m = ChaCha8Rng::seed_from_u64(mask_seed);
        let p = n.forward(&x, Mode::Train, &mut m).unwrap();
        Network::loss(&p, &labels)
    };
    let mut work = net.clone();
    loss(&mut work);
    work.backward(&labels).unwrap();
    let grads: Vec<Vec<f64>> = work.params_mut().into_iter().map(|(_, g)| g.clone()).collect();
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for (p, g) in grads.iter().enumerate() {
        let picks: Vec<usize> = if g.len() <= per_tensor {
            (0..g.len()).collect()
        } else {
            (0..per_tensor).map(|_| rng.gen_range(0..g.len())).collect()
        };
        for k in picks {
            let (mut np, mut nm) = (net.clone(), net.clone());
            np.params_mut()[p].0[k] += eps;
            nm.params_mut()[p].0[k] -= eps;
            let num = (loss(&mut np) - loss(&mut nm)) / (2.0 * eps);
            // a loss of order one leaves central differences ~1e-11 of roundoff
            worst = worst.max(relative(g[k], num, 1e-6));
        }
    }
    worst
}

pub const GRADIENT_TOL: f64 = 1e-4;

/// One or more configurations of every layer kind, in both modes where the
/// mode matters.
pub fn layer_cases() -> Vec<(LayerSpec, [usize; 4], Mode)> {
    vec![
        (LayerSpec::conv3x3(3, Padding::Valid), [2, 2, 5, 4], Mode::Train),
        (LayerSpec::conv3x3(2, Padding::Same), [2, 3, 4, 3], Mode::Train),
        (
            LayerSpec::Conv2d {
                filters: 2,
                kernel_h: 3,
                kernel_w: 1,
                padding: Padding::Same,
            },
            [2, 2, 4, 2],
            Mode::Eval,
        ),
        (LayerSpec::MaxPool { size: 2 }, [2, 2, 5, 5], Mode::Train),
        (LayerSpec::Relu, [2, 2, 3, 3], Mode::Train),
        (LayerSpec::BatchNorm, [4, 3, 2, 2], Mode::Train),
        (LayerSpec::BatchNorm, [4, 3, 2, 2], Mode::Eval),
        (LayerSpec::Dropout { rate: 0.3 }, [3, 2, 3, 3], Mode::Train),
        (LayerSpec::Dropout { rate: 0.3 }, [3, 2, 3, 3], Mode::Eval),
        (LayerSpec::Flatten, [2, 3, 2, 2], Mode::Train),
        (LayerSpec::Dense { units: 5 }, [3, 7, 1, 1], Mode::Train),
        (LayerSpec::Softmax, [4, 2, 1, 1], Mode::Train),
    ]
}

/// Both presets at reduced input sizes, including a narrow input that forces
/// the padded variant.
pub fn shrunken_presets() -> Vec<(Preset, (usize, usize, usize))> {
    vec![
        (Preset::SadNet, (2, 7, 7)),
        (Preset::SadNet, (1, 8, 3)),
        (Preset::DeapNet, (3, 8, 8)),
        (Preset::DeapNet, (2, 10, 10)),
    ]
}
