//! Quick runtime checks of the numerical core against brute-force oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cnn::{LayerSpec, Mode, Network, NetworkSpec, Padding, Tensor};
use crate::error::Result;
use crate::features::BandFeatures;
use crate::io::Montage;
use crate::mlcore::{
    knn_classify, make_folds, svm_predict, svm_train, wilcoxon_signed_rank, ConfusionMatrix,
    FoldMode, SvmParams, Unit,
};
use crate::topomap::{idw_interpolate, project_montage, InterpConfig};
use crate::wavelet::{make_db4, natural_index, wpd_decompose};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type CheckFn = fn(&mut ChaCha8Rng) -> Result<(bool, String)>;

const CHECKS: [(&str, CheckFn); 10] = [
    ("wpd_energy", wpd_energy),
    ("wpd_frequency_order", wpd_frequency_order),
    ("feature_identities", feature_identities),
    ("interpolation", interpolation),
    ("metric_arithmetic", metric_arithmetic),
    ("knn_oracle", knn_oracle),
    ("svm_separable", svm_separable),
    ("wilcoxon_enumeration", wilcoxon_enumeration),
    ("cnn_gradient", cnn_gradient),
    ("fold_leakage", fold_leakage),
];

/// Runs every check; an error inside a check counts as a failure.
pub fn run_selftest(seed: u64) -> Vec<Check> {
    CHECKS
        .iter()
        .enumerate()
        .map(|(i, &(name, f))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            match f(&mut rng) {
                Ok((passed, detail)) => Check { name, passed, detail },
                Err(e) => Check {
                    name,
                    passed: false,
                    detail: format!("error: {e}"),
                },
            }
        })
        .collect()
}

fn wpd_energy(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let qmf = make_db4();
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = 16 * rng.gen_range(4..=64);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let e: f64 = x.iter().map(|v| v * v).sum();
        let leaves = wpd_decompose(&x, 4, &qmf)?;
        worst = worst.max((leaves.energy() - e).abs() / e);
    }
    Ok((worst < 1e-9, format!("max relative error {worst:.2e}")))
}

fn wpd_frequency_order(_: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let qmf = make_db4();
    let (n, rate) = (1024, 128.0);
    let mut misses = 0;
    let mut least: f64 = 1.0;
    for bin in 0..16 {
        let f = (bin as f64 + 0.5) * 4.0;
        let x: Vec<f64> = (0..n)
            .map(|k| (std::f64::consts::TAU * f * k as f64 / rate).sin())
            .collect();
        let leaves = wpd_decompose(&x, 4, &qmf)?;
        let energy: Vec<f64> = leaves.leaves.iter().map(|l| l.iter().map(|c| c * c).sum()).collect();
        let best = (0..16).max_by(|&a, &b| energy[a].total_cmp(&energy[b])).unwrap_or(0);
        if best != natural_index(bin) {
            misses += 1;
        }
        least = least.min(energy[natural_index(bin)] / leaves.energy());
    }
    Ok((misses == 0, format!("{misses} misplaced tones, smallest in-leaf share {least:.3}")))
}

fn feature_identities(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let b = rng.gen_range(2..8);
        let e: Vec<f64> = (0..b)
            .map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..10.0) })
            .collect();
        if e.iter().all(|&v| v == 0.0) {
            continue;
        }
        let f = BandFeatures::from_energies(e)?;
        worst = worst.max((f.relative_energy.iter().sum::<f64>() - 1.0).abs());
        for (q, w) in f.relative_energy.iter().zip(&f.entropy) {
            if (*q == 0.0 || *q == 1.0) && *w != 0.0 {
                return Ok((false, format!("entropy {w} at q = {q}")));
            }
        }
    }
    Ok((worst <= 1e-12, format!("max |sum q - 1| {worst:.2e}")))
}

fn interpolation(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let proj = project_montage(&Montage::standard_34(), 15)?;
    let cfg = InterpConfig::default();
    for _ in 0..100 {
        let v: Vec<f64> = (0..proj.len()).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let g = idw_interpolate(&v, &proj, &cfg)?;
        for (i, &(r, c)) in proj.pixels.iter().enumerate() {
            if g.get(r, c) != v[i] {
                return Ok((false, format!("sensor {} not reproduced", proj.channels[i])));
            }
        }
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if g.data.iter().any(|&p| p < lo || p > hi) {
            return Ok((false, "pixel outside sensor range".into()));
        }
    }
    Ok((true, "100 random assignments".into()))
}

fn metric_arithmetic(_: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let round2 = |v: f64| (v * 10000.0).round() / 100.0;
    let mut out = Vec::new();
    for (tp, fn_, fp, tn) in [(26, 6, 6, 26), (29, 3, 4, 28)] {
        let m = ConfusionMatrix { tp, fn_, fp, tn }.metrics()?;
        out.push((round2(m.accuracy), m.f1.map(round2)));
    }
    let expected = [(81.25, Some(81.25)), (89.06, Some(89.23))];
    Ok((out == expected, format!("{out:?}")))
}

fn knn_oracle(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    for _ in 0..50 {
        let (n, d, k) = (rng.gen_range(5..40), rng.gen_range(1..6), [1, 3, 5][rng.gen_range(0..3)]);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let y: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let q: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut order: Vec<(f64, usize)> = x
            .iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum(), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let ones = order[..k].iter().filter(|&&(_, i)| y[i] == 1).count();
        let rows: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
        if knn_classify(&rows, &y, &q, k)? != u8::from(2 * ones > k) {
            return Ok((false, "label differs from exhaustive scan".into()));
        }
    }
    Ok((true, "50 random instances".into()))
}

fn svm_separable(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..40 {
        let c = if i % 2 == 0 { -1.0 } else { 1.0 };
        x.push(vec![c + rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4)]);
        y.push(u8::from(i % 2 == 1));
    }
    let rows: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
    let model = svm_train(&rows, &y, &SvmParams::new(10.0, 1.0))?;
    let correct = rows.iter().zip(&y).filter(|(r, &l)| svm_predict(&model, r) == l).count();
    Ok((correct == 40, format!("{correct}/40 training points")))
}

/// Upper tail of the signed-rank statistic over all sign assignments.
fn enumerate_p(d: &[f64]) -> f64 {
    let nz: Vec<f64> = d.iter().copied().filter(|v| *v != 0.0).collect();
    let n = nz.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| nz[a].abs().total_cmp(&nz[b].abs()));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && nz[idx[j + 1]].abs() == nz[idx[i]].abs() {
            j += 1;
        }
        for &t in &idx[i..=j] {
            ranks[t] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    let observed: f64 = (0..n).filter(|&t| nz[t] > 0.0).map(|t| ranks[t]).sum();
    let hits = (0..1u32 << n)
        .filter(|mask| {
            let w: f64 = (0..n).filter(|t| mask & (1 << t) != 0).map(|t| ranks[t]).sum();
            w >= observed - 1e-9
        })
        .count();
    hits as f64 / (1u64 << n) as f64
}

fn wilcoxon_enumeration(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for n in 1..=10 {
        for _ in 0..5 {
            let a: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..8)) / 8.0).collect();
            let b: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..8)) / 8.0).collect();
            let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            if d.iter().all(|v| *v == 0.0) {
                continue;
            }
            let got = wilcoxon_signed_rank(&a, &b)?.p_value;
            worst = worst.max((got - enumerate_p(&d)).abs());
        }
    }
    Ok((worst < 1e-12, format!("max p-value difference {worst:.2e}")))
}

fn cnn_gradient(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let spec = NetworkSpec {
        input: (2, 6, 6),
        layers: vec![
            LayerSpec::BatchNorm,
            LayerSpec::conv3x3(3, Padding::Valid),
            LayerSpec::BatchNorm,
            LayerSpec::Relu,
            LayerSpec::MaxPool { size: 2 },
            LayerSpec::Dropout { rate: 0.3 },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 2 },
            LayerSpec::Softmax,
        ],
    };
    let net = Network::new(spec, rng.gen())?;
    let x = Tensor::from_vec([4, 2, 6, 6], (0..288).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let labels = [0, 1, 1, 0];
    let loss = |net: &mut Network| -> Result<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let p = net.forward(&x, Mode::Train, &mut r)?;
        Ok(Network::loss(&p, &labels))
    };
    let mut work = net.clone();
    loss(&mut work)?;
    work.backward(&labels)?;
    let grads: Vec<Vec<f64>> = work.params_mut().into_iter().map(|(_, g)| g.clone()).collect();
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for (p, g) in grads.iter().enumerate() {
        for (k, &analytic) in g.iter().enumerate() {
            let mut plus = net.clone();
            plus.params_mut()[p].0[k] += eps;
            let mut minus = net.clone();
            minus.params_mut()[p].0[k] -= eps;
            let num = (loss(&mut plus)? - loss(&mut minus)?) / (2.0 * eps);
            // parameters cancelled by a following batch norm have zero gradient
            worst = worst.max((analytic - num).abs() / (analytic.abs() + num.abs()).max(1e-6));
        }
    }
    Ok((worst < 1e-4, format!("max relative error {worst:.2e}")))
}

fn fold_leakage(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    for round in 0..20 {
        let mode = if round % 2 == 0 { FoldMode::SubjectIndependent } else { FoldMode::SubjectDependent };
        let subjects = rng.gen_range(8..20);
        let trials = if mode == FoldMode::SubjectDependent { 3 } else { 1 };
        let mut units = Vec::new();
        let mut labels = Vec::new();
        for s in 0..subjects {
            for t in 0..trials {
                units.push(Unit {
                    subject: format!("S{s:02}"),
                    trial: (mode == FoldMode::SubjectDependent).then(|| format!("T{t}")),
                });
                labels.push(rng.gen_range(0..2));
            }
        }
        labels[0] = 0;
        labels[1] = 1;
        let plan = make_folds(&units, &labels, rng.gen_range(2..5), mode, rng.gen())?;
        for split in plan.splits() {
            split.check_disjoint()?;
        }
    }
    Ok((true, "20 random plans".into()))
}
