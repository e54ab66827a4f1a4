//! Acceptance criteria A1-A10. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use common::*;
use eegrid::cnn::build_preset;
use eegrid::experiment::{extract, fold_data, fold_plan, run_experiment, ExperimentConfig};
use eegrid::features::BandFeatures;
use eegrid::io::Montage;
use eegrid::mlcore::{
    knn_classify, make_folds, svm_predict, svm_train, wilcoxon_signed_rank, ConfusionMatrix, FoldMode,
    SvmParams, Unit,
};
use eegrid::topomap::{idw_interpolate, project_montage, InterpConfig, InterpMethod};
use eegrid::wavelet::{make_db4, natural_index, wpd_decompose};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn a1_energy_conservation() -> Outcome {
    let qmf = make_db4();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = 16 * rng.gen_range(4..=64);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let e: f64 = x.iter().map(|v| v * v).sum();
        let leaves = wpd_decompose(&x, 4, &qmf).unwrap();
        worst = worst.max((leaves.energy() - e).abs() / e);
    }
    outcome(worst <= 1e-9, format!("1000 windows, max relative error {worst:.1e}"))
}

fn a2_frequency_ordering() -> Outcome {
    let qmf = make_db4();
    let oracle = PacketResponse::new(&qmf.lowpass, &qmf.highpass);
    let (n, rate) = (1024, 128.0);
    let mut shares = Vec::new();
    let mut oracle_gap: f64 = 0.0;
    let mut argmax_ok = true;
    for bin in 0..16 {
        let f = (bin as f64 + 0.5) * 4.0;
        let x: Vec<f64> = (0..n)
            .map(|k| (std::f64::consts::TAU * f * k as f64 / rate).sin())
            .collect();
        let leaves = wpd_decompose(&x, 4, &qmf).unwrap();
        let energy: Vec<f64> = leaves.leaves.iter().map(|l| l.iter().map(|c| c * c).sum::<f64>() / leaves.energy()).collect();
        let predicted = oracle.tone_shares(4, f, rate);
        for (a, b) in energy.iter().zip(&predicted) {
            oracle_gap = oracle_gap.max((a - b).abs());
        }
        let best = (0..16).max_by(|&a, &b| energy[a].total_cmp(&energy[b])).unwrap();
        argmax_ok &= best == natural_index(bin);
        shares.push(energy[natural_index(bin)]);
    }
    let least = shares.iter().copied().fold(1.0, f64::min);
    let below = shares.iter().filter(|&&s| s < 0.95).count();
    let listed: Vec<String> = shares.iter().map(|s| format!("{s:.3}")).collect();
    outcome(
        below == 0 && oracle_gap < 1e-6,
        format!(
            "in-leaf shares [{}], {below}/16 below 0.95 (min {least:.3}); FFT oracle agrees to {oracle_gap:.1e}; predicted leaf is the argmax for every tone: {argmax_ok}",
            listed.join(", ")
        ),
    )
}

fn a3_feature_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut endpoints = 0;
    for i in 0..10_000 {
        let b = rng.gen_range(1..9);
        let mut e: Vec<f64> = (0..b)
            .map(|_| match rng.gen_range(0..4) {
                0 => 0.0,
                1 => rng.gen_range(0.0..1e-6),
                _ => rng.gen_range(0.0..1e3),
            })
            .collect();
        if i % 10 == 0 {
            // a single non-zero band gives q = 1 there and 0 elsewhere
            e.iter_mut().for_each(|v| *v = 0.0);
            e[rng.gen_range(0..b)] = rng.gen_range(0.1..10.0);
        }
        if e.iter().all(|&v| v == 0.0) {
            e[0] = 1.0;
        }
        let f = BandFeatures::from_energies(e).unwrap();
        worst = worst.max((f.relative_energy.iter().sum::<f64>() - 1.0).abs());
        for (q, w) in f.relative_energy.iter().zip(&f.entropy) {
            if *q == 0.0 || *q == 1.0 {
                endpoints += 1;
                if *w != 0.0 {
                    return outcome(false, format!("entropy {w} at q = {q}"));
                }
            }
        }
    }
    outcome(
        worst <= 1e-12,
        format!("10000 vectors, max |sum q - 1| {worst:.1e}, {endpoints} endpoint entropies all zero"),
    )
}

fn a4_interpolation() -> Outcome {
    let proj = project_montage(&Montage::standard_34(), 15).unwrap();
    let cfg = InterpConfig::with_method(InterpMethod::IdwNearestBorder);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut misses, mut escapes) = (0, 0);
    for _ in 0..1000 {
        let v: Vec<f64> = (0..proj.len()).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let g = idw_interpolate(&v, &proj, &cfg).unwrap();
        misses += proj.pixels.iter().zip(&v).filter(|(&(r, c), &x)| g.get(r, c) != x).count();
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        escapes += g.data.iter().filter(|&&p| p < lo || p > hi).count();
    }
    outcome(
        misses == 0 && escapes == 0,
        format!("1000 assignments, {misses} sensor mismatches, {escapes} pixels outside [min, max]"),
    )
}

fn synthetic_arm(model: u8) -> ExperimentConfig {
    ExperimentConfig::from_toml(&format!(
        "task = \"sad\"\nmodel = {model}\nwindow_seconds = 5.0\nclassifier = \"knn3\"\nfolds = 8\n\
         mode = \"subject_independent\"\nseed = 11\n[data]\nsource = \"synthetic\"\nsubjects = 64\n"
    ))
    .unwrap()
}

fn a5_model2_advantage() -> Outcome {
    let m1 = run_experiment(&synthetic_arm(1), 1).unwrap().aggregate.accuracy;
    let m2 = run_experiment(&synthetic_arm(2), 1).unwrap().aggregate.accuracy;
    outcome(
        m2 >= 0.90 && m2 - m1 >= 0.05,
        format!("64 subjects, 8 folds, 3-NN subject accuracy: model 1 {:.2}%, model 2 {:.2}%", m1 * 100.0, m2 * 100.0),
    )
}

fn a6_metric_arithmetic() -> Outcome {
    let pct = |v: f64| format!("{:.2}", v * 100.0);
    let cases = [((26, 6, 6, 26), ("81.25", "81.25")), ((29, 3, 4, 28), ("89.06", "89.23"))];
    let mut ok = true;
    let mut got = Vec::new();
    for ((tp, fn_, fp, tn), (acc, f1)) in cases {
        let m = ConfusionMatrix { tp, fn_, fp, tn }.metrics().unwrap();
        let (a, f) = (pct(m.accuracy), pct(m.f1.unwrap()));
        ok &= a == acc && f == f1;
        got.push(format!("({tp},{fn_},{fp},{tn}) -> {a}% / {f}%"));
    }
    outcome(ok, got.join("; "))
}

fn a7_gradients() -> Outcome {
    let mut worst_layer: f64 = 0.0;
    for (spec, shape, mode) in layer_cases() {
        worst_layer = worst_layer.max(layer_gradcheck(&spec, shape, mode, 1));
    }
    let mut worst_net: f64 = 0.0;
    for (preset, input) in shrunken_presets() {
        worst_net = worst_net.max(network_gradcheck(build_preset(preset, input).unwrap(), 4, 40, 11));
    }
    outcome(
        worst_layer < GRADIENT_TOL && worst_net < GRADIENT_TOL,
        format!("max relative error: layers {worst_layer:.1e}, presets {worst_net:.1e}"),
    )
}

fn a8_classifier_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut knn_bad = 0;
    for _ in 0..100 {
        let n = rng.gen_range(5..80);
        let d = rng.gen_range(1..12);
        let k = [1, 3, 5][rng.gen_range(0..3)];
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| f64::from(rng.gen_range(-3..=3))).collect())
            .collect();
        let y: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let q: Vec<f64> = (0..d).map(|_| f64::from(rng.gen_range(-3..=3))).collect();
        let rows: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
        knn_bad += usize::from(knn_classify(&rows, &y, &q, k).unwrap() != knn_exhaustive(&x, &y, &q, k));
    }

    let (x, y) = margin_blobs(100, 5);
    let rows: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
    let params = SvmParams::new(10.0, 1.0);
    let model = svm_train(&rows, &y, &params).unwrap();
    let gap = dual_kkt_gap(&model, &x, &y);
    let (tx, ty) = margin_blobs(400, 6);
    let hits = rows.iter().zip(&y).filter(|(r, &l)| svm_predict(&model, r) == l).count()
        + tx.iter().zip(&ty).filter(|(r, &l)| svm_predict(&model, r) == l).count();

    let mut wil_worst: f64 = 0.0;
    let mut wil_cases = 0;
    for n in 1..=10 {
        for _ in 0..30 {
            let a: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..6))).collect();
            let b: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..6))).collect();
            let d: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p - q).collect();
            if let Ok(r) = wilcoxon_signed_rank(&a, &b) {
                wil_worst = wil_worst.max((r.p_value - signed_rank_enumeration(&d)).abs());
                wil_cases += 1;
            }
        }
    }
    outcome(
        knn_bad == 0 && gap <= params.tol && hits == 500 && wil_worst < 1e-12,
        format!(
            "kNN {knn_bad}/100 mismatches; SVM KKT gap {gap:.1e} (tol {}), {hits}/500 margin-blob points; Wilcoxon {wil_cases} cases, max |dp| {wil_worst:.1e}",
            params.tol
        ),
    )
}

fn a9_protocol_integrity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut leaks = 0;
    let mut plans = 0;
    for mode in [FoldMode::SubjectIndependent, FoldMode::SubjectDependent] {
        for _ in 0..50 {
            let subjects = rng.gen_range(6..40);
            let trials = rng.gen_range(1..5);
            let mut units = Vec::new();
            let mut labels = Vec::new();
            for s in 0..subjects {
                let per_trial = mode == FoldMode::SubjectDependent;
                for t in 0..if per_trial { trials } else { 1 } {
                    units.push(Unit {
                        subject: format!("S{s}"),
                        trial: per_trial.then(|| format!("T{t}")),
                    });
                    labels.push(u8::from(rng.gen_bool(0.5)));
                }
            }
            labels[0] = 0;
            labels[1] = 1;
            let k = rng.gen_range(3..=8.min(units.len()));
            let plan = make_folds(&units, &labels, k, mode, rng.gen()).unwrap();
            plans += 1;
            for split in plan.splits() {
                // the key a leak would share: subject, or subject and trial
                let key = |u: &Unit| match mode {
                    FoldMode::SubjectIndependent => (u.subject.clone(), None),
                    FoldMode::SubjectDependent => (u.subject.clone(), u.trial.clone()),
                };
                let parts: Vec<BTreeSet<_>> = [&split.train, &split.validation, &split.test]
                    .iter()
                    .map(|s| s.iter().map(key).collect())
                    .collect();
                for i in 0..3 {
                    for j in i + 1..3 {
                        leaks += parts[i].intersection(&parts[j]).count();
                    }
                }
                let covered: usize = parts.iter().map(BTreeSet::len).sum();
                leaks += units.len() - covered;
            }
        }
    }

    // augmentation reaches the training portion only
    let mut touched = 0;
    let mut folds_checked = 0;
    for (mode, trials) in [("subject_independent", 1), ("subject_dependent", 3)] {
        let mut cfg = ExperimentConfig::from_toml(&format!(
            "task = \"sad\"\nmodel = 2\nwindow_seconds = 5.0\naugment = \"extended\"\nclassifier = \"knn3\"\n\
             folds = 4\nmode = \"{mode}\"\nseed = 0\n[data]\nsource = \"synthetic\"\nsubjects = 12\n\
             trials_per_subject = {trials}\nseconds = 10.0\n"
        ))
        .unwrap();
        let set = extract(&cfg, 1).unwrap();
        let shifts = cfg.augment_plan().shifts.len();
        for seed in 0..4 {
            cfg.seed = seed;
            let plan = fold_plan(&cfg, &set).unwrap();
            for fold in 0..cfg.folds {
                let split = plan.split(fold);
                let data = fold_data(&cfg, &set, &plan, fold).unwrap();
                let unit = |s: &eegrid::sample::Sample| Unit::of(&s.provenance, plan.mode);
                let original = |s: &&eegrid::sample::Sample| set.samples.iter().any(|o| std::ptr::eq(o, *s));
                touched += data.validation.iter().filter(|s| !original(s) || !split.validation.contains(&unit(s))).count();
                touched += data.test.iter().filter(|s| !original(s) || !split.test.contains(&unit(s))).count();
                touched += data.train.iter().filter(|s| !split.train.contains(&unit(s))).count();
                let raw = set.samples.iter().filter(|s| split.train.contains(&unit(s))).count();
                touched += (data.train.len() != raw * shifts) as usize;
                folds_checked += 1;
            }
        }
    }
    outcome(
        leaks == 0 && touched == 0,
        format!("{plans} plans in both modes, {leaks} leakage violations; {folds_checked} augmented folds, {touched} augmentation faults"),
    )
}

fn a10_determinism() -> Outcome {
    let cfg = ExperimentConfig::from_toml(
        "task = \"sad\"\nmodel = 2\nwindow_seconds = 5.0\naugment = \"single\"\nclassifier = \"svm\"\nfolds = 4\n\
         mode = \"subject_independent\"\nseed = 17\n[data]\nsource = \"synthetic\"\nsubjects = 16\nseconds = 10.0\n",
    )
    .unwrap();
    let a = run_experiment(&cfg, 1).unwrap().to_jsonl();
    let b = run_experiment(&cfg, 4).unwrap().to_jsonl();
    outcome(a == b, format!("two runs (1 and 4 jobs), {} bytes each, identical: {}", a.len(), a == b))
}

type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

fn main() {
    let criteria: [Criterion; 10] = [
        ("A1", a1_energy_conservation, Some(Duration::from_secs(5))),
        ("A2", a2_frequency_ordering, Some(Duration::from_secs(5))),
        ("A3", a3_feature_identities, None),
        ("A4", a4_interpolation, None),
        ("A5", a5_model2_advantage, Some(Duration::from_secs(120))),
        ("A6", a6_metric_arithmetic, None),
        ("A7", a7_gradients, Some(Duration::from_secs(60))),
        ("A8", a8_classifier_oracles, None),
        ("A9", a9_protocol_integrity, None),
        ("A10", a10_determinism, None),
    ];
    let mut failed = Vec::new();
    for (id, run, budget) in criteria {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let in_time = budget.is_none_or(|b| elapsed <= b);
        let passed = out.passed && in_time;
        let timing = match budget {
            Some(b) => format!("{:.2}s of {}s", elapsed.as_secs_f64(), b.as_secs()),
            None => format!("{:.2}s", elapsed.as_secs_f64()),
        };
        println!("{} {id}: {} [{timing}]", if passed { "PASS" } else { "FAIL" }, out.detail);
        if !passed {
            failed.push(id);
        }
    }
    println!("acceptance: {}/10 passed", 10 - failed.len());
    if !failed.is_empty() {
        println!("failing: {}", failed.join(", "));
        std::process::exit(1);
    }
}
