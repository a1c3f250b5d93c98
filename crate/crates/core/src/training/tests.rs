use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dataio::{generate_synthetic, DatasetManifest, InformativeModality, SynthSpec};
use crate::kv::KeyValues;
use crate::models::{miniature, FusionConfig, FusionKind, FusionNet, MiniatureKind, Network};
use crate::tensor::Tensor;

fn params_of(values: &[(&str, Vec<f64>)]) -> ParamSet<f64> {
    let mut p = ParamSet::new();
    for (name, v) in values {
        p.insert(*name, Tensor::new(vec![v.len()], v.clone()).unwrap()).unwrap();
    }
    p
}

fn norm(p: &ParamSet<f64>) -> f64 {
    p.iter().flat_map(|q| q.value.data()).map(|x| x * x).sum::<f64>().sqrt()
}

fn grads_of(p: &ParamSet<f64>, f: impl Fn(f64) -> f64) -> Vec<Option<Tensor<f64>>> {
    p.iter().map(|q| Some(q.value.map(&f))).collect()
}

// ---- SGD ----

#[test]
fn sgd_zero_gradient_keeps_parameters() {
    let mut p = params_of(&[("a", vec![1.0, -2.0]), ("b", vec![3.5])]);
    let before = p.clone();
    sgd_step(&mut p, &grads_of(&before, |_| 0.0), 0.3).unwrap();
    assert_eq!(p, before);
}

#[test]
fn sgd_unit_rate_with_gradient_equal_to_params_zeroes_them() {
    let mut p = params_of(&[("a", vec![1.0, -2.0, 0.25]), ("b", vec![3.5])]);
    let g = grads_of(&p, |x| x);
    sgd_step(&mut p, &g, 1.0).unwrap();
    assert!(p.iter().all(|q| q.value.data().iter().all(|&x| x == 0.0)));
}

#[test]
fn sgd_contracts_a_quadratic_bowl_geometrically() {
    let mut p = params_of(&[("a", vec![1.0, -2.0, 0.25]), ("b", vec![3.5, 4.0])]);
    let start = norm(&p);
    for _ in 0..100 {
        let g = grads_of(&p, |x| x);
        sgd_step(&mut p, &g, 0.1).unwrap();
    }
    let ratio = norm(&p) / start;
    assert!((ratio / 0.9f64.powi(100) - 1.0).abs() < 1e-12, "{ratio}");
}

#[test]
fn sgd_skips_frozen_and_rejects_mismatched_gradients() {
    let mut p = params_of(&[("a", vec![1.0]), ("b", vec![2.0])]);
    sgd_step(&mut p, &[None, Some(Tensor::new(vec![1], vec![1.0]).unwrap())], 0.5).unwrap();
    assert_eq!(p.get("a").unwrap().data(), [1.0]);
    assert_eq!(p.get("b").unwrap().data(), [1.5]);
    assert!(sgd_step(&mut p, &[None], 0.5).is_err());
    assert!(sgd_step(&mut p, &[None, Some(Tensor::zeros(&[2]))], 0.5).is_err());
}

// ---- Adam ----

#[test]
fn adam_first_step_has_magnitude_lr() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let values: Vec<f64> = (0..20).map(|_| rng.random_range(-3.0..3.0)).collect();
    let grads: Vec<f64> = (0..20)
        .map(|_| rng.random_range(0.01..5.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    let mut p = params_of(&[("w", values.clone())]);
    let mut state = AdamState::new(&p, 0.001);
    adam_step(&mut p, &[Some(Tensor::new(vec![20], grads.clone()).unwrap())], &mut state).unwrap();
    for ((after, before), g) in p.get("w").unwrap().data().iter().zip(&values).zip(&grads) {
        let step = after - before;
        assert_eq!(step.signum(), -g.signum());
        assert!((step.abs() - 0.001).abs() < 1e-9, "{step}");
    }
}

#[test]
fn adam_zero_gradient_keeps_parameters() {
    let mut p = params_of(&[("w", vec![0.5, -1.0, 2.0])]);
    let before = p.clone();
    let mut state = AdamState::new(&p, 0.01);
    for _ in 0..5 {
        adam_step(&mut p, &[Some(Tensor::zeros(&[3]))], &mut state).unwrap();
    }
    assert_eq!(p, before);
    assert_eq!(state.t, 5);
}

#[test]
fn adam_matches_scalar_reimplementation() {
    // f(θ) = Σ c_i θ_i² / 2 + d_i θ_i
    let c = [1.0, 4.0, 0.3];
    let d = [0.5, -1.0, 2.0];
    let theta0 = [1.5, -0.7, 0.2];
    let lr = 0.05;
    let mut p = params_of(&[("w", theta0.to_vec())]);
    let mut state = AdamState::new(&p, lr);
    for _ in 0..10 {
        let w = p.get("w").unwrap().data().to_vec();
        let g: Vec<f64> = (0..3).map(|i| c[i] * w[i] + d[i]).collect();
        adam_step(&mut p, &[Some(Tensor::new(vec![3], g).unwrap())], &mut state).unwrap();
    }
    for i in 0..3 {
        let (mut th, mut m, mut v) = (theta0[i], 0.0f64, 0.0f64);
        for t in 1..=10 {
            let g = c[i] * th + d[i];
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            th -= lr * mh / (vh.sqrt() + 1e-8);
        }
        assert!((p.get("w").unwrap().data()[i] - th).abs() < 1e-12);
    }
    assert!(state.second_moments()[0].data().iter().all(|&v| v >= 0.0));
    assert_eq!(state.first_moments()[0].shape(), &[3]);
}

// ---- early stopping ----

#[test]
fn early_stopping_counts_from_the_peak() {
    let mut s = EarlyStopping::new(3, Monitor::ValMap);
    let seq = [0.1, 0.5, 0.5 + 1e-7, 0.4, 0.5, 0.6];
    let verdicts: Vec<Verdict> = seq.iter().enumerate().map(|(i, &m)| s.observe(i + 1, m)).collect();
    use Verdict::*;
    assert_eq!(verdicts, [Improved, Improved, Waiting, Waiting, Stop, Improved]);
    assert_eq!(s.best_epoch, 6);

    let mut s = EarlyStopping::new(2, Monitor::ValLoss);
    assert_eq!(s.observe(1, 1.0), Improved);
    assert_eq!(s.observe(2, 0.5), Improved);
    assert_eq!(s.observe(3, 0.6), Waiting);
    assert_eq!(s.observe(4, f64::NAN), Stop);
    assert_eq!((s.best_epoch, s.best_metric), (2, Some(0.5)));
}

proptest! {
    #[test]
    fn early_stopping_counter_never_exceeds_patience(
        patience in 1usize..6,
        metrics in proptest::collection::vec(0.0f64..1.0, 1..40),
    ) {
        let mut s = EarlyStopping::new(patience, Monitor::ValMap);
        for (i, &m) in metrics.iter().enumerate() {
            let v = s.observe(i + 1, m);
            prop_assert!(s.epochs_since_improvement <= patience);
            if v == Verdict::Stop {
                prop_assert_eq!(s.epochs_since_improvement, patience);
                break;
            }
        }
        let best = s.best_metric.unwrap();
        prop_assert!(metrics[..s.best_epoch].iter().all(|&m| m < best + MIN_DELTA));
    }
}

// ---- fit ----

fn tiny_data(seed: u64) -> (DatasetManifest, Vec<SampleRecord>) {
    let mut spec = SynthSpec::uniform(seed, 3, 8, 1, InformativeModality::Rgb);
    spec.n_train = 60;
    spec.n_val = 30;
    spec.n_test = 0;
    spec.label_prevalence = vec![0.4; 3];
    generate_synthetic(&spec).unwrap()
}

fn tiny_net(seed: u64) -> FusionNet<f64> {
    let config = FusionConfig {
        feat_dim: 8,
        hidden: 4,
        n_classes: 3,
        seed,
        ..FusionConfig::default()
    };
    FusionNet::new(FusionKind::Multiview(Modality::Rgb), config).unwrap()
}

fn tiny_config(max_epochs: usize) -> TrainConfig {
    TrainConfig {
        max_epochs,
        patience: 3,
        batch_size: 16,
        learning_rate: 0.1,
        ..TrainConfig::default()
    }
}

#[test]
fn single_epoch_cap_gives_one_report() {
    let (_, records) = tiny_data(0);
    let mut net = tiny_net(0);
    let mut seen = 0;
    let res = fit(&mut net, &records, &tiny_config(1), |r| {
        seen += 1;
        assert_eq!(r.epoch, 1);
        Ok(())
    })
    .unwrap();
    assert_eq!(res.reports.len(), 1);
    assert_eq!(seen, 1);
    assert_eq!(res.best_epoch, 1);
    let r = &res.reports[0];
    assert!(r.train_loss >= 0.0 && r.val_loss >= 0.0);
    assert!((0.0..=1.0).contains(&r.val_map));
    assert_eq!(r.per_class_ap.len(), 3);
    assert!((r.attention[&Modality::Rgb].iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn stalled_monitor_stops_one_epoch_after_the_first() {
    let (_, records) = tiny_data(1);
    let mut net = tiny_net(1);
    let config = TrainConfig {
        patience: 1,
        learning_rate: 1e-12,
        ..tiny_config(50)
    };
    let res = fit(&mut net, &records, &config, |_| Ok(())).unwrap();
    assert_eq!(res.reports.len(), 2);
    assert_eq!(res.best_epoch, 1);
}

#[test]
fn fit_is_deterministic_and_restores_the_best_epoch() {
    let (_, records) = tiny_data(2);
    let config = TrainConfig {
        optimizer: OptimizerKind::Adam,
        learning_rate: 0.01,
        seed: 5,
        ..tiny_config(12)
    };
    let mut a = tiny_net(2);
    let mut b = tiny_net(2);
    let ra = fit(&mut a, &records, &config, |_| Ok(())).unwrap();
    let rb = fit(&mut b, &records, &config, |_| Ok(())).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(a, b);
    assert_eq!(a.params(), &ra.best_params);
    let val = split_records(&records, Split::Val);
    let again = evaluate(&a, &val).unwrap();
    assert_eq!(again.ap.map_or_zero(), ra.best_metric);
    assert_eq!(ra.reports[ra.best_epoch - 1].val_map, ra.best_metric);

    let other_order = TrainConfig { seed: 6, ..config };
    let mut c = tiny_net(2);
    let rc = fit(&mut c, &records, &other_order, |_| Ok(())).unwrap();
    assert_ne!(ra.reports[0].train_loss, rc.reports[0].train_loss);
}

#[test]
fn fit_learns_the_planted_signal() {
    let mut spec = SynthSpec::uniform(3, 3, 8, 1, InformativeModality::Rgb);
    spec.n_train = 200;
    spec.n_val = 100;
    spec.n_test = 0;
    spec.label_prevalence = vec![0.4; 3];
    let (_, records) = generate_synthetic(&spec).unwrap();
    let mut net = FusionNet::<f64>::new(
        FusionKind::Multiview(Modality::Rgb),
        FusionConfig {
            feat_dim: 8,
            hidden: 16,
            n_classes: 3,
            seed: 3,
            ..FusionConfig::default()
        },
    )
    .unwrap();
    let config = TrainConfig {
        optimizer: OptimizerKind::Adam,
        learning_rate: 0.02,
        patience: 10,
        ..tiny_config(80)
    };
    let res = fit(&mut net, &records, &config, |_| Ok(())).unwrap();
    assert!(res.reports.last().unwrap().train_loss < res.reports[0].train_loss);
    assert!(res.best_metric > 0.75, "{} after {} epochs", res.best_metric, res.reports.len());
    let attention = res.reports[res.best_epoch - 1].attention[&Modality::Rgb];
    assert!(attention[1] > attention[0] && attention[1] > attention[2], "{attention:?}");
}

#[test]
fn fit_rejects_empty_splits_and_bad_config() {
    let (_, records) = tiny_data(4);
    let train_only: Vec<SampleRecord> = records.iter().filter(|r| r.split == Split::Train).cloned().collect();
    let mut net = tiny_net(4);
    assert!(matches!(fit(&mut net, &train_only, &tiny_config(1), |_| Ok(())), Err(Error::EmptySplit(_))));
    let bad = TrainConfig {
        learning_rate: 0.0,
        ..tiny_config(1)
    };
    assert!(matches!(fit(&mut net, &records, &bad, |_| Ok(())), Err(Error::Config(_))));
    assert!(evaluate(&net, &[]).is_err());
}

#[test]
fn nan_loss_names_epoch_and_batch() {
    let (_, records) = tiny_data(5);
    let mut net = tiny_net(5);
    net.params_mut().set("rgb.b_cls", Tensor::full(&[3], f64::NAN)).unwrap();
    let err = fit(&mut net, &records, &tiny_config(3), |_| Ok(())).unwrap_err();
    match err {
        Error::Numeric(msg) => assert!(msg.contains("epoch 1") && msg.contains("batch 0"), "{msg}"),
        other => panic!("{other}"),
    }
}

#[test]
fn callback_errors_abort_training() {
    let (_, records) = tiny_data(6);
    let mut net = tiny_net(6);
    let err = fit(&mut net, &records, &tiny_config(5), |r| {
        if r.epoch == 2 {
            Err(Error::Io(std::io::Error::other("disk full")))
        } else {
            Ok(())
        }
    });
    assert!(err.is_err());
}

#[test]
fn small_sgd_step_lowers_the_sample_loss() {
    let mut checked = 0;
    for seed in 0..5 {
        for kind in MiniatureKind::ALL {
            let (mut net, batch) = miniature(kind, seed).unwrap();
            let loss_of = |net: &Network<f64>| -> (f64, Vec<Option<Tensor<f64>>>) {
                let mut tape = Tape::new();
                let bound = net.params().bind(&mut tape);
                let out = net.forward(&mut tape, &bound, &batch).unwrap();
                let loss = tape.bce_loss(out.probs, &batch.targets).unwrap();
                tape.backward(loss).unwrap();
                (tape.value(loss).data()[0], bound.grads(&tape))
            };
            let (before, grads) = loss_of(&net);
            sgd_step(net.params_mut(), &grads, 1e-4).unwrap();
            let (after, _) = loss_of(&net);
            assert!(after < before, "{kind} seed {seed}: {before} -> {after}");
            checked += 1;
        }
    }
    assert_eq!(checked, 20);
}

#[test]
fn epoch_report_serializes_as_one_json_object() {
    let (_, records) = tiny_data(7);
    let mut net = tiny_net(7);
    let res = fit(&mut net, &records, &tiny_config(1), |_| Ok(())).unwrap();
    let line = serde_json::to_string(&res.reports[0]).unwrap();
    let v: serde_json::Value = serde_json::from_str(&line).unwrap();
    for key in ["epoch", "train_loss", "val_loss", "val_map", "per_class_ap", "attention"] {
        assert!(v.get(key).is_some(), "{key} in {line}");
    }
    assert_eq!(v["attention"]["rgb"].as_array().unwrap().len(), 3);
}

// ---- configuration ----

#[test]
fn run_config_reads_every_key() {
    let text = "# run\noptimizer = adam\nlearning_rate=0.005\nmax_epochs=7\npatience=2\nbatch_size=4\n\
                seed=9\nmonitor=val_loss\ndataset_path=data.mtbr\nmodalities=dct+rgb\noutput_dir=out\n";
    let rc = RunConfig::from_key_values(&KeyValues::parse(text).unwrap()).unwrap();
    assert_eq!(
        rc.train,
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            learning_rate: 0.005,
            max_epochs: 7,
            patience: 2,
            batch_size: 4,
            seed: 9,
            monitor: Monitor::ValLoss,
        }
    );
    assert_eq!(rc.model, ModelChoice::Bimodal);
    assert_eq!(rc.dataset_path.to_str(), Some("data.mtbr"));
    assert_eq!(rc.output_dir.to_str(), Some("out"));
}

#[test]
fn run_config_defaults_follow_the_optimizer() {
    let base = "dataset_path=d\nmodalities=rgb\noutput_dir=o\n";
    let sgd = RunConfig::from_key_values(&KeyValues::parse(base).unwrap()).unwrap();
    assert_eq!(sgd.train, TrainConfig::default());
    assert_eq!(sgd.train.learning_rate, 0.01);
    let adam = RunConfig::from_key_values(&KeyValues::parse(&format!("{base}optimizer=adam")).unwrap()).unwrap();
    assert_eq!(adam.train.learning_rate, 0.001);
    assert_eq!((adam.train.max_epochs, adam.train.patience, adam.train.batch_size), (300, 10, 32));
    for bad in [
        format!("{base}momentum=0.9"),
        format!("{base}patience=0"),
        format!("{base}learning_rate=-1"),
        format!("{base}optimizer=rmsprop"),
        "modalities=rgb\noutput_dir=o\n".to_string(),
    ] {
        let parsed = KeyValues::parse(&bad).and_then(|kv| RunConfig::from_key_values(&kv));
        assert!(matches!(parsed, Err(Error::Config(_))), "{bad}");
    }
}

#[test]
fn model_choice_names_round_trip() {
    for (text, choice) in [
        ("rgb", ModelChoice::Rgb),
        ("dct", ModelChoice::Dct),
        ("rgb+dct", ModelChoice::Bimodal),
        ("lavila+dct+rgb", ModelChoice::Trimodal),
        ("lavila", ModelChoice::Lavila),
    ] {
        let parsed: ModelChoice = text.parse().unwrap();
        assert_eq!(parsed, choice);
        assert_eq!(parsed.to_string().parse::<ModelChoice>().unwrap(), choice);
    }
    assert!("rgb+lavila".parse::<ModelChoice>().is_err());
    assert!("depth".parse::<ModelChoice>().is_err());
}

#[test]
fn model_choice_builds_networks_for_the_manifest() {
    let mut spec = SynthSpec::uniform(0, 4, 10, 0, InformativeModality::Both);
    spec.lavila = true;
    spec.lavila_dim = 12;
    let manifest = spec.manifest();
    let Network::Fusion(tri) = ModelChoice::Trimodal.build::<f64>(&manifest, 3).unwrap() else {
        panic!("expected a fusion network");
    };
    assert_eq!(tri.kind, FusionKind::Trimodal);
    assert_eq!(tri.params().get("lavila.w").unwrap().shape(), &[12, 64]);
    assert_eq!(tri.params().get("rgb.w_view0").unwrap().shape(), &[10, 64]);
    let Network::Transformer(t) = ModelChoice::Lavila.build::<f64>(&manifest, 3).unwrap() else {
        panic!("expected a transformer");
    };
    assert_eq!((t.config.seq_len, t.config.d_model, t.config.n_classes), (1, 12, 4));
    spec.lavila = false;
    assert!(ModelChoice::Trimodal.build::<f64>(&spec.manifest(), 0).is_err());
}
