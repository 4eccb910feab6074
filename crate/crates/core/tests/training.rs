use abexrat::dataset::stratified_split;
use abexrat::metrics::evaluate;
use abexrat::synthbench::{generate_synthetic, SynthSpec};
use abexrat::trainer::train_run;
use abexrat::{Dataset, Error, RatConfig, TrainConfig};

fn blobs(counts: Vec<usize>, dim: usize, noise: f64, seed: u64) -> (Dataset, Dataset, Dataset) {
    let data = generate_synthetic(&SynthSpec {
        class_counts: counts,
        dim,
        separation: 1.0,
        noise,
        seed,
    })
    .unwrap();
    stratified_split(&data, [8, 1, 1], seed).unwrap()
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        hidden_width: 16,
        learning_rate: 1e-3,
        ..TrainConfig::default()
    }
}

#[test]
fn separable_blobs_reach_high_val_macro_f1() {
    let (train, val, _) = blobs(vec![120, 120], 8, 0.05, 4);
    let cfg = TrainConfig {
        epochs: 30,
        ..TrainConfig::default()
    };
    let (_, history) = train_run(&train, &val, &cfg).unwrap();
    let last = history.epochs.last().unwrap();
    assert_eq!(last.epoch, 30);
    assert!(last.val_macro_f1 >= 0.95, "final val macro-F1 {}", last.val_macro_f1);
}

#[test]
fn near_noiseless_data_is_fit_exactly() {
    let (train, val, _) = blobs(vec![10, 10], 16, 0.01, 9);
    let (model, _) = train_run(&train, &val, &quick(60)).unwrap();
    let report = evaluate(&model, &train).unwrap();
    assert_eq!(report.macro_avg.f1, 1.0);
}

#[test]
fn training_is_bit_reproducible() {
    let (train, val, _) = blobs(vec![60, 20, 8], 6, 0.4, 1);
    let a = train_run(&train, &val, &quick(5)).unwrap();
    let b = train_run(&train, &val, &quick(5)).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.0.to_json().unwrap(), b.0.to_json().unwrap());
}

#[test]
fn zero_probability_matches_disabled_rat() {
    let (train, val, _) = blobs(vec![40, 12], 5, 0.3, 2);
    let off = TrainConfig {
        enable_rat: false,
        ..quick(4)
    };
    let never = TrainConfig {
        rat: RatConfig {
            p_rat: 0.0,
            ..RatConfig::default()
        },
        ..quick(4)
    };
    let (m_off, h_off) = train_run(&train, &val, &off).unwrap();
    let (m_never, h_never) = train_run(&train, &val, &never).unwrap();
    assert_eq!(m_off, m_never);
    assert_eq!(h_off, h_never);
    assert!(h_off.epochs.iter().all(|e| e.adversarial_batch_fraction == 0.0));
}

#[test]
fn adversarial_batch_fraction_tracks_p_rat() {
    let (train, val, _) = blobs(vec![250, 150], 4, 0.3, 3);
    let cfg = TrainConfig {
        epochs: 100,
        hidden_width: 4,
        ..TrainConfig::default()
    };
    let (_, history) = train_run(&train, &val, &cfg).unwrap();
    let batches = train.len().div_ceil(cfg.batch_size) * cfg.epochs;
    assert!(batches >= 2000);
    let f = history.adversarial_fraction();
    assert!((0.46..=0.54).contains(&f), "fraction {f}");
}

#[test]
fn loss_goes_down() {
    let (train, val, _) = blobs(vec![80, 40, 20], 8, 0.3, 5);
    let (_, h) = train_run(&train, &val, &quick(15)).unwrap();
    let first = h.epochs.first().unwrap().mean_loss_total;
    let last = h.epochs.last().unwrap().mean_loss_total;
    assert!(last < first, "loss {first} -> {last}");
    assert!(h.epochs.iter().any(|e| e.epoch == h.best_epoch));
}

#[test]
fn best_epoch_is_earliest_maximum() {
    let (train, val, _) = blobs(vec![30, 30], 4, 0.01, 6);
    let (_, h) = train_run(&train, &val, &quick(10)).unwrap();
    let best = h.epochs.iter().map(|e| e.val_macro_f1).fold(f64::MIN, f64::max);
    let earliest = h.epochs.iter().find(|e| e.val_macro_f1 == best).unwrap().epoch;
    assert_eq!(h.best_epoch, earliest);
}

#[test]
fn non_finite_inputs_are_numeric_errors() {
    let (mut train, val, _) = blobs(vec![20, 20], 4, 0.2, 7);
    train.samples[3].embedding.as_mut().unwrap()[1] = f32::NAN;
    let err = train_run(&train, &val, &quick(2)).unwrap_err();
    assert!(matches!(err, Error::Numeric(_)), "{err:?}");
    assert_eq!(err.exit_code(), 4);
}

#[test]
fn invalid_configs_and_inputs_are_rejected() {
    let (train, val, _) = blobs(vec![20, 20], 4, 0.2, 8);
    let bad = TrainConfig {
        batch_size: 0,
        ..quick(1)
    };
    assert!(train_run(&train, &val, &bad).is_err());
    let (other_d, _, _) = blobs(vec![20, 20], 5, 0.2, 8);
    assert!(matches!(train_run(&train, &other_d, &quick(1)), Err(Error::Dimension(_))));
    let one_class = Dataset::new(train.samples.iter().filter(|s| s.label == "class_0").cloned().collect());
    assert!(train_run(&one_class, &val, &quick(1)).is_err());
}

#[test]
fn defaults_are_the_reference_hyperparameters() {
    let cfg = TrainConfig::default();
    assert_eq!((cfg.epochs, cfg.batch_size, cfg.learning_rate), (100, 16, 1e-4));
    assert_eq!((cfg.rat.p_rat, cfg.rat.epsilon), (0.5, 0.1));
    assert_eq!(cfg.focal.gamma, 3.0);
    assert!(cfg.enable_rat);
}
