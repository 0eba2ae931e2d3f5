//! Training-loop properties that span several models or runs.

use synspec::dataset::{build_dataset, generate_dataset_config, DatasetSplits, GenerationConfig};
use synspec::nn::{checkpoint, Mode, Model, Tensor};
use synspec::zoo::{build_model, evaluate, resolve, train, train_observed, ArchitectureSpec, TrainingConfig};

fn small_splits() -> DatasetSplits {
    let g = GenerationConfig {
        n_classes: 4,
        n_datapoints: 300,
        train_samples_per_class: 18,
        ..GenerationConfig::desk(11)
    };
    build_dataset(&generate_dataset_config(&g).unwrap()).unwrap()
}

fn batches_seen(spec: &ArchitectureSpec, data: &DatasetSplits, cfg: &TrainingConfig) -> Vec<(usize, usize, Vec<usize>)> {
    let model = build_model(spec, data.train.n_datapoints, 4, cfg.seed).unwrap();
    let mut seen = Vec::new();
    train_observed(model, &data.train, &data.validation, cfg, &mut |e, b, rows| seen.push((e, b, rows.to_vec())))
        .unwrap();
    seen
}

#[test]
fn architectures_share_minibatches_at_a_seed() {
    let data = small_splits();
    // 60 training rows in batches of 16: no singleton tail, so batch norm
    // does not change the split.
    assert_eq!(data.train.len(), 60);
    let cfg = TrainingConfig { max_epochs: 3, batch_size: 16, seed: 7, ..TrainingConfig::default() };
    let plain = ArchitectureSpec::new("plain", "test", "C4k5-MP4-F-D8").unwrap();
    let normed = ArchitectureSpec::new("normed", "test", "C8k3-BN-MP2-C4k3-MP4-F").unwrap();
    let a = batches_seen(&plain, &data, &cfg);
    let b = batches_seen(&normed, &data, &cfg);
    assert_eq!(a.len(), 3 * 4);
    assert_eq!(a, b);

    // Each epoch is a permutation, and epochs differ.
    let epoch = |e: usize| a.iter().filter(|x| x.0 == e).flat_map(|x| x.2.clone()).collect::<Vec<_>>();
    let mut rows = epoch(0);
    assert_ne!(rows, epoch(1));
    rows.sort_unstable();
    assert_eq!(rows, (0..60).collect::<Vec<_>>());

    let other = batches_seen(&plain, &data, &TrainingConfig { seed: 8, ..cfg.clone() });
    assert_ne!(a, other);
    let fixed = batches_seen(&plain, &data, &TrainingConfig { shuffle_each_epoch: false, ..cfg });
    assert_eq!(fixed[0].2, (0..16).collect::<Vec<_>>());
    assert_eq!(fixed[0].2, fixed[4].2);
}

#[test]
fn best_weights_are_restored_and_checkpoint_round_trips() {
    let data = small_splits();
    let spec = resolve("desk_cnn6").unwrap();
    let cfg = TrainingConfig { max_epochs: 6, batch_size: 16, seed: 1, ..TrainingConfig::default() };
    let trained = train(build_model(&spec, 300, 4, 1).unwrap(), &data.train, &data.validation, &cfg).unwrap();
    let h = &trained.history;
    let best = h.best().unwrap();
    assert!(h.epochs.iter().all(|r| r.val_loss >= best.val_loss));

    // The returned model scores the best epoch's validation loss.
    let eval = evaluate(&trained.model, &data.validation).unwrap();
    assert!((eval.loss - best.val_loss).abs() < 1e-9, "{} vs {}", eval.loss, best.val_loss);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    checkpoint::save(&path, &trained.model, Some(&trained.optimizer)).unwrap();
    let (model, adam) = checkpoint::load::<f32>(&path).unwrap();
    assert_eq!(model.snapshot(), trained.model.snapshot());
    assert_eq!(adam.unwrap(), trained.optimizer);
    let x = Tensor::new(vec![2, 1, 300], data.test.spectra[..600].to_vec()).unwrap();
    assert_eq!(
        model.forward(&x, Mode::Eval).unwrap(),
        trained.model.forward(&x, Mode::Eval).unwrap()
    );
}

#[test]
fn f32_and_f64_models_agree() {
    let data = small_splits();
    let spec = resolve("desk_cnn2").unwrap();
    let model = build_model(&spec, 300, 4, 3).unwrap();
    let wide: Model<f64> = model.cast();
    let rows = 5;
    let x32 = Tensor::new(vec![rows, 1, 300], data.test.spectra[..rows * 300].to_vec()).unwrap();
    let x64 = Tensor::new(vec![rows, 1, 300], x32.data().iter().map(|&v| v as f64).collect()).unwrap();
    let a = model.forward(&x32, Mode::Eval).unwrap();
    let b = wide.forward(&x64, Mode::Eval).unwrap();
    for (p, q) in a.data().iter().zip(b.data()) {
        assert!((*p as f64 - q).abs() < 1e-5, "{p} vs {q}");
    }
}
