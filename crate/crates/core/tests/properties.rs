//! Randomized checks of the data-model invariants.

use proptest::prelude::*;
use synspec::bench::{Aggregate, RunRow};
use synspec::dataset::{build_dataset, generate_dataset_config, GenerationConfig};
use synspec::nn::{AdamState, LayerSpec};
use synspec::zoo::{parse_layers, PlateauSchedule, TrainingConfig};

fn small_generation(seed: u64, classes: usize, peaks: (usize, usize), samples: usize) -> GenerationConfig {
    GenerationConfig {
        n_classes: classes,
        n_datapoints: 400,
        min_peaks: peaks.0,
        max_peaks: peaks.1,
        train_samples_per_class: samples,
        ..GenerationConfig::desk(seed)
    }
}

fn row(model: &str, i: usize, wrong: usize) -> RunRow {
    RunRow {
        model: model.into(),
        seed_index: i,
        seed: i as u64,
        misclassifications: Some(wrong),
        test_samples: 450,
        trained_epochs: Some(40 + i),
        best_epoch: Some(20),
        stop_reason: Some("early_stop".into()),
        wall_time_s: 60.0,
        cpu_time_s: 55.0,
        error: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn generated_configs_satisfy_their_invariants(
        seed in any::<u64>(),
        classes in 1usize..8,
        lo in 1usize..4,
        extra in 0usize..4,
    ) {
        let g = small_generation(seed, classes, (lo, lo + extra), 6);
        let config = generate_dataset_config(&g).unwrap();
        prop_assert_eq!(config.fingerprints.len(), classes);
        prop_assert!(config.validate().is_ok());
        for (i, fp) in config.fingerprints.iter().enumerate() {
            prop_assert_eq!(fp.class_id as usize, i);
            prop_assert!(fp.check_ideal(g.n_datapoints, g.border_margin, (g.min_peaks, g.max_peaks)).is_ok());
            let max = fp.intensities().fold(f64::MIN, f64::max);
            prop_assert_eq!(max, 1.0);
            prop_assert!(fp.intensities().all(|v| v >= g.intensity_floor));
        }
    }

    #[test]
    fn split_cardinalities(seed in any::<u64>(), classes in 1usize..6, samples in 2usize..14) {
        let g = small_generation(seed, classes, (2, 4), samples);
        let splits = build_dataset(&generate_dataset_config(&g).unwrap()).unwrap();
        prop_assert_eq!(splits.train.len() + splits.validation.len(), samples * classes);
        prop_assert_eq!(splits.validation.len(), g.val_samples_per_class() * classes);
        prop_assert_eq!(splits.test.len(), 9 * classes);
        for ds in [&splits.train, &splits.validation, &splits.test] {
            prop_assert_eq!(ds.spectra.len(), ds.labels.len() * 400);
            prop_assert!(ds.labels.windows(2).all(|w| w[0] <= w[1]));
            for r in ds.rows() {
                prop_assert!(r.iter().all(|&v| (0.0..=1.0).contains(&v)));
                prop_assert_eq!(r.iter().copied().fold(f32::MIN, f32::max), 1.0);
            }
        }
    }

    #[test]
    fn layer_stack_text_round_trips(
        blocks in prop::collection::vec((1usize..65, 1usize..16, 1usize..3, prop::bool::ANY, 1usize..5), 1..4),
        dense in prop::collection::vec(1usize..3000, 0..3),
    ) {
        let mut grammar = Vec::new();
        for (c, k, s, bn, pool) in &blocks {
            grammar.push(format!("C{c}k{k}s{s}"));
            if *bn {
                grammar.push("BN".into());
            }
            grammar.push(format!("MP{pool}"));
        }
        grammar.push("F".into());
        grammar.extend(dense.iter().map(|d| format!("D{d}")));
        let specs = parse_layers(&grammar.join("-")).unwrap();
        prop_assert!(LayerSpec::validate_stack(&specs).is_ok());
        let convs = specs.iter().filter(|s| matches!(s, LayerSpec::Conv1d { .. })).count();
        prop_assert_eq!(convs, blocks.len());
        // One ReLU per convolution and per dense layer.
        let relus = specs.iter().filter(|s| **s == LayerSpec::Relu).count();
        prop_assert_eq!(relus, blocks.len() + dense.len());
        let text = LayerSpec::format_stack(&specs);
        prop_assert_eq!(LayerSpec::parse_stack(&text).unwrap(), specs);
    }

    #[test]
    fn adam_second_moment_stays_non_negative(
        grads in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 5), 1..20),
    ) {
        let mut adam = AdamState::<f64>::new(&[5], 1e-3);
        let mut p = [0.5f64; 5];
        for (t, g) in grads.iter().enumerate() {
            adam.step(&mut [&mut p[..]], std::slice::from_ref(g)).unwrap();
            prop_assert_eq!(adam.t, t as u64 + 1);
            prop_assert!(adam.v[0].iter().all(|&v| v >= 0.0));
            prop_assert!(p.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn schedule_learning_rate_only_falls_by_the_factor(
        losses in prop::collection::vec(0.0f64..2.0, 1..120),
    ) {
        let cfg = TrainingConfig::default();
        let mut s = PlateauSchedule::new(&cfg);
        let mut reductions = 0i32;
        let mut best = f64::INFINITY;
        for &l in &losses {
            let before = s.learning_rate;
            let step = s.observe(l);
            prop_assert_eq!(step.improved, l < best - 1e-6);
            if step.improved {
                best = l;
            }
            if step.reduced {
                reductions += 1;
                prop_assert_eq!(s.learning_rate, before * cfg.plateau_factor);
            } else {
                prop_assert_eq!(s.learning_rate, before);
            }
            prop_assert_eq!(s.learning_rate, cfg.learning_rate * cfg.plateau_factor.powi(reductions));
            if step.stop {
                break;
            }
        }
    }

    #[test]
    fn aggregate_matches_recomputation(counts in prop::collection::vec(0usize..500, 1..9)) {
        let rows: Vec<RunRow> = counts.iter().enumerate().map(|(i, &c)| row("m", i, c)).collect();
        let refs: Vec<&RunRow> = rows.iter().collect();
        let a = Aggregate::from_rows("m", &refs);
        let n = counts.len() as f64;
        let mean = counts.iter().sum::<usize>() as f64 / n;
        prop_assert!((a.mean_misclassifications - mean).abs() < 1e-9);
        prop_assert_eq!(a.std_defined, counts.len() >= 2);
        if counts.len() >= 2 {
            let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
            prop_assert!((a.std_misclassifications - var.sqrt()).abs() < 1e-9);
        }
        prop_assert_eq!(a.runs, counts.len());
        prop_assert_eq!(a.min_epochs, 40);
        prop_assert_eq!(a.max_epochs, 40 + counts.len() - 1);
    }
}
