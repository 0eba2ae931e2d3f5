use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::{softmax_cross_entropy, AdamState, LayerSpec, Mode, Model, Snapshot, Tensor};
use crate::rng::{permutation, tags, StreamKey};

/// A validation loss counts as an improvement only if it beats the best so
/// far by at least this much.
pub const MIN_IMPROVEMENT: f64 = 1e-6;

/// Rows per forward pass when evaluating.
const EVAL_BATCH: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub early_stop_patience: usize,
    pub shuffle_each_epoch: bool,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 3e-4,
            batch_size: 128,
            max_epochs: 500,
            plateau_factor: 0.5,
            plateau_patience: 10,
            early_stop_patience: 25,
            shuffle_each_epoch: true,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if self.plateau_patience == 0 || self.early_stop_patience == 0 {
            return fail("patience values must be positive");
        }
        if self.early_stop_patience <= self.plateau_patience {
            return fail("early_stop_patience must exceed plateau_patience");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return fail("plateau_factor must lie in (0, 1)");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return fail("learning_rate must be finite and non-negative");
        }
        Ok(())
    }
}

/// Reduce-on-plateau and early-stopping bookkeeping, driven by the
/// validation loss of each epoch.
///
/// Both counters grow on epochs without improvement and reset on
/// improvement. When the plateau counter reaches its patience the learning
/// rate is multiplied by the factor and that counter restarts; when the
/// early-stop counter reaches its patience training stops.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauSchedule {
    pub learning_rate: f64,
    factor: f64,
    plateau_patience: usize,
    early_stop_patience: usize,
    best: f64,
    plateau_wait: usize,
    stop_wait: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleStep {
    pub improved: bool,
    /// The learning rate was reduced; the new value applies from the next epoch.
    pub reduced: bool,
    pub stop: bool,
}

impl PlateauSchedule {
    pub fn new(cfg: &TrainingConfig) -> Self {
        PlateauSchedule {
            learning_rate: cfg.learning_rate,
            factor: cfg.plateau_factor,
            plateau_patience: cfg.plateau_patience,
            early_stop_patience: cfg.early_stop_patience,
            best: f64::INFINITY,
            plateau_wait: 0,
            stop_wait: 0,
        }
    }

    pub fn observe(&mut self, val_loss: f64) -> ScheduleStep {
        let improved = val_loss < self.best - MIN_IMPROVEMENT;
        let mut reduced = false;
        if improved {
            self.best = val_loss;
            self.plateau_wait = 0;
            self.stop_wait = 0;
        } else {
            self.plateau_wait += 1;
            self.stop_wait += 1;
            if self.plateau_wait >= self.plateau_patience {
                self.learning_rate *= self.factor;
                self.plateau_wait = 0;
                reduced = true;
            }
        }
        ScheduleStep { improved, reduced, stop: self.stop_wait >= self.early_stop_patience }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::EarlyStop => "early_stop",
            StopReason::MaxEpochs => "max_epochs",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    /// Epoch with the lowest validation loss (first one on ties).
    pub best_epoch: Option<usize>,
    pub wall_time_s: f64,
}

impl TrainingHistory {
    pub fn trained_epochs(&self) -> usize {
        self.epochs.len()
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.best_epoch.map(|e| &self.epochs[e])
    }

    /// `epoch,train_loss,val_loss,val_acc,lr`, one row per epoch. Floats use
    /// the shortest representation that round-trips.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let wrap = |e: csv::Error| Error::Format(format!("writing history: {e}"));
        w.write_record(["epoch", "train_loss", "val_loss", "val_acc", "lr"]).map_err(wrap)?;
        for r in &self.epochs {
            w.write_record([
                r.epoch.to_string(),
                r.train_loss.to_string(),
                r.val_loss.to_string(),
                r.val_acc.to_string(),
                r.lr.to_string(),
            ])
            .map_err(wrap)?;
        }
        w.flush().map_err(|e| Error::io("writing history", e))
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

pub struct Trained {
    pub model: Model<f32>,
    pub optimizer: AdamState<f32>,
    pub history: TrainingHistory,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub n_samples: usize,
    pub misclassifications: usize,
    pub accuracy: f64,
    pub loss: f64,
    /// Misclassified samples per true class; classes without errors are omitted.
    pub per_class_errors: BTreeMap<u32, usize>,
    pub predictions: Vec<u32>,
}

fn batch_tensor(data: &LabeledDataset, rows: &[usize]) -> Result<(Tensor<f32>, Vec<i64>)> {
    let n = data.n_datapoints;
    let mut values = Vec::with_capacity(rows.len() * n);
    let mut labels = Vec::with_capacity(rows.len());
    for &r in rows {
        values.extend_from_slice(data.row(r));
        labels.push(data.labels[r]);
    }
    Ok((Tensor::new(vec![rows.len(), 1, n], values)?, labels))
}

fn check_dataset(model: &Model<f32>, data: &LabeledDataset, what: &str) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Validation(format!("{what} set is empty")));
    }
    if data.n_datapoints != model.input_len() {
        return Err(Error::Shape(format!(
            "{what} set has {} datapoints, model expects {}",
            data.n_datapoints,
            model.input_len()
        )));
    }
    let classes = model.n_outputs() as i64;
    if let Some(&bad) = data.labels.iter().find(|&&l| l < 0 || l >= classes) {
        return Err(Error::Validation(format!("{what} label {bad} outside [0, {classes})")));
    }
    Ok(())
}

/// Argmax predictions (lowest class on ties), accuracy and mean loss in
/// eval mode.
pub fn evaluate(model: &Model<f32>, data: &LabeledDataset) -> Result<Evaluation> {
    check_dataset(model, data, "evaluation")?;
    let mut predictions = Vec::with_capacity(data.len());
    let mut loss_sum = 0.0;
    let rows: Vec<usize> = (0..data.len()).collect();
    for chunk in rows.chunks(EVAL_BATCH) {
        let (x, labels) = batch_tensor(data, chunk)?;
        let logits = model.logits(&x, Mode::Eval)?;
        loss_sum += softmax_cross_entropy(&logits, &labels)?.0 * chunk.len() as f64;
        let c = logits.shape()[1];
        for row in logits.data().chunks(c) {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            predictions.push(best as u32);
        }
    }
    let mut per_class_errors = BTreeMap::new();
    for (&p, &l) in predictions.iter().zip(&data.labels) {
        if p as i64 != l {
            *per_class_errors.entry(l as u32).or_insert(0) += 1;
        }
    }
    let misclassifications = per_class_errors.values().sum();
    Ok(Evaluation {
        n_samples: data.len(),
        misclassifications,
        accuracy: 1.0 - misclassifications as f64 / data.len() as f64,
        loss: loss_sum / data.len() as f64,
        per_class_errors,
        predictions,
    })
}

/// Minibatch row indices for one epoch. A trailing batch of a single row is
/// folded into the previous batch when the model uses batch norm, which
/// cannot normalize one sample.
pub fn epoch_batches(order: &[usize], batch_size: usize, has_batch_norm: bool) -> Vec<&[usize]> {
    let mut batches: Vec<&[usize]> = order.chunks(batch_size).collect();
    if has_batch_norm && batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        batches.pop();
        let start = (batches.len() - 1) * batch_size;
        *batches.last_mut().expect("at least one batch") = &order[start..];
    }
    batches
}

pub fn train(model: Model<f32>, train_set: &LabeledDataset, val_set: &LabeledDataset, cfg: &TrainingConfig) -> Result<Trained> {
    train_observed(model, train_set, val_set, cfg, &mut |_, _, _| {})
}

/// As [`train`], reporting `(epoch, batch, rows)` for every minibatch
/// before it is used.
pub fn train_observed(
    mut model: Model<f32>,
    train_set: &LabeledDataset,
    val_set: &LabeledDataset,
    cfg: &TrainingConfig,
    observer: &mut dyn FnMut(usize, usize, &[usize]),
) -> Result<Trained> {
    cfg.validate()?;
    check_dataset(&model, train_set, "training")?;
    check_dataset(&model, val_set, "validation")?;
    let started = Instant::now();
    let has_bn = model.specs().contains(&LayerSpec::BatchNorm);
    let mut adam = AdamState::new(&model.param_sizes(), cfg.learning_rate);
    let mut schedule = PlateauSchedule::new(cfg);
    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, Snapshot<f32>)> = None;
    let mut stop_reason = StopReason::MaxEpochs;
    let shuffle_root = StreamKey::root(cfg.seed).child(tags::SHUFFLE);

    for epoch in 0..cfg.max_epochs {
        let lr = schedule.learning_rate;
        adam.learning_rate = lr;
        let order = if cfg.shuffle_each_epoch {
            permutation(&mut shuffle_root.child(epoch as u64).stream(), train_set.len())
        } else {
            (0..train_set.len()).collect()
        };
        let mut loss_sum = 0.0;
        for (b, rows) in epoch_batches(&order, cfg.batch_size, has_bn).into_iter().enumerate() {
            observer(epoch, b, rows);
            let (x, labels) = batch_tensor(train_set, rows)?;
            let (loss, trace, grads) = model.loss_and_gradients(&x, &labels, Mode::Train)?;
            if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b, lr });
            }
            loss_sum += loss * rows.len() as f64;
            model.absorb_batch_stats(&trace)?;
            adam.step(&mut model.params_mut(), &grads)?;
        }
        let val = evaluate(&model, val_set)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_loss: val.loss,
            val_acc: val.accuracy,
            lr,
        };
        log::info!(
            "epoch {epoch}: train_loss {:.6} val_loss {:.6} val_acc {:.4} lr {lr:e}",
            record.train_loss,
            record.val_loss,
            record.val_acc
        );
        if best.as_ref().is_none_or(|(_, l, _)| val.loss < *l) {
            best = Some((epoch, val.loss, model.snapshot()));
        }
        epochs.push(record);
        let step = schedule.observe(val.loss);
        if step.reduced {
            log::info!("reducing learning rate to {:e}", schedule.learning_rate);
        }
        if step.stop {
            stop_reason = StopReason::EarlyStop;
            break;
        }
    }
    let best_epoch = best.as_ref().map(|b| b.0);
    if let Some((_, _, snapshot)) = &best {
        model.restore(snapshot)?;
    }
    Ok(Trained {
        model,
        optimizer: adam,
        history: TrainingHistory {
            epochs,
            stop_reason,
            best_epoch,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Split;
    use crate::zoo::{build_model, ArchitectureSpec};

    /// The schedule rules re-derived step by step, independently of
    /// `PlateauSchedule`.
    fn simulate(losses: &[f64], plateau: usize, stop: usize) -> (Vec<f64>, usize) {
        let (mut lr, mut best, mut wait_lr, mut wait_stop) = (1.0, f64::INFINITY, 0, 0);
        let mut lrs = Vec::new();
        for (e, &l) in losses.iter().enumerate() {
            lrs.push(lr);
            if l < best - 1e-6 {
                best = l;
                wait_lr = 0;
                wait_stop = 0;
                continue;
            }
            wait_lr += 1;
            wait_stop += 1;
            if wait_lr == plateau {
                lr /= 2.0;
                wait_lr = 0;
            }
            if wait_stop == stop {
                return (lrs, e + 1);
            }
        }
        (lrs, losses.len())
    }

    fn run(losses: &[f64]) -> (Vec<f64>, usize) {
        let cfg = TrainingConfig { learning_rate: 1.0, ..TrainingConfig::default() };
        let mut s = PlateauSchedule::new(&cfg);
        let mut lrs = Vec::new();
        for (e, &l) in losses.iter().enumerate() {
            lrs.push(s.learning_rate);
            if s.observe(l).stop {
                return (lrs, e + 1);
            }
        }
        (lrs, losses.len())
    }

    #[test]
    fn constant_loss_halves_twice_then_stops() {
        let (lrs, n) = run(&[0.7; 100]);
        assert_eq!(n, 26);
        assert!(lrs[..11].iter().all(|&l| l == 1.0));
        assert!(lrs[11..21].iter().all(|&l| l == 0.5));
        assert!(lrs[21..].iter().all(|&l| l == 0.25));
        assert_eq!((lrs, n), simulate(&[0.7; 100], 10, 25));
    }

    #[test]
    fn schedule_matches_reference_on_irregular_streams() {
        let mut state = 17u64;
        for _ in 0..50 {
            let losses: Vec<f64> = (0..120)
                .map(|i| {
                    state = crate::rng::mix64(state);
                    1.0 / (1.0 + i as f64 * 0.05) + (state % 1000) as f64 * 1e-4
                })
                .collect();
            assert_eq!(run(&losses), simulate(&losses, 10, 25));
        }
    }

    #[test]
    fn tiny_improvements_do_not_count() {
        let losses: Vec<f64> = (0..40).map(|i| 1.0 - i as f64 * 1e-8).collect();
        assert_eq!(run(&losses).1, 26);
    }

    #[test]
    fn config_rules() {
        assert!(TrainingConfig::default().validate().is_ok());
        for bad in [
            TrainingConfig { batch_size: 0, ..Default::default() },
            TrainingConfig { plateau_patience: 30, ..Default::default() },
            TrainingConfig { early_stop_patience: 0, ..Default::default() },
            TrainingConfig { plateau_factor: 1.0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn singleton_tail_is_folded_only_with_batch_norm() {
        let order: Vec<usize> = (0..9).collect();
        let plain = epoch_batches(&order, 4, false);
        assert_eq!(plain.iter().map(|b| b.len()).collect::<Vec<_>>(), vec![4, 4, 1]);
        let bn = epoch_batches(&order, 4, true);
        assert_eq!(bn.iter().map(|b| b.len()).collect::<Vec<_>>(), vec![4, 5]);
        let short = epoch_batches(&order[..6], 4, true);
        assert_eq!(short.iter().map(|b| b.len()).collect::<Vec<_>>(), vec![4, 2]);
    }

    fn toy(n: usize) -> LabeledDataset {
        // class 0 has its mass on the left half, class 1 on the right
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = i % 2;
            for j in 0..8 {
                let on = (j < 4) == (c == 0);
                x.push(if on { 1.0 - 0.01 * (i % 5) as f32 } else { 0.0 });
            }
            y.push(c as i64);
        }
        LabeledDataset::new(Split::Train, 8, x, y).unwrap()
    }

    #[test]
    fn zero_epochs_returns_the_initial_model() {
        let spec = ArchitectureSpec::new("lin", "lin", "Fx1").unwrap();
        let model = build_model(&spec, 8, 2, 1).unwrap();
        let cfg = TrainingConfig { max_epochs: 0, ..Default::default() };
        let out = train(model.clone(), &toy(10), &toy(4), &cfg).unwrap();
        assert!(out.history.epochs.is_empty());
        assert_eq!(out.history.stop_reason, StopReason::MaxEpochs);
        assert_eq!(out.model.snapshot(), model.snapshot());
    }

    #[test]
    fn one_epoch_on_separable_data_lowers_training_loss() {
        let spec = ArchitectureSpec::new("lin", "lin", "F-D4").unwrap();
        let data = toy(64);
        let model = build_model(&spec, 8, 2, 3).unwrap();
        let before = evaluate(&model, &data).unwrap().loss;
        let cfg = TrainingConfig { max_epochs: 1, batch_size: 8, learning_rate: 1e-2, ..Default::default() };
        let out = train(model, &data, &data, &cfg).unwrap();
        let after = evaluate(&out.model, &data).unwrap().loss;
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn single_class_data_gives_the_constant_loss_schedule() {
        let spec = ArchitectureSpec::new("lin", "lin", "F-D3").unwrap();
        let mut data = toy(12);
        data.labels.iter_mut().for_each(|l| *l = 0);
        let model = build_model(&spec, 8, 1, 0).unwrap();
        let out = train(model, &data, &data, &TrainingConfig::default()).unwrap();
        let h = &out.history;
        assert_eq!(h.stop_reason, StopReason::EarlyStop);
        assert_eq!(h.trained_epochs(), 26);
        assert_eq!(h.best_epoch, Some(0));
        let lrs: Vec<f64> = h.epochs.iter().map(|e| e.lr).collect();
        assert_eq!(lrs[10], 3e-4);
        assert_eq!(lrs[11], 1.5e-4);
        assert_eq!(lrs[21], 7.5e-5);
    }

    #[test]
    fn restored_model_reproduces_best_validation_loss() {
        let spec = ArchitectureSpec::new("small", "small", "C2k3-MP2-F-D4").unwrap();
        let data = toy(32);
        let val = toy(10);
        let cfg = TrainingConfig { max_epochs: 6, batch_size: 8, learning_rate: 5e-2, ..Default::default() };
        let out = train(build_model(&spec, 8, 2, 5).unwrap(), &data, &val, &cfg).unwrap();
        let best = out.history.best().unwrap();
        assert_eq!(evaluate(&out.model, &val).unwrap().loss, best.val_loss);
        let min = out.history.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(best.val_loss, min);
    }

    #[test]
    fn perfect_and_chance_evaluation() {
        let spec = ArchitectureSpec::new("lin", "lin", "Fx1").unwrap();
        let mut model = build_model(&spec, 8, 2, 0).unwrap();
        for p in model.params_mut() {
            p.fill(0.0);
        }
        // all-zero logits: ties resolve to class 0
        let e = evaluate(&model, &toy(10)).unwrap();
        assert_eq!(e.misclassifications, 5);
        assert!(e.predictions.iter().all(|&p| p == 0));
        assert_eq!(e.per_class_errors.get(&1), Some(&5));
        // weights that read the two halves
        let mut w = vec![0.0f32; 16];
        for j in 0..8 {
            w[if j < 4 { j } else { 8 + j }] = 1.0;
        }
        model.params_mut()[0].copy_from_slice(&w);
        let e = evaluate(&model, &toy(10)).unwrap();
        assert_eq!(e.misclassifications, 0);
        assert_eq!(e.accuracy, 1.0);
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let spec = ArchitectureSpec::new("lin", "lin", "Fx1").unwrap();
        let model = build_model(&spec, 8, 1, 0).unwrap();
        assert!(matches!(evaluate(&model, &toy(4)), Err(Error::Validation(_))));
    }
}
