use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::preprocess::Frame;
use crate::rng::{derive_seed, rng_from_seed};

use super::network::{
    backward_sample, dropout_mask, forward_sample, loss, predict_proba, Gradients, InputShape,
    ModelParams,
};
use super::optim::{adam_step, lr_schedule, AdamState};

/// Samples per gradient chunk. Chunks may run on any thread; their partial
/// sums are always added in chunk order, so results do not depend on the pool size.
const CHUNK: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// Channel-major pixels, centered so mid-gray is zero.
    pub input: Vec<f64>,
    pub label: Label,
}

impl Sample {
    pub fn from_frame(frame: &Frame, label: Label) -> Self {
        Sample {
            input: frame_to_input(frame),
            label,
        }
    }
}

pub fn input_shape_of(frame: &Frame) -> Result<InputShape> {
    InputShape::new(frame.height(), frame.width(), frame.channels())
}

/// Interleaved `[0, 1]` pixels to channel-major values in `[-0.5, 0.5]`.
pub fn frame_to_input(frame: &Frame) -> Vec<f64> {
    let (w, h, c) = (frame.width(), frame.height(), frame.channels());
    let mut out = vec![0.0; w * h * c];
    for (i, &p) in frame.pixels().iter().enumerate() {
        let ch = i % c;
        let pix = i / c;
        out[ch * w * h + pix] = p - 0.5;
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleUnit {
    /// `t` counts completed epochs.
    #[default]
    Epoch,
    /// `t` counts optimizer steps.
    Step,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    /// Exponent rate of the schedule; negative values decay.
    pub k: f64,
    pub batch_size: usize,
    pub dropout_p: f64,
    pub max_epochs: usize,
    /// Epochs without validation-loss improvement tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
    pub schedule_unit: ScheduleUnit,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 0.001,
            k: -0.01,
            batch_size: 12,
            dropout_p: 0.5,
            max_epochs: 20,
            patience: 5,
            seed: 0,
            schedule_unit: ScheduleUnit::Epoch,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0) || !self.lr0.is_finite() {
            return Err(Error::Param(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if !self.k.is_finite() {
            return Err(Error::Param(format!("k must be finite, got {}", self.k)));
        }
        if self.batch_size == 0 {
            return Err(Error::Param("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Param(format!(
                "dropout_p must lie in [0, 1), got {}",
                self.dropout_p
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::Param("max_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    /// Not serialized, so reruns write identical artifacts.
    #[serde(skip)]
    pub wall_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
    pub stopping_epoch: usize,
    pub best_epoch: usize,
}

impl TrainTrace {
    /// CSV with columns `epoch,lr,train_loss,val_loss,train_acc,val_acc`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,lr,train_loss,val_loss,train_acc,val_acc\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.epoch, e.lr, e.train_loss, e.val_loss, e.train_acc, e.val_acc
            ));
        }
        out
    }

    /// Everything but wall-clock time.
    pub fn same_curve(&self, other: &TrainTrace) -> bool {
        self.to_csv() == other.to_csv()
            && self.stopping_epoch == other.stopping_epoch
            && self.best_epoch == other.best_epoch
    }
}

pub fn accuracy_of(probs: &[[f64; 2]], samples: &[Sample]) -> f64 {
    let correct = probs
        .iter()
        .zip(samples)
        .filter(|(p, s)| predicted_class(p) == s.label.class_index())
        .count();
    correct as f64 / samples.len() as f64
}

/// Argmax; ties go to class 0 (`Other`).
pub fn predicted_class(p: &[f64; 2]) -> usize {
    usize::from(p[1] > p[0])
}

/// Validation loss and accuracy in inference mode.
pub fn evaluate(params: &ModelParams, samples: &[Sample]) -> Result<(f64, f64)> {
    let inputs: Vec<Vec<f64>> = samples.iter().map(|s| s.input.clone()).collect();
    let probs = predict_proba(params, &inputs)?;
    let classes: Vec<usize> = samples.iter().map(|s| s.label.class_index()).collect();
    Ok((loss(&probs, &classes), accuracy_of(&probs, samples)))
}

struct BatchResult {
    grads: Gradients,
    loss_sum: f64,
    correct: usize,
}

fn add_into(acc: &mut Gradients, other: &Gradients) {
    for (a, b) in acc.iter_mut().zip(other) {
        for (x, y) in a.data.iter_mut().zip(&b.data) {
            *x += y;
        }
    }
}

fn batch_gradients(params: &ModelParams, batch: &[(&Sample, Option<Vec<f64>>)]) -> BatchResult {
    let scale = 1.0 / batch.len() as f64;
    let partials: Vec<BatchResult> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grads = params.zero_grads();
            let mut loss_sum = 0.0;
            let mut correct = 0;
            for (sample, mask) in chunk {
                let cache = forward_sample(params, &sample.input, mask.clone());
                let class = sample.label.class_index();
                loss_sum += loss(&[cache_probs(&cache)], &[class]);
                correct += usize::from(predicted_class(&cache_probs(&cache)) == class);
                backward_sample(params, &cache, class, scale, &mut grads);
            }
            BatchResult {
                grads,
                loss_sum,
                correct,
            }
        })
        .collect();
    let mut parts = partials.into_iter();
    let mut total = parts.next().expect("batch is non-empty");
    for p in parts {
        add_into(&mut total.grads, &p.grads);
        total.loss_sum += p.loss_sum;
        total.correct += p.correct;
    }
    total
}

fn cache_probs(c: &super::network::SampleCache) -> [f64; 2] {
    c.probs()
}

/// Mini-batch Adam with early stopping on validation loss.
///
/// Returns the weights of the epoch with the lowest validation loss.
pub fn train(
    input: InputShape,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainTrace)> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Data(format!(
            "training needs non-empty splits, got {} train and {} validation samples",
            train_set.len(),
            val_set.len()
        )));
    }
    let want = input.len();
    if let Some(s) = train_set.iter().chain(val_set).find(|s| s.input.len() != want) {
        return Err(Error::Shape(format!(
            "sample has {} values, model input is {}x{}x{} = {want}",
            s.input.len(),
            input.height,
            input.width,
            input.channels
        )));
    }

    let mut params = ModelParams::init(input, cfg.dropout_p, derive_seed(cfg.seed, "init", 0))?;
    let mut adam = AdamState::new(&params);
    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut since_best = 0;
    let mut step: u64 = 0;

    for epoch in 0..cfg.max_epochs {
        let started = Instant::now();
        let epoch_lr = lr_schedule(cfg.lr0, cfg.k, epoch as u64);
        let mut rng = rng_from_seed(derive_seed(cfg.seed, "epoch", epoch as u64));
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut correct = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&Sample, Option<Vec<f64>>)> = chunk
                .iter()
                .map(|&i| {
                    let mask = (cfg.dropout_p > 0.0).then(|| dropout_mask(cfg.dropout_p, &mut rng));
                    (&train_set[i], mask)
                })
                .collect();
            let result = batch_gradients(&params, &batch);
            let lr = match cfg.schedule_unit {
                ScheduleUnit::Epoch => epoch_lr,
                ScheduleUnit::Step => lr_schedule(cfg.lr0, cfg.k, step),
            };
            adam_step(&mut params, &result.grads, &mut adam, lr)?;
            step += 1;
            loss_sum += result.loss_sum;
            correct += result.correct;
        }

        let (val_loss, val_acc) = evaluate(&params, val_set)?;
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!("validation loss is {val_loss} at epoch {epoch}")));
        }
        epochs.push(EpochRecord {
            epoch,
            lr: epoch_lr,
            train_loss: loss_sum / train_set.len() as f64,
            val_loss,
            train_acc: correct as f64 / train_set.len() as f64,
            val_acc,
            wall_secs: started.elapsed().as_secs_f64(),
        });

        let improved = best.as_ref().is_none_or(|(b, _, _)| val_loss < *b);
        if improved {
            best = Some((val_loss, epoch, params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > cfg.patience {
                break;
            }
        }
    }

    let (_, best_epoch, best_params) = best.expect("at least one epoch ran");
    let stopping_epoch = epochs.len() - 1;
    Ok((
        best_params,
        TrainTrace {
            epochs,
            stopping_epoch,
            best_epoch,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn blobs(n: usize, seed: u64) -> (InputShape, Vec<Sample>) {
        let shape = InputShape::new(8, 8, 1).unwrap();
        let mut rng = rng_from_seed(seed);
        let samples = (0..n)
            .map(|i| {
                let label = if i % 2 == 0 { Label::Ruminating } else { Label::Other };
                let center = if label == Label::Ruminating { 0.3 } else { -0.3 };
                let input = (0..64)
                    .map(|_| {
                        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                        let u2: f64 = rng.gen();
                        center + 0.1 * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
                    })
                    .collect();
                Sample { input, label }
            })
            .collect();
        (shape, samples)
    }

    #[test]
    fn separable_blobs_are_learned() {
        let (shape, train_set) = blobs(48, 1);
        let (_, val_set) = blobs(24, 2);
        let cfg = TrainConfig {
            max_epochs: 10,
            lr0: 0.01,
            patience: 10,
            ..TrainConfig::default()
        };
        let (params, trace) = train(shape, &train_set, &val_set, &cfg).unwrap();
        let (_, acc) = evaluate(&params, &val_set).unwrap();
        assert_eq!(acc, 1.0, "{}", trace.to_csv());
        assert_eq!(trace.epochs[trace.best_epoch].val_acc, 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let (shape, train_set) = blobs(20, 3);
        let (_, val_set) = blobs(10, 4);
        let cfg = TrainConfig {
            max_epochs: 3,
            seed: 9,
            ..TrainConfig::default()
        };
        let (a, ta) = train(shape, &train_set, &val_set, &cfg).unwrap();
        let (b, tb) = train(shape, &train_set, &val_set, &cfg).unwrap();
        assert_eq!(a.tensors, b.tensors);
        assert!(ta.same_curve(&tb));
        let other = TrainConfig { seed: 10, ..cfg };
        let (c, _) = train(shape, &train_set, &val_set, &other).unwrap();
        assert_ne!(a.tensors, c.tensors);
    }

    #[test]
    fn recorded_lr_follows_schedule() {
        let (shape, train_set) = blobs(12, 5);
        let (_, val_set) = blobs(6, 6);
        let cfg = TrainConfig {
            lr0: 0.001,
            k: -0.1,
            max_epochs: 11,
            patience: 100,
            ..TrainConfig::default()
        };
        let (_, trace) = train(shape, &train_set, &val_set, &cfg).unwrap();
        assert_eq!(trace.epochs.len(), 11);
        for e in &trace.epochs {
            let want = 0.001 * (-0.1 * e.epoch as f64).exp();
            assert!((e.lr - want).abs() <= 1e-15 * want);
        }
        assert!((trace.epochs[10].lr - 3.6788e-4).abs() < 1e-8);
    }

    #[test]
    fn patience_zero_stops_at_first_regression() {
        let (shape, train_set) = blobs(12, 7);
        let (_, val_set) = blobs(6, 8);
        let cfg = TrainConfig {
            lr0: 0.5,
            patience: 0,
            max_epochs: 20,
            ..TrainConfig::default()
        };
        let (_, trace) = train(shape, &train_set, &val_set, &cfg).unwrap();
        let losses: Vec<f64> = trace.epochs.iter().map(|e| e.val_loss).collect();
        let stop = trace.stopping_epoch;
        if stop + 1 < cfg.max_epochs {
            let best_before = losses[..stop].iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(losses[stop] >= best_before);
            assert!(losses[..stop].windows(2).all(|w| w[1] < w[0]));
        }
        assert!(trace.best_epoch <= stop);
    }

    #[test]
    fn csv_has_header_and_one_row_per_epoch() {
        let (shape, train_set) = blobs(8, 9);
        let cfg = TrainConfig {
            max_epochs: 2,
            patience: 5,
            ..TrainConfig::default()
        };
        let (_, trace) = train(shape, &train_set, &train_set, &cfg).unwrap();
        let csv = trace.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "epoch,lr,train_loss,val_loss,train_acc,val_acc");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0,0.001,"));
    }

    #[test]
    fn bad_configs_and_inputs_are_rejected() {
        let (shape, s) = blobs(4, 1);
        for cfg in [
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
            TrainConfig { dropout_p: 1.0, ..TrainConfig::default() },
            TrainConfig { lr0: 0.0, ..TrainConfig::default() },
            TrainConfig { max_epochs: 0, ..TrainConfig::default() },
        ] {
            assert!(matches!(train(shape, &s, &s, &cfg), Err(Error::Param(_))));
        }
        assert!(matches!(train(shape, &s, &[], &TrainConfig::default()), Err(Error::Data(_))));
        let bad = vec![Sample { input: vec![0.0; 3], label: Label::Other }];
        assert!(matches!(train(shape, &bad, &s, &TrainConfig::default()), Err(Error::Shape(_))));
    }

    #[test]
    fn frames_become_channel_major_centered_inputs() {
        let f = Frame::new(2, 1, 3, vec![0.0, 0.5, 1.0, 0.25, 0.75, 0.5]).unwrap();
        assert_eq!(frame_to_input(&f), vec![-0.5, -0.25, 0.0, 0.25, 0.5, 0.0]);
    }
}
