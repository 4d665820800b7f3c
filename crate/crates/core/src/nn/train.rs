//! Balanced-batch training loop and evaluation.

use crate::dataset::balanced_batches;
use crate::error::{Error, Result};
use crate::metrics::{confusion, report, ConfusionMatrix, MetricsReport};
use crate::scalar::Real;

use super::adam::{Adam, AdamConfig};
use super::model::{cross_entropy, Mode, Model};

/// In-memory image set: flattened inputs plus class indices.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    /// One flattened channel-major image per sample.
    pub images: Vec<Vec<T>>,
    pub labels: Vec<usize>,
    /// Per-image shape `(channels, height, width)`.
    pub shape: (usize, usize, usize),
}

impl<T: Real> Dataset<T> {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    fn gather(&self, indices: &[usize]) -> Vec<T> {
        let per = self.shape.0 * self.shape.1 * self.shape.2;
        let mut out = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            out.extend_from_slice(&self.images[i]);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

/// Knobs of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub optimizer: AdamConfig,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Stop once validation accuracy reaches this value, when set.
    pub stop_at_val_accuracy: Option<f64>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self { optimizer: AdamConfig::default(), batch: 6, epochs: 10, seed: 0, stop_at_val_accuracy: None }
    }
}

/// Train with balanced batches, evaluating on `val` after every epoch.
///
/// Deterministic given the seed: batch schedules derive from
/// `(seed, epoch)`, dropout masks from `(seed, epoch, batch)`.
pub fn train<T: Real>(
    model: &mut Model<T>,
    train_set: &Dataset<T>,
    val_set: &Dataset<T>,
    settings: &TrainSettings,
) -> Result<Vec<EpochLog>> {
    let classes = model.spec.classes;
    let mut adam = Adam::new(model);
    let mut logs = Vec::with_capacity(settings.epochs);

    for epoch in 0..settings.epochs {
        let batches = balanced_batches(&train_set.labels, classes, settings.batch, settings.seed, epoch as u64)?;
        let mut loss_sum = 0.0f64;
        for (bi, batch) in batches.iter().enumerate() {
            let input = train_set.gather(batch);
            let targets: Vec<usize> = batch.iter().map(|&i| train_set.labels[i]).collect();
            let seed = settings
                .seed
                .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                .wrapping_add((epoch as u64) << 32)
                .wrapping_add(bi as u64);
            let (_, cache) = model.forward(&input, batch.len(), Mode::Train { seed })?;
            let loss = model.backward(&cache, &targets)?;
            adam.step(model, &settings.optimizer)?;
            loss_sum += loss.as_f64();
        }
        let train_loss = loss_sum / batches.len().max(1) as f64;

        let (val_loss, val_accuracy) = validation_stats(model, val_set)?;
        logs.push(EpochLog { epoch, train_loss, val_loss, val_accuracy });

        if let Some(target) = settings.stop_at_val_accuracy {
            if val_accuracy >= target {
                break;
            }
        }
    }
    Ok(logs)
}

fn validation_stats<T: Real>(model: &mut Model<T>, set: &Dataset<T>) -> Result<(f64, f64)> {
    if set.is_empty() {
        return Ok((f64::NAN, 0.0));
    }
    let classes = model.spec.classes;
    let mut loss_sum = 0.0f64;
    let mut correct = 0usize;
    let indices: Vec<usize> = (0..set.len()).collect();
    for chunk in indices.chunks(16) {
        let input = set.gather(chunk);
        let targets: Vec<usize> = chunk.iter().map(|&i| set.labels[i]).collect();
        let (probs, _) = model.forward(&input, chunk.len(), Mode::Infer)?;
        loss_sum += cross_entropy(&probs, &targets, classes).as_f64() * chunk.len() as f64;
        for (r, &t) in targets.iter().enumerate() {
            if argmax(&probs[r * classes..(r + 1) * classes]) == t {
                correct += 1;
            }
        }
    }
    Ok((loss_sum / set.len() as f64, correct as f64 / set.len() as f64))
}

fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0usize;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Inference-mode predictions for a whole set.
pub fn predict<T: Real>(model: &mut Model<T>, set: &Dataset<T>) -> Result<Vec<usize>> {
    let classes = model.spec.classes;
    let mut preds = Vec::with_capacity(set.len());
    let indices: Vec<usize> = (0..set.len()).collect();
    for chunk in indices.chunks(16) {
        let input = set.gather(chunk);
        let (probs, _) = model.forward(&input, chunk.len(), Mode::Infer)?;
        for r in 0..chunk.len() {
            preds.push(argmax(&probs[r * classes..(r + 1) * classes]));
        }
    }
    Ok(preds)
}

/// Confusion matrix and metrics report over a set.
pub fn evaluate<T: Real>(
    model: &mut Model<T>,
    set: &Dataset<T>,
    class_names: &[String],
    healthy_index: usize,
) -> Result<(ConfusionMatrix, MetricsReport)> {
    if set.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let preds = predict(model, set)?;
    let cm = confusion(&set.labels, &preds, model.spec.classes, class_names)?;
    let rep = report(&cm, healthy_index)?;
    Ok((cm, rep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, ModelSpec};

    fn toy_spec(classes: usize) -> ModelSpec {
        ModelSpec {
            layers: vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { out: 16 },
                LayerSpec::Relu,
                LayerSpec::Dense { out: classes },
                LayerSpec::Softmax,
            ],
            input: (4, 4, 1),
            classes,
        }
    }

    /// Linearly separable toy images: class c lights up pixel block c.
    fn toy_dataset(classes: usize, per_class: usize, jitter_seed: u64) -> Dataset<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(jitter_seed);
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for c in 0..classes {
            for _ in 0..per_class {
                let mut img = vec![0.0f64; 16];
                for (i, v) in img.iter_mut().enumerate() {
                    *v = rng.gen_range(0.0..0.1) + if i % classes == c { 0.9 } else { 0.0 };
                }
                images.push(img);
                labels.push(c);
            }
        }
        Dataset { images, labels, shape: (1, 4, 4) }
    }

    #[test]
    fn zero_epochs_leaves_empty_log() {
        let mut model: Model<f64> = Model::new(toy_spec(3), 0).unwrap();
        let data = toy_dataset(3, 4, 1);
        let settings = TrainSettings { epochs: 0, ..Default::default() };
        let logs = train(&mut model, &data, &data, &settings).unwrap();
        assert!(logs.is_empty());
    }

    #[test]
    fn initial_loss_is_near_uniform_entropy() {
        let mut model: Model<f64> = Model::new(toy_spec(3), 3).unwrap();
        let data = toy_dataset(3, 6, 2);
        let settings = TrainSettings {
            epochs: 1,
            optimizer: AdamConfig { lr: 0.0, ..Default::default() },
            ..Default::default()
        };
        let logs = train(&mut model, &data, &data, &settings).unwrap();
        let ln3 = 3.0f64.ln();
        assert!((logs[0].train_loss - ln3).abs() <= 0.1, "loss {}", logs[0].train_loss);
    }

    #[test]
    fn separable_toy_problem_trains_to_high_accuracy() {
        let mut model: Model<f64> = Model::new(toy_spec(3), 5).unwrap();
        let train_set = toy_dataset(3, 10, 7);
        let val_set = toy_dataset(3, 4, 8);
        let settings = TrainSettings {
            epochs: 30,
            batch: 6,
            seed: 1,
            optimizer: AdamConfig { lr: 3e-3, ..Default::default() },
            stop_at_val_accuracy: Some(0.95),
        };
        let logs = train(&mut model, &train_set, &val_set, &settings).unwrap();
        let best = logs.iter().map(|l| l.val_accuracy).fold(0.0f64, f64::max);
        assert!(best >= 0.95, "best val accuracy {best}");
    }

    #[test]
    fn training_is_seed_deterministic() {
        let data = toy_dataset(3, 6, 4);
        let settings = TrainSettings {
            epochs: 2,
            optimizer: AdamConfig { lr: 1e-3, ..Default::default() },
            ..Default::default()
        };
        let mut a: Model<f64> = Model::new(toy_spec(3), 9).unwrap();
        let logs_a = train(&mut a, &data, &data, &settings).unwrap();
        let mut b: Model<f64> = Model::new(toy_spec(3), 9).unwrap();
        let logs_b = train(&mut b, &data, &data, &settings).unwrap();
        assert_eq!(logs_a, logs_b);
        assert_eq!(a, b);
    }

    #[test]
    fn constant_predictor_scores_chance_on_balanced_set() {
        let mut model: Model<f64> = Model::new(toy_spec(4), 2).unwrap();
        // bias the head so class 0 always wins
        let n_params = model.layers[3].params[1].data.len();
        model.layers[3].params[1].data = vec![0.0; n_params];
        model.layers[3].params[1].data[0] = 100.0;
        let data = toy_dataset(4, 5, 3);
        let names: Vec<String> = (0..4).map(|i| format!("c{i}")).collect();
        let (cm, rep) = evaluate(&mut model, &data, &names, 0).unwrap();
        assert!((rep.accuracy - 0.25).abs() < 1e-12);
        assert_eq!(cm.total(), 20);

        // report agrees with a brute-force recount
        let preds = predict(&mut model, &data).unwrap();
        let correct = preds.iter().zip(&data.labels).filter(|(p, t)| p == t).count();
        assert!((rep.accuracy - correct as f64 / 20.0).abs() < 1e-15);
    }
}
