use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{AdamState, DEFAULT_LEARNING_RATE};
use super::{adam_step, backward_into, ModelError, ModelParams, Weights, INPUTS};
use crate::features::{FeatureRecord, NormStats};

/// One training example: a window of normalized inputs and the normalized
/// price that followed.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub window: Vec<[f64; INPUTS]>,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub seq_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16384,
            epochs: 20,
            learning_rate: DEFAULT_LEARNING_RATE,
            seed: 0,
            seq_len: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(ModelError::Config("epochs must be at least 1".into()));
        }
        if self.seq_len == 0 {
            return Err(ModelError::Config("seq_len must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean squared error over each epoch, measured before each batch update.
    pub epoch_losses: Vec<f64>,
    pub samples: usize,
}

/// Windows of `seq_len` consecutive records from one session; the target is
/// the price of the last record in each window.
pub fn samples_from_records(
    records: &[FeatureRecord],
    norm: &NormStats,
    seq_len: usize,
) -> Vec<Sample> {
    if seq_len == 0 || records.len() < seq_len {
        return Vec::new();
    }
    let inputs: Vec<[f64; INPUTS]> = records
        .iter()
        .map(|r| norm.normalize_inputs(&r.inputs()))
        .collect();
    (seq_len - 1..records.len())
        .map(|i| Sample {
            window: inputs[i + 1 - seq_len..=i].to_vec(),
            target: norm.normalize_price(records[i].trade_price),
        })
        .collect()
}

pub fn train(
    samples: &[Sample],
    norm: NormStats,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainReport), ModelError> {
    train_with_progress(samples, norm, cfg, |_, _| {})
}

/// Shuffled mini-batch Adam on mean squared error. `progress` receives the
/// epoch number (from 1) and its mean loss.
pub fn train_with_progress<F: FnMut(usize, f64)>(
    samples: &[Sample],
    norm: NormStats,
    cfg: &TrainConfig,
    mut progress: F,
) -> Result<(ModelParams, TrainReport), ModelError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if let Some(bad) = samples.iter().find(|s| s.window.len() != cfg.seq_len) {
        return Err(ModelError::WindowLength {
            expected: cfg.seq_len,
            got: bad.window.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut weights = Weights::init(&mut rng);
    let mut adam = AdamState::for_weights(&weights, cfg.learning_rate);
    let mut grads = Weights::zeros();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut batch: Vec<(&[[f64; INPUTS]], f64)> = Vec::with_capacity(cfg.batch_size);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sse = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(
                chunk
                    .iter()
                    .map(|&i| (samples[i].window.as_slice(), samples[i].target)),
            );
            let mse = backward_into(&weights, &batch, &mut grads);
            sse += mse * chunk.len() as f64;
            adam_step(&mut adam, &mut weights, &grads);
        }
        let loss = sse / samples.len() as f64;
        epoch_losses.push(loss);
        progress(epoch, loss);
    }

    Ok((
        ModelParams::new(weights, norm, cfg.seq_len),
        TrainReport {
            epoch_losses,
            samples: samples.len(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::forward;
    use rand::Rng;

    fn synthetic(n: usize, seed: u64, f: impl Fn(&[f64; INPUTS]) -> f64) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let mut x = [0.0; INPUTS];
                for v in &mut x {
                    *v = rng.gen_range(0.0..1.0);
                }
                Sample {
                    target: f(&x),
                    window: vec![x],
                }
            })
            .collect()
    }

    fn cfg(batch_size: usize, epochs: usize, learning_rate: f64) -> TrainConfig {
        TrainConfig {
            batch_size,
            epochs,
            learning_rate,
            seed: 17,
            seq_len: 1,
        }
    }

    #[test]
    fn empty_dataset_is_an_error() {
        assert_eq!(
            train(&[], NormStats::default(), &TrainConfig::default()).unwrap_err(),
            ModelError::EmptyDataset
        );
    }

    #[test]
    fn rejects_zero_batch() {
        let data = synthetic(4, 1, |_| 0.5);
        assert!(matches!(
            train(&data, NormStats::default(), &cfg(0, 1, 1e-3)),
            Err(ModelError::Config(_))
        ));
    }

    #[test]
    fn learns_a_constant() {
        let data: Vec<Sample> = (0..256)
            .map(|_| Sample {
                window: vec![[0.3; INPUTS]],
                target: 0.6,
            })
            .collect();
        let (model, report) = train(&data, NormStats::default(), &cfg(16, 20, 3e-3)).unwrap();
        assert_eq!(report.epoch_losses.len(), 20);
        assert!(
            report.epoch_losses[19] <= 1e-6,
            "final loss {}",
            report.epoch_losses[19]
        );
        let y = forward(&model, &data[0].window).unwrap();
        assert!((y - 0.6).abs() < 1e-3);
    }

    #[test]
    fn constant_target_ignores_varying_inputs() {
        let data = synthetic(4096, 2, |_| 0.6);
        let (_, report) = train(&data, NormStats::default(), &cfg(32, 20, 1e-2)).unwrap();
        assert!(
            report.epoch_losses[19] <= 1e-4,
            "final loss {}",
            report.epoch_losses[19]
        );
    }

    #[test]
    fn loss_falls_on_a_linear_target() {
        let data = synthetic(2000, 3, |x| 0.2 + 0.3 * x[2] + 0.3 * x[7]);
        let (_, report) = train(&data, NormStats::default(), &cfg(32, 10, 3e-3)).unwrap();
        let first = report.epoch_losses[0];
        let last = *report.epoch_losses.last().unwrap();
        assert!(last <= 0.5 * first, "{first} -> {last}");
    }

    #[test]
    fn same_seed_same_weights() {
        let data = synthetic(300, 4, |x| x[0]);
        let a = train(&data, NormStats::default(), &cfg(32, 3, 1e-3)).unwrap();
        let b = train(&data, NormStats::default(), &cfg(32, 3, 1e-3)).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let mut other = cfg(32, 3, 1e-3);
        other.seed = 18;
        let c = train(&data, NormStats::default(), &other).unwrap();
        assert_ne!(a.0.weights, c.0.weights);
    }

    #[test]
    fn windows_follow_record_order() {
        let mut norm = NormStats::default();
        let records: Vec<FeatureRecord> = (0..5)
            .map(|i| {
                let mut a = [i as f64; crate::features::NUM_FIELDS];
                a[crate::features::TARGET_FIELD] = 100.0 + i as f64;
                FeatureRecord::from_array(a)
            })
            .collect();
        for r in &records {
            norm.observe(&r.to_array());
        }
        let samples = samples_from_records(&records, &norm, 3);
        assert_eq!(samples.len(), 3);
        assert_eq!(samples[0].window[0][0], 0.0);
        assert_eq!(samples[0].window[2][0], 0.5);
        assert_eq!(samples[2].target, 1.0);
        assert!(samples_from_records(&records[..2], &norm, 3).is_empty());
    }
}
