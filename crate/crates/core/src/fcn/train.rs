//! Single-image Adam training with validation-based early stopping.

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::layers::Tensor;
use super::net::{backward, forward_tensor, gradient_tensor, to_logit_map, FcnParams, Widths};
use super::predict::predict_counts;
use crate::data::flip_horizontal;
use crate::error::{Error, Result};
use crate::grid::PointAnnotations;
use crate::loss::{loss_and_gradient, LossBreakdown, LossConfig};
use crate::metrics::{count_mae, fscore, EvalRecord};

/// An image and its point annotations.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: Tensor,
    pub points: PointAnnotations,
}

impl Sample {
    pub fn new(image: Tensor, points: PointAnnotations) -> Result<Self> {
        if (image.height, image.width) != (points.height(), points.width()) {
            return Err(Error::Shape(format!(
                "image is {}x{}, annotations are {}x{}",
                image.height,
                image.width,
                points.height(),
                points.width()
            )));
        }
        Ok(Self { image, points })
    }

    pub fn flipped(&self) -> Self {
        let (image, points) = flip_horizontal(&self.image, &self.points);
        Self { image, points }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub loss: LossConfig,
    pub max_epochs: usize,
    /// Epochs without a better validation MAE before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Train on horizontally mirrored copies as well.
    pub flip: bool,
    pub widths: Widths,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            loss: LossConfig::default(),
            max_epochs: 200,
            patience: 10,
            seed: 0,
            flip: true,
            widths: Widths::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        self.loss.validate()?;
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-image loss terms over the epoch.
    pub train: LossBreakdown,
    pub val_mae: f64,
    pub val_fscore: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation MAE seen.
    pub params: FcnParams,
    pub log: Vec<EpochLog>,
    /// 0 when no epoch beat the initial parameters.
    pub best_epoch: usize,
    pub initial_val_mae: f64,
}

/// Predictions of `params` on `samples` as evaluation records.
pub fn evaluate(params: &FcnParams, samples: &[Sample]) -> Result<Vec<EvalRecord>> {
    samples
        .iter()
        .map(|s| Ok(predict_counts(params, &s.image)?.record(&s.points)))
        .collect()
}

fn scores(params: &FcnParams, samples: &[Sample]) -> Result<(f64, f64)> {
    let records = evaluate(params, samples)?;
    Ok((count_mae(&records)?, fscore(&records)?))
}

/// Forward, loss, backward and one Adam step on a single sample.
pub fn train_step(
    params: &FcnParams,
    state: &mut AdamState,
    sample: &Sample,
    cfg: &TrainConfig,
) -> Result<(FcnParams, LossBreakdown)> {
    let (logits, cache) = forward_tensor(params, &sample.image)?;
    let logit_map = to_logit_map(&logits);
    let (loss, grad, _) = loss_and_gradient(&logit_map, &sample.points, &cfg.loss)?;
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!("non-finite loss {loss:?}")));
    }
    let upstream = gradient_tensor(&grad, logits.height, logits.width, logits.channels);
    let grads = backward(params, &cache, &upstream);
    Ok((adam_step(params, &grads, state, &cfg.adam), loss))
}

/// Trains fresh parameters for `classes` classes (background included).
pub fn train(train_set: &[Sample], val_set: &[Sample], classes: usize, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let channels = train_set.first().ok_or(Error::EmptyDataset("train"))?.image.channels;
    let init = FcnParams::init(channels, classes, cfg.widths, cfg.seed);
    train_from(init, train_set, val_set, cfg, &mut |_| {})
}

/// Trains from `init`, calling `on_epoch` after every epoch.
pub fn train_from(
    init: FcnParams,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset("train"));
    }
    if val_set.is_empty() {
        return Err(Error::EmptyDataset("validation"));
    }
    let mut items: Vec<Sample> = train_set.to_vec();
    if cfg.flip {
        items.extend(train_set.iter().map(Sample::flipped));
    }

    let (initial_val_mae, _) = scores(&init, val_set)?;
    let mut best = (initial_val_mae, 0usize, init.clone());
    let mut params = init;
    let mut state = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut log = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut sum = [0.0; 4];
        for &i in &order {
            let (next, loss) = train_step(&params, &mut state, &items[i], cfg)?;
            params = next;
            for (s, v) in sum.iter_mut().zip([
                loss.image_level,
                loss.point_level,
                loss.split_level,
                loss.false_positive,
            ]) {
                *s += v;
            }
        }
        let n = items.len() as f64;
        let train = LossBreakdown::new(sum[0] / n, sum[1] / n, sum[2] / n, sum[3] / n);
        let (val_mae, val_fscore) = scores(&params, val_set)?;
        let entry = EpochLog {
            epoch,
            train,
            val_mae,
            val_fscore,
        };
        debug!("epoch {epoch}: {entry:?}");
        on_epoch(&entry);
        log.push(entry);

        if val_mae < best.0 {
            best = (val_mae, epoch, params.clone());
        } else if epoch - best.1 >= cfg.patience {
            info!("early stop at epoch {epoch}, best epoch {}", best.1);
            break;
        }
    }
    Ok(TrainOutcome {
        params: best.2,
        log,
        best_epoch: best.1,
        initial_val_mae,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Point;
    use crate::loss::LossTerms;

    fn toy(seed: usize) -> Sample {
        let (h, w) = (16, 16);
        let centers = [(4 + seed % 3, 4), (11, 10 + seed % 4)];
        let mut data = vec![0.0; h * w];
        for (i, v) in data.iter_mut().enumerate() {
            let (r, c) = ((i / w) as f64, (i % w) as f64);
            for &(cr, cc) in &centers {
                if (r - cr as f64).powi(2) + (c - cc as f64).powi(2) <= 4.0 {
                    *v = 1.0;
                }
            }
        }
        let points = centers.iter().map(|&(r, c)| Point::new(r, c, 1)).collect();
        Sample::new(
            Tensor::from_vec(1, h, w, data),
            PointAnnotations::new(h, w, points).unwrap(),
        )
        .unwrap()
    }

    fn cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            adam: AdamConfig {
                learning_rate: 1e-3,
                ..AdamConfig::default()
            },
            max_epochs: epochs,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_return_initial_params() {
        let data = [toy(0)];
        let out = train(&data, &data, 2, &cfg(0)).unwrap();
        assert!(out.log.is_empty());
        assert_eq!(out.params, FcnParams::init(1, 2, Widths::default(), 3));
    }

    #[test]
    fn training_is_deterministic() {
        let data: Vec<Sample> = (0..3).map(toy).collect();
        let a = train(&data, &data[..1], 2, &cfg(2)).unwrap();
        let b = train(&data, &data[..1], 2, &cfg(2)).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn empty_sets_are_rejected() {
        let data = [toy(0)];
        assert!(matches!(train(&[], &data, 2, &cfg(1)), Err(Error::EmptyDataset(_))));
        assert!(matches!(train(&data, &[], 2, &cfg(1)), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn point_loss_decreases_on_one_image() {
        let sample = toy(1);
        let mut c = cfg(1);
        c.loss.terms = LossTerms::IMAGE_POINT;
        let mut params = FcnParams::init(1, 2, Widths::default(), 1);
        let mut state = AdamState::new(&params);
        let mut first = None;
        let mut last = 0.0;
        for _ in 0..30 {
            let (next, loss) = train_step(&params, &mut state, &sample, &c).unwrap();
            params = next;
            first.get_or_insert(loss.total);
            last = loss.total;
        }
        assert!(last < first.unwrap(), "{last} vs {first:?}");
    }
}
