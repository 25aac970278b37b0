use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datakit::{augment_with, sample_rng, split, AugmentConfig, Dataset, Split};
use crate::error::{Error, Result};
use crate::models::{preprocess, InputKind, ModelSpec, ModelWeights};
use crate::tensor_nn::{AdamConfig, AdamState, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub val_fraction: f64,
    /// Chance of training on the horizontally mirrored sample (angular label negated).
    pub mirror_prob: f64,
    /// Brightness and pixel jitter on raw frames; re-preprocesses every epoch when set.
    pub photometric: Option<AugmentConfig>,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            epochs: 30,
            batch: 64,
            lr: 1e-3,
            seed: 0,
            val_fraction: 0.2,
            mirror_prob: 0.5,
            photometric: None,
        }
    }
}

/// MAE and MSE over normalized `(v, w)` labels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InternalMetrics {
    pub mae: f64,
    pub mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Running average over the epoch's (augmented) batches.
    pub train: InternalMetrics,
    pub val: InternalMetrics,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub model: String,
    pub hyper: TrainHyper,
    pub split: Split,
    pub train_samples: usize,
    pub val_samples: usize,
    /// Metrics of the initial weights on the clean train and validation sets.
    pub initial_train: InternalMetrics,
    pub initial_val: InternalMetrics,
    pub epochs: Vec<EpochRecord>,
    /// Where the final weights were written, if they were.
    pub weights_path: Option<String>,
}

pub struct TrainOutcome {
    pub history: TrainHistory,
    pub weights: ModelWeights,
}

/// Preprocessed frames of a dataset plus the window rule of the model's input kind.
pub struct PreparedData<'a> {
    dataset: &'a Dataset,
    kind: InputKind,
    frames: Vec<Tensor>,
    mirrored: Vec<Tensor>,
}

impl<'a> PreparedData<'a> {
    pub fn new(spec: &ModelSpec, dataset: &'a Dataset) -> Result<Self> {
        let frames = prepare_frames(spec, dataset, None, 0)?;
        let mirrored = frames.par_iter().map(flip_columns).collect();
        Ok(PreparedData {
            dataset,
            kind: spec.input_kind,
            frames,
            mirrored,
        })
    }

    fn input(&self, frames: &[Tensor], i: usize) -> Result<Tensor> {
        match self.kind {
            InputKind::SingleFrame => Ok(frames[i].clone()),
            InputKind::SequenceOf3 => {
                let idx = self.dataset.sequence_indices(i);
                Tensor::stack(&idx.map(|j| frames[j].clone()))
            }
        }
    }

    /// Network input and normalized target of sample `i`.
    pub fn example(&self, i: usize, mirrored: bool) -> Result<(Tensor, Tensor)> {
        let (v, w) = self.dataset.normalized_label(i);
        if mirrored {
            Ok((
                self.input(&self.mirrored, i)?,
                Tensor::from_vec(vec![v, -w]),
            ))
        } else {
            Ok((self.input(&self.frames, i)?, Tensor::from_vec(vec![v, w])))
        }
    }
}

fn prepare_frames(
    spec: &ModelSpec,
    ds: &Dataset,
    photometric: Option<(&AugmentConfig, u64)>,
    epoch: u64,
) -> Result<Vec<Tensor>> {
    ds.samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let pre = spec.preprocess_spec(s.frame.horizon_row);
            match photometric {
                None => preprocess(&s.frame, &pre),
                Some((cfg, seed)) => {
                    let mut rng = sample_rng(seed ^ (epoch << 32), i as u64);
                    preprocess(&augment_with(s, cfg, &mut rng).frame, &pre)
                }
            }
        })
        .collect()
}

fn flip_columns(t: &Tensor) -> Tensor {
    let (h, w, c) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    let d = t.data();
    Tensor::from_fn(&[h, w, c], |k| {
        let (y, x, ch) = (k / (w * c), (k / c) % w, k % c);
        d[(y * w + (w - 1 - x)) * c + ch]
    })
}

/// MAE/MSE over the given samples; never simulates.
pub fn evaluate_internal(
    spec: &ModelSpec,
    weights: &ModelWeights,
    data: &PreparedData,
    indices: &[usize],
) -> Result<InternalMetrics> {
    if indices.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation split".into()));
    }
    let net = spec.network();
    let errs: Vec<(f64, f64)> = indices
        .par_iter()
        .map(|&i| {
            let (x, t) = data.example(i, false)?;
            let y = net.forward(&weights.params, &x)?;
            Ok(y.data()
                .iter()
                .zip(t.data())
                .fold((0.0, 0.0), |(a, s), (p, q)| {
                    (a + (p - q).abs(), s + (p - q) * (p - q))
                }))
        })
        .collect::<Result<_>>()?;
    let n = (2 * indices.len()) as f64;
    let (a, s) = errs
        .iter()
        .fold((0.0, 0.0), |(a, s), (x, y)| (a + x, s + y));
    Ok(InternalMetrics {
        mae: a / n,
        mse: s / n,
    })
}

/// Adam on the MSE of normalized labels over the training episodes.
pub fn train(spec: &ModelSpec, dataset: &Dataset, hyper: &TrainHyper) -> Result<TrainOutcome> {
    let sp = split(&dataset.manifest()?, hyper.val_fraction, hyper.seed)?;
    train_on_split(spec, dataset, hyper, sp)
}

pub fn train_on_split(
    spec: &ModelSpec,
    dataset: &Dataset,
    hyper: &TrainHyper,
    sp: Split,
) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::Dataset("cannot train on an empty dataset".into()));
    }
    if hyper.batch == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let train_idx = dataset.episode_samples(&sp.train);
    let val_idx = dataset.episode_samples(&sp.val);
    if train_idx.is_empty() {
        return Err(Error::Dataset("training split is empty".into()));
    }
    let mut data = PreparedData::new(spec, dataset)?;
    let mut weights = spec.init_weights(hyper.seed);
    let eval_val = |w: &ModelWeights, d: &PreparedData| {
        if val_idx.is_empty() {
            Ok(InternalMetrics {
                mae: f64::NAN,
                mse: f64::NAN,
            })
        } else {
            evaluate_internal(spec, w, d, &val_idx)
        }
    };
    let initial_train = evaluate_internal(spec, &weights, &data, &train_idx)?;
    let initial_val = eval_val(&weights, &data)?;

    let mut adam = AdamState::new(
        &weights.params,
        AdamConfig {
            lr: hyper.lr,
            ..AdamConfig::default()
        },
    );
    let net = spec.network();
    let mut epochs = Vec::with_capacity(hyper.epochs);
    let mut order = train_idx.clone();
    for epoch in 1..=hyper.epochs {
        let started = Instant::now();
        if let Some(cfg) = &hyper.photometric {
            let frames = prepare_frames(spec, dataset, Some((cfg, hyper.seed)), epoch as u64)?;
            data.mirrored = frames.par_iter().map(flip_columns).collect();
            data.frames = frames;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let (mut abs_sum, mut sq_sum, mut count) = (0.0, 0.0, 0usize);
        for (b, batch) in order.chunks(hyper.batch).enumerate() {
            let examples: Vec<(Tensor, Tensor)> = batch
                .iter()
                .map(|&i| {
                    let flip = hyper.mirror_prob > 0.0
                        && sample_rng(
                            hyper.seed ^ 0x5eed_0000_0000,
                            (epoch * dataset.len() + i) as u64,
                        )
                        .random::<f64>()
                            < hyper.mirror_prob;
                    data.example(i, flip)
                })
                .collect::<Result<_>>()?;
            let (xs, ts): (Vec<Tensor>, Vec<Tensor>) = examples.into_iter().unzip();
            let res = net.loss_and_grads(&weights.params, &xs, &ts)?;
            if !res.loss.is_finite() || !res.grads.tensors().iter().all(Tensor::is_finite) {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            for (y, t) in res.predictions.iter().zip(&ts) {
                for (p, q) in y.data().iter().zip(t.data()) {
                    abs_sum += (p - q).abs();
                    sq_sum += (p - q) * (p - q);
                }
                count += 2;
            }
            adam.step(&mut weights.params, &res.grads)?;
        }
        let train_m = InternalMetrics {
            mae: abs_sum / count as f64,
            mse: sq_sum / count as f64,
        };
        let val_m = eval_val(&weights, &data)?;
        epochs.push(EpochRecord {
            epoch,
            train: train_m,
            val: val_m,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    let history = TrainHistory {
        model: spec.id(),
        hyper: hyper.clone(),
        train_samples: train_idx.len(),
        val_samples: val_idx.len(),
        split: sp,
        initial_train,
        initial_val,
        epochs,
        weights_path: None,
    };
    Ok(TrainOutcome { history, weights })
}
