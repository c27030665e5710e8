use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thermsynth_autograd::optim::{Adam, Sgd};
use thermsynth_autograd::{par, BindMode, Graph, ParamStore, Tensor};

use super::config::DetectorConfig;
use super::decode::{decode_detections, Detection};
use super::loss::detection_loss;
use super::model::{detector_forward, predict};
use super::schedule::{FineTuneSchedule, OptimizerKind};
use crate::checkpoint::Archive;
use crate::data::{load_thermal, load_visible, split_validation, BoundingBox, DatasetManifest, FrameRecord};
use crate::mixture::MixtureSpec;
use crate::{Error, Result};

pub const DETECTOR_KIND: &str = "detector";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub steps: usize,
    /// Mean batch loss over the epoch's updates.
    pub train_loss: f64,
    /// Loss on the epoch's held-out split after the updates.
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FineTuneHistory {
    /// Loss over the whole training manifest before the first update.
    pub initial_train_loss: f64,
    /// Loss over the whole training manifest after the last update.
    pub final_train_loss: f64,
    pub epochs: Vec<EpochRecord>,
}

impl FineTuneHistory {
    pub fn learning_rates(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.learning_rate).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectorCheckpoint {
    pub config: DetectorConfig,
    pub params: ParamStore,
    pub history: FineTuneHistory,
    /// Free-form provenance such as the seed and regime.
    pub provenance: serde_json::Value,
}

impl DetectorCheckpoint {
    pub fn new(config: DetectorConfig, params: ParamStore) -> Self {
        Self {
            config,
            params,
            history: FineTuneHistory::default(),
            provenance: serde_json::Value::Null,
        }
    }

    pub fn to_archive(&self) -> Archive {
        let mut a = Archive::new(
            DETECTOR_KIND,
            json!({
                "config": self.config,
                "history": self.history,
                "provenance": self.provenance,
            }),
        );
        a.put_params("params/", &self.params);
        a
    }

    pub fn from_archive(a: &Archive) -> Result<Self> {
        a.expect_kind(DETECTOR_KIND)?;
        let config: DetectorConfig = a.meta_field("config")?;
        config.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Self {
            config,
            params: a.take_params("params/"),
            history: a.meta_field("history")?,
            provenance: a.meta.get("provenance").cloned().unwrap_or(serde_json::Value::Null),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(&Archive::load(path)?)
    }
}

/// One training sample: the input image as `1 × C × H × W` plus its boxes.
#[derive(Clone, Debug)]
pub struct Sample {
    pub frame_id: String,
    pub input: Tensor,
    pub boxes: Vec<BoundingBox>,
}

fn load_sample(f: &FrameRecord, cfg: &DetectorConfig) -> Result<Sample> {
    let img = if cfg.in_channels == 1 {
        load_thermal(&f.thermal_path)?
    } else {
        load_visible(&f.visible_path)?
    };
    if (img.height, img.width) != (cfg.input_height, cfg.input_width) {
        return Err(Error::Shape(format!(
            "frame `{}` is {}x{} but the detector expects {}x{}",
            f.frame_id, img.height, img.width, cfg.input_height, cfg.input_width
        )));
    }
    Ok(Sample {
        frame_id: f.frame_id.clone(),
        input: img.to_tensor(),
        boxes: f.boxes.clone(),
    })
}

/// Decodes every frame of `m` into detector inputs (in parallel).
pub fn load_samples(m: &DatasetManifest, cfg: &DetectorConfig) -> Result<Vec<Sample>> {
    par::map_slice(&m.frames, |f| load_sample(f, cfg)).into_iter().collect()
}

fn batch_of(samples: &[&Sample]) -> Result<(Tensor, Vec<Vec<BoundingBox>>)> {
    let inputs: Vec<Tensor> = samples.iter().map(|s| s.input.clone()).collect();
    Ok((Tensor::stack_batch(&inputs)?, samples.iter().map(|s| s.boxes.clone()).collect()))
}

/// Mean per-image loss over `samples`, evaluated without updates.
pub fn dataset_loss(samples: &[&Sample], cfg: &DetectorConfig, params: &ParamStore, batch_size: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Argument("cannot evaluate the loss of an empty set".into()));
    }
    let mut total = 0.0;
    for chunk in samples.chunks(batch_size.max(1)) {
        let (x, boxes) = batch_of(chunk)?;
        let g = Graph::new();
        let b = params.bind(&g, BindMode::Frozen);
        let out = detector_forward(g.constant(x), cfg, &b)?;
        total += detection_loss(&out, &boxes, cfg)?.total.value().item() * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

enum Optimizer {
    Sgd(Sgd),
    Adam(Adam),
}

impl Optimizer {
    fn new(kind: OptimizerKind) -> Self {
        match kind {
            OptimizerKind::Sgd { momentum, weight_decay } => Optimizer::Sgd(Sgd::new(0.0, momentum, weight_decay)),
            OptimizerKind::Adam { beta1, beta2 } => Optimizer::Adam(Adam::new(0.0, beta1, beta2)),
        }
    }

    fn step(&mut self, lr: f64, params: &mut ParamStore, grads: &std::collections::BTreeMap<String, Tensor>) {
        match self {
            Optimizer::Sgd(o) => {
                o.lr = lr;
                o.apply(params, grads);
            }
            Optimizer::Adam(o) => {
                o.lr = lr;
                o.apply(params, grads);
            }
        }
    }
}

/// Fine-tunes `init` on `train` under `schedule`. The starting learning
/// rate follows the real share of `mixture`; every epoch re-draws the
/// validation split with seed `seed + epoch`.
pub fn fine_tune(
    init: &ParamStore,
    cfg: &DetectorConfig,
    train: &DatasetManifest,
    schedule: &FineTuneSchedule,
    mixture: &MixtureSpec,
    seed: u64,
) -> Result<DetectorCheckpoint> {
    cfg.validate()?;
    schedule.validate()?;
    if train.is_empty() {
        return Err(Error::Argument(format!("training manifest `{}` is empty", train.name)));
    }
    if schedule.input_size != (cfg.input_height, cfg.input_width) {
        return Err(Error::Argument(format!(
            "schedule input size {:?} differs from detector input {}x{}",
            schedule.input_size, cfg.input_height, cfg.input_width
        )));
    }
    let fresh = super::model::init_params(cfg, &mut ChaCha8Rng::seed_from_u64(0))?;
    for (name, t) in fresh.iter() {
        match init.get(name) {
            Some(p) if p.shape() == t.shape() => {}
            Some(p) => {
                return Err(Error::Shape(format!(
                    "initial parameter `{name}` has shape {:?}, expected {:?}",
                    p.shape(),
                    t.shape()
                )))
            }
            None => return Err(Error::Shape(format!("initial parameters lack `{name}`"))),
        }
    }

    let samples = load_samples(train, cfg)?;
    let index: std::collections::HashMap<&str, &Sample> = samples.iter().map(|s| (s.frame_id.as_str(), s)).collect();
    let all: Vec<&Sample> = samples.iter().collect();
    let mut params = init.clone();
    let mut history = FineTuneHistory {
        initial_train_loss: dataset_loss(&all, cfg, &params, schedule.batch_size)?,
        ..Default::default()
    };
    let mut opt = Optimizer::new(schedule.optimizer);
    let fraction = mixture.effective_real_fraction();

    for epoch in 0..schedule.max_epochs {
        let lr = schedule.rate_for_fraction(epoch, fraction)?;
        let (train_part, val_part) = split_validation(train, schedule.validation_fraction, seed.wrapping_add(epoch as u64))?;
        let mut order: Vec<&Sample> = train_part.frames.iter().map(|f| index[f.frame_id.as_str()]).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        let mut loss_sum = 0.0;
        let mut steps = 0;
        for (step, chunk) in order.chunks(schedule.batch_size).enumerate() {
            let (x, boxes) = batch_of(chunk)?;
            let g = Graph::new();
            let b = params.bind(&g, BindMode::Trainable);
            let out = detector_forward(g.constant(x), cfg, &b)?;
            let loss = detection_loss(&out, &boxes, cfg)?.total;
            let value = loss.value().item();
            if !value.is_finite() {
                return Err(Error::Numeric(format!(
                    "detector loss became {value} at epoch {epoch}, step {step}"
                )));
            }
            let mut grads = g.backward(loss)?;
            let grads = b.collect_grads(&mut grads);
            opt.step(lr, &mut params, &grads);
            loss_sum += value;
            steps += 1;
        }
        let val: Vec<&Sample> = val_part.frames.iter().map(|f| index[f.frame_id.as_str()]).collect();
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(dataset_loss(&val, cfg, &params, schedule.batch_size)?)
        };
        let record = EpochRecord {
            epoch,
            learning_rate: lr,
            steps,
            train_loss: loss_sum / steps.max(1) as f64,
            val_loss,
        };
        info!(
            "epoch {epoch}: lr {lr:e}, train loss {:.4}, val loss {}",
            record.train_loss,
            val_loss.map_or("n/a".to_string(), |v| format!("{v:.4}"))
        );
        history.epochs.push(record);
    }
    history.final_train_loss = dataset_loss(&all, cfg, &params, schedule.batch_size)?;
    if !history.final_train_loss.is_finite() {
        return Err(Error::Numeric("final detector loss is not finite".into()));
    }
    Ok(DetectorCheckpoint {
        config: cfg.clone(),
        params,
        history,
        provenance: json!({ "seed": seed, "regime": mixture.label() }),
    })
}

/// Runs the detector on every frame of `m` and decodes its boxes.
pub fn detect_manifest(
    ckpt: &DetectorCheckpoint,
    m: &DatasetManifest,
    conf_threshold: f64,
    nms_iou: f64,
) -> Result<Vec<(String, Vec<Detection>)>> {
    let samples = load_samples(m, &ckpt.config)?;
    let per_frame = par::map_slice(&samples, |s| -> Result<(String, Vec<Detection>)> {
        let raw = predict(&s.input, &ckpt.config, &ckpt.params)?;
        Ok((s.frame_id.clone(), decode_detections(&raw, 0, &ckpt.config, conf_threshold, nms_iou)?))
    });
    per_frame.into_iter().collect()
}
