//! Paired LSGAN training: one discriminator update then one generator
//! update per batch, with resumable state.

use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thermsynth_autograd::optim::Adam;
use thermsynth_autograd::{par, BindMode, Graph, ParamStore, Tensor};

use super::discriminator::{discriminator_forward, DiscriminatorConfig};
use super::generator::{generator_forward, translate_batch, GeneratorConfig};
use super::loss::{discriminator_loss, generator_loss, GanLossTerms, FAKE_LABEL, REAL_LABEL};
use crate::checkpoint::Archive;
use crate::data::{load_thermal, load_visible, DatasetManifest, Origin};
use crate::perceptual::FeatureExtractor;
use crate::{Error, Result};

pub const GAN_KIND: &str = "gan";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanHyper {
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    /// Checkpoint hook period in epochs; 0 disables it.
    pub checkpoint_every: usize,
    pub seed: u64,
    pub real_label: f64,
    pub fake_label: f64,
    pub use_perceptual: bool,
}

impl Default for GanHyper {
    fn default() -> Self {
        Self {
            lr_generator: 1e-4,
            lr_discriminator: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            batch_size: 4,
            max_steps: 1000,
            checkpoint_every: 1,
            seed: 0,
            real_label: REAL_LABEL,
            fake_label: FAKE_LABEL,
            use_perceptual: true,
        }
    }
}

impl GanHyper {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Argument("GAN batch_size must be positive".into()));
        }
        if !(self.lr_generator > 0.0 && self.lr_discriminator > 0.0) {
            return Err(Error::Argument("GAN learning rates must be positive".into()));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::Argument("Adam betas must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub terms: GanLossTerms,
    pub disc_loss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValRecord {
    pub epoch: usize,
    pub step: usize,
    pub mae: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanTrainState {
    /// Epoch in progress (or about to start).
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub step: usize,
    /// Batches of the current epoch already consumed.
    pub epoch_batch: usize,
    pub gen_cfg: GeneratorConfig,
    pub disc_cfg: DiscriminatorConfig,
    pub hyper: GanHyper,
    pub generator: ParamStore,
    pub discriminator: ParamStore,
    pub gen_opt: Adam,
    pub disc_opt: Adam,
    pub loss_history: Vec<LossRecord>,
    pub val_history: Vec<ValRecord>,
    /// Digest of the loss network the run was trained with, if any.
    pub phi_digest: Option<String>,
    pub provenance: serde_json::Value,
}

impl GanTrainState {
    /// Fresh state with parameters drawn from `hyper.seed`.
    pub fn new(gen_cfg: GeneratorConfig, disc_cfg: DiscriminatorConfig, hyper: GanHyper) -> Result<Self> {
        gen_cfg.validate()?;
        disc_cfg.validate()?;
        hyper.validate()?;
        if gen_cfg.out_channels != disc_cfg.in_channels {
            return Err(Error::Argument(format!(
                "generator emits {} channels but the discriminator reads {}",
                gen_cfg.out_channels, disc_cfg.in_channels
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        let generator = gen_cfg.init_params(&mut rng)?;
        let discriminator = disc_cfg.init_params(&mut rng)?;
        Ok(Self {
            epoch: 0,
            step: 0,
            epoch_batch: 0,
            gen_opt: Adam::new(hyper.lr_generator, hyper.beta1, hyper.beta2),
            disc_opt: Adam::new(hyper.lr_discriminator, hyper.beta1, hyper.beta2),
            gen_cfg,
            disc_cfg,
            hyper,
            generator,
            discriminator,
            loss_history: Vec::new(),
            val_history: Vec::new(),
            phi_digest: None,
            provenance: serde_json::Value::Null,
        })
    }

    pub fn to_archive(&self) -> Archive {
        let mut a = Archive::new(
            GAN_KIND,
            json!({
                "epoch": self.epoch,
                "step": self.step,
                "epoch_batch": self.epoch_batch,
                "generator_config": self.gen_cfg,
                "discriminator_config": self.disc_cfg,
                "hyper": self.hyper,
                "gen_opt_step": self.gen_opt.step,
                "disc_opt_step": self.disc_opt.step,
                "loss_history": self.loss_history,
                "val_history": self.val_history,
                "phi_digest": self.phi_digest,
                "provenance": self.provenance,
            }),
        );
        a.put_params("gen/", &self.generator);
        a.put_params("disc/", &self.discriminator);
        a.put_map("gen_opt.m/", &self.gen_opt.first_moment);
        a.put_map("gen_opt.v/", &self.gen_opt.second_moment);
        a.put_map("disc_opt.m/", &self.disc_opt.first_moment);
        a.put_map("disc_opt.v/", &self.disc_opt.second_moment);
        a
    }

    pub fn from_archive(a: &Archive) -> Result<Self> {
        a.expect_kind(GAN_KIND)?;
        let hyper: GanHyper = a.meta_field("hyper")?;
        let mut gen_opt = Adam::new(hyper.lr_generator, hyper.beta1, hyper.beta2);
        gen_opt.step = a.meta_field("gen_opt_step")?;
        gen_opt.first_moment = a.take_map("gen_opt.m/");
        gen_opt.second_moment = a.take_map("gen_opt.v/");
        let mut disc_opt = Adam::new(hyper.lr_discriminator, hyper.beta1, hyper.beta2);
        disc_opt.step = a.meta_field("disc_opt_step")?;
        disc_opt.first_moment = a.take_map("disc_opt.m/");
        disc_opt.second_moment = a.take_map("disc_opt.v/");
        let gen_cfg: GeneratorConfig = a.meta_field("generator_config")?;
        gen_cfg.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Self {
            epoch: a.meta_field("epoch")?,
            step: a.meta_field("step")?,
            epoch_batch: a.meta_field("epoch_batch")?,
            gen_cfg,
            disc_cfg: a.meta_field("discriminator_config")?,
            hyper,
            generator: a.take_params("gen/"),
            discriminator: a.take_params("disc/"),
            gen_opt,
            disc_opt,
            loss_history: a.meta_field("loss_history")?,
            val_history: a.meta_field("val_history")?,
            phi_digest: a.meta_field("phi_digest")?,
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

/// Loaded `(visible, thermal)` tensors, each `1 × C × H × W`.
pub struct PairedSet {
    pub visible: Vec<Tensor>,
    pub thermal: Vec<Tensor>,
}

impl PairedSet {
    pub fn load(m: &DatasetManifest) -> Result<Self> {
        let pairs = par::map_slice(&m.frames, |f| -> Result<(Tensor, Tensor)> {
            let v = load_visible(&f.visible_path)?;
            let t = load_thermal(&f.thermal_path)?;
            if (v.height, v.width) != (t.height, t.width) {
                return Err(Error::Validation(format!("frame `{}` is not an aligned pair", f.frame_id)));
            }
            Ok((v.to_tensor(), t.to_tensor()))
        });
        let (visible, thermal) = pairs.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
        Ok(Self { visible, thermal })
    }

    pub fn len(&self) -> usize {
        self.visible.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visible.is_empty()
    }

    fn batch(&self, idx: &[usize]) -> Result<(Tensor, Tensor)> {
        let v: Vec<Tensor> = idx.iter().map(|&i| self.visible[i].clone()).collect();
        let t: Vec<Tensor> = idx.iter().map(|&i| self.thermal[i].clone()).collect();
        Ok((Tensor::stack_batch(&v)?, Tensor::stack_batch(&t)?))
    }
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mix = seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix));
    order
}

/// One D update followed by one G update on a single batch.
fn train_step(
    state: &mut GanTrainState,
    visible: Tensor,
    thermal: Tensor,
    phi: Option<&FeatureExtractor>,
) -> Result<LossRecord> {
    let h = state.hyper.clone();
    let g = Graph::new();
    let gen = state.generator.bind(&g, BindMode::Trainable);
    let real = g.constant(thermal);
    let fake = generator_forward(g.constant(visible), &state.gen_cfg, &gen)?;

    let disc = state.discriminator.bind(&g, BindMode::Trainable);
    let real_scores = discriminator_forward(real, &state.disc_cfg, &disc)?;
    let fake_scores = discriminator_forward(fake.detach(), &state.disc_cfg, &disc)?;
    let d_loss = discriminator_loss(&real_scores, &fake_scores, h.real_label, h.fake_label)?;
    let disc_loss = d_loss.value().item();
    if !disc_loss.is_finite() {
        return Err(Error::Numeric(format!(
            "discriminator loss became {disc_loss} at step {}",
            state.step + 1
        )));
    }
    let mut grads = g.backward(d_loss)?;
    let d_grads = disc.collect_grads(&mut grads);
    state.disc_opt.apply(&mut state.discriminator, &d_grads);

    // The generator plays against the freshly updated discriminator.
    let disc_now = state.discriminator.bind(&g, BindMode::Frozen);
    let scores = discriminator_forward(fake, &state.disc_cfg, &disc_now)?;
    let loss = generator_loss(&scores, real, fake, phi.filter(|_| h.use_perceptual), h.real_label)
        .map_err(|e| match e {
            Error::Numeric(m) => Error::Numeric(format!("{m} at step {}", state.step + 1)),
            other => other,
        })?;
    let terms = loss.terms();
    let mut grads = g.backward(loss.total)?;
    let g_grads = gen.collect_grads(&mut grads);
    state.gen_opt.apply(&mut state.generator, &g_grads);

    state.step += 1;
    Ok(LossRecord {
        step: state.step,
        terms,
        disc_loss,
    })
}

/// Mean absolute error of the current generator over `set`.
pub fn mean_abs_error(state: &GanTrainState, set: &PairedSet) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..set.len() {
        let out = translate_batch(&set.visible[i], &state.gen_cfg, &state.generator)?;
        sum += out.data().iter().zip(set.thermal[i].data()).map(|(a, b)| (a - b).abs()).sum::<f64>();
        count += out.len();
    }
    Ok(sum / count.max(1) as f64)
}

/// Continues training `state` until `hyper.max_steps` steps have been
/// taken. `on_checkpoint` runs at the end of every `checkpoint_every`-th
/// epoch with the state as it stands.
pub fn train_gan_with(
    state: &mut GanTrainState,
    train: &DatasetManifest,
    val: &DatasetManifest,
    phi: Option<&FeatureExtractor>,
    on_checkpoint: &mut dyn FnMut(&GanTrainState) -> Result<()>,
) -> Result<()> {
    if train.is_empty() {
        return Err(Error::Argument(format!("GAN training manifest `{}` is empty", train.name)));
    }
    if let Some(f) = train.frames.iter().find(|f| f.origin != Origin::Real) {
        return Err(Error::Argument(format!(
            "GAN training needs real pairs, but `{}` is synthetic",
            f.frame_id
        )));
    }
    state.hyper.validate()?;
    let phi_before = phi.map(FeatureExtractor::digest);
    if state.hyper.use_perceptual && phi.is_none() {
        return Err(Error::Argument("use_perceptual is set but no loss network was given".into()));
    }
    if let (Some(recorded), Some(now)) = (&state.phi_digest, &phi_before) {
        if recorded != now {
            return Err(Error::Argument("resuming with a different loss network".into()));
        }
    }
    state.phi_digest = phi_before.clone().or(state.phi_digest.take());

    let train_set = PairedSet::load(train)?;
    let val_set = PairedSet::load(val)?;
    let batch = state.hyper.batch_size;
    let batches_per_epoch = train_set.len().div_ceil(batch);

    while state.step < state.hyper.max_steps {
        let order = epoch_order(train_set.len(), state.hyper.seed, state.epoch);
        while state.epoch_batch < batches_per_epoch && state.step < state.hyper.max_steps {
            let start = state.epoch_batch * batch;
            let idx = &order[start..(start + batch).min(order.len())];
            let (v, t) = train_set.batch(idx)?;
            let record = train_step(state, v, t, phi)?;
            state.epoch_batch += 1;
            if record.step % 10 == 0 || record.step == 1 {
                info!(
                    "step {}: total {:.4} (adv {:.4}, mae {:.4}, perc {:.4}), D {:.4}",
                    record.step,
                    record.terms.total,
                    record.terms.adversarial,
                    record.terms.mae,
                    record.terms.perceptual,
                    record.disc_loss
                );
            }
            state.loss_history.push(record);
        }
        if state.epoch_batch < batches_per_epoch {
            // Stopped mid-epoch; resuming picks up from here.
            break;
        }
        if !val_set.is_empty() {
            let mae = mean_abs_error(state, &val_set)?;
            state.val_history.push(ValRecord {
                epoch: state.epoch,
                step: state.step,
                mae,
            });
        }
        state.epoch += 1;
        state.epoch_batch = 0;
        let every = state.hyper.checkpoint_every;
        if every > 0 && state.epoch % every == 0 {
            on_checkpoint(state)?;
        }
    }
    if let (Some(before), Some(phi)) = (&phi_before, phi) {
        if &phi.digest() != before {
            return Err(Error::Numeric("the loss network changed during training".into()));
        }
    }
    Ok(())
}

/// Trains a fresh GAN on `train`.
pub fn train_gan(
    train: &DatasetManifest,
    val: &DatasetManifest,
    gen_cfg: &GeneratorConfig,
    disc_cfg: &DiscriminatorConfig,
    hyper: &GanHyper,
    phi: Option<&FeatureExtractor>,
) -> Result<GanTrainState> {
    let mut state = GanTrainState::new(gen_cfg.clone(), disc_cfg.clone(), hyper.clone())?;
    train_gan_with(&mut state, train, val, phi, &mut |_| Ok(()))?;
    Ok(state)
}
