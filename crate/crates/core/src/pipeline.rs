//! End-to-end experiment commands over one output directory:
//!
//! ```text
//! <out>/phi/detector.ckpt                 loss network (when trained here)
//! <out>/gan/state.ckpt, loss.csv, val.csv
//! <out>/synthetic/manifest.tsv, images/
//! <out>/mixtures/<regime>.tsv
//! <out>/detector/pretrain-visible.ckpt
//! <out>/detector/<regime>/detector.ckpt, mixture.tsv, schedule.tsv
//! <out>/eval/<regime>/detections.tsv, report.txt, curve_<subset>.tsv, overlays/
//! <out>/ablation.tsv
//! ```
//!
//! Every artifact written here carries the config digest and seed.

use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::checkpoint::write_atomic;
use crate::config::Config;
use crate::data::{self, filter_annotations, load_manifest, sample_frames, split_validation, DatasetManifest};
use crate::detector::{
    self, adapt_input_channels, detect_manifest, fine_tune, DetectorCheckpoint, DetectorConfig, FineTuneSchedule,
    OptimizerKind,
};
use crate::eval::{self, EvalReport, EvalSettings};
use crate::gan::{train_gan_with, DiscriminatorConfig, GanHyper, GanTrainState, GeneratorConfig};
use crate::mixture::{build_mixture, origin_counts, synthesize_dataset, table_regimes, MixtureSpec, Sampling};
use crate::perceptual::FeatureExtractor;
use crate::{Error, Result};

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(".lock");
        let mut f = OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                Error::Validation(format!(
                    "output directory {} is locked by another run (remove {} if stale)",
                    dir.display(),
                    path.display()
                ))
            } else {
                Error::io(&path, e)
            }
        })?;
        writeln!(f, "{}", std::process::id()).map_err(|e| Error::io(&path, e))?;
        Ok(Self { path })
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// A parsed configuration bound to an output directory.
#[derive(Debug)]
pub struct Experiment {
    pub config: Config,
    pub out: PathBuf,
    pub seed: u64,
    digest: String,
    _lock: OutputLock,
}

fn mkdir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

impl Experiment {
    /// Locks `out`, records the effective seed in the config and computes
    /// its digest.
    pub fn open(mut config: Config, out: &Path, seed: Option<u64>) -> Result<Self> {
        if let Some(s) = seed {
            config.set("seed", s.to_string());
        }
        let seed = config.parse_or("seed", 0u64)?;
        let lock = OutputLock::acquire(out)?;
        let digest = config.digest();
        Ok(Self {
            config,
            out: out.to_path_buf(),
            seed,
            digest,
            _lock: lock,
        })
    }

    pub fn config_digest(&self) -> &str {
        &self.digest
    }

    fn provenance(&self) -> serde_json::Value {
        json!({ "config_digest": self.digest, "seed": self.seed })
    }

    fn header(&self) -> Vec<String> {
        vec![format!("config_digest: {}", self.digest), format!("seed: {}", self.seed)]
    }

    pub fn gan_dir(&self) -> PathBuf {
        self.out.join("gan")
    }

    pub fn gan_checkpoint(&self) -> PathBuf {
        self.gan_dir().join("state.ckpt")
    }

    pub fn synthetic_manifest_path(&self) -> PathBuf {
        self.out.join("synthetic").join("manifest.tsv")
    }

    pub fn mixture_path(&self, spec: &MixtureSpec) -> PathBuf {
        self.out.join("mixtures").join(format!("{}.tsv", spec.label()))
    }

    pub fn detector_dir(&self, spec: &MixtureSpec) -> PathBuf {
        self.out.join("detector").join(spec.label())
    }

    pub fn detector_checkpoint(&self, spec: &MixtureSpec) -> PathBuf {
        self.detector_dir(spec).join("detector.ckpt")
    }

    pub fn eval_dir(&self, spec: &MixtureSpec) -> PathBuf {
        self.out.join("eval").join(spec.label())
    }

    // ---- configuration sections -------------------------------------

    pub fn generator_config(&self) -> Result<GeneratorConfig> {
        let c = &self.config;
        let d = GeneratorConfig::default();
        let g = GeneratorConfig {
            base_channels: c.parse_or("gan.base_channels", d.base_channels)?,
            num_rrdb: c.parse_or("gan.num_rrdb", d.num_rrdb)?,
            dense_blocks_per_rrdb: c.parse_or("gan.dense_blocks_per_rrdb", d.dense_blocks_per_rrdb)?,
            convs_per_dense_block: c.parse_or("gan.convs_per_dense_block", d.convs_per_dense_block)?,
            growth_rate: c.parse_or("gan.growth_rate", d.growth_rate)?,
            residual_scale: c.parse_or("gan.residual_scale", d.residual_scale)?,
            downsample_factor: c.parse_or("gan.downsample_factor", d.downsample_factor)?,
            in_channels: 3,
            out_channels: 1,
        };
        g.validate().map_err(|e| Error::config("gan.*", e.to_string()))?;
        Ok(g)
    }

    pub fn discriminator_config(&self) -> Result<DiscriminatorConfig> {
        let c = &self.config;
        let d = DiscriminatorConfig::default();
        let cfg = DiscriminatorConfig {
            num_layers: c.parse_or("disc.num_layers", d.num_layers)?,
            kernel_size: c.parse_or("disc.kernel_size", d.kernel_size)?,
            stride: c.parse_or("disc.stride", d.stride)?,
            base_features: c.parse_or("disc.base_features", d.base_features)?,
            num_scales: c.parse_or("disc.num_scales", d.num_scales)?,
            in_channels: 1,
        };
        cfg.validate().map_err(|e| Error::config("disc.*", e.to_string()))?;
        Ok(cfg)
    }

    pub fn gan_hyper(&self) -> Result<GanHyper> {
        let c = &self.config;
        let d = GanHyper::default();
        let lr = c.parse_or("gan.lr", d.lr_generator)?;
        Ok(GanHyper {
            lr_generator: lr,
            lr_discriminator: c.parse_or("gan.lr_discriminator", lr)?,
            beta1: c.parse_or("gan.beta1", d.beta1)?,
            beta2: c.parse_or("gan.beta2", d.beta2)?,
            batch_size: c.parse_or("gan.batch_size", d.batch_size)?,
            max_steps: c.parse_or("gan.max_steps", d.max_steps)?,
            checkpoint_every: c.parse_or("gan.checkpoint_every", d.checkpoint_every)?,
            seed: self.seed,
            real_label: d.real_label,
            fake_label: d.fake_label,
            use_perceptual: c.bool_or("gan.use_perceptual", d.use_perceptual)?,
        })
    }

    pub fn schedule(&self, input: (usize, usize)) -> Result<FineTuneSchedule> {
        let c = &self.config;
        let d = FineTuneSchedule::default();
        let optimizer = match c.get("schedule.optimizer").unwrap_or("sgd") {
            "sgd" => OptimizerKind::Sgd {
                momentum: c.parse_or("schedule.momentum", 0.9)?,
                weight_decay: c.parse_or("schedule.weight_decay", 5e-4)?,
            },
            "adam" => OptimizerKind::Adam {
                beta1: c.parse_or("schedule.beta1", 0.9)?,
                beta2: c.parse_or("schedule.beta2", 0.999)?,
            },
            other => return Err(Error::config("schedule.optimizer", format!("`{other}` is not sgd or adam"))),
        };
        let s = FineTuneSchedule {
            batch_size: c.parse_or("schedule.batch_size", d.batch_size)?,
            input_size: input,
            init_lr_high: c.parse_or("schedule.lr_high", d.init_lr_high)?,
            init_lr_low: c.parse_or("schedule.lr_low", d.init_lr_low)?,
            real_fraction_threshold: c.parse_or("schedule.real_fraction_threshold", d.real_fraction_threshold)?,
            decay_factor: c.parse_or("schedule.decay_factor", d.decay_factor)?,
            decay_every_epochs: c.parse_or("schedule.decay_every", d.decay_every_epochs)?,
            max_epochs: c.parse_or("schedule.max_epochs", d.max_epochs)?,
            validation_fraction: c.parse_or("schedule.validation_fraction", d.validation_fraction)?,
            optimizer,
        };
        s.validate().map_err(|e| Error::config("schedule.*", e.to_string()))?;
        Ok(s)
    }

    /// Constant-rate Adam schedule for the from-scratch stages (visible
    /// pre-adaptation and the loss network).
    fn scratch_schedule(&self, prefix: &str, input: (usize, usize)) -> Result<FineTuneSchedule> {
        let c = &self.config;
        let epochs: usize = c.parse_or(&format!("{prefix}.epochs"), 30)?;
        let lr: f64 = c.parse_or(&format!("{prefix}.lr"), 2e-3)?;
        let s = FineTuneSchedule {
            batch_size: c.parse_or(&format!("{prefix}.batch_size"), 4)?,
            input_size: input,
            init_lr_high: lr,
            init_lr_low: lr,
            real_fraction_threshold: 0.0,
            decay_factor: 1.0,
            decay_every_epochs: epochs.max(1),
            max_epochs: epochs,
            validation_fraction: c.parse_or("schedule.validation_fraction", 0.1)?,
            optimizer: OptimizerKind::Adam {
                beta1: 0.9,
                beta2: 0.999,
            },
        };
        s.validate().map_err(|e| Error::config(format!("{prefix}.*"), e.to_string()))?;
        Ok(s)
    }

    pub fn eval_settings(&self) -> Result<EvalSettings> {
        let c = &self.config;
        let d = EvalSettings::default();
        Ok(EvalSettings {
            iou_threshold: c.parse_or("eval.iou_threshold", d.iou_threshold)?,
            min_height: c.parse_or("eval.min_height", d.min_height)?,
            drop_occluded: c.bool_or("eval.drop_occluded", d.drop_occluded)?,
            fppi_min: c.parse_or("eval.fppi_min", d.fppi_min)?,
            fppi_max: c.parse_or("eval.fppi_max", d.fppi_max)?,
            num_points: c.parse_or("eval.num_points", d.num_points)?,
        })
    }

    pub fn mixture_spec(&self) -> Result<MixtureSpec> {
        let label = self.config.get("mixture.regime").unwrap_or("mixed-80-20");
        let mut spec =
            MixtureSpec::from_label(label, self.seed).map_err(|e| Error::config("mixture.regime", e.to_string()))?;
        spec.sampling = match self.config.get("mixture.sampling").unwrap_or("paired") {
            "paired" => Sampling::Paired,
            "independent" => Sampling::Independent,
            other => return Err(Error::config("mixture.sampling", format!("`{other}` is not paired or independent"))),
        };
        Ok(spec)
    }

    // ---- data ---------------------------------------------------------

    /// Training manifest after frame sampling and annotation filtering.
    pub fn train_manifest(&self) -> Result<DatasetManifest> {
        let path = self.config.existing_path("data.train_manifest")?;
        self.prepare(load_manifest(&path)?)
    }

    pub fn test_manifest(&self) -> Result<DatasetManifest> {
        let path = self.config.existing_path("data.test_manifest")?;
        load_manifest(&path)
    }

    fn prepare(&self, m: DatasetManifest) -> Result<DatasetManifest> {
        let c = &self.config;
        let stride = c.parse_or("data.sample_stride", 1u64)?;
        let min_h = c.parse_or("data.min_height", 0.0)?;
        let drop_occ = c.bool_or("data.drop_occluded", true)?;
        let m = sample_frames(&m, stride).map_err(|e| Error::config("data.sample_stride", e.to_string()))?;
        filter_annotations(&m, min_h, drop_occ).map_err(|e| Error::config("data.min_height", e.to_string()))
    }

    pub fn detector_config(&self, train: &DatasetManifest, in_channels: usize) -> Result<DetectorConfig> {
        let c = &self.config;
        let d = DetectorConfig::default();
        let per_scale: usize = c.parse_or("detector.anchors_per_scale", 3)?;
        let cfg = DetectorConfig {
            in_channels,
            stem_width: c.parse_or("detector.stem_width", d.stem_width)?,
            stage_widths: c.list_or("detector.stage_widths", &d.stage_widths)?,
            backbone_depth: c.parse_or("detector.backbone_depth", d.backbone_depth)?,
            neck_width: c.parse_or("detector.neck_width", d.neck_width)?,
            anchors: d.anchors.clone(),
            num_classes: 1,
            input_height: train.image_height,
            input_width: train.image_width,
        };
        let sizes: Vec<(f64, f64)> = train.frames.iter().flat_map(|f| f.boxes.iter().map(|b| (b.w, b.h))).collect();
        let cfg = cfg.with_kmeans_anchors(&sizes, per_scale.max(1), self.seed);
        cfg.validate().map_err(|e| Error::config("detector.*", e.to_string()))?;
        Ok(cfg)
    }

    // ---- stages ---------------------------------------------------------

    /// Reuses a checkpoint at `path` made under the same config digest,
    /// otherwise runs `make` and saves its result there.
    fn cached_detector(
        &self,
        path: &Path,
        make: impl FnOnce() -> Result<DetectorCheckpoint>,
    ) -> Result<DetectorCheckpoint> {
        if path.exists() {
            let ck = DetectorCheckpoint::load(path)?;
            if ck.provenance.get("config_digest").and_then(|v| v.as_str()) == Some(self.digest.as_str()) {
                info!("reusing {}", path.display());
                return Ok(ck);
            }
        }
        let mut ck = make()?;
        if let serde_json::Value::Object(m) = &mut ck.provenance {
            m.insert("config_digest".into(), json!(self.digest));
            m.insert("seed".into(), json!(self.seed));
        }
        mkdir(path.parent().expect("file path"))?;
        ck.save(path)?;
        Ok(ck)
    }

    /// The frozen loss network: loaded from `phi.checkpoint` or trained on
    /// real thermal training frames.
    pub fn loss_network(&self) -> Result<FeatureExtractor> {
        let tap = self.config.get("phi.tap");
        if let Some(path) = self.config.path("phi.checkpoint")? {
            let ck = DetectorCheckpoint::load(&path).map_err(|e| Error::config("phi.checkpoint", e.to_string()))?;
            return FeatureExtractor::from_checkpoint(&ck, tap);
        }
        let train = self.train_manifest()?;
        let ck = self.cached_detector(&self.out.join("phi").join("detector.ckpt"), || {
            let cfg = self.detector_config(&train, 1)?;
            let schedule = self.scratch_schedule("phi", (cfg.input_height, cfg.input_width))?;
            info!("training the loss network for {} epochs", schedule.max_epochs);
            let init = detector::init_params(&cfg, &mut ChaCha8Rng::seed_from_u64(self.seed ^ 0xF1))?;
            fine_tune(&init, &cfg, &train, &schedule, &MixtureSpec::real(self.seed), self.seed)
        })?;
        FeatureExtractor::from_checkpoint(&ck, tap)
    }

    pub fn cmd_train_gan(&self) -> Result<GanTrainState> {
        let train = self.train_manifest()?;
        let frac = self.config.parse_or("gan.validation_fraction", 0.1)?;
        let (gan_train, gan_val) = if train.len() >= 2 {
            split_validation(&train, frac, self.seed).map_err(|e| Error::config("gan.validation_fraction", e.to_string()))?
        } else {
            (train.clone(), DatasetManifest { frames: vec![], ..train.clone() })
        };
        let hyper = self.gan_hyper()?;
        let phi = if hyper.use_perceptual { Some(self.loss_network()?) } else { None };
        let mut state = GanTrainState::new(self.generator_config()?, self.discriminator_config()?, hyper)?;
        state.provenance = self.provenance();
        let dir = self.gan_dir();
        mkdir(&dir)?;
        let ckpt = self.gan_checkpoint();
        train_gan_with(&mut state, &gan_train, &gan_val, phi.as_ref(), &mut |s| s.save(&ckpt))?;
        state.save(&ckpt)?;
        self.write_gan_logs(&state)?;
        Ok(state)
    }

    fn write_gan_logs(&self, state: &GanTrainState) -> Result<()> {
        let mut csv = String::from("step,adversarial,mae,perceptual,total,disc_loss\n");
        for r in &state.loss_history {
            let t = &r.terms;
            writeln!(csv, "{},{},{},{},{},{}", r.step, t.adversarial, t.mae, t.perceptual, t.total, r.disc_loss)
                .expect("string write");
        }
        write_atomic(&self.gan_dir().join("loss.csv"), csv.as_bytes())?;
        let mut val = String::from("epoch,step,mae\n");
        for r in &state.val_history {
            writeln!(val, "{},{},{}", r.epoch, r.step, r.mae).expect("string write");
        }
        write_atomic(&self.gan_dir().join("val.csv"), val.as_bytes())
    }

    pub fn cmd_synthesize(&self) -> Result<DatasetManifest> {
        let ckpt = match self.config.path("synthesize.checkpoint")? {
            Some(p) => p,
            None => self.gan_checkpoint(),
        };
        let state = GanTrainState::load(&ckpt)?;
        let source = self.train_manifest()?;
        let dir = self.out.join("synthetic");
        let m = synthesize_dataset(&state.gen_cfg, &state.generator, &source, &dir.join("images"))?;
        let mut header = self.header();
        header.push(format!("generator: {}", crate::checkpoint::file_digest(&ckpt)?));
        data::write_manifest(&m, &self.synthetic_manifest_path(), &header)?;
        Ok(m)
    }

    fn synthetic_manifest(&self) -> Result<DatasetManifest> {
        let path = self.synthetic_manifest_path();
        if !path.exists() {
            return Err(Error::Validation(format!(
                "{} does not exist; run `synthesize` first",
                path.display()
            )));
        }
        load_manifest(&path)
    }

    pub fn cmd_build_mixture(&self, spec: &MixtureSpec) -> Result<DatasetManifest> {
        let real = self.train_manifest()?;
        let m = match spec.kind {
            crate::mixture::MixtureKind::Real => real,
            _ => build_mixture(&real, &self.synthetic_manifest()?, spec)?,
        };
        let (r, s) = origin_counts(&m);
        let mut header = self.header();
        header.push(format!("regime: {} real={r} synthetic={s}", spec.label()));
        let path = self.mixture_path(spec);
        mkdir(path.parent().expect("file path"))?;
        data::write_manifest(&m, &path, &header)?;
        Ok(m)
    }

    /// Detector adapted on visible frames, used as the starting point of
    /// every thermal regime.
    pub fn visible_pretrained(&self) -> Result<DetectorCheckpoint> {
        let train = self.train_manifest()?;
        self.cached_detector(&self.out.join("detector").join("pretrain-visible.ckpt"), || {
            let cfg = self.detector_config(&train, 3)?;
            let schedule = self.scratch_schedule("pretrain", (cfg.input_height, cfg.input_width))?;
            info!("visible pre-adaptation for {} epochs", schedule.max_epochs);
            let init = detector::init_params(&cfg, &mut ChaCha8Rng::seed_from_u64(self.seed))?;
            fine_tune(&init, &cfg, &train, &schedule, &MixtureSpec::real(self.seed), self.seed)
        })
    }

    pub fn cmd_train_detector(&self, spec: &MixtureSpec) -> Result<DetectorCheckpoint> {
        let mixture = self.cmd_build_mixture(spec)?;
        let base = self.visible_pretrained()?;
        let mut cfg = base.config.clone();
        let mut params = base.params.clone();
        adapt_input_channels(&mut params, &mut cfg, 1)?;
        let schedule = self.schedule((cfg.input_height, cfg.input_width))?;
        info!("fine-tuning regime {} on {} frames", spec.label(), mixture.len());
        let mut ck = fine_tune(&params, &cfg, &mixture, &schedule, spec, self.seed)?;
        ck.provenance = json!({
            "config_digest": self.digest,
            "seed": self.seed,
            "regime": spec.label(),
            "mixture": spec,
        });
        let dir = self.detector_dir(spec);
        mkdir(&dir)?;
        ck.save(&dir.join("detector.ckpt"))?;
        let mut header = self.header();
        header.push(format!("regime: {}", spec.label()));
        data::write_manifest(&mixture, &dir.join("mixture.tsv"), &header)?;
        let mut log = String::from("epoch\tlearning_rate\ttrain_loss\tval_loss\n");
        for e in &ck.history.epochs {
            let val = e.val_loss.map_or("nan".to_string(), |v| v.to_string());
            writeln!(log, "{}\t{}\t{}\t{val}", e.epoch, e.learning_rate, e.train_loss).expect("string write");
        }
        write_atomic(&dir.join("schedule.tsv"), log.as_bytes())?;
        Ok(ck)
    }

    pub fn cmd_evaluate(&self, spec: &MixtureSpec) -> Result<EvalReport> {
        let ckpt_path = match self.config.path("evaluate.checkpoint")? {
            Some(p) => p,
            None => self.detector_checkpoint(spec),
        };
        let ck = DetectorCheckpoint::load(&ckpt_path)?;
        let test = self.test_manifest()?;
        let conf = self.config.parse_or("eval.conf_threshold", 0.01)?;
        let nms = self.config.parse_or("eval.nms_iou", 0.45)?;
        let per_frame = detect_manifest(&ck, &test, conf, nms)?;
        let dets: Vec<(String, detector::Detection)> = per_frame
            .into_iter()
            .flat_map(|(id, ds)| ds.into_iter().map(move |d| (id.clone(), d)))
            .collect();
        let dir = self.eval_dir(spec);
        mkdir(&dir)?;
        let mut header = self.header();
        header.push(format!("detector: {}", crate::checkpoint::file_digest(&ckpt_path)?));
        eval::write_detections(&dir.join("detections.tsv"), &dets, &header)?;
        let settings = self.eval_settings()?;
        let report = eval::evaluate(&dets, &test, &settings)?;
        write_atomic(&dir.join("report.txt"), eval::report_to_string(&report, &header).as_bytes())?;
        for s in report.subsets() {
            eval::write_curve(&dir.join(format!("curve_{}.tsv", s.name)), &s.curve)?;
        }
        if self.config.bool_or("eval.overlays", false)? {
            let odir = dir.join("overlays");
            mkdir(&odir)?;
            for (frame, (fe, m)) in test.frames.iter().zip(eval::match_manifest(&dets, &test, &settings)) {
                let thermal = data::load_thermal(&frame.thermal_path)?;
                let img = eval::draw_overlay(&thermal, &fe, &m);
                let name: String = frame
                    .frame_id
                    .chars()
                    .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
                    .collect();
                data::save_png8(&img, &odir.join(format!("{name}.png")))?;
            }
        }
        info!("{}: lamr all {:.4}", spec.label(), report.lamr_all());
        Ok(report)
    }

    /// Regimes for the ablation table (all twelve unless restricted by
    /// `ablation.regimes`).
    pub fn ablation_regimes(&self) -> Result<Vec<MixtureSpec>> {
        match self.config.get("ablation.regimes") {
            None => Ok(table_regimes(self.seed)),
            Some(list) => list
                .split(',')
                .map(|l| {
                    MixtureSpec::from_label(l.trim(), self.seed)
                        .map_err(|e| Error::config("ablation.regimes", e.to_string()))
                })
                .collect(),
        }
    }

    /// Trains and evaluates every ablation regime and writes `ablation.tsv`.
    pub fn cmd_ablation(&self) -> Result<Vec<(MixtureSpec, EvalReport)>> {
        let regimes = self.ablation_regimes()?;
        let mut rows = Vec::new();
        for spec in regimes {
            self.cmd_train_detector(&spec)?;
            let report = self.cmd_evaluate(&spec)?;
            rows.push((spec, report));
        }
        write_atomic(&self.out.join("ablation.tsv"), ablation_table(&rows, &self.header()).as_bytes())?;
        Ok(rows)
    }
}

/// Regime → log-average miss rate (all / day / night) table.
pub fn ablation_table(rows: &[(MixtureSpec, EvalReport)], header: &[String]) -> String {
    let mut s = String::new();
    for h in header {
        writeln!(s, "# {h}").expect("string write");
    }
    writeln!(s, "regime\treal_fraction\tlamr_all\tlamr_day\tlamr_night").expect("string write");
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{:.2}", 100.0 * v));
    for (spec, r) in rows {
        writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}",
            spec.label(),
            spec.effective_real_fraction(),
            fmt(Some(r.lamr_all())),
            fmt(r.lamr_day()),
            fmt(r.lamr_night())
        )
        .expect("string write");
    }
    s
}
