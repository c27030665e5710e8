//! Procedural paired dataset for desk-scale runs.
//!
//! Scenes are a sky/ground backdrop with buildings and a few "pedestrians"
//! painted in warm colours. The thermal image is a fixed function of the
//! visible colours (warm chroma maps to hot), lightly blurred and
//! perturbed, so a translator can learn it from the visible frame alone.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thermsynth_autograd::par;

use crate::data::{self, BoundingBox, DatasetManifest, FrameRecord, Image, Origin, TimeOfDay};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ToySpec {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub night_fraction: f64,
    pub min_person_height: f64,
    pub max_person_height: f64,
    pub max_people: usize,
    pub occlusion_probability: f64,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self {
            frames: 64,
            height: 64,
            width: 64,
            seed: 0,
            night_fraction: 0.5,
            min_person_height: 16.0,
            max_person_height: 40.0,
            max_people: 3,
            occlusion_probability: 0.15,
        }
    }
}

fn fill_rect(img: &mut Image, x0: f64, y0: f64, x1: f64, y1: f64, rgb: [f64; 3]) {
    let xa = x0.round().max(0.0) as usize;
    let ya = y0.round().max(0.0) as usize;
    let xb = (x1.round().max(0.0) as usize).min(img.width);
    let yb = (y1.round().max(0.0) as usize).min(img.height);
    for y in ya..yb {
        for x in xa..xb {
            for (c, v) in rgb.iter().enumerate() {
                img.set(c, y, x, *v);
            }
        }
    }
}

fn jitter<R: Rng>(rng: &mut R, rgb: [f64; 3], amount: f64) -> [f64; 3] {
    rgb.map(|v| (v + rng.random_range(-amount..=amount)).clamp(0.0, 1.0))
}

/// Visible scene plus its annotations.
pub fn render_visible(spec: &ToySpec, index: usize) -> (Image, Vec<BoundingBox>, TimeOfDay) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_mul(1_000_003).wrapping_add(index as u64));
    let (h, w) = (spec.height, spec.width);
    let mut img = Image::filled(h, w, 3, 0.0);
    let horizon = h as f64 * rng.random_range(0.35..0.55);
    let sky = jitter(&mut rng, [0.5, 0.62, 0.85], 0.05);
    let ground = jitter(&mut rng, [0.36, 0.42, 0.38], 0.04);
    for y in 0..h {
        let shade = 1.0 - 0.25 * y as f64 / h as f64;
        let base = if (y as f64) < horizon { sky } else { ground };
        let stripe = if y as f64 >= horizon && (y / 4) % 3 == 0 { 0.05 } else { 0.0 };
        for x in 0..w {
            for c in 0..3 {
                img.set(c, y, x, base[c] * shade - stripe);
            }
        }
    }
    for _ in 0..rng.random_range(1..=3) {
        let bw = rng.random_range(0.15..0.35) * w as f64;
        let bh = rng.random_range(0.2..0.45) * h as f64;
        let bx = rng.random_range(0.0..w as f64 - bw);
        let color = if rng.random_bool(0.3) {
            jitter(&mut rng, [0.58, 0.46, 0.42], 0.04)
        } else {
            jitter(&mut rng, [0.45, 0.48, 0.55], 0.06)
        };
        fill_rect(&mut img, bx, horizon - bh, bx + bw, horizon + 2.0, color);
    }

    let mut boxes: Vec<BoundingBox> = Vec::new();
    let people = rng.random_range(1..=spec.max_people.max(1));
    for _ in 0..people {
        let ph = rng.random_range(spec.min_person_height..=spec.max_person_height).round();
        let pw = (ph * 0.4).round().max(3.0);
        let px = rng.random_range(0.0..(w as f64 - pw)).round();
        let feet = rng.random_range((horizon + ph * 0.3).min(h as f64)..=h as f64);
        let py = (feet - ph).round().max(0.0);
        let candidate = BoundingBox {
            x: px,
            y: py,
            w: pw,
            h: ph,
            occluded: false,
        };
        if boxes.iter().any(|b| crate::eval::iou(b, &candidate) > 0.1) {
            continue;
        }
        let head = jitter(&mut rng, [0.9, 0.7, 0.55], 0.04);
        let torso = jitter(&mut rng, [0.85, 0.42, 0.3], 0.06);
        let legs = jitter(&mut rng, [0.52, 0.3, 0.25], 0.04);
        let head_h = ph * 0.2;
        fill_rect(&mut img, px + pw * 0.2, py, px + pw * 0.8, py + head_h, head);
        fill_rect(&mut img, px, py + head_h, px + pw, py + ph * 0.65, torso);
        fill_rect(&mut img, px + pw * 0.1, py + ph * 0.65, px + pw * 0.9, py + ph, legs);
        let mut b = candidate;
        if rng.random_bool(spec.occlusion_probability) {
            let cover = rng.random_range(0.4..0.6);
            fill_rect(&mut img, px - 2.0, py + ph * (1.0 - cover), px + pw + 2.0, py + ph, [0.5, 0.5, 0.56]);
            b.occluded = true;
        }
        if let Some(b) = b.clamp_to(w as f64, h as f64) {
            boxes.push(b);
        }
    }

    let night = rng.random_bool(spec.night_fraction);
    if night {
        for v in img.data.iter_mut() {
            *v = (*v * 0.3 + rng.random_range(-0.01..=0.01)).clamp(0.0, 1.0);
        }
    }
    let tod = if night { TimeOfDay::Night } else { TimeOfDay::Day };
    (img, boxes, tod)
}

/// Deterministic visible→thermal rendering: warm chroma `(R − B) / (R + G + B)`
/// maps to temperature, then a 3×3 box blur and a small seeded
/// perturbation.
pub fn thermal_rule(visible: &Image, noise_seed: u64) -> Image {
    let (h, w) = (visible.height, visible.width);
    let hw = h * w;
    let raw: Vec<f64> = (0..hw)
        .map(|i| {
            let (r, g, b) = (visible.data[i], visible.data[hw + i], visible.data[2 * hw + i]);
            let warmth = ((r - b) / (r + g + b + 0.05) * 2.5).clamp(0.0, 1.0);
            0.18 + 0.7 * warmth
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let mut out = Image::filled(h, w, 1, 0.0);
    for y in 0..h {
        for x in 0..w {
            let mut sum = 0.0;
            let mut n = 0.0;
            for yy in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for xx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    sum += raw[yy * w + xx];
                    n += 1.0;
                }
            }
            out.set(0, y, x, sum / n + rng.random_range(-0.01..=0.01));
        }
    }
    out
}

/// Writes `spec.frames` paired frames under `dir` (`visible/`, `thermal/`)
/// plus `dir/manifest.tsv`, and returns the manifest.
pub fn generate_toy_dataset(dir: &Path, spec: &ToySpec) -> Result<DatasetManifest> {
    if spec.frames == 0 || spec.height == 0 || spec.width == 0 {
        return Err(Error::Argument("toy dataset needs at least one non-empty frame".into()));
    }
    if !(spec.min_person_height > 0.0 && spec.min_person_height <= spec.max_person_height)
        || spec.max_person_height > spec.height as f64
    {
        return Err(Error::Argument("person heights must satisfy 0 < min <= max <= image height".into()));
    }
    let vis_dir = dir.join("visible");
    let th_dir = dir.join("thermal");
    for d in [&vis_dir, &th_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let frames = par::map_range(spec.frames, |i| -> Result<FrameRecord> {
        let (vis, boxes, tod) = render_visible(spec, i);
        let thermal = thermal_rule(&vis, spec.seed ^ (i as u64).wrapping_mul(0x2545_F491_4F6C_DD1D));
        let name = format!("{i:04}.png");
        let (vp, tp): (PathBuf, PathBuf) = (vis_dir.join(&name), th_dir.join(&name));
        data::save_png8(&vis, &vp)?;
        data::save_gray16(&thermal, &tp)?;
        Ok(FrameRecord {
            frame_id: format!("f{i:04}"),
            frame_index: i as u64,
            time_of_day: tod,
            visible_path: vp,
            thermal_path: tp,
            boxes,
            origin: Origin::Real,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let m = DatasetManifest {
        name: "manifest".into(),
        frames,
        image_height: spec.height,
        image_width: spec.width,
    };
    let header = vec![format!("toy dataset: frames={} seed={}", spec.frames, spec.seed)];
    data::write_manifest(&m, &dir.join("manifest.tsv"), &header)?;
    Ok(m)
}

/// Experiment settings sized for a single CPU core and 64×64 frames.
pub const TOY_EXPERIMENT: &str = "\
data.train_manifest = train/manifest.tsv
data.test_manifest = test/manifest.tsv
data.min_height = 12
data.drop_occluded = false

gan.base_channels = 16
gan.num_rrdb = 2
gan.dense_blocks_per_rrdb = 2
gan.convs_per_dense_block = 3
gan.growth_rate = 8
gan.lr = 0.001
gan.batch_size = 2
gan.max_steps = 300
gan.checkpoint_every = 1
disc.num_layers = 3
disc.base_features = 16
disc.num_scales = 2

phi.epochs = 40
phi.lr = 0.003

detector.stem_width = 8
detector.stage_widths = 8, 16, 32, 32, 32
detector.neck_width = 32
detector.anchors_per_scale = 2

pretrain.epochs = 120
pretrain.lr = 0.003

schedule.batch_size = 4
schedule.lr_high = 0.001
schedule.lr_low = 0.0001
schedule.optimizer = adam

eval.min_height = 12
eval.conf_threshold = 0.01
";

/// Generates `train/` and `test/` toy datasets under `dir` and writes
/// `dir/experiment.cfg` pointing at them. Returns the config path.
pub fn write_toy_experiment(dir: &Path, train_frames: usize, test_frames: usize, seed: u64) -> Result<PathBuf> {
    let base = ToySpec {
        seed,
        ..ToySpec::default()
    };
    generate_toy_dataset(
        &dir.join("train"),
        &ToySpec {
            frames: train_frames,
            ..base.clone()
        },
    )?;
    generate_toy_dataset(
        &dir.join("test"),
        &ToySpec {
            frames: test_frames,
            seed: seed.wrapping_add(0x9E37_79B9),
            ..base
        },
    )?;
    let path = dir.join("experiment.cfg");
    let text = format!("seed = {seed}\n{TOY_EXPERIMENT}");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
