//! Synthetic thermal sets and the real / synthesized / combined / mixed
//! training regimes built from them.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thermsynth_autograd::{par, ParamStore};

use crate::data::{self, DatasetManifest, FrameRecord, Origin};
use crate::gan::{translate, GeneratorConfig};
use crate::{Error, Result};

/// Prefix given to synthetic frame ids when a manifest holds both
/// modalities of the same frame.
pub const SYNTHETIC_ID_PREFIX: &str = "syn/";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixtureKind {
    Real,
    Synthesized,
    Combined,
    Mixed,
}

/// How a mixed regime draws its synthetic part.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    /// Each frame contributes exactly one modality.
    #[default]
    Paired,
    /// Real and synthetic frames are drawn from their pools independently,
    /// so a scene may appear in both modalities.
    Independent,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub kind: MixtureKind,
    /// Share of real frames; only free for `Mixed`.
    pub real_fraction: f64,
    pub seed: u64,
    #[serde(default)]
    pub sampling: Sampling,
}

impl MixtureSpec {
    pub fn real(seed: u64) -> Self {
        Self::of(MixtureKind::Real, 1.0, seed)
    }

    pub fn synthesized(seed: u64) -> Self {
        Self::of(MixtureKind::Synthesized, 0.0, seed)
    }

    pub fn combined(seed: u64) -> Self {
        Self::of(MixtureKind::Combined, 0.5, seed)
    }

    pub fn mixed(real_fraction: f64, seed: u64) -> Self {
        Self::of(MixtureKind::Mixed, real_fraction, seed)
    }

    fn of(kind: MixtureKind, real_fraction: f64, seed: u64) -> Self {
        Self {
            kind,
            real_fraction,
            seed,
            sampling: Sampling::Paired,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.real_fraction;
        let ok = match self.kind {
            MixtureKind::Real => f == 1.0,
            MixtureKind::Synthesized => f == 0.0,
            MixtureKind::Combined => f == 0.5,
            MixtureKind::Mixed => (0.0..=1.0).contains(&f),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Argument(format!("real_fraction {f} does not fit a {:?} mixture", self.kind)))
        }
    }

    /// Share of real images in the regime's training set. The combined
    /// regime holds every frame in both modalities, hence one half.
    pub fn effective_real_fraction(&self) -> f64 {
        match self.kind {
            MixtureKind::Real => 1.0,
            MixtureKind::Synthesized => 0.0,
            MixtureKind::Combined => 0.5,
            MixtureKind::Mixed => self.real_fraction,
        }
    }

    /// Regime name, e.g. `real`, `combined` or `mixed-80-20`.
    pub fn label(&self) -> String {
        match self.kind {
            MixtureKind::Real => "real".into(),
            MixtureKind::Synthesized => "synthesized".into(),
            MixtureKind::Combined => "combined".into(),
            MixtureKind::Mixed => {
                let r = (self.real_fraction * 100.0).round() as u32;
                format!("mixed-{r}-{}", 100 - r)
            }
        }
    }

    /// Parses a label produced by [`MixtureSpec::label`].
    pub fn from_label(label: &str, seed: u64) -> Result<Self> {
        let spec = match label {
            "real" => Self::real(seed),
            "synthesized" => Self::synthesized(seed),
            "combined" => Self::combined(seed),
            other => {
                let parts: Vec<&str> = other.strip_prefix("mixed-").unwrap_or("").split('-').collect();
                let parsed = match parts[..] {
                    [r, s] => r.parse::<u32>().ok().zip(s.parse::<u32>().ok()),
                    _ => None,
                };
                match parsed {
                    Some((r, s)) if r + s == 100 => Self::mixed(f64::from(r) / 100.0, seed),
                    _ => return Err(Error::Argument(format!("unknown regime `{label}`"))),
                }
            }
        };
        Ok(spec)
    }
}

/// The twelve ablation regimes: real, synthesized, combined and mixed
/// with 90 % down to 10 % real frames.
pub fn table_regimes(seed: u64) -> Vec<MixtureSpec> {
    let mut v = vec![MixtureSpec::real(seed), MixtureSpec::synthesized(seed), MixtureSpec::combined(seed)];
    v.extend((1..=9).rev().map(|r| MixtureSpec::mixed(f64::from(r) / 10.0, seed)));
    v
}

/// Number of real frames a mixed regime of `n` frames uses
/// (round half to even).
pub fn real_count(real_fraction: f64, n: usize) -> usize {
    (real_fraction * n as f64).round_ties_even() as usize
}

fn file_stem_for(index: usize, frame_id: &str) -> String {
    let clean: String = frame_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{index:06}_{clean}.png")
}

/// Translates every visible frame of `source` into a 16-bit thermal PNG in
/// `output_dir` and returns the matching synthetic manifest.
pub fn synthesize_dataset(
    gen_cfg: &GeneratorConfig,
    gen_params: &ParamStore,
    source: &DatasetManifest,
    output_dir: &Path,
) -> Result<DatasetManifest> {
    gen_cfg.validate()?;
    fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
    let indexed: Vec<(usize, &FrameRecord)> = source.frames.iter().enumerate().collect();
    let frames = par::map_slice(&indexed, |&(i, f)| -> Result<FrameRecord> {
        let visible = data::load_visible(&f.visible_path)?;
        let thermal = translate(&visible, gen_cfg, gen_params).map_err(|e| match e {
            Error::Shape(msg) => Error::Shape(format!("frame `{}`: {msg}", f.frame_id)),
            other => other,
        })?;
        let path = output_dir.join(file_stem_for(i, &f.frame_id));
        data::save_gray16(&thermal, &path)?;
        Ok(FrameRecord {
            thermal_path: path,
            origin: Origin::Synthetic,
            ..f.clone()
        })
    });
    let frames = frames.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(DatasetManifest {
        name: format!("{}.synthetic", source.name),
        frames,
        image_height: source.image_height,
        image_width: source.image_width,
    })
}

fn pair_synthetic<'a>(real: &DatasetManifest, synthetic: &'a DatasetManifest) -> Result<HashMap<&'a str, &'a FrameRecord>> {
    if real.len() != synthetic.len() {
        return Err(Error::Argument(format!(
            "real manifest has {} frames but synthetic has {}",
            real.len(),
            synthetic.len()
        )));
    }
    let by_id: HashMap<&str, &FrameRecord> = synthetic.frames.iter().map(|f| (f.frame_id.as_str(), f)).collect();
    let missing: Vec<&str> = real.frame_ids().filter(|id| !by_id.contains_key(id)).collect();
    if !missing.is_empty() {
        return Err(Error::Argument(format!(
            "frames without a synthetic counterpart: {}",
            missing.join(", ")
        )));
    }
    Ok(by_id)
}

fn with_prefix(f: &FrameRecord) -> FrameRecord {
    FrameRecord {
        frame_id: format!("{SYNTHETIC_ID_PREFIX}{}", f.frame_id),
        ..f.clone()
    }
}

/// Builds the training manifest of one regime from paired real and
/// synthetic manifests.
pub fn build_mixture(real: &DatasetManifest, synthetic: &DatasetManifest, spec: &MixtureSpec) -> Result<DatasetManifest> {
    spec.validate()?;
    let by_id = pair_synthetic(real, synthetic)?;
    let name = format!("{}.{}", real.name, spec.label());
    let frames = match spec.kind {
        MixtureKind::Real => return Ok(real.clone()),
        MixtureKind::Synthesized => return Ok(synthetic.clone()),
        MixtureKind::Combined => real
            .frames
            .iter()
            .cloned()
            .chain(synthetic.frames.iter().map(with_prefix))
            .collect(),
        MixtureKind::Mixed => {
            let n = real.len();
            let n_real = real_count(spec.real_fraction, n);
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut use_real = vec![false; n];
            for &i in &order[..n_real] {
                use_real[i] = true;
            }
            match spec.sampling {
                Sampling::Paired => real
                    .frames
                    .iter()
                    .zip(&use_real)
                    .map(|(f, &r)| if r { f.clone() } else { by_id[f.frame_id.as_str()].clone() })
                    .collect(),
                Sampling::Independent => {
                    let mut syn_order: Vec<usize> = (0..n).collect();
                    syn_order.shuffle(&mut rng);
                    let mut use_syn = vec![false; n];
                    for &i in &syn_order[..n - n_real] {
                        use_syn[i] = true;
                    }
                    let reals = real.frames.iter().zip(&use_real).filter(|(_, &r)| r).map(|(f, _)| f.clone());
                    let syns = real
                        .frames
                        .iter()
                        .zip(&use_syn)
                        .filter(|(_, &s)| s)
                        .map(|(f, _)| with_prefix(by_id[f.frame_id.as_str()]));
                    reals.chain(syns).collect()
                }
            }
        }
    };
    let m = DatasetManifest {
        name,
        frames,
        image_height: real.image_height,
        image_width: real.image_width,
    };
    m.validate()?;
    Ok(m)
}

/// Counts `(real, synthetic)` frames by origin.
pub fn origin_counts(m: &DatasetManifest) -> (usize, usize) {
    let real = m.frames.iter().filter(|f| f.origin == Origin::Real).count();
    (real, m.len() - real)
}
