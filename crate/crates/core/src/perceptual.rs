//! Frozen loss network: the detector backbone tapped at one layer.

use std::fmt::Write as _;
use std::path::Path;

use thermsynth_autograd::{BindMode, Graph, ParamStore, Tensor, Var};

use crate::checkpoint::{params_digest, write_atomic};
use crate::data::Image;
use crate::detector::{backbone_forward, backbone_layers, last_backbone_layer, layer_stride, BackboneOutput, DetectorCheckpoint, DetectorConfig};
use crate::{Error, Result};

/// First line of a feature dump; the rest of the file is raw `f64` LE.
const DUMP_MAGIC: &str = "thermsynth-features";

#[derive(Clone, Debug)]
pub struct FeatureExtractor {
    config: DetectorConfig,
    params: ParamStore,
    tap: String,
}

impl FeatureExtractor {
    /// Keeps the backbone part of `params`. `tap = None` selects the last
    /// backbone convolution.
    pub fn from_params(config: &DetectorConfig, params: &ParamStore, tap: Option<&str>) -> Result<Self> {
        config.validate()?;
        if config.in_channels != 1 {
            return Err(Error::Argument(format!(
                "the loss network reads thermal images, but the detector takes {} channels",
                config.in_channels
            )));
        }
        let layers = backbone_layers(config);
        let tap = tap.map_or_else(|| last_backbone_layer(config), str::to_string);
        if layers.iter().filter(|l| **l == tap).count() != 1 {
            return Err(Error::Argument(format!(
                "tap layer `{tap}` is not one of: {}",
                layers.join(", ")
            )));
        }
        let backbone = params.subset("backbone.");
        for layer in &layers {
            for part in ["weight", "bias"] {
                if !backbone.contains(&format!("{layer}.{part}")) {
                    return Err(Error::Checkpoint(format!("loss network lacks `{layer}.{part}`")));
                }
            }
        }
        Ok(Self {
            config: config.clone(),
            params: backbone,
            tap,
        })
    }

    pub fn from_checkpoint(ckpt: &DetectorCheckpoint, tap: Option<&str>) -> Result<Self> {
        Self::from_params(&ckpt.config, &ckpt.params, tap)
    }

    pub fn tap(&self) -> &str {
        &self.tap
    }

    /// Spatial stride of the tap layer; inputs must be divisible by it.
    pub fn stride(&self) -> usize {
        layer_stride(&self.tap).expect("validated tap")
    }

    /// SHA-256 of the frozen parameters.
    pub fn digest(&self) -> String {
        params_digest(&self.params)
    }

    /// Tap activation for a batch already on a graph. Parameters enter as
    /// constants, so gradients reach the images only.
    pub fn features_var<'g>(&self, img: Var<'g>) -> Result<Var<'g>> {
        let b = self.params.bind(img.graph(), BindMode::Frozen);
        match backbone_forward(img, &self.config, &b, Some(&self.tap))? {
            BackboneOutput::Layer(v) => Ok(v),
            BackboneOutput::Taps(_) => unreachable!("a stop layer was requested"),
        }
    }

    /// Mean squared difference of tap features.
    pub fn perceptual_loss<'g>(&self, real: Var<'g>, fake: Var<'g>) -> Result<Var<'g>> {
        if real.shape() != fake.shape() {
            return Err(Error::Shape(format!(
                "perceptual inputs differ: {:?} vs {:?}",
                real.shape(),
                fake.shape()
            )));
        }
        let fr = self.features_var(real)?;
        let ff = self.features_var(fake)?;
        if !fr.value().is_finite() || !ff.value().is_finite() {
            return Err(Error::Numeric("loss network produced non-finite features".into()));
        }
        Ok(fr.sub(ff)?.square().mean())
    }

    pub fn extract_features(&self, img: &Image) -> Result<Tensor> {
        let g = Graph::new();
        let v = self.features_var(g.constant(img.to_tensor()))?;
        let out = v.value().clone();
        Ok(out)
    }

    pub fn perceptual_distance(&self, real: &Image, fake: &Image) -> Result<f64> {
        if (real.height, real.width, real.channels) != (fake.height, fake.width, fake.channels) {
            return Err(Error::Shape(format!(
                "images differ: {}x{}x{} vs {}x{}x{}",
                real.height, real.width, real.channels, fake.height, fake.width, fake.channels
            )));
        }
        let g = Graph::new();
        let d = self.perceptual_loss(g.constant(real.to_tensor()), g.constant(fake.to_tensor()))?;
        let v = d.value().item();
        Ok(v)
    }

    /// Writes the features of `img` as a text header line
    /// `thermsynth-features layer=<tap> shape=<d0>x<d1>x...` followed by the
    /// values as little-endian `f64`.
    pub fn dump_features(&self, img: &Image, path: &Path) -> Result<Tensor> {
        let f = self.extract_features(img)?;
        let dims: Vec<String> = f.shape().iter().map(ToString::to_string).collect();
        let mut header = String::new();
        writeln!(header, "{DUMP_MAGIC} layer={} shape={}", self.tap, dims.join("x")).expect("string write");
        let mut bytes = header.into_bytes();
        for v in f.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        write_atomic(path, &bytes)?;
        Ok(f)
    }
}

/// Reads a feature dump back as `(layer, tensor)`.
pub fn read_feature_dump(path: &Path) -> Result<(String, Tensor)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::Validation(format!("{}: {m}", path.display()));
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header line"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not UTF-8"))?;
    let mut parts = header.split(' ');
    if parts.next() != Some(DUMP_MAGIC) {
        return Err(bad("not a feature dump"));
    }
    let layer = parts
        .next()
        .and_then(|p| p.strip_prefix("layer="))
        .ok_or_else(|| bad("missing layer"))?
        .to_string();
    let shape: Vec<usize> = parts
        .next()
        .and_then(|p| p.strip_prefix("shape="))
        .ok_or_else(|| bad("missing shape"))?
        .split('x')
        .map(|d| d.parse().map_err(|_| bad("bad shape")))
        .collect::<Result<_>>()?;
    let data: Vec<f64> = bytes[nl + 1..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((layer, Tensor::from_vec(&shape, data)?))
}
