use rand::Rng;
use serde::{Deserialize, Serialize};
use thermsynth_autograd::{conv_output_size, Bindings, ParamStore, Var};

use crate::nn::{add_conv, conv, LRELU_SLOPE};
use crate::{Error, Result};

/// Multi-scale patch discriminator: `num_scales` independent conv stacks,
/// scale `s` seeing the input average-pooled by `2^s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub num_layers: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub base_features: usize,
    pub num_scales: usize,
    pub in_channels: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            num_layers: 5,
            kernel_size: 4,
            stride: 2,
            base_features: 64,
            num_scales: 3,
            in_channels: 1,
        }
    }
}

impl DiscriminatorConfig {
    /// Feature maps of layer `depth` (1-based).
    pub fn features_at(&self, depth: usize) -> usize {
        self.base_features << (depth - 1)
    }

    fn padding(&self) -> usize {
        self.kernel_size.saturating_sub(self.stride) / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.num_scales == 0 || self.kernel_size == 0 || self.stride == 0 {
            return Err(Error::Argument("discriminator layers, scales, kernel and stride must be positive".into()));
        }
        if self.base_features == 0 {
            return Err(Error::Argument("discriminator base_features must be positive".into()));
        }
        Ok(())
    }

    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ParamStore> {
        self.validate()?;
        let mut p = ParamStore::new();
        for s in 0..self.num_scales {
            let mut cin = self.in_channels;
            for d in 1..=self.num_layers {
                let cout = self.features_at(d);
                add_conv(&mut p, rng, &format!("disc.s{s}.conv{d}"), cin, cout, self.kernel_size, 1.0);
                cin = cout;
            }
            add_conv(&mut p, rng, &format!("disc.s{s}.out"), cin, 1, 1, 1.0);
        }
        Ok(p)
    }

    /// Spatial size of the score map for a `side`-pixel input at scale `s`.
    pub fn score_size(&self, side: usize, scale: usize) -> Option<usize> {
        let pool = 1 << scale;
        if side % pool != 0 {
            return None;
        }
        let mut n = side / pool;
        for _ in 0..self.num_layers {
            n = conv_output_size(n, self.kernel_size, self.stride, self.padding())?;
            if n == 0 {
                return None;
            }
        }
        Some(n)
    }
}

/// Raw (unbounded) score maps, finest scale first.
pub fn discriminator_forward<'g>(
    img: Var<'g>,
    cfg: &DiscriminatorConfig,
    params: &Bindings<'g>,
) -> Result<Vec<Var<'g>>> {
    let shape = img.shape();
    let [_, c, h, w] = shape[..] else {
        return Err(Error::Shape(format!("discriminator input must be 4-D, got {shape:?}")));
    };
    if c != cfg.in_channels {
        return Err(Error::Shape(format!("discriminator expects {} channels, got {c}", cfg.in_channels)));
    }
    let mut maps = Vec::with_capacity(cfg.num_scales);
    for s in 0..cfg.num_scales {
        if cfg.score_size(h, s).is_none() || cfg.score_size(w, s).is_none() {
            let need = (1usize << s) << cfg.num_layers;
            return Err(Error::Shape(format!(
                "{h}x{w} input is too small for {} stride-{} layers at scale {s} (needs at least {need} per side)",
                cfg.num_layers, cfg.stride
            )));
        }
        let mut x = if s == 0 { img } else { img.avg_pool2d(1 << s)? };
        for d in 1..=cfg.num_layers {
            x = conv(params, x, &format!("disc.s{s}.conv{d}"), cfg.stride, cfg.padding())?.leaky_relu(LRELU_SLOPE);
        }
        maps.push(conv(params, x, &format!("disc.s{s}.out"), 1, 0)?);
    }
    Ok(maps)
}
