use rand::Rng;
use serde::{Deserialize, Serialize};
use thermsynth_autograd::{BindMode, Bindings, Graph, ParamStore, Tensor, Var};

use crate::data::Image;
use crate::nn::{add_conv, conv, LRELU_SLOPE};
use crate::{Error, Result};

/// Shape of the residual-in-residual dense generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub base_channels: usize,
    pub num_rrdb: usize,
    pub dense_blocks_per_rrdb: usize,
    pub convs_per_dense_block: usize,
    /// Channels added by every inner dense-block layer (`k`).
    pub growth_rate: usize,
    /// Scale applied to every residual branch (`β`).
    pub residual_scale: f64,
    pub downsample_factor: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            base_channels: 64,
            num_rrdb: 5,
            dense_blocks_per_rrdb: 4,
            convs_per_dense_block: 5,
            growth_rate: 32,
            residual_scale: 0.2,
            downsample_factor: 4,
            in_channels: 3,
            out_channels: 1,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let arg = |m: String| Err(Error::Argument(m));
        if !(self.residual_scale > 0.0 && self.residual_scale <= 1.0) {
            return arg(format!("residual_scale must be in (0, 1], got {}", self.residual_scale));
        }
        if !self.downsample_factor.is_power_of_two() {
            return arg(format!("downsample_factor must be a power of two, got {}", self.downsample_factor));
        }
        if self.base_channels == 0 || self.growth_rate == 0 || self.convs_per_dense_block == 0 {
            return arg("channel counts and convs_per_dense_block must be positive".into());
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return arg("in/out channels must be positive".into());
        }
        Ok(())
    }

    pub fn num_resamplings(&self) -> usize {
        self.downsample_factor.trailing_zeros() as usize
    }

    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ParamStore> {
        self.validate()?;
        let c = self.base_channels;
        let mut p = ParamStore::new();
        add_conv(&mut p, rng, "gen.head", self.in_channels, c, 3, 1.0);
        for i in 0..self.num_resamplings() {
            add_conv(&mut p, rng, &format!("gen.down{i}"), c, c, 3, 1.0);
        }
        for r in 0..self.num_rrdb {
            for d in 0..self.dense_blocks_per_rrdb {
                init_dense_block(&mut p, rng, &dense_prefix(r, d), c, self.growth_rate, self.convs_per_dense_block);
            }
        }
        add_conv(&mut p, rng, "gen.trunk", c, c, 3, 1.0);
        for i in 0..self.num_resamplings() {
            add_conv(&mut p, rng, &format!("gen.up{i}"), c, c, 3, 1.0);
        }
        add_conv(&mut p, rng, "gen.out", c, self.out_channels, 3, 1.0);
        Ok(p)
    }
}

fn dense_prefix(rrdb: usize, block: usize) -> String {
    format!("gen.rrdb{rrdb}.db{block}")
}

/// Registers the `convs` layers of one dense block under `prefix`.
pub fn init_dense_block<R: Rng + ?Sized>(
    p: &mut ParamStore,
    rng: &mut R,
    prefix: &str,
    channels: usize,
    growth: usize,
    convs: usize,
) {
    for j in 0..convs {
        let cin = channels + j * growth;
        let cout = if j + 1 == convs { channels } else { growth };
        // Residual branches start small so deep chains stay near identity.
        add_conv(p, rng, &format!("{prefix}.conv{}", j + 1), cin, cout, 3, 0.1);
    }
}

/// Dense block body: layer `i` sees the block input concatenated with all
/// earlier layer outputs; the last layer fuses back to the input width.
/// The residual connection is applied by the caller.
pub fn dense_block_forward<'g>(
    x: Var<'g>,
    params: &Bindings<'g>,
    prefix: &str,
    convs: usize,
) -> Result<Var<'g>> {
    let mut features = vec![x];
    for j in 1..=convs {
        let input = if features.len() == 1 {
            x
        } else {
            Var::concat_channels(&features)?
        };
        let out = conv(params, input, &format!("{prefix}.conv{j}"), 1, 1)?;
        if j == convs {
            return Ok(out);
        }
        features.push(out.leaky_relu(LRELU_SLOPE));
    }
    Err(Error::Argument("dense block needs at least one convolution".into()))
}

/// `x + β · chain(x)`, where the chain applies every dense block with its own
/// `h + β · block(h)` residual.
pub fn rrdb_forward<'g>(x: Var<'g>, params: &Bindings<'g>, rrdb: usize, cfg: &GeneratorConfig) -> Result<Var<'g>> {
    let beta = cfg.residual_scale;
    rrdb_forward_with_beta(x, params, rrdb, cfg, beta)
}

pub(crate) fn rrdb_forward_with_beta<'g>(
    x: Var<'g>,
    params: &Bindings<'g>,
    rrdb: usize,
    cfg: &GeneratorConfig,
    beta: f64,
) -> Result<Var<'g>> {
    let mut h = x;
    for d in 0..cfg.dense_blocks_per_rrdb {
        let out = dense_block_forward(h, params, &dense_prefix(rrdb, d), cfg.convs_per_dense_block)?;
        h = h.add(out.scale(beta))?;
    }
    Ok(x.add(h.scale(beta))?)
}

/// Translates a batch of visible images (`N × 3 × H × W`) to thermal
/// (`N × 1 × H × W`) with values in `(0, 1)`.
pub fn generator_forward<'g>(visible: Var<'g>, cfg: &GeneratorConfig, params: &Bindings<'g>) -> Result<Var<'g>> {
    generator_forward_with_beta(visible, cfg, params, cfg.residual_scale)
}

pub(crate) fn generator_forward_with_beta<'g>(
    visible: Var<'g>,
    cfg: &GeneratorConfig,
    params: &Bindings<'g>,
    beta: f64,
) -> Result<Var<'g>> {
    let shape = visible.shape();
    let [_, c, h, w] = shape[..] else {
        return Err(Error::Shape(format!("generator input must be 4-D, got {shape:?}")));
    };
    if c != cfg.in_channels {
        return Err(Error::Shape(format!("generator expects {} input channels, got {c}", cfg.in_channels)));
    }
    let f = cfg.downsample_factor;
    if h % f != 0 || w % f != 0 || h == 0 || w == 0 {
        return Err(Error::Shape(format!(
            "input {h}x{w} must have both sides divisible by the downsample factor {f}"
        )));
    }
    let mut x = conv(params, visible, "gen.head", 1, 1)?.leaky_relu(LRELU_SLOPE);
    for i in 0..cfg.num_resamplings() {
        x = conv(params, x, &format!("gen.down{i}"), 2, 1)?.leaky_relu(LRELU_SLOPE);
    }
    let mut trunk = x;
    for r in 0..cfg.num_rrdb {
        trunk = rrdb_forward_with_beta(trunk, params, r, cfg, beta)?;
    }
    x = x.add(conv(params, trunk, "gen.trunk", 1, 1)?)?;
    for i in 0..cfg.num_resamplings() {
        x = conv(params, x.upsample_nearest(2)?, &format!("gen.up{i}"), 1, 1)?.relu();
    }
    Ok(conv(params, x, "gen.out", 1, 1)?.sigmoid())
}

/// Inference on a single image with frozen parameters.
pub fn translate(visible: &Image, cfg: &GeneratorConfig, params: &ParamStore) -> Result<Image> {
    let out = translate_batch(&visible.to_tensor(), cfg, params)?;
    Image::from_tensor(&out, 0)
}

pub fn translate_batch(visible: &Tensor, cfg: &GeneratorConfig, params: &ParamStore) -> Result<Tensor> {
    let g = Graph::new();
    let b = params.bind(&g, BindMode::Frozen);
    let x = g.constant(visible.clone());
    let y = generator_forward(x, cfg, &b)?;
    let out = y.value().clone();
    Ok(out)
}
