//! Reduced-depth YOLO-style network: a strided convolutional backbone, a
//! top-down neck that merges the three coarsest stages, and one prediction
//! head per scale emitting `(tx, ty, tw, th, objectness)` per anchor.

use rand::Rng;
use thermsynth_autograd::{BindMode, Bindings, Graph, ParamStore, Tensor, Var};

use super::config::{DetectorConfig, NUM_STAGES, STRIDES};
use crate::nn::{add_conv, conv};
use crate::{Error, Result};

const SLOPE: f64 = 0.1;
/// Values per anchor: four box offsets plus objectness. No class scores.
pub const VALUES_PER_ANCHOR: usize = 5;
/// Initial objectness logit bias (prior ≈ 0.018).
const OBJECTNESS_PRIOR: f64 = -4.0;

/// Ordered names of every backbone layer.
pub fn backbone_layers(cfg: &DetectorConfig) -> Vec<String> {
    let mut names = vec!["backbone.stem".to_string()];
    for s in 1..=NUM_STAGES {
        names.push(format!("backbone.down{s}"));
        for j in 1..=cfg.backbone_depth {
            names.push(format!("backbone.stage{s}.conv{j}"));
        }
    }
    names
}

/// Name of the final backbone convolution.
pub fn last_backbone_layer(cfg: &DetectorConfig) -> String {
    backbone_layers(cfg).pop().expect("stem always present")
}

/// Cumulative stride after layer `name`.
pub fn layer_stride(name: &str) -> Option<usize> {
    if name == "backbone.stem" {
        return Some(1);
    }
    let rest = name.strip_prefix("backbone.")?;
    let stage: u32 = rest
        .strip_prefix("down")
        .or_else(|| rest.strip_prefix("stage").and_then(|r| r.split('.').next()))?
        .parse()
        .ok()?;
    Some(1 << stage)
}

pub fn init_params<R: Rng + ?Sized>(cfg: &DetectorConfig, rng: &mut R) -> Result<ParamStore> {
    cfg.validate()?;
    let mut p = ParamStore::new();
    add_conv(&mut p, rng, "backbone.stem", cfg.in_channels, cfg.stem_width, 3, 1.0);
    let mut cin = cfg.stem_width;
    for s in 1..=NUM_STAGES {
        let w = cfg.stage_widths[s - 1];
        add_conv(&mut p, rng, &format!("backbone.down{s}"), cin, w, 3, 1.0);
        for j in 1..=cfg.backbone_depth {
            add_conv(&mut p, rng, &format!("backbone.stage{s}.conv{j}"), w, w, 3, 0.5);
        }
        cin = w;
    }
    let n = cfg.neck_width;
    let (c3, c4, c5) = (cfg.stage_widths[2], cfg.stage_widths[3], cfg.stage_widths[4]);
    add_conv(&mut p, rng, "neck.p5", c5, n, 1, 1.0);
    add_conv(&mut p, rng, "neck.lat4", n, n / 2, 1, 1.0);
    add_conv(&mut p, rng, "neck.p4", n / 2 + c4, n, 1, 1.0);
    add_conv(&mut p, rng, "neck.lat3", n, n / 2, 1, 1.0);
    add_conv(&mut p, rng, "neck.p3", n / 2 + c3, n, 1, 1.0);
    for (scale, stride) in STRIDES.iter().enumerate() {
        add_conv(&mut p, rng, &format!("head.s{stride}.conv"), n, n, 3, 1.0);
        let out = cfg.anchors_per_scale(scale) * VALUES_PER_ANCHOR;
        add_conv(&mut p, rng, &format!("head.s{stride}.pred"), n, out, 1, 0.1);
        let bias = p.get_mut(&format!("head.s{stride}.pred.bias")).expect("just added");
        for a in 0..cfg.anchors_per_scale(scale) {
            bias.data_mut()[a * VALUES_PER_ANCHOR + 4] = OBJECTNESS_PRIOR;
        }
    }
    Ok(p)
}

/// Features the backbone produced, either all three head taps or the
/// activation of a single requested layer.
pub enum BackboneOutput<'g> {
    Taps([Var<'g>; 3]),
    Layer(Var<'g>),
}

fn check_input(cfg: &DetectorConfig, shape: &[usize], divisor: usize) -> Result<()> {
    let [_, c, h, w] = shape[..] else {
        return Err(Error::Shape(format!("detector input must be 4-D, got {shape:?}")));
    };
    if c != cfg.in_channels {
        return Err(Error::Shape(format!("detector expects {} channels, got {c}", cfg.in_channels)));
    }
    if h == 0 || w == 0 || h % divisor != 0 || w % divisor != 0 {
        return Err(Error::Shape(format!("input {h}x{w} must be divisible by {divisor}")));
    }
    Ok(())
}

/// Runs the backbone; with `stop_at = Some(layer)` returns that layer's
/// activation as soon as it is computed.
pub fn backbone_forward<'g>(
    x: Var<'g>,
    cfg: &DetectorConfig,
    params: &Bindings<'g>,
    stop_at: Option<&str>,
) -> Result<BackboneOutput<'g>> {
    let divisor = stop_at.and_then(layer_stride).unwrap_or(STRIDES[2]);
    check_input(cfg, &x.shape(), divisor)?;
    let mut h = conv(params, x, "backbone.stem", 1, 1)?.leaky_relu(SLOPE);
    if stop_at == Some("backbone.stem") {
        return Ok(BackboneOutput::Layer(h));
    }
    let mut taps = Vec::with_capacity(3);
    for s in 1..=NUM_STAGES {
        let name = format!("backbone.down{s}");
        h = conv(params, h, &name, 2, 1)?.leaky_relu(SLOPE);
        if stop_at == Some(name.as_str()) {
            return Ok(BackboneOutput::Layer(h));
        }
        for j in 1..=cfg.backbone_depth {
            let name = format!("backbone.stage{s}.conv{j}");
            h = h.add(conv(params, h, &name, 1, 1)?.leaky_relu(SLOPE))?;
            if stop_at == Some(name.as_str()) {
                return Ok(BackboneOutput::Layer(h));
            }
        }
        if s >= 3 {
            taps.push(h);
        }
    }
    if let Some(layer) = stop_at {
        return Err(Error::Argument(format!("`{layer}` is not a backbone layer")));
    }
    Ok(BackboneOutput::Taps([taps[0], taps[1], taps[2]]))
}

/// Raw head outputs, one `N × (A·5) × H/s × W/s` map per stride in
/// [`STRIDES`] order.
pub fn detector_forward<'g>(x: Var<'g>, cfg: &DetectorConfig, params: &Bindings<'g>) -> Result<Vec<Var<'g>>> {
    let BackboneOutput::Taps([c3, c4, c5]) = backbone_forward(x, cfg, params, None)? else {
        unreachable!("full backbone pass returns taps")
    };
    let p5 = conv(params, c5, "neck.p5", 1, 0)?.leaky_relu(SLOPE);
    let l4 = conv(params, p5, "neck.lat4", 1, 0)?.leaky_relu(SLOPE).upsample_nearest(2)?;
    let p4 = conv(params, Var::concat_channels(&[l4, c4])?, "neck.p4", 1, 0)?.leaky_relu(SLOPE);
    let l3 = conv(params, p4, "neck.lat3", 1, 0)?.leaky_relu(SLOPE).upsample_nearest(2)?;
    let p3 = conv(params, Var::concat_channels(&[l3, c3])?, "neck.p3", 1, 0)?.leaky_relu(SLOPE);
    [p3, p4, p5]
        .iter()
        .zip(STRIDES)
        .map(|(p, stride)| {
            let h = conv(params, *p, &format!("head.s{stride}.conv"), 1, 1)?.leaky_relu(SLOPE);
            conv(params, h, &format!("head.s{stride}.pred"), 1, 0)
        })
        .collect()
}

/// Inference helper with frozen parameters.
pub fn predict(input: &Tensor, cfg: &DetectorConfig, params: &ParamStore) -> Result<Vec<Tensor>> {
    let g = Graph::new();
    let b = params.bind(&g, BindMode::Frozen);
    let x = g.constant(input.clone());
    let out = detector_forward(x, cfg, &b)?;
    Ok(out.iter().map(|v| v.value().clone()).collect())
}

/// Re-targets the stem to a different input channel count: 3 → 1 sums the
/// colour filters (grey input), 1 → 3 spreads them evenly.
pub fn adapt_input_channels(params: &mut ParamStore, cfg: &mut DetectorConfig, channels: usize) -> Result<()> {
    if cfg.in_channels == channels {
        return Ok(());
    }
    let w = params
        .get("backbone.stem.weight")
        .ok_or_else(|| Error::Checkpoint("missing backbone.stem.weight".into()))?
        .clone();
    let (cout, cin, kh, kw) = w.dims4()?;
    let plane = kh * kw;
    let mut data = vec![0.0; cout * channels * plane];
    for co in 0..cout {
        let mut summed = vec![0.0; plane];
        for ci in 0..cin {
            let src = &w.data()[(co * cin + ci) * plane..(co * cin + ci + 1) * plane];
            summed.iter_mut().zip(src).for_each(|(a, b)| *a += b);
        }
        for ci in 0..channels {
            let dst = &mut data[(co * channels + ci) * plane..(co * channels + ci + 1) * plane];
            dst.iter_mut().zip(&summed).for_each(|(d, s)| *d = s / channels as f64);
        }
    }
    params.insert("backbone.stem.weight", Tensor::from_vec(&[cout, channels, kh, kw], data)?);
    cfg.in_channels = channels;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> DetectorConfig {
        DetectorConfig {
            stem_width: 4,
            stage_widths: vec![4, 6, 8, 8, 8],
            neck_width: 8,
            input_height: 256,
            input_width: 256,
            ..DetectorConfig::default()
        }
    }

    #[test]
    fn three_grids_at_strides_8_16_32() {
        for channels in [1, 3] {
            let cfg = DetectorConfig {
                in_channels: channels,
                ..small()
            };
            let p = init_params(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            let out = predict(&Tensor::full(&[1, channels, 256, 256], 0.5), &cfg, &p).unwrap();
            let grids: Vec<Vec<usize>> = out.iter().map(|t| t.shape().to_vec()).collect();
            assert_eq!(grids, vec![vec![1, 15, 32, 32], vec![1, 15, 16, 16], vec![1, 15, 8, 8]]);
        }
    }

    #[test]
    fn indivisible_input_rejected() {
        let cfg = small();
        let p = init_params(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(matches!(predict(&Tensor::zeros(&[1, 1, 48, 64]), &cfg, &p), Err(Error::Shape(_))));
    }

    #[test]
    fn no_class_parameters_in_head() {
        let cfg = small();
        let p = init_params(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for (scale, stride) in STRIDES.iter().enumerate() {
            let w = p.get(&format!("head.s{stride}.pred.weight")).unwrap();
            assert_eq!(w.shape()[0], cfg.anchors_per_scale(scale) * 5);
        }
        assert!(p.names().all(|n| !n.contains("cls") && !n.contains("class")));
    }

    #[test]
    fn layer_strides() {
        let cfg = small();
        let layers = backbone_layers(&cfg);
        assert_eq!(layers.len(), 11);
        assert_eq!(layer_stride("backbone.stem"), Some(1));
        assert_eq!(layer_stride("backbone.down3"), Some(8));
        assert_eq!(layer_stride("backbone.stage5.conv1"), Some(32));
        assert_eq!(last_backbone_layer(&cfg), "backbone.stage5.conv1");
    }

    #[test]
    fn channel_adaptation_preserves_grey_response() {
        let mut cfg = DetectorConfig {
            in_channels: 3,
            ..small()
        };
        let mut p = init_params(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let grey = 0.4;
        let before = predict(&Tensor::full(&[1, 3, 64, 64], grey), &cfg, &p).unwrap();
        adapt_input_channels(&mut p, &mut cfg, 1).unwrap();
        let after = predict(&Tensor::full(&[1, 1, 64, 64], grey), &cfg, &p).unwrap();
        for (a, b) in before.iter().zip(&after) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
