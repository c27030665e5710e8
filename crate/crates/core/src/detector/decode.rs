use thermsynth_autograd::Tensor;

use super::config::{DetectorConfig, STRIDES};
use super::model::VALUES_PER_ANCHOR;
use crate::data::BoundingBox;
use crate::eval::iou;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub confidence: f64,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-9, 1.0 - 1e-9);
    (p / (1.0 - p)).ln()
}

/// Where a ground-truth box lands in the head outputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncodedBox {
    pub scale: usize,
    pub anchor: usize,
    pub row: usize,
    pub col: usize,
    /// Target for `σ(tx)`, `σ(ty)` (centre offset inside the cell).
    pub offset: (f64, f64),
    /// Target for `tw`, `th` (log size ratio to the anchor).
    pub log_size: (f64, f64),
}

/// Assigns a box to the anchor of best shape IoU across all scales and to
/// the cell containing its centre.
pub fn encode_box(b: &BoundingBox, cfg: &DetectorConfig) -> EncodedBox {
    let mut best = (0, 0, f64::NEG_INFINITY);
    for (s, anchors) in cfg.anchors.iter().enumerate() {
        for (a, &anchor) in anchors.iter().enumerate() {
            let score = super::config::shape_iou((b.w, b.h), anchor);
            if score > best.2 {
                best = (s, a, score);
            }
        }
    }
    let (scale, anchor, _) = best;
    let stride = STRIDES[scale] as f64;
    let gw = cfg.input_width / STRIDES[scale];
    let gh = cfg.input_height / STRIDES[scale];
    let cx = b.x + b.w / 2.0;
    let cy = b.y + b.h / 2.0;
    let col = ((cx / stride).floor() as usize).min(gw - 1);
    let row = ((cy / stride).floor() as usize).min(gh - 1);
    let (aw, ah) = cfg.anchors[scale][anchor];
    EncodedBox {
        scale,
        anchor,
        row,
        col,
        offset: (cx / stride - col as f64, cy / stride - row as f64),
        log_size: ((b.w / aw).ln(), (b.h / ah).ln()),
    }
}

/// Raw head values that decode exactly to `enc` with confidence `σ(logit)`.
pub fn ideal_raw(enc: &EncodedBox, objectness_logit: f64) -> [f64; VALUES_PER_ANCHOR] {
    [
        logit(enc.offset.0),
        logit(enc.offset.1),
        enc.log_size.0,
        enc.log_size.1,
        objectness_logit,
    ]
}

/// Box for raw values at one cell/anchor.
pub fn decode_cell(raw: [f64; VALUES_PER_ANCHOR], row: usize, col: usize, stride: usize, anchor: (f64, f64)) -> (f64, f64, f64, f64, f64) {
    let s = stride as f64;
    let cx = (col as f64 + sigmoid(raw[0])) * s;
    let cy = (row as f64 + sigmoid(raw[1])) * s;
    let w = anchor.0 * raw[2].clamp(-20.0, 20.0).exp();
    let h = anchor.1 * raw[3].clamp(-20.0, 20.0).exp();
    (cx - w / 2.0, cy - h / 2.0, w, h, sigmoid(raw[4]))
}

/// Decodes sample `index` of the multi-scale head outputs into boxes,
/// keeps those with confidence ≥ `conf_threshold`, applies greedy NMS at
/// `nms_iou` and returns them by descending confidence.
pub fn decode_detections(
    raw: &[Tensor],
    index: usize,
    cfg: &DetectorConfig,
    conf_threshold: f64,
    nms_iou: f64,
) -> Result<Vec<Detection>> {
    for (name, v) in [("conf_threshold", conf_threshold), ("nms_iou", nms_iou)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Argument(format!("{name} must be in [0, 1], got {v}")));
        }
    }
    if raw.len() != cfg.anchors.len() {
        return Err(Error::Shape(format!("expected {} prediction maps, got {}", cfg.anchors.len(), raw.len())));
    }
    let (img_w, img_h) = (cfg.input_width as f64, cfg.input_height as f64);
    let mut dets = Vec::new();
    for (scale, t) in raw.iter().enumerate() {
        let (n, c, gh, gw) = t.dims4()?;
        let na = cfg.anchors_per_scale(scale);
        if c != na * VALUES_PER_ANCHOR || index >= n {
            return Err(Error::Shape(format!("prediction map {scale} has shape {:?}", t.shape())));
        }
        let plane = gh * gw;
        let base = index * c * plane;
        let d = t.data();
        for a in 0..na {
            for row in 0..gh {
                for col in 0..gw {
                    let at = |k: usize| d[base + (a * VALUES_PER_ANCHOR + k) * plane + row * gw + col];
                    let conf = sigmoid(at(4));
                    if conf < conf_threshold {
                        continue;
                    }
                    let raw = [at(0), at(1), at(2), at(3), at(4)];
                    let (x, y, w, h, _) = decode_cell(raw, row, col, STRIDES[scale], cfg.anchors[scale][a]);
                    let bb = BoundingBox {
                        x,
                        y,
                        w,
                        h,
                        occluded: false,
                    };
                    if let Some(bbox) = bb.clamp_to(img_w, img_h) {
                        dets.push(Detection { bbox, confidence: conf });
                    }
                }
            }
        }
    }
    // A sigmoid can round to exactly 1.0, so the top of the range is
    // handled explicitly as "keep nothing".
    if conf_threshold >= 1.0 {
        dets.clear();
    }
    Ok(non_maximum_suppression(dets, nms_iou))
}

/// Greedy NMS: walk by descending confidence, drop anything overlapping a
/// kept box by more than `iou_threshold`.
pub fn non_maximum_suppression(mut dets: Vec<Detection>, iou_threshold: f64) -> Vec<Detection> {
    dets.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    let mut kept: Vec<Detection> = Vec::with_capacity(dets.len());
    for d in dets {
        if kept.iter().all(|k| iou(&k.bbox, &d.bbox) <= iou_threshold) {
            kept.push(d);
        }
    }
    kept
}
