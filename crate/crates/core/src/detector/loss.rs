//! YOLO-style detection loss: squared error on the sigmoid centre offsets
//! and on the log size ratios of assigned anchors (weighted towards small
//! boxes), plus binary cross-entropy on objectness for every cell except
//! unassigned predictions that already overlap a ground truth well.

use thermsynth_autograd::{Tensor, Var};

use super::config::{DetectorConfig, STRIDES};
use super::decode::{decode_cell, encode_box};
use super::model::VALUES_PER_ANCHOR;
use crate::data::BoundingBox;
use crate::eval::iou;
use crate::{Error, Result};

/// Unassigned predictions overlapping a ground truth above this IoU are
/// left out of the negative objectness term.
pub const IGNORE_IOU: f64 = 0.5;

pub struct DetectionLoss<'g> {
    pub coord: Var<'g>,
    pub objectness: Var<'g>,
    pub total: Var<'g>,
}

/// Constant tensors shaped like one prediction map.
struct Targets {
    coord_mask_xy: Tensor,
    coord_target_xy: Tensor,
    coord_mask_wh: Tensor,
    coord_target_wh: Tensor,
    obj_mask: Tensor,
    obj_target_masked: Tensor,
}

fn build_targets(raw: &Tensor, scale: usize, boxes: &[Vec<BoundingBox>], cfg: &DetectorConfig) -> Result<Targets> {
    let (n, c, gh, gw) = raw.dims4()?;
    let na = cfg.anchors_per_scale(scale);
    if c != na * VALUES_PER_ANCHOR || n != boxes.len() {
        return Err(Error::Shape(format!(
            "prediction map {scale} has shape {:?} for {} targets",
            raw.shape(),
            boxes.len()
        )));
    }
    let plane = gh * gw;
    let len = raw.len();
    let mut t = Targets {
        coord_mask_xy: Tensor::zeros(raw.shape()),
        coord_target_xy: Tensor::zeros(raw.shape()),
        coord_mask_wh: Tensor::zeros(raw.shape()),
        coord_target_wh: Tensor::zeros(raw.shape()),
        obj_mask: Tensor::zeros(raw.shape()),
        obj_target_masked: Tensor::zeros(raw.shape()),
    };
    debug_assert_eq!(len, n * c * plane);
    let at = |b: usize, a: usize, k: usize, row: usize, col: usize| ((b * c + a * VALUES_PER_ANCHOR + k) * plane) + row * gw + col;
    let image_area = (cfg.input_width * cfg.input_height) as f64;
    let d = raw.data();

    for (b, gts) in boxes.iter().enumerate() {
        // Negatives first, with the ignore rule applied on current predictions.
        for a in 0..na {
            for row in 0..gh {
                for col in 0..gw {
                    let v = [0, 1, 2, 3, 4].map(|k| d[at(b, a, k, row, col)]);
                    let (x, y, w, h, _) = decode_cell(v, row, col, STRIDES[scale], cfg.anchors[scale][a]);
                    let pred = BoundingBox {
                        x,
                        y,
                        w,
                        h,
                        occluded: false,
                    };
                    let ignored = gts.iter().any(|g| iou(&pred, g) > IGNORE_IOU);
                    t.obj_mask.data_mut()[at(b, a, 4, row, col)] = if ignored { 0.0 } else { 1.0 };
                }
            }
        }
        for g in gts {
            let enc = encode_box(g, cfg);
            if enc.scale != scale {
                continue;
            }
            let weight = 2.0 - g.w * g.h / image_area;
            let (a, row, col) = (enc.anchor, enc.row, enc.col);
            for (k, target) in [(0, enc.offset.0), (1, enc.offset.1)] {
                t.coord_mask_xy.data_mut()[at(b, a, k, row, col)] = weight;
                t.coord_target_xy.data_mut()[at(b, a, k, row, col)] = target;
            }
            for (k, target) in [(2, enc.log_size.0), (3, enc.log_size.1)] {
                t.coord_mask_wh.data_mut()[at(b, a, k, row, col)] = weight;
                t.coord_target_wh.data_mut()[at(b, a, k, row, col)] = target;
            }
            t.obj_mask.data_mut()[at(b, a, 4, row, col)] = 1.0;
            t.obj_target_masked.data_mut()[at(b, a, 4, row, col)] = 1.0;
        }
    }
    Ok(t)
}

/// Loss summed over cells and averaged over the batch. `boxes[i]` holds
/// the ground truth of sample `i` in input-pixel coordinates.
pub fn detection_loss<'g>(outputs: &[Var<'g>], boxes: &[Vec<BoundingBox>], cfg: &DetectorConfig) -> Result<DetectionLoss<'g>> {
    if outputs.len() != STRIDES.len() {
        return Err(Error::Shape(format!("expected {} prediction maps, got {}", STRIDES.len(), outputs.len())));
    }
    let mut coord: Option<Var<'g>> = None;
    let mut objectness: Option<Var<'g>> = None;
    for (scale, out) in outputs.iter().enumerate() {
        let t = build_targets(&out.value(), scale, boxes, cfg)?;
        let xy = out
            .sigmoid()
            .add_const(&t.coord_target_xy.map(|v| -v))?
            .square()
            .mul_const(&t.coord_mask_xy)?
            .sum();
        let wh = out
            .add_const(&t.coord_target_wh.map(|v| -v))?
            .square()
            .mul_const(&t.coord_mask_wh)?
            .sum();
        // BCE with logits: softplus(x) − y·x.
        let bce = out
            .softplus()
            .mul_const(&t.obj_mask)?
            .sum()
            .sub(out.mul_const(&t.obj_target_masked)?.sum())?;
        let c = xy.add(wh)?;
        coord = Some(match coord {
            Some(acc) => acc.add(c)?,
            None => c,
        });
        objectness = Some(match objectness {
            Some(acc) => acc.add(bce)?,
            None => bce,
        });
    }
    let batch = boxes.len().max(1) as f64;
    let coord = coord.expect("three scales").scale(1.0 / batch);
    let objectness = objectness.expect("three scales").scale(1.0 / batch);
    let total = coord.add(objectness)?;
    Ok(DetectionLoss {
        coord,
        objectness,
        total,
    })
}
