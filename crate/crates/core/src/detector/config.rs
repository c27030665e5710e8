use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Output strides of the three detection scales, finest first.
pub const STRIDES: [usize; 3] = [8, 16, 32];

/// Stride-2 stages in the backbone; stages 3, 4 and 5 feed the heads.
pub const NUM_STAGES: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// 1 for thermal input, 3 for visible.
    pub in_channels: usize,
    pub stem_width: usize,
    pub stage_widths: Vec<usize>,
    /// Extra residual 3×3 convolutions after every downsampling layer.
    pub backbone_depth: usize,
    pub neck_width: usize,
    /// `(w, h)` anchor sizes in pixels per scale, finest scale first.
    pub anchors: Vec<Vec<(f64, f64)>>,
    pub num_classes: usize,
    pub input_height: usize,
    pub input_width: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            in_channels: 1,
            stem_width: 16,
            stage_widths: vec![32, 64, 128, 256, 512],
            backbone_depth: 1,
            neck_width: 128,
            anchors: vec![
                vec![(10.0, 24.0), (16.0, 40.0), (24.0, 60.0)],
                vec![(32.0, 80.0), (44.0, 108.0), (60.0, 150.0)],
                vec![(80.0, 200.0), (110.0, 270.0), (150.0, 360.0)],
            ],
            num_classes: 1,
            input_height: 512,
            input_width: 640,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let arg = |m: &str| Err(Error::Argument(m.to_string()));
        if self.num_classes != 1 {
            return arg("the detector is single-class (num_classes must be 1)");
        }
        if self.in_channels != 1 && self.in_channels != 3 {
            return arg("detector input must have 1 (thermal) or 3 (visible) channels");
        }
        if self.stage_widths.len() != NUM_STAGES {
            return arg("stage_widths must list exactly 5 widths");
        }
        if self.anchors.len() != STRIDES.len() || self.anchors.iter().any(Vec::is_empty) {
            return arg("anchors must list at least one anchor for each of the 3 scales");
        }
        if self
            .anchors
            .iter()
            .flatten()
            .any(|&(w, h)| !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()))
        {
            return arg("anchor sizes must be strictly positive");
        }
        if self.stem_width == 0 || self.neck_width < 2 || self.stage_widths.contains(&0) {
            return arg("layer widths must be positive (neck_width at least 2)");
        }
        let coarsest = STRIDES[STRIDES.len() - 1];
        if self.input_height % coarsest != 0 || self.input_width % coarsest != 0 {
            return arg("input size must be divisible by the coarsest stride 32");
        }
        Ok(())
    }

    pub fn anchors_per_scale(&self, scale: usize) -> usize {
        self.anchors[scale].len()
    }

    /// Replaces the anchors with k-means clusters of the given box sizes,
    /// `per_scale` anchors for each scale.
    pub fn with_kmeans_anchors(mut self, sizes: &[(f64, f64)], per_scale: usize, seed: u64) -> Self {
        let k = per_scale * STRIDES.len();
        if let Some(mut centers) = kmeans_anchors(sizes, k, seed) {
            centers.sort_by(|a, b| (a.0 * a.1).total_cmp(&(b.0 * b.1)));
            self.anchors = centers.chunks(per_scale).map(<[_]>::to_vec).collect();
        }
        self
    }
}

/// IoU of two boxes sharing a centre, from their sizes only.
pub fn shape_iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = a.0.min(b.0) * a.1.min(b.1);
    inter / (a.0 * a.1 + b.0 * b.1 - inter)
}

/// k-means over `(w, h)` with `1 − IoU` distance and k-means++ seeding.
/// Returns `None` when `sizes` is empty.
pub fn kmeans_anchors(sizes: &[(f64, f64)], k: usize, seed: u64) -> Option<Vec<(f64, f64)>> {
    if sizes.is_empty() || k == 0 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![sizes[rng.random_range(0..sizes.len())]];
    while centers.len() < k {
        let d: Vec<f64> = sizes
            .iter()
            .map(|&s| {
                centers
                    .iter()
                    .map(|&c| 1.0 - shape_iou(s, c))
                    .fold(f64::INFINITY, f64::min)
                    .powi(2)
            })
            .collect();
        let total: f64 = d.iter().sum();
        let pick = if total <= 0.0 {
            rng.random_range(0..sizes.len())
        } else {
            let mut r = rng.random::<f64>() * total;
            d.iter()
                .position(|&v| {
                    r -= v;
                    r <= 0.0
                })
                .unwrap_or(sizes.len() - 1)
        };
        centers.push(sizes[pick]);
    }
    let mut assign = vec![usize::MAX; sizes.len()];
    for _ in 0..100 {
        let mut changed = false;
        for (i, &s) in sizes.iter().enumerate() {
            let best = (0..k)
                .max_by(|&a, &b| shape_iou(s, centers[a]).total_cmp(&shape_iou(s, centers[b])).then(b.cmp(&a)))
                .unwrap();
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<_> = sizes.iter().zip(&assign).filter(|(_, &a)| a == c).map(|(s, _)| *s).collect();
            if !members.is_empty() {
                let n = members.len() as f64;
                *center = (
                    members.iter().map(|m| m.0).sum::<f64>() / n,
                    members.iter().map(|m| m.1).sum::<f64>() / n,
                );
            }
        }
        if !changed {
            break;
        }
    }
    Some(centers)
}
