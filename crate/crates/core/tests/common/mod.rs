//! Helpers shared by the integration tests. Besides fixture builders this
//! holds slow reference implementations of the scoring rules, used as
//! oracles.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use thermsynth::data::{BoundingBox, DatasetManifest, FrameRecord, Origin, TimeOfDay};
use thermsynth::detector::Detection;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

pub fn bbox(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
    BoundingBox {
        x,
        y,
        w,
        h,
        occluded: false,
    }
}

pub fn det(x: f64, y: f64, w: f64, h: f64, confidence: f64) -> Detection {
    Detection {
        bbox: bbox(x, y, w, h),
        confidence,
    }
}

/// A manifest of `n` frames that exists only in memory (paths are never read).
pub fn full_scale_manifest(n: usize, origin: Origin) -> DatasetManifest {
    let frames = (0..n)
        .map(|i| FrameRecord {
            frame_id: format!("set00/V000/I{i:05}"),
            frame_index: i as u64,
            time_of_day: if i % 3 == 0 { TimeOfDay::Night } else { TimeOfDay::Day },
            visible_path: PathBuf::from(format!("v/{i}.png")),
            thermal_path: PathBuf::from(format!(
                "{}/{i}.png",
                if origin == Origin::Real { "t" } else { "s" }
            )),
            boxes: vec![bbox(i as f64 % 100.0, 10.0, 20.0, 50.0)],
            origin,
        })
        .collect();
    DatasetManifest {
        name: "mem".into(),
        frames,
        image_height: 512,
        image_width: 640,
    }
}

// ---- reference scoring -------------------------------------------------

/// Overlap computed from explicit corner coordinates.
pub fn oracle_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax0, ay0, ax1, ay1) = (a.x, a.y, a.x + a.w, a.y + a.h);
    let (bx0, by0, bx1, by1) = (b.x, b.y, b.x + b.w, b.y + b.h);
    let w = f64::max(0.0, f64::min(ax1, bx1) - f64::max(ax0, bx0));
    let h = f64::max(0.0, f64::min(ay1, by1) - f64::max(ay0, by0));
    let inter = w * h;
    if inter == 0.0 {
        0.0
    } else {
        inter / (a.w * a.h + b.w * b.h - inter)
    }
}

/// Counts `(tp, fp, fn)` for one frame. Detections are visited by a
/// stable descending-confidence sort; each claims the free ground truth
/// of largest overlap, ignore regions absorb leftovers.
pub fn oracle_match(dets: &[Detection], gts: &[BoundingBox], ignore: &[BoundingBox], thr: f64) -> (usize, usize, usize) {
    let mut idx: Vec<usize> = (0..dets.len()).collect();
    // Insertion sort keeps ties in input order without relying on the
    // library's comparator.
    for i in 1..idx.len() {
        let mut j = i;
        while j > 0 && dets[idx[j - 1]].confidence < dets[idx[j]].confidence {
            idx.swap(j - 1, j);
            j -= 1;
        }
    }
    let mut free = vec![true; gts.len()];
    let (mut tp, mut fp) = (0, 0);
    for &d in &idx {
        let mut best = usize::MAX;
        let mut best_v = -1.0;
        for g in 0..gts.len() {
            let v = oracle_iou(&dets[d].bbox, &gts[g]);
            if free[g] && v >= thr && v > best_v {
                best = g;
                best_v = v;
            }
        }
        if best != usize::MAX {
            free[best] = false;
            tp += 1;
        } else if !ignore.iter().any(|ig| oracle_iou(&dets[d].bbox, ig) >= thr) {
            fp += 1;
        }
    }
    (tp, fp, gts.len() - tp)
}

pub struct OracleFrame {
    pub dets: Vec<Detection>,
    pub gts: Vec<BoundingBox>,
    pub ignore: Vec<BoundingBox>,
}

/// Exhaustive sweep: one `(fppi, miss_rate)` point per distinct confidence,
/// each from re-matching every frame with only the detections at or above
/// that confidence. Starts with the empty detector.
pub fn oracle_curve(frames: &[OracleFrame], thr: f64) -> Vec<(f64, f64)> {
    let mut confs: Vec<f64> = frames.iter().flat_map(|f| f.dets.iter().map(|d| d.confidence)).collect();
    confs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    confs.dedup();
    let n_gt: usize = frames.iter().map(|f| f.gts.len()).sum();
    let mut out = vec![(0.0, 1.0)];
    for c in confs {
        let (mut tp, mut fp) = (0, 0);
        for f in frames {
            let kept: Vec<Detection> = f.dets.iter().copied().filter(|d| d.confidence >= c).collect();
            let (a, b, _) = oracle_match(&kept, &f.gts, &f.ignore, thr);
            tp += a;
            fp += b;
        }
        out.push((fp as f64 / frames.len() as f64, (n_gt - tp) as f64 / n_gt as f64));
    }
    out
}

/// Geometric mean over the nine references `10^(-2 + i/4)` of the lowest
/// miss rate reachable without exceeding that FPPI.
pub fn oracle_lamr(points: &[(f64, f64)]) -> f64 {
    let mut acc = 0.0;
    for i in 0..9 {
        let r = 10f64.powf(-2.0 + i as f64 / 4.0);
        let mr = points
            .iter()
            .filter(|p| p.0 <= r)
            .map(|p| p.1)
            .fold(1.0, f64::min);
        acc += mr.max(1e-10).ln();
    }
    (acc / 9.0).exp()
}
