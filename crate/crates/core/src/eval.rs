//! Miss-rate / FPPI evaluation under the "reasonable" pedestrian setting.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thermsynth_autograd::par;

use crate::checkpoint::write_atomic;
use crate::data::{BoundingBox, DatasetManifest, Image, TimeOfDay};
use crate::detector::Detection;
use crate::{Error, Result};

/// Floor applied to miss rates before taking logs.
pub const LAMR_EPSILON: f64 = 1e-10;

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.right().min(b.right()) - a.x.max(b.x)).max(0.0);
    let ih = (a.bottom().min(b.bottom()) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Per-frame matching outcome. Indices refer to the input slices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MatchResult {
    /// `(detection, ground truth, iou)`.
    pub true_positives: Vec<(usize, usize, f64)>,
    pub false_positives: Vec<usize>,
    pub false_negatives: Vec<usize>,
    /// Detections absorbed by an ignore region (neither TP nor FP).
    pub ignored: Vec<usize>,
}

impl MatchResult {
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.true_positives.len(), self.false_positives.len(), self.false_negatives.len())
    }
}

/// Detection indices by descending confidence; equal confidences keep
/// their input order.
fn by_confidence(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));
    order
}

/// Greedy matching: highest-confidence detection first, each taking the
/// still-unmatched ground truth of highest IoU at or above `iou_threshold`.
pub fn match_frame(dets: &[Detection], gts: &[BoundingBox], iou_threshold: f64) -> MatchResult {
    match_frame_with_ignore(dets, gts, &[], iou_threshold)
}

/// [`match_frame`] with ignore regions: a detection that finds no ground
/// truth but overlaps an ignore region by at least `iou_threshold` is
/// dropped instead of counted as a false positive.
pub fn match_frame_with_ignore(
    dets: &[Detection],
    gts: &[BoundingBox],
    ignore: &[BoundingBox],
    iou_threshold: f64,
) -> MatchResult {
    let mut taken = vec![false; gts.len()];
    let mut r = MatchResult::default();
    for d in by_confidence(dets) {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let v = iou(&dets[d].bbox, gt);
            if v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        match best {
            Some((g, v)) => {
                taken[g] = true;
                r.true_positives.push((d, g, v));
            }
            None if ignore.iter().any(|ig| iou(&dets[d].bbox, ig) >= iou_threshold) => r.ignored.push(d),
            None => r.false_positives.push(d),
        }
    }
    r.false_negatives = (0..gts.len()).filter(|&g| !taken[g]).collect();
    r
}

/// Everything the evaluator needs about one frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrameEval {
    pub detections: Vec<Detection>,
    pub ground_truth: Vec<BoundingBox>,
    pub ignore: Vec<BoundingBox>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub fppi: f64,
    pub miss_rate: f64,
    /// Lowest confidence admitted at this point (∞ for the empty start).
    pub threshold: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MrFppiCurve {
    pub points: Vec<CurvePoint>,
}

/// Sweeps the confidence threshold over every distinct detection score.
/// The first point is the empty detector (FPPI 0, miss rate 1).
pub fn mr_fppi_curve(frames: &[FrameEval], iou_threshold: f64) -> Result<MrFppiCurve> {
    if frames.is_empty() {
        return Err(Error::Evaluation("cannot build a curve over zero images".into()));
    }
    let total_gt: usize = frames.iter().map(|f| f.ground_truth.len()).sum();
    if total_gt == 0 {
        return Err(Error::Evaluation("subset has no ground truth; miss rate is undefined".into()));
    }
    // Greedy matching in confidence order is prefix-stable, so one match
    // per frame labels every detection for all thresholds at once.
    let labelled: Vec<Vec<(f64, bool, bool)>> = par::map_slice(frames, |f| {
        let m = match_frame_with_ignore(&f.detections, &f.ground_truth, &f.ignore, iou_threshold);
        let mut v: Vec<(f64, bool, bool)> = Vec::with_capacity(f.detections.len());
        v.extend(m.true_positives.iter().map(|&(d, _, _)| (f.detections[d].confidence, true, false)));
        v.extend(m.false_positives.iter().map(|&d| (f.detections[d].confidence, false, true)));
        v.extend(m.ignored.iter().map(|&d| (f.detections[d].confidence, false, false)));
        v
    });
    let mut all: Vec<(f64, bool, bool)> = labelled.into_iter().flatten().collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));

    let n_img = frames.len() as f64;
    let gt = total_gt as f64;
    let mut points = vec![CurvePoint {
        fppi: 0.0,
        miss_rate: 1.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let conf = all[i].0;
        while i < all.len() && all[i].0 == conf {
            tp += usize::from(all[i].1);
            fp += usize::from(all[i].2);
            i += 1;
        }
        points.push(CurvePoint {
            fppi: fp as f64 / n_img,
            miss_rate: (total_gt - tp) as f64 / gt,
            threshold: conf,
        });
    }
    Ok(MrFppiCurve { points })
}

/// `n` log-uniform reference FPPI values spanning `[min, max]`.
pub fn reference_points(fppi_min: f64, fppi_max: f64, n: usize) -> Vec<f64> {
    let (lo, hi) = (fppi_min.log10(), fppi_max.log10());
    if n == 1 {
        return vec![fppi_min];
    }
    (0..n).map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64)).collect()
}

/// Miss rate of the last curve point whose FPPI does not exceed `fppi`,
/// or 1 when there is none.
pub fn miss_rate_at(curve: &MrFppiCurve, fppi: f64) -> f64 {
    curve
        .points
        .iter()
        .rev()
        .find(|p| p.fppi <= fppi)
        .map_or(1.0, |p| p.miss_rate)
}

/// Geometric mean of the miss rate at `num_points` log-spaced FPPI values.
pub fn log_average_miss_rate(curve: &MrFppiCurve, fppi_min: f64, fppi_max: f64, num_points: usize) -> Result<f64> {
    if !(fppi_min > 0.0 && fppi_min < fppi_max && fppi_max.is_finite()) || num_points == 0 {
        return Err(Error::Argument(format!(
            "log-average range needs 0 < fppi_min < fppi_max and at least one point, got [{fppi_min}, {fppi_max}] with {num_points}"
        )));
    }
    if curve.points.is_empty() {
        return Err(Error::Evaluation("empty miss-rate curve".into()));
    }
    let refs = reference_points(fppi_min, fppi_max, num_points);
    let mean_log = refs
        .iter()
        .map(|&r| miss_rate_at(curve, r).max(LAMR_EPSILON).ln())
        .sum::<f64>()
        / refs.len() as f64;
    Ok(mean_log.exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub iou_threshold: f64,
    /// Ground truths shorter than this become ignore regions.
    pub min_height: f64,
    /// Whether occluded ground truths become ignore regions.
    pub drop_occluded: bool,
    pub fppi_min: f64,
    pub fppi_max: f64,
    pub num_points: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            min_height: 50.0,
            drop_occluded: true,
            fppi_min: 0.01,
            fppi_max: 1.0,
            num_points: 9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetReport {
    pub name: String,
    pub lamr: f64,
    pub images: usize,
    pub ground_truths: usize,
    pub ignored_regions: usize,
    pub detections: usize,
    pub curve: MrFppiCurve,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub all: SubsetReport,
    /// `None` when the subset has no frames or no ground truth.
    pub day: Option<SubsetReport>,
    pub night: Option<SubsetReport>,
}

impl EvalReport {
    pub fn lamr_all(&self) -> f64 {
        self.all.lamr
    }

    pub fn lamr_day(&self) -> Option<f64> {
        self.day.as_ref().map(|s| s.lamr)
    }

    pub fn lamr_night(&self) -> Option<f64> {
        self.night.as_ref().map(|s| s.lamr)
    }

    pub fn subsets(&self) -> impl Iterator<Item = &SubsetReport> {
        std::iter::once(&self.all).chain(self.day.as_ref()).chain(self.night.as_ref())
    }
}

/// Splits annotations into evaluated ground truth and ignore regions.
pub fn reasonable_split(boxes: &[BoundingBox], settings: &EvalSettings) -> (Vec<BoundingBox>, Vec<BoundingBox>) {
    boxes
        .iter()
        .partition(|b| b.h >= settings.min_height && !(settings.drop_occluded && b.occluded))
}

fn subset_report(name: &str, frames: &[&FrameEval], settings: &EvalSettings) -> Result<SubsetReport> {
    let owned: Vec<FrameEval> = frames.iter().map(|f| (*f).clone()).collect();
    let curve = mr_fppi_curve(&owned, settings.iou_threshold)?;
    let lamr = log_average_miss_rate(&curve, settings.fppi_min, settings.fppi_max, settings.num_points)?;
    Ok(SubsetReport {
        name: name.to_string(),
        lamr,
        images: frames.len(),
        ground_truths: frames.iter().map(|f| f.ground_truth.len()).sum(),
        ignored_regions: frames.iter().map(|f| f.ignore.len()).sum(),
        detections: frames.iter().map(|f| f.detections.len()).sum(),
        curve,
    })
}

/// Scores `detections` against `manifest` for all, day and night frames.
pub fn evaluate(detections: &[(String, Detection)], manifest: &DatasetManifest, settings: &EvalSettings) -> Result<EvalReport> {
    let known: HashMap<&str, usize> = manifest.frames.iter().enumerate().map(|(i, f)| (f.frame_id.as_str(), i)).collect();
    let unknown: BTreeSet<&str> = detections
        .iter()
        .map(|(id, _)| id.as_str())
        .filter(|id| !known.contains_key(id))
        .collect();
    if !unknown.is_empty() {
        return Err(Error::Validation(format!(
            "detections reference frames missing from `{}`: {}",
            manifest.name,
            unknown.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    let mut frames: Vec<FrameEval> = manifest
        .frames
        .iter()
        .map(|f| {
            let (ground_truth, ignore) = reasonable_split(&f.boxes, settings);
            FrameEval {
                detections: Vec::new(),
                ground_truth,
                ignore,
            }
        })
        .collect();
    for (id, d) in detections {
        frames[known[id.as_str()]].detections.push(*d);
    }
    let pick = |tod: Option<TimeOfDay>| -> Vec<&FrameEval> {
        frames
            .iter()
            .zip(&manifest.frames)
            .filter(|(_, f)| tod.is_none_or(|t| f.time_of_day == t))
            .map(|(e, _)| e)
            .collect()
    };
    let optional = |name: &str, tod| -> Result<Option<SubsetReport>> {
        let sel = pick(Some(tod));
        if sel.is_empty() || sel.iter().all(|f| f.ground_truth.is_empty()) {
            return Ok(None);
        }
        subset_report(name, &sel, settings).map(Some)
    };
    Ok(EvalReport {
        all: subset_report("all", &pick(None), settings)?,
        day: optional("day", TimeOfDay::Day)?,
        night: optional("night", TimeOfDay::Night)?,
    })
}

/// Matching outcome of every frame under the reasonable setting.
pub fn match_manifest(
    detections: &[(String, Detection)],
    manifest: &DatasetManifest,
    settings: &EvalSettings,
) -> Vec<(FrameEval, MatchResult)> {
    let mut per: HashMap<&str, Vec<Detection>> = HashMap::new();
    for (id, d) in detections {
        per.entry(id.as_str()).or_default().push(*d);
    }
    manifest
        .frames
        .iter()
        .map(|f| {
            let (ground_truth, ignore) = reasonable_split(&f.boxes, settings);
            let fe = FrameEval {
                detections: per.remove(f.frame_id.as_str()).unwrap_or_default(),
                ground_truth,
                ignore,
            };
            let m = match_frame_with_ignore(&fe.detections, &fe.ground_truth, &fe.ignore, settings.iou_threshold);
            (fe, m)
        })
        .collect()
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Writes `frame_id TAB x TAB y TAB w TAB h TAB confidence` lines, after
/// optional `# ` header lines.
pub fn write_detections(path: &Path, dets: &[(String, Detection)], header: &[String]) -> Result<()> {
    let mut s = String::new();
    for h in header {
        writeln!(s, "# {h}").expect("string write");
    }
    for (id, d) in dets {
        let b = &d.bbox;
        writeln!(
            s,
            "{id}\t{}\t{}\t{}\t{}\t{}",
            fmt_f64(b.x),
            fmt_f64(b.y),
            fmt_f64(b.w),
            fmt_f64(b.h),
            fmt_f64(d.confidence)
        )
        .expect("string write");
    }
    write_atomic(path, s.as_bytes())
}

pub fn read_detections(path: &Path) -> Result<Vec<(String, Detection)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 6 {
            return Err(err(format!("expected 6 tab-separated fields, found {}", cols.len())));
        }
        let num = |k: usize| -> Result<f64> {
            cols[k]
                .trim()
                .parse::<f64>()
                .map_err(|_| err(format!("field {} `{}` is not a number", k + 1, cols[k])))
        };
        let bbox = BoundingBox::new(num(1)?, num(2)?, num(3)?, num(4)?, false).map_err(|e| err(e.to_string()))?;
        let confidence = num(5)?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(err(format!("confidence {confidence} outside [0, 1]")));
        }
        out.push((cols[0].to_string(), Detection { bbox, confidence }));
    }
    Ok(out)
}

/// Two columns, `fppi TAB miss_rate`, one point per line.
pub fn write_curve(path: &Path, curve: &MrFppiCurve) -> Result<()> {
    let mut s = String::new();
    for p in &curve.points {
        writeln!(s, "{}\t{}", fmt_f64(p.fppi), fmt_f64(p.miss_rate)).expect("string write");
    }
    write_atomic(path, s.as_bytes())
}

pub fn read_curve(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let err = || Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: "expected two numeric columns".into(),
            };
            let mut it = l.split('\t').map(|c| c.trim().parse::<f64>());
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(a)), Some(Ok(b)), None) => Ok((a, b)),
                _ => Err(err()),
            }
        })
        .collect()
}

/// Plain-text report: `# key: value` provenance lines, then one
/// `subset TAB lamr TAB images TAB ground_truths TAB detections` row per
/// subset (`n/a` for a subset without ground truth).
pub fn report_to_string(report: &EvalReport, header: &[String]) -> String {
    let mut s = String::new();
    for h in header {
        writeln!(s, "# {h}").expect("string write");
    }
    writeln!(s, "subset\tlamr\timages\tground_truths\tignored\tdetections").expect("string write");
    let row = |s: &mut String, name: &str, r: Option<&SubsetReport>| match r {
        Some(r) => writeln!(
            s,
            "{name}\t{:.6}\t{}\t{}\t{}\t{}",
            r.lamr, r.images, r.ground_truths, r.ignored_regions, r.detections
        ),
        None => writeln!(s, "{name}\tn/a\t0\t0\t0\t0"),
    }
    .expect("string write");
    row(&mut s, "all", Some(&report.all));
    row(&mut s, "day", report.day.as_ref());
    row(&mut s, "night", report.night.as_ref());
    s
}

pub const COLOR_TRUE_POSITIVE: [f64; 3] = [0.0, 0.0, 1.0];
pub const COLOR_FALSE_NEGATIVE: [f64; 3] = [0.0, 1.0, 0.0];
pub const COLOR_FALSE_POSITIVE: [f64; 3] = [1.0, 0.0, 0.0];

fn draw_box(img: &mut Image, b: &BoundingBox, color: [f64; 3]) {
    if img.width == 0 || img.height == 0 {
        return;
    }
    let clampx = |v: f64| (v.round().max(0.0) as usize).min(img.width - 1);
    let clampy = |v: f64| (v.round().max(0.0) as usize).min(img.height - 1);
    let (x0, x1) = (clampx(b.x), clampx(b.right() - 1.0));
    let (y0, y1) = (clampy(b.y), clampy(b.bottom() - 1.0));
    for x in x0..=x1 {
        for y in [y0, y1] {
            for (c, v) in color.iter().enumerate() {
                img.set(c, y, x, *v);
            }
        }
    }
    for y in y0..=y1 {
        for x in [x0, x1] {
            for (c, v) in color.iter().enumerate() {
                img.set(c, y, x, *v);
            }
        }
    }
}

/// Colour overlay of one frame: true positives blue, missed ground truth
/// green, false positives red. Ignored detections are not drawn.
pub fn draw_overlay(thermal: &Image, frame: &FrameEval, m: &MatchResult) -> Image {
    let gray = thermal.to_gray();
    let mut data = Vec::with_capacity(gray.data.len() * 3);
    for _ in 0..3 {
        data.extend_from_slice(&gray.data);
    }
    let mut img = Image {
        height: gray.height,
        width: gray.width,
        channels: 3,
        data,
    };
    for &g in &m.false_negatives {
        draw_box(&mut img, &frame.ground_truth[g], COLOR_FALSE_NEGATIVE);
    }
    for &d in &m.false_positives {
        draw_box(&mut img, &frame.detections[d].bbox, COLOR_FALSE_POSITIVE);
    }
    for &(d, _, _) in &m.true_positives {
        draw_box(&mut img, &frame.detections[d].bbox, COLOR_TRUE_POSITIVE);
    }
    img
}
