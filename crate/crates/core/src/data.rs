//! Paired visible/thermal frames with their annotations, plus the manifest
//! file format.
//!
//! A manifest is a UTF-8 text file with one frame per line:
//!
//! ```text
//! frame_id<TAB>frame_index<TAB>day|night<TAB>visible_path<TAB>thermal_path<TAB>x,y,w,h,occ;...
//! ```
//!
//! Paths are relative to the manifest's directory. Lines starting with `#`
//! are comments. An optional seventh column `real|synthetic` records the
//! frame origin; it is written only for synthetic frames.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thermsynth_autograd::{par, Tensor};

use crate::{Error, Result};

/// Axis-aligned box in pixel coordinates; `(x, y)` is the top-left corner.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub occluded: bool,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64, occluded: bool) -> Result<Self> {
        if !(w > 0.0 && h > 0.0) || !x.is_finite() || !y.is_finite() || !w.is_finite() || !h.is_finite() {
            return Err(Error::Validation(format!(
                "box ({x}, {y}, {w}, {h}) must have finite coordinates and positive size"
            )));
        }
        Ok(Self {
            x,
            y,
            w,
            h,
            occluded,
        })
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Intersects the box with `[0, width] × [0, height]`. Returns `None`
    /// when nothing of the box remains inside the image.
    pub fn clamp_to(&self, width: f64, height: f64) -> Option<Self> {
        let x0 = self.x.clamp(0.0, width);
        let y0 = self.y.clamp(0.0, height);
        let x1 = self.right().clamp(0.0, width);
        let y1 = self.bottom().clamp(0.0, height);
        (x1 > x0 && y1 > y0).then(|| Self {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
            occluded: self.occluded,
        })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            x: self.x * factor,
            y: self.y * factor,
            w: self.w * factor,
            h: self.h * factor,
            occluded: self.occluded,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TimeOfDay {
    Day,
    Night,
}

impl TimeOfDay {
    pub fn as_str(&self) -> &'static str {
        match self {
            TimeOfDay::Day => "day",
            TimeOfDay::Night => "night",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Origin {
    Real,
    Synthetic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecord {
    pub frame_id: String,
    /// Position within the source video.
    pub frame_index: u64,
    pub time_of_day: TimeOfDay,
    pub visible_path: PathBuf,
    pub thermal_path: PathBuf,
    pub boxes: Vec<BoundingBox>,
    pub origin: Origin,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub frames: Vec<FrameRecord>,
    pub image_height: usize,
    pub image_width: usize,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_ids(&self) -> impl Iterator<Item = &str> {
        self.frames.iter().map(|f| f.frame_id.as_str())
    }

    pub fn find(&self, frame_id: &str) -> Option<&FrameRecord> {
        self.frames.iter().find(|f| f.frame_id == frame_id)
    }

    fn with_frames(&self, name: String, frames: Vec<FrameRecord>) -> Self {
        Self {
            name,
            frames,
            image_height: self.image_height,
            image_width: self.image_width,
        }
    }

    /// Checks shared dimensions bookkeeping and frame-id uniqueness.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for f in &self.frames {
            if !seen.insert(f.frame_id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate frame_id `{}` in manifest `{}`",
                    f.frame_id, self.name
                )));
            }
        }
        Ok(())
    }
}

/// Dense image with values in `[0, 1]`, stored channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Shape(format!("images have 1 or 3 channels, got {channels}")));
        }
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{height}x{width}x{channels} image needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value.clamp(0.0, 1.0); height * width * channels],
        }
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v.clamp(0.0, 1.0);
    }

    /// `1 × C × H × W` tensor view.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(&[1, self.channels, self.height, self.width], self.data.clone())
            .expect("consistent image buffer")
    }

    /// Builds an image from sample `index` of a batch, clamping into `[0, 1]`.
    pub fn from_tensor(t: &Tensor, index: usize) -> Result<Self> {
        let (n, c, h, w) = t.dims4()?;
        if index >= n {
            return Err(Error::Shape(format!("sample {index} out of batch {n}")));
        }
        let per = c * h * w;
        let data = t.data()[index * per..(index + 1) * per]
            .iter()
            .map(|v| v.clamp(0.0, 1.0))
            .collect();
        Image::new(h, w, c, data)
    }

    /// Luma conversion (ITU-R BT.601 weights); single-channel images pass
    /// through unchanged.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let hw = self.height * self.width;
        let data = (0..hw)
            .map(|i| 0.299 * self.data[i] + 0.587 * self.data[hw + i] + 0.114 * self.data[2 * hw + i])
            .collect();
        Image {
            height: self.height,
            width: self.width,
            channels: 1,
            data,
        }
    }
}

fn image_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

fn open_image(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|e| image_err(path, e))
}

/// Loads a visible frame as a 3-channel image.
pub fn load_visible(path: &Path) -> Result<Image> {
    let rgb = open_image(path)?.to_rgb32f();
    let (w, h) = rgb.dimensions();
    let (w, h) = (w as usize, h as usize);
    let mut data = vec![0.0; 3 * h * w];
    for (x, y, px) in rgb.enumerate_pixels() {
        for c in 0..3 {
            data[(c * h + y as usize) * w + x as usize] = f64::from(px.0[c]).clamp(0.0, 1.0);
        }
    }
    Image::new(h, w, 3, data)
}

/// Loads a thermal frame as a 1-channel image. 16-bit grayscale is read at
/// full precision.
pub fn load_thermal(path: &Path) -> Result<Image> {
    let img = open_image(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        DynamicImage::ImageLuma16(buf) => buf.pixels().map(|p| f64::from(p.0[0]) / 65535.0).collect(),
        DynamicImage::ImageLuma8(buf) => buf.pixels().map(|p| f64::from(p.0[0]) / 255.0).collect(),
        other => other
            .to_luma32f()
            .pixels()
            .map(|p| f64::from(p.0[0]).clamp(0.0, 1.0))
            .collect(),
    };
    Image::new(h, w, 1, data)
}

pub fn image_dimensions(path: &Path) -> Result<(usize, usize)> {
    let (w, h) = image::image_dimensions(path).map_err(|e| image_err(path, e))?;
    Ok((h as usize, w as usize))
}

/// Writes a single-channel image as 16-bit grayscale PNG.
pub fn save_gray16(img: &Image, path: &Path) -> Result<()> {
    if img.channels != 1 {
        return Err(Error::Shape(format!("expected 1 channel, got {}", img.channels)));
    }
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(img.width as u32, img.height as u32, |x, y| {
        Luma([(img.get(0, y as usize, x as usize) * 65535.0).round() as u16])
    });
    buf.save(path).map_err(|e| image_err(path, e))
}

/// Writes an image as 8-bit PNG (gray or RGB by channel count).
pub fn save_png8(img: &Image, path: &Path) -> Result<()> {
    let q = |v: f64| (v * 255.0).round() as u8;
    let (w, h) = (img.width as u32, img.height as u32);
    let res = if img.channels == 1 {
        ImageBuffer::<Luma<u8>, Vec<u8>>::from_fn(w, h, |x, y| Luma([q(img.get(0, y as usize, x as usize))]))
            .save(path)
    } else {
        ImageBuffer::<Rgb<u8>, Vec<u8>>::from_fn(w, h, |x, y| {
            Rgb([0, 1, 2].map(|c| q(img.get(c, y as usize, x as usize))))
        })
        .save(path)
    };
    res.map_err(|e| image_err(path, e))
}

fn parse_box(field: &str) -> std::result::Result<BoundingBox, String> {
    let parts: Vec<&str> = field.split(',').collect();
    if parts.len() != 5 {
        return Err(format!("box `{field}` must have 5 comma-separated fields"));
    }
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("bad number `{s}` in box `{field}`"));
    let occluded = match parts[4].trim() {
        "0" => false,
        "1" => true,
        other => return Err(format!("occlusion flag must be 0 or 1, got `{other}`")),
    };
    BoundingBox::new(num(parts[0])?, num(parts[1])?, num(parts[2])?, num(parts[3])?, occluded)
        .map_err(|e| e.to_string())
}

struct RawRow {
    line: usize,
    record: FrameRecord,
}

fn parse_row(line: &str, base: &Path) -> std::result::Result<FrameRecord, String> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 6 && cols.len() != 7 {
        return Err(format!("expected 6 tab-separated fields, found {}", cols.len()));
    }
    let frame_id = cols[0].to_string();
    if frame_id.is_empty() {
        return Err("empty frame_id".into());
    }
    let frame_index = cols[1]
        .parse::<u64>()
        .map_err(|_| format!("frame_index `{}` is not a non-negative integer", cols[1]))?;
    let time_of_day = match cols[2] {
        "day" => TimeOfDay::Day,
        "night" => TimeOfDay::Night,
        other => return Err(format!("time of day must be `day` or `night`, got `{other}`")),
    };
    let boxes = if cols[5].trim().is_empty() {
        Vec::new()
    } else {
        cols[5].split(';').map(parse_box).collect::<std::result::Result<_, _>>()?
    };
    let origin = match cols.get(6).copied() {
        None | Some("real") => Origin::Real,
        Some("synthetic") => Origin::Synthetic,
        Some(other) => return Err(format!("origin must be `real` or `synthetic`, got `{other}`")),
    };
    Ok(FrameRecord {
        frame_id,
        frame_index,
        time_of_day,
        visible_path: base.join(cols[3]),
        thermal_path: base.join(cols[4]),
        boxes,
        origin,
    })
}

/// Reads a manifest and checks that every visible/thermal pair lines up.
/// Boxes are clamped to the image.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let record = parse_row(trimmed, &base).map_err(|msg| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg,
        })?;
        rows.push(RawRow { line: line_no, record });
    }

    let dims = par::map_slice(&rows, |row| -> Result<(usize, usize)> {
        let vis = image_dimensions(&row.record.visible_path)?;
        let th = image_dimensions(&row.record.thermal_path)?;
        if vis != th {
            return Err(Error::Validation(format!(
                "line {}: frame `{}` visible is {}x{} but thermal is {}x{}",
                row.line, row.record.frame_id, vis.0, vis.1, th.0, th.1
            )));
        }
        Ok(vis)
    });

    let mut size = None;
    let mut frames = Vec::with_capacity(rows.len());
    for (row, dim) in rows.into_iter().zip(dims) {
        let (h, w) = dim?;
        match size {
            None => size = Some((h, w)),
            Some(s) if s != (h, w) => {
                return Err(Error::Validation(format!(
                    "line {}: frame `{}` is {h}x{w}, manifest frames are {}x{}",
                    row.line, row.record.frame_id, s.0, s.1
                )))
            }
            _ => {}
        }
        let mut record = row.record;
        let mut boxes = Vec::with_capacity(record.boxes.len());
        for b in &record.boxes {
            match b.clamp_to(w as f64, h as f64) {
                Some(c) => boxes.push(c),
                None => {
                    return Err(Error::Validation(format!(
                        "line {}: box ({}, {}, {}, {}) lies outside the {h}x{w} image",
                        row.line, b.x, b.y, b.w, b.h
                    )))
                }
            }
        }
        record.boxes = boxes;
        frames.push(record);
    }
    let (image_height, image_width) = size.unwrap_or((0, 0));
    let manifest = DatasetManifest {
        name: path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        frames,
        image_height,
        image_width,
    };
    manifest.validate()?;
    Ok(manifest)
}

/// `path` expressed relative to `base` (with `..` steps when needed) so a
/// manifest written anywhere still resolves its images.
fn relative_to(path: &Path, base: &Path) -> PathBuf {
    if let Ok(p) = path.strip_prefix(base) {
        return p.to_path_buf();
    }
    match (std::path::absolute(path), std::path::absolute(base)) {
        (Ok(p), Ok(b)) => pathdiff::diff_paths(&p, &b).unwrap_or(p),
        _ => path.to_path_buf(),
    }
}

fn path_field(p: &Path) -> Result<String> {
    let s = p.to_string_lossy();
    if s.contains('\t') || s.contains('\n') {
        return Err(Error::Validation(format!("path `{s}` contains a tab or newline")));
    }
    Ok(s.into_owned())
}

/// Serialises a manifest. `header` lines are emitted as `#` comments.
pub fn manifest_to_string(m: &DatasetManifest, base: &Path, header: &[String]) -> Result<String> {
    let mut out = String::new();
    for h in header {
        writeln!(out, "# {h}").unwrap();
    }
    for f in &m.frames {
        if f.frame_id.contains(['\t', '\n']) || f.frame_id.starts_with('#') {
            return Err(Error::Validation(format!("frame_id `{}` cannot be serialised", f.frame_id)));
        }
        let boxes = f
            .boxes
            .iter()
            .map(|b| format!("{},{},{},{},{}", b.x, b.y, b.w, b.h, u8::from(b.occluded)))
            .collect::<Vec<_>>()
            .join(";");
        write!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            f.frame_id,
            f.frame_index,
            f.time_of_day.as_str(),
            path_field(&relative_to(&f.visible_path, base))?,
            path_field(&relative_to(&f.thermal_path, base))?,
            boxes
        )
        .unwrap();
        if f.origin == Origin::Synthetic {
            out.push_str("\tsynthetic");
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes a manifest atomically (temp file then rename).
pub fn write_manifest(m: &DatasetManifest, path: &Path, header: &[String]) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new(""));
    let text = manifest_to_string(m, base, header)?;
    crate::checkpoint::write_atomic(path, text.as_bytes())
}

/// Keeps frames whose `frame_index` is a multiple of `stride`.
pub fn sample_frames(m: &DatasetManifest, stride: u64) -> Result<DatasetManifest> {
    if stride < 1 {
        return Err(Error::Argument("stride must be at least 1".into()));
    }
    let frames = m.frames.iter().filter(|f| f.frame_index % stride == 0).cloned().collect();
    Ok(m.with_frames(m.name.clone(), frames))
}

/// Drops annotation instances shorter than `min_height` (strictly) and,
/// optionally, occluded ones. Frames are kept even when no boxes remain.
pub fn filter_annotations(m: &DatasetManifest, min_height: f64, drop_occluded: bool) -> Result<DatasetManifest> {
    if !(min_height >= 0.0) {
        return Err(Error::Argument(format!("min_height must be >= 0, got {min_height}")));
    }
    let frames = m
        .frames
        .iter()
        .map(|f| FrameRecord {
            boxes: f
                .boxes
                .iter()
                .filter(|b| b.h >= min_height && !(drop_occluded && b.occluded))
                .copied()
                .collect(),
            ..f.clone()
        })
        .collect();
    Ok(m.with_frames(m.name.clone(), frames))
}

/// Seeded random partition into `(train, validation)`; the validation part
/// holds `round(fraction · N)` frames. Both parts keep the input order.
pub fn split_validation(m: &DatasetManifest, fraction: f64, seed: u64) -> Result<(DatasetManifest, DatasetManifest)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Argument(format!("validation fraction must be in (0, 1), got {fraction}")));
    }
    let n = m.frames.len();
    let n_val = (fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_val = vec![false; n];
    for &i in &order[..n_val] {
        is_val[i] = true;
    }
    let (val, train): (Vec<_>, Vec<_>) = m.frames.iter().cloned().zip(is_val).partition(|(_, v)| *v);
    let strip = |v: Vec<(FrameRecord, bool)>| v.into_iter().map(|(f, _)| f).collect();
    Ok((
        m.with_frames(format!("{}.train", m.name), strip(train)),
        m.with_frames(format!("{}.val", m.name), strip(val)),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn frame(id: &str, index: u64, heights: &[f64]) -> FrameRecord {
        FrameRecord {
            frame_id: id.to_string(),
            frame_index: index,
            time_of_day: if index % 2 == 0 { TimeOfDay::Day } else { TimeOfDay::Night },
            visible_path: PathBuf::from(format!("/v/{id}.png")),
            thermal_path: PathBuf::from(format!("/t/{id}.png")),
            boxes: heights
                .iter()
                .map(|&h| BoundingBox::new(1.0, 1.0, 4.0, h, false).unwrap())
                .collect(),
            origin: Origin::Real,
        }
    }

    fn manifest(n: u64) -> DatasetManifest {
        DatasetManifest {
            name: "m".into(),
            frames: (0..n).map(|i| frame(&format!("f{i}"), i, &[10.0])).collect(),
            image_height: 64,
            image_width: 64,
        }
    }

    fn indices(m: &DatasetManifest) -> Vec<u64> {
        m.frames.iter().map(|f| f.frame_index).collect()
    }

    #[test]
    fn sampling_keeps_multiples_of_stride() {
        assert_eq!(indices(&sample_frames(&manifest(10), 2).unwrap()), vec![0, 2, 4, 6, 8]);
        assert_eq!(indices(&sample_frames(&manifest(7), 3).unwrap()), vec![0, 3, 6]);
        assert_eq!(sample_frames(&manifest(7), 1).unwrap(), manifest(7));
        assert!(matches!(sample_frames(&manifest(3), 0), Err(Error::Argument(_))));
    }

    #[test]
    fn height_threshold_is_exclusive() {
        let m = DatasetManifest {
            frames: vec![frame("a", 0, &[40.0, 50.0, 60.0])],
            ..manifest(0)
        };
        let out = filter_annotations(&m, 50.0, false).unwrap();
        let hs: Vec<f64> = out.frames[0].boxes.iter().map(|b| b.h).collect();
        assert_eq!(hs, vec![50.0, 60.0]);
        assert_eq!(filter_annotations(&m, 0.0, false).unwrap(), m);
        assert!(filter_annotations(&m, -1.0, false).is_err());
    }

    #[test]
    fn fully_occluded_frame_is_kept_empty() {
        let mut f = frame("a", 0, &[60.0, 70.0]);
        f.boxes.iter_mut().for_each(|b| b.occluded = true);
        let m = DatasetManifest {
            frames: vec![f],
            ..manifest(0)
        };
        let out = filter_annotations(&m, 0.0, true).unwrap();
        assert_eq!(out.frames.len(), 1);
        assert!(out.frames[0].boxes.is_empty());
    }

    #[test]
    fn validation_split_sizes() {
        let (t, v) = split_validation(&manifest(100), 0.1, 3).unwrap();
        assert_eq!((t.len(), v.len()), (90, 10));
        let (t, v) = split_validation(&manifest(7), 0.1, 3).unwrap();
        assert_eq!((t.len(), v.len()), (6, 1));
        assert_eq!(split_validation(&manifest(20), 0.1, 9).unwrap(), split_validation(&manifest(20), 0.1, 9).unwrap());
        for bad in [0.0, 1.0, -0.5, 1.5] {
            assert!(split_validation(&manifest(5), bad, 0).is_err());
        }
    }

    #[test]
    fn clamping_trims_to_image() {
        let b = BoundingBox::new(60.0, 10.0, 9.0, 20.0, false).unwrap();
        let c = b.clamp_to(64.0, 64.0).unwrap();
        assert_eq!((c.x, c.w), (60.0, 4.0));
        assert!(BoundingBox::new(70.0, 0.0, 5.0, 5.0, false).unwrap().clamp_to(64.0, 64.0).is_none());
        assert!(BoundingBox::new(0.0, 0.0, 0.0, 5.0, false).is_err());
    }

    #[test]
    fn row_parsing_errors() {
        let base = Path::new("/d");
        assert!(parse_row("a\t0\tday\tv.png\tt.png\t", base).unwrap().boxes.is_empty());
        assert!(parse_row("a\t0\tdusk\tv.png\tt.png\t", base).is_err());
        assert!(parse_row("a\tx\tday\tv.png\tt.png\t", base).is_err());
        assert!(parse_row("a\t0\tday\tv.png\tt.png\t1,2,0,4,0", base).is_err());
        assert!(parse_row("a\t0\tday\tv.png\tt.png\t1,2,3,4,2", base).is_err());
        assert!(parse_row("a\t0\tday\tv.png", base).is_err());
        let r = parse_row("a\t4\tnight\tv.png\tt.png\t1,2,3,4,1;5,6,7,8,0\tsynthetic", base).unwrap();
        assert_eq!(r.boxes.len(), 2);
        assert_eq!(r.origin, Origin::Synthetic);
        assert_eq!(r.thermal_path, PathBuf::from("/d/t.png"));
    }
}
