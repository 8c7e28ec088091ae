//! Desk-scale domain pairs and the `SCDS1` tensor-file format.
//!
//! Target ground truth lives in a side table of [`DomainPair`] that only
//! evaluation code reads; the target samples themselves are unlabeled.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Result, ScganError};
use crate::types::{Domain, ImageShape, Sample};

pub const DATASET_MAGIC: &[u8; 5] = b"SCDS1";

/// Generator stream for one `(seed, purpose)` pair.
pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Rounds to `f32` precision so synthetic data survives the file format exactly.
fn quantize(x: f64) -> f64 {
    x.clamp(0.0, 1.0) as f32 as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainPair {
    pub shape: ImageShape,
    pub n_classes: usize,
    pub source: Vec<Sample>,
    /// Unlabeled target samples (training view).
    pub target: Vec<Sample>,
    target_labels: Option<Vec<usize>>,
}

impl DomainPair {
    pub fn new(
        shape: ImageShape,
        n_classes: usize,
        source: Vec<Sample>,
        target: Vec<Sample>,
        target_labels: Option<Vec<usize>>,
    ) -> Result<DomainPair> {
        if source.is_empty() || target.is_empty() {
            return Err(ScganError::Dataset("both domains must be nonempty".into()));
        }
        for (i, s) in source.iter().enumerate() {
            match s.label() {
                Some(l) if l < n_classes => {}
                Some(l) => {
                    return Err(ScganError::DatasetRecord {
                        record: i,
                        reason: format!("label {l} >= {n_classes}"),
                    })
                }
                None => {
                    return Err(ScganError::DatasetRecord {
                        record: i,
                        reason: "unlabeled source sample".into(),
                    })
                }
            }
        }
        for (i, s) in source.iter().chain(&target).enumerate() {
            if s.pixels().len() != shape.len() {
                return Err(ScganError::DatasetRecord {
                    record: i,
                    reason: format!("{} pixels, expected {}", s.pixels().len(), shape.len()),
                });
            }
        }
        let target: Vec<Sample> = target.iter().map(Sample::without_label).collect();
        if let Some(labels) = &target_labels {
            if labels.len() != target.len() {
                return Err(ScganError::Dataset("one evaluation label per target sample required".into()));
            }
            if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
                return Err(ScganError::LabelOutOfRange { label: l, n_classes });
            }
        }
        Ok(DomainPair {
            shape,
            n_classes,
            source,
            target,
            target_labels,
        })
    }

    /// Held-out target ground truth, for evaluation only.
    pub fn target_labels(&self) -> Option<&[usize]> {
        self.target_labels.as_deref()
    }

    /// SHA-256 (hex) over one domain's pixels and labels.
    pub fn digest(&self, domain: Domain) -> String {
        let mut h = Sha256::new();
        let (samples, labels): (&[Sample], Option<&[usize]>) = match domain {
            Domain::Source => (&self.source, None),
            Domain::Target => (&self.target, self.target_labels()),
        };
        for (i, s) in samples.iter().enumerate() {
            for p in s.pixels() {
                h.update(p.to_le_bytes());
            }
            let label = s.label().or_else(|| labels.map(|l| l[i]));
            h.update(label.map_or(-1i64, |l| l as i64).to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Centered two-moons points in the model frame (before pixel mapping).
/// Class 0 holds `⌊n/2⌋` points, class 1 holds `⌈n/2⌉`.
pub fn two_moons_points(n: usize, noise_sd: f64, rng: &mut impl Rng) -> Vec<([f64; 2], usize)> {
    let n0 = n / 2;
    let n1 = n - n0;
    let arc = |count: usize, i: usize| {
        if count <= 1 {
            0.0
        } else {
            std::f64::consts::PI * i as f64 / (count - 1) as f64
        }
    };
    let noise = Normal::new(0.0, noise_sd.max(0.0)).expect("finite sd");
    let mut out = Vec::with_capacity(n);
    for i in 0..n0 {
        let t = arc(n0, i);
        out.push(([t.cos() - 0.5, t.sin() - 0.25], 0));
    }
    for i in 0..n1 {
        let t = arc(n1, i);
        out.push(([0.5 - t.cos(), 0.25 - t.sin()], 1));
    }
    if noise_sd > 0.0 {
        for (p, _) in &mut out {
            p[0] += noise.sample(rng);
            p[1] += noise.sample(rng);
        }
    }
    out
}

pub fn rotate(p: [f64; 2], degrees: f64) -> [f64; 2] {
    let (s, c) = degrees.to_radians().sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

/// Maps a centered 2-D point to two pixel values: `0.5 + p / 4`.
pub fn moon_pixels(p: [f64; 2]) -> Vec<f64> {
    vec![quantize(0.5 + p[0] / 4.0), quantize(0.5 + p[1] / 4.0)]
}

/// Source: standard two-moons as `1×1×2` images. Target: an independent
/// draw of the same process rotated by `rotation_deg` about the centre.
pub fn make_two_moons_pair(n_per_domain: usize, rotation_deg: f64, noise_sd: f64, seed: u64) -> Result<DomainPair> {
    if n_per_domain < 10 {
        return Err(ScganError::Dataset(format!("n_per_domain {n_per_domain} below minimum 10")));
    }
    let shape = ImageShape::new(1, 1, 2);
    let source = two_moons_points(n_per_domain, noise_sd, &mut stream(seed, 1))
        .into_iter()
        .map(|(p, y)| Sample::labeled(moon_pixels(p), y, Domain::Source))
        .collect::<Result<Vec<_>>>()?;
    let mut target = Vec::with_capacity(n_per_domain);
    let mut labels = Vec::with_capacity(n_per_domain);
    for (p, y) in two_moons_points(n_per_domain, noise_sd, &mut stream(seed, 2)) {
        target.push(Sample::unlabeled(moon_pixels(rotate(p, rotation_deg)))?);
        labels.push(y);
    }
    DomainPair::new(shape, 2, source, target, Some(labels))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DigitStyle {
    ColorBlend,
    Invert,
    NoisePatch,
}

impl std::str::FromStr for DigitStyle {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "color_blend" => Ok(DigitStyle::ColorBlend),
            "invert" => Ok(DigitStyle::Invert),
            "noise_patch" => Ok(DigitStyle::NoisePatch),
            _ => Err(format!("unknown digit style {s:?}")),
        }
    }
}

impl DigitStyle {
    pub fn name(self) -> &'static str {
        match self {
            DigitStyle::ColorBlend => "color_blend",
            DigitStyle::Invert => "invert",
            DigitStyle::NoisePatch => "noise_patch",
        }
    }
}

/// 5×7 bitmap font, one row string per line.
const GLYPHS: [[&str; 7]; 10] = [
    ["01110", "10001", "10011", "10101", "11001", "10001", "01110"],
    ["00100", "01100", "00100", "00100", "00100", "00100", "01110"],
    ["01110", "10001", "00001", "00010", "00100", "01000", "11111"],
    ["11111", "00010", "00100", "00010", "00001", "10001", "01110"],
    ["00010", "00110", "01010", "10010", "11111", "00010", "00010"],
    ["11111", "10000", "11110", "00001", "00001", "10001", "01110"],
    ["00110", "01000", "10000", "11110", "10001", "10001", "01110"],
    ["11111", "00001", "00010", "00100", "01000", "01000", "01000"],
    ["01110", "10001", "10001", "01110", "10001", "10001", "01110"],
    ["01110", "10001", "10001", "01111", "00001", "00010", "01100"],
];

pub const DIGIT_SHAPE: ImageShape = ImageShape::new(8, 8, 3);

/// One clean glyph raster: jittered position, random stroke level, light noise.
fn render_glyph(class: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let dx = rng.random_range(0..=3usize);
    let dy = rng.random_range(0..=1usize);
    let ink = rng.random_range(0.7..=1.0);
    let noise = Normal::new(0.0, 0.03).unwrap();
    let mut gray = [0.0f64; 64];
    for (r, row) in GLYPHS[class].iter().enumerate() {
        for (c, bit) in row.bytes().enumerate() {
            if bit == b'1' {
                gray[(r + dy) * 8 + c + dx] = ink;
            }
        }
    }
    let mut px = Vec::with_capacity(DIGIT_SHAPE.len());
    for g in gray {
        let v = g + noise.sample(rng);
        px.extend([v, v, v]);
    }
    px.into_iter().map(quantize).collect()
}

/// Clean glyph samples of one domain, `n_per_class` per digit, class-major order.
pub fn render_clean_digits(n_per_class: usize, seed: u64, domain: Domain) -> Vec<(Vec<f64>, usize)> {
    let mut rng = stream(seed, 10 + domain as u64);
    (0..10)
        .flat_map(|c| std::iter::repeat_n(c, n_per_class))
        .map(|c| (render_glyph(c, &mut rng), c))
        .collect()
}

/// Applies a style transform blended with weight `strength ∈ [0,1]`.
pub fn apply_style(clean: &[f64], style: DigitStyle, strength: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let styled: Vec<f64> = match style {
        DigitStyle::ColorBlend => {
            // per-quadrant colour patches, blended by absolute difference
            let colors: Vec<[f64; 3]> = (0..4).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
            (0..clean.len())
                .map(|i| {
                    let (pix, ch) = (i / 3, i % 3);
                    let (r, c) = (pix / 8, pix % 8);
                    let q = (r / 4) * 2 + c / 4;
                    (clean[i] - colors[q][ch]).abs()
                })
                .collect()
        }
        DigitStyle::Invert => clean.iter().map(|v| 1.0 - v).collect(),
        DigitStyle::NoisePatch => {
            let (r0, c0) = (rng.random_range(0..=4usize), rng.random_range(0..=4usize));
            let mut out = clean.to_vec();
            for r in r0..r0 + 4 {
                for c in c0..c0 + 4 {
                    for ch in 0..3 {
                        out[(r * 8 + c) * 3 + ch] = rng.random();
                    }
                }
            }
            out
        }
    };
    clean
        .iter()
        .zip(styled)
        .map(|(&a, b)| quantize((1.0 - strength) * a + strength * b))
        .collect()
}

/// 8×8×3 glyph rasters, 10 classes; target is the styled glyph process.
pub fn make_minidigits_pair(n_per_class: usize, style: DigitStyle, strength: f64, seed: u64) -> Result<DomainPair> {
    if n_per_class < 5 {
        return Err(ScganError::Dataset(format!("n_per_class {n_per_class} below minimum 5")));
    }
    let source = render_clean_digits(n_per_class, seed, Domain::Source)
        .into_iter()
        .map(|(px, y)| Sample::labeled(px, y, Domain::Source))
        .collect::<Result<Vec<_>>>()?;
    let mut style_rng = stream(seed, 20);
    let mut target = Vec::new();
    let mut labels = Vec::new();
    for (px, y) in render_clean_digits(n_per_class, seed, Domain::Target) {
        target.push(Sample::unlabeled(apply_style(&px, style, strength, &mut style_rng))?);
        labels.push(y);
    }
    DomainPair::new(DIGIT_SHAPE, 10, source, target, Some(labels))
}

/// One record of a tensor file.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub pixels: Vec<f64>,
    pub label: Option<usize>,
}

/// Single-domain contents of an `SCDS1` file.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub shape: ImageShape,
    pub n_classes: usize,
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn labels(&self) -> Option<Vec<usize>> {
        self.records.iter().map(|r| r.label).collect()
    }
}

pub enum Loaded {
    Single(Dataset),
    Pair(DomainPair),
}

const SOURCE_FILE: &str = "source.scds";
const TARGET_FILE: &str = "target.scds";

/// Writes `magic, count, H, W, C, N_c` then per record `f32` pixels and an
/// `i32` label (`-1` = absent), all little-endian.
pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(DATASET_MAGIC);
    let s = data.shape;
    for v in [data.records.len(), s.height, s.width, s.channels, data.n_classes] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for r in &data.records {
        for &p in &r.pixels {
            buf.extend_from_slice(&(p as f32).to_le_bytes());
        }
        buf.extend_from_slice(&r.label.map_or(-1i32, |l| l as i32).to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| ScganError::io(path, e))?;
    f.write_all(&buf).map_err(|e| ScganError::io(path, e))
}

fn read_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes.get(at..at + 4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
}

pub fn parse_dataset(bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() < 5 || &bytes[..5] != DATASET_MAGIC {
        return Err(ScganError::Dataset("bad magic (expected SCDS1)".into()));
    }
    let mut header = [0usize; 5];
    for (i, h) in header.iter_mut().enumerate() {
        *h = read_u32(bytes, 5 + 4 * i).ok_or_else(|| ScganError::Dataset("truncated header".into()))? as usize;
    }
    let [count, h, w, c, n_classes] = header;
    if count == 0 {
        return Err(ScganError::Dataset("empty dataset".into()));
    }
    let shape = ImageShape::new(h, w, c);
    if shape.is_empty() || n_classes == 0 {
        return Err(ScganError::Dataset(format!("degenerate header shape {shape}, {n_classes} classes")));
    }
    let rec_len = 4 * shape.len() + 4;
    let mut at = 25;
    let mut records = Vec::with_capacity(count);
    for record in 0..count {
        let Some(chunk) = bytes.get(at..at + rec_len) else {
            return Err(ScganError::DatasetRecord {
                record,
                reason: "truncated record".into(),
            });
        };
        let mut pixels = Vec::with_capacity(shape.len());
        for b in chunk[..rec_len - 4].chunks_exact(4) {
            let p = f32::from_le_bytes(b.try_into().unwrap()) as f64;
            if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
                return Err(ScganError::DatasetRecord {
                    record,
                    reason: format!("pixel {p} outside [0,1]"),
                });
            }
            pixels.push(p);
        }
        let raw = i32::from_le_bytes(chunk[rec_len - 4..].try_into().unwrap());
        let label = match raw {
            -1 => None,
            l if l >= 0 && (l as usize) < n_classes => Some(l as usize),
            l => {
                return Err(ScganError::DatasetRecord {
                    record,
                    reason: format!("label {l} outside [0,{n_classes})"),
                })
            }
        };
        records.push(Record { pixels, label });
        at += rec_len;
    }
    if at != bytes.len() {
        return Err(ScganError::Dataset(format!("{} trailing bytes", bytes.len() - at)));
    }
    Ok(Dataset { shape, n_classes, records })
}

fn read_dataset_file(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| ScganError::io(path, e))?;
    parse_dataset(&bytes)
}

/// A file loads as one dataset; a directory holding `source.scds` and
/// `target.scds` loads as a [`DomainPair`].
pub fn load_dataset(path: &Path) -> Result<Loaded> {
    if path.is_dir() {
        load_pair(path).map(Loaded::Pair)
    } else {
        read_dataset_file(path).map(Loaded::Single)
    }
}

pub fn load_pair(dir: &Path) -> Result<DomainPair> {
    let src = read_dataset_file(&dir.join(SOURCE_FILE))?;
    let tgt = read_dataset_file(&dir.join(TARGET_FILE))?;
    if src.shape != tgt.shape || src.n_classes != tgt.n_classes {
        return Err(ScganError::Dataset("source and target headers disagree".into()));
    }
    let source = src
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let label = r.label.ok_or(ScganError::DatasetRecord {
                record: i,
                reason: "unlabeled source record".into(),
            })?;
            Sample::labeled(r.pixels.clone(), label, Domain::Source)
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = tgt.labels();
    let target = tgt
        .records
        .into_iter()
        .map(|r| Sample::unlabeled(r.pixels))
        .collect::<Result<Vec<_>>>()?;
    DomainPair::new(src.shape, src.n_classes, source, target, labels)
}

/// Writes a pair as `dir/source.scds` and `dir/target.scds` (target records
/// carry the evaluation labels when known).
pub fn write_pair(dir: &Path, pair: &DomainPair) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| ScganError::io(dir, e))?;
    let source = Dataset {
        shape: pair.shape,
        n_classes: pair.n_classes,
        records: pair
            .source
            .iter()
            .map(|s| Record {
                pixels: s.pixels().to_vec(),
                label: s.label(),
            })
            .collect(),
    };
    let labels = pair.target_labels();
    let target = Dataset {
        shape: pair.shape,
        n_classes: pair.n_classes,
        records: pair
            .target
            .iter()
            .enumerate()
            .map(|(i, s)| Record {
                pixels: s.pixels().to_vec(),
                label: labels.map(|l| l[i]),
            })
            .collect(),
    };
    write_dataset(&dir.join(SOURCE_FILE), &source)?;
    write_dataset(&dir.join(TARGET_FILE), &target)
}
