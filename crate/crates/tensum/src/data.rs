//! Dataset handling: directory and CSV manifests, raster and tensor file
//! loading, area-weighted downsampling, stratified splits, and a synthetic
//! generator that draws each class from a fixed low-rank template.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, Matrix};
use crate::tucker::TuckerNetwork;

/// A sample ready for the pipeline. `object` groups samples that show the
/// same physical object; synthetic samples carry their class template.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTensor {
    pub id: String,
    pub label: String,
    pub object: String,
    pub tensor: DenseTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub label: String,
    pub object: String,
    /// Relative paths are resolved against the manifest's base directory.
    pub path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    base_dir: PathBuf,
}

/// Index sets into `DatasetManifest::entries` (or any parallel sample list).
#[derive(Debug, Clone, PartialEq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn recognized_extension(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("ppm") | Some("tsr") | Some("png")
    )
}

fn sorted_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut items: Vec<PathBuf> = std::fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .collect();
    items.sort();
    Ok(items)
}

impl DatasetManifest {
    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorted distinct labels.
    pub fn classes(&self) -> Vec<String> {
        let mut c: Vec<String> = self.entries.iter().map(|e| e.label.clone()).collect();
        c.sort();
        c.dedup();
        c
    }

    /// Scans `root/<class>/[<object>/]file` for recognized image and tensor
    /// files. Classes, objects, and files enter in sorted order.
    pub fn from_dir(root: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for class_dir in sorted_dir(root)? {
            if !class_dir.is_dir() {
                continue;
            }
            let label = class_dir
                .file_name()
                .and_then(|n| n.to_str())
                .ok_or_else(|| Error::Parse(format!("non-utf8 directory under {root:?}")))?
                .to_string();
            for item in sorted_dir(&class_dir)? {
                if item.is_dir() {
                    let object = item
                        .file_name()
                        .and_then(|n| n.to_str())
                        .ok_or_else(|| {
                            Error::Parse(format!("non-utf8 directory under {class_dir:?}"))
                        })?
                        .to_string();
                    for file in sorted_dir(&item)? {
                        if file.is_file() && recognized_extension(&file) {
                            entries.push(Self::entry_for(root, &file, &label, &object)?);
                        }
                    }
                } else if item.is_file() && recognized_extension(&item) {
                    entries.push(Self::entry_for(root, &item, &label, "-")?);
                }
            }
        }
        if entries.is_empty() {
            return Err(Error::EmptyInput(format!(
                "no recognized image or tensor files under {root:?}"
            )));
        }
        Ok(Self {
            entries,
            base_dir: root.to_path_buf(),
        })
    }

    fn entry_for(root: &Path, file: &Path, label: &str, object: &str) -> Result<ManifestEntry> {
        let rel = file
            .strip_prefix(root)
            .map_err(|_| Error::Parse(format!("{file:?} is not under {root:?}")))?;
        let id = rel
            .to_str()
            .ok_or_else(|| Error::Parse(format!("non-utf8 file name {rel:?}")))?
            .to_string();
        Ok(ManifestEntry {
            id,
            label: label.to_string(),
            object: object.to_string(),
            path: rel.to_path_buf(),
        })
    }

    /// Reads a manifest CSV (columns id,label,object,path). Relative paths
    /// stay relative to the CSV's directory.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let base_dir = path
            .parent()
            .map(|p| p.to_path_buf())
            .unwrap_or_else(|| PathBuf::from("."));
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        let expect = ["id", "label", "object", "path"];
        if headers.iter().collect::<Vec<_>>() != expect {
            return Err(Error::Parse(format!(
                "manifest header {:?}, expected id,label,object,path",
                headers
            )));
        }
        let mut entries = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 4 {
                return Err(Error::Parse(format!(
                    "manifest row with {} fields, expected 4",
                    rec.len()
                )));
            }
            entries.push(ManifestEntry {
                id: rec[0].to_string(),
                label: rec[1].to_string(),
                object: rec[2].to_string(),
                path: PathBuf::from(&rec[3]),
            });
        }
        if entries.is_empty() {
            return Err(Error::EmptyInput(format!("manifest {path:?} has no rows")));
        }
        Ok(Self { entries, base_dir })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["id", "label", "object", "path"])?;
        for e in &self.entries {
            let p = e
                .path
                .to_str()
                .ok_or_else(|| Error::Parse(format!("non-utf8 path {:?}", e.path)))?;
            w.write_record([e.id.as_str(), e.label.as_str(), e.object.as_str(), p])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Stratified split. Per class, round(fraction * count) samples go to
    /// train, clamped so both sides stay non-empty when the class has at
    /// least two samples; fraction 1.0 sends everything to train. Shuffling
    /// is driven by one generator over classes in sorted order, so equal
    /// seeds give equal splits.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<SplitIndices> {
        split_by_label(
            &self
                .entries
                .iter()
                .map(|e| e.label.as_str())
                .collect::<Vec<_>>(),
            fraction,
            seed,
        )
    }

    /// Loads every entry; raster images come out as H x W x 3 in [0, 1].
    /// When a target is given, order-3 tensors taller or wider than it are
    /// area-downsampled to `target`; smaller inputs are rejected.
    pub fn load(&self, target: Option<(usize, usize)>) -> Result<Vec<LabeledTensor>> {
        let mut out = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            let full = if e.path.is_absolute() {
                e.path.clone()
            } else {
                self.base_dir.join(&e.path)
            };
            let mut t = load_tensor_file(&full)?;
            if let Some((th, tw)) = target {
                if t.order() != 3 {
                    return Err(Error::ShapeMismatch(format!(
                        "{}: cannot downsample order-{} tensor",
                        e.id,
                        t.order()
                    )));
                }
                if t.shape()[0] != th || t.shape()[1] != tw {
                    t = downsample(&t, th, tw).map_err(|err| {
                        Error::InvalidArgument(format!("{}: {err}", e.id))
                    })?;
                }
            }
            out.push(LabeledTensor {
                id: e.id.clone(),
                label: e.label.clone(),
                object: e.object.clone(),
                tensor: t,
            });
        }
        Ok(out)
    }
}

/// Stratified split over a label list; see `DatasetManifest::split`.
pub fn split_by_label(labels: &[&str], fraction: f64, seed: u64) -> Result<SplitIndices> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("no samples to split".into()));
    }
    if !fraction.is_finite() || fraction <= 0.0 || fraction > 1.0 {
        return Err(Error::InvalidArgument(format!(
            "train fraction {fraction} outside (0, 1]"
        )));
    }
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for idx in by_class.values() {
        let mut idx = idx.clone();
        idx.shuffle(&mut rng);
        let m = idx.len();
        let n_train = if fraction >= 1.0 || m == 1 {
            m
        } else {
            ((fraction * m as f64).round() as usize).clamp(1, m - 1)
        };
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test })
}

/// Loads a tensor from a file by extension: .ppm and .png rasters become
/// H x W x 3 tensors in [0, 1], .tsr files hold a plain tensor dump.
pub fn load_tensor_file(path: &Path) -> Result<DenseTensor> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "ppm" | "png" => load_image(path),
        "tsr" => DenseTensor::parse(&std::fs::read_to_string(path)?),
        other => Err(Error::InvalidArgument(format!(
            "unsupported file type {other:?} for {path:?}"
        ))),
    }
}

/// Loads a raster image as an H x W x 3 tensor with channel values in
/// [0, 1]. PPM (P3 and P6) is always available; PNG needs the `png`
/// feature.
pub fn load_image(path: &Path) -> Result<DenseTensor> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "ppm" => parse_ppm(&std::fs::read(path)?),
        #[cfg(feature = "png")]
        "png" => load_png(path),
        #[cfg(not(feature = "png"))]
        "png" => Err(Error::InvalidArgument(format!(
            "{path:?}: png support is behind the `png` feature"
        ))),
        other => Err(Error::InvalidArgument(format!(
            "unsupported image type {other:?} for {path:?}"
        ))),
    }
}

#[cfg(feature = "png")]
fn load_png(path: &Path) -> Result<DenseTensor> {
    let img = image::open(path)
        .map_err(|e| Error::Parse(format!("{path:?}: {e}")))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let mut t = DenseTensor::zeros(vec![h as usize, w as usize, 3])?;
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            t.set(
                &[y as usize, x as usize, c],
                px.0[c] as f64 / 255.0,
            );
        }
    }
    Ok(t)
}

struct PpmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PpmCursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\r' | b'\n' => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => return,
            }
        }
    }

    fn next_token(&mut self) -> Result<&'a str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len()
            && !self.bytes[self.pos].is_ascii_whitespace()
            && self.bytes[self.pos] != b'#'
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Parse("unexpected end of ppm header".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::Parse("non-ascii token in ppm header".into()))
    }

    fn next_usize(&mut self, what: &str) -> Result<usize> {
        let tok = self.next_token()?;
        tok.parse()
            .map_err(|_| Error::Parse(format!("bad ppm {what}: {tok:?}")))
    }
}

/// Parses P3 (ascii) and P6 (binary) PPM bytes. Rejects other netpbm
/// variants: inputs must be RGB.
pub fn parse_ppm(bytes: &[u8]) -> Result<DenseTensor> {
    let mut cur = PpmCursor { bytes, pos: 0 };
    let magic = cur.next_token()?;
    if magic != "P3" && magic != "P6" {
        return Err(Error::Parse(format!(
            "ppm magic {magic:?}: only RGB P3/P6 inputs are supported"
        )));
    }
    let binary = magic == "P6";
    let width = cur.next_usize("width")?;
    let height = cur.next_usize("height")?;
    let maxval = cur.next_usize("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Parse(format!("empty ppm image {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Parse(format!("ppm maxval {maxval} outside 1..=65535")));
    }
    let count = width * height * 3;
    let mut t = DenseTensor::zeros(vec![height, width, 3])?;
    let scale = 1.0 / maxval as f64;
    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
            return Err(Error::Parse("missing separator before ppm raster".into()));
        }
        cur.pos += 1;
        let per = if maxval < 256 { 1 } else { 2 };
        let raster = &bytes[cur.pos..];
        if raster.len() < count * per {
            return Err(Error::Parse(format!(
                "ppm raster truncated: {} bytes, expected {}",
                raster.len(),
                count * per
            )));
        }
        for k in 0..count {
            let raw = if per == 1 {
                raster[k] as usize
            } else {
                (raster[2 * k] as usize) << 8 | raster[2 * k + 1] as usize
            };
            if raw > maxval {
                return Err(Error::Parse(format!(
                    "ppm sample {raw} exceeds maxval {maxval}"
                )));
            }
            let (i, j, c) = (k / (3 * width), (k / 3) % width, k % 3);
            t.set(&[i, j, c], raw as f64 * scale);
        }
    } else {
        for k in 0..count {
            let raw = cur.next_usize("sample")?;
            if raw > maxval {
                return Err(Error::Parse(format!(
                    "ppm sample {raw} exceeds maxval {maxval}"
                )));
            }
            let (i, j, c) = (k / (3 * width), (k / 3) % width, k % 3);
            t.set(&[i, j, c], raw as f64 * scale);
        }
    }
    Ok(t)
}

/// Area-weighted downsampling of an H x W x C tensor to th x tw. Every
/// output pixel averages the source pixels its cell overlaps, weighted by
/// overlap area, so constant images stay constant and the target need not
/// divide the source.
pub fn downsample(t: &DenseTensor, th: usize, tw: usize) -> Result<DenseTensor> {
    if t.order() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "downsample expects an order-3 tensor, got order {}",
            t.order()
        )));
    }
    let (h, w, chans) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    if th == 0 || tw == 0 || th > h || tw > w {
        return Err(Error::InvalidArgument(format!(
            "cannot downsample {h}x{w} to {th}x{tw}"
        )));
    }
    if th == h && tw == w {
        return Ok(t.clone());
    }
    let sy = h as f64 / th as f64;
    let sx = w as f64 / tw as f64;
    let mut out = DenseTensor::zeros(vec![th, tw, chans])?;
    for oy in 0..th {
        let y0 = oy as f64 * sy;
        let y1 = y0 + sy;
        let ry0 = y0.floor() as usize;
        let ry1 = (y1.ceil() as usize).min(h);
        for ox in 0..tw {
            let x0 = ox as f64 * sx;
            let x1 = x0 + sx;
            let rx0 = x0.floor() as usize;
            let rx1 = (x1.ceil() as usize).min(w);
            for c in 0..chans {
                let mut acc = 0.0;
                let mut wsum = 0.0;
                for iy in ry0..ry1 {
                    let wy = (y1.min((iy + 1) as f64) - y0.max(iy as f64)).max(0.0);
                    if wy == 0.0 {
                        continue;
                    }
                    for ix in rx0..rx1 {
                        let wx = (x1.min((ix + 1) as f64) - x0.max(ix as f64)).max(0.0);
                        if wx == 0.0 {
                            continue;
                        }
                        acc += wy * wx * t.get(&[iy, ix, c]);
                        wsum += wy * wx;
                    }
                }
                out.set(&[oy, ox, c], acc / wsum);
            }
        }
    }
    Ok(out)
}

/// Synthetic dataset layout: each class owns a fixed random Tucker
/// template (orthonormal factors, core of norm `TEMPLATE_CORE_NORM`);
/// each sample perturbs the template core and adds pixel noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: usize,
    pub per_class: usize,
    pub shape: Vec<usize>,
    pub ranks: Vec<usize>,
    /// Pixelwise Gaussian noise level.
    pub noise: f64,
    /// Scale of the Gaussian perturbation added to the template core.
    pub core_jitter: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 8,
            per_class: 41,
            shape: vec![32, 32, 3],
            ranks: vec![3, 3, 3],
            noise: 0.05,
            core_jitter: 0.5,
            seed: 42,
        }
    }
}

const TEMPLATE_CORE_NORM: f64 = 10.0;

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Independent stream seed for (seed, class, sample). Sample 0 is the
/// class template stream.
pub fn derive_seed(seed: u64, class: u64, sample: u64) -> u64 {
    mix64(seed ^ mix64(class ^ mix64(sample)))
}

fn gaussian_vec(n: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Modified Gram-Schmidt, two passes per column.
fn orthonormalize_columns(m: &mut Matrix) -> Result<()> {
    let (rows, cols) = (m.rows(), m.cols());
    for j in 0..cols {
        for _ in 0..2 {
            for k in 0..j {
                let dot: f64 = (0..rows).map(|r| m.get(r, k) * m.get(r, j)).sum();
                for r in 0..rows {
                    let v = m.get(r, j) - dot * m.get(r, k);
                    m.set(r, j, v);
                }
            }
        }
        let norm: f64 = (0..rows).map(|r| m.get(r, j).powi(2)).sum::<f64>().sqrt();
        if norm < 1e-10 {
            return Err(Error::DegenerateSample(format!(
                "column {j} is linearly dependent"
            )));
        }
        for r in 0..rows {
            m.set(r, j, m.get(r, j) / norm);
        }
    }
    Ok(())
}

fn class_template(cfg: &SynthConfig, class: usize) -> Result<TuckerNetwork> {
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(cfg.seed, class as u64, 0));
    let mut factors = Vec::with_capacity(cfg.shape.len());
    for (&dim, &rank) in cfg.shape.iter().zip(&cfg.ranks) {
        let mut f = Matrix::new(dim, rank, gaussian_vec(dim * rank, &mut rng))?;
        orthonormalize_columns(&mut f)?;
        factors.push(f);
    }
    let raw = DenseTensor::new(
        cfg.ranks.clone(),
        gaussian_vec(cfg.ranks.iter().product(), &mut rng),
    )?;
    let norm = raw.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::DegenerateSample("zero template core".into()));
    }
    TuckerNetwork::new(raw.scale(TEMPLATE_CORE_NORM / norm), factors)
}

fn validate_synth(cfg: &SynthConfig) -> Result<()> {
    if cfg.classes == 0 || cfg.per_class == 0 {
        return Err(Error::InvalidArgument(
            "synthetic dataset needs at least one class and one sample".into(),
        ));
    }
    if cfg.shape.is_empty() || cfg.shape.len() != cfg.ranks.len() {
        return Err(Error::ShapeMismatch(format!(
            "shape {:?} vs ranks {:?}",
            cfg.shape, cfg.ranks
        )));
    }
    for (&dim, &rank) in cfg.shape.iter().zip(&cfg.ranks) {
        if dim == 0 || rank == 0 || rank > dim {
            return Err(Error::RankOutOfRange { rank, max: dim });
        }
    }
    if !cfg.noise.is_finite() || cfg.noise < 0.0 {
        return Err(Error::InvalidArgument(format!("noise {}", cfg.noise)));
    }
    if !cfg.core_jitter.is_finite() || cfg.core_jitter < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "core jitter {}",
            cfg.core_jitter
        )));
    }
    Ok(())
}

/// Generates the configured dataset. Sample streams are seeded per
/// (seed, class, index), so the output is reproducible and any subset of
/// samples is independent of generation order.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<Vec<LabeledTensor>> {
    validate_synth(cfg)?;
    let mut out = Vec::with_capacity(cfg.classes * cfg.per_class);
    for class in 0..cfg.classes {
        let template = class_template(cfg, class)?;
        let label = format!("class{class:02}");
        let object = format!("tpl{class:02}");
        for s in 0..cfg.per_class {
            let mut rng =
                ChaCha12Rng::seed_from_u64(derive_seed(cfg.seed, class as u64, s as u64 + 1));
            let jitter = DenseTensor::new(
                cfg.ranks.clone(),
                gaussian_vec(cfg.ranks.iter().product(), &mut rng),
            )?;
            let core = template.core().add(&jitter.scale(cfg.core_jitter))?;
            let clean = TuckerNetwork::new(core, template.factors().to_vec())?.reconstruct();
            let tensor = if cfg.noise > 0.0 {
                let noise = DenseTensor::new(
                    cfg.shape.clone(),
                    gaussian_vec(clean.num_elements(), &mut rng),
                )?;
                clean.add(&noise.scale(cfg.noise))?
            } else {
                clean
            };
            out.push(LabeledTensor {
                id: format!("c{class:02}_s{s:03}"),
                label: label.clone(),
                object: object.clone(),
                tensor,
            });
        }
    }
    Ok(out)
}

/// Writes samples as `<id>.tsr` dumps plus a `manifest.csv` into `dir`
/// and returns the manifest.
pub fn write_tensor_dataset(dir: &Path, samples: &[LabeledTensor]) -> Result<DatasetManifest> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no samples to write".into()));
    }
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(samples.len());
    for s in samples {
        let file = format!("{}.tsr", s.id);
        std::fs::write(dir.join(&file), s.tensor.dump())?;
        entries.push(ManifestEntry {
            id: s.id.clone(),
            label: s.label.clone(),
            object: s.object.clone(),
            path: PathBuf::from(file),
        });
    }
    let manifest = DatasetManifest {
        entries,
        base_dir: dir.to_path_buf(),
    };
    manifest.write_csv(&dir.join("manifest.csv"))?;
    Ok(manifest)
}
