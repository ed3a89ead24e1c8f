//! Image IO, bicubic degradation, dataset layout and paired patch
//! sampling.
//!
//! Directory layout: `<dir>/HR/*.png` holds the references; an optional
//! `<dir>/LRx<r>/*.png` holds pre-degraded inputs with matching filenames.
//! When the low-resolution side is absent it is synthesized once per image
//! by cropping the reference to a multiple of the scale and downscaling
//! bicubically. Only 8-bit RGB PNG is accepted; pixels live in 0..255.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape4, Tensor4};

pub fn load_image<T: Scalar>(path: &Path) -> Result<Tensor4<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder.read_info().map_err(|e| Error::Png {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Png {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Png {
            path: path.to_path_buf(),
            msg: format!(
                "expected 8-bit RGB, got {:?} {:?}",
                info.color_type, info.bit_depth
            ),
        });
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let pixels = &buf[..info.buffer_size()];
    Ok(Tensor4::from_fn(Shape4::new(1, 3, h, w), |_, c, y, x| {
        T::of(pixels[(y * w + x) * 3 + c] as f64)
    }))
}

/// Write a `1x3xHxW` tensor as 8-bit RGB PNG, rounding and clamping.
pub fn save_image<T: Scalar>(image: &Tensor4<T>, path: &Path) -> Result<()> {
    let s = image.shape();
    if s.n != 1 || s.ch != 3 {
        return Err(Error::usage(format!(
            "save_image expects a 1x3xHxW tensor, got {s}"
        )));
    }
    let mut bytes = vec![0u8; s.h * s.w * 3];
    for y in 0..s.h {
        for x in 0..s.w {
            for c in 0..3 {
                let v = image.at(0, c, y, x).as_f64().round().clamp(0.0, 255.0);
                bytes[(y * s.w + x) * 3 + c] = v as u8;
            }
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), s.w as u32, s.h as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| Error::Png {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    writer.write_image_data(&bytes).map_err(|e| Error::Png {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    Ok(())
}

/// Catmull-Rom cubic kernel (a = -0.5).
fn cubic(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        (A + 2.0) * t * t * t - (A + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        A * t * t * t - 5.0 * A * t * t + 8.0 * A * t - 4.0 * A
    } else {
        0.0
    }
}

/// Tap positions and normalized weights for one output coordinate.
/// Downscales widen the kernel by the inverse scale (antialiasing, the
/// distribution convention for bicubic degradation); upscales use the plain
/// 4-tap kernel. Coordinates are clamped at the edges.
fn resample_taps(out_len: usize, in_len: usize, scale: f64) -> Vec<(usize, Vec<(usize, f64)>)> {
    let filter_scale = scale.min(1.0);
    let support = 2.0 / filter_scale;
    (0..out_len)
        .map(|o| {
            let src = (o as f64 + 0.5) / scale - 0.5;
            let lo = (src - support).ceil() as isize;
            let hi = (src + support).floor() as isize;
            let mut taps = Vec::with_capacity((hi - lo + 1).max(0) as usize);
            let mut sum = 0.0;
            for i in lo..=hi {
                let w = cubic((i as f64 - src) * filter_scale);
                if w != 0.0 {
                    let idx = i.clamp(0, in_len as isize - 1) as usize;
                    taps.push((idx, w));
                    sum += w;
                }
            }
            for t in &mut taps {
                t.1 /= sum;
            }
            (o, taps)
        })
        .collect()
}

/// Separable bicubic resampling by a rational factor `num/den`. Output
/// dimensions are `floor(dim * num / den)`; results are clamped to 0..255.
pub fn bicubic_resize<T: Scalar>(image: &Tensor4<T>, num: usize, den: usize) -> Result<Tensor4<T>> {
    if num == 0 || den == 0 {
        return Err(Error::usage("bicubic factor must be positive"));
    }
    if num == den {
        return Ok(image.clone());
    }
    let s = image.shape();
    let out_h = s.h * num / den;
    let out_w = s.w * num / den;
    if out_h == 0 || out_w == 0 {
        return Err(Error::usage(format!(
            "bicubic output would be degenerate: {}x{} by {num}/{den}",
            s.h, s.w
        )));
    }
    let scale = num as f64 / den as f64;

    // horizontal pass
    let taps_w = resample_taps(out_w, s.w, scale);
    let mut mid = vec![0.0f64; s.n * s.ch * s.h * out_w];
    for b in 0..s.n {
        for c in 0..s.ch {
            let plane = image.plane(b, c);
            let out_plane = &mut mid[(b * s.ch + c) * s.h * out_w..][..s.h * out_w];
            for y in 0..s.h {
                let row = &plane[y * s.w..][..s.w];
                for &(o, ref taps) in &taps_w {
                    let mut acc = 0.0;
                    for &(i, w) in taps {
                        acc += row[i].as_f64() * w;
                    }
                    out_plane[y * out_w + o] = acc;
                }
            }
        }
    }

    // vertical pass
    let taps_h = resample_taps(out_h, s.h, scale);
    let out = Tensor4::from_fn(Shape4::new(s.n, s.ch, out_h, out_w), |b, c, y, x| {
        let plane = &mid[(b * s.ch + c) * s.h * out_w..][..s.h * out_w];
        let mut acc = 0.0;
        for &(i, w) in &taps_h[y].1 {
            acc += plane[i * out_w + x] * w;
        }
        T::of(acc.clamp(0.0, 255.0))
    });
    Ok(out)
}

/// Integer upscale by `r`.
pub fn bicubic_upscale<T: Scalar>(image: &Tensor4<T>, r: usize) -> Result<Tensor4<T>> {
    bicubic_resize(image, r, 1)
}

/// Integer downscale by `r` (with antialiasing).
pub fn bicubic_downscale<T: Scalar>(image: &Tensor4<T>, r: usize) -> Result<Tensor4<T>> {
    bicubic_resize(image, 1, r)
}

pub fn crop<T: Scalar>(t: &Tensor4<T>, top: usize, left: usize, h: usize, w: usize) -> Result<Tensor4<T>> {
    let s = t.shape();
    if top + h > s.h || left + w > s.w || h == 0 || w == 0 {
        return Err(Error::usage(format!(
            "crop {h}x{w}+{top}+{left} out of bounds for {}x{}",
            s.h, s.w
        )));
    }
    Ok(Tensor4::from_fn(Shape4::new(s.n, s.ch, h, w), |b, c, y, x| {
        t.at(b, c, top + y, left + x)
    }))
}

/// Where a dataset lives and at what scale factor.
#[derive(Clone, Debug)]
pub struct DatasetSpec {
    /// Directory containing `HR/` and optionally `LRx<r>/`.
    pub dir: PathBuf,
    pub scale: usize,
}

impl DatasetSpec {
    pub fn new(dir: impl Into<PathBuf>, scale: usize) -> Self {
        DatasetSpec {
            dir: dir.into(),
            scale,
        }
    }

    pub fn from_root_split(root: impl Into<PathBuf>, split: &str, scale: usize) -> Self {
        DatasetSpec {
            dir: root.into().join(split),
            scale,
        }
    }
}

/// One reference image with its low-resolution counterpart. `hr` extent is
/// exactly `scale` times `lr` when the pair was synthesized; provided pairs
/// may carry a ragged edge that consumers crop.
#[derive(Clone, Debug)]
pub struct ImagePair<T> {
    pub name: String,
    pub hr: Tensor4<T>,
    pub lr: Tensor4<T>,
}

/// An eagerly loaded dataset.
#[derive(Clone, Debug)]
pub struct Dataset<T> {
    pub name: String,
    pub scale: usize,
    pub pairs: Vec<ImagePair<T>>,
}

fn png_names(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let p = entry.path();
        if p.extension().map(|e| e.eq_ignore_ascii_case("png")) == Some(true) {
            if let Some(stem) = p.file_name().and_then(|n| n.to_str()) {
                names.push(stem.to_string());
            }
        }
    }
    names.sort();
    Ok(names)
}

impl<T: Scalar> Dataset<T> {
    /// Load every pair the given [`DatasetSpec`] points at. A missing
    /// `LRx<r>` directory
    /// synthesizes the low-resolution side (the reference is cropped to a
    /// multiple of the scale first, keeping the pair exactly consistent).
    pub fn load(spec: &DatasetSpec) -> Result<Self> {
        let hr_dir = spec.dir.join("HR");
        if !hr_dir.is_dir() {
            return Err(Error::usage(format!(
                "dataset directory {} has no HR/ subdirectory",
                spec.dir.display()
            )));
        }
        let hr_names = png_names(&hr_dir)?;
        if hr_names.is_empty() {
            return Err(Error::usage(format!(
                "no PNG images under {}",
                hr_dir.display()
            )));
        }
        let lr_dir = spec.dir.join(format!("LRx{}", spec.scale));
        let lr_names = if lr_dir.is_dir() {
            let names = png_names(&lr_dir)?;
            let missing: Vec<_> = hr_names.iter().filter(|n| !names.contains(n)).collect();
            let extra: Vec<_> = names.iter().filter(|n| !hr_names.contains(n)).collect();
            if !missing.is_empty() || !extra.is_empty() {
                return Err(Error::config(format!(
                    "HR and {} filename sets differ (missing LR: {:?}, unmatched LR: {:?})",
                    lr_dir.display(),
                    missing,
                    extra
                )));
            }
            Some(names)
        } else {
            None
        };

        let mut pairs = Vec::with_capacity(hr_names.len());
        for name in &hr_names {
            let hr: Tensor4<T> = load_image(&hr_dir.join(name))?;
            let (hr, lr) = match &lr_names {
                Some(_) => {
                    let lr: Tensor4<T> = load_image(&lr_dir.join(name))?;
                    validate_pair_dims(name, hr.shape(), lr.shape(), spec.scale)?;
                    (hr, lr)
                }
                None => {
                    let s = hr.shape();
                    let ch = s.h - s.h % spec.scale;
                    let cw = s.w - s.w % spec.scale;
                    if ch == 0 || cw == 0 {
                        return Err(Error::usage(format!(
                            "{name}: {}x{} too small for scale {}",
                            s.h, s.w, spec.scale
                        )));
                    }
                    let cropped = crop(&hr, 0, 0, ch, cw)?;
                    let lr = bicubic_downscale(&cropped, spec.scale)?;
                    (cropped, lr)
                }
            };
            pairs.push(ImagePair {
                name: name.clone(),
                hr,
                lr,
            });
        }
        let name = spec
            .dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("dataset")
            .to_string();
        Ok(Dataset {
            name,
            scale: spec.scale,
            pairs,
        })
    }
}

fn validate_pair_dims(name: &str, hr: Shape4, lr: Shape4, scale: usize) -> Result<()> {
    let ok = |h: usize, l: usize| l == h / scale || l == h.div_ceil(scale);
    if !ok(hr.h, lr.h) || !ok(hr.w, lr.w) {
        return Err(Error::config(format!(
            "{name}: LR {}x{} inconsistent with HR {}x{} at scale {scale}",
            lr.h, lr.w, hr.h, hr.w
        )));
    }
    Ok(())
}

/// A sampled training pair: an aligned HR patch and its LR counterpart.
#[derive(Clone, Debug)]
pub struct PatchPair<T> {
    pub hr: Tensor4<T>,
    pub lr: Tensor4<T>,
    pub image: String,
    /// Top-left coordinate of the patch in the HR image.
    pub hr_top: usize,
    pub hr_left: usize,
}

/// Uniform random crop aligned to the scale factor. The LR crop is taken
/// from the stored LR image at the HR coordinates divided by the scale;
/// nothing is re-degraded per patch.
pub fn sample_patch<T: Scalar, R: Rng>(
    pair: &ImagePair<T>,
    patch_size: usize,
    scale: usize,
    rng: &mut R,
) -> Result<PatchPair<T>> {
    if !patch_size.is_multiple_of(scale) {
        return Err(Error::config(format!(
            "patch size {patch_size} not divisible by scale {scale}"
        )));
    }
    let lr_ps = patch_size / scale;
    // ragged provided pairs: confine sampling to the common aligned area
    let usable_h = (pair.hr.shape().h / scale).min(pair.lr.shape().h);
    let usable_w = (pair.hr.shape().w / scale).min(pair.lr.shape().w);
    if usable_h < lr_ps || usable_w < lr_ps {
        return Err(Error::usage(format!(
            "{}: image too small for a {patch_size} patch at scale {scale}",
            pair.name
        )));
    }
    let ly = rng.random_range(0..=usable_h - lr_ps);
    let lx = rng.random_range(0..=usable_w - lr_ps);
    let lr = crop(&pair.lr, ly, lx, lr_ps, lr_ps)?;
    let hr = crop(&pair.hr, ly * scale, lx * scale, patch_size, patch_size)?;
    Ok(PatchPair {
        hr,
        lr,
        image: pair.name.clone(),
        hr_top: ly * scale,
        hr_left: lx * scale,
    })
}

pub fn flip_horizontal<T: Scalar>(t: &Tensor4<T>) -> Tensor4<T> {
    let s = t.shape();
    Tensor4::from_fn(s, |b, c, y, x| t.at(b, c, y, s.w - 1 - x))
}

/// Quarter-turn counterclockwise.
pub fn rot90<T: Scalar>(t: &Tensor4<T>) -> Tensor4<T> {
    let s = t.shape();
    Tensor4::from_fn(Shape4::new(s.n, s.ch, s.w, s.h), |b, c, y, x| {
        t.at(b, c, x, s.w - 1 - y)
    })
}

/// Identical random horizontal flip and quarter-turn count applied to both
/// patch members. Disabled (the default) it is the identity and consumes
/// no randomness.
pub fn augment<T: Scalar, R: Rng>(pair: PatchPair<T>, enabled: bool, rng: &mut R) -> PatchPair<T> {
    if !enabled {
        return pair;
    }
    let flip = rng.random_range(0..2) == 1;
    let quarter_turns = rng.random_range(0..4u32);
    let mut hr = pair.hr;
    let mut lr = pair.lr;
    if flip {
        hr = flip_horizontal(&hr);
        lr = flip_horizontal(&lr);
    }
    for _ in 0..quarter_turns {
        hr = rot90(&hr);
        lr = rot90(&lr);
    }
    PatchPair { hr, lr, ..pair }
}

/// Stack `1xCxHxW` tensors along the batch axis.
pub fn stack_batch<T: Scalar>(items: &[Tensor4<T>]) -> Result<Tensor4<T>> {
    let first = items
        .first()
        .ok_or_else(|| Error::usage("cannot stack an empty batch"))?
        .shape();
    let mut data = Vec::with_capacity(first.ch * first.h * first.w * items.len());
    for item in items {
        if item.shape() != first {
            return Err(Error::usage(format!(
                "batch member shape {} differs from {}",
                item.shape(),
                first
            )));
        }
        data.extend_from_slice(item.data());
    }
    Tensor4::new(
        Shape4::new(items.len(), first.ch, first.h, first.w),
        data,
    )
}
