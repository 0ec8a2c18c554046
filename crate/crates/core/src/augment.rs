//! The 17 image transformations with normalized magnitudes, plus
//! RandAugment-style uniform policy sampling.
//!
//! Magnitudes are normalized to [0,10] and mapped linearly onto each op's
//! range; pixel-valued ranges (Translate, CutOut) are defined against a
//! 224-wide reference image and scaled by `width/224` at application time.
//! Directional ops (shear, translate, rotate) flip sign with probability ½.
//! Geometric resampling is bilinear with zero fill, matching the spatial
//! transformer's convention.

use crate::data::ImageBatch;
use crate::error::{Error, Result};
use crate::image::{from_u8, to_u8, Image};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Reference width against which pixel-valued magnitudes are defined.
const REF_WIDTH: f64 = 224.0;

/// One of the 17 transformation kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    ShearX,
    ShearY,
    TranslateX,
    TranslateY,
    Rotate,
    Flip,
    Solarize,
    Posterize,
    Invert,
    Contrast,
    Color,
    Brightness,
    Sharpness,
    AutoContrast,
    Equalize,
    CutOut,
    SamplePairing,
}

/// All ops, in the fixed sampling order.
pub const ALL_OPS: [OpKind; 17] = [
    OpKind::ShearX,
    OpKind::ShearY,
    OpKind::TranslateX,
    OpKind::TranslateY,
    OpKind::Rotate,
    OpKind::Flip,
    OpKind::Solarize,
    OpKind::Posterize,
    OpKind::Invert,
    OpKind::Contrast,
    OpKind::Color,
    OpKind::Brightness,
    OpKind::Sharpness,
    OpKind::AutoContrast,
    OpKind::Equalize,
    OpKind::CutOut,
    OpKind::SamplePairing,
];

impl OpKind {
    pub fn name(self) -> &'static str {
        match self {
            OpKind::ShearX => "shear-x",
            OpKind::ShearY => "shear-y",
            OpKind::TranslateX => "translate-x",
            OpKind::TranslateY => "translate-y",
            OpKind::Rotate => "rotate",
            OpKind::Flip => "flip",
            OpKind::Solarize => "solarize",
            OpKind::Posterize => "posterize",
            OpKind::Invert => "invert",
            OpKind::Contrast => "contrast",
            OpKind::Color => "color",
            OpKind::Brightness => "brightness",
            OpKind::Sharpness => "sharpness",
            OpKind::AutoContrast => "auto-contrast",
            OpKind::Equalize => "equalize",
            OpKind::CutOut => "cutout",
            OpKind::SamplePairing => "sample-pairing",
        }
    }

    /// Magnitude range, `None` for parameterless ops.
    pub fn magnitude_range(self) -> Option<(f64, f64)> {
        match self {
            OpKind::ShearX | OpKind::ShearY => Some((0.0, 0.3)),
            OpKind::TranslateX | OpKind::TranslateY => Some((0.0, 100.0)),
            OpKind::Rotate => Some((0.0, 30.0)),
            OpKind::Solarize => Some((0.0, 255.0)),
            OpKind::Posterize => Some((0.0, 4.0)),
            OpKind::Contrast | OpKind::Color | OpKind::Brightness | OpKind::Sharpness => {
                Some((0.1, 1.9))
            }
            OpKind::CutOut => Some((0.0, 40.0)),
            OpKind::SamplePairing => Some((0.0, 0.4)),
            OpKind::Flip | OpKind::Invert | OpKind::AutoContrast | OpKind::Equalize => None,
        }
    }

    /// Discrete magnitudes round to the nearest integer after denormalizing.
    pub fn discrete(self) -> bool {
        matches!(self, OpKind::Posterize)
    }

    pub fn geometric(self) -> bool {
        matches!(
            self,
            OpKind::ShearX
                | OpKind::ShearY
                | OpKind::TranslateX
                | OpKind::TranslateY
                | OpKind::Rotate
                | OpKind::Flip
        )
    }

    pub fn color_based(self) -> bool {
        matches!(
            self,
            OpKind::Solarize
                | OpKind::Posterize
                | OpKind::Invert
                | OpKind::Contrast
                | OpKind::Color
                | OpKind::Brightness
                | OpKind::Sharpness
                | OpKind::AutoContrast
                | OpKind::Equalize
        )
    }
}

/// Strategy subsets of the op table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpSet {
    /// All 17 ops.
    RndAll,
    /// The 9 color-based ops.
    RndColor,
    /// The 6 geometric ops.
    RndGeo,
}

impl OpSet {
    pub fn members(self) -> Vec<OpKind> {
        match self {
            OpSet::RndAll => ALL_OPS.to_vec(),
            OpSet::RndColor => ALL_OPS.iter().copied().filter(|o| o.color_based()).collect(),
            OpSet::RndGeo => ALL_OPS.iter().copied().filter(|o| o.geometric()).collect(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OpSet::RndAll => "rnd-all",
            OpSet::RndColor => "rnd-color",
            OpSet::RndGeo => "rnd-geo",
        }
    }
}

/// Sampling policy: how many ops per image and at what shared magnitude.
#[derive(Debug, Clone, Copy)]
pub struct AugmentPolicy {
    pub n_aug: usize,
    pub m_aug: f64,
}

impl AugmentPolicy {
    pub fn new(n_aug: usize, m_aug: f64) -> Result<Self> {
        if !(0.0..=10.0).contains(&m_aug) {
            return Err(Error::InvalidArg(format!(
                "m_aug must lie in [0,10], got {m_aug}"
            )));
        }
        Ok(AugmentPolicy { n_aug, m_aug })
    }
}

/// Map normalized magnitude `m ∈ [0,10]` onto the op's own range:
/// `lo + (m/10)·(hi−lo)`, rounded for discrete ops; `None` for
/// parameterless ops.
pub fn denormalize_magnitude(op: OpKind, m: f64) -> Result<Option<f64>> {
    if !(0.0..=10.0).contains(&m) {
        return Err(Error::InvalidArg(format!(
            "magnitude must lie in [0,10], got {m}"
        )));
    }
    Ok(op.magnitude_range().map(|(lo, hi)| {
        // affine combination, not lo + t·(hi−lo): endpoints land on lo and hi
        // bitwise even when lo ≠ 0
        let t = m / 10.0;
        let v = (1.0 - t) * lo + t * hi;
        if op.discrete() {
            v.round()
        } else {
            v
        }
    }))
}

/// Draw `n_aug` (op, concrete magnitude) pairs uniformly with replacement.
pub fn sample_policy(
    policy: AugmentPolicy,
    op_set: OpSet,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(OpKind, Option<f64>)>> {
    let members = op_set.members();
    if members.is_empty() {
        return Err(Error::InvalidArg("empty op set".into()));
    }
    let mut out = Vec::with_capacity(policy.n_aug);
    for _ in 0..policy.n_aug {
        let op = members[rng.gen_range(0..members.len())];
        out.push((op, denormalize_magnitude(op, policy.m_aug)?));
    }
    Ok(out)
}

/// Apply one transformation. `batch`/`self_idx` give SamplePairing its
/// partner pool (the clean images of the current batch); a pool of one means
/// there is no partner, so the op degrades to identity (logged).
pub fn apply_transform(
    op: OpKind,
    magnitude: Option<f64>,
    img: &Image,
    rng: &mut ChaCha8Rng,
    batch: &[Image],
    self_idx: usize,
) -> Image {
    let mut out = match op {
        OpKind::ShearX => {
            let s = signed(magnitude.unwrap_or(0.0), rng);
            shear_x(img, s)
        }
        OpKind::ShearY => {
            let s = signed(magnitude.unwrap_or(0.0), rng);
            shear_y(img, s)
        }
        OpKind::TranslateX => {
            let t = signed(magnitude.unwrap_or(0.0), rng) * img.width as f64 / REF_WIDTH;
            img.warp_affine(&[1.0, 0.0, -t, 0.0, 1.0, 0.0])
        }
        OpKind::TranslateY => {
            let t = signed(magnitude.unwrap_or(0.0), rng) * img.width as f64 / REF_WIDTH;
            img.warp_affine(&[1.0, 0.0, 0.0, 0.0, 1.0, -t])
        }
        OpKind::Rotate => {
            let deg = signed(magnitude.unwrap_or(0.0), rng);
            rotate(img, deg)
        }
        OpKind::Flip => flip_horizontal(img),
        OpKind::Solarize => solarize(img, magnitude.unwrap_or(0.0) / 255.0),
        OpKind::Posterize => posterize(img, magnitude.unwrap_or(0.0) as i64),
        OpKind::Invert => invert(img),
        OpKind::Contrast => {
            let l = img.luma();
            let mean = l.iter().sum::<f32>() / l.len() as f32;
            let degen = Image::from_fn(img.channels, img.height, img.width, |_, _, _| mean);
            blend(&degen, img, magnitude.unwrap_or(1.0) as f32)
        }
        OpKind::Brightness => {
            let degen = Image::zeros(img.channels, img.height, img.width);
            blend(&degen, img, magnitude.unwrap_or(1.0) as f32)
        }
        OpKind::Color => {
            let l = img.luma();
            let hw = img.height * img.width;
            let degen = Image::from_fn(img.channels, img.height, img.width, |_, y, x| l[y * img.width + x]);
            debug_assert_eq!(l.len(), hw);
            blend(&degen, img, magnitude.unwrap_or(1.0) as f32)
        }
        OpKind::Sharpness => {
            let degen = img.box3();
            blend(&degen, img, magnitude.unwrap_or(1.0) as f32)
        }
        OpKind::AutoContrast => auto_contrast(img),
        OpKind::Equalize => equalize(img),
        OpKind::CutOut => {
            let side = (magnitude.unwrap_or(0.0) * img.width as f64 / REF_WIDTH).round() as usize;
            cutout(img, side, rng)
        }
        OpKind::SamplePairing => {
            let w = magnitude.unwrap_or(0.0) as f32;
            if batch.len() <= 1 {
                log::warn!("sample-pairing skipped: batch has no partner image");
                img.clone()
            } else {
                // uniform over the batch excluding the image itself
                let mut k = rng.gen_range(0..batch.len() - 1);
                if k >= self_idx {
                    k += 1;
                }
                blend(img, &batch[k], w)
            }
        }
    };
    out.clamp01();
    out
}

/// Augment every image in the batch with an independently sampled policy;
/// labels and domain tags pass through unchanged.
pub fn augment_batch(
    batch: &ImageBatch,
    policy: AugmentPolicy,
    op_set: OpSet,
    rng: &mut ChaCha8Rng,
) -> Result<ImageBatch> {
    let mut images = Vec::with_capacity(batch.images.len());
    for (i, img) in batch.images.iter().enumerate() {
        let ops = sample_policy(policy, op_set, rng)?;
        let mut cur = img.clone();
        for (op, mag) in ops {
            cur = apply_transform(op, mag, &cur, rng, &batch.images, i);
        }
        images.push(cur);
    }
    Ok(ImageBatch {
        images,
        labels: batch.labels.clone(),
        domains: batch.domains.clone(),
    })
}

fn signed(v: f64, rng: &mut ChaCha8Rng) -> f64 {
    if rng.gen::<bool>() {
        v
    } else {
        -v
    }
}

fn center(img: &Image) -> (f64, f64) {
    ((img.width as f64 - 1.0) / 2.0, (img.height as f64 - 1.0) / 2.0)
}

pub fn rotate(img: &Image, degrees: f64) -> Image {
    let (cx, cy) = center(img);
    let a = degrees.to_radians();
    let (s, c) = a.sin_cos();
    img.warp_affine(&[
        c,
        s,
        cx - c * cx - s * cy,
        -s,
        c,
        cy + s * cx - c * cy,
    ])
}

pub fn shear_x(img: &Image, factor: f64) -> Image {
    let (_, cy) = center(img);
    img.warp_affine(&[1.0, -factor, factor * cy, 0.0, 1.0, 0.0])
}

pub fn shear_y(img: &Image, factor: f64) -> Image {
    let (cx, _) = center(img);
    img.warp_affine(&[1.0, 0.0, 0.0, -factor, 1.0, factor * cx])
}

pub fn flip_horizontal(img: &Image) -> Image {
    Image::from_fn(img.channels, img.height, img.width, |c, y, x| {
        img.get(c, y, img.width - 1 - x)
    })
}

fn solarize(img: &Image, threshold: f64) -> Image {
    let thr = threshold as f32;
    let mut out = img.clone();
    for v in &mut out.data {
        if *v >= thr {
            *v = 1.0 - *v;
        }
    }
    out
}

fn posterize(img: &Image, bits: i64) -> Image {
    // magnitude 0 would zero the whole image; clamp to 1 bit
    let bits = bits.clamp(1, 8) as u32;
    let mask = 0xffu8 << (8 - bits);
    let mut out = img.clone();
    for v in &mut out.data {
        *v = from_u8(to_u8(*v) & mask);
    }
    out
}

fn invert(img: &Image) -> Image {
    let mut out = img.clone();
    for v in &mut out.data {
        *v = 1.0 - *v;
    }
    out
}

/// `degen + factor·(img − degen)`; factor 1 is the identity point, factors
/// above 1 extrapolate (clamped by the caller).
fn blend(degen: &Image, img: &Image, factor: f32) -> Image {
    let mut out = degen.clone();
    for (o, &v) in out.data.iter_mut().zip(&img.data) {
        *o += factor * (v - *o);
    }
    out
}

fn auto_contrast(img: &Image) -> Image {
    let hw = img.height * img.width;
    let mut out = img.clone();
    for c in 0..img.channels {
        let ch = &mut out.data[c * hw..(c + 1) * hw];
        let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
        for &v in ch.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi > lo {
            let scale = 1.0 / (hi - lo);
            for v in ch.iter_mut() {
                *v = (*v - lo) * scale;
            }
        }
    }
    out
}

fn equalize(img: &Image) -> Image {
    let hw = img.height * img.width;
    let mut out = img.clone();
    for c in 0..img.channels {
        let ch = &mut out.data[c * hw..(c + 1) * hw];
        let mut hist = [0u32; 256];
        for &v in ch.iter() {
            hist[to_u8(v) as usize] += 1;
        }
        let mut cdf = [0u32; 256];
        let mut acc = 0;
        for (i, &h) in hist.iter().enumerate() {
            acc += h;
            cdf[i] = acc;
        }
        let total = acc;
        let cdf_min = *cdf.iter().find(|&&v| v > 0).unwrap_or(&0);
        if total == cdf_min {
            continue; // constant channel: equalization is the identity
        }
        let denom = (total - cdf_min) as f32;
        let mut lut = [0u8; 256];
        for i in 0..256 {
            let num = cdf[i].saturating_sub(cdf_min) as f32;
            lut[i] = (num / denom * 255.0).round() as u8;
        }
        for v in ch.iter_mut() {
            *v = from_u8(lut[to_u8(*v) as usize]);
        }
    }
    out
}

fn cutout(img: &Image, side: usize, rng: &mut ChaCha8Rng) -> Image {
    let mut out = img.clone();
    if side == 0 {
        return out;
    }
    let cx = rng.gen_range(0..img.width) as isize;
    let cy = rng.gen_range(0..img.height) as isize;
    let half = (side / 2) as isize;
    let x0 = (cx - half).max(0) as usize;
    let y0 = (cy - half).max(0) as usize;
    let x1 = ((cx - half) + side as isize).clamp(0, img.width as isize) as usize;
    let y1 = ((cy - half) + side as isize).clamp(0, img.height as isize) as usize;
    for c in 0..img.channels {
        for y in y0..y1 {
            for x in x0..x1 {
                out.set(c, y, x, 0.0);
            }
        }
    }
    out
}
