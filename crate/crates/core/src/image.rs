//! Raster images: CHW float storage in [0,1], PNG I/O, and the resampling
//! helpers shared by the augmentation ops and the data loaders.

use crate::error::{Error, Result};
use std::path::Path;

/// A single image, channel-major (`data[c][y][x]`), values in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Image {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_data(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArg(format!("image must have 1 or 3 channels, got {channels}")));
        }
        if data.len() != channels * height * width {
            return Err(Error::InvalidArg(format!(
                "image data length {} does not match {}x{}x{}",
                data.len(),
                channels,
                height,
                width
            )));
        }
        Ok(Image { channels, height, width, data })
    }

    pub fn from_fn(channels: usize, height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut img = Image::zeros(channels, height, width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    img.set(c, y, x, f(c, y, x));
                }
            }
        }
        img
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// Clamp every value into [0,1] (the type invariant after transforms).
    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn mean(&self) -> f32 {
        self.data.iter().sum::<f32>() / self.data.len() as f32
    }

    /// Per-pixel luma (Rec. 601). For single-channel images this is the pixel value.
    pub fn luma(&self) -> Vec<f32> {
        let hw = self.height * self.width;
        if self.channels == 1 {
            return self.data.clone();
        }
        (0..hw)
            .map(|i| 0.299 * self.data[i] + 0.587 * self.data[hw + i] + 0.114 * self.data[2 * hw + i])
            .collect()
    }

    /// Bilinear sample at fractional pixel coordinates; outside reads zero.
    pub fn sample_bilinear(&self, c: usize, y: f64, x: f64) -> f32 {
        let x0 = x.floor() as isize;
        let y0 = y.floor() as isize;
        let wx = (x - x0 as f64) as f32;
        let wy = (y - y0 as f64) as f32;
        let mut acc = 0.0f32;
        for (dy, dx, w) in [
            (0isize, 0isize, (1.0 - wx) * (1.0 - wy)),
            (0, 1, wx * (1.0 - wy)),
            (1, 0, (1.0 - wx) * wy),
            (1, 1, wx * wy),
        ] {
            let (yy, xx) = (y0 + dy, x0 + dx);
            if yy >= 0 && yy < self.height as isize && xx >= 0 && xx < self.width as isize && w != 0.0 {
                acc += self.get(c, yy as usize, xx as usize) * w;
            }
        }
        acc
    }

    /// Warp by an output→input affine pixel map:
    /// `src_x = m[0]·x + m[1]·y + m[2]`, `src_y = m[3]·x + m[4]·y + m[5]`.
    /// Bilinear resampling, zero fill outside.
    pub fn warp_affine(&self, m: &[f64; 6]) -> Image {
        let mut out = Image::zeros(self.channels, self.height, self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                let fx = x as f64;
                let fy = y as f64;
                let sx = m[0] * fx + m[1] * fy + m[2];
                let sy = m[3] * fx + m[4] * fy + m[5];
                if sx <= -1.0 || sy <= -1.0 || sx >= self.width as f64 || sy >= self.height as f64 {
                    continue;
                }
                for c in 0..self.channels {
                    out.set(c, y, x, self.sample_bilinear(c, sy, sx));
                }
            }
        }
        out
    }

    /// Resize with bilinear interpolation (align-corners when target ≥ 2,
    /// center sampling otherwise).
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Image {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let mut out = Image::zeros(self.channels, height, width);
        let sy = if height > 1 { (self.height - 1) as f64 / (height - 1) as f64 } else { 0.0 };
        let sx = if width > 1 { (self.width - 1) as f64 / (width - 1) as f64 } else { 0.0 };
        for y in 0..height {
            for x in 0..width {
                let src_y = if height > 1 { y as f64 * sy } else { (self.height - 1) as f64 / 2.0 };
                let src_x = if width > 1 { x as f64 * sx } else { (self.width - 1) as f64 / 2.0 };
                for c in 0..self.channels {
                    out.set(c, y, x, self.sample_bilinear(c, src_y, src_x));
                }
            }
        }
        out
    }

    /// Uniform 3×3 box smoothing with border replication (constant images are
    /// fixed points).
    pub fn box3(&self) -> Image {
        self.box_blur(1)
    }

    /// Uniform (2r+1)×(2r+1) box smoothing with border replication.
    pub fn box_blur(&self, radius: usize) -> Image {
        let mut out = Image::zeros(self.channels, self.height, self.width);
        let h = self.height as isize;
        let w = self.width as isize;
        let r = radius as isize;
        let norm = ((2 * r + 1) * (2 * r + 1)) as f32;
        for c in 0..self.channels {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0f32;
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let yy = (y + dy).clamp(0, h - 1) as usize;
                            let xx = (x + dx).clamp(0, w - 1) as usize;
                            acc += self.get(c, yy, xx);
                        }
                    }
                    out.set(c, y as usize, x as usize, acc / norm);
                }
            }
        }
        out
    }

    /// Load a PNG (or any format the decoder recognizes) and convert to the
    /// requested channel count.
    pub fn load(path: &Path, channels: usize) -> Result<Image> {
        let decoded = image::open(path).map_err(|source| Error::ImageDecode {
            path: path.display().to_string(),
            source,
        })?;
        let rgb = decoded.to_rgb8();
        let (w, h) = (rgb.width() as usize, rgb.height() as usize);
        let mut img = Image::zeros(3, h, w);
        for y in 0..h {
            for x in 0..w {
                let p = rgb.get_pixel(x as u32, y as u32);
                for c in 0..3 {
                    img.set(c, y, x, p.0[c] as f32 / 255.0);
                }
            }
        }
        Ok(match channels {
            3 => img,
            1 => {
                let l = img.luma();
                Image { channels: 1, height: h, width: w, data: l }
            }
            other => return Err(Error::InvalidArg(format!("unsupported channel count {other}"))),
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let (h, w) = (self.height as u32, self.width as u32);
        match self.channels {
            1 => {
                let buf: Vec<u8> = self.data.iter().map(|&v| to_u8(v)).collect();
                let img = image::GrayImage::from_raw(w, h, buf)
                    .expect("buffer length matches dimensions");
                img.save_with_format(path, image::ImageFormat::Png)?;
            }
            _ => {
                let hw = self.height * self.width;
                let mut buf = Vec::with_capacity(hw * 3);
                for i in 0..hw {
                    for c in 0..3 {
                        buf.push(to_u8(self.data[c * hw + i]));
                    }
                }
                let img = image::RgbImage::from_raw(w, h, buf)
                    .expect("buffer length matches dimensions");
                img.save_with_format(path, image::ImageFormat::Png)?;
            }
        }
        Ok(())
    }
}

/// [0,1] float → byte with round-to-nearest.
pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Byte → [0,1] float.
pub fn from_u8(v: u8) -> f32 {
    v as f32 / 255.0
}
