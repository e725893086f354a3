//! Raster helpers shared by the perceptual hash and the synthetic corpus.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

pub use image::RgbImage;

use crate::error::{Error, Result};
use crate::ingest::PostRecord;

pub const MIN_SIDE: u32 = 8;

/// Row-major grayscale plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "plane size mismatch");
        Plane {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

pub fn decode(bytes: &[u8]) -> Result<RgbImage> {
    let img = image::load_from_memory(bytes).map_err(|e| Error::Image(e.to_string()))?;
    check_dims(img.to_rgb8())
}

pub fn open(path: &Path) -> Result<RgbImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| Error::Image(format!("{}: {e}", path.display())))
}

fn check_dims(img: RgbImage) -> Result<RgbImage> {
    if img.width() < MIN_SIDE || img.height() < MIN_SIDE {
        return Err(Error::Image(format!(
            "degenerate image {}x{} (minimum {MIN_SIDE}x{MIN_SIDE})",
            img.width(),
            img.height()
        )));
    }
    Ok(img)
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)
        .map_err(|e| Error::Image(e.to_string()))?;
    Ok(buf.into_inner())
}

/// ITU-R BT.601 luma.
pub fn luma(img: &RgbImage) -> Plane {
    let data = img
        .pixels()
        .map(|p| 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
        .collect();
    Plane::new(img.width() as usize, img.height() as usize, data)
}

/// Maps a destination pixel center to source coordinates and returns the two
/// neighbouring source indices with the weight of the second one.
#[inline]
fn sample_axis(dst: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    let scale = src_len as f64 / dst_len as f64;
    let pos = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(src_len - 1);
    (lo, hi, pos - lo as f64)
}

/// Point-sampled bilinear resize with pixel-center alignment and clamped edges.
pub fn resize_bilinear(plane: &Plane, width: usize, height: usize) -> Plane {
    let xs: Vec<_> = (0..width).map(|x| sample_axis(x, plane.width, width)).collect();
    let mut data = Vec::with_capacity(width * height);
    for y in 0..height {
        let (y0, y1, wy) = sample_axis(y, plane.height, height);
        for &(x0, x1, wx) in &xs {
            let top = plane.at(x0, y0) * (1.0 - wx) + plane.at(x1, y0) * wx;
            let bottom = plane.at(x0, y1) * (1.0 - wx) + plane.at(x1, y1) * wx;
            data.push(top * (1.0 - wy) + bottom * wy);
        }
    }
    Plane::new(width, height, data)
}

/// Same sampling as [`resize_bilinear`] applied per RGB channel, rounded to 8 bits.
pub fn resize_rgb_bilinear(img: &RgbImage, width: u32, height: u32) -> RgbImage {
    let (sw, sh) = (img.width() as usize, img.height() as usize);
    let xs: Vec<_> = (0..width as usize).map(|x| sample_axis(x, sw, width as usize)).collect();
    let mut out = RgbImage::new(width, height);
    for y in 0..height as usize {
        let (y0, y1, wy) = sample_axis(y, sh, height as usize);
        for (x, &(x0, x1, wx)) in xs.iter().enumerate() {
            let mut px = [0u8; 3];
            for (c, v) in px.iter_mut().enumerate() {
                let g = |xx: usize, yy: usize| f64::from(img.get_pixel(xx as u32, yy as u32)[c]);
                let top = g(x0, y0) * (1.0 - wx) + g(x1, y0) * wx;
                let bottom = g(x0, y1) * (1.0 - wx) + g(x1, y1) * wx;
                *v = (top * (1.0 - wy) + bottom * wy).round().clamp(0.0, 255.0) as u8;
            }
            out.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    out
}

/// Orthonormal 1-D DCT-II basis: `basis[k][n]`.
pub fn dct_basis(n: usize) -> Vec<Vec<f64>> {
    let nf = n as f64;
    (0..n)
        .map(|k| {
            let alpha = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            (0..n)
                .map(|i| {
                    alpha * (std::f64::consts::PI * (2.0 * i as f64 + 1.0) * k as f64 / (2.0 * nf)).cos()
                })
                .collect()
        })
        .collect()
}

/// Separable orthonormal 2-D DCT-II of a square plane, keeping only the
/// top-left `keep x keep` coefficients (row-major, vertical frequency first).
pub fn dct2_low(plane: &Plane, keep: usize) -> Vec<f64> {
    assert_eq!(plane.width, plane.height, "dct2_low expects a square plane");
    let n = plane.width;
    let basis = dct_basis(n);
    // rows: tmp[y][u] = sum_x basis[u][x] * p[y][x]
    let mut tmp = vec![0.0; n * keep];
    for y in 0..n {
        let row = &plane.data[y * n..(y + 1) * n];
        for u in 0..keep {
            tmp[y * keep + u] = basis[u].iter().zip(row).map(|(b, p)| b * p).sum();
        }
    }
    let mut out = vec![0.0; keep * keep];
    for v in 0..keep {
        for u in 0..keep {
            out[v * keep + u] = (0..n).map(|y| basis[v][y] * tmp[y * keep + u]).sum();
        }
    }
    out
}

/// Where the pixels for a record come from.
pub trait ImageSource: Sync {
    fn load(&self, record: &PostRecord) -> Result<RgbImage>;
}

/// Resolves `image_path` against a corpus image directory.
#[derive(Debug, Clone)]
pub struct DirImageSource {
    root: PathBuf,
}

impl DirImageSource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DirImageSource { root: root.into() }
    }

    pub fn resolve(&self, record: &PostRecord) -> Result<PathBuf> {
        let rel = record
            .image_path
            .as_ref()
            .ok_or_else(|| Error::Image(format!("post {} has no image_path", record.post_id)))?;
        Ok(self.root.join(rel))
    }
}

impl ImageSource for DirImageSource {
    fn load(&self, record: &PostRecord) -> Result<RgbImage> {
        open(&self.resolve(record)?)
    }
}

/// In-memory images keyed by post id.
#[derive(Debug, Clone, Default)]
pub struct MemoryImageSource {
    images: HashMap<String, RgbImage>,
}

impl MemoryImageSource {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, post_id: impl Into<String>, img: RgbImage) {
        self.images.insert(post_id.into(), img);
    }
}

impl ImageSource for MemoryImageSource {
    fn load(&self, record: &PostRecord) -> Result<RgbImage> {
        let img = self
            .images
            .get(&record.post_id)
            .ok_or_else(|| Error::Image(format!("no image for post {}", record.post_id)))?;
        check_dims(img.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct quadruple-sum evaluation of the orthonormal 2-D DCT-II.
    fn naive_dct2(plane: &Plane, u: usize, v: usize) -> f64 {
        let n = plane.width as f64;
        let a = |k: usize| if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        let mut s = 0.0;
        for y in 0..plane.height {
            for x in 0..plane.width {
                s += plane.at(x, y)
                    * (std::f64::consts::PI * (2 * x + 1) as f64 * u as f64 / (2.0 * n)).cos()
                    * (std::f64::consts::PI * (2 * y + 1) as f64 * v as f64 / (2.0 * n)).cos();
            }
        }
        a(u) * a(v) * s
    }

    #[test]
    fn separable_dct_matches_direct_sum() {
        let data = (0..32 * 32).map(|i| ((i * 37 + 11) % 251) as f64).collect();
        let plane = Plane::new(32, 32, data);
        let low = dct2_low(&plane, 8);
        for v in 0..8 {
            for u in 0..8 {
                let want = naive_dct2(&plane, u, v);
                assert!((low[v * 8 + u] - want).abs() < 1e-9, "({u},{v})");
            }
        }
    }

    #[test]
    fn dct_of_constant_is_dc_only() {
        let plane = Plane::new(32, 32, vec![100.0; 1024]);
        let low = dct2_low(&plane, 8);
        assert!((low[0] - 3200.0).abs() < 1e-9);
        assert!(low[1..].iter().all(|c| c.abs() < 1e-9));
    }

    #[test]
    fn halving_resize_is_box_average() {
        let plane = Plane::new(4, 2, vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0]);
        let half = resize_bilinear(&plane, 2, 1);
        assert_eq!(half.data, vec![5.0, 9.0]);
    }

    #[test]
    fn identity_resize() {
        let plane = Plane::new(3, 3, (0..9).map(f64::from).collect());
        assert_eq!(resize_bilinear(&plane, 3, 3), plane);
    }

    #[test]
    fn decode_rejects_tiny_and_garbage() {
        let tiny = RgbImage::new(4, 4);
        let bytes = encode_png(&tiny).unwrap();
        assert!(matches!(decode(&bytes), Err(Error::Image(_))));
        assert!(matches!(decode(b"not an image"), Err(Error::Image(_))));
        let ok = RgbImage::new(8, 8);
        assert!(decode(&encode_png(&ok).unwrap()).is_ok());
    }
}
