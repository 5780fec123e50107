//! Region covariance descriptors: images to SPD(9) points.
//!
//! Each interior pixel contributes the 9-feature vector
//! [x, y, I, |I_x|, |I_y|, |I_xx|, |I_yy|, sqrt(I_x²+I_y²),
//!  arctan(|I_x|/|I_y|)] with central differences; the descriptor is the
//! sample covariance over interior pixels plus ι·I₉ jitter. Inputs are
//! grayscale rasters; multi-channel images are averaged to one channel.
//!
//! Supported file formats (no heavyweight decoders):
//! - PGM/PPM, plain (P2/P3) and binary (P5/P6);
//! - a raw little-endian float32 tensor: 8-byte magic `CDPTNSR\0`,
//!   u32 ndim, ndim× u32 dims (h, w[, c]), then row-major f32 data.

use std::fs;
use std::path::Path;

use conformal_dp::error::{Error, Result};
use conformal_dp::manifold::Point;
use conformal_dp::rng::SplitMix64;
use nalgebra::DMatrix;

/// Magic prefix of the raw tensor format.
pub const TENSOR_MAGIC: &[u8; 8] = b"CDPTNSR\0";

/// Grayscale raster with values in [0, 1].
#[derive(Clone, Debug)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::InvalidArgument(format!(
                "pixel buffer length {} does not match {height}x{width}",
                pixels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    #[inline]
    fn at(&self, y: usize, x: usize) -> f64 {
        self.pixels[y * self.width + x]
    }
}

/// Default jitter: smallest value keeping descriptors comfortably SPD
/// across the synthetic calibration set.
pub const DEFAULT_IOTA: f64 = 1e-3;

/// Covariance descriptor of an image: SPD(9) point.
pub fn image_to_spd(image: &Image, iota: f64) -> Result<Point> {
    if image.height < 3 || image.width < 3 {
        return Err(Error::InvalidArgument(format!(
            "image must be at least 3x3, got {}x{}",
            image.height, image.width
        )));
    }
    let (h, w) = (image.height, image.width);
    let n_interior = (h - 2) * (w - 2);
    let mut features = Vec::with_capacity(n_interior);
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = image.at(y, x);
            let ix = 0.5 * (image.at(y, x + 1) - image.at(y, x - 1));
            let iy = 0.5 * (image.at(y + 1, x) - image.at(y - 1, x));
            let ixx = image.at(y, x + 1) - 2.0 * i + image.at(y, x - 1);
            let iyy = image.at(y + 1, x) - 2.0 * i + image.at(y - 1, x);
            let grad = (ix * ix + iy * iy).sqrt();
            let angle = (ix.abs() / (iy.abs() + 1e-12)).atan();
            features.push([
                x as f64,
                y as f64,
                i,
                ix.abs(),
                iy.abs(),
                ixx.abs(),
                iyy.abs(),
                grad,
                angle,
            ]);
        }
    }
    let mut mean = [0.0f64; 9];
    for f in &features {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n_interior as f64;
    }
    let mut cov = DMatrix::zeros(9, 9);
    for f in &features {
        for a in 0..9 {
            for b in a..9 {
                let v = (f[a] - mean[a]) * (f[b] - mean[b]);
                cov[(a, b)] += v;
            }
        }
    }
    for a in 0..9 {
        for b in a..9 {
            let v: f64 = cov[(a, b)] / n_interior as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    for a in 0..9 {
        cov[(a, a)] += iota;
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateImage);
    }
    Ok(Point::Spd(cov))
}

/// Parse PGM/PPM (P2, P3, P5, P6). Multi-channel data averages to gray;
/// values are scaled by the header maxval into [0, 1].
pub fn parse_pnm(bytes: &[u8]) -> Result<Image> {
    let inv = |msg: &str| Error::InvalidArgument(format!("pnm: {msg}"));
    if bytes.len() < 2 {
        return Err(inv("truncated header"));
    }
    let magic = &bytes[..2];
    let (plain, channels) = match magic {
        b"P2" => (true, 1),
        b"P3" => (true, 3),
        b"P5" => (false, 1),
        b"P6" => (false, 3),
        _ => return Err(inv("unsupported magic (want P2/P3/P5/P6)")),
    };
    // header tokens: width height maxval, with # comments
    let mut pos = 2;
    let mut header = Vec::with_capacity(3);
    while header.len() < 3 {
        while pos < bytes.len() && (bytes[pos] as char).is_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !(bytes[pos] as char).is_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(inv("truncated header"));
        }
        let tok = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| inv("non-utf8 header"))?;
        header.push(
            tok.parse::<usize>()
                .map_err(|_| inv("bad header integer"))?,
        );
    }
    let (width, height, maxval) = (header[0], header[1], header[2]);
    if maxval == 0 || maxval > 65535 {
        return Err(inv("bad maxval"));
    }
    let count = width * height * channels;
    let raw: Vec<f64> = if plain {
        let text = std::str::from_utf8(&bytes[pos..]).map_err(|_| inv("non-utf8 data"))?;
        let vals: Vec<f64> = text
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| inv("bad sample")))
            .collect::<Result<_>>()?;
        if vals.len() < count {
            return Err(inv("not enough samples"));
        }
        vals[..count].to_vec()
    } else {
        pos += 1; // single whitespace after maxval
        let two_byte = maxval > 255;
        let needed = count * if two_byte { 2 } else { 1 };
        if bytes.len() < pos + needed {
            return Err(inv("not enough binary data"));
        }
        let data = &bytes[pos..pos + needed];
        if two_byte {
            data.chunks_exact(2)
                .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])))
                .collect()
        } else {
            data.iter().map(|&b| f64::from(b)).collect()
        }
    };
    let scale = 1.0 / maxval as f64;
    let pixels: Vec<f64> = raw
        .chunks_exact(channels)
        .map(|px| px.iter().sum::<f64>() * scale / channels as f64)
        .collect();
    Image::new(height, width, pixels)
}

/// Parse the raw float32 tensor format (h, w[, c]).
pub fn parse_tensor(bytes: &[u8]) -> Result<Image> {
    let inv = |msg: &str| Error::InvalidArgument(format!("tensor: {msg}"));
    if bytes.len() < 12 || &bytes[..8] != TENSOR_MAGIC {
        return Err(inv("bad magic"));
    }
    let ndim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if !(2..=3).contains(&ndim) {
        return Err(inv("ndim must be 2 or 3"));
    }
    if bytes.len() < 12 + 4 * ndim {
        return Err(inv("truncated shape"));
    }
    let mut dims = [0usize; 3];
    for (i, d) in dims.iter_mut().take(ndim).enumerate() {
        let off = 12 + 4 * i;
        *d = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
    }
    let (h, w, c) = (dims[0], dims[1], if ndim == 3 { dims[2] } else { 1 });
    let count = h * w * c;
    let data_off = 12 + 4 * ndim;
    if bytes.len() < data_off + 4 * count {
        return Err(inv("truncated data"));
    }
    let mut raw = Vec::with_capacity(count);
    for i in 0..count {
        let off = data_off + 4 * i;
        raw.push(f64::from(f32::from_le_bytes(
            bytes[off..off + 4].try_into().unwrap(),
        )));
    }
    let pixels: Vec<f64> = raw
        .chunks_exact(c)
        .map(|px| px.iter().sum::<f64>() / c as f64)
        .collect();
    Image::new(h, w, pixels)
}

/// Serialize an image in the raw tensor format.
pub fn write_tensor(image: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 + 4 * image.pixels.len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&2u32.to_le_bytes());
    out.extend_from_slice(&(image.height as u32).to_le_bytes());
    out.extend_from_slice(&(image.width as u32).to_le_bytes());
    for p in &image.pixels {
        out.extend_from_slice(&(*p as f32).to_le_bytes());
    }
    out
}

/// Load an image by sniffing the format from the leading bytes.
pub fn load_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path)
        .map_err(|e| Error::InvalidArgument(format!("read {}: {e}", path.display())))?;
    if bytes.starts_with(TENSOR_MAGIC) {
        parse_tensor(&bytes)
    } else {
        parse_pnm(&bytes)
    }
}

/// Deterministic synthetic gradient image: an oriented linear ramp plus a
/// Gaussian blob, parameterized by the seed. Exercises all nine features.
pub fn synthetic_gradient_image(height: usize, width: usize, seed: u64) -> Image {
    let mut rng = SplitMix64::new(seed);
    let angle = 2.0 * std::f64::consts::PI * rng.next_f64();
    let (gx, gy) = (angle.cos(), angle.sin());
    let cx = width as f64 * (0.25 + 0.5 * rng.next_f64());
    let cy = height as f64 * (0.25 + 0.5 * rng.next_f64());
    let amp = 0.3 + 0.5 * rng.next_f64();
    let sigma = 0.15 * (width.min(height)) as f64 + 1.0;
    let mut pixels = Vec::with_capacity(height * width);
    for y in 0..height {
        for x in 0..width {
            let ramp = 0.5 + 0.4 * ((x as f64 * gx + y as f64 * gy) / width as f64);
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            let blob = amp * (-d2 / (2.0 * sigma * sigma)).exp();
            pixels.push((ramp + blob).clamp(0.0, 1.0));
        }
    }
    Image {
        height,
        width,
        pixels,
    }
}
