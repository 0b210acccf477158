//! 8-bit grayscale images: binary PGM (P5) I/O and bilinear affine warping.

use std::path::Path;

use crate::codec::AffineMap;
use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor4;

/// Grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(invalid!("{} pixels for a {width}x{height} image", pixels.len()));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, v: f64) -> Self {
        Self {
            width,
            height,
            pixels: vec![v; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Bilinear sample at a continuous position, replicating the border.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let xc = x.clamp(0.0, (self.width - 1) as f64);
        let yc = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = (xc.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (yc.floor() as usize).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (fx, fy) = (xc - x0 as f64, yc - y0 as f64);
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bot = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bot * fy
    }

    /// Output pixel `p` takes the value at `map^{-1}(p)` in `self`.
    pub fn warp(&self, map: &AffineMap, out_w: usize, out_h: usize) -> Result<GrayImage> {
        let inv = map.inverse()?;
        let mut pixels = Vec::with_capacity(out_w * out_h);
        for y in 0..out_h {
            for x in 0..out_w {
                let [sx, sy] = inv.apply([x as f64, y as f64]);
                pixels.push(self.sample(sx, sy));
            }
        }
        GrayImage::new(out_w, out_h, pixels)
    }

    pub fn flip_horizontal(&self) -> GrayImage {
        let mut pixels = self.pixels.clone();
        for row in pixels.chunks_exact_mut(self.width) {
            row.reverse();
        }
        GrayImage { pixels, ..*self }
    }

    pub fn to_tensor<T: Scalar>(&self) -> Tensor4<T> {
        Tensor4::from_fn([1, 1, self.height, self.width], |_, _, y, x| T::of(self.get(x, y)))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }

    pub fn encode_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.to_bytes());
        out
    }

    pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
        let fmt = |msg: &str| Error::Format {
            what: "PGM image",
            msg: msg.to_string(),
        };
        let mut pos = 0;
        let mut next_token = || -> Result<String> {
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(fmt("truncated header"));
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        if next_token()? != "P5" {
            return Err(fmt("not a binary graymap (P5)"));
        }
        let num = |t: String| t.parse::<usize>().map_err(|_| fmt("bad header number"));
        let w = num(next_token()?)?;
        let h = num(next_token()?)?;
        let maxval = num(next_token()?)?;
        if maxval == 0 || maxval > 255 {
            return Err(fmt("only 8-bit graymaps are supported"));
        }
        let start = pos + 1;
        if w == 0 || h == 0 || bytes.len() < start + w * h {
            return Err(fmt("truncated pixel data"));
        }
        let pixels = bytes[start..start + w * h].iter().map(|&b| b as f64 / maxval as f64).collect();
        GrayImage::new(w, h, pixels)
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode_pgm()).map_err(|e| Error::io(path, e))
    }

    pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode_pgm(&bytes)
    }
}
