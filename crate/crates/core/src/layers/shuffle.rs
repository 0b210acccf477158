//! Pixel shuffle: `(n, c*s^2, h, w) -> (n, c, h*s, w*s)`, and its inverse.
//! The inverse doubles as the backward pass.

use crate::error::{invalid, shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape4, Tensor4};

/// `out[n, c, y, x] = in[n, c*s^2 + (y % s)*s + (x % s), y / s, x / s]`
pub fn pixel_shuffle<T: Scalar>(x: &Tensor4<T>, s: usize) -> Result<Tensor4<T>> {
    if s == 0 {
        return Err(invalid!("pixel_shuffle factor must be positive"));
    }
    let is = x.shape();
    let s2 = s * s;
    if is.c % s2 != 0 {
        return Err(shape_err!("pixel_shuffle: {} channels not divisible by {s2}", is.c));
    }
    let os = Shape4::new(is.n, is.c / s2, is.h * s, is.w * s);
    let src = x.data();
    let mut data = Vec::with_capacity(os.len());
    for n in 0..os.n {
        for c in 0..os.c {
            for y in 0..os.h {
                let (yl, yr) = (y / s, y % s);
                for xx in 0..os.w {
                    let ch = c * s2 + yr * s + xx % s;
                    data.push(src[is.index(n, ch, yl, xx / s)]);
                }
            }
        }
    }
    Tensor4::from_vec(os, data)
}

/// Inverse of [`pixel_shuffle`]; also its exact backward.
pub fn pixel_unshuffle<T: Scalar>(y: &Tensor4<T>, s: usize) -> Result<Tensor4<T>> {
    if s == 0 {
        return Err(invalid!("pixel_unshuffle factor must be positive"));
    }
    let ys = y.shape();
    if ys.h % s != 0 || ys.w % s != 0 {
        return Err(shape_err!("pixel_unshuffle: {ys} not divisible by {s}"));
    }
    let s2 = s * s;
    let os = Shape4::new(ys.n, ys.c * s2, ys.h / s, ys.w / s);
    let mut out = Tensor4::zeros(os);
    let dst = out.data_mut();
    for n in 0..ys.n {
        for c in 0..ys.c {
            for yy in 0..ys.h {
                for xx in 0..ys.w {
                    let ch = c * s2 + (yy % s) * s + xx % s;
                    dst[os.index(n, ch, yy / s, xx / s)] = y.at(n, c, yy, xx);
                }
            }
        }
    }
    Ok(out)
}
