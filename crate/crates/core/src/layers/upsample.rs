//! 2x bilinear upsampling with the align-corners mapping
//! `src = dst * (src_len - 1) / (dst_len - 1)`, so first and last pixel
//! centers coincide. A 1-pixel axis is replicated.

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape4, Tensor4};

/// `(i0, i1, t)` per destination index: `value = (1-t)*src[i0] + t*src[i1]`.
fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    if src == 1 {
        return vec![(0, 0, 0.0); dst];
    }
    let scale = (src - 1) as f64 / (dst - 1) as f64;
    (0..dst)
        .map(|d| {
            let pos = d as f64 * scale;
            let i0 = (pos.floor() as usize).min(src - 2);
            (i0, i0 + 1, pos - i0 as f64)
        })
        .collect()
}

pub fn upsample_bilinear2x<T: Scalar>(x: &Tensor4<T>) -> Result<Tensor4<T>> {
    let s = x.shape();
    if s.h == 0 || s.w == 0 {
        return Err(shape_err!("upsample of empty tensor {s}"));
    }
    let os = Shape4::new(s.n, s.c, 2 * s.h, 2 * s.w);
    let ty = axis_taps(s.h, os.h);
    let tx = axis_taps(s.w, os.w);
    let mut out = Tensor4::zeros(os);
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.plane(n, c);
            let dst = out.plane_mut(n, c);
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                let (fy, gy) = (T::of(fy), T::of(1.0 - fy));
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let (fx, gx) = (T::of(fx), T::of(1.0 - fx));
                    let top = gx * src[y0 * s.w + x0] + fx * src[y0 * s.w + x1];
                    let bot = gx * src[y1 * s.w + x0] + fx * src[y1 * s.w + x1];
                    dst[oy * os.w + ox] = gy * top + fy * bot;
                }
            }
        }
    }
    Ok(out)
}

pub fn upsample_bilinear2x_backward<T: Scalar>(grad_out: &Tensor4<T>, input_shape: Shape4) -> Result<Tensor4<T>> {
    let s = input_shape;
    let os = Shape4::new(s.n, s.c, 2 * s.h, 2 * s.w);
    if grad_out.shape() != os {
        return Err(shape_err!("upsample backward: grad {} for input {s}", grad_out.shape()));
    }
    let ty = axis_taps(s.h, os.h);
    let tx = axis_taps(s.w, os.w);
    let mut gx = Tensor4::zeros(s);
    for n in 0..s.n {
        for c in 0..s.c {
            let g = grad_out.plane(n, c);
            let dst = gx.plane_mut(n, c);
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                let (fy, gy) = (T::of(fy), T::of(1.0 - fy));
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let (fx, gxw) = (T::of(fx), T::of(1.0 - fx));
                    let v = g[oy * os.w + ox];
                    dst[y0 * s.w + x0] += gy * gxw * v;
                    dst[y0 * s.w + x1] += gy * fx * v;
                    dst[y1 * s.w + x0] += fy * gxw * v;
                    dst[y1 * s.w + x1] += fy * fx * v;
                }
            }
        }
    }
    Ok(gx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_stays_constant() {
        let x = Tensor4::<f64>::full([1, 2, 3, 5], 1.25);
        let y = upsample_bilinear2x(&x).unwrap();
        assert_eq!(y.shape(), Shape4::new(1, 2, 6, 10));
        assert!(y.data().iter().all(|v| (v - 1.25).abs() < 1e-15));
    }

    #[test]
    fn ramp_align_corners() {
        let x = Tensor4::<f64>::from_vec([1, 1, 1, 2], vec![0.0, 1.0]).unwrap();
        let y = upsample_bilinear2x(&x).unwrap();
        let want = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        for (row, _) in [(0, ()), (1, ())] {
            for (i, w) in want.iter().enumerate() {
                assert!((y.at(0, 0, row, i) - w).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn backward_is_adjoint() {
        // <up(x), g> == <x, up^T(g)>
        let x = Tensor4::from_fn([1, 1, 3, 4], |_, _, y, x| (y * 4 + x) as f64 * 0.3 - 1.0);
        let g = Tensor4::from_fn([1, 1, 6, 8], |_, _, y, x| ((y * 8 + x) % 5) as f64 - 2.0);
        let lhs: f64 = upsample_bilinear2x(&x).unwrap().data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let gt = upsample_bilinear2x_backward(&g, x.shape()).unwrap();
        let rhs: f64 = x.data().iter().zip(gt.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
