//! Grouped 2-D cross-correlation. Pointwise (1x1), depthwise
//! (`groups == in_c == out_c`) and per-keypoint large-kernel convolutions are
//! all instances of this one layer.

use crate::error::{invalid, shape_err, Error, Result};
use crate::layers::param::{join, HasParams, Param, ParamMut, ParamRef};
use crate::layers::Phase;
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::{randn_init, Shape4, Tensor4};

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    /// `(out_c, in_c / groups, k_h, k_w)`
    pub weight: Param<T>,
    /// `(out_c, 1, 1, 1)`
    pub bias: Param<T>,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl<T: Scalar> ConvParams<T> {
    /// Kaiming-normal weights (`sqrt(2 / fan_in)`), zero bias.
    pub fn kaiming(
        in_c: usize,
        out_c: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        groups: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if groups == 0 || in_c % groups != 0 || out_c % groups != 0 {
            return Err(invalid!("groups {groups} must divide in_c {in_c} and out_c {out_c}"));
        }
        if kernel == 0 || stride == 0 {
            return Err(invalid!("kernel and stride must be positive"));
        }
        let fan_in = (in_c / groups) * kernel * kernel;
        let weight = randn_init([out_c, in_c / groups, kernel, kernel], rng, (2.0 / fan_in as f64).sqrt())?;
        Ok(Self {
            weight: Param::new(weight),
            bias: Param::new(Tensor4::zeros([out_c, 1, 1, 1])),
            stride,
            padding,
            groups,
        })
    }

    pub fn from_weights(weight: Tensor4<T>, bias: Vec<T>, stride: usize, padding: usize, groups: usize) -> Result<Self> {
        let out_c = weight.shape().n;
        let bias = Tensor4::from_vec([out_c, 1, 1, 1], bias)?;
        let p = Self {
            weight: Param::new(weight),
            bias: Param::new(bias),
            stride,
            padding,
            groups,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape().n
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape().c * self.groups
    }

    pub fn kernel(&self) -> (usize, usize) {
        let s = self.weight.shape();
        (s.h, s.w)
    }

    fn validate(&self) -> Result<()> {
        let ws = self.weight.shape();
        if self.groups == 0 || ws.n % self.groups != 0 {
            return Err(invalid!("out_c {} not divisible by groups {}", ws.n, self.groups));
        }
        if self.stride == 0 {
            return Err(invalid!("stride must be positive"));
        }
        if self.bias.shape() != Shape4::new(ws.n, 1, 1, 1) {
            return Err(shape_err!("bias {} for {} output channels", self.bias.shape(), ws.n));
        }
        Ok(())
    }

    pub fn output_shape(&self, input: Shape4) -> Result<Shape4> {
        self.validate()?;
        if input.c != self.in_channels() {
            return Err(shape_err!(
                "conv expects {} input channels, got input {input}",
                self.in_channels()
            ));
        }
        let (kh, kw) = self.kernel();
        let ph = input.h + 2 * self.padding;
        let pw = input.w + 2 * self.padding;
        if ph < kh || pw < kw {
            return Err(shape_err!("kernel {kh}x{kw} larger than padded input {input}"));
        }
        let oh = (ph - kh) / self.stride + 1;
        let ow = (pw - kw) / self.stride + 1;
        if oh == 0 || ow == 0 || input.n == 0 {
            return Err(shape_err!("zero-size conv output for input {input}"));
        }
        Ok(Shape4::new(input.n, self.out_channels(), oh, ow))
    }
}

/// Forward record needed by [`conv2d_backward`].
#[derive(Debug, Clone)]
pub struct ConvTape<T> {
    input: Tensor4<T>,
    weight_shape: Shape4,
    output_shape: Shape4,
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub x: Tensor4<T>,
    pub w: Tensor4<T>,
    pub b: Tensor4<T>,
}

/// Output columns `ox` for which `ox * stride + k - pad` lands inside `0..len`.
#[inline]
fn valid_range(len: usize, out_len: usize, k: usize, pad: usize, stride: usize) -> (usize, usize) {
    // smallest ox with ox*stride + k >= pad
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    // largest ox with ox*stride + k - pad <= len - 1
    let top = len + pad;
    if top <= k {
        return (1, 0);
    }
    let hi = ((top - 1 - k) / stride).min(out_len.saturating_sub(1));
    (lo, hi + 1)
}

struct Geometry {
    xs: Shape4,
    os: Shape4,
    kh: usize,
    kw: usize,
    cin_g: usize,
    cout_g: usize,
    stride: usize,
    pad: usize,
    rows: Vec<(usize, usize)>,
    cols: Vec<(usize, usize)>,
}

impl Geometry {
    fn new(xs: Shape4, os: Shape4, ws: Shape4, stride: usize, pad: usize, groups: usize) -> Self {
        Self {
            xs,
            os,
            kh: ws.h,
            kw: ws.w,
            cin_g: ws.c,
            cout_g: os.c / groups,
            stride,
            pad,
            rows: (0..ws.h).map(|ky| valid_range(xs.h, os.h, ky, pad, stride)).collect(),
            cols: (0..ws.w).map(|kx| valid_range(xs.w, os.w, kx, pad, stride)).collect(),
        }
    }

    /// Rows of the unfolded input (`cin_g * kh * kw`).
    fn k(&self) -> usize {
        self.cin_g * self.kh * self.kw
    }

    /// 1x1, stride 1, no padding: the unfolded input is the input itself.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    /// Unfolds the `cin_g` input planes starting at `src` into `col`
    /// (`k × oh·ow`, row-major).
    fn im2col<T: Scalar>(&self, src: &[T], col: &mut [T]) {
        let (xs, os) = (self.xs, self.os);
        let p = os.plane();
        col.fill(T::zero());
        for icl in 0..self.cin_g {
            let plane = &src[icl * xs.plane()..(icl + 1) * xs.plane()];
            for ky in 0..self.kh {
                let (oy0, oy1) = self.rows[ky];
                for kx in 0..self.kw {
                    let (ox0, ox1) = self.cols[kx];
                    if ox0 >= ox1 {
                        continue;
                    }
                    let row = &mut col[((icl * self.kh + ky) * self.kw + kx) * p..][..p];
                    for oy in oy0..oy1 {
                        let iy = oy * self.stride + ky - self.pad;
                        let irow = &plane[iy * xs.w..(iy + 1) * xs.w];
                        let dst = &mut row[oy * os.w + ox0..oy * os.w + ox1];
                        let ix0 = ox0 * self.stride + kx - self.pad;
                        if self.stride == 1 {
                            dst.copy_from_slice(&irow[ix0..ix0 + dst.len()]);
                        } else {
                            for (j, d) in dst.iter_mut().enumerate() {
                                *d = irow[ix0 + j * self.stride];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Geometry::im2col`]: accumulates `col` into `dst` planes.
    fn col2im<T: Scalar>(&self, col: &[T], dst: &mut [T]) {
        let (xs, os) = (self.xs, self.os);
        let p = os.plane();
        for icl in 0..self.cin_g {
            let plane = &mut dst[icl * xs.plane()..(icl + 1) * xs.plane()];
            for ky in 0..self.kh {
                let (oy0, oy1) = self.rows[ky];
                for kx in 0..self.kw {
                    let (ox0, ox1) = self.cols[kx];
                    if ox0 >= ox1 {
                        continue;
                    }
                    let row = &col[((icl * self.kh + ky) * self.kw + kx) * p..][..p];
                    for oy in oy0..oy1 {
                        let iy = oy * self.stride + ky - self.pad;
                        let irow = &mut plane[iy * xs.w..(iy + 1) * xs.w];
                        let srow = &row[oy * os.w + ox0..oy * os.w + ox1];
                        let ix0 = ox0 * self.stride + kx - self.pad;
                        if self.stride == 1 {
                            for (d, &s) in irow[ix0..ix0 + srow.len()].iter_mut().zip(srow) {
                                *d += s;
                            }
                        } else {
                            for (j, &s) in srow.iter().enumerate() {
                                irow[ix0 + j * self.stride] += s;
                            }
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward<T: Scalar>(x: &Tensor4<T>, p: &ConvParams<T>) -> Result<(Tensor4<T>, ConvTape<T>)> {
    let os = p.output_shape(x.shape())?;
    let ws = p.weight.shape();
    let geo = Geometry::new(x.shape(), os, ws, p.stride, p.padding, p.groups);
    let (k, plane) = (geo.k(), os.plane());
    let in_group = geo.cin_g * geo.xs.plane();
    let out_group = geo.cout_g * plane;
    let mut out = Tensor4::zeros(os);
    let w = p.weight.value.data();
    let b = p.bias.value.data();
    let mut col = if geo.is_pointwise() { Vec::new() } else { vec![T::zero(); k * plane] };
    for n in 0..os.n {
        for g in 0..p.groups {
            let src = &x.data()[(n * geo.xs.c + g * geo.cin_g) * geo.xs.plane()..][..in_group];
            let unfolded: &[T] = if geo.is_pointwise() {
                src
            } else {
                geo.im2col(src, &mut col);
                &col
            };
            let dst = &mut out.data_mut()[(n * os.c + g * geo.cout_g) * plane..][..out_group];
            for (ocl, chunk) in dst.chunks_exact_mut(plane).enumerate() {
                chunk.fill(b[g * geo.cout_g + ocl]);
            }
            let wg = &w[g * geo.cout_g * k..(g + 1) * geo.cout_g * k];
            T::gemm(geo.cout_g, k, plane, wg, (k, 1), unfolded, (plane, 1), T::one(), dst, (plane, 1));
        }
    }
    let tape = ConvTape {
        input: x.clone(),
        weight_shape: ws,
        output_shape: os,
    };
    Ok((out, tape))
}

pub fn conv2d_backward<T: Scalar>(grad_out: &Tensor4<T>, tape: &ConvTape<T>, p: &ConvParams<T>) -> Result<ConvGrads<T>> {
    let ws = p.weight.shape();
    if ws != tape.weight_shape {
        return Err(Error::Tape(format!("weight shape {ws} differs from recorded {}", tape.weight_shape)));
    }
    let os = tape.output_shape;
    if grad_out.shape() != os {
        return Err(Error::Tape(format!("grad_out {} does not match recorded output {os}", grad_out.shape())));
    }
    let x = &tape.input;
    let geo = Geometry::new(x.shape(), os, ws, p.stride, p.padding, p.groups);
    let (k, plane) = (geo.k(), os.plane());
    let in_group = geo.cin_g * geo.xs.plane();
    let out_group = geo.cout_g * plane;
    let w = p.weight.value.data();
    let mut gx = Tensor4::zeros(geo.xs);
    let mut gw = Tensor4::zeros(ws);
    let mut col = if geo.is_pointwise() { Vec::new() } else { vec![T::zero(); k * plane] };
    let mut gcol = if geo.is_pointwise() { Vec::new() } else { vec![T::zero(); k * plane] };
    for n in 0..os.n {
        for g in 0..p.groups {
            let go = &grad_out.data()[(n * os.c + g * geo.cout_g) * plane..][..out_group];
            let src = &x.data()[(n * geo.xs.c + g * geo.cin_g) * geo.xs.plane()..][..in_group];
            let wg = &w[g * geo.cout_g * k..(g + 1) * geo.cout_g * k];
            let gwg = &mut gw.data_mut()[g * geo.cout_g * k..(g + 1) * geo.cout_g * k];
            let gxg = &mut gx.data_mut()[(n * geo.xs.c + g * geo.cin_g) * geo.xs.plane()..][..in_group];
            if geo.is_pointwise() {
                T::gemm(geo.cout_g, plane, k, go, (plane, 1), src, (1, plane), T::one(), gwg, (k, 1));
                T::gemm(k, geo.cout_g, plane, wg, (1, k), go, (plane, 1), T::zero(), gxg, (plane, 1));
            } else {
                geo.im2col(src, &mut col);
                T::gemm(geo.cout_g, plane, k, go, (plane, 1), &col, (1, plane), T::one(), gwg, (k, 1));
                T::gemm(k, geo.cout_g, plane, wg, (1, k), go, (plane, 1), T::zero(), &mut gcol, (plane, 1));
                geo.col2im(&gcol, gxg);
            }
        }
    }
    let mut gb = Tensor4::zeros([os.c, 1, 1, 1]);
    for (oc, slot) in gb.data_mut().iter_mut().enumerate() {
        *slot = (0..os.n).map(|n| grad_out.plane(n, oc).iter().copied().sum::<T>()).sum();
    }
    Ok(ConvGrads { x: gx, w: gw, b: gb })
}

/// Convolution layer that owns its parameters and forward record.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub p: ConvParams<T>,
    tape: Option<ConvTape<T>>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(p: ConvParams<T>) -> Self {
        Self { p, tape: None }
    }

    pub fn kaiming(
        in_c: usize,
        out_c: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        groups: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        Ok(Self::new(ConvParams::kaiming(in_c, out_c, kernel, stride, padding, groups, rng)?))
    }

    pub fn forward(&mut self, x: &Tensor4<T>, phase: Phase) -> Result<Tensor4<T>> {
        let (out, tape) = conv2d_forward(x, &self.p)?;
        self.tape = (phase == Phase::Train).then_some(tape);
        Ok(out)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
        let tape = self.tape.take().ok_or_else(|| Error::Tape("conv2d".into()))?;
        let g = conv2d_backward(grad_out, &tape, &self.p)?;
        self.p.weight.grad.add_assign(&g.w)?;
        self.p.bias.grad.add_assign(&g.b)?;
        Ok(g.x)
    }
}

impl<T: Scalar> HasParams<T> for Conv2d<T> {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<ParamRef<'a, T>>) {
        out.push((join(prefix, "weight"), &self.p.weight));
        out.push((join(prefix, "bias"), &self.p.bias));
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a, T>>) {
        out.push((join(prefix, "weight"), &mut self.p.weight));
        out.push((join(prefix, "bias"), &mut self.p.bias));
    }
}
