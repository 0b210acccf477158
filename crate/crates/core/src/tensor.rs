//! Dense NCHW tensors.

use std::io::{Read, Write};

use crate::error::{invalid, shape_err, Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

/// Batch, channel, row and column extents of a [`Tensor4`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape4 {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    #[inline(always)]
    pub const fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.c + c) * self.h + y) * self.w + x
    }

    pub const fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl std::fmt::Display for Shape4 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

impl From<[usize; 4]> for Shape4 {
    fn from(d: [usize; 4]) -> Self {
        Self::new(d[0], d[1], d[2], d[3])
    }
}

/// Row-major NCHW array. `data.len() == shape.len()` always holds.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T> {
    shape: Shape4,
    data: Vec<T>,
}

const DUMP_MAGIC: &[u8; 4] = b"T4v1";

impl<T: Scalar> Tensor4<T> {
    pub fn zeros(shape: impl Into<Shape4>) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: impl Into<Shape4>, value: T) -> Self {
        let shape = shape.into();
        Self {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self::zeros(other.shape)
    }

    /// Wraps `data`, rejecting a length mismatch or non-finite entries.
    pub fn from_vec(shape: impl Into<Shape4>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        if data.len() != shape.len() {
            return Err(shape_err!(
                "{} values supplied for shape {shape} ({} expected)",
                data.len(),
                shape.len()
            ));
        }
        let t = Self { shape, data };
        t.ensure_finite("from_vec")?;
        Ok(t)
    }

    pub fn from_fn(shape: impl Into<Shape4>, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let shape = shape.into();
        let mut data = Vec::with_capacity(shape.len());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for y in 0..shape.h {
                    for x in 0..shape.w {
                        data.push(f(n, c, y, x));
                    }
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.shape.index(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: T) {
        let i = self.shape.index(n, c, y, x);
        self.data[i] = v;
    }

    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &self.data[start..start + p]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [T] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &mut self.data[start..start + p]
    }

    pub fn reshape(self, shape: impl Into<Shape4>) -> Result<Self> {
        let shape = shape.into();
        if shape.len() != self.shape.len() {
            return Err(shape_err!("cannot reshape {} into {shape}", self.shape));
        }
        Ok(Self { shape, data: self.data })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::NonFinite(format!("{context}: element {i} of {}", self.shape))),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.same_shape(other)?;
        Ok(Self {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    /// `self += other` in place.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.same_shape(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(shape_err!("{} vs {}", self.shape, other.shape));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|v| U::of(v.f64())).collect(),
        }
    }

    /// Batch item `i` as a `(1, c, h, w)` tensor.
    pub fn batch_item(&self, i: usize) -> Self {
        let s = self.shape;
        let per = s.c * s.plane();
        Self {
            shape: Shape4::new(1, s.c, s.h, s.w),
            data: self.data[i * per..(i + 1) * per].to_vec(),
        }
    }

    /// Concatenates tensors along the batch axis.
    pub fn stack_batch(items: &[Self]) -> Result<Self> {
        let first = items.first().ok_or_else(|| invalid!("stack_batch of zero tensors"))?;
        let s = first.shape;
        let mut data = Vec::with_capacity(s.len() * items.len());
        let mut n = 0;
        for t in items {
            if (t.shape.c, t.shape.h, t.shape.w) != (s.c, s.h, s.w) {
                return Err(shape_err!("stack_batch: {} vs {}", t.shape, s));
            }
            n += t.shape.n;
            data.extend_from_slice(&t.data);
        }
        Ok(Self {
            shape: Shape4::new(n, s.c, s.h, s.w),
            data,
        })
    }

    /// Writes the `T4v1` debug dump: magic, four u32 LE dims, f64 LE values.
    pub fn write_dump(&self, mut out: impl Write) -> std::io::Result<()> {
        out.write_all(DUMP_MAGIC)?;
        for d in self.shape.dims() {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in &self.data {
            out.write_all(&v.f64().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_dump(mut input: impl Read) -> Result<Self> {
        let fmt = |msg: String| Error::Format { what: "tensor dump", msg };
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic).map_err(|e| fmt(e.to_string()))?;
        if &magic != DUMP_MAGIC {
            return Err(fmt(format!("bad magic {magic:?}")));
        }
        let mut dims = [0usize; 4];
        for d in &mut dims {
            let mut b = [0u8; 4];
            input.read_exact(&mut b).map_err(|e| fmt(e.to_string()))?;
            *d = u32::from_le_bytes(b) as usize;
        }
        let shape = Shape4::from(dims);
        let mut data = Vec::with_capacity(shape.len());
        let mut b = [0u8; 8];
        for _ in 0..shape.len() {
            input.read_exact(&mut b).map_err(|e| fmt(format!("truncated payload: {e}")))?;
            data.push(T::of(f64::from_le_bytes(b)));
        }
        Self::from_vec(shape, data)
    }
}

/// Stacks `a`'s channels followed by `b`'s.
pub fn concat_channels<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    let (sa, sb) = (a.shape, b.shape);
    if (sa.n, sa.h, sa.w) != (sb.n, sb.h, sb.w) {
        return Err(shape_err!("concat_channels: {sa} and {sb} disagree on n/h/w"));
    }
    let shape = Shape4::new(sa.n, sa.c + sb.c, sa.h, sa.w);
    let (pa, pb) = (sa.c * sa.plane(), sb.c * sb.plane());
    let mut data = Vec::with_capacity(shape.len());
    for n in 0..sa.n {
        data.extend_from_slice(&a.data[n * pa..(n + 1) * pa]);
        data.extend_from_slice(&b.data[n * pb..(n + 1) * pb]);
    }
    Ok(Tensor4 { shape, data })
}

/// Inverse of [`concat_channels`]: the first `c_first` channels and the rest.
pub fn split_channels<T: Scalar>(t: &Tensor4<T>, c_first: usize) -> Result<(Tensor4<T>, Tensor4<T>)> {
    let s = t.shape;
    if c_first > s.c {
        return Err(shape_err!("split_channels: {c_first} > {} channels", s.c));
    }
    let p = s.plane();
    let (ca, cb) = (c_first, s.c - c_first);
    let mut a = Vec::with_capacity(s.n * ca * p);
    let mut b = Vec::with_capacity(s.n * cb * p);
    for n in 0..s.n {
        let base = n * s.c * p;
        a.extend_from_slice(&t.data[base..base + ca * p]);
        b.extend_from_slice(&t.data[base + ca * p..base + s.c * p]);
    }
    Ok((
        Tensor4 { shape: Shape4::new(s.n, ca, s.h, s.w), data: a },
        Tensor4 { shape: Shape4::new(s.n, cb, s.h, s.w), data: b },
    ))
}

/// Mirrors every row: `out[.., x] = t[.., w-1-x]`.
pub fn flip_horizontal<T: Scalar>(t: &Tensor4<T>) -> Tensor4<T> {
    let w = t.shape.w;
    let mut data = t.data.clone();
    if w > 0 {
        for row in data.chunks_exact_mut(w) {
            row.reverse();
        }
    }
    Tensor4 { shape: t.shape, data }
}

/// I.i.d. `N(0, scale^2)` entries.
pub fn randn_init<T: Scalar>(shape: impl Into<Shape4>, rng: &mut SeededRng, scale: f64) -> Result<Tensor4<T>> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(invalid!("randn_init scale must be positive, got {scale}"));
    }
    let shape = shape.into();
    let data = (0..shape.len()).map(|_| T::of(rng.normal() * scale)).collect();
    Ok(Tensor4 { shape, data })
}
