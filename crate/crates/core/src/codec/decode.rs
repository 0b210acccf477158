//! Heatmap → coordinate decoders: grid argmax, quarter-offset shift, and
//! the distribution-aware second-order refinement of the log-heatmap.

use serde::{Deserialize, Serialize};

use crate::codec::{GaussianSpec, HeatmapStack, LandmarkSet};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decoder {
    Argmax,
    Shifted,
    Dark,
}

impl Decoder {
    pub const ALL: [Decoder; 3] = [Decoder::Argmax, Decoder::Shifted, Decoder::Dark];

    pub fn name(&self) -> &'static str {
        match self {
            Decoder::Argmax => "argmax",
            Decoder::Shifted => "shifted",
            Decoder::Dark => "dark",
        }
    }
}

impl std::str::FromStr for Decoder {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "argmax" => Ok(Decoder::Argmax),
            "shifted" => Ok(Decoder::Shifted),
            "dark" => Ok(Decoder::Dark),
            other => Err(crate::Error::Invalid(format!("unknown decoder `{other}`"))),
        }
    }
}

/// What happened while decoding one keypoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeypointNote {
    Clean,
    /// All-zero map; the keypoint is reported invisible.
    Empty,
    /// Several pixels share the maximum; the first in (y, x) order was used.
    Tie,
    /// Peak on the outer ring; refinement fell back to the shifted decoder.
    Boundary,
    /// Singular Hessian; refinement fell back to the shifted decoder.
    Singular,
}

#[derive(Debug, Clone)]
pub struct Decoded {
    pub landmarks: LandmarkSet,
    pub notes: Vec<KeypointNote>,
}

struct Peak {
    x: usize,
    y: usize,
    note: KeypointNote,
}

fn argmax<T: Scalar>(map: &[T], w: usize) -> Peak {
    let mut best = 0;
    let mut ties = 0;
    for (i, &v) in map.iter().enumerate() {
        if v > map[best] {
            best = i;
            ties = 0;
        } else if v == map[best] && i != best {
            ties += 1;
        }
    }
    let note = if map[best] == T::zero() && map.iter().all(|&v| v == T::zero()) {
        KeypointNote::Empty
    } else if ties > 0 {
        KeypointNote::Tie
    } else {
        KeypointNote::Clean
    };
    Peak {
        x: best % w,
        y: best / w,
        note,
    }
}

fn quarter_shift<T: Scalar>(map: &[T], w: usize, h: usize, px: usize, py: usize) -> (f64, f64) {
    let at = |x: usize, y: usize| map[y * w + x];
    let step = |lo: T, hi: T| -> f64 {
        if hi > lo {
            0.25
        } else if lo > hi {
            -0.25
        } else {
            0.0
        }
    };
    let dx = if px > 0 && px + 1 < w { step(at(px - 1, py), at(px + 1, py)) } else { 0.0 };
    let dy = if py > 0 && py + 1 < h { step(at(px, py - 1), at(px, py + 1)) } else { 0.0 };
    (px as f64 + dx, py as f64 + dy)
}

fn finish(hm_points: Vec<[f64; 2]>, notes: Vec<KeypointNote>, stride: [f64; 2]) -> Decoded {
    let visible = notes.iter().map(|n| *n != KeypointNote::Empty).collect();
    let points = hm_points.into_iter().map(|[x, y]| [x * stride[0], y * stride[1]]).collect();
    Decoded {
        landmarks: LandmarkSet { points, visible },
        notes,
    }
}

/// Grid argmax per map, ties broken by smallest `(y, x)`.
pub fn decode_argmax<T: Scalar>(hm: &HeatmapStack<T>) -> Decoded {
    let (_, w) = hm.size();
    let mut pts = Vec::new();
    let mut notes = Vec::new();
    for j in 0..hm.num_keypoints() {
        let p = argmax(hm.map(j), w);
        pts.push([p.x as f64, p.y as f64]);
        notes.push(p.note);
    }
    finish(pts, notes, hm.stride)
}

/// Argmax moved a quarter pixel toward the larger neighbour on each axis.
pub fn decode_shifted<T: Scalar>(hm: &HeatmapStack<T>) -> Decoded {
    let (h, w) = hm.size();
    let mut pts = Vec::new();
    let mut notes = Vec::new();
    for j in 0..hm.num_keypoints() {
        let map = hm.map(j);
        let p = argmax(map, w);
        let (x, y) = quarter_shift(map, w, h, p.x, p.y);
        pts.push([x, y]);
        notes.push(p.note);
    }
    finish(pts, notes, hm.stride)
}

/// Separable Gaussian blur with replicated borders, rescaled so the
/// maximum is unchanged.
fn modulate(map: &[f64], w: usize, h: usize, sigma: [f64; 2]) -> Vec<f64> {
    let kernel = |s: f64| -> Vec<f64> {
        let r = (3.0 * s).ceil().max(1.0) as isize;
        let k: Vec<f64> = (-r..=r).map(|i| (-0.5 * (i as f64 / s).powi(2)).exp()).collect();
        let total: f64 = k.iter().sum();
        k.into_iter().map(|v| v / total).collect()
    };
    let (kx, ky) = (kernel(sigma[0]), kernel(sigma[1]));
    let (rx, ry) = ((kx.len() / 2) as isize, (ky.len() / 2) as isize);
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = kx
                .iter()
                .enumerate()
                .map(|(i, k)| k * map[y * w + clamp(x as isize + i as isize - rx, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = ky
                .iter()
                .enumerate()
                .map(|(i, k)| k * tmp[clamp(y as isize + i as isize - ry, h) * w + x])
                .sum();
        }
    }
    let orig_max = map.iter().copied().fold(f64::MIN, f64::max);
    let new_max = out.iter().copied().fold(f64::MIN, f64::max);
    if new_max > 0.0 {
        let k = orig_max / new_max;
        out.iter_mut().for_each(|v| *v *= k);
    }
    out
}

const LOG_FLOOR: f64 = 1e-10;
const SINGULAR_DET: f64 = 1e-12;

/// Second-order Taylor refinement of `ln(heatmap)` at the argmax:
/// `offset = -H^{-1} g`, each component clamped to `[-1, 1]`. With
/// `modulated`, maps are first smoothed by a Gaussian of the target sigma
/// (in heatmap pixels). Peaks on the border ring or with a singular
/// Hessian fall back to the shifted decoder.
pub fn decode_dark<T: Scalar>(hm: &HeatmapStack<T>, spec: &GaussianSpec, modulated: bool) -> Decoded {
    let (h, w) = hm.size();
    let sigma = [spec.sigma / hm.stride[0], spec.sigma / hm.stride[1]];
    let mut pts = Vec::new();
    let mut notes = Vec::new();
    for j in 0..hm.num_keypoints() {
        let raw = hm.map(j);
        let p = argmax(raw, w);
        if p.note == KeypointNote::Empty {
            pts.push([p.x as f64, p.y as f64]);
            notes.push(p.note);
            continue;
        }
        if p.x < 1 || p.y < 1 || p.x + 2 > w || p.y + 2 > h {
            let (x, y) = quarter_shift(raw, w, h, p.x, p.y);
            pts.push([x, y]);
            notes.push(KeypointNote::Boundary);
            continue;
        }
        let vals: Vec<f64> = raw.iter().map(|v| v.f64()).collect();
        let vals = if modulated { modulate(&vals, w, h, sigma) } else { vals };
        let l = |x: usize, y: usize| vals[y * w + x].max(LOG_FLOOR).ln();
        let (x, y) = (p.x, p.y);
        let c = l(x, y);
        let dx = 0.5 * (l(x + 1, y) - l(x - 1, y));
        let dy = 0.5 * (l(x, y + 1) - l(x, y - 1));
        let dxx = l(x + 1, y) - 2.0 * c + l(x - 1, y);
        let dyy = l(x, y + 1) - 2.0 * c + l(x, y - 1);
        let dxy = 0.25 * (l(x + 1, y + 1) - l(x + 1, y - 1) - l(x - 1, y + 1) + l(x - 1, y - 1));
        let det = dxx * dyy - dxy * dxy;
        if !det.is_finite() || det.abs() < SINGULAR_DET {
            let (sx, sy) = quarter_shift(raw, w, h, p.x, p.y);
            pts.push([sx, sy]);
            notes.push(KeypointNote::Singular);
            continue;
        }
        let ox = (-(dyy * dx - dxy * dy) / det).clamp(-1.0, 1.0);
        let oy = (-(dxx * dy - dxy * dx) / det).clamp(-1.0, 1.0);
        pts.push([x as f64 + ox, y as f64 + oy]);
        notes.push(p.note);
    }
    finish(pts, notes, hm.stride)
}

pub fn decode<T: Scalar>(hm: &HeatmapStack<T>, decoder: Decoder, spec: &GaussianSpec, modulated: bool) -> Decoded {
    match decoder {
        Decoder::Argmax => decode_argmax(hm),
        Decoder::Shifted => decode_shifted(hm),
        Decoder::Dark => decode_dark(hm, spec, modulated),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::encode_gaussian;
    use crate::tensor::Tensor4;

    fn single(map: Vec<f64>, h: usize, w: usize) -> HeatmapStack<f64> {
        HeatmapStack::new(Tensor4::from_vec([1, 1, h, w], map).unwrap(), [1.0, 1.0]).unwrap()
    }

    #[test]
    fn argmax_single_peak_and_stride() {
        let mut m = vec![0.0; 20];
        m[2 * 5 + 3] = 1.0;
        let mut hm = single(m, 4, 5);
        let d = decode_argmax(&hm);
        assert_eq!(d.landmarks.points[0], [3.0, 2.0]);
        hm.stride = [4.0, 2.0];
        assert_eq!(decode_argmax(&hm).landmarks.points[0], [12.0, 4.0]);
    }

    #[test]
    fn uniform_map_tie_rule() {
        let d = decode_argmax(&single(vec![0.5; 9], 3, 3));
        assert_eq!(d.landmarks.points[0], [0.0, 0.0]);
        assert_eq!(d.notes[0], KeypointNote::Tie);
        assert!(d.landmarks.visible[0]);
    }

    #[test]
    fn all_zero_is_invisible() {
        for dec in Decoder::ALL {
            let d = decode(&single(vec![0.0; 16], 4, 4), dec, &GaussianSpec::default(), true);
            assert!(!d.landmarks.visible[0]);
            assert_eq!(d.notes[0], KeypointNote::Empty);
        }
    }

    #[test]
    fn argmax_error_bound() {
        // stride 4 keeps the nearest grid point within half a cell diagonal.
        let lm = LandmarkSet::new(vec![[10.3, 20.7]]);
        let e = encode_gaussian::<f64>(&lm, &GaussianSpec::default(), 32, 32, [4.0, 4.0]).unwrap();
        let p = decode_argmax(&e.heatmaps).landmarks.points[0];
        assert_eq!(p, [12.0, 20.0]);
        let err = ((p[0] - 10.3f64).powi(2) + (p[1] - 20.7f64).powi(2)).sqrt();
        assert!(err <= 0.5 * 2f64.sqrt() * 4.0);
    }

    #[test]
    fn shifted_rule() {
        // symmetric peak: no shift
        let m = vec![0.0, 0.5, 0.0, 0.5, 1.0, 0.5, 0.0, 0.5, 0.0];
        assert_eq!(decode_shifted(&single(m, 3, 3)).landmarks.points[0], [1.0, 1.0]);
        // larger right neighbour
        let m = vec![0.0, 0.5, 0.0, 0.5, 1.0, 0.7, 0.0, 0.5, 0.0];
        assert_eq!(decode_shifted(&single(m, 3, 3)).landmarks.points[0], [1.25, 1.0]);
    }

    #[test]
    fn dark_on_grid_gives_zero_offset() {
        let lm = LandmarkSet::new(vec![[40.0, 24.0]]);
        let e = encode_gaussian::<f64>(&lm, &GaussianSpec::default(), 32, 32, [4.0, 4.0]).unwrap();
        for modulated in [false, true] {
            let p = decode_dark(&e.heatmaps, &GaussianSpec::default(), modulated).landmarks.points[0];
            assert!((p[0] - 40.0).abs() < 1e-9 && (p[1] - 24.0).abs() < 1e-9, "{p:?}");
        }
    }

    #[test]
    fn dark_recovers_sub_pixel_center() {
        let spec = GaussianSpec::default();
        let lm = LandmarkSet::new(vec![[50.3, 60.7]]);
        let e = encode_gaussian::<f64>(&lm, &spec, 32, 32, [4.0, 4.0]).unwrap();
        let p = decode_dark(&e.heatmaps, &spec, false).landmarks.points[0];
        assert!((p[0] - 50.3).abs() < 0.05 && (p[1] - 60.7).abs() < 0.05, "{p:?}");
    }

    #[test]
    fn dark_boundary_and_singular_fallbacks() {
        let mut m = vec![0.0; 16];
        m[1] = 1.0;
        let d = decode_dark(&single(m, 4, 4), &GaussianSpec::with_sigma(1.0), false);
        assert_eq!(d.notes[0], KeypointNote::Boundary);
        // peak below the log floor: every log value is equal
        let mut m = vec![0.0; 25];
        m[12] = 1e-11;
        let d = decode_dark(&single(m, 5, 5), &GaussianSpec::with_sigma(1.0), false);
        assert_eq!(d.notes[0], KeypointNote::Singular);
    }
}
