use crate::error::{invalid, Result};

/// Continuous landmark coordinates in some pixel frame, with visibility.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    /// `(x, y)`, pixel centers at integers, origin at the top-left center.
    pub points: Vec<[f64; 2]>,
    pub visible: Vec<bool>,
}

impl LandmarkSet {
    pub fn new(points: Vec<[f64; 2]>) -> Self {
        let visible = vec![true; points.len()];
        Self { points, visible }
    }

    pub fn with_visibility(points: Vec<[f64; 2]>, visible: Vec<bool>) -> Result<Self> {
        if points.len() != visible.len() {
            return Err(invalid!("{} points but {} visibility flags", points.len(), visible.len()));
        }
        Ok(Self { points, visible })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn in_frame(&self, j: usize, width: usize, height: usize) -> bool {
        let [x, y] = self.points[j];
        x.is_finite() && y.is_finite() && x >= 0.0 && y >= 0.0 && x <= (width - 1) as f64 && y <= (height - 1) as f64
    }

    /// Marks points outside `[0, w-1] x [0, h-1]` invisible.
    pub fn clip_visibility(&mut self, width: usize, height: usize) {
        for j in 0..self.len() {
            if !self.in_frame(j, width, height) {
                self.visible[j] = false;
            }
        }
    }
}

/// 2x3 matrix mapping `(x, y, 1)` to `(x', y')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub m: [[f64; 3]; 2],
}

impl AffineMap {
    pub const IDENTITY: AffineMap = AffineMap {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
    };

    pub fn apply(&self, [x, y]: [f64; 2]) -> [f64; 2] {
        let m = &self.m;
        [m[0][0] * x + m[0][1] * y + m[0][2], m[1][0] * x + m[1][1] * y + m[1][2]]
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    /// `self ∘ first`: applies `first`, then `self`.
    pub fn after(&self, first: &AffineMap) -> AffineMap {
        let (a, b) = (&self.m, &first.m);
        let mut m = [[0.0; 3]; 2];
        for r in 0..2 {
            for c in 0..3 {
                m[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
            m[r][2] += a[r][2];
        }
        AffineMap { m }
    }

    pub fn inverse(&self) -> Result<AffineMap> {
        let det = self.det();
        let scale = self.m[0][0].abs().max(self.m[0][1].abs()).max(self.m[1][0].abs()).max(self.m[1][1].abs());
        if !det.is_finite() || det.abs() <= 1e-12 * scale * scale || scale == 0.0 {
            return Err(invalid!("affine map is not invertible (det {det})"));
        }
        let [[a, b, tx], [c, d, ty]] = self.m;
        let (ia, ib, ic, id) = (d / det, -b / det, -c / det, a / det);
        Ok(AffineMap {
            m: [[ia, ib, -(ia * tx + ib * ty)], [ic, id, -(ic * tx + id * ty)]],
        })
    }

    pub fn translation(tx: f64, ty: f64) -> AffineMap {
        AffineMap {
            m: [[1.0, 0.0, tx], [0.0, 1.0, ty]],
        }
    }

    /// Scale by `scale` and rotate by `angle_rad` about `(cx, cy)`, then
    /// translate by `(tx, ty)`.
    pub fn about_center(cx: f64, cy: f64, scale: f64, angle_rad: f64, tx: f64, ty: f64) -> AffineMap {
        let (s, c) = angle_rad.sin_cos();
        let (a, b) = (scale * c, -scale * s);
        let (d, e) = (scale * s, scale * c);
        AffineMap {
            m: [
                [a, b, cx - a * cx - b * cy + tx],
                [d, e, cy - d * cx - e * cy + ty],
            ],
        }
    }
}

/// Unbiased resize: pixel-center `0 -> 0` and `src-1 -> dst-1` on each axis.
pub fn make_resize_map(src_w: usize, src_h: usize, dst_w: usize, dst_h: usize) -> Result<AffineMap> {
    if src_w < 2 || src_h < 2 || dst_w < 2 || dst_h < 2 {
        return Err(invalid!("unbiased resize needs at least 2 pixels per axis ({src_w}x{src_h} -> {dst_w}x{dst_h})"));
    }
    let sx = (dst_w - 1) as f64 / (src_w - 1) as f64;
    let sy = (dst_h - 1) as f64 / (src_h - 1) as f64;
    Ok(AffineMap {
        m: [[sx, 0.0, 0.0], [0.0, sy, 0.0]],
    })
}

/// Horizontal mirror `x' = (w - 1) - x`.
pub fn make_flip_map(width: usize) -> AffineMap {
    AffineMap {
        m: [[-1.0, 0.0, width as f64 - 1.0], [0.0, 1.0, 0.0]],
    }
}

pub fn affine_apply(map: &AffineMap, pts: &LandmarkSet) -> LandmarkSet {
    LandmarkSet {
        points: pts.points.iter().map(|&p| map.apply(p)).collect(),
        visible: pts.visible.clone(),
    }
}
