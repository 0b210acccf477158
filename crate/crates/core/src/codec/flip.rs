use crate::codec::HeatmapStack;
use crate::error::{invalid, shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::{flip_horizontal, Tensor4};

/// Flip-test aggregation: mirrors `from_flipped` back, reorders keypoints
/// with `swap` (`out[j]` takes mirrored map `swap[j]`), and averages with
/// `direct`.
pub fn flip_average<T: Scalar>(
    direct: &HeatmapStack<T>,
    from_flipped: &HeatmapStack<T>,
    swap: Option<&[usize]>,
) -> Result<HeatmapStack<T>> {
    let s = direct.maps.shape();
    if from_flipped.maps.shape() != s {
        return Err(shape_err!("flip_average: {} vs {}", s, from_flipped.maps.shape()));
    }
    let mirrored = flip_horizontal(&from_flipped.maps);
    let mirrored = match swap {
        None => mirrored,
        Some(perm) => {
            let mut seen = vec![false; s.c];
            if perm.len() != s.c || perm.iter().any(|&p| p >= s.c || std::mem::replace(&mut seen[p], true)) {
                return Err(invalid!("keypoint permutation {perm:?} is not a bijection on 0..{}", s.c));
            }
            let mut out = Tensor4::zeros(s);
            for (j, &src) in perm.iter().enumerate() {
                out.plane_mut(0, j).copy_from_slice(mirrored.plane(0, src));
            }
            out
        }
    };
    let half = T::of(0.5);
    let maps = direct.maps.zip_map(&mirrored, |a, b| (a + b) * half)?;
    HeatmapStack::new(maps, direct.stride)
}

/// Elementwise mean of heatmaps from several models. The running-mean form
/// returns identical inputs unchanged bit for bit.
pub fn ensemble_average<T: Scalar>(sets: &[HeatmapStack<T>]) -> Result<HeatmapStack<T>> {
    let first = sets.first().ok_or_else(|| invalid!("ensemble of zero heatmap sets"))?;
    let mut mean = first.maps.clone();
    for (k, hm) in sets.iter().enumerate().skip(1) {
        mean.same_shape(&hm.maps)?;
        let inv = T::one() / T::of((k + 1) as f64);
        for (m, &v) in mean.data_mut().iter_mut().zip(hm.maps.data()) {
            *m += (v - *m) * inv;
        }
    }
    HeatmapStack::new(mean, first.stride)
}
