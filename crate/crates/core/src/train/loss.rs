//! Multi-scale heatmap loss with optional online hard keypoint mining.
//!
//! For image `b` and keypoint `j` the per-keypoint loss is
//! `l_bj = 0.5 * sum_i d(H_bij, G_bij)` over supervised scales `i`, where
//! `d` is the mean squared error of the map (`mse`) or the Frobenius norm of
//! the difference (`l2norm`). The image loss is the mean of `l_bj` over
//! keypoints (equivalently `1/(2N)` times the double sum), or the mean of
//! the `k` largest when mining is enabled. The batch loss averages images.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor4;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    #[default]
    Mse,
    L2norm,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub mode: LossMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ohkm_topk: Option<usize>,
}

impl LossConfig {
    pub fn validate(&self, num_keypoints: usize) -> Result<()> {
        match self.ohkm_topk {
            Some(k) if k == 0 || k > num_keypoints => {
                Err(invalid!("ohkm_topk = {k} must lie in 1..={num_keypoints}"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LossOutput<T> {
    pub value: f64,
    /// `l_bj` averaged over the batch, one entry per keypoint.
    pub per_keypoint: Vec<f64>,
    pub grads: BTreeMap<u32, Tensor4<T>>,
}

/// Mean of the `topk` largest losses and the indices selected (ties go to
/// the lower index).
pub fn loss_ohkm(losses: &[f64], topk: usize) -> Result<(f64, Vec<usize>)> {
    if topk == 0 || topk > losses.len() {
        return Err(invalid!("topk {topk} outside 1..={}", losses.len()));
    }
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&a, &b| losses[b].total_cmp(&losses[a]).then(a.cmp(&b)));
    order.truncate(topk);
    order.sort_unstable();
    let value = order.iter().map(|&j| losses[j]).sum::<f64>() / topk as f64;
    Ok((value, order))
}

pub fn loss_multiscale<T: Scalar>(
    pred: &BTreeMap<u32, Tensor4<T>>,
    gt: &BTreeMap<u32, Tensor4<T>>,
    cfg: &LossConfig,
) -> Result<LossOutput<T>> {
    if pred.is_empty() {
        return Err(invalid!("empty scale set"));
    }
    if !pred.keys().eq(gt.keys()) {
        return Err(shape_err!(
            "prediction scales {:?} differ from target scales {:?}",
            pred.keys().collect::<Vec<_>>(),
            gt.keys().collect::<Vec<_>>()
        ));
    }
    let first = pred.values().next().expect("non-empty").shape();
    let (batch, n) = (first.n, first.c);
    for (scale, p) in pred {
        let g = &gt[scale];
        if p.shape() != g.shape() || p.shape().n != batch || p.shape().c != n {
            return Err(shape_err!("scale {scale}: prediction {} vs target {}", p.shape(), g.shape()));
        }
    }
    cfg.validate(n)?;

    // d[b][j][scale index] and the derivative factor for each map.
    let scales: Vec<u32> = pred.keys().copied().collect();
    let mut dist = vec![vec![vec![0.0f64; scales.len()]; n]; batch];
    for (si, s) in scales.iter().enumerate() {
        let (p, g) = (&pred[s], &gt[s]);
        for (b, row) in dist.iter_mut().enumerate() {
            for (j, d) in row.iter_mut().enumerate() {
                let sq: f64 = p.plane(b, j).iter().zip(g.plane(b, j)).map(|(a, c)| (a.f64() - c.f64()).powi(2)).sum();
                d[si] = match cfg.mode {
                    LossMode::Mse => sq / p.shape().plane() as f64,
                    LossMode::L2norm => sq.sqrt(),
                };
            }
        }
    }

    let mut value = 0.0;
    let mut per_keypoint = vec![0.0; n];
    // weight[b][j]: d(loss)/d(l_bj)
    let mut weight = vec![vec![0.0f64; n]; batch];
    for b in 0..batch {
        let l: Vec<f64> = dist[b].iter().map(|d| 0.5 * d.iter().sum::<f64>()).collect();
        for (acc, v) in per_keypoint.iter_mut().zip(&l) {
            *acc += v / batch as f64;
        }
        let (img, selected) = match cfg.ohkm_topk {
            Some(k) => loss_ohkm(&l, k)?,
            None => (l.iter().sum::<f64>() / n as f64, (0..n).collect()),
        };
        value += img / batch as f64;
        for &j in &selected {
            weight[b][j] = 1.0 / (selected.len() * batch) as f64;
        }
    }

    let mut grads = BTreeMap::new();
    for (si, s) in scales.iter().enumerate() {
        let (p, g) = (&pred[s], &gt[s]);
        let mut out = Tensor4::zeros(p.shape());
        let plane = p.shape().plane() as f64;
        for b in 0..batch {
            for j in 0..n {
                let w = weight[b][j];
                if w == 0.0 {
                    continue;
                }
                let factor = match cfg.mode {
                    LossMode::Mse => w * 0.5 * 2.0 / plane,
                    LossMode::L2norm => {
                        let norm = dist[b][j][si];
                        if norm == 0.0 {
                            continue;
                        }
                        w * 0.5 / norm
                    }
                };
                let gp = g.plane(b, j);
                let pp = p.plane(b, j);
                for ((o, a), c) in out.plane_mut(b, j).iter_mut().zip(pp).zip(gp) {
                    *o = T::of(factor * (a.f64() - c.f64()));
                }
            }
        }
        grads.insert(*s, out);
    }
    Ok(LossOutput {
        value,
        per_keypoint,
        grads,
    })
}
