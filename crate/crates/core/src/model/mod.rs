//! Backbone, fusion neck and super-resolution heads assembled into one
//! network.

mod backbone;
mod config;
mod head;
mod neck;
mod serialize;

use std::collections::BTreeMap;

pub use backbone::Backbone;
pub use config::{BackboneConfig, HeadConfig, ModelConfig};
pub use head::{SrHead, LKC_INIT_STD};
pub use neck::Fuse;
pub use serialize::{config_digest, PARAM_MAGIC};

use crate::error::{shape_err, Result};
use crate::layers::{HasParams, ParamMut, ParamRef, Phase};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::{Shape4, Tensor4};

#[derive(Debug, Clone)]
pub struct LandmarkNet<T> {
    config: ModelConfig,
    backbone: Backbone<T>,
    fuses: BTreeMap<u32, Fuse<T>>,
    heads: BTreeMap<u32, SrHead<T>>,
    feature_shapes: Option<[Shape4; 4]>,
}

impl<T: Scalar> LandmarkNet<T> {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::new(seed);
        let backbone = Backbone::new(&config.backbone, &mut rng)?;
        let lowest = config.scales()[0];
        let mut fuses = BTreeMap::new();
        for level in (lowest..5).rev() {
            let fuse = Fuse::new(
                config.feature_channels(level),
                config.fused_channels(level + 1),
                config.neck_channels,
                config.lateral_kernel,
                &mut rng,
            )?;
            fuses.insert(level, fuse);
        }
        let mut heads = BTreeMap::new();
        for scale in config.scales() {
            let head = SrHead::new(
                config.fused_channels(scale),
                config.head.num_keypoints,
                config.upscale_for(scale),
                config.head.lkc_kernel,
                &mut rng,
            )?;
            heads.insert(scale, head);
        }
        Ok(Self {
            config: config.clone(),
            backbone,
            fuses,
            heads,
            feature_shapes: None,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn head_mut(&mut self, scale: u32) -> Option<&mut SrHead<T>> {
        self.heads.get_mut(&scale)
    }

    /// Raw heatmaps `(n, N, h_i, w_i)` for every supervised scale.
    pub fn forward(&mut self, image: &Tensor4<T>, phase: Phase) -> Result<BTreeMap<u32, Tensor4<T>>> {
        let [ih, iw] = self.config.backbone.input_size;
        let s = image.shape();
        if (s.h, s.w) != (ih, iw) {
            return Err(shape_err!("model configured for {ih}x{iw} input, got {s}"));
        }
        let feats = self.backbone.forward(image, phase)?;
        self.feature_shapes = Some([feats[0].shape(), feats[1].shape(), feats[2].shape(), feats[3].shape()]);
        let mut fused: BTreeMap<u32, Tensor4<T>> = BTreeMap::new();
        let [f2, f3, f4, f5] = feats;
        let mut feats = [Some(f2), Some(f3), Some(f4), None];
        fused.insert(5, f5);
        for (&level, fuse) in self.fuses.iter_mut().rev() {
            let feat = feats[(level - 2) as usize].take().expect("feature map");
            let m = fuse.forward(&feat, &fused[&(level + 1)], phase)?;
            fused.insert(level, m);
        }
        let mut out = BTreeMap::new();
        for (&scale, head) in &mut self.heads {
            let hm = head.forward(&fused[&scale], phase)?;
            out.insert(scale, hm);
        }
        for hm in out.values() {
            hm.ensure_finite("model output")?;
        }
        Ok(out)
    }

    /// Accumulates parameter gradients from per-scale heatmap gradients.
    /// Scales missing from `grads` contribute nothing. Returns the image
    /// gradient.
    pub fn backward(&mut self, grads: &BTreeMap<u32, Tensor4<T>>) -> Result<Tensor4<T>> {
        let shapes = self.feature_shapes.take().ok_or_else(|| crate::Error::Tape("model".into()))?;
        let fused_shape = |level: u32| -> Shape4 {
            let fs = shapes[(level - 2) as usize];
            if level == 5 {
                fs
            } else {
                Shape4::new(fs.n, self.config.neck_channels, fs.h, fs.w)
            }
        };
        let mut g_fused: BTreeMap<u32, Tensor4<T>> =
            (2..=5).map(|l| (l, Tensor4::zeros(fused_shape(l)))).collect();
        for (&scale, head) in &mut self.heads {
            if let Some(g) = grads.get(&scale) {
                let gm = head.backward(g)?;
                g_fused.get_mut(&scale).expect("level").add_assign(&gm)?;
            }
        }
        let mut g_feat: [Tensor4<T>; 4] = [
            Tensor4::zeros(shapes[0]),
            Tensor4::zeros(shapes[1]),
            Tensor4::zeros(shapes[2]),
            Tensor4::zeros(shapes[3]),
        ];
        for (&level, fuse) in &mut self.fuses {
            let (gf, gu) = fuse.backward(&g_fused[&level])?;
            g_feat[(level - 2) as usize].add_assign(&gf)?;
            g_fused.get_mut(&(level + 1)).expect("level").add_assign(&gu)?;
        }
        g_feat[3].add_assign(&g_fused[&5])?;
        self.backbone.backward(g_feat)
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        let mut all = Vec::new();
        self.params("", &mut all);
        all.iter().filter(|(_, p)| p.trainable).map(|(_, p)| p.value.len()).sum()
    }

    pub fn named_params(&self) -> Vec<ParamRef<'_, T>> {
        let mut all = Vec::new();
        self.params("", &mut all);
        all
    }

    pub fn named_params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        let mut all = Vec::new();
        self.params_mut("", &mut all);
        all
    }
}

impl<T: Scalar> HasParams<T> for LandmarkNet<T> {
    fn params<'a>(&'a self, _prefix: &str, out: &mut Vec<ParamRef<'a, T>>) {
        self.backbone.params("backbone", out);
        for (level, f) in self.fuses.iter().rev() {
            f.params(&format!("neck.fuse{level}"), out);
        }
        for (scale, h) in &self.heads {
            h.params(&format!("head.s{scale}"), out);
        }
    }

    fn params_mut<'a>(&'a mut self, _prefix: &str, out: &mut Vec<ParamMut<'a, T>>) {
        self.backbone.params_mut("backbone", out);
        for (level, f) in self.fuses.iter_mut().rev() {
            f.params_mut(&format!("neck.fuse{level}"), out);
        }
        for (scale, h) in &mut self.heads {
            h.params_mut(&format!("head.s{scale}"), out);
        }
    }
}
