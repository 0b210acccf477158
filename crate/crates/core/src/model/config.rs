use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Channel widths and input geometry of the strided-conv pyramid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackboneConfig {
    /// `(height, width)`; both divisible by 32.
    pub input_size: [usize; 2],
    pub in_channels: usize,
    pub stem_channels: usize,
    /// Channels of F2, F3, F4, F5.
    pub stage_channels: [usize; 4],
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            input_size: [128, 128],
            in_channels: 1,
            stem_channels: 16,
            stage_channels: [16, 32, 64, 128],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeadConfig {
    pub num_keypoints: usize,
    /// Pyramid levels (2..=5) whose fused features get a heatmap head.
    pub supervised_scales: Vec<u32>,
    /// Pixel-shuffle ratio per supervised scale, aligned with
    /// `supervised_scales`. `None` means `2^i`, i.e. input-resolution maps.
    pub upscale: Option<Vec<usize>>,
    /// Side of the per-keypoint large-kernel convolution.
    pub lkc_kernel: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            num_keypoints: 4,
            supervised_scales: vec![2, 3],
            upscale: None,
            lkc_kernel: 9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub neck_channels: usize,
    /// Kernel of the conv block applied to F_i before concatenation.
    pub lateral_kernel: usize,
    pub head: HeadConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneConfig::default(),
            neck_channels: 32,
            lateral_kernel: 3,
            head: HeadConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let [h, w] = self.backbone.input_size;
        if h == 0 || w == 0 || h % 32 != 0 || w % 32 != 0 {
            return Err(invalid!("input size {h}x{w} must be positive multiples of 32"));
        }
        if self.backbone.in_channels == 0 || self.backbone.stem_channels == 0 {
            return Err(invalid!("channel counts must be positive"));
        }
        if self.backbone.stage_channels.iter().any(|&c| c == 0) || self.neck_channels == 0 {
            return Err(invalid!("channel counts must be positive"));
        }
        if self.lateral_kernel % 2 == 0 || self.head.lkc_kernel % 2 == 0 {
            return Err(invalid!("kernel sizes must be odd"));
        }
        let head = &self.head;
        if head.num_keypoints == 0 {
            return Err(invalid!("num_keypoints must be positive"));
        }
        if head.supervised_scales.is_empty() {
            return Err(invalid!("at least one supervised scale is required"));
        }
        let mut seen = [false; 6];
        for &s in &head.supervised_scales {
            if !(2..=5).contains(&s) || seen[s as usize] {
                return Err(invalid!("supervised scales must be distinct values in 2..=5, got {:?}", head.supervised_scales));
            }
            seen[s as usize] = true;
        }
        if let Some(up) = &head.upscale {
            if up.len() != head.supervised_scales.len() || up.iter().any(|&s| s == 0) {
                return Err(invalid!("upscale {up:?} must give one positive ratio per supervised scale"));
            }
        }
        Ok(())
    }

    /// Supervised scales in ascending order.
    pub fn scales(&self) -> Vec<u32> {
        let mut s = self.head.supervised_scales.clone();
        s.sort_unstable();
        s
    }

    pub fn upscale_for(&self, scale: u32) -> usize {
        match &self.head.upscale {
            Some(up) => {
                let i = self.head.supervised_scales.iter().position(|&s| s == scale).expect("supervised scale");
                up[i]
            }
            None => 1 << scale,
        }
    }

    pub fn feature_size(&self, scale: u32) -> (usize, usize) {
        let [h, w] = self.backbone.input_size;
        (h >> scale, w >> scale)
    }

    /// `(h, w)` of the heatmaps emitted for `scale`.
    pub fn heatmap_size(&self, scale: u32) -> (usize, usize) {
        let (h, w) = self.feature_size(scale);
        let s = self.upscale_for(scale);
        (h * s, w * s)
    }

    /// Channels of F_i.
    pub fn feature_channels(&self, scale: u32) -> usize {
        self.backbone.stage_channels[(scale - 2) as usize]
    }

    /// Channels of M_i (M5 is F5).
    pub fn fused_channels(&self, scale: u32) -> usize {
        if scale == 5 {
            self.feature_channels(5)
        } else {
            self.neck_channels
        }
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
