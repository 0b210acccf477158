use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use ceph_core::codec::Decoder;
use ceph_core::config::RunConfig;
use ceph_core::train::LossMode;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "ceph", version, about = "Heatmap landmark detection on toy cephalograms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (PGM images + JSON annotations).
    GenData(GenDataArgs),
    /// Train a model; writes params.srkp, train_log.csv and config.toml.
    Train(TrainArgs),
    /// Evaluate a parameter file; writes report.csv and report.json.
    Eval(EvalArgs),
    /// Predict landmarks for one image; writes landmarks.json and overlay.svg.
    Infer(InferArgs),
    /// Sweep decoder x stride x sigma on rendered Gaussians.
    DecodeBench(DecodeBenchArgs),
    /// Tabulate the nearest-grid quantization error per stride.
    BiasReport(BiasReportArgs),
    /// Average the heatmaps of several parameter files, decode once, evaluate.
    EnsembleEval(EnsembleArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub n_train: usize,
    #[arg(long, default_value_t = 50)]
    pub n_val: usize,
    #[arg(long, default_value_t = 4)]
    pub landmarks: usize,
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// `--config FILE` plus flags overriding individual keys of it.
#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// TOML run configuration; defaults apply to missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training annotation file.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Validation annotation file.
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Network input size, `SIZE` or `HxW`.
    #[arg(long)]
    pub input_size: Option<String>,
    #[arg(long)]
    pub keypoints: Option<usize>,
    /// Supervised scales, comma separated (subset of 2,3,4,5).
    #[arg(long, value_delimiter = ',')]
    pub scales: Option<Vec<u32>>,
    /// Per-scale upscale ratios, comma separated, matching --scales.
    #[arg(long, value_delimiter = ',')]
    pub upscale: Option<Vec<usize>>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// argmax | shifted | dark
    #[arg(long)]
    pub decoder: Option<Decoder>,
    #[arg(long)]
    pub dark_modulation: Option<bool>,
    #[arg(long)]
    pub flip_test: Option<bool>,
    /// mse | l2norm
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub ohkm_topk: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub augment: Option<bool>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.train {
            cfg.data.train = Some(v.clone());
        }
        if let Some(v) = &self.val {
            cfg.data.val = Some(v.clone());
        }
        if let Some(v) = &self.input_size {
            cfg.model.backbone.input_size = parse_size(v)?;
        }
        if let Some(v) = self.keypoints {
            cfg.model.head.num_keypoints = v;
        }
        if let Some(v) = &self.scales {
            cfg.model.head.supervised_scales = v.clone();
        }
        if let Some(v) = &self.upscale {
            cfg.model.head.upscale = Some(v.clone());
        }
        if let Some(v) = self.sigma {
            cfg.codec.gaussian.sigma = v;
        }
        if let Some(v) = self.decoder {
            cfg.codec.decoder = v;
        }
        if let Some(v) = self.dark_modulation {
            cfg.codec.dark_modulation = v;
        }
        if let Some(v) = self.flip_test {
            cfg.codec.flip_test = v;
        }
        if let Some(v) = &self.loss {
            cfg.loss.mode = match v.as_str() {
                "mse" => LossMode::Mse,
                "l2norm" => LossMode::L2norm,
                other => bail!(ceph_core::Error::Config(format!("unknown loss mode `{other}`"))),
            };
        }
        if let Some(v) = self.ohkm_topk {
            cfg.loss.ohkm_topk = Some(v);
        }
        if let Some(v) = self.lr {
            cfg.optim.lr = v;
        }
        if let Some(v) = self.epochs {
            cfg.optim.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.optim.batch_size = v;
        }
        if let Some(v) = self.augment {
            cfg.augment.enabled = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_size(s: &str) -> Result<[usize; 2]> {
    let parse = |t: &str| t.trim().parse::<usize>().with_context(|| format!("bad input size `{s}`"));
    match s.split_once(['x', 'X']) {
        Some((h, w)) => Ok([parse(h)?, parse(w)?]),
        None => {
            let v = parse(s)?;
            Ok([v, v])
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Save params_epochNNN.srkp every N epochs.
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub params: PathBuf,
    /// Annotation file to evaluate; defaults to data.val, then data.train.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub params: PathBuf,
    /// Binary PGM image.
    #[arg(long)]
    pub image: PathBuf,
    /// Annotation file holding ground truth for the image (drawn in the overlay).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Pixel spacing used when no annotation is given.
    #[arg(long, default_value_t = 0.1)]
    pub pixel_spacing_mm: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecodeBenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub strides: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "6")]
    pub sigmas: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = false)]
    pub dark_modulation: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write decode_bench.svg.
    #[arg(long)]
    pub svg: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BiasReportArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub strides: Vec<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Parameter files, one per ensemble member.
    #[arg(long = "params", required = true, num_args = 1..)]
    pub params: Vec<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}
