//! Training loop, inference with flip test, evaluation and heatmap-level
//! ensembling.

use std::collections::BTreeMap;
use std::time::Instant;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::codec::{
    decode, encode_gaussian, ensemble_average, flip_average, unbiased_stride, AffineMap, Decoder, GaussianSpec,
    HeatmapStack, KeypointNote, LandmarkSet,
};
use crate::data::{Dataset, GrayImage, Sample};
use crate::error::{invalid, Error, Result};
use crate::layers::{HasParams, Phase};
use crate::model::{LandmarkNet, ModelConfig};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::Tensor4;
use crate::train::{
    loss_multiscale, prepare, radial_errors, summarize, AdamConfig, AdamState, AugmentConfig, EvalReport,
    LossConfig, RadialError,
};

const EVAL_CHUNK: usize = 8;

/// How heatmaps are turned into coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeOptions {
    pub decoder: Decoder,
    pub gaussian: GaussianSpec,
    pub modulated: bool,
    pub flip_test: bool,
    /// Keypoint permutation under a horizontal mirror; identity when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub swap: Option<Vec<usize>>,
    /// Resample the output heatmaps to this stride (input pixels per
    /// heatmap pixel) before decoding.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decode_stride: Option<f64>,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self {
            decoder: Decoder::Dark,
            gaussian: GaussianSpec::default(),
            modulated: true,
            flip_test: true,
            swap: None,
            decode_stride: None,
        }
    }
}

/// Builds a mirror permutation from unordered landmark pairs.
pub fn swap_from_pairs(num_keypoints: usize, pairs: &[[usize; 2]]) -> Result<Option<Vec<usize>>> {
    if pairs.is_empty() {
        return Ok(None);
    }
    let mut perm: Vec<usize> = (0..num_keypoints).collect();
    let mut used = vec![false; num_keypoints];
    for &[a, b] in pairs {
        if a >= num_keypoints || b >= num_keypoints || a == b || used[a] || used[b] {
            return Err(invalid!("flip pair [{a}, {b}] is out of range or overlaps another pair"));
        }
        used[a] = true;
        used[b] = true;
        perm.swap(a, b);
    }
    Ok(Some(perm))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub augment: AugmentConfig,
    pub loss: LossConfig,
    pub gaussian: GaussianSpec,
    pub seed: u64,
    pub thresholds_mm: Vec<f64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 2,
            adam: AdamConfig::default(),
            augment: AugmentConfig::default(),
            loss: LossConfig::default(),
            gaussian: GaussianSpec::default(),
            seed: 0,
            thresholds_mm: crate::train::DEFAULT_THRESHOLDS_MM.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_mre_mm: Option<f64>,
    pub val_sdr2: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    /// Equality ignoring wall-clock time.
    pub fn same_trajectory(&self, other: &TrainLog) -> bool {
        self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.mean_loss.to_bits() == b.mean_loss.to_bits()
                    && a.val_mre_mm.map(f64::to_bits) == b.val_mre_mm.map(f64::to_bits)
                    && a.val_sdr2.map(f64::to_bits) == b.val_sdr2.map(f64::to_bits)
            })
    }

    pub fn write_csv(&self, out: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.epochs {
            w.serialize(r).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Format {
            what: "training log",
            msg: e.to_string(),
        })
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Format {
        what: "CSV output",
        msg: e.to_string(),
    }
}

/// The supervised scale whose heatmaps have the most pixels (lowest scale
/// on ties); predictions are decoded from it.
pub fn output_scale(cfg: &ModelConfig) -> u32 {
    let mut best = None;
    for s in cfg.scales() {
        let (h, w) = cfg.heatmap_size(s);
        match best {
            Some((_, area)) if area >= h * w => {}
            _ => best = Some((s, h * w)),
        }
    }
    best.expect("at least one supervised scale").0
}

/// Targets for one prepared batch: `(n, N, h_i, w_i)` per supervised scale.
pub fn encode_targets<T: Scalar>(
    cfg: &ModelConfig,
    landmarks: &[LandmarkSet],
    spec: &GaussianSpec,
) -> Result<BTreeMap<u32, Tensor4<T>>> {
    let [ih, iw] = cfg.backbone.input_size;
    let mut out = BTreeMap::new();
    for s in cfg.scales() {
        let (h, w) = cfg.heatmap_size(s);
        let stride = [unbiased_stride(iw, w), unbiased_stride(ih, h)];
        let items = landmarks
            .iter()
            .map(|l| encode_gaussian::<T>(l, spec, h, w, stride).map(|e| e.heatmaps.maps))
            .collect::<Result<Vec<_>>>()?;
        out.insert(s, Tensor4::stack_batch(&items)?);
    }
    Ok(out)
}

fn image_batch<T: Scalar>(images: &[GrayImage]) -> Result<Tensor4<T>> {
    let items: Vec<Tensor4<T>> = images.iter().map(|im| im.to_tensor()).collect();
    Tensor4::stack_batch(&items)
}

fn check_dataset(cfg: &ModelConfig, ds: &Dataset) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::Data("dataset is empty".into()));
    }
    if ds.num_landmarks != cfg.head.num_keypoints {
        return Err(Error::Data(format!(
            "dataset has {} landmarks, model predicts {}",
            ds.num_landmarks, cfg.head.num_keypoints
        )));
    }
    if let Some(s) = ds.samples.iter().find(|s| s.landmarks.len() != ds.num_landmarks) {
        return Err(Error::Data(format!("{} has {} landmarks, expected {}", s.id, s.landmarks.len(), ds.num_landmarks)));
    }
    Ok(())
}

/// Runs one optimization epoch per entry of the returned log. `on_epoch`
/// is called after each epoch (e.g. for checkpoints).
pub fn train<T: Scalar>(
    model: &mut LandmarkNet<T>,
    train_set: &Dataset,
    val_set: Option<&Dataset>,
    opts: &TrainOptions,
    decode_opts: &DecodeOptions,
    mut on_epoch: impl FnMut(&LandmarkNet<T>, &EpochRecord) -> Result<()>,
) -> Result<TrainLog> {
    let cfg = model.config().clone();
    check_dataset(&cfg, train_set)?;
    if let Some(v) = val_set {
        check_dataset(&cfg, v)?;
    }
    if opts.batch_size == 0 {
        return Err(invalid!("batch size must be positive"));
    }
    opts.loss.validate(cfg.head.num_keypoints)?;
    opts.augment.validate()?;
    opts.gaussian.validate()?;
    let [ih, iw] = cfg.backbone.input_size;
    let mut adam = AdamState::new(opts.adam)?;
    let root = SeededRng::new(opts.seed);
    let start = Instant::now();
    let mut log = TrainLog::default();
    for epoch in 1..=opts.epochs {
        let mut rng = root.fork(epoch as u64);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(opts.batch_size) {
            let mut images = Vec::with_capacity(chunk.len());
            let mut marks = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let p = prepare(
                    &train_set.samples[i],
                    iw,
                    ih,
                    Some((&opts.augment, &mut rng)),
                    decode_opts.swap.as_deref(),
                )?;
                images.push(p.image);
                marks.push(p.landmarks);
            }
            let x = image_batch::<T>(&images)?;
            let targets = encode_targets::<T>(&cfg, &marks, &opts.gaussian)?;
            let pred = model.forward(&x, Phase::Train)?;
            let loss = loss_multiscale(&pred, &targets, &opts.loss)?;
            model.zero_grads();
            model.backward(&loss.grads)?;
            adam.step(&mut model.named_params_mut())?;
            total += loss.value * chunk.len() as f64;
        }
        let mean_loss = total / train_set.len() as f64;
        let (val_mre_mm, val_sdr2) = match val_set {
            Some(v) => {
                let report = evaluate(model, v, decode_opts, &opts.thresholds_mm)?;
                let sdr2 = summarize_sdr2(&report);
                (Some(report.mre_mm), sdr2)
            }
            None => (None, None),
        };
        let record = EpochRecord {
            epoch,
            mean_loss,
            val_mre_mm,
            val_sdr2,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        info!(
            "epoch {epoch}/{}: loss {:.6e}{}",
            opts.epochs,
            mean_loss,
            val_mre_mm.map(|m| format!(", val MRE {m:.4} mm")).unwrap_or_default()
        );
        on_epoch(model, &record)?;
        log.epochs.push(record);
    }
    Ok(log)
}

fn summarize_sdr2(report: &EvalReport) -> Option<f64> {
    report.sdr_at(2.0)
}

/// Heatmaps of the output scale in the input frame, flip-averaged when
/// requested, for each sample. Also returns the original-to-input map.
pub fn predict_heatmaps<T: Scalar>(
    model: &mut LandmarkNet<T>,
    samples: &[&Sample],
    opts: &DecodeOptions,
) -> Result<Vec<(HeatmapStack<T>, AffineMap)>> {
    let cfg = model.config().clone();
    let [ih, iw] = cfg.backbone.input_size;
    let scale = output_scale(&cfg);
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_CHUNK) {
        let mut images = Vec::with_capacity(2 * chunk.len());
        let mut maps = Vec::with_capacity(chunk.len());
        for s in chunk {
            let p = prepare(s, iw, ih, None, None)?;
            images.push(p.image);
            maps.push(p.map);
        }
        if opts.flip_test {
            let flipped: Vec<GrayImage> = images.iter().map(GrayImage::flip_horizontal).collect();
            images.extend(flipped);
        }
        let x = image_batch::<T>(&images)?;
        let hm = model.forward(&x, Phase::Eval)?.remove(&scale).expect("output scale");
        for (i, map) in maps.into_iter().enumerate() {
            let direct = HeatmapStack::for_input(hm.batch_item(i), iw, ih)?;
            let stack = if opts.flip_test {
                let mirrored = HeatmapStack::for_input(hm.batch_item(chunk.len() + i), iw, ih)?;
                flip_average(&direct, &mirrored, opts.swap.as_deref())?
            } else {
                direct
            };
            out.push((stack, map));
        }
    }
    Ok(out)
}

/// Bilinear (align-corners) resampling of heatmaps to a coarser or finer
/// stride over a `input_w x input_h` frame.
pub fn resample_to_stride<T: Scalar>(
    hm: &HeatmapStack<T>,
    stride: f64,
    input_w: usize,
    input_h: usize,
) -> Result<HeatmapStack<T>> {
    if !(stride > 0.0) {
        return Err(invalid!("stride must be positive"));
    }
    let ow = ((input_w - 1) as f64 / stride).round() as usize + 1;
    let oh = ((input_h - 1) as f64 / stride).round() as usize + 1;
    let (h, w) = hm.size();
    let n = hm.num_keypoints();
    let out_stride = [unbiased_stride(input_w, ow), unbiased_stride(input_h, oh)];
    let mut maps = Tensor4::zeros([1, n, oh, ow]);
    for j in 0..n {
        let src = GrayImage {
            width: w,
            height: h,
            pixels: hm.map(j).iter().map(|v| v.f64()).collect(),
        };
        for y in 0..oh {
            for x in 0..ow {
                let [sx, sy] = hm.to_heatmap(x as f64 * out_stride[0], y as f64 * out_stride[1]);
                maps.set(0, j, y, x, T::of(src.sample(sx, sy)));
            }
        }
    }
    HeatmapStack::new(maps, out_stride)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Original-image coordinates.
    pub landmarks: LandmarkSet,
    pub notes: Vec<KeypointNote>,
}

/// Decodes input-frame heatmaps and maps the result back to the original
/// image frame.
pub fn decode_heatmaps<T: Scalar>(
    hm: &HeatmapStack<T>,
    to_input: &AffineMap,
    input_w: usize,
    input_h: usize,
    opts: &DecodeOptions,
) -> Result<Prediction> {
    let resampled;
    let hm = match opts.decode_stride {
        Some(s) => {
            resampled = resample_to_stride(hm, s, input_w, input_h)?;
            &resampled
        }
        None => hm,
    };
    let d = decode(hm, opts.decoder, &opts.gaussian, opts.modulated);
    let back = to_input.inverse()?;
    Ok(Prediction {
        landmarks: crate::codec::affine_apply(&back, &d.landmarks),
        notes: d.notes,
    })
}

pub fn predict<T: Scalar>(model: &mut LandmarkNet<T>, sample: &Sample, opts: &DecodeOptions) -> Result<Prediction> {
    let [ih, iw] = model.config().backbone.input_size;
    let (hm, map) = predict_heatmaps(model, &[sample], opts)?.remove(0);
    decode_heatmaps(&hm, &map, iw, ih, opts)
}

fn report_from_predictions(
    ds: &Dataset,
    preds: impl Iterator<Item = Result<Prediction>>,
    thresholds_mm: &[f64],
) -> Result<EvalReport> {
    let mut errors: Vec<RadialError> = Vec::new();
    for (sample, pred) in ds.samples.iter().zip(preds) {
        errors.extend(radial_errors(&pred?.landmarks, sample)?);
    }
    summarize(&errors, ds.num_landmarks, thresholds_mm)
}

pub fn evaluate<T: Scalar>(
    model: &mut LandmarkNet<T>,
    ds: &Dataset,
    opts: &DecodeOptions,
    thresholds_mm: &[f64],
) -> Result<EvalReport> {
    check_dataset(model.config(), ds)?;
    let [ih, iw] = model.config().backbone.input_size;
    let refs: Vec<&Sample> = ds.samples.iter().collect();
    let hms = predict_heatmaps(model, &refs, opts)?;
    debug!("evaluated {} samples", hms.len());
    report_from_predictions(ds, hms.iter().map(|(hm, map)| decode_heatmaps(hm, map, iw, ih, opts)), thresholds_mm)
}

/// Averages the output heatmaps of several models before a single decode.
pub fn evaluate_ensemble<T: Scalar>(
    models: &mut [LandmarkNet<T>],
    ds: &Dataset,
    opts: &DecodeOptions,
    thresholds_mm: &[f64],
) -> Result<EvalReport> {
    let first = models.first().ok_or_else(|| invalid!("ensemble of zero models"))?;
    let cfg = first.config().clone();
    if models.iter().any(|m| m.config().backbone.input_size != cfg.backbone.input_size
        || m.config().heatmap_size(output_scale(m.config())) != cfg.heatmap_size(output_scale(&cfg)))
    {
        return Err(invalid!("ensemble members must share input and output heatmap sizes"));
    }
    for m in models.iter() {
        check_dataset(m.config(), ds)?;
    }
    let [ih, iw] = cfg.backbone.input_size;
    let refs: Vec<&Sample> = ds.samples.iter().collect();
    let per_model = models
        .iter_mut()
        .map(|m| predict_heatmaps(m, &refs, opts))
        .collect::<Result<Vec<_>>>()?;
    let preds = (0..ds.len()).map(|i| {
        let sets: Vec<HeatmapStack<T>> = per_model.iter().map(|p| p[i].0.clone()).collect();
        let avg = ensemble_average(&sets)?;
        decode_heatmaps(&avg, &per_model[0][i].1, iw, ih, opts)
    });
    report_from_predictions(ds, preds, thresholds_mm)
}
