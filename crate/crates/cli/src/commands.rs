use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use ceph_core::codec::{decode_bench, quantization_bias, Decoder, UNIT_CELL_MEAN_DISTANCE};
use ceph_core::config::RunConfig;
use ceph_core::data::synth::{write_dataset, SynthConfig};
use ceph_core::data::{AnnotationFile, Dataset, GrayImage, Sample};
use ceph_core::train::{evaluate, evaluate_ensemble, predict, train, EvalReport};
use ceph_core::{Model, SeededRng};
use log::info;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::args::*;
use crate::svg;

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Infer(a) => infer_cmd(a),
        Command::DecodeBench(a) => decode_bench_cmd(a),
        Command::BiasReport(a) => bias_report_cmd(a),
        Command::EnsembleEval(a) => ensemble_cmd(a),
    }
}

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: PathBuf, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn echo_toml(dir: &Path, value: &impl Serialize) -> Result<()> {
    write(dir.join("config.toml"), toml::to_string_pretty(value)?)
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_train: a.n_train,
        n_val: a.n_val,
        n_landmarks: a.landmarks,
        size: a.size,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let (train_set, val_set) = cfg.generate()?;
    out_dir(&a.out)?;
    write_dataset(&a.out, &train_set, &val_set)?;
    echo_toml(&a.out, &cfg)?;
    info!("wrote {} train / {} val images to {}", train_set.len(), val_set.len(), a.out.display());
    Ok(())
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Ok(Dataset::load(path)?)
}

fn require<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a PathBuf> {
    p.as_ref().ok_or_else(|| anyhow!(ceph_core::Error::Config(format!("{key} is not set (config file or flag)"))))
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let cfg = a.run.resolve()?;
    let train_set = load_dataset(require(&cfg.data.train, "data.train")?)?;
    let val_set = cfg.data.val.as_ref().map(|p| load_dataset(p)).transpose()?;
    out_dir(&a.out)?;
    cfg.echo_into(&a.out)?;
    let mut model = Model::new(&cfg.model, cfg.seed)?;
    info!("model has {} trainable parameters", model.param_count());
    let decode = cfg.decode_options()?;
    let every = a.checkpoint_every.unwrap_or(0);
    let log = train(&mut model, &train_set, val_set.as_ref(), &cfg.train_options(), &decode, |m, rec| {
        if every > 0 && rec.epoch % every == 0 {
            m.save_params(a.out.join(format!("params_epoch{:03}.srkp", rec.epoch)))?;
        }
        Ok(())
    })?;
    model.save_params(a.out.join("params.srkp"))?;
    let mut csv = Vec::new();
    log.write_csv(&mut csv)?;
    write(a.out.join("train_log.csv"), csv)?;
    Ok(())
}

#[derive(Serialize)]
struct ReportMeta<'a> {
    command: &'a str,
    dataset: String,
    samples: usize,
    decoder: Decoder,
    dark_modulation: bool,
    flip_test: bool,
    models: usize,
    param_files: Vec<String>,
    param_sha256: Vec<String>,
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    meta: ReportMeta<'a>,
    report: &'a EvalReport,
}

fn report_csv(report: &EvalReport) -> Result<Vec<u8>> {
    // One SDR column per threshold, so rows are written as records.
    let mut w = csv_writer();
    let mut header = vec!["scope".to_string(), "landmark".into(), "count".into(), "mre_mm".into(), "mre_px".into()];
    header.extend(report.thresholds_mm.iter().map(|t| format!("sdr_{t}mm")));
    w.write_record(&header)?;
    let mut row = |scope: &str, lm: String, count: usize, mre_mm: f64, mre_px: f64, sdr: &[f64]| -> Result<()> {
        let mut r = vec![scope.to_string(), lm, count.to_string(), format!("{mre_mm:.6}"), format!("{mre_px:.6}")];
        r.extend(sdr.iter().map(|v| format!("{v:.4}")));
        w.write_record(&r)?;
        Ok(())
    };
    row("all", String::new(), report.count, report.mre_mm, report.mre_px, &report.sdr)?;
    for l in &report.per_landmark {
        row("landmark", l.landmark.to_string(), l.count, l.mre_mm, l.mre_px, &l.sdr)?;
    }
    Ok(w.into_inner().map_err(|e| anyhow!("{e}"))?)
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

fn write_report(dir: &Path, report: &EvalReport, meta: ReportMeta) -> Result<()> {
    out_dir(dir)?;
    write(dir.join("report.csv"), report_csv(report)?)?;
    let doc = ReportDoc { meta, report };
    write(dir.join("report.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
    info!(
        "MRE {:.4} mm ({:.3} px) over {} landmarks; SDR {:?}",
        report.mre_mm, report.mre_px, report.count, report.sdr
    );
    Ok(())
}

fn eval_target(cfg: &RunConfig, data: &Option<PathBuf>) -> Result<PathBuf> {
    data.clone()
        .or_else(|| cfg.data.val.clone())
        .or_else(|| cfg.data.train.clone())
        .ok_or_else(|| anyhow!(ceph_core::Error::Config("no dataset given (--data, data.val or data.train)".into())))
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let cfg = a.run.resolve()?;
    let path = eval_target(&cfg, &a.data)?;
    let ds = load_dataset(&path)?;
    let mut model = Model::from_file(&cfg.model, &a.params)?;
    let decode = cfg.decode_options()?;
    let report = evaluate(&mut model, &ds, &decode, &cfg.eval.thresholds_mm)?;
    out_dir(&a.out)?;
    cfg.echo_into(&a.out)?;
    let meta = ReportMeta {
        command: "eval",
        dataset: path.display().to_string(),
        samples: ds.len(),
        decoder: cfg.codec.decoder,
        dark_modulation: cfg.codec.dark_modulation,
        flip_test: cfg.codec.flip_test,
        models: 1,
        param_files: vec![a.params.display().to_string()],
        param_sha256: vec![file_digest(&a.params)?],
    };
    write_report(&a.out, &report, meta)
}

fn ensemble_cmd(a: EnsembleArgs) -> Result<()> {
    let cfg = a.run.resolve()?;
    let path = eval_target(&cfg, &a.data)?;
    let ds = load_dataset(&path)?;
    let mut models = a
        .params
        .iter()
        .map(|p| Model::from_file(&cfg.model, p).map_err(anyhow::Error::from))
        .collect::<Result<Vec<_>>>()?;
    let decode = cfg.decode_options()?;
    let report = evaluate_ensemble(&mut models, &ds, &decode, &cfg.eval.thresholds_mm)?;
    out_dir(&a.out)?;
    cfg.echo_into(&a.out)?;
    let meta = ReportMeta {
        command: "ensemble-eval",
        dataset: path.display().to_string(),
        samples: ds.len(),
        decoder: cfg.codec.decoder,
        dark_modulation: cfg.codec.dark_modulation,
        flip_test: cfg.codec.flip_test,
        models: a.params.len(),
        param_files: a.params.iter().map(|p| p.display().to_string()).collect(),
        param_sha256: a.params.iter().map(|p| file_digest(p)).collect::<Result<_>>()?,
    };
    write_report(&a.out, &report, meta)
}

#[derive(Serialize)]
struct InferOutput {
    image: String,
    width: usize,
    height: usize,
    pixel_spacing_mm: f64,
    decoder: Decoder,
    flip_test: bool,
    landmarks: Vec<[f64; 2]>,
    decoded: Vec<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    errors_px: Option<Vec<Option<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    errors_mm: Option<Vec<Option<f64>>>,
}

/// Finds the annotation record whose image resolves to `image`.
fn find_truth(annotation: &Path, image: &Path) -> Result<Sample> {
    let doc = AnnotationFile::read(annotation)?;
    let root = annotation.parent().unwrap_or(Path::new("."));
    let target = fs::canonicalize(image).with_context(|| format!("resolving {}", image.display()))?;
    for rec in &doc.samples {
        if fs::canonicalize(root.join(&rec.image_path)).ok().as_deref() == Some(target.as_path()) {
            return Ok(Sample {
                id: rec.image_path.clone(),
                image: GrayImage::load_pgm(&target)?,
                landmarks: ceph_core::codec::LandmarkSet::with_visibility(rec.landmarks.clone(), rec.visible.clone())?,
                pixel_spacing_mm: rec.pixel_spacing_mm,
            });
        }
    }
    Err(anyhow!(ceph_core::Error::Data(format!(
        "{} does not list {}",
        annotation.display(),
        image.display()
    ))))
}

fn infer_cmd(a: InferArgs) -> Result<()> {
    let cfg = a.run.resolve()?;
    let mut model = Model::from_file(&cfg.model, &a.params)?;
    let decode = cfg.decode_options()?;
    let (sample, has_truth) = match &a.truth {
        Some(ann) => (find_truth(ann, &a.image)?, true),
        None => {
            let image = GrayImage::load_pgm(&a.image)?;
            let n = cfg.model.head.num_keypoints;
            let sample = Sample {
                id: a.image.display().to_string(),
                image,
                landmarks: ceph_core::codec::LandmarkSet::new(vec![[0.0, 0.0]; n]),
                pixel_spacing_mm: a.pixel_spacing_mm,
            };
            (sample, false)
        }
    };
    let pred = predict(&mut model, &sample, &decode)?;
    let errors = has_truth.then(|| {
        pred.landmarks
            .points
            .iter()
            .zip(&sample.landmarks.points)
            .zip(&sample.landmarks.visible)
            .map(|((p, g), &v)| v.then(|| (p[0] - g[0]).hypot(p[1] - g[1])))
            .collect::<Vec<_>>()
    });
    let out = InferOutput {
        image: a.image.display().to_string(),
        width: sample.image.width,
        height: sample.image.height,
        pixel_spacing_mm: sample.pixel_spacing_mm,
        decoder: cfg.codec.decoder,
        flip_test: cfg.codec.flip_test,
        landmarks: pred.landmarks.points.clone(),
        decoded: pred.landmarks.visible.clone(),
        errors_mm: errors
            .as_ref()
            .map(|e| e.iter().map(|v| v.map(|px| px * sample.pixel_spacing_mm)).collect()),
        errors_px: errors,
    };
    out_dir(&a.out)?;
    cfg.echo_into(&a.out)?;
    write(a.out.join("landmarks.json"), serde_json::to_string_pretty(&out)? + "\n")?;
    let truth = has_truth.then_some(&sample.landmarks);
    write(a.out.join("overlay.svg"), svg::overlay(&sample.image, &pred.landmarks, truth)?)?;
    Ok(())
}

#[derive(Serialize)]
struct BenchEcho<'a> {
    strides: &'a [usize],
    sigmas: &'a [f64],
    samples: usize,
    dark_modulation: bool,
    seed: u64,
}

#[derive(Serialize)]
struct BenchRow {
    decoder: &'static str,
    stride: usize,
    sigma: f64,
    samples: usize,
    mean_px: f64,
    max_px: f64,
}

fn decode_bench_cmd(a: DecodeBenchArgs) -> Result<()> {
    let cells = decode_bench(&Decoder::ALL, &a.strides, &a.sigmas, a.dark_modulation, a.samples, a.seed)?;
    out_dir(&a.out)?;
    echo_toml(
        &a.out,
        &BenchEcho {
            strides: &a.strides,
            sigmas: &a.sigmas,
            samples: a.samples,
            dark_modulation: a.dark_modulation,
            seed: a.seed,
        },
    )?;
    let mut w = csv_writer();
    for c in &cells {
        w.serialize(BenchRow {
            decoder: c.decoder.name(),
            stride: c.stride,
            sigma: c.sigma,
            samples: c.samples,
            mean_px: c.mean_px,
            max_px: c.max_px,
        })?;
    }
    write(a.out.join("decode_bench.csv"), w.into_inner().map_err(|e| anyhow!("{e}"))?)?;
    if a.svg {
        for &sigma in &a.sigmas {
            let chart = svg::BarChart {
                title: &format!("Mean radial decode error, sigma = {sigma}"),
                y_label: "mean error (input px)",
                categories: a.strides.iter().map(|s| format!("stride {s}")).collect(),
                series: Decoder::ALL
                    .iter()
                    .map(|&d| {
                        let v = a
                            .strides
                            .iter()
                            .map(|&s| {
                                cells
                                    .iter()
                                    .find(|c| c.decoder == d && c.stride == s && c.sigma == sigma)
                                    .map_or(0.0, |c| c.mean_px)
                            })
                            .collect();
                        (d.name().to_string(), v)
                    })
                    .collect(),
            };
            let name = if a.sigmas.len() == 1 { "decode_bench.svg".to_string() } else { format!("decode_bench_sigma{sigma}.svg") };
            write(a.out.join(name), chart.render())?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct BiasEcho<'a> {
    strides: &'a [f64],
    samples: usize,
    bins: usize,
    seed: u64,
}

#[derive(Serialize)]
struct BiasRow {
    stride: f64,
    samples: usize,
    mean_px: f64,
    max_px: f64,
    expected_px: f64,
    mean_over_stride: f64,
}

fn bias_report_cmd(a: BiasReportArgs) -> Result<()> {
    let root = SeededRng::new(a.seed);
    let mut w = csv_writer();
    let mut means = Vec::new();
    for (i, &s) in a.strides.iter().enumerate() {
        let stats = quantization_bias(s, a.samples, a.bins, &mut root.fork(i as u64))?;
        w.serialize(BiasRow {
            stride: s,
            samples: stats.samples,
            mean_px: stats.mean,
            max_px: stats.max,
            expected_px: UNIT_CELL_MEAN_DISTANCE * s,
            mean_over_stride: stats.mean / s,
        })?;
        means.push(stats.mean);
    }
    out_dir(&a.out)?;
    echo_toml(
        &a.out,
        &BiasEcho {
            strides: &a.strides,
            samples: a.samples,
            bins: a.bins,
            seed: a.seed,
        },
    )?;
    write(a.out.join("bias.csv"), w.into_inner().map_err(|e| anyhow!("{e}"))?)?;
    let chart = svg::BarChart {
        title: "Nearest-grid quantization error",
        y_label: "mean error (input px)",
        categories: a.strides.iter().map(|s| format!("stride {s}")).collect(),
        series: vec![
            ("measured".into(), means),
            (
                "closed form".into(),
                a.strides.iter().map(|s| s * UNIT_CELL_MEAN_DISTANCE).collect(),
            ),
        ],
    };
    write(a.out.join("bias.svg"), chart.render())?;
    Ok(())
}
