//! One test per acceptance criterion. Each prints a single PASS/FAIL line to
//! stderr before asserting; run with `--nocapture` to see them.

mod common;

use std::io::Write;
use std::sync::OnceLock;

use ceph_core::codec::{decode_errors, flip_average, quantization_bias, Decoder, GaussianSpec, HeatmapStack, LandmarkSet};
use ceph_core::config::RunConfig;
use ceph_core::data::{GrayImage, Sample, SynthConfig};
use ceph_core::model::ModelConfig;
use ceph_core::tensor::flip_horizontal;
use ceph_core::train::{evaluate, radial_errors, summarize, train, DecodeOptions, EvalReport, TrainOptions};
use ceph_core::{Model, SeededRng};
use common::gradcases::{self, LAYER_FAMILIES, LAYER_TOL, MODEL_TOL};

fn report(name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    writeln!(std::io::stderr(), "[{tag}] {name}: {detail}").unwrap();
}

#[test]
fn gradient_correctness() {
    let mut worst_layer = (0.0f64, String::new());
    let mut problems = Vec::new();
    for (family, run) in LAYER_FAMILIES {
        let cases = run();
        if family != "gelu" && family != "relu" && cases.len() < 3 {
            problems.push(format!("{family}: only {} shapes", cases.len()));
        }
        for (label, o) in cases {
            if o.worst > worst_layer.0 {
                worst_layer = (o.worst, label.clone());
            }
            if o.checked == 0 || o.worst >= LAYER_TOL || o.dead.iter().any(|(_, fd)| *fd >= common::DEAD_FD) {
                problems.push(format!("{label}: {:.2e} at {}", o.worst, o.worst_at));
            }
        }
    }
    let tiny = gradcases::tiny_model_end_to_end();
    let tiny_worst = tiny.iter().map(|(_, o)| o.worst).fold(0.0, f64::max);
    for (label, o) in &tiny {
        if o.checked == 0 || o.worst >= MODEL_TOL || o.dead.iter().any(|(_, fd)| *fd >= common::DEAD_FD) {
            problems.push(format!("{label}: {:.2e} at {}", o.worst, o.worst_at));
        }
    }
    let pass = problems.is_empty();
    report(
        "gradient correctness",
        pass,
        &format!(
            "max layer rel err {:.2e} ({}) < {LAYER_TOL:e}; tiny model {:.2e} < {MODEL_TOL:e}{}",
            worst_layer.0,
            worst_layer.1,
            tiny_worst,
            if pass { String::new() } else { format!("; failures: {problems:?}") }
        ),
    );
    assert!(pass, "{problems:?}");
}

#[test]
fn quantization_bias_law() {
    let unit = (2f64.sqrt() + 1f64.asinh()) / 6.0;
    let mut lines = Vec::new();
    let mut pass = true;
    for (i, stride) in [1.0, 2.0, 4.0, 8.0].into_iter().enumerate() {
        let stats = quantization_bias(stride, 1_000_000, 0, &mut SeededRng::new(7 + i as u64)).unwrap();
        let expected = unit * stride;
        let rel = (stats.mean - expected).abs() / expected;
        pass &= rel <= 0.01;
        lines.push(format!("s={stride}: {:.4} vs {:.4} ({:.3}%)", stats.mean, expected, 100.0 * rel));
    }
    report("quantization bias law", pass, &lines.join(", "));
    assert!(pass);
}

#[test]
fn decoder_ordering() {
    let spec = GaussianSpec::with_sigma(6.0);
    let mut lines = Vec::new();
    let mut pass = true;
    for stride in [2usize, 4, 8] {
        let mean = |d: Decoder| {
            let e = decode_errors(d, stride, &spec, false, 1000, &mut SeededRng::new(50 + stride as u64)).unwrap();
            e.iter().sum::<f64>() / e.len() as f64
        };
        let (dark, shifted, argmax) = (mean(Decoder::Dark), mean(Decoder::Shifted), mean(Decoder::Argmax));
        pass &= dark < shifted && shifted < argmax && dark < 0.05;
        lines.push(format!("s={stride}: dark {dark:.2e} < shifted {shifted:.3} < argmax {argmax:.3}"));
    }
    report("decoder ordering", pass, &lines.join(", "));
    assert!(pass);
}

/// Validation reports of a seed-fixed toy run.
struct ToyRun {
    dark: EvalReport,
    argmax_stride4: EvalReport,
}

fn toy_run(scales: &[u32]) -> ToyRun {
    let synth = SynthConfig::default();
    assert_eq!((synth.n_train, synth.n_val, synth.size, synth.n_landmarks), (200, 50, 128, 4));
    let (tr, va) = synth.generate().unwrap();
    let mut run = RunConfig::default();
    run.model.head.supervised_scales = scales.to_vec();
    assert_eq!(run.optim.epochs, 30);
    let decode = run.decode_options().unwrap();
    let mut model = Model::new(&run.model, run.seed).unwrap();
    train(&mut model, &tr, Some(&va), &run.train_options(), &decode, |_, _| Ok(())).unwrap();
    let thresholds = [0.2, 2.0, 2.5, 3.0, 4.0];
    let dark = evaluate(&mut model, &va, &decode, &thresholds).unwrap();
    let argmax = DecodeOptions {
        decoder: Decoder::Argmax,
        decode_stride: Some(4.0),
        ..decode
    };
    let argmax_stride4 = evaluate(&mut model, &va, &argmax, &thresholds).unwrap();
    ToyRun { dark, argmax_stride4 }
}

fn default_run() -> &'static ToyRun {
    static RUN: OnceLock<ToyRun> = OnceLock::new();
    RUN.get_or_init(|| toy_run(&ModelConfig::default().head.supervised_scales))
}

#[test]
fn table2_trends() {
    let base = default_run();
    let coarse = toy_run(&[5]);
    let a = base.dark.mre_mm < base.argmax_stride4.mre_mm;
    let b = base.dark.mre_mm <= coarse.dark.mre_mm;
    report(
        "trend (a) dark vs argmax at stride 4",
        a,
        &format!("{:.4} mm < {:.4} mm", base.dark.mre_mm, base.argmax_stride4.mre_mm),
    );
    report(
        "trend (b) scales {2,3} vs {5}",
        b,
        &format!("{:.4} mm <= {:.4} mm", base.dark.mre_mm, coarse.dark.mre_mm),
    );
    assert!(a && b);
}

#[test]
fn toy_convergence() {
    let run = default_run();
    let sdr = run.dark.sdr_at(0.2).unwrap();
    let pass = sdr >= 90.0;
    report("toy convergence", pass, &format!("SDR@0.2mm {sdr:.2}% >= 90% (MRE {:.4} mm)", run.dark.mre_mm));
    assert!(pass);
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

#[test]
fn metric_arithmetic() {
    // errors of 10, 22 and 35 px at 0.1 mm per pixel
    let truth = vec![[20.0, 20.0], [40.0, 30.0], [60.0, 60.0]];
    let pred = LandmarkSet::new(vec![[30.0, 20.0], [40.0, 52.0], [81.0, 88.0]]);
    let sample = Sample {
        id: "hand".into(),
        image: GrayImage::filled(100, 100, 0.0),
        landmarks: LandmarkSet::new(truth),
        pixel_spacing_mm: 0.1,
    };
    let errs = radial_errors(&pred, &sample).unwrap();
    let r = summarize(&errs, 3, &[2.0, 2.5, 3.0, 4.0]).unwrap();
    let want_sdr = [100.0 / 3.0, 200.0 / 3.0, 200.0 / 3.0, 100.0].map(round4);
    let got_sdr: Vec<f64> = r.sdr.iter().copied().map(round4).collect();
    let pass = round4(r.mre_mm) == 2.2333 && got_sdr == want_sdr;
    report("metric arithmetic", pass, &format!("MRE {:.4} mm, SDR {got_sdr:?}", r.mre_mm));
    assert!(pass);
}

#[test]
fn determinism_and_serialization() {
    let mut cfg = ModelConfig::default();
    cfg.backbone.input_size = [64, 64];
    cfg.backbone.stage_channels = [8, 16, 16, 16];
    cfg.backbone.stem_channels = 8;
    cfg.neck_channels = 16;
    cfg.head.lkc_kernel = 5;
    let (tr, va) = SynthConfig {
        n_train: 6,
        n_val: 3,
        size: 64,
        margin: 10.0,
        ..SynthConfig::default()
    }
    .generate()
    .unwrap();
    let opts = TrainOptions {
        epochs: 2,
        ..TrainOptions::default()
    };
    let run = || {
        let mut m = Model::new(&cfg, 3).unwrap();
        let log = train(&mut m, &tr, Some(&va), &opts, &DecodeOptions::default(), |_, _| Ok(())).unwrap();
        (m, log)
    };
    let (ma, la) = run();
    let (_, lb) = run();
    let logs_equal = la.same_trajectory(&lb);

    let mut bytes = Vec::new();
    ma.write_params(&mut bytes).unwrap();
    let mut loaded = Model::new(&cfg, 99).unwrap();
    loaded.read_params(bytes.as_slice()).unwrap();
    let bitwise = ma
        .named_params()
        .iter()
        .zip(loaded.named_params().iter())
        .all(|((pa, a), (pb, b))| {
            pa == pb && a.value.data().iter().zip(b.value.data()).all(|(x, y)| x.to_bits() == y.to_bits())
        });

    let maps = common::randn([1, 4, 17, 23], &mut SeededRng::new(4)).map(f64::abs);
    let h = HeatmapStack::for_input(maps.clone(), 89, 65).unwrap();
    let f = HeatmapStack::for_input(flip_horizontal(&maps), 89, 65).unwrap();
    let flip_exact = flip_average(&h, &f, None).unwrap() == h;

    let pass = logs_equal && bitwise && flip_exact;
    report(
        "determinism and serialization",
        pass,
        &format!("identical logs {logs_equal}, bitwise params {bitwise}, flip_average exact {flip_exact}"),
    );
    assert!(pass);
}

