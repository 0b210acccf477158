use std::collections::BTreeMap;

use ceph_core::layers::{
    gelu, gelu_backward, pixel_shuffle, pixel_unshuffle, relu, relu_backward, upsample_bilinear2x,
    upsample_bilinear2x_backward, BatchNorm2d, Conv2d, HasParams, Phase,
};
use ceph_core::model::{Fuse, SrHead};
use ceph_core::train::{loss_multiscale, LossConfig, LossMode};
use ceph_core::{Model, SeededRng, Tensor};

use super::{check_module, randn, tiny_config, NoParams, Outcome};

pub const LAYER_TOL: f64 = 1e-4;
pub const MODEL_TOL: f64 = 1e-3;

/// Labelled outcomes of one family of checks.
pub type Cases = Vec<(String, Outcome)>;

pub const LAYER_FAMILIES: [(&str, fn() -> Cases); 8] = [
    ("conv", conv_variants),
    ("batchnorm", batchnorm_train_mode),
    ("gelu", gelu_pointwise),
    ("relu", relu_away_from_kink),
    ("shuffle+upsample", pixel_shuffle_and_upsample),
    ("loss", loss_modes),
    ("fuse", fuse_inputs_and_params),
    ("head", head_inputs_and_params),
];

fn randomize_bias(conv: &mut Conv2d<f64>, rng: &mut SeededRng) {
    conv.p.bias.value = randn(conv.p.bias.value.shape(), rng).scale(0.1);
}

fn check_conv(out: &mut Cases, label: &str, conv: &Conv2d<f64>, x: &Tensor, seed: u64) {
    let o = check_module(
        conv,
        std::slice::from_ref(x),
        |m, ins| vec![m.forward(&ins[0], Phase::Train).unwrap()],
        |m, _, rs| vec![m.backward(&rs[0]).unwrap()],
        64,
        seed,
    );
    out.push((label.to_string(), o));
}

pub fn conv_variants() -> Cases {
    let mut out = Cases::new();
    let mut rng = SeededRng::new(1);
    // (batch, channels, height, width)
    let shapes = [(1, 4, 5, 5), (2, 4, 8, 6), (3, 8, 7, 9)];
    for (si, &(n, c, h, w)) in shapes.iter().enumerate() {
        let x = randn([n, c, h, w], &mut rng);
        let variants: Vec<(&str, Conv2d<f64>)> = vec![
            ("pointwise", Conv2d::kaiming(c, 6, 1, 1, 0, 1, &mut rng).unwrap()),
            ("3x3 stride 2", Conv2d::kaiming(c, 5, 3, 2, 1, 1, &mut rng).unwrap()),
            ("grouped", Conv2d::kaiming(c, 6, 3, 1, 1, 2, &mut rng).unwrap()),
            ("depthwise", Conv2d::kaiming(c, c, 3, 1, 1, c, &mut rng).unwrap()),
            ("large kernel", Conv2d::kaiming(c, c * 4, 5, 1, 2, c, &mut rng).unwrap()),
        ];
        for (vi, (name, mut conv)) in variants.into_iter().enumerate() {
            randomize_bias(&mut conv, &mut rng);
            check_conv(&mut out, &format!("{name} {:?}", shapes[si]), &conv, &x, (si * 10 + vi) as u64);
        }
    }
    out
}

pub fn batchnorm_train_mode() -> Cases {
    let mut out = Cases::new();
    let mut rng = SeededRng::new(2);
    for (i, shape) in [[2, 3, 4, 4], [4, 2, 3, 5], [1, 5, 6, 6]].into_iter().enumerate() {
        let mut bn = BatchNorm2d::<f64>::new(shape[1]);
        bn.p.gamma.value = randn([shape[1], 1, 1, 1], &mut rng).map(|v| 1.0 + 0.3 * v);
        bn.p.beta.value = randn([shape[1], 1, 1, 1], &mut rng).scale(0.3);
        let x = randn(shape, &mut rng).map(|v| 2.0 * v + 0.5);
        let o = check_module(
            &bn,
            &[x],
            |m, ins| vec![m.forward(&ins[0], Phase::Train).unwrap()],
            |m, _, rs| vec![m.backward(&rs[0]).unwrap()],
            200,
            i as u64,
        );
        out.push((format!("batchnorm {shape:?}"), o));
    }
    out
}

fn check_pointwise(out: &mut Cases, label: &str, x: Tensor, f: fn(&Tensor) -> Tensor, df: fn(&Tensor, &Tensor) -> ceph_core::Result<Tensor>) {
    let o = check_module(
        &NoParams,
        &[x],
        |_, ins| vec![f(&ins[0])],
        |_, ins, rs| vec![df(&ins[0], &rs[0]).unwrap()],
        usize::MAX,
        0,
    );
    out.push((label.to_string(), o));
}

pub fn gelu_pointwise() -> Cases {
    let mut out = Cases::new();
    let xs: Vec<f64> = (0..100).map(|i| -5.0 + 10.0 * i as f64 / 99.0).collect();
    check_pointwise(&mut out, "gelu", Tensor::from_vec([1, 1, 10, 10], xs).unwrap(), gelu, gelu_backward);
    out
}

pub fn relu_away_from_kink() -> Cases {
    let mut out = Cases::new();
    let mut rng = SeededRng::new(3);
    let xs: Vec<f64> = (0..100)
        .map(|_| {
            let v = rng.uniform_in(0.01, 3.0);
            if rng.bernoulli(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    check_pointwise(&mut out, "relu", Tensor::from_vec([2, 2, 5, 5], xs).unwrap(), relu, relu_backward);
    out
}

pub fn pixel_shuffle_and_upsample() -> Cases {
    let mut out = Cases::new();
    let mut rng = SeededRng::new(4);
    for (i, (shape, s)) in [([1, 4, 3, 3], 2), ([2, 9, 2, 4], 3), ([1, 32, 2, 2], 4)].into_iter().enumerate() {
        let x = randn(shape, &mut rng);
        let o = check_module(
            &NoParams,
            &[x],
            move |_, ins| vec![pixel_shuffle(&ins[0], s).unwrap()],
            move |_, _, rs| vec![pixel_unshuffle(&rs[0], s).unwrap()],
            usize::MAX,
            i as u64,
        );
        out.push((format!("pixel shuffle {shape:?} s={s}"), o));
    }
    for (i, shape) in [[1, 1, 2, 2], [2, 3, 3, 5], [1, 2, 6, 4]].into_iter().enumerate() {
        let x = randn(shape, &mut rng);
        let o = check_module(
            &NoParams,
            &[x],
            |_, ins| vec![upsample_bilinear2x(&ins[0]).unwrap()],
            |_, ins, rs| vec![upsample_bilinear2x_backward(&rs[0], ins[0].shape()).unwrap()],
            usize::MAX,
            i as u64,
        );
        out.push((format!("upsample {shape:?}"), o));
    }
    out
}

pub fn loss_modes() -> Cases {
    let mut out = Cases::new();
    let mut rng = SeededRng::new(5);
    let setups: [(usize, usize, &[(u32, usize)]); 3] = [(1, 3, &[(2, 4)]), (2, 4, &[(2, 6), (3, 3)]), (3, 2, &[(2, 5), (4, 2), (5, 1)])];
    let configs = [
        ("mse", LossConfig { mode: LossMode::Mse, ohkm_topk: None }),
        ("l2norm", LossConfig { mode: LossMode::L2norm, ohkm_topk: None }),
        ("mse+ohkm", LossConfig { mode: LossMode::Mse, ohkm_topk: Some(1) }),
        ("l2norm+ohkm", LossConfig { mode: LossMode::L2norm, ohkm_topk: Some(2) }),
    ];
    for (si, (n, k, scales)) in setups.into_iter().enumerate() {
        let gt: BTreeMap<u32, Tensor> =
            scales.iter().map(|&(s, side)| (s, randn([n, k, side, side], &mut rng).map(f64::abs))).collect();
        let preds: Vec<Tensor> = scales.iter().map(|&(_, side)| randn([n, k, side, side], &mut rng)).collect();
        for (ci, (name, cfg)) in configs.iter().enumerate() {
            let as_map = |ins: &[Tensor]| -> BTreeMap<u32, Tensor> {
                scales.iter().zip(ins).map(|(&(s, _), t)| (s, t.clone())).collect()
            };
            let o = check_module(
                &NoParams,
                &preds,
                |_, ins| {
                    let out = loss_multiscale(&as_map(ins), &gt, cfg).unwrap();
                    vec![Tensor::from_vec([1, 1, 1, 1], vec![out.value]).unwrap()]
                },
                |_, ins, rs| {
                    let out = loss_multiscale(&as_map(ins), &gt, cfg).unwrap();
                    let r = rs[0].data()[0];
                    out.grads.values().map(|g| g.scale(r)).collect()
                },
                usize::MAX,
                (si * 10 + ci) as u64,
            );
            out.push((format!("loss {name} setup {si}"), o));
        }
    }
    out
}

pub fn fuse_inputs_and_params() -> Cases {
    let mut out = Cases::new();
    let mut rng = SeededRng::new(6);
    // (batch, feat_c, upper_c, width, feature side, lateral kernel)
    let cases = [(1, 3, 4, 4, 4, 3), (2, 2, 3, 6, 6, 1), (2, 4, 2, 3, 8, 3)];
    for (i, &(n, fc, uc, width, side, lk)) in cases.iter().enumerate() {
        let fuse = Fuse::<f64>::new(fc, uc, width, lk, &mut rng).unwrap();
        let feat = randn([n, fc, side, side], &mut rng);
        let upper = randn([n, uc, side / 2, side / 2], &mut rng);
        let o = check_module(
            &fuse,
            &[feat, upper],
            |m, ins| vec![m.forward(&ins[0], &ins[1], Phase::Train).unwrap()],
            |m, _, rs| {
                let (a, b) = m.backward(&rs[0]).unwrap();
                vec![a, b]
            },
            24,
            i as u64,
        );
        out.push((format!("fuse case {i}"), o));
    }
    out
}

pub fn head_inputs_and_params() -> Cases {
    let mut out = Cases::new();
    let mut rng = SeededRng::new(7);
    // (batch, in_c, keypoints, upscale, kernel, side)
    let cases = [(1, 4, 2, 2, 3, 4), (2, 3, 3, 4, 5, 3), (1, 6, 1, 1, 9, 5)];
    for (i, &(n, c, k, s, kernel, side)) in cases.iter().enumerate() {
        let mut head = SrHead::<f64>::new(c, k, s, kernel, &mut rng).unwrap();
        // lift the near-zero output init so the check exercises typical magnitudes
        head.lkc.p.weight.value = randn(head.lkc.p.weight.value.shape(), &mut rng).scale(0.3);
        let x = randn([n, c, side, side], &mut rng);
        let o = check_module(
            &head,
            &[x],
            |m, ins| vec![m.forward(&ins[0], Phase::Train).unwrap()],
            |m, _, rs| vec![m.backward(&rs[0]).unwrap()],
            32,
            i as u64,
        );
        out.push((format!("head case {i}"), o));
    }
    out
}

#[derive(Clone)]
struct Net(Model);

impl HasParams<f64> for Net {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<ceph_core::layers::ParamRef<'a, f64>>) {
        let _ = prefix;
        out.extend(self.0.named_params());
    }
    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ceph_core::layers::ParamMut<'a, f64>>) {
        let _ = prefix;
        out.extend(self.0.named_params_mut());
    }
}

pub fn tiny_model_end_to_end() -> Cases {
    let mut out = Cases::new();
    let cfg = tiny_config();
    let mut model = Model::new(&cfg, 11).unwrap();
    let mut rng = SeededRng::new(8);
    for (path, p) in model.named_params_mut() {
        if path.ends_with("lkc.weight") {
            p.value = randn(p.value.shape(), &mut rng).scale(0.3);
        }
    }
    let x = randn([2, 1, 32, 64], &mut rng);
    let scales = cfg.scales();
    let o = check_module(
        &Net(model),
        &[x],
        |m, ins| m.0.forward(&ins[0], Phase::Train).unwrap().into_values().collect(),
        |m, _, rs| {
            let grads: BTreeMap<u32, Tensor> = scales.iter().copied().zip(rs.iter().cloned()).collect();
            vec![m.0.backward(&grads).unwrap()]
        },
        20,
        9,
    );
    out.push(("tiny model".to_string(), o));
    out
}
