mod common;

use ceph_core::layers::{HasParams, Phase};
use ceph_core::model::{Backbone, BackboneConfig, Fuse, ModelConfig};
use ceph_core::{Error, Model, SeededRng, Tensor};
use common::{randn, tiny_config};
use proptest::prelude::*;

fn image(h: usize, w: usize, seed: u64) -> Tensor {
    let mut rng = SeededRng::new(seed);
    Tensor::from_fn([1, 1, h, w], |_, _, _, _| rng.uniform())
}

#[test]
fn backbone_strides() {
    let cfg = BackboneConfig::default();
    let mut rng = SeededRng::new(0);
    let mut bb = Backbone::<f64>::new(&cfg, &mut rng).unwrap();
    let feats = bb.forward(&image(128, 128, 1), Phase::Eval).unwrap();
    let sides: Vec<_> = feats.iter().map(|f| (f.shape().c, f.shape().h, f.shape().w)).collect();
    assert_eq!(sides, vec![(16, 32, 32), (32, 16, 16), (64, 8, 8), (128, 4, 4)]);
}

#[test]
fn default_model_emits_supervised_scales_at_input_resolution() {
    let cfg = ModelConfig::default();
    let mut model = Model::new(&cfg, 0).unwrap();
    let out = model.forward(&image(128, 128, 2), Phase::Eval).unwrap();
    assert_eq!(out.keys().copied().collect::<Vec<_>>(), vec![2, 3]);
    for hm in out.values() {
        let s = hm.shape();
        assert_eq!((s.n, s.c, s.h, s.w), (1, 4, 128, 128));
        assert!(hm.is_finite());
    }
}

#[test]
fn indivisible_input_rejected() {
    let mut cfg = ModelConfig::default();
    cfg.backbone.input_size = [120, 128];
    assert!(matches!(Model::new(&cfg, 0), Err(Error::Invalid(_) | Error::Config(_))));
}

#[test]
fn deterministic_and_finite() {
    let cfg = tiny_config();
    let x = image(32, 64, 3);
    let mut a = Model::new(&cfg, 5).unwrap();
    let mut b = Model::new(&cfg, 5).unwrap();
    let ya = a.forward(&x, Phase::Eval).unwrap();
    let yb = b.forward(&x, Phase::Eval).unwrap();
    assert_eq!(ya, yb);
    assert!(ya.values().all(|t| t.is_finite()));
    let mut c = Model::new(&cfg, 6).unwrap();
    assert_ne!(c.forward(&x, Phase::Eval).unwrap(), ya);
}

#[test]
fn keypoint_isolation() {
    let mut cfg = tiny_config();
    cfg.head.num_keypoints = 3;
    let x = image(32, 64, 4);
    let mut model = Model::new(&cfg, 7).unwrap();
    let base = model.forward(&x, Phase::Eval).unwrap();
    let head = model.head_mut(2).unwrap();
    let per_kp = head.lkc.p.weight.value.shape().n / 3;
    let w = head.lkc.p.weight.value.data_mut();
    let kp_len = w.len() / 3;
    for v in &mut w[..kp_len] {
        *v += 0.5;
    }
    assert_eq!(per_kp, 16);
    let out = model.forward(&x, Phase::Eval).unwrap();
    let (b2, o2) = (&base[&2], &out[&2]);
    assert_ne!(b2.plane(0, 0), o2.plane(0, 0));
    assert_eq!(b2.plane(0, 1), o2.plane(0, 1));
    assert_eq!(b2.plane(0, 2), o2.plane(0, 2));
    assert_eq!(base[&3], out[&3]);
}

#[test]
fn zero_weight_fuse_is_zero() {
    let mut rng = SeededRng::new(8);
    let mut fuse = Fuse::<f64>::new(4, 6, 5, 3, &mut rng).unwrap();
    let mut ps = Vec::new();
    fuse.params_mut("", &mut ps);
    for (path, p) in ps {
        if p.trainable && !path.ends_with("gamma") {
            p.value.fill(0.0);
        }
    }
    let feat = randn([2, 4, 8, 8], &mut rng);
    let upper = randn([2, 6, 4, 4], &mut rng);
    for phase in [Phase::Train, Phase::Eval] {
        let m = fuse.forward(&feat, &upper, phase).unwrap();
        assert_eq!((m.shape().c, m.shape().h, m.shape().w), (5, 8, 8));
        assert!(m.data().iter().all(|&v| v == 0.0));
    }
    assert!(fuse.forward(&feat, &randn([2, 6, 3, 4], &mut rng), Phase::Eval).is_err());
}

#[test]
fn save_load_bitwise() {
    let cfg = tiny_config();
    let mut trained = Model::new(&cfg, 9).unwrap();
    // perturb so running statistics and weights are not their init values
    trained.forward(&image(32, 64, 5), Phase::Train).unwrap();
    let mut bytes = Vec::new();
    trained.write_params(&mut bytes).unwrap();
    assert_eq!(&bytes[..6], b"SRKPv1");

    let mut fresh = Model::new(&cfg, 10).unwrap();
    fresh.read_params(bytes.as_slice()).unwrap();
    for ((pa, a), (pb, b)) in trained.named_params().iter().zip(fresh.named_params().iter()) {
        assert_eq!(pa, pb);
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.value), bits(&b.value), "{pa}");
    }
    let x = image(32, 64, 6);
    assert_eq!(trained.forward(&x, Phase::Eval).unwrap(), fresh.forward(&x, Phase::Eval).unwrap());

    let mut again = Vec::new();
    fresh.write_params(&mut again).unwrap();
    assert_eq!(again, bytes);
}

#[test]
fn truncated_file_leaves_model_untouched() {
    let cfg = tiny_config();
    let src = Model::new(&cfg, 11).unwrap();
    let mut bytes = Vec::new();
    src.write_params(&mut bytes).unwrap();
    let mut dst = Model::new(&cfg, 12).unwrap();
    let before: Vec<Tensor> = dst.named_params().iter().map(|(_, p)| p.value.clone()).collect();
    for cut in [0, 5, 40, bytes.len() / 2, bytes.len() - 1] {
        let err = dst.read_params(&bytes[..cut]).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
        let after: Vec<Tensor> = dst.named_params().iter().map(|(_, p)| p.value.clone()).collect();
        assert_eq!(before, after);
    }
}

#[test]
fn keypoint_count_mismatch_names_head_parameter() {
    let cfg = tiny_config();
    let src = Model::new(&cfg, 13).unwrap();
    let mut bytes = Vec::new();
    src.write_params(&mut bytes).unwrap();
    let mut other = cfg.clone();
    other.head.num_keypoints = 3;
    let mut dst = Model::new(&other, 13).unwrap();
    match dst.read_params(bytes.as_slice()) {
        Err(Error::Param { path, msg }) => {
            assert!(path.starts_with("head."), "{path}");
            assert!(msg.contains("shape mismatch"), "{msg}");
        }
        other => panic!("expected parameter error, got {other:?}"),
    }
}

#[test]
fn param_count_is_a_function_of_config() {
    let cfg = tiny_config();
    let a = Model::new(&cfg, 1).unwrap().param_count();
    let b = Model::new(&cfg, 2).unwrap().param_count();
    assert_eq!(a, b);
    let mut wider = cfg.clone();
    wider.neck_channels = 6;
    assert!(Model::new(&wider, 1).unwrap().param_count() > a);
    let mut fewer = cfg;
    fewer.head.supervised_scales = vec![3];
    assert!(Model::new(&fewer, 1).unwrap().param_count() < a);
}

fn scale_subsets() -> impl Strategy<Value = Vec<u32>> {
    proptest::sample::subsequence(vec![2u32, 3, 4, 5], 1..=4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn heatmap_resolution_matches_config(
        hb in 1usize..=3,
        wb in 1usize..=3,
        scales in scale_subsets(),
        ups in proptest::collection::vec(1usize..=4, 4),
        keypoints in 1usize..=3,
    ) {
        let mut cfg = tiny_config();
        cfg.backbone.input_size = [32 * hb, 32 * wb];
        cfg.head.num_keypoints = keypoints;
        cfg.head.upscale = Some(ups[..scales.len()].to_vec());
        cfg.head.supervised_scales = scales.clone();
        let mut model = Model::new(&cfg, 0).unwrap();
        let out = model.forward(&image(32 * hb, 32 * wb, 0), Phase::Eval).unwrap();
        prop_assert_eq!(out.keys().copied().collect::<Vec<_>>(), scales.clone());
        for (i, s) in scales.iter().enumerate() {
            let shape = out[s].shape();
            prop_assert_eq!(shape.c, keypoints);
            prop_assert_eq!(shape.h, (32 * hb >> s) * ups[i]);
            prop_assert_eq!(shape.w, (32 * wb >> s) * ups[i]);
        }
    }
}
