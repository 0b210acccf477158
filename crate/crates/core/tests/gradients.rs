mod common;

use common::gradcases::{self, Cases, LAYER_TOL, MODEL_TOL};

fn assert_all(cases: Cases, tol: f64) {
    assert!(!cases.is_empty());
    for (label, o) in &cases {
        o.assert_within(label, tol);
    }
}

#[test]
fn conv_variants() {
    assert_all(gradcases::conv_variants(), LAYER_TOL);
}

#[test]
fn batchnorm_train_mode() {
    assert_all(gradcases::batchnorm_train_mode(), LAYER_TOL);
}

#[test]
fn gelu_pointwise() {
    assert_all(gradcases::gelu_pointwise(), LAYER_TOL);
}

#[test]
fn relu_away_from_kink() {
    assert_all(gradcases::relu_away_from_kink(), LAYER_TOL);
}

#[test]
fn pixel_shuffle_and_upsample() {
    assert_all(gradcases::pixel_shuffle_and_upsample(), LAYER_TOL);
}

#[test]
fn loss_modes() {
    assert_all(gradcases::loss_modes(), LAYER_TOL);
}

#[test]
fn fuse_inputs_and_params() {
    assert_all(gradcases::fuse_inputs_and_params(), LAYER_TOL);
}

#[test]
fn head_inputs_and_params() {
    assert_all(gradcases::head_inputs_and_params(), LAYER_TOL);
}

#[test]
fn tiny_model_end_to_end() {
    assert_all(gradcases::tiny_model_end_to_end(), MODEL_TOL);
}
