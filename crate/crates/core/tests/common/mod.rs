#![allow(dead_code)]

pub mod gradcases;

use ceph_core::gradcheck::{relative_error, CheckReport};
use ceph_core::layers::HasParams;
use ceph_core::model::ModelConfig;
use ceph_core::tensor::randn_init;
use ceph_core::{SeededRng, Shape4, Tensor};

pub const STEP: f64 = 1e-5;
/// Denominator floor of the relative error.
pub const FLOOR: f64 = 1e-6;

pub fn randn(shape: impl Into<Shape4>, rng: &mut SeededRng) -> Tensor {
    randn_init(shape, rng, 1.0).unwrap()
}

pub fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Analytic gradients below this are treated as structurally zero.
pub const DEAD: f64 = 1e-12;
/// Bound on the central difference of a structurally zero gradient.
pub const DEAD_FD: f64 = 1e-6;

/// Indices to probe: all of them when `len <= limit`, else `limit` random ones.
pub fn pick(len: usize, limit: usize, rng: &mut SeededRng) -> Vec<usize> {
    if len <= limit {
        (0..len).collect()
    } else {
        (0..limit).map(|_| rng.below(len)).collect()
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub worst: f64,
    pub worst_at: String,
    pub checked: usize,
    /// Tensors whose analytic gradient vanishes identically (a conv bias
    /// followed by batch norm), with the largest central difference seen.
    pub dead: Vec<(String, f64)>,
}

impl Outcome {
    pub fn assert_within(&self, label: &str, tol: f64) {
        assert!(self.checked > 0, "{label}: nothing checked");
        assert!(
            self.worst < tol,
            "{label}: relative error {:.3e} at {} ({} probes)",
            self.worst,
            self.worst_at,
            self.checked
        );
        for (path, fd) in &self.dead {
            assert!(*fd < DEAD_FD, "{label}: `{path}` has zero analytic gradient but central difference {fd:.3e}");
        }
    }

    fn absorb(&mut self, what: String, r: CheckReport) {
        if r.max_rel_error > self.worst || self.checked == 0 {
            self.worst = r.max_rel_error;
            self.worst_at = format!("{what}[{}]", r.worst_index);
        }
        self.checked += r.checked;
    }
}

/// Checks the gradient of `L = sum_k <r_k, forward(inputs)_k>` with respect
/// to every input and every trainable parameter of `module` against central
/// differences, probing at most `limit` coordinates per tensor. `backward`
/// receives the inputs and the readouts `r_k`.
pub fn check_module<M, F, B>(module: &M, inputs: &[Tensor], forward: F, backward: B, limit: usize, seed: u64) -> Outcome
where
    M: HasParams<f64> + Clone,
    F: Fn(&mut M, &[Tensor]) -> Vec<Tensor>,
    B: Fn(&mut M, &[Tensor], &[Tensor]) -> Vec<Tensor>,
{
    let mut rng = SeededRng::new(seed);
    let mut m = module.clone();
    let readouts: Vec<Tensor> = forward(&mut m, inputs).iter().map(|y| randn(y.shape(), &mut rng)).collect();
    // central difference of the readout, differencing outputs before the
    // dot product to limit cancellation
    let numeric = |f: &dyn Fn(&[f64]) -> Vec<Tensor>, x: &[f64], i: usize| -> f64 {
        let mut probe = x.to_vec();
        probe[i] = x[i] + STEP;
        let up = f(&probe);
        probe[i] = x[i] - STEP;
        let down = f(&probe);
        let mut acc = 0.0;
        for ((u, d), r) in up.iter().zip(&down).zip(&readouts) {
            acc += u.data().iter().zip(d.data()).zip(r.data()).map(|((a, b), w)| (a - b) * w).sum::<f64>();
        }
        acc / (2.0 * STEP)
    };
    let check = |f: &dyn Fn(&[f64]) -> Vec<Tensor>, x: &[f64], analytic: &[f64], idx: Vec<usize>| {
        let mut report = CheckReport {
            max_rel_error: 0.0,
            worst_index: 0,
            checked: 0,
        };
        for i in idx {
            let err = relative_error(analytic[i], numeric(f, x, i), FLOOR);
            if report.checked == 0 || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_index = i;
            }
            report.checked += 1;
        }
        report
    };

    let mut m = module.clone();
    m.zero_grads();
    forward(&mut m, inputs);
    let g_inputs = backward(&mut m, inputs, &readouts);
    assert_eq!(g_inputs.len(), inputs.len());
    let mut analytic = Vec::new();
    m.params("", &mut analytic);
    let analytic: Vec<(String, bool, Vec<f64>)> =
        analytic.into_iter().map(|(p, prm)| (p, prm.trainable, prm.grad.data().to_vec())).collect();

    let mut out = Outcome::default();
    for (k, x) in inputs.iter().enumerate() {
        let f = |v: &[f64]| {
            let mut ins = inputs.to_vec();
            ins[k] = Tensor::from_vec(x.shape(), v.to_vec()).unwrap();
            let mut mm = module.clone();
            forward(&mut mm, &ins)
        };
        let idx = pick(x.len(), limit, &mut rng);
        out.absorb(format!("input{k}"), check(&f, x.data(), g_inputs[k].data(), idx));
    }
    for (pi, (path, trainable, grad)) in analytic.iter().enumerate() {
        if !trainable {
            continue;
        }
        let mut base = Vec::new();
        module.params("", &mut base);
        let x0 = base[pi].1.value.data().to_vec();
        let shape = base[pi].1.value.shape();
        let f = |v: &[f64]| {
            let mut mm = module.clone();
            {
                let mut ps = Vec::new();
                mm.params_mut("", &mut ps);
                ps[pi].1.value = Tensor::from_vec(shape, v.to_vec()).unwrap();
            }
            forward(&mut mm, inputs)
        };
        let idx = pick(x0.len(), limit, &mut rng);
        if grad.iter().all(|g| g.abs() < DEAD) {
            let worst = idx
                .into_iter()
                .map(|i| numeric(&f, &x0, i).abs())
                .fold(0.0, f64::max);
            out.dead.push((path.clone(), worst));
            continue;
        }
        out.absorb(path.clone(), check(&f, &x0, grad, idx));
    }
    out
}

/// Shape-only wrapper for parameter-free operations.
#[derive(Clone, Default)]
pub struct NoParams;

impl HasParams<f64> for NoParams {
    fn params<'a>(&'a self, _: &str, _: &mut Vec<ceph_core::layers::ParamRef<'a, f64>>) {}
    fn params_mut<'a>(&'a mut self, _: &str, _: &mut Vec<ceph_core::layers::ParamMut<'a, f64>>) {}
}

/// 32x64 input, two keypoints, narrow channels.
pub fn tiny_config() -> ModelConfig {
    let mut cfg = ModelConfig::default();
    cfg.backbone.input_size = [32, 64];
    cfg.backbone.stem_channels = 4;
    cfg.backbone.stage_channels = [4, 4, 6, 8];
    cfg.neck_channels = 4;
    cfg.head.num_keypoints = 2;
    cfg.head.lkc_kernel = 3;
    cfg
}
