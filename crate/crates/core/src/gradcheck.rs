//! Central finite differences, used to validate every analytic backward.

/// Central difference of `f` along coordinate `i` of `x`.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], i: usize, step: f64) -> f64 {
    let mut probe = x.to_vec();
    probe[i] = x[i] + step;
    let up = f(&probe);
    probe[i] = x[i] - step;
    let down = f(&probe);
    (up - down) / (2.0 * step)
}

/// `|a - b| / max(|a|, |b|, floor)`. The floor keeps near-zero gradients
/// from turning rounding noise into large relative errors.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[derive(Debug, Clone, Copy)]
pub struct CheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: usize,
}

/// Compares `analytic[i]` against central differences of `f` at `indices`.
pub fn check_indices(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    indices: impl IntoIterator<Item = usize>,
    step: f64,
    floor: f64,
) -> CheckReport {
    let mut report = CheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        checked: 0,
    };
    for i in indices {
        let numeric = central_difference(&mut f, x, i, step);
        let err = relative_error(analytic[i], numeric, floor);
        if report.checked == 0 || err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_index = i;
        }
        report.checked += 1;
    }
    report
}

pub fn check_all(f: impl FnMut(&[f64]) -> f64, x: &[f64], analytic: &[f64], step: f64, floor: f64) -> CheckReport {
    check_indices(f, x, analytic, 0..x.len(), step, floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial() {
        let f = |v: &[f64]| v[0].powi(3) + 2.0 * v[0] * v[1];
        let x = [1.5, -0.5];
        let grad = [3.0 * 1.5f64.powi(2) + 2.0 * -0.5, 2.0 * 1.5];
        let r = check_all(f, &x, &grad, 1e-5, 1e-6);
        assert!(r.max_rel_error < 1e-8, "{r:?}");
        let wrong = [grad[0], grad[1] + 0.1];
        let r = check_all(f, &x, &wrong, 1e-5, 1e-6);
        assert_eq!(r.worst_index, 1);
        assert!(r.max_rel_error > 1e-2);
    }
}
