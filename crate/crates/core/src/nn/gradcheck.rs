/// Outcome of a central-difference gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Magnitude below which an error is measured absolutely rather than
/// relative to the gradient; central differences carry roughly this much
/// rounding noise for unit-scale losses at the default step.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Compares the analytic gradient returned by `f` against central
/// differences `(f(x+h) - f(x-h)) / 2h` with `h = step * max(1, |x_i|)`.
///
/// The per-coordinate error is `|a - n| / max(|a|, |n|, REL_ERROR_FLOOR)`.
pub fn grad_check<F>(f: F, point: &[f64], step: f64) -> GradCheckReport
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(point);
    assert_eq!(analytic.len(), point.len(), "gradient length must match the point");
    let mut x = point.to_vec();
    let mut numeric = Vec::with_capacity(point.len());
    let mut worst = (0.0, 0);
    for i in 0..point.len() {
        let h = step * point[i].abs().max(1.0);
        x[i] = point[i] + h;
        let (fp, _) = f(&x);
        x[i] = point[i] - h;
        let (fm, _) = f(&x);
        x[i] = point[i];
        let n = (fp - fm) / (2.0 * h);
        let a = analytic[i];
        let err = (a - n).abs() / a.abs().max(n.abs()).max(REL_ERROR_FLOOR);
        if err > worst.0 || err.is_nan() {
            worst = (err, i);
        }
        numeric.push(n);
    }
    GradCheckReport {
        max_rel_error: worst.0,
        worst_index: worst.1,
        analytic,
        numeric,
    }
}
