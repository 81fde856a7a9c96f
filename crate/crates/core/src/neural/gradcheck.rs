use super::Parameters;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Traversal index of the worst parameter.
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

/// Compares analytic gradients against central differences.
///
/// The error per parameter is `|a − n| / max(|a|, |n|, 1e-12)`; the report
/// carries the maximum over all parameters.
pub fn grad_check<P, F>(mut f: F, params: &P, analytic: &P, step: f64) -> GradCheckReport
where
    P: Parameters + Clone,
    F: FnMut(&P) -> f64,
{
    let theta = params.flatten();
    let grads = analytic.flatten();
    assert_eq!(theta.len(), grads.len(), "gradient shape mismatch");
    let mut work = params.clone();
    let mut flat = theta.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    for i in 0..theta.len() {
        flat[i] = theta[i] + step;
        work.load_flat(&flat);
        let plus = f(&work);
        flat[i] = theta[i] - step;
        work.load_flat(&flat);
        let minus = f(&work);
        flat[i] = theta[i];

        let numeric = (plus - minus) / (2.0 * step);
        let a = grads[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
        if err > report.max_rel_error {
            report = GradCheckReport {
                max_rel_error: err,
                worst_index: i,
                worst_analytic: a,
                worst_numeric: numeric,
            };
        }
    }
    report
}
