//! Central finite-difference verification of analytic gradients.

/// Denominator floor for [`relative_error`]; below it the comparison is
/// effectively absolute at `tolerance · GRAD_FLOOR`.
pub const GRAD_FLOOR: f64 = 1e-5;

/// `|a − b| / max(|a|, |b|, GRAD_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_FLOOR)
}

/// `(f(x + h e_i) − f(x − h e_i)) / 2h` for each requested coordinate.
pub fn central_differences<F>(mut f: F, x: &[f64], indices: &[usize], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    indices
        .iter()
        .map(|&i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Coordinate with the largest error, with its analytic and numeric values.
    pub worst: Option<(usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Compares `analytic[i]` with a central difference at every index.
pub fn check_gradient<F>(f: F, x: &[f64], analytic: &[f64], indices: &[usize], h: f64) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    let numeric = central_differences(f, x, indices, h);
    let mut report = GradCheckReport {
        checked: indices.len(),
        max_rel_error: 0.0,
        worst: None,
    };
    for (&i, &n) in indices.iter().zip(&numeric) {
        let e = relative_error(analytic[i], n);
        if e >= report.max_rel_error {
            report.max_rel_error = e;
            report.worst = Some((i, analytic[i], n));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic() {
        let x = [0.5, -1.0, 2.0];
        let f = |v: &[f64]| v.iter().map(|a| a * a * a).sum::<f64>();
        let g: Vec<f64> = x.iter().map(|a| 3.0 * a * a).collect();
        let r = check_gradient(f, &x, &g, &[0, 1, 2], 1e-6);
        assert!(r.passes(1e-8), "{r:?}");
        let wrong = vec![0.0; 3];
        assert!(!check_gradient(f, &x, &wrong, &[0, 1, 2], 1e-6).passes(1e-4));
    }
}
