//! Central finite-difference gradient checking.

/// Finite-difference settings. The relative error of one coordinate is
/// `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub step: f64,
    pub floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            step: 1e-5,
            floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    pub checked: usize,
    pub skipped: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

impl GradCheck {
    /// Compares `analytic` against central differences of `f` around `x`.
    /// Coordinates for which `skip` returns true (non-differentiable points)
    /// are left out.
    pub fn run<F, S>(&self, mut f: F, x: &[f64], analytic: &[f64], skip: S) -> GradCheckReport
    where
        F: FnMut(&[f64]) -> f64,
        S: Fn(usize) -> bool,
    {
        assert_eq!(x.len(), analytic.len(), "gradient length");
        let mut point = x.to_vec();
        let mut report = GradCheckReport {
            max_rel_error: 0.0,
            worst_index: None,
            checked: 0,
            skipped: 0,
        };
        for i in 0..x.len() {
            if skip(i) {
                report.skipped += 1;
                continue;
            }
            point[i] = x[i] + self.step;
            let up = f(&point);
            point[i] = x[i] - self.step;
            let down = f(&point);
            point[i] = x[i];
            let numeric = (up - down) / (2.0 * self.step);
            let a = analytic[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(self.floor);
            report.checked += 1;
            if err > report.max_rel_error || err.is_nan() {
                report.max_rel_error = if err.is_nan() { f64::INFINITY } else { err };
                report.worst_index = Some(i);
            }
        }
        report
    }
}

/// [`GradCheck::run`] with default settings and no exclusions.
pub fn grad_check<F>(f: F, x: &[f64], analytic: &[f64]) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    GradCheck::default().run(f, x, analytic, |_| false)
}
