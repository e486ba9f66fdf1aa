use rayon::prelude::*;

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-5;
pub const ABS_TOL: f64 = 1e-8;

/// Acceptance rule for one coordinate: relative error within `REL_TOL`
/// or absolute error within `ABS_TOL`.
pub fn gradients_agree(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= ABS_TOL || diff <= REL_TOL * analytic.abs().max(numeric.abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub failures: usize,
    pub max_abs_err: f64,
    /// Coordinate with the largest absolute discrepancy.
    pub worst: Option<(usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Central differences of `f` around `x` compared against `analytic`.
pub fn check_gradient<F>(f: F, x: &[f64], analytic: &[f64]) -> GradCheckReport
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    assert_eq!(x.len(), analytic.len());
    let rows: Vec<(usize, f64, f64)> = (0..x.len())
        .into_par_iter()
        .map_init(
            || x.to_vec(),
            |buf, i| {
                let orig = buf[i];
                buf[i] = orig + FD_STEP;
                let fp = f(buf);
                buf[i] = orig - FD_STEP;
                let fm = f(buf);
                buf[i] = orig;
                (i, analytic[i], (fp - fm) / (2.0 * FD_STEP))
            },
        )
        .collect();
    let mut report = GradCheckReport { checked: rows.len(), failures: 0, max_abs_err: 0.0, worst: None };
    for (i, a, n) in rows {
        if !gradients_agree(a, n) {
            report.failures += 1;
        }
        let err = (a - n).abs();
        if report.worst.is_none() || err > report.max_abs_err {
            report.max_abs_err = err;
            report.worst = Some((i, a, n));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_passes_and_wrong_gradient_fails() {
        let f = |x: &[f64]| x.iter().map(|v| v * v * v).sum::<f64>();
        let x = [0.3, -1.2, 2.0];
        let good: Vec<f64> = x.iter().map(|v| 3.0 * v * v).collect();
        assert!(check_gradient(f, &x, &good).passed());
        let mut bad = good.clone();
        bad[1] *= 1.001;
        let r = check_gradient(f, &x, &bad);
        assert_eq!(r.failures, 1);
        assert_eq!(r.worst.unwrap().0, 1);
    }

    #[test]
    fn absolute_floor_applies_near_zero() {
        assert!(gradients_agree(0.0, 5e-9));
        assert!(!gradients_agree(0.0, 5e-8));
        assert!(gradients_agree(1000.0, 1000.005));
    }
}
