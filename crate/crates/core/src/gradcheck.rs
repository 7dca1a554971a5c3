//! Central-difference gradient checking.

/// Pass criterion per coordinate: `|a - n| <= abs + rel * max(|a|, |n|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckTolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for GradCheckTolerance {
    fn default() -> Self {
        GradCheckTolerance { abs: 1e-6, rel: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub numeric: Vec<f64>,
    pub max_abs_error: f64,
    /// Largest `|a - n| / max(|a|, |n|, 1e-12)`.
    pub max_rel_error: f64,
    /// Coordinates outside tolerance.
    pub failures: Vec<usize>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Compares `analytic` with `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn check_gradient<F>(mut f: F, x: &[f64], analytic: &[f64], h: f64, tol: GradCheckTolerance) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(x.len(), analytic.len(), "gradient length");
    let numeric = numeric_gradient(&mut f, x, h);
    let mut max_abs_error: f64 = 0.0;
    let mut max_rel_error: f64 = 0.0;
    let mut failures = Vec::new();
    for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
        let err = (a - n).abs();
        let scale = a.abs().max(n.abs());
        max_abs_error = max_abs_error.max(err);
        max_rel_error = max_rel_error.max(err / scale.max(1e-12));
        if !(err <= tol.abs + tol.rel * scale) {
            failures.push(i);
        }
    }
    GradCheckReport {
        numeric,
        max_abs_error,
        max_rel_error,
        failures,
    }
}

pub fn numeric_gradient<F>(f: &mut F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let x = [1.0, -2.0, 0.5];
        let f = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
        let good: Vec<f64> = x.iter().map(|a| 2.0 * a).collect();
        assert!(check_gradient(f, &x, &good, 1e-5, GradCheckTolerance::default()).passed());
        let bad = vec![2.0, -4.0, 2.0];
        let r = check_gradient(f, &x, &bad, 1e-5, GradCheckTolerance::default());
        assert_eq!(r.failures, vec![2]);
    }
}
