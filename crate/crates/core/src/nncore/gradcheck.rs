//! Central finite-difference gradient checking.

/// Denominator floor for [`relative_error`]; below this magnitude the
/// comparison degrades gracefully to an absolute one.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, REL_ERR_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Compares `analytic[i]` against `(L(θ + eps·e_i) - L(θ - eps·e_i)) / (2·eps)`
/// for each `i` in `sample` and returns the worst [`relative_error`].
///
/// `theta` is perturbed in place and restored before returning. The loss
/// must be deterministic (noise and dropout off).
pub fn finite_diff_check<L>(
    theta: &mut [f64],
    analytic: &[f64],
    sample: &[usize],
    eps: f64,
    mut loss: L,
) -> f64
where
    L: FnMut(&[f64]) -> f64,
{
    assert_eq!(theta.len(), analytic.len(), "parameter/gradient length mismatch");
    let mut worst: f64 = 0.0;
    for &i in sample {
        let orig = theta[i];
        theta[i] = orig + eps;
        let plus = loss(theta);
        theta[i] = orig - eps;
        let minus = loss(theta);
        theta[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let err = relative_error(analytic[i], numeric);
        if err.is_nan() {
            return f64::INFINITY;
        }
        worst = worst.max(err);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_loss_is_exact() {
        let mut theta = vec![0.3, -1.2, 4.0];
        let err = finite_diff_check(&mut theta, &[1.0, 1.0, 1.0], &[0, 1, 2], 1e-5, |t| t.iter().sum());
        assert!(err < 1e-10, "{err}");
        assert_eq!(theta, vec![0.3, -1.2, 4.0]);
    }

    #[test]
    fn quadratic_loss() {
        let mut theta = vec![1.0; 4];
        let err = finite_diff_check(&mut theta, &[2.0; 4], &[0, 1, 2, 3], 1e-5, |t| {
            t.iter().map(|x| x * x).sum()
        });
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn detects_wrong_gradient() {
        let mut theta = vec![1.0];
        let err = finite_diff_check(&mut theta, &[3.0], &[0], 1e-5, |t| t[0] * t[0]);
        assert!(err > 0.3);
    }
}
