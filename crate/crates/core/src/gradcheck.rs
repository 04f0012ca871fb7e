//! Central-difference gradient oracle. Never touches the tape: every entry is
//! probed with two plain forward evaluations, so agreement with
//! [`crate::tape::Tape::backward`] is evidence, not circularity.

/// Central differences (f(x+h e_i) - f(x-h e_i)) / 2h per coordinate.
pub fn finite_diff_gradient<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "finite_diff_gradient requires h > 0");
    let mut probe = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = f(&probe);
        probe[i] = orig - h;
        let fm = f(&probe);
        probe[i] = orig;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Relative error |a - n| / max(1, |a|, |n|), elementwise maximum.
///
/// The 1 in the denominator keeps near-zero gradients compared absolutely;
/// otherwise finite-difference rounding noise would dominate the ratio.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / 1.0_f64.max(a.abs()).max(n.abs()))
        .fold(0.0, f64::max)
}
