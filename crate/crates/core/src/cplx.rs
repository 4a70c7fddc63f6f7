//! Complex-valued numerical kernels shared across the crate.

use num_complex::Complex64;

/// Stable log(1 + e^z) for complex z.
///
/// For Re(z) > 0 the naive form overflows once Re(z) ≳ 709, so the positive
/// real excess is factored out first: log(1+e^z) = z + log(1 + e^{-z}).
pub fn log1p_exp(z: Complex64) -> Complex64 {
    if z.re > 0.0 {
        z + (1.0 + (-z).exp()).ln()
    } else {
        (1.0 + z.exp()).ln()
    }
}

/// Logistic function σ(z) = e^z / (1 + e^z) of a complex argument,
/// evaluated on the branch that avoids overflow of e^{±z}.
pub fn logistic(z: Complex64) -> Complex64 {
    if z.re > 0.0 {
        let w = (-z).exp();
        1.0 / (1.0 + w)
    } else {
        let w = z.exp();
        w / (1.0 + w)
    }
}

/// Principal-branch complex arccosh: log(z + sqrt(z-1)·sqrt(z+1)).
///
/// Satisfies cosh(complex_arccosh(z)) = z; the principal branch keeps
/// arccosh(1) = 0 so that zero-angle gates map to inert parameters.
pub fn complex_arccosh(z: Complex64) -> Complex64 {
    let one = Complex64::new(1.0, 0.0);
    (z + (z - one).sqrt() * (z + one).sqrt()).ln()
}

/// log of the weighted mean of e^{d_i}, stabilized by the largest real part.
///
/// Weights must sum to 1. Returns the complex log, i.e.
/// m + ln(Σ w_i e^{d_i - m}) with m = max_i Re(d_i), so that callers can stay
/// in the log domain when means of amplitude ratios over- or underflow.
/// If the stabilized sum cancels to exactly zero the result has -inf real
/// part, which the caller must treat as a degenerate (orthogonal) overlap.
pub fn log_mean_exp(diffs: &[Complex64], weights: &[f64]) -> Complex64 {
    debug_assert_eq!(diffs.len(), weights.len());
    let m = diffs.iter().map(|d| d.re).fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        // every term underflowed to zero amplitude
        return Complex64::new(f64::NEG_INFINITY, 0.0);
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for (d, &w) in diffs.iter().zip(weights) {
        acc += w * (d - m).exp();
    }
    m + acc.ln()
}

/// Relative distance |a-b| / max(|a|, |b|, 1e-300).
pub fn rel_err(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    #[test]
    fn log1p_exp_matches_naive_in_safe_range() {
        let zs = [
            Complex64::new(0.0, 0.0),
            Complex64::new(1.3, -0.4),
            Complex64::new(-2.0, 2.7),
            Complex64::new(0.5, 3.0),
        ];
        for z in zs {
            let naive = (1.0 + z.exp()).ln();
            assert!(rel_err(log1p_exp(z), naive) < TOL, "z={z}");
        }
    }

    #[test]
    fn log1p_exp_survives_large_real_parts() {
        let big = Complex64::new(900.0, 0.3);
        let v = log1p_exp(big);
        assert!(v.re.is_finite() && v.im.is_finite());
        // log(1+e^z) -> z as Re(z) -> inf
        assert!((v - big).norm() < 1e-12);

        let small = Complex64::new(-900.0, 0.3);
        let w = log1p_exp(small);
        assert!(w.norm() < 1e-300 || w.norm().is_finite());
    }

    #[test]
    fn logistic_matches_definition() {
        let zs = [
            Complex64::new(0.0, 0.0),
            Complex64::new(2.0, 1.0),
            Complex64::new(-3.0, -0.7),
        ];
        for z in zs {
            let direct = z.exp() / (1.0 + z.exp());
            assert!(rel_err(logistic(z), direct) < TOL);
        }
        assert!(rel_err(logistic(Complex64::new(0.0, 0.0)), Complex64::new(0.5, 0.0)) < TOL);
    }

    #[test]
    fn arccosh_of_one_is_zero() {
        let v = complex_arccosh(Complex64::new(1.0, 0.0));
        assert!(v.norm() < TOL);
    }

    #[test]
    fn arccosh_round_trips_through_cosh() {
        let z = Complex64::new(0.3, 0.7).cosh();
        let v = complex_arccosh(z);
        assert!(rel_err(v, Complex64::new(0.3, 0.7)) < TOL);
    }

    #[test]
    fn arccosh_of_i_matches_frozen_value() {
        // arccosh(i) = ln(1+sqrt(2)) + i pi/2
        let v = complex_arccosh(Complex64::new(0.0, 1.0));
        let expect = Complex64::new(0.881_373_587_019_543_0, std::f64::consts::FRAC_PI_2);
        assert!(rel_err(v, expect) < TOL);
        assert!(rel_err(v.cosh(), Complex64::new(0.0, 1.0)) < TOL);
    }

    #[test]
    fn log_mean_exp_is_shift_invariant() {
        let diffs: Vec<Complex64> = vec![
            Complex64::new(0.2, 1.0),
            Complex64::new(-0.4, -0.3),
            Complex64::new(0.9, 0.1),
        ];
        let w = vec![0.5, 0.25, 0.25];
        let base = log_mean_exp(&diffs, &w);
        let shift = Complex64::new(300.0, 2.0);
        let shifted: Vec<Complex64> = diffs.iter().map(|d| d + shift).collect();
        let v = log_mean_exp(&shifted, &w);
        assert!(rel_err(v - shift, base) < 1e-12);
    }
}
