//! Log-space accumulation helpers.

/// log(exp(a) + exp(b)) without overflow.
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// log Σ exp(x_i); NEG_INFINITY for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    let s: f64 = xs.iter().map(|&x| (x - hi).exp()).sum();
    hi + s.ln()
}

/// Kahan-compensated sum; keeps relative error near machine precision for
/// long positive sums.
pub fn kahan_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for x in xs {
        let y = x - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_add_matches_direct() {
        let v = log_add(0.0_f64.ln(), 1.0_f64.ln());
        assert!((v - 1.0_f64.ln()).abs() < 1e-14);
        let v = log_add(2.0_f64.ln(), 3.0_f64.ln());
        assert!((v - 5.0_f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn lse_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[-1000.0, -1000.0]);
        assert!((v - (-1000.0 + 2.0_f64.ln())).abs() < 1e-12);
    }
}
