//! Chi-square CDF and quantile via the regularized lower incomplete gamma
//! function.

use crate::error::{Error, Result};

/// Lanczos approximation (g = 7, 9 coefficients).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        // series
        let mut ap = a;
        let mut sum = 1.0 / a;
        let mut del = sum;
        for _ in 0..1000 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        (sum.ln() - x + a * x.ln() - ln_gamma(a)).exp()
    } else {
        1.0 - gamma_q_continued_fraction(a, x)
    }
}

/// Upper tail `Q(a, x)` by modified Lentz continued fraction, valid for `x >= a + 1`.
fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..1000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

pub fn chi2_cdf(dof: usize, x: f64) -> f64 {
    gamma_p(dof as f64 / 2.0, x / 2.0)
}

fn chi2_pdf(dof: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = dof as f64 / 2.0;
    ((k - 1.0) * x.ln() - x / 2.0 - k * 2f64.ln() - ln_gamma(k)).exp()
}

/// Value `t` with `CDF_{chi2(dof)}(t) = p`.
pub fn chi2_quantile(dof: usize, p: f64) -> Result<f64> {
    if dof == 0 {
        return Err(Error::invalid("chi-square degrees of freedom must be >= 1"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!(
            "probability must lie in (0, 1), got {p}"
        )));
    }
    let mut lo = 0.0;
    let mut hi = dof as f64 + 10.0 * (2.0 * dof as f64).sqrt() + 10.0;
    while chi2_cdf(dof, hi) < p {
        lo = hi;
        hi *= 2.0;
    }
    // safeguarded Newton: fall back to bisection whenever a step leaves the bracket
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = chi2_cdf(dof, t) - p;
        if f.abs() < 1e-15 {
            break;
        }
        if f > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let pdf = chi2_pdf(dof, t);
        let newton = t - f / pdf;
        t = if pdf > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-14 * hi.max(1.0) {
            break;
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn two_dof_has_closed_form() {
        // chi2(2) is exponential with mean 2: t = -2 ln(1 - p)
        for p in [0.5, 0.9, 0.95, 0.99, 0.999] {
            let t = chi2_quantile(2, p).unwrap();
            assert!((t + 2.0 * (1.0 - p).ln()).abs() < 1e-9, "p = {p}");
        }
    }

    #[test]
    fn table_values() {
        assert!((chi2_quantile(2, 0.95).unwrap() - 5.991).abs() < 1e-3);
        assert!((chi2_quantile(1, 0.99).unwrap() - 6.635).abs() < 1e-3);
        assert!((chi2_quantile(13, 0.99).unwrap() - 27.69).abs() < 1e-2);
        assert!((chi2_quantile(2, 0.99).unwrap() - 9.21).abs() < 1e-2);
    }

    #[test]
    fn cdf_inverts_quantile() {
        for dof in [1, 2, 3, 7, 13, 15, 40] {
            for p in [0.01, 0.5, 0.95, 0.99] {
                let t = chi2_quantile(dof, p).unwrap();
                assert!((chi2_cdf(dof, t) - p).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(chi2_quantile(0, 0.5).is_err());
        assert!(chi2_quantile(2, 0.0).is_err());
        assert!(chi2_quantile(2, 1.0).is_err());
        assert!(chi2_quantile(2, f64::NAN).is_err());
    }
}
