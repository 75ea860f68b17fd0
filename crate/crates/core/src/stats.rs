//! Welch's t-test and binomial confidence intervals.

use thiserror::Error;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TestError {
    #[error("each sample needs at least two observations (got {0} and {1})")]
    TooFewSamples(usize, usize),
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (mean, ss / (n - 1.0))
}

/// Welch's unequal-variance two-sample t-test.
///
/// If both samples have zero variance the p-value is 1.0 for equal means and
/// 0.0 otherwise.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchTest, TestError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(TestError::TooFewSamples(a.len(), b.len()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let sa = va / na;
    let sb = vb / nb;
    let se2 = sa + sb;
    if se2 == 0.0 {
        let df = na + nb - 2.0;
        return Ok(if ma == mb {
            WelchTest { t: 0.0, df, p_value: 1.0 }
        } else {
            WelchTest { t: if ma > mb { f64::INFINITY } else { f64::NEG_INFINITY }, df, p_value: 0.0 }
        });
    }
    let t = (ma - mb) / libm::sqrt(se2);
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(WelchTest { t, df, p_value: student_t_two_sided(t, df) })
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(df / 2.0, 0.5, x)
}

/// `I_x(a, b)` evaluated with the modified Lentz continued fraction.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b) + a * libm::log(x) + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 10_000;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;
    let clamp = |v: f64| if libm::fabs(v) < TINY { TINY } else { v };

    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 / clamp(1.0 - qab * x / qap);
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let even = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 / clamp(1.0 + even * d);
        c = clamp(1.0 + even / c);
        h *= d * c;
        let odd = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 / clamp(1.0 + odd * d);
        c = clamp(1.0 + odd / c);
        let step = d * c;
        h *= step;
        if libm::fabs(step - 1.0) < EPS {
            break;
        }
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IntervalMethod {
    /// Normal approximation `p ± z·sqrt(p(1−p)/n)`.
    #[default]
    Wald,
    Wilson,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn half_width(&self) -> f64 {
        (self.upper - self.lower) / 2.0
    }
}

/// 95% interval for a binomial proportion `p` observed over `n` trials.
pub fn proportion_interval(p: f64, n: usize, method: IntervalMethod) -> Interval {
    let n = n as f64;
    let z = Z_95;
    match method {
        IntervalMethod::Wald => {
            let half = z * libm::sqrt(p * (1.0 - p) / n);
            Interval { estimate: p, lower: p - half, upper: p + half }
        }
        IntervalMethod::Wilson => {
            let z2 = z * z;
            let denom = 1.0 + z2 / n;
            let center = (p + z2 / (2.0 * n)) / denom;
            let half = z / denom * libm::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
            Interval { estimate: p, lower: center - half, upper: center + half }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    // Reference values from scipy.stats.ttest_ind(a, b, equal_var=False).
    #[test]
    fn welch_matches_reference() {
        let cases: [(&[f64], &[f64], f64, f64); 3] = [
            (&[0.1, 0.25, 0.3, 0.05, 0.5, 0.2], &[0.4, 0.35, 0.6, 0.55, 0.3], -2.3663087994394236, 0.04216621373510441),
            (&[1.0, 2.0, 3.0, 4.0], &[1.5, 2.5, 3.5, 4.5, 5.5, 6.5, 7.5], -1.9215378456610452, 0.0872264690360149),
            (&[0.0, 0.1], &[0.05, 0.02, 0.2], -0.5345224838248488, 0.6320186812148008),
        ];
        for (a, b, t, p) in cases {
            let r = welch_t_test(a, b).unwrap();
            assert!((r.t - t).abs() < 1e-9, "t {} vs {}", r.t, t);
            assert!((r.p_value - p).abs() < 1e-9, "p {} vs {}", r.p_value, p);
        }
    }

    #[test]
    fn welch_degenerate_cases() {
        let a = vec![0.3, 0.4, 0.5];
        assert_eq!(welch_t_test(&a, &a).unwrap().p_value, 1.0);
        assert_eq!(welch_t_test(&[2.0, 2.0], &[2.0, 2.0]).unwrap().p_value, 1.0);
        assert!(welch_t_test(&[1.0; 50], &[0.0; 50]).unwrap().p_value < 1e-10);
        assert_eq!(welch_t_test(&[1.0], &[0.0, 1.0]), Err(TestError::TooFewSamples(1, 2)));
    }

    #[test]
    fn incomplete_beta_endpoints_and_symmetry() {
        assert_eq!(regularized_incomplete_beta(2.0, 3.0, 0.0), 0.0);
        assert_eq!(regularized_incomplete_beta(2.0, 3.0, 1.0), 1.0);
        // I_x(a,b) = 1 - I_{1-x}(b,a)
        let v = regularized_incomplete_beta(2.5, 0.5, 0.3) + regularized_incomplete_beta(0.5, 2.5, 0.7);
        assert!((v - 1.0).abs() < 1e-13);
        // I_x(1,1) = x
        assert!((regularized_incomplete_beta(1.0, 1.0, 0.37) - 0.37).abs() < 1e-14);
    }

    #[test]
    fn wald_half_widths() {
        let hw = |p, n| proportion_interval(p, n, IntervalMethod::Wald).half_width();
        assert!((hw(0.5, 100) - 0.098).abs() < 1e-12);
        assert!((hw(0.2526, 578) - 0.0354).abs() < 1e-4);
        assert_eq!(hw(1.0, 20), 0.0);
    }

    #[test]
    fn wilson_stays_inside_unit_interval() {
        let i = proportion_interval(1.0, 10, IntervalMethod::Wilson);
        assert!(i.upper <= 1.0 + 1e-12 && i.lower > 0.5);
        let i = proportion_interval(0.0, 10, IntervalMethod::Wilson);
        assert!(i.lower >= -1e-12);
    }
}
