use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean, sample standard deviation (n-1 denominator), and sample count of
/// one group of runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl SampleSummary {
    pub fn new(mean: f64, std: f64, n: usize) -> Result<SampleSummary> {
        let s = SampleSummary { mean, std, n };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!(
                "sample summary needs n >= 2, got {}",
                self.n
            )));
        }
        if !self.mean.is_finite() || !self.std.is_finite() || self.std < 0.0 {
            return Err(Error::Config(
                "sample summary needs finite mean and std >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Summarize raw per-run values.
pub fn summarize(values: &[f64]) -> Result<SampleSummary> {
    if values.len() < 2 {
        return Err(Error::Config(format!(
            "summarize needs at least 2 values, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    SampleSummary::new(mean, var.sqrt(), values.len())
}

/// One-sided two-sample comparison.
///
/// `t_star` is positive when group `b` has the larger mean, `nu` follows the
/// unpooled-variance formula with each squared term divided by its sample
/// count (so equal groups of size n give exactly 2n), and `p` is the upper
/// tail of the t distribution at `t_star`. Small `p` supports the hypothesis
/// that `b`'s population mean exceeds `a`'s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_star: f64,
    pub nu: f64,
    pub p: f64,
    /// Set when both groups have zero variance and the formulas degenerate;
    /// `p` is then reported as the symmetric/limit value.
    pub degenerate: bool,
}

/// Welch-style test of H1: mean(b) > mean(a).
pub fn welch_p(a: &SampleSummary, b: &SampleSummary) -> Result<TTestResult> {
    a.validate()?;
    b.validate()?;
    let var_a = a.std * a.std / a.n as f64;
    let var_b = b.std * b.std / b.n as f64;
    let se2 = var_a + var_b;
    if se2 == 0.0 {
        // both spreads vanish; report the limit instead of dividing by zero
        let (t_star, p) = if b.mean > a.mean {
            (f64::INFINITY, 0.0)
        } else if b.mean < a.mean {
            (f64::NEG_INFINITY, 1.0)
        } else {
            (0.0, 0.5)
        };
        return Ok(TTestResult {
            t_star,
            nu: f64::INFINITY,
            p,
            degenerate: true,
        });
    }
    let t_star = (b.mean - a.mean) / se2.sqrt();
    let nu = se2 * se2 / (var_a * var_a / a.n as f64 + var_b * var_b / b.n as f64);
    let p = t_upper_tail(t_star, nu);
    Ok(TTestResult {
        t_star,
        nu,
        p,
        degenerate: false,
    })
}

/// Upper-tail mass of the t distribution with `nu` degrees of freedom:
/// the integral of the density from `t` to infinity, evaluated through the
/// regularized incomplete beta function.
pub fn t_upper_tail(t: f64, nu: f64) -> f64 {
    assert!(nu.is_finite() && nu > 0.0, "degrees of freedom must be positive");
    if t == 0.0 {
        return 0.5;
    }
    let x = nu / (nu + t * t);
    let half_ix = 0.5 * regularized_incomplete_beta(x, 0.5 * nu, 0.5);
    if t > 0.0 {
        half_ix
    } else {
        1.0 - half_ix
    }
}

/// ln Γ(x) for x > 0, Lanczos approximation.
pub(crate) fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    const COEFFS: [f64; 6] = [
        76.180_091_729_471_46,
        -86.505_320_329_416_77,
        24.014_098_240_830_91,
        -1.231_739_572_450_155,
        0.120_865_097_386_617_9e-2,
        -0.539_523_938_495_3e-5,
    ];
    let mut sum = 1.000_000_000_190_015;
    for (i, c) in COEFFS.iter().enumerate() {
        sum += c / (x + i as f64 + 1.0);
    }
    let tmp = x + 5.5;
    (x + 0.5) * tmp.ln() - tmp + (2.506_628_274_631_000_5 * sum / x).ln()
}

/// Regularized incomplete beta I_x(a, b) via the continued fraction of the
/// incomplete beta, evaluated with the modified Lentz method. Relative
/// accuracy is at machine-precision level for the arguments used here.
pub(crate) fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&x));
    debug_assert!(a > 0.0 && b > 0.0);
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
        return 1.0;
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 3e-16;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        // even step
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // odd step
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent tail oracle: adaptive Simpson quadrature of the t density
    /// with the normalizing constant built from exact half-integer gamma
    /// values, so no code is shared with the incomplete-beta route.
    pub(crate) fn t_tail_quadrature(t: f64, nu_int: u32) -> f64 {
        let nu = nu_int as f64;
        let constant = 1.0 / ((nu.sqrt()) * exact_beta_half(nu_int));
        let density = |x: f64| constant * (1.0 + x * x / nu).powf(-(nu + 1.0) / 2.0);
        let body = adaptive_simpson(&density, 0.0, t.abs(), 1e-13, 60);
        if t >= 0.0 {
            0.5 - body
        } else {
            0.5 + body
        }
    }

    /// B(nu/2, 1/2) from exact gamma values at integer and half-integer
    /// arguments: Γ(k) = (k-1)!, Γ(k + 1/2) = (2k)! / (4^k k!) * sqrt(pi).
    fn exact_beta_half(nu: u32) -> f64 {
        let g_half = std::f64::consts::PI.sqrt();
        let gamma_half_integer = |twice: u32| -> f64 {
            // Γ(twice/2)
            if twice % 2 == 0 {
                let k = twice / 2;
                (1..k).map(|i| i as f64).product::<f64>()
            } else {
                let k = (twice - 1) / 2; // Γ(k + 1/2)
                let mut v = g_half;
                for i in 0..k {
                    v *= i as f64 + 0.5;
                }
                v
            }
        };
        gamma_half_integer(nu) * g_half / gamma_half_integer(nu + 1)
    }

    fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
            (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
        }
        fn recurse(
            f: &impl Fn(f64) -> f64,
            a: f64,
            b: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let left = simpson(f, a, m);
            let right = simpson(f, m, b);
            if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                recurse(f, a, m, left, tol / 2.0, depth - 1)
                    + recurse(f, m, b, right, tol / 2.0, depth - 1)
            }
        }
        if a == b {
            return 0.0;
        }
        recurse(f, a, b, simpson(f, a, b), tol, depth)
    }

    #[test]
    fn equal_groups_give_half() {
        let s = SampleSummary::new(0.5, 0.02, 6).unwrap();
        let r = welch_p(&s, &s).unwrap();
        assert_eq!(r.t_star, 0.0);
        assert_eq!(r.p, 0.5);
        assert!(!r.degenerate);
    }

    #[test]
    fn printed_dof_formula_gives_two_n_for_equal_groups() {
        for n in 2..=12 {
            for std in [0.01, 0.3, 2.5] {
                let a = SampleSummary::new(0.5, std, n).unwrap();
                let b = SampleSummary::new(0.75, std, n).unwrap();
                let r = welch_p(&a, &b).unwrap();
                assert!(
                    (r.nu - 2.0 * n as f64).abs() < 1e-9,
                    "n={n} std={std}: nu={}",
                    r.nu
                );
            }
        }
    }

    #[test]
    fn paper_style_example() {
        let a = SampleSummary::new(0.5, 0.01, 6).unwrap();
        let b = SampleSummary::new(0.6, 0.01, 6).unwrap();
        let r = welch_p(&a, &b).unwrap();
        assert!((r.t_star - 17.320508075688775).abs() < 1e-9, "t {}", r.t_star);
        assert!((r.nu - 12.0).abs() < 1e-9, "nu {}", r.nu);
        assert!(r.p < 1e-8, "p {}", r.p);
    }

    #[test]
    fn tail_matches_quadrature_oracle() {
        for &nu in &[5u32, 10, 12] {
            for &t in &[0.5, 1.0, 2.0, 3.0] {
                let got = t_upper_tail(t, nu as f64);
                let want = t_tail_quadrature(t, nu);
                assert!(
                    (got - want).abs() < 1e-10,
                    "t={t} nu={nu}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn antisymmetry_through_the_median() {
        let pairs = [
            (SampleSummary::new(0.4, 0.05, 6).unwrap(), SampleSummary::new(0.47, 0.02, 6).unwrap()),
            (SampleSummary::new(1.0, 0.3, 4).unwrap(), SampleSummary::new(0.2, 0.6, 9).unwrap()),
            (SampleSummary::new(-2.0, 1.0, 3).unwrap(), SampleSummary::new(-1.0, 2.0, 5).unwrap()),
        ];
        for (a, b) in pairs {
            let ab = welch_p(&a, &b).unwrap();
            let ba = welch_p(&b, &a).unwrap();
            assert!((ab.p + ba.p - 1.0).abs() < 1e-9, "{} + {}", ab.p, ba.p);
            assert_eq!(ab.nu.to_bits(), ba.nu.to_bits());
        }
    }

    #[test]
    fn p_strictly_decreases_in_b_mean() {
        let a = SampleSummary::new(0.5, 0.05, 6).unwrap();
        let mut last = 1.0;
        for mean_b in [0.40, 0.45, 0.50, 0.55, 0.60, 0.70] {
            let b = SampleSummary::new(mean_b, 0.05, 6).unwrap();
            let p = welch_p(&a, &b).unwrap().p;
            assert!(p < last, "p {p} did not decrease (prev {last})");
            last = p;
        }
    }

    #[test]
    fn degenerate_zero_variance_cases() {
        let a = SampleSummary::new(0.5, 0.0, 6).unwrap();
        let same = welch_p(&a, &a).unwrap();
        assert!(same.degenerate);
        assert_eq!(same.p, 0.5);

        let b_hi = SampleSummary::new(0.7, 0.0, 6).unwrap();
        let up = welch_p(&a, &b_hi).unwrap();
        assert!(up.degenerate);
        assert_eq!(up.p, 0.0);

        let down = welch_p(&b_hi, &a).unwrap();
        assert_eq!(down.p, 1.0);
    }

    #[test]
    fn summarize_matches_hand_values() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(s.n, 4);
        assert!(summarize(&[1.0]).is_err());
    }

    #[test]
    fn tiny_samples_are_rejected() {
        assert!(SampleSummary::new(0.0, 1.0, 1).is_err());
        assert!(SampleSummary::new(f64::NAN, 1.0, 3).is_err());
        assert!(SampleSummary::new(0.0, -0.1, 3).is_err());
    }
}
