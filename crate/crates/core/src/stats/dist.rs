//! Tail probabilities for the F, Student t, normal and Kolmogorov
//! distributions.
//!
//! F and t tails go through the regularized incomplete beta function
//! (continued-fraction evaluation from `statrs`).

use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;

/// `P(F > f)` for `F ~ F(d1, d2)`.
pub fn f_upper_tail(f: f64, d1: f64, d2: f64) -> f64 {
    if f.is_nan() {
        return f64::NAN;
    }
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    beta_reg(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f)).clamp(0.0, 1.0)
}

/// Two-sided `P(|T| > |t|)` for `T ~ t(df)`.
pub fn t_two_tailed(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Kolmogorov survival function `Q(λ) = P(K > λ)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-theta form converges fast for small λ.
        let pi2 = std::f64::consts::PI.powi(2);
        let s: f64 = (1..=20)
            .map(|k| {
                let odd = (2 * k - 1) as f64;
                (-(odd * odd) * pi2 / (8.0 * lambda * lambda)).exp()
            })
            .sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let k = k as f64;
                let sign = if k as i64 % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * k * k * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson integral of the t density over [|t|, ∞) via the
    /// substitution u = 1/(1+x), doubled for two tails.
    fn t_tail_quadrature(t: f64, df: f64) -> f64 {
        let ln_c = statrs::function::gamma::ln_gamma((df + 1.0) / 2.0)
            - statrs::function::gamma::ln_gamma(df / 2.0)
            - 0.5 * (df * std::f64::consts::PI).ln();
        let density = |x: f64| (ln_c - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
        // x = |t| + s/(1-s), s in [0,1)
        let g = |s: f64| {
            if s >= 1.0 {
                return 0.0;
            }
            let x = t.abs() + s / (1.0 - s);
            density(x) / (1.0 - s).powi(2)
        };
        let n = 200_000;
        let h = 1.0 / n as f64;
        let mut acc = g(0.0) + g(1.0);
        for i in 1..n {
            acc += g(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        2.0 * acc * h / 3.0
    }

    #[test]
    fn t_tail_matches_quadrature() {
        for &(t, df) in &[(0.3, 5.0), (1.22, 15.0), (-3.66, 20.0), (2.0, 60.0)] {
            let p = t_two_tailed(t, df);
            let q = t_tail_quadrature(t, df);
            assert!((p - q).abs() < 1e-8, "t={t} df={df}: {p} vs {q}");
        }
    }

    #[test]
    fn f_tail_reduces_to_t_for_one_numerator_df() {
        for &(t, df) in &[(0.5, 3.0), (1.7, 12.0), (4.1, 40.0)] {
            let a = f_upper_tail(t * t, 1.0, df);
            let b = t_two_tailed(t, df);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn f_tail_known_value() {
        // F(2, 2) has survival 1 / (1 + f)
        for &f in &[0.1, 1.0, 3.0, 19.0] {
            assert!((f_upper_tail(f, 2.0, 2.0) - 1.0 / (1.0 + f)).abs() < 1e-12);
        }
        assert_eq!(f_upper_tail(0.0, 3.0, 60.0), 1.0);
        assert_eq!(f_upper_tail(f64::INFINITY, 3.0, 60.0), 0.0);
    }

    #[test]
    fn kolmogorov_branches_agree() {
        // both series are valid around the switch point
        let lambda: f64 = 1.18;
        let pi2 = std::f64::consts::PI.powi(2);
        let small: f64 = 1.0
            - (2.0 * std::f64::consts::PI).sqrt() / lambda
                * (1..=20)
                    .map(|k| {
                        let o = (2 * k - 1) as f64;
                        (-(o * o) * pi2 / (8.0 * lambda * lambda)).exp()
                    })
                    .sum::<f64>();
        assert!((small - kolmogorov_q(lambda)).abs() < 1e-12);
        assert!((kolmogorov_q(1.3580986) - 0.05).abs() < 1e-5);
        assert_eq!(kolmogorov_q(0.0), 1.0);
    }

    #[test]
    fn normal_cdf_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        let got = normal_cdf(1.959963984540054);
        assert!((got - 0.975).abs() < 1e-10, "{got}");
    }
}
