//! Digamma and ball-volume helpers.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// `psi(x)` for real `x > 0`: shift upward with `psi(x) = psi(x + 1) - 1/x`
/// until `x >= 10`, then use the asymptotic series.
pub fn digamma_real(mut x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli terms B_2n / (2n x^2n), n = 1..6
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * 691.0 / 32760.0)))));
    acc + x.ln() - 0.5 * inv - series
}

/// `psi(k)` for a positive integer `k`.
pub fn digamma(k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("digamma is only defined here for k >= 1"));
    }
    Ok(digamma_real(k as f64))
}

/// `log V_D(r)` where `V_D(r) = pi^{D/2} r^D / Gamma(D/2 + 1)`.
pub fn log_ball_volume(dim: usize, r: f64) -> f64 {
    let d = dim as f64;
    0.5 * d * std::f64::consts::PI.ln() - ln_gamma(0.5 * d + 1.0) + d * r.ln()
}

/// `ceil(sqrt(n))`, computed in integers.
pub fn ceil_sqrt(n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    let mut r = (n as f64).sqrt() as usize;
    while r * r > n {
        r -= 1;
    }
    while r * r < n {
        r += 1;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    /// psi(1) = -gamma with gamma from the Euler-Maclaurin expansion of the
    /// harmonic numbers, evaluated independently of `digamma_real`.
    fn euler_gamma_oracle() -> f64 {
        let n = 1000.0_f64;
        let h: f64 = (1..=1000).rev().map(|j| 1.0 / j as f64).sum();
        h - n.ln() - 1.0 / (2.0 * n) + 1.0 / (12.0 * n * n) - 1.0 / (120.0 * n.powi(4))
    }

    #[test]
    fn digamma_at_one() {
        let g = euler_gamma_oracle();
        assert!((g - 0.577_215_664_901_532_9).abs() < 1e-13);
        let psi1 = digamma(1).unwrap();
        assert!((psi1 + g).abs() < 1e-12, "{psi1}");
        assert!((psi1 + 0.577_215_664_9).abs() < 1e-10);
    }

    #[test]
    fn digamma_recurrence() {
        let psi1 = digamma(1).unwrap();
        assert!((digamma(2).unwrap() - (psi1 + 1.0)).abs() < 1e-13);
        let h9: f64 = (1..=9).map(|j| 1.0 / j as f64).sum();
        assert!((digamma(10).unwrap() - (psi1 + h9)).abs() < 1e-13);
        for k in 1..400 {
            let lhs = digamma(k + 1).unwrap();
            let rhs = digamma(k).unwrap() + 1.0 / k as f64;
            assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
        }
        assert!(digamma(0).is_err());
    }

    #[test]
    fn digamma_agrees_with_statrs() {
        for x in [0.1, 0.5, 1.0, 2.5, 7.0, 33.3, 1e4] {
            let ours = digamma_real(x);
            let theirs = statrs::function::gamma::digamma(x);
            assert!((ours - theirs).abs() < 1e-10 * theirs.abs().max(1.0), "{x}");
        }
    }

    #[test]
    fn ball_volumes() {
        assert!((log_ball_volume(1, 0.5) - 0.0).abs() < 1e-14);
        assert!((log_ball_volume(2, 1.0) - std::f64::consts::PI.ln()).abs() < 1e-14);
        let v3 = 4.0 / 3.0 * std::f64::consts::PI * 8.0;
        assert!((log_ball_volume(3, 2.0) - v3.ln()).abs() < 1e-13);
        assert!(log_ball_volume(200, 1.0).is_finite());
    }

    #[test]
    fn integer_sqrt_ceiling() {
        assert_eq!(ceil_sqrt(1), 1);
        assert_eq!(ceil_sqrt(2), 2);
        assert_eq!(ceil_sqrt(4), 2);
        assert_eq!(ceil_sqrt(5), 3);
        assert_eq!(ceil_sqrt(20_000), 142);
        assert_eq!(ceil_sqrt(10_000), 100);
    }
}
