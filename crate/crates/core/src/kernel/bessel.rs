//! Modified Bessel functions of the second kind for integer order.
//!
//! `K_0` and `K_1` come from the ascending series for `x <= 2` and from
//! Steed's continued fraction (CF2) above that; higher orders use the upward
//! recurrence `K_{n+1}(x) = K_{n-1}(x) + (2n/x) K_n(x)`, which is stable for `K`.

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const SERIES_SWITCH: f64 = 2.0;
const MAX_SERIES_TERMS: usize = 200;
const CF_MAX_ITER: usize = 10_000;

/// Below this argument `x^m K_n(x)` is evaluated from the ascending series
/// with the powers merged, so coincident points never form `0 * inf`.
pub const SMALL_ARGUMENT: f64 = 1e-4;

/// `K_nu(x)` for integer `nu >= 0` and `x > 0`.
pub fn bessel_k(nu: u32, x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("bessel_k requires a finite positive argument, got {x}")));
    }
    let (k0, k1) = if x <= SERIES_SWITCH { (series(0, 0, x), series(0, 1, x)) } else { steed_k01(x) };
    Ok(upward(nu, x, k0, k1))
}

fn upward(nu: u32, x: f64, k0: f64, k1: f64) -> f64 {
    match nu {
        0 => k0,
        1 => k1,
        _ => {
            let (mut prev, mut cur) = (k0, k1);
            for n in 1..nu {
                let next = prev + 2.0 * f64::from(n) / x * cur;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// `x^m K_n(x)` for `x >= 0`; requires `m >= n` and `m + n > 0` so that the
/// value is finite at the origin.
pub fn power_bessel_k(m: u32, n: u32, x: f64) -> Result<f64> {
    if m < n || m + n == 0 {
        return Err(Error::Domain(format!("x^{m} K_{n}(x) is unbounded at the origin")));
    }
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("argument must be finite and nonnegative, got {x}")));
    }
    if x < SMALL_ARGUMENT {
        Ok(series(m, n, x))
    } else {
        Ok(x.powi(m as i32) * bessel_k(n, x)?)
    }
}

/// Limit of `x^n K_n(x)` as `x -> 0`, i.e. `2^(n-1) (n-1)!` for `n >= 1`.
pub fn power_bessel_k_at_zero(n: u32) -> f64 {
    assert!(n >= 1, "x^0 K_0(x) diverges at zero");
    2f64.powi(n as i32 - 1) * factorial(n - 1)
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

fn digamma_int(j: u32) -> f64 {
    // psi(j + 1) = -gamma + H_j
    -EULER_GAMMA + (1..=j).map(|i| 1.0 / f64::from(i)).sum::<f64>()
}

/// Ascending series of `x^m K_n(x)` with merged powers of `x`.
fn series(m: u32, n: u32, x: f64) -> f64 {
    let q = 0.25 * x * x;
    let lead_exp = m as i32 - n as i32;
    let mut finite = 0.0;
    if n > 0 {
        let mut pow_q = 1.0;
        for k in 0..n {
            finite += factorial(n - k - 1) / factorial(k) * pow_q;
            pow_q *= -q;
        }
        finite *= 0.5 * 2f64.powi(n as i32) * x.powi(lead_exp);
    }
    if x == 0.0 {
        // every remaining term carries x^(m+n) with m + n > 0
        return finite;
    }
    let pre = x.powi((m + n) as i32) / 2f64.powi(n as i32);
    let ln_half = (0.5 * x).ln();
    let sign_n = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    let mut term = 1.0 / factorial(n);
    let mut sum = 0.0;
    for k in 0..MAX_SERIES_TERMS as u32 {
        let psi = digamma_int(k) + digamma_int(n + k);
        let contrib = term * (-sign_n * ln_half + sign_n * 0.5 * psi);
        sum += contrib;
        if contrib.abs() <= 1e-17 * sum.abs() && k > 2 {
            break;
        }
        term *= q / (f64::from(k + 1) * f64::from(n + k + 1));
    }
    finite + pre * sum
}

/// Steed's CF2 evaluation of `(K_0(x), K_1(x))`, accurate for `x >= 2`.
fn steed_k01(x: f64) -> (f64, f64) {
    let a1 = 0.25;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..CF_MAX_ITER {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < f64::EPSILON {
            break;
        }
    }
    let k0 = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp() / s;
    let k1 = k0 * (x + 0.5 - a1 * h) / x;
    (k0, k1)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt, trapezoid rule.
    fn integral_oracle(nu: u32, x: f64) -> f64 {
        let h: f64 = 1e-3;
        let mut sum = 0.5 * (-x).exp();
        let mut t = h;
        loop {
            let v = (-x * t.cosh() + f64::from(nu) * t).exp() * 0.5 + (-x * t.cosh() - f64::from(nu) * t).exp() * 0.5;
            sum += v;
            if x * t.cosh() > 800.0 {
                break;
            }
            t += h;
        }
        sum * h
    }

    #[test]
    fn k0_at_one_matches_reference() {
        let v = bessel_k(0, 1.0).unwrap();
        assert!((v - 0.421_024_438_240_708_3).abs() < 1e-12, "{v}");
    }

    #[test]
    fn recurrence_identity_at_one() {
        let direct = bessel_k(2, 1.0).unwrap();
        let via = bessel_k(0, 1.0).unwrap() + 2.0 * bessel_k(1, 1.0).unwrap();
        assert!((direct - via).abs() <= 1e-12 * direct.abs());
    }

    #[test]
    fn large_argument_is_positive_and_decreasing() {
        let a = bessel_k(3, 29.0).unwrap();
        let b = bessel_k(3, 30.0).unwrap();
        assert!(b > 0.0 && b < a);
    }

    #[test]
    fn nonpositive_argument_is_a_domain_error() {
        assert!(matches!(bessel_k(1, 0.0), Err(Error::Domain(_))));
        assert!(matches!(bessel_k(1, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn agrees_with_integral_representation() {
        for &x in &[0.05, 0.5, 1.0, 1.9, 2.0, 2.1, 5.0, 12.0, 30.0, 50.0] {
            for nu in [0u32, 1, 2, 3, 5, 8, 12] {
                let got = bessel_k(nu, x).unwrap();
                let want = integral_oracle(nu, x);
                let rel = ((got - want) / want).abs();
                assert!(rel < 1e-10, "nu={nu} x={x}: {got} vs {want} rel {rel}");
            }
        }
    }

    #[test]
    fn tiny_arguments_match_leading_asymptotics() {
        // K_n(x) ~ (n-1)! 2^(n-1) / x^n and K_0(x) ~ -ln(x/2) - gamma
        let x = 1e-6;
        let k0 = bessel_k(0, x).unwrap();
        let lead0 = -(0.5 * x).ln() - EULER_GAMMA;
        assert!(((k0 - lead0) / k0).abs() < 1e-10);
        for n in 1..=12u32 {
            let got = bessel_k(n, x).unwrap() * x.powi(n as i32);
            let lead = power_bessel_k_at_zero(n);
            assert!(((got - lead) / lead).abs() < 1e-9, "n={n}");
        }
    }

    #[test]
    fn recurrence_holds_across_orders() {
        for &x in &[0.1, 0.7, 3.0, 10.0, 30.0] {
            for nu in 1..=10u32 {
                let km = bessel_k(nu - 1, x).unwrap();
                let k = bessel_k(nu, x).unwrap();
                let kp = bessel_k(nu + 1, x).unwrap();
                let resid = kp - km - 2.0 * f64::from(nu) / x * k;
                assert!(resid.abs() <= 1e-10 * kp.abs(), "nu={nu} x={x}");
            }
        }
    }

    #[test]
    fn power_series_branch_is_continuous() {
        for (m, n) in [(3u32, 3u32), (3, 1), (2, 0), (1, 1), (4, 2)] {
            let below = series(m, n, SMALL_ARGUMENT * (1.0 - 1e-9));
            let above = (SMALL_ARGUMENT).powi(m as i32) * bessel_k(n, SMALL_ARGUMENT).unwrap();
            let scale = below.abs().max(1e-300);
            assert!(((below - above) / scale).abs() < 1e-8, "m={m} n={n}: {below} {above}");
        }
        assert_eq!(power_bessel_k(3, 3, 0.0).unwrap(), 8.0);
        assert_eq!(power_bessel_k(3, 1, 0.0).unwrap(), 0.0);
        assert!(power_bessel_k(0, 0, 0.5).is_err());
    }
}
