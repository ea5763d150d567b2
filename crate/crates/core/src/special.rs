//! Special functions used by the kernels: oscillatory sine moments, the
//! symmetric stable law via Zolotarev's integrals, and the one-sided
//! (positive) stable law used for subordination.

use std::f64::consts::{FRAC_PI_2, PI};

pub use statrs::function::beta::beta_reg;
pub use statrs::function::erf::erfc;
pub use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::Result;
use crate::quad;

/// Beyond this argument the asymptotic expansion of `int_x^inf u^b e^{iu} du`
/// is accurate to roughly machine precision.
const ASYMPTOTIC_FROM: f64 = 40.0;

/// `int_x^inf u^beta e^{iu} du` for `beta < 1` and large `x`, returned as
/// (real, imaginary) parts, from the asymptotic series
/// `e^{ix} sum_k i^{k+1} beta (beta-1) ... (beta-k+1) x^{beta-k}`.
fn oscillatory_tail(beta: f64, x: f64) -> (f64, f64) {
    let (mut re, mut im) = (0.0, 0.0);
    let mut coef = x.powf(beta);
    let mut prev_mag = f64::INFINITY;
    for k in 0..200 {
        let mag = coef.abs();
        if mag > prev_mag {
            break;
        }
        // i^{k+1}
        match (k + 1) % 4 {
            0 => re += coef,
            1 => im += coef,
            2 => re -= coef,
            _ => im -= coef,
        }
        if mag < 1e-18 * (re.abs() + im.abs()) {
            break;
        }
        prev_mag = mag;
        coef *= (beta - k as f64) / x;
    }
    let (s, c) = x.sin_cos();
    (c * re - s * im, s * re + c * im)
}

/// `int_x^inf u^beta sin(u) du` for `beta < 0` and `x >= 40`.
pub fn sine_tail(beta: f64, x: f64) -> f64 {
    oscillatory_tail(beta, x).1
}

/// `S_a(x) = int_0^x u^{a-1} sin(u) du` for `0 < a <= 1`, `x >= 0`.
pub fn sine_moment(a: f64, x: f64) -> Result<f64> {
    if x == 0.0 {
        return Ok(0.0);
    }
    if a == 1.0 {
        let h = (0.5 * x).sin();
        return Ok(2.0 * h * h);
    }
    if x > ASYMPTOTIC_FROM {
        return Ok(gamma(a) * (FRAC_PI_2 * a).sin() - sine_tail(a - 1.0, x));
    }
    let f = |u: f64| if u == 0.0 { 0.0 } else { u.powf(a - 1.0) * u.sin() };
    // Split at multiples of pi so each panel sees at most one sign change.
    let mut total = 0.0;
    let mut lo = 0.0;
    while lo < x {
        let hi = (lo + PI).min(x);
        total += quad::adaptive(f, lo, hi, 1e-14, 1e-17)?;
        lo = hi;
    }
    Ok(total)
}

/// `int_x^inf sin(u)/u du = pi/2 - Si(x)`.
pub fn sine_integral_complement(x: f64) -> Result<f64> {
    if x > ASYMPTOTIC_FROM {
        return Ok(sine_tail(-1.0, x));
    }
    let f = |u: f64| if u == 0.0 { 1.0 } else { u.sin() / u };
    let mut si = 0.0;
    let mut lo = 0.0;
    while lo < x {
        let hi = (lo + PI).min(x);
        si += quad::adaptive(f, lo, hi, 1e-15, 1e-17)?;
        lo = hi;
    }
    Ok(FRAC_PI_2 - si)
}

/// Logarithm of Zolotarev's function `V(theta)` for the symmetric stable law
/// with index `alpha != 1`.
fn zolotarev_ln_v(alpha: f64, theta: f64) -> f64 {
    let e = alpha / (alpha - 1.0);
    e * (theta.cos().ln() - (alpha * theta).sin().ln()) + ((alpha - 1.0) * theta).cos().ln() - theta.cos().ln()
}

/// Breakpoints in `[lo, hi]` where a monotone `ln g` crosses a few levels
/// around zero. Integrands such as `exp(-g)` and `g exp(-g)` change
/// character only near those crossings.
fn level_breaks<F: Fn(f64) -> f64>(ln_g: F, lo: f64, hi: f64) -> Vec<f64> {
    let mut pts = vec![lo, hi];
    let (a, b) = (lo + (hi - lo) * 1e-16 + 1e-300, hi * (1.0 - 1e-16));
    for level in [-6.0, -1.0, 0.0, 1.0, 4.0] {
        let (flo, fhi) = (ln_g(a) - level, ln_g(b) - level);
        if !(flo.is_finite() && fhi.is_finite()) || flo.signum() == fhi.signum() {
            continue;
        }
        let (mut l, mut h) = (a, b);
        for _ in 0..200 {
            let mid = 0.5 * (l + h);
            if mid <= l || mid >= h {
                break;
            }
            if (ln_g(mid) - level).signum() == flo.signum() {
                l = mid;
            } else {
                h = mid;
            }
        }
        pts.push(0.5 * (l + h));
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

fn split_integral<F: Fn(f64) -> f64>(pts: &[f64], f: F) -> Result<f64> {
    let mut total = 0.0;
    for w in pts.windows(2) {
        total += quad::adaptive(&f, w[0], w[1], 1e-13, 1e-300)?;
    }
    Ok(total)
}

fn zolotarev_integral<F: Fn(f64) -> f64>(alpha: f64, lx: f64, f: F) -> Result<f64> {
    let pts = level_breaks(|t| lx + zolotarev_ln_v(alpha, t), 0.0, FRAC_PI_2);
    split_integral(&pts, f)
}

/// `P(X > x)` for `x > 0` and `X` symmetric stable with characteristic
/// function `exp(-|t|^alpha)`, `alpha` in `(0, 2)`, `alpha != 1`.
pub fn stable_upper(alpha: f64, x: f64) -> Result<f64> {
    let lx = alpha / (alpha - 1.0) * x.ln();
    let g = |theta: f64| {
        if theta <= 0.0 || theta >= FRAC_PI_2 {
            return if (theta <= 0.0) == (alpha < 1.0) { 1.0 } else { 0.0 };
        }
        let ln_g = lx + zolotarev_ln_v(alpha, theta);
        (-ln_g.exp()).exp()
    };
    if alpha < 1.0 {
        // 1/2 - (1/pi) int exp(-g) = (1/pi) int (1 - exp(-g))
        let h = |theta: f64| {
            if theta <= 0.0 {
                return 0.0;
            }
            if theta >= FRAC_PI_2 {
                return 1.0;
            }
            -(-(lx + zolotarev_ln_v(alpha, theta)).exp()).exp_m1()
        };
        Ok(zolotarev_integral(alpha, lx, h)? / PI)
    } else {
        Ok(zolotarev_integral(alpha, lx, g)? / PI)
    }
}

/// Density at `x > 0` of the symmetric stable law with index `alpha != 1`.
pub fn stable_density(alpha: f64, x: f64) -> Result<f64> {
    let lx = alpha / (alpha - 1.0) * x.ln();
    let h = |theta: f64| {
        if theta <= 0.0 || theta >= FRAC_PI_2 {
            return 0.0;
        }
        let g = (lx + zolotarev_ln_v(alpha, theta)).exp();
        if g.is_finite() {
            g * (-g).exp()
        } else {
            0.0
        }
    };
    let integral = zolotarev_integral(alpha, lx, h)?;
    Ok(alpha / (PI * (alpha - 1.0).abs() * x) * integral)
}

/// `ln A(phi)` for the one-sided stable law with Laplace transform
/// `exp(-s^r)`, where `A(phi) = sin(r phi)^{r/(1-r)} sin((1-r) phi) / sin(phi)^{1/(1-r)}`.
fn kanter_ln_a(r: f64, phi: f64) -> f64 {
    let q = 1.0 - r;
    r / q * (r * phi).sin().ln() + (q * phi).sin().ln() - (phi.sin().ln()) / q
}

/// Kanter's function `A(phi)` (see `positive_stable_cdf`).
pub fn kanter_a(r: f64, phi: f64) -> f64 {
    if phi <= 0.0 {
        return r.powf(r / (1.0 - r)) * (1.0 - r);
    }
    kanter_ln_a(r, phi).exp()
}

/// CDF at `x` of the positive stable law with Laplace transform `exp(-s^r)`,
/// `0 < r < 1`.
pub fn positive_stable_cdf(r: f64, x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Ok(0.0);
    }
    let y = x.powf(-r / (1.0 - r));
    let g = |phi: f64| {
        let a = kanter_a(r, phi);
        (-a * y).exp()
    };
    let pts = level_breaks(|phi| kanter_a(r, phi).ln() + y.ln(), 0.0, PI);
    Ok(split_integral(&pts, g)? / PI)
}

/// Density at `x` of the positive stable law with Laplace transform `exp(-s^r)`.
pub fn positive_stable_density(r: f64, x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Ok(0.0);
    }
    let gam = r / (1.0 - r);
    let ln_y = -gam * x.ln();
    let h = |phi: f64| {
        let ln_a = if phi <= 0.0 { kanter_a(r, 0.0).ln() } else { kanter_ln_a(r, phi) };
        let ay = (ln_a + ln_y).exp();
        if ay.is_finite() {
            ay * (-ay).exp()
        } else {
            0.0
        }
    };
    // f(x) = (gamma / pi) x^{-1} int A y exp(-A y) dphi
    let pts = level_breaks(|phi| kanter_a(r, phi).ln() + ln_y, 0.0, PI);
    Ok(gam / (PI * x) * split_integral(&pts, h)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_moment_matches_quadrature_across_the_switch() {
        for &a in &[0.3, 0.5, 0.8] {
            for &x in &[0.5, 7.0, 39.0, 41.0, 120.0] {
                let direct = {
                    let f = |u: f64| if u == 0.0 { 0.0 } else { u.powf(a - 1.0) * u.sin() };
                    let mut t = 0.0;
                    let mut lo: f64 = 0.0;
                    while lo < x {
                        let hi = (lo + 1.0).min(x);
                        t += quad::adaptive(f, lo, hi, 1e-14, 1e-17).unwrap();
                        lo = hi;
                    }
                    t
                };
                let v = sine_moment(a, x).unwrap();
                assert!((v - direct).abs() < 1e-11, "a={a} x={x}: {v} vs {direct}");
            }
        }
    }

    #[test]
    fn sine_integral_known_values() {
        // Si(1) = 0.946083070367183..., Si(50) = 1.551617072485...
        let si1 = FRAC_PI_2 - sine_integral_complement(1.0).unwrap();
        assert!((si1 - 0.946_083_070_367_183).abs() < 1e-14);
        let si50 = FRAC_PI_2 - sine_integral_complement(50.0).unwrap();
        assert!((si50 - 1.551_617_072_485_936).abs() < 1e-12, "{si50}");
    }

    #[test]
    fn zolotarev_density_matches_series() {
        // Large-x convergent series for alpha < 1.
        let alpha: f64 = 0.5;
        let x: f64 = 5.0;
        let mut s = 0.0;
        let mut fact = 1.0;
        for k in 1..60 {
            fact *= k as f64;
            let kf = k as f64;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            s += sign * gamma(kf * alpha + 1.0) / fact * (kf * PI * alpha / 2.0).sin() * x.powf(-kf * alpha - 1.0);
        }
        let series = s / PI;
        let z = stable_density(alpha, x).unwrap();
        assert!((z - series).abs() < 1e-12, "{z} vs {series}");
        // Small-x convergent series for alpha > 1.
        let alpha: f64 = 1.5;
        let x: f64 = 0.7;
        let mut s = 0.0;
        let mut fact = 1.0;
        for k in 0..40 {
            if k > 0 {
                fact *= (2 * k - 1) as f64 * (2 * k) as f64;
            }
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            s += sign * gamma((2 * k + 1) as f64 / alpha) / fact * x.powi(2 * k);
        }
        let series = s / (PI * alpha);
        let z = stable_density(alpha, x).unwrap();
        assert!((z - series).abs() < 1e-12, "{z} vs {series}");
    }

    #[test]
    fn zolotarev_tail_integrates_density() {
        for &alpha in &[0.6, 1.4] {
            let x = 1.3;
            let tail = quad::to_infinity(|u| stable_density(alpha, u).unwrap(), x, 1e-11).unwrap();
            let z = stable_upper(alpha, x).unwrap();
            assert!((z - tail).abs() < 1e-9, "alpha={alpha}: {z} vs {tail}");
        }
    }

    #[test]
    fn positive_stable_half_is_levy() {
        // Laplace exp(-sqrt(s)) is the Levy law with scale 1/2.
        for &x in &[0.05, 0.3, 1.0, 10.0] {
            let cdf = positive_stable_cdf(0.5, x).unwrap();
            // statrs' erfc is accurate to about 1e-11 here.
            let exact = erfc(1.0 / (2.0 * x.sqrt()));
            assert!((cdf - exact).abs() < 1e-10, "x={x}: {cdf} vs {exact}");
            let dens = positive_stable_density(0.5, x).unwrap();
            let exact = (-1.0 / (4.0 * x)).exp() / (2.0 * PI.sqrt() * x.powf(1.5));
            assert!((dens - exact).abs() < 1e-11 * exact.max(1.0), "x={x}: {dens} vs {exact}");
        }
    }
}
