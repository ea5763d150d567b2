//! Numerical integration: adaptive Gauss–Kronrod, tanh-sinh for endpoint
//! singularities, fixed Gauss–Legendre panels and Gauss–Gegenbauer rules.

use std::collections::BinaryHeap;
use std::sync::OnceLock;

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_2,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_73,
    0.054_755_896_574_352,
    0.075_039_674_810_919_95,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_85,
    0.134_709_217_311_473_33,
    0.142_775_938_577_060_08,
    0.147_739_104_901_338_49,
    0.149_445_554_002_916_9,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_36,
    0.295_524_224_714_752_87,
];

/// 21-point Kronrod estimate and the difference to the embedded 10-point Gauss rule.
pub fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[10] * fc;
    let mut g = 0.0;
    for i in 0..10 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Adaptive Gauss–Kronrod on a finite interval, bisecting the worst segment
/// until the summed error estimate meets `rel_tol * |I| + abs_tol`.
pub fn adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (v, e) = gk21(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v, err: e });
    let mut total = v;
    let mut err = e;
    for _ in 0..4000 {
        if err <= rel_tol * total.abs() + abs_tol || !total.is_finite() {
            break;
        }
        let seg = heap.pop().expect("heap is never empty");
        let m = 0.5 * (seg.a + seg.b);
        if m <= seg.a || m >= seg.b {
            heap.push(seg);
            break;
        }
        let (v1, e1) = gk21(&f, seg.a, m);
        let (v2, e2) = gk21(&f, m, seg.b);
        total += v1 + v2 - seg.value;
        err += e1 + e2 - seg.err;
        heap.push(Segment { a: seg.a, b: m, value: v1, err: e1 });
        heap.push(Segment { a: m, b: seg.b, value: v2, err: e2 });
    }
    // Re-sum to shed accumulated rounding from the running updates.
    let total: f64 = heap.iter().map(|s| s.value).sum();
    let err: f64 = heap.iter().map(|s| s.err).sum();
    if !total.is_finite() {
        return Err(Error::NoConvergence("integrand is not finite".into()));
    }
    if err > 1e3 * (rel_tol * total.abs() + abs_tol) && err > 1e-6 * total.abs().max(1e-300) {
        return Err(Error::NoConvergence(format!(
            "adaptive quadrature on [{a}, {b}] stalled with error estimate {err:e}"
        )));
    }
    Ok(total)
}

/// Tanh-sinh quadrature on `[a, b]`. The integrand receives the point `x`
/// together with the distances `x - a` and `b - x`, computed without
/// cancellation, so integrable endpoint singularities can be evaluated
/// accurately.
pub fn tanh_sinh<F: Fn(f64, f64, f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let half = 0.5 * (b - a);
    let eval = |t: f64| -> Option<(f64, f64)> {
        // Returns (f(x(t)) * weight) contributions for +t and -t together.
        let u = std::f64::consts::FRAC_PI_2 * t.sinh();
        let cu = u.cosh();
        let w = std::f64::consts::FRAC_PI_2 * t.cosh() / (cu * cu);
        // 1 - tanh(u) = exp(-u) / cosh(u)
        let comp = (-u).exp() / cu;
        if comp * half == 0.0 || w == 0.0 {
            return None;
        }
        let dl = half * comp; // distance to the nearer endpoint
        let right = f(b - dl, 2.0 * half - dl, dl);
        let left = f(a + dl, dl, 2.0 * half - dl);
        Some((w, left + right))
    };
    let mut h = 1.0;
    let mut sum = std::f64::consts::FRAC_PI_2 * f(a + half, half, half);
    let step = |sum: &mut f64, h: f64, start: usize, stride: usize| {
        let mut k = start;
        loop {
            let t = k as f64 * h;
            if t > 7.0 {
                break;
            }
            match eval(t) {
                Some((w, v)) => *sum += w * v,
                None => break,
            }
            k += stride;
        }
    };
    step(&mut sum, h, 1, 1);
    let mut prev = sum * h * half;
    for _level in 0..12 {
        h *= 0.5;
        step(&mut sum, h, 1, 2);
        let cur = sum * h * half;
        if !cur.is_finite() {
            return Err(Error::NoConvergence("tanh-sinh integrand is not finite".into()));
        }
        if (cur - prev).abs() <= rel_tol * cur.abs() || (cur == 0.0 && prev == 0.0) {
            return Ok(cur);
        }
        prev = cur;
    }
    // Double-exponential convergence means the last level is already far
    // more accurate than the level-to-level difference suggests.
    Ok(prev)
}

/// Integral over `[a, inf)` with `a >= 0`, mapped onto `(0, 1]` by
/// `x = a + v / (1 - v)` and integrated by tanh-sinh so that power-law
/// tails become integrable endpoint singularities.
pub fn to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, rel_tol: f64) -> Result<f64> {
    tanh_sinh(
        |_v, v, one_minus_v| {
            let x = a + v / one_minus_v;
            if !x.is_finite() {
                return 0.0;
            }
            let jac = 1.0 / (one_minus_v * one_minus_v);
            let y = f(x) * jac;
            if y.is_finite() {
                y
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        rel_tol,
    )
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Eight-point Gauss–Legendre panel used for per-cell integrals of smooth data.
pub fn gl8() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(8))
}

/// Integrates `f` over `[a, b]` with one fixed Gauss–Legendre panel.
pub fn panel<F: Fn(f64) -> f64>(rule: &(Vec<f64>, Vec<f64>), f: F, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    rule.0.iter().zip(&rule.1).map(|(x, w)| w * f(c + h * x)).sum::<f64>() * h
}

/// Gauss rule for the probability density `c (1 - x^2)^(lambda - 1/2)` on
/// `[-1, 1]` (Golub–Welsch, implicit QL computing only the first row of the
/// eigenvector matrix).
pub fn gauss_gegenbauer(n: usize, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    for k in 1..n {
        let kf = k as f64;
        let b2 = if k == 1 {
            1.0 / (2.0 * (1.0 + lambda))
        } else {
            kf * (kf + 2.0 * lambda - 1.0) / (4.0 * (kf + lambda) * (kf + lambda - 1.0))
        };
        e[k - 1] = b2.sqrt();
    }
    let mut z = vec![0.0; n];
    z[0] = 1.0;
    tridiagonal_ql(&mut d, &mut e, &mut z);
    let mut pairs: Vec<(f64, f64)> = d.into_iter().zip(z.into_iter().map(|v| v * v)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Symmetrize to remove tiny asymmetries from rounding.
    let m = pairs.len();
    for i in 0..m / 2 {
        let x = 0.5 * (pairs[m - 1 - i].0 - pairs[i].0);
        let w = 0.5 * (pairs[m - 1 - i].1 + pairs[i].1);
        pairs[i] = (-x, w);
        pairs[m - 1 - i] = (x, w);
    }
    if m % 2 == 1 {
        pairs[m / 2].0 = 0.0;
    }
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    pairs.into_iter().map(|(x, w)| (x, w / total)).unzip()
}

/// Eigenvalues of a symmetric tridiagonal matrix (diagonal `d`, off-diagonal
/// `e[0..n-1]`) by implicit QL; `z` is rotated alongside and ends up holding
/// the first components of the eigenvectors.
fn tridiagonal_ql(d: &mut [f64], e: &mut [f64], z: &mut [f64]) {
    let n = d.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                break;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                f = z[i + 1];
                z[i + 1] = s * z[i] + c * f;
                z[i] = c * z[i] - s * f;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_integrates_smooth_functions() {
        let v = adaptive(|x: f64| x.exp(), 0.0, 1.0, 1e-13, 0.0).unwrap();
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-14);
        let v = adaptive(|x: f64| (10.0 * x).sin(), 0.0, 3.0, 1e-12, 0.0).unwrap();
        assert!((v - (1.0 - 30f64.cos()) / 10.0).abs() < 1e-12);
    }

    #[test]
    fn tanh_sinh_handles_endpoint_singularities() {
        // int_0^1 x^{-1/2} dx = 2, int_0^1 ln(1-x) dx = -1
        let v = tanh_sinh(|_, xa, _| xa.powf(-0.5), 0.0, 1.0, 1e-14).unwrap();
        assert!((v - 2.0).abs() < 1e-12, "{v}");
        let v = tanh_sinh(|_, _, bx| bx.ln(), 0.0, 1.0, 1e-14).unwrap();
        assert!((v + 1.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn infinite_range_power_tail() {
        // int_1^inf x^{-1.3} dx = 1/0.3
        let v = to_infinity(|x| x.powf(-1.3), 1.0, 1e-13).unwrap();
        assert!((v - 1.0 / 0.3).abs() < 1e-9, "{v}");
        let v = to_infinity(|x| (-x).exp(), 0.0, 1e-13).unwrap();
        assert!((v - 1.0).abs() < 1e-13);
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let rule = gauss_legendre(8);
        let v = panel(&rule, |x| x.powi(14), 0.0, 1.0);
        assert!((v - 1.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn gegenbauer_half_is_legendre() {
        let (x, w) = gauss_gegenbauer(10, 0.5);
        let (xl, wl) = gauss_legendre(10);
        for i in 0..10 {
            assert!((x[i] - xl[i]).abs() < 1e-14);
            assert!((w[i] - 0.5 * wl[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn gegenbauer_zero_is_chebyshev() {
        let n = 12;
        let (x, w) = gauss_gegenbauer(n, 0.0);
        for (i, (xi, wi)) in x.iter().zip(&w).enumerate() {
            let expect = -(std::f64::consts::PI * (2 * i + 1) as f64 / (2 * n) as f64).cos();
            assert!((xi - expect).abs() < 1e-14);
            assert!((wi - 1.0 / n as f64).abs() < 1e-14);
        }
    }
}
