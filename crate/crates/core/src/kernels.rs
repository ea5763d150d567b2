//! The built-in weakly stable kernels: symmetric stable laws, the Kendall
//! (Pólya-type) laws with characteristic function `(1 - |t|^alpha)_+`, and
//! the Kingman laws, i.e. one-dimensional marginals of the uniform law on a
//! sphere.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp1, StandardNormal};

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::quad;
use crate::special::{self, beta_reg, gamma, ln_gamma};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    /// Symmetric stable law with characteristic function `exp(-|t|^alpha)`,
    /// `0 < alpha <= 2`. The Gaussian is `alpha = 2`, i.e. `N(0, 2)`.
    Stable { alpha: f64 },
    /// Characteristic function `(1 - |t|^alpha)_+`, `0 < alpha <= 1`.
    Kendall { alpha: f64 },
    /// Density `c_s (1 - x^2)^{s - 1/2}` on `[-1, 1]`, `s > -1/2`.
    Kingman { s: f64 },
    /// First coordinate of a uniform point on the unit sphere of `R^n`;
    /// the same law as `Kingman { s: n/2 - 1 }`.
    Sphere { n: u32 },
}

/// Result of an absolute-moment query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AbsMoment {
    Finite(f64),
    Infinite,
}

impl AbsMoment {
    pub fn value(self) -> f64 {
        match self {
            AbsMoment::Finite(v) => v,
            AbsMoment::Infinite => f64::INFINITY,
        }
    }
}

type Rule = (Vec<f64>, Vec<f64>);

const RULE_STEP: usize = 16;
const CACHED_RULES: usize = 512;
const PAIR_TABLE_CELLS: usize = 4096;

/// Precomputed data for the Kingman family: Gauss rules for the weight
/// `(1 - x^2)^{s - 1/2}` and a table of the CDF in the angle `asin(x)`.
#[derive(Debug)]
struct KingmanTables {
    s: f64,
    ln_c: f64,
    rules: Vec<OnceLock<Arc<Rule>>>,
    cdf_theta: Vec<f64>,
}

impl KingmanTables {
    fn new(s: f64) -> Self {
        let ln_c = ln_gamma(s + 1.0) - 0.5 * PI.ln() - ln_gamma(s + 0.5);
        let m = PAIR_TABLE_CELLS;
        let h = PI / m as f64;
        let mut tables = KingmanTables { s, ln_c, rules: Vec::new(), cdf_theta: Vec::new() };
        tables.cdf_theta = (0..=m)
            .map(|j| {
                let x = (-FRAC_PI_2 + j as f64 * h).sin();
                let half = 0.5 * tables.tail(x.abs());
                if x >= 0.0 {
                    1.0 - half
                } else {
                    half
                }
            })
            .collect();
        tables.rules = (0..CACHED_RULES).map(|_| OnceLock::new()).collect();
        tables
    }

    fn density(&self, x: f64) -> f64 {
        let ax = x.abs();
        if ax > 1.0 {
            return 0.0;
        }
        let base = (1.0 - ax) * (1.0 + ax);
        if base == 0.0 {
            return match self.s.partial_cmp(&0.5) {
                Some(std::cmp::Ordering::Less) => f64::INFINITY,
                Some(std::cmp::Ordering::Equal) => self.ln_c.exp(),
                _ => 0.0,
            };
        }
        (self.ln_c + (self.s - 0.5) * base.ln()).exp()
    }

    /// `P(|X| > r)` through the regularized incomplete Beta function.
    fn tail(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 1.0;
        }
        if r >= 1.0 {
            return 0.0;
        }
        let one_minus = (1.0 - r) * (1.0 + r);
        beta_reg(self.s + 0.5, 0.5, one_minus)
    }

    /// `P(X <= x)`.
    fn cdf(&self, x: f64) -> f64 {
        if x <= -1.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        if self.s == 0.5 {
            return 0.5 * (1.0 + x);
        }
        if x.abs() > 0.9 {
            // Near the edges the density may be singular; go direct.
            let half = 0.5 * self.tail(x.abs());
            return if x >= 0.0 { 1.0 - half } else { half };
        }
        let m = PAIR_TABLE_CELLS;
        let h = PI / m as f64;
        let th = x.asin();
        let pos = (th + FRAC_PI_2) / h;
        let j = (pos.floor() as usize).min(m - 1);
        // Cubic Hermite interpolation using the exact derivative c cos^{2s}.
        let t = pos - j as f64;
        let a = -FRAC_PI_2 + j as f64 * h;
        let d0 = (self.ln_c + 2.0 * self.s * a.cos().ln()).exp() * h;
        let d1 = (self.ln_c + 2.0 * self.s * (a + h).cos().ln()).exp() * h;
        let (y0, y1) = (self.cdf_theta[j], self.cdf_theta[j + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * d0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * d1
    }

    fn rule_for(&self, t: f64) -> Arc<Rule> {
        let n = (0.75 * t.abs()).ceil() as usize + 24;
        let bucket = n.div_ceil(RULE_STEP);
        let n = bucket * RULE_STEP;
        if bucket < CACHED_RULES {
            self.rules[bucket].get_or_init(|| Arc::new(quad::gauss_gegenbauer(n, self.s))).clone()
        } else {
            Arc::new(quad::gauss_gegenbauer(n, self.s))
        }
    }

    fn cf(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 1.0;
        }
        let rule = self.rule_for(t);
        let v: f64 = rule.0.iter().zip(&rule.1).map(|(x, w)| w * (t * x).cos()).sum();
        v.clamp(-1.0, 1.0)
    }
}

/// A weakly stable kernel together with the numerical settings used by
/// every operation that involves it.
#[derive(Debug, Clone)]
pub struct Kernel {
    kind: KernelKind,
    tol: Tolerances,
    kingman: Option<Arc<KingmanTables>>,
}

impl Kernel {
    pub fn new(kind: KernelKind) -> Result<Self> {
        Self::with_tolerances(kind, Tolerances::default())
    }

    pub fn with_tolerances(kind: KernelKind, tol: Tolerances) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        match kind {
            KernelKind::Stable { alpha } if !(alpha > 0.0 && alpha <= 2.0) => {
                return bad(format!("stable index must lie in (0, 2], got {alpha}"))
            }
            KernelKind::Kendall { alpha } if !(alpha > 0.0 && alpha <= 1.0) => {
                return bad(format!("kendall index must lie in (0, 1], got {alpha}"))
            }
            KernelKind::Kingman { s } if !(s > -0.5 && s.is_finite()) => {
                return bad(format!("kingman index must exceed -1/2, got {s}"))
            }
            KernelKind::Sphere { n } if n < 2 => return bad(format!("sphere dimension must be at least 2, got {n}")),
            _ => {}
        }
        let kingman = match kind {
            KernelKind::Kingman { s } => Some(Arc::new(KingmanTables::new(s))),
            KernelKind::Sphere { n } => Some(Arc::new(KingmanTables::new(n as f64 / 2.0 - 1.0))),
            _ => None,
        };
        Ok(Kernel { kind, tol, kingman })
    }

    pub fn stable(alpha: f64) -> Result<Self> {
        Self::new(KernelKind::Stable { alpha })
    }

    pub fn gaussian() -> Self {
        Self::stable(2.0).expect("valid index")
    }

    pub fn kendall(alpha: f64) -> Result<Self> {
        Self::new(KernelKind::Kendall { alpha })
    }

    pub fn kingman(s: f64) -> Result<Self> {
        Self::new(KernelKind::Kingman { s })
    }

    pub fn sphere(n: u32) -> Result<Self> {
        Self::new(KernelKind::Sphere { n })
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    /// Same kernel with different numerical settings.
    pub fn retuned(&self, tol: Tolerances) -> Self {
        Kernel { kind: self.kind, tol, kingman: self.kingman.clone() }
    }

    /// Kingman index `s` for the Kingman and sphere kernels.
    pub fn kingman_index(&self) -> Option<f64> {
        self.kingman.as_ref().map(|k| k.s)
    }

    /// Power-axis exponent: `alpha` for stable and Kendall kernels.
    pub fn alpha(&self) -> Option<f64> {
        match self.kind {
            KernelKind::Stable { alpha } | KernelKind::Kendall { alpha } => Some(alpha),
            _ => None,
        }
    }

    /// The characteristic exponent kappa: the supremum of `p <= 2` such that
    /// the kernel has a finite absolute moment of every order below `p`.
    pub fn kappa(&self) -> f64 {
        match self.kind {
            KernelKind::Stable { alpha } | KernelKind::Kendall { alpha } => alpha,
            KernelKind::Kingman { .. } | KernelKind::Sphere { .. } => 2.0,
        }
    }

    pub fn cf(&self, t: f64) -> f64 {
        let at = t.abs();
        match self.kind {
            KernelKind::Stable { alpha } => {
                if alpha == 2.0 {
                    (-at * at).exp()
                } else if alpha == 1.0 {
                    (-at).exp()
                } else {
                    (-at.powf(alpha)).exp()
                }
            }
            KernelKind::Kendall { alpha } => {
                if at >= 1.0 {
                    0.0
                } else if alpha == 1.0 {
                    1.0 - at
                } else {
                    1.0 - at.powf(alpha)
                }
            }
            KernelKind::Kingman { .. } | KernelKind::Sphere { .. } => {
                self.kingman.as_ref().expect("tables built for kingman kinds").cf(at)
            }
        }
    }

    /// `1 - cf(t)` computed without cancellation for small `t`.
    pub fn one_minus_cf(&self, t: f64) -> f64 {
        let at = t.abs();
        match self.kind {
            KernelKind::Stable { alpha } => -(-at.powf(alpha)).exp_m1(),
            KernelKind::Kendall { alpha } => at.powf(alpha).min(1.0),
            _ => {
                if at < 1e-3 {
                    // Series 1 - cf(t) = t^2 E[X^2]/2 - t^4 E[X^4]/24 + ...
                    let s = self.kingman_index().expect("kingman kind");
                    let m2 = 1.0 / (2.0 * (s + 1.0));
                    let m4 = 3.0 / (4.0 * (s + 1.0) * (s + 2.0));
                    let t2 = at * at;
                    t2 * m2 / 2.0 - t2 * t2 * m4 / 24.0
                } else {
                    1.0 - self.cf(at)
                }
            }
        }
    }

    pub fn density(&self, x: f64) -> Result<f64> {
        let ax = x.abs();
        match self.kind {
            KernelKind::Stable { alpha } => {
                if alpha == 2.0 {
                    Ok((-ax * ax / 4.0).exp() / (2.0 * PI.sqrt()))
                } else if alpha == 1.0 {
                    Ok(1.0 / (PI * (1.0 + ax * ax)))
                } else if ax == 0.0 {
                    Ok(gamma(1.0 + 1.0 / alpha) / PI)
                } else {
                    special::stable_density(alpha, ax)
                        .map_err(|e| Error::Unavailable(format!("stable density at {x}: {e}")))
                }
            }
            KernelKind::Kendall { alpha } => {
                if ax == 0.0 {
                    return Ok(alpha / ((alpha + 1.0) * PI));
                }
                // (1/pi) int_0^1 (1 - t^a) cos(tx) dt, integrated by parts.
                let sm = special::sine_moment(alpha, ax)?;
                Ok(alpha / PI * (-(1.0 + alpha) * ax.ln()).exp() * sm)
            }
            KernelKind::Kingman { .. } | KernelKind::Sphere { .. } => {
                Ok(self.kingman.as_ref().expect("kingman kind").density(x))
            }
        }
    }

    /// `P(|X| > r)`.
    pub fn tail(&self, r: f64) -> Result<f64> {
        if r <= 0.0 {
            return Ok(1.0);
        }
        match self.kind {
            KernelKind::Stable { alpha } => {
                if alpha == 2.0 {
                    Ok(special::erfc(r / 2.0))
                } else if alpha == 1.0 {
                    Ok(2.0 / PI * (1.0 / r).atan())
                } else {
                    Ok((2.0 * special::stable_upper(alpha, r)?).clamp(0.0, 1.0))
                }
            }
            KernelKind::Kendall { alpha } => {
                // 1 - (2/pi) [Si(r) - r^{-a} S_a(r)]
                let si_c = special::sine_integral_complement(r)?;
                let sm = special::sine_moment(alpha, r)?;
                let v = 2.0 / PI * (si_c + (-alpha * r.ln()).exp() * sm);
                Ok(v.clamp(0.0, 1.0))
            }
            KernelKind::Kingman { .. } | KernelKind::Sphere { .. } => {
                Ok(self.kingman.as_ref().expect("kingman kind").tail(r))
            }
        }
    }

    /// Density of the Kingman family on `[-1, 1]`.
    pub(crate) fn kingman_density(&self, x: f64) -> f64 {
        self.kingman.as_ref().expect("kingman kind").density(x)
    }

    /// `P(X <= x)` for the Kingman family; used by spherical convolution.
    pub(crate) fn kingman_cdf(&self, x: f64) -> f64 {
        self.kingman.as_ref().expect("kingman kind").cdf(x)
    }

    /// `E|X|^p` by quadrature, or `Infinite` when `p >= kappa < 2`.
    pub fn abs_moment(&self, p: f64) -> Result<AbsMoment> {
        if !(p > 0.0) {
            return Err(Error::InvalidInput(format!("moment order must be positive, got {p}")));
        }
        let rel = self.tol.quad_rel;
        match self.kind {
            KernelKind::Stable { alpha: 2.0 } => {
                let v = quad::to_infinity(|x| x.powf(p) * self.density(x).unwrap_or(0.0), 0.0, rel)?;
                Ok(AbsMoment::Finite(2.0 * v))
            }
            KernelKind::Stable { alpha } | KernelKind::Kendall { alpha } => {
                if p >= alpha {
                    return Ok(AbsMoment::Infinite);
                }
                // E|X|^p = (2/pi) Gamma(p+1) sin(p pi / 2) int_0^inf (1 - cf(t)) t^{-1-p} dt
                let g = |t: f64| {
                    let ta = t.powf(alpha);
                    if ta < 1e-8 {
                        // 1 - cf(t) = t^a (1 - t^a / 2 + ...) for the stable kind,
                        // exactly t^a for the Kendall kind.
                        let corr = if matches!(self.kind, KernelKind::Stable { .. }) { 1.0 - 0.5 * ta } else { 1.0 };
                        t.powf(alpha - 1.0 - p) * corr
                    } else {
                        self.one_minus_cf(t) * t.powf(-1.0 - p)
                    }
                };
                let near = quad::tanh_sinh(|t, _, _| g(t), 0.0, 1.0, rel)?;
                let far = quad::to_infinity(g, 1.0, rel)?;
                let c = 2.0 / PI * gamma(p + 1.0) * (p * FRAC_PI_2).sin();
                Ok(AbsMoment::Finite(c * (near + far)))
            }
            KernelKind::Kingman { .. } | KernelKind::Sphere { .. } => {
                let k = self.kingman.as_ref().expect("kingman kind");
                let s = k.s;
                // Endpoint-adapted rule: the distance 1 - x is passed in exactly.
                let v = quad::tanh_sinh(
                    |x, _, one_minus_x| {
                        let base = one_minus_x * (1.0 + x);
                        (k.ln_c + p * x.ln() + (s - 0.5) * base.ln()).exp()
                    },
                    0.0,
                    1.0,
                    rel.min(1e-13),
                )?;
                Ok(AbsMoment::Finite(2.0 * v))
            }
        }
    }

    /// One draw from the kernel.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            KernelKind::Stable { alpha } => sample_symmetric_stable(alpha, rng),
            KernelKind::Kendall { alpha } => sample_kendall(alpha, rng),
            KernelKind::Kingman { s } => sample_kingman(s, rng),
            KernelKind::Sphere { n } => {
                let mut first = 0.0;
                let mut norm2 = 0.0;
                for i in 0..n {
                    let z: f64 = StandardNormal.sample(rng);
                    if i == 0 {
                        first = z;
                    }
                    norm2 += z * z;
                }
                first / norm2.sqrt()
            }
        }
    }
}

impl PartialEq for Kernel {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.tol == other.tol
    }
}

/// Chambers–Mallows–Stuck draw from the law with cf `exp(-|t|^alpha)`.
pub fn sample_symmetric_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let v = PI * (rng.random::<f64>() - 0.5);
    if alpha == 1.0 {
        return v.tan();
    }
    let w: f64 = Exp1.sample(rng);
    (alpha * v).sin() / v.cos().powf(1.0 / alpha) * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
}

/// Draw from the Fejér density `(1 - cos x) / (pi x^2)` by rejection from
/// the envelope `min(1/(2 pi), 2/(pi x^2))` (acceptance rate `pi/4`).
fn sample_fejer<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let (x, env) = if rng.random::<bool>() {
            let x = 4.0 * rng.random::<f64>() - 2.0;
            (x, 1.0 / (2.0 * PI))
        } else {
            let u: f64 = 1.0 - rng.random::<f64>();
            let x = 2.0 / u;
            let x = if rng.random::<bool>() { x } else { -x };
            (x, 2.0 / (PI * x * x))
        };
        let h = (0.5 * x).sin();
        let f = if x == 0.0 { 1.0 / (2.0 * PI) } else { 2.0 * h * h / (PI * x * x) };
        if rng.random::<f64>() * env <= f {
            return x;
        }
    }
}

/// The Kendall law is a scale mixture of Fejér laws: `(1 - |t|^a)_+` is a
/// mixture of triangles `(1 - |t|/s)_+` with an atom `a` at `s = 1` and
/// density `a (1 - a) s^{a-1}` on `(0, 1)`. A draw is `W / S`.
fn sample_kendall<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let w = sample_fejer(rng);
    if alpha == 1.0 || rng.random::<f64>() < alpha {
        return w;
    }
    let u: f64 = 1.0 - rng.random::<f64>();
    w / u.powf(1.0 / alpha)
}

fn sample_kingman<R: Rng + ?Sized>(s: f64, rng: &mut R) -> f64 {
    let b = Beta::new(0.5, s + 0.5).expect("valid Beta parameters");
    let x2: f64 = b.sample(rng);
    let x = x2.sqrt();
    if rng.random::<bool>() {
        x
    } else {
        -x
    }
}

/// Draw from the positive stable law with Laplace transform `exp(-u^r)`,
/// `0 < r < 1` (Kanter's representation).
pub fn sample_positive_stable<R: Rng + ?Sized>(r: f64, rng: &mut R) -> f64 {
    let phi = PI * (1.0 - rng.random::<f64>());
    let w: f64 = Exp1.sample(rng);
    (special::kanter_a(r, phi) / w).powf((1.0 - r) / r)
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            KernelKind::Stable { alpha } => write!(f, "stable:{alpha}"),
            KernelKind::Kendall { alpha } => write!(f, "kendall:{alpha}"),
            KernelKind::Kingman { s } => write!(f, "kingman:{s}"),
            KernelKind::Sphere { n } => write!(f, "sphere:{n}"),
        }
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let lower = spec.trim().to_ascii_lowercase();
        let (name, param) = match lower.split_once(':') {
            Some((n, p)) => (n.trim(), Some(p.trim())),
            None => (lower.as_str(), None),
        };
        let num = |p: Option<&str>| -> Result<f64> {
            let p = p.ok_or_else(|| Error::InvalidInput(format!("kernel '{spec}' needs a parameter")))?;
            p.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::InvalidInput(format!("bad kernel parameter '{p}'")))
        };
        match name {
            "gaussian" | "normal" if param.is_none() => Kernel::stable(2.0),
            "stable" => Kernel::stable(num(param)?),
            "kendall" => Kernel::kendall(num(param)?),
            "kingman" => Kernel::kingman(num(param)?),
            "sphere" => {
                let v = num(param)?;
                if v.fract() != 0.0 || v < 2.0 || v > u32::MAX as f64 {
                    return Err(Error::InvalidInput(format!("sphere dimension must be an integer >= 2, got {v}")));
                }
                Kernel::sphere(v as u32)
            }
            _ => Err(Error::UnsupportedKernel(format!("unknown kernel '{spec}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn parses_kernel_strings() {
        assert_eq!("Stable:1.0".parse::<Kernel>().unwrap().kind(), KernelKind::Stable { alpha: 1.0 });
        assert_eq!("GAUSSIAN".parse::<Kernel>().unwrap().kind(), KernelKind::Stable { alpha: 2.0 });
        assert_eq!("sphere:3".parse::<Kernel>().unwrap().kingman_index(), Some(0.5));
        assert!("sphere:2.5".parse::<Kernel>().is_err());
        assert!("kendall:1.5".parse::<Kernel>().is_err());
        assert!(matches!("cauchy:1".parse::<Kernel>(), Err(Error::UnsupportedKernel(_))));
    }

    #[test]
    fn closed_form_cf_values() {
        assert_eq!(Kernel::kendall(0.5).unwrap().cf(0.25), 0.5);
        assert!(close(Kernel::stable(1.0).unwrap().cf(1.0), (-1f64).exp(), 1e-16));
        assert_eq!(Kernel::kendall(0.3).unwrap().cf(-2.0), 0.0);
    }

    #[test]
    fn kingman_cf_matches_closed_forms() {
        let uniform = Kernel::kingman(0.5).unwrap();
        let s5 = Kernel::sphere(5).unwrap();
        for &t in &[1e-3f64, 0.5, 1.0, 7.3, 40.0, 333.0, 2500.0] {
            let sinc = t.sin() / t;
            assert!(close(uniform.cf(t), sinc, 1e-13), "t={t}");
            // sphere in R^5: 3 (sin t - t cos t) / t^3
            let exact = 3.0 * (t.sin() - t * t.cos()) / (t * t * t);
            if t > 0.1 {
                assert!(close(s5.cf(t), exact, 1e-13), "t={t}: {} vs {exact}", s5.cf(t));
            }
        }
        // J0 from the power series at moderate t, and a reference value at t = 50.
        let s0 = Kernel::kingman(0.0).unwrap();
        let t: f64 = 3.0;
        let mut term = 1.0;
        let mut j0 = 1.0;
        for k in 1..40 {
            term *= -(t * t) / (4.0 * (k * k) as f64);
            j0 += term;
        }
        assert!(close(s0.cf(t), j0, 1e-13));
        assert!(close(s0.cf(50.0), 0.055_812_327_669_251_86, 1e-13));
    }

    #[test]
    fn kingman_density_and_normalization() {
        assert!(close(Kernel::kingman(0.5).unwrap().density(0.0).unwrap(), 0.5, 1e-14));
        for &s in &[-0.4, 0.0, 0.5, 1.0, 3.0] {
            let k = Kernel::kingman(s).unwrap();
            assert_eq!(k.density(1.2).unwrap(), 0.0);
            let c = gamma(s + 1.0) / (PI.sqrt() * gamma(s + 0.5));
            let half = quad::tanh_sinh(|x, _, bx| c * (bx * (1.0 + x)).powf(s - 0.5), 0.0, 1.0, 1e-13).unwrap();
            assert!(close(k.density(0.3).unwrap(), c * 0.91f64.powf(s - 0.5), 1e-13));
            assert!(close(2.0 * half, 1.0, 1e-10), "s={s}: {}", 2.0 * half);
            assert_eq!(k.tail(1.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn kingman_cdf_table_matches_incomplete_beta() {
        for &s in &[-0.4, 0.0, 1.0, 3.0] {
            let k = Kernel::kingman(s).unwrap();
            for i in 0..=200 {
                let x = -1.0 + i as f64 / 100.0;
                let direct = if x >= 0.0 { 1.0 - 0.5 * k.tail(x).unwrap() } else { 0.5 * k.tail(-x).unwrap() };
                assert!(close(k.kingman_cdf(x), direct, 1e-11), "s={s} x={x} {:e}", k.kingman_cdf(x) - direct);
            }
        }
    }

    #[test]
    fn kingman_second_moment_is_beta_integral() {
        for &s in &[0.0, 0.5, 1.0, 3.0] {
            let m = Kernel::kingman(s).unwrap().abs_moment(2.0).unwrap().value();
            // Gamma(s+1) Gamma(3/2) / (sqrt(pi) Gamma(s+2)) = 1 / (2 (s + 1))
            let beta = gamma(s + 1.0) * gamma(1.5) / (PI.sqrt() * gamma(s + 2.0));
            assert!(close(m, beta, 1e-12), "s={s}: {m} vs {beta}");
        }
    }

    #[test]
    fn kendall_density_matches_cosine_quadrature() {
        for &alpha in &[0.3, 0.5, 1.0] {
            let k = Kernel::kendall(alpha).unwrap();
            for &x in &[0.0, 0.2, 1.0, 5.0, 25.0, 39.5, 41.0, 90.0] {
                let direct = quad::adaptive(|t: f64| (1.0 - t.powf(alpha)) * (t * x).cos(), 0.0, 1.0, 1e-14, 1e-18)
                    .unwrap()
                    / PI;
                let v = k.density(x).unwrap();
                assert!(close(v, direct, 1e-13), "alpha={alpha} x={x}: {v} vs {direct}");
            }
        }
        assert!(close(Kernel::kendall(1.0).unwrap().density(0.0).unwrap(), 1.0 / (2.0 * PI), 1e-16));
    }

    #[test]
    fn kendall_tail_matches_density_integral() {
        for &alpha in &[0.5, 1.0] {
            let k = Kernel::kendall(alpha).unwrap();
            for &r in &[0.5, 3.0, 30.0, 60.0] {
                // Integrate the density over (r, R) by pi-panels, then close with
                // the leading power tail, which the density follows beyond R.
                let big = 4000.0;
                let mut v = 0.0;
                let mut lo = r;
                while lo < big {
                    let hi = (lo + PI).min(big);
                    v += quad::adaptive(|x| k.density(x).unwrap(), lo, hi, 1e-13, 1e-18).unwrap();
                    lo = hi;
                }
                let c = gamma(alpha) * (PI * alpha / 2.0).sin() * alpha / PI;
                v += c * big.powf(-alpha) / alpha;
                let t = k.tail(r).unwrap();
                // The neglected oscillating remainder is O(big^-2).
                assert!(close(t, 2.0 * v, 1.0 / (big * big)), "alpha={alpha} r={r}: {t} vs {}", 2.0 * v);
            }
            // r^alpha G(r) approaches (2/pi) Gamma(alpha) sin(pi alpha / 2).
            let limit = 2.0 / PI * gamma(alpha) * (PI * alpha / 2.0).sin();
            let g = k.tail(1e6).unwrap() * 1e6f64.powf(alpha);
            assert!(close(g, limit, 1e-3 * limit));
        }
    }

    #[test]
    fn stable_tail_and_density_closed_forms() {
        let c = Kernel::stable(1.0).unwrap();
        assert!(close(c.tail(1.0).unwrap(), 0.5, 1e-15));
        let g = Kernel::gaussian();
        assert!(close(g.density(0.0).unwrap(), 1.0 / (2.0 * PI.sqrt()), 1e-15));
        let s = Kernel::stable(1.5).unwrap();
        assert!(close(s.tail(0.0).unwrap(), 1.0, 0.0));
        let mut prev = 1.0;
        for i in 1..40 {
            let t = s.tail(i as f64 * 0.5).unwrap();
            assert!(t <= prev);
            prev = t;
        }
    }

    #[test]
    fn stable_abs_moment_closed_form() {
        for &(alpha, p) in &[(1.5, 0.7), (0.8, 0.3), (1.0, 0.5)] {
            let k = Kernel::stable(alpha).unwrap();
            let m = k.abs_moment(p).unwrap().value();
            let exact =
                2f64.powf(p) * gamma((1.0 + p) / 2.0) * gamma(1.0 - p / alpha) / (PI.sqrt() * gamma(1.0 - p / 2.0));
            assert!(close(m, exact, 1e-9 * exact), "{alpha} {p}: {m} vs {exact}");
        }
        assert_eq!(Kernel::stable(1.2).unwrap().abs_moment(1.2).unwrap(), AbsMoment::Infinite);
        // N(0, 2) variance.
        assert!(close(Kernel::gaussian().abs_moment(2.0).unwrap().value(), 2.0, 1e-11));
    }

    #[test]
    fn kendall_abs_moment() {
        for &(alpha, p) in &[(0.5, 0.2), (1.0, 0.6)] {
            let m = Kernel::kendall(alpha).unwrap().abs_moment(p).unwrap().value();
            let exact = 2.0 / PI * gamma(p + 1.0) * (p * PI / 2.0).sin() * (1.0 / (alpha - p) + 1.0 / p);
            assert!(close(m, exact, 1e-10 * exact), "{m} vs {exact}");
        }
        assert_eq!(Kernel::kendall(0.5).unwrap().abs_moment(0.5).unwrap(), AbsMoment::Infinite);
    }

    fn empirical_cf(k: &Kernel, t: f64, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let c = (t * k.sample_one(&mut rng)).cos();
            sum += c;
            sum2 += c * c;
        }
        let mean = sum / n as f64;
        let sd = (sum2 / n as f64 - mean * mean).max(0.0).sqrt();
        (mean, sd / (n as f64).sqrt())
    }

    #[test]
    fn samplers_reproduce_characteristic_functions() {
        let kernels = [
            Kernel::stable(1.0).unwrap(),
            Kernel::stable(0.6).unwrap(),
            Kernel::gaussian(),
            Kernel::kendall(0.5).unwrap(),
            Kernel::kendall(1.0).unwrap(),
            Kernel::kingman(0.0).unwrap(),
            Kernel::sphere(4).unwrap(),
        ];
        for (i, k) in kernels.iter().enumerate() {
            for &t in &[0.3, 1.0, 2.5] {
                let (m, se) = empirical_cf(k, t, 200_000, 17 + i as u64);
                assert!(close(m, k.cf(t), 4.0 * se + 1e-4), "{k} t={t}: {m} vs {}", k.cf(t));
            }
        }
    }

    #[test]
    fn positive_stable_sampler_laplace_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = 0.4;
        let n = 200_000;
        let mean: f64 = (0..n).map(|_| (-sample_positive_stable(r, &mut rng)).exp()).sum::<f64>() / n as f64;
        assert!(close(mean, (-1f64).exp(), 4e-3));
    }
}
