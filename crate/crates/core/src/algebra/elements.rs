//! Strictly stable elements of the algebra and subordination between them.

use rayon::prelude::*;
use statrs::function::gamma::{gamma, gamma_lr, ln_gamma};

use crate::algebra::grid::{materialize, DensityPart, Law, Side};
use crate::algebra::kendall;
use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelKind};
use crate::measures::{Atom, MixingMeasure};
use crate::special;

/// Table node spacing in `ln x` for the positive stable law.
const TABLE_STEP: f64 = 0.02;

/// Distribution function and `x f(x)` of the positive `r`-stable law with
/// Laplace transform `exp(-t^r)`, tabulated in `ln x` with a series for the
/// upper tail.
struct PositiveStable {
    r: f64,
    z0: f64,
    cdf: Vec<f64>,
    xf: Vec<f64>,
    /// Above this `ln x` the tail series is used.
    z_series: f64,
}

impl PositiveStable {
    fn new(r: f64) -> Result<Self> {
        // The tail series converges quickly once x^-r is below 1/4.
        let z_series = 4f64.ln() / r;
        // Below the table the distribution function is under 1e-300.
        let gam = r / (1.0 - r);
        let c = (1.0 - r) * r.powf(gam);
        let z0 = -((690.0 / c).ln() / gam);
        let n = ((z_series - z0) / TABLE_STEP).ceil() as usize + 3;
        let nodes: Vec<f64> = (0..n).map(|i| z0 + i as f64 * TABLE_STEP).collect();
        let vals: Vec<Result<(f64, f64)>> = nodes
            .par_iter()
            .map(|&z| {
                let x = z.exp();
                Ok((special::positive_stable_cdf(r, x)?, x * special::positive_stable_density(r, x)?))
            })
            .collect();
        let mut cdf = Vec::with_capacity(n);
        let mut xf = Vec::with_capacity(n);
        for v in vals {
            let (a, b) = v?;
            cdf.push(a);
            xf.push(b);
        }
        Ok(PositiveStable { r, z0, cdf, xf, z_series })
    }

    /// `(1 - F(x), x f(x))` from the convergent series in `x^-r`.
    fn tail_series(&self, x: f64) -> (f64, f64) {
        let r = self.r;
        let y = x.powf(-r);
        let (mut tail, mut dens) = (0.0, 0.0);
        let mut yk = 1.0;
        for k in 1..200 {
            let kf = k as f64;
            yk *= y;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            let s = (std::f64::consts::PI * kf * r).sin();
            let mag = yk * (ln_gamma(kf * r) - ln_gamma(kf + 1.0)).exp();
            let base = sign * s * mag;
            tail += base;
            dens += base * kf * r;
            if mag < 1e-18 * tail.abs() {
                break;
            }
        }
        (tail / std::f64::consts::PI, dens / std::f64::consts::PI)
    }

    fn eval(&self, x: f64) -> (f64, f64) {
        if x <= 0.0 {
            return (0.0, 0.0);
        }
        let z = x.ln();
        if z >= self.z_series {
            let (tail, xf) = self.tail_series(x);
            return (1.0 - tail, xf);
        }
        let t = (z - self.z0) / TABLE_STEP;
        if t < 0.0 {
            return (0.0, 0.0);
        }
        let i = (t.floor() as usize).min(self.cdf.len() - 2);
        let u = t - i as f64;
        // Cubic Hermite in ln x, using dF/d(ln x) = x f(x).
        let (f0, f1) = (self.cdf[i], self.cdf[i + 1]);
        let (m0, m1) = (self.xf[i] * TABLE_STEP, self.xf[i + 1] * TABLE_STEP);
        let (u2, u3) = (u * u, u * u * u);
        let cdf =
            (2.0 * u3 - 3.0 * u2 + 1.0) * f0 + (u3 - 2.0 * u2 + u) * m0 + (-2.0 * u3 + 3.0 * u2) * f1 + (u3 - u2) * m1;
        let xf = self.xf[i] + (self.xf[i + 1] - self.xf[i]) * u;
        (cdf.clamp(0.0, 1.0), xf.max(0.0))
    }
}

/// Law of `Theta * S^(1/p)` for atomic `Theta`.
struct ProductLaw<'a> {
    atoms: &'a [Atom],
    p: f64,
    table: &'a PositiveStable,
}

impl Law for ProductLaw<'_> {
    fn cdf(&self, y: f64) -> f64 {
        self.atoms
            .iter()
            .map(|a| {
                if a.x == 0.0 {
                    if y >= 0.0 {
                        a.w
                    } else {
                        0.0
                    }
                } else {
                    a.w * self.table.eval((y / a.x).powf(self.p)).0
                }
            })
            .sum()
    }

    fn density(&self, y: f64, _side: Side) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        self.atoms
            .iter()
            .filter(|a| a.x > 0.0)
            .map(|a| a.w * self.p * self.table.eval((y / a.x).powf(self.p)).1 / y)
            .sum()
    }

    fn atoms(&self) -> Vec<Atom> {
        let w0: f64 = self.atoms.iter().filter(|a| a.x == 0.0).map(|a| a.w).sum();
        vec![Atom { x: 0.0, w: w0 }]
    }

    fn breaks(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Law of `Theta * S^(1/p)` with `S` positive `(q/p)`-stable. A density part
/// of `Theta` is first quantized into atoms.
pub(crate) fn subordinate(kernel: &Kernel, lambda: &MixingMeasure, p: f64, q: f64) -> Result<MixingMeasure> {
    if !(q > 0.0 && q < p && p.is_finite()) {
        return Err(Error::InvalidExponents(format!("need 0 < q < p, got p = {p}, q = {q}")));
    }
    let tol = kernel.tolerances();
    let mut atoms: Vec<Atom> = lambda.atoms().to_vec();
    if let Some(d) = lambda.density() {
        atoms.extend(DensityPart::new(d).quantize(tol.sphere_atoms));
    }
    let table = PositiveStable::new(q / p)?;
    materialize(&ProductLaw { atoms: &atoms, p, table: &table }, tol.stable_grid, tol.tail_mass)
}

/// `sqrt(2) R` with `R` of density `r^(2s+1) e^(-r^2/2) / (2^s Gamma(s+1))`,
/// so that `(sqrt(2) R)^2 / 4` is Gamma distributed with shape `s + 1`.
struct ScaledChi {
    shape: f64,
    ln_norm: f64,
}

impl Law for ScaledChi {
    fn cdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        gamma_lr(self.shape, 0.25 * y * y)
    }

    fn density(&self, y: f64, _side: Side) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let v = 0.25 * y * y;
        ((self.shape - 1.0) * v.ln() - v - self.ln_norm).exp() * 0.5 * y
    }

    fn atoms(&self) -> Vec<Atom> {
        Vec::new()
    }

    fn breaks(&self) -> Vec<f64> {
        Vec::new()
    }
}

fn gaussian_element(kernel: &Kernel, s: f64) -> Result<MixingMeasure> {
    let shape = s + 1.0;
    let tol = kernel.tolerances();
    materialize(&ScaledChi { shape, ln_norm: gamma(shape).ln() }, tol.grid_points, tol.tail_mass)
}

pub(crate) fn stable_element(kernel: &Kernel, p: f64) -> Result<MixingMeasure> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::InvalidInput(format!("stability exponent must be positive, got {p}")));
    }
    let kappa = kernel.kappa();
    if p > kappa {
        return Err(Error::UnsupportedExponent { p, kappa });
    }
    match kernel.kind() {
        KernelKind::Kendall { alpha } => kendall::stable_element(kernel, alpha, p),
        KernelKind::Stable { alpha } => {
            if p == alpha {
                Ok(MixingMeasure::delta(1.0))
            } else {
                subordinate(kernel, &MixingMeasure::delta(1.0), alpha, p)
            }
        }
        KernelKind::Kingman { .. } | KernelKind::Sphere { .. } => {
            let s = kernel.kingman_index().expect("kingman kernel");
            let base = gaussian_element(kernel, s)?;
            if p == 2.0 {
                Ok(base)
            } else {
                subordinate(kernel, &base, 2.0, p)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positive_stable_table_matches_closed_form_at_one_half() {
        // r = 1/2: F(x) = erfc(1 / (2 sqrt(x))).
        let t = PositiveStable::new(0.5).unwrap();
        for x in [0.01, 0.1, 0.7, 3.0, 40.0, 1e3, 1e6] {
            let want = special::erfc(0.5 / f64::sqrt(x));
            assert!((t.eval(x).0 - want).abs() < 1e-9, "x {x}: {} vs {want}", t.eval(x).0);
        }
    }

    #[test]
    fn subordinated_atom_has_stable_cf() {
        let k = Kernel::stable(1.0).unwrap();
        let m = subordinate(&k, &MixingMeasure::delta(1.0), 1.0, 0.5).unwrap();
        for t in [0.01, 0.3, 1.0, 4.0, 10.0] {
            let want = (-f64::sqrt(t)).exp();
            assert!((m.mixture_cf(&k, t) - want).abs() < 1e-6, "t {t}");
        }
    }

    #[test]
    fn kingman_gaussian_element() {
        for s in [0.5, 1.0, 3.0] {
            let k = Kernel::kingman(s).unwrap();
            let m = stable_element(&k, 2.0).unwrap();
            for t in [0.1, 0.7, 1.5, 3.0] {
                assert!((m.mixture_cf(&k, t) - (-t * t).exp()).abs() < 1e-6, "s {s} t {t}");
            }
        }
    }

    #[test]
    fn exponent_above_kappa_is_rejected() {
        for k in [Kernel::kendall(0.5).unwrap(), Kernel::sphere(3).unwrap(), Kernel::gaussian()] {
            assert!(matches!(stable_element(&k, 3.0), Err(Error::UnsupportedExponent { .. })));
        }
        assert!(matches!(stable_element(&Kernel::kendall(0.5).unwrap(), 0.6), Err(Error::UnsupportedExponent { .. })));
    }

    #[test]
    fn equal_exponents_are_invalid() {
        let k = Kernel::stable(1.0).unwrap();
        assert!(matches!(subordinate(&k, &MixingMeasure::delta(1.0), 1.0, 1.0), Err(Error::InvalidExponents(_))));
    }
}
