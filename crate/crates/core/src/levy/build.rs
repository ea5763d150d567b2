//! Construction of the mixing measure with a prescribed `(A, nu)`.

use crate::algebra::grid::Side;
use crate::algebra::invert::invert_stable;
use crate::algebra::kendall::{self, Point, Source};
use crate::algebra::{stable, weak_convolve};
use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelKind};
use crate::levy::{check_levy_integrability, lk_cf_unchecked, LevyDensity, LevyTriple, RadialLevyMeasure};
use crate::measures::{Atom, MixingMeasure};
use crate::quad;

/// Largest truncation level tried, as a power of two.
const MAX_DOUBLINGS: i32 = 300;
/// Accepted change of the characteristic function from the truncation.
const TRUNCATION_DELTA: f64 = 1e-9;
/// Table nodes per octave for the density integrals.
const PER_OCTAVE: f64 = 16.0;
/// Density tables stop here; beyond it the declared tail exponent is used.
const TABLE_TOP: f64 = 1.6069380442589903e60; // 2^200

/// The measure whose mixture cf is `lk_cf(kernel, triple, .)`.
///
/// `nu` is cut to `[1/n, inf)` with `n` doubled from 2 until the cut part
/// changes the cf by less than `1e-9` on `t` in `[1e-2, 1e2]`. Kendall
/// kernels are then exact up to the grid. Stable kernels are exact for atomic
/// `nu` and go through numerical inversion otherwise. Kingman kernels are not
/// invertible; use [`lk_cf`](crate::levy::lk_cf) there.
pub fn levy_build(kernel: &Kernel, triple: &LevyTriple) -> Result<MixingMeasure> {
    check_levy_integrability(kernel, &triple.nu)?;
    let nu = &triple.nu;
    if triple.a == 0.0 && nu.atom_mass() == 0.0 && nu.density.is_none() {
        return Ok(MixingMeasure::delta(0.0));
    }
    let cut = truncation(kernel, nu)?;
    match kernel.kind() {
        KernelKind::Kendall { alpha } => {
            let src = LevyExp::new(alpha, triple.a, nu, cut);
            kendall::build(kernel, alpha, &src)
        }
        KernelKind::Stable { alpha } => {
            if nu.density.is_none() {
                let atoms: Vec<Atom> = nu.atoms.iter().copied().filter(|a| a.x >= cut && a.w > 0.0).collect();
                let mass: f64 = atoms.iter().map(|a| a.w).sum();
                let jumps = if mass > 0.0 {
                    let unit: Vec<Atom> = atoms.iter().map(|a| Atom { x: a.x, w: a.w / mass }).collect();
                    stable::compound_poisson_atomic(alpha, mass, &unit)?
                } else {
                    MixingMeasure::delta(0.0)
                };
                if triple.a == 0.0 {
                    return Ok(jumps);
                }
                return weak_convolve(kernel, &jumps, &MixingMeasure::delta(triple.a.powf(1.0 / alpha)));
            }
            let phi = |t: f64| lk_cf_unchecked(kernel, triple, t).unwrap_or(f64::NAN);
            invert_stable(kernel, alpha, &phi)
        }
        KernelKind::Kingman { .. } | KernelKind::Sphere { .. } => Err(Error::UnsupportedKernel(format!(
            "{kernel} cannot be inverted; only the characteristic function is available"
        ))),
    }
}

/// Smallest cut `1/n`, `n = 2, 4, ...`, whose discarded part of `nu` moves
/// the cf by less than [`TRUNCATION_DELTA`].
fn truncation(kernel: &Kernel, nu: &RadialLevyMeasure) -> Result<f64> {
    let ts: Vec<f64> = (0..=40).map(|i| 10f64.powf(-2.0 + 0.1 * i as f64)).collect();
    let rel = kernel.tolerances().quad_rel.max(1e-12);
    for k in 1..=MAX_DOUBLINGS {
        let cut = (-k as f64).exp2();
        let mut worst: f64 = 0.0;
        for &t in &ts {
            let rest = nu.integrate(|s| if s < cut { kernel.one_minus_cf(t * s) } else { 0.0 }, cut, rel)?;
            worst = worst.max(-(-rest).exp_m1());
            if worst >= TRUNCATION_DELTA {
                break;
            }
        }
        if worst < TRUNCATION_DELTA {
            return Ok(cut);
        }
    }
    Err(Error::NoConvergence(format!(
        "Lévy measure still moves the cf by more than {TRUNCATION_DELTA:e} below 2^-{MAX_DOUBLINGS}"
    )))
}

/// Cumulative tables of `nu([s, inf))` and `int_(cut, s) x^alpha nu(dx)` for
/// the density part.
struct DensityTables<'a> {
    alpha: f64,
    dens: &'a LevyDensity,
    tail_exponent: f64,
    nodes: Vec<f64>,
    upper: Vec<f64>,
    moment: Vec<f64>,
}

impl<'a> DensityTables<'a> {
    fn new(alpha: f64, dens: &'a LevyDensity, tail_exponent: f64, cut: f64) -> Option<Self> {
        let (slo, shi) = dens.support();
        let lo = slo.max(cut);
        let hi = shi.min(TABLE_TOP);
        if lo >= hi {
            return None;
        }
        let octaves = (hi / lo).log2();
        let n = ((octaves * PER_OCTAVE).ceil() as usize).max(1);
        let mut nodes: Vec<f64> = (0..=n).map(|i| lo * (hi / lo).powf(i as f64 / n as f64)).collect();
        nodes.extend(dens.breaks().into_iter().filter(|&b| b > lo && b < hi));
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        let rule = quad::gl8();
        let m = nodes.len();
        let mut upper = vec![0.0; m];
        upper[m - 1] = if shi > TABLE_TOP { hi * dens.eval(hi) / (tail_exponent - 1.0) } else { 0.0 };
        for i in (0..m - 1).rev() {
            upper[i] = upper[i + 1] + quad::panel(rule, |s| dens.eval(s), nodes[i], nodes[i + 1]);
        }
        let mut moment = vec![0.0; m];
        for i in 1..m {
            moment[i] = moment[i - 1] + quad::panel(rule, |s| s.powf(alpha) * dens.eval(s), nodes[i - 1], nodes[i]);
        }
        Some(DensityTables { alpha, dens, tail_exponent, nodes, upper, moment })
    }

    fn lo(&self) -> f64 {
        self.nodes[0]
    }

    fn hi(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// `(nu((s, inf)), int_(lo, s) x^alpha nu(dx), density at s)`.
    fn eval(&self, s: f64) -> (f64, f64, f64) {
        let (lo, hi) = (self.lo(), self.hi());
        if s < lo {
            return (self.upper[0], 0.0, 0.0);
        }
        let last = self.nodes.len() - 1;
        if s >= hi {
            let f = self.dens.eval(s);
            let extra = if self.upper[last] > 0.0 { s * f / (self.tail_exponent - 1.0) } else { 0.0 };
            return (extra, self.moment[last], f);
        }
        let i = self.nodes.partition_point(|&x| x <= s) - 1;
        let (a, b) = (self.nodes[i], self.nodes[i + 1]);
        let rule = quad::gl8();
        let up = self.upper[i + 1] + quad::panel(rule, |x| self.dens.eval(x), s, b);
        let mo = self.moment[i] + quad::panel(rule, |x| x.powf(self.alpha) * self.dens.eval(x), a, s);
        (up, mo, self.dens.eval(s))
    }
}

/// Kendall transform of the representation with `nu` cut at `cut`:
/// `H(u) = exp(-A/u - nu((s, inf)) - M(s)/u)` with `u = s^alpha` and
/// `M(s) = int_(cut, s] x^alpha nu(dx)`. Then `F - H = H K / u` and the
/// density of `s^alpha` is `H (K^2 / u^3 + g)`, where `K = A + M` and `g` is
/// the density of `nu` in the variable `u`.
struct LevyExp<'a> {
    alpha: f64,
    a: f64,
    atom_x: Vec<f64>,
    /// Cumulative weights and `alpha`-moments of the atoms, with a leading 0.
    atom_w: Vec<f64>,
    atom_m: Vec<f64>,
    tables: Option<DensityTables<'a>>,
    cut: f64,
}

impl<'a> LevyExp<'a> {
    fn new(alpha: f64, a: f64, nu: &'a RadialLevyMeasure, cut: f64) -> Self {
        let mut atoms: Vec<Atom> = nu.atoms.iter().copied().filter(|at| at.x >= cut && at.w > 0.0).collect();
        atoms.sort_by(|p, q| p.x.total_cmp(&q.x));
        let atom_x = atoms.iter().map(|at| at.x).collect();
        let mut atom_w = vec![0.0];
        let mut atom_m = vec![0.0];
        for at in &atoms {
            atom_w.push(atom_w.last().unwrap() + at.w);
            atom_m.push(atom_m.last().unwrap() + at.w * at.x.powf(alpha));
        }
        let tables = nu.density.as_ref().and_then(|d| DensityTables::new(alpha, d, nu.tail_exponent, cut));
        LevyExp { alpha, a, atom_x, atom_w, atom_m, tables, cut }
    }

    fn total_mass(&self) -> f64 {
        self.atom_w.last().unwrap() + self.tables.as_ref().map_or(0.0, |t| t.upper[0])
    }
}

impl Source for LevyExp<'_> {
    fn eval(&self, s: f64, side: Side) -> Point {
        // Atoms at s count toward M on the right and toward the tail on the left.
        let i = match side {
            Side::Right => self.atom_x.partition_point(|&x| x <= s),
            Side::Left => self.atom_x.partition_point(|&x| x < s),
        };
        let total_w = *self.atom_w.last().unwrap();
        let (mut tail, mut m) = (total_w - self.atom_w[i], self.atom_m[i]);
        let mut f = 0.0;
        if let Some(t) = &self.tables {
            let (up, mo, fs) = t.eval(s);
            tail += up;
            m += mo;
            f = fs;
        }
        let u = s.powf(self.alpha);
        let k = self.a + m;
        let h = (-k / u - tail).exp();
        if h == 0.0 {
            return Point { h: 0.0, d: 0.0, fu: 0.0 };
        }
        let g = f * s / (self.alpha * u);
        Point { h, d: h * k / u, fu: h * (k * k / (u * u * u) + g) }
    }

    fn mass_at_zero(&self) -> f64 {
        if self.a > 0.0 {
            0.0
        } else {
            (-self.total_mass()).exp()
        }
    }

    fn floor(&self) -> f64 {
        if self.a > 0.0 {
            return 0.0;
        }
        let first_atom = self.atom_x.first().copied().unwrap_or(f64::INFINITY);
        let first_dens = self.tables.as_ref().map_or(f64::INFINITY, |t| t.lo());
        first_atom.min(first_dens).max(self.cut)
    }

    fn atom_sites(&self) -> Vec<f64> {
        self.atom_x.clone()
    }

    fn breaks(&self) -> Vec<f64> {
        let mut b = self.atom_x.clone();
        if let Some(t) = &self.tables {
            b.push(t.lo());
            b.extend(t.dens.breaks().into_iter().filter(|&x| x >= t.lo()));
            if t.dens.support().1.is_finite() {
                b.push(t.hi());
            }
        }
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{compound_poisson, stable_element};
    use crate::measures::kolmogorov_distance;

    fn atomic(v: &[(f64, f64)]) -> RadialLevyMeasure {
        RadialLevyMeasure::atomic(v.iter().map(|&(x, w)| Atom { x, w }).collect()).unwrap()
    }

    #[test]
    fn single_atom_is_compound_poisson() {
        for k in [Kernel::kendall(0.5).unwrap(), Kernel::stable(1.0).unwrap()] {
            let triple = LevyTriple::new(0.0, atomic(&[(1.0, 1.5)])).unwrap();
            let built = levy_build(&k, &triple).unwrap();
            let want = compound_poisson(&k, 1.5, &MixingMeasure::delta(1.0)).unwrap();
            assert!(kolmogorov_distance(&built, &want) < 1e-9, "{k}");
        }
    }

    #[test]
    fn pure_drift_is_the_stable_element() {
        let k = Kernel::kendall(0.7).unwrap();
        let built = levy_build(&k, &LevyTriple::new(1.0, RadialLevyMeasure::zero()).unwrap()).unwrap();
        let want = stable_element(&k, 0.7).unwrap();
        assert!(kolmogorov_distance(&built, &want) < 1e-8);
    }

    #[test]
    fn power_density_builds_the_stable_element() {
        let (alpha, p) = (0.7, 0.3);
        let k = Kernel::kendall(alpha).unwrap();
        let d = LevyDensity::PowerExp { big_c: p * (alpha - p) / alpha, a: -p - 1.0, c: 0.0, b: 0.0 };
        let nu = RadialLevyMeasure::new(Vec::new(), Some(d), p + 1.0, p + 1.0).unwrap();
        let built = levy_build(&k, &LevyTriple::new(0.0, nu).unwrap()).unwrap();
        for t in [0.01, 0.3, 1.0, 4.0, 10.0] {
            let want = (-f64::powf(t, p)).exp();
            assert!((built.mixture_cf(&k, t) - want).abs() < 1e-6, "t {t}");
        }
    }

    #[test]
    fn forward_consistency_with_drift_and_atoms() {
        let k = Kernel::kendall(0.5).unwrap();
        let triple = LevyTriple::new(0.4, atomic(&[(0.7, 0.5), (2.0, 0.8)])).unwrap();
        let built = levy_build(&k, &triple).unwrap();
        for t in [0.05, 0.5, 1.0, 3.0, 20.0] {
            let want = lk_cf_unchecked(&k, &triple, t).unwrap();
            assert!((built.mixture_cf(&k, t) - want).abs() < 1e-6, "t {t}");
        }
        let k = Kernel::stable(1.0).unwrap();
        let built = levy_build(&k, &triple).unwrap();
        for t in [0.05, 0.5, 1.0, 3.0] {
            let want = lk_cf_unchecked(&k, &triple, t).unwrap();
            assert!((built.mixture_cf(&k, t) - want).abs() < 1e-9, "t {t}");
        }
    }

    #[test]
    fn small_atoms_below_the_first_cut_are_kept() {
        let k = Kernel::kendall(0.5).unwrap();
        let triple = LevyTriple::new(0.0, atomic(&[(0.01, 0.3)])).unwrap();
        let built = levy_build(&k, &triple).unwrap();
        let want = compound_poisson(&k, 0.3, &MixingMeasure::delta(0.01)).unwrap();
        assert!(kolmogorov_distance(&built, &want) < 1e-9);
    }

    #[test]
    fn kingman_is_unsupported() {
        let k = Kernel::sphere(3).unwrap();
        let triple = LevyTriple::new(0.0, atomic(&[(1.0, 1.0)])).unwrap();
        assert!(matches!(levy_build(&k, &triple), Err(Error::UnsupportedKernel(_))));
    }
}
