//! Mixing measures on `[0, inf)`: finitely many atoms plus a piecewise-linear
//! density on a grid, with zero extension outside the grid.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::quad;

/// Atoms whose locations agree to this relative precision are treated as one.
pub const ATOM_RESOLUTION: f64 = 1e-9;

/// Allowed total-mass deviation for user-supplied measures.
pub const INGEST_MASS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: f64,
    pub w: f64,
}

/// Piecewise-linear density through `(grid[i], values[i])`, zero outside
/// `[grid[0], grid[last]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl Density {
    pub fn mass(&self) -> f64 {
        self.grid.windows(2).zip(self.values.windows(2)).map(|(x, v)| 0.5 * (x[1] - x[0]) * (v[0] + v[1])).sum()
    }

    pub fn lo(&self) -> f64 {
        self.grid[0]
    }

    pub fn hi(&self) -> f64 {
        *self.grid.last().expect("nonempty grid")
    }

    /// Index `i` with `grid[i] <= x < grid[i+1]`, if `x` lies inside the grid.
    fn cell(&self, x: f64) -> Option<usize> {
        if !(x >= self.lo() && x <= self.hi()) {
            return None;
        }
        let i = self.grid.partition_point(|&g| g <= x);
        Some(i.saturating_sub(1).min(self.grid.len() - 2))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.cell(x) {
            None => 0.0,
            Some(i) => {
                let (x0, x1) = (self.grid[i], self.grid[i + 1]);
                let t = (x - x0) / (x1 - x0);
                self.values[i] + t * (self.values[i + 1] - self.values[i])
            }
        }
    }
}

/// A probability measure on `[0, inf)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMeasure {
    atoms: Vec<Atom>,
    density: Option<Density>,
}

#[derive(Serialize, Deserialize)]
struct MeasureJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    atoms: Option<Vec<Atom>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    density: Option<Density>,
}

fn trapezoid_mass(atoms: &[Atom], density: Option<&Density>) -> f64 {
    atoms.iter().map(|a| a.w).sum::<f64>() + density.map_or(0.0, Density::mass)
}

/// Sorts atoms and merges those closer than the atom resolution, keeping the
/// mass-weighted location. Zero-weight atoms are dropped.
pub(crate) fn merge_atoms(mut atoms: Vec<Atom>) -> Vec<Atom> {
    atoms.retain(|a| a.w > 0.0);
    atoms.sort_by(|a, b| a.x.total_cmp(&b.x));
    let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
    // Cluster members are compared with the first location of the cluster so
    // that chains of near-equal atoms cannot drift.
    let mut anchor = f64::NAN;
    for a in atoms {
        if let Some(last) = out.last_mut() {
            if (a.x - anchor).abs() <= ATOM_RESOLUTION * a.x.abs().max(anchor.abs()) {
                let w = last.w + a.w;
                if last.x != a.x {
                    last.x = (last.x * last.w + a.x * a.w) / w;
                }
                last.w = w;
                continue;
            }
        }
        anchor = a.x;
        out.push(a);
    }
    out
}

impl MixingMeasure {
    /// Validates user data and renormalizes when the total mass is within
    /// `1e-6` of one.
    pub fn new(atoms: Vec<Atom>, density: Option<Density>) -> Result<Self> {
        Self::with_mass_tolerance(atoms, density, INGEST_MASS_TOL)
    }

    /// As [`MixingMeasure::new`] with a caller-chosen mass tolerance.
    pub fn with_mass_tolerance(atoms: Vec<Atom>, density: Option<Density>, tol: f64) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidMeasure(m));
        for a in &atoms {
            if !(a.x.is_finite() && a.x >= 0.0) {
                return bad(format!("atom location {} is not a finite nonnegative number", a.x));
            }
            if !(a.w.is_finite() && a.w >= 0.0) {
                return bad(format!("atom weight {} is not a finite nonnegative number", a.w));
            }
        }
        let density = match density {
            None => None,
            Some(d) => {
                if d.grid.len() != d.values.len() {
                    return bad(format!("density grid has {} points but {} values", d.grid.len(), d.values.len()));
                }
                if d.grid.is_empty() {
                    None
                } else {
                    if d.grid.len() < 2 {
                        return bad("density grid needs at least two points".into());
                    }
                    if !d.grid.iter().all(|x| x.is_finite()) || d.grid[0] < 0.0 {
                        return bad("density grid must be finite and nonnegative".into());
                    }
                    if d.grid.windows(2).any(|w| w[1] <= w[0]) {
                        return bad("density grid is not strictly increasing".into());
                    }
                    if !d.values.iter().all(|v| v.is_finite() && *v >= 0.0) {
                        return bad("density values must be finite and nonnegative".into());
                    }
                    if d.values.iter().all(|&v| v == 0.0) {
                        None
                    } else {
                        Some(d)
                    }
                }
            }
        };
        let mut atoms = merge_atoms(atoms);
        let mut density = density;
        let mass = trapezoid_mass(&atoms, density.as_ref());
        if !((mass - 1.0).abs() <= tol) {
            return bad(format!("total mass {mass} deviates from 1 by more than {tol}"));
        }
        if mass != 1.0 {
            for a in &mut atoms {
                a.w /= mass;
            }
            if let Some(d) = &mut density {
                for v in &mut d.values {
                    *v /= mass;
                }
            }
        }
        Ok(MixingMeasure { atoms, density })
    }

    /// Measure assembled by an internal computation; any mass deficit up to
    /// `1e-6` (tail truncation) is renormalized away.
    pub(crate) fn assembled(atoms: Vec<Atom>, density: Option<Density>) -> Result<Self> {
        Self::with_mass_tolerance(atoms, density, INGEST_MASS_TOL).map_err(|e| match e {
            Error::InvalidMeasure(m) => Error::NotAMixture(m),
            other => other,
        })
    }

    pub fn delta(x: f64) -> Self {
        assert!(x.is_finite() && x >= 0.0, "atom location must be finite and nonnegative");
        MixingMeasure { atoms: vec![Atom { x, w: 1.0 }], density: None }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn density(&self) -> Option<&Density> {
        self.density.as_ref()
    }

    pub fn is_atomic(&self) -> bool {
        self.density.is_none()
    }

    /// True for the unit mass at zero, the identity of every convolution.
    pub fn is_delta_zero(&self) -> bool {
        self.density.is_none() && self.atoms.len() == 1 && self.atoms[0].x == 0.0
    }

    pub fn mass(&self) -> f64 {
        trapezoid_mass(&self.atoms, self.density.as_ref())
    }

    /// Smallest and largest points of the support.
    pub fn support(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        if let (Some(f), Some(l)) = (self.atoms.first(), self.atoms.last()) {
            lo = f.x;
            hi = l.x;
        }
        if let Some(d) = &self.density {
            lo = lo.min(d.lo());
            hi = hi.max(d.hi());
        }
        (lo, hi)
    }

    /// Law of `a * Theta`, reduced to `[0, inf)`.
    pub fn scale(&self, a: f64) -> Self {
        let a = a.abs();
        if a == 0.0 {
            return Self::delta(0.0);
        }
        if a == 1.0 {
            return self.clone();
        }
        let atoms = self.atoms.iter().map(|t| Atom { x: t.x * a, w: t.w }).collect();
        let density = self.density.as_ref().map(|d| Density {
            grid: d.grid.iter().map(|x| x * a).collect(),
            values: d.values.iter().map(|v| v / a).collect(),
        });
        MixingMeasure { atoms, density }
    }

    /// `p * self + (1 - p) * other`.
    pub fn mixture(&self, other: &Self, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidInput(format!("mixture weight {p} is outside [0, 1]")));
        }
        if p == 1.0 {
            return Ok(self.clone());
        }
        if p == 0.0 {
            return Ok(other.clone());
        }
        Ok(Self::combine(&[(p, self), (1.0 - p, other)]))
    }

    /// Weighted sum of measures with nonnegative weights summing to one.
    pub fn combine(parts: &[(f64, &MixingMeasure)]) -> Self {
        let atoms: Vec<Atom> =
            parts.iter().flat_map(|(p, m)| m.atoms.iter().map(move |a| Atom { x: a.x, w: p * a.w })).collect();
        let dens: Vec<(f64, &Density)> =
            parts.iter().filter_map(|(p, m)| m.density.as_ref().map(|d| (*p, d))).filter(|(p, _)| *p > 0.0).collect();
        let density = match dens.len() {
            0 => None,
            1 => Some(Density {
                grid: dens[0].1.grid.clone(),
                values: dens[0].1.values.iter().map(|v| dens[0].0 * v).collect(),
            }),
            _ => Some(sum_densities(&dens)),
        };
        MixingMeasure { atoms: merge_atoms(atoms), density }
    }

    /// `int s^q lambda(ds)` for `q > -1`; atoms exactly, density by
    /// Gauss–Legendre panels over the piecewise-linear interpolant.
    pub fn moment(&self, q: f64) -> f64 {
        let pw = |x: f64| {
            if x == 0.0 {
                if q == 0.0 {
                    1.0
                } else if q > 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                x.powf(q)
            }
        };
        let mut total: f64 = self.atoms.iter().map(|a| a.w * pw(a.x)).sum();
        if let Some(d) = &self.density {
            let rule = quad::gl8();
            for i in 0..d.grid.len() - 1 {
                let (a, b) = (d.grid[i], d.grid[i + 1]);
                let (fa, fb) = (d.values[i], d.values[i + 1]);
                if fa == 0.0 && fb == 0.0 {
                    continue;
                }
                if a == 0.0 {
                    // Exact for the linear interpolant against s^q near zero.
                    total += fa * b.powf(q + 1.0) / (q + 1.0) + (fb - fa) * b.powf(q + 1.0) / (q + 2.0);
                } else {
                    total += quad::panel(rule, |s| pw(s) * (fa + (fb - fa) * (s - a) / (b - a)), a, b);
                }
            }
        }
        total
    }

    /// Right-continuous distribution function.
    pub fn cdf(&self, x: f64) -> f64 {
        CdfView::new(self).cdf(x)
    }

    /// Law-level characteristic function `int cf(t s) lambda(ds)`.
    pub fn mixture_cf(&self, kernel: &Kernel, t: f64) -> f64 {
        let mut v: f64 = self.atoms.iter().map(|a| a.w * kernel.cf(t * a.x)).sum();
        if let Some(d) = &self.density {
            let rule = quad::gl8();
            // The Kendall integrand has a kink where t s = 1.
            let kink = if t != 0.0 { 1.0 / t.abs() } else { f64::INFINITY };
            for i in 0..d.grid.len() - 1 {
                let (a, b) = (d.grid[i], d.grid[i + 1]);
                let (fa, fb) = (d.values[i], d.values[i + 1]);
                if fa == 0.0 && fb == 0.0 {
                    continue;
                }
                let lin = |s: f64| fa + (fb - fa) * (s - a) / (b - a);
                let g = |s: f64| kernel.cf(t * s) * lin(s);
                if kink > a && kink < b {
                    v += quad::panel(rule, g, a, kink) + quad::panel(rule, g, kink, b);
                } else {
                    v += quad::panel(rule, g, a, b);
                }
            }
        }
        v.clamp(-1.0, 1.0)
    }

    /// Mixture characteristic function on `points` equally spaced values of
    /// `t` in `[0, tmax]`.
    pub fn char_grid(&self, kernel: &Kernel, tmax: f64, points: usize) -> Result<CharGrid> {
        if points < 2 || !(tmax > 0.0 && tmax.is_finite()) {
            return Err(Error::InvalidInput("need tmax > 0 and at least two points".into()));
        }
        let t: Vec<f64> = (0..points).map(|i| tmax * i as f64 / (points - 1) as f64).collect();
        let phi = t.par_iter().map(|&t| if t == 0.0 { 1.0 } else { self.mixture_cf(kernel, t) }).collect();
        CharGrid::new(t, phi)
    }

    /// Quantile quantization into slices of mass `1/k`; atoms heavier than
    /// `1/k` are kept as they are.
    pub fn discretize(&self, k: usize) -> Self {
        assert!(k >= 1, "need at least one slice");
        let slice = 1.0 / k as f64;
        let mut heavy = Vec::new();
        let mut light = Vec::new();
        for a in &self.atoms {
            if a.w > slice {
                heavy.push(*a);
            } else {
                light.push(*a);
            }
        }
        let rest = MixingMeasure { atoms: light, density: self.density.clone() };
        let rest_mass = rest.mass();
        if rest_mass <= 0.0 {
            return MixingMeasure { atoms: heavy, density: None };
        }
        let view = CdfView::new(&rest);
        let mut out = heavy;
        let mut lo = 0.0;
        while lo < rest_mass * (1.0 - 1e-12) {
            let hi = (lo + slice).min(rest_mass);
            let x = view.quantile(0.5 * (lo + hi));
            out.push(Atom { x, w: hi - lo });
            lo = hi;
        }
        let total: f64 = out.iter().map(|a| a.w).sum();
        for a in &mut out {
            a.w /= total;
        }
        MixingMeasure { atoms: merge_atoms(out), density: None }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: MeasureJson = serde_json::from_str(s)?;
        Self::new(raw.atoms.unwrap_or_default(), raw.density)
    }

    pub fn to_json_string(&self) -> String {
        let raw = MeasureJson { atoms: Some(self.atoms.clone()), density: self.density.clone() };
        serde_json::to_string(&raw).expect("finite floats serialize")
    }
}

/// Sum of weighted piecewise-linear densities on the union of their grids.
/// Where one density jumps to zero at its grid end, a guard node just
/// outside the end keeps the jump sharp.
pub(crate) fn sum_densities(parts: &[(f64, &Density)]) -> Density {
    let mut grid: Vec<f64> = parts.iter().flat_map(|(_, d)| d.grid.iter().copied()).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut guards = Vec::new();
    for (_, d) in parts {
        let (lo, hi) = (d.lo(), d.hi());
        if d.values[0] > 0.0 && lo > 0.0 && grid[0] < lo {
            guards.push(lo - guard_gap(lo));
        }
        if *d.values.last().expect("nonempty") > 0.0 && *grid.last().expect("nonempty") > hi {
            guards.push(hi + guard_gap(hi));
        }
    }
    if !guards.is_empty() {
        grid.extend(guards);
        grid.sort_by(f64::total_cmp);
        grid.dedup();
    }
    let values = grid.iter().map(|&x| parts.iter().map(|(p, d)| p * d.eval(x)).sum()).collect();
    Density { grid, values }
}

/// Width of the sliver used to represent a density jump at `x`.
pub(crate) fn guard_gap(x: f64) -> f64 {
    (x.abs() * 1e-13).max(1e-300)
}

/// Cumulative view of a measure for repeated CDF and quantile queries.
pub struct CdfView<'a> {
    atoms: &'a [Atom],
    atom_cum: Vec<f64>,
    density: Option<&'a Density>,
    dens_cum: Vec<f64>,
}

impl<'a> CdfView<'a> {
    pub fn new(m: &'a MixingMeasure) -> Self {
        let mut atom_cum = Vec::with_capacity(m.atoms.len() + 1);
        atom_cum.push(0.0);
        for a in &m.atoms {
            atom_cum.push(atom_cum.last().expect("nonempty") + a.w);
        }
        let density = m.density.as_ref();
        let mut dens_cum = Vec::new();
        if let Some(d) = density {
            dens_cum.reserve(d.grid.len());
            dens_cum.push(0.0);
            for i in 0..d.grid.len() - 1 {
                let c = 0.5 * (d.grid[i + 1] - d.grid[i]) * (d.values[i] + d.values[i + 1]);
                dens_cum.push(dens_cum[i] + c);
            }
        }
        CdfView { atoms: &m.atoms, atom_cum, density, dens_cum }
    }

    fn atoms_upto(&self, x: f64, inclusive: bool) -> f64 {
        let n =
            if inclusive { self.atoms.partition_point(|a| a.x <= x) } else { self.atoms.partition_point(|a| a.x < x) };
        self.atom_cum[n]
    }

    fn density_upto(&self, x: f64) -> f64 {
        let Some(d) = self.density else { return 0.0 };
        if x <= d.lo() {
            return 0.0;
        }
        if x >= d.hi() {
            return *self.dens_cum.last().expect("nonempty");
        }
        let i = d.cell(x).expect("inside grid");
        let (x0, x1) = (d.grid[i], d.grid[i + 1]);
        let f0 = d.values[i];
        let fx = f0 + (x - x0) / (x1 - x0) * (d.values[i + 1] - f0);
        self.dens_cum[i] + 0.5 * (x - x0) * (f0 + fx)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        self.atoms_upto(x, true) + self.density_upto(x)
    }

    /// `lambda([0, x))`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        self.atoms_upto(x, false) + self.density_upto(x)
    }

    /// Smallest `x` with `cdf(x) >= p`, for `p` in `(0, mass]`.
    pub fn quantile(&self, p: f64) -> f64 {
        let mut lo = 0.0f64;
        let mut hi = 0.0f64;
        for a in self.atoms {
            hi = hi.max(a.x);
        }
        if let Some(d) = self.density {
            hi = hi.max(d.hi());
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) >= p {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        if self.cdf(lo) >= p {
            lo
        } else {
            hi
        }
    }
}

/// Kolmogorov distance `sup_x |F_1(x) - F_2(x)|`. Atom locations that agree
/// to the atom resolution are compared as one location, so representation
/// round-off in atom positions does not register as a unit jump.
pub fn kolmogorov_distance(a: &MixingMeasure, b: &MixingMeasure) -> f64 {
    let va = CdfView::new(a);
    let vb = CdfView::new(b);
    let mut locs: Vec<f64> = a.atoms.iter().chain(&b.atoms).map(|t| t.x).collect();
    locs.sort_by(f64::total_cmp);
    let mut clusters: Vec<(f64, f64)> = Vec::new();
    for x in locs {
        match clusters.last_mut() {
            Some(c) if (x - c.0).abs() <= ATOM_RESOLUTION * x.abs().max(c.0.abs()) => c.1 = x,
            _ => clusters.push((x, x)),
        }
    }
    let mut best: f64 = 0.0;
    let mut consider = |x: f64, left: bool| {
        let d = if left { va.cdf_left(x) - vb.cdf_left(x) } else { va.cdf(x) - vb.cdf(x) };
        best = best.max(d.abs());
    };
    for &(lo, hi) in &clusters {
        consider(lo, true);
        consider(hi, false);
    }
    let in_cluster = |x: f64| {
        let i = clusters.partition_point(|c| c.1 < x);
        let near = |c: &(f64, f64)| {
            let pad = ATOM_RESOLUTION * x.abs();
            x >= c.0 - pad && x <= c.1 + pad
        };
        (i < clusters.len() && near(&clusters[i])) || (i > 0 && near(&clusters[i - 1]))
    };
    let mut grid: Vec<f64> = a.density.iter().chain(b.density.iter()).flat_map(|d| d.grid.iter().copied()).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    for &x in &grid {
        if !in_cluster(x) {
            consider(x, false);
        }
    }
    // Between union nodes both CDFs are quadratic; their difference peaks
    // where the two (linear) densities cross.
    let dens = |m: &MixingMeasure, x: f64| m.density.as_ref().map_or(0.0, |d| d.eval(x));
    for w in grid.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        let e = (x1 - x0) * 1e-9;
        let d0 = dens(a, x0 + e) - dens(b, x0 + e);
        let d1 = dens(a, x1 - e) - dens(b, x1 - e);
        if d0 * d1 < 0.0 {
            let x = x0 + e + (x1 - x0 - 2.0 * e) * d0 / (d0 - d1);
            if !in_cluster(x) {
                consider(x, false);
            }
        }
    }
    best.min(1.0)
}

/// A real, even characteristic function sampled at nonnegative `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CharGrid {
    t: Vec<f64>,
    phi: Vec<f64>,
}

impl CharGrid {
    pub fn new(t: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        if t.len() != phi.len() || t.len() < 2 {
            return Err(Error::InvalidInput("characteristic grid needs matching t and phi of length >= 2".into()));
        }
        if t[0] != 0.0 || t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("t-grid must start at 0 and increase strictly".into()));
        }
        if (phi[0] - 1.0).abs() > 1e-12 || phi.iter().any(|p| !p.is_finite() || p.abs() > 1.0 + 1e-12) {
            return Err(Error::InvalidInput("phi must equal 1 at t = 0 and stay within [-1, 1]".into()));
        }
        Ok(CharGrid { t, phi })
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    /// Monotone cubic (Fritsch–Carlson) interpolation in `|t|`; zero
    /// beyond the last sample when the samples have decayed there.
    pub fn eval(&self, t: f64) -> f64 {
        let t = t.abs();
        let n = self.t.len();
        if t >= self.t[n - 1] {
            return self.phi[n - 1];
        }
        let i = self.t.partition_point(|&x| x <= t) - 1;
        let slope = |j: usize| (self.phi[j + 1] - self.phi[j]) / (self.t[j + 1] - self.t[j]);
        let tangent = |j: usize| -> f64 {
            if j == 0 {
                // cf is even, so the derivative at zero vanishes when it exists.
                return 0.0;
            }
            if j == n - 1 {
                return slope(n - 2);
            }
            let (s0, s1) = (slope(j - 1), slope(j));
            if s0 * s1 <= 0.0 {
                0.0
            } else {
                let (h0, h1) = (self.t[j] - self.t[j - 1], self.t[j + 1] - self.t[j]);
                let w1 = 2.0 * h1 + h0;
                let w2 = h1 + 2.0 * h0;
                (w1 + w2) / (w1 / s0 + w2 / s1)
            }
        };
        let h = self.t[i + 1] - self.t[i];
        let u = (t - self.t[i]) / h;
        let (m0, m1) = (tangent(i) * h, tangent(i + 1) * h);
        let (y0, y1) = (self.phi[i], self.phi[i + 1]);
        let u2 = u * u;
        let u3 = u2 * u;
        (2.0 * u3 - 3.0 * u2 + 1.0) * y0 + (u3 - 2.0 * u2 + u) * m0 + (-2.0 * u3 + 3.0 * u2) * y1 + (u3 - u2) * m1
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,phi")?;
        for (t, p) in self.t.iter().zip(&self.phi) {
            writeln!(w, "{t:.16e},{p:.16e}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut t = Vec::new();
        let mut phi = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if i == 0 {
                if line.replace(' ', "") != "t,phi" {
                    return Err(Error::InvalidInput("characteristic grid CSV must start with 't,phi'".into()));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let (a, b) = line.split_once(',').ok_or_else(|| Error::InvalidInput(format!("bad CSV row {}", i + 1)))?;
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|_| Error::InvalidInput(format!("bad number '{s}' in row {}", i + 1)))
            };
            t.push(parse(a)?);
            phi.push(parse(b)?);
        }
        Self::new(t, phi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform01() -> MixingMeasure {
        MixingMeasure::new(vec![], Some(Density { grid: vec![0.0, 1.0], values: vec![1.0, 1.0] })).unwrap()
    }

    #[test]
    fn validation_rules() {
        let m = MixingMeasure::new(vec![Atom { x: 1.0, w: 0.999_999_5 }], None).unwrap();
        assert_eq!(m.atoms()[0].w, 1.0);
        assert!(matches!(MixingMeasure::new(vec![Atom { x: 1.0, w: 0.9 }], None), Err(Error::InvalidMeasure(_))));
        let bad_grid = Density { grid: vec![0.0, 2.0, 1.0], values: vec![1.0, 1.0, 1.0] };
        assert!(MixingMeasure::new(vec![], Some(bad_grid)).is_err());
        let neg = Density { grid: vec![0.0, 1.0, 2.0], values: vec![1.0, -0.1, 1.1] };
        assert!(MixingMeasure::new(vec![], Some(neg)).is_err());
        assert_eq!(MixingMeasure::new(vec![Atom { x: 1.0, w: 1.0 }], None).unwrap(), MixingMeasure::delta(1.0));
    }

    #[test]
    fn scaling_and_mixtures() {
        assert_eq!(MixingMeasure::delta(1.0).scale(3.0), MixingMeasure::delta(3.0));
        assert_eq!(uniform01().scale(0.0), MixingMeasure::delta(0.0));
        assert_eq!(uniform01().scale(-2.0), uniform01().scale(2.0));
        let m = MixingMeasure::delta(1.0).mixture(&MixingMeasure::delta(2.0), 0.5).unwrap();
        assert_eq!(m.atoms(), &[Atom { x: 1.0, w: 0.5 }, Atom { x: 2.0, w: 0.5 }]);
        assert_eq!(uniform01().mixture(&MixingMeasure::delta(2.0), 1.0).unwrap(), uniform01());
    }

    #[test]
    fn mixture_keeps_density_jumps() {
        let a = uniform01();
        let b = MixingMeasure::new(vec![], Some(Density { grid: vec![0.5, 2.5], values: vec![0.5, 0.5] })).unwrap();
        let m = a.mixture(&b, 0.5).unwrap();
        for &x in &[0.25, 0.5, 0.75, 1.0, 1.5, 2.5, 3.0] {
            let exact = 0.5 * a.cdf(x) + 0.5 * b.cdf(x);
            assert!((m.cdf(x) - exact).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn moments() {
        assert_eq!(MixingMeasure::delta(2.0).moment(2.0), 4.0);
        let m = MixingMeasure::delta(1.0).mixture(&MixingMeasure::delta(3.0), 0.5).unwrap();
        assert_eq!(m.moment(1.0), 2.0);
        assert!((uniform01().moment(0.5) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn cdf_is_right_continuous() {
        let d = MixingMeasure::delta(1.0);
        assert_eq!(d.cdf(1.0), 1.0);
        assert_eq!(d.cdf(0.999), 0.0);
        assert_eq!(d.cdf(-1.0), 0.0);
    }

    #[test]
    fn kolmogorov_examples() {
        let d0 = MixingMeasure::delta(0.0);
        let d1 = MixingMeasure::delta(1.0);
        assert_eq!(kolmogorov_distance(&d1, &d1), 0.0);
        assert_eq!(kolmogorov_distance(&d0, &d1), 1.0);
        let eps = 0.01;
        let m = d1.mixture(&MixingMeasure::delta(2.0), 1.0 - eps).unwrap();
        assert!((kolmogorov_distance(&d1, &m) - eps).abs() < 1e-15);
        // Atoms that differ only by round-off are the same atom.
        assert_eq!(kolmogorov_distance(&d1, &MixingMeasure::delta(1.0 + 1e-12)), 0.0);
    }

    #[test]
    fn discretize_uniform() {
        let q = uniform01().discretize(4);
        let xs: Vec<f64> = q.atoms().iter().map(|a| a.x).collect();
        for (x, e) in xs.iter().zip([0.125, 0.375, 0.625, 0.875]) {
            assert!((x - e).abs() < 1e-12);
        }
        assert_eq!(MixingMeasure::delta(1.0).discretize(7), MixingMeasure::delta(1.0));
    }

    #[test]
    fn mixture_cf_unit_scale() {
        let k = Kernel::kendall(0.5).unwrap();
        let d = MixingMeasure::delta(1.0);
        for &t in &[0.0, 0.3, 0.9, 2.0] {
            assert_eq!(d.mixture_cf(&k, t), k.cf(t));
        }
    }

    #[test]
    fn char_grid_csv_roundtrip() {
        let k = Kernel::stable(1.0).unwrap();
        let g = uniform01().char_grid(&k, 5.0, 11).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,phi\n"));
        let back = CharGrid::read_csv(&buf[..]).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn json_roundtrip() {
        let m = uniform01().mixture(&MixingMeasure::delta(2.0), 0.3).unwrap();
        let s = m.to_json_string();
        assert_eq!(MixingMeasure::from_json_str(&s).unwrap(), m);
        let only_atoms = MixingMeasure::from_json_str(r#"{"atoms":[{"x":1,"w":1}]}"#).unwrap();
        assert_eq!(only_atoms, MixingMeasure::delta(1.0));
    }

    fn arb_measure() -> impl Strategy<Value = MixingMeasure> {
        let atoms = prop::collection::vec((0.0f64..5.0, 0.01f64..1.0), 0..4);
        let dens = prop::option::of((0.0f64..3.0, 0.1f64..3.0, prop::collection::vec(0.0f64..2.0, 2..12)));
        (atoms, dens)
            .prop_filter("nonzero mass", |(a, d)| {
                !a.is_empty() || d.as_ref().is_some_and(|d| d.2.iter().any(|v| *v > 0.0))
            })
            .prop_map(|(atoms, dens)| {
                let mut atoms: Vec<Atom> = atoms.into_iter().map(|(x, w)| Atom { x, w }).collect();
                let density = dens.map(|(lo, width, vals)| {
                    let n = vals.len();
                    Density { grid: (0..n).map(|i| lo + width * i as f64 / (n - 1) as f64).collect(), values: vals }
                });
                let mass = trapezoid_mass(&atoms, density.as_ref());
                for a in &mut atoms {
                    a.w /= mass;
                }
                let density = density.map(|mut d| {
                    for v in &mut d.values {
                        *v /= mass;
                    }
                    d
                });
                MixingMeasure::new(atoms, density).unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn kolmogorov_is_a_metric(a in arb_measure(), b in arb_measure(), c in arb_measure()) {
            let ab = kolmogorov_distance(&a, &b);
            prop_assert_eq!(kolmogorov_distance(&a, &a), 0.0);
            prop_assert!((ab - kolmogorov_distance(&b, &a)).abs() < 1e-15);
            prop_assert!(ab <= kolmogorov_distance(&a, &c) + kolmogorov_distance(&c, &b) + 1e-12);
        }

        #[test]
        fn mixture_has_unit_mass(a in arb_measure(), b in arb_measure(), p in 0.0f64..1.0) {
            let m = a.mixture(&b, p).unwrap();
            prop_assert!((m.mass() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn scaling_composes(a in arb_measure(), s in 0.1f64..4.0, r in 0.1f64..4.0) {
            let lhs = a.scale(s).scale(r);
            let rhs = a.scale(s * r);
            prop_assert!(kolmogorov_distance(&lhs, &rhs) < 1e-12);
        }

        #[test]
        fn mixture_cf_scaling_covariance(a in arb_measure(), s in 0.2f64..3.0, t in 0.0f64..4.0) {
            let k = Kernel::stable(0.7).unwrap();
            let lhs = a.scale(s).mixture_cf(&k, t);
            let rhs = a.mixture_cf(&k, s * t);
            prop_assert!((lhs - rhs).abs() < 1e-12);
            prop_assert!((a.mixture_cf(&k, -t) - a.mixture_cf(&k, t)).abs() == 0.0);
        }

        #[test]
        fn discretization_converges(a in arb_measure()) {
            let d8 = kolmogorov_distance(&a, &a.discretize(8));
            let d32 = kolmogorov_distance(&a, &a.discretize(32));
            let d128 = kolmogorov_distance(&a, &a.discretize(128));
            prop_assert!(d32 <= d8 + 1e-12 && d128 <= d32 + 1e-12, "{} {} {}", d8, d32, d128);
            prop_assert!(a.discretize(8).atoms().len() <= 8 + a.atoms().len());
        }
    }
}
