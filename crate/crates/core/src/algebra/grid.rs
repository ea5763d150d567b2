//! Turning a pointwise description of a law on `[0, inf)` into a
//! [`MixingMeasure`] on a log-spaced grid.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measures::{guard_gap, Atom, Density, MixingMeasure};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Side {
    Left,
    Right,
}

/// Pointwise access to a law on `[0, inf)` with finitely many atoms.
pub(crate) trait Law: Sync {
    /// Right-continuous distribution function, including any atom at zero.
    fn cdf(&self, s: f64) -> f64;
    /// Density of the continuous part, as a one-sided limit.
    fn density(&self, s: f64, side: Side) -> f64;
    /// All atoms, including one at zero.
    fn atoms(&self) -> Vec<Atom>;
    /// Points where the density may jump.
    fn breaks(&self) -> Vec<f64>;
    /// The distribution function is constant on `[0, floor)`.
    fn floor(&self) -> f64 {
        0.0
    }
}

/// Mass threshold below which the lower end of the support is cut off.
const LOWER_CUT: f64 = 1e-15;

/// Octave range `[2^klo, 2^khi]` holding all but a negligible part of the
/// continuous mass. Octave ends keep grids scale-covariant under powers of two.
pub(crate) fn octave_range(law: &dyn Law, p0: f64, tail_mass: f64) -> (i32, i32) {
    let below = |k: i32| law.cdf((k as f64).exp2()) - p0 <= LOWER_CUT;
    let mut klo = 0;
    if below(0) {
        while klo < 1020 && below(klo + 1) {
            klo += 1;
        }
    } else {
        while klo > -1070 && !below(klo) {
            klo -= 1;
        }
    }
    let mut khi = klo + 1;
    while khi < 1020 && 1.0 - law.cdf((khi as f64).exp2()) > tail_mass {
        khi += 1;
    }
    (klo, khi)
}

/// Samples the density of `law` on about `points` log-spaced nodes plus guard
/// pairs at every break, and collects its atoms.
pub(crate) fn materialize(law: &dyn Law, points: usize, tail_mass: f64) -> Result<MixingMeasure> {
    let (atoms, density) = materialize_parts(law, points, tail_mass)?;
    MixingMeasure::assembled(atoms, density)
}

/// The atoms and density of [`materialize`] before the mass check.
pub(crate) fn materialize_parts(law: &dyn Law, points: usize, tail_mass: f64) -> Result<(Vec<Atom>, Option<Density>)> {
    let mut atoms = law.atoms();
    if let Some(a) = atoms.iter().find(|a| !(a.w.is_finite() && a.x.is_finite()) || a.w < -1e-12) {
        return Err(Error::NotAMixture(format!("computed atom ({}, {}) is not valid", a.x, a.w)));
    }
    atoms.retain(|a| a.w > 0.0);
    let atom_mass: f64 = atoms.iter().map(|a| a.w).sum();
    let p0: f64 = atoms.iter().filter(|a| a.x == 0.0).map(|a| a.w).sum();
    if atom_mass >= 1.0 - tail_mass {
        return Ok((atoms, None));
    }
    let (klo, khi) = octave_range(law, p0, tail_mass);
    let floor = law.floor();
    let lo = (klo as f64).exp2().max(floor);
    let hi = (khi as f64).exp2();
    let per_octave = (points as f64 / (khi - klo) as f64).ceil().max(4.0) as i64;
    // (position, evaluation point, side); a guard node just left of a break
    // carries the left limit at the break.
    let mut nodes: Vec<(f64, f64, Side)> = Vec::with_capacity(points + 64);
    let j0 = klo as i64 * per_octave;
    let j1 = khi as i64 * per_octave;
    for j in j0..=j1 {
        let x = (j as f64 / per_octave as f64).exp2();
        if x > lo {
            nodes.push((x, x, Side::Right));
        }
    }
    let mut sites: Vec<f64> = law.breaks();
    sites.extend(atoms.iter().map(|a| a.x));
    sites.push(lo);
    sites.retain(|&x| x >= lo && x < hi && x > 0.0);
    sites.sort_by(f64::total_cmp);
    sites.dedup();
    for &x in &sites {
        nodes.push((x - guard_gap(x), x, Side::Left));
        nodes.push((x, x, Side::Right));
    }
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.2 == Side::Right).cmp(&(b.2 == Side::Right))));
    let mut kept: Vec<(f64, f64, Side)> = Vec::with_capacity(nodes.len());
    for n in nodes {
        if let Some(last) = kept.last() {
            if n.0 <= last.0 {
                continue;
            }
            // Lattice node inside a guard sliver.
            if last.2 == Side::Left && n.1 != last.1 {
                continue;
            }
        }
        kept.push(n);
    }
    // One-sided limits at a break are taken a quarter sliver away from it, so
    // rounding in the break location cannot put them on the wrong side.
    let values: Vec<f64> = kept
        .par_iter()
        .map(|&(_, at, side)| {
            let nudge = 0.25 * guard_gap(at);
            match side {
                Side::Left => law.density(at - nudge, side),
                Side::Right if sites.binary_search_by(|s| s.total_cmp(&at)).is_ok() => law.density(at + nudge, side),
                Side::Right => law.density(at, side),
            }
        })
        .collect();
    let grid: Vec<f64> = kept.iter().map(|n| n.0).collect();
    // Negativity is judged on the mass per unit of `ln s`, which is
    // scale-free; values below the threshold are rounding noise.
    let peak = grid.iter().zip(&values).fold(1.0f64, |m, (x, v)| m.max((x * v).abs()));
    let mut clean = Vec::with_capacity(values.len());
    for (x, v) in grid.iter().zip(&values) {
        if !v.is_finite() {
            return Err(Error::NotAMixture(format!("density is not finite at {x}")));
        }
        if x * v < -1e-6 * peak {
            return Err(Error::NotAMixture(format!("density is negative ({v:.3e}) at {x}")));
        }
        clean.push(v.max(0.0));
    }
    let cdf: Vec<f64> = grid.par_iter().map(|&x| law.cdf(x)).collect();
    let sliver: Vec<bool> = kept.windows(2).map(|w| w[0].2 == Side::Left && w[1].1 == w[0].1).collect();
    match_cell_masses(&grid, &sliver, &cdf, &mut clean);
    Ok((atoms, Some(Density { grid, values: clean })))
}

/// Rescales node values so that trapezoid cell masses follow the exact cell
/// masses from the distribution function. This removes the leading
/// interpolation error of a piecewise-linear density. Cells flagged in
/// `sliver` are guard slivers and carry no mass of their own.
pub(crate) fn match_cell_masses(grid: &[f64], sliver: &[bool], cdf: &[f64], values: &mut [f64]) {
    let n = grid.len();
    if n < 3 {
        return;
    }
    let mut ratio = vec![f64::NAN; n - 1];
    for i in 0..n - 1 {
        if sliver[i] {
            continue;
        }
        let trap = 0.5 * (grid[i + 1] - grid[i]) * (values[i] + values[i + 1]);
        let exact = cdf[i + 1] - cdf[i];
        if trap > 0.0 && exact > 1e-10 {
            let r = exact / trap;
            if (r - 1.0).abs() < 0.05 {
                ratio[i] = r;
            }
        }
    }
    for (j, value) in values.iter_mut().enumerate().take(n) {
        let mut acc = 0.0;
        let mut cnt = 0.0;
        for i in [j.wrapping_sub(1), j] {
            if let Some(r) = ratio.get(i).filter(|r| !r.is_nan()) {
                acc += r;
                cnt += 1.0;
            }
        }
        if cnt > 0.0 {
            *value *= acc / cnt;
        }
    }
}

/// The density part of a measure with its cumulative mass table.
pub(crate) struct DensityPart {
    pub grid: Vec<f64>,
    pub vals: Vec<f64>,
    cum: Vec<f64>,
}

impl DensityPart {
    pub(crate) fn new(d: &Density) -> Self {
        let mut cum = Vec::with_capacity(d.grid.len());
        cum.push(0.0);
        for i in 0..d.grid.len() - 1 {
            cum.push(cum[i] + 0.5 * (d.grid[i + 1] - d.grid[i]) * (d.values[i] + d.values[i + 1]));
        }
        DensityPart { grid: d.grid.clone(), vals: d.values.clone(), cum }
    }

    pub(crate) fn mass(&self) -> f64 {
        *self.cum.last().expect("nonempty")
    }

    pub(crate) fn lo(&self) -> f64 {
        self.grid[0]
    }

    pub(crate) fn hi(&self) -> f64 {
        *self.grid.last().expect("nonempty")
    }

    pub(crate) fn cdf(&self, s: f64) -> f64 {
        let n = self.grid.len();
        if s <= self.grid[0] {
            return 0.0;
        }
        if s >= self.grid[n - 1] {
            return self.cum[n - 1];
        }
        let i = self.grid.partition_point(|&g| g <= s) - 1;
        let (x0, x1, v0, v1) = (self.grid[i], self.grid[i + 1], self.vals[i], self.vals[i + 1]);
        let vs = v0 + (v1 - v0) * (s - x0) / (x1 - x0);
        self.cum[i] + 0.5 * (s - x0) * (v0 + vs)
    }

    pub(crate) fn density(&self, s: f64, side: Side) -> f64 {
        let n = self.grid.len();
        let inside = match side {
            Side::Right => s >= self.grid[0] && s < self.grid[n - 1],
            Side::Left => s > self.grid[0] && s <= self.grid[n - 1],
        };
        if !inside {
            return 0.0;
        }
        let i = match side {
            Side::Right => self.grid.partition_point(|&g| g <= s) - 1,
            Side::Left => self.grid.partition_point(|&g| g < s) - 1,
        };
        let (x0, x1) = (self.grid[i], self.grid[i + 1]);
        self.vals[i] + (self.vals[i + 1] - self.vals[i]) * (s - x0) / (x1 - x0)
    }

    /// Locations of the grid ends and of guard slivers.
    pub(crate) fn jumps(&self) -> Vec<f64> {
        let mut out = vec![self.lo(), self.hi()];
        for w in self.grid.windows(2) {
            if w[1] - w[0] < 1e-10 * w[1] {
                out.push(w[1]);
            }
        }
        out
    }

    /// Quantile slices of mass at most `mass / k`, as weighted atoms.
    pub(crate) fn quantize(&self, k: usize) -> Vec<Atom> {
        let total = self.mass();
        let slice = total / k as f64;
        let mut out = Vec::with_capacity(k);
        let mut lo = 0.0;
        while lo < total * (1.0 - 1e-12) {
            let hi = (lo + slice).min(total);
            out.push(Atom { x: self.quantile(0.5 * (lo + hi)), w: hi - lo });
            lo = hi;
        }
        out
    }

    fn quantile(&self, p: f64) -> f64 {
        let i = self.cum.partition_point(|&c| c < p).clamp(1, self.grid.len() - 1) - 1;
        let (mut a, mut b) = (self.grid[i], self.grid[i + 1]);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if self.cdf(m) < p {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }
}
