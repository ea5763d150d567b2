//! Recovering `(A, nu)` from an infinitely divisible mixing measure through
//! the vague limit of `t^-1 lambda^t` as `t -> 0`.

use crate::algebra::grid::Side;
use crate::algebra::kendall::{self, MeasureSource, Point, Power, Source};
use crate::algebra::power_frac;
use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelKind};
use crate::levy::{LevyDensity, LevyTriple, RadialLevyMeasure};
use crate::measures::{sum_densities, Atom, Density, MixingMeasure, ATOM_RESOLUTION};
use crate::quad;

/// A bounded continuous function vanishing on `[0, a]`:
/// `clamp((x - a) / a, 0, 1) cos(j x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunction {
    pub a: f64,
    pub j: u32,
}

impl TestFunction {
    pub fn eval(&self, x: f64) -> f64 {
        ((x - self.a) / self.a).clamp(0.0, 1.0) * (self.j as f64 * x).cos()
    }

    fn kinks(&self) -> [f64; 2] {
        [self.a, 2.0 * self.a]
    }
}

/// The nine functions with `a` in `{1e-3, 1e-2, 1e-1}` and `j` in `{0, 1, 2}`.
pub fn test_battery() -> Vec<TestFunction> {
    let mut out = Vec::new();
    for a in [1e-3, 1e-2, 1e-1] {
        for j in 0..3 {
            out.push(TestFunction { a, j });
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct ExtractOptions {
    /// Decreasing powers `t_1 > t_2 > ...`.
    pub schedule: Vec<f64>,
    /// `nu` is reported on `[eps, inf)`.
    pub eps: f64,
    /// Successive battery values must agree to this.
    pub stability: f64,
    /// Cut points for the drift estimate, largest first.
    pub drift_eps: Vec<f64>,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions::with_levels(20)
    }
}

impl ExtractOptions {
    /// Schedule `t_n = 2^-n` for `n = 1..=levels`.
    pub fn with_levels(levels: u32) -> Self {
        ExtractOptions {
            schedule: (1..=levels).map(|n| (-(n as f64)).exp2()).collect(),
            eps: 1e-3,
            stability: 1e-4,
            drift_eps: vec![1e-1, 1e-2, 1e-3],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub triple: LevyTriple,
    /// The power at which the battery stabilized.
    pub t: f64,
    /// `int f d nu` over the battery at that power.
    pub functionals: Vec<f64>,
    /// `(eps, drift integral)` before extrapolation in `eps`.
    pub drift_terms: Vec<(f64, f64)>,
}

/// `int f dm`, splitting density cells at `kinks`.
fn integrate(m: &MixingMeasure, f: impl Fn(f64) -> f64, kinks: &[f64]) -> f64 {
    let mut total: f64 = m.atoms().iter().map(|a| a.w * f(a.x)).sum();
    if let Some(d) = m.density() {
        let rule = quad::gl8();
        for i in 0..d.grid.len() - 1 {
            let (a, b) = (d.grid[i], d.grid[i + 1]);
            let (fa, fb) = (d.values[i], d.values[i + 1]);
            if (fa == 0.0 && fb == 0.0) || b <= a {
                continue;
            }
            let g = |s: f64| f(s) * (fa + (fb - fa) * (s - a) / (b - a));
            let mut lo = a;
            for &k in kinks.iter().filter(|&&k| k > a && k < b) {
                total += quad::panel(rule, g, lo, k);
                lo = k;
            }
            total += quad::panel(rule, g, lo, b);
        }
    }
    total
}

/// Estimates `(A, nu)` with `lambda = lim Exp(t^-1 lambda^t)`.
///
/// The error of `t^-1 lambda^t` is of order `t`, so each estimate is a
/// linear extrapolation in `t` from two consecutive schedule points. The
/// schedule is walked until successive estimates of the test battery agree
/// to the stability threshold. `nu` is reported on `[eps, inf)`. `A` is the integral of
/// `1 - cf` against `t^-1 lambda^t` over `(0, eps]`, linearly extrapolated to
/// `eps = 0` from the last two cut points.
pub fn levy_extract(kernel: &Kernel, lambda: &MixingMeasure, opts: &ExtractOptions) -> Result<Extraction> {
    if opts.schedule.is_empty()
        || opts.schedule.windows(2).any(|w| !(w[1] < w[0]))
        || opts.schedule.iter().any(|&t| !(t > 0.0))
    {
        return Err(Error::InvalidInput("schedule must be a decreasing list of positive powers".into()));
    }
    if opts.drift_eps.len() < 2 || opts.drift_eps.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidInput("drift extrapolation needs at least two positive cut points".into()));
    }
    if !(opts.eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {}", opts.eps)));
    }
    let battery = test_battery();
    let floor = opts.eps.min(opts.drift_eps.iter().copied().fold(f64::INFINITY, f64::min)) / 4.0;
    let mut prev: Option<Level> = None;
    let mut prev_estimate: Option<Vec<f64>> = None;
    for &t in &opts.schedule {
        let level = Level::new(kernel, lambda, t, floor, &battery, opts)?;
        if let Some(p) = prev {
            let estimate = level.extrapolated_functionals(&p);
            if let Some(e) = &prev_estimate {
                let change = e.iter().zip(&estimate).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if change < opts.stability {
                    return level.extrapolate(&p, opts);
                }
            }
            prev_estimate = Some(estimate);
        }
        prev = Some(level);
    }
    Err(Error::NoConvergence(format!(
        "test functionals did not settle to {:e} over {} schedule points",
        opts.stability,
        opts.schedule.len()
    )))
}

/// `t^-1 lambda^t` at one schedule point.
struct Level {
    t: f64,
    power: MixingMeasure,
    functionals: Vec<f64>,
    drift: Vec<(f64, f64)>,
}

impl Level {
    fn new(
        kernel: &Kernel,
        lambda: &MixingMeasure,
        t: f64,
        floor: f64,
        battery: &[TestFunction],
        opts: &ExtractOptions,
    ) -> Result<Self> {
        let power = match kernel.kind() {
            KernelKind::Kendall { alpha } => kendall_power_above(kernel, alpha, lambda, t, floor)?,
            _ => power_frac(kernel, lambda, t)?,
        };
        let functionals = battery.iter().map(|f| integrate(&power, |x| f.eval(x), &f.kinks()) / t).collect();
        let drift = opts
            .drift_eps
            .iter()
            .map(|&e| {
                let v = match kernel.kind() {
                    KernelKind::Kendall { alpha } if e <= 1.0 => kendall_drift(alpha, lambda, t, e),
                    _ => {
                        let g = |s: f64| if s > 0.0 && s <= e { kernel.one_minus_cf(s) } else { 0.0 };
                        integrate(&power, g, &[e, 1.0]) / t
                    }
                };
                (e, v)
            })
            .collect();
        Ok(Level { t, power, functionals, drift })
    }

    /// Weights of this level and a coarser one in the linear extrapolation
    /// to `t = 0`.
    fn weights(&self, coarse: &Level) -> (f64, f64) {
        (coarse.t / (coarse.t - self.t), -self.t / (coarse.t - self.t))
    }

    fn extrapolated_functionals(&self, coarse: &Level) -> Vec<f64> {
        let (wf, wc) = self.weights(coarse);
        self.functionals.iter().zip(&coarse.functionals).map(|(&a, &b)| wf * a + wc * b).collect()
    }

    fn extrapolate(self, coarse: &Level, opts: &ExtractOptions) -> Result<Extraction> {
        let (wf, wc) = self.weights(coarse);
        let rich = |fine: f64, rough: f64| wf * fine + wc * rough;
        let functionals = self.extrapolated_functionals(coarse);
        let drift_terms: Vec<(f64, f64)> =
            self.drift.iter().zip(&coarse.drift).map(|(&(e, a), &(_, b))| (e, rich(a, b))).collect();
        let n = drift_terms.len();
        let ((e1, i1), (e2, i2)) = (drift_terms[n - 2], drift_terms[n - 1]);
        let a_hat = (i2 - (i1 - i2) * e2 / (e1 - e2)).max(0.0);
        let fine = restrict_scaled(&self.power, opts.eps, wf / self.t);
        let rough = restrict_scaled(&coarse.power, opts.eps, wc / coarse.t);
        let nu = combine_parts(fine, rough)?;
        Ok(Extraction { triple: LevyTriple::new(a_hat, nu)?, t: self.t, functionals, drift_terms })
    }
}

/// `lambda^t` with everything below `floor` lumped into the atom at zero.
/// Small powers of a measure with a density near zero depend on the part of
/// `lambda` below its grid, which is not known; the part above `floor` only
/// needs the transform of `lambda` there.
fn kendall_power_above(
    kernel: &Kernel,
    alpha: f64,
    lambda: &MixingMeasure,
    t: f64,
    floor: f64,
) -> Result<MixingMeasure> {
    if t == 1.0 {
        return Ok(lambda.clone());
    }
    let src = MeasureSource::new(lambda, alpha);
    let power = Power { alpha, r: t, inner: &src };
    let floor = floor.max(first_mass(lambda, 1e-9));
    let floored = Floored::new(&power, floor);
    kendall::build(kernel, alpha, &floored).map_err(kendall::not_divisible)
}

/// `t^-1 int_(0, e] s^alpha lambda^t(ds)`, which is `1 - cf` integrated
/// against `t^-1 lambda^t` for `e <= 1`. With `u = e^alpha` it equals
/// `u H(u)^(t-1) D(u)` in terms of the transform of `lambda`.
fn kendall_drift(alpha: f64, lambda: &MixingMeasure, t: f64, e: f64) -> f64 {
    let p = MeasureSource::new(lambda, alpha).eval(e, Side::Right);
    if p.d == 0.0 {
        return 0.0;
    }
    e.powf(alpha) * p.h.powf(t - 1.0) * p.d
}

/// Where `lambda` first carries mass: its first positive atom, or the grid
/// node where its density has accumulated `threshold`. Below that point the
/// stored transform is dominated by the mass cut off under the grid, so
/// small powers of it are meaningless there.
fn first_mass(lambda: &MixingMeasure, threshold: f64) -> f64 {
    let atom = lambda.atoms().iter().find(|a| a.x > 0.0 && a.w > 0.0).map_or(f64::INFINITY, |a| a.x);
    let dens = lambda.density().map_or(f64::INFINITY, |d| {
        let mut cum = 0.0;
        for i in 0..d.grid.len() - 1 {
            cum += 0.5 * (d.grid[i + 1] - d.grid[i]) * (d.values[i] + d.values[i + 1]);
            if cum >= threshold {
                return d.grid[i + 1];
            }
        }
        d.hi()
    });
    let s = atom.min(dens);
    if s.is_finite() {
        s
    } else {
        0.0
    }
}

struct Floored<'a> {
    inner: &'a dyn Source,
    floor: f64,
    below: f64,
}

impl<'a> Floored<'a> {
    fn new(inner: &'a dyn Source, floor: f64) -> Self {
        let p = inner.eval(floor, Side::Left);
        Floored { inner, floor, below: p.h + p.d }
    }
}

impl Source for Floored<'_> {
    fn eval(&self, s: f64, side: Side) -> Point {
        if s < self.floor || (s == self.floor && side == Side::Left) {
            return Point { h: self.below, d: 0.0, fu: 0.0 };
        }
        self.inner.eval(s, side)
    }

    fn mass_at_zero(&self) -> f64 {
        self.below
    }

    fn floor(&self) -> f64 {
        self.floor
    }

    fn atom_sites(&self) -> Vec<f64> {
        self.inner.atom_sites().into_iter().filter(|&x| x >= self.floor).collect()
    }

    fn breaks(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.inner.breaks().into_iter().filter(|&x| x > self.floor).collect();
        b.push(self.floor);
        b
    }
}

/// Sum of two scaled restrictions, with negative results clamped to zero.
fn combine_parts(a: (Vec<Atom>, Option<Density>), b: (Vec<Atom>, Option<Density>)) -> Result<RadialLevyMeasure> {
    let mut atoms = a.0;
    atoms.extend(b.0);
    atoms.sort_by(|p, q| p.x.total_cmp(&q.x));
    let mut merged: Vec<Atom> = Vec::new();
    for at in atoms {
        match merged.last_mut() {
            Some(last) if (at.x - last.x).abs() <= ATOM_RESOLUTION * at.x => last.w += at.w,
            _ => merged.push(at),
        }
    }
    merged.retain(|at| at.w > 0.0);
    let density = match (a.1, b.1) {
        (None, None) => None,
        (Some(d), None) | (None, Some(d)) => Some(d),
        (Some(d1), Some(d2)) => Some(sum_densities(&[(1.0, &d1), (1.0, &d2)])),
    }
    .map(|mut d| {
        for v in d.values.iter_mut() {
            *v = v.max(0.0);
        }
        d
    })
    .and_then(trim_zeros);
    let density = density.map(LevyDensity::Grid);
    // Only the far probe can see a grid starting at eps; declare what it sees.
    let tail = match &density {
        Some(d) => {
            let (g1, g2) = (d.eval(1e5), d.eval(1e6));
            if g1 > 0.0 && g2 > 0.0 {
                (g1 / g2).log10().min(2.0)
            } else {
                2.0
            }
        }
        None => 2.0,
    };
    RadialLevyMeasure::new(merged, density, 0.0, tail)
}

/// Drops zero runs at either end, keeping one zero node as the boundary.
fn trim_zeros(d: Density) -> Option<Density> {
    let first = d.values.iter().position(|&v| v > 0.0)?;
    let last = d.values.iter().rposition(|&v| v > 0.0)?;
    let (lo, hi) = (first.saturating_sub(1), (last + 1).min(d.values.len() - 1));
    Some(Density { grid: d.grid[lo..=hi].to_vec(), values: d.values[lo..=hi].to_vec() })
}

/// `scale * m` on `[eps, inf)`, as atoms and a density.
fn restrict_scaled(m: &MixingMeasure, eps: f64, scale: f64) -> (Vec<Atom>, Option<Density>) {
    let atoms: Vec<Atom> =
        m.atoms().iter().filter(|a| a.x >= eps && a.w > 0.0).map(|a| Atom { x: a.x, w: a.w * scale }).collect();
    let density = m.density().and_then(|d| {
        let lo = d.lo().max(eps);
        if lo >= d.hi() {
            return None;
        }
        let mut grid = vec![lo];
        grid.extend(d.grid.iter().copied().filter(|&x| x > lo));
        let values: Vec<f64> = grid.iter().map(|&x| d.eval(x) * scale).collect();
        Some(Density { grid, values })
    });
    (atoms, density)
}
