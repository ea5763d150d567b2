//! Exact transform calculus for the Kendall kernel.
//!
//! With `u = s^alpha`, the mixture cf of `lambda` at `t = u^(-1/alpha)` is
//! `H(u) = int (1 - s^alpha / u)_+ lambda(ds)`. Writing `F` for the
//! distribution function of `s^alpha`, `D = F - H = u^(-1) int_{s^alpha <= u}
//! s^alpha lambda(ds)` and `H' = D / u`. Products, powers and exponentials of
//! `H` therefore have `(H, D, f)` given by chain-rule formulas in the inputs'
//! `(H, D, f)`, where `f = F'`; no numerical differentiation is needed.

use crate::algebra::grid::{materialize, Law, Side};
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::measures::{Atom, MixingMeasure};
use crate::quad;

/// Transform values at one point: `h = H(u)`, `d = F(u) - H(u)` and `fu`, the
/// density of `s^alpha` in `u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Point {
    pub h: f64,
    pub d: f64,
    pub fu: f64,
}

impl Point {
    const DELTA_ZERO: Point = Point { h: 1.0, d: 0.0, fu: 0.0 };

    fn cdf(&self) -> f64 {
        self.h + self.d
    }

    fn scaled(self, w: f64) -> Point {
        Point { h: w * self.h, d: w * self.d, fu: w * self.fu }
    }

    fn add(self, o: Point) -> Point {
        Point { h: self.h + o.h, d: self.d + o.d, fu: self.fu + o.fu }
    }
}

/// A radial law described through its Williamson-type transform. Points are
/// given in the original scale `s`, so atom locations stay exact.
pub(crate) trait Source: Sync + Send {
    fn eval(&self, s: f64, side: Side) -> Point;
    /// Mass at zero, equal to `H(0+)`.
    fn mass_at_zero(&self) -> f64;
    /// Everything below `floor` except the atom at zero is empty.
    fn floor(&self) -> f64;
    /// Locations where `F` may jump.
    fn atom_sites(&self) -> Vec<f64>;
    /// Locations where the density may jump.
    fn breaks(&self) -> Vec<f64>;
}

fn union(mut a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
    a.extend(b);
    a.sort_by(f64::total_cmp);
    a.dedup();
    a
}

/// Cumulative mass and `alpha`-moment tables of a stored measure.
pub(crate) struct MeasureSource {
    alpha: f64,
    p0: f64,
    ax: Vec<f64>,
    aw_cum: Vec<f64>,
    am_cum: Vec<f64>,
    grid: Vec<f64>,
    vals: Vec<f64>,
    mass_cum: Vec<f64>,
    mom_cum: Vec<f64>,
    jumps: Vec<f64>,
}

/// `int_a^b x^alpha (v0 + (v1 - v0)(x - a)/(b - a)) dx` over part of a cell.
fn linear_moment(alpha: f64, a: f64, b: f64, x0: f64, x1: f64, v0: f64, v1: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let lin = |x: f64| v0 + (v1 - v0) * (x - x0) / (x1 - x0);
    if a == 0.0 {
        // Exact: the integrand is x^alpha times a linear function.
        let c1 = (v1 - v0) / (x1 - x0);
        let c0 = v0 - c1 * x0;
        return c0 * b.powf(alpha + 1.0) / (alpha + 1.0) + c1 * b.powf(alpha + 2.0) / (alpha + 2.0);
    }
    quad::panel(quad::gl8(), |x| x.powf(alpha) * lin(x), a, b)
}

impl MeasureSource {
    pub(crate) fn new(m: &MixingMeasure, alpha: f64) -> Self {
        let mut p0 = 0.0;
        let mut ax = Vec::new();
        let mut aw_cum = vec![0.0];
        let mut am_cum = vec![0.0];
        for a in m.atoms() {
            if a.x == 0.0 {
                p0 += a.w;
                continue;
            }
            ax.push(a.x);
            aw_cum.push(aw_cum.last().unwrap() + a.w);
            am_cum.push(am_cum.last().unwrap() + a.w * a.x.powf(alpha));
        }
        let (mut grid, mut vals, mut mass_cum, mut mom_cum, mut jumps) = (vec![], vec![], vec![], vec![], vec![]);
        if let Some(d) = m.density() {
            grid = d.grid.clone();
            vals = d.values.clone();
            mass_cum.push(0.0);
            mom_cum.push(0.0);
            for i in 0..grid.len() - 1 {
                let (x0, x1, v0, v1) = (grid[i], grid[i + 1], vals[i], vals[i + 1]);
                mass_cum.push(mass_cum[i] + 0.5 * (x1 - x0) * (v0 + v1));
                mom_cum.push(mom_cum[i] + linear_moment(alpha, x0, x1, x0, x1, v0, v1));
                if x1 - x0 < 1e-10 * x1 {
                    jumps.push(x1);
                }
            }
            jumps.push(grid[0]);
            jumps.push(*grid.last().unwrap());
        }
        MeasureSource { alpha, p0, ax, aw_cum, am_cum, grid, vals, mass_cum, mom_cum, jumps }
    }

    fn density_at(&self, s: f64, side: Side) -> f64 {
        let n = self.grid.len();
        if n == 0 {
            return 0.0;
        }
        let (lo, hi) = (self.grid[0], self.grid[n - 1]);
        let inside = match side {
            Side::Right => s >= lo && s < hi,
            Side::Left => s > lo && s <= hi,
        };
        if !inside {
            return 0.0;
        }
        let i = match side {
            Side::Right => self.grid.partition_point(|&g| g <= s) - 1,
            Side::Left => self.grid.partition_point(|&g| g < s) - 1,
        };
        let (x0, x1) = (self.grid[i], self.grid[i + 1]);
        // A guard sliver stands for a jump at its right end.
        if x1 - x0 < 1e-10 * x1 {
            return if side == Side::Left { self.vals[i] } else { self.vals[i + 1] };
        }
        self.vals[i] + (self.vals[i + 1] - self.vals[i]) * (s - x0) / (x1 - x0)
    }

    /// Density mass and `alpha`-moment on `[lo, s]`.
    fn density_cum(&self, s: f64) -> (f64, f64) {
        let n = self.grid.len();
        if n == 0 || s <= self.grid[0] {
            return (0.0, 0.0);
        }
        if s >= self.grid[n - 1] {
            return (self.mass_cum[n - 1], self.mom_cum[n - 1]);
        }
        let i = self.grid.partition_point(|&g| g <= s) - 1;
        let (x0, x1, v0, v1) = (self.grid[i], self.grid[i + 1], self.vals[i], self.vals[i + 1]);
        let vs = v0 + (v1 - v0) * (s - x0) / (x1 - x0);
        let mass = self.mass_cum[i] + 0.5 * (s - x0) * (v0 + vs);
        let mom = self.mom_cum[i] + linear_moment(self.alpha, x0, s, x0, x1, v0, v1);
        (mass, mom)
    }
}

impl Source for MeasureSource {
    fn eval(&self, s: f64, side: Side) -> Point {
        let k = match side {
            Side::Right => self.ax.partition_point(|&x| x <= s),
            Side::Left => self.ax.partition_point(|&x| x < s),
        };
        let (dm, dmom) = self.density_cum(s);
        let f = self.p0 + self.aw_cum[k] + dm;
        let u = s.powf(self.alpha);
        let d = (self.am_cum[k] + dmom) / u;
        let fs = self.density_at(s, side);
        let fu = if fs == 0.0 { 0.0 } else { fs * s / (self.alpha * u) };
        Point { h: (f - d).max(0.0), d, fu }
    }

    fn mass_at_zero(&self) -> f64 {
        self.p0
    }

    fn floor(&self) -> f64 {
        let a = self.ax.first().copied().unwrap_or(f64::INFINITY);
        let d = self.grid.first().copied().unwrap_or(f64::INFINITY);
        a.min(d)
    }

    fn atom_sites(&self) -> Vec<f64> {
        self.ax.clone()
    }

    fn breaks(&self) -> Vec<f64> {
        self.jumps.clone()
    }
}

/// Transform `H_a * H_b`.
pub(crate) struct Product<'a> {
    pub alpha: f64,
    pub a: &'a dyn Source,
    pub b: &'a dyn Source,
}

pub(crate) fn product_point(u: f64, a: Point, b: Point) -> Point {
    Point { h: a.h * b.h, d: a.d * b.h + a.h * b.d, fu: a.fu * b.h + a.h * b.fu + 2.0 * a.d * b.d / u }
}

impl Source for Product<'_> {
    fn eval(&self, s: f64, side: Side) -> Point {
        product_point(s.powf(self.alpha), self.a.eval(s, side), self.b.eval(s, side))
    }

    fn mass_at_zero(&self) -> f64 {
        self.a.mass_at_zero() * self.b.mass_at_zero()
    }

    fn floor(&self) -> f64 {
        let parts = [(self.a.mass_at_zero(), self.a.floor()), (self.b.mass_at_zero(), self.b.floor())];
        let empty: Vec<f64> = parts.iter().filter(|p| p.0 == 0.0).map(|p| p.1).collect();
        if empty.is_empty() {
            parts[0].1.min(parts[1].1)
        } else {
            empty.into_iter().fold(0.0, f64::max)
        }
    }

    fn atom_sites(&self) -> Vec<f64> {
        union(self.a.atom_sites(), self.b.atom_sites())
    }

    fn breaks(&self) -> Vec<f64> {
        union(union(self.a.breaks(), self.b.breaks()), self.atom_sites())
    }
}

/// Transform `exp(rate * (H - 1))`.
pub(crate) struct Exp<'a> {
    pub alpha: f64,
    pub rate: f64,
    pub inner: &'a dyn Source,
}

impl Source for Exp<'_> {
    fn eval(&self, s: f64, side: Side) -> Point {
        let p = self.inner.eval(s, side);
        let u = s.powf(self.alpha);
        let a = self.rate;
        let h = (a * (p.h - 1.0)).exp();
        Point { h, d: a * h * p.d, fu: a * h * (a * p.d * p.d / u + p.fu) }
    }

    fn mass_at_zero(&self) -> f64 {
        (self.rate * (self.inner.mass_at_zero() - 1.0)).exp()
    }

    fn floor(&self) -> f64 {
        self.inner.floor()
    }

    fn atom_sites(&self) -> Vec<f64> {
        self.inner.atom_sites()
    }

    fn breaks(&self) -> Vec<f64> {
        union(self.inner.breaks(), self.inner.atom_sites())
    }
}

/// Transform `H^r`.
pub(crate) struct Power<'a> {
    pub alpha: f64,
    pub r: f64,
    pub inner: &'a dyn Source,
}

impl Source for Power<'_> {
    fn eval(&self, s: f64, side: Side) -> Point {
        let p = self.inner.eval(s, side);
        let r = self.r;
        if p.h <= 0.0 {
            if p.d > 0.0 && r < 1.0 {
                // The r-th power of a transform touching zero has infinite slope.
                return Point { h: 0.0, d: f64::INFINITY, fu: f64::INFINITY };
            }
            return Point { h: 0.0, d: if r == 1.0 { p.d } else { 0.0 }, fu: if r == 1.0 { p.fu } else { 0.0 } };
        }
        let u = s.powf(self.alpha);
        let hr1 = p.h.powf(r - 1.0);
        Point { h: hr1 * p.h, d: r * hr1 * p.d, fu: r * hr1 * ((r - 1.0) * p.d * p.d / (u * p.h) + p.fu) }
    }

    fn mass_at_zero(&self) -> f64 {
        self.inner.mass_at_zero().powf(self.r)
    }

    fn floor(&self) -> f64 {
        self.inner.floor()
    }

    fn atom_sites(&self) -> Vec<f64> {
        self.inner.atom_sites()
    }

    fn breaks(&self) -> Vec<f64> {
        union(self.inner.breaks(), self.inner.atom_sites())
    }
}

/// Weighted sum of the product powers `H^k`, `k = 0..weights.len()`,
/// each built by repeated application of the product rule.
pub(crate) struct Series<'a> {
    pub alpha: f64,
    pub weights: Vec<f64>,
    pub inner: &'a dyn Source,
}

impl Source for Series<'_> {
    fn eval(&self, s: f64, side: Side) -> Point {
        let u = s.powf(self.alpha);
        let p = self.inner.eval(s, side);
        let mut term = Point::DELTA_ZERO;
        let mut acc = term.scaled(self.weights[0]);
        for &w in &self.weights[1..] {
            term = product_point(u, term, p);
            acc = acc.add(term.scaled(w));
        }
        acc
    }

    fn mass_at_zero(&self) -> f64 {
        let p0 = self.inner.mass_at_zero();
        self.weights.iter().enumerate().map(|(k, w)| w * p0.powi(k as i32)).sum()
    }

    fn floor(&self) -> f64 {
        self.inner.floor()
    }

    fn atom_sites(&self) -> Vec<f64> {
        self.inner.atom_sites()
    }

    fn breaks(&self) -> Vec<f64> {
        union(self.inner.breaks(), self.inner.atom_sites())
    }
}

/// The canonical strictly `p`-stable element with transform
/// `H(u) = exp(-u^(-p/alpha))`, i.e. mixture cf `exp(-|t|^p)`.
pub(crate) struct StableElement {
    pub alpha: f64,
    pub p: f64,
}

impl Source for StableElement {
    fn eval(&self, s: f64, _side: Side) -> Point {
        let y = s.powf(-self.p);
        let h = (-y).exp();
        let q = self.p / self.alpha;
        let u = s.powf(self.alpha);
        let d = q * y * h;
        let fu = if h == 0.0 { 0.0 } else { h * (1.0 - q + q * y) * q * y / u };
        Point { h, d, fu }
    }

    fn mass_at_zero(&self) -> f64 {
        0.0
    }

    fn floor(&self) -> f64 {
        0.0
    }

    fn atom_sites(&self) -> Vec<f64> {
        Vec::new()
    }

    fn breaks(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Adapter exposing a transform source as a law in the original scale.
pub(crate) struct SourceLaw<'a> {
    pub alpha: f64,
    pub src: &'a dyn Source,
}

impl Law for SourceLaw<'_> {
    fn cdf(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return self.src.mass_at_zero();
        }
        self.src.eval(s, Side::Right).cdf()
    }

    fn density(&self, s: f64, side: Side) -> f64 {
        let p = self.src.eval(s, side);
        if p.fu == 0.0 {
            return 0.0;
        }
        p.fu * self.alpha * s.powf(self.alpha) / s
    }

    fn atoms(&self) -> Vec<Atom> {
        let mut out = vec![Atom { x: 0.0, w: self.src.mass_at_zero() }];
        for x in self.src.atom_sites() {
            let w = self.src.eval(x, Side::Right).cdf() - self.src.eval(x, Side::Left).cdf();
            out.push(Atom { x, w });
        }
        out
    }

    fn breaks(&self) -> Vec<f64> {
        let mut b = self.src.breaks();
        b.push(self.src.floor());
        b.retain(|x| x.is_finite());
        b
    }

    fn floor(&self) -> f64 {
        let f = self.src.floor();
        if f.is_finite() {
            f
        } else {
            0.0
        }
    }
}

pub(crate) fn build(kernel: &Kernel, alpha: f64, src: &dyn Source) -> Result<MixingMeasure> {
    let tol = kernel.tolerances();
    materialize(&SourceLaw { alpha, src }, tol.grid_points, tol.tail_mass)
}

pub(crate) fn convolve(kernel: &Kernel, alpha: f64, a: &MixingMeasure, b: &MixingMeasure) -> Result<MixingMeasure> {
    let (sa, sb) = (MeasureSource::new(a, alpha), MeasureSource::new(b, alpha));
    build(kernel, alpha, &Product { alpha, a: &sa, b: &sb })
}

pub(crate) fn power(kernel: &Kernel, alpha: f64, m: &MixingMeasure, r: f64) -> Result<MixingMeasure> {
    let src = MeasureSource::new(m, alpha);
    build(kernel, alpha, &Power { alpha, r, inner: &src })
}

pub(crate) fn compound_poisson(kernel: &Kernel, alpha: f64, rate: f64, m: &MixingMeasure) -> Result<MixingMeasure> {
    let src = MeasureSource::new(m, alpha);
    build(kernel, alpha, &Exp { alpha, rate, inner: &src })
}

pub(crate) fn series(kernel: &Kernel, alpha: f64, weights: Vec<f64>, m: &MixingMeasure) -> Result<MixingMeasure> {
    let src = MeasureSource::new(m, alpha);
    build(kernel, alpha, &Series { alpha, weights, inner: &src })
}

pub(crate) fn stable_element(kernel: &Kernel, alpha: f64, p: f64) -> Result<MixingMeasure> {
    build(kernel, alpha, &StableElement { alpha, p })
}

/// Maps a failed materialization of a fractional power to the error callers
/// expect for inputs without the requested root.
pub(crate) fn not_divisible(e: Error) -> Error {
    match e {
        Error::NotAMixture(m) => Error::NotInfinitelyDivisible(m),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{kolmogorov_distance, CdfView};

    fn kernel(alpha: f64) -> Kernel {
        Kernel::kendall(alpha).unwrap()
    }

    fn unit_atom_poisson_cdf(alpha: f64, c: f64, s: f64) -> f64 {
        if s < 1.0 {
            (-c).exp()
        } else {
            let y = c * s.powf(-alpha);
            (-y).exp() * (1.0 + y)
        }
    }

    #[test]
    fn compound_poisson_of_unit_atom_matches_closed_form() {
        for &(alpha, c) in &[(0.5, 0.5), (0.5, 2.0), (1.0, 1.0)] {
            let k = kernel(alpha);
            let m = compound_poisson(&k, alpha, c, &MixingMeasure::delta(1.0)).unwrap();
            let atoms = m.atoms();
            assert_eq!(atoms.len(), 2);
            assert!((atoms[0].w - (-c).exp()).abs() < 1e-10, "{:?}", atoms);
            assert!((atoms[1].w - c * (-c).exp()).abs() < 1e-10, "{:?}", atoms);
            let view = CdfView::new(&m);
            let mut worst: f64 = 0.0;
            for i in 0..4000 {
                let s = (i as f64 * 0.01 - 5.0).exp() + 1.0;
                worst = worst.max((view.cdf(s) - unit_atom_poisson_cdf(alpha, c, s)).abs());
            }
            assert!(worst < 1e-7, "alpha {alpha} c {c}: {worst:e}");
        }
    }

    #[test]
    fn unit_atom_transform_is_fejer_like() {
        let src = MeasureSource::new(&MixingMeasure::delta(1.0), 0.5);
        let p = src.eval(4.0, Side::Right);
        assert!((p.h - 0.5).abs() < 1e-15 && (p.d - 0.5).abs() < 1e-15);
        assert_eq!(src.eval(0.5, Side::Right).cdf(), 0.0);
        assert_eq!(src.eval(1.0, Side::Left).cdf(), 0.0);
        assert_eq!(src.eval(1.0, Side::Right).cdf(), 1.0);
    }

    #[test]
    fn product_cf_is_product_of_cfs() {
        let k = kernel(0.5);
        let a = MixingMeasure::new(vec![Atom { x: 0.5, w: 0.3 }, Atom { x: 2.0, w: 0.7 }], None).unwrap();
        let b = MixingMeasure::new(vec![Atom { x: 0.0, w: 0.2 }, Atom { x: 1.0, w: 0.8 }], None).unwrap();
        let c = convolve(&k, 0.5, &a, &b).unwrap();
        for &t in &[0.1, 0.3, 0.7, 1.0, 1.5, 3.0] {
            let want = a.mixture_cf(&k, t) * b.mixture_cf(&k, t);
            assert!((c.mixture_cf(&k, t) - want).abs() < 1e-7, "t {t}");
        }
        let swapped = convolve(&k, 0.5, &b, &a).unwrap();
        assert_eq!(kolmogorov_distance(&c, &swapped), 0.0);
    }

    #[test]
    fn half_power_halves_the_rate() {
        let k = kernel(0.5);
        let full = compound_poisson(&k, 0.5, 2.0, &MixingMeasure::delta(1.0)).unwrap();
        let half = power(&k, 0.5, &full, 0.5).unwrap();
        let direct = compound_poisson(&k, 0.5, 1.0, &MixingMeasure::delta(1.0)).unwrap();
        assert!(kolmogorov_distance(&half, &direct) < 1e-7);
    }

    #[test]
    fn fractional_power_of_atom_is_rejected() {
        let k = kernel(0.5);
        let err = power(&k, 0.5, &MixingMeasure::delta(1.0), 0.5).map_err(not_divisible).unwrap_err();
        assert!(matches!(err, Error::NotInfinitelyDivisible(_)), "{err}");
    }

    #[test]
    fn series_matches_exponential() {
        let k = kernel(0.5);
        let a = 1.0f64;
        let weights: Vec<f64> =
            (0..=30).map(|j| (-a).exp() * a.powi(j) / (1..=j).map(f64::from).product::<f64>()).collect();
        let total: f64 = weights.iter().sum();
        let weights = weights.iter().map(|w| w / total).collect();
        let s = series(&k, 0.5, weights, &MixingMeasure::delta(1.0)).unwrap();
        let e = compound_poisson(&k, 0.5, a, &MixingMeasure::delta(1.0)).unwrap();
        assert!(kolmogorov_distance(&s, &e) < 1e-8);
    }

    #[test]
    fn stable_element_has_stable_cf() {
        for &(alpha, p) in &[(0.5, 0.25), (0.7, 0.3), (0.5, 0.5), (1.0, 1.0)] {
            let k = kernel(alpha);
            let m = stable_element(&k, alpha, p).unwrap();
            for &t in &[0.01, 0.1, 1.0, 3.0, 10.0] {
                let got = m.mixture_cf(&k, t);
                let want = (-f64::powf(t, p)).exp();
                assert!((got - want).abs() < 1e-6, "alpha {alpha} p {p} t {t}: {got} vs {want}");
            }
        }
    }
}
