//! Recovering a mixing measure from its mixture characteristic function.
//!
//! Kendall: with `x = ln s`, `H(x) = phi(e^-x)` is the transform of
//! `kendall::Source`, so `F = H + H_x / alpha` and the density follow from
//! numerical derivatives. Atoms show up as kinks of `H`; they are located
//! first so that derivative stencils never straddle one.
//!
//! Stable: `phi(t) = L(|t|^alpha)` with `L` the Laplace transform of
//! `s^alpha`. Finitely many atoms make `L` a finite exponential sum, which a
//! matrix pencil recovers to rounding accuracy. Anything else falls back to a
//! Gaver–Stehfest inversion, which is only accurate to a few digits.

use nalgebra::{DMatrix, DVector, Schur, SVD};

use crate::algebra::grid::{materialize_parts, octave_range, Law, Side};
use crate::algebra::kendall::{self, Point, Source, SourceLaw};
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::measures::{Atom, MixingMeasure};

pub(crate) type Cf<'a> = &'a (dyn Fn(f64) -> f64 + Sync);

/// Jumps of the distribution function below this are left in the density.
const MIN_ATOM: f64 = 1e-6;
/// Kink scan resolution, in nodes per octave of `s`.
const SCAN_PER_OCTAVE: f64 = 64.0;
/// Within this distance (in `ln s`) of a kink, derivatives are one-sided.
const ONE_SIDED_ZONE: f64 = 1e-3;

struct CfSource<'a> {
    alpha: f64,
    phi: Cf<'a>,
    p0: f64,
    /// Kink locations in `ln s`, increasing.
    kinks: Vec<f64>,
}

impl CfSource<'_> {
    fn g(&self, x: f64) -> f64 {
        (self.phi)((-x).exp())
    }

    fn central(&self, x: f64, h: f64) -> (f64, f64) {
        let (m2, m1, p1, p2) = (self.g(x - 2.0 * h), self.g(x - h), self.g(x + h), self.g(x + 2.0 * h));
        let d1 = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h);
        let d2 = (-m2 + 16.0 * m1 - 30.0 * self.g(x) + 16.0 * p1 - p2) / (12.0 * h * h);
        (d1, d2)
    }

    /// Second-order one-sided first and second derivatives; `dir` is +1 to
    /// look right and -1 to look left.
    fn one_sided(&self, x: f64, dir: f64) -> (f64, f64) {
        let h1 = 1e-5 * dir;
        let d1 = (-3.0 * self.g(x) + 4.0 * self.g(x + h1) - self.g(x + 2.0 * h1)) / (2.0 * h1);
        let h2 = 1e-4 * dir;
        let g: Vec<f64> = (0..4).map(|k| self.g(x + k as f64 * h2)).collect();
        let d2 = (2.0 * g[0] - 5.0 * g[1] + 4.0 * g[2] - g[3]) / (h2 * h2);
        (d1, d2)
    }

    fn nearest_kink(&self, x: f64) -> Option<f64> {
        let i = self.kinks.partition_point(|&c| c < x);
        let mut best: Option<f64> = None;
        for j in [i.wrapping_sub(1), i] {
            if let Some(&c) = self.kinks.get(j) {
                if best.is_none_or(|b| (c - x).abs() < (b - x).abs()) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn derivatives(&self, x: f64, side: Side) -> (f64, f64) {
        let dist = self.nearest_kink(x).map(|c| (x - c, (x - c).abs()));
        if let Some((off, d)) = dist {
            if d < ONE_SIDED_ZONE {
                let dir = if d < 1e-14 {
                    if side == Side::Right {
                        1.0
                    } else {
                        -1.0
                    }
                } else {
                    off.signum()
                };
                return self.one_sided(x, dir);
            }
        }
        let room = dist.map_or(f64::INFINITY, |(_, d)| d / 2.5);
        let mut h = room.min(1e-2);
        let (mut d1, mut d2) = self.central(x, h);
        while h > 2e-5 {
            let (n1, n2) = self.central(x, 0.5 * h);
            let done = (n1 - d1).abs() < 1e-8;
            h *= 0.5;
            d1 = n1;
            if h >= 1e-4 {
                d2 = n2;
            }
            if done {
                break;
            }
        }
        (d1, d2)
    }
}

impl Source for CfSource<'_> {
    fn eval(&self, s: f64, side: Side) -> Point {
        let x = s.ln();
        let h = self.g(x);
        let (d1, d2) = self.derivatives(x, side);
        let u = s.powf(self.alpha);
        Point { h, d: d1 / self.alpha, fu: (d1 + d2 / self.alpha) / (self.alpha * u) }
    }

    fn mass_at_zero(&self) -> f64 {
        self.p0
    }

    fn floor(&self) -> f64 {
        0.0
    }

    fn atom_sites(&self) -> Vec<f64> {
        self.kinks.iter().map(|c| c.exp()).collect()
    }

    fn breaks(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Narrows a bracket `[a, b]` around a kink of `g` by repeated quartering,
/// keeping the part whose secant slopes change the most.
fn locate_kink(g: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let (mut ga, mut gb) = (g(a), g(b));
    let mut gm = g(0.5 * (a + b));
    let scale = ga.abs().max(gb.abs()).max(1e-300);
    for _ in 0..200 {
        let w = b - a;
        let m = 0.5 * (a + b);
        if w <= 1e-14 * (1.0 + m.abs()) {
            break;
        }
        let (q1, q3) = (a + 0.25 * w, a + 0.75 * w);
        let (g1, g3) = (g(q1), g(q3));
        let q = 0.25 * w;
        let s = [(g1 - ga) / q, (gm - g1) / q, (g3 - gm) / q, (gb - g3) / q];
        let d = [s[1] - s[0], s[2] - s[1], s[3] - s[2]];
        let noise = 64.0 * f64::EPSILON * scale / q;
        if d.iter().all(|v| v.abs() < noise) {
            break;
        }
        if d[1].abs() > d[0].abs() + d[2].abs() {
            (a, b, ga, gb, gm) = (q1, q3, g1, g3, gm);
        } else if d[0].abs() > d[2].abs() {
            (b, gb, gm) = (m, gm, g1);
        } else {
            (a, ga, gm) = (m, gm, g3);
        }
    }
    0.5 * (a + b)
}

fn find_kinks(src: &CfSource, klo: i32, khi: i32) -> Result<Vec<f64>> {
    let h = std::f64::consts::LN_2 / SCAN_PER_OCTAVE;
    let x0 = (klo - 1) as f64 * std::f64::consts::LN_2;
    let n = ((khi - klo + 2) as f64 * SCAN_PER_OCTAVE) as usize;
    let xs: Vec<f64> = (0..=n).map(|i| x0 + i as f64 * h).collect();
    let gs: Vec<f64> = xs.iter().map(|&x| src.g(x)).collect();
    let slopes: Vec<f64> = gs.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    let changes: Vec<f64> = slopes.windows(2).map(|w| w[1] - w[0]).collect();
    let threshold = 0.1 * MIN_ATOM * src.alpha;
    let g = |x: f64| src.g(x);
    let mut found: Vec<f64> = Vec::new();
    for i in 2..changes.len().saturating_sub(2) {
        let smooth = 0.5 * (changes[i - 2] + changes[i + 2]);
        if (changes[i] - smooth).abs() < threshold {
            continue;
        }
        let (a, b) = (xs[i - 1], xs[(i + 3).min(n)]);
        if found.iter().any(|&f| f >= a && f <= b) {
            continue;
        }
        let c = locate_kink(&g, xs[i], xs[i + 2]);
        let probe = CfSource { alpha: src.alpha, phi: src.phi, p0: src.p0, kinks: Vec::new() };
        let (right, _) = probe.one_sided(c, 1.0);
        let (left, _) = probe.one_sided(c, -1.0);
        let jump = (right - left) / src.alpha;
        if jump <= -MIN_ATOM {
            return Err(Error::NotAMixture(format!("transform has a concave kink at s = {:.6e}", c.exp())));
        }
        if jump >= MIN_ATOM {
            found.push(c);
        }
    }
    found.sort_by(f64::total_cmp);
    Ok(found)
}

pub(crate) fn invert_kendall(kernel: &Kernel, alpha: f64, phi: Cf) -> Result<MixingMeasure> {
    let p0 = phi(1e150);
    let tol = kernel.tolerances();
    let mut src = CfSource { alpha, phi, p0, kinks: Vec::new() };
    let (klo, khi) = octave_range(&SourceLaw { alpha, src: &src }, p0, tol.tail_mass);
    src.kinks = find_kinks(&src, klo, khi)?;
    kendall::build(kernel, alpha, &src)
}

/// Exponential sum `L(theta) = sum c_j exp(-theta u_j)` fitted by a matrix
/// pencil; `None` when `L` is not such a sum to rounding accuracy.
fn matrix_pencil(l: &dyn Fn(f64) -> f64, delta: f64) -> Option<Vec<(f64, f64)>> {
    const N: usize = 48;
    const PENCIL: usize = 24;
    let y: Vec<f64> = (0..N).map(|k| l(k as f64 * delta)).collect();
    let rows = N - PENCIL;
    let hankel = DMatrix::from_fn(rows, PENCIL + 1, |i, j| y[i + j]);
    let svd = SVD::new(hankel, false, true);
    let sv = &svd.singular_values;
    let rank = sv.iter().filter(|&&v| v > 1e-11 * sv[0]).count();
    if rank == 0 || rank >= PENCIL {
        return None;
    }
    let vt = svd.v_t.as_ref()?;
    let v = vt.rows(0, rank).transpose();
    let v1 = v.rows(0, PENCIL).into_owned();
    let v2 = v.rows(1, PENCIL).into_owned();
    let pinv = SVD::new(v1, true, true).pseudo_inverse(1e-13).ok()?;
    let pencil = pinv * v2;
    let eig = Schur::new(pencil).complex_eigenvalues();
    let mut z = Vec::with_capacity(rank);
    for e in eig.iter() {
        if e.im.abs() > 1e-8 || e.re <= 0.0 || e.re > 1.0 + 1e-9 {
            return None;
        }
        z.push(e.re.min(1.0));
    }
    let vander = DMatrix::from_fn(N, rank, |k, j| z[j].powi(k as i32));
    let rhs = DVector::from_column_slice(&y);
    let c = SVD::new(vander, true, true).solve(&rhs, 1e-14).ok()?;
    let out: Vec<(f64, f64)> = z.iter().zip(c.iter()).map(|(&z, &c)| (-z.ln() / delta, c)).collect();
    for k in 0..N {
        let th = (k as f64 + 0.5) * delta;
        let fit: f64 = out.iter().map(|&(u, c)| c * (-th * u).exp()).sum();
        if (fit - l(th)).abs() > 1e-9 {
            return None;
        }
    }
    if out.iter().any(|&(_, c)| c < -1e-10) {
        return None;
    }
    Some(out)
}

/// Gaver–Stehfest weights for `n` terms (`n` even).
fn stehfest_weights(n: usize) -> Vec<f64> {
    let fact = |k: usize| (1..=k).map(|i| i as f64).product::<f64>();
    let half = n / 2;
    (1..=n)
        .map(|k| {
            let mut v = 0.0;
            for j in k.div_ceil(2)..=k.min(half) {
                let jf = j as f64;
                v += jf.powi(half as i32) * fact(2 * j)
                    / (fact(half - j) * fact(j) * fact(j - 1) * fact(k - j) * fact(2 * j - k));
            }
            if (k + half) % 2 == 1 {
                -v
            } else {
                v
            }
        })
        .collect()
}

struct StehfestLaw<'a> {
    alpha: f64,
    l: &'a (dyn Fn(f64) -> f64 + Sync),
    p0: f64,
    weights: Vec<f64>,
}

impl Law for StehfestLaw<'_> {
    fn cdf(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return self.p0;
        }
        let v = s.powf(self.alpha);
        let ln2 = std::f64::consts::LN_2;
        let sum: f64 = self
            .weights
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let k = (i + 1) as f64;
                w * (((self.l)(k * ln2 / v)) - self.p0) / k
            })
            .sum();
        (self.p0 + sum).clamp(0.0, 1.0)
    }

    fn density(&self, s: f64, _side: Side) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let v = s.powf(self.alpha);
        let ln2 = std::f64::consts::LN_2;
        let sum: f64 =
            self.weights.iter().enumerate().map(|(i, w)| w * ((self.l)((i + 1) as f64 * ln2 / v) - self.p0)).sum();
        (ln2 / v * sum * self.alpha * v / s).max(0.0)
    }

    fn atoms(&self) -> Vec<Atom> {
        vec![Atom { x: 0.0, w: self.p0 }]
    }

    fn breaks(&self) -> Vec<f64> {
        Vec::new()
    }
}

pub(crate) fn invert_stable(kernel: &Kernel, alpha: f64, phi: Cf) -> Result<MixingMeasure> {
    let l = |theta: f64| phi(theta.powf(1.0 / alpha));
    let p0 = l(1e300).max(0.0);
    if 1.0 - p0 < 1e-14 {
        return Ok(MixingMeasure::delta(0.0));
    }
    // Scale of the power axis: where L has dropped halfway to its floor.
    let target = p0 + 0.5 * (1.0 - p0);
    let (mut lo, mut hi) = (1e-300f64, 1e300f64);
    for _ in 0..200 {
        let m = (lo.ln() + 0.5 * (hi.ln() - lo.ln())).exp();
        if l(m) > target {
            lo = m;
        } else {
            hi = m;
        }
        if hi / lo < 1.0 + 1e-6 {
            break;
        }
    }
    let half = (lo * hi).sqrt();
    if let Some(terms) = matrix_pencil(&l, half / 6.0) {
        let atoms = terms
            .into_iter()
            .filter(|&(_, c)| c > 0.0)
            .map(|(u, c)| Atom { x: if u <= 0.0 { 0.0 } else { u.powf(1.0 / alpha) }, w: c })
            .collect();
        return MixingMeasure::assembled(atoms, None);
    }
    let tol = kernel.tolerances();
    let law = StehfestLaw { alpha, l: &l, p0, weights: stehfest_weights(14) };
    let (atoms, density) = materialize_parts(&law, tol.stable_grid, tol.tail_mass.max(1e-7))?;
    // The inversion is approximate, so the density is renormalized.
    let density = density.map(|mut d| {
        let scale = (1.0 - p0) / d.mass();
        d.values.iter_mut().for_each(|v| *v *= scale);
        d
    });
    MixingMeasure::assembled(atoms, density)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::kolmogorov_distance;

    #[test]
    fn kendall_fejer_transform_is_unit_atom() {
        let k = Kernel::kendall(0.5).unwrap();
        let phi = |t: f64| k.cf(t);
        let m = invert_kendall(&k, 0.5, &phi).unwrap();
        assert!(m.density().is_none_or(|d| d.mass() < 1e-9));
        let a = m.atoms().iter().find(|a| a.x > 0.0).unwrap();
        assert!((a.x - 1.0).abs() < 1e-9 && (a.w - 1.0).abs() < 1e-9, "{a:?}");
    }

    #[test]
    fn kendall_round_trip_of_atoms() {
        let k = Kernel::kendall(0.7).unwrap();
        let m =
            MixingMeasure::new(vec![Atom { x: 0.0, w: 0.1 }, Atom { x: 0.4, w: 0.3 }, Atom { x: 1.7, w: 0.6 }], None)
                .unwrap();
        let phi = |t: f64| m.mixture_cf(&k, t);
        let back = invert_kendall(&k, 0.7, &phi).unwrap();
        assert!(kolmogorov_distance(&m, &back) < 1e-6, "{back:?}");
    }

    #[test]
    fn kendall_compound_poisson_from_cf() {
        let (alpha, c) = (0.5, 2.0);
        let k = Kernel::kendall(alpha).unwrap();
        let phi = |t: f64| (c * (k.cf(t) - 1.0)).exp();
        let m = invert_kendall(&k, alpha, &phi).unwrap();
        let want = kendall::compound_poisson(&k, alpha, c, &MixingMeasure::delta(1.0)).unwrap();
        assert!(kolmogorov_distance(&m, &want) < 1e-6);
        let one = m.atoms().iter().find(|a| a.x > 0.5).unwrap();
        assert!((one.w - c * (-c).exp()).abs() < 1e-8, "{one:?}");
    }

    #[test]
    fn stable_exponential_is_an_atom() {
        let k = Kernel::stable(1.0).unwrap();
        let phi = |t: f64| (-2.0 * t.abs()).exp();
        let m = invert_stable(&k, 1.0, &phi).unwrap();
        assert_eq!(m.atoms().len(), 1);
        assert!((m.atoms()[0].x - 2.0).abs() < 1e-10);
    }

    #[test]
    fn stable_round_trip_of_atoms() {
        let k = Kernel::stable(0.8).unwrap();
        let m =
            MixingMeasure::new(vec![Atom { x: 0.0, w: 0.2 }, Atom { x: 0.5, w: 0.5 }, Atom { x: 2.0, w: 0.3 }], None)
                .unwrap();
        let phi = |t: f64| m.mixture_cf(&k, t);
        let back = invert_stable(&k, 0.8, &phi).unwrap();
        assert!(kolmogorov_distance(&m, &back) < 1e-8, "{back:?}");
    }

    #[test]
    fn stehfest_recovers_a_smooth_law_roughly() {
        // Laplace transform 1 / (1 + theta) of a unit exponential on the power axis.
        let k = Kernel::stable(1.0).unwrap();
        let phi = |t: f64| 1.0 / (1.0 + t.abs());
        let m = invert_stable(&k, 1.0, &phi).unwrap();
        for x in [0.3, 1.0, 2.5] {
            assert!((m.cdf(x) - (1.0 - (-x).exp())).abs() < 1e-3, "x {x}");
        }
    }
}
