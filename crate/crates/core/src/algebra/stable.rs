//! Algebra for the symmetric stable kernel. With `U = s^alpha`, the mixture
//! cf is `E exp(-|t|^alpha U)`, the Laplace transform of `U` at `|t|^alpha`,
//! so generalized convolution is ordinary convolution of the laws of `U`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::algebra::grid::{materialize, DensityPart, Law, Side};
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::measures::{merge_atoms, Atom, MixingMeasure, ATOM_RESOLUTION};

/// Weight below which enumerated atoms are discarded.
const PRUNE: f64 = 1e-17;

/// `(a^alpha + b^alpha)^(1/alpha)`, exact when either side is zero.
pub(crate) fn pair_sum(alpha: f64, a: f64, b: f64) -> f64 {
    if a == 0.0 {
        b
    } else if b == 0.0 {
        a
    } else if alpha == 1.0 {
        a + b
    } else if alpha == 2.0 {
        a.hypot(b)
    } else {
        (a.powf(alpha) + b.powf(alpha)).powf(1.0 / alpha)
    }
}

fn atomic_convolve(alpha: f64, a: &[Atom], b: &[Atom]) -> Vec<Atom> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            let w = x.w * y.w;
            if w > PRUNE {
                out.push(Atom { x: pair_sum(alpha, x.x, y.x), w });
            }
        }
    }
    merge_atoms(out)
}

/// Convolution of `q` (atoms, in U-space) with a density part: a sum of
/// shifted copies of the density of `U`.
struct Shifted {
    q: Vec<(f64, f64)>,
    part: DensityPart,
}

struct MixLaw {
    alpha: f64,
    atoms: Vec<Atom>,
    pieces: Vec<Shifted>,
}

impl Law for MixLaw {
    fn cdf(&self, s: f64) -> f64 {
        let mut total: f64 = self.atoms.iter().filter(|a| a.x <= s).map(|a| a.w).sum();
        if s <= 0.0 {
            return total;
        }
        let v = s.powf(self.alpha);
        for p in &self.pieces {
            for &(u, w) in &p.q {
                if v > u {
                    total += w * p.part.cdf((v - u).powf(1.0 / self.alpha));
                }
            }
        }
        total
    }

    fn density(&self, s: f64, side: Side) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let a = self.alpha;
        let v = s.powf(a);
        let mut total = 0.0;
        for p in &self.pieces {
            for &(u, w) in &p.q {
                if v > u {
                    let y = if u == 0.0 { s } else { (v - u).powf(1.0 / a) };
                    let g = p.part.density(y, side);
                    if g != 0.0 {
                        total += w * g * if a == 1.0 || u == 0.0 { 1.0 } else { (y / s).powf(1.0 - a) };
                    }
                }
            }
        }
        total
    }

    fn atoms(&self) -> Vec<Atom> {
        self.atoms.clone()
    }

    fn breaks(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for p in &self.pieces {
            let jumps = p.part.jumps();
            for &(u, _) in &p.q {
                let ux = u.powf(1.0 / self.alpha);
                for &j in &jumps {
                    out.push(pair_sum(self.alpha, ux, j));
                }
            }
        }
        out
    }
}

fn split(m: &MixingMeasure) -> (Vec<Atom>, Option<DensityPart>) {
    (m.atoms().to_vec(), m.density().map(DensityPart::new))
}

fn to_u(alpha: f64, atoms: &[Atom]) -> Vec<(f64, f64)> {
    atoms.iter().map(|a| (a.x.powf(alpha), a.w)).collect()
}

pub(crate) fn convolve(kernel: &Kernel, alpha: f64, a: &MixingMeasure, b: &MixingMeasure) -> Result<MixingMeasure> {
    let (aa, ad) = split(a);
    let (ba, bd) = split(b);
    let atoms = atomic_convolve(alpha, &aa, &ba);
    if ad.is_none() && bd.is_none() {
        return MixingMeasure::assembled(atoms, None);
    }
    let tol = kernel.tolerances();
    let mut pieces = Vec::new();
    if bd.is_some() {
        if !aa.is_empty() {
            pieces.push(Shifted { q: to_u(alpha, &aa), part: DensityPart::new(&density_of(b)) });
        }
        if let Some(ad) = &ad {
            let q = to_u(alpha, &ad.quantize(tol.sphere_atoms));
            pieces.push(Shifted { q, part: DensityPart::new(&density_of(b)) });
        }
    }
    if ad.is_some() && !ba.is_empty() {
        pieces.push(Shifted { q: to_u(alpha, &ba), part: DensityPart::new(&density_of(a)) });
    }
    materialize(&MixLaw { alpha, atoms, pieces }, tol.stable_grid, tol.tail_mass)
}

fn density_of(m: &MixingMeasure) -> crate::measures::Density {
    m.density().expect("caller checked for a density").clone()
}

/// `n`-fold convolution power by repeated squaring.
pub(crate) fn power_int(kernel: &Kernel, alpha: f64, m: &MixingMeasure, n: u64) -> Result<MixingMeasure> {
    let mut result = MixingMeasure::delta(0.0);
    let mut base = m.clone();
    let mut k = n;
    while k > 0 {
        if k & 1 == 1 {
            result = if result.is_delta_zero() { base.clone() } else { convolve(kernel, alpha, &result, &base)? };
        }
        k >>= 1;
        if k > 0 {
            base = convolve(kernel, alpha, &base, &base)?;
        }
    }
    Ok(result)
}

/// Compound Poisson law of an atomic measure: the count of jumps of each
/// size is an independent Poisson variable, so the law of the sum is
/// enumerated directly over count vectors.
pub(crate) fn compound_poisson_atomic(alpha: f64, rate: f64, atoms: &[Atom]) -> Result<MixingMeasure> {
    let jumps: Vec<(f64, f64)> = atoms.iter().filter(|a| a.x > 0.0).map(|a| (a.x.powf(alpha), rate * a.w)).collect();
    // Poisson pmf tables per jump size, truncated where the tail is negligible.
    let tables: Vec<Vec<f64>> = jumps
        .iter()
        .map(|&(_, lam)| {
            let mut pmf = vec![(-lam).exp()];
            let mut cum = pmf[0];
            let mut n = 0.0;
            while 1.0 - cum > PRUNE && pmf.len() < 100_000 {
                n += 1.0;
                let next = pmf.last().unwrap() * lam / n;
                pmf.push(next);
                cum += next;
                if next < PRUNE * 1e-3 && n > lam {
                    break;
                }
            }
            pmf
        })
        .collect();
    let mut out = Vec::new();
    enumerate(alpha, &jumps, &tables, 0, 1.0, 0.0, &mut out);
    MixingMeasure::assembled(merge_atoms(out), None)
}

fn enumerate(alpha: f64, jumps: &[(f64, f64)], tables: &[Vec<f64>], j: usize, w: f64, u: f64, out: &mut Vec<Atom>) {
    if j == jumps.len() {
        out.push(Atom { x: if u == 0.0 { 0.0 } else { u_to_s(alpha, u) }, w });
        return;
    }
    for (n, p) in tables[j].iter().enumerate() {
        let wn = w * p;
        if wn <= PRUNE {
            if n as f64 > jumps[j].1 {
                break;
            }
            continue;
        }
        enumerate(alpha, jumps, tables, j + 1, wn, u + n as f64 * jumps[j].0, out);
    }
}

fn u_to_s(alpha: f64, u: f64) -> f64 {
    if alpha == 1.0 {
        u
    } else {
        u.powf(1.0 / alpha)
    }
}

/// Truncated Poisson series `sum_k w_k lambda^{*k}` by iterated convolution.
pub(crate) fn series(kernel: &Kernel, alpha: f64, weights: &[f64], m: &MixingMeasure) -> Result<MixingMeasure> {
    let mut parts: Vec<(f64, MixingMeasure)> = vec![(weights[0], MixingMeasure::delta(0.0))];
    let mut term = MixingMeasure::delta(0.0);
    for &w in &weights[1..] {
        term = if term.is_delta_zero() { m.clone() } else { convolve(kernel, alpha, &term, m)? };
        parts.push((w, term.clone()));
    }
    let refs: Vec<(f64, &MixingMeasure)> = parts.iter().map(|(w, m)| (*w, m)).collect();
    Ok(MixingMeasure::combine(&refs))
}

#[derive(PartialEq)]
struct Candidate(f64);

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0)
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Fractional convolution power of an atomic law of `U`, by the recursion
/// `p_0 w q(w) = sum_j p_j ((r + 1) d_j - w) q(w - d_j)` over the additive
/// monoid spanned by the shifted atoms `d_j`.
pub(crate) fn power_frac_atomic(alpha: f64, atoms: &[Atom], r: f64) -> Result<MixingMeasure> {
    let mut us: Vec<(f64, f64)> = to_u(alpha, atoms);
    us.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (y0, p0) = us[0];
    let steps: Vec<(f64, f64)> = us[1..].iter().map(|&(u, w)| (u - y0, w)).collect();
    let shift = r * y0;
    let mut pts: Vec<f64> = vec![0.0];
    let mut q: Vec<f64> = vec![p0.powf(r)];
    let mut mass = q[0];
    let mut heap = BinaryHeap::new();
    for &(d, _) in &steps {
        heap.push(Candidate(d));
    }
    let peak_guard = 1e-10;
    let mut last = 0.0;
    while mass < 1.0 - 1e-14 {
        let Some(Candidate(w)) = heap.pop() else { break };
        if w <= last * (1.0 + ATOM_RESOLUTION) {
            continue;
        }
        if pts.len() > 2_000_000 {
            return Err(Error::NoConvergence("fractional power needs too many atoms".into()));
        }
        let mut acc = 0.0;
        for &(d, pj) in &steps {
            if d > w * (1.0 + ATOM_RESOLUTION) {
                break;
            }
            let target = w - d;
            if let Some(v) = lookup(&pts, &q, target, w) {
                acc += pj * ((r + 1.0) * d - w) * v;
            }
        }
        let value = acc / (p0 * w);
        if value < -peak_guard {
            return Err(Error::NotInfinitelyDivisible(format!(
                "fractional power {r} has negative mass {value:.3e} at U = {w}"
            )));
        }
        last = w;
        let value = value.max(0.0);
        pts.push(w);
        q.push(value);
        mass += value;
        if value > PRUNE {
            for &(d, _) in &steps {
                heap.push(Candidate(w + d));
            }
        }
    }
    let atoms: Vec<Atom> = pts
        .iter()
        .zip(&q)
        .map(|(&z, &w)| {
            let u = z + shift;
            Atom { x: if u == 0.0 { 0.0 } else { u_to_s(alpha, u) }, w }
        })
        .collect();
    MixingMeasure::assembled(merge_atoms(atoms), None).map_err(|e| match e {
        Error::NotAMixture(m) => Error::NotInfinitelyDivisible(m),
        other => other,
    })
}

fn lookup(pts: &[f64], q: &[f64], target: f64, scale: f64) -> Option<f64> {
    let tol = ATOM_RESOLUTION * scale;
    let i = pts.partition_point(|&p| p < target - tol);
    (i < pts.len() && pts[i] <= target + tol).then(|| q[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::kolmogorov_distance;

    fn atoms(v: &[(f64, f64)]) -> MixingMeasure {
        MixingMeasure::new(v.iter().map(|&(x, w)| Atom { x, w }).collect(), None).unwrap()
    }

    #[test]
    fn atoms_add_in_power_scale() {
        let k = Kernel::stable(1.0).unwrap();
        let d1 = MixingMeasure::delta(1.0);
        assert_eq!(convolve(&k, 1.0, &d1, &d1).unwrap(), MixingMeasure::delta(2.0));
        assert_eq!(power_int(&k, 1.0, &d1, 5).unwrap(), MixingMeasure::delta(5.0));
        let k = Kernel::stable(0.5).unwrap();
        assert_eq!(convolve(&k, 0.5, &d1, &d1).unwrap(), MixingMeasure::delta(4.0));
    }

    #[test]
    fn compound_poisson_cf_is_exponential() {
        let k = Kernel::stable(1.0).unwrap();
        let m = compound_poisson_atomic(1.0, 1.5, &[Atom { x: 1.0, w: 1.0 }]).unwrap();
        for &t in &[0.1, 0.5, 1.0, 3.0] {
            let want = (1.5 * (f64::exp(-t) - 1.0)).exp();
            assert!((m.mixture_cf(&k, t) - want).abs() < 1e-13);
        }
    }

    #[test]
    fn fractional_power_of_compound_poisson_rescales_rate() {
        let lam = atoms(&[(0.7, 0.4), (1.9, 0.6)]);
        let full = compound_poisson_atomic(1.0, 1.2, lam.atoms()).unwrap();
        let third = power_frac_atomic(1.0, full.atoms(), 1.0 / 3.0).unwrap();
        let direct = compound_poisson_atomic(1.0, 0.4, lam.atoms()).unwrap();
        assert!(kolmogorov_distance(&third, &direct) < 1e-12);
    }

    #[test]
    fn bernoulli_has_no_square_root() {
        let err = power_frac_atomic(1.0, atoms(&[(1.0, 0.5), (2.0, 0.5)]).atoms(), 0.5).unwrap_err();
        assert!(matches!(err, Error::NotInfinitelyDivisible(_)));
    }

    #[test]
    fn atom_against_density_shifts_in_power_scale() {
        let k = Kernel::stable(0.5).unwrap();
        let u =
            MixingMeasure::new(vec![], Some(crate::measures::Density { grid: vec![1.0, 2.0], values: vec![1.0, 1.0] }))
                .unwrap();
        let c = convolve(&k, 0.5, &u, &MixingMeasure::delta(1.0)).unwrap();
        for &t in &[0.2, 1.0, 4.0] {
            let want = u.mixture_cf(&k, t) * (-f64::sqrt(t)).exp();
            assert!((c.mixture_cf(&k, t) - want).abs() < 1e-7, "t {t}");
        }
    }

    #[test]
    fn densities_convolve_through_quantization() {
        let k = Kernel::stable(1.0).unwrap();
        let u = MixingMeasure::new(
            vec![Atom { x: 0.5, w: 0.5 }],
            Some(crate::measures::Density { grid: vec![1.0, 2.0], values: vec![0.5, 0.5] }),
        )
        .unwrap();
        let c = convolve(&k, 1.0, &u, &u).unwrap();
        for &t in &[0.2, 1.0, 4.0] {
            let want = u.mixture_cf(&k, t).powi(2);
            assert!((c.mixture_cf(&k, t) - want).abs() < 1e-5, "t {t}");
        }
    }
}
