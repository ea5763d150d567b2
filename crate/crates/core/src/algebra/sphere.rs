//! Algebra for the Kingman kernels, spherical kernels included. Independent
//! radial parts `a U1` and `b U2` add to a vector of length
//! `sqrt(a^2 + b^2 + 2ab X)` with `X` Kingman distributed, so every pair of
//! atoms contributes a closed-form law supported on `[|a - b|, a + b]`.

use rayon::prelude::*;

use crate::algebra::grid::{match_cell_masses, DensityPart};
use crate::error::Result;
use crate::kernels::Kernel;
use crate::measures::{guard_gap, sum_densities, Atom, Density, MixingMeasure};

/// Pair count up to which every pair's support ends become grid nodes.
const EXACT_PAIRS: usize = 4096;
/// Number of work chunks for the pair loop; fixed so sums are reproducible.
const CHUNKS: usize = 64;

struct Operand {
    zero: f64,
    exact: Vec<Atom>,
    density: Option<Density>,
    quantized: Vec<Atom>,
}

impl Operand {
    fn new(m: &MixingMeasure, k: usize) -> Self {
        let zero = m.atoms().iter().filter(|a| a.x == 0.0).map(|a| a.w).sum();
        let exact = m.atoms().iter().filter(|a| a.x > 0.0).copied().collect();
        let density = m.density().cloned();
        let quantized = density.as_ref().map(|d| DensityPart::new(d).quantize(k)).unwrap_or_default();
        Operand { zero, exact, density, quantized }
    }

    fn radial(&self) -> impl Iterator<Item = &Atom> {
        self.exact.iter().chain(self.quantized.iter())
    }
}

pub(crate) fn convolve(kernel: &Kernel, a: &MixingMeasure, b: &MixingMeasure) -> Result<MixingMeasure> {
    if a.is_delta_zero() {
        return Ok(b.clone());
    }
    if b.is_delta_zero() {
        return Ok(a.clone());
    }
    let tol = kernel.tolerances();
    let (oa, ob) = (Operand::new(a, tol.sphere_atoms), Operand::new(b, tol.sphere_atoms));
    let mut atoms = Vec::new();
    if oa.zero * ob.zero > 0.0 {
        atoms.push(Atom { x: 0.0, w: oa.zero * ob.zero });
    }
    atoms.extend(ob.exact.iter().map(|t| Atom { x: t.x, w: oa.zero * t.w }));
    atoms.extend(oa.exact.iter().map(|t| Atom { x: t.x, w: ob.zero * t.w }));
    let mut pairs = Vec::new();
    for x in oa.radial() {
        for y in ob.radial() {
            let w = x.w * y.w;
            if w > 0.0 {
                pairs.push((x.x, y.x, w));
            }
        }
    }
    let pair_density = pair_density(kernel, &pairs, tol.sphere_grid);
    let mut parts: Vec<(f64, &Density)> = Vec::new();
    if let Some(d) = &ob.density {
        if oa.zero > 0.0 {
            parts.push((oa.zero, d));
        }
    }
    if let Some(d) = &oa.density {
        if ob.zero > 0.0 {
            parts.push((ob.zero, d));
        }
    }
    if let Some(d) = &pair_density {
        parts.push((1.0, d));
    }
    let density = match parts.len() {
        0 => None,
        1 => Some(Density {
            grid: parts[0].1.grid.clone(),
            values: parts[0].1.values.iter().map(|v| v * parts[0].0).collect(),
        }),
        _ => Some(sum_densities(&parts)),
    };
    MixingMeasure::assembled(atoms, density)
}

/// Node of the output grid: position, evaluation point and whether the cell
/// to its right is a guard sliver.
struct Node {
    at: f64,
    eval: f64,
    sliver_right: bool,
}

/// Sum of the weighted pair laws as a density on a uniform grid over
/// `[0, max(a + b)]`. For index one half (the sphere in three dimensions)
/// each pair density is linear in the radius and is sampled pointwise;
/// otherwise cell masses from the exact pair distribution functions give a
/// piecewise-constant density, which stays accurate where pair densities
/// have root-type or singular behaviour at the support ends.
fn pair_density(kernel: &Kernel, pairs: &[(f64, f64, f64)], points: usize) -> Option<Density> {
    if pairs.is_empty() {
        return None;
    }
    let nu = kernel.kingman_index().expect("kingman kernel");
    let pointwise = nu == 0.5;
    let top = pairs.iter().map(|p| p.0 + p.1).fold(0.0, f64::max);
    let mut breaks: Vec<f64> = Vec::new();
    if pairs.len() <= EXACT_PAIRS {
        for &(a, b, _) in pairs {
            if a != b {
                breaks.push((a - b).abs());
            }
            breaks.push(a + b);
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
    }
    let mut nodes: Vec<Node> = (0..=points)
        .map(|j| {
            let x = if j == points { top } else { top * j as f64 / points as f64 };
            Node { at: x, eval: x, sliver_right: false }
        })
        .collect();
    for &x in &breaks {
        let g = guard_gap(x);
        if pointwise {
            nodes.push(Node { at: x - g, eval: x - 0.25 * g, sliver_right: true });
            nodes.push(Node { at: x, eval: x + 0.25 * g, sliver_right: false });
        } else {
            nodes.push(Node { at: x, eval: x, sliver_right: false });
        }
    }
    nodes.sort_by(|a, b| a.at.total_cmp(&b.at));
    nodes.dedup_by(|later, earlier| later.at <= earlier.at);
    let evals: Vec<f64> = nodes.iter().map(|n| n.eval).collect();
    let n = evals.len();

    let chunk = pairs.len().div_ceil(CHUNKS);
    // Per chunk: distribution function inside each pair support, steps for
    // nodes past a support, and (pointwise mode) density values.
    let partial: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = pairs
        .par_chunks(chunk)
        .map(|group| {
            let mut inside = vec![0.0; n];
            let mut steps = vec![0.0; n + 1];
            let mut dens = vec![0.0; if pointwise { n } else { 0 }];
            for &(a, b, w) in group {
                let (lo, hi) = ((a - b).abs(), a + b);
                let i0 = evals.partition_point(|&r| r <= lo);
                let i1 = evals.partition_point(|&r| r < hi);
                let ab2 = 2.0 * a * b;
                for j in i0..i1 {
                    let r = evals[j];
                    let z = (((r - a) * (r + a) - b * b) / ab2).clamp(-1.0, 1.0);
                    inside[j] += w * kernel.kingman_cdf(z);
                    if pointwise {
                        dens[j] += w * 2.0 * r / ab2 * kernel.kingman_density(z);
                    }
                }
                steps[i1] += w;
            }
            (inside, steps, dens)
        })
        .collect();
    let mut cdf = vec![0.0; n];
    let mut dens = vec![0.0; n];
    let mut steps = vec![0.0; n + 1];
    for (i, st, d) in &partial {
        for j in 0..n {
            cdf[j] += i[j];
            steps[j] += st[j];
        }
        for (acc, v) in dens.iter_mut().zip(d) {
            *acc += v;
        }
    }
    let mut run = 0.0;
    for j in 0..n {
        run += steps[j];
        cdf[j] += run;
    }
    let grid: Vec<f64> = nodes.iter().map(|n| n.at).collect();
    if pointwise {
        let sliver: Vec<bool> = nodes.windows(2).map(|w| w[0].sliver_right).collect();
        match_cell_masses(&grid, &sliver, &cdf, &mut dens);
        Some(Density { grid, values: dens })
    } else {
        Some(step_density(&grid, &cdf))
    }
}

/// Piecewise-constant density with the given cell masses, written as a
/// piecewise-linear one with guard slivers at the cell ends.
fn step_density(grid: &[f64], cdf: &[f64]) -> Density {
    let mut xs = Vec::with_capacity(2 * grid.len());
    let mut vs = Vec::with_capacity(2 * grid.len());
    for i in 0..grid.len() - 1 {
        let (a, b) = (grid[i], grid[i + 1]);
        let g = guard_gap(b);
        if b - a <= 4.0 * g {
            continue;
        }
        let v = ((cdf[i + 1] - cdf[i]) / (b - a)).max(0.0);
        if xs.last().is_some_and(|&x: &f64| x >= a) {
            continue;
        }
        xs.push(a);
        vs.push(v);
        xs.push(b - g);
        vs.push(v);
    }
    xs.push(*grid.last().expect("nonempty"));
    vs.push(0.0);
    Density { grid: xs, values: vs }
}
