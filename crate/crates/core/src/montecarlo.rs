//! Sampling oracles: sphere sums, scale mixtures and positive stable draws,
//! with Kolmogorov–Smirnov comparison against a distribution function.
//!
//! Every sampler splits its output into chunks of [`CHUNK`] draws. Chunk `c`
//! uses the ChaCha8 stream `c` of the seed, so a batch is the same for any
//! thread count.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{self, Kernel};
use crate::measures::MixingMeasure;

/// Names the generator contract in sample metadata.
pub const GENERATOR_ID: &str = "chacha8-stream-v1";
/// Draws per generator stream.
pub const CHUNK: usize = 65536;

/// Draws `n` values, chunk by chunk, each chunk from its own stream.
fn chunked<T, F>(n: usize, seed: u64, draw: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> T + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = CHUNK.min(n - c * CHUNK);
            (0..len).map(|_| draw(&mut rng)).collect()
        })
        .collect();
    parts.into_iter().flatten().collect()
}

/// Scalar draws with the seed that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub values: Vec<f64>,
    pub seed: u64,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    seed: u64,
    generator_id: &'a str,
    n: usize,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// One `value` column.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "value")?;
        for v in &self.values {
            writeln!(w, "{v:e}")?;
        }
        Ok(())
    }

    /// `{seed, generator_id, n}`.
    pub fn sidecar_json(&self) -> String {
        serde_json::to_string(&Sidecar { seed: self.seed, generator_id: GENERATOR_ID, n: self.len() })
            .expect("plain struct")
    }

    /// `mean(cos(t X))` and its standard error.
    pub fn empirical_cf(&self, t: f64) -> (f64, f64) {
        let n = self.values.len() as f64;
        let (mut s, mut s2) = (0.0, 0.0);
        for &x in &self.values {
            let c = (t * x).cos();
            s += c;
            s2 += c * c;
        }
        let mean = s / n;
        let var = (s2 / n - mean * mean).max(0.0);
        (mean, (var / n).sqrt())
    }
}

/// Inverse-CDF sampler for a mixing measure: atoms by table lookup, the
/// piecewise-linear density by solving the quadratic cell CDF.
pub struct MeasureSampler<'a> {
    m: &'a MixingMeasure,
    /// Cumulative mass: atoms first, then density cells.
    cum: Vec<f64>,
    atoms: usize,
}

impl<'a> MeasureSampler<'a> {
    pub fn new(m: &'a MixingMeasure) -> Self {
        let mut cum = vec![0.0];
        for a in m.atoms() {
            cum.push(cum.last().unwrap() + a.w);
        }
        if let Some(d) = m.density() {
            for i in 0..d.grid.len() - 1 {
                let c = 0.5 * (d.grid[i + 1] - d.grid[i]) * (d.values[i] + d.values[i + 1]);
                cum.push(cum.last().unwrap() + c);
            }
        }
        MeasureSampler { m, cum, atoms: m.atoms().len() }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let total = *self.cum.last().unwrap();
        let u = rng.random::<f64>() * total;
        let k = (self.cum.partition_point(|&c| c <= u)).clamp(1, self.cum.len() - 1) - 1;
        if k < self.atoms {
            return self.m.atoms()[k].x;
        }
        let d = self.m.density().expect("density cells follow the atoms");
        let i = k - self.atoms;
        let (x0, x1) = (d.grid[i], d.grid[i + 1]);
        let (f0, f1) = (d.values[i], d.values[i + 1]);
        let h = x1 - x0;
        let r = u - self.cum[k];
        // Solve f0 y + (f1 - f0) y^2 / (2 h) = r for y in [0, h].
        let a = 0.5 * (f1 - f0) / h;
        let y = if a.abs() < 1e-300 || (a * r).abs() < 1e-12 * f0 * f0 {
            if f0 > 0.0 {
                r / f0
            } else {
                0.5 * h
            }
        } else {
            let disc = (f0 * f0 + 4.0 * a * r).max(0.0);
            2.0 * r / (f0 + disc.sqrt())
        };
        x0 + y.clamp(0.0, h)
    }
}

fn unit_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// `count` independent uniform unit vectors in `R^n`.
pub fn sample_sphere(n: usize, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("sphere dimension must be at least 2, got {n}")));
    }
    Ok(chunked(count, seed, |rng| unit_vector(n, rng)))
}

/// Draws of `|Theta_1 U_1 + Theta_2 U_2|` with `Theta_i ~ lambda_i` and
/// independent uniform unit vectors `U_i` in `R^n`.
pub fn sample_oplus_sphere(
    n: usize,
    l1: &MixingMeasure,
    l2: &MixingMeasure,
    count: usize,
    seed: u64,
) -> Result<SampleBatch> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("sphere dimension must be at least 2, got {n}")));
    }
    let (s1, s2) = (MeasureSampler::new(l1), MeasureSampler::new(l2));
    let values = chunked(count, seed, |rng| {
        let (t1, t2) = (s1.sample(rng), s2.sample(rng));
        let (u1, u2) = (unit_vector(n, rng), unit_vector(n, rng));
        u1.iter().zip(&u2).map(|(a, b)| (t1 * a + t2 * b).powi(2)).sum::<f64>().sqrt()
    });
    Ok(SampleBatch { values, seed })
}

/// Draws of `X S` with `X` from the kernel and `S ~ lambda` independent.
pub fn sample_scale_mixture(kernel: &Kernel, lambda: &MixingMeasure, count: usize, seed: u64) -> SampleBatch {
    let s = MeasureSampler::new(lambda);
    let values = chunked(count, seed, |rng| {
        let scale = s.sample(rng);
        kernel.sample_one(rng) * scale
    });
    SampleBatch { values, seed }
}

/// Draws from the kernel itself.
pub fn sample_kernel(kernel: &Kernel, count: usize, seed: u64) -> SampleBatch {
    SampleBatch { values: chunked(count, seed, |rng| kernel.sample_one(rng)), seed }
}

/// Draws from the positive `r`-stable law with Laplace transform `exp(-t^r)`.
pub fn sample_positive_stable(r: f64, count: usize, seed: u64) -> Result<SampleBatch> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidInput(format!("positive stable index must lie in (0, 1), got {r}")));
    }
    Ok(SampleBatch { values: chunked(count, seed, |rng| kernels::sample_positive_stable(r, rng)), seed })
}

/// `sup |F_n - F|` over the sample points, comparing both one-sided limits
/// of the empirical distribution function. The left limit is compared with
/// `F` just below the point, so atoms of `F` are matched exactly.
pub fn ks_statistic(batch: &SampleBatch, cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("KS statistic needs a nonempty batch".into()));
    }
    let mut xs = batch.values.clone();
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidInput("batch contains NaN".into()));
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let x = xs[i];
        let mut j = i;
        while j < xs.len() && xs[j] == x {
            j += 1;
        }
        let below = i as f64 / n;
        let at = j as f64 / n;
        d = d.max((at - cdf(x)).abs()).max((below - cdf(x.next_down())).abs());
        i = j;
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::weak_convolve;
    use crate::measures::{Atom, CdfView};
    use crate::special;

    const N: usize = 1_000_000;

    #[test]
    fn sphere_points_are_unit_and_centred() {
        let pts = sample_sphere(3, N, 7).unwrap();
        assert!(pts.iter().all(|p| (p.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-12));
        let mean = pts.iter().map(|p| p[0]).sum::<f64>() / N as f64;
        assert!(mean.abs() < 3.0 / (N as f64).sqrt());
        let first = SampleBatch { values: pts.iter().map(|p| p[0]).collect(), seed: 7 };
        assert!(ks_statistic(&first, |x| (0.5 * (x + 1.0)).clamp(0.0, 1.0)).unwrap() < 0.005);
    }

    #[test]
    fn sphere_sum_of_unit_atoms() {
        let d1 = MixingMeasure::delta(1.0);
        let b = sample_oplus_sphere(3, &d1, &d1, N, 11).unwrap();
        assert!(ks_statistic(&b, |r| (r * r / 4.0).clamp(0.0, 1.0)).unwrap() < 0.005);
        let b = sample_oplus_sphere(5, &d1, &MixingMeasure::delta(0.0), 1000, 11).unwrap();
        assert!(b.values.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn sphere_sum_matches_weak_convolution() {
        let k = Kernel::sphere(3).unwrap();
        let a = MixingMeasure::new(vec![Atom { x: 0.5, w: 0.3 }, Atom { x: 2.0, w: 0.7 }], None).unwrap();
        let b = MixingMeasure::new(vec![Atom { x: 1.0, w: 0.6 }, Atom { x: 1.5, w: 0.4 }], None).unwrap();
        let c = weak_convolve(&k, &a, &b).unwrap();
        let batch = sample_oplus_sphere(3, &a, &b, N, 3).unwrap();
        let view = CdfView::new(&c);
        assert!(ks_statistic(&batch, |x| view.cdf(x)).unwrap() < 0.01);
    }

    #[test]
    fn scale_mixture_cf() {
        let k = Kernel::kendall(0.5).unwrap();
        let lambda = crate::algebra::compound_poisson(&k, 1.0, &MixingMeasure::delta(1.0)).unwrap();
        let b = sample_scale_mixture(&k, &lambda, N, 5);
        for t in [0.2, 0.5, 1.0, 2.0, 5.0] {
            let (cf, se) = b.empirical_cf(t);
            let want = (k.cf(t) - 1.0).exp();
            assert!((cf - want).abs() < 3.0 * se.max(1e-4), "t {t}: {cf} vs {want} (se {se})");
        }
        let x = sample_scale_mixture(&k, &MixingMeasure::delta(1.0), N, 9);
        let y = sample_kernel(&k, N, 10);
        let mut ys = y.values.clone();
        ys.sort_by(f64::total_cmp);
        let ecdf = |v: f64| ys.partition_point(|&u| u <= v) as f64 / ys.len() as f64;
        assert!(ks_statistic(&x, ecdf).unwrap() < 0.005);
    }

    #[test]
    fn positive_stable_draws() {
        let b = sample_positive_stable(0.5, N, 13).unwrap();
        assert!(b.values.iter().all(|&v| v > 0.0));
        let lt: Vec<f64> = b.values.iter().map(|&v| (-v).exp()).collect();
        let mean = lt.iter().sum::<f64>() / N as f64;
        let sd = (lt.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / N as f64).sqrt();
        assert!((mean - (-1f64).exp()).abs() < 3.0 * sd / (N as f64).sqrt());
        // Median from the distribution function by bisection.
        let (mut lo, mut hi): (f64, f64) = (1e-3, 1e3);
        for _ in 0..100 {
            let m = (lo * hi).sqrt();
            if special::positive_stable_cdf(0.5, m).unwrap() < 0.5 {
                lo = m;
            } else {
                hi = m;
            }
        }
        let mut v = b.values.clone();
        v.sort_by(f64::total_cmp);
        let med = v[N / 2];
        // The sample median has standard error 1 / (2 f(m) sqrt(N)).
        let f = special::positive_stable_density(0.5, lo).unwrap();
        assert!((med - lo).abs() < 3.0 / (2.0 * f * (N as f64).sqrt()), "{med} vs {lo}");
    }

    #[test]
    fn ks_of_constant_batches() {
        let b = SampleBatch { values: vec![2.0; 100], seed: 0 };
        assert_eq!(ks_statistic(&b, |x| if x >= 2.0 { 1.0 } else { 0.0 }).unwrap(), 0.0);
        let b = SampleBatch { values: vec![0.0; 100], seed: 0 };
        assert_eq!(ks_statistic(&b, |x| if x >= 1.0 { 1.0 } else { 0.0 }).unwrap(), 1.0);
        assert!(ks_statistic(&SampleBatch { values: vec![], seed: 0 }, |_| 0.0).is_err());
    }

    #[test]
    fn batches_are_reproducible_across_thread_counts() {
        let k = Kernel::stable(1.0).unwrap();
        let a = sample_kernel(&k, 3 * CHUNK + 17, 42);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| sample_kernel(&k, 3 * CHUNK + 17, 42));
        assert_eq!(a, b);
        assert_ne!(a.values, sample_kernel(&k, 3 * CHUNK + 17, 43).values);
        assert!(a.sidecar_json().contains("\"generator_id\":\"chacha8-stream-v1\""));
    }

    #[test]
    fn measure_sampler_follows_density() {
        let k = Kernel::kendall(0.7).unwrap();
        let m = crate::algebra::stable_element(&k, 0.4).unwrap();
        let s = MeasureSampler::new(&m);
        let values = chunked(200_000, 1, |rng| s.sample(rng));
        let b = SampleBatch { values, seed: 1 };
        let view = CdfView::new(&m);
        assert!(ks_statistic(&b, |x| view.cdf(x)).unwrap() < 0.005);
    }
}
