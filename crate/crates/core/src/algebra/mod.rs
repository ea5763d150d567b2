//! Generalized convolution algebra of mixing measures.
//!
//! Each kernel family uses its own exact structure: the Kendall kernel works
//! on Williamson-type transforms ([`kendall`]), stable kernels add `s^alpha`
//! ([`stable`]), and Kingman kernels combine pairs of atoms through the
//! closed-form law of the length of a sum of two rotated vectors ([`sphere`]).

pub(crate) mod elements;
pub(crate) mod grid;
pub(crate) mod invert;
pub(crate) mod kendall;
mod sphere;
pub(crate) mod stable;

use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelKind};
use crate::measures::{CharGrid, MixingMeasure};

/// Poisson terms lighter than this are dropped from truncated series.
const NEGLIGIBLE_TERM: f64 = 1e-17;
/// Largest Poisson tail mass `exp_series_oracle` accepts beyond its last term.
const SERIES_TAIL: f64 = 1e-12;

/// `lambda1 (x) lambda2`: the radial measure whose mixture cf is the product
/// of the inputs' mixture cfs.
pub fn weak_convolve(kernel: &Kernel, a: &MixingMeasure, b: &MixingMeasure) -> Result<MixingMeasure> {
    if a.is_delta_zero() {
        return Ok(b.clone());
    }
    if b.is_delta_zero() {
        return Ok(a.clone());
    }
    match kernel.kind() {
        KernelKind::Kendall { alpha } => kendall::convolve(kernel, alpha, a, b),
        KernelKind::Stable { alpha } => stable::convolve(kernel, alpha, a, b),
        KernelKind::Kingman { .. } | KernelKind::Sphere { .. } => sphere::convolve(kernel, a, b),
    }
}

/// `n`-fold convolution power; `n = 0` gives the unit `delta_0`.
pub fn power_int(kernel: &Kernel, m: &MixingMeasure, n: u64) -> Result<MixingMeasure> {
    if n == 0 || m.is_delta_zero() {
        return Ok(MixingMeasure::delta(0.0));
    }
    if n == 1 {
        return Ok(m.clone());
    }
    match kernel.kind() {
        KernelKind::Kendall { alpha } => kendall::power(kernel, alpha, m, n as f64),
        KernelKind::Stable { alpha } => stable::power_int(kernel, alpha, m, n),
        KernelKind::Kingman { .. } | KernelKind::Sphere { .. } => {
            let mut result = MixingMeasure::delta(0.0);
            let mut base = m.clone();
            let mut k = n;
            loop {
                if k & 1 == 1 {
                    result = weak_convolve(kernel, &result, &base)?;
                }
                k >>= 1;
                if k == 0 {
                    return Ok(result);
                }
                base = weak_convolve(kernel, &base, &base)?;
            }
        }
    }
}

/// The measure with mixture cf `phi^r`. Kendall powers are exact on the
/// transform. Stable powers are exact for atomic inputs. Stable inputs with a
/// density go through numerical inversion, which is only accurate to a few
/// digits. Kingman kernels support integer `r` only.
pub fn power_frac(kernel: &Kernel, m: &MixingMeasure, r: f64) -> Result<MixingMeasure> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::InvalidInput(format!("power must be a finite nonnegative number, got {r}")));
    }
    if r == 0.0 || m.is_delta_zero() {
        return Ok(MixingMeasure::delta(0.0));
    }
    if r == 1.0 {
        return Ok(m.clone());
    }
    match kernel.kind() {
        KernelKind::Kendall { alpha } => kendall::power(kernel, alpha, m, r).map_err(kendall::not_divisible),
        KernelKind::Stable { alpha } => {
            if r.fract() == 0.0 {
                return stable::power_int(kernel, alpha, m, r as u64);
            }
            if m.is_atomic() {
                return stable::power_frac_atomic(alpha, m.atoms(), r);
            }
            let phi = |t: f64| m.mixture_cf(kernel, t).powf(r);
            invert::invert_stable(kernel, alpha, &phi).map_err(kendall::not_divisible)
        }
        KernelKind::Kingman { .. } | KernelKind::Sphere { .. } => {
            if r.fract() == 0.0 {
                power_int(kernel, m, r as u64)
            } else {
                Err(Error::UnsupportedKernel(format!("fractional powers need an invertible kernel, not {kernel}")))
            }
        }
    }
}

/// Compound Poisson measure with mixture cf `exp(rate (phi - 1))`.
pub fn compound_poisson(kernel: &Kernel, rate: f64, m: &MixingMeasure) -> Result<MixingMeasure> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::InvalidInput(format!("rate must be a finite nonnegative number, got {rate}")));
    }
    if rate == 0.0 || m.is_delta_zero() {
        return Ok(MixingMeasure::delta(0.0));
    }
    match kernel.kind() {
        KernelKind::Kendall { alpha } => kendall::compound_poisson(kernel, alpha, rate, m),
        KernelKind::Stable { alpha } if m.is_atomic() => stable::compound_poisson_atomic(alpha, rate, m.atoms()),
        _ => {
            let weights = poisson_weights(rate, |_, tail| tail < NEGLIGIBLE_TERM);
            series(kernel, &weights, m)
        }
    }
}

/// Poisson probabilities `e^-a a^k / k!` for `k = 0, 1, ...` until `stop(k,
/// tail)` holds, where `tail` is the mass beyond `k`.
fn poisson_weights(rate: f64, stop: impl Fn(usize, f64) -> bool) -> Vec<f64> {
    let mut w = vec![(-rate).exp()];
    let mut cum = w[0];
    let mut k = 0usize;
    while !stop(k, 1.0 - cum) && k < 100_000 {
        k += 1;
        let next = w[k - 1] * rate / k as f64;
        w.push(next);
        cum += next;
        if next == 0.0 && k as f64 > rate {
            break;
        }
    }
    w
}

/// `sum_k w_k m^(k)` by explicit convolution powers, skipping negligible
/// terms at the end.
fn series(kernel: &Kernel, weights: &[f64], m: &MixingMeasure) -> Result<MixingMeasure> {
    let total: f64 = weights.iter().sum();
    let mut weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
    while weights.len() > 1 && *weights.last().expect("nonempty") < NEGLIGIBLE_TERM {
        weights.pop();
    }
    match kernel.kind() {
        KernelKind::Kendall { alpha } => kendall::series(kernel, alpha, weights, m),
        KernelKind::Stable { alpha } => stable::series(kernel, alpha, &weights, m),
        KernelKind::Kingman { .. } | KernelKind::Sphere { .. } => {
            let mut parts: Vec<(f64, MixingMeasure)> = vec![(weights[0], MixingMeasure::delta(0.0))];
            let mut term = MixingMeasure::delta(0.0);
            for &w in &weights[1..] {
                term = weak_convolve(kernel, &term, m)?;
                parts.push((w, term.clone()));
            }
            let refs: Vec<(f64, &MixingMeasure)> = parts.iter().map(|(w, m)| (*w, m)).collect();
            Ok(MixingMeasure::combine(&refs))
        }
    }
}

/// Compound Poisson measure from its defining series truncated after
/// `terms` powers, with the Poisson weights renormalized. An independent
/// check on [`compound_poisson`].
pub fn exp_series_oracle(kernel: &Kernel, rate: f64, m: &MixingMeasure, terms: usize) -> Result<MixingMeasure> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::InvalidInput(format!("rate must be a finite nonnegative number, got {rate}")));
    }
    if rate == 0.0 || m.is_delta_zero() {
        return Ok(MixingMeasure::delta(0.0));
    }
    let weights = poisson_weights(rate, |k, _| k >= terms);
    let tail = 1.0 - weights.iter().sum::<f64>();
    if tail >= SERIES_TAIL {
        return Err(Error::TruncationTooShort(format!(
            "Poisson mass {tail:.3e} beyond {terms} terms at rate {rate} exceeds {SERIES_TAIL:e}"
        )));
    }
    series(kernel, &weights, m)
}

/// The mixing measure whose mixture cf is `phi`. Supported for Kendall and
/// stable kernels.
pub fn invert_cf(kernel: &Kernel, phi: &(dyn Fn(f64) -> f64 + Sync)) -> Result<MixingMeasure> {
    match kernel.kind() {
        KernelKind::Kendall { alpha } => invert::invert_kendall(kernel, alpha, phi),
        KernelKind::Stable { alpha } => invert::invert_stable(kernel, alpha, phi),
        KernelKind::Kingman { .. } | KernelKind::Sphere { .. } => {
            Err(Error::UnsupportedKernel(format!("mixture cfs of {kernel} cannot be inverted")))
        }
    }
}

/// [`invert_cf`] applied to a sampled characteristic function, interpolated
/// between samples.
pub fn invert_mixture(kernel: &Kernel, phi: &CharGrid) -> Result<MixingMeasure> {
    invert_cf(kernel, &|t: f64| phi.eval(t))
}

/// The canonical strictly `p`-stable element, with mixture cf
/// `exp(-|t|^p)`.
pub fn stable_element(kernel: &Kernel, p: f64) -> Result<MixingMeasure> {
    elements::stable_element(kernel, p)
}

/// Law of `Theta S^(1/p)`, where `Theta ~ lambda_p` and `S` is positive
/// `(q/p)`-stable with Laplace transform `exp(-t^(q/p))`. A `p`-stable element
/// becomes a `q`-stable one.
pub fn subordinate_stable(kernel: &Kernel, lambda_p: &MixingMeasure, p: f64, q: f64) -> Result<MixingMeasure> {
    elements::subordinate(kernel, lambda_p, p, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{kolmogorov_distance, Atom};

    fn kernels() -> Vec<Kernel> {
        vec![Kernel::stable(1.0).unwrap(), Kernel::kendall(0.5).unwrap(), Kernel::sphere(3).unwrap()]
    }

    #[test]
    fn delta_zero_is_the_unit() {
        let m = MixingMeasure::new(vec![Atom { x: 0.5, w: 0.3 }, Atom { x: 2.0, w: 0.7 }], None).unwrap();
        for k in kernels() {
            assert_eq!(weak_convolve(&k, &m, &MixingMeasure::delta(0.0)).unwrap(), m);
            assert_eq!(power_int(&k, &m, 0).unwrap(), MixingMeasure::delta(0.0));
            assert_eq!(power_int(&k, &m, 1).unwrap(), m);
            assert_eq!(compound_poisson(&k, 0.0, &m).unwrap(), MixingMeasure::delta(0.0));
        }
    }

    #[test]
    fn kendall_integer_powers_associate() {
        let k = Kernel::kendall(0.5).unwrap();
        let m = MixingMeasure::new(vec![Atom { x: 0.0, w: 0.2 }, Atom { x: 1.0, w: 0.8 }], None).unwrap();
        let four = power_int(&k, &m, 4).unwrap();
        let two_two = power_int(&k, &power_int(&k, &m, 2).unwrap(), 2).unwrap();
        assert!(kolmogorov_distance(&four, &two_two) < 1e-8);
    }

    #[test]
    fn sphere_series_matches_exponential_cf() {
        let k = Kernel::sphere(3).unwrap();
        let m = exp_series_oracle(&k, 0.5, &MixingMeasure::delta(1.0), 20).unwrap();
        for t in [0.3, 1.0, 2.0, 5.0] {
            let want = (0.5 * (k.cf(t) - 1.0)).exp();
            assert!((m.mixture_cf(&k, t) - want).abs() < 1e-6, "t {t}");
        }
    }

    #[test]
    fn short_series_is_rejected() {
        let k = Kernel::kendall(0.5).unwrap();
        let err = exp_series_oracle(&k, 5.0, &MixingMeasure::delta(1.0), 10).unwrap_err();
        assert!(matches!(err, Error::TruncationTooShort(_)));
    }

    #[test]
    fn sphere_kernels_are_not_invertible() {
        let k = Kernel::kingman(1.0).unwrap();
        assert!(matches!(invert_cf(&k, &|t: f64| k.cf(t)), Err(Error::UnsupportedKernel(_))));
        assert!(matches!(power_frac(&k, &MixingMeasure::delta(1.0), 0.5), Err(Error::UnsupportedKernel(_))));
    }

    #[test]
    fn stable_element_scaling_closure() {
        let k = Kernel::kendall(0.7).unwrap();
        let g = stable_element(&k, 0.4).unwrap();
        let three = power_int(&k, &g, 3).unwrap();
        let scaled = g.scale(3f64.powf(1.0 / 0.4));
        assert!(kolmogorov_distance(&three, &scaled) < 1e-6);
    }
}
