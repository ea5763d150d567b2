//! Weak Lévy–Khintchine representation: the integrability condition,
//! forward evaluation of the characteristic function, construction of a
//! mixing measure from `(A, nu)` and extraction of `(A, nu)` from a measure.

mod build;
mod extract;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DivergentEnd, Error, Result};
use crate::kernels::Kernel;
use crate::measures::{Atom, Density};
use crate::quad;

pub use build::levy_build;
pub use extract::{levy_extract, test_battery, ExtractOptions, Extraction, TestFunction};

/// Density part of a radial Lévy measure.
#[derive(Debug, Clone, PartialEq)]
pub enum LevyDensity {
    /// `C s^a exp(-c s^b)`; `c = 0` gives a pure power.
    PowerExp { big_c: f64, a: f64, c: f64, b: f64 },
    /// Piecewise linear on the grid, zero outside it.
    Grid(Density),
}

impl LevyDensity {
    pub fn eval(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        match self {
            LevyDensity::PowerExp { big_c, a, c, b } => {
                if *big_c == 0.0 {
                    return 0.0;
                }
                let e = if *c == 0.0 { 0.0 } else { c * s.powf(*b) };
                (big_c.ln() + a * s.ln() - e).exp()
            }
            LevyDensity::Grid(d) => d.eval(s),
        }
    }

    /// Points where the density is not smooth.
    pub(crate) fn breaks(&self) -> Vec<f64> {
        match self {
            LevyDensity::PowerExp { .. } => Vec::new(),
            LevyDensity::Grid(d) => d.grid.clone(),
        }
    }

    /// Support as `(lo, hi)`.
    pub(crate) fn support(&self) -> (f64, f64) {
        match self {
            LevyDensity::PowerExp { .. } => (0.0, f64::INFINITY),
            LevyDensity::Grid(d) => (d.lo(), d.hi()),
        }
    }
}

/// A sigma-finite measure on `(0, inf)`: atoms plus an optional density that
/// may blow up like `s^-sing_exponent` at zero and decays like
/// `s^-tail_exponent` at infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialLevyMeasure {
    pub atoms: Vec<Atom>,
    pub density: Option<LevyDensity>,
    pub sing_exponent: f64,
    pub tail_exponent: f64,
}

/// `(A, nu)` of the representation
/// `phi(t) = exp(-A |t|^kappa - int (1 - cf(t s)) nu(ds))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyTriple {
    pub a: f64,
    pub nu: RadialLevyMeasure,
}

/// Grid densities with more nodes are integrated adaptively.
const GRID_CELLS_EXACT: usize = 512;
/// Probe points for the declared exponents.
const PROBE_LOW: f64 = 1e-6;
const PROBE_HIGH: f64 = 1e6;

impl RadialLevyMeasure {
    pub fn new(atoms: Vec<Atom>, density: Option<LevyDensity>, sing_exponent: f64, tail_exponent: f64) -> Result<Self> {
        for a in &atoms {
            if !(a.x > 0.0 && a.x.is_finite() && a.w >= 0.0 && a.w.is_finite()) {
                return Err(Error::InvalidMeasure(format!(
                    "Lévy atom ({}, {}) needs location > 0 and weight >= 0",
                    a.x, a.w
                )));
            }
        }
        if !(sing_exponent.is_finite() && tail_exponent.is_finite()) {
            return Err(Error::InvalidMeasure("declared exponents must be finite".into()));
        }
        match &density {
            Some(LevyDensity::PowerExp { big_c, a, c, b }) => {
                if ![*big_c, *a, *c, *b].iter().all(|v| v.is_finite()) || *big_c < 0.0 || *c < 0.0 {
                    return Err(Error::InvalidMeasure(
                        "power_exp needs finite parameters with C >= 0 and c >= 0".into(),
                    ));
                }
            }
            Some(LevyDensity::Grid(d)) => {
                if d.grid.len() < 2 || d.grid.len() != d.values.len() {
                    return Err(Error::InvalidMeasure(
                        "Lévy grid density needs matching grid and values of length >= 2".into(),
                    ));
                }
                if d.grid[0] < 0.0 || d.grid.windows(2).any(|w| w[1] <= w[0]) || d.grid.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidMeasure(
                        "Lévy density grid must be nonnegative and strictly increasing".into(),
                    ));
                }
                if d.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::InvalidMeasure("Lévy density values must be finite and nonnegative".into()));
                }
            }
            None => {}
        }
        let nu = RadialLevyMeasure { atoms, density, sing_exponent, tail_exponent };
        nu.check_declared_exponents()?;
        Ok(nu)
    }

    pub fn zero() -> Self {
        RadialLevyMeasure { atoms: Vec::new(), density: None, sing_exponent: 0.0, tail_exponent: 2.0 }
    }

    pub fn atomic(atoms: Vec<Atom>) -> Result<Self> {
        Self::new(atoms, None, 0.0, 2.0)
    }

    /// Over a decade at each probe the density may not grow toward zero
    /// faster, or decay at infinity slower, than declared by more than a
    /// factor two.
    fn check_declared_exponents(&self) -> Result<()> {
        let Some(d) = &self.density else { return Ok(()) };
        let (f1, f2) = (d.eval(PROBE_LOW), d.eval(10.0 * PROBE_LOW));
        if f1 > 0.0 && f2 > 0.0 && f1 / f2 > 2.0 * 10f64.powf(self.sing_exponent) {
            return Err(Error::InvalidMeasure(format!(
                "density grows like s^-{:.3} near zero, faster than the declared exponent {}",
                (f1 / f2).log10(),
                self.sing_exponent
            )));
        }
        let (g1, g2) = (d.eval(0.1 * PROBE_HIGH), d.eval(PROBE_HIGH));
        if g1 > 0.0 && g2 > 0.0 && g2 / g1 > 2.0 * 10f64.powf(-self.tail_exponent) {
            return Err(Error::InvalidMeasure(format!(
                "density decays like s^-{:.3} at infinity, slower than the declared exponent {}",
                (g1 / g2).log10(),
                self.tail_exponent
            )));
        }
        Ok(())
    }

    /// Total mass of the atoms.
    pub fn atom_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.w).sum()
    }

    /// `int g dnu`, splitting the density integral at `split` (a point where
    /// `g` may have a kink). `g` must be bounded near zero by a multiple of
    /// `s^e` with `e - sing_exponent > -1`.
    pub fn integrate<G: Fn(f64) -> f64 + Sync>(&self, g: G, split: f64, rel_tol: f64) -> Result<f64> {
        let mut total: f64 = self.atoms.iter().map(|a| a.w * g(a.x)).sum();
        match &self.density {
            None => {}
            Some(LevyDensity::Grid(d)) if d.grid.len() <= GRID_CELLS_EXACT => {
                let rule = quad::gauss_legendre(16);
                let mut cuts = d.grid.clone();
                if split > d.lo() && split < d.hi() {
                    cuts.push(split);
                    cuts.sort_by(f64::total_cmp);
                }
                for w in cuts.windows(2) {
                    total += quad::panel(&rule, |s| g(s) * d.eval(s), w[0], w[1]);
                }
            }
            Some(LevyDensity::Grid(d)) => {
                // Trapezoid on the nodes: the cells are fine enough, and `g`
                // may be costly.
                let mut nodes = d.grid.clone();
                if split > d.lo() && split < d.hi() {
                    nodes.push(split);
                    nodes.sort_by(f64::total_cmp);
                }
                let vals: Vec<f64> = nodes
                    .par_iter()
                    .map(|&s| {
                        let v = d.eval(s);
                        if v == 0.0 {
                            0.0
                        } else {
                            v * g(s)
                        }
                    })
                    .collect();
                total += nodes
                    .windows(2)
                    .zip(vals.windows(2))
                    .map(|(x, v)| 0.5 * (x[1] - x[0]) * (v[0] + v[1]))
                    .sum::<f64>();
            }
            Some(dens @ LevyDensity::PowerExp { .. }) => {
                // Below 1e-200 an integrable singularity contributes nothing.
                let f = |s: f64| {
                    if s < 1e-200 {
                        return 0.0;
                    }
                    let w = g(s);
                    if w == 0.0 {
                        0.0
                    } else {
                        w * dens.eval(s)
                    }
                };
                let split = if split.is_finite() && split > 0.0 { split } else { 1.0 };
                let near = quad::tanh_sinh(|s, _, _| f(s), 0.0, split, rel_tol)?;
                let mid = quad::adaptive(f, split, 256.0 * split, rel_tol, 1e-300)?;
                let far = quad::to_infinity(f, 256.0 * split, rel_tol)?;
                total += near + mid + far;
            }
        }
        Ok(total)
    }

    /// `int_(0, eps) s^q nu(ds)`.
    pub fn moment_below(&self, q: f64, eps: f64) -> Result<f64> {
        if self.density.is_some() && q - self.sing_exponent <= -1.0 {
            return Ok(f64::INFINITY);
        }
        let restricted = self.restricted(0.0, eps);
        restricted.integrate(|s| if s < eps { s.powf(q) } else { 0.0 }, eps, 1e-10)
    }

    /// The measure restricted to `[lo, hi)`, with densities converted to grid
    /// form when cut.
    pub(crate) fn restricted(&self, lo: f64, hi: f64) -> RadialLevyMeasure {
        let atoms = self.atoms.iter().copied().filter(|a| a.x >= lo && a.x < hi).collect();
        RadialLevyMeasure { atoms, density: self.density.clone(), ..self.clone() }.cut_density(lo, hi)
    }

    fn cut_density(mut self, lo: f64, hi: f64) -> Self {
        if let Some(LevyDensity::Grid(d)) = &self.density {
            let (a, b) = (d.lo().max(lo), d.hi().min(hi));
            if a >= b {
                self.density = None;
                return self;
            }
            let mut grid = vec![a];
            grid.extend(d.grid.iter().copied().filter(|&x| x > a && x < b));
            grid.push(b);
            let values = grid.iter().map(|&x| d.eval(x)).collect();
            self.density = Some(LevyDensity::Grid(Density { grid, values }));
        } else if let Some(dens) = self.density.take() {
            self.density = Some(LevyDensity::Grid(tabulate(&dens, lo, hi)));
        }
        self
    }
}

/// A power-exponential density sampled on a log grid over `[lo, hi)`, for
/// finite `lo > 0` and `hi`; otherwise the range is clipped to `[1e-12, 1e12]`.
fn tabulate(d: &LevyDensity, lo: f64, hi: f64) -> Density {
    let lo = if lo > 0.0 { lo } else { 1e-12 };
    let hi = if hi.is_finite() { hi } else { 1e12 };
    let n = (((hi / lo).log2() * 64.0).ceil() as usize).max(2);
    let grid: Vec<f64> = (0..=n).map(|i| lo * (hi / lo).powf(i as f64 / n as f64)).collect();
    let values = grid.iter().map(|&s| d.eval(s)).collect();
    Density { grid, values }
}

impl LevyTriple {
    pub fn new(a: f64, nu: RadialLevyMeasure) -> Result<Self> {
        if !(a >= 0.0 && a.is_finite()) {
            return Err(Error::InvalidInput(format!("A must be finite and nonnegative, got {a}")));
        }
        Ok(LevyTriple { a, nu })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: TripleJson = serde_json::from_str(s)?;
        let density = raw.nu.density.map(|d| match d {
            DensityJson::PowerExp { params } => {
                LevyDensity::PowerExp { big_c: params.big_c, a: params.a, c: params.c, b: params.b }
            }
            DensityJson::Grid { grid, values } => LevyDensity::Grid(Density { grid, values }),
        });
        let nu = RadialLevyMeasure::new(raw.nu.atoms, density, raw.nu.sing_exponent, raw.nu.tail_exponent)?;
        LevyTriple::new(raw.a, nu)
    }

    pub fn to_json_string(&self) -> String {
        let density = self.nu.density.as_ref().map(|d| match d {
            LevyDensity::PowerExp { big_c, a, c, b } => {
                DensityJson::PowerExp { params: PowerExpParams { big_c: *big_c, a: *a, c: *c, b: *b } }
            }
            LevyDensity::Grid(d) => DensityJson::Grid { grid: d.grid.clone(), values: d.values.clone() },
        });
        let raw = TripleJson {
            a: self.a,
            nu: NuJson {
                atoms: self.nu.atoms.clone(),
                density,
                sing_exponent: self.nu.sing_exponent,
                tail_exponent: self.nu.tail_exponent,
            },
        };
        serde_json::to_string(&raw).expect("finite floats serialize")
    }
}

#[derive(Serialize, Deserialize)]
struct TripleJson {
    #[serde(rename = "A")]
    a: f64,
    nu: NuJson,
}

#[derive(Serialize, Deserialize)]
struct NuJson {
    #[serde(default)]
    atoms: Vec<Atom>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    density: Option<DensityJson>,
    #[serde(default)]
    sing_exponent: f64,
    #[serde(default = "default_tail")]
    tail_exponent: f64,
}

fn default_tail() -> f64 {
    2.0
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum DensityJson {
    PowerExp { params: PowerExpParams },
    Grid { grid: Vec<f64>, values: Vec<f64> },
}

#[derive(Serialize, Deserialize)]
struct PowerExpParams {
    #[serde(rename = "C")]
    big_c: f64,
    #[serde(default)]
    a: f64,
    #[serde(default)]
    c: f64,
    #[serde(default)]
    b: f64,
}

/// Both readings of the integrability condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integrability {
    /// `int P(|X| > 1/s) nu(ds)`, the form the construction relies on.
    pub value: f64,
    /// `int P(|X| > s) nu(ds)`; infinite whenever `nu` is infinite near zero.
    pub literal: f64,
}

/// Checks the declared exponents against the kernel and returns
/// `int P(|X| > 1/s) nu(ds)`.
pub fn check_levy_integrability(kernel: &Kernel, nu: &RadialLevyMeasure) -> Result<f64> {
    Ok(levy_integrals(kernel, nu)?.value)
}

/// [`check_levy_integrability`] together with the literal reading.
pub fn levy_integrals(kernel: &Kernel, nu: &RadialLevyMeasure) -> Result<Integrability> {
    if let Some(d) = &nu.density {
        let (lo, hi) = d.support();
        let kappa = kernel.kappa();
        if lo == 0.0 && kappa - nu.sing_exponent <= -1.0 {
            return Err(Error::DivergentLevyMeasure {
                end: DivergentEnd::Zero,
                detail: format!(
                    "density ~ s^-{} against a kernel tail ~ s^{kappa} is not integrable",
                    nu.sing_exponent
                ),
            });
        }
        if hi.is_infinite() && nu.tail_exponent <= 1.0 {
            return Err(Error::DivergentLevyMeasure {
                end: DivergentEnd::Infinity,
                detail: format!("density ~ s^-{} has infinite mass at infinity", nu.tail_exponent),
            });
        }
    }
    let rel = kernel.tolerances().quad_rel.max(1e-10);
    let tail = |r: f64| kernel.tail(r).unwrap_or(f64::NAN);
    let value = nu.integrate(|s| tail(1.0 / s), 1.0, rel)?;
    let literal = match &nu.density {
        Some(d) if d.support().0 == 0.0 && nu.sing_exponent >= 1.0 => f64::INFINITY,
        _ => nu.integrate(tail, 1.0, rel)?,
    };
    if !value.is_finite() || literal.is_nan() {
        return Err(Error::NoConvergence("Lévy integrability quadrature failed".into()));
    }
    Ok(Integrability { value, literal })
}

/// `int (1 - cf(t s)) nu(ds)`.
pub(crate) fn levy_exponent(kernel: &Kernel, nu: &RadialLevyMeasure, t: f64) -> Result<f64> {
    let t = t.abs();
    if t == 0.0 {
        return Ok(0.0);
    }
    let rel = kernel.tolerances().quad_rel.max(1e-12);
    nu.integrate(|s| kernel.one_minus_cf(t * s), 1.0 / t, rel)
}

/// The characteristic function of the representation at `t`.
pub fn lk_cf(kernel: &Kernel, triple: &LevyTriple, t: f64) -> Result<f64> {
    check_levy_integrability(kernel, &triple.nu)?;
    lk_cf_unchecked(kernel, triple, t)
}

/// [`lk_cf`] at several points, checking the measure once.
pub fn lk_cf_many(kernel: &Kernel, triple: &LevyTriple, ts: &[f64]) -> Result<Vec<f64>> {
    check_levy_integrability(kernel, &triple.nu)?;
    ts.iter().map(|&t| lk_cf_unchecked(kernel, triple, t)).collect()
}

pub(crate) fn lk_cf_unchecked(kernel: &Kernel, triple: &LevyTriple, t: f64) -> Result<f64> {
    let at = t.abs();
    let drift = if triple.a == 0.0 { 0.0 } else { triple.a * at.powf(kernel.kappa()) };
    Ok((-drift - levy_exponent(kernel, &triple.nu, at)?).exp())
}

/// `sup_{|t| <= tmax} |cf(t n^(-1/kappa))^n - exp(-|t|^kappa)|` on a grid of
/// `points` nodes: the distance of a normalized power of the kernel from
/// its stable limit.
pub fn clt_distance(kernel: &Kernel, n: f64, tmax: f64, points: usize) -> f64 {
    let kappa = kernel.kappa();
    let scale = n.powf(-1.0 / kappa);
    (0..=points)
        .map(|i| {
            let t = tmax * i as f64 / points as f64;
            let power = (n * (-kernel.one_minus_cf(t * scale)).ln_1p()).exp();
            (power - (-t.powf(kappa)).exp()).abs()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power_levy_measure(alpha: f64, p: f64) -> RadialLevyMeasure {
        let big_c = p * (alpha - p) / alpha;
        RadialLevyMeasure::new(
            Vec::new(),
            Some(LevyDensity::PowerExp { big_c, a: -p - 1.0, c: 0.0, b: 0.0 }),
            p + 1.0,
            p + 1.0,
        )
        .unwrap()
    }

    #[test]
    fn spectral_identity_for_power_density() {
        for (alpha, p) in [(1.0, 0.5), (0.7, 0.3)] {
            let k = Kernel::kendall(alpha).unwrap();
            let nu = power_levy_measure(alpha, p);
            for t in [0.1, 0.5, 1.0, 2.0, 10.0] {
                let got = levy_exponent(&k, &nu, t).unwrap();
                let want = f64::powf(t, p);
                assert!(((got - want) / want).abs() < 1e-8, "alpha {alpha} p {p} t {t}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn critical_power_density_diverges_at_zero() {
        let k = Kernel::kendall(0.7).unwrap();
        let nu = RadialLevyMeasure::new(
            Vec::new(),
            Some(LevyDensity::PowerExp { big_c: 1.0, a: -1.7, c: 0.0, b: 0.0 }),
            1.7,
            1.7,
        )
        .unwrap();
        let err = check_levy_integrability(&k, &nu).unwrap_err();
        assert!(matches!(err, Error::DivergentLevyMeasure { end: DivergentEnd::Zero, .. }));
    }

    #[test]
    fn single_atom_integrates_the_tail() {
        let k = Kernel::stable(1.0).unwrap();
        let nu = RadialLevyMeasure::atomic(vec![Atom { x: 1.0, w: 1.0 }]).unwrap();
        let v = check_levy_integrability(&k, &nu).unwrap();
        assert!((v - k.tail(1.0).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn forward_cf_of_pure_drift_and_single_atom() {
        let k = Kernel::kendall(0.6).unwrap();
        let drift = LevyTriple::new(1.0, RadialLevyMeasure::zero()).unwrap();
        let atom = LevyTriple::new(0.0, RadialLevyMeasure::atomic(vec![Atom { x: 1.0, w: 0.8 }]).unwrap()).unwrap();
        for t in [0.2, 0.9, 3.0] {
            assert!((lk_cf(&k, &drift, t).unwrap() - (-f64::powf(t, 0.6)).exp()).abs() < 1e-15);
            assert!((lk_cf(&k, &atom, t).unwrap() - (0.8 * (k.cf(t) - 1.0)).exp()).abs() < 1e-15);
        }
        let nu = power_levy_measure(0.7, 0.3);
        let k = Kernel::kendall(0.7).unwrap();
        let v = lk_cf(&k, &LevyTriple::new(0.0, nu).unwrap(), 2.0).unwrap();
        assert!((v - (-f64::powf(2.0, 0.3)).exp()).abs() < 1e-10);
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"A":0.5,"nu":{"atoms":[{"x":1.0,"w":0.3}],"density":{"kind":"power_exp","params":{"C":0.2,"a":-1.3}},"sing_exponent":1.3,"tail_exponent":1.3}}"#;
        let t = LevyTriple::from_json_str(text).unwrap();
        assert_eq!(t.nu.density, Some(LevyDensity::PowerExp { big_c: 0.2, a: -1.3, c: 0.0, b: 0.0 }));
        assert_eq!(LevyTriple::from_json_str(&t.to_json_string()).unwrap(), t);
    }

    #[test]
    fn understated_singularity_is_rejected() {
        let d = LevyDensity::PowerExp { big_c: 1.0, a: -1.5, c: 0.0, b: 0.0 };
        assert!(RadialLevyMeasure::new(Vec::new(), Some(d), 0.5, 2.0).is_err());
    }

    #[test]
    fn stable_moment_condition_holds() {
        let nu = power_levy_measure(0.8, 0.5);
        assert!(nu.moment_below(0.8, 0.1).unwrap().is_finite());
        let k = Kernel::kingman(1.0).unwrap();
        let nu = RadialLevyMeasure::new(
            Vec::new(),
            Some(LevyDensity::PowerExp { big_c: 1.0, a: -2.5, c: 0.0, b: 0.0 }),
            2.5,
            2.5,
        )
        .unwrap();
        check_levy_integrability(&k, &nu).unwrap();
        assert!(nu.moment_below(2.0, 1.0).unwrap().is_finite());
    }

    #[test]
    fn kendall_clt_distance_shrinks() {
        for alpha in [0.5, 1.0] {
            let k = Kernel::kendall(alpha).unwrap();
            let d: Vec<f64> = [1e2, 1e4, 1e6].iter().map(|&n| clt_distance(&k, n, 2.0, 2000)).collect();
            assert!(d[0] > d[1] && d[1] > d[2] && d[2] < 0.01, "{d:?}");
        }
    }
}
