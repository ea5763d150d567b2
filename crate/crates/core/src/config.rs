//! Numerical tolerance profiles.

/// Knobs shared by the numerical routines. The `paper` profile is the default
/// and is tuned so the reference checks in `verify` pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    /// Relative tolerance for adaptive quadrature.
    pub quad_rel: f64,
    /// Number of log-spaced nodes used when materializing a computed density.
    pub grid_points: usize,
    /// Probability mass that may be dropped beyond the upper end of a grid.
    pub tail_mass: f64,
    /// Quantization level for densities entering a spherical convolution.
    pub sphere_atoms: usize,
    /// Output nodes of a spherical convolution.
    pub sphere_grid: usize,
    /// Nodes used for densities produced by the stable-kernel algebra, whose
    /// convolutions cost quadratic time in the node count.
    pub stable_grid: usize,
}

impl Tolerances {
    pub fn paper() -> Self {
        Tolerances {
            quad_rel: 1e-12,
            grid_points: 32768,
            tail_mass: 1e-11,
            sphere_atoms: 512,
            sphere_grid: 4096,
            stable_grid: 2048,
        }
    }

    /// Coarser settings for quick exploratory runs.
    pub fn fast() -> Self {
        Tolerances {
            quad_rel: 1e-9,
            grid_points: 4096,
            tail_mass: 1e-9,
            sphere_atoms: 128,
            sphere_grid: 1024,
            stable_grid: 512,
        }
    }

    pub fn profile(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "paper" => Some(Self::paper()),
            "fast" => Some(Self::fast()),
            _ => None,
        }
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::paper()
    }
}
