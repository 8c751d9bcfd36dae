//! Grate-like tissue and perturbed Gaussian tumor initial data, sampled at
//! cell centers.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::State;

/// `1/(2 pi sigma) exp(-s / (2 sigma^2))`.
pub fn psi(sigma: f64, s: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Domain { what: "sigma", requirement: "> 0", value: sigma });
    }
    Ok((-s / (2.0 * sigma * sigma)).exp() / (2.0 * std::f64::consts::PI * sigma))
}

const BAND_1: (f64, f64) = (0.35, 0.45);
const BAND_2: (f64, f64) = (0.7, 0.8);
const VERTICAL: [f64; 6] = [0.4, 0.45, 0.5, 0.55, 0.6, 0.65];
const DIAGONAL: [f64; 3] = [-0.2, -0.1, 0.0];
const SHALLOW: [f64; 2] = [0.5, 0.6];
const HALF_WIDTH: f64 = 0.01;

/// Whether `(x1, x2)` lies on one of the tissue fibers: two horizontal
/// bands, six vertical strips, three diagonals and two shallow diagonals.
/// All inequalities are strict.
pub fn in_tissue_support(x1: f64, x2: f64) -> bool {
    let band = |(lo, hi): (f64, f64)| x2 > lo && x2 < hi;
    band(BAND_1)
        || band(BAND_2)
        || VERTICAL.iter().any(|&h| (x1 - h).abs() < HALF_WIDTH)
        || DIAGONAL.iter().any(|&h| (x1 - x2 - h).abs() < HALF_WIDTH)
        || SHALLOW.iter().any(|&h| (x1 - 0.5 * x2 - h).abs() < HALF_WIDTH)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBump {
    pub sigma: f64,
    pub amplitude: f64,
    /// Support is `|x - center|^2 < radius_sq`.
    pub radius_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialConditionSpec {
    pub tissue_level: f64,
    pub migrating: GaussianBump,
    pub proliferating: GaussianBump,
    pub center: (f64, f64),
    /// Bounds of the uniform perturbation added inside `psi`.
    pub perturbation: (f64, f64),
}

impl Default for InitialConditionSpec {
    fn default() -> Self {
        InitialConditionSpec {
            tissue_level: 0.9,
            migrating: GaussianBump { sigma: 0.05, amplitude: 0.5, radius_sq: 0.02 },
            proliferating: GaussianBump { sigma: 0.1, amplitude: 0.8, radius_sq: 0.01 },
            center: (0.5, 0.5),
            perturbation: (-0.01, 0.04),
        }
    }
}

impl InitialConditionSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, b) in [("migrating", &self.migrating), ("proliferating", &self.proliferating)] {
            if !(b.sigma > 0.0 && b.amplitude > 0.0 && b.radius_sq > 0.0) {
                return Err(Error::config(name, "sigma, amplitude and radius_sq must be > 0"));
            }
        }
        Ok(())
    }
}

/// Field ids keying the perturbation stream.
const STREAM_M: u64 = 0;
const STREAM_P: u64 = 1;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based uniform draw in `[0, 1)` keyed by `(seed, cell, stream)`.
/// Independent of evaluation order.
pub fn keyed_uniform(seed: u64, cell: u64, stream: u64) -> f64 {
    let key = splitmix64(seed ^ splitmix64(stream.wrapping_mul(0xD1B5_4A32_D192_ED03)));
    let bits = splitmix64(key ^ splitmix64(cell));
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn perturbation(spec: &InitialConditionSpec, seed: u64, cell: usize, stream: u64) -> f64 {
    let (lo, hi) = spec.perturbation;
    lo + (hi - lo) * keyed_uniform(seed, cell as u64, stream)
}

/// Cell-center values of one cell with an explicit perturbation per field.
pub fn initial_values(spec: &InitialConditionSpec, x: (f64, f64), d_m: f64, d_p: f64) -> (f64, f64, f64) {
    let on_tissue = in_tissue_support(x.0, x.1);
    let r2 = (x.0 - spec.center.0).powi(2) + (x.1 - spec.center.1).powi(2);
    let bump = |b: &GaussianBump, d: f64| {
        if r2 < b.radius_sq {
            // sigma > 0 is checked by InitialConditionSpec::validate
            (b.amplitude * psi(b.sigma, r2 + d).unwrap_or(0.0)).min(1.0)
        } else {
            0.0
        }
    };
    let m = if on_tissue { bump(&spec.migrating, d_m) } else { 0.0 };
    let p = bump(&spec.proliferating, d_p);
    let tissue = if on_tissue { spec.tissue_level } else { 0.0 };
    let v = (tissue - (m + p)).max(0.0);
    (m, p, v)
}

/// Initial state on `grid`. Perturbations are drawn independently per cell
/// and per field, so the result depends only on `seed`.
pub fn generate_initial_state(grid: &Grid, spec: &InitialConditionSpec, seed: u64) -> State {
    let n = grid.num_cells();
    let mut state = State::zeros(n);
    for c in 0..n {
        let d_m = perturbation(spec, seed, c, STREAM_M);
        let d_p = perturbation(spec, seed, c, STREAM_P);
        let (m, p, v) = initial_values(spec, grid.center(c), d_m, d_p);
        state.m[c] = m;
        state.p[c] = p;
        state.v[c] = v;
    }
    state
}
