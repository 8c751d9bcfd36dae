//! Two-point flux finite-volume discretization of the migrating-cell
//! transport, its Newton solve and the sparse linear algebra behind it.
//!
//! For an inner edge between `left` and `right` the diffusive flux into the
//! left cell is
//!
//! ```text
//! F = h(D_l, D_r) (m_r - m_l) 2|e|/d,     h(a, b) = ab / (a + b)
//! ```
//!
//! and the haptotactic drift carries
//!
//! ```text
//! G = g m_up,   g = h(V_l, V_r) (v_r - v_l) 2|e|/d
//! ```
//!
//! from left to right, with `m_up` taken from the left cell when `g > 0`
//! and from the right cell otherwise. Each edge value is computed once and
//! added to one cell and subtracted from the other, so interior transport
//! conserves mass exactly.
//!
//! The implicit Euler step solves, per cell,
//!
//! ```text
//! r_c = m_c - dt/|c| * sum_e (F_c^e - G_c^e) - rhs_c = 0
//! ```
//!
//! where `rhs` is the migrating-cell density after the explicit reaction
//! stage and the coefficients see the unknown `m` together with the
//! post-reaction `p` and `v`.

mod linalg;
mod newton;

pub use linalg::{sparse_linear_solve, CsrMatrix};
pub use newton::{newton_solve, NewtonConfig, NewtonStats, NonlinearSystem};

use crate::error::{Error, Result};
use crate::grid::{EdgeRef, Grid};
use crate::model::ModelParams;

/// Below this, `D_l + D_r` is treated as zero and the edge carries no flux.
pub const DEGENERATE_GUARD: f64 = 1e-300;

/// `ab / (a + b)`, extended by zero at `a + b = 0`.
#[inline]
pub fn harmonic(a: f64, b: f64) -> f64 {
    let sum = a + b;
    if sum <= DEGENERATE_GUARD {
        0.0
    } else {
        a * b / sum
    }
}

/// Partial derivatives of [`harmonic`] in `a` and `b`.
#[inline]
fn harmonic_grad(a: f64, b: f64) -> (f64, f64) {
    let sum = a + b;
    if sum <= DEGENERATE_GUARD {
        (0.0, 0.0)
    } else {
        let s2 = sum * sum;
        (b * b / s2, a * a / s2)
    }
}

/// Diffusive flux into the left cell of `edge`.
pub fn edge_diffusive_flux(d_left: f64, d_right: f64, m_left: f64, m_right: f64, edge: &EdgeRef) -> f64 {
    harmonic(d_left, d_right) * (m_right - m_left) * edge.transmissibility()
}

/// Haptotactic strength `g` of an edge; positive when the drift points from
/// left to right.
#[inline]
fn drift_strength(v_coef_left: f64, v_coef_right: f64, v_left: f64, v_right: f64, edge: &EdgeRef) -> f64 {
    harmonic(v_coef_left, v_coef_right) * (v_right - v_left) * edge.transmissibility()
}

/// Upwinded drift flux carried from the left cell to the right cell.
pub fn edge_drift_flux(
    v_coef_left: f64,
    v_coef_right: f64,
    v_left: f64,
    v_right: f64,
    m_left: f64,
    m_right: f64,
    edge: &EdgeRef,
) -> f64 {
    let g = drift_strength(v_coef_left, v_coef_right, v_left, v_right, edge);
    if g > 0.0 {
        g * m_left
    } else if g < 0.0 {
        g * m_right
    } else {
        0.0
    }
}

/// Per-edge flux values of a state, oriented as in the module docs.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFluxes {
    /// Diffusive flux into the left cell of each edge.
    pub diffusive: Vec<f64>,
    /// Drift flux from left to right across each edge.
    pub drift: Vec<f64>,
}

impl EdgeFluxes {
    pub fn compute(grid: &Grid, params: &ModelParams, m: &[f64], p: &[f64], v: &[f64]) -> Self {
        let d: Vec<f64> = (0..m.len()).map(|c| params.diffusion(m[c], p[c], v[c])).collect();
        let vc: Vec<f64> = (0..m.len()).map(|c| params.drift(m[c], p[c], v[c])).collect();
        let mut diffusive = Vec::with_capacity(grid.edges().len());
        let mut drift = Vec::with_capacity(grid.edges().len());
        for e in grid.edges() {
            let (l, r) = (e.left, e.right);
            diffusive.push(edge_diffusive_flux(d[l], d[r], m[l], m[r], e));
            drift.push(edge_drift_flux(vc[l], vc[r], v[l], v[r], m[l], m[r], e));
        }
        EdgeFluxes { diffusive, drift }
    }

    /// Net transport into each cell, `sum_e (F_c^e - G_c^e)`, not yet
    /// divided by the cell measure.
    pub fn net_inflow(&self, grid: &Grid) -> Vec<f64> {
        let mut net = vec![0.0; grid.num_cells()];
        for (k, e) in grid.edges().iter().enumerate() {
            let q = self.diffusive[k] - self.drift[k];
            net[e.left] += q;
            net[e.right] -= q;
        }
        net
    }
}

/// Cell pairs touched by each edge, as offsets into the Jacobian values.
#[derive(Debug, Clone, Copy)]
struct EdgeSlots {
    ll: usize,
    lr: usize,
    rl: usize,
    rr: usize,
}

/// The implicit migrating-cell equation of one time step: frozen `p`, `v`
/// and right-hand side, with residual and Jacobian storage on the
/// five-point pattern.
#[derive(Debug, Clone)]
pub struct FvSystem<'a> {
    grid: &'a Grid,
    params: ModelParams,
    dt: f64,
    p: Vec<f64>,
    v: Vec<f64>,
    pub rhs: Vec<f64>,
    pub residual: Vec<f64>,
    pub jacobian: CsrMatrix,
    slots: Vec<EdgeSlots>,
    // per-cell scratch
    d: Vec<f64>,
    d_dm: Vec<f64>,
    vc: Vec<f64>,
    vc_dm: Vec<f64>,
}

impl<'a> FvSystem<'a> {
    /// `p`, `v` are the post-reaction fields; `rhs` the post-reaction `m`.
    pub fn new(
        grid: &'a Grid,
        params: &ModelParams,
        dt: f64,
        p: Vec<f64>,
        v: Vec<f64>,
        rhs: Vec<f64>,
    ) -> Result<Self> {
        let n = grid.num_cells();
        for len in [p.len(), v.len(), rhs.len()] {
            if len != n {
                return Err(Error::SizeMismatch { expected: n, got: len });
            }
        }
        let pattern: Vec<Vec<usize>> = (0..n)
            .map(|c| {
                let mut cols: Vec<usize> = grid
                    .incident_edges(c)
                    .iter()
                    .map(|&k| grid.edges()[k].other(c).unwrap())
                    .collect();
                cols.push(c);
                cols.sort_unstable();
                cols
            })
            .collect();
        let jacobian = CsrMatrix::from_pattern(&pattern);
        let slots = grid
            .edges()
            .iter()
            .map(|e| EdgeSlots {
                ll: jacobian.position(e.left, e.left).unwrap(),
                lr: jacobian.position(e.left, e.right).unwrap(),
                rl: jacobian.position(e.right, e.left).unwrap(),
                rr: jacobian.position(e.right, e.right).unwrap(),
            })
            .collect();
        Ok(FvSystem {
            grid,
            params: *params,
            dt,
            p,
            v,
            rhs,
            residual: vec![0.0; n],
            jacobian,
            slots,
            d: vec![0.0; n],
            d_dm: vec![0.0; n],
            vc: vec![0.0; n],
            vc_dm: vec![0.0; n],
        })
    }

    pub fn grid(&self) -> &Grid {
        self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn check_len(&self, m: &[f64]) -> Result<()> {
        if m.len() != self.grid.num_cells() {
            return Err(Error::SizeMismatch { expected: self.grid.num_cells(), got: m.len() });
        }
        Ok(())
    }

    fn update_coefficients(&mut self, m: &[f64], with_derivatives: bool) {
        let params = &self.params;
        for c in 0..m.len() {
            let (mc, pc, vcell) = (m[c], self.p[c], self.v[c]);
            self.d[c] = params.diffusion(mc, pc, vcell);
            self.vc[c] = params.drift(mc, pc, vcell);
            if with_derivatives {
                self.d_dm[c] = params.diffusion_dm(mc, pc, vcell);
                self.vc_dm[c] = params.drift_dm(mc, pc, vcell);
            }
        }
    }

    /// Fills [`FvSystem::residual`] at `m`.
    pub fn assemble_residual(&mut self, m: &[f64]) -> Result<&[f64]> {
        self.check_len(m)?;
        self.update_coefficients(m, false);
        let scale = self.dt / self.grid.cell_measure();
        for (r, (mc, b)) in self.residual.iter_mut().zip(m.iter().zip(&self.rhs)) {
            *r = mc - b;
        }
        if self.dt != 0.0 {
            for e in self.grid.edges() {
                let (l, r) = (e.left, e.right);
                let f = edge_diffusive_flux(self.d[l], self.d[r], m[l], m[r], e);
                let g = edge_drift_flux(self.vc[l], self.vc[r], self.v[l], self.v[r], m[l], m[r], e);
                let q = scale * (f - g);
                self.residual[l] -= q;
                self.residual[r] += q;
            }
        }
        Ok(&self.residual)
    }

    /// Fills [`FvSystem::jacobian`] with the exact derivative of the
    /// residual at `m`. The upwind cell is held fixed.
    pub fn assemble_jacobian(&mut self, m: &[f64]) -> Result<&CsrMatrix> {
        self.assemble_matrix(m, true)
    }

    /// Fills [`FvSystem::jacobian`] with the frozen-coefficient operator
    /// `A(m)`, for which `residual(m) = A(m) m - rhs`. With nonnegative
    /// coefficients it is an M-matrix, so a Picard step
    /// `A(m_k) m_{k+1} = rhs` preserves `m >= 0`.
    pub fn assemble_picard(&mut self, m: &[f64]) -> Result<&CsrMatrix> {
        self.assemble_matrix(m, false)
    }

    fn assemble_matrix(&mut self, m: &[f64], exact: bool) -> Result<&CsrMatrix> {
        self.check_len(m)?;
        self.update_coefficients(m, true);
        if !exact {
            self.d_dm.fill(0.0);
            self.vc_dm.fill(0.0);
        }
        let scale = self.dt / self.grid.cell_measure();
        let values = self.jacobian.values_mut();
        values.fill(0.0);
        for c in 0..m.len() {
            let k = self.slots_diag(c);
            self.jacobian.values_mut()[k] = 1.0;
        }
        if self.dt == 0.0 {
            return Ok(&self.jacobian);
        }
        for (e, s) in self.grid.edges().iter().zip(&self.slots) {
            let (l, r) = (e.left, e.right);
            let t = e.transmissibility();

            let h = harmonic(self.d[l], self.d[r]);
            let (dh_l, dh_r) = harmonic_grad(self.d[l], self.d[r]);
            let grad_m = m[r] - m[l];
            let df_dml = t * (dh_l * self.d_dm[l] * grad_m - h);
            let df_dmr = t * (dh_r * self.d_dm[r] * grad_m + h);

            let dv = self.v[r] - self.v[l];
            let hv = harmonic(self.vc[l], self.vc[r]);
            let (dhv_l, dhv_r) = harmonic_grad(self.vc[l], self.vc[r]);
            let g = hv * dv * t;
            let dg_dml = dhv_l * self.vc_dm[l] * dv * t;
            let dg_dmr = dhv_r * self.vc_dm[r] * dv * t;
            let (dgf_dml, dgf_dmr) = if g > 0.0 {
                (dg_dml * m[l] + g, dg_dmr * m[l])
            } else {
                (dg_dml * m[r], dg_dmr * m[r] + g)
            };

            // q = F - G enters row l with -scale and row r with +scale
            let dq_dml = scale * (df_dml - dgf_dml);
            let dq_dmr = scale * (df_dmr - dgf_dmr);
            let values = self.jacobian.values_mut();
            values[s.ll] -= dq_dml;
            values[s.lr] -= dq_dmr;
            values[s.rl] += dq_dml;
            values[s.rr] += dq_dmr;
        }
        Ok(&self.jacobian)
    }

    /// Moves cells stuck below the upper root of their own equation onto it.
    ///
    /// With `D(0) = 0` the harmonic mean shuts diffusion into an empty cell.
    /// Once the inflow it would receive outweighs the identity term, the
    /// cell's residual dips below zero and the diagonal of the Jacobian
    /// turns nonpositive, so Newton heads for a negative ghost root. Such
    /// cells (negative residual, nonpositive diagonal) are solved one at a
    /// time with their neighbours frozen, by bracketing and bisection, and
    /// placed on the root above. Returns the number of cells moved.
    pub fn lift_stalled_cells(&mut self, m: &mut [f64]) -> Result<usize> {
        self.assemble_jacobian(m)?;
        let stalled: Vec<usize> = (0..m.len())
            .filter(|&c| self.jacobian.values()[self.slots_diag(c)] <= 0.0)
            .collect();
        if stalled.is_empty() {
            return Ok(0);
        }
        self.assemble_residual(m)?;
        let stalled: Vec<usize> = stalled.into_iter().filter(|&c| self.residual[c] < 0.0).collect();
        if stalled.is_empty() {
            return Ok(0);
        }
        // Stalled cells never share an edge in practice; treating them
        // jointly only costs accuracy of the starting point.
        let mut lo: Vec<f64> = stalled.iter().map(|&c| m[c]).collect();
        let mut hi: Vec<f64> = lo.iter().map(|&l| (2.0 * l).max(1e-3)).collect();
        let mut y = m.to_vec();
        for _ in 0..MAX_BRACKET {
            for (k, &c) in stalled.iter().enumerate() {
                y[c] = hi[k];
            }
            self.assemble_residual(&y)?;
            let mut bracketed = true;
            for (k, &c) in stalled.iter().enumerate() {
                if self.residual[c] < 0.0 {
                    lo[k] = hi[k];
                    hi[k] *= 2.0;
                    bracketed = false;
                }
            }
            if bracketed {
                break;
            }
        }
        for _ in 0..BISECTIONS {
            for (k, &c) in stalled.iter().enumerate() {
                y[c] = 0.5 * (lo[k] + hi[k]);
            }
            self.assemble_residual(&y)?;
            for (k, &c) in stalled.iter().enumerate() {
                if self.residual[c] < 0.0 {
                    lo[k] = y[c];
                } else {
                    hi[k] = y[c];
                }
            }
        }
        for (k, &c) in stalled.iter().enumerate() {
            m[c] = hi[k];
        }
        Ok(stalled.len())
    }

    fn slots_diag(&self, c: usize) -> usize {
        self.jacobian.position(c, c).unwrap()
    }
}

impl NonlinearSystem for FvSystem<'_> {
    fn dim(&self) -> usize {
        self.grid.num_cells()
    }

    fn residual(&mut self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.assemble_residual(x)?;
        out.copy_from_slice(&self.residual);
        Ok(())
    }

    fn jacobian(&mut self, x: &[f64]) -> Result<&CsrMatrix> {
        self.assemble_jacobian(x)
    }

    fn fallback_matrix(&mut self, x: &[f64]) -> Result<Option<&CsrMatrix>> {
        self.assemble_picard(x).map(Some)
    }

    fn precondition(&mut self, x: &mut [f64]) -> Result<bool> {
        Ok(self.lift_stalled_cells(x)? > 0)
    }
}

const MAX_BRACKET: usize = 60;
const BISECTIONS: usize = 50;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Axis;
    use crate::model::TaxisVariant;
    use approx::assert_abs_diff_eq;

    fn unit_edge() -> EdgeRef {
        EdgeRef { left: 0, right: 1, axis: Axis::X, measure: 0.1, distance: 0.1 }
    }

    #[test]
    fn diffusive_flux_examples() {
        let e = unit_edge();
        assert_eq!(edge_diffusive_flux(0.0, 0.7, 0.2, 0.9, &e), 0.0);
        assert_abs_diff_eq!(edge_diffusive_flux(0.1, 0.3, 0.0, 1.0, &e), 0.15, epsilon = 1e-15);
        let (d, delta) = (0.04, 0.3);
        assert_abs_diff_eq!(
            edge_diffusive_flux(d, d, 0.5, 0.5 + delta, &e),
            d * delta * e.measure / e.distance,
            epsilon = 1e-15
        );
        assert_eq!(edge_diffusive_flux(0.0, 0.0, 0.0, 1.0, &e), 0.0);
        assert_eq!(edge_diffusive_flux(1e-310, 1e-310, 0.0, 1.0, &e), 0.0);
    }

    #[test]
    fn drift_flux_examples() {
        let e = unit_edge();
        assert_eq!(edge_drift_flux(0.1, 0.1, 0.4, 0.4, 1.0, 2.0, &e), 0.0);
        assert_eq!(edge_drift_flux(0.1, 0.1, 0.2, 0.6, 0.0, 2.0, &e), 0.0);
        assert_abs_diff_eq!(edge_drift_flux(0.1, 0.1, 0.3, 0.5, 1.0, 7.0, &e), 0.02, epsilon = 1e-15);
        // reversed gradient takes the right cell as upwind
        assert_abs_diff_eq!(edge_drift_flux(0.1, 0.1, 0.5, 0.3, 7.0, 1.0, &e), -0.02, epsilon = 1e-15);
    }

    fn pseudo_random(n: usize, seed: u64, lo: f64, hi: f64) -> Vec<f64> {
        let mut x = seed;
        (0..n)
            .map(|_| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                lo + (hi - lo) * ((x >> 11) as f64 / (1u64 << 53) as f64)
            })
            .collect()
    }

    #[test]
    fn zero_dt_gives_identity_and_plain_difference() {
        let grid = Grid::new(4, 3).unwrap();
        let n = grid.num_cells();
        let params = ModelParams::default();
        let m = pseudo_random(n, 1, 0.0, 1.0);
        let rhs = pseudo_random(n, 2, 0.0, 1.0);
        let mut sys = FvSystem::new(
            &grid,
            &params,
            0.0,
            pseudo_random(n, 3, 0.0, 1.0),
            pseudo_random(n, 4, 0.0, 1.0),
            rhs.clone(),
        )
        .unwrap();
        let r = sys.assemble_residual(&m).unwrap().to_vec();
        for c in 0..n {
            assert_eq!(r[c], m[c] - rhs[c]);
        }
        let j = sys.assemble_jacobian(&m).unwrap();
        for r in 0..n {
            for c in 0..n {
                assert_eq!(j.get(r, c), if r == c { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn uniform_state_has_no_flux() {
        let grid = Grid::new(5, 5).unwrap();
        let n = grid.num_cells();
        let rhs = pseudo_random(n, 9, 0.0, 1.0);
        let mut sys =
            FvSystem::new(&grid, &ModelParams::default(), 0.01, vec![0.3; n], vec![0.6; n], rhs.clone())
                .unwrap();
        let m = vec![0.4; n];
        let r = sys.assemble_residual(&m).unwrap();
        for c in 0..n {
            assert_eq!(r[c], m[c] - rhs[c]);
        }
    }

    #[test]
    fn degenerate_tissue_gives_identity_jacobian() {
        let grid = Grid::new(6, 4).unwrap();
        let n = grid.num_cells();
        let mut sys = FvSystem::new(
            &grid,
            &ModelParams::default(),
            0.01,
            pseudo_random(n, 5, 0.0, 1.0),
            vec![0.0; n],
            vec![0.0; n],
        )
        .unwrap();
        let j = sys.assemble_jacobian(&pseudo_random(n, 6, 0.0, 1.0)).unwrap().clone();
        for r in 0..n {
            for (c, val) in j.row(r) {
                assert_eq!(val, if r == c { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn residual_sum_is_flux_free() {
        // Sum over cells of |c| r_c must equal sum of |c| (m - rhs): every
        // edge flux cancels between its two cells.
        let grid = Grid::new(4, 4).unwrap();
        let n = grid.num_cells();
        for variant in [TaxisVariant::ContinuousModel, TaxisVariant::NumericsSection] {
            let params = ModelParams { taxis_variant: variant, ..ModelParams::default() };
            let m = pseudo_random(n, 11, 0.0, 1.5);
            let p = pseudo_random(n, 12, 0.0, 1.0);
            let v = pseudo_random(n, 13, 0.0, 1.0);
            let rhs = pseudo_random(n, 14, 0.0, 1.0);
            let mut sys = FvSystem::new(&grid, &params, 0.05, p.clone(), v.clone(), rhs.clone()).unwrap();
            let r = sys.assemble_residual(&m).unwrap();
            let area = grid.cell_measure();
            let lhs: f64 = r.iter().map(|x| x * area).sum();
            let expect: f64 = m.iter().zip(&rhs).map(|(a, b)| (a - b) * area).sum();
            assert!((lhs - expect).abs() <= 1e-14, "{lhs} vs {expect}");

            let fluxes = EdgeFluxes::compute(&grid, &params, &m, &p, &v);
            let total: f64 = fluxes.net_inflow(&grid).iter().sum();
            assert!(total.abs() <= 1e-14);
        }
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let grid = Grid::new(3, 3).unwrap();
        assert!(FvSystem::new(&grid, &ModelParams::default(), 0.1, vec![0.0; 9], vec![0.0; 8], vec![0.0; 9])
            .is_err());
        let mut sys =
            FvSystem::new(&grid, &ModelParams::default(), 0.1, vec![0.0; 9], vec![0.0; 9], vec![0.0; 9])
                .unwrap();
        assert!(matches!(
            sys.assemble_residual(&[0.0; 4]),
            Err(Error::SizeMismatch { expected: 9, got: 4 })
        ));
    }

    // One full cell next to empty ones on slightly richer tissue: the
    // drift feeds the empty cells while diffusion into them is shut, and
    // the step is long enough for the zero root to be lost.
    fn stalled_front() -> (Grid, Vec<f64>, Vec<f64>, Vec<f64>) {
        let grid = Grid::new(3, 2).unwrap();
        let mut v = vec![0.9; 6];
        v[0] = 0.8;
        let mut rhs = vec![0.0; 6];
        rhs[0] = 1.0;
        (grid, vec![0.0; 6], v, rhs)
    }

    #[test]
    fn stalled_cells_are_lifted_to_the_upper_root() {
        let (grid, p, v, rhs) = stalled_front();
        let params = ModelParams::default();
        let mut sys = FvSystem::new(&grid, &params, 1.0, p, v, rhs.clone()).unwrap();
        sys.assemble_jacobian(&rhs).unwrap();
        assert!(sys.jacobian.values()[sys.slots_diag(1)] < 0.0);
        assert!(sys.assemble_residual(&rhs).unwrap()[1] < 0.0);

        let mut m = rhs.clone();
        let moved = sys.lift_stalled_cells(&mut m).unwrap();
        assert!(moved >= 1);
        assert!(m[1] > 0.0);
        assert!(sys.assemble_residual(&m).unwrap()[1].abs() < 1e-9);
    }

    #[test]
    fn newton_finds_a_nonnegative_root_past_a_stalled_front() {
        let (grid, p, v, rhs) = stalled_front();
        let params = ModelParams::default();
        let mut sys = FvSystem::new(&grid, &params, 1.0, p, v, rhs.clone()).unwrap();
        let cfg = NewtonConfig { lower_bound: -1e-12, ..NewtonConfig::default() };
        let (m, stats) = newton_solve(&mut sys, &rhs, &cfg).unwrap();
        assert!(stats.final_residual <= 1e-10);
        assert!(m.iter().all(|&x| x >= 0.0), "{m:?}");
        let total: f64 = m.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
}
