//! Per-snapshot conserved quantities, bound checks and the entropy and
//! tissue-gradient functionals controlled by the a priori estimates.

use crate::grid::Grid;
use crate::integrate::{StepStats, BOUND_TOL};
use crate::model::{Field, ModelParams, State};

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub time: f64,
    pub mass_m: f64,
    pub mass_p: f64,
    pub mass_v: f64,
    pub min_m: f64,
    pub max_m: f64,
    pub min_p: f64,
    pub max_p: f64,
    pub min_v: f64,
    pub max_v: f64,
    /// `sum |c| m ln m` over cells with `m > 1`.
    pub entropy_m: f64,
    /// `sum_e |e|/d (sqrt(v_r) - sqrt(v_l))^2` over inner edges.
    pub grad_energy_v: f64,
    /// Running maximum of `p` up to this record.
    pub p_bound: f64,
    pub newton_iters: usize,
    pub mass_balance_residual: f64,
}

impl DiagnosticsRecord {
    /// Column names of [`DiagnosticsRecord::csv_row`], in order.
    pub const CSV_HEADER: &'static str = "step,time,mass_m,mass_p,mass_v,min_m,max_m,min_p,max_p,min_v,max_v,entropy_m,grad_energy_v,p_bound,newton_iters,mass_balance_residual";

    pub fn csv_row(&self) -> String {
        use crate::snapshot::fmt_g17 as f;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.step,
            f(self.time),
            f(self.mass_m),
            f(self.mass_p),
            f(self.mass_v),
            f(self.min_m),
            f(self.max_m),
            f(self.min_p),
            f(self.max_p),
            f(self.min_v),
            f(self.max_v),
            f(self.entropy_m),
            f(self.grad_energy_v),
            f(self.p_bound),
            self.newton_iters,
            f(self.mass_balance_residual),
        )
    }
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Entropy functional restricted to `{m > 1}`.
pub fn truncated_entropy(m: &[f64], grid: &Grid) -> f64 {
    grid.cell_measure() * m.iter().filter(|&&x| x > 1.0).fold(0.0, |acc, &x| acc + x * x.ln())
}

/// Two-point discrete `||grad sqrt(v)||^2`.
pub fn sqrt_gradient_energy(v: &[f64], grid: &Grid) -> f64 {
    grid.edges()
        .iter()
        .map(|e| {
            let diff = v[e.right].max(0.0).sqrt() - v[e.left].max(0.0).sqrt();
            e.measure / e.distance * diff * diff
        })
        .sum()
}

/// All diagnostics of `state` at `time`. `p_bound` is set to this state's
/// maximum of `p`; callers tracking a trajectory overwrite it with the
/// running maximum.
pub fn compute_record(state: &State, grid: &Grid, time: f64, stats: Option<&StepStats>) -> DiagnosticsRecord {
    let area = grid.cell_measure();
    let (min_m, max_m) = min_max(&state.m);
    let (min_p, max_p) = min_max(&state.p);
    let (min_v, max_v) = min_max(&state.v);
    DiagnosticsRecord {
        step: 0,
        time,
        mass_m: area * state.m.iter().sum::<f64>(),
        mass_p: area * state.p.iter().sum::<f64>(),
        mass_v: area * state.v.iter().sum::<f64>(),
        min_m,
        max_m,
        min_p,
        max_p,
        min_v,
        max_v,
        entropy_m: truncated_entropy(&state.m, grid),
        grad_energy_v: sqrt_gradient_energy(&state.v, grid),
        p_bound: max_p,
        newton_iters: stats.map_or(0, |s| s.newton_iterations),
        mass_balance_residual: stats.map_or(0.0, |s| s.mass_balance_residual),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundViolation {
    pub cell: usize,
    pub field: Field,
    pub value: f64,
}

/// Upper bound for `p` along trajectories: `max(1, alpha / mu_p, p0_max)`.
/// Above it the proliferation and transition terms are jointly
/// nonpositive.
pub fn proliferating_bound(params: &ModelParams, p0_max: f64) -> f64 {
    let ratio = params.alpha / params.mu_p;
    // 0/0 is NaN and drops out of max
    1.0f64.max(ratio).max(p0_max)
}

/// Cells where `m < 0`, `p` outside `[0, C_p]` or `v` outside `[0, 1]`,
/// each with slack [`BOUND_TOL`].
pub fn check_bounds(state: &State, params: &ModelParams, p0_max: f64) -> Vec<BoundViolation> {
    let cp = proliferating_bound(params, p0_max);
    let mut out = Vec::new();
    for c in 0..state.len() {
        let (m, p, v) = (state.m[c], state.p[c], state.v[c]);
        if !(m >= -BOUND_TOL) {
            out.push(BoundViolation { cell: c, field: Field::M, value: m });
        }
        if !(p >= -BOUND_TOL && p <= cp + BOUND_TOL) {
            out.push(BoundViolation { cell: c, field: Field::P, value: p });
        }
        if !(v >= -BOUND_TOL && v <= 1.0 + BOUND_TOL) {
            out.push(BoundViolation { cell: c, field: Field::V, value: v });
        }
    }
    out
}

/// `|sum |c| ((m + p)_after - (m + p)_before) - reaction_integral|`: tumor
/// mass change not explained by the reactions.
pub fn mass_balance_check(before: &State, after: &State, reaction_integral: f64, grid: &Grid) -> f64 {
    let change: f64 = (0..before.len())
        .map(|c| (after.m[c] + after.p[c]) - (before.m[c] + before.p[c]))
        .sum::<f64>()
        * grid.cell_measure();
    (change - reaction_integral).abs()
}
