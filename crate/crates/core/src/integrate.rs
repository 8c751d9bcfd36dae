//! Time stepping: cell-wise RK4 for the reactions followed by an implicit
//! Euler transport step for migrating cells.

use crate::diagnostics::{compute_record, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::fv::{newton_solve, FvSystem, NewtonConfig};
use crate::grid::Grid;
use crate::model::{Field, ModelParams, Scalar, State};

/// Slack allowed below zero (and above one for `v`) before a value counts
/// as a bound violation.
pub const BOUND_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeStepConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Max-norm residual tolerance of the Newton iteration.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Relative tolerance of the inner linear solves.
    pub linear_tol: f64,
}

impl Default for TimeStepConfig {
    fn default() -> Self {
        TimeStepConfig {
            dt: 0.01,
            t_end: 1000.0,
            newton_tol: 1e-10,
            newton_max_iter: 25,
            linear_tol: 1e-12,
        }
    }
}

impl TimeStepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt", format!("must be finite and > 0, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::config("t_end", format!("must be finite and >= 0, got {}", self.t_end)));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::config("newton_tol", format!("must be > 0, got {}", self.newton_tol)));
        }
        if self.newton_max_iter == 0 {
            return Err(Error::config("newton_max_iter", "must be at least 1"));
        }
        if !(self.linear_tol > 0.0) {
            return Err(Error::config("linear_tol", format!("must be > 0, got {}", self.linear_tol)));
        }
        Ok(())
    }

    /// `ceil(t_end / dt)`, ignoring round-off just above an integer.
    pub fn num_steps(&self) -> usize {
        let ratio = self.t_end / self.dt;
        let nearest = ratio.round();
        if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest as usize
        } else {
            ratio.ceil() as usize
        }
    }

    pub fn newton(&self) -> NewtonConfig {
        NewtonConfig {
            tol: self.newton_tol,
            max_iter: self.newton_max_iter,
            linear_tol: self.linear_tol,
            // roots of the implicit step are nonnegative; Newton steps
            // leaving that set are rejected
            lower_bound: -BOUND_TOL,
        }
    }
}

fn check_bounds_strict(state: &State) -> Result<()> {
    for c in 0..state.len() {
        let (m, p, v) = (state.m[c], state.p[c], state.v[c]);
        if !(m >= -BOUND_TOL) {
            return Err(Error::BoundViolation { cell: c, field: Field::M, value: m });
        }
        if !(p >= -BOUND_TOL) {
            return Err(Error::BoundViolation { cell: c, field: Field::P, value: p });
        }
        if !(v >= -BOUND_TOL && v <= 1.0 + BOUND_TOL) {
            return Err(Error::BoundViolation { cell: c, field: Field::V, value: v });
        }
    }
    Ok(())
}

/// One classical RK4 step of the reaction ODEs, independently per cell.
///
/// Output values are not clamped; leaving the admissible range by more than
/// [`BOUND_TOL`] is an error, which signals a time step too large for the
/// reaction stiffness.
pub fn rk4_reaction_step(state: &State, params: &ModelParams, dt: f64) -> Result<State> {
    let n = state.len();
    let mut out = State::zeros(n);
    for c in 0..n {
        let [m, p, v] = rk4_stage(params, [state.m[c], state.p[c], state.v[c]], dt);
        out.m[c] = m;
        out.p[c] = p;
        out.v[c] = v;
    }
    check_bounds_strict(&out)?;
    Ok(out)
}

/// Classical RK4 for the reactions of a single cell.
pub fn rk4_stage<T: Scalar>(params: &ModelParams, u: [T; 3], dt: T) -> [T; 3] {
    let k = T::from_f64;
    let half = k(0.5) * dt.clone();
    let shift = |a: &[T; 3], h: &T| -> [T; 3] { std::array::from_fn(|i| u[i].clone() + h.clone() * a[i].clone()) };
    let k1 = params.reaction_in(u.clone());
    let k2 = params.reaction_in(shift(&k1, &half));
    let k3 = params.reaction_in(shift(&k2, &half));
    let k4 = params.reaction_in(shift(&k3, &dt));
    let w = dt / k(6.0);
    std::array::from_fn(|i| {
        let sum = k1[i].clone() + k(2.0) * k2[i].clone() + k(2.0) * k3[i].clone() + k4[i].clone();
        u[i].clone() + w.clone() * sum
    })
}

/// Outcome of one IMEX step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepStats {
    pub newton_iterations: usize,
    pub newton_residual: f64,
    /// Max-norm Newton residuals, first entry at the initial guess.
    pub residual_history: Vec<f64>,
    /// `|sum |c| (m_new - m_stage)|`: mass created or lost by the transport
    /// solve, which must vanish up to solver tolerance.
    pub mass_balance_residual: f64,
    /// [`StepStats::mass_balance_residual`] relative to the stage mass of `m`.
    pub mass_balance_relative: f64,
    /// `sum |c| ((m + p)_stage - (m + p)_old)`: tumor mass produced by the
    /// reaction substep.
    pub reaction_mass: f64,
}

/// One IMEX step: RK4 for the reactions, then Newton on the implicit
/// transport of `m` with `p`, `v` frozen at their post-reaction values.
pub fn imex_step(
    state: &State,
    grid: &Grid,
    params: &ModelParams,
    cfg: &TimeStepConfig,
) -> Result<(State, StepStats)> {
    if state.len() != grid.num_cells() {
        return Err(Error::SizeMismatch { expected: grid.num_cells(), got: state.len() });
    }
    let stage = rk4_reaction_step(state, params, cfg.dt)?;
    let area = grid.cell_measure();
    let stage_mass: f64 = stage.m.iter().sum::<f64>() * area;
    let reaction_mass = area
        * stage
            .m
            .iter()
            .zip(&stage.p)
            .zip(state.m.iter().zip(&state.p))
            .map(|((ms, ps), (m0, p0))| (ms + ps) - (m0 + p0))
            .sum::<f64>();

    let mut system = FvSystem::new(
        grid,
        params,
        cfg.dt,
        stage.p.clone(),
        stage.v.clone(),
        stage.m.clone(),
    )?;
    let (m_new, newton) = newton_solve(&mut system, &stage.m, &cfg.newton())?;

    let balance = area * m_new.iter().zip(&stage.m).map(|(a, b)| a - b).sum::<f64>();
    let stats = StepStats {
        newton_iterations: newton.iterations,
        newton_residual: newton.final_residual,
        residual_history: newton.history,
        mass_balance_residual: balance.abs(),
        mass_balance_relative: if stage_mass > 0.0 { balance.abs() / stage_mass } else { balance.abs() },
        reaction_mass,
    };
    let next = State { m: m_new, p: stage.p, v: stage.v };
    check_bounds_strict(&next)?;
    Ok((next, stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotKind {
    Initial,
    Periodic,
    Final,
    /// Last valid state before an aborted step.
    Failure,
}

/// What the output sink sees at each emitted snapshot.
#[derive(Debug)]
pub struct Snapshot<'a> {
    pub index: usize,
    pub step: usize,
    pub time: f64,
    pub kind: SnapshotKind,
    pub state: &'a State,
    pub record: &'a DiagnosticsRecord,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Emit a snapshot every this many steps; 0 emits only the initial and
    /// final states.
    pub snapshot_every: usize,
}

/// Per-step solver log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub newton_iterations: usize,
    pub newton_residual: f64,
    pub mass_balance_relative: f64,
}

/// Componentwise extremes over every state of a run, initial included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremes {
    pub min_m: f64,
    pub max_m: f64,
    pub min_p: f64,
    pub max_p: f64,
    pub min_v: f64,
    pub max_v: f64,
}

impl Extremes {
    fn of(state: &State) -> Self {
        let mut e = Extremes {
            min_m: f64::INFINITY,
            max_m: f64::NEG_INFINITY,
            min_p: f64::INFINITY,
            max_p: f64::NEG_INFINITY,
            min_v: f64::INFINITY,
            max_v: f64::NEG_INFINITY,
        };
        e.update(state);
        e
    }

    fn update(&mut self, state: &State) {
        for c in 0..state.len() {
            self.min_m = self.min_m.min(state.m[c]);
            self.max_m = self.max_m.max(state.m[c]);
            self.min_p = self.min_p.min(state.p[c]);
            self.max_p = self.max_p.max(state.p[c]);
            self.min_v = self.min_v.min(state.v[c]);
            self.max_v = self.max_v.max(state.v[c]);
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub final_state: State,
    pub steps: usize,
    pub final_time: f64,
    pub step_log: Vec<StepLog>,
    pub extremes: Extremes,
}

/// A run aborted by a solver failure or bound violation.
#[derive(Debug, thiserror::Error)]
#[error("simulation aborted at step {step} (t = {time}): {source}")]
pub struct SimulationFailure {
    #[source]
    pub source: Error,
    pub step: usize,
    pub time: f64,
    pub last_valid: Box<State>,
}

/// Advances `initial` by `ceil(t_end / dt)` IMEX steps, handing snapshots
/// to `sink` at the cadence given in `options`. Step `k` ends at time
/// `k * dt`.
pub fn run_simulation<F>(
    initial: State,
    grid: &Grid,
    params: &ModelParams,
    cfg: &TimeStepConfig,
    options: &RunOptions,
    mut sink: F,
) -> std::result::Result<RunSummary, SimulationFailure>
where
    F: FnMut(&Snapshot<'_>) -> Result<()>,
{
    let fail = |source: Error, step: usize, time: f64, state: &State| SimulationFailure {
        source,
        step,
        time,
        last_valid: Box::new(state.clone()),
    };
    if let Err(e) = params
        .validate()
        .and_then(|_| cfg.validate())
        .and_then(|_| {
            if initial.len() == grid.num_cells() {
                Ok(())
            } else {
                Err(Error::SizeMismatch { expected: grid.num_cells(), got: initial.len() })
            }
        })
        .and_then(|_| initial.validate())
    {
        return Err(fail(e, 0, 0.0, &initial));
    }

    let steps = cfg.num_steps();
    let mut index = 0;
    let mut state = initial;
    let mut extremes = Extremes::of(&state);
    let mut step_log = Vec::with_capacity(steps);
    let mut p_bound = extremes.max_p;

    let emit = |sink: &mut F, state: &State, step: usize, kind: SnapshotKind, stats: Option<&StepStats>, p_bound: f64, index: &mut usize| -> Result<()> {
        let time = step as f64 * cfg.dt;
        let mut record = compute_record(state, grid, time, stats);
        record.step = step;
        record.p_bound = p_bound;
        sink(&Snapshot { index: *index, step, time, kind, state, record: &record })?;
        *index += 1;
        Ok(())
    };

    let initial_kind = if steps == 0 { SnapshotKind::Final } else { SnapshotKind::Initial };
    if let Err(e) = emit(&mut sink, &state, 0, initial_kind, None, p_bound, &mut index) {
        return Err(fail(e, 0, 0.0, &state));
    }

    for step in 1..=steps {
        let (next, stats) = match imex_step(&state, grid, params, cfg) {
            Ok(v) => v,
            Err(e) => {
                let t = (step - 1) as f64 * cfg.dt;
                let _ = emit(&mut sink, &state, step - 1, SnapshotKind::Failure, None, p_bound, &mut index);
                return Err(fail(e, step, t, &state));
            }
        };
        state = next;
        extremes.update(&state);
        p_bound = p_bound.max(state.p.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        step_log.push(StepLog {
            newton_iterations: stats.newton_iterations,
            newton_residual: stats.newton_residual,
            mass_balance_relative: stats.mass_balance_relative,
        });
        let kind = if step == steps {
            Some(SnapshotKind::Final)
        } else if options.snapshot_every > 0 && step % options.snapshot_every == 0 {
            Some(SnapshotKind::Periodic)
        } else {
            None
        };
        if let Some(kind) = kind {
            if let Err(e) = emit(&mut sink, &state, step, kind, Some(&stats), p_bound, &mut index) {
                return Err(fail(e, step, step as f64 * cfg.dt, &state));
            }
        }
    }

    Ok(RunSummary {
        final_state: state,
        steps,
        final_time: steps as f64 * cfg.dt,
        step_log,
        extremes,
    })
}
