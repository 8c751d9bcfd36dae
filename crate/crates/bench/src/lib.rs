//! Fixtures shared by the benchmarks.

use haptogrow::integrate::rk4_reaction_step;
use haptogrow::{initial, FvSystem, Grid, InitialConditionSpec, ModelParams, State};

/// Grate initial data on an `n x n` grid, advanced `warmup` steps so that
/// the fronts have started to move.
pub fn grate_state(grid: &Grid, params: &ModelParams, warmup: usize) -> State {
    let mut s = initial::generate_initial_state(grid, &InitialConditionSpec::default(), 0);
    let cfg = haptogrow::TimeStepConfig::default();
    for _ in 0..warmup {
        s = haptogrow::integrate::imex_step(&s, grid, params, &cfg).expect("warmup step").0;
    }
    s
}

/// The implicit system of one step from `state` and its explicit-stage guess.
pub fn implicit_system<'a>(grid: &'a Grid, params: &ModelParams, state: &State, dt: f64) -> (FvSystem<'a>, Vec<f64>) {
    let stage = rk4_reaction_step(state, params, dt).expect("reaction stage");
    let guess = stage.m.clone();
    let sys = FvSystem::new(grid, params, dt, stage.p, stage.v, stage.m).expect("system");
    (sys, guess)
}
