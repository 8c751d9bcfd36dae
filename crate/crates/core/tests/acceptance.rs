//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero if any fails. The long runs execute in parallel.

use std::time::Instant;

use haptogrow::initial::{generate_initial_state, in_tissue_support, keyed_uniform};
use haptogrow::integrate::{imex_step, run_simulation, RunOptions};
use haptogrow::study::{imex_self_convergence, integrate_to, reaction_order_study, state_distance};
use haptogrow::{FvSystem, Grid, InitialConditionSpec, ModelParams, State, TaxisVariant, TimeStepConfig};

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
    /// Extra lines printed under the verdict.
    notes: Vec<String>,
}

fn outcome(id: u32, name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { id, name, pass, detail, notes: Vec::new() }
}

fn grate(n: usize, seed: u64) -> (Grid, State) {
    let grid = Grid::new(n, n).unwrap();
    let state = generate_initial_state(&grid, &InitialConditionSpec::default(), seed);
    (grid, state)
}

fn total(x: &[f64], grid: &Grid) -> f64 {
    x.iter().sum::<f64>() * grid.cell_measure()
}

fn reaction_order() -> Outcome {
    let rows = reaction_order_study(&ModelParams::default(), 0.5, 1.0, &[0.02, 0.01]).unwrap();
    let ratio = rows[1].ratio.unwrap();
    let pass = (14.0..=18.0).contains(&ratio);
    let detail = format!(
        "error(dt=0.02) = {:.4e}, error(dt=0.01) = {:.4e}, ratio {ratio:.3} (need [14, 18])",
        rows[0].error, rows[1].error
    );
    outcome(1, "RK4 reaction order", pass, detail)
}

fn conservation() -> Outcome {
    let (grid, init) = grate(20, 0);
    let cfg = TimeStepConfig { dt: 0.01, t_end: 1.0, ..TimeStepConfig::default() };

    let params = ModelParams::default();
    let mut state = init.clone();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (next, stats) = imex_step(&state, &grid, &params, &cfg).unwrap();
        worst = worst.max(stats.mass_balance_relative);
        state = next;
    }

    let transport = params.without_reactions();
    let mass0 = total(&init.m, &grid);
    let mut state = init;
    for _ in 0..100 {
        state = imex_step(&state, &grid, &transport, &cfg).unwrap().0;
    }
    let drift = (total(&state.m, &grid) - mass0).abs() / mass0;

    let pass = worst <= 1e-10 && drift <= 1e-9;
    let detail = format!(
        "max per-step balance residual {worst:.3e} (need <= 1e-10), transport-only drift of sum m {drift:.3e} (need <= 1e-9)"
    );
    outcome(2, "mass conservation", pass, detail)
}

/// Criteria 3 and 5 share one 50x50 run to t = 50.
fn bounds_and_newton() -> [Outcome; 2] {
    let (grid, init) = grate(50, 0);
    let params = ModelParams::default();
    let cfg = TimeStepConfig { dt: 0.01, t_end: 50.0, ..TimeStepConfig::default() };
    let p0_max = init.p.iter().copied().fold(0.0, f64::max);
    let run = run_simulation(init, &grid, &params, &cfg, &RunOptions::default(), |_| Ok(()));
    let summary = match run {
        Ok(s) => s,
        Err(e) => {
            return [
                outcome(3, "bounds on 50x50 to t=50", false, format!("run aborted: {e}")),
                outcome(5, "Newton robustness", false, format!("run aborted: {e}")),
            ]
        }
    };
    let x = &summary.extremes;
    let p_cap = 1.0f64.max(p0_max) + 1e-8;
    let bounds = x.min_v >= -1e-12 && x.max_v <= 1.0 + 1e-12 && x.max_p <= p_cap && x.min_m >= -1e-12;
    let b = format!(
        "min v {:.3e}, max v {:.15}, max p {:.6} (cap {:.6}), min m {:.3e}",
        x.min_v, x.max_v, x.max_p, p_cap, x.min_m
    );

    let mut iters: Vec<usize> = summary.step_log.iter().map(|s| s.newton_iterations).collect();
    let worst_res = summary.step_log.iter().map(|s| s.newton_residual).fold(0.0, f64::max);
    iters.sort_unstable();
    let median = iters[iters.len() / 2];
    let max_iter = *iters.last().unwrap();
    let newton = max_iter <= 25 && worst_res <= 1e-10 && median <= 5;
    let n = format!(
        "{} steps, max iterations {max_iter} (need <= 25), worst final residual {worst_res:.3e} (need <= 1e-10), median {median} (need <= 5)",
        iters.len()
    );
    [outcome(3, "bounds on 50x50 to t=50", bounds, b), outcome(5, "Newton robustness", newton, n)]
}

/// Draw in `[lo, hi)` from the crate's counter-based generator.
fn draw(seed: u64, k: u64, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * keyed_uniform(seed, k, 99)
}

fn jacobian_check() -> Outcome {
    let grid = Grid::new(8, 8).unwrap();
    let n = grid.num_cells();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for sample in 0..50u64 {
        let variant = if sample % 2 == 0 { TaxisVariant::ContinuousModel } else { TaxisVariant::NumericsSection };
        let params = ModelParams { taxis_variant: variant, ..ModelParams::default() };
        let field = |f: u64, lo, hi| (0..n as u64).map(|c| draw(sample, 4 * c + f, lo, hi)).collect::<Vec<f64>>();
        let m = field(0, 0.1, 1.0);
        let p = field(1, 0.0, 1.0);
        let v = field(2, 0.0, 1.0);
        let rhs = field(3, 0.1, 1.0);
        // the upwind cell only changes where v_l = v_r
        let min_jump = grid.edges().iter().map(|e| (v[e.right] - v[e.left]).abs()).fold(f64::INFINITY, f64::min);
        assert!(min_jump > 1e-9, "sample {sample} sits on an upwind switch");

        let mut sys = FvSystem::new(&grid, &params, 0.01, p, v, rhs).unwrap();
        let jac = sys.assemble_jacobian(&m).unwrap().to_dense();
        for j in 0..n {
            let mut plus = m.clone();
            plus[j] += h;
            let mut minus = m.clone();
            minus[j] -= h;
            let rp = sys.assemble_residual(&plus).unwrap().to_vec();
            let rm = sys.assemble_residual(&minus).unwrap().to_vec();
            for i in 0..n {
                let fd = (rp[i] - rm[i]) / (2.0 * h);
                let exact = jac[i][j];
                let scale = exact.abs().max(fd.abs());
                if scale < 1e-12 {
                    // structural zero
                    continue;
                }
                worst = worst.max((exact - fd).abs() / scale);
                checked += 1;
            }
        }
    }
    let pass = worst <= 1e-5;
    outcome(
        4,
        "Jacobian vs central differences",
        pass,
        format!("50 states (both taxis variants), {checked} nonzero entries, max relative error {worst:.3e} (need <= 1e-5)"),
    )
}

/// Smooth, nondegenerate data: the asymptotic regime of the time error is
/// reached at the coarsest step.
fn smooth_state(grid: &Grid) -> State {
    let pi = std::f64::consts::PI;
    let n = grid.num_cells();
    let (mut m, mut p, mut v) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for c in 0..n {
        let (x, y) = grid.center(c);
        m[c] = 0.3 + 0.2 * (pi * x).cos() * (pi * y).cos();
        p[c] = 0.2 + 0.1 * (2.0 * pi * x).sin() * (pi * y).sin();
        v[c] = 0.5 + 0.3 * (2.0 * pi * x).cos() * (2.0 * pi * y).cos();
    }
    State::new(m, p, v).unwrap()
}

fn self_convergence() -> Outcome {
    let grid = Grid::new(20, 20).unwrap();
    let params = ModelParams::default();
    let dts = [0.04, 0.02, 0.01];
    let rows = imex_self_convergence(&smooth_state(&grid), &grid, &params, 1.0, &dts).unwrap();
    let ratio = rows[1].ratio.unwrap();
    let pass = (1.7..=2.3).contains(&ratio);
    let detail = format!(
        "smooth data, |u(0.04)-u(0.02)| = {:.4e}, |u(0.02)-u(0.01)| = {:.4e}, ratio {ratio:.3} (need [1.7, 2.3])",
        rows[0].error, rows[1].error
    );
    let mut out = outcome(6, "first-order self-convergence", pass, detail);

    let (_, init) = grate(20, 0);
    let rows = imex_self_convergence(&init, &grid, &params, 1.0, &[0.04, 0.02, 0.01, 0.005]).unwrap();
    let ratios: Vec<String> = rows.iter().filter_map(|r| r.ratio).map(|r| format!("{r:.3}")).collect();
    out.notes.push(format!("info: grate data seed 0, successive ratios {}", ratios.join(", ")));
    out
}

fn go_or_grow() -> Outcome {
    let (grid, init) = grate(100, 0);
    let params = ModelParams::default();
    let cfg = TimeStepConfig { dt: 0.01, t_end: 200.0, ..TimeStepConfig::default() };
    let mass0 = total(&init.m, &grid);
    let empty: Vec<bool> = init.v.iter().map(|&v| v == 0.0).collect();
    let summary = match run_simulation(init, &grid, &params, &cfg, &RunOptions::default(), |_| Ok(())) {
        Ok(s) => s,
        Err(e) => return outcome(7, "go-or-grow on 100x100 to t=200", false, format!("run aborted: {e}")),
    };
    let s = &summary.final_state;

    // cells within a 7x7 block around a tissue cell
    let (nx, ny) = (grid.nx(), grid.ny());
    let tissue: Vec<bool> = (0..grid.num_cells())
        .map(|c| {
            let (x, y) = grid.center(c);
            in_tissue_support(x, y)
        })
        .collect();
    let near = |c: usize| {
        let (i, j) = grid.coords(c);
        (i.saturating_sub(3)..=(i + 3).min(nx - 1))
            .any(|a| (j.saturating_sub(3)..=(j + 3).min(ny - 1)).any(|b| tissue[grid.index(a, b)]))
    };
    let mass1 = total(&s.m, &grid);
    let near_mass: f64 = (0..grid.num_cells()).filter(|&c| near(c)).map(|c| s.m[c]).sum::<f64>() * grid.cell_measure();
    let fraction = near_mass / mass1;
    let leaked = (0..grid.num_cells()).filter(|&c| empty[c] && s.v[c] != 0.0).count();

    let pass = fraction >= 0.8 && mass1 > mass0 && leaked == 0;
    let detail = format!(
        "(a) {:.2}% of m-mass near tissue (need >= 80%), (b) sum m {mass0:.5e} -> {mass1:.5e}, (c) {leaked} of {} tissue-free cells gained tissue",
        100.0 * fraction,
        empty.iter().filter(|&&e| e).count()
    );
    outcome(7, "go-or-grow on 100x100 to t=200", pass, detail)
}

fn degenerate_limit() -> Outcome {
    let (grid, mut init) = grate(20, 0);
    init.v.iter_mut().for_each(|v| *v = 0.0);
    let params = ModelParams { eps1: 0.0, ..ModelParams::default() };
    let end = integrate_to(&init, &grid, &params, 0.01, 1.0).unwrap();
    let decay = (-params.alpha * 1.0f64).exp();
    let err = (0..grid.num_cells()).map(|c| (end.m[c] - init.m[c] * decay).abs()).fold(0.0, f64::max);
    let pass = err <= 1e-10;
    outcome(8, "degenerate-limit identity", pass, format!("max |m(1) - m0 exp(-alpha)| = {err:.3e} (need <= 1e-10)"))
}

fn eps_relaxation() -> Outcome {
    let (grid, init) = grate(20, 0);
    let base = ModelParams { eps1: 0.0, ..ModelParams::default() };
    let reference = integrate_to(&init, &grid, &base, 0.01, 1.0).unwrap();
    let diffs: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&eps1| {
            let params = ModelParams { eps1, ..base };
            state_distance(&integrate_to(&init, &grid, &params, 0.01, 1.0).unwrap(), &reference, &grid)
        })
        .collect();
    let pass = diffs[0] > diffs[1] && diffs[1] > diffs[2];
    let detail = format!(
        "distance to eps1 = 0 run: {:.4e} (1e-2), {:.4e} (1e-3), {:.4e} (1e-4), must decrease",
        diffs[0], diffs[1], diffs[2]
    );
    outcome(9, "eps1 relaxation consistency", pass, detail)
}

fn main() {
    let started = Instant::now();
    let mut results: Vec<Outcome> = std::thread::scope(|s| {
        let long_a = s.spawn(go_or_grow);
        let long_b = s.spawn(bounds_and_newton);
        let short = s.spawn(|| {
            vec![reaction_order(), conservation(), jacobian_check(), self_convergence(), degenerate_limit(), eps_relaxation()]
        });
        let mut all = short.join().unwrap();
        all.extend(long_b.join().unwrap());
        all.push(long_a.join().unwrap());
        all
    });
    results.sort_by_key(|o| o.id);

    println!();
    for o in &results {
        println!("criterion {} [{}] {}: {}", o.id, if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
        for note in &o.notes {
            println!("    {note}");
        }
    }
    let failed = results.iter().filter(|o| !o.pass).count();
    println!(
        "acceptance: {} passed, {failed} failed ({:.1} s)",
        results.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
