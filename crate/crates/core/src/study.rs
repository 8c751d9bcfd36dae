//! Time-step refinement studies: RK4 order on the logistic tissue ODE and
//! self-convergence of the full IMEX scheme.

use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;

use crate::error::Result;
use crate::grid::Grid;
use crate::integrate::{imex_step, rk4_stage, TimeStepConfig};
use crate::model::{ModelParams, Scalar, State};

/// Exact solution of `v' = mu v (1 - v)`.
pub fn logistic_exact(v0: f64, mu: f64, t: f64) -> f64 {
    let g = (mu * t).exp();
    v0 * g / (1.0 - v0 + v0 * g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementRow {
    pub dt: f64,
    /// Error against the reference, or the difference to the next finer run.
    pub error: f64,
    /// `error(previous coarser dt) / error(this dt)`.
    pub ratio: Option<f64>,
    /// `log2(ratio)`.
    pub order: Option<f64>,
}

fn with_ratios(dts: &[f64], errors: &[f64]) -> Vec<RefinementRow> {
    dts.iter()
        .zip(errors)
        .enumerate()
        .map(|(k, (&dt, &error))| {
            let ratio = (k > 0).then(|| errors[k - 1] / error);
            RefinementRow { dt, error, ratio, order: ratio.map(f64::log2) }
        })
        .collect()
}

/// Binary float with 256 significant bits.
///
/// RK4 errors on the slow tissue logistic are far below one f64 ulp, so the
/// order study runs the integrator in this type instead.
#[derive(Debug, Clone, PartialEq)]
pub struct Wide(pub FBig<HalfEven, 2>);

const WIDE_BITS: usize = 256;

impl Scalar for Wide {
    fn from_f64(x: f64) -> Self {
        // every finite f64 converts exactly
        Wide(FBig::try_from(x).expect("finite").with_precision(WIDE_BITS).value())
    }
}

macro_rules! wide_op {
    ($tr:ident, $f:ident, $op:tt) => {
        impl std::ops::$tr for Wide {
            type Output = Wide;
            fn $f(self, rhs: Wide) -> Wide {
                Wide(self.0 $op rhs.0)
            }
        }
    };
}
wide_op!(Add, add, +);
wide_op!(Sub, sub, -);
wide_op!(Mul, mul, *);
wide_op!(Div, div, /);

impl Wide {
    pub fn exp(&self) -> Wide {
        Wide(self.0.exp())
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().value()
    }
}

/// Global RK4 error at `t_end` for the tissue ODE with no tumor cells,
/// integrated and compared to the closed form in [`Wide`] precision.
pub fn rk4_logistic_error(params: &ModelParams, v0: f64, dt: f64, t_end: f64) -> Result<f64> {
    let k = Wide::from_f64;
    let steps = (t_end / dt).round() as usize;
    let h = k(dt);
    let mut u = [k(0.0), k(0.0), k(v0)];
    for _ in 0..steps {
        u = rk4_stage(params, u, h.clone());
    }
    let t = h * k(steps as f64);
    let g = (k(params.mu_v) * t).exp();
    let exact = k(v0) * g.clone() / (k(1.0) - k(v0) + k(v0) * g);
    let err = (u[2].clone() - exact).to_f64();
    Ok(err.abs())
}

/// RK4 errors against the closed form for each `dt`, coarsest first.
pub fn reaction_order_study(params: &ModelParams, v0: f64, t_end: f64, dts: &[f64]) -> Result<Vec<RefinementRow>> {
    let errors = dts
        .iter()
        .map(|&dt| rk4_logistic_error(params, v0, dt, t_end))
        .collect::<Result<Vec<_>>>()?;
    Ok(with_ratios(dts, &errors))
}

/// Advances `initial` to `t_end` with fixed step `dt`.
pub fn integrate_to(
    initial: &State,
    grid: &Grid,
    params: &ModelParams,
    dt: f64,
    t_end: f64,
) -> Result<State> {
    let cfg = TimeStepConfig { dt, t_end, ..TimeStepConfig::default() };
    let mut state = initial.clone();
    for _ in 0..cfg.num_steps() {
        state = imex_step(&state, grid, params, &cfg)?.0;
    }
    Ok(state)
}

/// Cell-measure weighted L2 distance over all three fields.
pub fn state_distance(a: &State, b: &State, grid: &Grid) -> f64 {
    let sq: f64 = [(&a.m, &b.m), (&a.p, &b.p), (&a.v, &b.v)]
        .iter()
        .map(|(x, y)| x.iter().zip(y.iter()).map(|(p, q)| (p - q) * (p - q)).sum::<f64>())
        .sum();
    (sq * grid.cell_measure()).sqrt()
}

/// Self-convergence in `dt`: runs every step size in `dts` (coarsest first,
/// successively halved) and reports `|u_dt - u_{dt/2}|` for consecutive
/// pairs. A first-order method shows ratios near 2.
pub fn imex_self_convergence(
    initial: &State,
    grid: &Grid,
    params: &ModelParams,
    t_end: f64,
    dts: &[f64],
) -> Result<Vec<RefinementRow>> {
    let runs = dts
        .iter()
        .map(|&dt| integrate_to(initial, grid, params, dt, t_end))
        .collect::<Result<Vec<_>>>()?;
    let diffs: Vec<f64> = runs.windows(2).map(|w| state_distance(&w[0], &w[1], grid)).collect();
    Ok(with_ratios(&dts[..diffs.len()], &diffs))
}
