//! Pointwise model: parameters, cell state, coefficient functions and the
//! reaction right-hand side.

use std::fmt;

use crate::error::{Error, Result};

/// Which denominator the haptotactic sensitivity uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TaxisVariant {
    /// `kappa_v / (1 + v)^2`, the form the well-posedness analysis covers.
    #[default]
    ContinuousModel,
    /// `kappa_v / (1 + m + p)^2`, as used in the reference simulations.
    NumericsSection,
}

impl TaxisVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            TaxisVariant::ContinuousModel => "continuous",
            TaxisVariant::NumericsSection => "numerics",
        }
    }
}

impl std::str::FromStr for TaxisVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "continuous" => Ok(TaxisVariant::ContinuousModel),
            "numerics" => Ok(TaxisVariant::NumericsSection),
            other => Err(format!("expected `continuous` or `numerics`, got `{other}`")),
        }
    }
}

/// Rate constants of the model. Defaults are the reference parameter set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Transition rate migrating -> proliferating.
    pub alpha: f64,
    /// Tissue-dependent transition rate proliferating -> migrating.
    pub beta: f64,
    pub kappa_m: f64,
    pub kappa_v: f64,
    pub mu_p: f64,
    pub mu_v: f64,
    /// Weight of tissue in the proliferation competition term.
    pub eta: f64,
    /// Tissue degradation rate by migrating cells.
    pub lambda: f64,
    /// Uniform relaxation diffusion; zero gives the degenerate model.
    pub eps1: f64,
    pub taxis_variant: TaxisVariant,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            alpha: 0.01,
            beta: 0.2,
            kappa_m: 0.1,
            kappa_v: 0.1,
            mu_p: 0.3,
            mu_v: 0.021,
            eta: 1.75,
            lambda: 0.1,
            eps1: 0.0,
            taxis_variant: TaxisVariant::ContinuousModel,
        }
    }
}

impl ModelParams {
    /// Same transport coefficients with every reaction rate set to zero, so
    /// the reaction right-hand side vanishes identically.
    pub fn without_reactions(&self) -> Self {
        ModelParams {
            alpha: 0.0,
            beta: 0.0,
            mu_p: 0.0,
            mu_v: 0.0,
            lambda: 0.0,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("kappa_m", self.kappa_m),
            ("kappa_v", self.kappa_v),
            ("mu_p", self.mu_p),
            ("mu_v", self.mu_v),
            ("eta", self.eta),
            ("lambda", self.lambda),
            ("eps1", self.eps1),
        ];
        for (name, value) in rates {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::config(name, format!("must be finite and >= 0, got {value}")));
            }
        }
        Ok(())
    }

    /// `D = kappa_m v c / (1 + v c) + eps1` without range checks.
    ///
    /// Newton iterates may leave the admissible set, so `c` enters through
    /// its positive part. This keeps `D >= 0` everywhere, which rules out
    /// roots of the implicit step with negative `m`.
    #[inline]
    pub fn diffusion(&self, m: f64, p: f64, v: f64) -> f64 {
        let s = v * (m + p).max(0.0);
        self.kappa_m * s / (1.0 + s) + self.eps1
    }

    /// `dD/dm`, one-sided at `c = 0`.
    #[inline]
    pub fn diffusion_dm(&self, m: f64, p: f64, v: f64) -> f64 {
        if m + p < 0.0 {
            return 0.0;
        }
        let s = v * (m + p);
        self.kappa_m * v / ((1.0 + s) * (1.0 + s))
    }

    /// Haptotactic sensitivity without range checks.
    #[inline]
    pub fn drift(&self, m: f64, p: f64, v: f64) -> f64 {
        match self.taxis_variant {
            TaxisVariant::ContinuousModel => self.kappa_v / ((1.0 + v) * (1.0 + v)),
            TaxisVariant::NumericsSection => {
                let q = 1.0 + (m + p).max(0.0);
                self.kappa_v / (q * q)
            }
        }
    }

    /// `dV/dm`; zero for the continuous-model variant.
    #[inline]
    pub fn drift_dm(&self, m: f64, p: f64, _v: f64) -> f64 {
        match self.taxis_variant {
            TaxisVariant::ContinuousModel => 0.0,
            TaxisVariant::NumericsSection if m + p < 0.0 => 0.0,
            TaxisVariant::NumericsSection => {
                let q = 1.0 + m + p;
                -2.0 * self.kappa_v / (q * q * q)
            }
        }
    }

    /// Reaction vector `(dm, dp, dv)` without range checks.
    #[inline]
    pub fn reaction(&self, m: f64, p: f64, v: f64) -> [f64; 3] {
        self.reaction_in([m, p, v])
    }

    /// [`ModelParams::reaction`] over any [`Scalar`], so refinement studies
    /// can run the same arithmetic in extended precision.
    pub fn reaction_in<T: Scalar>(&self, [m, p, v]: [T; 3]) -> [T; 3] {
        let k = T::from_f64;
        let transition = k(-self.alpha) * m.clone() + k(self.beta) * p.clone() * v.clone();
        let growth = k(self.mu_p) * p.clone() * (k(1.0) - (m.clone() + p) - k(self.eta) * v.clone());
        let tissue = k(self.mu_v) * v.clone() * (k(1.0) - v.clone()) - k(self.lambda) * v * m;
        [transition.clone(), growth - transition, tissue]
    }
}

/// Field arithmetic needed by the reaction integrator.
pub trait Scalar:
    Clone
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
{
    fn from_f64(x: f64) -> Self;
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
}

fn check_point(m: f64, p: f64, v: f64) -> Result<()> {
    if !(m >= 0.0) {
        return Err(Error::Domain { what: "m", requirement: ">= 0", value: m });
    }
    if !(p >= 0.0) {
        return Err(Error::Domain { what: "p", requirement: ">= 0", value: p });
    }
    if !((0.0..=1.0).contains(&v)) {
        return Err(Error::Domain { what: "v", requirement: "in [0, 1]", value: v });
    }
    Ok(())
}

/// Diffusion coefficient of migrating cells, including the relaxation floor.
pub fn diffusion_coefficient(m: f64, p: f64, v: f64, params: &ModelParams) -> Result<f64> {
    check_point(m, p, v)?;
    Ok(params.diffusion(m, p, v))
}

pub fn drift_velocity_coefficient(m: f64, p: f64, v: f64, params: &ModelParams) -> Result<f64> {
    check_point(m, p, v)?;
    Ok(params.drift(m, p, v))
}

pub fn reaction_rhs(m: f64, p: f64, v: f64, params: &ModelParams) -> Result<(f64, f64, f64)> {
    check_point(m, p, v)?;
    let [dm, dp, dv] = params.reaction(m, p, v);
    Ok((dm, dp, dv))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    M,
    P,
    V,
    /// Total tumor density `m + p`.
    C,
}

impl Field {
    pub const ALL: [Field; 4] = [Field::M, Field::P, Field::V, Field::C];

    pub fn as_str(self) -> &'static str {
        match self {
            Field::M => "m",
            Field::P => "p",
            Field::V => "v",
            Field::C => "c",
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Field {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "m" => Ok(Field::M),
            "p" => Ok(Field::P),
            "v" => Ok(Field::V),
            "c" => Ok(Field::C),
            other => Err(format!("unknown field `{other}`")),
        }
    }
}

/// Piecewise-constant cell values of the three unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub m: Vec<f64>,
    pub p: Vec<f64>,
    pub v: Vec<f64>,
}

impl State {
    pub fn new(m: Vec<f64>, p: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let n = m.len();
        for len in [p.len(), v.len()] {
            if len != n {
                return Err(Error::SizeMismatch { expected: n, got: len });
            }
        }
        Ok(State { m, p, v })
    }

    pub fn zeros(cells: usize) -> Self {
        State {
            m: vec![0.0; cells],
            p: vec![0.0; cells],
            v: vec![0.0; cells],
        }
    }

    /// Spatially uniform state.
    pub fn uniform(cells: usize, m: f64, p: f64, v: f64) -> Self {
        State {
            m: vec![m; cells],
            p: vec![p; cells],
            v: vec![v; cells],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn total_density(&self, cell: usize) -> Result<f64> {
        if cell >= self.len() {
            return Err(Error::IndexOutOfRange { index: cell, len: self.len() });
        }
        Ok(self.m[cell] + self.p[cell])
    }

    /// `c = m + p` for every cell.
    pub fn c(&self) -> Vec<f64> {
        self.m.iter().zip(&self.p).map(|(m, p)| m + p).collect()
    }

    pub fn field(&self, field: Field) -> std::borrow::Cow<'_, [f64]> {
        match field {
            Field::M => (&self.m[..]).into(),
            Field::P => (&self.p[..]).into(),
            Field::V => (&self.v[..]).into(),
            Field::C => self.c().into(),
        }
    }

    /// Checks the physical invariants `m, p >= 0`, `0 <= v <= 1`.
    pub fn validate(&self) -> Result<()> {
        if self.p.len() != self.len() || self.v.len() != self.len() {
            return Err(Error::SizeMismatch {
                expected: self.len(),
                got: self.p.len().min(self.v.len()),
            });
        }
        for c in 0..self.len() {
            let (m, p, v) = (self.m[c], self.p[c], self.v[c]);
            if !(m >= 0.0) {
                return Err(Error::BoundViolation { cell: c, field: Field::M, value: m });
            }
            if !(p >= 0.0) {
                return Err(Error::BoundViolation { cell: c, field: Field::P, value: p });
            }
            if !((0.0..=1.0).contains(&v)) {
                return Err(Error::BoundViolation { cell: c, field: Field::V, value: v });
            }
        }
        Ok(())
    }
}
