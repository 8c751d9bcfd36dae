//! Run configuration: defaults, plain-text `key = value` files and
//! override layering.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::integrate::TimeStepConfig;
use crate::model::{ModelParams, TaxisVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    CsvGrid,
    VtkLegacy,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "csv_grid" | "csv" => Ok(OutputFormat::CsvGrid),
            "vtk_legacy" | "vtk" => Ok(OutputFormat::VtkLegacy),
            other => Err(format!("expected `csv_grid` or `vtk_legacy`, got `{other}`")),
        }
    }
}

impl OutputFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            OutputFormat::CsvGrid => "csv_grid",
            OutputFormat::VtkLegacy => "vtk_legacy",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub nx: usize,
    pub ny: usize,
    pub time: TimeStepConfig,
    pub params: ModelParams,
    pub rng_seed: u64,
    /// Snapshot cadence in time units.
    pub snapshot_interval: f64,
    pub output_dir: PathBuf,
    pub output_format: OutputFormat,
    pub emit_heatmaps: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            nx: 200,
            ny: 200,
            time: TimeStepConfig::default(),
            params: ModelParams::default(),
            rng_seed: 0,
            snapshot_interval: 10.0,
            output_dir: PathBuf::from("output"),
            output_format: OutputFormat::CsvGrid,
            emit_heatmaps: false,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| Error::config(key, format!("cannot parse `{value}`: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(Error::config(key, format!("expected a boolean, got `{other}`"))),
    }
}

impl RunConfig {
    /// Sets one field by name. Keys accept `-` or `_` as separators, so the
    /// CLI flag names work in files too.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let k = key.as_str();
        match k {
            "nx" => self.nx = parse(k, value)?,
            "ny" => self.ny = parse(k, value)?,
            "dt" => self.time.dt = parse(k, value)?,
            "t_end" => self.time.t_end = parse(k, value)?,
            "newton_tol" => self.time.newton_tol = parse(k, value)?,
            "newton_max_iter" => self.time.newton_max_iter = parse(k, value)?,
            "linear_tol" => self.time.linear_tol = parse(k, value)?,
            "alpha" => self.params.alpha = parse(k, value)?,
            "beta" => self.params.beta = parse(k, value)?,
            "kappa_m" => self.params.kappa_m = parse(k, value)?,
            "kappa_v" => self.params.kappa_v = parse(k, value)?,
            "mu_p" => self.params.mu_p = parse(k, value)?,
            "mu_v" => self.params.mu_v = parse(k, value)?,
            "eta" => self.params.eta = parse(k, value)?,
            "lambda" => self.params.lambda = parse(k, value)?,
            "eps1" => self.params.eps1 = parse(k, value)?,
            "taxis_variant" => self.params.taxis_variant = parse::<TaxisVariant>(k, value)?,
            "seed" | "rng_seed" => self.rng_seed = parse(k, value)?,
            "snapshot_every" | "snapshot_interval" => self.snapshot_interval = parse(k, value)?,
            "out" | "output_dir" => self.output_dir = PathBuf::from(value),
            "format" | "output_format" => self.output_format = parse(k, value)?,
            "emit_heatmaps" | "heatmaps" => self.emit_heatmaps = parse_bool(k, value)?,
            _ => return Err(Error::config(k, "unknown configuration key")),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}", lineno + 1), format!("expected `key = value`, got `{line}`"))
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 {
            return Err(Error::config("nx", format!("must be at least 2, got {}", self.nx)));
        }
        if self.ny < 2 {
            return Err(Error::config("ny", format!("must be at least 2, got {}", self.ny)));
        }
        self.time.validate()?;
        self.params.validate()?;
        if !(self.snapshot_interval >= self.time.dt) {
            return Err(Error::config(
                "snapshot_every",
                format!("must be at least dt = {}, got {}", self.time.dt, self.snapshot_interval),
            ));
        }
        Ok(())
    }

    /// Snapshot cadence in whole steps.
    pub fn snapshot_steps(&self) -> usize {
        ((self.snapshot_interval / self.time.dt).round() as usize).max(1)
    }

    /// Canonical `key = value` rendering, readable by [`RunConfig::apply_text`].
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let t = &self.time;
        let mut lines = vec![
            format!("nx = {}", self.nx),
            format!("ny = {}", self.ny),
            format!("dt = {}", t.dt),
            format!("t_end = {}", t.t_end),
            format!("newton_tol = {:e}", t.newton_tol),
            format!("newton_max_iter = {}", t.newton_max_iter),
            format!("linear_tol = {:e}", t.linear_tol),
        ];
        for (k, v) in [
            ("alpha", p.alpha),
            ("beta", p.beta),
            ("kappa_m", p.kappa_m),
            ("kappa_v", p.kappa_v),
            ("mu_p", p.mu_p),
            ("mu_v", p.mu_v),
            ("eta", p.eta),
            ("lambda", p.lambda),
            ("eps1", p.eps1),
        ] {
            lines.push(format!("{k} = {v}"));
        }
        lines.push(format!("taxis_variant = {}", p.taxis_variant.as_str()));
        lines.push(format!("seed = {}", self.rng_seed));
        lines.push(format!("snapshot_every = {}", self.snapshot_interval));
        lines.push(format!("out = {}", self.output_dir.display()));
        lines.push(format!("format = {}", self.output_format.as_str()));
        lines.push(format!("emit_heatmaps = {}", self.emit_heatmaps));
        lines.join("\n") + "\n"
    }
}
