//! Run configuration: a TOML file, dotted `--set` overrides and validation.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use kuramoto_core::circle::AngularGrid;
use kuramoto_core::control::field::{ControlConstraint, ControlField};
use kuramoto_core::control::optimize::OptimizerConfig;
use kuramoto_core::density::DensitySpec;
use kuramoto_core::lab::{RateStudyConfig, TargetSpec};
use kuramoto_core::particles::{InteractionMode, SdeParams};
use kuramoto_core::{CostWeights, PdeParams};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    SolvePde,
    SimulateParticles,
    SolveLiouville,
    Optimize,
    OptimizeJn,
    ChaosStudy,
    CkpStudy,
    WrappedStudy,
    GammaStudy,
}

impl Subcommand {
    pub const ALL: [Subcommand; 9] = [
        Subcommand::SolvePde,
        Subcommand::SimulateParticles,
        Subcommand::SolveLiouville,
        Subcommand::Optimize,
        Subcommand::OptimizeJn,
        Subcommand::ChaosStudy,
        Subcommand::CkpStudy,
        Subcommand::WrappedStudy,
        Subcommand::GammaStudy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::SolvePde => "solve-pde",
            Subcommand::SimulateParticles => "simulate-particles",
            Subcommand::SolveLiouville => "solve-liouville",
            Subcommand::Optimize => "optimize",
            Subcommand::OptimizeJn => "optimize-jn",
            Subcommand::ChaosStudy => "chaos-study",
            Subcommand::CkpStudy => "ckp-study",
            Subcommand::WrappedStudy => "wrapped-study",
            Subcommand::GammaStudy => "gamma-study",
        }
    }

    /// Library module an error from this subcommand is attributed to.
    pub fn module(self) -> &'static str {
        match self {
            Subcommand::SolvePde => "mean_field_pde",
            Subcommand::SimulateParticles => "particle_simulator",
            Subcommand::SolveLiouville => "liouville_solver",
            Subcommand::Optimize | Subcommand::OptimizeJn => "cost_control",
            Subcommand::ChaosStudy | Subcommand::CkpStudy | Subcommand::WrappedStudy | Subcommand::GammaStudy => {
                "chaos_gamma_lab"
            }
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Physical and grid parameters of the mean-field model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub diffusion: f64,
    pub alpha: f64,
    pub t_final: f64,
    pub dt: f64,
    pub n_theta: usize,
    /// Number of equally spaced output snapshots, both ends included.
    pub n_snapshots: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let p = PdeParams::default();
        Self {
            diffusion: p.diffusion,
            alpha: p.alpha,
            t_final: p.t_final,
            dt: p.dt,
            n_theta: p.n_theta,
            n_snapshots: 11,
        }
    }
}

impl ModelConfig {
    pub fn pde(&self) -> PdeParams {
        PdeParams {
            diffusion: self.diffusion,
            alpha: self.alpha,
            dt: self.dt,
            t_final: self.t_final,
            n_theta: self.n_theta,
        }
    }

    pub fn sde(&self, mode: InteractionMode) -> SdeParams {
        SdeParams {
            diffusion: self.diffusion,
            alpha: self.alpha,
            dt: self.dt,
            t_final: self.t_final,
            interaction_mode: mode,
        }
    }
}

/// A control pair u(t, θ) = c + a·cos θ + b·sin θ per channel, held on
/// `n_intervals` equal time intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub n_intervals: usize,
    pub n_theta: usize,
    pub u1: f64,
    pub u1_cos: f64,
    pub u1_sin: f64,
    pub u2: f64,
    pub u2_cos: f64,
    pub u2_sin: f64,
    /// Rate of change of the u₂ offset in time.
    pub u2_slope: f64,
    pub bound: f64,
    pub sobolev_exponent: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        let c = ControlConstraint::default();
        Self {
            n_intervals: 1,
            n_theta: 16,
            u1: 0.0,
            u1_cos: 0.0,
            u1_sin: 0.0,
            u2: 1.0,
            u2_cos: 0.0,
            u2_sin: 0.0,
            u2_slope: 0.0,
            bound: c.bound,
            sobolev_exponent: c.sobolev_exponent,
        }
    }
}

impl ControlConfig {
    fn constant(u1: f64, u2: f64) -> Self {
        Self {
            u1,
            u2,
            ..Self::default()
        }
    }

    pub fn build(&self, t_final: f64) -> kuramoto_core::Result<ControlField> {
        let grid = AngularGrid::new(self.n_theta)?;
        let constraint = ControlConstraint {
            sobolev_exponent: self.sobolev_exponent,
            bound: self.bound,
        };
        let c = *self;
        let field = ControlField::from_fn(t_final, self.n_intervals, grid, constraint, move |t, th| {
            let (s, co) = th.sin_cos();
            (
                c.u1 + c.u1_cos * co + c.u1_sin * s,
                c.u2 + c.u2_slope * t + c.u2_cos * co + c.u2_sin * s,
            )
        })?;
        if !field.is_feasible() {
            return Err(kuramoto_core::Error::Config(format!(
                "control norm {:.4} exceeds the bound M = {}",
                field.max_norm(),
                self.bound
            )));
        }
        Ok(field)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsConfig {
    pub alpha_r: f64,
    pub alpha_t: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        let w = CostWeights::default();
        Self {
            alpha_r: w.alpha_r,
            alpha_t: w.alpha_t,
            beta1: w.beta1,
            beta2: w.beta2,
        }
    }
}

impl WeightsConfig {
    pub fn weights(&self) -> CostWeights {
        CostWeights {
            alpha_r: self.alpha_r,
            alpha_t: self.alpha_t,
            beta1: self.beta1,
            beta2: self.beta2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParticlesConfig {
    pub n: usize,
    pub interaction_mode: InteractionMode,
    pub hist_bins: usize,
    /// Ensembles up to this size are exported phase by phase.
    pub max_exported_phases: usize,
}

impl Default for ParticlesConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            interaction_mode: InteractionMode::OrderParameter,
            hist_bins: 32,
            max_exported_phases: 16,
        }
    }
}

/// Grid for the N-body solves, which are far more expensive than the
/// one-dimensional ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiouvilleConfig {
    pub n_bodies: usize,
    pub n_theta: usize,
    pub dt: f64,
}

impl Default for LiouvilleConfig {
    fn default() -> Self {
        Self {
            n_bodies: 2,
            n_theta: 64,
            dt: 1e-3,
        }
    }
}

impl LiouvilleConfig {
    pub fn pde(&self, model: &ModelConfig) -> PdeParams {
        PdeParams {
            dt: self.dt,
            n_theta: self.n_theta,
            ..model.pde()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChaosConfig {
    pub n_values: Vec<usize>,
    pub seeds_per_point: usize,
    pub n_theta_hist: usize,
    pub min_expected_count: f64,
    pub reference_n_theta: usize,
}

impl Default for ChaosConfig {
    fn default() -> Self {
        let r = RateStudyConfig::default();
        Self {
            n_values: r.n_values,
            seeds_per_point: r.seeds_per_point,
            n_theta_hist: r.n_theta_hist,
            min_expected_count: r.min_expected_count,
            reference_n_theta: r.reference_n_theta,
        }
    }
}

impl ChaosConfig {
    pub fn study(&self, seed: u64, n_snapshots: usize) -> RateStudyConfig {
        RateStudyConfig {
            n_values: self.n_values.clone(),
            seeds_per_point: self.seeds_per_point,
            base_seed: seed,
            n_theta_hist: self.n_theta_hist,
            min_expected_count: self.min_expected_count,
            n_snapshots,
            reference_n_theta: self.reference_n_theta,
        }
    }
}

/// Gaussian initial law on the line [−2πk, 2πk].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WrappedConfig {
    pub center: f64,
    pub sigma: f64,
    pub domain_periods: usize,
}

impl Default for WrappedConfig {
    fn default() -> Self {
        Self {
            center: std::f64::consts::PI,
            sigma: 0.5,
            domain_periods: 4,
        }
    }
}

/// Coarse problem on which both minima are computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinimumConfig {
    pub enabled: bool,
    pub n_theta: usize,
    pub dt: f64,
    pub n_intervals: usize,
    pub control_n_theta: usize,
    pub max_iters: usize,
}

impl Default for MinimumConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            n_theta: 16,
            dt: 2e-2,
            n_intervals: 2,
            control_n_theta: 4,
            max_iters: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GammaConfig {
    pub n_theta: usize,
    pub dt: f64,
    pub control_pairs: Vec<ControlConfig>,
    pub n_bodies_list: Vec<usize>,
    pub particle_n_values: Vec<usize>,
    pub seeds_per_point: usize,
    pub n_theta_hist: usize,
    pub particle_dt: f64,
    pub reference_n_theta: usize,
    pub minimum: MinimumConfig,
}

impl Default for GammaConfig {
    fn default() -> Self {
        Self {
            n_theta: 32,
            dt: 1e-2,
            control_pairs: vec![
                ControlConfig::constant(0.0, 1.0),
                ControlConfig {
                    u2_cos: 0.5,
                    ..ControlConfig::constant(0.0, 1.5)
                },
                ControlConfig {
                    n_intervals: 2,
                    u2_slope: 1.0,
                    ..ControlConfig::constant(0.5, 1.0)
                },
            ],
            n_bodies_list: vec![2, 3],
            particle_n_values: vec![1000, 10_000, 100_000],
            seeds_per_point: 20,
            n_theta_hist: 16,
            particle_dt: 1e-3,
            reference_n_theta: 1024,
            minimum: MinimumConfig::default(),
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_seed() -> u64 {
    2024
}

fn default_initial() -> DensitySpec {
    DensitySpec::Cosine {
        amplitude: 1.0,
        phase: 0.0,
    }
}

fn default_target() -> TargetSpec {
    TargetSpec::Stationary {
        density: DensitySpec::VonMises { mu: 0.0, kappa: 2.0 },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub control: ControlConfig,
    #[serde(default)]
    pub weights: WeightsConfig,
    #[serde(default = "default_initial")]
    pub initial: DensitySpec,
    #[serde(default = "default_target")]
    pub target: TargetSpec,
    #[serde(default)]
    pub particles: ParticlesConfig,
    #[serde(default)]
    pub liouville: LiouvilleConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub chaos: ChaosConfig,
    #[serde(default)]
    pub wrapped: WrappedConfig,
    #[serde(default)]
    pub gamma: GammaConfig,
}

fn check(section: &str, r: kuramoto_core::Result<()>) -> Result<(), CliError> {
    r.map_err(|e| CliError::Config(format!("[{section}] {e}")))
}

fn require(section: &str, ok: bool, msg: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(format!("[{section}] {msg}")))
    }
}

impl RunConfig {
    pub fn minimal(subcommand: Subcommand) -> Self {
        let mut t = toml::Table::new();
        t.insert("subcommand".into(), toml::Value::String(subcommand.name().into()));
        t.try_into().expect("defaults deserialize")
    }

    /// Checks every parameter the chosen subcommand will use.
    pub fn validate(&self) -> Result<(), CliError> {
        let pde = self.model.pde();
        check("model", pde.validate())?;
        require("model", self.model.n_snapshots >= 1, "n_snapshots must be >= 1")?;
        check("weights", self.weights.weights().validate())?;
        check("initial", self.initial.validate())?;
        check("target", self.target.validate())?;
        check("control", self.control.build(self.model.t_final).map(|_| ()))?;
        match self.subcommand {
            Subcommand::SolvePde => {}
            Subcommand::SimulateParticles => {
                check("model", self.model.sde(self.particles.interaction_mode).validate())?;
                require("particles", self.particles.n >= 1, "n must be >= 1")?;
                require("particles", self.particles.hist_bins >= 1, "hist_bins must be >= 1")?;
            }
            Subcommand::SolveLiouville | Subcommand::CkpStudy | Subcommand::OptimizeJn => {
                let lp = self.liouville.pde(&self.model);
                check("liouville", lp.validate())?;
                check(
                    "liouville",
                    kuramoto_core::liouville::LiouvilleParams::new(lp, self.liouville.n_bodies).map(|_| ()),
                )?;
                if self.subcommand == Subcommand::OptimizeJn {
                    check("optimizer", self.optimizer.validate())?;
                    use kuramoto_core::control::optimize::{JN_MAX_CONTROL_ANGLES, JN_MAX_INTERVALS};
                    require(
                        "control",
                        self.control.n_intervals <= JN_MAX_INTERVALS && self.control.n_theta <= JN_MAX_CONTROL_ANGLES,
                        &format!(
                            "optimize-jn supports at most {JN_MAX_INTERVALS} intervals and {JN_MAX_CONTROL_ANGLES} control angles"
                        ),
                    )?;
                }
            }
            Subcommand::Optimize => check("optimizer", self.optimizer.validate())?,
            Subcommand::ChaosStudy => {
                check("model", self.model.sde(InteractionMode::OrderParameter).validate())?;
                check("chaos", self.chaos.study(self.seed, self.model.n_snapshots).validate())?;
            }
            Subcommand::WrappedStudy => {
                require("wrapped", self.wrapped.sigma > 0.0, "sigma must be > 0")?;
                require("wrapped", self.wrapped.domain_periods >= 1, "domain_periods must be >= 1")?;
                require("wrapped", self.wrapped.center.is_finite(), "center must be finite")?;
            }
            Subcommand::GammaStudy => {
                let g = &self.gamma;
                let gp = PdeParams {
                    n_theta: g.n_theta,
                    dt: g.dt,
                    ..pde
                };
                check("gamma", gp.validate())?;
                require("gamma", !g.control_pairs.is_empty(), "control_pairs must be nonempty")?;
                for (i, c) in g.control_pairs.iter().enumerate() {
                    check(&format!("gamma.control_pairs[{i}]"), c.build(pde.t_final).map(|_| ()))?;
                }
                for &n in &g.n_bodies_list {
                    check("gamma", kuramoto_core::liouville::LiouvilleParams::new(gp, n).map(|_| ()))?;
                }
                require("gamma", g.seeds_per_point >= 1, "seeds_per_point must be >= 1")?;
                require("gamma", g.n_theta_hist >= 1, "n_theta_hist must be >= 1")?;
                require("gamma", self.model.n_snapshots >= 2, "model.n_snapshots must be >= 2")?;
                require("gamma", g.particle_n_values.iter().all(|&n| n > 0), "particle counts must be > 0")?;
                if !g.particle_n_values.is_empty() {
                    check(
                        "gamma",
                        PdeParams {
                            n_theta: g.reference_n_theta,
                            dt: g.particle_dt,
                            ..pde
                        }
                        .validate(),
                    )?;
                }
                if g.minimum.enabled {
                    let m = &g.minimum;
                    check("gamma.minimum", PdeParams { n_theta: m.n_theta, dt: m.dt, ..pde }.validate())?;
                    require(
                        "gamma.minimum",
                        m.n_intervals >= 1 && m.control_n_theta >= 1,
                        "n_intervals and control_n_theta must be >= 1",
                    )?;
                    check("optimizer", self.optimizer.validate())?;
                }
            }
        }
        Ok(())
    }
}

/// Sets `path` (dot separated) in a TOML table to a value parsed as TOML,
/// or as a bare string when it does not parse.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set expects key=value, got `{assignment}`")))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::Config(format!("--set has a malformed key `{key}`")));
    }
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key v was just parsed"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("--set {key}: `{part}` is not a table")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Replaces `kind = "csv"` density tables by tabulated values read from
/// the file at `path`, so the echoed config is self-contained.
fn inline_csv_densities(table: &mut toml::Table, base: &Path) -> Result<(), CliError> {
    if let Some(v) = table.get_mut("initial") {
        inline_csv(v, base)?;
    }
    let target_density = table
        .get_mut("target")
        .and_then(|t| t.as_table_mut())
        .and_then(|t| t.get_mut("density"));
    if let Some(v) = target_density {
        inline_csv(v, base)?;
    }
    Ok(())
}

fn inline_csv(slot: &mut toml::Value, base: &Path) -> Result<(), CliError> {
    let Some(t) = slot.as_table() else { return Ok(()) };
    if t.get("kind").and_then(|k| k.as_str()) != Some("csv") {
        return Ok(());
    }
    let path = t
        .get("path")
        .and_then(|p| p.as_str())
        .ok_or_else(|| CliError::Config("csv density needs a `path` string".into()))?;
    let values = read_density_csv(&base.join(path))?;
    let mut out = toml::Table::new();
    out.insert("kind".into(), toml::Value::String("tabulated".into()));
    out.insert(
        "values".into(),
        toml::Value::Array(values.into_iter().map(toml::Value::Float).collect()),
    );
    *slot = toml::Value::Table(out);
    Ok(())
}

/// Reads the second column of a `theta,value` file.
pub fn read_density_csv(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read density file {}: {e}", path.display())))?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("theta")) {
            continue;
        }
        let v = line
            .split(',')
            .nth(1)
            .and_then(|s| s.trim().parse::<f64>().ok())
            .ok_or_else(|| CliError::Config(format!("{}:{}: expected `theta,value`", path.display(), i + 1)))?;
        values.push(v);
    }
    if values.is_empty() {
        return Err(CliError::Config(format!("density file {} has no rows", path.display())));
    }
    Ok(values)
}

/// Where the base configuration comes from.
pub enum ConfigSource<'a> {
    None,
    File(&'a Path),
}

/// Loads a TOML config (or the `config` echo of a manifest.json), applies
/// overrides and validates the result.
pub fn parse_config(
    source: ConfigSource<'_>,
    subcommand: Option<Subcommand>,
    overrides: &[String],
) -> Result<RunConfig, CliError> {
    let (mut table, base) = match source {
        ConfigSource::None => (toml::Table::new(), PathBuf::from(".")),
        ConfigSource::File(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
            let table = if path.extension().is_some_and(|e| e == "json") {
                let v: serde_json::Value = serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                let echo = v.get("config").cloned().unwrap_or(v);
                let cfg: RunConfig = serde_json::from_value(echo)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                toml::Table::try_from(&cfg).map_err(|e| CliError::Config(e.to_string()))?
            } else {
                toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            };
            (table, base)
        }
    };
    if let Some(s) = subcommand {
        table.insert("subcommand".into(), toml::Value::String(s.name().into()));
    }
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    if !table.contains_key("subcommand") {
        return Err(CliError::Config("no subcommand given on the command line or in the config".into()));
    }
    inline_csv_densities(&mut table, &base)?;
    let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn to_toml(cfg: &RunConfig) -> String {
    toml::to_string(cfg).expect("run configs always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_str(text: &str, overrides: &[&str]) -> Result<RunConfig, CliError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_str("subcommand = \"solve-pde\"", &[]).unwrap();
        assert_eq!(cfg, RunConfig::minimal(Subcommand::SolvePde));
        assert_eq!(cfg.model.pde(), PdeParams::default());
        assert_eq!(cfg.seed, 2024);
        assert_eq!(cfg.optimizer, OptimizerConfig::default());
    }

    #[test]
    fn negative_diffusion_is_rejected_with_its_precondition() {
        let err = parse_str("subcommand = \"solve-pde\"\n[model]\ndiffusion = -1.0\n", &[]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("D > 0") && msg.contains("model"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_keys_and_bad_types_are_rejected() {
        let e = parse_str("subcommand = \"solve-pde\"\n[model]\ndifusion = 1.0\n", &[]).unwrap_err();
        assert!(e.to_string().contains("difusion"), "{e}");
        let e = parse_str("subcommand = \"solve-pde\"\nbogus = 1\n", &[]).unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        let e = parse_str("subcommand = \"solve-pde\"\n[model]\nn_theta = \"many\"\n", &[]).unwrap_err();
        assert!(e.to_string().contains("n_theta"), "{e}");
        assert!(parse_str("subcommand = \"solve-everything\"", &[]).is_err());
    }

    #[test]
    fn round_trip_reparses_equal() {
        let cfg = parse_str(
            "subcommand = \"gamma-study\"\nseed = 9\n[initial]\nkind = \"von_mises\"\nmu = 1.0\nkappa = 3.0\n",
            &["target.kind=free_evolution", "gamma.seeds_per_point=3", "control.u1_sin=0.25"],
        )
        .unwrap();
        let text = to_toml(&cfg);
        let again = parse_str(&text, &[]).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(again.gamma.seeds_per_point, 3);
        assert_eq!(again.target, TargetSpec::FreeEvolution);
    }

    #[test]
    fn dotted_overrides_create_and_replace() {
        let cfg = parse_str(
            "subcommand = \"chaos-study\"",
            &["chaos.n_values=[10, 20]", "model.dt = 0.01", "particles.interaction_mode=pairwise"],
        )
        .unwrap();
        assert_eq!(cfg.chaos.n_values, vec![10, 20]);
        assert_eq!(cfg.model.dt, 0.01);
        assert_eq!(cfg.particles.interaction_mode, InteractionMode::Pairwise);
        assert!(parse_str("subcommand = \"solve-pde\"", &["model"]).is_err());
        assert!(parse_str("subcommand = \"solve-pde\"", &["model..dt=1"]).is_err());
        assert!(parse_str("subcommand = \"solve-pde\"", &["seed.x=1"]).is_err());
    }

    #[test]
    fn per_subcommand_checks() {
        let e = parse_str("subcommand = \"solve-liouville\"", &["liouville.n_bodies=5"]).unwrap_err();
        assert!(e.to_string().contains("liouville"), "{e}");
        let e = parse_str("subcommand = \"optimize-jn\"", &["control.n_theta=64"]).unwrap_err();
        assert!(e.to_string().contains("optimize-jn"), "{e}");
        let e = parse_str("subcommand = \"solve-pde\"", &["control.u2=50.0"]).unwrap_err();
        assert!(e.to_string().contains("bound"), "{e}");
        let e = parse_str("subcommand = \"chaos-study\"", &["chaos.n_values=[100, 10]"]).unwrap_err();
        assert!(e.to_string().contains("increasing"), "{e}");
    }

    #[test]
    fn csv_density_is_inlined() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("q0.csv"), "theta,value\n0.0,1.0\n1.0,2.0\n2.0,3.0\n3.0,2.0\n").unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "subcommand = \"solve-pde\"\n[initial]\nkind = \"csv\"\npath = \"q0.csv\"\n",
        )
        .unwrap();
        let cfg = parse_config(ConfigSource::File(&path), None, &[]).unwrap();
        assert_eq!(
            cfg.initial,
            DensitySpec::Tabulated {
                values: vec![1.0, 2.0, 3.0, 2.0]
            }
        );
    }
}
