//! Tracking-type cost functionals
//!
//! J = (α_r/2)∬(q − z)² + (α_t/2)∫(q(T) − z(T))² + ½∬(β₁u₁² + β₂u₂²),
//!
//! evaluated identically for the mean-field density and for the first
//! marginal q^{N;1} of the N-body law (the latter is J_N).

use serde::{Deserialize, Serialize};

use crate::circle::AngularGrid;
use crate::control::field::ControlField;
use crate::density::DensityField;
use crate::error::{Error, Result};
use crate::pde::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub alpha_r: f64,
    pub alpha_t: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            alpha_r: 1.0,
            alpha_t: 1.0,
            beta1: 1e-2,
            beta2: 1e-2,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha_r", self.alpha_r),
            ("alpha_t", self.alpha_t),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("weight {name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// J split into running, terminal and effort parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub running: f64,
    pub terminal: f64,
    pub effort: f64,
    pub total: f64,
    pub weights: CostWeights,
}

impl CostBreakdown {
    pub fn new(running: f64, terminal: f64, effort: f64, weights: CostWeights) -> Self {
        Self {
            running,
            terminal,
            effort,
            total: running + terminal + effort,
            weights,
        }
    }

    /// Running plus terminal part.
    pub fn tracking(&self) -> f64 {
        self.running + self.terminal
    }
}

/// Target z(t, θ): snapshots on the state grid, linear in time between them
/// and constant outside their range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetDensity {
    pub grid: AngularGrid,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl TargetDensity {
    pub fn new(grid: AngularGrid, times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::Usage(
                "target needs one value array per time and at least one time".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Usage("target times must be strictly increasing".into()));
        }
        for v in &values {
            grid.check_len(v, "target snapshot")?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Domain("target density must be bounded".into()));
            }
        }
        Ok(Self {
            grid,
            times,
            values,
        })
    }

    /// Time-independent target.
    pub fn stationary(z: &DensityField) -> Self {
        Self {
            grid: z.grid,
            times: vec![0.0],
            values: vec![z.values.clone()],
        }
    }

    pub fn from_trajectory(traj: &Trajectory) -> Result<Self> {
        let grid = traj
            .snapshots
            .first()
            .ok_or_else(|| Error::Usage("empty trajectory".into()))?
            .grid;
        Self::new(
            grid,
            traj.times(),
            traj.snapshots.iter().map(|s| s.values.clone()).collect(),
        )
    }

    pub fn at(&self, t: f64) -> Vec<f64> {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return self.values[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1].clone();
        }
        let i = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let s = (t - t0) / (t1 - t0);
        self.values[i]
            .iter()
            .zip(&self.values[i + 1])
            .map(|(a, b)| a + s * (b - a))
            .collect()
    }

    pub(crate) fn sample_times(&self, times: &[f64]) -> Vec<Vec<f64>> {
        times.iter().map(|&t| self.at(t)).collect()
    }
}

/// Trapezoid weights for a list of increasing times.
pub(crate) fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let dt = times[i + 1] - times[i];
        w[i] += 0.5 * dt;
        w[i + 1] += 0.5 * dt;
    }
    w
}

/// Running and terminal terms for states at `times` against `z_values`.
pub(crate) fn tracking_terms(
    grid: &AngularGrid,
    times: &[f64],
    states: &[&[f64]],
    z_values: &[Vec<f64>],
    weights: &CostWeights,
) -> (f64, f64) {
    let h = grid.cell_width();
    let tw = trapezoid_weights(times);
    let sq = |q: &[f64], z: &[f64]| -> f64 {
        q.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * h
    };
    let mut running = 0.0;
    for ((q, z), w) in states.iter().zip(z_values).zip(&tw) {
        running += w * sq(q, z);
    }
    let last = states.len() - 1;
    let terminal = 0.5 * weights.alpha_t * sq(states[last], &z_values[last]);
    (0.5 * weights.alpha_r * running, terminal)
}

fn check_trajectory(traj: &Trajectory, z: &TargetDensity, controls: &ControlField) -> Result<()> {
    let first = traj
        .snapshots
        .first()
        .ok_or_else(|| Error::Usage("cost needs at least one snapshot".into()))?;
    if traj.snapshots.iter().any(|s| s.grid != first.grid) {
        return Err(Error::Usage("snapshots use different grids".into()));
    }
    if first.grid != z.grid {
        return Err(Error::Usage(format!(
            "state grid has {} cells but the target has {}",
            first.grid.n_theta(),
            z.grid.n_theta()
        )));
    }
    if traj.snapshots.windows(2).any(|w| !(w[1].time > w[0].time)) {
        return Err(Error::Usage("snapshot times must be strictly increasing".into()));
    }
    controls.check_horizon(traj.last().time)?;
    Ok(())
}

/// Mean-field cost J of a density trajectory; time integrals use the
/// trapezoid rule over the snapshots and the terminal term uses the last one.
pub fn cost_j(
    q_traj: &Trajectory,
    controls: &ControlField,
    z: &TargetDensity,
    weights: &CostWeights,
) -> Result<CostBreakdown> {
    weights.validate()?;
    check_trajectory(q_traj, z, controls)?;
    let times = q_traj.times();
    let states: Vec<&[f64]> = q_traj.snapshots.iter().map(|s| s.values.as_slice()).collect();
    let zv = z.sample_times(&times);
    let (running, terminal) = tracking_terms(&z.grid, &times, &states, &zv, weights);
    Ok(CostBreakdown::new(
        running,
        terminal,
        controls.effort(weights),
        *weights,
    ))
}

/// N-body cost J_N: the same functional applied to a first-marginal
/// trajectory (from a Liouville solve or a particle histogram).
pub fn cost_jn(
    marginal_traj: &Trajectory,
    controls: &ControlField,
    z: &TargetDensity,
    weights: &CostWeights,
) -> Result<CostBreakdown> {
    cost_j(marginal_traj, controls, z, weights)
}
