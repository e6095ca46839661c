//! Conservative solver for the controlled nonlocal Fokker–Planck equation
//!
//! ∂_t q − D ∂²_θ q + ∂_θ( q (u₁ + u₂ w[q]) ) = 0,
//! w[q](θ) = ∫ sin(θ' − θ − α) q(θ') dθ'
//!
//! on S¹. The sine kernel only sees the first harmonic of q, so w is
//! evaluated in O(n) through the order parameter Z = ∫ e^{iθ'} q dθ':
//! w(θ) = Im(Z e^{−i(θ+α)}).

pub(crate) mod scheme;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circle::AngularGrid;
use crate::control::field::{Channel, ControlField, ControlLift};
use crate::density::{DensityField, MASS_TOL};
use crate::error::{Error, Result};

pub(crate) use scheme::LineScheme;

/// Numerical and physical parameters shared by all grid solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeParams {
    /// Diffusion coefficient D.
    pub diffusion: f64,
    /// Phase shift α.
    pub alpha: f64,
    pub dt: f64,
    pub t_final: f64,
    pub n_theta: usize,
}

impl Default for PdeParams {
    fn default() -> Self {
        Self {
            diffusion: 0.5,
            alpha: 0.0,
            dt: 1e-3,
            t_final: 1.0,
            n_theta: 256,
        }
    }
}

impl PdeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.diffusion > 0.0) || !self.diffusion.is_finite() {
            return Err(Error::Config(format!(
                "diffusion must satisfy D > 0, got {}",
                self.diffusion
            )));
        }
        if !self.alpha.is_finite() {
            return Err(Error::Config("alpha must be finite".into()));
        }
        if !(self.dt > 0.0) || !(self.t_final > 0.0) {
            return Err(Error::Config(format!(
                "dt and t_final must be > 0, got dt = {}, T = {}",
                self.dt, self.t_final
            )));
        }
        let steps = self.t_final / self.dt;
        if (steps - steps.round()).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "t_final = {} is not an integer multiple of dt = {}",
                self.t_final, self.dt
            )));
        }
        if self.n_theta < 4 {
            return Err(Error::Config(format!(
                "n_theta must be >= 4, got {}",
                self.n_theta
            )));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn grid(&self) -> AngularGrid {
        AngularGrid::new(self.n_theta).expect("n_theta validated")
    }

    /// Nearest step index for a requested time in [0, T].
    pub fn step_of(&self, t: f64) -> Result<usize> {
        if !(t >= -1e-12 && t <= self.t_final + 1e-12) {
            return Err(Error::Usage(format!(
                "snapshot time {t} lies outside [0, {}]",
                self.t_final
            )));
        }
        Ok(((t / self.dt).round() as usize).min(self.n_steps()))
    }

    pub(crate) fn line_scheme(&self, grid: &AngularGrid) -> LineScheme {
        LineScheme::new(
            &grid.nodes(),
            grid.cell_width(),
            self.diffusion,
            self.alpha,
            self.dt,
        )
    }
}

/// Complex order parameter Z = ∫ e^{iθ} q(θ) dθ.
pub fn order_parameter(q: &DensityField) -> Complex64 {
    q.fourier_mode(1)
}

/// Nonlocal drift w[q](θ_k) = Im(Z e^{−i(θ_k+α)}) at every node.
pub fn nonlocal_drift(q: &DensityField, alpha: f64) -> Vec<f64> {
    let z = order_parameter(q) * Complex64::from_polar(1.0, -alpha);
    q.grid
        .nodes()
        .iter()
        .map(|&t| z.im * t.cos() - z.re * t.sin())
        .collect()
}

/// One split step of the scheme with controls given as state-grid functions.
pub fn pde_step(
    q: &DensityField,
    u1: &[f64],
    u2: &[f64],
    params: &PdeParams,
) -> Result<DensityField> {
    params.validate()?;
    if q.grid.n_theta() != params.n_theta {
        return Err(Error::Usage(format!(
            "density has {} cells, params request {}",
            q.grid.n_theta(),
            params.n_theta
        )));
    }
    q.grid.check_len(u1, "u1")?;
    q.grid.check_len(u2, "u2")?;
    let mut scheme = params.line_scheme(&q.grid);
    let mut values = q.values.clone();
    scheme.step(&mut values, u1, u2)?;
    Ok(DensityField {
        grid: q.grid,
        values,
        time: q.time + params.dt,
    })
}

/// Control slices lifted onto a fixed set of angles, one pair per interval,
/// plus the interval used by each time step.
#[derive(Debug, Clone)]
pub(crate) struct LiftedControls {
    pub u1: Vec<Vec<f64>>,
    pub u2: Vec<Vec<f64>>,
    pub step_interval: Vec<usize>,
    pub lift: ControlLift,
}

impl LiftedControls {
    pub(crate) fn new(controls: &ControlField, angles: &[f64], params: &PdeParams) -> Result<Self> {
        controls.check_horizon(params.t_final)?;
        let lift = ControlLift::new(controls.grid(), angles);
        let mut u1 = Vec::with_capacity(controls.n_intervals());
        let mut u2 = Vec::with_capacity(controls.n_intervals());
        for k in 0..controls.n_intervals() {
            let mut a = vec![0.0; angles.len()];
            let mut b = vec![0.0; angles.len()];
            lift.lift(controls.slice(Channel::U1, k), &mut a);
            lift.lift(controls.slice(Channel::U2, k), &mut b);
            u1.push(a);
            u2.push(b);
        }
        let step_interval = (0..params.n_steps())
            .map(|n| controls.interval_at((n as f64 + 0.5) * params.dt))
            .collect();
        Ok(Self {
            u1,
            u2,
            step_interval,
            lift,
        })
    }

    pub(crate) fn at_step(&self, n: usize) -> (&[f64], &[f64]) {
        let k = self.step_interval[n];
        (&self.u1[k], &self.u2[k])
    }
}

/// Density snapshots at requested times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub snapshots: Vec<DensityField>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    pub fn last(&self) -> &DensityField {
        self.snapshots.last().expect("non-empty trajectory")
    }

    /// Largest |mass − 1| and smallest value over all snapshots.
    pub fn conservation_report(&self) -> (f64, f64) {
        let drift = self
            .snapshots
            .iter()
            .map(|s| (s.mass() - 1.0).abs())
            .fold(0.0, f64::max);
        let min = self
            .snapshots
            .iter()
            .map(|s| s.min_value())
            .fold(f64::INFINITY, f64::min);
        (drift, min)
    }
}

pub(crate) fn check_initial(q0: &DensityField, params: &PdeParams) -> Result<()> {
    params.validate()?;
    if q0.grid.n_theta() != params.n_theta {
        return Err(Error::Usage(format!(
            "initial density has {} cells, params request {}",
            q0.grid.n_theta(),
            params.n_theta
        )));
    }
    if (q0.mass() - 1.0).abs() > MASS_TOL {
        return Err(Error::Domain(format!(
            "initial density has mass {}, expected 1",
            q0.mass()
        )));
    }
    if q0.min_value() < 0.0 {
        return Err(Error::Domain("initial density has negative values".into()));
    }
    Ok(())
}

/// Every time step of a solve, q^0 … q^{n_steps}.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTrajectory {
    pub grid: AngularGrid,
    pub dt: f64,
    pub states: Vec<Vec<f64>>,
}

impl DenseTrajectory {
    pub fn times(&self) -> Vec<f64> {
        (0..self.states.len()).map(|n| n as f64 * self.dt).collect()
    }

    pub fn to_trajectory(&self) -> Trajectory {
        Trajectory {
            snapshots: self
                .states
                .iter()
                .enumerate()
                .map(|(n, v)| DensityField {
                    grid: self.grid,
                    values: v.clone(),
                    time: n as f64 * self.dt,
                })
                .collect(),
        }
    }
}

/// Forward solve keeping every time step; the input of the adjoint sweep.
pub fn solve_pde_dense(
    q0: &DensityField,
    controls: &ControlField,
    params: &PdeParams,
) -> Result<DenseTrajectory> {
    check_initial(q0, params)?;
    let grid = q0.grid;
    let lifted = LiftedControls::new(controls, &grid.nodes(), params)?;
    let mut scheme = params.line_scheme(&grid);
    let mut states = Vec::with_capacity(params.n_steps() + 1);
    let mut q = q0.values.clone();
    states.push(q.clone());
    for n in 0..params.n_steps() {
        let (u1, u2) = lifted.at_step(n);
        scheme.step(&mut q, u1, u2)?;
        states.push(q.clone());
    }
    Ok(DenseTrajectory {
        grid,
        dt: params.dt,
        states,
    })
}

/// Solves the controlled equation from `q0` and returns the states at the
/// time steps nearest to `snapshot_times`.
pub fn solve_pde(
    q0: &DensityField,
    controls: &ControlField,
    params: &PdeParams,
    snapshot_times: &[f64],
) -> Result<Trajectory> {
    check_initial(q0, params)?;
    let steps = snapshot_times
        .iter()
        .map(|&t| params.step_of(t))
        .collect::<Result<Vec<_>>>()?;
    let grid = q0.grid;
    let lifted = LiftedControls::new(controls, &grid.nodes(), params)?;
    let mut scheme = params.line_scheme(&grid);
    let mut order: Vec<usize> = (0..steps.len()).collect();
    order.sort_by_key(|&i| steps[i]);
    let mut out: Vec<Option<DensityField>> = vec![None; steps.len()];
    let mut next = 0;
    let mut q = q0.values.clone();
    for n in 0..=params.n_steps() {
        if n > 0 {
            let (u1, u2) = lifted.at_step(n - 1);
            scheme.step(&mut q, u1, u2)?;
        }
        while next < order.len() && steps[order[next]] == n {
            out[order[next]] = Some(DensityField {
                grid,
                values: q.clone(),
                time: n as f64 * params.dt,
            });
            next += 1;
        }
    }
    Ok(Trajectory {
        snapshots: out.into_iter().map(|s| s.expect("every snapshot emitted")).collect(),
    })
}

/// `count` equally spaced times covering [0, T] inclusive.
pub fn uniform_times(t_final: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![t_final];
    }
    (0..count)
        .map(|i| t_final * i as f64 / (count - 1) as f64)
        .collect()
}

/// Linear growth rate K/2 − D of the first mode at the uniform state for
/// u₂ ≡ K, u₁ ≡ 0, α = 0.
pub fn linear_growth_rate(coupling: f64, diffusion: f64) -> f64 {
    0.5 * coupling - diffusion
}
