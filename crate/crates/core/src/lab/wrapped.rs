//! The circle model as the wrap of a real-line model.
//!
//! The controlled equation is solved on a wide interval [−R, R] of ℝ with
//! 2π-periodic controls, the solution is wrapped onto S¹ and compared with
//! the circle solve of the wrapped initial density. The line grid has the
//! circle's cell width but is staggered by half a cell, so the wrapped
//! values are read off a periodic cubic interpolant and the comparison
//! measures a genuine discretisation gap.

use serde::{Deserialize, Serialize};

use crate::circle::{wrap_density, TWO_PI};
use crate::control::field::ControlField;
use crate::density::DensityField;
use crate::error::{Error, Result};
use crate::pde::{solve_pde, LiftedControls, PdeParams};

/// Largest mass allowed within 2π of the ends of the line domain.
pub const LEAKAGE_LIMIT: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrappedStudyResult {
    /// max over snapshots of the L∞ gap between wrapped and circle solves.
    pub discrepancy: f64,
    pub per_snapshot: Vec<(f64, f64)>,
    /// Largest mass seen in the outer margin of the line domain.
    pub max_margin_mass: f64,
    pub n_line_cells: usize,
}

/// Gaussian density on ℝ.
pub fn gaussian_line_density(center: f64, sigma: f64) -> impl Fn(f64) -> f64 {
    let norm = 1.0 / (sigma * TWO_PI.sqrt());
    move |x| norm * (-0.5 * ((x - center) / sigma).powi(2)).exp()
}

/// Periodic four-point cubic interpolation on the staggered line grid.
struct LineInterpolant<'a> {
    values: &'a [f64],
    radius: f64,
    h: f64,
}

impl LineInterpolant<'_> {
    fn eval(&self, x: f64) -> f64 {
        if x < -self.radius || x >= self.radius {
            return 0.0;
        }
        let m = self.values.len() as i64;
        let s = (x + self.radius) / self.h - 0.5;
        let j = s.floor();
        let t = s - j;
        let j = j as i64;
        let at = |k: i64| self.values[k.rem_euclid(m) as usize];
        let (p0, p1, p2, p3) = (at(j - 1), at(j), at(j + 1), at(j + 2));
        // Lagrange weights on nodes −1, 0, 1, 2
        let v = -p0 * t * (t - 1.0) * (t - 2.0) / 6.0
            + p1 * (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0
            - p2 * (t + 1.0) * t * (t - 2.0) / 2.0
            + p3 * (t + 1.0) * t * (t - 1.0) / 6.0;
        // the interpolant can dip below zero in far tails
        v.max(0.0)
    }
}

fn margin_mass(values: &[f64], h: f64, n_margin: usize) -> f64 {
    let m = values.len();
    (values[..n_margin].iter().sum::<f64>() + values[m - n_margin..].iter().sum::<f64>()) * h
}

/// Compares the wrapped line solve with the circle solve at
/// `snapshot_times`; `domain_radius` must be a positive multiple of 2π.
pub fn wrapped_consistency_study(
    q0_line: impl Fn(f64) -> f64,
    controls: &ControlField,
    params: &PdeParams,
    domain_radius: f64,
    snapshot_times: &[f64],
) -> Result<WrappedStudyResult> {
    params.validate()?;
    let periods = domain_radius / TWO_PI;
    if !(periods >= 1.0) || (periods - periods.round()).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "domain radius {domain_radius} must be a positive multiple of 2π"
        )));
    }
    let periods = periods.round() as usize;
    let grid = params.grid();
    let n = grid.n_theta();
    let h = grid.cell_width();
    let m = 2 * periods * n;
    let line_nodes: Vec<f64> = (0..m)
        .map(|j| -domain_radius + (j as f64 + 0.5) * h)
        .collect();

    let mut q_line: Vec<f64> = line_nodes.iter().map(|&x| q0_line(x)).collect();
    if q_line.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain("line density must be finite and nonnegative".into()));
    }
    let mass: f64 = q_line.iter().sum::<f64>() * h;
    if !(mass > 0.0) {
        return Err(Error::Domain("line density has zero mass on the domain".into()));
    }
    q_line.iter_mut().for_each(|v| *v /= mass);

    let wrapped0 = wrap_density(&q0_line, periods, &grid)?;
    let q0_circle = DensityField::normalized(grid, wrapped0)?;
    let circle = solve_pde(&q0_circle, controls, params, snapshot_times)?;

    let mut steps: Vec<(usize, usize)> = snapshot_times
        .iter()
        .enumerate()
        .map(|(i, &t)| params.step_of(t).map(|s| (s, i)))
        .collect::<Result<_>>()?;
    steps.sort();

    let lifted = LiftedControls::new(controls, &line_nodes, params)?;
    let mut scheme = crate::pde::scheme::LineScheme::new(&line_nodes, h, params.diffusion, params.alpha, params.dt);
    let mut per_snapshot = vec![(0.0, 0.0); snapshot_times.len()];
    let mut max_margin: f64 = margin_mass(&q_line, h, n);
    let mut next = 0;
    for step in 0..=params.n_steps() {
        if step > 0 {
            let (u1, u2) = lifted.at_step(step - 1);
            scheme.step(&mut q_line, u1, u2)?;
        }
        while next < steps.len() && steps[next].0 == step {
            let leaked = margin_mass(&q_line, h, n);
            max_margin = max_margin.max(leaked);
            if leaked > LEAKAGE_LIMIT {
                return Err(Error::Leakage {
                    leaked,
                    limit: LEAKAGE_LIMIT,
                });
            }
            let interp = LineInterpolant {
                values: &q_line,
                radius: domain_radius,
                h,
            };
            let wrapped = wrap_density(|x| interp.eval(x), periods, &grid)?;
            let i = steps[next].1;
            let reference = &circle.snapshots[i];
            let gap = wrapped
                .iter()
                .zip(&reference.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            per_snapshot[i] = (reference.time, gap);
            next += 1;
        }
    }
    if max_margin > LEAKAGE_LIMIT {
        return Err(Error::Leakage {
            leaked: max_margin,
            limit: LEAKAGE_LIMIT,
        });
    }
    Ok(WrappedStudyResult {
        discrepancy: per_snapshot.iter().map(|p| p.1).fold(0.0, f64::max),
        per_snapshot,
        max_margin_mass: max_margin,
        n_line_cells: m,
    })
}
