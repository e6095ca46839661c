//! Adjoint state and reduced gradient of the mean-field cost.
//!
//! The backward sweep is the exact transpose of the forward split step, so
//! the gradient is the derivative of the *discrete* cost. In the continuum
//! limit p = δJ/δq solves
//!
//! −∂_t p = D∂²_θp + (u₁ + u₂w[q])∂_θp + B[q,p] + α_r(q − z),
//! p(T) = α_t(q(T) − z(T)),
//! B[q,p](θ) = ∫ u₂(θ̃) q(θ̃) ∂_θ̃p(θ̃) sin(θ − θ̃ − α) dθ̃,
//!
//! and the L² gradient is (β₁u₁ + q∂_θp, β₂u₂ + q w[q] ∂_θp).

use num_complex::Complex64;

use crate::circle::AngularGrid;
use crate::control::cost::{tracking_terms, CostBreakdown, CostWeights, TargetDensity};
use crate::control::field::{Channel, ControlField};
use crate::density::DensityField;
use crate::error::{Error, Result};
use crate::pde::{solve_pde_dense, DenseTrajectory, LiftedControls, PdeParams};

/// Adjoint p(t_n, θ_k) at every forward time step.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointField {
    pub grid: AngularGrid,
    pub dt: f64,
    /// p^0 … p^{n_steps}; the last entry is exactly α_t(q(T) − z(T)).
    pub values: Vec<Vec<f64>>,
    /// Sensitivity of the discrete cost to q^{n_steps}, in density units:
    /// the terminal condition plus the trapezoid endpoint of the running cost.
    terminal_sensitivity: Vec<f64>,
}

impl AdjointField {
    fn sensitivity(&self, n: usize) -> &[f64] {
        if n + 1 == self.values.len() {
            &self.terminal_sensitivity
        } else {
            &self.values[n]
        }
    }
}

/// B[q,p] with ∂_θp supplied, reduced to one Fourier mode:
/// B(θ) = Im(e^{i(θ−α)} · conj(Y)), Y = ∫ u₂ q ∂p e^{iθ̃} dθ̃.
pub fn nonlocal_adjoint_term(
    q: &[f64],
    dp: &[f64],
    u2: &[f64],
    alpha: f64,
    grid: &AngularGrid,
) -> Result<Vec<f64>> {
    grid.check_len(q, "q")?;
    grid.check_len(dp, "dp")?;
    grid.check_len(u2, "u2")?;
    let h = grid.cell_width();
    let mut y = Complex64::new(0.0, 0.0);
    for k in 0..grid.n_theta() {
        y += Complex64::from_polar(u2[k] * q[k] * dp[k], grid.node(k));
    }
    let yc = (y * h).conj();
    Ok(grid
        .nodes()
        .iter()
        .map(|&t| (Complex64::from_polar(1.0, t - alpha) * yc).im)
        .collect())
}

fn check_dense(q_traj: &DenseTrajectory, params: &PdeParams) -> Result<()> {
    if q_traj.states.len() != params.n_steps() + 1 {
        return Err(Error::Usage(format!(
            "adjoint sweep needs all {} forward states, got {}",
            params.n_steps() + 1,
            q_traj.states.len()
        )));
    }
    if (q_traj.dt - params.dt).abs() > 1e-15 || q_traj.grid.n_theta() != params.n_theta {
        return Err(Error::Usage("forward trajectory does not match params".into()));
    }
    Ok(())
}

/// Backward sweep for p given the dense forward trajectory.
pub fn adjoint_solve(
    q_traj: &DenseTrajectory,
    controls: &ControlField,
    z: &TargetDensity,
    weights: &CostWeights,
    params: &PdeParams,
) -> Result<AdjointField> {
    check_dense(q_traj, params)?;
    weights.validate()?;
    let grid = q_traj.grid;
    if z.grid != grid {
        return Err(Error::Usage("target grid differs from the state grid".into()));
    }
    let n_steps = params.n_steps();
    let n = grid.n_theta();
    let h = grid.cell_width();
    let dt = params.dt;
    let lifted = LiftedControls::new(controls, &grid.nodes(), params)?;
    let mut scheme = params.line_scheme(&grid);
    let zv = z.sample_times(&q_traj.times());

    let mut values = vec![vec![0.0; n]; n_steps + 1];
    let q_last = &q_traj.states[n_steps];
    let z_last = &zv[n_steps];
    let terminal: Vec<f64> = (0..n)
        .map(|k| weights.alpha_t * (q_last[k] - z_last[k]))
        .collect();
    let endpoint = if n_steps == 0 { 0.0 } else { 0.5 * dt };
    let terminal_sensitivity: Vec<f64> = (0..n)
        .map(|k| terminal[k] + weights.alpha_r * endpoint * (q_last[k] - z_last[k]))
        .collect();
    values[n_steps] = terminal;

    // λ = h·p is the sensitivity of the discrete cost to a cell value
    let mut lam_next: Vec<f64> = terminal_sensitivity.iter().map(|p| h * p).collect();
    let mut lam = vec![0.0; n];
    let mut sens_v = vec![0.0; n];
    let mut w = vec![0.0; n];
    for step in (0..n_steps).rev() {
        let (u1, u2) = lifted.at_step(step);
        scheme.adjoint_step(&q_traj.states[step], &lam_next, u1, u2, &mut lam, &mut sens_v, &mut w);
        let c = if step == 0 { 0.5 * dt } else { dt };
        let q = &q_traj.states[step];
        for k in 0..n {
            lam[k] += h * weights.alpha_r * c * (q[k] - zv[step][k]);
            values[step][k] = lam[k] / h;
        }
        std::mem::swap(&mut lam, &mut lam_next);
    }
    Ok(AdjointField {
        grid,
        dt,
        values,
        terminal_sensitivity,
    })
}

/// L² gradient of the discrete cost with respect to the control degrees of
/// freedom, assembled from aligned forward and adjoint trajectories.
pub fn gradient(
    controls: &ControlField,
    q_traj: &DenseTrajectory,
    p_traj: &AdjointField,
    weights: &CostWeights,
    params: &PdeParams,
) -> Result<ControlField> {
    check_dense(q_traj, params)?;
    if p_traj.values.len() != q_traj.states.len() || p_traj.grid != q_traj.grid {
        return Err(Error::Usage("forward and adjoint trajectories are not aligned".into()));
    }
    let grid = q_traj.grid;
    let n = grid.n_theta();
    let h = grid.cell_width();
    let lifted = LiftedControls::new(controls, &grid.nodes(), params)?;
    let mut scheme = params.line_scheme(&grid);
    let mut raw = controls.scaled(0.0);
    let mut lam_next = vec![0.0; n];
    let mut lam = vec![0.0; n];
    let mut sens_v = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut sens_u2 = vec![0.0; n];
    for step in 0..params.n_steps() {
        for (l, p) in lam_next.iter_mut().zip(p_traj.sensitivity(step + 1)) {
            *l = h * p;
        }
        let (u1, u2) = lifted.at_step(step);
        scheme.adjoint_step(&q_traj.states[step], &lam_next, u1, u2, &mut lam, &mut sens_v, &mut w);
        for k in 0..n {
            sens_u2[k] = sens_v[k] * w[k];
        }
        let interval = lifted.step_interval[step];
        lifted
            .lift
            .lift_transpose_add(&sens_v, raw.slice_mut(Channel::U1, interval));
        lifted
            .lift
            .lift_transpose_add(&sens_u2, raw.slice_mut(Channel::U2, interval));
    }
    // Euclidean → L² on the control grid
    for k in 0..controls.n_intervals() {
        let inv = 1.0 / controls.dof_weight(k);
        for ch in [Channel::U1, Channel::U2] {
            for v in raw.slice_mut(ch, k) {
                *v *= inv;
            }
        }
    }
    Ok(raw.add_scaled(1.0, &controls.effort_gradient(weights)))
}

/// J evaluated from a dense forward solve (trapezoid over every step).
pub fn dense_cost(
    q_traj: &DenseTrajectory,
    controls: &ControlField,
    z: &TargetDensity,
    weights: &CostWeights,
) -> Result<CostBreakdown> {
    weights.validate()?;
    if z.grid != q_traj.grid {
        return Err(Error::Usage("target grid differs from the state grid".into()));
    }
    let times = q_traj.times();
    let states: Vec<&[f64]> = q_traj.states.iter().map(|s| s.as_slice()).collect();
    let zv = z.sample_times(&times);
    let (running, terminal) = tracking_terms(&q_traj.grid, &times, &states, &zv, weights);
    Ok(CostBreakdown::new(running, terminal, controls.effort(weights), *weights))
}

/// Mean-field cost of `controls` from initial density `q0`.
pub fn mean_field_cost(
    q0: &DensityField,
    controls: &ControlField,
    z: &TargetDensity,
    weights: &CostWeights,
    params: &PdeParams,
) -> Result<CostBreakdown> {
    let traj = solve_pde_dense(q0, controls, params)?;
    dense_cost(&traj, controls, z, weights)
}

/// Cost and its L² gradient in one forward/backward pass.
pub fn cost_and_gradient(
    q0: &DensityField,
    controls: &ControlField,
    z: &TargetDensity,
    weights: &CostWeights,
    params: &PdeParams,
) -> Result<(CostBreakdown, ControlField)> {
    let traj = solve_pde_dense(q0, controls, params)?;
    let cost = dense_cost(&traj, controls, z, weights)?;
    let p = adjoint_solve(&traj, controls, z, weights, params)?;
    let g = gradient(controls, &traj, &p, weights, params)?;
    Ok((cost, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle::{interaction_kernel, TWO_PI};
    use crate::control::field::ControlConstraint;

    fn coarse_params() -> PdeParams {
        PdeParams {
            n_theta: 32,
            dt: 1e-2,
            t_final: 0.5,
            diffusion: 0.3,
            alpha: 0.4,
        }
    }

    #[test]
    fn adjoint_term_matches_direct_quadrature() {
        let g = AngularGrid::new(96).unwrap();
        let q = DensityField::uniform(g).values;
        let dp: Vec<f64> = g.nodes().iter().map(|t| -t.sin()).collect();
        let u2 = vec![1.0; 96];
        let b = nonlocal_adjoint_term(&q, &dp, &u2, 0.0, &g).unwrap();
        let h = g.cell_width();
        for (k, &t) in g.nodes().iter().enumerate() {
            let direct: f64 = (0..96)
                .map(|j| u2[j] * q[j] * dp[j] * interaction_kernel(g.node(j), t, 0.0))
                .sum::<f64>()
                * h;
            assert!((b[k] - direct).abs() < 1e-12);
            // closed form: cos θ / 2
            assert!((b[k] - 0.5 * t.cos()).abs() < 1e-12);
        }
        // general case with α ≠ 0 and non-uniform q
        let q: Vec<f64> = g.nodes().iter().map(|t| (1.0 + 0.6 * (t - 1.0).cos()) / TWO_PI).collect();
        let dp: Vec<f64> = g.nodes().iter().map(|t| (2.0 * t).cos() + 0.3 * t.sin()).collect();
        let u2: Vec<f64> = g.nodes().iter().map(|t| 1.0 + 0.5 * t.cos()).collect();
        let b = nonlocal_adjoint_term(&q, &dp, &u2, 0.7, &g).unwrap();
        for (k, &t) in g.nodes().iter().enumerate() {
            let direct: f64 = (0..96)
                .map(|j| u2[j] * q[j] * dp[j] * (t - g.node(j) - 0.7).sin())
                .sum::<f64>()
                * h;
            assert!((b[k] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_adjoint_when_tracking_exactly() {
        let p = coarse_params();
        let g = p.grid();
        let q0 = DensityField::cosine(g, 0.5, 0.0).unwrap();
        let c = ControlField::zeros(p.t_final, 4, AngularGrid::new(8).unwrap(), ControlConstraint::default())
            .unwrap();
        let traj = solve_pde_dense(&q0, &c, &p).unwrap();
        let z = TargetDensity::from_trajectory(&traj.to_trajectory()).unwrap();
        let adj = adjoint_solve(&traj, &c, &z, &CostWeights::default(), &p).unwrap();
        assert!(adj.values.iter().flatten().all(|v| v.abs() < 1e-14));
        let grad = gradient(&c, &traj, &adj, &CostWeights::default(), &p).unwrap();
        assert!(grad.norm() < 1e-14);
    }

    #[test]
    fn terminal_condition_is_exact() {
        let p = coarse_params();
        let g = p.grid();
        let q0 = DensityField::cosine(g, 0.5, 0.0).unwrap();
        let z = TargetDensity::stationary(&DensityField::von_mises(g, 2.0, 1.0).unwrap());
        let c = ControlField::constant(p.t_final, 2, AngularGrid::new(8).unwrap(), ControlConstraint::default(), 0.3, 0.8)
            .unwrap();
        let w = CostWeights {
            alpha_t: 2.5,
            ..CostWeights::default()
        };
        let traj = solve_pde_dense(&q0, &c, &p).unwrap();
        let adj = adjoint_solve(&traj, &c, &z, &w, &p).unwrap();
        let zt = z.at(p.t_final);
        let qt = traj.states.last().unwrap();
        for k in 0..g.n_theta() {
            assert_eq!(adj.values[p.n_steps()][k], w.alpha_t * (qt[k] - zt[k]));
        }
    }

    #[test]
    fn missing_snapshots_rejected() {
        let p = coarse_params();
        let g = p.grid();
        let q0 = DensityField::uniform(g);
        let c = ControlField::zeros(p.t_final, 1, g, ControlConstraint::default()).unwrap();
        let mut traj = solve_pde_dense(&q0, &c, &p).unwrap();
        traj.states.pop();
        let z = TargetDensity::stationary(&q0);
        assert!(matches!(
            adjoint_solve(&traj, &c, &z, &CostWeights::default(), &p),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn gradient_vanishes_without_effort_and_adjoint() {
        let p = coarse_params();
        let g = p.grid();
        let q0 = DensityField::uniform(g);
        let c = ControlField::constant(p.t_final, 2, AngularGrid::new(8).unwrap(), ControlConstraint::default(), 0.0, 0.7)
            .unwrap();
        let w = CostWeights {
            beta1: 0.0,
            beta2: 0.0,
            ..CostWeights::default()
        };
        // uniform stays uniform under u₂ alone, so tracking uniform gives p ≡ 0
        let (cost, grad) = cost_and_gradient(&q0, &c, &TargetDensity::stationary(&q0), &w, &p).unwrap();
        assert!(cost.total < 1e-28);
        assert!(grad.norm() < 1e-14);
    }

    fn random_smooth(layout: &ControlField, rng: &mut impl rand::Rng, amp: f64) -> ControlField {
        let mut out = layout.scaled(0.0);
        let nodes = layout.grid().nodes();
        for ch in [Channel::U1, Channel::U2] {
            for k in 0..layout.n_intervals() {
                let (a, b, c, d): (f64, f64, f64, f64) = (rng.random(), rng.random(), rng.random(), rng.random());
                for (v, t) in out.slice_mut(ch, k).iter_mut().zip(&nodes) {
                    *v = amp * ((a - 0.5) + (b - 0.5) * t.cos() + (c - 0.5) * t.sin() + 0.5 * (d - 0.5) * (2.0 * t).cos());
                }
            }
        }
        out
    }

    #[test]
    fn gradient_matches_central_differences() {
        use rand::SeedableRng;
        let p = coarse_params();
        let g = p.grid();
        let q0 = DensityField::von_mises(g, 1.0, 1.0).unwrap();
        let z = TargetDensity::stationary(&DensityField::von_mises(g, 3.0, 2.0).unwrap());
        let w = CostWeights::default();
        let layout = ControlField::zeros(p.t_final, 4, AngularGrid::new(8).unwrap(), ControlConstraint::default()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..5 {
            let u = random_smooth(&layout, &mut rng, 2.0).project();
            let delta = random_smooth(&layout, &mut rng, 1.0);
            let (_, grad) = cost_and_gradient(&q0, &u, &z, &w, &p).unwrap();
            let eps = 1e-5;
            let jp = mean_field_cost(&q0, &u.add_scaled(eps, &delta), &z, &w, &p).unwrap().total;
            let jm = mean_field_cost(&q0, &u.add_scaled(-eps, &delta), &z, &w, &p).unwrap().total;
            let fd = (jp - jm) / (2.0 * eps);
            let an = grad.dot(&delta);
            assert!((an - fd).abs() <= 1e-3 * an.abs(), "adjoint {an} vs fd {fd}");
        }
    }
}
