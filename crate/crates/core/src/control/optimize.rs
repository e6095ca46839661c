//! Projected gradient descent over the admissible control set.
//!
//! Steps start from a Barzilai–Borwein estimate and are backtracked until a
//! projected Armijo condition holds. Every accepted iterate is feasible and
//! the recorded cost never increases.

use serde::{Deserialize, Serialize};

use crate::control::adjoint::{cost_and_gradient, mean_field_cost};
use crate::control::cost::{CostBreakdown, CostWeights, TargetDensity};
use crate::control::field::ControlField;
use crate::density::DensityField;
use crate::error::{Error, Result};
use crate::liouville::{liouville_cost, LiouvilleParams};
use crate::pde::PdeParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo_c: f64,
    /// Step shrink factor per backtrack.
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Stop once the projected-gradient norm is at most this.
    pub tol: f64,
    /// Step used on the first iteration, before curvature is known.
    pub initial_step: f64,
    /// Increment used by finite-difference gradients.
    pub fd_epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            armijo_c: 1e-4,
            backtrack: 0.5,
            max_backtracks: 40,
            tol: 1e-8,
            initial_step: 10.0,
            fd_epsilon: 1e-5,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::Config(format!("armijo_c must lie in (0, 1), got {}", self.armijo_c)));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Config(format!("backtrack must lie in (0, 1), got {}", self.backtrack)));
        }
        if !(self.tol >= 0.0) || !(self.initial_step > 0.0) || !(self.fd_epsilon > 0.0) {
            return Err(Error::Config("tol must be >= 0, initial_step and fd_epsilon > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub cost: CostBreakdown,
    /// ‖u − P(u − g)‖ at this iterate.
    pub grad_norm: f64,
    /// Step length that produced this iterate (0 for the start).
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub controls: ControlField,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
    /// The line search failed; `controls` is the last accepted iterate.
    pub stalled: bool,
}

impl OptimizationResult {
    pub fn final_cost(&self) -> CostBreakdown {
        self.history.last().expect("history starts with u0").cost
    }
}

/// A cost over controls with an L² gradient.
pub trait Objective {
    fn cost(&mut self, u: &ControlField) -> Result<CostBreakdown>;
    fn cost_and_gradient(&mut self, u: &ControlField) -> Result<(CostBreakdown, ControlField)>;
}

/// J from the mean-field equation with the adjoint gradient.
#[derive(Debug, Clone)]
pub struct MeanFieldObjective<'a> {
    pub q0: &'a DensityField,
    pub z: &'a TargetDensity,
    pub weights: CostWeights,
    pub params: PdeParams,
}

impl Objective for MeanFieldObjective<'_> {
    fn cost(&mut self, u: &ControlField) -> Result<CostBreakdown> {
        mean_field_cost(self.q0, u, self.z, &self.weights, &self.params)
    }

    fn cost_and_gradient(&mut self, u: &ControlField) -> Result<(CostBreakdown, ControlField)> {
        cost_and_gradient(self.q0, u, self.z, &self.weights, &self.params)
    }
}

/// Wraps a cost function and differentiates it by central differences over
/// every control degree of freedom.
pub struct FiniteDifferenceObjective<F> {
    pub cost_fn: F,
    pub epsilon: f64,
}

impl<F> Objective for FiniteDifferenceObjective<F>
where
    F: FnMut(&ControlField) -> Result<CostBreakdown>,
{
    fn cost(&mut self, u: &ControlField) -> Result<CostBreakdown> {
        (self.cost_fn)(u)
    }

    fn cost_and_gradient(&mut self, u: &ControlField) -> Result<(CostBreakdown, ControlField)> {
        let c = (self.cost_fn)(u)?;
        let mut g = u.scaled(0.0);
        let mut probe = u.clone();
        for i in 0..u.dof_len() {
            let x = u.dof(i);
            probe.set_dof(i, x + self.epsilon);
            let plus = (self.cost_fn)(&probe)?.total;
            probe.set_dof(i, x - self.epsilon);
            let minus = (self.cost_fn)(&probe)?.total;
            probe.set_dof(i, x);
            let partial = (plus - minus) / (2.0 * self.epsilon);
            g.set_dof(i, partial / u.dof_weight(u.dof_interval(i)));
        }
        Ok((c, g))
    }
}

fn projected_residual(u: &ControlField, g: &ControlField) -> f64 {
    u.add_scaled(-1.0, &u.add_scaled(-1.0, g).project()).norm()
}

/// Projected descent from `u0` (projected first if infeasible).
pub fn projected_descent(
    objective: &mut impl Objective,
    u0: &ControlField,
    cfg: &OptimizerConfig,
) -> Result<OptimizationResult> {
    cfg.validate()?;
    let mut u = u0.project();
    let (mut cost, mut grad) = objective.cost_and_gradient(&u)?;
    let mut history = vec![IterationRecord {
        iter: 0,
        cost,
        grad_norm: projected_residual(&u, &grad),
        step: 0.0,
    }];
    let mut step = cfg.initial_step;
    let mut converged = history[0].grad_norm <= cfg.tol;
    let mut stalled = false;
    let mut iter = 0;
    while !converged && iter < cfg.max_iters {
        iter += 1;
        let mut s = step;
        let mut accepted = None;
        for _ in 0..=cfg.max_backtracks {
            let trial = u.add_scaled(-s, &grad).project();
            let predicted = grad.dot(&u.add_scaled(-1.0, &trial)).max(0.0);
            match objective.cost(&trial) {
                Ok(c) if c.total <= cost.total && c.total <= cost.total - cfg.armijo_c * predicted => {
                    accepted = Some(trial);
                    break;
                }
                Ok(_) | Err(Error::Cfl { .. }) => s *= cfg.backtrack,
                Err(e) => return Err(e),
            }
        }
        let Some(next) = accepted else {
            stalled = true;
            break;
        };
        let (c_next, g_next) = objective.cost_and_gradient(&next)?;
        let du = next.add_scaled(-1.0, &u);
        let dg = g_next.add_scaled(-1.0, &grad);
        let curvature = du.dot(&dg);
        step = if curvature > 0.0 {
            (du.dot(&du) / curvature).clamp(1e-8, 1e8)
        } else {
            s / cfg.backtrack
        };
        u = next;
        cost = c_next;
        grad = g_next;
        let grad_norm = projected_residual(&u, &grad);
        history.push(IterationRecord {
            iter,
            cost,
            grad_norm,
            step: s,
        });
        converged = grad_norm <= cfg.tol;
    }
    Ok(OptimizationResult {
        controls: u,
        history,
        converged,
        stalled,
    })
}

/// Minimises the mean-field cost J starting from `u0`.
pub fn optimize(
    q0: &DensityField,
    z: &TargetDensity,
    weights: &CostWeights,
    params: &PdeParams,
    u0: &ControlField,
    cfg: &OptimizerConfig,
) -> Result<OptimizationResult> {
    params.validate()?;
    weights.validate()?;
    let mut obj = MeanFieldObjective {
        q0,
        z,
        weights: *weights,
        params: *params,
    };
    projected_descent(&mut obj, u0, cfg)
}

/// Largest control layout accepted by [`optimize_jn`].
pub const JN_MAX_INTERVALS: usize = 8;
pub const JN_MAX_CONTROL_ANGLES: usize = 16;

/// Minimises the N-body cost J_N (first marginal of the Liouville solve for
/// `n_bodies` ∈ {2, 3} started from q₀^{⊗N}) by finite-difference descent.
pub fn optimize_jn(
    q0: &DensityField,
    z: &TargetDensity,
    weights: &CostWeights,
    params: &PdeParams,
    n_bodies: usize,
    u0: &ControlField,
    cfg: &OptimizerConfig,
) -> Result<OptimizationResult> {
    let lp = LiouvilleParams::new(*params, n_bodies)?;
    weights.validate()?;
    if u0.n_intervals() > JN_MAX_INTERVALS || u0.grid().n_theta() > JN_MAX_CONTROL_ANGLES {
        return Err(Error::Config(format!(
            "finite-difference descent needs at most {JN_MAX_INTERVALS} time intervals and \
             {JN_MAX_CONTROL_ANGLES} control angles, got {} x {}",
            u0.n_intervals(),
            u0.grid().n_theta()
        )));
    }
    let mut obj = FiniteDifferenceObjective {
        cost_fn: |u: &ControlField| liouville_cost(q0, u, z, weights, &lp),
        epsilon: cfg.fd_epsilon,
    };
    projected_descent(&mut obj, u0, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle::AngularGrid;
    use crate::control::field::{Channel, ControlConstraint};

    /// J(u) = ½‖u − a‖²: gradient u − a.
    struct Quadratic {
        target: ControlField,
    }

    impl Objective for Quadratic {
        fn cost(&mut self, u: &ControlField) -> Result<CostBreakdown> {
            let d = u.add_scaled(-1.0, &self.target);
            Ok(CostBreakdown::new(0.5 * d.dot(&d), 0.0, 0.0, CostWeights::default()))
        }
        fn cost_and_gradient(&mut self, u: &ControlField) -> Result<(CostBreakdown, ControlField)> {
            Ok((self.cost(u)?, u.add_scaled(-1.0, &self.target)))
        }
    }

    fn layout() -> ControlField {
        ControlField::zeros(1.0, 3, AngularGrid::new(8).unwrap(), ControlConstraint::default()).unwrap()
    }

    #[test]
    fn reaches_interior_minimum() {
        let target = ControlField::constant(1.0, 3, AngularGrid::new(8).unwrap(), ControlConstraint::default(), 0.4, -0.2)
            .unwrap();
        let mut obj = Quadratic { target: target.clone() };
        let res = projected_descent(&mut obj, &layout(), &OptimizerConfig::default()).unwrap();
        assert!(res.converged && !res.stalled);
        assert!(res.controls.add_scaled(-1.0, &target).norm() < 1e-7);
        assert!(res.history.windows(2).all(|w| w[1].cost.total <= w[0].cost.total));
    }

    #[test]
    fn exterior_minimum_stays_feasible() {
        let target = ControlField::constant(1.0, 3, AngularGrid::new(8).unwrap(), ControlConstraint::default(), 40.0, 0.0)
            .unwrap();
        let mut obj = Quadratic { target };
        let cfg = OptimizerConfig {
            max_iters: 30,
            ..OptimizerConfig::default()
        };
        let res = projected_descent(&mut obj, &layout(), &cfg).unwrap();
        assert!(res.controls.is_feasible());
        let v = res.controls.slice(Channel::U1, 0)[0];
        assert!(v > 0.0);
        assert!(res.history.windows(2).all(|w| w[1].cost.total <= w[0].cost.total));
    }

    #[test]
    fn finite_difference_gradient_of_quadratic() {
        let target = ControlField::constant(1.0, 3, AngularGrid::new(8).unwrap(), ControlConstraint::default(), 0.4, -0.2)
            .unwrap();
        let mut exact = Quadratic { target: target.clone() };
        let mut q = Quadratic { target };
        let mut fd = FiniteDifferenceObjective {
            cost_fn: |u: &ControlField| q.cost(u),
            epsilon: 1e-4,
        };
        let u = layout();
        let (_, g_fd) = fd.cost_and_gradient(&u).unwrap();
        let (_, g) = exact.cost_and_gradient(&u).unwrap();
        assert!(g_fd.add_scaled(-1.0, &g).norm() < 1e-8 * g.norm().max(1.0));
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = OptimizerConfig {
            backtrack: 1.5,
            ..OptimizerConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
