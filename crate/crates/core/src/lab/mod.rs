//! Studies comparing the particle, Liouville and mean-field descriptions.

pub mod chaos;
pub mod gamma;
pub mod wrapped;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::circle::AngularGrid;
use crate::control::cost::TargetDensity;
use crate::control::field::{ControlConstraint, ControlField};
use crate::density::{DensityField, DensitySpec};
use crate::error::{Error, Result};
use crate::pde::{solve_pde, PdeParams};

pub use chaos::{ckp_chain_study, chaos_rate_study, CkpRecord, RateStudyConfig, RateStudyResult};
pub use gamma::{
    gamma_consistency_study, GammaRecord, GammaStudyConfig, GammaStudyResult, GapMethod, MinRecord, MinimumSetup,
};
pub use wrapped::{wrapped_consistency_study, WrappedStudyResult};

/// ∫ |a − b| by the rectangle rule.
pub fn l1_distance(a: &DensityField, b: &DensityField) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::Usage(format!(
            "L1 distance between grids of {} and {} cells",
            a.grid.n_theta(),
            b.grid.n_theta()
        )));
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        * a.grid.cell_width())
}

/// Least-squares line through (log x, log y).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// 95% confidence interval of the slope (Student t, n − 2 dof).
    pub slope_ci: (f64, f64),
}

pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<LogLogFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Usage("a log-log fit needs at least two paired points".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("log-log fit needs positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = ly.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("log-log fit needs distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_ci = if lx.len() > 2 {
        let dof = n - 2.0;
        let se = (sse / dof / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, dof)
            .map_err(|e| Error::Domain(format!("t distribution: {e}")))?
            .inverse_cdf(0.975);
        (slope - t * se, slope + t * se)
    } else {
        (f64::NEG_INFINITY, f64::INFINITY)
    };
    Ok(LogLogFit {
        slope,
        intercept,
        r2,
        slope_ci,
    })
}

/// How a tracking target is built on a given grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    /// A fixed density held for all t.
    Stationary { density: DensitySpec },
    /// The uncontrolled evolution of the initial density.
    FreeEvolution,
}

impl TargetSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Stationary { density } => density.validate(),
            Self::FreeEvolution => Ok(()),
        }
    }

    /// Target on the grid of `params`, with snapshots at every solver step
    /// for a free evolution.
    pub fn build(&self, q0: &DensitySpec, params: &PdeParams) -> Result<TargetDensity> {
        let grid = params.grid();
        match self {
            Self::Stationary { density } => Ok(TargetDensity::stationary(&density.sample(grid)?)),
            Self::FreeEvolution => {
                let zero = ControlField::zeros(params.t_final, 1, AngularGrid::new(4)?, ControlConstraint::default())?;
                let times: Vec<f64> = (0..=params.n_steps()).map(|n| n as f64 * params.dt).collect();
                let traj = solve_pde(&q0.sample(grid)?, &zero, params, &times)?;
                TargetDensity::from_trajectory(&traj)
            }
        }
    }
}

/// Restricts every snapshot of a target onto a coarser grid.
pub fn restrict_target(z: &TargetDensity, to: &AngularGrid) -> Result<TargetDensity> {
    let values = z
        .values
        .iter()
        .map(|v| crate::circle::restrict(v, &z.grid, to))
        .collect::<Result<Vec<_>>>()?;
    TargetDensity::new(*to, z.times.clone(), values)
}

/// Mixes a run seed with study coordinates into an independent seed.
pub(crate) fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut x = base ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    x ^= x >> 33;
    x = x.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    x ^= x >> 33;
    x
}
