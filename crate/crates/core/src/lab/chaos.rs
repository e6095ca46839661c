//! Propagation of chaos: L¹ distance of particle marginals to the mean-field
//! density, and the entropy chain ‖q^{N;1} − q‖²_{L¹} ≤ 2ℋ(q^N | q^{⊗N}).

use serde::{Deserialize, Serialize};

use crate::circle::{restrict, AngularGrid};
use crate::control::field::ControlField;
use crate::density::{DensityField, DensitySpec};
use crate::error::{Error, Result};
use crate::lab::{derive_seed, fit_loglog, l1_distance, LogLogFit};
use crate::liouville::{first_marginal, liouville_solve, relative_entropy, tensor_power};
use crate::particles::{empirical_marginal, sample_initial, simulate, SdeParams};
use crate::pde::{solve_pde, uniform_times, PdeParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateStudyConfig {
    pub n_values: Vec<usize>,
    pub seeds_per_point: usize,
    pub base_seed: u64,
    /// Requested histogram bins; halved until the smallest N expects at
    /// least `min_expected_count` particles per bin.
    pub n_theta_hist: usize,
    pub min_expected_count: f64,
    pub n_snapshots: usize,
    /// Resolution of the mean-field reference solve.
    pub reference_n_theta: usize,
}

impl Default for RateStudyConfig {
    fn default() -> Self {
        Self {
            n_values: vec![100, 1000, 10_000, 100_000],
            seeds_per_point: 20,
            base_seed: 2024,
            n_theta_hist: 32,
            min_expected_count: 5.0,
            n_snapshots: 11,
            reference_n_theta: 1024,
        }
    }
}

impl RateStudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() || self.n_values.contains(&0) {
            return Err(Error::Config("n_values must be nonempty and positive".into()));
        }
        if self.n_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("n_values must be strictly increasing".into()));
        }
        if self.seeds_per_point == 0 || self.n_snapshots == 0 {
            return Err(Error::Config("seeds_per_point and n_snapshots must be positive".into()));
        }
        if self.n_theta_hist == 0 || self.reference_n_theta < 4 {
            return Err(Error::Config("histogram and reference grids are too small".into()));
        }
        if !(self.min_expected_count >= 0.0) {
            return Err(Error::Config("min_expected_count must be >= 0".into()));
        }
        Ok(())
    }

    /// Bin count actually used, after coarsening for the smallest N.
    pub fn effective_bins(&self) -> usize {
        let smallest = self.n_values[0] as f64;
        let mut bins = self.n_theta_hist;
        while bins > 1 && smallest / (bins as f64) < self.min_expected_count {
            bins /= 2;
        }
        bins
    }
}

/// One (N, seed) sample of the sup-in-time L¹ distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSample {
    pub n: usize,
    pub seed: u64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateStudyResult {
    pub n_values: Vec<usize>,
    /// Seed-averaged sup-over-time L¹ distance per N.
    pub distances: Vec<f64>,
    pub samples: Vec<RateSample>,
    pub fitted_slope: f64,
    pub fit_r2: f64,
    pub fit: LogLogFit,
    pub seeds_per_point: usize,
    pub n_theta_hist: usize,
    /// True when the requested bin count was reduced.
    pub coarsened: bool,
    /// Sup-over-time L¹ distance of the seed-averaged histogram at the
    /// largest N: the part of the error that averaging does not remove.
    pub bias_floor: f64,
}

/// Runs particle ensembles of every size in `cfg.n_values` and fits the
/// decay of the histogram's L¹ distance to the mean-field solution.
pub fn chaos_rate_study(
    q0: &DensitySpec,
    controls: &ControlField,
    params: &SdeParams,
    cfg: &RateStudyConfig,
) -> Result<RateStudyResult> {
    cfg.validate()?;
    params.validate()?;
    let bins = cfg.effective_bins();
    let hist_grid = AngularGrid::new(bins)?;
    let ref_params = PdeParams {
        diffusion: params.diffusion,
        alpha: params.alpha,
        dt: params.dt,
        t_final: params.t_final,
        n_theta: cfg.reference_n_theta,
    };
    let q_fine = q0.sample(ref_params.grid())?;
    let times = uniform_times(params.t_final, cfg.n_snapshots);
    let reference = solve_pde(&q_fine, controls, &ref_params, &times)?;
    let ref_hist: Vec<DensityField> = reference
        .snapshots
        .iter()
        .map(|s| {
            Ok(DensityField {
                grid: hist_grid,
                values: restrict(&s.values, &s.grid, &hist_grid)?,
                time: s.time,
            })
        })
        .collect::<Result<_>>()?;

    let mut samples = Vec::new();
    let mut distances = Vec::new();
    let largest = *cfg.n_values.last().expect("validated nonempty");
    let mut pooled = vec![vec![0.0; bins]; times.len()];
    for (ni, &n) in cfg.n_values.iter().enumerate() {
        let mut total = 0.0;
        for s in 0..cfg.seeds_per_point {
            let seed = derive_seed(cfg.base_seed, ni as u64, s as u64);
            let ens = sample_initial(&q_fine, n, seed)?;
            let mut sup: f64 = 0.0;
            let mut k = 0;
            simulate(ens, controls, params, &times, |e| {
                let h = empirical_marginal(e, &hist_grid);
                sup = sup.max(l1_distance(&h, &ref_hist[k])?);
                if n == largest {
                    for (p, v) in pooled[k].iter_mut().zip(&h.values) {
                        *p += v;
                    }
                }
                k += 1;
                Ok(())
            })?;
            samples.push(RateSample {
                n,
                seed,
                distance: sup,
            });
            total += sup;
        }
        distances.push(total / cfg.seeds_per_point as f64);
    }
    let mut bias_floor: f64 = 0.0;
    for (p, r) in pooled.iter().zip(&ref_hist) {
        let avg = DensityField {
            grid: hist_grid,
            values: p.iter().map(|v| v / cfg.seeds_per_point as f64).collect(),
            time: r.time,
        };
        bias_floor = bias_floor.max(l1_distance(&avg, r)?);
    }
    let xs: Vec<f64> = cfg.n_values.iter().map(|&n| n as f64).collect();
    let fit = if xs.len() >= 2 {
        fit_loglog(&xs, &distances)?
    } else {
        LogLogFit {
            slope: f64::NAN,
            intercept: f64::NAN,
            r2: f64::NAN,
            slope_ci: (f64::NAN, f64::NAN),
        }
    };
    Ok(RateStudyResult {
        n_values: cfg.n_values.clone(),
        distances,
        samples,
        fitted_slope: fit.slope,
        fit_r2: fit.r2,
        fit,
        seeds_per_point: cfg.seeds_per_point,
        n_theta_hist: bins,
        coarsened: bins != cfg.n_theta_hist,
        bias_floor,
    })
}

/// Entropy, marginal distance and Pinsker slack 2ℋ − L¹² at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CkpRecord {
    pub t: f64,
    pub relative_entropy: f64,
    pub l1: f64,
    pub slack: f64,
}

/// Solves the N-body Liouville equation and the mean-field equation under
/// the same controls and tracks the entropy chain at each snapshot.
pub fn ckp_chain_study(
    q0: &DensityField,
    controls: &ControlField,
    params: &PdeParams,
    n_bodies: usize,
    snapshot_times: &[f64],
) -> Result<Vec<CkpRecord>> {
    let states = liouville_solve(q0, controls, params, n_bodies, snapshot_times)?;
    let mean_field = solve_pde(q0, controls, params, snapshot_times)?;
    states
        .iter()
        .zip(&mean_field.snapshots)
        .map(|(s, q)| {
            let h = relative_entropy(s, &tensor_power(q, n_bodies))?;
            let l1 = l1_distance(&first_marginal(s), q)?;
            Ok(CkpRecord {
                t: q.time,
                relative_entropy: h,
                l1,
                slack: 2.0 * h - l1 * l1,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::field::ControlConstraint;

    #[test]
    fn bins_coarsen_for_small_ensembles() {
        let cfg = RateStudyConfig::default();
        assert_eq!(cfg.effective_bins(), 16);
        let big = RateStudyConfig {
            n_values: vec![1000, 10_000],
            ..RateStudyConfig::default()
        };
        assert_eq!(big.effective_bins(), 32);
    }

    #[test]
    fn small_study_shows_decay() {
        let q0 = DensitySpec::Cosine {
            amplitude: 1.0,
            phase: 0.0,
        };
        let params = SdeParams {
            t_final: 0.2,
            dt: 1e-2,
            ..SdeParams::default()
        };
        let c = ControlField::constant(0.2, 1, AngularGrid::new(8).unwrap(), ControlConstraint::default(), 0.0, 1.0)
            .unwrap();
        let cfg = RateStudyConfig {
            n_values: vec![200, 2000, 20_000],
            seeds_per_point: 6,
            n_snapshots: 3,
            reference_n_theta: 256,
            ..RateStudyConfig::default()
        };
        let r = chaos_rate_study(&q0, &c, &params, &cfg).unwrap();
        assert!(r.distances.windows(2).all(|w| w[1] < w[0]));
        assert!(r.fitted_slope < -0.3 && r.fitted_slope > -0.7, "{}", r.fitted_slope);
        assert_eq!(r.samples.len(), 18);
        assert!(r.bias_floor < r.distances[2]);
    }

    #[test]
    fn entropy_chain_starts_at_zero_and_holds() {
        let p = PdeParams {
            n_theta: 24,
            dt: 1e-3,
            t_final: 0.2,
            ..PdeParams::default()
        };
        let q0 = DensityField::cosine(p.grid(), 0.9, 0.0).unwrap();
        let c = ControlField::constant(0.2, 1, AngularGrid::new(8).unwrap(), ControlConstraint::default(), 0.0, 1.0)
            .unwrap();
        let rec = ckp_chain_study(&q0, &c, &p, 2, &uniform_times(0.2, 5)).unwrap();
        assert_eq!(rec[0].relative_entropy, 0.0);
        assert!(rec.iter().all(|r| r.slack >= -1e-8));
        assert!(rec.last().unwrap().relative_entropy > 0.0);
    }
}
