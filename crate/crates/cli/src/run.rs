//! Dispatch of a validated config to the library, with file output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use kuramoto_core::circle::AngularGrid;
use kuramoto_core::control::optimize::{optimize, optimize_jn, OptimizationResult};
use kuramoto_core::control::field::ControlConstraint;
use kuramoto_core::lab::wrapped::gaussian_line_density;
use kuramoto_core::lab::{
    chaos_rate_study, ckp_chain_study, gamma_consistency_study, l1_distance, wrapped_consistency_study,
    GammaStudyConfig, MinimumSetup,
};
use kuramoto_core::liouville::{first_marginal, liouville_solve, relative_entropy, tensor_power};
use kuramoto_core::particles::{empirical_marginal, sample_initial, simulate};
use kuramoto_core::pde::{uniform_times, Trajectory};
use kuramoto_core::{solve_pde, ControlField, TWO_PI};

use crate::config::{RunConfig, Subcommand};
use crate::error::CliError;
use crate::output::{control_hash, controls_csv, num, trajectory_csv, OutputDir};

const MASS_DRIFT_LIMIT: f64 = 1e-10;
const MIN_VALUE_LIMIT: f64 = -1e-12;

/// Everything a run reports besides its files.
#[derive(Debug, Default)]
pub struct RunReport {
    pub seeds: Vec<u64>,
    pub control_hashes: Vec<String>,
    pub checks: BTreeMap<String, bool>,
    pub stalled: bool,
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub artifact: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub config: &'a RunConfig,
    pub seeds: &'a [u64],
    pub control_hashes: &'a [String],
    pub wall_time_seconds: f64,
    pub outputs: &'a [String],
    pub checks: &'a BTreeMap<String, bool>,
    pub exit_code: i32,
}

fn conservation_checks(report: &mut RunReport, drift: f64, min: f64) {
    report.checks.insert("mass_conserved".into(), drift <= MASS_DRIFT_LIMIT);
    report.checks.insert("nonnegative".into(), min >= MIN_VALUE_LIMIT);
}

fn mass_csv(traj: &Trajectory) -> String {
    let mut s = String::from("t,mass,min_value\n");
    for snap in &traj.snapshots {
        writeln!(s, "{},{},{}", num(snap.time), num(snap.mass()), num(snap.min_value())).unwrap();
    }
    s
}

fn optimization_log(r: &OptimizationResult) -> String {
    let mut s = String::from("iter,J_total,J_r,J_t,J_u,grad_norm,step\n");
    for rec in &r.history {
        let c = rec.cost;
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            rec.iter,
            num(c.total),
            num(c.running),
            num(c.terminal),
            num(c.effort),
            num(rec.grad_norm),
            num(rec.step)
        )
        .unwrap();
    }
    s
}

fn write_optimization(
    out: &mut OutputDir,
    report: &mut RunReport,
    r: &OptimizationResult,
) -> Result<(), CliError> {
    out.write("optimization_log.csv", &optimization_log(r))?;
    out.write("controls.csv", &controls_csv(&r.controls))?;
    report.control_hashes.push(control_hash(&r.controls));
    let monotone = r.history.windows(2).all(|w| w[1].cost.total <= w[0].cost.total);
    report.checks.insert("cost_non_increasing".into(), monotone);
    report.checks.insert("converged".into(), r.converged);
    report.checks.insert("feasible".into(), r.controls.is_feasible());
    report.stalled = r.stalled;
    let c = r.final_cost();
    out.write_json(
        "summary.json",
        &json!({
            "iterations": r.history.len() - 1,
            "converged": r.converged,
            "stalled": r.stalled,
            "final_cost": c,
        }),
    )
}

/// Runs the configured subcommand, writing its files into `out`.
pub fn run(cfg: &RunConfig, out: &mut OutputDir) -> Result<RunReport, CliError> {
    let module = cfg.subcommand.module();
    let core = CliError::core(module);
    let pde = cfg.model.pde();
    let times = uniform_times(pde.t_final, cfg.model.n_snapshots);
    let controls = cfg.control.build(pde.t_final).map_err(&core)?;
    let weights = cfg.weights.weights();
    let mut report = RunReport::default();
    if !matches!(cfg.subcommand, Subcommand::GammaStudy | Subcommand::Optimize | Subcommand::OptimizeJn) {
        report.control_hashes.push(control_hash(&controls));
    }

    match cfg.subcommand {
        Subcommand::SolvePde => {
            let q0 = cfg.initial.sample(pde.grid()).map_err(&core)?;
            let traj = solve_pde(&q0, &controls, &pde, &times).map_err(&core)?;
            out.write("trajectory.csv", &trajectory_csv(&traj, "q"))?;
            out.write("mass.csv", &mass_csv(&traj))?;
            let (drift, min) = traj.conservation_report();
            conservation_checks(&mut report, drift, min);
        }
        Subcommand::SimulateParticles => {
            let p = cfg.particles;
            let q0 = cfg.initial.sample(pde.grid()).map_err(&core)?;
            let ens = sample_initial(&q0, p.n, cfg.seed).map_err(&core)?;
            let sde = cfg.model.sde(p.interaction_mode);
            report.seeds.push(cfg.seed);
            let hist_grid = AngularGrid::new(p.hist_bins).map_err(&core)?;
            let by_phase = p.n <= p.max_exported_phases;
            let mut csv = if by_phase {
                let cols: Vec<String> = (1..=p.n).map(|i| format!("theta_{i}")).collect();
                format!("t,{}\n", cols.join(","))
            } else {
                String::from("t,theta,density\n")
            };
            let mut wrapped = true;
            simulate(ens, &controls, &sde, &times, |e| {
                let t = num(e.time);
                wrapped &= e.phases.iter().all(|x| (0.0..TWO_PI).contains(x));
                if by_phase {
                    let row: Vec<String> = e.phases.iter().map(|x| num(*x)).collect();
                    writeln!(csv, "{t},{}", row.join(",")).unwrap();
                } else {
                    let h = empirical_marginal(e, &hist_grid);
                    for (j, v) in h.values.iter().enumerate() {
                        writeln!(csv, "{t},{},{}", num(hist_grid.node(j)), num(*v)).unwrap();
                    }
                }
                Ok(())
            })
            .map_err(&core)?;
            out.write(if by_phase { "phases.csv" } else { "histogram.csv" }, &csv)?;
            report.checks.insert("phases_wrapped".into(), wrapped);
        }
        Subcommand::SolveLiouville => {
            let lp = cfg.liouville.pde(&cfg.model);
            let n = cfg.liouville.n_bodies;
            let q0 = cfg.initial.sample(lp.grid()).map_err(&core)?;
            let states = liouville_solve(&q0, &controls, &lp, n, &times).map_err(&core)?;
            let mf = solve_pde(&q0, &controls, &lp, &times).map_err(&core)?;
            let marginals = Trajectory {
                snapshots: states.iter().map(first_marginal).collect(),
            };
            out.write("marginals.csv", &trajectory_csv(&marginals, "q"))?;
            let mut csv = String::from("t,relative_entropy,l1_marginal_distance\n");
            let mut pinsker = true;
            let (mut drift, mut min): (f64, f64) = (0.0, f64::INFINITY);
            for (s, q) in states.iter().zip(&mf.snapshots) {
                let h = relative_entropy(s, &tensor_power(q, n)).map_err(&core)?;
                let l1 = l1_distance(&first_marginal(s), q).map_err(&core)?;
                pinsker &= 2.0 * h - l1 * l1 >= -1e-8;
                drift = drift.max((s.mass() - 1.0).abs());
                min = min.min(s.min_value());
                writeln!(csv, "{},{},{}", num(s.time), num(h), num(l1)).unwrap();
            }
            out.write("entropy.csv", &csv)?;
            conservation_checks(&mut report, drift, min);
            report.checks.insert("entropy_bounds_l1".into(), pinsker);
        }
        Subcommand::Optimize => {
            let q0 = cfg.initial.sample(pde.grid()).map_err(&core)?;
            let z = cfg.target.build(&cfg.initial, &pde).map_err(&core)?;
            let r = optimize(&q0, &z, &weights, &pde, &controls, &cfg.optimizer).map_err(&core)?;
            write_optimization(out, &mut report, &r)?;
        }
        Subcommand::OptimizeJn => {
            let lp = cfg.liouville.pde(&cfg.model);
            let q0 = cfg.initial.sample(lp.grid()).map_err(&core)?;
            let z = cfg.target.build(&cfg.initial, &lp).map_err(&core)?;
            let r = optimize_jn(&q0, &z, &weights, &lp, cfg.liouville.n_bodies, &controls, &cfg.optimizer)
                .map_err(&core)?;
            write_optimization(out, &mut report, &r)?;
        }
        Subcommand::ChaosStudy => {
            let sde = cfg.model.sde(cfg.particles.interaction_mode);
            let study = cfg.chaos.study(cfg.seed, cfg.model.n_snapshots);
            let r = chaos_rate_study(&cfg.initial, &controls, &sde, &study).map_err(&core)?;
            let mut csv = String::from("N,seed,distance\n");
            for s in &r.samples {
                writeln!(csv, "{},{},{}", s.n, s.seed, num(s.distance)).unwrap();
            }
            out.write("rate.csv", &csv)?;
            report.seeds = r.samples.iter().map(|s| s.seed).collect();
            let slope_ok = (-0.65..=-0.35).contains(&r.fitted_slope);
            let r2_ok = r.fit_r2 >= 0.95;
            report.checks.insert("slope_in_range".into(), slope_ok);
            report.checks.insert("r2_at_least_0_95".into(), r2_ok);
            out.write_json(
                "summary.json",
                &json!({
                    "fitted_slope": r.fitted_slope,
                    "slope_ci": [r.fit.slope_ci.0, r.fit.slope_ci.1],
                    "r2": r.fit_r2,
                    "intercept": r.fit.intercept,
                    "n_values": r.n_values,
                    "distances": r.distances,
                    "seeds_per_point": r.seeds_per_point,
                    "n_theta_hist": r.n_theta_hist,
                    "coarsened": r.coarsened,
                    "bias_floor": r.bias_floor,
                    "flags": { "slope_in_range": slope_ok, "r2_at_least_0_95": r2_ok },
                }),
            )?;
        }
        Subcommand::CkpStudy => {
            let lp = cfg.liouville.pde(&cfg.model);
            let q0 = cfg.initial.sample(lp.grid()).map_err(&core)?;
            let rec = ckp_chain_study(&q0, &controls, &lp, cfg.liouville.n_bodies, &times).map_err(&core)?;
            let mut csv = String::from("t,H,L1,slack\n");
            for r in &rec {
                writeln!(csv, "{},{},{},{}", num(r.t), num(r.relative_entropy), num(r.l1), num(r.slack)).unwrap();
            }
            out.write("ckp.csv", &csv)?;
            let min_slack = rec.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
            let holds = min_slack >= -1e-8;
            report.checks.insert("chain_holds".into(), holds);
            out.write_json(
                "summary.json",
                &json!({ "min_slack": min_slack, "flags": { "chain_holds": holds } }),
            )?;
        }
        Subcommand::WrappedStudy => {
            let w = cfg.wrapped;
            let radius = TWO_PI * w.domain_periods as f64;
            let r = wrapped_consistency_study(gaussian_line_density(w.center, w.sigma), &controls, &pde, radius, &times)
                .map_err(&core)?;
            let mut csv = String::from("t,discrepancy\n");
            for (t, gap) in &r.per_snapshot {
                writeln!(csv, "{},{}", num(*t), num(*gap)).unwrap();
            }
            out.write("wrapped.csv", &csv)?;
            let ok = r.discrepancy <= 1e-4;
            report.checks.insert("discrepancy_at_most_1e-4".into(), ok);
            out.write_json(
                "summary.json",
                &json!({
                    "discrepancy": r.discrepancy,
                    "max_margin_mass": r.max_margin_mass,
                    "n_line_cells": r.n_line_cells,
                    "flags": { "discrepancy_at_most_1e-4": ok },
                }),
            )?;
        }
        Subcommand::GammaStudy => {
            let g = &cfg.gamma;
            let gp = kuramoto_core::PdeParams {
                n_theta: g.n_theta,
                dt: g.dt,
                ..pde
            };
            let pairs = g
                .control_pairs
                .iter()
                .map(|c| c.build(pde.t_final))
                .collect::<kuramoto_core::Result<Vec<ControlField>>>()
                .map_err(&core)?;
            report.control_hashes = pairs.iter().map(control_hash).collect();
            let minimum = if g.minimum.enabled {
                let m = g.minimum;
                let layout = ControlField::zeros(
                    pde.t_final,
                    m.n_intervals,
                    AngularGrid::new(m.control_n_theta).map_err(&core)?,
                    ControlConstraint {
                        sobolev_exponent: cfg.control.sobolev_exponent,
                        bound: cfg.control.bound,
                    },
                )
                .map_err(&core)?;
                Some(MinimumSetup {
                    params: kuramoto_core::PdeParams {
                        n_theta: m.n_theta,
                        dt: m.dt,
                        ..pde
                    },
                    layout,
                    optimizer: kuramoto_core::control::optimize::OptimizerConfig {
                        max_iters: m.max_iters,
                        ..cfg.optimizer
                    },
                })
            } else {
                None
            };
            let study = GammaStudyConfig {
                control_pairs: pairs,
                n_bodies_list: g.n_bodies_list.clone(),
                particle_n_values: g.particle_n_values.clone(),
                seeds_per_point: g.seeds_per_point,
                base_seed: cfg.seed,
                n_theta_hist: g.n_theta_hist,
                particle_snapshots: cfg.model.n_snapshots,
                particle_dt: g.particle_dt,
                reference_n_theta: g.reference_n_theta,
                minimum,
            };
            report.seeds.push(cfg.seed);
            let r = gamma_consistency_study(&cfg.initial, &cfg.target, &weights, &gp, &study).map_err(&core)?;
            let mut csv = String::from("pair,method,N,JN,J,gap\n");
            for rec in &r.records {
                let method = serde_json::to_value(rec.method).expect("enum serializes");
                writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    rec.pair,
                    method.as_str().unwrap_or_default(),
                    rec.n,
                    num(rec.jn),
                    num(rec.j),
                    num(rec.gap)
                )
                .unwrap();
            }
            out.write("gamma.csv", &csv)?;
            report.checks.insert("liouville_gap_decreasing".into(), r.liouville_gap_decreasing);
            report.checks.insert("particle_gap_decreasing".into(), r.particle_gap_decreasing);
            report.checks.insert("min_ordering_holds".into(), r.min_ordering_holds);
            out.write_json(
                "summary.json",
                &json!({
                    "minima": r.minima,
                    "flags": {
                        "liouville_gap_decreasing": r.liouville_gap_decreasing,
                        "particle_gap_decreasing": r.particle_gap_decreasing,
                        "min_ordering_holds": r.min_ordering_holds,
                    },
                }),
            )?;
        }
    }
    Ok(report)
}

/// Full run: output directory, dispatch and an atomically written manifest.
/// Returns the process exit code.
pub fn execute(cfg: &RunConfig) -> Result<i32, CliError> {
    let start = Instant::now();
    let mut out = OutputDir::create(&cfg.output_dir)?;
    let report = run(cfg, &mut out)?;
    let exit_code = if report.stalled { crate::error::EXIT_STALL } else { 0 };
    let manifest = RunManifest {
        artifact: "kuramoto-lab",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: cfg.subcommand.name(),
        config: cfg,
        seeds: &report.seeds,
        control_hashes: &report.control_hashes,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        outputs: out.files(),
        checks: &report.checks,
        exit_code,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    out.write_atomic("manifest.json", &text)?;
    Ok(exit_code)
}
