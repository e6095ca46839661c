//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Each criterion also has a wall-time budget.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kuramoto_core::control::adjoint::cost_and_gradient;
use kuramoto_core::control::adjoint::mean_field_cost;
use kuramoto_core::control::optimize::{optimize, OptimizationResult, OptimizerConfig};
use kuramoto_core::density::DensitySpec;
use kuramoto_core::lab::wrapped::gaussian_line_density;
use kuramoto_core::lab::{
    chaos_rate_study, ckp_chain_study, gamma_consistency_study, wrapped_consistency_study, GammaStudyConfig,
    MinimumSetup, RateStudyConfig, TargetSpec,
};
use kuramoto_core::liouville::{liouville_solve, relative_entropy, tensor_power, TensorDensity};
use kuramoto_core::particles::{
    ensemble_drift, sample_initial, simulate, InteractionMode, ParticleEnsemble, SdeParams,
};
use kuramoto_core::pde::{linear_growth_rate, uniform_times};
use kuramoto_core::{
    solve_pde, AngularGrid, ControlConstraint, ControlField, CostWeights, DensityField, PdeParams, TargetDensity,
    Trajectory,
};

const MASS_DRIFT_LIMIT: f64 = 1e-10;
const MIN_VALUE_LIMIT: f64 = -1e-12;

/// Worst mass drift and smallest value over every grid solve in the run.
struct Conservation {
    drift: f64,
    min: f64,
    runs: usize,
}

thread_local! {
    static CONSERVATION: RefCell<Conservation> = const {
        RefCell::new(Conservation { drift: 0.0, min: f64::INFINITY, runs: 0 })
    };
}

fn record(drift: f64, min: f64) {
    CONSERVATION.with(|c| {
        let mut c = c.borrow_mut();
        c.drift = c.drift.max(drift);
        c.min = c.min.min(min);
        c.runs += 1;
    });
}

fn record_trajectory(t: &Trajectory) {
    let (d, m) = t.conservation_report();
    record(d, m);
}

fn record_tensors(states: &[TensorDensity]) {
    for s in states {
        record((s.mass() - 1.0).abs(), s.min_value());
    }
}

/// Id, name, wall-time budget in seconds and check.
type Criterion = (usize, &'static str, u64, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn controls(t: f64, intervals: usize, angles: usize, u1: f64, u2: f64) -> ControlField {
    ControlField::constant(t, intervals, AngularGrid::new(angles).unwrap(), ControlConstraint::default(), u1, u2)
        .unwrap()
}

fn heat_limit() -> Outcome {
    let p = PdeParams {
        diffusion: 0.5,
        alpha: 0.0,
        dt: 1e-3,
        t_final: 1.0,
        n_theta: 256,
    };
    let q0 = DensityField::cosine(p.grid(), 1.0, 0.0).unwrap();
    let traj = solve_pde(&q0, &controls(1.0, 1, 8, 0.0, 0.0), &p, &[0.0, 1.0]).unwrap();
    record_trajectory(&traj);
    let expected = 0.5 * (-0.5f64).exp();
    let got = traj.last().mode_amplitude(1);
    let rel = (got - expected).abs() / expected;
    Outcome {
        pass: rel <= 1e-3,
        detail: format!("mode-1 amplitude {got:.6e}, expected {expected:.6e}, relative error {rel:.2e}"),
    }
}

fn critical_coupling() -> Outcome {
    let p = PdeParams {
        diffusion: 0.5,
        alpha: 0.0,
        dt: 1e-3,
        t_final: 1.0,
        n_theta: 256,
    };
    let q0 = DensityField::cosine(p.grid(), 0.05, 0.0).unwrap();
    let mut parts = Vec::new();
    let mut pass = true;
    for k in [0.5, 2.0] {
        let traj = solve_pde(&q0, &controls(1.0, 1, 8, 0.0, k), &p, &uniform_times(1.0, 11)).unwrap();
        record_trajectory(&traj);
        let a0 = traj.snapshots[0].mode_amplitude(1);
        let a1 = traj.last().mode_amplitude(1);
        let observed = (a1 / a0).ln();
        let predicted = linear_growth_rate(k, p.diffusion);
        pass &= observed.signum() == predicted.signum();
        parts.push(format!("K={k}: ln(a(1)/a(0)) = {observed:+.4}, linear rate {predicted:+.3}"));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn random_feasible(template: &ControlField, rng: &mut ChaCha8Rng, amp: f64) -> ControlField {
    let grid = *template.grid();
    let mut u = template.clone();
    let n = grid.n_theta();
    for k in 0..u.n_intervals() {
        for ch in kuramoto_core::control::field::CHANNELS {
            let (a, b, c): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
            let s = u.slice_mut(ch, k);
            for (j, v) in s.iter_mut().enumerate() {
                let th = 2.0 * PI * j as f64 / n as f64;
                *v = amp * ((a - 0.5) + (b - 0.5) * (th + 6.0 * c).cos() + 0.5 * (c - 0.5) * (2.0 * th).sin());
            }
        }
    }
    u.project()
}

fn gradient_validity() -> Outcome {
    let p = PdeParams {
        diffusion: 0.3,
        alpha: 0.4,
        dt: 1e-2,
        t_final: 1.0,
        n_theta: 64,
    };
    let q0 = DensityField::cosine(p.grid(), 0.8, 0.5).unwrap();
    let z = TargetDensity::stationary(&DensityField::von_mises(p.grid(), 1.0, 2.0).unwrap());
    let w = CostWeights::default();
    let layout = controls(1.0, 8, 16, 0.0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let eps = 1e-5;
    let mut good = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let u = random_feasible(&layout, &mut rng, 1.0);
        let d = random_feasible(&layout, &mut rng, 1.0);
        let (_, g) = cost_and_gradient(&q0, &u, &z, &w, &p).unwrap();
        let analytic = g.dot(&d);
        let jp = mean_field_cost(&q0, &u.add_scaled(eps, &d), &z, &w, &p).unwrap().total;
        let jm = mean_field_cost(&q0, &u.add_scaled(-eps, &d), &z, &w, &p).unwrap().total;
        let fd = (jp - jm) / (2.0 * eps);
        let rel = (analytic - fd).abs() / fd.abs().max(1e-12);
        worst = worst.max(rel);
        if rel <= 1e-3 {
            good += 1;
        }
    }
    Outcome {
        pass: good >= 19,
        detail: format!("{good}/20 trials within 1e-3, worst relative error {worst:.2e}"),
    }
}

fn non_increasing(r: &OptimizationResult) -> bool {
    r.history.windows(2).all(|w| w[1].cost.total <= w[0].cost.total)
}

fn optimizer_sanity() -> Outcome {
    let p = PdeParams {
        diffusion: 0.5,
        alpha: 0.0,
        dt: 1e-2,
        t_final: 1.0,
        n_theta: 64,
    };
    let cfg = OptimizerConfig::default();
    let w = CostWeights::default();
    let q0_spec = DensitySpec::Cosine {
        amplitude: 0.8,
        phase: 0.0,
    };
    let q0 = q0_spec.sample(p.grid()).unwrap();
    let free = TargetSpec::FreeEvolution.build(&q0_spec, &p).unwrap();
    let start = controls(1.0, 4, 16, 0.5, 0.5);
    let a = optimize(&q0, &free, &w, &p, &start, &cfg).unwrap();
    record_trajectory(&solve_pde(&q0, &a.controls, &p, &uniform_times(1.0, 5)).unwrap());

    let pv = PdeParams { diffusion: 0.1, ..p };
    let uniform = DensityField::uniform(pv.grid());
    let vm = TargetDensity::stationary(&DensityField::von_mises(pv.grid(), 0.0, 2.0).unwrap());
    let zero = controls(1.0, 4, 16, 0.0, 0.0);
    let j0 = mean_field_cost(&uniform, &zero, &vm, &w, &pv).unwrap().total;
    let b = optimize(&uniform, &vm, &w, &pv, &zero, &cfg).unwrap();
    record_trajectory(&solve_pde(&uniform, &b.controls, &pv, &uniform_times(1.0, 5)).unwrap());

    let ja = a.final_cost().total;
    let jb = b.final_cost().total;
    let mono = non_increasing(&a) && non_increasing(&b);
    Outcome {
        pass: ja <= 1e-8 && jb <= 0.5 * j0 && mono,
        detail: format!(
            "(a) J = {ja:.2e} after {} iterations; (b) J = {jb:.4e} vs J(0) = {j0:.4e} (ratio {:.3}); (c) monotone = {mono}",
            a.history.len() - 1,
            jb / j0
        ),
    }
}

fn chaos_rate() -> Outcome {
    let params = SdeParams::default();
    let c = controls(params.t_final, 1, 8, 0.0, 1.0);
    let q0 = DensitySpec::Cosine {
        amplitude: 1.0,
        phase: 0.0,
    };
    let r = chaos_rate_study(&q0, &c, &params, &RateStudyConfig::default()).unwrap();
    let pass = (-0.65..=-0.35).contains(&r.fitted_slope) && r.fit_r2 >= 0.95;
    let dists: Vec<String> = r.distances.iter().map(|d| format!("{d:.3e}")).collect();
    Outcome {
        pass,
        detail: format!(
            "slope {:.3} (95% CI {:.3}..{:.3}), R² {:.4}, {} bins, distances [{}]",
            r.fitted_slope,
            r.fit.slope_ci.0,
            r.fit.slope_ci.1,
            r.fit_r2,
            r.n_theta_hist,
            dists.join(", ")
        ),
    }
}

fn tensorization() -> Outcome {
    let p = PdeParams {
        diffusion: 0.5,
        alpha: 0.3,
        dt: 1e-3,
        t_final: 1.0,
        n_theta: 64,
    };
    let q0 = DensityField::cosine(p.grid(), 0.9, 0.4).unwrap();
    let c = ControlField::from_fn(1.0, 4, AngularGrid::new(16).unwrap(), ControlConstraint::default(), |t, th| {
        (0.8 * (th + t).sin(), 0.0)
    })
    .unwrap();
    let times = uniform_times(1.0, 6);
    let joint = liouville_solve(&q0, &c, &p, 2, &times).unwrap();
    record_tensors(&joint);
    let mf = solve_pde(&q0, &c, &p, &times).unwrap();
    record_trajectory(&mf);
    let mut sup: f64 = 0.0;
    let mut h_max: f64 = 0.0;
    for (s, q) in joint.iter().zip(&mf.snapshots) {
        let prod = tensor_power(q, 2);
        sup = s.values.iter().zip(&prod.values).map(|(a, b)| (a - b).abs()).fold(sup, f64::max);
        h_max = h_max.max(relative_entropy(s, &prod).unwrap());
    }
    Outcome {
        pass: sup <= 1e-6 && h_max <= 1e-8,
        detail: format!("sup |q2 − q⊗q| = {sup:.2e}, max H = {h_max:.2e}"),
    }
}

fn ckp_chain() -> Outcome {
    let p = PdeParams {
        diffusion: 0.5,
        alpha: 0.0,
        dt: 1e-3,
        t_final: 1.0,
        n_theta: 64,
    };
    let q0 = DensityField::cosine(p.grid(), 0.9, 0.0).unwrap();
    let c = controls(1.0, 1, 8, 0.0, 1.0);
    let times = uniform_times(1.0, 11);
    record_tensors(&liouville_solve(&q0, &c, &p, 2, &times).unwrap());
    let rec = ckp_chain_study(&q0, &c, &p, 2, &times).unwrap();
    let worst = rec.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
    let last = rec.last().unwrap();
    Outcome {
        pass: worst >= -1e-8,
        detail: format!(
            "min slack {worst:.3e} over {} snapshots; at T: H = {:.3e}, L1 = {:.3e}",
            rec.len(),
            last.relative_entropy,
            last.l1
        ),
    }
}

fn wrapped_equivalence() -> Outcome {
    let run = |n, dt| {
        let p = PdeParams {
            diffusion: 0.5,
            alpha: 0.0,
            dt,
            t_final: 0.5,
            n_theta: n,
        };
        wrapped_consistency_study(
            gaussian_line_density(PI, 0.5),
            &controls(0.5, 1, 8, 0.3, 0.5),
            &p,
            8.0 * PI,
            &uniform_times(0.5, 6),
        )
        .unwrap()
    };
    let coarse = run(128, 2e-3);
    let fine = run(256, 1e-3);
    let ratio = coarse.discrepancy / fine.discrepancy;
    Outcome {
        pass: fine.discrepancy <= 1e-4 && ratio >= 2.0,
        detail: format!(
            "L∞ gap {:.3e} at (256, 1e-3), {:.3e} at (128, 2e-3), ratio {ratio:.2}, margin mass {:.1e}",
            fine.discrepancy, coarse.discrepancy, fine.max_margin_mass
        ),
    }
}

fn gamma_consistency() -> Outcome {
    let p = PdeParams {
        diffusion: 0.5,
        alpha: 0.0,
        dt: 1e-2,
        t_final: 0.5,
        n_theta: 32,
    };
    let g = AngularGrid::new(8).unwrap();
    let pairs = vec![
        controls(0.5, 1, 8, 0.0, 1.0),
        ControlField::from_fn(0.5, 1, g, ControlConstraint::default(), |_, th| (0.0, 1.5 + 0.5 * th.cos())).unwrap(),
        ControlField::from_fn(0.5, 2, g, ControlConstraint::default(), |t, _| (0.5, 1.0 + t)).unwrap(),
    ];
    let coarse = PdeParams {
        n_theta: 16,
        dt: 2e-2,
        ..p
    };
    let cfg = GammaStudyConfig {
        control_pairs: pairs,
        n_bodies_list: vec![2, 3],
        particle_n_values: vec![1000, 10_000, 100_000],
        seeds_per_point: 20,
        base_seed: 17,
        n_theta_hist: 16,
        particle_snapshots: 11,
        particle_dt: 1e-3,
        reference_n_theta: 1024,
        minimum: Some(MinimumSetup {
            params: coarse,
            layout: controls(0.5, 2, 4, 0.0, 0.0),
            optimizer: OptimizerConfig {
                max_iters: 25,
                ..OptimizerConfig::default()
            },
        }),
    };
    let q0 = DensitySpec::Cosine {
        amplitude: 0.8,
        phase: 0.0,
    };
    let z = TargetSpec::Stationary {
        density: DensitySpec::VonMises { mu: 1.0, kappa: 2.0 },
    };
    let r = gamma_consistency_study(&q0, &z, &CostWeights::default(), &p, &cfg).unwrap();
    let gaps: Vec<String> = r
        .records
        .iter()
        .map(|g| format!("{:?}/{}/N={}: {:.2e}", g.method, g.pair, g.n, g.gap))
        .collect();
    let mf_min = r.minima.iter().find(|m| m.n_bodies.is_none()).map_or(f64::NAN, |m| m.min_value);
    Outcome {
        pass: r.liouville_gap_decreasing && r.particle_gap_decreasing && r.min_ordering_holds,
        detail: format!(
            "liouville decreasing = {}, particles decreasing = {}, min J = {mf_min:.4e} ordering = {}; gaps [{}]",
            r.liouville_gap_decreasing,
            r.particle_gap_decreasing,
            r.min_ordering_holds,
            gaps.join(", ")
        ),
    }
}

fn time_per_particle_step(n: usize) -> f64 {
    let g = AngularGrid::new(64).unwrap();
    let q0 = DensityField::uniform(g);
    let params = SdeParams {
        t_final: 0.1,
        ..SdeParams::default()
    };
    let c = controls(0.1, 1, 8, 0.2, 1.0);
    let mut best = Duration::MAX;
    for rep in 0..3 {
        let ens = sample_initial(&q0, n, rep).unwrap();
        let start = Instant::now();
        let out = simulate(ens, &c, &params, &[], |_| Ok(())).unwrap();
        best = best.min(start.elapsed());
        assert_eq!(out.steps_taken as usize, params.n_steps());
    }
    best.as_secs_f64() / (n * params.n_steps()) as f64
}

fn drift_modes_and_scaling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..400);
        let m = 4 * rng.random_range(1..9);
        let g = AngularGrid::new(m).unwrap();
        let ens = ParticleEnsemble::new((0..n).map(|_| rng.random::<f64>() * 2.0 * PI).collect(), 0).unwrap();
        let u1: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let u2: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
        let alpha = rng.random_range(-PI..PI);
        let a = ensemble_drift(&ens, &u1, &u2, &g, alpha, InteractionMode::Pairwise).unwrap();
        let b = ensemble_drift(&ens, &u1, &u2, &g, alpha, InteractionMode::OrderParameter).unwrap();
        worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(worst, f64::max);
    }
    time_per_particle_step(1000);
    let small = time_per_particle_step(10_000);
    let large = time_per_particle_step(100_000);
    let ratio = large / small;
    Outcome {
        pass: worst <= 1e-12 && (0.8..=1.2).contains(&ratio),
        detail: format!(
            "max drift difference {worst:.2e}; {:.1} ns vs {:.1} ns per particle-step at N = 1e4, 1e5 (ratio {ratio:.3})",
            small * 1e9,
            large * 1e9
        ),
    }
}

fn conservation() -> Outcome {
    CONSERVATION.with(|c| {
        let c = c.borrow();
        Outcome {
            pass: c.runs > 0 && c.drift <= MASS_DRIFT_LIMIT && c.min >= MIN_VALUE_LIMIT,
            detail: format!("{} snapshots checked: max mass drift {:.2e}, min value {:.2e}", c.runs, c.drift, c.min),
        }
    })
}

fn main() {
    // conservation is checked last, over every grid solve made by the others
    let criteria: [Criterion; 11] = [
        (1, "heat-limit accuracy", 5, heat_limit),
        (3, "critical coupling", 10, critical_coupling),
        (4, "gradient validity", 120, gradient_validity),
        (5, "optimizer sanity", 300, optimizer_sanity),
        (6, "propagation-of-chaos rate", 600, chaos_rate),
        (7, "tensorization", 120, tensorization),
        (8, "entropy chain", 120, ckp_chain),
        (9, "wrapped equivalence", 60, wrapped_equivalence),
        (10, "gamma consistency", 900, gamma_consistency),
        (11, "drift modes and linear scaling", 120, drift_modes_and_scaling),
        (2, "conservation", 1, conservation),
    ];
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failures = 0;
    for (id, name, budget, run) in criteria {
        if let Some(ids) = &only {
            if !ids.contains(&id) {
                continue;
            }
        }
        let start = Instant::now();
        let out = run();
        let secs = start.elapsed().as_secs_f64();
        let in_budget = secs < budget as f64;
        let pass = out.pass && in_budget;
        if !pass {
            failures += 1;
        }
        println!(
            "{} [{id:>2}] {name}: {} ({secs:.2} s, budget {budget} s{})",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            if in_budget { "" } else { ", over budget" }
        );
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
