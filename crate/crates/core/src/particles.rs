//! Euler–Maruyama simulation of N coupled oscillators on the circle
//!
//! dθ_i = u₁(t,θ_i) dt + u₂(t,θ_i)/N Σ_j sin(θ_j − θ_i − α) dt + √(2D) dW_i,
//!
//! with every phase kept in [0, 2π). The sum includes j = i.
//!
//! Noise is counter based: the normals for step `s` and particle chunk `c`
//! come from a ChaCha stream selected by (s, c) under the run seed, so a
//! trajectory depends only on the seed and never on evaluation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::circle::{wrap_finite, AngularGrid};
use crate::control::field::{Channel, ControlField};
use crate::density::DensityField;
use crate::error::{Error, Result};
use crate::pde::Trajectory;

/// Particles per noise substream.
const NOISE_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionMode {
    /// Direct O(N²) double sum.
    Pairwise,
    /// O(N) evaluation through the empirical order parameter.
    OrderParameter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdeParams {
    pub diffusion: f64,
    pub alpha: f64,
    pub dt: f64,
    pub t_final: f64,
    pub interaction_mode: InteractionMode,
}

impl Default for SdeParams {
    fn default() -> Self {
        Self {
            diffusion: 0.5,
            alpha: 0.0,
            dt: 1e-3,
            t_final: 1.0,
            interaction_mode: InteractionMode::OrderParameter,
        }
    }
}

impl SdeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_final > 0.0) {
            return Err(Error::Config("dt and t_final must be > 0".into()));
        }
        if !(self.diffusion >= 0.0) || !self.diffusion.is_finite() || !self.alpha.is_finite() {
            return Err(Error::Config("diffusion must be >= 0 and alpha finite".into()));
        }
        let steps = self.t_final / self.dt;
        if (steps - steps.round()).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "t_final = {} is not an integer multiple of dt = {}",
                self.t_final, self.dt
            )));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// N phases plus the counters that select the next noise stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleEnsemble {
    pub phases: Vec<f64>,
    pub seed: u64,
    /// Number of steps taken, which selects the next noise stream.
    pub steps_taken: u64,
    pub time: f64,
}

impl ParticleEnsemble {
    /// Ensemble at t = 0 from given phases, wrapped into [0, 2π).
    pub fn new(phases: Vec<f64>, seed: u64) -> Result<Self> {
        if phases.is_empty() {
            return Err(Error::Usage("particle count must be positive".into()));
        }
        if phases.iter().any(|t| !t.is_finite()) {
            return Err(Error::Domain("particle phases must be finite".into()));
        }
        let phases = phases.into_iter().map(wrap_finite).collect();
        Ok(Self {
            phases,
            seed,
            steps_taken: 0,
            time: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    /// Empirical order parameter (1/N) Σ e^{iθ_j} as (re, im).
    pub fn order_parameter(&self) -> (f64, f64) {
        let (mut re, mut im) = (0.0, 0.0);
        for &t in &self.phases {
            let (s, c) = t.sin_cos();
            re += c;
            im += s;
        }
        let n = self.phases.len() as f64;
        (re / n, im / n)
    }
}

fn noise_rng(seed: u64, step: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((step + 1) << 24) | chunk as u64);
    rng
}

/// N i.i.d. draws from the piecewise-constant density `q0` by inverse CDF.
pub fn sample_initial(q0: &DensityField, n: usize, seed: u64) -> Result<ParticleEnsemble> {
    if n == 0 {
        return Err(Error::Usage("particle count must be positive".into()));
    }
    if q0.min_value() < 0.0 || (q0.mass() - 1.0).abs() > 1e-10 {
        return Err(Error::Domain("initial density must be nonnegative with unit mass".into()));
    }
    let h = q0.grid.cell_width();
    let mut cdf = Vec::with_capacity(q0.values.len());
    let mut acc = 0.0;
    for v in &q0.values {
        acc += v * h;
        cdf.push(acc);
    }
    let total = acc;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases = (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * total;
            let k = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
            let below = if k == 0 { 0.0 } else { cdf[k - 1] };
            let cell_mass = q0.values[k] * h;
            let frac = if cell_mass > 0.0 {
                ((u - below) / cell_mass).clamp(0.0, 1.0)
            } else {
                0.5
            };
            wrap_finite(q0.grid.node(k) - 0.5 * h + frac * h)
        })
        .collect();
    Ok(ParticleEnsemble {
        phases,
        seed,
        steps_taken: 0,
        time: 0.0,
    })
}

/// Drift u₁(θ_i) + u₂(θ_i)/N Σ_j sin(θ_j − θ_i − α) for every particle, with
/// controls given as nodal values on `control_grid`.
pub fn ensemble_drift(
    ensemble: &ParticleEnsemble,
    u1: &[f64],
    u2: &[f64],
    control_grid: &AngularGrid,
    alpha: f64,
    mode: InteractionMode,
) -> Result<Vec<f64>> {
    control_grid.check_len(u1, "u1")?;
    control_grid.check_len(u2, "u2")?;
    let mut out = vec![0.0; ensemble.len()];
    fill_drift(&ensemble.phases, u1, u2, control_grid, alpha, mode, &mut out, &mut Vec::new());
    Ok(out)
}

fn fill_drift(
    phases: &[f64],
    u1: &[f64],
    u2: &[f64],
    control_grid: &AngularGrid,
    alpha: f64,
    mode: InteractionMode,
    out: &mut [f64],
    trig: &mut Vec<(f64, f64)>,
) {
    let n = phases.len() as f64;
    match mode {
        InteractionMode::Pairwise => {
            for (o, &ti) in out.iter_mut().zip(phases) {
                let sum: f64 = phases.iter().map(|&tj| (tj - ti - alpha).sin()).sum();
                let st = control_grid.stencil(ti);
                *o = st.apply(u1) + st.apply(u2) * sum / n;
            }
        }
        InteractionMode::OrderParameter => {
            trig.clear();
            trig.extend(phases.iter().map(|t| t.sin_cos()));
            let (mut re, mut im) = (0.0, 0.0);
            for &(s, c) in trig.iter() {
                re += c;
                im += s;
            }
            // c = Ẑ e^{−iα};  Im(c e^{−iθ}) = c_im cos θ − c_re sin θ
            let (sa, ca) = alpha.sin_cos();
            let cr = (re * ca + im * sa) / n;
            let ci = (im * ca - re * sa) / n;
            for ((o, &t), &(s, c)) in out.iter_mut().zip(phases).zip(trig.iter()) {
                let st = control_grid.stencil(t);
                *o = st.apply(u1) + st.apply(u2) * (ci * c - cr * s);
            }
        }
    }
}

/// One Euler–Maruyama step with caller-supplied standard normals.
pub fn step_with_noise(
    ensemble: &mut ParticleEnsemble,
    u1: &[f64],
    u2: &[f64],
    control_grid: &AngularGrid,
    params: &SdeParams,
    noise: &[f64],
) -> Result<()> {
    if noise.len() != ensemble.len() {
        return Err(Error::Usage(format!(
            "{} noise values for {} particles",
            noise.len(),
            ensemble.len()
        )));
    }
    let drift = ensemble_drift(ensemble, u1, u2, control_grid, params.alpha, params.interaction_mode)?;
    let sigma = (2.0 * params.diffusion * params.dt).sqrt();
    for ((t, d), xi) in ensemble.phases.iter_mut().zip(&drift).zip(noise) {
        *t = wrap_finite(*t + d * params.dt + sigma * xi);
    }
    ensemble.steps_taken += 1;
    ensemble.time += params.dt;
    Ok(())
}

/// Standard normals the seeded stream would feed to the next step.
pub fn step_noise(ensemble: &ParticleEnsemble) -> Vec<f64> {
    let mut out = vec![0.0; ensemble.len()];
    fill_noise(ensemble.seed, ensemble.steps_taken, &mut out);
    out
}

fn fill_noise(seed: u64, step: u64, out: &mut [f64]) {
    for (c, chunk) in out.chunks_mut(NOISE_CHUNK).enumerate() {
        let mut rng = noise_rng(seed, step, c);
        for x in chunk {
            *x = rng.sample(StandardNormal);
        }
    }
}

/// Reusable buffers for repeated stepping.
#[derive(Debug, Default)]
struct StepBuffers {
    drift: Vec<f64>,
    noise: Vec<f64>,
    trig: Vec<(f64, f64)>,
}

fn step_buffered(
    ensemble: &mut ParticleEnsemble,
    u1: &[f64],
    u2: &[f64],
    control_grid: &AngularGrid,
    params: &SdeParams,
    buf: &mut StepBuffers,
) {
    let n = ensemble.len();
    buf.drift.resize(n, 0.0);
    buf.noise.resize(n, 0.0);
    fill_drift(
        &ensemble.phases,
        u1,
        u2,
        control_grid,
        params.alpha,
        params.interaction_mode,
        &mut buf.drift,
        &mut buf.trig,
    );
    let sigma = (2.0 * params.diffusion * params.dt).sqrt();
    if sigma > 0.0 {
        fill_noise(ensemble.seed, ensemble.steps_taken, &mut buf.noise);
    } else {
        buf.noise.fill(0.0);
    }
    for ((t, d), xi) in ensemble.phases.iter_mut().zip(&buf.drift).zip(&buf.noise) {
        *t = wrap_finite(*t + d * params.dt + sigma * xi);
    }
    ensemble.steps_taken += 1;
    ensemble.time += params.dt;
}

/// One Euler–Maruyama step with noise from the ensemble's seeded stream.
pub fn sde_step(
    ensemble: &mut ParticleEnsemble,
    u1: &[f64],
    u2: &[f64],
    control_grid: &AngularGrid,
    params: &SdeParams,
) -> Result<()> {
    control_grid.check_len(u1, "u1")?;
    control_grid.check_len(u2, "u2")?;
    step_buffered(ensemble, u1, u2, control_grid, params, &mut StepBuffers::default());
    Ok(())
}

/// Runs from `ensemble` to T under `controls`, calling `observe` at the
/// steps nearest to each of `snapshot_times` (given in increasing order).
pub fn simulate(
    mut ensemble: ParticleEnsemble,
    controls: &ControlField,
    params: &SdeParams,
    snapshot_times: &[f64],
    mut observe: impl FnMut(&ParticleEnsemble) -> Result<()>,
) -> Result<ParticleEnsemble> {
    params.validate()?;
    controls.check_horizon(params.t_final)?;
    let n_steps = params.n_steps();
    let mut steps = Vec::with_capacity(snapshot_times.len());
    for &t in snapshot_times {
        if !(t >= -1e-12 && t <= params.t_final + 1e-12) {
            return Err(Error::Usage(format!("snapshot time {t} outside [0, {}]", params.t_final)));
        }
        steps.push(((t / params.dt).round() as usize).min(n_steps));
    }
    if steps.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Usage("snapshot times must be increasing".into()));
    }
    let grid = *controls.grid();
    let mut buf = StepBuffers::default();
    let mut next = 0;
    for n in 0..=n_steps {
        if n > 0 {
            let k = controls.interval_at((n as f64 - 0.5) * params.dt);
            step_buffered(
                &mut ensemble,
                controls.slice(Channel::U1, k),
                controls.slice(Channel::U2, k),
                &grid,
                params,
                &mut buf,
            );
        }
        while next < steps.len() && steps[next] == n {
            observe(&ensemble)?;
            next += 1;
        }
    }
    Ok(ensemble)
}

/// Histogram estimate of the first marginal: count / (N · h).
pub fn empirical_marginal(ensemble: &ParticleEnsemble, grid: &AngularGrid) -> DensityField {
    let mut counts = vec![0u64; grid.n_theta()];
    for &t in &ensemble.phases {
        counts[grid.cell_of(t)] += 1;
    }
    let scale = 1.0 / (ensemble.len() as f64 * grid.cell_width());
    DensityField {
        grid: *grid,
        values: counts.iter().map(|&c| c as f64 * scale).collect(),
        time: ensemble.time,
    }
}

/// Histogram smoothed by a wrapped von Mises kernel of concentration `kappa`.
pub fn kde_marginal(ensemble: &ParticleEnsemble, grid: &AngularGrid, kappa: f64) -> Result<DensityField> {
    if !(kappa > 0.0) {
        return Err(Error::Config(format!("kde kappa must be > 0, got {kappa}")));
    }
    let hist = empirical_marginal(ensemble, grid);
    let n = grid.n_theta();
    let kernel = DensityField::von_mises(*grid, 0.0, kappa)?.values;
    let h = grid.cell_width();
    let values = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| hist.values[j] * kernel[(i + n - j) % n])
                .sum::<f64>()
                * h
        })
        .collect();
    Ok(DensityField {
        grid: *grid,
        values,
        time: ensemble.time,
    })
}

/// Histogram marginals of a run from q₀ at the requested snapshot times.
pub fn simulate_marginals(
    q0: &DensityField,
    n_particles: usize,
    seed: u64,
    controls: &ControlField,
    params: &SdeParams,
    snapshot_times: &[f64],
    hist_grid: &AngularGrid,
) -> Result<Trajectory> {
    let ens = sample_initial(q0, n_particles, seed)?;
    let mut snapshots = Vec::with_capacity(snapshot_times.len());
    simulate(ens, controls, params, snapshot_times, |e| {
        snapshots.push(empirical_marginal(e, hist_grid));
        Ok(())
    })?;
    Ok(Trajectory { snapshots })
}
