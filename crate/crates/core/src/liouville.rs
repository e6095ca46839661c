//! Tensor-grid solver for the N-body Liouville equation on (S¹)^N, N ∈ {2, 3}
//!
//! ∂_t q^N − D Σ_i ∂²_i q^N + Σ_i ∂_i(q^N v_i) = 0,
//! v_i(θ) = u₁(θ_i) + u₂(θ_i)/N Σ_j sin(θ_j − θ_i − α),
//!
//! plus marginals, the tensorized law q^{⊗N} and the rescaled relative
//! entropy between them.
//!
//! One step is the 1-D split step lifted axis by axis: implicit diffusion
//! half-steps along every axis, then upwind advection sweeps along each
//! axis in turn. The advection part is averaged over every axis ordering,
//! which keeps exchangeable data exactly exchangeable and makes uncoupled
//! dynamics (u₂ ≡ 0) reproduce the tensor power of the 1-D scheme.

use serde::{Deserialize, Serialize};

use crate::circle::AngularGrid;
use crate::control::cost::{tracking_terms, CostBreakdown, CostWeights, TargetDensity};
use crate::control::field::{Channel, ControlField};
use crate::density::{clamp_roundoff_negatives, DensityField};
use crate::error::{Error, Result};
use crate::pde::scheme::{check_cfl, upwind_update, CyclicTridiagonal};
use crate::pde::{check_initial, LiftedControls, PdeParams, Trajectory};

/// Floor applied inside the logarithm when the reference underflows.
pub const ENTROPY_FLOOR: f64 = 1e-30;

/// Solver parameters for a Liouville run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiouvilleParams {
    pub pde: PdeParams,
    pub n_bodies: usize,
}

impl LiouvilleParams {
    pub fn new(pde: PdeParams, n_bodies: usize) -> Result<Self> {
        if !(2..=3).contains(&n_bodies) {
            return Err(Error::Unsupported(format!(
                "Liouville solves support 2 or 3 bodies, got {n_bodies}"
            )));
        }
        pde.validate()?;
        Ok(Self { pde, n_bodies })
    }
}

/// Density on (S¹)^d stored row-major, axis 0 slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorDensity {
    pub n_axes: usize,
    pub grid: AngularGrid,
    pub values: Vec<f64>,
    pub time: f64,
}

impl TensorDensity {
    pub fn new(n_axes: usize, grid: AngularGrid, values: Vec<f64>, time: f64) -> Result<Self> {
        let expected = grid.n_theta().pow(n_axes as u32);
        if values.len() != expected {
            return Err(Error::Usage(format!(
                "{n_axes}-axis tensor on {} cells needs {expected} values, got {}",
                grid.n_theta(),
                values.len()
            )));
        }
        Ok(Self {
            n_axes,
            grid,
            values,
            time,
        })
    }

    pub fn cell_measure(&self) -> f64 {
        self.grid.cell_width().powi(self.n_axes as i32)
    }

    pub fn mass(&self) -> f64 {
        self.cell_measure() * self.values.iter().sum::<f64>()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let n = self.grid.n_theta();
        idx.iter().fold(0, |acc, &i| acc * n + i)
    }

    pub fn at(&self, idx: &[usize]) -> f64 {
        self.values[self.flat_index(idx)]
    }

    fn multi_index(&self, mut flat: usize, out: &mut [usize]) {
        let n = self.grid.n_theta();
        for slot in out.iter_mut().rev() {
            *slot = flat % n;
            flat /= n;
        }
    }

    /// max |q(…θ_a…θ_b…) − q(…θ_b…θ_a…)| over all axis transpositions.
    pub fn transposition_residual(&self) -> f64 {
        let d = self.n_axes;
        let mut idx = vec![0; d];
        let mut worst: f64 = 0.0;
        for flat in 0..self.values.len() {
            self.multi_index(flat, &mut idx);
            for a in 0..d {
                for b in a + 1..d {
                    idx.swap(a, b);
                    let other = self.values[self.flat_index(&idx)];
                    idx.swap(a, b);
                    worst = worst.max((self.values[flat] - other).abs());
                }
            }
        }
        worst
    }

    /// Integrates out the trailing axes down to `keep` leading axes.
    pub fn marginal(&self, keep: usize) -> Result<TensorDensity> {
        if keep == 0 || keep > self.n_axes {
            return Err(Error::Usage(format!(
                "cannot keep {keep} of {} axes",
                self.n_axes
            )));
        }
        let n = self.grid.n_theta();
        let block = n.pow((self.n_axes - keep) as u32);
        let w = self.grid.cell_width().powi((self.n_axes - keep) as i32);
        let values = self
            .values
            .chunks(block)
            .map(|c| c.iter().sum::<f64>() * w)
            .collect();
        Ok(TensorDensity {
            n_axes: keep,
            grid: self.grid,
            values,
            time: self.time,
        })
    }
}

/// Marginals q^{N;1}, q^{N;2} and (for N = 3) q^{N;3} of one state.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalSet {
    pub n_bodies: usize,
    pub first: DensityField,
    pub second: TensorDensity,
    pub third: Option<TensorDensity>,
}

impl MarginalSet {
    pub fn of(state: &TensorDensity) -> Result<Self> {
        if state.n_axes < 2 {
            return Err(Error::Usage("marginal sets need at least two axes".into()));
        }
        Ok(Self {
            n_bodies: state.n_axes,
            first: first_marginal(state),
            second: state.marginal(2)?,
            third: (state.n_axes == 3).then(|| state.clone()),
        })
    }

    pub fn time(&self) -> f64 {
        self.first.time
    }
}

/// q^{N;1}: all axes but the first integrated out.
pub fn first_marginal(state: &TensorDensity) -> DensityField {
    let m = state.marginal(1).expect("one axis is always available");
    DensityField {
        grid: m.grid,
        values: m.values,
        time: m.time,
    }
}

/// q^{⊗N} of one density.
pub fn tensor_power(q: &DensityField, n_axes: usize) -> TensorDensity {
    let mut values = vec![1.0];
    for _ in 0..n_axes {
        values = values
            .iter()
            .flat_map(|&a| q.values.iter().map(move |&b| a * b))
            .collect();
    }
    TensorDensity {
        n_axes,
        grid: q.grid,
        values,
        time: q.time,
    }
}

/// Tensorized law of every snapshot of a 1-D trajectory.
pub fn tensorized_law(q_traj: &Trajectory, n_bodies: usize) -> Result<Vec<TensorDensity>> {
    if !(1..=3).contains(&n_bodies) {
        return Err(Error::Unsupported(format!("tensor power {n_bodies} is not supported")));
    }
    for s in &q_traj.snapshots {
        if (s.mass() - 1.0).abs() > 1e-10 {
            return Err(Error::Domain(format!("snapshot at t = {} lacks unit mass", s.time)));
        }
    }
    Ok(q_traj
        .snapshots
        .iter()
        .map(|q| tensor_power(q, n_bodies))
        .collect())
}

/// ℋ(P | Q) = (1/N) ∫ P log(P/Q), with 0·log 0 = 0. Returns +∞ if Q
/// vanishes where P does not.
pub fn relative_entropy(q_n: &TensorDensity, q_tensor: &TensorDensity) -> Result<f64> {
    if q_n.n_axes != q_tensor.n_axes || q_n.grid != q_tensor.grid {
        return Err(Error::Usage("relative entropy needs tensors of the same shape".into()));
    }
    let mut acc = 0.0;
    for (&p, &q) in q_n.values.iter().zip(&q_tensor.values) {
        if p <= 0.0 {
            continue;
        }
        if q <= 0.0 {
            return Ok(f64::INFINITY);
        }
        acc += p * (p / q.max(ENTROPY_FLOOR)).ln();
    }
    let h = acc * q_n.cell_measure() / q_n.n_axes as f64;
    if (-1e-12..0.0).contains(&h) {
        return Ok(0.0);
    }
    Ok(h)
}

/// Stepper holding lifted controls and cached face velocities.
struct TensorStepper {
    n: usize,
    d: usize,
    h: f64,
    dt: f64,
    diffusion: CyclicTridiagonal,
    lifted: LiftedControls,
    /// sin(θ_l − θ_k − α) at [k·n + l].
    coupling: Vec<f64>,
    cached_interval: Option<usize>,
    /// Right-face velocity of every cell, one array per axis.
    face: Vec<Vec<f64>>,
    max_speed: f64,
    line_q: Vec<f64>,
    line_v: Vec<f64>,
    line_out: Vec<f64>,
    work: Vec<Vec<f64>>,
    acc: Vec<f64>,
}

impl TensorStepper {
    fn new(controls: &ControlField, lp: &LiouvilleParams) -> Result<Self> {
        let grid = lp.pde.grid();
        let n = grid.n_theta();
        let d = lp.n_bodies;
        let nodes = grid.nodes();
        let lifted = LiftedControls::new(controls, &nodes, &lp.pde)?;
        let mut coupling = vec![0.0; n * n];
        for k in 0..n {
            for l in 0..n {
                coupling[k * n + l] = (nodes[l] - nodes[k] - lp.pde.alpha).sin();
            }
        }
        let len = n.pow(d as u32);
        Ok(Self {
            n,
            d,
            h: grid.cell_width(),
            dt: lp.pde.dt,
            diffusion: CyclicTridiagonal::new(n, 0.5 * lp.pde.diffusion * lp.pde.dt, grid.cell_width()),
            lifted,
            coupling,
            cached_interval: None,
            face: vec![vec![0.0; len]; d],
            max_speed: 0.0,
            line_q: vec![0.0; n],
            line_v: vec![0.0; n],
            line_out: vec![0.0; n],
            work: vec![vec![0.0; len]; d],
            acc: vec![0.0; len],
        })
    }

    fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.d - 1 - axis) as u32)
    }

    fn prepare(&mut self, interval: usize) {
        if self.cached_interval == Some(interval) {
            return;
        }
        let (n, d) = (self.n, self.d);
        let u1 = &self.lifted.u1[interval];
        let u2 = &self.lifted.u2[interval];
        let len = n.pow(d as u32);
        let mut idx = vec![0usize; d];
        let mut cell_v = vec![vec![0.0; len]; d];
        let mut vmax: f64 = 0.0;
        for flat in 0..len {
            let mut r = flat;
            for slot in idx.iter_mut().rev() {
                *slot = r % n;
                r /= n;
            }
            for a in 0..d {
                let ka = idx[a];
                let s: f64 = idx.iter().map(|&kj| self.coupling[ka * n + kj]).sum();
                let v = u1[ka] + u2[ka] * s / d as f64;
                cell_v[a][flat] = v;
                vmax = vmax.max(v.abs());
            }
        }
        for a in 0..d {
            let st = self.stride(a);
            for flat in 0..len {
                let c = (flat / st) % n;
                let next = if c + 1 == n { flat + st - n * st } else { flat + st };
                self.face[a][flat] = 0.5 * (cell_v[a][flat] + cell_v[a][next]);
            }
        }
        self.max_speed = vmax;
        self.cached_interval = Some(interval);
    }

    fn for_lines(
        n: usize,
        len: usize,
        stride: usize,
        mut f: impl FnMut(usize),
    ) {
        let block = n * stride;
        for outer in (0..len).step_by(block) {
            for inner in 0..stride {
                f(outer + inner);
            }
        }
    }

    fn diffuse(&mut self, q: &mut [f64]) {
        let (n, len) = (self.n, q.len());
        for a in 0..self.d {
            let st = self.stride(a);
            let line = &mut self.line_q;
            let solver = &self.diffusion;
            Self::for_lines(n, len, st, |base| {
                for c in 0..n {
                    line[c] = q[base + c * st];
                }
                solver.solve_in_place(line);
                for c in 0..n {
                    q[base + c * st] = line[c];
                }
            });
        }
    }

    fn sweep(&mut self, axis: usize, src: &[f64], dst: &mut [f64]) {
        let (n, len) = (self.n, src.len());
        let st = self.stride(axis);
        let courant = self.dt / self.h;
        let face = &self.face[axis];
        let (lq, lv, lo) = (&mut self.line_q, &mut self.line_v, &mut self.line_out);
        Self::for_lines(n, len, st, |base| {
            for c in 0..n {
                lq[c] = src[base + c * st];
                lv[c] = face[base + c * st];
            }
            upwind_update(lq, lv, courant, lo);
            for c in 0..n {
                dst[base + c * st] = lo[c];
            }
        });
    }

    /// Averages the sequential sweeps over every axis ordering into `acc`.
    fn advect(&mut self, q: &mut [f64]) {
        self.acc.fill(0.0);
        let mut orders: Vec<Vec<usize>> = Vec::new();
        permutations(self.d, &mut Vec::new(), &mut orders);
        let weight = 1.0 / orders.len() as f64;
        let mut last_prefix: Vec<usize> = Vec::new();
        for order in &orders {
            // reuse the longest shared prefix
            let shared = last_prefix
                .iter()
                .zip(order)
                .take_while(|(a, b)| a == b)
                .count()
                .min(self.d - 1);
            for level in shared..self.d {
                let axis = order[level];
                let mut dst = std::mem::take(&mut self.work[level]);
                if level == 0 {
                    self.sweep(axis, q, &mut dst);
                } else {
                    let src = std::mem::take(&mut self.work[level - 1]);
                    self.sweep(axis, &src, &mut dst);
                    self.work[level - 1] = src;
                }
                self.work[level] = dst;
            }
            for (a, v) in self.acc.iter_mut().zip(&self.work[self.d - 1]) {
                *a += weight * v;
            }
            last_prefix.clone_from(order);
        }
        q.copy_from_slice(&self.acc);
    }

    fn step(&mut self, q: &mut [f64], step: usize) -> Result<()> {
        self.prepare(self.lifted.step_interval[step]);
        check_cfl(self.max_speed, self.h, self.dt)?;
        self.diffuse(q);
        self.advect(q);
        self.diffuse(q);
        clamp_roundoff_negatives(q, self.h.powi(self.d as i32))
    }
}

fn permutations(d: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if prefix.len() == d {
        out.push(prefix.clone());
        return;
    }
    for a in 0..d {
        if !prefix.contains(&a) {
            prefix.push(a);
            permutations(d, prefix, out);
            prefix.pop();
        }
    }
}

/// Runs the Liouville solve from q₀^{⊗N}, calling `observe` after every
/// step (and once at t = 0).
pub fn liouville_run(
    q0: &DensityField,
    controls: &ControlField,
    lp: &LiouvilleParams,
    mut observe: impl FnMut(usize, &TensorDensity) -> Result<()>,
) -> Result<TensorDensity> {
    check_initial(q0, &lp.pde)?;
    let mut stepper = TensorStepper::new(controls, lp)?;
    let mut state = tensor_power(q0, lp.n_bodies);
    state.time = 0.0;
    observe(0, &state)?;
    for n in 0..lp.pde.n_steps() {
        stepper.step(&mut state.values, n)?;
        state.time = (n + 1) as f64 * lp.pde.dt;
        observe(n + 1, &state)?;
    }
    Ok(state)
}

/// Tensor states at the steps nearest to `snapshot_times`.
pub fn liouville_solve(
    q0: &DensityField,
    controls: &ControlField,
    params: &PdeParams,
    n_bodies: usize,
    snapshot_times: &[f64],
) -> Result<Vec<TensorDensity>> {
    let lp = LiouvilleParams::new(*params, n_bodies)?;
    let steps = snapshot_times
        .iter()
        .map(|&t| params.step_of(t))
        .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<Option<TensorDensity>> = vec![None; steps.len()];
    liouville_run(q0, controls, &lp, |n, s| {
        for (slot, &want) in out.iter_mut().zip(&steps) {
            if want == n {
                *slot = Some(s.clone());
            }
        }
        Ok(())
    })?;
    Ok(out.into_iter().map(|s| s.expect("every step visited")).collect())
}

/// First marginal at every time step; the J_N counterpart of a dense 1-D
/// trajectory.
pub fn liouville_first_marginals(
    q0: &DensityField,
    controls: &ControlField,
    lp: &LiouvilleParams,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(lp.pde.n_steps() + 1);
    liouville_run(q0, controls, lp, |_, s| {
        out.push(first_marginal(s).values);
        Ok(())
    })?;
    Ok(out)
}

/// J_N with the time integral taken over every solver step, matching the
/// dense mean-field cost.
pub fn liouville_cost(
    q0: &DensityField,
    controls: &ControlField,
    z: &TargetDensity,
    weights: &CostWeights,
    lp: &LiouvilleParams,
) -> Result<CostBreakdown> {
    weights.validate()?;
    let grid = lp.pde.grid();
    if z.grid != grid {
        return Err(Error::Usage("target grid differs from the tensor grid".into()));
    }
    let marginals = liouville_first_marginals(q0, controls, lp)?;
    let times: Vec<f64> = (0..marginals.len()).map(|n| n as f64 * lp.pde.dt).collect();
    let states: Vec<&[f64]> = marginals.iter().map(|m| m.as_slice()).collect();
    let zv = z.sample_times(&times);
    let (running, terminal) = tracking_terms(&grid, &times, &states, &zv, weights);
    Ok(CostBreakdown::new(running, terminal, controls.effort(weights), *weights))
}

/// Residuals of the first (and for N = 3 second) marginal equation at one
/// interior snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalResidual {
    pub time: f64,
    pub first: f64,
    pub second: Option<f64>,
}

/// Flux of the k-th marginal equation along `axis`:
/// q_k(u₁ + u₂/N Σ_{b<k} sin(θ_b − θ_a − α)) + (N−k)/N u₂ ∫ q_{k+1} sin(θ̂ − θ_a − α) dθ̂.
fn hierarchy_flux(
    lower: &TensorDensity,
    upper: Option<&TensorDensity>,
    n_bodies: usize,
    u1: &[f64],
    u2: &[f64],
    alpha: f64,
    axis: usize,
) -> Vec<f64> {
    let grid = lower.grid;
    let n = grid.n_theta();
    let k = lower.n_axes;
    let h = grid.cell_width();
    let nodes = grid.nodes();
    let mut idx = vec![0usize; k];
    let mut out = vec![0.0; lower.values.len()];
    for (flat, o) in out.iter_mut().enumerate() {
        lower.multi_index(flat, &mut idx);
        let ta = nodes[idx[axis]];
        let self_sum: f64 = idx.iter().map(|&b| (nodes[b] - ta - alpha).sin()).sum();
        let mut f = lower.values[flat] * (u1[idx[axis]] + u2[idx[axis]] * self_sum / n_bodies as f64);
        if let Some(up) = upper {
            let base = flat * n;
            let closure: f64 = (0..n)
                .map(|l| up.values[base + l] * (nodes[l] - ta - alpha).sin())
                .sum::<f64>()
                * h;
            f += (n_bodies - k) as f64 / n_bodies as f64 * u2[idx[axis]] * closure;
        }
        *o = f;
    }
    out
}

/// Discrete L² residual of one marginal equation with centred differences.
fn hierarchy_residual(
    prev: &TensorDensity,
    mid_lower: &TensorDensity,
    mid_upper: Option<&TensorDensity>,
    next: &TensorDensity,
    n_bodies: usize,
    u1: &[f64],
    u2: &[f64],
    params: &PdeParams,
) -> f64 {
    let grid = mid_lower.grid;
    let n = grid.n_theta();
    let k = mid_lower.n_axes;
    let h = grid.cell_width();
    let tau = next.time - prev.time;
    let len = mid_lower.values.len();
    let mut r: Vec<f64> = (0..len)
        .map(|i| (next.values[i] - prev.values[i]) / tau)
        .collect();
    for a in 0..k {
        let st = n.pow((k - 1 - a) as u32);
        let flux = hierarchy_flux(mid_lower, mid_upper, n_bodies, u1, u2, params.alpha, a);
        for (i, ri) in r.iter_mut().enumerate() {
            let c = (i / st) % n;
            let ip = if c + 1 == n { i + st - n * st } else { i + st };
            let im = if c == 0 { i + n * st - st } else { i - st };
            let q = &mid_lower.values;
            *ri -= params.diffusion * (q[ip] - 2.0 * q[i] + q[im]) / (h * h);
            *ri += (flux[ip] - flux[im]) / (2.0 * h);
        }
    }
    (r.iter().map(|x| x * x).sum::<f64>() * h.powi(k as i32)).sqrt()
}

/// Residuals of the marginal hierarchy evaluated on Liouville marginals.
/// Every interior snapshot uses its neighbours for the time derivative.
pub fn marginal_residual(
    states: &[MarginalSet],
    controls: &ControlField,
    params: &PdeParams,
) -> Result<Vec<MarginalResidual>> {
    if states.len() < 3 {
        return Err(Error::Usage(format!(
            "marginal residual needs at least 3 snapshots, got {}",
            states.len()
        )));
    }
    let grid = states[0].first.grid;
    let lift = crate::control::field::ControlLift::new(controls.grid(), &grid.nodes());
    let mut u1 = vec![0.0; grid.n_theta()];
    let mut u2 = vec![0.0; grid.n_theta()];
    let as_tensor = |q: &DensityField| TensorDensity {
        n_axes: 1,
        grid: q.grid,
        values: q.values.clone(),
        time: q.time,
    };
    let mut out = Vec::with_capacity(states.len() - 2);
    for w in states.windows(3) {
        let (prev, mid, next) = (&w[0], &w[1], &w[2]);
        let interval = controls.interval_at(mid.time());
        lift.lift(controls.slice(Channel::U1, interval), &mut u1);
        lift.lift(controls.slice(Channel::U2, interval), &mut u2);
        let n_bodies = mid.n_bodies;
        let first = hierarchy_residual(
            &as_tensor(&prev.first),
            &as_tensor(&mid.first),
            Some(&mid.second),
            &as_tensor(&next.first),
            n_bodies,
            &u1,
            &u2,
            params,
        );
        let second = match (&prev.third, &mid.third, &next.third) {
            (Some(_), Some(t3), Some(_)) => Some(hierarchy_residual(
                &prev.second,
                &mid.second,
                Some(t3),
                &next.second,
                n_bodies,
                &u1,
                &u2,
                params,
            )),
            _ => None,
        };
        out.push(MarginalResidual {
            time: mid.time(),
            first,
            second,
        });
    }
    Ok(out)
}
