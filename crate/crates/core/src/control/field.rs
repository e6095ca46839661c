//! Control pair (u₁, u₂) on [0,T] × S¹ and the admissible set 𝒰.
//!
//! Controls are piecewise constant in time on a knot partition and
//! piecewise linear in θ on their own (usually coarser) angular grid.
//! Admissibility is the per-knot discrete W^{1,q} bound
//! `(h Σ|u|^q + h Σ|∂_θu|^q)^{1/q} ≤ M` with centred periodic differences.

use serde::{Deserialize, Serialize};

use crate::circle::{AngularGrid, LerpStencil};
use crate::control::cost::CostWeights;
use crate::error::{Error, Result};

/// Default Sobolev exponent q of the constraint set.
pub const DEFAULT_SOBOLEV_EXPONENT: f64 = 4.0;
/// Default radius M of the constraint set.
pub const DEFAULT_BOUND: f64 = 5.0;
/// Slack allowed when checking membership in 𝒰.
pub const FEASIBILITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    U1,
    U2,
}

pub const CHANNELS: [Channel; 2] = [Channel::U1, Channel::U2];

/// Parameters of the admissible set 𝒰.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlConstraint {
    pub sobolev_exponent: f64,
    pub bound: f64,
}

impl Default for ControlConstraint {
    fn default() -> Self {
        Self {
            sobolev_exponent: DEFAULT_SOBOLEV_EXPONENT,
            bound: DEFAULT_BOUND,
        }
    }
}

impl ControlConstraint {
    pub fn validate(&self) -> Result<()> {
        if !(self.sobolev_exponent > 2.0) || !self.sobolev_exponent.is_finite() {
            return Err(Error::Config(format!(
                "sobolev_exponent must satisfy q > 2, got {}",
                self.sobolev_exponent
            )));
        }
        if !(self.bound > 0.0) || !self.bound.is_finite() {
            return Err(Error::Config(format!("bound M must be > 0, got {}", self.bound)));
        }
        Ok(())
    }
}

/// Discrete W^{1,q} norm of one periodic slice.
pub fn w1q_norm(slice: &[f64], grid: &AngularGrid, q_exp: f64) -> f64 {
    let n = slice.len();
    let h = grid.cell_width();
    let mut acc = 0.0;
    for j in 0..n {
        let dv = (slice[(j + 1) % n] - slice[(j + n - 1) % n]) / (2.0 * h);
        acc += slice[j].abs().powf(q_exp) + dv.abs().powf(q_exp);
    }
    (h * acc).powf(1.0 / q_exp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlField {
    t_knots: Vec<f64>,
    grid: AngularGrid,
    u1: Vec<f64>,
    u2: Vec<f64>,
    constraint: ControlConstraint,
}

impl ControlField {
    /// All-zero control on `n_intervals` equal time intervals of [0, t_final].
    pub fn zeros(
        t_final: f64,
        n_intervals: usize,
        grid: AngularGrid,
        constraint: ControlConstraint,
    ) -> Result<Self> {
        if n_intervals == 0 {
            return Err(Error::Config("controls need at least one time interval".into()));
        }
        if !(t_final > 0.0) {
            return Err(Error::Config(format!("t_final must be > 0, got {t_final}")));
        }
        constraint.validate()?;
        let t_knots = (0..=n_intervals)
            .map(|k| t_final * k as f64 / n_intervals as f64)
            .collect();
        let len = n_intervals * grid.n_theta();
        Ok(Self {
            t_knots,
            grid,
            u1: vec![0.0; len],
            u2: vec![0.0; len],
            constraint,
        })
    }

    /// Samples `f(t, θ) -> (u₁, u₂)` at interval midpoints and control nodes.
    pub fn from_fn(
        t_final: f64,
        n_intervals: usize,
        grid: AngularGrid,
        constraint: ControlConstraint,
        f: impl Fn(f64, f64) -> (f64, f64),
    ) -> Result<Self> {
        let mut c = Self::zeros(t_final, n_intervals, grid, constraint)?;
        let n = grid.n_theta();
        for k in 0..n_intervals {
            let tm = 0.5 * (c.t_knots[k] + c.t_knots[k + 1]);
            for j in 0..n {
                let (a, b) = f(tm, grid.node(j));
                c.u1[k * n + j] = a;
                c.u2[k * n + j] = b;
            }
        }
        Ok(c)
    }

    pub fn constant(
        t_final: f64,
        n_intervals: usize,
        grid: AngularGrid,
        constraint: ControlConstraint,
        u1: f64,
        u2: f64,
    ) -> Result<Self> {
        Self::from_fn(t_final, n_intervals, grid, constraint, |_, _| (u1, u2))
    }

    /// Same shape and constraint, new values.
    pub fn with_values(&self, u1: Vec<f64>, u2: Vec<f64>) -> Result<Self> {
        if u1.len() != self.u1.len() || u2.len() != self.u2.len() {
            return Err(Error::Usage("control value arrays have the wrong length".into()));
        }
        Ok(Self {
            u1,
            u2,
            ..self.clone()
        })
    }

    pub fn grid(&self) -> &AngularGrid {
        &self.grid
    }

    pub fn constraint(&self) -> ControlConstraint {
        self.constraint
    }

    pub fn t_knots(&self) -> &[f64] {
        &self.t_knots
    }

    pub fn t_final(&self) -> f64 {
        *self.t_knots.last().expect("at least two knots")
    }

    pub fn n_intervals(&self) -> usize {
        self.t_knots.len() - 1
    }

    pub fn interval_duration(&self, k: usize) -> f64 {
        self.t_knots[k + 1] - self.t_knots[k]
    }

    /// Interval containing `t`; the right end of [0,T] maps to the last one.
    pub fn interval_at(&self, t: f64) -> usize {
        let last = self.n_intervals() - 1;
        match self.t_knots[1..].iter().position(|&tk| t < tk) {
            Some(k) => k,
            None => last,
        }
    }

    pub fn values(&self, ch: Channel) -> &[f64] {
        match ch {
            Channel::U1 => &self.u1,
            Channel::U2 => &self.u2,
        }
    }

    pub fn values_mut(&mut self, ch: Channel) -> &mut [f64] {
        match ch {
            Channel::U1 => &mut self.u1,
            Channel::U2 => &mut self.u2,
        }
    }

    pub fn slice(&self, ch: Channel, k: usize) -> &[f64] {
        let n = self.grid.n_theta();
        &self.values(ch)[k * n..(k + 1) * n]
    }

    pub fn slice_mut(&mut self, ch: Channel, k: usize) -> &mut [f64] {
        let n = self.grid.n_theta();
        &mut self.values_mut(ch)[k * n..(k + 1) * n]
    }

    pub fn slice_norm(&self, ch: Channel, k: usize) -> f64 {
        w1q_norm(self.slice(ch, k), &self.grid, self.constraint.sobolev_exponent)
    }

    /// max over knots and channels of the W^{1,q} norm.
    pub fn max_norm(&self) -> f64 {
        let mut m: f64 = 0.0;
        for ch in CHANNELS {
            for k in 0..self.n_intervals() {
                m = m.max(self.slice_norm(ch, k));
            }
        }
        m
    }

    pub fn is_feasible(&self) -> bool {
        self.max_norm() <= self.constraint.bound + FEASIBILITY_TOL
    }

    /// Observed sup norm, recorded as the empirical stand-in for M̃.
    pub fn observed_sup_norm(&self) -> f64 {
        self.u1
            .iter()
            .chain(&self.u2)
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Feasibility map onto 𝒰: any slice whose norm exceeds M is scaled by
    /// M/norm. Feasible slices are left bit-identical.
    pub fn project(&self) -> Self {
        let mut out = self.clone();
        let bound = self.constraint.bound;
        for ch in CHANNELS {
            for k in 0..self.n_intervals() {
                let norm = self.slice_norm(ch, k);
                if norm > bound {
                    let s = bound / norm;
                    for v in out.slice_mut(ch, k) {
                        *v *= s;
                    }
                }
            }
        }
        out
    }

    /// Quadrature weight Δt_k·h of the degree of freedom in interval `k`.
    pub fn dof_weight(&self, k: usize) -> f64 {
        self.interval_duration(k) * self.grid.cell_width()
    }

    /// Weighted L² inner product over both channels.
    pub fn dot(&self, other: &Self) -> f64 {
        let n = self.grid.n_theta();
        let mut acc = 0.0;
        for ch in CHANNELS {
            let a = self.values(ch);
            let b = other.values(ch);
            for k in 0..self.n_intervals() {
                let w = self.dof_weight(k);
                let s: f64 = a[k * n..(k + 1) * n]
                    .iter()
                    .zip(&b[k * n..(k + 1) * n])
                    .map(|(x, y)| x * y)
                    .sum();
                acc += w * s;
            }
        }
        acc
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `self + a·other`.
    pub fn add_scaled(&self, a: f64, other: &Self) -> Self {
        let mut out = self.clone();
        for ch in CHANNELS {
            for (x, y) in out.values_mut(ch).iter_mut().zip(other.values(ch)) {
                *x += a * y;
            }
        }
        out
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        for ch in CHANNELS {
            for x in out.values_mut(ch) {
                *x *= a;
            }
        }
        out
    }

    /// Control effort ½∬(β₁u₁² + β₂u₂²) on the control grid.
    pub fn effort(&self, weights: &CostWeights) -> f64 {
        let n = self.grid.n_theta();
        let mut acc = 0.0;
        for k in 0..self.n_intervals() {
            let w = self.dof_weight(k);
            let s1: f64 = self.u1[k * n..(k + 1) * n].iter().map(|v| v * v).sum();
            let s2: f64 = self.u2[k * n..(k + 1) * n].iter().map(|v| v * v).sum();
            acc += w * (weights.beta1 * s1 + weights.beta2 * s2);
        }
        0.5 * acc
    }

    /// L² gradient of the effort term: (β₁u₁, β₂u₂).
    pub fn effort_gradient(&self, weights: &CostWeights) -> Self {
        let mut g = self.clone();
        for x in g.values_mut(Channel::U1) {
            *x *= weights.beta1;
        }
        for x in g.values_mut(Channel::U2) {
            *x *= weights.beta2;
        }
        g
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self.t_knots.len() == other.t_knots.len()
            && self
                .t_knots
                .iter()
                .zip(&other.t_knots)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs().max(1.0))
    }

    /// Checks that the control horizon matches a solver horizon.
    pub fn check_horizon(&self, t_final: f64) -> Result<()> {
        if (self.t_final() - t_final).abs() > 1e-9 * t_final.max(1.0) {
            return Err(Error::Usage(format!(
                "controls cover [0, {}] but the solver runs to T = {t_final}",
                self.t_final()
            )));
        }
        Ok(())
    }

    /// Total degrees of freedom over both channels.
    pub fn dof_len(&self) -> usize {
        2 * self.u1.len()
    }

    /// Flat view: u₁ values then u₂ values.
    pub fn dof(&self, i: usize) -> f64 {
        if i < self.u1.len() {
            self.u1[i]
        } else {
            self.u2[i - self.u1.len()]
        }
    }

    /// Time interval of flat degree of freedom `i`.
    pub fn dof_interval(&self, i: usize) -> usize {
        (i % self.u1.len()) / self.grid.n_theta()
    }

    pub fn set_dof(&mut self, i: usize, v: f64) {
        if i < self.u1.len() {
            self.u1[i] = v;
        } else {
            let j = i - self.u1.len();
            self.u2[j] = v;
        }
    }
}

/// Linear-in-θ lifting of control slices to an arbitrary set of angles.
#[derive(Debug, Clone)]
pub struct ControlLift {
    stencils: Vec<LerpStencil>,
}

impl ControlLift {
    pub fn new(control_grid: &AngularGrid, angles: &[f64]) -> Self {
        Self {
            stencils: angles.iter().map(|&a| control_grid.stencil(a)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.stencils.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stencils.is_empty()
    }

    pub fn lift(&self, slice: &[f64], out: &mut [f64]) {
        for (o, s) in out.iter_mut().zip(&self.stencils) {
            *o = s.apply(slice);
        }
    }

    /// Adds the transpose of [`ControlLift::lift`] applied to `sens`.
    pub fn lift_transpose_add(&self, sens: &[f64], out: &mut [f64]) {
        for (&v, s) in sens.iter().zip(&self.stencils) {
            out[s.lo] += (1.0 - s.frac) * v;
            out[s.hi] += s.frac * v;
        }
    }
}
