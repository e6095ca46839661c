//! Discrete building blocks shared by the 1-D and tensor solvers: implicit
//! periodic diffusion, conservative upwind advection, and the split step
//! for the nonlocal equation together with its exact discrete adjoint.

use num_complex::Complex64;

use crate::density::clamp_roundoff_negatives;
use crate::error::{Error, Result};

/// Factorised solver for (I − c·L) x = b on a periodic line, L the
/// three-point Laplacian. Symmetric, so it is also its own adjoint.
#[derive(Debug, Clone)]
pub(crate) struct CyclicTridiagonal {
    n: usize,
    off: f64,
    inv_denom: Vec<f64>,
    cp: Vec<f64>,
    z: Vec<f64>,
    v_last: f64,
    sm_factor: f64,
}

impl CyclicTridiagonal {
    /// `c` is diffusion × time step, `h` the cell width.
    pub(crate) fn new(n: usize, c: f64, h: f64) -> Self {
        assert!(n >= 3, "cyclic tridiagonal solve needs n >= 3");
        let r = c / (h * h);
        let diag = 1.0 + 2.0 * r;
        let off = -r;
        // Sherman–Morrison split A = T + u vᵀ with u = (s,0,…,0,off), v = (1,0,…,0,off/s)
        let s = -diag;
        let mut d = vec![diag; n];
        d[0] = diag - s;
        d[n - 1] = diag - off * off / s;
        let mut inv_denom = vec![0.0; n];
        let mut cp = vec![0.0; n];
        inv_denom[0] = 1.0 / d[0];
        cp[0] = off * inv_denom[0];
        for i in 1..n {
            let den = d[i] - off * cp[i - 1];
            inv_denom[i] = 1.0 / den;
            cp[i] = off * inv_denom[i];
        }
        let mut solver = Self {
            n,
            off,
            inv_denom,
            cp,
            z: vec![0.0; n],
            v_last: off / s,
            sm_factor: 0.0,
        };
        let mut u = vec![0.0; n];
        u[0] = s;
        u[n - 1] = off;
        solver.thomas(&mut u);
        let vz = u[0] + solver.v_last * u[n - 1];
        solver.sm_factor = 1.0 / (1.0 + vz);
        solver.z = u;
        solver
    }

    fn thomas(&self, x: &mut [f64]) {
        let n = self.n;
        x[0] *= self.inv_denom[0];
        for i in 1..n {
            x[i] = (x[i] - self.off * x[i - 1]) * self.inv_denom[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.cp[i] * x[i + 1];
        }
    }

    pub(crate) fn solve_in_place(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        self.thomas(x);
        let vy = x[0] + self.v_last * x[self.n - 1];
        let f = vy * self.sm_factor;
        for (xi, zi) in x.iter_mut().zip(&self.z) {
            *xi -= f * zi;
        }
    }
}

/// Face flux F_k between cells k and k+1 with upwinding on `vf[k]`.
#[inline]
pub(crate) fn upwind_flux(q_k: f64, q_kp1: f64, vf: f64) -> f64 {
    if vf >= 0.0 {
        vf * q_k
    } else {
        vf * q_kp1
    }
}

/// One explicit conservative upwind step on a periodic line:
/// out_k = q_k − courant·(F_k − F_{k−1}).
pub(crate) fn upwind_update(q: &[f64], vf: &[f64], courant: f64, out: &mut [f64]) {
    let n = q.len();
    let mut f_prev = upwind_flux(q[n - 1], q[0], vf[n - 1]);
    for k in 0..n {
        let kp = if k + 1 == n { 0 } else { k + 1 };
        let f = upwind_flux(q[k], q[kp], vf[k]);
        out[k] = q[k] - courant * (f - f_prev);
        f_prev = f;
    }
}

/// Cell velocities averaged to faces: vf_k = (v_k + v_{k+1})/2.
pub(crate) fn face_velocities(v: &[f64], vf: &mut [f64]) {
    let n = v.len();
    for k in 0..n {
        vf[k] = 0.5 * (v[k] + v[(k + 1) % n]);
    }
}

pub(crate) fn check_cfl(max_velocity: f64, h: f64, dt: f64) -> Result<()> {
    if max_velocity * dt > h {
        return Err(Error::Cfl {
            max_velocity,
            dt_limit: h / max_velocity,
            dt,
        });
    }
    Ok(())
}

/// Strang-split step for the controlled nonlocal equation on a periodic
/// line of equally spaced nodes (the circle, or a wide period of ℝ).
///
/// diffusion(dt/2) → upwind advection(dt) with v = u₁ + u₂·w[q] → diffusion(dt/2)
#[derive(Debug, Clone)]
pub(crate) struct LineScheme {
    h: f64,
    dt: f64,
    cos: Vec<f64>,
    sin: Vec<f64>,
    rot: Complex64,
    half_diffusion: CyclicTridiagonal,
    qa: Vec<f64>,
    v: Vec<f64>,
    vf: Vec<f64>,
    w: Vec<f64>,
    tmp: Vec<f64>,
}

impl LineScheme {
    pub(crate) fn new(nodes: &[f64], h: f64, diffusion: f64, alpha: f64, dt: f64) -> Self {
        let n = nodes.len();
        Self {
            h,
            dt,
            cos: nodes.iter().map(|x| x.cos()).collect(),
            sin: nodes.iter().map(|x| x.sin()).collect(),
            rot: Complex64::from_polar(1.0, -alpha),
            half_diffusion: CyclicTridiagonal::new(n, 0.5 * diffusion * dt, h),
            qa: vec![0.0; n],
            v: vec![0.0; n],
            vf: vec![0.0; n],
            w: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.cos.len()
    }

    /// Z = h Σ_j q_j e^{i x_j}.
    pub(crate) fn order_parameter(&self, q: &[f64]) -> Complex64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for ((&qj, &c), &s) in q.iter().zip(&self.cos).zip(&self.sin) {
            re += qj * c;
            im += qj * s;
        }
        Complex64::new(re * self.h, im * self.h)
    }

    /// w_k = Im(Z e^{−i(x_k+α)}).
    fn fill_drift(&mut self, z: Complex64) {
        let c = z * self.rot;
        for k in 0..self.w.len() {
            self.w[k] = c.im * self.cos[k] - c.re * self.sin[k];
        }
    }

    /// Builds w, v and face velocities from the post-diffusion state `qa`,
    /// returning max |v| over cells.
    fn prepare_advection(&mut self, u1: &[f64], u2: &[f64]) -> f64 {
        let z = self.order_parameter(&self.qa);
        self.fill_drift(z);
        let mut vmax: f64 = 0.0;
        for k in 0..self.v.len() {
            self.v[k] = u1[k] + u2[k] * self.w[k];
            vmax = vmax.max(self.v[k].abs());
        }
        face_velocities(&self.v, &mut self.vf);
        vmax
    }

    pub(crate) fn step(&mut self, q: &mut [f64], u1: &[f64], u2: &[f64]) -> Result<()> {
        self.qa.copy_from_slice(q);
        self.half_diffusion.solve_in_place(&mut self.qa);
        let vmax = self.prepare_advection(u1, u2);
        check_cfl(vmax, self.h, self.dt)?;
        upwind_update(&self.qa, &self.vf, self.dt / self.h, q);
        self.half_diffusion.solve_in_place(q);
        clamp_roundoff_negatives(q, self.h)
    }

    /// Transpose of the linearised step.
    ///
    /// Given the forward input `q_n` and the cost sensitivity `lam_next` of
    /// the step output, writes the sensitivity of the step input into
    /// `lam_out`, the sensitivity to the cell velocity v_k into `sens_v`,
    /// and the nonlocal drift w used by the step into `w_out` so callers
    /// can chain v = u₁ + u₂w to the controls.
    pub(crate) fn adjoint_step(
        &mut self,
        q_n: &[f64],
        lam_next: &[f64],
        u1: &[f64],
        u2: &[f64],
        lam_out: &mut [f64],
        sens_v: &mut [f64],
        w_out: &mut [f64],
    ) {
        let n = self.len();
        self.qa.copy_from_slice(q_n);
        self.half_diffusion.solve_in_place(&mut self.qa);
        self.prepare_advection(u1, u2);

        // adjoint of the second diffusion half-step
        self.tmp.copy_from_slice(lam_next);
        self.half_diffusion.solve_in_place(&mut self.tmp);
        let lam_b = &self.tmp;

        let courant = self.dt / self.h;
        lam_out.copy_from_slice(lam_b);
        // s_k: sensitivity to the face velocity vf_k
        let mut s_prev = 0.0;
        let mut s_first = 0.0;
        for k in 0..n {
            let kp = if k + 1 == n { 0 } else { k + 1 };
            let psi = courant * (lam_b[kp] - lam_b[k]);
            let vf = self.vf[k];
            let q_up = if vf >= 0.0 {
                lam_out[k] += vf * psi;
                self.qa[k]
            } else {
                lam_out[kp] += vf * psi;
                self.qa[kp]
            };
            let s = q_up * psi;
            if k == 0 {
                s_first = s;
            } else {
                sens_v[k] = 0.5 * (s + s_prev);
            }
            s_prev = s;
        }
        // face n−1 is the left face of cell 0
        sens_v[0] = 0.5 * (s_first + s_prev);

        // chain through w[qa]: δw_k = Im(δZ e^{−i(x_k+α)}), δZ = h Σ δq_m e^{i x_m}
        let mut c = Complex64::new(0.0, 0.0);
        for k in 0..n {
            let weight = sens_v[k] * u2[k];
            c += Complex64::new(weight * self.cos[k], -weight * self.sin[k]);
        }
        c *= self.rot;
        for m in 0..n {
            // Im(e^{i x_m} C)
            lam_out[m] += self.h * (self.sin[m] * c.re + self.cos[m] * c.im);
        }

        // adjoint of the first diffusion half-step
        self.half_diffusion.solve_in_place(lam_out);
        w_out.copy_from_slice(&self.w);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_apply(n: usize, c: f64, h: f64, x: &[f64]) -> Vec<f64> {
        let r = c / (h * h);
        (0..n)
            .map(|i| (1.0 + 2.0 * r) * x[i] - r * (x[(i + 1) % n] + x[(i + n - 1) % n]))
            .collect()
    }

    #[test]
    fn cyclic_solve_inverts_operator() {
        for n in [3, 4, 7, 64, 257] {
            let h = 0.1;
            let c = 0.37;
            let solver = CyclicTridiagonal::new(n, c, h);
            let b: Vec<f64> = (0..n).map(|i| (i as f64 * 1.3).sin() + 2.0).collect();
            let mut x = b.clone();
            solver.solve_in_place(&mut x);
            let back = dense_apply(n, c, h, &x);
            for (u, v) in back.iter().zip(&b) {
                assert!((u - v).abs() < 1e-11, "n={n}");
            }
            // row sums of the inverse are one: mass preserved
            let sb: f64 = b.iter().sum();
            let sx: f64 = x.iter().sum();
            assert!((sb - sx).abs() < 1e-11);
        }
    }

    #[test]
    fn upwind_conserves_mass() {
        let n = 50;
        let q: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.4).cos()).collect();
        let vf: Vec<f64> = (0..n).map(|i| (i as f64 * 0.9).sin()).collect();
        let mut out = vec![0.0; n];
        upwind_update(&q, &vf, 0.3, &mut out);
        let a: f64 = q.iter().sum();
        let b: f64 = out.iter().sum();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn cfl_error_names_velocity() {
        match check_cfl(10.0, 0.01, 0.01) {
            Err(Error::Cfl { max_velocity, .. }) => assert_eq!(max_velocity, 10.0),
            other => panic!("expected CFL error, got {other:?}"),
        }
        assert!(check_cfl(1.0, 0.01, 0.005).is_ok());
    }
}
