//! Angular arithmetic on S¹ = ℝ/2πℤ: wrapping, the uniform periodic grid,
//! rectangle-rule quadrature, wrapped densities and the sine coupling kernel.
//!
//! Grid functions live at cell centres θ_k = 2πk/n, cell k covering
//! [θ_k − h/2, θ_k + h/2). On a periodic grid the rectangle rule coincides
//! with the trapezoidal rule and integrates every Fourier mode e^{ijθ} with
//! 0 < |j| < n to zero exactly.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TWO_PI: f64 = 2.0 * PI;

/// Reduces `x` to the representative in [0, 2π).
pub fn wrap_angle(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("cannot wrap non-finite angle {x}")));
    }
    Ok(wrap_finite(x))
}

/// `wrap_angle` for values already known to be finite.
#[inline]
pub(crate) fn wrap_finite(x: f64) -> f64 {
    let r = x - TWO_PI * (x / TWO_PI).floor();
    // rounding can land exactly on 2π (tiny negative x) or just below 0
    if !(0.0..TWO_PI).contains(&r) {
        0.0
    } else {
        r
    }
}

/// Shortest arc length between two angles, in [0, π].
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = wrap_finite(a - b);
    d.min(TWO_PI - d)
}

/// The Kuramoto–Sakaguchi coupling sin(θ' − θ − α).
#[inline]
pub fn interaction_kernel(theta: f64, theta_prime: f64, alpha: f64) -> f64 {
    (theta_prime - theta - alpha).sin()
}

/// Uniform cell-centred discretisation of the circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AngularGrid {
    n_theta: usize,
}

/// Two-point periodic linear interpolation stencil.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LerpStencil {
    pub lo: usize,
    pub hi: usize,
    pub frac: f64,
}

impl LerpStencil {
    #[inline]
    pub fn apply(&self, values: &[f64]) -> f64 {
        values[self.lo] + self.frac * (values[self.hi] - values[self.lo])
    }
}

impl AngularGrid {
    pub fn new(n_theta: usize) -> Result<Self> {
        if n_theta == 0 {
            return Err(Error::Config("n_theta must be positive".into()));
        }
        Ok(Self { n_theta })
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn cell_width(&self) -> f64 {
        TWO_PI / self.n_theta as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        TWO_PI * k as f64 / self.n_theta as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_theta).map(|k| self.node(k)).collect()
    }

    /// Cyclic neighbour: `neighbor(n−1, 1) == 0`.
    pub fn neighbor(&self, k: usize, offset: isize) -> usize {
        let n = self.n_theta as isize;
        (k as isize + offset).rem_euclid(n) as usize
    }

    /// Index of the cell containing `angle` (any finite real).
    pub fn cell_of(&self, angle: f64) -> usize {
        let s = wrap_finite(angle) / self.cell_width() + 0.5;
        (s.floor() as usize) % self.n_theta
    }

    /// Linear interpolation stencil between the two nodes bracketing `angle`.
    pub fn stencil(&self, angle: f64) -> LerpStencil {
        let s = wrap_finite(angle) / self.cell_width();
        let lo = (s.floor() as usize).min(self.n_theta - 1);
        let frac = (s - lo as f64).clamp(0.0, 1.0);
        LerpStencil {
            lo,
            hi: (lo + 1) % self.n_theta,
            frac,
        }
    }

    /// Periodic piecewise-linear interpolation of nodal values.
    pub fn interpolate(&self, values: &[f64], angle: f64) -> f64 {
        self.stencil(angle).apply(values)
    }

    pub fn check_len(&self, values: &[f64], what: &str) -> Result<()> {
        if values.len() != self.n_theta {
            return Err(Error::Usage(format!(
                "{what} has length {} but the grid has {} cells",
                values.len(),
                self.n_theta
            )));
        }
        Ok(())
    }

    /// Samples `f` at every node.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.n_theta).map(|k| f(self.node(k))).collect()
    }
}

/// Rectangle rule `h · Σ values` over one period.
pub fn periodic_quadrature(values: &[f64], grid: &AngularGrid) -> Result<f64> {
    grid.check_len(values, "integrand")?;
    Ok(grid.cell_width() * values.iter().sum::<f64>())
}

/// Default number of periods summed on each side by [`wrap_density`].
pub const DEFAULT_WRAP_TRUNCATION: usize = 10;

/// Wrapped density f_w(θ_j) = Σ_{k=−K}^{K} f(θ_j + 2πk) at every node.
///
/// `f` is a density on ℝ; any negative evaluation is rejected.
pub fn wrap_density(
    f: impl Fn(f64) -> f64,
    truncation_k: usize,
    grid: &AngularGrid,
) -> Result<Vec<f64>> {
    if truncation_k == 0 {
        return Err(Error::Config("truncation_k must be positive".into()));
    }
    let k = truncation_k as i64;
    let mut out = Vec::with_capacity(grid.n_theta());
    for j in 0..grid.n_theta() {
        let theta = grid.node(j);
        let mut acc = 0.0;
        for m in -k..=k {
            let v = f(theta + TWO_PI * m as f64);
            if v < 0.0 || v.is_nan() {
                return Err(Error::Domain(format!(
                    "density is negative ({v}) at x = {}",
                    theta + TWO_PI * m as f64
                )));
            }
            acc += v;
        }
        out.push(acc);
    }
    Ok(out)
}

/// Conservative restriction of a fine cell-averaged field onto another grid
/// by exact overlap of the cell intervals.
pub fn restrict(values: &[f64], from: &AngularGrid, to: &AngularGrid) -> Result<Vec<f64>> {
    from.check_len(values, "restricted field")?;
    let hf = from.cell_width();
    let hc = to.cell_width();
    let mut out = vec![0.0; to.n_theta()];
    for (k, &v) in values.iter().enumerate() {
        // cell k covers [a, b) with a possibly negative
        let a = from.node(k) - 0.5 * hf;
        let b = a + hf;
        // coarse cell j covers [θ_j − hc/2, θ_j + hc/2); shift so edges are at multiples of hc
        let sa = (a + 0.5 * hc) / hc;
        let sb = (b + 0.5 * hc) / hc;
        let mut j = sa.floor();
        while j < sb {
            let lo = sa.max(j);
            let hi = sb.min(j + 1.0);
            if hi > lo {
                let idx = (j as i64).rem_euclid(to.n_theta() as i64) as usize;
                out[idx] += v * (hi - lo) * hc;
            }
            j += 1.0;
        }
    }
    for o in &mut out {
        *o /= hc;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wrap_examples() {
        assert!((wrap_angle(TWO_PI + 0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!((wrap_angle(-PI / 2.0).unwrap() - 1.5 * PI).abs() < 1e-15);
        assert_eq!(wrap_angle(0.0).unwrap(), 0.0);
        assert!(matches!(wrap_angle(f64::NAN), Err(Error::Domain(_))));
        assert!(wrap_angle(f64::INFINITY).is_err());
        let tiny = wrap_angle(-1e-300).unwrap();
        assert!((0.0..TWO_PI).contains(&tiny));
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(interaction_kernel(0.7, 0.7, 0.0), 0.0);
        assert!((interaction_kernel(0.0, PI / 2.0, 0.0) - 1.0).abs() < 1e-15);
        assert!((interaction_kernel(0.3, 1.1, 0.2) - 0.564_642_473_395_035_4).abs() < 1e-12);
    }

    #[test]
    fn quadrature_examples() {
        for n in [3, 17, 64, 256] {
            let g = AngularGrid::new(n).unwrap();
            let c = vec![1.0 / TWO_PI; n];
            assert!((periodic_quadrature(&c, &g).unwrap() - 1.0).abs() < 1e-14);
        }
        let g = AngularGrid::new(64).unwrap();
        let cos = g.sample(f64::cos);
        assert!(periodic_quadrature(&cos, &g).unwrap().abs() < 1e-14);
        let q = g.sample(|t| (1.0 + t.cos()) / TWO_PI);
        assert!((periodic_quadrature(&q, &g).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(
            periodic_quadrature(&q[..10], &g),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn pure_modes_integrate_to_zero() {
        let n = 48;
        let g = AngularGrid::new(n).unwrap();
        for k in 1..n as i64 {
            let re = g.sample(|t| (k as f64 * t).cos());
            let im = g.sample(|t| (k as f64 * t).sin());
            assert!(periodic_quadrature(&re, &g).unwrap().abs() < 1e-12, "k={k}");
            assert!(periodic_quadrature(&im, &g).unwrap().abs() < 1e-12, "k={k}");
        }
    }

    fn normal_pdf(mu: f64, sigma: f64) -> impl Fn(f64) -> f64 {
        move |x| {
            let z = (x - mu) / sigma;
            (-0.5 * z * z).exp() / (sigma * (TWO_PI).sqrt())
        }
    }

    #[test]
    fn wrap_uniform_is_constant() {
        let g = AngularGrid::new(32).unwrap();
        let uniform = |x: f64| {
            if (0.0..TWO_PI).contains(&x) {
                1.0 / TWO_PI
            } else {
                0.0
            }
        };
        let fw = wrap_density(uniform, DEFAULT_WRAP_TRUNCATION, &g).unwrap();
        for v in fw {
            assert!((v - 1.0 / TWO_PI).abs() < 1e-15);
        }
    }

    #[test]
    fn wrap_narrow_gaussian_peak() {
        // n = 2 puts a node exactly at π
        let g = AngularGrid::new(2).unwrap();
        let fw = wrap_density(normal_pdf(PI, 0.1), DEFAULT_WRAP_TRUNCATION, &g).unwrap();
        let peak = 1.0 / (0.1 * TWO_PI.sqrt());
        assert!((fw[1] - peak).abs() < 1e-12);
        assert!((fw[1] - 3.989_42).abs() < 1e-5);
    }

    #[test]
    fn wrap_wide_gaussian_matches_high_truncation() {
        let g = AngularGrid::new(64).unwrap();
        let f = normal_pdf(0.0, 2.0);
        let a = wrap_density(&f, DEFAULT_WRAP_TRUNCATION, &g).unwrap();
        let b = wrap_density(&f, 2 * DEFAULT_WRAP_TRUNCATION, &g).unwrap();
        let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-12);
        let mass = periodic_quadrature(&a, &g).unwrap();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wrap_rejects_negative() {
        let g = AngularGrid::new(8).unwrap();
        assert!(matches!(
            wrap_density(|x| x.sin(), 2, &g),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn neighbors_are_cyclic() {
        let g = AngularGrid::new(10).unwrap();
        assert_eq!(g.neighbor(9, 1), 0);
        assert_eq!(g.neighbor(0, -1), 9);
        assert_eq!(g.cell_of(TWO_PI - 1e-9), 0);
        assert_eq!(g.cell_of(g.node(3) + 0.49 * g.cell_width()), 3);
    }

    #[test]
    fn restriction_preserves_mass() {
        let fine = AngularGrid::new(256).unwrap();
        let coarse = AngularGrid::new(32).unwrap();
        let q = fine.sample(|t| (1.0 + 0.8 * (t - 0.3).cos()) / TWO_PI);
        let r = restrict(&q, &fine, &coarse).unwrap();
        let m_f = periodic_quadrature(&q, &fine).unwrap();
        let m_c = periodic_quadrature(&r, &coarse).unwrap();
        assert!((m_f - m_c).abs() < 1e-14);
        // identity restriction
        let same = restrict(&q, &fine, &fine).unwrap();
        for (a, b) in q.iter().zip(&same) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn wrap_is_periodic(x in -1e3f64..1e3, m in -50i32..50) {
            let a = wrap_angle(x).unwrap();
            let b = wrap_angle(x + TWO_PI * m as f64).unwrap();
            prop_assert!((0.0..TWO_PI).contains(&a));
            prop_assert!(circular_distance(a, b) < 1e-11);
        }

        #[test]
        fn wrapped_gaussian_keeps_mass(mu in -10.0f64..10.0, sigma in 0.3f64..3.0) {
            let g = AngularGrid::new(128).unwrap();
            let fw = wrap_density(normal_pdf(mu, sigma), DEFAULT_WRAP_TRUNCATION, &g).unwrap();
            let mass = periodic_quadrature(&fw, &g).unwrap();
            prop_assert!((mass - 1.0).abs() < 1e-10);
        }
    }
}
