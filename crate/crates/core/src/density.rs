//! Probability densities on the angular grid.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circle::{periodic_quadrature, AngularGrid, TWO_PI};
use crate::error::{Error, Result};

/// Values in (−POSITIVITY_TOL, 0) are roundoff and get clamped; anything
/// more negative is a scheme failure.
pub const POSITIVITY_TOL: f64 = 1e-12;

/// Admissible drift of total mass away from one.
pub const MASS_TOL: f64 = 1e-10;

/// Density q(t, ·) sampled at cell centres, units 1/radian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    pub grid: AngularGrid,
    pub values: Vec<f64>,
    pub time: f64,
}

impl DensityField {
    pub fn new(grid: AngularGrid, values: Vec<f64>, time: f64) -> Result<Self> {
        grid.check_len(&values, "density")?;
        Ok(Self { grid, values, time })
    }

    /// Builds a density from nodal values of a nonnegative function and
    /// normalises it to unit quadrature mass.
    pub fn from_fn(grid: AngularGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.sample(f);
        Self::normalized(grid, values)
    }

    pub fn normalized(grid: AngularGrid, mut values: Vec<f64>) -> Result<Self> {
        grid.check_len(&values, "density")?;
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!("density value {v} is not a finite nonnegative number")));
        }
        let mass = periodic_quadrature(&values, &grid)?;
        if mass <= 0.0 {
            return Err(Error::Domain("density has zero mass".into()));
        }
        for v in &mut values {
            *v /= mass;
        }
        Ok(Self {
            grid,
            values,
            time: 0.0,
        })
    }

    pub fn uniform(grid: AngularGrid) -> Self {
        Self {
            grid,
            values: vec![1.0 / TWO_PI; grid.n_theta()],
            time: 0.0,
        }
    }

    /// (1 + a·cos(θ − φ)) / 2π, |a| ≤ 1. Unit mass holds exactly on any grid
    /// with at least two cells.
    pub fn cosine(grid: AngularGrid, amplitude: f64, phase: f64) -> Result<Self> {
        if amplitude.abs() > 1.0 {
            return Err(Error::Domain(format!(
                "cosine amplitude {amplitude} would make the density negative"
            )));
        }
        let values = grid.sample(|t| (1.0 + amplitude * (t - phase).cos()) / TWO_PI);
        Self::normalized(grid, values)
    }

    /// von Mises density ∝ exp(κ cos(θ − μ)), normalised on the grid.
    pub fn von_mises(grid: AngularGrid, mu: f64, kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0) {
            return Err(Error::Domain(format!("von Mises kappa must be >= 0, got {kappa}")));
        }
        // shift the exponent so large κ cannot overflow
        Self::from_fn(grid, |t| (kappa * ((t - mu).cos() - 1.0)).exp())
    }

    pub fn mass(&self) -> f64 {
        self.grid.cell_width() * self.values.iter().sum::<f64>()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// ∫ e^{ikθ} q(θ) dθ by the rectangle rule.
    pub fn fourier_mode(&self, k: i32) -> Complex64 {
        let h = self.grid.cell_width();
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, &v) in self.values.iter().enumerate() {
            acc += Complex64::from_polar(v, k as f64 * self.grid.node(j));
        }
        acc * h
    }

    pub fn mode_amplitude(&self, k: i32) -> f64 {
        self.fourier_mode(k).norm()
    }

    /// Enforces the density invariants after a step: clamps roundoff
    /// negatives, rejects larger ones.
    pub fn enforce_invariants(&mut self) -> Result<()> {
        clamp_roundoff_negatives(&mut self.values, self.grid.cell_width())
    }
}

/// Named density families, sampled onto any grid on demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    Uniform,
    /// (1 + amplitude·cos(θ − phase)) / 2π.
    Cosine {
        amplitude: f64,
        #[serde(default)]
        phase: f64,
    },
    VonMises {
        mu: f64,
        kappa: f64,
    },
    /// Cell values on their own grid, resampled piecewise constant.
    Tabulated { values: Vec<f64> },
}

impl DensitySpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Uniform => Ok(()),
            Self::Cosine { amplitude, phase } => {
                if !(amplitude.abs() <= 1.0) || !phase.is_finite() {
                    return Err(Error::Config(format!(
                        "cosine density needs |amplitude| <= 1, got {amplitude}"
                    )));
                }
                Ok(())
            }
            Self::VonMises { mu, kappa } => {
                if !(*kappa >= 0.0) || !kappa.is_finite() || !mu.is_finite() {
                    return Err(Error::Config(format!("von Mises needs kappa >= 0, got {kappa}")));
                }
                Ok(())
            }
            Self::Tabulated { values } => {
                if values.is_empty() {
                    return Err(Error::Config("tabulated density is empty".into()));
                }
                if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return Err(Error::Config("tabulated density needs finite values >= 0".into()));
                }
                if values.iter().sum::<f64>() <= 0.0 {
                    return Err(Error::Config("tabulated density has zero mass".into()));
                }
                Ok(())
            }
        }
    }

    pub fn sample(&self, grid: AngularGrid) -> Result<DensityField> {
        self.validate()?;
        match self {
            Self::Uniform => Ok(DensityField::uniform(grid)),
            Self::Cosine { amplitude, phase } => DensityField::cosine(grid, *amplitude, *phase),
            Self::VonMises { mu, kappa } => DensityField::von_mises(grid, *mu, *kappa),
            Self::Tabulated { values } => {
                let source = AngularGrid::new(values.len())?;
                let resampled = grid.sample(|t| values[source.cell_of(t)]);
                DensityField::normalized(grid, resampled)
            }
        }
    }
}

/// Shared positivity policy for 1-D and tensor states. `cell_measure` is the
/// quadrature weight of one entry.
pub(crate) fn clamp_roundoff_negatives(values: &mut [f64], cell_measure: f64) -> Result<()> {
    let mut min = f64::INFINITY;
    for &v in values.iter() {
        if v.is_nan() {
            return Err(Error::Positivity {
                min: f64::NAN,
                tolerance: POSITIVITY_TOL,
            });
        }
        min = min.min(v);
    }
    if min >= 0.0 {
        return Ok(());
    }
    if min < -POSITIVITY_TOL {
        return Err(Error::Positivity {
            min,
            tolerance: POSITIVITY_TOL,
        });
    }
    let before: f64 = values.iter().sum::<f64>() * cell_measure;
    for v in values.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let after: f64 = values.iter().sum::<f64>() * cell_measure;
    if after > 0.0 {
        let s = before / after;
        for v in values.iter_mut() {
            *v *= s;
        }
    }
    Ok(())
}
