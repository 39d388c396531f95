//! Coefficient fields: matrix-valued trigonometric-polynomial data for the
//! elastic/viscous tensors, scalar density fields, and separable memory
//! kernels (spatial matrix part times a scalar fast-time profile).

use crate::ap::{mean_value, TrigPolynomial};
use crate::error::{Error, Result};

/// Symmetric matrix-valued coefficient on the cell: either trigonometric
/// polynomial entries of the fast space variable, or two isotropic values
/// keyed by the phase (two-phase composites with piecewise-constant data).
#[derive(Debug, Clone)]
pub struct CoefficientField {
    dim: usize,
    kind: CoeffKind,
}

#[derive(Debug, Clone)]
enum CoeffKind {
    /// Row-major `dim x dim` entries.
    Matrix(Vec<TrigPolynomial>),
    PhaseIsotropic { solid: f64, fluid: f64 },
}

impl CoefficientField {
    pub fn new(dim: usize, entries: Vec<TrigPolynomial>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::InvalidInput(format!(
                "coefficient needs {} entries, got {}",
                dim * dim,
                entries.len()
            )));
        }
        for e in &entries {
            if e.dim() != dim {
                return Err(Error::InvalidInput(
                    "coefficient entry dimension differs from field dimension".into(),
                ));
            }
            if !e.is_conjugate_symmetric() {
                return Err(Error::InvalidInput(
                    "coefficient entries must be real-valued trig polynomials".into(),
                ));
            }
        }
        Ok(Self { dim, kind: CoeffKind::Matrix(entries) })
    }

    /// `solid_value * I` on the solid phase, `fluid_value * I` on the fluid
    /// phase.
    pub fn phase_isotropic(dim: usize, solid: f64, fluid: f64) -> Result<Self> {
        if !(solid > 0.0) || !(fluid > 0.0) {
            return Err(Error::CoercivityViolation(format!(
                "phase values must be positive, got solid {solid}, fluid {fluid}"
            )));
        }
        Ok(Self { dim, kind: CoeffKind::PhaseIsotropic { solid, fluid } })
    }

    /// `scalar(y) * I`.
    pub fn isotropic(dim: usize, scalar: TrigPolynomial) -> Result<Self> {
        let zero = TrigPolynomial::zero(dim);
        let mut entries = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                entries.push(if i == j { scalar.clone() } else { zero.clone() });
            }
        }
        Self::new(dim, entries)
    }

    pub fn constant_isotropic(dim: usize, value: f64) -> Self {
        Self::isotropic(dim, TrigPolynomial::constant(dim, value)).unwrap()
    }

    pub fn diagonal(dim: usize, diag: Vec<TrigPolynomial>) -> Result<Self> {
        if diag.len() != dim {
            return Err(Error::InvalidInput("diagonal length must equal dimension".into()));
        }
        let zero = TrigPolynomial::zero(dim);
        let mut entries = Vec::with_capacity(dim * dim);
        for (i, d) in diag.iter().enumerate() {
            for j in 0..dim {
                entries.push(if i == j { d.clone() } else { zero.clone() });
            }
        }
        Self::new(dim, entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn iso_matrix(&self, value: f64) -> Vec<f64> {
        let mut m = vec![0.0; self.dim * self.dim];
        for d in 0..self.dim {
            m[d * self.dim + d] = value;
        }
        m
    }

    /// Matrix sample at a point of the given phase, row-major.
    pub fn eval_phase(&self, y: &[f64], solid: bool) -> Vec<f64> {
        match &self.kind {
            CoeffKind::Matrix(entries) => entries.iter().map(|p| p.eval_real(y)).collect(),
            CoeffKind::PhaseIsotropic { solid: s, fluid: f } => {
                self.iso_matrix(if solid { *s } else { *f })
            }
        }
    }

    /// Matrix sample for phase-independent fields; phase-keyed coefficients
    /// return their solid value.
    pub fn eval(&self, y: &[f64]) -> Vec<f64> {
        self.eval_phase(y, true)
    }

    pub fn is_phase_keyed(&self) -> bool {
        matches!(self.kind, CoeffKind::PhaseIsotropic { .. })
    }

    /// Exactly zero everywhere (phase-keyed fields are always positive).
    pub fn is_identically_zero(&self) -> bool {
        match &self.kind {
            CoeffKind::Matrix(entries) => entries.iter().all(|p| p.terms().is_empty()),
            CoeffKind::PhaseIsotropic { .. } => false,
        }
    }

    /// Checks symmetry and positive definiteness of the matrix samples on a
    /// uniform probe grid, as the coercivity assumption requires.
    pub fn check_spd(&self, probes_per_axis: usize, label: &str) -> Result<()> {
        match &self.kind {
            CoeffKind::PhaseIsotropic { solid, fluid } => {
                for (v, which) in [(solid, "solid"), (fluid, "fluid")] {
                    check_matrix_spd(&self.iso_matrix(*v), self.dim).map_err(|why| {
                        Error::CoercivityViolation(format!("{label} ({which} value): {why}"))
                    })?;
                }
                Ok(())
            }
            CoeffKind::Matrix(_) => {
                let dim = self.dim;
                let total = probes_per_axis.pow(dim as u32);
                let mut y = vec![0.0; dim];
                for flat in 0..total {
                    let mut rest = flat;
                    for d in 0..dim {
                        y[d] = (rest % probes_per_axis) as f64 / probes_per_axis as f64;
                        rest /= probes_per_axis;
                    }
                    let m = self.eval(&y);
                    check_matrix_spd(&m, dim).map_err(|why| {
                        Error::CoercivityViolation(format!("{label} at y = {y:?}: {why}"))
                    })?;
                }
                Ok(())
            }
        }
    }
}

/// Symmetry + positive-definiteness test for a small row-major matrix via
/// Cholesky; returns a description of the violation.
pub fn check_matrix_spd(m: &[f64], dim: usize) -> std::result::Result<(), String> {
    for i in 0..dim {
        for j in (i + 1)..dim {
            let (a, b) = (m[i * dim + j], m[j * dim + i]);
            if (a - b).abs() > 1e-10 * (1.0 + a.abs().max(b.abs())) {
                return Err(format!("not symmetric: m[{i}][{j}] = {a}, m[{j}][{i}] = {b}"));
            }
        }
    }
    let mut l = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut sum = m[i * dim + j];
            for k in 0..j {
                sum -= l[i * dim + k] * l[j * dim + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(format!("pivot {i} is {sum} (not positive definite)"));
                }
                l[i * dim + i] = sum.sqrt();
            } else {
                l[i * dim + j] = sum / l[j * dim + j];
            }
        }
    }
    Ok(())
}

/// Separable memory kernel: spatial matrix part times a scalar profile of the
/// fast time variable.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub spatial: CoefficientField,
    pub temporal: TrigPolynomial,
}

impl KernelSpec {
    pub fn new(spatial: CoefficientField, temporal: TrigPolynomial) -> Result<Self> {
        if temporal.dim() != 1 {
            return Err(Error::InvalidInput("temporal kernel profile must be univariate".into()));
        }
        if !temporal.is_conjugate_symmetric() {
            return Err(Error::InvalidInput("temporal kernel profile must be real-valued".into()));
        }
        Ok(Self { spatial, temporal })
    }

    /// Identically zero kernel (memory switched off).
    pub fn none(dim: usize) -> Self {
        Self {
            spatial: CoefficientField::constant_isotropic(dim, 0.0),
            temporal: TrigPolynomial::constant(1, 0.0),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.temporal.terms().is_empty() || self.spatial.is_identically_zero()
    }

    /// Kernel matrix at spatial point `y` and fast time `tau`.
    pub fn eval(&self, y: &[f64], tau: f64) -> Vec<f64> {
        let t = self.temporal.eval_real(&[tau]);
        self.spatial.eval(y).iter().map(|v| v * t).collect()
    }

    pub fn temporal_value(&self, tau: f64) -> f64 {
        self.temporal.eval_real(&[tau])
    }

    /// Largest temporal frequency in cycles per unit fast time.
    pub fn max_temporal_cycles(&self) -> f64 {
        self.temporal.max_frequency() / std::f64::consts::TAU
    }
}

/// Scalar density field with positivity bounds checked on a probe grid.
#[derive(Debug, Clone)]
pub struct DensityField {
    field: TrigPolynomial,
}

impl DensityField {
    pub fn new(field: TrigPolynomial) -> Result<Self> {
        if !field.is_conjugate_symmetric() {
            return Err(Error::InvalidInput("density must be real-valued".into()));
        }
        Ok(Self { field })
    }

    pub fn constant(dim: usize, value: f64) -> Result<Self> {
        if value <= 0.0 {
            return Err(Error::InvalidInput("density must be positive".into()));
        }
        Self::new(TrigPolynomial::constant(dim, value))
    }

    pub fn field(&self) -> &TrigPolynomial {
        &self.field
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.field.eval_real(y)
    }

    pub fn mean(&self) -> f64 {
        mean_value(&self.field).re
    }

    /// Verifies `1/bound <= rho <= bound` for some positive bound: in
    /// practice, all probe samples must be strictly positive and finite.
    pub fn check_bounds(&self, dim: usize, probes_per_axis: usize) -> Result<()> {
        let total = probes_per_axis.pow(dim as u32);
        let mut y = vec![0.0; dim];
        for flat in 0..total {
            let mut rest = flat;
            for d in 0..dim {
                y[d] = (rest % probes_per_axis) as f64 / probes_per_axis as f64;
                rest /= probes_per_axis;
            }
            let v = self.eval(&y);
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "density sample {v} at {y:?} is not strictly positive"
                )));
            }
        }
        Ok(())
    }
}

/// Smooth-in-time body load: constant direction, scalar temporal profile.
#[derive(Debug, Clone)]
pub struct BodyLoad {
    pub direction: Vec<f64>,
    pub profile: TimeProfile,
}

/// Temporal load profiles; all start from zero compatibly with the
/// homogeneous initial conditions.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeProfile {
    Zero,
    /// `sin^2(pi t / (2 ramp))` capped at one beyond the ramp.
    Ramp { ramp: f64 },
    /// `sin(omega t)`.
    Sine { omega: f64 },
}

impl BodyLoad {
    pub fn zero(dim: usize) -> Self {
        Self { direction: vec![0.0; dim], profile: TimeProfile::Zero }
    }

    pub fn value(&self, t: f64) -> Vec<f64> {
        let s = match self.profile {
            TimeProfile::Zero => 0.0,
            TimeProfile::Ramp { ramp } => {
                if t <= 0.0 {
                    0.0
                } else if t >= ramp {
                    1.0
                } else {
                    let x = (std::f64::consts::FRAC_PI_2 * t / ramp).sin();
                    x * x
                }
            }
            TimeProfile::Sine { omega } => (omega * t).sin(),
        };
        self.direction.iter().map(|d| d * s).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.profile == TimeProfile::Zero || self.direction.iter().all(|&d| d == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_check_accepts_coercive_field() {
        let a = CoefficientField::constant_isotropic(2, 1.0);
        assert!(a.check_spd(4, "a0").is_ok());
    }

    #[test]
    fn spd_check_rejects_negative_eigenvalue() {
        let m = CoefficientField::new(
            2,
            vec![
                TrigPolynomial::constant(2, 1.0),
                TrigPolynomial::constant(2, 3.0),
                TrigPolynomial::constant(2, 3.0),
                TrigPolynomial::constant(2, 1.0),
            ],
        )
        .unwrap();
        assert!(matches!(m.check_spd(2, "a0"), Err(Error::CoercivityViolation(_))));
    }

    #[test]
    fn kernel_separates_space_and_time() {
        let spatial = CoefficientField::constant_isotropic(2, 0.5);
        let temporal =
            TrigPolynomial::real(1, 1.0, &[(vec![std::f64::consts::TAU], 1.0)], &[]).unwrap();
        let k = KernelSpec::new(spatial, temporal).unwrap();
        let m = k.eval(&[0.3, 0.4], 0.0);
        assert!((m[0] - 1.0).abs() < 1e-14); // 0.5 * (1 + cos 0)
        assert!((m[1]).abs() < 1e-14);
    }

    #[test]
    fn density_bounds_enforced() {
        let rho = DensityField::new(
            TrigPolynomial::real(1, 0.5, &[(vec![std::f64::consts::TAU], 1.0)], &[]).unwrap(),
        )
        .unwrap();
        // dips to -0.5, fails positivity
        assert!(rho.check_bounds(1, 16).is_err());
        let ok = DensityField::constant(1, 2.0).unwrap();
        assert!(ok.check_bounds(1, 8).is_ok());
    }

    #[test]
    fn ramp_load_starts_at_zero_and_saturates() {
        let f = BodyLoad { direction: vec![2.0, 0.0], profile: TimeProfile::Ramp { ramp: 0.5 } };
        assert_eq!(f.value(0.0), vec![0.0, 0.0]);
        assert_eq!(f.value(1.0), vec![2.0, 0.0]);
        let mid = f.value(0.25);
        assert!(mid[0] > 0.0 && mid[0] < 2.0);
    }
}
