//! Constitutive layer: small-strain kinematics, isotropic energy, the
//! spectral tension/compression split, degradation functions, the history
//! field and the hybrid stress.
//!
//! Tensors are 3×3 throughout; plane-strain problems simply carry zero
//! out-of-plane strain components.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

pub type Tensor = Matrix3<f64>;

/// Elastic, fracture and regularisation constants. Units: kN, mm, s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    /// Young's modulus E [kN/mm²].
    pub youngs_modulus: f64,
    /// Poisson ratio ν.
    pub poisson_ratio: f64,
    /// Critical energy release rate G_c [kN/mm] inside the fracture window.
    pub fracture_toughness: f64,
    /// Phase-field length scale l_0 [mm].
    pub length_scale: f64,
    /// Residual stiffness η of the quadratic degradation.
    pub eta: f64,
    /// Slope φ of the cubic degradation at s = 1.
    pub phi: f64,
    /// Mass density [kg/m per the benchmark tables]; used as given.
    pub density: f64,
    /// Tensile strength σ_c [MPa]; carried for reporting only.
    pub critical_stress: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            youngs_modulus: 12.44,
            poisson_ratio: 0.2,
            fracture_toughness: 1e-3,
            length_scale: 0.125,
            eta: 1e-6,
            phi: 1e-4,
            density: 1.066,
            critical_stress: 48.0,
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("material parameter {what}")));
        if !(self.youngs_modulus > 0.0) {
            return bad("E must be positive");
        }
        if !(self.poisson_ratio > -1.0 && self.poisson_ratio < 0.5) {
            return bad("ν must lie in (-1, 0.5)");
        }
        if !(self.fracture_toughness > 0.0) {
            return bad("G_c must be positive");
        }
        if !(self.length_scale > 0.0) {
            return bad("l_0 must be positive");
        }
        if !(self.eta > 0.0 && self.eta < 1e-2) {
            return bad("η must satisfy 0 < η ≪ 1");
        }
        if !(self.phi >= 0.0 && self.phi < 1.0) {
            return bad("φ must lie in [0, 1)");
        }
        if !(self.density >= 0.0) {
            return bad("density must be non-negative");
        }
        Ok(())
    }

    /// Lamé constants (λ, μ).
    pub fn lame(&self) -> (f64, f64) {
        let (e, nu) = (self.youngs_modulus, self.poisson_ratio);
        (e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)), e / (2.0 * (1.0 + nu)))
    }
}

/// Spatially varying fracture toughness: the base value inside an `x`
/// window and a multiple of it outside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToughnessField {
    pub base: f64,
    /// `[x_min, x_max]` of the window with the base value; `None` = uniform.
    pub window: Option<[f64; 2]>,
    pub outside_factor: f64,
}

impl ToughnessField {
    pub fn uniform(base: f64) -> Self {
        Self { base, window: None, outside_factor: 1.0 }
    }

    pub fn at(&self, x: &Point) -> f64 {
        match self.window {
            Some([lo, hi]) if x[0] < lo || x[0] > hi => self.base * self.outside_factor,
            _ => self.base,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DegradationKind {
    #[default]
    Quadratic,
    Cubic,
}

/// Symmetric part of a displacement gradient.
pub fn strain(grad_u: &Tensor) -> Tensor {
    0.5 * (grad_u + grad_u.transpose())
}

/// Ψ(ε) = λ/2 tr²(ε) + μ tr(ε²).
pub fn energy_density(eps: &Tensor, params: &MaterialParams) -> f64 {
    let (lambda, mu) = params.lame();
    let tr = eps.trace();
    0.5 * lambda * tr * tr + mu * (eps * eps).trace()
}

/// Eigenvalues of a symmetric tensor in ascending order.
pub fn principal_strains(eps: &Tensor) -> [f64; 3] {
    let mut ev: Vec<f64> = eps.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    [ev[0], ev[1], ev[2]]
}

/// Tensile and compressive energy parts (Ψ⁺, Ψ⁻) of the spectral split.
pub fn spectral_split(eps: &Tensor, params: &MaterialParams) -> (f64, f64) {
    let (lambda, mu) = params.lame();
    let ev = principal_strains(eps);
    let tr: f64 = ev.iter().sum();
    let pos = |v: f64| v.max(0.0);
    let neg = |v: f64| v.min(0.0);
    let plus = 0.5 * lambda * pos(tr).powi(2) + mu * ev.iter().map(|&e| pos(e).powi(2)).sum::<f64>();
    let minus = 0.5 * lambda * neg(tr).powi(2) + mu * ev.iter().map(|&e| neg(e).powi(2)).sum::<f64>();
    (plus, minus)
}

const CLIP_TOLERANCE: f64 = 1e-8;

/// Degradation g(s) and its derivative g'(s).
pub fn degradation(s: f64, kind: DegradationKind, params: &MaterialParams) -> Result<(f64, f64)> {
    if !(-CLIP_TOLERANCE..=1.0 + CLIP_TOLERANCE).contains(&s) {
        return Err(Error::PhaseFieldOutOfRange(s));
    }
    Ok(degradation_unchecked(s.clamp(0.0, 1.0), kind, params))
}

pub(crate) fn degradation_unchecked(s: f64, kind: DegradationKind, params: &MaterialParams) -> (f64, f64) {
    match kind {
        DegradationKind::Quadratic => {
            let eta = params.eta;
            ((1.0 - eta) * s * s + eta, 2.0 * (1.0 - eta) * s)
        }
        DegradationKind::Cubic => {
            let phi = params.phi;
            let g = phi * (s.powi(3) - s * s) + 3.0 * s * s - 2.0 * s.powi(3);
            let dg = phi * (3.0 * s * s - 2.0 * s) + 6.0 * s - 6.0 * s * s;
            (g, dg)
        }
    }
}

/// g'(s)/s, the factor multiplying the history field in the linearised
/// phase-field reaction term. Constant `2(1-η)` for the quadratic function.
pub fn driving_slope(s: f64, kind: DegradationKind, params: &MaterialParams) -> f64 {
    let s = s.clamp(0.0, 1.0);
    match kind {
        DegradationKind::Quadratic => 2.0 * (1.0 - params.eta),
        DegradationKind::Cubic => params.phi * (3.0 * s - 2.0) + 6.0 - 6.0 * s,
    }
}

/// σ = g(s) (λ tr(ε) I + 2 μ ε).
pub fn hybrid_stress(eps: &Tensor, g: f64, params: &MaterialParams) -> Tensor {
    let (lambda, mu) = params.lame();
    g * (lambda * eps.trace() * Tensor::identity() + 2.0 * mu * eps)
}

/// Per-point running maximum of Ψ⁺.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HistoryField {
    pub values: Vec<f64>,
}

impl HistoryField {
    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// H ← max(H, Ψ⁺) at one point; returns the new value.
    pub fn update(&mut self, point: usize, psi_plus: f64) -> f64 {
        let h = &mut self.values[point];
        if psi_plus > *h {
            *h = psi_plus;
        }
        *h
    }
}
