//! Cahn–Hilliard and MBE (slope selection) models: nonlinearities, energies,
//! and the stabilization-constant rule `A = β (S + ν⁻¹|ln ν|² + 1)`, where `S`
//! is `‖u₀‖∞²` for CH and `‖∇h₀‖∞²` for MBE.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{Norm, PhysicalField, SpectralField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// `∂ₜu = Δ(-νΔu + u³ - u)`
    Ch,
    /// `∂ₜh = -νΔ²h + ∇·((|∇h|² - 1)∇h)`
    Mbe,
}

impl ModelKind {
    /// Tag byte used in snapshot headers.
    pub fn tag(self) -> u8 {
        match self {
            ModelKind::Ch => 0,
            ModelKind::Mbe => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(ModelKind::Ch),
            1 => Some(ModelKind::Mbe),
            _ => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Ch => write!(f, "ch"),
            ModelKind::Mbe => write!(f, "mbe"),
        }
    }
}

/// Selects the nonlinear term. `Off` drops it from the scheme (the linear
/// biharmonic problem used for convergence checks); energies are unaffected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    #[default]
    Standard,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub nu: f64,
    #[serde(default)]
    pub nonlinearity: Nonlinearity,
}

impl ModelConfig {
    pub fn new(kind: ModelKind, nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::InvalidArgument(format!("nu must be positive, got {nu}")));
        }
        Ok(Self {
            kind,
            nu,
            nonlinearity: Nonlinearity::Standard,
        })
    }

    pub fn ch(nu: f64) -> Result<Self> {
        Self::new(ModelKind::Ch, nu)
    }

    pub fn mbe(nu: f64) -> Result<Self> {
        Self::new(ModelKind::Mbe, nu)
    }

    pub fn linear(mut self) -> Self {
        self.nonlinearity = Nonlinearity::Off;
        self
    }

    pub fn energy(&self, field: &SpectralField) -> f64 {
        match self.kind {
            ModelKind::Ch => energy_ch(field, self.nu),
            ModelKind::Mbe => energy_mbe(field, self.nu),
        }
    }
}

/// Order of the stabilizing operator: `1` is `AΔ(u^{n+1} - u^n)`, `2` is
/// `-AΔ²(u^{n+1} - u^n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum StabilizerOrder {
    #[default]
    Laplacian,
    Bilaplacian,
}

impl StabilizerOrder {
    pub fn from_int(s: u32) -> Result<Self> {
        match s {
            1 => Ok(Self::Laplacian),
            2 => Ok(Self::Bilaplacian),
            other => Err(Error::InvalidArgument(format!(
                "stabilizer order must be 1 or 2, got {other}"
            ))),
        }
    }

    pub fn as_int(self) -> u32 {
        match self {
            Self::Laplacian => 1,
            Self::Bilaplacian => 2,
        }
    }

    /// Fourier symbol `|k|^{2s}` given `|k|²`.
    #[inline]
    pub fn symbol(self, k2: f64) -> f64 {
        match self {
            Self::Laplacian => k2,
            Self::Bilaplacian => k2 * k2,
        }
    }
}

impl Serialize for StabilizerOrder {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u32(self.as_int())
    }
}

impl<'de> Deserialize<'de> for StabilizerOrder {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = u32::deserialize(d)?;
        Self::from_int(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilizationPlan {
    /// Safety factor, `None` when `a` was set directly.
    pub beta: Option<f64>,
    pub a: f64,
    pub s_op: StabilizerOrder,
}

impl StabilizationPlan {
    /// Direct override of `A` (no formula). `A = 0` gives the unstabilized scheme.
    pub fn with_a(a: f64, s_op: StabilizerOrder) -> Result<Self> {
        if !(a >= 0.0 && a.is_finite()) {
            return Err(Error::InvalidArgument(format!("A must be nonnegative, got {a}")));
        }
        Ok(Self { beta: None, a, s_op })
    }

    pub fn with_order(mut self, s_op: StabilizerOrder) -> Self {
        self.s_op = s_op;
        self
    }
}

/// `F(u) = ¼(u² - 1)²`
#[inline]
pub fn potential_ch(u: f64) -> f64 {
    let w = u * u - 1.0;
    0.25 * w * w
}

/// `f(u) = u³ - u`
#[inline]
pub fn f_ch_scalar(u: f64) -> f64 {
    u * u * u - u
}

/// `G(z) = ¼(|z|² - 1)²`
#[inline]
pub fn potential_mbe(z: [f64; 2]) -> f64 {
    let w = z[0] * z[0] + z[1] * z[1] - 1.0;
    0.25 * w * w
}

/// `g(z) = (|z|² - 1) z`
#[inline]
pub fn g_mbe_scalar(z: [f64; 2]) -> [f64; 2] {
    let w = z[0] * z[0] + z[1] * z[1] - 1.0;
    [w * z[0], w * z[1]]
}

pub fn f_ch(u: &PhysicalField) -> PhysicalField {
    u.map(f_ch_scalar)
}

pub fn g_mbe(p: &[PhysicalField; 2]) -> [PhysicalField; 2] {
    let [px, py] = p;
    let n = px.values().len();
    let (mut gx, mut gy) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for (a, b) in px.values().iter().zip(py.values()) {
        let [x, y] = g_mbe_scalar([*a, *b]);
        gx.push(x);
        gy.push(y);
    }
    [
        PhysicalField::from_values_unchecked(px.grid(), gx),
        PhysicalField::from_values_unchecked(px.grid(), gy),
    ]
}

/// `E(u) = ∫ ½ν|∇u|² + F(u) dx`.
///
/// The gradient term uses Parseval; the potential is integrated by grid
/// quadrature, which is exact for band-limited `u` because the grid resolves
/// quartic products.
pub fn energy_ch(u: &SpectralField, nu: f64) -> f64 {
    energy_ch_sampled(u, &u.to_physical_unchecked(), nu)
}

/// [`energy_ch`] with the physical samples of `u` already at hand.
pub(crate) fn energy_ch_sampled(u: &SpectralField, phys: &PhysicalField, nu: f64) -> f64 {
    let grad = u.norm(Norm::Hdot1);
    0.5 * nu * grad * grad + phys.values().iter().map(|v| potential_ch(*v)).sum::<f64>() * u.grid().cell_area()
}

/// `E(h) = ν/2 ‖Δh‖₂² + ∫ G(∇h) dx`.
pub fn energy_mbe(h: &SpectralField, nu: f64) -> f64 {
    energy_mbe_sampled(h, &h.gradient_physical(), nu)
}

/// [`energy_mbe`] with the physical samples of `∇h` already at hand.
pub(crate) fn energy_mbe_sampled(h: &SpectralField, grad: &[PhysicalField; 2], nu: f64) -> f64 {
    let lap = h.norm(Norm::Hdots(2.0));
    let [gx, gy] = grad;
    let quartic: f64 = gx
        .values()
        .iter()
        .zip(gy.values())
        .map(|(a, b)| potential_mbe([*a, *b]))
        .sum::<f64>()
        * h.grid().cell_area();
    0.5 * nu * lap * lap + quartic
}

/// `∫ u dx`, i.e. `coeff(0)`.
pub fn mass(u: &SpectralField) -> f64 {
    u.mean_coeff()
}

/// The sup-norm quantity entering the stabilization rule: `‖u₀‖∞²` for CH,
/// `‖∇h₀‖∞²` for MBE (grid maxima).
pub fn stabilization_sup_sq(kind: ModelKind, init: &SpectralField) -> f64 {
    let s = match kind {
        ModelKind::Ch => init.norm(Norm::Linf),
        ModelKind::Mbe => init.grad_sup_norm(),
    };
    s * s
}

/// `β (sup_sq + ν⁻¹ |ln ν|² + 1)`.
pub fn stabilization_constant(beta: f64, sup_sq: f64, nu: f64) -> f64 {
    let l = nu.ln().abs();
    beta * (sup_sq + l * l / nu + 1.0)
}

pub fn resolve_a(config: &ModelConfig, init: &SpectralField, beta: f64) -> Result<StabilizationPlan> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    let sup_sq = stabilization_sup_sq(config.kind, init);
    Ok(StabilizationPlan {
        beta: Some(beta),
        a: stabilization_constant(beta, sup_sq, config.nu),
        s_op: StabilizerOrder::Laplacian,
    })
}
