//! Refraction, reflection and Fresnel reflectance at dielectric interfaces,
//! and light-path tracing through a transparent object.
//!
//! All direction arguments are unit vectors; normals are oriented against the
//! incoming direction (`d·n <= 0`).

mod path;

pub use path::{trace_reflection_path, trace_refraction_path, LightPath, PathEvent, Terminal, TraceSettings};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

/// Accepted deviation of `|v|` from one.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Negative `γ` values above this are treated as grazing refraction.
pub const GAMMA_CLAMP: f64 = -1e-12;

pub const DEFAULT_MAX_EVENTS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpticsError {
    #[error("non-unit vector (|v| = {0})")]
    NonUnit(f64),
    #[error("refractive indices must be positive, got {0} and {1}")]
    NonPositiveIndex(f64, f64),
    #[error("normal must face the incoming ray (d·n = {0})")]
    NormalAlongRay(f64),
    #[error("refractive index {0} is below 1")]
    InvalidMedium(f64),
    #[error("max_events must be at least 2, got {0}")]
    MaxEvents(usize),
}

/// Homogeneous dielectric with refractive index `>= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Medium(f64);

impl Medium {
    pub const AIR: Medium = Medium(1.0);
    pub const WATER: Medium = Medium(1.333);
    pub const PLASTIC: Medium = Medium(1.45);
    pub const GLASS: Medium = Medium(1.5);
    pub const DIAMOND: Medium = Medium(2.418);

    pub fn new(refractive_index: f64) -> Result<Self, OpticsError> {
        if refractive_index.is_finite() && refractive_index >= 1.0 {
            Ok(Self(refractive_index))
        } else {
            Err(OpticsError::InvalidMedium(refractive_index))
        }
    }

    /// Reference materials by name.
    pub fn named(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "air" => Some(Self::AIR),
            "water" => Some(Self::WATER),
            "plastic" => Some(Self::PLASTIC),
            "glass" => Some(Self::GLASS),
            "diamond" => Some(Self::DIAMOND),
            _ => None,
        }
    }

    pub fn index(&self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Medium {
    type Error = OpticsError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<Medium> for f64 {
    fn from(m: Medium) -> f64 {
        m.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Refraction {
    Refracted(Vec3),
    /// The mirrored direction when no transmitted ray exists.
    TotalInternalReflection(Vec3),
}

impl Refraction {
    pub fn direction(&self) -> Vec3 {
        match *self {
            Refraction::Refracted(d) | Refraction::TotalInternalReflection(d) => d,
        }
    }

    pub fn is_tir(&self) -> bool {
        matches!(self, Refraction::TotalInternalReflection(_))
    }
}

fn check_unit(v: &Vec3) -> Result<(), OpticsError> {
    let n = v.norm();
    if (n - 1.0).abs() > UNIT_TOLERANCE || !n.is_finite() {
        return Err(OpticsError::NonUnit(n));
    }
    Ok(())
}

fn check_facing(d: &Vec3, n: &Vec3) -> Result<f64, OpticsError> {
    check_unit(d)?;
    check_unit(n)?;
    let cos = -d.dot(n);
    if cos < -UNIT_TOLERANCE {
        return Err(OpticsError::NormalAlongRay(-cos));
    }
    Ok(cos.clamp(0.0, 1.0))
}

/// `γ = 1 − α²(1 − β²)` with the near-zero clamp applied.
fn gamma(alpha: f64, beta: f64) -> f64 {
    let g = 1.0 - alpha * alpha * (1.0 - beta * beta);
    if g < 0.0 && g > GAMMA_CLAMP {
        0.0
    } else {
        g
    }
}

/// Mirror reflection `d − 2(d·n)n`.
pub fn reflect_direction(d: &Vec3, n: &Vec3) -> Result<Vec3, OpticsError> {
    check_unit(d)?;
    check_unit(n)?;
    Ok(d - n * (2.0 * d.dot(n)))
}

/// Snell refraction from index `nu_in` into `nu_out`.
///
/// With `α = ν_in/ν_out` and `β = −d·n`, the transmitted direction is
/// `αd + (αβ − √γ)n`; when `γ < 0` the ray is totally internally reflected.
pub fn refract_direction(d: &Vec3, n: &Vec3, nu_in: f64, nu_out: f64) -> Result<Refraction, OpticsError> {
    if !(nu_in > 0.0 && nu_out > 0.0) {
        return Err(OpticsError::NonPositiveIndex(nu_in, nu_out));
    }
    let beta = check_facing(d, n)?;
    let alpha = nu_in / nu_out;
    let g = gamma(alpha, beta);
    if g < 0.0 {
        return Ok(Refraction::TotalInternalReflection(d - n * (2.0 * d.dot(n))));
    }
    let t = d * alpha + n * (alpha * beta - g.sqrt());
    Ok(Refraction::Refracted(t.normalize()))
}

/// Fresnel power reflectances for p- and s-polarized light.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FresnelCoefficients {
    pub parallel: f64,
    pub perpendicular: f64,
}

impl FresnelCoefficients {
    /// Unpolarized reflectance `(R_p + R_s) / 2`.
    pub fn average(&self) -> f64 {
        0.5 * (self.parallel + self.perpendicular)
    }
}

/// Reflectances for light travelling from `nu0` into `nu1`; both are one
/// under total internal reflection.
pub fn fresnel_reflectance(d: &Vec3, n: &Vec3, nu0: f64, nu1: f64) -> Result<FresnelCoefficients, OpticsError> {
    if !(nu0 > 0.0 && nu1 > 0.0) {
        return Err(OpticsError::NonPositiveIndex(nu0, nu1));
    }
    let beta = check_facing(d, n)?;
    let g = gamma(nu0 / nu1, beta);
    if g < 0.0 {
        return Ok(FresnelCoefficients { parallel: 1.0, perpendicular: 1.0 });
    }
    let root = g.sqrt();
    let ratio = |num: f64, den: f64| if den == 0.0 { 1.0 } else { ((num / den).powi(2)).min(1.0) };
    Ok(FresnelCoefficients {
        parallel: ratio(nu1 * beta - nu0 * root, nu1 * beta + nu0 * root),
        perpendicular: ratio(nu0 * beta - nu1 * root, nu0 * beta + nu1 * root),
    })
}
