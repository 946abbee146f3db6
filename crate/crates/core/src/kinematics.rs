//! Brackets, moment families and the exact collision transforms.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm2(a: Vec3) -> f64 {
    dot(a, a)
}

/// Tolerance on `|sigma| = 1` for collision parameters.
pub const UNIT_TOL: f64 = 1e-12;

/// `<v> = sqrt(1 + |v|^2 / 2)`.
#[inline]
pub fn bracket_v(v: Vec3) -> f64 {
    bracket_v_sq(v).sqrt()
}

/// `<I> = sqrt(1 + I / m)`.
pub fn bracket_i(internal: f64, mass: f64) -> Result<f64> {
    check_internal(internal)?;
    Ok(bracket_i_sq(internal, mass).sqrt())
}

/// `<v, I> = sqrt(1 + |v|^2 / 2 + I / m)`.
pub fn bracket_vi(v: Vec3, internal: f64, mass: f64) -> Result<f64> {
    check_internal(internal)?;
    Ok(bracket_vi_sq(v, internal, mass).sqrt())
}

#[inline]
pub(crate) fn bracket_v_sq(v: Vec3) -> f64 {
    1.0 + 0.5 * norm2(v)
}

#[inline]
pub(crate) fn bracket_i_sq(internal: f64, mass: f64) -> f64 {
    1.0 + internal / mass
}

#[inline]
pub(crate) fn bracket_vi_sq(v: Vec3, internal: f64, mass: f64) -> f64 {
    1.0 + 0.5 * norm2(v) + internal / mass
}

fn check_internal(internal: f64) -> Result<()> {
    if internal < 0.0 || internal.is_nan() {
        return Err(Error::NegativeInternalEnergy(internal));
    }
    Ok(())
}

/// Which bracket a polynomial moment is taken against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentFamily {
    #[serde(rename = "v")]
    Velocity,
    #[serde(rename = "I")]
    Internal,
    Total,
}

impl MomentFamily {
    pub fn label(self) -> &'static str {
        match self {
            MomentFamily::Velocity => "v",
            MomentFamily::Internal => "I",
            MomentFamily::Total => "total",
        }
    }

    /// Squared bracket of the family for one state.
    #[inline]
    pub(crate) fn bracket_sq(self, v: Vec3, internal: f64, mass: f64) -> f64 {
        match self {
            MomentFamily::Velocity => bracket_v_sq(v),
            MomentFamily::Internal => bracket_i_sq(internal, mass),
            MomentFamily::Total => bracket_vi_sq(v, internal, mass),
        }
    }
}

impl std::str::FromStr for MomentFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "v" | "velocity" => Ok(MomentFamily::Velocity),
            "I" | "i" | "internal" => Ok(MomentFamily::Internal),
            "total" | "vI" => Ok(MomentFamily::Total),
            other => Err(Error::InvalidParam(format!(
                "unknown moment family {other:?} (expected v, I or total)"
            ))),
        }
    }
}

/// One simulation molecule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub v: Vec3,
    pub internal: f64,
    pub weight: f64,
}

impl Particle {
    pub fn new(v: Vec3, internal: f64, weight: f64) -> Result<Self> {
        check_internal(internal)?;
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(Error::InvalidParam(format!(
                "particle weight must be > 0, got {weight}"
            )));
        }
        Ok(Self {
            v,
            internal,
            weight,
        })
    }
}

/// Chunk size of the partition-and-reduce moment sum. Fixed so the summation
/// order, and hence the rounding, does not depend on the thread count.
const MOMENT_CHUNK: usize = 4096;

/// Discrete surrogate for the distribution function.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    particles: Vec<Particle>,
    mass: f64,
    pub time: f64,
}

impl Ensemble {
    pub fn new(particles: Vec<Particle>, mass: f64) -> Result<Self> {
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::InvalidParam(format!("mass must be > 0, got {mass}")));
        }
        Ok(Self {
            particles,
            mass,
            time: 0.0,
        })
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub(crate) fn particles_mut(&mut self) -> &mut [Particle] {
        &mut self.particles
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// `sum_i w_i <.>_i^k` with the family bracket.
    pub fn moment(&self, family: MomentFamily, k: f64) -> Result<f64> {
        if self.particles.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        if !(k >= 0.0) {
            return Err(Error::InvalidParam(format!("moment order must be >= 0, got {k}")));
        }
        let half_k = 0.5 * k;
        let m = self.mass;
        let partial: Vec<f64> = self
            .particles
            .par_chunks(MOMENT_CHUNK)
            .map(|chunk| {
                chunk
                    .iter()
                    .map(|p| p.weight * family.bracket_sq(p.v, p.internal, m).powf(half_k))
                    .sum::<f64>()
            })
            .collect();
        Ok(partial.iter().sum())
    }

    pub fn total_weight(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    pub fn momentum(&self) -> Vec3 {
        self.particles
            .iter()
            .fold([0.0; 3], |acc, p| add(acc, scale(p.v, p.weight)))
    }

    /// `sum_i w_i |v_i|^2`.
    pub fn kinetic_sum(&self) -> f64 {
        self.particles.iter().map(|p| p.weight * norm2(p.v)).sum()
    }

    /// `sum_i w_i (m/2 |v_i|^2 + I_i)`.
    pub fn total_energy(&self) -> f64 {
        let m = self.mass;
        self.particles
            .iter()
            .map(|p| p.weight * (0.5 * m * norm2(p.v) + p.internal))
            .sum()
    }
}

/// Angular parameter of a frozen collision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrozenParams {
    sigma: Vec3,
}

impl FrozenParams {
    pub fn new(sigma: Vec3) -> Result<Self> {
        check_unit(sigma)?;
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> Vec3 {
        self.sigma
    }
}

/// Parameters `(sigma, r, R)` of a pure polyatomic collision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyParams {
    sigma: Vec3,
    r: f64,
    big_r: f64,
}

impl PolyParams {
    pub fn new(sigma: Vec3, r: f64, big_r: f64) -> Result<Self> {
        check_unit(sigma)?;
        if !(0.0..=1.0).contains(&r) || !(0.0..=1.0).contains(&big_r) {
            return Err(Error::InvalidParam(format!(
                "r and R must lie in [0, 1], got r = {r}, R = {big_r}"
            )));
        }
        Ok(Self { sigma, r, big_r })
    }

    pub fn sigma(&self) -> Vec3 {
        self.sigma
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn big_r(&self) -> f64 {
        self.big_r
    }
}

fn check_unit(sigma: Vec3) -> Result<()> {
    let n = norm2(sigma).sqrt();
    if !((n - 1.0).abs() <= UNIT_TOL) {
        return Err(Error::InvalidParam(format!(
            "sigma must be a unit vector, |sigma| = {n}"
        )));
    }
    Ok(())
}

/// Frozen (elastic) collision rule. Internal energies are not arguments
/// because the rule never touches them. Equal velocities give a no-op.
#[inline]
pub fn frozen_transform(v: Vec3, v_star: Vec3, params: &FrozenParams) -> (Vec3, Vec3) {
    let u = sub(v, v_star);
    let half_u = 0.5 * norm2(u).sqrt();
    if half_u == 0.0 {
        return (v, v_star);
    }
    let center = scale(add(v, v_star), 0.5);
    let shift = scale(params.sigma, half_u);
    (add(center, shift), sub(center, shift))
}

/// `E = m (|v - v*|^2 / 4 + (I + I*) / m)`.
#[inline]
pub fn total_energy(v: Vec3, v_star: Vec3, internal: f64, internal_star: f64, mass: f64) -> f64 {
    mass * (0.25 * norm2(sub(v, v_star)) + (internal + internal_star) / mass)
}

/// Post-collision state of a pure polyatomic collision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyOutcome {
    pub v: Vec3,
    pub v_star: Vec3,
    pub internal: f64,
    pub internal_star: f64,
}

/// Pure polyatomic collision rule: a fraction `R` of the pair energy goes to
/// relative translation, and the rest is split `r : (1 - r)` between the two
/// internal energies. `E = 0` is a no-op.
#[inline]
pub fn poly_transform(
    v: Vec3,
    v_star: Vec3,
    internal: f64,
    internal_star: f64,
    mass: f64,
    params: &PolyParams,
) -> PolyOutcome {
    let e = total_energy(v, v_star, internal, internal_star, mass);
    if e == 0.0 {
        return PolyOutcome {
            v,
            v_star,
            internal,
            internal_star,
        };
    }
    let center = scale(add(v, v_star), 0.5);
    let speed = (params.big_r * e / mass).sqrt();
    let shift = scale(params.sigma, speed);
    let rest = (1.0 - params.big_r) * e;
    PolyOutcome {
        v: add(center, shift),
        v_star: sub(center, shift),
        internal: params.r * rest,
        internal_star: (1.0 - params.r) * rest,
    }
}
