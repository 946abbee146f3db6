//! Collision-kernel models for the frozen and polyatomic channels.
//!
//! A kernel factorizes as `b(u_hat . sigma) * B~`, where `b` is an angular
//! density with known L1 norm on the sphere and `B~` sits between the lower
//! and upper hard-potential bounds `lo * (E/m)^(zeta/2)` and
//! `hi * (E/m)^(zeta/2)`. For the polyatomic channel `lo` and `hi` are
//! functions of the energy-split parameters `(r, R)`, integrated against the
//! weight `r^a (1-r)^a (1-R)^(2a+1) sqrt(R)`.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta as beta_fn;

use crate::error::{Error, Result};
use crate::gauss::Rule;
use crate::kinematics::{dot, norm2, scale, sub, total_energy, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Frozen,
    Polyatomic,
}

impl Channel {
    pub fn label(self) -> &'static str {
        match self {
            Channel::Frozen => "frozen",
            Channel::Polyatomic => "polyatomic",
        }
    }
}

/// Piecewise-linear angular density on `cos(theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularTable {
    nodes: Vec<(f64, f64)>,
    /// Cumulative integral of the shape over `cos(theta)` at each node.
    cumulative: Vec<f64>,
    l1_norm: f64,
    /// `b(c) = scale * shape(c)`.
    scale: f64,
}

impl AngularTable {
    fn shape_at(&self, c: f64) -> f64 {
        let c = c.clamp(-1.0, 1.0);
        let idx = self.nodes.partition_point(|&(x, _)| x < c);
        if idx == 0 {
            return self.nodes[0].1;
        }
        if idx >= self.nodes.len() {
            return self.nodes[self.nodes.len() - 1].1;
        }
        let (x0, y0) = self.nodes[idx - 1];
        let (x1, y1) = self.nodes[idx];
        if x1 == x0 {
            return y1;
        }
        y0 + (y1 - y0) * (c - x0) / (x1 - x0)
    }

    fn sample_cos<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let total = *self.cumulative.last().expect("table has nodes");
        let target = rng.random::<f64>() * total;
        let seg = self
            .cumulative
            .partition_point(|&c| c <= target)
            .clamp(1, self.nodes.len() - 1);
        let (x0, y0) = self.nodes[seg - 1];
        let (x1, y1) = self.nodes[seg];
        let h = x1 - x0;
        let t = (target - self.cumulative[seg - 1]).max(0.0);
        if h <= 0.0 {
            return x1;
        }
        let a = 0.5 * (y1 - y0) / h;
        // Root of a x^2 + y0 x = t in the cancellation-free form.
        let disc = (y0 * y0 + 4.0 * a * t).max(0.0);
        let denom = y0 + disc.sqrt();
        let x = if denom > 0.0 { 2.0 * t / denom } else { 0.0 };
        (x0 + x.min(h)).clamp(-1.0, 1.0)
    }
}

/// Angular part `b(u_hat . sigma)` of a kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum AngularModel {
    Isotropic { l1_norm: f64 },
    Tabulated(AngularTable),
}

impl Default for AngularModel {
    fn default() -> Self {
        AngularModel::Isotropic { l1_norm: 1.0 }
    }
}

impl AngularModel {
    pub fn isotropic(l1_norm: f64) -> Result<Self> {
        check_positive("||b||", l1_norm)?;
        Ok(AngularModel::Isotropic { l1_norm })
    }

    /// Table of `(cos theta, shape)` nodes covering `[-1, 1]`, rescaled so the
    /// sphere integral equals `l1_norm`. Repeated abscissae encode jumps.
    pub fn tabulated(nodes: Vec<(f64, f64)>, l1_norm: f64) -> Result<Self> {
        check_positive("||b||", l1_norm)?;
        if nodes.len() < 2 {
            return Err(Error::InvalidParam("angular table needs at least two nodes".into()));
        }
        if nodes[0].0 != -1.0 || nodes[nodes.len() - 1].0 != 1.0 {
            return Err(Error::InvalidParam("angular table must span cos(theta) in [-1, 1]".into()));
        }
        if nodes.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::InvalidParam("angular table abscissae must be non-decreasing".into()));
        }
        if nodes.iter().any(|&(_, y)| !(y >= 0.0) || !y.is_finite()) {
            return Err(Error::InvalidParam("angular table values must be finite and >= 0".into()));
        }
        let mut cumulative = Vec::with_capacity(nodes.len());
        cumulative.push(0.0);
        for w in nodes.windows(2) {
            let area = 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0);
            cumulative.push(cumulative.last().unwrap() + area);
        }
        let total = *cumulative.last().unwrap();
        if !(total > 0.0) {
            return Err(Error::InvalidParam("angular table has zero mass".into()));
        }
        let scale = l1_norm / (TAU * total);
        Ok(AngularModel::Tabulated(AngularTable {
            nodes,
            cumulative,
            l1_norm,
            scale,
        }))
    }

    pub fn l1_norm(&self) -> f64 {
        match self {
            AngularModel::Isotropic { l1_norm } => *l1_norm,
            AngularModel::Tabulated(t) => t.l1_norm,
        }
    }

    pub fn is_isotropic(&self) -> bool {
        matches!(self, AngularModel::Isotropic { .. })
    }

    /// Pointwise value `b(cos theta)`.
    pub fn value(&self, cos_theta: f64) -> f64 {
        match self {
            AngularModel::Isotropic { l1_norm } => l1_norm / (4.0 * PI),
            AngularModel::Tabulated(t) => t.scale * t.shape_at(cos_theta),
        }
    }

    /// Rule in `cos theta` whose weights carry `2 pi b(cos theta)`, so that
    /// for an integrand symmetric about `u_hat` the rule sums to the sphere
    /// integral. Tabulated densities get a composite rule split at the table
    /// nodes, which integrates `b` itself exactly.
    pub fn polar_rule(&self, n: usize) -> Result<Rule> {
        match self {
            AngularModel::Isotropic { l1_norm } => {
                let mut rule = Rule::legendre(n, -1.0, 1.0)?;
                let b0 = l1_norm / (4.0 * PI);
                rule.weights.iter_mut().for_each(|w| *w *= TAU * b0);
                Ok(rule)
            }
            AngularModel::Tabulated(t) => {
                let segments: Vec<(f64, f64)> = t
                    .nodes
                    .windows(2)
                    .filter(|w| w[1].0 > w[0].0)
                    .map(|w| (w[0].0, w[1].0))
                    .collect();
                let per = (n / segments.len()).max(2);
                let mut nodes = Vec::new();
                let mut weights = Vec::new();
                for (a, b) in segments {
                    let seg = Rule::legendre(per, a, b)?;
                    for (&x, &w) in seg.nodes.iter().zip(&seg.weights) {
                        nodes.push(x);
                        weights.push(w * TAU * self.value(x));
                    }
                }
                Ok(Rule { nodes, weights })
            }
        }
    }

    /// Draws `sigma` with density `b(u_hat . sigma) / ||b||` on the sphere.
    pub fn sample_sigma<R: Rng + ?Sized>(&self, u_hat: Vec3, rng: &mut R) -> Vec3 {
        let c = match self {
            AngularModel::Isotropic { .. } => rng.random_range(-1.0..=1.0),
            AngularModel::Tabulated(t) => t.sample_cos(rng),
        };
        let phi = rng.random_range(0.0..TAU);
        let (e1, e2) = orthonormal_frame(u_hat);
        let s = (1.0 - c * c).max(0.0).sqrt();
        let (sp, cp) = phi.sin_cos();
        let sigma = [
            c * u_hat[0] + s * (cp * e1[0] + sp * e2[0]),
            c * u_hat[1] + s * (cp * e1[1] + sp * e2[1]),
            c * u_hat[2] + s * (cp * e1[2] + sp * e2[2]),
        ];
        scale(sigma, 1.0 / norm2(sigma).sqrt())
    }
}

/// Two unit vectors completing `n` to a right-handed orthonormal frame.
pub fn orthonormal_frame(n: Vec3) -> (Vec3, Vec3) {
    let a = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let e1 = sub(a, scale(n, dot(a, n)));
    let e1 = scale(e1, 1.0 / norm2(e1).sqrt());
    let e2 = [
        n[1] * e1[2] - n[2] * e1[1],
        n[2] * e1[0] - n[0] * e1[2],
        n[0] * e1[1] - n[1] * e1[0],
    ];
    (e1, e2)
}

/// `(r, R)` profile of the polyatomic kernel bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RrWeight {
    Constant { value: f64 },
    /// `c0 + c_r r + c_big_r R`.
    Linear { c0: f64, c_r: f64, c_big_r: f64 },
}

impl Default for RrWeight {
    fn default() -> Self {
        RrWeight::Constant { value: 1.0 }
    }
}

impl RrWeight {
    #[inline]
    pub fn eval(&self, r: f64, big_r: f64) -> f64 {
        match *self {
            RrWeight::Constant { value } => value,
            RrWeight::Linear { c0, c_r, c_big_r } => c0 + c_r * r + c_big_r * big_r,
        }
    }

    fn corners(&self) -> [f64; 4] {
        [
            self.eval(0.0, 0.0),
            self.eval(1.0, 0.0),
            self.eval(0.0, 1.0),
            self.eval(1.0, 1.0),
        ]
    }

    pub fn sup(&self) -> f64 {
        self.corners().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn inf(&self) -> f64 {
        self.corners().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn is_constant(&self) -> bool {
        match *self {
            RrWeight::Constant { .. } => true,
            RrWeight::Linear { c_r, c_big_r, .. } => c_r == 0.0 && c_big_r == 0.0,
        }
    }

    /// Integral against `r^a (1-r)^a (1-R)^(2a+1) sqrt(R) dr dR`.
    pub fn weighted_integral(&self, alpha: f64) -> f64 {
        let measure = rr_measure(alpha);
        match *self {
            RrWeight::Constant { value } => value * measure,
            RrWeight::Linear { c0, c_r, c_big_r } => {
                measure * (c0 + 0.5 * c_r + c_big_r * mean_big_r(alpha))
            }
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            RrWeight::Constant { value } => RrWeight::Constant {
                value: value * factor,
            },
            RrWeight::Linear { c0, c_r, c_big_r } => RrWeight::Linear {
                c0: c0 * factor,
                c_r: c_r * factor,
                c_big_r: c_big_r * factor,
            },
        }
    }
}

/// Total mass of the `(r, R)` weight: `B(a+1, a+1) B(3/2, 2a+2)`.
pub fn rr_measure(alpha: f64) -> f64 {
    beta_fn(alpha + 1.0, alpha + 1.0) * beta_fn(1.5, 2.0 * alpha + 2.0)
}

/// Mean of `R ~ Beta(3/2, 2a+2)`.
fn mean_big_r(alpha: f64) -> f64 {
    1.5 / (2.0 * alpha + 3.5)
}

/// Where the actual `B~` sits inside its sandwich.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelModel {
    /// `B~` equals the upper bound.
    #[default]
    Upper,
    /// `B~` equals the lower bound.
    Lower,
    /// `B~ = (lo + (hi - lo) h) (E/m)^(zeta/2)` with `h = e / (1 + e)`, `e = E/m`.
    Blend,
}

/// Full description of one collision channel.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    channel: Channel,
    zeta: f64,
    c_lower: f64,
    c_upper: f64,
    angular: AngularModel,
    alpha: f64,
    rr_lower: RrWeight,
    rr_upper: RrWeight,
    mass: f64,
    model: KernelModel,
    samplers: Option<(Beta<f64>, Beta<f64>)>,
}

impl KernelSpec {
    /// Frozen channel with the default model `B~ = (E/m)^(zeta/2)` and
    /// isotropic `b` of unit norm.
    pub fn frozen(zeta: f64, mass: f64) -> Result<Self> {
        Self {
            channel: Channel::Frozen,
            zeta,
            c_lower: 1.0,
            c_upper: 1.0,
            angular: AngularModel::default(),
            alpha: 0.0,
            rr_lower: RrWeight::default(),
            rr_upper: RrWeight::default(),
            mass,
            model: KernelModel::Upper,
            samplers: None,
        }
        .validated()
    }

    /// Polyatomic channel with `b~ = 1` on both sides of the sandwich.
    pub fn polyatomic(zeta: f64, alpha: f64, mass: f64) -> Result<Self> {
        Self {
            channel: Channel::Polyatomic,
            zeta,
            c_lower: 1.0,
            c_upper: 1.0,
            angular: AngularModel::default(),
            alpha,
            rr_lower: RrWeight::default(),
            rr_upper: RrWeight::default(),
            mass,
            model: KernelModel::Upper,
            samplers: None,
        }
        .validated()
    }

    pub fn with_angular(mut self, angular: AngularModel) -> Result<Self> {
        self.angular = angular;
        self.validated()
    }

    pub fn with_sandwich(mut self, c_lower: f64, c_upper: f64) -> Result<Self> {
        self.c_lower = c_lower;
        self.c_upper = c_upper;
        self.validated()
    }

    pub fn with_rr(mut self, lower: RrWeight, upper: RrWeight) -> Result<Self> {
        self.rr_lower = lower;
        self.rr_upper = upper;
        self.validated()
    }

    pub fn with_model(mut self, model: KernelModel) -> Result<Self> {
        self.model = model;
        self.validated()
    }

    fn validated(mut self) -> Result<Self> {
        check_positive("mass", self.mass)?;
        match self.channel {
            Channel::Frozen => {
                if !(0.0..=2.0).contains(&self.zeta) {
                    return Err(Error::InvalidParam(format!(
                        "frozen rate zeta_f must lie in [0, 2], got {}",
                        self.zeta
                    )));
                }
                check_positive("c_zeta", self.c_lower)?;
                if !(self.c_upper >= self.c_lower) || !self.c_upper.is_finite() {
                    return Err(Error::InvalidParam(format!(
                        "C_zeta = {} must be >= c_zeta = {}",
                        self.c_upper, self.c_lower
                    )));
                }
            }
            Channel::Polyatomic => {
                if !(self.zeta > 0.0 && self.zeta <= 2.0) {
                    return Err(Error::InvalidParam(format!(
                        "polyatomic rate zeta must lie in (0, 2], got {}",
                        self.zeta
                    )));
                }
                if !(self.alpha > -1.0) || !self.alpha.is_finite() {
                    return Err(Error::InvalidParam(format!(
                        "alpha must be > -1, got {}",
                        self.alpha
                    )));
                }
                let lo = self.rr_lower.corners();
                let hi = self.rr_upper.corners();
                if lo.iter().any(|&x| !(x >= 0.0)) {
                    return Err(Error::InvalidParam("b~_lb(r, R) must be >= 0 on [0,1]^2".into()));
                }
                if lo.iter().zip(&hi).any(|(l, h)| !(l <= h)) {
                    return Err(Error::InvalidParam("b~_lb(r, R) must not exceed b~_ub(r, R)".into()));
                }
                if !(self.rr_upper.sup() > 0.0) {
                    return Err(Error::InvalidParam("b~_ub(r, R) must be positive somewhere".into()));
                }
                let a1 = self.alpha + 1.0;
                let r = Beta::new(a1, a1).map_err(|e| Error::InvalidParam(e.to_string()))?;
                let big_r = Beta::new(1.5, 2.0 * self.alpha + 2.0)
                    .map_err(|e| Error::InvalidParam(e.to_string()))?;
                self.samplers = Some((r, big_r));
            }
        }
        Ok(self)
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn c_lower(&self) -> f64 {
        self.c_lower
    }

    pub fn c_upper(&self) -> f64 {
        self.c_upper
    }

    pub fn angular(&self) -> &AngularModel {
        &self.angular
    }

    pub fn norm_b(&self) -> f64 {
        self.angular.l1_norm()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rr_lower(&self) -> &RrWeight {
        &self.rr_lower
    }

    pub fn rr_upper(&self) -> &RrWeight {
        &self.rr_upper
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn model(&self) -> KernelModel {
        self.model
    }

    #[inline]
    fn blend_weight(e_over_m: f64) -> f64 {
        e_over_m / (1.0 + e_over_m)
    }

    #[inline]
    fn energy_power(&self, e_over_m: f64) -> f64 {
        if self.zeta == 0.0 {
            1.0
        } else {
            e_over_m.powf(0.5 * self.zeta)
        }
    }

    /// `b~(r, R)` of the actual kernel at reduced pair energy `e = E/m`.
    #[inline]
    fn rr_actual(&self, e_over_m: f64, r: f64, big_r: f64) -> f64 {
        match self.model {
            KernelModel::Upper => self.rr_upper.eval(r, big_r),
            KernelModel::Lower => self.rr_lower.eval(r, big_r),
            KernelModel::Blend => {
                let lo = self.rr_lower.eval(r, big_r);
                lo + (self.rr_upper.eval(r, big_r) - lo) * Self::blend_weight(e_over_m)
            }
        }
    }

    fn frozen_factor(&self, e_over_m: f64) -> f64 {
        match self.model {
            KernelModel::Upper => self.c_upper,
            KernelModel::Lower => self.c_lower,
            KernelModel::Blend => {
                self.c_lower + (self.c_upper - self.c_lower) * Self::blend_weight(e_over_m)
            }
        }
    }

    /// `B~` as a function of `e = E/m` (and `(r, R)` for the polyatomic channel).
    #[inline]
    pub fn tilde_b(&self, e_over_m: f64, rr: Option<(f64, f64)>) -> Result<f64> {
        match self.channel {
            Channel::Frozen => Ok(self.frozen_factor(e_over_m) * self.energy_power(e_over_m)),
            Channel::Polyatomic => {
                let (r, big_r) = rr.ok_or(Error::MissingRr)?;
                Ok(self.rr_actual(e_over_m, r, big_r) * self.energy_power(e_over_m))
            }
        }
    }

    /// Kernel value `B~(v, v*, I, I* [, r, R])`.
    pub fn kernel_eval(
        &self,
        v: Vec3,
        v_star: Vec3,
        internal: f64,
        internal_star: f64,
        rr: Option<(f64, f64)>,
    ) -> Result<f64> {
        if internal < 0.0 || internal_star < 0.0 {
            return Err(Error::NegativeInternalEnergy(internal.min(internal_star)));
        }
        let e = total_energy(v, v_star, internal, internal_star, self.mass) / self.mass;
        self.tilde_b(e, rr)
    }

    /// Lower and upper sandwich values at `e = E/m`.
    pub fn sandwich(&self, e_over_m: f64, rr: Option<(f64, f64)>) -> Result<(f64, f64)> {
        let p = self.energy_power(e_over_m);
        match self.channel {
            Channel::Frozen => Ok((self.c_lower * p, self.c_upper * p)),
            Channel::Polyatomic => {
                let (r, big_r) = rr.ok_or(Error::MissingRr)?;
                Ok((self.rr_lower.eval(r, big_r) * p, self.rr_upper.eval(r, big_r) * p))
            }
        }
    }

    /// Mass of the `(r, R)` weight alone.
    pub fn rr_measure(&self) -> f64 {
        rr_measure(self.alpha)
    }

    /// Weighted L1 norm of `b~_ub`.
    pub fn rr_upper_norm(&self) -> f64 {
        self.rr_upper.weighted_integral(self.alpha)
    }

    /// Weighted L1 norm of `b~_lb`.
    pub fn rr_lower_norm(&self) -> f64 {
        self.rr_lower.weighted_integral(self.alpha)
    }

    /// Collision rate of one pair: `B` integrated over `sigma` (and `(r, R)`).
    #[inline]
    pub fn pair_rate(&self, e_over_m: f64) -> f64 {
        let p = self.energy_power(e_over_m);
        let nb = self.norm_b();
        match self.channel {
            Channel::Frozen => nb * self.frozen_factor(e_over_m) * p,
            Channel::Polyatomic => {
                let lo = self.rr_lower_norm();
                let hi = self.rr_upper_norm();
                let rr = match self.model {
                    KernelModel::Upper => hi,
                    KernelModel::Lower => lo,
                    KernelModel::Blend => lo + (hi - lo) * Self::blend_weight(e_over_m),
                };
                nb * rr * p
            }
        }
    }

    /// Upper bound on [`pair_rate`](Self::pair_rate) for any pair with
    /// `E <= e_max` (an energy, not divided by the mass).
    pub fn majorant_rate(&self, e_max: f64) -> f64 {
        let p = self.energy_power(e_max.max(0.0) / self.mass);
        match self.channel {
            Channel::Frozen => self.norm_b() * self.c_upper * p,
            Channel::Polyatomic => self.norm_b() * self.rr_upper_norm() * p,
        }
    }

    /// Draws `(r, R)` with density proportional to the actual `b~(r, R)`
    /// times the `(r, R)` weight, by acceptance-rejection against the Beta
    /// proposal `r ~ Beta(a+1, a+1)`, `R ~ Beta(3/2, 2a+2)`.
    pub fn sample_rr<R: Rng + ?Sized>(&self, e_over_m: f64, rng: &mut R) -> Result<(f64, f64)> {
        let (pr, pbig) = self.samplers.as_ref().ok_or(Error::WrongChannel {
            operation: "sample_rr",
            expected: "polyatomic",
        })?;
        let constant = match self.model {
            KernelModel::Upper => self.rr_upper.is_constant(),
            KernelModel::Lower => self.rr_lower.is_constant(),
            KernelModel::Blend => self.rr_upper.is_constant() && self.rr_lower.is_constant(),
        };
        if constant {
            return Ok((pr.sample(rng), pbig.sample(rng)));
        }
        let envelope = self.rr_upper.sup();
        loop {
            let r = pr.sample(rng);
            let big_r = pbig.sample(rng);
            if rng.random::<f64>() * envelope <= self.rr_actual(e_over_m, r, big_r) {
                return Ok((r, big_r));
            }
        }
    }
}

/// Convex pairing `omega * polyatomic + (1 - omega) * frozen`.
#[derive(Debug, Clone)]
pub struct MixtureSpec {
    omega: f64,
    frozen: KernelSpec,
    poly: KernelSpec,
}

impl MixtureSpec {
    pub fn new(omega: f64, frozen: KernelSpec, poly: KernelSpec) -> Result<Self> {
        if !(0.0..=1.0).contains(&omega) {
            return Err(Error::InvalidParam(format!("omega must lie in [0, 1], got {omega}")));
        }
        if frozen.channel != Channel::Frozen || poly.channel != Channel::Polyatomic {
            return Err(Error::InvalidParam("mixture needs one frozen and one polyatomic kernel".into()));
        }
        if frozen.mass != poly.mass {
            return Err(Error::InvalidParam(format!(
                "both channels must share the molecular mass ({} vs {})",
                frozen.mass, poly.mass
            )));
        }
        Ok(Self { omega, frozen, poly })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn frozen(&self) -> &KernelSpec {
        &self.frozen
    }

    pub fn poly(&self) -> &KernelSpec {
        &self.poly
    }

    pub fn mass(&self) -> f64 {
        self.frozen.mass
    }

    /// Rate weight of each channel in the mixed operator.
    pub fn channel_weight(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Frozen => 1.0 - self.omega,
            Channel::Polyatomic => self.omega,
        }
    }

    pub fn kernel(&self, channel: Channel) -> &KernelSpec {
        match channel {
            Channel::Frozen => &self.frozen,
            Channel::Polyatomic => &self.poly,
        }
    }
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidParam(format!("{name} must be finite and > 0, got {x}")));
    }
    Ok(())
}
