//! Moment-bound constants and the time envelopes they produce.
//!
//! The frozen-channel chain runs `C_k -> (A~, c~, L, D_k) -> eps, K1, K2 ->
//! A_k, B_k -> E_k`. The mixed-channel chain takes the polyatomic constants
//! `A_bar, B_bar, D_bar` as inputs and produces `A^w, B^w, D^w, E^w` plus the
//! interpolated small-order bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{Ensemble, MomentFamily};

/// Moments a bound set depends on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSnapshot {
    pub m0: f64,
    pub m2: f64,
    pub m2_v: f64,
    pub m2_i: f64,
    pub mz_v: f64,
    pub mz_i: f64,
}

impl MomentSnapshot {
    pub fn new(m0: f64, m2: f64, m2_v: f64, m2_i: f64, mz_v: f64, mz_i: f64) -> Result<Self> {
        let s = Self { m0, m2, m2_v, m2_i, mz_v, mz_i };
        for (name, value) in s.named() {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(Error::DegenerateMoment { name, value });
            }
        }
        Ok(s)
    }

    fn named(&self) -> [(&'static str, f64); 6] {
        [
            ("m0", self.m0),
            ("m2", self.m2),
            ("m2_v", self.m2_v),
            ("m2_I", self.m2_i),
            ("mz_v", self.mz_v),
            ("mz_I", self.mz_i),
        ]
    }

    /// Moments of an ensemble with `zeta`-moments at order `zeta`.
    pub fn from_ensemble(ens: &Ensemble, zeta: f64) -> Result<Self> {
        Self::new(
            ens.moment(MomentFamily::Total, 0.0)?,
            ens.moment(MomentFamily::Total, 2.0)?,
            ens.moment(MomentFamily::Velocity, 2.0)?,
            ens.moment(MomentFamily::Internal, 2.0)?,
            ens.moment(MomentFamily::Velocity, zeta)?,
            ens.moment(MomentFamily::Internal, zeta)?,
        )
    }

    /// Snapshot whose frozen-channel constants stay valid along a frozen
    /// trajectory: `m0`, `m2_v` and every `I`-moment are conserved, and the
    /// velocity `zeta`-moment is replaced by its conserved upper bound `m2_v`.
    pub fn frozen_invariant(&self) -> Self {
        Self {
            mz_v: self.m2_v,
            ..*self
        }
    }

    /// Same snapshot with every moment multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            m0: self.m0 * factor,
            m2: self.m2 * factor,
            m2_v: self.m2_v * factor,
            m2_i: self.m2_i * factor,
            mz_v: self.mz_v * factor,
            mz_i: self.mz_i * factor,
        }
    }

    fn require_positive(&self, names: &[&'static str]) -> Result<()> {
        for (name, value) in self.named() {
            if names.contains(&name) && !(value > 0.0) {
                return Err(Error::DegenerateMoment { name, value });
            }
        }
        Ok(())
    }
}

/// `A~_k`, `c~_zeta`, `L` and `D_k` of the frozen channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ElementaryConstants {
    pub a_tilde: f64,
    pub c_tilde: f64,
    pub l: f64,
    pub d_k: f64,
}

/// `D_k = 2^(k/2+2) C_zeta ||b||`.
pub fn frozen_d_k(k: f64, big_c_zeta: f64, norm_b: f64) -> f64 {
    2f64.powf(0.5 * k + 2.0) * big_c_zeta * norm_b
}

/// `L = 2^-zeta min(1, 2^(1-zeta))`.
pub fn l_constant(zeta: f64) -> f64 {
    2f64.powf(-zeta) * 1f64.min(2f64.powf(1.0 - zeta))
}

pub fn elementary_constants(
    zeta: f64,
    c_zeta: f64,
    big_c_zeta: f64,
    norm_b: f64,
    c_k: f64,
    k: f64,
) -> Result<ElementaryConstants> {
    if !(k > 2.0) {
        return Err(Error::PovznerOrder(k));
    }
    if !(c_k < norm_b) {
        return Err(Error::NonPositiveDrift { c_k, norm_b });
    }
    Ok(ElementaryConstants {
        a_tilde: norm_b - c_k,
        c_tilde: c_zeta * 3f64.powf(0.5 * zeta - 1.0),
        l: l_constant(zeta),
        d_k: frozen_d_k(k, big_c_zeta, norm_b),
    })
}

/// Frozen-channel constants for a pair of densities `(f, g)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrozenBoundSet {
    pub k: f64,
    pub zeta: f64,
    pub c_k: f64,
    pub big_c_zeta: f64,
    pub a_tilde: f64,
    pub c_tilde: f64,
    pub l: f64,
    pub d_k: f64,
    pub delta: f64,
    pub eps_f: f64,
    pub eps_g: f64,
    /// `K1[f, g]`.
    pub k1: f64,
    /// `K2[f, g]`.
    pub k2: f64,
    pub a_fg: f64,
    pub a_gf: f64,
    pub b_fg: f64,
    pub b_gf: f64,
    /// `A_k[f, f]`.
    pub a_k: f64,
    /// `B_k[f, f]`.
    pub b_k: f64,
    pub e_k: f64,
}

struct FrozenChain {
    k: f64,
    zeta: f64,
    /// `2^(k/2+1) C_k C_zeta`.
    half: f64,
    at_ct: f64,
    delta: f64,
    l: f64,
}

impl FrozenChain {
    fn eps(&self, h: &MomentSnapshot) -> f64 {
        self.at_ct * h.m0 / (2.0 * self.half * h.m2_v)
    }

    fn k1(&self, f: &MomentSnapshot, g: &MomentSnapshot) -> f64 {
        let (k, z) = (self.k, self.zeta);
        let k1_tilde = self.at_ct * g.mz_v + self.half * g.mz_i;
        k1_tilde.powf((k - 2.0 + z) / z) * f.m2_v / (g.m0 * self.delta).powf((k - 2.0) / z)
    }

    fn k2(&self, f: &MomentSnapshot, g: &MomentSnapshot) -> f64 {
        let (k, z) = (self.k, self.zeta);
        let k2_tilde = 2.0 * self.half * g.m2_v;
        k2_tilde.powf(0.5 * (k + z)) * f.m0 / (g.m0 * self.delta).powf(0.5 * (k - 2.0 + z))
    }

    fn b(&self, f: &MomentSnapshot, g: &MomentSnapshot) -> f64 {
        self.k1(f, g)
            + self.k2(f, g)
            + self.half * self.eps(g).powf(-0.5 * (self.k - 2.0)) * f.mz_i * g.m2_v
    }

    fn a(&self, f: &MomentSnapshot, g: &MomentSnapshot) -> f64 {
        0.5 * self.at_ct * self.l * g.m0 * f.m2_v.powf(-self.zeta / (self.k - 2.0))
    }
}

fn check_finite(values: &[(&'static str, f64)]) -> Result<()> {
    for &(name, value) in values {
        if !value.is_finite() {
            return Err(Error::InvalidParam(format!("constant {name} is not finite ({value})")));
        }
    }
    Ok(())
}

/// Frozen-channel constant ledger for `(f, g)`; `E_k` uses `A_k[f, f]` and
/// `B_k[f, f]`.
pub fn frozen_bound_set(
    f: &MomentSnapshot,
    g: &MomentSnapshot,
    el: &ElementaryConstants,
    k: f64,
    zeta: f64,
    c_k: f64,
    big_c_zeta: f64,
) -> Result<FrozenBoundSet> {
    if !(k > 2.0) {
        return Err(Error::PovznerOrder(k));
    }
    if !(zeta > 0.0 && zeta <= 2.0) {
        return Err(Error::InvalidParam(format!(
            "frozen bound constants need zeta in (0, 2], got {zeta}"
        )));
    }
    if !(el.a_tilde > 0.0) {
        return Err(Error::NonPositiveDrift { c_k, norm_b: el.a_tilde + c_k });
    }
    for s in [f, g] {
        s.require_positive(&["m0", "m2_v"])?;
    }
    let chain = FrozenChain {
        k,
        zeta,
        half: 2f64.powf(0.5 * k + 1.0) * c_k * big_c_zeta,
        at_ct: el.a_tilde * el.c_tilde,
        delta: 0.25 * el.a_tilde * el.c_tilde * el.l,
        l: el.l,
    };
    let a_k = chain.a(f, f);
    let b_k = chain.b(f, f);
    let set = FrozenBoundSet {
        k,
        zeta,
        c_k,
        big_c_zeta,
        a_tilde: el.a_tilde,
        c_tilde: el.c_tilde,
        l: el.l,
        d_k: el.d_k,
        delta: chain.delta,
        eps_f: chain.eps(f),
        eps_g: chain.eps(g),
        k1: chain.k1(f, g),
        k2: chain.k2(f, g),
        a_fg: chain.a(f, g),
        a_gf: chain.a(g, f),
        b_fg: chain.b(f, g),
        b_gf: chain.b(g, f),
        a_k,
        b_k,
        e_k: equilibrium(b_k, a_k, k, zeta),
    };
    check_finite(&[
        ("eps", set.eps_f),
        ("K1", set.k1),
        ("K2", set.k2),
        ("A_k", set.a_k),
        ("B_k", set.b_k),
        ("E_k", set.e_k),
        ("B_k[f,g]", set.b_fg),
        ("B_k[g,f]", set.b_gf),
    ])?;
    Ok(set)
}

impl FrozenBoundSet {
    /// Right side of the symmetrized velocity-moment inequality given the
    /// `k`-th velocity moments of `f` and `g`.
    pub fn v_moment_rhs(&self, mk_v_f: f64, mk_v_g: f64) -> f64 {
        let p = 1.0 + self.zeta / (self.k - 2.0);
        -(self.a_fg * mk_v_f.powf(p) + self.a_gf * mk_v_g.powf(p)) + self.b_fg + self.b_gf
    }

    /// Right side of the total-bracket inequality `D_k (m2[f] mk[g] + m2[g] mk[f])`.
    pub fn vi_moment_rhs(&self, f: &MomentSnapshot, g: &MomentSnapshot, mk_f: f64, mk_g: f64) -> f64 {
        self.d_k * (f.m2 * mk_g + g.m2 * mk_f)
    }
}

/// `(B / A)^((k-2)/(k-2+zeta))`.
pub fn equilibrium(b: f64, a: f64, k: f64, zeta: f64) -> f64 {
    (b / a).powf((k - 2.0) / (k - 2.0 + zeta))
}

/// Polyatomic-operator constants at one order, supplied or fitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Externals {
    pub k: f64,
    pub a_bar: f64,
    pub b_bar: f64,
    pub d_bar: f64,
    /// True when the values come from a Monte Carlo fit.
    #[serde(default)]
    pub estimated: bool,
}

/// Mixed-operator constants at one order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OmegaBoundSet {
    pub k: f64,
    pub zeta: f64,
    pub zeta_f: f64,
    pub omega: f64,
    pub k_star: f64,
    pub m2: f64,
    pub a_bar: Option<f64>,
    pub b_bar: Option<f64>,
    pub d_bar: f64,
    pub d_frozen: f64,
    pub k_tilde: Option<f64>,
    /// For `k < k*` this is the anchor value `A^w_{k*+1}`.
    pub a_om: f64,
    pub b_om: Option<f64>,
    pub d_om: f64,
    pub e_om: Option<f64>,
    pub e_script: Option<f64>,
    pub e_script_tilde: Option<f64>,
    pub externals_estimated: bool,
}

fn check_omega(omega: f64, zeta: f64, k: f64, k_star: f64, m2: f64) -> Result<()> {
    if !(omega > 0.0 && omega <= 1.0) {
        return Err(Error::InvalidParam(format!(
            "mixed-operator bounds need omega in (0, 1], got {omega}; use the frozen bounds for omega = 0"
        )));
    }
    if !(zeta > 0.0 && zeta <= 2.0) {
        return Err(Error::InvalidParam(format!("zeta must lie in (0, 2], got {zeta}")));
    }
    if !(k > 2.0) {
        return Err(Error::PovznerOrder(k));
    }
    if !(k_star > 2.0) {
        return Err(Error::InvalidParam(format!("k* must exceed 2, got {k_star}")));
    }
    if !(m2 > 0.0) || !m2.is_finite() {
        return Err(Error::DegenerateMoment { name: "m2", value: m2 });
    }
    Ok(())
}

impl OmegaBoundSet {
    /// Constants for `k >= k*`.
    #[allow(clippy::too_many_arguments)]
    pub fn large_k(
        m2: f64,
        ext: &Externals,
        d_frozen: f64,
        omega: f64,
        zeta: f64,
        zeta_f: f64,
        k_star: f64,
    ) -> Result<Self> {
        let k = ext.k;
        check_omega(omega, zeta, k, k_star, m2)?;
        if k < k_star {
            return Err(Error::InvalidParam(format!("large-k constants need k >= k* = {k_star}, got {k}")));
        }
        if !(ext.a_bar > 0.0) || !(ext.b_bar >= 0.0) || !(ext.d_bar >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "externals must satisfy A_bar > 0, B_bar >= 0, D_bar >= 0 (got {}, {}, {})",
                ext.a_bar, ext.b_bar, ext.d_bar
            )));
        }
        let delta = 0.5 * omega * ext.a_bar;
        let e1 = (k - 2.0 + zeta) / zeta;
        let k_tilde = ((1.0 - omega) * d_frozen).powf(e1) * m2.powf(e1 + 1.0) * delta.powf(-(k - 2.0) / zeta);
        let a_om = delta * m2.powf(-zeta / (k - 2.0));
        let b_om = omega * ext.b_bar + k_tilde;
        let d_om = omega * ext.d_bar + (1.0 - omega) * d_frozen * m2;
        let e_om = equilibrium(b_om, a_om, k, zeta);
        check_finite(&[("K~", k_tilde), ("A^w", a_om), ("B^w", b_om), ("E^w", e_om)])?;
        Ok(Self {
            k,
            zeta,
            zeta_f,
            omega,
            k_star,
            m2,
            a_bar: Some(ext.a_bar),
            b_bar: Some(ext.b_bar),
            d_bar: ext.d_bar,
            d_frozen,
            k_tilde: Some(k_tilde),
            a_om,
            b_om: Some(b_om),
            d_om,
            e_om: Some(e_om),
            e_script: None,
            e_script_tilde: None,
            externals_estimated: ext.estimated,
        })
    }

    /// Constants for `2 < k < k*`, interpolated from `anchor`, the large-k
    /// set at order `k* + 1`. The drift constant `A^w` is taken from the
    /// anchor because `A_bar` only exists at orders `>= k*`.
    #[allow(clippy::too_many_arguments)]
    pub fn small_k(
        m2: f64,
        k: f64,
        d_bar: f64,
        estimated: bool,
        d_frozen: f64,
        anchor: &OmegaBoundSet,
    ) -> Result<Self> {
        let (omega, zeta, k_star) = (anchor.omega, anchor.zeta, anchor.k_star);
        check_omega(omega, zeta, k, k_star, m2)?;
        if !(k < k_star) {
            return Err(Error::InvalidParam(format!("small-k constants need k < k* = {k_star}, got {k}")));
        }
        if (anchor.k - (k_star + 1.0)).abs() > 1e-12 * anchor.k {
            return Err(Error::InvalidParam(format!(
                "anchor set must sit at k* + 1 = {}, got {}",
                k_star + 1.0,
                anchor.k
            )));
        }
        if !(d_bar >= 0.0) {
            return Err(Error::InvalidParam(format!("D_bar must be >= 0, got {d_bar}")));
        }
        let e_anchor = anchor
            .e_om
            .ok_or_else(|| Error::InvalidParam("anchor set has no E^w".into()))?;
        let theta = (k_star - k + 1.0) / (k_star - 1.0);
        let scale = m2.powf(theta);
        let e_script = scale * e_anchor.powf((k - 2.0) / (k_star - 1.0));
        let d_om = omega * d_bar + (1.0 - omega) * d_frozen * m2;
        let a_om = anchor.a_om;
        let e_script_tilde = e_script + scale * ((k_star - 1.0) * d_om / (zeta * a_om)).powf((k - 2.0) / zeta);
        check_finite(&[("E", e_script), ("E~", e_script_tilde), ("D^w", d_om)])?;
        Ok(Self {
            k,
            zeta,
            zeta_f: anchor.zeta_f,
            omega,
            k_star,
            m2,
            a_bar: None,
            b_bar: None,
            d_bar,
            d_frozen,
            k_tilde: None,
            a_om,
            b_om: None,
            d_om,
            e_om: None,
            e_script: Some(e_script),
            e_script_tilde: Some(e_script_tilde),
            externals_estimated: estimated || anchor.externals_estimated,
        })
    }
}

/// Which moment envelope to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeKind {
    GenFrozen,
    PropFrozen,
    GenOmegaLargeK,
    GenOmegaSmallK,
    PropOmegaLargeK,
    PropOmegaSmallK,
}

impl EnvelopeKind {
    pub fn is_generation(self) -> bool {
        matches!(
            self,
            EnvelopeKind::GenFrozen | EnvelopeKind::GenOmegaLargeK | EnvelopeKind::GenOmegaSmallK
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            EnvelopeKind::GenFrozen => "gen_frozen",
            EnvelopeKind::PropFrozen => "prop_frozen",
            EnvelopeKind::GenOmegaLargeK => "gen_omega_large_k",
            EnvelopeKind::GenOmegaSmallK => "gen_omega_small_k",
            EnvelopeKind::PropOmegaLargeK => "prop_omega_large_k",
            EnvelopeKind::PropOmegaSmallK => "prop_omega_small_k",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum BoundSetRef<'a> {
    Frozen(&'a FrozenBoundSet),
    Omega(&'a OmegaBoundSet),
}

fn mismatch(kind: EnvelopeKind, reason: impl Into<String>) -> Error {
    Error::EnvelopeMismatch {
        kind: kind.label().to_string(),
        reason: reason.into(),
    }
}

/// Right-hand side of the selected moment bound at time `t`.
pub fn envelope(kind: EnvelopeKind, set: BoundSetRef<'_>, m_k0: Option<f64>, t: f64) -> Result<f64> {
    if kind.is_generation() && !(t > 0.0) {
        return Err(Error::InvalidParam(format!("generation envelopes need t > 0, got {t}")));
    }
    let initial = || m_k0.ok_or_else(|| mismatch(kind, "propagation needs the initial moment"));
    match (kind, set) {
        (EnvelopeKind::GenFrozen, BoundSetRef::Frozen(s)) => {
            let p = (s.k - 2.0) / s.zeta;
            Ok(s.e_k + ((s.k - 2.0) / (s.zeta * s.a_k)).powf(p) * t.powf(-p))
        }
        (EnvelopeKind::PropFrozen, BoundSetRef::Frozen(s)) => Ok(s.e_k.max(initial()?)),
        (EnvelopeKind::GenOmegaLargeK, BoundSetRef::Omega(s)) => {
            let e = s.e_om.ok_or_else(|| mismatch(kind, "set was built for k < k*"))?;
            let p = (s.k - 2.0) / s.zeta;
            Ok(e + ((s.k - 2.0) / (s.zeta * s.a_om)).powf(p) * t.powf(-p))
        }
        (EnvelopeKind::PropOmegaLargeK, BoundSetRef::Omega(s)) => {
            let e = s.e_om.ok_or_else(|| mismatch(kind, "set was built for k < k*"))?;
            Ok(e.max(initial()?))
        }
        (EnvelopeKind::GenOmegaSmallK, BoundSetRef::Omega(s)) => {
            let e = s.e_script.ok_or_else(|| mismatch(kind, "set was built for k >= k*"))?;
            let p = (s.k - 2.0) / s.zeta;
            let theta = (s.k_star - s.k + 1.0) / (s.k_star - 1.0);
            Ok(e + s.m2.powf(theta) * ((s.k_star - 1.0) / (s.zeta * s.a_om)).powf(p) * t.powf(-p))
        }
        (EnvelopeKind::PropOmegaSmallK, BoundSetRef::Omega(s)) => {
            let e = s.e_script_tilde.ok_or_else(|| mismatch(kind, "set was built for k >= k*"))?;
            Ok(e.max(std::f64::consts::E * initial()?))
        }
        (_, BoundSetRef::Frozen(_)) => Err(mismatch(kind, "needs a mixed-operator bound set")),
        (_, BoundSetRef::Omega(_)) => Err(mismatch(kind, "needs a frozen bound set")),
    }
}

/// Right side of the interpolation `m_k <= m_2^(z/(k-2+z)) m_(k+z)^((k-2)/(k-2+z))`.
pub fn holder_rhs(m2: f64, m_k_plus_zeta: f64, k: f64, zeta: f64) -> f64 {
    let d = k - 2.0 + zeta;
    m2.powf(zeta / d) * m_k_plus_zeta.powf((k - 2.0) / d)
}

/// Right side of the p-binomial inequality for brackets `x, y >= 1`:
/// `x^k + y^k + 2^(k/2+1) (x^2 y^(k-2) [x <= y] + x^(k-2) y^2 [y <= x])`.
pub fn p_binomial_rhs(x: f64, y: f64, k: f64) -> f64 {
    let c = 2f64.powf(0.5 * k + 1.0);
    let mut cross = 0.0;
    if x <= y {
        cross += x * x * y.powf(k - 2.0);
    }
    if y <= x {
        cross += x.powf(k - 2.0) * y * y;
    }
    x.powf(k) + y.powf(k) + c * cross
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_snapshot() -> MomentSnapshot {
        MomentSnapshot::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn elementary_hand_values() {
        assert_eq!(l_constant(1.0), 0.5);
        assert_eq!(l_constant(2.0), 0.125);
        let el = elementary_constants(2.0, 0.7, 1.0, 1.0, 0.5, 4.0).unwrap();
        assert_eq!(el.c_tilde, 0.7);
        assert_eq!(el.d_k, 16.0);
        assert_eq!(el.a_tilde, 0.5);
        assert!(matches!(
            elementary_constants(1.0, 1.0, 1.0, 1.0, 1.0, 4.0),
            Err(Error::NonPositiveDrift { .. })
        ));
        assert!(elementary_constants(1.0, 1.0, 1.0, 1.0, 0.5, 2.0).is_err());
    }

    #[test]
    fn epsilon_collapses_to_one() {
        // A~ c~ = 2^(k/2+2) C_k C_zeta with unit moments gives eps = 1.
        let (k, c_k) = (4.0, 0.1);
        let target = 2f64.powf(0.5 * k + 2.0) * c_k;
        let el = ElementaryConstants { a_tilde: target, c_tilde: 1.0, l: 0.5, d_k: 16.0 };
        let s = unit_snapshot();
        let set = frozen_bound_set(&s, &s, &el, k, 1.0, c_k, 1.0).unwrap();
        assert!((set.eps_f - 1.0).abs() < 1e-15);
        assert_eq!(set.eps_f, set.eps_g);
    }

    #[test]
    fn equal_a_and_b_give_unit_equilibrium() {
        assert_eq!(equilibrium(3.5, 3.5, 4.0, 1.0), 1.0);
    }

    /// Second evaluation of the frozen chain, written out term by term.
    #[allow(clippy::too_many_arguments)]
    fn frozen_reference(f: &MomentSnapshot, g: &MomentSnapshot, k: f64, z: f64, c: f64, big_c: f64, nb: f64, c_k: f64) -> [f64; 4] {
        let at = nb - c_k;
        let ct = c * 3f64.powf(z / 2.0 - 1.0);
        let l = 2f64.powf(-z) * (2f64.powf(1.0 - z)).min(1.0);
        let p2 = 2f64.powf(k / 2.0 + 2.0);
        let p1 = 2f64.powf(k / 2.0 + 1.0);
        let eps_g = at * ct * g.m0 / (p2 * c_k * big_c * g.m2_v);
        let delta = at * ct * l / 4.0;
        let kt1 = at * ct * g.mz_v + p1 * c_k * big_c * g.mz_i;
        let kt2 = p2 * c_k * big_c * g.m2_v;
        let k1 = kt1.powf((k - 2.0 + z) / z) * f.m2_v / (g.m0 * delta).powf((k - 2.0) / z);
        let k2 = kt2.powf((k + z) / 2.0) * f.m0 / (g.m0 * delta).powf((k - 2.0 + z) / 2.0);
        let b = k1 + k2 + p1 * c_k * big_c * eps_g.powf(-(k - 2.0) / 2.0) * f.mz_i * g.m2_v;
        let a = at * ct * l / 2.0 * g.m0 * f.m2_v.powf(-z / (k - 2.0));
        [k1, k2, a, b]
    }

    #[test]
    fn frozen_chain_matches_reference() {
        // Unit-temperature Maxwellian times Gamma(1, 1) internal energy, m = 1,
        // moments entered as plain numbers.
        let f = MomentSnapshot::new(1.0, 4.5, 2.5, 2.0, 1.5, 1.4).unwrap();
        let g = MomentSnapshot::new(0.7, 3.1, 1.9, 1.6, 1.2, 1.3).unwrap();
        let (k, z, c, big_c, nb, c_k) = (4.0, 1.0, 1.0, 1.0, 1.0, 0.6);
        let el = elementary_constants(z, c, big_c, nb, c_k, k).unwrap();
        let set = frozen_bound_set(&f, &g, &el, k, z, c_k, big_c).unwrap();
        let [k1, k2, a, b] = frozen_reference(&f, &g, k, z, c, big_c, nb, c_k);
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-13 * y.abs();
        assert!(close(set.k1, k1) && close(set.k2, k2) && close(set.a_fg, a) && close(set.b_fg, b));
        let [_, _, a_ff, b_ff] = frozen_reference(&f, &f, k, z, c, big_c, nb, c_k);
        assert!(close(set.e_k, (b_ff / a_ff).powf(2.0 / 3.0)));
        let [_, _, a_gf, b_gf] = frozen_reference(&g, &f, k, z, c, big_c, nb, c_k);
        assert!(close(set.a_gf, a_gf) && close(set.b_gf, b_gf));
    }

    #[test]
    fn degenerate_snapshot_rejected() {
        let z = MomentSnapshot::new(0.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let el = elementary_constants(1.0, 1.0, 1.0, 1.0, 0.5, 4.0).unwrap();
        assert!(matches!(
            frozen_bound_set(&z, &z, &el, 4.0, 1.0, 0.5, 1.0),
            Err(Error::DegenerateMoment { .. })
        ));
        assert!(MomentSnapshot::new(f64::NAN, 1.0, 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn frozen_envelopes() {
        let mut set = frozen_bound_set(
            &unit_snapshot(),
            &unit_snapshot(),
            &elementary_constants(1.0, 1.0, 1.0, 1.0, 0.5, 4.0).unwrap(),
            4.0,
            1.0,
            0.5,
            1.0,
        )
        .unwrap();
        set.a_k = 1.0;
        set.e_k = 1.0;
        let r = BoundSetRef::Frozen(&set);
        assert_eq!(envelope(EnvelopeKind::GenFrozen, r, None, 2.0).unwrap(), 2.0);
        let far = envelope(EnvelopeKind::GenFrozen, r, None, 1e9).unwrap();
        assert!((far - 1.0).abs() < 1e-6);
        assert_eq!(envelope(EnvelopeKind::PropFrozen, r, Some(7.0), 1.0).unwrap(), 7.0);
        assert_eq!(envelope(EnvelopeKind::PropFrozen, r, Some(0.5), 1.0).unwrap(), 1.0);
        assert!(envelope(EnvelopeKind::GenFrozen, r, None, 0.0).is_err());
        assert!(envelope(EnvelopeKind::PropFrozen, r, None, 1.0).is_err());
        assert!(matches!(
            envelope(EnvelopeKind::GenOmegaLargeK, r, None, 1.0),
            Err(Error::EnvelopeMismatch { .. })
        ));
    }

    fn ext(k: f64) -> Externals {
        Externals { k, a_bar: 0.3, b_bar: 2.0, d_bar: 1.5, estimated: true }
    }

    #[test]
    fn omega_endpoint_and_reference() {
        let s = OmegaBoundSet::large_k(3.0, &ext(8.0), 64.0, 1.0, 1.0, 1.0, 7.0).unwrap();
        assert_eq!(s.k_tilde, Some(0.0));
        assert_eq!(s.b_om, Some(2.0));
        assert_eq!(s.d_om, 1.5);
        assert!(OmegaBoundSet::large_k(3.0, &ext(8.0), 64.0, 0.0, 1.0, 1.0, 7.0).is_err());
        assert!(OmegaBoundSet::large_k(3.0, &ext(6.0), 64.0, 0.5, 1.0, 1.0, 7.0).is_err());

        let (m2, w, k, z, df) = (3.0, 0.5, 8.0, 1.0, 64.0);
        let s = OmegaBoundSet::large_k(m2, &ext(k), df, w, z, 1.0, 7.0).unwrap();
        let delta = w * 0.3 / 2.0;
        let kt = ((1.0 - w) * df).powf((k - 2.0 + z) / z) * m2.powf((k - 2.0 + z) / z + 1.0) * delta.powf(-(k - 2.0) / z);
        let a = w * 0.3 / 2.0 * m2.powf(-z / (k - 2.0));
        let b = w * 2.0 + kt;
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-13 * y.abs();
        assert!(close(s.k_tilde.unwrap(), kt) && close(s.a_om, a) && close(s.b_om.unwrap(), b));
        assert!(close(s.e_om.unwrap(), (b / a).powf((k - 2.0) / (k - 2.0 + z))));
        assert!(close(s.d_om, w * 1.5 + (1.0 - w) * df * m2));

        let small = OmegaBoundSet::small_k(m2, 4.0, 0.8, true, 16.0, &s).unwrap();
        let theta = (7.0 - 4.0 + 1.0) / 6.0;
        let e = m2.powf(theta) * s.e_om.unwrap().powf(2.0 / 6.0);
        assert!(close(small.e_script.unwrap(), e));
        let d = w * 0.8 + (1.0 - w) * 16.0 * m2;
        let et = e + m2.powf(theta) * (6.0 * d / (z * a)).powf(2.0 / z);
        assert!(close(small.e_script_tilde.unwrap(), et));
        assert!(small.e_script_tilde.unwrap() >= small.e_script.unwrap());
        assert!(OmegaBoundSet::small_k(m2, 7.5, 0.8, true, 16.0, &s).is_err());

        let r = BoundSetRef::Omega(&small);
        let prop = envelope(EnvelopeKind::PropOmegaSmallK, r, Some(1e9), 1.0).unwrap();
        assert!((prop - std::f64::consts::E * 1e9).abs() < 1e-3);
        assert!(envelope(EnvelopeKind::PropOmegaLargeK, r, Some(1.0), 1.0).is_err());
    }

    #[test]
    fn omega_unit_ratio() {
        // Choose B_bar so that B^w = A^w at omega = 1.
        let a = 0.5 * 0.3 * 2f64.powf(-1.0 / 6.0);
        let e = Externals { k: 8.0, a_bar: 0.3, b_bar: a, d_bar: 1.0, estimated: false };
        let s = OmegaBoundSet::large_k(2.0, &e, 1.0, 1.0, 1.0, 1.0, 7.0).unwrap();
        assert!((s.e_om.unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn omega_limit_toward_one() {
        let (m2, k, z): (f64, f64, f64) = (2.5, 8.0, 1.0);
        let limit_a = 0.3 * m2.powf(-z / (k - 2.0)) / 2.0;
        let mut last = f64::INFINITY;
        let mut first = None;
        for w in [0.9, 0.99, 0.999] {
            let s = OmegaBoundSet::large_k(m2, &ext(k), 64.0, w, z, 1.0, 7.0).unwrap();
            let gap = (s.a_om - limit_a).abs() + (s.b_om.unwrap() - 2.0).abs() + (s.d_om - 1.5).abs();
            assert!(gap < last);
            first.get_or_insert(gap);
            last = gap;
        }
        assert!(last < 0.1 * first.unwrap());
    }

    #[test]
    fn doubling_weights_recomputes_consistently() {
        let f = MomentSnapshot::new(1.0, 4.5, 2.5, 2.0, 1.5, 1.4).unwrap();
        let el = elementary_constants(1.0, 1.0, 1.0, 1.0, 0.6, 4.0).unwrap();
        let one = frozen_bound_set(&f, &f, &el, 4.0, 1.0, 0.6, 1.0).unwrap();
        let two = frozen_bound_set(&f.scaled(2.0), &f.scaled(2.0), &el, 4.0, 1.0, 0.6, 1.0).unwrap();
        let [_, _, a, b] = frozen_reference(&f.scaled(2.0), &f.scaled(2.0), 4.0, 1.0, 1.0, 1.0, 1.0, 0.6);
        assert!((two.e_k - (b / a).powf(2.0 / 3.0)).abs() < 1e-12 * two.e_k);
        assert!(two.e_k != one.e_k);
    }

    fn snapshot_strategy() -> impl Strategy<Value = MomentSnapshot> {
        (0.1f64..10.0, 1.0f64..5.0, 0.1f64..1.0, 0.1f64..1.0).prop_map(|(m0, r, a, b)| {
            let m2_v = m0 * r;
            let m2_i = m0 * (1.0 + r);
            MomentSnapshot::new(m0, m2_v + m2_i - m0, m2_v, m2_i, m0.max(a * m2_v), m0.max(b * m2_i)).unwrap()
        })
    }

    proptest! {
        #[test]
        fn constants_are_finite_and_positive(
            f in snapshot_strategy(),
            g in snapshot_strategy(),
            k in 2.5f64..12.0,
            zeta in 0.2f64..2.0,
            c_k in 0.05f64..0.9,
        ) {
            let el = elementary_constants(zeta, 0.5, 1.5, 1.0, c_k, k).unwrap();
            let s = frozen_bound_set(&f, &g, &el, k, zeta, c_k, 1.5).unwrap();
            for x in [s.eps_f, s.eps_g, s.k1, s.k2, s.a_fg, s.a_gf, s.b_fg, s.b_gf, s.e_k, s.delta] {
                prop_assert!(x.is_finite() && x > 0.0);
            }
        }

        #[test]
        fn generation_decreases_in_time(t in 0.01f64..100.0, dt in 0.01f64..10.0) {
            let f = MomentSnapshot::new(1.0, 4.5, 2.5, 2.0, 1.5, 1.4).unwrap();
            let el = elementary_constants(1.0, 1.0, 1.0, 1.0, 0.6, 4.0).unwrap();
            let s = frozen_bound_set(&f, &f, &el, 4.0, 1.0, 0.6, 1.0).unwrap();
            let r = BoundSetRef::Frozen(&s);
            let a = envelope(EnvelopeKind::GenFrozen, r, None, t).unwrap();
            let b = envelope(EnvelopeKind::GenFrozen, r, None, t + dt).unwrap();
            prop_assert!(b < a);
            let p1 = envelope(EnvelopeKind::PropFrozen, r, Some(3.0), t).unwrap();
            let p2 = envelope(EnvelopeKind::PropFrozen, r, Some(3.0), t + dt).unwrap();
            prop_assert_eq!(p1, p2);
        }

        #[test]
        fn p_binomial_holds(x in 1.0f64..1e3, y in 1.0f64..1e3, k in 2.01f64..20.0) {
            let lhs = (x * x + y * y).powf(0.5 * k);
            prop_assert!(lhs <= p_binomial_rhs(x, y, k) * (1.0 + 1e-10));
        }
    }
}
