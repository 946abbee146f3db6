//! Povzner averaging constants and the threshold order `k*`.
//!
//! `C_k` is estimated as the largest value, over a random pair population, of
//! the exact per-pair ratio
//!
//! ```text
//!   avg(<post>^k + <post*>^k) / (<pre>^2 + <pre*>^2)^(k/2)
//! ```
//!
//! where the average runs over `sigma` (frozen) or `(sigma, r, R)`
//! (polyatomic) by fixed Gauss rules. Brackets are normalized by the
//! pre-collision sum before exponentiation, so every power lies in `[0, 1]`
//! and is computed along the `k` grid by repeated multiplication.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gauss::Rule;
use crate::kernels::{orthonormal_frame, AngularModel, Channel, KernelSpec};
use crate::kinematics::{dot, norm2, scale, sub, Vec3};
use crate::rng::{stream, tag};

/// Quadrature resolution and population size for a Povzner table.
#[derive(Debug, Clone, PartialEq)]
pub struct PovznerSettings {
    pub grid: Vec<f64>,
    pub n_pairs: usize,
    pub polar_nodes: usize,
    pub azimuth_nodes: usize,
    pub rr_nodes: usize,
}

impl PovznerSettings {
    pub fn frozen_default() -> Self {
        Self {
            grid: default_grid(),
            n_pairs: 100_000,
            polar_nodes: 64,
            azimuth_nodes: 64,
            rr_nodes: 32,
        }
    }

    pub fn poly_default() -> Self {
        Self {
            n_pairs: 1_000,
            azimuth_nodes: 16,
            ..Self::frozen_default()
        }
    }
}

/// `2.5, 3.0, ..., 20.0`.
pub fn default_grid() -> Vec<f64> {
    (5..=40).map(|i| 0.5 * i as f64).collect()
}

/// One pre-collision pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub v: Vec3,
    pub v_star: Vec3,
    pub internal: f64,
    pub internal_star: f64,
}

/// Pair population used for the supremum: speeds log-uniform in
/// `[1e-2, 1e2]`, isotropic directions, internal energies log-uniform in
/// `[1e-4, 1e4] * mass`.
pub fn sample_pairs<R: Rng + ?Sized>(n: usize, mass: f64, rng: &mut R) -> Vec<Pair> {
    let velocity = |rng: &mut R| {
        let speed = 10f64.powf(rng.random_range(-2.0..=2.0));
        let c: f64 = rng.random_range(-1.0..=1.0);
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let s = (1.0 - c * c).max(0.0).sqrt();
        [speed * s * phi.cos(), speed * s * phi.sin(), speed * c]
    };
    let internal = |rng: &mut R| mass * 10f64.powf(rng.random_range(-4.0..=4.0));
    (0..n)
        .map(|_| Pair {
            v: velocity(rng),
            v_star: velocity(rng),
            internal: internal(rng),
            internal_star: internal(rng),
        })
        .collect()
}

/// Sphere rule: for each node, the polar cosine relative to `u_hat`, the
/// in-plane direction, and a weight carrying `b`.
#[derive(Debug, Clone)]
struct SphereRule {
    isotropic: bool,
    /// `(cos, sin, cos phi, sin phi, weight)`.
    nodes: Vec<(f64, f64, f64, f64, f64)>,
}

impl SphereRule {
    fn new(angular: &AngularModel, polar_nodes: usize, azimuth_nodes: usize) -> Result<Self> {
        let polar = angular.polar_rule(polar_nodes)?;
        let isotropic = angular.is_isotropic();
        let n_az = if isotropic { 1 } else { azimuth_nodes.max(1) };
        let mut nodes = Vec::with_capacity(polar.len() * n_az);
        for (&c, &w) in polar.nodes.iter().zip(&polar.weights) {
            let s = (1.0 - c * c).max(0.0).sqrt();
            for j in 0..n_az {
                let phi = std::f64::consts::TAU * (j as f64 + 0.5) / n_az as f64;
                nodes.push((c, s, phi.cos(), phi.sin(), w / n_az as f64));
            }
        }
        Ok(Self { isotropic, nodes })
    }

    /// `(V_hat . sigma, weight)` at every node for relative velocity `u` and
    /// centre-of-mass direction `v_hat`.
    fn projections(&self, u: Vec3, v_hat: Vec3) -> Vec<(f64, f64)> {
        if self.isotropic {
            return self.nodes.iter().map(|n| (n.0, n.4)).collect();
        }
        let u2 = norm2(u);
        let u_hat = if u2 > 0.0 { scale(u, 1.0 / u2.sqrt()) } else { [0.0, 0.0, 1.0] };
        let (e1, e2) = orthonormal_frame(u_hat);
        let (p0, p1, p2) = (dot(v_hat, u_hat), dot(v_hat, e1), dot(v_hat, e2));
        self.nodes
            .iter()
            .map(|&(c, s, cp, sp, w)| (c * p0 + s * (cp * p1 + sp * p2), w))
            .collect()
    }
}

/// Accumulates `sum_w x^(k/2)` along a sorted `k` grid.
struct PowerLadder {
    first_half: f64,
    half_steps: Vec<f64>,
}

impl PowerLadder {
    fn new(ks: &[f64]) -> Self {
        let first_half = 0.5 * ks[0];
        let half_steps = ks.windows(2).map(|w| 0.5 * (w[1] - w[0])).collect();
        Self { first_half, half_steps }
    }

    /// Adds `weight * exp(k/2 * ln_x)` to `acc[j]` for every grid point.
    #[inline]
    fn accumulate(&self, ln_x: f64, weight: f64, acc: &mut [f64]) {
        let mut p = (self.first_half * ln_x).exp();
        acc[0] += weight * p;
        let mut last = f64::NAN;
        let mut factor = 0.0;
        for (j, &h) in self.half_steps.iter().enumerate() {
            if h != last {
                factor = (h * ln_x).exp();
                last = h;
            }
            p *= factor;
            acc[j + 1] += weight * p;
        }
    }
}

fn check_sorted(ks: &[f64], min: f64, strict: bool) -> Result<()> {
    if ks.is_empty() {
        return Err(Error::InvalidParam("empty k grid".into()));
    }
    if ks.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParam("k grid must be strictly increasing".into()));
    }
    let bad = if strict { !(ks[0] > min) } else { !(ks[0] >= min) };
    if bad || ks.iter().any(|k| !k.is_finite()) {
        return Err(Error::PovznerOrder(ks[0]));
    }
    Ok(())
}

/// Per-pair ratios for the frozen channel.
pub struct FrozenRatio {
    sphere: SphereRule,
    ladder: PowerLadder,
    ks: Vec<f64>,
}

impl FrozenRatio {
    pub fn new(angular: &AngularModel, ks: &[f64], polar_nodes: usize, azimuth_nodes: usize) -> Result<Self> {
        check_sorted(ks, 2.0, true)?;
        Ok(Self {
            sphere: SphereRule::new(angular, polar_nodes, azimuth_nodes)?,
            ladder: PowerLadder::new(ks),
            ks: ks.to_vec(),
        })
    }

    pub fn ks(&self) -> &[f64] {
        &self.ks
    }

    /// Ratio at every grid `k` for one velocity pair.
    pub fn ratios(&self, v: Vec3, v_star: Vec3) -> Vec<f64> {
        let centre = scale([v[0] + v_star[0], v[1] + v_star[1], v[2] + v_star[2]], 0.5);
        let u = sub(v, v_star);
        let big_v2 = norm2(centre);
        let big_v = big_v2.sqrt();
        let v_hat = if big_v > 0.0 { scale(centre, 1.0 / big_v) } else { [0.0, 0.0, 1.0] };
        let s2 = 0.25 * norm2(u);
        let cross = s2.sqrt() * big_v;
        // <v>^2 + <v*>^2 = 2 + |V|^2 + |u|^2 / 4
        let denom = 2.0 + big_v2 + s2;
        let base = 1.0 + 0.5 * (big_v2 + s2);
        let mut acc = vec![0.0; self.ks.len()];
        for (d, w) in self.sphere.projections(u, v_hat) {
            let a1 = (base + cross * d) / denom;
            let a2 = (base - cross * d) / denom;
            self.ladder.accumulate(a1.max(0.0).ln(), w, &mut acc);
            self.ladder.accumulate(a2.max(0.0).ln(), w, &mut acc);
        }
        acc
    }
}

/// Per-pair ratios for the polyatomic channel.
pub struct PolyRatio {
    sphere: SphereRule,
    /// `(r, R, weight * b~_ub(r, R))`.
    rr: Vec<(f64, f64, f64)>,
    ladder: PowerLadder,
    ks: Vec<f64>,
    mass: f64,
}

impl PolyRatio {
    pub fn new(spec: &KernelSpec, ks: &[f64], settings: &PovznerSettings) -> Result<Self> {
        if spec.channel() != Channel::Polyatomic {
            return Err(Error::WrongChannel {
                operation: "polyatomic Povzner constant",
                expected: "polyatomic",
            });
        }
        check_sorted(ks, 0.0, false)?;
        let a = spec.alpha();
        let n = settings.rr_nodes + settings.rr_nodes % 2;
        let rule_r = Rule::jacobi_unit(n, a, a)?;
        let rule_big = Rule::jacobi_unit(n, 2.0 * a + 1.0, 0.5)?;
        let mut rr = Vec::with_capacity(n * n);
        for (&r, &wr) in rule_r.nodes.iter().zip(&rule_r.weights) {
            for (&big_r, &wb) in rule_big.nodes.iter().zip(&rule_big.weights) {
                let w = wr * wb * spec.rr_upper().eval(r, big_r);
                if w != 0.0 {
                    rr.push((r, big_r, w));
                }
            }
        }
        Ok(Self {
            sphere: SphereRule::new(spec.angular(), settings.polar_nodes, settings.azimuth_nodes)?,
            rr,
            ladder: PowerLadder::new(ks),
            ks: ks.to_vec(),
            mass: spec.mass(),
        })
    }

    pub fn ks(&self) -> &[f64] {
        &self.ks
    }

    pub fn ratios(&self, pair: &Pair) -> Vec<f64> {
        let Pair { v, v_star, internal, internal_star } = *pair;
        let centre = scale([v[0] + v_star[0], v[1] + v_star[1], v[2] + v_star[2]], 0.5);
        let u = sub(v, v_star);
        let big_v2 = norm2(centre);
        let big_v = big_v2.sqrt();
        let v_hat = if big_v > 0.0 { scale(centre, 1.0 / big_v) } else { [0.0, 0.0, 1.0] };
        let e = 0.25 * norm2(u) + (internal + internal_star) / self.mass;
        // <v,I>^2 + <v*,I*>^2 = 2 + |V|^2 + E/m, conserved by the collision.
        let inv = 1.0 / (2.0 + big_v2 + e);
        let projections = self.sphere.projections(u, v_hat);
        let mut acc = vec![0.0; self.ks.len()];
        for &(r, big_r, w_rr) in &self.rr {
            let kinetic = big_r * e;
            let base = 1.0 + 0.5 * (big_v2 + kinetic);
            let i1 = r * (1.0 - big_r) * e;
            let i2 = (1.0 - r) * (1.0 - big_r) * e;
            let cross = kinetic.sqrt() * big_v;
            for &(d, w_s) in &projections {
                let w = w_rr * w_s;
                let a1 = (base + i1 + cross * d) * inv;
                let a2 = (base + i2 - cross * d) * inv;
                self.ladder.accumulate(a1.max(0.0).ln(), w, &mut acc);
                self.ladder.accumulate(a2.max(0.0).ln(), w, &mut acc);
            }
        }
        acc
    }
}

/// Povzner table for one channel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PovznerConstants {
    pub channel: Channel,
    pub ks: Vec<f64>,
    pub c_k: Vec<f64>,
    /// Polyatomic only: smallest grid order with `C_k < lb_integral`.
    pub k_star: Option<f64>,
    /// Polyatomic only: `||b|| * integral of b~_lb` against the `(r, R)` weight.
    pub lb_integral: Option<f64>,
    pub norm_b: f64,
    pub n_pairs: usize,
    /// True when the constants came from configuration instead of sampling.
    pub overridden: bool,
}

impl PovznerConstants {
    /// `C_k` at `k`. Off-grid orders get the value at the nearest grid
    /// point below, which is an upper bound because `C_k` is non-increasing.
    pub fn constant_at(&self, k: f64) -> Result<f64> {
        let idx = self.ks.partition_point(|&x| x <= k);
        if idx == 0 {
            return Err(Error::InvalidParam(format!(
                "k = {k} lies below the Povzner grid (starts at {})",
                self.ks[0]
            )));
        }
        Ok(self.c_k[idx - 1])
    }

    /// Table supplied by the user.
    pub fn from_values(channel: Channel, ks: Vec<f64>, c_k: Vec<f64>, norm_b: f64) -> Result<Self> {
        if ks.len() != c_k.len() {
            return Err(Error::InvalidParam("Povzner override needs one C_k per k".into()));
        }
        check_sorted(&ks, if channel == Channel::Frozen { 2.0 } else { 0.0 }, channel == Channel::Frozen)?;
        if c_k.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(Error::InvalidParam("Povzner override values must be finite and >= 0".into()));
        }
        Ok(Self {
            channel,
            ks,
            c_k,
            k_star: None,
            lb_integral: None,
            norm_b,
            n_pairs: 0,
            overridden: true,
        })
    }

    /// Fills `k_star` and `lb_integral` for the polyatomic kernel `spec`.
    pub fn with_k_star(mut self, spec: &KernelSpec) -> Result<Self> {
        let lb = lb_integral(spec);
        self.lb_integral = Some(lb);
        self.k_star = Some(k_star_from(&self.ks, &self.c_k, lb)?);
        Ok(self)
    }
}

/// `||b||` times the weighted integral of `b~_lb`.
pub fn lb_integral(spec: &KernelSpec) -> f64 {
    spec.norm_b() * spec.rr_lower_norm()
}

fn k_star_from(ks: &[f64], c_k: &[f64], lb: f64) -> Result<f64> {
    ks.iter()
        .zip(c_k)
        .find(|&(&k, &c)| k > 2.0 && c < lb)
        .map(|(&k, _)| k)
        .ok_or_else(|| Error::KStarBeyondGrid {
            lb_integral: lb,
            last_k: *ks.last().unwrap_or(&f64::NAN),
            last_constant: *c_k.last().unwrap_or(&f64::NAN),
        })
}

fn column_max(rows: impl ParallelIterator<Item = Vec<f64>>, n: usize) -> Vec<f64> {
    rows.reduce(
        || vec![0.0; n],
        |mut a, b| {
            a.iter_mut().zip(&b).for_each(|(x, y)| *x = x.max(*y));
            a
        },
    )
}

/// Frozen-channel `C_k` at a single order.
pub fn povzner_constant_frozen<R: Rng + ?Sized>(
    angular: &AngularModel,
    k: f64,
    n_pairs: usize,
    rng: &mut R,
) -> Result<f64> {
    let s = PovznerSettings::frozen_default();
    let eval = FrozenRatio::new(angular, &[k], s.polar_nodes, s.azimuth_nodes)?;
    let pairs = sample_pairs(n_pairs, 1.0, rng);
    Ok(column_max(pairs.par_iter().map(|p| eval.ratios(p.v, p.v_star)), 1)[0])
}

/// Polyatomic `C_k` at a single order.
pub fn povzner_constant_poly<R: Rng + ?Sized>(
    spec: &KernelSpec,
    k: f64,
    n_pairs: usize,
    rng: &mut R,
) -> Result<f64> {
    let eval = PolyRatio::new(spec, &[k], &PovznerSettings::poly_default())?;
    let pairs = sample_pairs(n_pairs, spec.mass(), rng);
    Ok(column_max(pairs.par_iter().map(|p| eval.ratios(p)), 1)[0])
}

/// Frozen-channel table over `settings.grid`.
pub fn frozen_table(angular: &AngularModel, settings: &PovznerSettings, seed: u64) -> Result<PovznerConstants> {
    let eval = FrozenRatio::new(angular, &settings.grid, settings.polar_nodes, settings.azimuth_nodes)?;
    let mut rng = stream(seed, &[tag::POVZNER_PAIRS, 0]);
    let pairs = sample_pairs(settings.n_pairs, 1.0, &mut rng);
    let c_k = column_max(pairs.par_iter().map(|p| eval.ratios(p.v, p.v_star)), settings.grid.len());
    Ok(PovznerConstants {
        channel: Channel::Frozen,
        ks: settings.grid.clone(),
        c_k,
        k_star: None,
        lb_integral: None,
        norm_b: angular.l1_norm(),
        n_pairs: settings.n_pairs,
        overridden: false,
    })
}

/// Polyatomic table over `settings.grid`, including `k*`.
///
/// A grid on which `C_k` never drops below the lower-bound mass is not an
/// error here; `k_star` is then `None` and [`find_k_star`] reports it.
pub fn poly_table(spec: &KernelSpec, settings: &PovznerSettings, seed: u64) -> Result<PovznerConstants> {
    let eval = PolyRatio::new(spec, &settings.grid, settings)?;
    let mut rng = stream(seed, &[tag::POVZNER_PAIRS, 1]);
    let pairs = sample_pairs(settings.n_pairs, spec.mass(), &mut rng);
    let c_k = column_max(pairs.par_iter().map(|p| eval.ratios(p)), settings.grid.len());
    let lb = lb_integral(spec);
    let k_star = k_star_from(&settings.grid, &c_k, lb).ok();
    Ok(PovznerConstants {
        channel: Channel::Polyatomic,
        ks: settings.grid.clone(),
        c_k,
        k_star,
        lb_integral: Some(lb),
        norm_b: spec.norm_b(),
        n_pairs: settings.n_pairs,
        overridden: false,
    })
}

/// Smallest grid order with `C_k < lb_integral`.
pub fn find_k_star(spec: &KernelSpec, settings: &PovznerSettings, seed: u64) -> Result<f64> {
    if settings.grid.iter().any(|&k| !(k > 2.0)) {
        return Err(Error::PovznerOrder(settings.grid[0]));
    }
    let table = poly_table(spec, settings, seed)?;
    k_star_from(&table.ks, &table.c_k, lb_integral(spec))
}

/// Fresh-pair check of a table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HoldoutReport {
    pub n_pairs: usize,
    /// Largest `ratio / C_k` seen over all fresh pairs and grid orders.
    pub worst_excess: f64,
    pub worst_k: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn holdout_summary(table: &PovznerConstants, maxima: Vec<f64>, n_pairs: usize, tolerance: f64) -> HoldoutReport {
    let (worst_excess, worst_k) = maxima
        .iter()
        .zip(&table.c_k)
        .zip(&table.ks)
        .map(|((m, c), k)| (if *c > 0.0 { m / c } else if *m > 0.0 { f64::INFINITY } else { 0.0 }, *k))
        .fold((0.0, f64::NAN), |acc, x| if x.0 > acc.0 { x } else { acc });
    HoldoutReport {
        n_pairs,
        worst_excess,
        worst_k,
        tolerance,
        passed: worst_excess <= 1.0 + tolerance,
    }
}

/// Re-evaluates the frozen ratio on `n_pairs` pairs drawn from an
/// independent stream and compares against the table.
pub fn frozen_holdout(
    angular: &AngularModel,
    table: &PovznerConstants,
    settings: &PovznerSettings,
    n_pairs: usize,
    seed: u64,
) -> Result<HoldoutReport> {
    let eval = FrozenRatio::new(angular, &table.ks, settings.polar_nodes, settings.azimuth_nodes)?;
    let mut rng = stream(seed, &[tag::POVZNER_HOLDOUT, 0]);
    let pairs = sample_pairs(n_pairs, 1.0, &mut rng);
    let maxima = column_max(pairs.par_iter().map(|p| eval.ratios(p.v, p.v_star)), table.ks.len());
    Ok(holdout_summary(table, maxima, n_pairs, 0.01))
}

/// Polyatomic counterpart of [`frozen_holdout`].
pub fn poly_holdout(
    spec: &KernelSpec,
    table: &PovznerConstants,
    settings: &PovznerSettings,
    n_pairs: usize,
    seed: u64,
) -> Result<HoldoutReport> {
    let eval = PolyRatio::new(spec, &table.ks, settings)?;
    let mut rng = stream(seed, &[tag::POVZNER_HOLDOUT, 1]);
    let pairs = sample_pairs(n_pairs, spec.mass(), &mut rng);
    let maxima = column_max(pairs.par_iter().map(|p| eval.ratios(p)), table.ks.len());
    Ok(holdout_summary(table, maxima, n_pairs, 0.01))
}

/// Whether `values` is non-increasing up to relative slack `rel`.
pub fn is_non_increasing(values: &[f64], rel: f64) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] * (1.0 + rel))
}
