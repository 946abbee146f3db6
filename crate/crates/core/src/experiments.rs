//! Verification experiments built from the kernel, bound and quadrature
//! modules: operator inequalities over a density catalog and the bound sets
//! used against simulation traces.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    elementary_constants, frozen_bound_set, frozen_d_k, FrozenBoundSet, MomentSnapshot, OmegaBoundSet,
};
use crate::error::{Error, Result};
use crate::externals::ExternalFit;
use crate::kernels::{Channel, KernelSpec, MixtureSpec};
use crate::kinematics::MomentFamily;
use crate::povzner::PovznerConstants;
use crate::quadrature::{
    combine, verify_inequality, weak_form_batches, TestDensity, TestFunction, Verdict, WeakFormEstimate, WeakFormJob,
    DEFAULT_BATCHES,
};
use crate::rng::{stream, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CatalogSettings {
    pub orders: Vec<f64>,
    pub zetas: Vec<f64>,
    pub omegas: Vec<f64>,
    pub n_samples: usize,
    pub n_sigma: f64,
}

impl Default for CatalogSettings {
    fn default() -> Self {
        Self {
            orders: vec![3.0, 4.0, 6.0],
            zetas: vec![1.0, 2.0],
            omegas: vec![0.25, 0.5, 0.75],
            n_samples: 1_000_000,
            n_sigma: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Inequality {
    /// Velocity moments, frozen operator on `(f, g)`.
    VMoment,
    /// Total-bracket moments, frozen operator on `(f, g)`.
    ViMoment,
    /// Total-bracket moments, mixed operator on `(f, f)`, orders below `k*`.
    OmegaSmallK,
}

/// One operator inequality evaluated on one catalog entry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub inequality: Inequality,
    /// Catalog index (pair for frozen checks, density for mixed checks).
    pub entry: usize,
    pub k: f64,
    pub zeta: f64,
    pub omega: Option<f64>,
    pub estimate: WeakFormEstimate,
    pub rhs: f64,
    pub verdict: Verdict,
}

/// Frozen kernel with the angular model, sandwich and mass of `template`
/// but rate exponent `zeta`.
pub fn frozen_kernel_like(template: &KernelSpec, zeta: f64) -> Result<KernelSpec> {
    KernelSpec::frozen(zeta, template.mass())?
        .with_angular(template.angular().clone())?
        .with_sandwich(template.c_lower(), template.c_upper())?
        .with_model(template.model())
}

fn sub_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut key = vec![tag::WEAK_FORM];
    key.extend_from_slice(tags);
    stream(seed, &key).random()
}

/// Frozen bound set of a kernel for snapshots `f`, `g` at order `k`.
pub fn frozen_bounds(
    kernel: &KernelSpec,
    table: &PovznerConstants,
    f: &MomentSnapshot,
    g: &MomentSnapshot,
    k: f64,
) -> Result<FrozenBoundSet> {
    if kernel.channel() != Channel::Frozen {
        return Err(Error::WrongChannel { operation: "frozen_bounds", expected: "frozen" });
    }
    let c_k = table.constant_at(k)?;
    let el = elementary_constants(kernel.zeta(), kernel.c_lower(), kernel.c_upper(), kernel.norm_b(), c_k, k)?;
    frozen_bound_set(f, g, &el, k, kernel.zeta(), c_k, kernel.c_upper())
}

/// Velocity-moment and total-moment inequalities of the frozen operator over
/// `catalog x orders x zetas`.
pub fn verify_frozen_catalog(
    template: &KernelSpec,
    table: &PovznerConstants,
    catalog: &[(TestDensity, TestDensity)],
    settings: &CatalogSettings,
    seed: u64,
) -> Result<Vec<InequalityCheck>> {
    let m = template.mass();
    let mut out = Vec::new();
    for (p, (f, g)) in catalog.iter().enumerate() {
        for &zeta in &settings.zetas {
            let kernel = frozen_kernel_like(template, zeta)?;
            let (fs, gs) = (f.snapshot(zeta, m)?, g.snapshot(zeta, m)?);
            let mut tests: Vec<TestFunction> = settings.orders.iter().map(|&k| TestFunction::BracketV(k)).collect();
            tests.extend(settings.orders.iter().map(|&k| TestFunction::BracketVi(k)));
            let jobs = [WeakFormJob { kernel: &kernel, tests }];
            let s = sub_seed(seed, &[p as u64, zeta.to_bits()]);
            let batches = weak_form_batches(f, g, &jobs, settings.n_samples, DEFAULT_BATCHES, s)?;
            let n_k = settings.orders.len();
            for (j, &k) in settings.orders.iter().enumerate() {
                let set = frozen_bounds(&kernel, table, &fs, &gs, k)?;
                let rhs_v = set.v_moment_rhs(f.moment(MomentFamily::Velocity, k, m)?, g.moment(MomentFamily::Velocity, k, m)?);
                let rhs_vi = set.vi_moment_rhs(
                    &fs,
                    &gs,
                    f.moment(MomentFamily::Total, k, m)?,
                    g.moment(MomentFamily::Total, k, m)?,
                );
                for (inequality, est, rhs) in [
                    (Inequality::VMoment, batches[0][j].estimate(), rhs_v),
                    (Inequality::ViMoment, batches[0][n_k + j].estimate(), rhs_vi),
                ] {
                    let verdict = verify_inequality(&est, rhs, settings.n_sigma);
                    out.push(InequalityCheck { inequality, entry: p, k, zeta, omega: None, estimate: est, rhs, verdict });
                }
            }
        }
    }
    Ok(out)
}

fn fit_at(fits: &[ExternalFit], k: f64) -> Result<&ExternalFit> {
    fits.iter()
        .find(|f| f.k == k)
        .ok_or_else(|| Error::Fit(format!("no fitted constants at k = {k}")))
}

/// `D^w = w D_bar + (1 - w) D_k m2`.
pub fn omega_d(omega: f64, d_bar: f64, d_frozen: f64, m2: f64) -> f64 {
    omega * d_bar + (1.0 - omega) * d_frozen * m2
}

/// Mixed-operator inequality `int Q^w(f, f) <v,I>^k <= D^w m_k[f]` over
/// `densities x orders x omegas`, with `D_bar` taken from `fits`.
pub fn verify_omega_catalog(
    mixture: &MixtureSpec,
    fits: &[ExternalFit],
    densities: &[TestDensity],
    settings: &CatalogSettings,
    seed: u64,
) -> Result<Vec<InequalityCheck>> {
    let m = mixture.mass();
    let frozen = mixture.frozen();
    let tests: Vec<TestFunction> = settings.orders.iter().map(|&k| TestFunction::BracketVi(k)).collect();
    let mut out = Vec::new();
    for (d, f) in densities.iter().enumerate() {
        let jobs = [
            WeakFormJob { kernel: frozen, tests: tests.clone() },
            WeakFormJob { kernel: mixture.poly(), tests: tests.clone() },
        ];
        let s = sub_seed(seed, &[0x0E, d as u64]);
        let batches = weak_form_batches(f, f, &jobs, settings.n_samples, DEFAULT_BATCHES, s)?;
        let m2 = f.moment(MomentFamily::Total, 2.0, m)?;
        for (j, &k) in settings.orders.iter().enumerate() {
            let d_bar = fit_at(fits, k)?.d_bar;
            let d_frozen = frozen_d_k(k, frozen.c_upper(), frozen.norm_b());
            let m_k = f.moment(MomentFamily::Total, k, m)?;
            for &omega in &settings.omegas {
                let est = combine(
                    &[(0.5 * (1.0 - omega), &batches[0][j]), (0.5 * omega, &batches[1][j])],
                    "mixed",
                )?;
                let rhs = omega_d(omega, d_bar, d_frozen, m2) * m_k;
                let verdict = verify_inequality(&est, rhs, settings.n_sigma);
                out.push(InequalityCheck {
                    inequality: Inequality::OmegaSmallK,
                    entry: d,
                    k,
                    zeta: mixture.poly().zeta(),
                    omega: Some(omega),
                    estimate: est,
                    rhs,
                    verdict,
                });
            }
        }
    }
    Ok(out)
}

/// Distinct densities of a pair catalog, in order of first appearance.
pub fn catalog_densities(catalog: &[(TestDensity, TestDensity)]) -> Vec<TestDensity> {
    let mut out: Vec<TestDensity> = Vec::new();
    for (f, g) in catalog {
        for d in [f, g] {
            if !out.contains(d) {
                out.push(*d);
            }
        }
    }
    out
}

/// Orders used by the mixed-operator envelope checks: one below `k*` and
/// one at or above it, plus the anchor `k* + 1` of the small-order set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OmegaOrders {
    pub k_star: f64,
    pub k_small: f64,
    pub k_large: f64,
    pub anchor: f64,
}

impl OmegaOrders {
    pub fn from_k_star(k_star: f64) -> Self {
        Self { k_star, k_small: 0.5 * (2.0 + k_star), k_large: k_star.max(4.0), anchor: k_star + 1.0 }
    }

    pub fn fit_orders(&self) -> Vec<f64> {
        let mut ks = vec![self.k_small, self.k_large, self.anchor];
        ks.sort_by(f64::total_cmp);
        ks.dedup();
        ks
    }
}

/// Mixed-operator bound set at order `k` for total mass-energy moment `m2`.
/// Orders below `k*` are anchored at `k* + 1`, which must be among `fits`.
pub fn omega_bounds(m2: f64, mixture: &MixtureSpec, fits: &[ExternalFit], k_star: f64, k: f64) -> Result<OmegaBoundSet> {
    let frozen = mixture.frozen();
    let d_frozen = |k: f64| frozen_d_k(k, frozen.c_upper(), frozen.norm_b());
    let (omega, zeta, zeta_f) = (mixture.omega(), mixture.poly().zeta(), frozen.zeta());
    if k >= k_star {
        let ext = fit_at(fits, k)?.externals()?;
        OmegaBoundSet::large_k(m2, &ext, d_frozen(k), omega, zeta, zeta_f, k_star)
    } else {
        let a = k_star + 1.0;
        let anchor_ext = fit_at(fits, a)?.externals()?;
        let anchor = OmegaBoundSet::large_k(m2, &anchor_ext, d_frozen(a), omega, zeta, zeta_f, k_star)?;
        OmegaBoundSet::small_k(m2, k, fit_at(fits, k)?.d_bar, true, d_frozen(k), &anchor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::povzner::{frozen_table, PovznerSettings};
    use crate::quadrature::density_catalog;

    #[test]
    fn frozen_catalog_never_fails_at_small_n() {
        let template = KernelSpec::frozen(1.0, 1.0).unwrap();
        let settings = PovznerSettings { n_pairs: 20_000, ..PovznerSettings::frozen_default() };
        let table = frozen_table(template.angular(), &settings, 3).unwrap();
        let cat = CatalogSettings { n_samples: 32_000, orders: vec![4.0], ..CatalogSettings::default() };
        let checks = verify_frozen_catalog(&template, &table, &density_catalog()[..2], &cat, 9).unwrap();
        assert_eq!(checks.len(), 2 * 2 * 2);
        assert!(checks.iter().all(|c| c.verdict != Verdict::Fail), "{checks:#?}");
    }

    #[test]
    fn omega_d_endpoints() {
        assert_eq!(omega_d(1.0, 3.0, 16.0, 2.0), 3.0);
        assert_eq!(omega_d(0.0, 3.0, 16.0, 2.0), 32.0);
    }

    #[test]
    fn omega_orders_cover_both_regimes() {
        let o = OmegaOrders::from_k_star(2.5);
        assert_eq!((o.k_small, o.k_large, o.anchor), (2.25, 4.0, 3.5));
        assert_eq!(o.fit_orders(), vec![2.25, 3.5, 4.0]);
        let o = OmegaOrders::from_k_star(6.0);
        assert!(o.k_small < 6.0 && o.k_large == 6.0);
    }

    #[test]
    fn catalog_densities_are_distinct() {
        let d = catalog_densities(&density_catalog());
        assert_eq!(d.len(), 8);
    }
}
