//! Monte Carlo surrogates for the polyatomic-operator constants
//! `A_bar_k`, `B_bar_k`, `D_bar_k`.
//!
//! The pure polyatomic weak form `y = int Q(f, f) <v,I>^k` is estimated on a
//! one-parameter family `f_s` (Maxwellian at temperature `s`, Gamma internal
//! energy at scale `theta_ratio * m * s`). A least-squares line
//! `y = -A_bar m_(k+zeta) + B_bar` gives `A_bar`; `B_bar` and `D_bar` are then
//! raised until every fitted point satisfies its bound with `n_sigma`
//! standard errors to spare.

use serde::{Deserialize, Serialize};

use crate::bounds::Externals;
use crate::error::{Error, Result};
use crate::kernels::{Channel, KernelSpec};
use crate::kinematics::MomentFamily;
use crate::quadrature::{weak_form_batches, TestDensity, TestFunction, WeakFormJob, DEFAULT_BATCHES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSettings {
    pub scales: Vec<f64>,
    pub theta_ratio: f64,
    pub n_samples: usize,
    pub n_sigma: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            scales: vec![0.5, 1.0, 2.0, 4.0, 8.0, 16.0],
            theta_ratio: 0.25,
            n_samples: 200_000,
            n_sigma: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitPoint {
    pub scale: f64,
    pub m_k: f64,
    pub m_k_plus_zeta: f64,
    pub value: f64,
    pub std_error: f64,
}

/// Fitted constants at one order. `a_bar`/`b_bar` exist only for `k >= k*`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExternalFit {
    pub k: f64,
    pub a_bar: Option<f64>,
    pub b_bar: Option<f64>,
    pub d_bar: f64,
    pub points: Vec<FitPoint>,
}

impl ExternalFit {
    pub fn externals(&self) -> Result<Externals> {
        match (self.a_bar, self.b_bar) {
            (Some(a_bar), Some(b_bar)) => Ok(Externals { k: self.k, a_bar, b_bar, d_bar: self.d_bar, estimated: true }),
            _ => Err(Error::Fit(format!("no A_bar/B_bar fitted at k = {} (below k*)", self.k))),
        }
    }
}

/// Member `f_s` of the fit family.
pub fn family_member(scale: f64, theta_ratio: f64, spec: &KernelSpec) -> Result<TestDensity> {
    TestDensity::new(1.0, [0.0; 3], scale, theta_ratio * spec.mass() * scale, spec.alpha())
}

/// Fits constants at every order in `ks` (all `> 2`) for the polyatomic
/// kernel `spec`.
pub fn fit_externals(
    spec: &KernelSpec,
    ks: &[f64],
    k_star: f64,
    settings: &FitSettings,
    seed: u64,
) -> Result<Vec<ExternalFit>> {
    if spec.channel() != Channel::Polyatomic {
        return Err(Error::WrongChannel { operation: "fit_externals", expected: "polyatomic" });
    }
    if settings.scales.len() < 2 {
        return Err(Error::Fit("need at least two family members".into()));
    }
    if let Some(&k) = ks.iter().find(|&&k| !(k > 2.0)) {
        return Err(Error::PovznerOrder(k));
    }
    let m = spec.mass();
    let zeta = spec.zeta();
    let tests: Vec<TestFunction> = ks.iter().map(|&k| TestFunction::BracketVi(k)).collect();
    // per[scale][k] -> point
    let mut per = Vec::with_capacity(settings.scales.len());
    for (i, &s) in settings.scales.iter().enumerate() {
        let f = family_member(s, settings.theta_ratio, spec)?;
        let jobs = [WeakFormJob { kernel: spec, tests: tests.clone() }];
        let out = weak_form_batches(&f, &f, &jobs, settings.n_samples, DEFAULT_BATCHES, seed ^ ((i as u64 + 1) << 32))?;
        let mut row = Vec::with_capacity(ks.len());
        for (b, &k) in out[0].iter().zip(ks) {
            let e = b.estimate();
            row.push(FitPoint {
                scale: s,
                m_k: f.moment(MomentFamily::Total, k, m)?,
                m_k_plus_zeta: f.moment(MomentFamily::Total, k + zeta, m)?,
                // int Q(f, f) chi is half the symmetrized form.
                value: 0.5 * e.value,
                std_error: 0.5 * e.std_error,
            });
        }
        per.push(row);
    }

    let mut fits = Vec::with_capacity(ks.len());
    for (j, &k) in ks.iter().enumerate() {
        let points: Vec<FitPoint> = per.iter().map(|row| row[j]).collect();
        let upper = |p: &FitPoint| p.value + settings.n_sigma * p.std_error;
        let d_bar = points.iter().map(|p| upper(p) / p.m_k).fold(0.0, f64::max);
        let (a_bar, b_bar) = if k >= k_star {
            let n = points.len() as f64;
            let mx = points.iter().map(|p| p.m_k_plus_zeta).sum::<f64>() / n;
            let my = points.iter().map(|p| p.value).sum::<f64>() / n;
            let sxy: f64 = points.iter().map(|p| (p.m_k_plus_zeta - mx) * (p.value - my)).sum();
            let sxx: f64 = points.iter().map(|p| (p.m_k_plus_zeta - mx).powi(2)).sum();
            let a_bar = -sxy / sxx;
            if !(a_bar > 0.0) || !a_bar.is_finite() {
                return Err(Error::Fit(format!(
                    "fitted slope at k = {k} gives A_bar = {a_bar}; the family shows no negative drift"
                )));
            }
            let b_bar = points
                .iter()
                .map(|p| upper(p) + a_bar * p.m_k_plus_zeta)
                .fold(0.0, f64::max);
            (Some(a_bar), Some(b_bar))
        } else {
            (None, None)
        };
        fits.push(ExternalFit { k, a_bar, b_bar, d_bar, points });
    }
    Ok(fits)
}
