//! Monte Carlo weak forms of the collision operators and the statistical
//! test that compares them with a bound.
//!
//! Densities are products of a drifting Gaussian in `v` and a Gamma law in
//! `I`, so pairs are drawn exactly from `f (x) g`. The symmetrized weak form
//!
//! ```text
//!   W(f, g) = int (Q(f,g) + Q(g,f)) chi
//!           = int f g B [chi(v',I') + chi(v*',I*') - chi(v,I) - chi(v*,I*)]
//! ```
//!
//! is estimated in pre-collision variables only; standard errors come from
//! batch means.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::bounds::MomentSnapshot;
use crate::error::{Error, Result};
use crate::kernels::{Channel, KernelSpec, MixtureSpec};
use crate::kinematics::{
    bracket_i_sq, bracket_v_sq, bracket_vi_sq, frozen_transform, norm2, poly_transform, scale, sub,
    total_energy, FrozenParams, MomentFamily, PolyParams, Vec3,
};
use crate::rng::{stream, tag};

pub const DEFAULT_BATCHES: usize = 32;

/// `rho * N(drift, T I_3)(v) * Gamma(alpha_i + 1, theta)(I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestDensity {
    pub rho: f64,
    #[serde(default)]
    pub drift: Vec3,
    pub temperature: f64,
    pub theta: f64,
    #[serde(default)]
    pub alpha_i: f64,
}

impl TestDensity {
    pub fn new(rho: f64, drift: Vec3, temperature: f64, theta: f64, alpha_i: f64) -> Result<Self> {
        let d = Self { rho, drift, temperature, theta, alpha_i };
        d.validate()?;
        Ok(d)
    }

    /// Unit-mass Maxwellian at unit temperature with exponential internal energy.
    pub fn unit() -> Self {
        Self { rho: 1.0, drift: [0.0; 3], temperature: 1.0, theta: 1.0, alpha_i: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [("rho", self.rho), ("temperature", self.temperature), ("theta", self.theta)];
        for (name, x) in pos {
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::InvalidParam(format!("test density {name} must be finite and > 0, got {x}")));
            }
        }
        if !(self.alpha_i > -1.0) || !self.alpha_i.is_finite() {
            return Err(Error::InvalidParam(format!("test density alpha_i must be > -1, got {}", self.alpha_i)));
        }
        if self.drift.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParam("test density drift must be finite".into()));
        }
        Ok(())
    }

    /// Draws one `(v, I)` from the normalized density.
    pub fn sample<R: Rng + ?Sized>(&self, gamma: &Gamma<f64>, rng: &mut R) -> (Vec3, f64) {
        let s = self.temperature.sqrt();
        let mut v = self.drift;
        for c in v.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *c += s * z;
        }
        (v, gamma.sample(rng))
    }

    pub fn gamma(&self) -> Result<Gamma<f64>> {
        Gamma::new(self.alpha_i + 1.0, self.theta).map_err(|e| Error::InvalidParam(e.to_string()))
    }

    /// `m_2^v = rho (1 + (|V|^2 + 3T) / 2)`.
    pub fn m2_v(&self) -> f64 {
        self.rho * (1.0 + 0.5 * (norm2(self.drift) + 3.0 * self.temperature))
    }

    /// `m_2^I = rho (1 + (alpha_i + 1) theta / m)`.
    pub fn m2_i(&self, mass: f64) -> f64 {
        self.rho * (1.0 + (self.alpha_i + 1.0) * self.theta / mass)
    }

    /// Moment snapshot with `zeta`-moments at order `zeta`.
    pub fn snapshot(&self, zeta: f64, mass: f64) -> Result<MomentSnapshot> {
        MomentSnapshot::new(
            self.rho,
            self.moment(MomentFamily::Total, 2.0, mass)?,
            self.m2_v(),
            self.m2_i(mass),
            self.moment(MomentFamily::Velocity, zeta, mass)?,
            self.moment(MomentFamily::Internal, zeta, mass)?,
        )
    }

    /// Polynomial moment of order `k`. Orders 0 and 2 are closed form; other
    /// orders use adaptive one-dimensional quadrature against the radial
    /// speed density and the Gamma density (nested for the total bracket).
    pub fn moment(&self, family: MomentFamily, k: f64, mass: f64) -> Result<f64> {
        if !(k >= 0.0) || !k.is_finite() {
            return Err(Error::InvalidParam(format!("moment order must be finite and >= 0, got {k}")));
        }
        if !(mass > 0.0) {
            return Err(Error::InvalidParam(format!("mass must be > 0, got {mass}")));
        }
        if k == 0.0 {
            return Ok(self.rho);
        }
        if k == 2.0 {
            return Ok(match family {
                MomentFamily::Velocity => self.m2_v(),
                MomentFamily::Internal => self.m2_i(mass),
                MomentFamily::Total => self.m2_v() + self.m2_i(mass) - self.rho,
            });
        }
        let half = 0.5 * k;
        let c = self.theta / mass;
        let e = match family {
            MomentFamily::Velocity => self.speed_expectation(|s2| (1.0 + 0.5 * s2).powf(half)),
            MomentFamily::Internal => self.gamma_expectation(k, |x| (1.0 + c * x).powf(half)),
            MomentFamily::Total => self.gamma_expectation(k, |x| {
                let base = 1.0 + c * x;
                self.speed_expectation(|s2| (base + 0.5 * s2).powf(half))
            }),
        };
        Ok(self.rho * e)
    }

    /// `E[h(|v|^2)]` against the speed density of `N(drift, T)`.
    fn speed_expectation(&self, h: impl Fn(f64) -> f64) -> f64 {
        let t = self.temperature;
        let sd = t.sqrt();
        let a = norm2(self.drift).sqrt();
        let density = |s: f64| {
            if s <= 0.0 {
                return 0.0;
            }
            if a < 1e-12 * sd {
                (2.0 / std::f64::consts::PI).sqrt() * s * s / (t * sd) * (-0.5 * s * s / t).exp()
            } else {
                s / (a * (2.0 * std::f64::consts::PI * t).sqrt())
                    * (-0.5 * (s - a).powi(2) / t).exp()
                    * -(-2.0 * s * a / t).exp_m1()
            }
        };
        let lo = (a - 40.0 * sd).max(0.0);
        let hi = a + 40.0 * sd;
        let n_panels = 20;
        let width = (hi - lo) / n_panels as f64;
        (0..n_panels)
            .map(|i| {
                let (p, q) = (lo + i as f64 * width, lo + (i + 1) as f64 * width);
                quadrature::double_exponential::integrate(|s| h(s * s) * density(s), p, q, 1e-13).integral
            })
            .sum()
    }

    /// `E[h(x)]` for `x = I / theta ~ Gamma(alpha_i + 1, 1)`.
    fn gamma_expectation(&self, k: f64, h: impl Fn(f64) -> f64) -> f64 {
        let a = self.alpha_i;
        let norm = ln_gamma(a + 1.0);
        let density = |x: f64| if x <= 0.0 { 0.0 } else { (a * x.ln() - x - norm).exp() };
        let top = 100.0 + 8.0 * (a + 1.0 + 0.5 * k);
        let mut edges = vec![0.0, 0.5];
        while *edges.last().unwrap() < top {
            let next = 2.0 * edges.last().unwrap();
            edges.push(next.min(top));
        }
        // On the first panel substitute y = x^(a+1), which absorbs the x^a
        // endpoint singularity: x^a dx = dy / (a+1).
        let p = 1.0 / (a + 1.0);
        let head = quadrature::double_exponential::integrate(
            |y| {
                let x = y.powf(p);
                p * h(x) * (-x - norm).exp()
            },
            0.0,
            edges[1].powf(a + 1.0),
            1e-13,
        )
        .integral;
        head + edges[1..]
            .windows(2)
            .map(|w| quadrature::double_exponential::integrate(|x| h(x) * density(x), w[0], w[1], 1e-13).integral)
            .sum::<f64>()
    }
}

/// Catalog of density pairs used for the operator inequalities.
pub fn density_catalog() -> Vec<(TestDensity, TestDensity)> {
    let d = |rho, drift, t, th, a| TestDensity { rho, drift, temperature: t, theta: th, alpha_i: a };
    vec![
        (TestDensity::unit(), TestDensity::unit()),
        (d(1.0, [0.0; 3], 1.0, 1.0, 0.0), d(1.0, [0.5, 0.0, 0.0], 2.0, 0.5, 0.0)),
        (d(2.0, [1.0, 0.0, 0.0], 0.5, 2.0, 1.0), d(0.5, [-1.0, 0.5, 0.0], 1.5, 0.3, -0.5)),
        (d(1.0, [0.0; 3], 0.2, 0.1, 0.0), d(1.0, [0.0; 3], 3.0, 4.0, 2.0)),
        (d(1.0, [0.0; 3], 1.0, 5.0, 0.5), d(1.0, [0.0, 0.0, 2.0], 4.0, 0.2, 0.0)),
    ]
}

/// Test function `chi(v, I)` of a weak form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "k", rename_all = "snake_case")]
pub enum TestFunction {
    BracketV(f64),
    BracketVi(f64),
    BracketI(f64),
    One,
    Velocity(usize),
    SpeedSquared,
    Internal,
    /// `m |v|^2 / 2 + I`.
    TotalEnergy,
}

impl TestFunction {
    #[inline]
    pub fn eval(&self, v: Vec3, internal: f64, mass: f64) -> f64 {
        match *self {
            TestFunction::BracketV(k) => bracket_v_sq(v).powf(0.5 * k),
            TestFunction::BracketVi(k) => bracket_vi_sq(v, internal, mass).powf(0.5 * k),
            TestFunction::BracketI(k) => bracket_i_sq(internal, mass).powf(0.5 * k),
            TestFunction::One => 1.0,
            TestFunction::Velocity(c) => v[c],
            TestFunction::SpeedSquared => norm2(v),
            TestFunction::Internal => internal,
            TestFunction::TotalEnergy => 0.5 * mass * norm2(v) + internal,
        }
    }

    pub fn order(&self) -> Option<f64> {
        match *self {
            TestFunction::BracketV(k) | TestFunction::BracketVi(k) | TestFunction::BracketI(k) => Some(k),
            _ => None,
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            TestFunction::BracketV(_) => "v",
            TestFunction::BracketVi(_) => "total",
            TestFunction::BracketI(_) => "I",
            TestFunction::One => "one",
            TestFunction::Velocity(_) => "velocity",
            TestFunction::SpeedSquared => "speed_squared",
            TestFunction::Internal => "internal",
            TestFunction::TotalEnergy => "total_energy",
        }
    }

    /// Change of `chi` over one collision, summed over both partners.
    /// Terms are grouped per particle so a function left unchanged by the
    /// collision contributes exactly zero.
    #[inline]
    fn delta(&self, pre: (Vec3, f64, Vec3, f64), post: (Vec3, f64, Vec3, f64), mass: f64) -> f64 {
        (self.eval(post.0, post.1, mass) - self.eval(pre.0, pre.1, mass))
            + (self.eval(post.2, post.3, mass) - self.eval(pre.2, pre.3, mass))
    }
}

/// Monte Carlo estimate of a weak form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakFormEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub n_batches: usize,
    pub k: Option<f64>,
    pub family: String,
    pub channel: String,
    /// Relative standard error above one: the integrand may not be
    /// integrable against the sampled densities.
    pub flagged: bool,
}

/// Per-batch means for one test function; combined linearly before the
/// standard error is taken, so correlations between channels are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchMeans {
    pub means: Vec<f64>,
    pub batch_size: usize,
    pub test: TestFunction,
    pub channel: Channel,
}

impl BatchMeans {
    pub fn estimate(&self) -> WeakFormEstimate {
        summarize(&self.means, self.batch_size, &self.test, self.channel.label())
    }
}

fn summarize(means: &[f64], batch_size: usize, test: &TestFunction, channel: &str) -> WeakFormEstimate {
    let nb = means.len() as f64;
    let value = means.iter().sum::<f64>() / nb;
    let var = if means.len() > 1 {
        means.iter().map(|m| (m - value).powi(2)).sum::<f64>() / (nb - 1.0)
    } else {
        0.0
    };
    let std_error = (var / nb).sqrt();
    WeakFormEstimate {
        value,
        std_error,
        n_samples: batch_size * means.len(),
        n_batches: means.len(),
        k: test.order(),
        family: test.family().to_string(),
        channel: channel.to_string(),
        flagged: std_error > value.abs() && std_error > 0.0,
    }
}

/// Linear combination `sum c_i W_i` of estimates sharing batches.
pub fn combine(parts: &[(f64, &BatchMeans)], channel: &str) -> Result<WeakFormEstimate> {
    let first = parts.first().ok_or_else(|| Error::InvalidParam("nothing to combine".into()))?.1;
    if parts.iter().any(|(_, b)| b.means.len() != first.means.len()) {
        return Err(Error::InvalidParam("combined estimates must share the batch layout".into()));
    }
    let means: Vec<f64> = (0..first.means.len())
        .map(|i| parts.iter().map(|(c, b)| c * b.means[i]).sum())
        .collect();
    Ok(summarize(&means, first.batch_size, &first.test, channel))
}

/// One kernel and the test functions evaluated with it.
#[derive(Debug, Clone)]
pub struct WeakFormJob<'a> {
    pub kernel: &'a KernelSpec,
    pub tests: Vec<TestFunction>,
}

/// Evaluates every job on the same `n` pairs drawn from `f (x) g`, split
/// into `n_batches` batches with independent streams. Returns
/// `[job][test]` batch means of the symmetrized weak form `W(f, g)`.
pub fn weak_form_batches(
    f: &TestDensity,
    g: &TestDensity,
    jobs: &[WeakFormJob<'_>],
    n: usize,
    n_batches: usize,
    seed: u64,
) -> Result<Vec<Vec<BatchMeans>>> {
    f.validate()?;
    g.validate()?;
    if n_batches == 0 || n < n_batches {
        return Err(Error::InvalidParam(format!("need n >= n_batches > 0 (n = {n}, batches = {n_batches})")));
    }
    let mass = jobs.first().map(|j| j.kernel.mass()).unwrap_or(1.0);
    if jobs.iter().any(|j| j.kernel.mass() != mass) {
        return Err(Error::InvalidParam("all kernels in one run must share the mass".into()));
    }
    let batch_size = n / n_batches;
    let (gf, gg) = (f.gamma()?, g.gamma()?);
    let mut rr_proposals = Vec::with_capacity(jobs.len());
    for j in jobs {
        rr_proposals.push(match j.kernel.channel() {
            Channel::Frozen => None,
            Channel::Polyatomic => {
                let a = j.kernel.alpha();
                let pr = Beta::new(a + 1.0, a + 1.0).map_err(|e| Error::InvalidParam(e.to_string()))?;
                let pb = Beta::new(1.5, 2.0 * a + 2.0).map_err(|e| Error::InvalidParam(e.to_string()))?;
                Some((pr, pb, j.kernel.rr_measure()))
            }
        });
    }
    let prefactor = f.rho * g.rho;

    let per_batch: Vec<Vec<Vec<f64>>> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, &[tag::WEAK_FORM, b as u64]);
            let mut sums: Vec<Vec<f64>> = jobs.iter().map(|j| vec![0.0; j.tests.len()]).collect();
            for _ in 0..batch_size {
                let (v, i) = f.sample(&gf, &mut rng);
                let (vs, is) = g.sample(&gg, &mut rng);
                let u = sub(v, vs);
                let u2 = norm2(u);
                let u_hat = if u2 > 0.0 { scale(u, 1.0 / u2.sqrt()) } else { [0.0, 0.0, 1.0] };
                let e = total_energy(v, vs, i, is, mass) / mass;
                for ((job, sum), rr) in jobs.iter().zip(sums.iter_mut()).zip(&rr_proposals) {
                    let kernel = job.kernel;
                    let sigma = kernel.angular().sample_sigma(u_hat, &mut rng);
                    let (weight, post) = match rr {
                        None => {
                            let (a, b) = frozen_transform(v, vs, &FrozenParams::new(sigma).expect("unit sigma"));
                            let w = kernel.norm_b() * kernel.tilde_b(e, None).expect("frozen kernel");
                            (w, (a, i, b, is))
                        }
                        Some((pr, pb, measure)) => {
                            let r = pr.sample(&mut rng);
                            let big_r = pb.sample(&mut rng);
                            let params = PolyParams::new(sigma, r, big_r).expect("valid collision parameters");
                            let out = poly_transform(v, vs, i, is, mass, &params);
                            let w = kernel.norm_b() * measure * kernel.tilde_b(e, Some((r, big_r))).expect("rr given");
                            (w, (out.v, out.internal, out.v_star, out.internal_star))
                        }
                    };
                    for (s, t) in sum.iter_mut().zip(&job.tests) {
                        *s += weight * t.delta((v, i, vs, is), post, mass);
                    }
                }
            }
            sums.into_iter()
                .map(|row| row.into_iter().map(|s| prefactor * s / batch_size as f64).collect())
                .collect()
        })
        .collect();

    Ok(jobs
        .iter()
        .enumerate()
        .map(|(ji, job)| {
            job.tests
                .iter()
                .enumerate()
                .map(|(ti, t)| BatchMeans {
                    means: per_batch.iter().map(|b| b[ji][ti]).collect(),
                    batch_size,
                    test: *t,
                    channel: job.kernel.channel(),
                })
                .collect()
        })
        .collect())
}

fn single<R: Rng + ?Sized>(
    f: &TestDensity,
    g: &TestDensity,
    test: TestFunction,
    spec: &KernelSpec,
    n: usize,
    rng: &mut R,
) -> Result<WeakFormEstimate> {
    let jobs = [WeakFormJob { kernel: spec, tests: vec![test] }];
    let out = weak_form_batches(f, g, &jobs, n, DEFAULT_BATCHES, rng.random())?;
    Ok(out[0][0].estimate())
}

/// Symmetrized frozen weak form `W(f, g)` for one test function.
pub fn weak_form_frozen<R: Rng + ?Sized>(
    f: &TestDensity,
    g: &TestDensity,
    test: TestFunction,
    spec: &KernelSpec,
    n: usize,
    rng: &mut R,
) -> Result<WeakFormEstimate> {
    if spec.channel() != Channel::Frozen {
        return Err(Error::WrongChannel { operation: "weak_form_frozen", expected: "frozen" });
    }
    single(f, g, test, spec, n, rng)
}

/// Symmetrized polyatomic weak form `W(f, g)` for one test function.
pub fn weak_form_poly<R: Rng + ?Sized>(
    f: &TestDensity,
    g: &TestDensity,
    test: TestFunction,
    spec: &KernelSpec,
    n: usize,
    rng: &mut R,
) -> Result<WeakFormEstimate> {
    if spec.channel() != Channel::Polyatomic {
        return Err(Error::WrongChannel { operation: "weak_form_poly", expected: "polyatomic" });
    }
    single(f, g, test, spec, n, rng)
}

/// `int Q^w(f, f) chi = (w W_poly(f, f) + (1 - w) W_frozen(f, f)) / 2`.
pub fn weak_form_mixed_self(
    f: &TestDensity,
    test: TestFunction,
    mixture: &MixtureSpec,
    n: usize,
    seed: u64,
) -> Result<WeakFormEstimate> {
    let jobs = [
        WeakFormJob { kernel: mixture.frozen(), tests: vec![test] },
        WeakFormJob { kernel: mixture.poly(), tests: vec![test] },
    ];
    let out = weak_form_batches(f, f, &jobs, n, DEFAULT_BATCHES, seed)?;
    let w = mixture.omega();
    combine(&[(0.5 * (1.0 - w), &out[0][0]), (0.5 * w, &out[1][0])], "mixed")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Pass when the estimate sits `n_sigma` standard errors below `rhs`, fail
/// when it sits `n_sigma` above, inconclusive otherwise.
pub fn verify_inequality(estimate: &WeakFormEstimate, rhs: f64, n_sigma: f64) -> Verdict {
    if estimate.value + n_sigma * estimate.std_error <= rhs {
        Verdict::Pass
    } else if estimate.value - n_sigma * estimate.std_error > rhs {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gauss_quad::GaussHermite;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn est(value: f64, se: f64) -> WeakFormEstimate {
        WeakFormEstimate {
            value,
            std_error: se,
            n_samples: 1,
            n_batches: 1,
            k: None,
            family: "v".into(),
            channel: "frozen".into(),
            flagged: false,
        }
    }

    #[test]
    fn verdicts() {
        assert_eq!(verify_inequality(&est(-1.0, 0.1), 0.0, 3.0), Verdict::Pass);
        assert_eq!(verify_inequality(&est(1.0, 0.1), 0.0, 3.0), Verdict::Fail);
        assert_eq!(verify_inequality(&est(0.05, 0.1), 0.0, 3.0), Verdict::Inconclusive);
    }

    #[test]
    fn closed_form_moments_match_quadrature_path() {
        // Order 2 through the numerical path (k slightly off 2) approaches the
        // closed forms.
        let d = TestDensity::new(1.3, [0.4, -0.2, 1.0], 0.7, 1.6, 0.5).unwrap();
        for fam in [MomentFamily::Velocity, MomentFamily::Internal, MomentFamily::Total] {
            let exact = d.moment(fam, 2.0, 2.0).unwrap();
            let near = d.moment(fam, 2.0 + 1e-9, 2.0).unwrap();
            assert!((near - exact).abs() < 1e-7 * exact, "{fam:?}: {near} vs {exact}");
        }
    }

    #[test]
    fn velocity_fourth_moment_closed_form() {
        // <v>^4 = 1 + |v|^2 + |v|^4/4 with E|v|^4 = |V|^4 + 2(d+2)T|V|^2 + d(d+2)T^2, d = 3.
        let d = TestDensity::new(1.0, [0.3, 0.0, 1.2], 1.7, 1.0, 0.0).unwrap();
        let (a2, t) = (norm2(d.drift), d.temperature);
        let m2 = a2 + 3.0 * t;
        let m4 = a2 * a2 + 10.0 * t * a2 + 15.0 * t * t;
        let exact = 1.0 + m2 + 0.25 * m4;
        let got = d.moment(MomentFamily::Velocity, 4.0, 1.0).unwrap();
        assert!((got - exact).abs() < 1e-10 * exact, "{got} vs {exact}");
        let centred = TestDensity::unit();
        let got = centred.moment(MomentFamily::Velocity, 4.0, 1.0).unwrap();
        assert!((got - (1.0 + 3.0 + 0.25 * 15.0)).abs() < 1e-10 * got);
        // <I>^4 = (1 + I/m)^2 with I ~ Gamma(a+1, theta).
        let d = TestDensity::new(2.0, [0.0; 3], 1.0, 0.8, -0.5).unwrap();
        let (a, th, m) = (d.alpha_i, d.theta, 1.5);
        let e1 = (a + 1.0) * th;
        let e2 = (a + 1.0) * (a + 2.0) * th * th;
        let exact = 2.0 * (1.0 + 2.0 * e1 / m + e2 / (m * m));
        let got = d.moment(MomentFamily::Internal, 4.0, m).unwrap();
        assert!((got - exact).abs() < 1e-10 * exact, "{got} vs {exact}");
    }

    #[test]
    fn sampler_matches_closed_forms() {
        let d = TestDensity::new(1.0, [0.5, -1.0, 0.2], 1.4, 0.6, 1.5).unwrap();
        let g = d.gamma().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = 1.3;
        let n = 200_000;
        let (mut xv, mut xi, mut x3) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..n {
            let (v, i) = d.sample(&g, &mut rng);
            xv.push(bracket_v_sq(v));
            xi.push(bracket_i_sq(i, m));
            x3.push(bracket_vi_sq(v, i, m).powf(1.5));
        }
        for (xs, exact) in [
            (xv, d.m2_v()),
            (xi, d.m2_i(m)),
            (x3, d.moment(MomentFamily::Total, 3.0, m).unwrap()),
        ] {
            let mean = xs.iter().sum::<f64>() / n as f64;
            let se = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0) / n as f64).sqrt();
            assert!((mean - exact).abs() < 3.0 * se, "{mean} vs {exact} (se {se})");
        }
    }

    #[test]
    fn frozen_collision_invariants_vanish() {
        let spec = KernelSpec::frozen(1.0, 1.0).unwrap();
        let (f, g) = density_catalog()[2];
        let tests = vec![
            TestFunction::One,
            TestFunction::Velocity(0),
            TestFunction::Velocity(1),
            TestFunction::Velocity(2),
            TestFunction::SpeedSquared,
            TestFunction::Internal,
            TestFunction::BracketI(3.0),
        ];
        let jobs = [WeakFormJob { kernel: &spec, tests }];
        let out = weak_form_batches(&f, &g, &jobs, 1_000_000, 32, 3).unwrap();
        for b in &out[0] {
            let e = b.estimate();
            match b.test {
                TestFunction::One | TestFunction::Internal | TestFunction::BracketI(_) => {
                    assert!(b.means.iter().all(|&m| m == 0.0), "{:?}", b.test)
                }
                _ => assert!(e.value.abs() <= 3.0 * e.std_error + 1e-12, "{:?}: {e:?}", b.test),
            }
        }
    }

    #[test]
    fn poly_collision_invariants_vanish() {
        let spec = KernelSpec::polyatomic(1.0, 0.5, 1.7).unwrap();
        let (f, g) = density_catalog()[3];
        let tests = vec![
            TestFunction::One,
            TestFunction::Velocity(0),
            TestFunction::Velocity(2),
            TestFunction::TotalEnergy,
            TestFunction::BracketVi(2.0),
        ];
        let jobs = [WeakFormJob { kernel: &spec, tests }];
        let out = weak_form_batches(&f, &g, &jobs, 1_000_000, 32, 4).unwrap();
        for b in &out[0] {
            let e = b.estimate();
            if b.test == TestFunction::One {
                assert!(b.means.iter().all(|&m| m == 0.0));
            } else {
                assert!(e.value.abs() <= 3.0 * e.std_error + 1e-9, "{:?}: {e:?}", b.test);
            }
        }
    }

    /// `E_{f(x)g}[(s^2 + E[J]) 2 (s^2 |V|^2 / 3 - (V.u)^2 / 4)]` by a tensor
    /// Gauss-Hermite rule, exact for this degree-6 polynomial. This is the
    /// sigma-averaged change of `<v>^4` for an isotropic `b` and `zeta = 2`.
    fn hermite_oracle(f: &TestDensity, g: &TestDensity, mass: f64) -> f64 {
        let rule = GaussHermite::new(4.try_into().unwrap());
        let pts: Vec<(f64, f64)> = rule.as_node_weight_pairs().to_vec();
        let pi32 = std::f64::consts::PI.powf(1.5);
        let ej = ((f.alpha_i + 1.0) * f.theta + (g.alpha_i + 1.0) * g.theta) / mass;
        let mut total = 0.0;
        let idx = |n: usize| [n % 4, (n / 4) % 4, (n / 16) % 4];
        for a in 0..64 {
            for b in 0..64 {
                let (ia, ib) = (idx(a), idx(b));
                let mut w = 1.0;
                let mut v = [0.0; 3];
                let mut vs = [0.0; 3];
                for c in 0..3 {
                    v[c] = f.drift[c] + (2.0 * f.temperature).sqrt() * pts[ia[c]].0;
                    vs[c] = g.drift[c] + (2.0 * g.temperature).sqrt() * pts[ib[c]].0;
                    w *= pts[ia[c]].1 * pts[ib[c]].1;
                }
                w /= pi32 * pi32;
                let big_v = scale([v[0] + vs[0], v[1] + vs[1], v[2] + vs[2]], 0.5);
                let u = sub(v, vs);
                let s2 = 0.25 * norm2(u);
                let vu = big_v[0] * u[0] + big_v[1] * u[1] + big_v[2] * u[2];
                total += w * (s2 + ej) * 2.0 * (s2 * norm2(big_v) / 3.0 - 0.25 * vu * vu);
            }
        }
        f.rho * g.rho * total
    }

    #[test]
    fn frozen_fourth_moment_matches_hermite_oracle() {
        let spec = KernelSpec::frozen(2.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for (f, g) in density_catalog() {
            let e = weak_form_frozen(&f, &g, TestFunction::BracketV(4.0), &spec, 1_000_000, &mut rng).unwrap();
            let exact = hermite_oracle(&f, &g, 1.0);
            assert!((e.value - exact).abs() < 4.0 * e.std_error + 1e-12, "{e:?} vs {exact}");
        }
        // f = g at equilibrium: the weak form vanishes identically.
        let u = TestDensity::unit();
        assert!(hermite_oracle(&u, &u, 1.0).abs() < 1e-12);
    }

    #[test]
    fn std_error_halves_when_n_quadruples() {
        let spec = KernelSpec::frozen(1.0, 1.0).unwrap();
        let (f, g) = density_catalog()[1];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let small = weak_form_frozen(&f, &g, TestFunction::BracketV(4.0), &spec, 100_000, &mut rng).unwrap();
        let large = weak_form_frozen(&f, &g, TestFunction::BracketV(4.0), &spec, 400_000, &mut rng).unwrap();
        let ratio = small.std_error / large.std_error;
        assert!(ratio > 2.0 / 1.5 && ratio < 2.0 * 1.5, "{ratio}");
    }

    #[test]
    fn mixed_combination_is_linear() {
        let f = density_catalog()[4].0;
        let fr = KernelSpec::frozen(1.0, 1.0).unwrap();
        let po = KernelSpec::polyatomic(1.0, 0.0, 1.0).unwrap();
        let t = TestFunction::BracketVi(4.0);
        let jobs = [WeakFormJob { kernel: &fr, tests: vec![t] }, WeakFormJob { kernel: &po, tests: vec![t] }];
        let out = weak_form_batches(&f, &f, &jobs, 64_000, 32, 12).unwrap();
        let mix = MixtureSpec::new(0.25, fr.clone(), po.clone()).unwrap();
        let m = weak_form_mixed_self(&f, t, &mix, 64_000, 12).unwrap();
        let expect = 0.5 * (0.75 * out[0][0].estimate().value + 0.25 * out[1][0].estimate().value);
        assert!((m.value - expect).abs() < 1e-12 * expect.abs().max(1.0));
        assert!(weak_form_frozen(&f, &f, t, &po, 100, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
