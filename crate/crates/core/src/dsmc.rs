//! Majorant (no-time-counter) DSMC for the mixed collision operator.
//!
//! Each step runs two independent sub-steps, frozen with rate weight
//! `1 - omega` and polyatomic with rate weight `omega`. A sub-step draws
//! `ceil(w * Lambda(E_max) * n * N * dt / 2)` disjoint candidate pairs and
//! accepts each with probability `rate / Lambda`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{envelope, BoundSetRef, EnvelopeKind, MomentSnapshot};
use crate::error::{Error, Result};
use crate::kernels::{Channel, KernelSpec, MixtureSpec};
use crate::kinematics::{
    frozen_transform, poly_transform, sub, total_energy, Ensemble, FrozenParams, MomentFamily, Particle, PolyParams,
};
use crate::quadrature::TestDensity;
use crate::rng::{stream, tag};

/// Pairs sampled for the initial majorant and for the mean collision time.
pub const PROBE_PAIRS: usize = 1000;
/// Initial majorant is this multiple of the largest probed pair energy.
pub const MAJORANT_HEADROOM: f64 = 4.0;
/// Growth factor applied to `E_max` after a violation.
pub const MAJORANT_GROWTH: f64 = 1.5;
/// Default step as a fraction of the majorant collision time.
pub const DEFAULT_DT_FRACTION: f64 = 0.1;

/// Initial data: one test density or a two-component mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialDensity {
    Single { density: TestDensity },
    Bimodal { first: TestDensity, second: TestDensity },
}

impl InitialDensity {
    pub fn rho(&self) -> f64 {
        match self {
            InitialDensity::Single { density } => density.rho,
            InitialDensity::Bimodal { first, second } => first.rho + second.rho,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            InitialDensity::Single { density } => density.validate(),
            InitialDensity::Bimodal { first, second } => {
                first.validate()?;
                second.validate()
            }
        }
    }

    /// Exact sampling of `n` equal-weight particles carrying total mass `rho`.
    pub fn sample_ensemble(&self, n: usize, mass: f64, seed: u64) -> Result<Ensemble> {
        self.validate()?;
        if n < 2 {
            return Err(Error::InvalidParam(format!("need at least two particles, got {n}")));
        }
        let mut rng = stream(seed, &[tag::INIT_PARTICLES]);
        let weight = self.rho() / n as f64;
        let mut particles = Vec::with_capacity(n);
        match self {
            InitialDensity::Single { density } => {
                let gamma = density.gamma()?;
                for _ in 0..n {
                    let (v, i) = density.sample(&gamma, &mut rng);
                    particles.push(Particle::new(v, i, weight)?);
                }
            }
            InitialDensity::Bimodal { first, second } => {
                let (g1, g2) = (first.gamma()?, second.gamma()?);
                let p_first = first.rho / (first.rho + second.rho);
                for _ in 0..n {
                    let (v, i) = if rng.random::<f64>() < p_first {
                        first.sample(&g1, &mut rng)
                    } else {
                        second.sample(&g2, &mut rng)
                    };
                    particles.push(Particle::new(v, i, weight)?);
                }
            }
        }
        Ensemble::new(particles, mass)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CollisionCounters {
    pub attempted: u64,
    pub accepted: u64,
}

impl CollisionCounters {
    pub fn acceptance(&self) -> f64 {
        if self.attempted == 0 {
            0.0
        } else {
            self.accepted as f64 / self.attempted as f64
        }
    }
}

fn channel_id(channel: Channel) -> u64 {
    match channel {
        Channel::Frozen => 0,
        Channel::Polyatomic => 1,
    }
}

enum Candidate {
    Rejected,
    Accepted(usize, usize, Particle, Particle),
    Violation(f64),
}

/// Solver state.
#[derive(Debug, Clone)]
pub struct SimState {
    ensemble: Ensemble,
    mixture: MixtureSpec,
    dt: f64,
    e_max: f64,
    seed: u64,
    step_index: u64,
    draws: u64,
    counters: [CollisionCounters; 2],
    order: Vec<u32>,
}

impl SimState {
    /// Builds the state; `dt = None` selects the default step.
    pub fn new(ensemble: Ensemble, mixture: MixtureSpec, dt: Option<f64>, seed: u64) -> Result<Self> {
        if ensemble.len() < 2 {
            return Err(Error::InvalidParam("need at least two particles".into()));
        }
        if ensemble.len() > u32::MAX as usize {
            return Err(Error::InvalidParam("too many particles".into()));
        }
        if ensemble.mass() != mixture.mass() {
            return Err(Error::InvalidParam(format!(
                "ensemble mass {} differs from kernel mass {}",
                ensemble.mass(),
                mixture.mass()
            )));
        }
        let mut probe = stream(seed, &[tag::INIT_MAJORANT]);
        let sampled = probe_pairs(&ensemble, &mut probe)
            .into_iter()
            .map(|(a, b)| pair_energy(&ensemble, a, b))
            .fold(0.0, f64::max);
        let e_max = MAJORANT_HEADROOM * sampled.max(f64::MIN_POSITIVE);
        let order = (0..ensemble.len() as u32).collect();
        let mut state = Self {
            ensemble,
            mixture,
            dt: 1.0,
            e_max,
            seed,
            step_index: 0,
            draws: 0,
            counters: [CollisionCounters::default(); 2],
            order,
        };
        state.dt = match dt {
            Some(dt) if dt > 0.0 && dt.is_finite() => dt,
            Some(dt) => return Err(Error::InvalidParam(format!("dt must be finite and > 0, got {dt}"))),
            None => {
                let lam = state.total_majorant();
                if !(lam > 0.0) {
                    return Err(Error::InvalidParam(
                        "majorant collision frequency is zero; give dt explicitly".into(),
                    ));
                }
                DEFAULT_DT_FRACTION / lam
            }
        };
        Ok(state)
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    pub fn mixture(&self) -> &MixtureSpec {
        &self.mixture
    }

    pub fn time(&self) -> f64 {
        self.ensemble.time
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn e_max(&self) -> f64 {
        self.e_max
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn counters(&self, channel: Channel) -> CollisionCounters {
        self.counters[channel_id(channel) as usize]
    }

    /// Majorant collision frequency per particle, `n * sum_c w_c Lambda_c`.
    pub fn total_majorant(&self) -> f64 {
        let n = self.ensemble.total_weight();
        [Channel::Frozen, Channel::Polyatomic]
            .iter()
            .map(|&c| self.mixture.channel_weight(c) * self.mixture.kernel(c).majorant_rate(self.e_max))
            .sum::<f64>()
            * n
    }

    /// Mean time between collisions of one particle, estimated from
    /// [`PROBE_PAIRS`] pairs of the current ensemble.
    pub fn mean_collision_time(&self) -> Result<f64> {
        let mut rng = stream(self.seed, &[tag::COLLISION_TIME]);
        let pairs = probe_pairs(&self.ensemble, &mut rng);
        let m = self.ensemble.mass();
        let mean_rate = pairs
            .iter()
            .map(|&(a, b)| {
                let e = pair_energy(&self.ensemble, a, b) / m;
                [Channel::Frozen, Channel::Polyatomic]
                    .iter()
                    .map(|&c| self.mixture.channel_weight(c) * self.mixture.kernel(c).pair_rate(e))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / pairs.len() as f64;
        let freq = self.ensemble.total_weight() * mean_rate;
        if !(freq > 0.0) {
            return Err(Error::InvalidParam("collision frequency is zero".into()));
        }
        Ok(1.0 / freq)
    }

    /// One step of length `dt`.
    pub fn step(&mut self) -> Result<()> {
        let dt = self.dt;
        self.step_by(dt)
    }

    /// Advances by exactly `duration`, clipping the final step.
    pub fn advance(&mut self, duration: f64) -> Result<()> {
        if !(duration >= 0.0) {
            return Err(Error::InvalidParam(format!("duration must be >= 0, got {duration}")));
        }
        let target = self.ensemble.time + duration;
        while self.ensemble.time < target {
            let remaining = target - self.ensemble.time;
            if remaining <= 1e-9 * self.dt {
                break;
            }
            let h = self.dt.min(remaining);
            self.step_by(h)?;
        }
        self.ensemble.time = target;
        Ok(())
    }

    fn step_by(&mut self, h: f64) -> Result<()> {
        self.sub_step(Channel::Frozen, h)?;
        self.sub_step(Channel::Polyatomic, h)?;
        self.ensemble.time += h;
        self.step_index += 1;
        Ok(())
    }

    fn sub_step(&mut self, channel: Channel, h: f64) -> Result<()> {
        let w = self.mixture.channel_weight(channel);
        if w == 0.0 {
            return Ok(());
        }
        let n_particles = self.ensemble.len();
        let density = self.ensemble.total_weight();
        let mass = self.ensemble.mass();
        loop {
            let spec = self.mixture.kernel(channel);
            let lam = spec.majorant_rate(self.e_max);
            let expected = w * lam * density * n_particles as f64 * h / 2.0;
            if !expected.is_finite() {
                return Err(Error::NonFinite {
                    what: format!("candidate count ({} channel)", channel.label()),
                    time: self.ensemble.time,
                    step: self.step_index,
                });
            }
            let n_cand = expected.ceil() as usize;
            if n_cand == 0 {
                return Ok(());
            }
            if 2 * n_cand > n_particles {
                log::warn!(
                    "{} channel needs {n_cand} candidate pairs for {n_particles} particles; halving dt {h:e}",
                    channel.label()
                );
                self.dt = self.dt.min(0.5 * h);
                self.sub_step(channel, 0.5 * h)?;
                return self.sub_step(channel, 0.5 * h);
            }

            let draw = self.draws;
            self.draws += 1;
            let mut pick = stream(self.seed, &[tag::PAIR_SELECTION, self.step_index, channel_id(channel), draw]);
            for i in 0..2 * n_cand {
                let j = pick.random_range(i..n_particles);
                self.order.swap(i, j);
            }

            let key = [tag::CANDIDATE, self.step_index, channel_id(channel), draw];
            let (seed, e_max) = (self.seed, self.e_max);
            let particles = self.ensemble.particles();
            let order = &self.order;
            let outcomes: Vec<Candidate> = (0..n_cand)
                .into_par_iter()
                .map(|idx| {
                    let a = order[2 * idx] as usize;
                    let b = order[2 * idx + 1] as usize;
                    let (p, q) = (particles[a], particles[b]);
                    let e = total_energy(p.v, q.v, p.internal, q.internal, mass);
                    if e > e_max {
                        return Candidate::Violation(e);
                    }
                    let mut rng = stream(seed, &[key[0], key[1], key[2], key[3], idx as u64]);
                    if rng.random::<f64>() * lam >= spec.pair_rate(e / mass) {
                        return Candidate::Rejected;
                    }
                    let (p2, q2) = collide(spec, p, q, e / mass, &mut rng);
                    Candidate::Accepted(a, b, p2, q2)
                })
                .collect();

            let worst = outcomes
                .iter()
                .filter_map(|c| match c {
                    Candidate::Violation(e) => Some(*e),
                    _ => None,
                })
                .fold(f64::NAN, f64::max);
            if !worst.is_nan() {
                while self.e_max < worst {
                    self.e_max *= MAJORANT_GROWTH;
                }
                log::debug!("majorant refreshed to {:e} at step {}", self.e_max, self.step_index);
                continue;
            }

            let counters = &mut self.counters[channel_id(channel) as usize];
            counters.attempted += n_cand as u64;
            let particles = self.ensemble.particles_mut();
            for c in outcomes {
                if let Candidate::Accepted(a, b, p, q) = c {
                    particles[a] = p;
                    particles[b] = q;
                    counters.accepted += 1;
                }
            }
            return Ok(());
        }
    }
}

fn collide<R: Rng + ?Sized>(spec: &KernelSpec, p: Particle, q: Particle, e_over_m: f64, rng: &mut R) -> (Particle, Particle) {
    let u = sub(p.v, q.v);
    let speed = crate::kinematics::norm2(u).sqrt();
    let u_hat = if speed > 0.0 { crate::kinematics::scale(u, 1.0 / speed) } else { [0.0, 0.0, 1.0] };
    let sigma = spec.angular().sample_sigma(u_hat, rng);
    match spec.channel() {
        Channel::Frozen => {
            let params = FrozenParams::new(sigma).expect("sampled sigma is a unit vector");
            let (v, vs) = frozen_transform(p.v, q.v, &params);
            (Particle { v, ..p }, Particle { v: vs, ..q })
        }
        Channel::Polyatomic => {
            let (r, big_r) = spec.sample_rr(e_over_m, rng).expect("polyatomic kernel samples (r, R)");
            let params = PolyParams::new(sigma, r, big_r).expect("sampled (r, R) lie in [0, 1]");
            let out = poly_transform(p.v, q.v, p.internal, q.internal, spec.mass(), &params);
            (
                Particle { v: out.v, internal: out.internal, weight: p.weight },
                Particle { v: out.v_star, internal: out.internal_star, weight: q.weight },
            )
        }
    }
}

fn pair_energy(ens: &Ensemble, a: usize, b: usize) -> f64 {
    let (p, q) = (ens.particles()[a], ens.particles()[b]);
    total_energy(p.v, q.v, p.internal, q.internal, ens.mass())
}

fn probe_pairs<R: Rng + ?Sized>(ens: &Ensemble, rng: &mut R) -> Vec<(usize, usize)> {
    let n = ens.len();
    (0..PROBE_PAIRS)
        .map(|_| {
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            (a, b)
        })
        .collect()
}

/// Moments recorded at each output time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentTrace {
    pub requested: Vec<(MomentFamily, f64)>,
    pub times: Vec<f64>,
    pub snapshots: Vec<MomentSnapshot>,
    pub values: Vec<Vec<f64>>,
}

impl MomentTrace {
    pub fn new(requested: Vec<(MomentFamily, f64)>) -> Self {
        Self { requested, times: Vec::new(), snapshots: Vec::new(), values: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Records the ensemble; `zeta` sets the order of the snapshot's
    /// `mz_*` moments.
    pub fn record(&mut self, ens: &Ensemble, zeta: f64, step: u64) -> Result<()> {
        let t = ens.time;
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(Error::InvalidParam(format!("trace times must increase ({t} after {last})")));
            }
        }
        let snapshot = MomentSnapshot::from_ensemble(ens, zeta).map_err(|e| match e {
            Error::DegenerateMoment { name, value } => {
                Error::NonFinite { what: format!("{name} = {value}"), time: t, step }
            }
            other => other,
        })?;
        let mut row = Vec::with_capacity(self.requested.len());
        for &(family, k) in &self.requested {
            let value = ens.moment(family, k)?;
            if !value.is_finite() {
                return Err(Error::NonFinite { what: format!("m_{k}^{}", family.label()), time: t, step });
            }
            row.push(value);
        }
        self.times.push(t);
        self.snapshots.push(snapshot);
        self.values.push(row);
        Ok(())
    }

    /// Column index of a requested moment.
    pub fn column(&self, family: MomentFamily, k: f64) -> Option<usize> {
        self.requested.iter().position(|&(f, kk)| f == family && kk == k)
    }

    /// Time series of a requested moment.
    pub fn series(&self, family: MomentFamily, k: f64) -> Option<Vec<f64>> {
        let c = self.column(family, k)?;
        Some(self.values.iter().map(|row| row[c]).collect())
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["t", "m0", "m2", "m2_v", "m2_I"].iter().map(|s| s.to_string()).collect();
        h.extend(self.requested.iter().map(|(f, k)| format!("m{k}_{}", f.label())));
        h
    }

    /// CSV with 17 significant digits per value.
    pub fn to_csv(&self) -> String {
        let mut out = self.header().join(",");
        out.push('\n');
        for ((t, s), row) in self.times.iter().zip(&self.snapshots).zip(&self.values) {
            let mut fields = vec![*t, s.m0, s.m2, s.m2_v, s.m2_i];
            fields.extend_from_slice(row);
            let line: Vec<String> = fields.iter().map(|x| format!("{x:.16e}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// Simulation settings independent of the physical model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSettings {
    pub n_particles: usize,
    /// Final time in mean collision times of the initial state.
    pub t_final: f64,
    /// Explicit time step (absolute units); `None` uses the default.
    pub dt: Option<f64>,
    /// Number of equal output intervals on `[0, t_final]`.
    pub n_records: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self { n_particles: 50_000, t_final: 20.0, dt: None, n_records: 40 }
    }
}

/// Outcome of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: MomentTrace,
    pub mean_collision_time: f64,
    pub final_state: SimState,
}

/// Samples the initial ensemble, then advances to `t_final` recording the
/// trace on the output grid.
pub fn run(
    initial: &InitialDensity,
    mixture: &MixtureSpec,
    settings: &RunSettings,
    requested: &[(MomentFamily, f64)],
    seed: u64,
) -> Result<RunOutput> {
    if !(settings.t_final >= 0.0) || !settings.t_final.is_finite() {
        return Err(Error::InvalidParam(format!("t_final must be finite and >= 0, got {}", settings.t_final)));
    }
    if settings.n_records == 0 {
        return Err(Error::InvalidParam("n_records must be >= 1".into()));
    }
    let ens = initial.sample_ensemble(settings.n_particles, mixture.mass(), seed)?;
    let mut state = SimState::new(ens, mixture.clone(), settings.dt, seed)?;
    let tau = state.mean_collision_time()?;
    let zeta = mixture.frozen().zeta();
    let mut trace = MomentTrace::new(requested.to_vec());
    trace.record(state.ensemble(), zeta, 0)?;
    if settings.t_final > 0.0 {
        let horizon = settings.t_final * tau;
        for j in 1..=settings.n_records {
            let t_next = horizon * j as f64 / settings.n_records as f64;
            let duration = t_next - state.time();
            state.advance(duration)?;
            state.ensemble.time = t_next;
            trace.record(state.ensemble(), zeta, state.step_index()).inspect_err(|e| {
                log::error!(
                    "aborting at t = {t_next}, step {}: {e}; E_max = {:e}, dt = {:e}, counters = {:?}",
                    state.step_index,
                    state.e_max,
                    state.dt,
                    state.counters
                );
            })?;
        }
    }
    Ok(RunOutput { trace, mean_collision_time: tau, final_state: state })
}

/// One checked time of an envelope report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopePoint {
    pub t: f64,
    pub moment: f64,
    pub envelope: f64,
    /// `envelope * (1 + slack) - moment`; negative means violated.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeReport {
    pub kind: EnvelopeKind,
    pub family: MomentFamily,
    pub k: f64,
    pub slack: f64,
    pub t_burn: f64,
    pub points: Vec<EnvelopePoint>,
    /// Largest `moment / envelope` over the checked times.
    pub worst_ratio: f64,
    pub passed: bool,
}

/// Checks `m_k(t) <= envelope(t) (1 + slack)` at every recorded `t > t_burn`
/// (and `t > 0` for generation envelopes). `times` and `moments` are the
/// trace columns; the first entry is the initial moment.
#[allow(clippy::too_many_arguments)]
pub fn check_envelopes(
    times: &[f64],
    moments: &[f64],
    family: MomentFamily,
    k: f64,
    set: BoundSetRef<'_>,
    kind: EnvelopeKind,
    slack: f64,
    t_burn: f64,
) -> Result<EnvelopeReport> {
    if times.len() != moments.len() || times.is_empty() {
        return Err(Error::InvalidParam("envelope check needs matching, non-empty time and moment series".into()));
    }
    let m_k0 = moments[0];
    let mut points = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for (&t, &m) in times.iter().zip(moments) {
        if t <= t_burn || (kind.is_generation() && t <= 0.0) {
            continue;
        }
        let env = envelope(kind, set, Some(m_k0), t)?;
        worst = worst.max(m / env);
        points.push(EnvelopePoint { t, moment: m, envelope: env, margin: env * (1.0 + slack) - m });
    }
    let passed = points.iter().all(|p| p.margin >= 0.0);
    Ok(EnvelopeReport { kind, family, k, slack, t_burn, points, worst_ratio: worst, passed })
}
