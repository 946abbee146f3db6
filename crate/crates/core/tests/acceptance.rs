//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

use std::error::Error as StdError;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use polykin::bounds::{
    elementary_constants, frozen_d_k, holder_rhs, l_constant, p_binomial_rhs, BoundSetRef, EnvelopeKind,
};
use polykin::cli::{canonical_report, print_defaults, Mode, RunConfig};
use polykin::dsmc::{self, check_envelopes, RunSettings, SimState};
use polykin::experiments::{catalog_densities, frozen_bounds, verify_frozen_catalog, verify_omega_catalog, Inequality};
use polykin::externals::{fit_externals, FitSettings};
use polykin::kernels::{AngularModel, Channel, KernelSpec, MixtureSpec, RrWeight};
use polykin::kinematics::{frozen_transform, poly_transform, total_energy, FrozenParams, MomentFamily, PolyParams, Vec3};
use polykin::povzner::{default_grid, frozen_holdout, frozen_table, is_non_increasing, poly_table, PovznerConstants, PovznerSettings};
use polykin::quadrature::{density_catalog, Verdict};
use polykin::experiments::CatalogSettings;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

type Line = (bool, String);
type Outcome = Result<Line, Box<dyn StdError>>;

const SEED: u64 = 20_251_016;

fn gaussian(rng: &mut ChaCha8Rng, s: f64) -> Vec3 {
    std::array::from_fn(|_| s * Distribution::<f64>::sample(&StandardNormal, rng))
}

fn norm(v: Vec3) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: Vec3, b: Vec3) -> f64 {
    norm([a[0] - b[0], a[1] - b[1], a[2] - b[2]])
}

fn sum(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn kinetic(a: Vec3, b: Vec3) -> f64 {
    0.5 * (norm(a).powi(2) + norm(b).powi(2))
}

fn conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let iso = AngularModel::isotropic(1.0)?;
    let poly = KernelSpec::polyatomic(1.0, 0.0, 1.0)?;
    let mass = 1.0;
    let (mut worst_p, mut worst_e) = (0.0f64, 0.0f64);
    let mut frozen_touched_i = 0usize;
    for _ in 0..100_000 {
        let s = 10f64.powf(rng.random_range(-2.0..2.0));
        let (v, w) = (gaussian(&mut rng, s), gaussian(&mut rng, s));
        let (i, j): (f64, f64) = (Exp1.sample(&mut rng), Exp1.sample(&mut rng));
        let (i0, j0) = (i, j);
        let u = [v[0] - w[0], v[1] - w[1], v[2] - w[2]];
        let un = norm(u);
        let sigma = iso.sample_sigma([u[0] / un, u[1] / un, u[2] / un], &mut rng);
        let (v2, w2) = frozen_transform(v, w, &FrozenParams::new(sigma)?);
        let scale = norm(v) + norm(w);
        worst_p = worst_p.max(dist(sum(v, w), sum(v2, w2)) / scale);
        worst_e = worst_e.max((kinetic(v, w) - kinetic(v2, w2)).abs() / kinetic(v, w));
        if i.to_bits() != i0.to_bits() || j.to_bits() != j0.to_bits() {
            frozen_touched_i += 1;
        }
    }
    let frozen_ok = worst_p <= 1e-12 && worst_e <= 1e-12 && frozen_touched_i == 0;
    let frozen_msg = format!("frozen: dp {worst_p:.1e}, dE {worst_e:.1e}");

    let (mut wp, mut we, mut negative) = (0.0f64, 0.0f64, 0usize);
    for _ in 0..100_000 {
        let s = 10f64.powf(rng.random_range(-2.0..2.0));
        let (v, w) = (gaussian(&mut rng, s), gaussian(&mut rng, s));
        let i: f64 = s * s * Distribution::<f64>::sample(&Exp1, &mut rng);
        let j: f64 = s * s * Distribution::<f64>::sample(&Exp1, &mut rng);
        let e = total_energy(v, w, i, j, mass);
        let (r, big_r) = poly.sample_rr(e / mass, &mut rng)?;
        let sigma = iso.sample_sigma([0.0, 0.0, 1.0], &mut rng);
        let out = poly_transform(v, w, i, j, mass, &PolyParams::new(sigma, r, big_r)?);
        wp = wp.max(dist(sum(v, w), sum(out.v, out.v_star)) / (norm(v) + norm(w)));
        let before = kinetic(v, w) + i + j;
        let after = kinetic(out.v, out.v_star) + out.internal + out.internal_star;
        we = we.max((before - after).abs() / before);
        if out.internal < 0.0 || out.internal_star < 0.0 {
            negative += 1;
        }
    }
    let poly_ok = wp <= 1e-12 && we <= 1e-12 && negative == 0;
    Ok((frozen_ok && poly_ok, format!("{frozen_msg}; polyatomic: dp {wp:.1e}, dE {we:.1e}, negative I {negative}")))
}

fn frozen_mixture(zeta_f: f64) -> Result<MixtureSpec, Box<dyn StdError>> {
    Ok(RunConfig::default().model.mixture_with_omega(0.0).and_then(|m| {
        let frozen = KernelSpec::frozen(zeta_f, 1.0)?.with_angular(m.frozen().angular().clone())?;
        MixtureSpec::new(0.0, frozen, m.poly().clone())
    })?)
}

fn internal_moments_constant() -> Outcome {
    let cfg = RunConfig::default();
    let ens = cfg.initial.sample_ensemble(50_000, 1.0, SEED)?;
    let mut state = SimState::new(ens, frozen_mixture(1.0)?, None, SEED)?;
    let ks = [2.0, 4.0, 6.0];
    let start: Vec<f64> = ks.iter().map(|&k| state.ensemble().moment(MomentFamily::Internal, k)).collect::<Result<_, _>>()?;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        state.step()?;
        for (&k, &m0) in ks.iter().zip(&start) {
            let m = state.ensemble().moment(MomentFamily::Internal, k)?;
            worst = worst.max((m - m0).abs() / m0);
        }
    }
    let attempts = state.counters(Channel::Frozen).accepted;
    Ok((worst <= 1e-12 && attempts > 0, format!("1000 steps, {attempts} collisions, max relative change {worst:.1e}")))
}

fn frozen_povzner(table: &PovznerConstants) -> Outcome {
    let iso = AngularModel::isotropic(1.0)?;
    let mut msg = Vec::new();
    let mut ok = true;
    for k in [3.0, 4.0, 6.0, 10.0] {
        let c = table.constant_at(k)?;
        ok &= c < 1.0;
        msg.push(format!("C_{k}={c:.4}"));
    }
    let mono = is_non_increasing(&table.c_k, 0.0);
    let rep = frozen_holdout(&iso, table, &PovznerSettings::frozen_default(), 10_000, SEED + 1)?;
    msg.push(format!("non-increasing {mono}, holdout worst {:.5}", rep.worst_excess));
    Ok((ok && mono && rep.passed, msg.join(", ")))
}

fn poly_spec(lower: f64) -> Result<KernelSpec, Box<dyn StdError>> {
    Ok(KernelSpec::polyatomic(1.0, 0.0, 1.0)?
        .with_rr(RrWeight::Constant { value: lower }, RrWeight::Constant { value: 1.0 })?)
}

fn poly_povzner() -> Result<(Line, Option<f64>), Box<dyn StdError>> {
    let settings = PovznerSettings::poly_default();
    let same = poly_table(&poly_spec(1.0)?, &settings, SEED)?;
    let lower = poly_table(&poly_spec(0.1)?, &settings, SEED)?;
    let mono = is_non_increasing(&same.c_k, 0.0) && is_non_increasing(&lower.c_k, 0.0);
    let ok = mono
        && match (same.k_star, lower.k_star) {
            (Some(a), Some(b)) => b >= a,
            (Some(_), None) => true,
            _ => false,
        };
    Ok((
        (ok, format!("non-increasing {mono}, k* = {:?}, k*(0.1 lower) = {:?}", same.k_star, lower.k_star)),
        same.k_star,
    ))
}

fn catalog_check(which: Inequality, checks: &[polykin::experiments::InequalityCheck]) -> (bool, String) {
    let sel: Vec<_> = checks.iter().filter(|c| c.inequality == which).collect();
    let n = |v| sel.iter().filter(|c| c.verdict == v).count();
    let fail = n(Verdict::Fail);
    (
        fail == 0 && !sel.is_empty(),
        format!("{} pass, {} inconclusive, {fail} fail", n(Verdict::Pass), n(Verdict::Inconclusive)),
    )
}

fn omega_catalog(k_star: Option<f64>) -> Outcome {
    let Some(k_star) = k_star else {
        return Ok((false, "no k* available".into()));
    };
    let mixture = RunConfig::default().model.mixture()?;
    let settings = CatalogSettings::default();
    let fits = fit_externals(mixture.poly(), &settings.orders, k_star, &FitSettings::default(), SEED)?;
    let dbar: Vec<String> = fits.iter().map(|f| format!("D_{}={:.3e}", f.k, f.d_bar)).collect();
    let checks = verify_omega_catalog(&mixture, &fits, &catalog_densities(&density_catalog()), &settings, SEED)?;
    let (ok, msg) = catalog_check(Inequality::OmegaSmallK, &checks);
    Ok((ok, format!("{msg} (fitted {})", dbar.join(", "))))
}

fn frozen_envelopes(table: &PovznerConstants) -> Result<(Line, Line), Box<dyn StdError>> {
    let cfg = RunConfig::default();
    let mixture = frozen_mixture(1.0)?;
    let settings = RunSettings { n_particles: 50_000, t_final: 20.0, ..RunSettings::default() };
    let requested = [(MomentFamily::Velocity, 4.0), (MomentFamily::Velocity, 6.0)];
    let out = dsmc::run(&cfg.initial, &mixture, &settings, &requested, SEED)?;
    let snap = out.trace.snapshots[0].frozen_invariant();
    let one = |k: f64, kind: EnvelopeKind| -> Outcome {
        let set = frozen_bounds(mixture.frozen(), table, &snap, &snap, k)?;
        let series = out.trace.series(MomentFamily::Velocity, k).ok_or("missing column")?;
        let rep = check_envelopes(&out.trace.times, &series, MomentFamily::Velocity, k, BoundSetRef::Frozen(&set), kind, 0.05, 0.0)?;
        Ok((
            rep.passed,
            format!("worst m_{k}/envelope {:.3e} over {} times to t = {:.2}", rep.worst_ratio, rep.points.len(), out.trace.times.last().unwrap()),
        ))
    };
    Ok((one(4.0, EnvelopeKind::PropFrozen)?, one(6.0, EnvelopeKind::GenFrozen)?))
}

fn identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let mut holder_bad = 0usize;
    let mut binom_bad = 0usize;
    for _ in 0..1_000_000 {
        // Discrete measure with four atoms at brackets x_i >= 1.
        let atoms: [(f64, f64); 4] = std::array::from_fn(|_| (rng.random_range(0.01..1.0), 10f64.powf(rng.random_range(0.0..2.0))));
        let k = rng.random_range(2.01..12.0);
        let zeta = rng.random_range(0.01..=2.0);
        let m = |p: f64| atoms.iter().map(|(w, x)| w * x.powf(p)).sum::<f64>();
        if m(k) > holder_rhs(m(2.0), m(k + zeta), k, zeta) * (1.0 + 1e-10) {
            holder_bad += 1;
        }
        let (x, y) = (10f64.powf(rng.random_range(0.0..3.0)), 10f64.powf(rng.random_range(0.0..3.0)));
        let kb = rng.random_range(2.01..20.0);
        if (x * x + y * y).powf(0.5 * kb) > p_binomial_rhs(x, y, kb) * (1.0 + 1e-10) {
            binom_bad += 1;
        }
    }
    let el = elementary_constants(2.0, 0.7, 1.0, 1.0, 0.5, 4.0)?;
    let hand = l_constant(1.0) == 0.5 && l_constant(2.0) == 0.125 && el.c_tilde == 0.7 && frozen_d_k(4.0, 1.0, 1.0) == 16.0 && el.d_k == 16.0;
    Ok((
        holder_bad == 0 && binom_bad == 0 && hand,
        format!("Hölder violations {holder_bad}, p-binomial violations {binom_bad}, hand values {hand}"),
    ))
}

struct SuiteRun {
    status: i32,
    seconds: f64,
    checks: Vec<(String, bool)>,
    trace: Vec<u8>,
    trace_frozen: Vec<u8>,
    canonical: String,
}

fn full_suite(config: &Path, out: &Path) -> Result<SuiteRun, Box<dyn StdError>> {
    let t0 = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_polykin"))
        .args(["full-suite", "--threads", "1", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()?
        .status
        .code()
        .unwrap_or(-1);
    let seconds = t0.elapsed().as_secs_f64();
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json"))?)?;
    let checks = report["checks"]
        .as_array()
        .ok_or("report has no checks")?
        .iter()
        .map(|c| (c["name"].as_str().unwrap_or_default().to_string(), c["passed"].as_bool().unwrap_or(false)))
        .collect();
    Ok(SuiteRun {
        status,
        seconds,
        checks,
        trace: std::fs::read(out.join("trace.csv"))?,
        trace_frozen: std::fs::read(out.join("trace_frozen.csv"))?,
        canonical: canonical_report(&report),
    })
}

fn suite_envelopes(run: &SuiteRun) -> Outcome {
    let omega: Vec<_> = run.checks.iter().filter(|(n, _)| n.starts_with("envelope.") && n.contains("omega")).collect();
    let kinds = ["gen_omega_small_k", "prop_omega_small_k", "gen_omega_large_k", "prop_omega_large_k"];
    let covered = kinds.iter().all(|k| omega.iter().any(|(n, _)| n.contains(k)));
    let ok = run.status == 0 && covered && omega.iter().all(|(_, p)| *p) && run.seconds <= 600.0;
    Ok((ok, format!("exit {}, {} mixed envelope checks, runtime {:.0} s", run.status, omega.len(), run.seconds)))
}

fn report(n: usize, name: &str, outcome: Outcome, failures: &mut usize) {
    let (ok, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    if !ok {
        *failures += 1;
    }
    println!("{} criterion {n:>2} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
}

fn main() {
    // cargo test passes harness flags such as --list; nothing to enumerate.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut failures = 0;
    report(1, "per-collision conservation", conservation(), &mut failures);
    report(2, "internal moments constant at omega = 0", internal_moments_constant(), &mut failures);

    let frozen = AngularModel::isotropic(1.0)
        .and_then(|iso| frozen_table(&iso, &PovznerSettings { grid: default_grid(), ..PovznerSettings::frozen_default() }, SEED));
    match &frozen {
        Ok(t) => report(3, "frozen Povzner constants", frozen_povzner(t), &mut failures),
        Err(e) => report(3, "frozen Povzner constants", Err(e.to_string().into()), &mut failures),
    }
    let k_star = match poly_povzner() {
        Ok((o, k)) => {
            report(4, "polyatomic Povzner constants and k*", Ok(o), &mut failures);
            k
        }
        Err(e) => {
            report(4, "polyatomic Povzner constants and k*", Err(e), &mut failures);
            None
        }
    };

    let catalog = frozen.as_ref().map_err(|e| e.to_string()).and_then(|t| {
        let template = RunConfig::default().model.mixture().map_err(|e| e.to_string())?.frozen().clone();
        verify_frozen_catalog(&template, t, &density_catalog(), &CatalogSettings::default(), SEED).map_err(|e| e.to_string())
    });
    for (n, name, which) in [(5, "velocity-moment inequality", Inequality::VMoment), (6, "velocity-internal moment inequality", Inequality::ViMoment)] {
        let o: Outcome = match &catalog {
            Ok(c) => Ok(catalog_check(which, c)),
            Err(e) => Err(e.clone().into()),
        };
        report(n, name, o, &mut failures);
    }
    report(7, "mixed small-order inequality", omega_catalog(k_star), &mut failures);

    let env = frozen.as_ref().map_err(|e| e.to_string().into()).and_then(frozen_envelopes);
    match env {
        Ok((prop, gen)) => {
            report(8, "frozen propagation envelope k = 4", Ok(prop), &mut failures);
            report(9, "frozen generation envelope k = 6", Ok(gen), &mut failures);
        }
        Err(e) => {
            report(8, "frozen propagation envelope k = 4", Err(e.to_string().into()), &mut failures);
            report(9, "frozen generation envelope k = 6", Err(e), &mut failures);
        }
    }

    let dir = tempfile::tempdir().expect("temp dir");
    let config = dir.path().join("suite.toml");
    std::fs::write(&config, print_defaults(Mode::FullSuite)).expect("write config");
    let first = full_suite(&config, &dir.path().join("a"));
    report(10, "full-suite mixed envelopes", first.as_ref().map_err(|e| e.to_string().into()).and_then(suite_envelopes), &mut failures);
    report(11, "Hölder, p-binomial and hand values", identities(), &mut failures);
    let repro: Outcome = first.map_err(|e| e.to_string().into()).and_then(|a| {
        let b = full_suite(&config, &dir.path().join("b"))?;
        let same = (a.trace == b.trace, a.trace_frozen == b.trace_frozen, a.canonical == b.canonical);
        Ok((same.0 && same.1 && same.2, format!("trace {}, frozen trace {}, canonical report {}", same.0, same.1, same.2)))
    });
    report(12, "reproducible full suite", repro, &mut failures);

    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
