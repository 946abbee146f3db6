use polykin::dsmc::{InitialDensity, SimState};
use polykin::kernels::{KernelSpec, MixtureSpec};
use polykin::kinematics::{Ensemble, MomentFamily};
use polykin::quadrature::TestDensity;

fn mixture(omega: f64) -> MixtureSpec {
    MixtureSpec::new(omega, KernelSpec::frozen(1.0, 1.0).unwrap(), KernelSpec::polyatomic(1.0, 0.0, 1.0).unwrap()).unwrap()
}

fn run(initial: &InitialDensity, omega: f64, n: usize, collision_times: f64, seed: u64) -> (Ensemble, SimState) {
    let ens = initial.sample_ensemble(n, 1.0, seed).unwrap();
    let mut state = SimState::new(ens.clone(), mixture(omega), None, seed).unwrap();
    let tau = state.mean_collision_time().unwrap();
    state.advance(collision_times * tau).unwrap();
    (ens, state)
}

fn diagonal_second_moments(ens: &Ensemble) -> [f64; 3] {
    let w = ens.total_weight();
    let p = ens.momentum();
    let mean: Vec<f64> = p.iter().map(|x| x / (w * ens.mass())).collect();
    let mut out = [0.0; 3];
    for q in ens.particles() {
        for (d, o) in out.iter_mut().enumerate() {
            *o += q.weight * (q.v[d] - mean[d]).powi(2);
        }
    }
    out.map(|x| x / w)
}

#[test]
fn equilibrium_is_stationary_under_polyatomic_collisions() {
    let eq = InitialDensity::Single { density: TestDensity::new(1.0, [0.0; 3], 1.0, 1.0, 0.0).unwrap() };
    let (start, state) = run(&eq, 1.0, 200_000, 10.0, 11);
    for (family, k) in [(MomentFamily::Total, 4.0), (MomentFamily::Velocity, 4.0), (MomentFamily::Internal, 4.0)] {
        let a = start.moment(family, k).unwrap();
        let b = state.ensemble().moment(family, k).unwrap();
        assert!((b - a).abs() / a < 0.02, "{family:?} {k}: {a} -> {b}");
    }
}

#[test]
fn frozen_collisions_isotropize_a_bimodal_beam() {
    let side = |x: f64| TestDensity::new(0.5, [x, 0.0, 0.0], 0.5, 1.0, 0.0).unwrap();
    let init = InitialDensity::Bimodal { first: side(1.5), second: side(-1.5) };
    let (start, state) = run(&init, 0.0, 200_000, 20.0, 12);
    let before = diagonal_second_moments(&start);
    assert!(before[0] > 4.0 * before[1]);
    let after = diagonal_second_moments(state.ensemble());
    let mean = after.iter().sum::<f64>() / 3.0;
    for a in after {
        assert!((a - mean).abs() / mean < 0.02, "{after:?}");
    }
    // Kinetic energy is conserved by the frozen channel, so the common
    // temperature is the mean of the initial diagonal.
    let t0 = before.iter().sum::<f64>() / 3.0;
    assert!((mean - t0).abs() / t0 < 1e-9);
}
