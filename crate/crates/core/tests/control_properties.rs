use errctl_core::feedback_control::{
    hjb_residual, integrate_forward, solve_feedback, FeedbackParams,
};
use errctl_core::harmonic_model::{Harmonic, HarmonicModel, FIG1_E0};
use errctl_core::ode_sim::{cost_functional, integrate, Law, SimConfig, TimeControl};
use errctl_core::program_control::{
    analytic_error, costate, hamiltonian, solve_program, terminal_residual, Mode, ProgramLaw,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn strict_extrema(xs: &[f64]) -> usize {
    xs.windows(3)
        .filter(|w| (w[1] > w[0] && w[1] > w[2]) || (w[1] < w[0] && w[1] < w[2]))
        .count()
}

fn random_model(rng: &mut ChaCha8Rng, max_len: usize) -> HarmonicModel {
    let m = rng.random_range(0..=max_len);
    let hs = (0..m)
        .map(|_| {
            Harmonic::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(0.05..3.5),
            )
            .unwrap()
        })
        .collect();
    HarmonicModel::new(hs, 1.0).unwrap()
}

proptest! {
    #[test]
    fn costate_is_affine(c in -100.0..100.0f64, t1 in -50.0..50.0f64, t2 in -50.0..50.0f64) {
        let lhs = costate(c, t1) + costate(c, t2);
        let rhs = 2.0 * costate(c, 0.5 * (t1 + t2));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (c.abs() + t1.abs() + t2.abs()).max(1.0));
    }

    #[test]
    fn hamiltonian_peaks_at_half_costate(psi in -10.0..10.0f64, t in 0.0..20.0f64) {
        let f = HarmonicModel::figure1().drift(t);
        let u_opt = psi / 2.0;
        let h_opt = hamiltonian(psi, f, u_opt, 0.3);
        for k in 0..1000 {
            let u = -10.0 + 20.0 * k as f64 / 999.0;
            let h = hamiltonian(psi, f, u, 0.3);
            prop_assert!(h_opt >= h);
            if (u - u_opt).abs() > 1e-6 {
                prop_assert!(h_opt > h);
            }
        }
    }
}

#[test]
fn closed_form_satisfies_its_ode() {
    let m = HarmonicModel::figure1();
    let law = ProgramLaw::new(&m, Mode::PaperH0, 4.2, FIG1_E0, 0.0, 30.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let step = 1e-5;
    for _ in 0..100 {
        let t = rng.random_range(0.01..29.99);
        let fd = (analytic_error(&m, &law, t + step).unwrap()
            - analytic_error(&m, &law, t - step).unwrap())
            / (2.0 * step);
        let rhs = (law.c - t) / 2.0 + m.drift(t);
        assert!((fd - rhs).abs() < 1e-6, "t={t}: {fd} vs {rhs}");
    }
}

#[test]
fn solved_program_meets_terminal_condition() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..25 {
        let m = random_model(&mut rng, 7);
        let e0 = rng.random_range(0.1..2.0);
        let t1 = rng.random_range(0.5..20.0);
        let law = solve_program(&m, e0, 0.0, t1, Mode::PaperH0).unwrap();
        assert!(terminal_residual(&m, law.c, e0, 0.0, t1).abs() <= 1e-10);
    }
    let law = solve_program(&HarmonicModel::figure1(), FIG1_E0, 0.0, 20.0, Mode::PaperH0).unwrap();
    assert!(terminal_residual(&HarmonicModel::figure1(), law.c, FIG1_E0, 0.0, 20.0).abs() <= 1e-10);
}

#[test]
fn stationary_law_is_globally_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (t0, t1, h) = (0.0, 10.0, 0.01);
    for trial in 0..100 {
        let m = random_model(&mut rng, 7);
        let e0 = rng.random_range(0.2..2.0);
        let base = solve_program(&m, e0, t0, t1, Mode::Stationary).unwrap();
        let cfg = SimConfig::horizon(h, t1);
        let j0 = cost_functional(&integrate(&m, &Law::Program(base), e0, t0, &cfg).unwrap());
        // smooth perturbation bounded by 1
        let terms: Vec<(f64, f64, f64)> = (0..4)
            .map(|_| {
                (
                    rng.random_range(-1.0..1.0),
                    rng.random_range(0.1..3.0),
                    rng.random_range(0.0..6.3),
                )
            })
            .collect();
        let norm: f64 = terms
            .iter()
            .map(|(c, _, _)| c.abs())
            .sum::<f64>()
            .max(1e-12);
        let delta = move |t: f64| {
            terms
                .iter()
                .map(|(c, w, p)| c * (w * t + p).sin())
                .sum::<f64>()
                / norm
        };
        let perturbed = TimeControl(move |t| -0.5 + 0.1 * delta(t));
        let j1 = cost_functional(&integrate(&m, &perturbed, e0, t0, &cfg).unwrap());
        assert!(j0 <= j1 + 1e-12, "trial {trial}: {j0} > {j1}");
    }
}

#[test]
fn feedback_boundary_and_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = FeedbackParams::default();
    for _ in 0..10 {
        let m = random_model(&mut rng, 4);
        let e0 = rng.random_range(1.0..2.0);
        let t1 = rng.random_range(0.5..3.0);
        let law = match solve_feedback(&m, e0, 0.0, t1, &p) {
            Ok(l) => l,
            Err(e) => panic!("{e}"),
        };
        assert!((law.k_end() - 1.0).abs() <= 1e-8);
        assert!(hjb_residual(&m, &law) <= 1e-6);
    }
}

#[test]
fn reference_feedback_is_quasi_periodic() {
    let m = HarmonicModel::figure1();
    let law = solve_feedback(&m, FIG1_E0, 0.0, 20.0, &FeedbackParams::default()).unwrap();
    assert!((law.k_end() - 1.0).abs() <= 1e-8);
    assert!(hjb_residual(&m, &law) <= 1e-6, "{}", hjb_residual(&m, &law));
    let u: Vec<f64> = law.slopes().iter().map(|k| k / 2.0).collect();
    assert!(strict_extrema(&u) >= 4);
}

#[test]
fn forward_override_integrates_without_boundary() {
    let m = HarmonicModel::figure1();
    let law = integrate_forward(&m, FIG1_E0, 1.0, 0.0, 5.0, 1e-3).unwrap();
    assert_eq!(law.k0(), 1.0);
    assert!(hjb_residual(&m, &law) <= 1e-6);
}
