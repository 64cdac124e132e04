use errctl_core::harmonic_model::{HarmonicModel, FIG1_E0};
use errctl_core::ode_sim::{integrate, rk4_step, Arm, Law, SimConfig};
use errctl_core::program_control::{analytic_error, solve_program, Mode};
use proptest::prelude::*;

fn drift_only_error(h: f64) -> f64 {
    let m = HarmonicModel::figure1();
    let traj = integrate(&m, &Law::Zero, FIG1_E0, 0.0, &SimConfig::horizon(h, 10.0)).unwrap();
    let exact = FIG1_E0 + m.drift_integral(0.0, 10.0);
    (traj.final_error().unwrap() - exact).abs()
}

#[test]
fn rk4_global_error_is_fourth_order() {
    let ratio = drift_only_error(0.01) / drift_only_error(0.005);
    assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn program_simulation_matches_closed_form() {
    let m = HarmonicModel::figure1();
    let law = solve_program(&m, FIG1_E0, 0.0, 20.0, Mode::PaperH0).unwrap();
    let traj = integrate(
        &m,
        &Law::Program(law),
        FIG1_E0,
        0.0,
        &SimConfig::horizon(0.01, 20.0),
    )
    .unwrap();
    assert_eq!(traj.points.len(), 2001);
    let worst = traj
        .points
        .iter()
        .map(|p| (p.e - analytic_error(&m, &law, p.t).unwrap()).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-6, "{worst}");
}

proptest! {
    #[test]
    fn rk4_exact_for_cubics(c in prop::array::uniform4(-3.0..3.0f64), h in 0.01..1.0f64, t in -5.0..5.0f64) {
        let p = |s: f64| c[0] + c[1] * s + c[2] * s * s + c[3] * s * s * s;
        let prim = |s: f64| c[0] * s + c[1] * s * s / 2.0 + c[2] * s.powi(3) / 3.0 + c[3] * s.powi(4) / 4.0;
        let y = rk4_step(|s, _: &[f64; 1]| Ok([p(s)]), [0.0], t, h).unwrap()[0];
        let exact = prim(t + h) - prim(t);
        let scale = c.iter().map(|x| x.abs()).sum::<f64>() * (1.0 + t.abs() + h).powi(4);
        prop_assert!((y - exact).abs() <= 1e-13 * scale.max(1.0));
    }

    #[test]
    fn stop_event_lands_on_threshold(delta in 0.05..0.8f64, u in -3.0..-0.2f64, h in 0.001..0.1f64) {
        let m = HarmonicModel::figure1();
        let cfg = SimConfig { h, t_max: 50.0, delta, arm: Arm::Immediate };
        let traj = integrate(&m, &Law::Constant(u), FIG1_E0.max(delta + 0.1), 0.0, &cfg).unwrap();
        if let Some(te) = traj.stopped {
            let last = traj.points.last().unwrap();
            prop_assert_eq!(last.t, te);
            prop_assert!((last.e - delta).abs() <= 1e-9 * delta.max(1.0));
        }
        prop_assert!(traj.points.windows(2).all(|w| w[1].t > w[0].t));
    }
}
