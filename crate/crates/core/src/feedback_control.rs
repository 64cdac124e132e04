//! Feedback control from the Bellman equation with the value-function
//! ansatz `Φ(t, E) = K(t) E`.
//!
//! The optimal control is `u = ½ ∂Φ/∂E = K(t)/2`. Along the closed-loop
//! trajectory the Bellman equation `Φ_t + Φ_E (f + u) − u² = 0` becomes
//!
//! ```text
//! dE/dt = f(t) + K/2
//! dK/dt = −(K f(t) + K²/4) / E
//! ```
//!
//! with `E(t0) = E0` known and `K(t1) = 1` from the terminal cost
//! `Φ(t1, E) = E`. The two-point problem is solved by secant shooting on
//! `K(t0)`.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::format::{fmt_num, read_numeric_csv};
use crate::harmonic_model::HarmonicModel;
use crate::ode_sim::{rk4_step, step_count};

/// Smallest `|E|` the closed-loop equations accept.
pub const SINGULARITY_GUARD: f64 = 1e-6;
pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_EXPORT_STEP: f64 = 1e-2;
pub const DEFAULT_SHOOT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100;
/// Initial secant guesses for `K(t0)`.
pub const SHOOT_GUESSES: (f64, f64) = (1.0, 1.5);

/// Right-hand side `(dE/dt, dK/dt)` of the closed-loop system.
pub fn closed_loop_rhs(drift: f64, e: f64, k: f64, t: f64) -> Result<(f64, f64)> {
    if !(e.abs() >= SINGULARITY_GUARD) {
        return Err(Error::Singularity { t, e });
    }
    Ok((drift + 0.5 * k, -(k * drift + 0.25 * k * k) / e))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackParams {
    pub h: f64,
    pub shoot_tol: f64,
    pub max_iter: usize,
}

impl Default for FeedbackParams {
    fn default() -> Self {
        FeedbackParams {
            h: DEFAULT_STEP,
            shoot_tol: DEFAULT_SHOOT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// How `K(t0)` was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    /// Secant shooting met `|K(t1) − 1| ≤ tol` after `iterations` steps.
    Shot { tol: f64, iterations: usize },
    /// Forward integration from a user-supplied `K(t0)`.
    Forward,
    /// Read back from a file.
    Loaded,
}

/// Sampled value-function slope and closed-loop error on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackLaw {
    times: Vec<f64>,
    k: Vec<f64>,
    e: Vec<f64>,
    pub boundary: Boundary,
}

impl FeedbackLaw {
    /// Builds a law from samples on `t0 + i (t1 − t0)/(n − 1)`.
    pub fn from_samples(
        t0: f64,
        t1: f64,
        k: Vec<f64>,
        e: Vec<f64>,
        boundary: Boundary,
    ) -> Result<Self> {
        if !(t1 > t0) {
            return Err(Error::param("t1", format!("must exceed t0={t0}, got {t1}")));
        }
        if k.len() != e.len() || k.len() < 2 {
            return Err(Error::param(
                "K",
                "K and E need the same length, at least 2",
            ));
        }
        if let Some(i) = e.iter().position(|x| !(x.abs() >= SINGULARITY_GUARD)) {
            return Err(Error::param(
                "E",
                format!("sample {i} is below the singularity guard"),
            ));
        }
        if k.iter().any(|x| !x.is_finite()) {
            return Err(Error::param("K", "samples must be finite"));
        }
        let cells = k.len() - 1;
        let times = (0..=cells)
            .map(|i| {
                if i == cells {
                    t1
                } else {
                    t0 + i as f64 * (t1 - t0) / cells as f64
                }
            })
            .collect();
        Ok(FeedbackLaw {
            times,
            k,
            e,
            boundary,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn slopes(&self) -> &[f64] {
        &self.k
    }

    pub fn errors(&self) -> &[f64] {
        &self.e
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn t1(&self) -> f64 {
        *self.times.last().expect("grid is non-empty")
    }

    pub fn step(&self) -> f64 {
        (self.t1() - self.t0()) / (self.times.len() - 1) as f64
    }

    pub fn k0(&self) -> f64 {
        self.k[0]
    }

    pub fn k_end(&self) -> f64 {
        *self.k.last().expect("grid is non-empty")
    }

    pub fn e_end(&self) -> f64 {
        *self.e.last().expect("grid is non-empty")
    }

    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let (t0, t1) = (self.t0(), self.t1());
        let slack = 1e-9 * t0.abs().max(t1.abs()).max(1.0);
        if t.is_nan() || t < t0 - slack || t > t1 + slack {
            return Err(Error::Domain { t, t0, t1 });
        }
        let cells = self.times.len() - 1;
        let x = ((t - t0) / self.step()).clamp(0.0, cells as f64);
        let i = (x.floor() as usize).min(cells - 1);
        Ok((i, x - i as f64))
    }

    /// Linearly interpolated `K(t)`.
    pub fn slope_at(&self, t: f64) -> Result<f64> {
        let (i, frac) = self.locate(t)?;
        Ok(self.k[i] + frac * (self.k[i + 1] - self.k[i]))
    }

    /// `u(t) = K(t)/2`.
    pub fn control_at(&self, t: f64) -> Result<f64> {
        Ok(0.5 * self.slope_at(t)?)
    }

    /// Resamples onto a uniform grid of step at most `h`.
    pub fn resampled(&self, h: f64) -> Result<FeedbackLaw> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::param("h", format!("must be > 0, got {h}")));
        }
        let n = step_count(self.t1() - self.t0(), h);
        let (t0, t1) = (self.t0(), self.t1());
        let mut k = Vec::with_capacity(n + 1);
        let mut e = Vec::with_capacity(n + 1);
        for j in 0..=n {
            let t = if j == n {
                t1
            } else {
                t0 + j as f64 * (t1 - t0) / n as f64
            };
            let (i, frac) = self.locate(t)?;
            k.push(self.k[i] + frac * (self.k[i + 1] - self.k[i]));
            e.push(self.e[i] + frac * (self.e[i + 1] - self.e[i]));
        }
        FeedbackLaw::from_samples(t0, t1, k, e, self.boundary)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,K,E,u")?;
        for ((t, k), e) in self.times.iter().zip(&self.k).zip(&self.e) {
            writeln!(
                w,
                "{},{},{},{}",
                fmt_num(*t),
                fmt_num(*k),
                fmt_num(*e),
                fmt_num(0.5 * k)
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let (rows, _) = read_numeric_csv(r, &["t", "K", "E", "u"])?;
        if rows.len() < 2 {
            return Err(Error::Format("feedback law needs at least 2 rows".into()));
        }
        let (t0, t1) = (rows[0][0], rows[rows.len() - 1][0]);
        let h = (t1 - t0) / (rows.len() - 1) as f64;
        for pair in rows.windows(2) {
            if ((pair[1][0] - pair[0][0]) - h).abs() > 1e-6 * h {
                return Err(Error::Format("feedback law grid must be uniform".into()));
            }
        }
        let k = rows.iter().map(|r| r[1]).collect();
        let e = rows.iter().map(|r| r[2]).collect();
        FeedbackLaw::from_samples(t0, t1, k, e, Boundary::Loaded)
            .map_err(|e| Error::Format(e.to_string()))
    }
}

/// Integrates the closed-loop pair forward from `(E0, K0)`.
pub fn integrate_forward(
    model: &HarmonicModel,
    e0: f64,
    k0: f64,
    t0: f64,
    t1: f64,
    h: f64,
) -> Result<FeedbackLaw> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::param("h", format!("must be > 0, got {h}")));
    }
    if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
        return Err(Error::param("t1", format!("must exceed t0={t0}, got {t1}")));
    }
    if !(e0.is_finite() && e0 != 0.0) {
        return Err(Error::param(
            "e0",
            format!("must be finite and non-zero, got {e0}"),
        ));
    }
    if !k0.is_finite() {
        return Err(Error::param("k0", "must be finite"));
    }
    closed_loop_rhs(0.0, e0, k0, t0)?;
    let n = step_count(t1 - t0, h);
    let mut e = Vec::with_capacity(n + 1);
    let mut k = Vec::with_capacity(n + 1);
    let mut state = [e0, k0];
    e.push(e0);
    k.push(k0);
    for i in 0..n {
        let t = t0 + i as f64 * (t1 - t0) / n as f64;
        let t_next = if i + 1 == n {
            t1
        } else {
            t0 + (i + 1) as f64 * (t1 - t0) / n as f64
        };
        state = rk4_step(
            |s, y: &[f64; 2]| {
                let (de, dk) = closed_loop_rhs(model.drift(s), y[0], y[1], s)?;
                Ok([de, dk])
            },
            state,
            t,
            t_next - t,
        )?;
        // a sign change means E passed through zero inside the step
        if !(state[0].abs() >= SINGULARITY_GUARD) || state[0].signum() != e0.signum() {
            return Err(Error::Singularity {
                t: t_next,
                e: state[0],
            });
        }
        e.push(state[0]);
        k.push(state[1]);
    }
    FeedbackLaw::from_samples(t0, t1, k, e, Boundary::Forward)
}

/// Shoots on `K(t0)` until `|K(t1) − 1| ≤ shoot_tol`.
pub fn solve_feedback(
    model: &HarmonicModel,
    e0: f64,
    t0: f64,
    t1: f64,
    params: &FeedbackParams,
) -> Result<FeedbackLaw> {
    if !(params.shoot_tol.is_finite() && params.shoot_tol > 0.0) {
        return Err(Error::param("shoot_tol", "must be > 0"));
    }
    let run = |k0: f64| integrate_forward(model, e0, k0, t0, t1, params.h);

    let (mut x0, mut x1) = SHOOT_GUESSES;
    let law0 = run(x0)?;
    let mut g0 = law0.k_end() - 1.0;
    if g0.abs() <= params.shoot_tol {
        return Ok(FeedbackLaw {
            boundary: Boundary::Shot {
                tol: params.shoot_tol,
                iterations: 0,
            },
            ..law0
        });
    }
    let mut law1 = run(x1)?;
    let mut g1 = law1.k_end() - 1.0;
    for iter in 0..=params.max_iter {
        if g1.abs() <= params.shoot_tol {
            law1.boundary = Boundary::Shot {
                tol: params.shoot_tol,
                iterations: iter,
            };
            return Ok(law1);
        }
        if iter == params.max_iter || g1 == g0 {
            break;
        }
        let x2 = x1 - g1 * (x1 - x0) / (g1 - g0);
        if !x2.is_finite() {
            break;
        }
        x0 = x1;
        g0 = g1;
        x1 = x2;
        law1 = run(x1)?;
        g1 = law1.k_end() - 1.0;
    }
    Err(Error::NoConvergence {
        what: "feedback shooting",
        iterations: params.max_iter,
    })
}

/// Largest `|K' E + K f + K²/4|` over interior grid points.
///
/// `K'` uses the fourth-order central difference where five points are
/// available and the three-point rule otherwise.
pub fn hjb_residual(model: &HarmonicModel, law: &FeedbackLaw) -> f64 {
    let (t, k, e) = (&law.times, &law.k, &law.e);
    let n = t.len();
    let h = law.step();
    let residual =
        |i: usize, dk: f64| (dk * e[i] + k[i] * model.drift(t[i]) + 0.25 * k[i] * k[i]).abs();
    if n >= 5 {
        (2..n - 2)
            .map(|i| {
                let dk = (k[i - 2] - 8.0 * k[i - 1] + 8.0 * k[i + 1] - k[i + 2]) / (12.0 * h);
                residual(i, dk)
            })
            .fold(0.0, f64::max)
    } else {
        (1..n.saturating_sub(1))
            .map(|i| residual(i, (k[i + 1] - k[i - 1]) / (2.0 * h)))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Harmonic-free oracle: `s = √E(t1)` solves `s³ − (3/4)(t1 − t0) s − E0^{3/2} = 0`.
    fn free_oracle(e0: f64, t0: f64, t1: f64) -> f64 {
        let g = |s: f64| s.powi(3) - 0.75 * (t1 - t0) * s - e0.powf(1.5);
        let (mut lo, mut hi) = (e0.sqrt().min(1e-3), 10.0 + (t1 - t0));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn rhs_values() {
        assert_eq!(closed_loop_rhs(0.0, 1.0, 1.0, 0.0).unwrap(), (0.5, -0.25));
        assert_eq!(closed_loop_rhs(0.0, 4.0, 2.0, 0.0).unwrap(), (1.0, -0.25));
        let (de, dk) = closed_loop_rhs(1.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(de, 1.0);
        assert_eq!(dk, 0.0);
        assert!(matches!(
            closed_loop_rhs(0.0, 1e-7, 1.0, 2.0),
            Err(Error::Singularity { .. })
        ));
    }

    #[test]
    fn harmonic_free_shooting_matches_oracle() {
        let s = free_oracle(1.0, 0.0, 1.0);
        assert!((s.powi(3) - 0.75 * s - 1.0).abs() < 1e-12);
        let law = solve_feedback(
            &HarmonicModel::empty(),
            1.0,
            0.0,
            1.0,
            &FeedbackParams::default(),
        )
        .unwrap();
        assert!((law.k0() - s).abs() < 1e-6, "{} vs {s}", law.k0());
        assert!((law.k0() - 1.24602).abs() < 1e-5);
        assert!((law.e_end() - s * s).abs() < 1e-6);
        assert!((law.e_end() - 1.5526).abs() < 1e-3);
        assert!((law.k_end() - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn conserved_product_without_drift() {
        let law = solve_feedback(
            &HarmonicModel::empty(),
            0.6,
            0.0,
            3.0,
            &FeedbackParams::default(),
        )
        .unwrap();
        let first = law.k0() * law.errors()[0].sqrt();
        for (k, e) in law.slopes().iter().zip(law.errors()) {
            assert!(((k * e.sqrt()) - first).abs() <= 1e-8 * first.abs());
        }
    }

    #[test]
    fn control_interpolates_linearly() {
        let law =
            FeedbackLaw::from_samples(0.0, 1.0, vec![1.0, 1.2], vec![1.0, 1.0], Boundary::Loaded)
                .unwrap();
        assert_eq!(law.control_at(0.0).unwrap(), 0.5);
        assert!((law.control_at(0.5).unwrap() - 0.55).abs() < 1e-15);
        assert!(matches!(law.control_at(1.01), Err(Error::Domain { .. })));
        let shot = solve_feedback(
            &HarmonicModel::empty(),
            1.0,
            0.0,
            1.0,
            &FeedbackParams::default(),
        )
        .unwrap();
        assert!((shot.control_at(1.0).unwrap() - 0.5).abs() <= 0.5e-8);
    }

    #[test]
    fn residual_small_for_analytic_free_law() {
        let (e0, t0, t1) = (1.0, 0.0, 1.0);
        let s = free_oracle(e0, t0, t1);
        let n = 1000;
        let (mut k, mut e) = (Vec::new(), Vec::new());
        for i in 0..=n {
            let t = t0 + (t1 - t0) * i as f64 / n as f64;
            let ei = (e0.powf(1.5) + 0.75 * s * (t - t0)).powf(2.0 / 3.0);
            e.push(ei);
            k.push(s / ei.sqrt());
        }
        let law = FeedbackLaw::from_samples(t0, t1, k, e, Boundary::Loaded).unwrap();
        assert!(hjb_residual(&HarmonicModel::empty(), &law) <= 1e-9);
    }

    #[test]
    fn residual_small_for_converged_law_and_large_when_perturbed() {
        let m = HarmonicModel::figure1();
        let law = solve_feedback(&m, 0.8777255, 0.0, 5.0, &FeedbackParams::default()).unwrap();
        assert!(hjb_residual(&m, &law) <= 1e-6, "{}", hjb_residual(&m, &law));
        let shifted: Vec<f64> = law.slopes().iter().map(|k| k + 0.1).collect();
        let bad = FeedbackLaw::from_samples(
            law.t0(),
            law.t1(),
            shifted,
            law.errors().to_vec(),
            Boundary::Loaded,
        )
        .unwrap();
        assert!(hjb_residual(&m, &bad) > 1e-3);
    }

    #[test]
    fn singular_trajectory_is_reported() {
        // strong negative constant-like drift drives E through zero
        let m = HarmonicModel::single(-5.0, 0.0, 1e-3).unwrap();
        let err = solve_feedback(&m, 0.5, 0.0, 2.0, &FeedbackParams::default()).unwrap_err();
        assert!(matches!(err, Error::Singularity { .. }), "{err}");
        assert!(matches!(
            integrate_forward(&m, 0.0, 1.0, 0.0, 1.0, 0.01),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn non_convergence_is_reported() {
        let p = FeedbackParams {
            max_iter: 0,
            ..Default::default()
        };
        let err = solve_feedback(&HarmonicModel::figure1(), 0.8777255, 0.0, 5.0, &p).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { .. }));
    }

    #[test]
    fn shooting_is_deterministic() {
        let m = HarmonicModel::figure1();
        let a = solve_feedback(&m, 0.8777255, 0.0, 4.0, &FeedbackParams::default()).unwrap();
        let b = solve_feedback(&m, 0.8777255, 0.0, 4.0, &FeedbackParams::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_round_trip_and_resampling() {
        let law = solve_feedback(
            &HarmonicModel::figure1(),
            0.8777255,
            0.0,
            2.0,
            &FeedbackParams::default(),
        )
        .unwrap();
        let coarse = law.resampled(DEFAULT_EXPORT_STEP).unwrap();
        assert_eq!(coarse.times().len(), 201);
        let mut buf = Vec::new();
        coarse.write_csv(&mut buf).unwrap();
        let back = FeedbackLaw::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.times().len(), 201);
        for t in [0.0, 0.555, 1.999, 2.0] {
            assert!((back.control_at(t).unwrap() - law.control_at(t).unwrap()).abs() < 1e-4);
        }
    }
}
