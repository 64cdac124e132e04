//! Open-loop (program) control from the maximum principle.
//!
//! With the Hamiltonian `H = Ψ (f + u) − u² − E(t1)` the optimal control
//! is `u = Ψ/2`, the costate is linear, `Ψ(t) = C − t`, and the error
//! trajectory has the closed form
//!
//! ```text
//! E(t) = C t / 2 − t² / 4 + Σ [(a/w) sin(w t) − (b/w) cos(w t)] + C1
//! ```
//!
//! The constant `C` is fixed by the free-final-time condition `H(t1) = 0`
//! (mode [`Mode::PaperH0`]) or by the endpoint costate `Ψ(t1) = −1`
//! ([`Mode::PaperPsi1`]). [`Mode::Stationary`] is the direct pointwise
//! minimizer `u ≡ −1/2` of the functional.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{fmt_num, round_sig, SIG_DIGITS};
use crate::harmonic_model::HarmonicModel;
use crate::ode_sim::{cost_functional, integrate, Law, SimConfig};

/// Search interval and scan step for the constant `C`.
pub const C_BRACKET: (f64, f64) = (-1.0e3, 1.0e3);
pub const C_SCAN_STEP: f64 = 0.5;
/// Required `|H(t1)|` at a reported root.
pub const RESIDUAL_TOL: f64 = 1e-10;
pub const MAX_ROOT_ITER: usize = 200;
/// Number of RK4 steps used to score candidate roots.
const SCORING_STEPS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Mode {
    #[default]
    #[serde(rename = "paper-h0")]
    PaperH0,
    #[serde(rename = "paper-psi1")]
    PaperPsi1,
    #[serde(rename = "stationary")]
    Stationary,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::PaperH0 => "paper-h0",
            Mode::PaperPsi1 => "paper-psi1",
            Mode::Stationary => "stationary",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-h0" => Ok(Mode::PaperH0),
            "paper-psi1" => Ok(Mode::PaperPsi1),
            "stationary" => Ok(Mode::Stationary),
            other => Err(Error::param("mode", format!("unknown mode `{other}`"))),
        }
    }
}

/// Costate `Ψ(t) = C − t`.
#[inline]
pub fn costate(c: f64, t: f64) -> f64 {
    -t + c
}

/// `H = Ψ (f + u) − u² − terminal`.
#[inline]
pub fn hamiltonian(psi: f64, drift: f64, u: f64, terminal: f64) -> f64 {
    psi * (drift + u) - u * u - terminal
}

/// Open-loop control law on `[t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgramLaw {
    pub mode: Mode,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    pub t0: f64,
    pub t1: f64,
    #[serde(rename = "E0")]
    pub e0: f64,
}

impl ProgramLaw {
    /// Builds a law with `C1` fixed so the trajectory starts at `e0`.
    pub fn new(
        model: &HarmonicModel,
        mode: Mode,
        c: f64,
        e0: f64,
        t0: f64,
        t1: f64,
    ) -> Result<Self> {
        check_horizon(t0, t1)?;
        for (name, v) in [("C", c), ("e0", e0)] {
            if !v.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        let (c, slope) = match mode {
            Mode::Stationary => (0.0, -1.0),
            _ => (c, c),
        };
        // E(t) = slope t/2 − [t²/4 unless stationary] + P(t) + C1
        let quad = if mode == Mode::Stationary {
            0.0
        } else {
            t0 * t0 / 4.0
        };
        let c1 = e0 - slope * t0 / 2.0 + quad - model.drift_primitive(t0);
        Ok(ProgramLaw {
            mode,
            c,
            c1,
            t0,
            t1,
            e0,
        })
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        let slack = 1e-9 * self.t0.abs().max(self.t1.abs()).max(1.0);
        if t.is_nan() || t < self.t0 - slack || t > self.t1 + slack {
            return Err(Error::Domain {
                t,
                t0: self.t0,
                t1: self.t1,
            });
        }
        Ok(())
    }

    /// `u(t) = (C − t)/2`, or `−1/2` in stationary mode.
    pub fn control_at(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        Ok(match self.mode {
            Mode::Stationary => -0.5,
            Mode::PaperH0 | Mode::PaperPsi1 => costate(self.c, t) / 2.0,
        })
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let law: ProgramLaw = serde_json::from_reader(r)?;
        check_horizon(law.t0, law.t1)?;
        Ok(law)
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        let r = |x: f64| round_sig(x, SIG_DIGITS);
        let out = ProgramLaw {
            c: r(self.c),
            c1: r(self.c1),
            t0: r(self.t0),
            t1: r(self.t1),
            e0: r(self.e0),
            ..*self
        };
        serde_json::to_writer_pretty(&mut w, &out)?;
        writeln!(w)?;
        Ok(())
    }

    /// Samples the control as CSV `t,u` on a uniform grid of step at most `h`.
    pub fn write_control_csv<W: Write>(&self, h: f64, mut w: W) -> Result<()> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::param("h", format!("must be > 0, got {h}")));
        }
        let n = crate::ode_sim::step_count(self.t1 - self.t0, h);
        writeln!(w, "t,u")?;
        for k in 0..=n {
            let t = if k == n {
                self.t1
            } else {
                self.t0 + k as f64 * (self.t1 - self.t0) / n as f64
            };
            writeln!(w, "{},{}", fmt_num(t), fmt_num(self.control_at(t)?))?;
        }
        Ok(())
    }
}

fn check_horizon(t0: f64, t1: f64) -> Result<()> {
    if !(t0.is_finite() && t1.is_finite()) {
        return Err(Error::param("t1", "horizon bounds must be finite"));
    }
    if !(t1 > t0) {
        return Err(Error::param("t1", format!("must exceed t0={t0}, got {t1}")));
    }
    Ok(())
}

/// Closed-form error trajectory of a costate-driven law.
pub fn analytic_error(model: &HarmonicModel, law: &ProgramLaw, t: f64) -> Result<f64> {
    if law.mode == Mode::Stationary {
        return Err(Error::param(
            "mode",
            "stationary laws have no closed-form costate trajectory; simulate instead",
        ));
    }
    if !t.is_finite() {
        return Err(Error::param("t", "must be finite"));
    }
    Ok(error_at(model, law.c, law.e0, law.t0, t))
}

/// E0 + C (t − t0)/2 − (t² − t0²)/4 + ∫_{t0}^{t} f.
fn error_at(model: &HarmonicModel, c: f64, e0: f64, t0: f64, t: f64) -> f64 {
    let dt = t - t0;
    e0 + c * dt / 2.0 - dt * (t + t0) / 4.0 + model.drift_integral(t0, t)
}

/// `H(t1)` at `u = Ψ/2`: `Ψ(t1) f(t1) + Ψ(t1)²/4 − E(t1)`.
pub fn terminal_residual(model: &HarmonicModel, c: f64, e0: f64, t0: f64, t1: f64) -> f64 {
    let psi = costate(c, t1);
    psi * model.drift(t1) + psi * psi / 4.0 - error_at(model, c, e0, t0, t1)
}

/// Bracketed hybrid secant/bisection on `g` over `[lo, hi]`.
fn refine_root(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let (mut glo, mut ghi) = (g(lo), g(hi));
    if glo.abs() <= tol {
        return Ok(lo);
    }
    if ghi.abs() <= tol {
        return Ok(hi);
    }
    for _ in 0..MAX_ROOT_ITER {
        let secant = hi - ghi * (hi - lo) / (ghi - glo);
        let mid = 0.5 * (lo + hi);
        // fall back to bisection when the secant point leaves the middle half
        let x = if secant.is_finite() && (secant - mid).abs() < 0.25 * (hi - lo) {
            secant
        } else {
            mid
        };
        let gx = g(x);
        if gx.abs() <= tol {
            return Ok(x);
        }
        if (gx < 0.0) == (glo < 0.0) {
            lo = x;
            glo = gx;
        } else {
            hi = x;
            ghi = gx;
        }
        if hi - lo <= f64::EPSILON * x.abs().max(1.0) {
            break;
        }
    }
    Err(Error::NoConvergence {
        what: "terminal-condition root",
        iterations: MAX_ROOT_ITER,
    })
}

/// All roots of the terminal residual in `C` inside [`C_BRACKET`].
pub fn terminal_roots(model: &HarmonicModel, e0: f64, t0: f64, t1: f64) -> Result<Vec<f64>> {
    check_horizon(t0, t1)?;
    let g = |c: f64| terminal_residual(model, c, e0, t0, t1);
    let (lo, hi) = C_BRACKET;
    let n = ((hi - lo) / C_SCAN_STEP).round() as usize;
    let grid: Vec<f64> = (0..=n).map(|k| lo + k as f64 * C_SCAN_STEP).collect();
    let vals: Vec<f64> = grid.iter().map(|&c| g(c)).collect();
    let mut roots = Vec::new();
    for i in 0..n {
        let (a, b) = (vals[i], vals[i + 1]);
        if a == 0.0 {
            roots.push(grid[i]);
        } else if a * b < 0.0 {
            roots.push(refine_root(g, grid[i], grid[i + 1], RESIDUAL_TOL)?);
        }
    }
    if vals[n] == 0.0 {
        roots.push(grid[n]);
    }
    Ok(roots)
}

/// Value of the functional for a law, scored with the simulator.
pub fn program_cost(model: &HarmonicModel, law: &ProgramLaw) -> Result<f64> {
    let h = (law.t1 - law.t0) / SCORING_STEPS as f64;
    let traj = integrate(
        model,
        &Law::Program(*law),
        law.e0,
        law.t0,
        &SimConfig::horizon(h, law.t1),
    )?;
    Ok(cost_functional(&traj))
}

/// Synthesizes the program law for the requested mode.
pub fn solve_program(
    model: &HarmonicModel,
    e0: f64,
    t0: f64,
    t1: f64,
    mode: Mode,
) -> Result<ProgramLaw> {
    check_horizon(t0, t1)?;
    match mode {
        Mode::Stationary => ProgramLaw::new(model, mode, 0.0, e0, t0, t1),
        Mode::PaperPsi1 => ProgramLaw::new(model, mode, t1 - 1.0, e0, t0, t1),
        Mode::PaperH0 => {
            let roots = terminal_roots(model, e0, t0, t1)?;
            let mut best: Option<(f64, ProgramLaw)> = None;
            for c in roots {
                let law = ProgramLaw::new(model, mode, c, e0, t0, t1)?;
                let j = program_cost(model, &law)?;
                let better = match &best {
                    None => true,
                    Some((bj, bl)) => {
                        let tie = (j - bj).abs() <= 1e-12 * bj.abs().max(1.0);
                        if tie {
                            c.abs() < bl.c.abs()
                        } else {
                            j < *bj
                        }
                    }
                };
                if better {
                    best = Some((j, law));
                }
            }
            best.map(|(_, law)| law).ok_or(Error::NoRoot {
                lo: C_BRACKET.0,
                hi: C_BRACKET.1,
                t1,
            })
        }
    }
}
