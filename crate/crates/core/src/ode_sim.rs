//! Fixed-step RK4 simulation of `dE/dt = f(t) + u`, threshold events and
//! the quadratic performance functional `∫ u² dt + E(t1)`.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::feedback_control::FeedbackLaw;
use crate::format::{fmt_num, read_numeric_csv};
use crate::harmonic_model::HarmonicModel;
use crate::program_control::ProgramLaw;

/// A control law `u(t, E)`.
pub trait Control {
    fn control(&self, t: f64, e: f64) -> Result<f64>;
}

impl<C: Control + ?Sized> Control for &C {
    fn control(&self, t: f64, e: f64) -> Result<f64> {
        (**self).control(t, e)
    }
}

/// Open-loop control given as a plain function of time.
pub struct TimeControl<F>(pub F);

impl<F: Fn(f64) -> f64> Control for TimeControl<F> {
    fn control(&self, t: f64, _e: f64) -> Result<f64> {
        Ok((self.0)(t))
    }
}

/// Any control the simulator can be driven with.
#[derive(Debug, Clone)]
pub enum Law {
    Program(ProgramLaw),
    Feedback(FeedbackLaw),
    Zero,
    Constant(f64),
}

impl Control for Law {
    fn control(&self, t: f64, _e: f64) -> Result<f64> {
        match self {
            Law::Program(p) => p.control_at(t),
            Law::Feedback(f) => f.control_at(t),
            Law::Zero => Ok(0.0),
            Law::Constant(u) => Ok(*u),
        }
    }
}

/// One classical RK4 step for an `N`-dimensional state.
pub fn rk4_step<const N: usize, F>(mut rhs: F, y: [f64; N], t: f64, h: f64) -> Result<[f64; N]>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let mut stage = |s: f64, y: &[f64; N]| -> Result<[f64; N]> {
        let d = rhs(s, y)?;
        if d.iter().all(|x| x.is_finite()) {
            Ok(d)
        } else {
            Err(Error::NonFinite { t: s })
        }
    };
    let axpy = |k: &[f64; N], c: f64| -> [f64; N] { std::array::from_fn(|i| y[i] + c * k[i]) };

    let k1 = stage(t, &y)?;
    let k2 = stage(t + 0.5 * h, &axpy(&k1, 0.5 * h))?;
    let k3 = stage(t + 0.5 * h, &axpy(&k2, 0.5 * h))?;
    let k4 = stage(t + h, &axpy(&k3, h))?;
    Ok(std::array::from_fn(|i| {
        y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    }))
}

/// Number of equal steps covering `span` with steps no longer than `h`.
pub(crate) fn step_count(span: f64, h: f64) -> usize {
    let ratio = span / h;
    let rounded = ratio.round();
    if (ratio - rounded).abs() <= 1e-9 * rounded.max(1.0) {
        (rounded as usize).max(1)
    } else {
        (ratio.ceil() as usize).max(1)
    }
}

/// When the control switches on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Arm {
    #[default]
    Immediate,
    /// Control stays at zero until E crosses Δ from below.
    OnUpwardCrossing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub h: f64,
    pub t_max: f64,
    pub delta: f64,
    pub arm: Arm,
}

impl SimConfig {
    /// Steps `h` up to `t_max`; the stop threshold is disabled.
    pub fn horizon(h: f64, t_max: f64) -> Self {
        SimConfig {
            h,
            t_max,
            delta: f64::NEG_INFINITY,
            arm: Arm::Immediate,
        }
    }

    fn validate(&self, t0: f64) -> Result<()> {
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::param("h", format!("must be > 0, got {}", self.h)));
        }
        if !(self.t_max.is_finite() && self.t_max > t0) {
            return Err(Error::param(
                "t_max",
                format!("must exceed t0={t0}, got {}", self.t_max),
            ));
        }
        if self.delta.is_nan() || (self.delta.is_finite() && self.delta < 0.0) {
            return Err(Error::param(
                "delta",
                format!("must be >= 0, got {}", self.delta),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub t: f64,
    pub e: f64,
    pub u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Completion {
    Stopped,
    HorizonExceeded,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub points: Vec<Point>,
    /// Time the control switched on, when arming was on an upward crossing.
    pub armed: Option<f64>,
    /// Time E fell below Δ after activation.
    pub stopped: Option<f64>,
}

impl Trajectory {
    pub fn status(&self) -> Completion {
        if self.stopped.is_some() {
            Completion::Stopped
        } else {
            Completion::HorizonExceeded
        }
    }

    pub fn final_error(&self) -> Option<f64> {
        self.points.last().map(|p| p.e)
    }

    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }

    pub fn errors(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.e).collect()
    }

    pub fn controls(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.u).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,e,u")?;
        for p in &self.points {
            writeln!(w, "{},{},{}", fmt_num(p.t), fmt_num(p.e), fmt_num(p.u))?;
        }
        if let Some(t) = self.armed {
            writeln!(w, "# event,armed,{}", fmt_num(t))?;
        }
        if let Some(t) = self.stopped {
            writeln!(w, "# event,stopped,{}", fmt_num(t))?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let (rows, comments) = read_numeric_csv(r, &["t", "e", "u"])?;
        let points: Vec<Point> = rows
            .into_iter()
            .map(|r| Point {
                t: r[0],
                e: r[1],
                u: r[2],
            })
            .collect();
        if points.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::Format(
                "trajectory times must be strictly increasing".into(),
            ));
        }
        let mut traj = Trajectory {
            points,
            armed: None,
            stopped: None,
        };
        for c in comments {
            let fields: Vec<&str> = c.split(',').map(str::trim).collect();
            if let ["event", kind, time] = fields.as_slice() {
                let t: f64 = time
                    .parse()
                    .map_err(|_| Error::Format(format!("bad event time `{time}`")))?;
                match *kind {
                    "armed" => traj.armed = Some(t),
                    "stopped" => traj.stopped = Some(t),
                    other => return Err(Error::Format(format!("unknown event kind `{other}`"))),
                }
            }
        }
        Ok(traj)
    }
}

/// Integrates `dE/dt = f(t) + u(t, E)` from `(t0, e0)` with RK4.
///
/// With [`Arm::OnUpwardCrossing`] the control is held at zero until E
/// crosses `delta` from below. Once active, the run ends at the first
/// `E < delta`; the final point is placed at the linearly interpolated
/// crossing. Otherwise the run ends at `t_max`
/// ([`Completion::HorizonExceeded`]).
pub fn integrate<C: Control>(
    model: &HarmonicModel,
    law: &C,
    e0: f64,
    t0: f64,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    cfg.validate(t0)?;
    if !e0.is_finite() {
        return Err(Error::param("e0", "must be finite"));
    }
    let n = step_count(cfg.t_max - t0, cfg.h);
    let step = (cfg.t_max - t0) / n as f64;
    let delta = cfg.delta;

    let mut active = cfg.arm == Arm::Immediate;
    let mut traj = Trajectory::default();
    let u0 = if active { law.control(t0, e0)? } else { 0.0 };
    traj.points.push(Point {
        t: t0,
        e: e0,
        u: u0,
    });
    if active && e0 < delta {
        traj.stopped = Some(t0);
        return Ok(traj);
    }

    for k in 0..n {
        let t = t0 + k as f64 * step;
        let t_next = if k + 1 == n {
            cfg.t_max
        } else {
            t0 + (k + 1) as f64 * step
        };
        let prev = *traj.points.last().expect("trajectory starts with a point");
        let [e_next] = rk4_step(
            |s, y: &[f64; 1]| {
                let u = if active { law.control(s, y[0])? } else { 0.0 };
                Ok([model.drift(s) + u])
            },
            [prev.e],
            t,
            t_next - t,
        )?;

        if !active {
            if prev.e < delta && e_next >= delta {
                let frac = (delta - prev.e) / (e_next - prev.e);
                traj.armed = Some(t + frac * (t_next - t));
                active = true;
            }
            let u = if active {
                law.control(t_next, e_next)?
            } else {
                0.0
            };
            traj.points.push(Point {
                t: t_next,
                e: e_next,
                u,
            });
            continue;
        }

        let u_next = law.control(t_next, e_next)?;
        if e_next < delta {
            if prev.e <= delta {
                traj.stopped = Some(prev.t);
            } else {
                let frac = (prev.e - delta) / (prev.e - e_next);
                let te = t + frac * (t_next - t);
                traj.points.push(Point {
                    t: te,
                    e: prev.e + frac * (e_next - prev.e),
                    u: prev.u + frac * (u_next - prev.u),
                });
                traj.stopped = Some(te);
            }
            return Ok(traj);
        }
        traj.points.push(Point {
            t: t_next,
            e: e_next,
            u: u_next,
        });
    }
    Ok(traj)
}

/// Composite Simpson rule on uniform samples; a trailing odd cell uses the
/// trapezoid rule.
pub fn simpson_uniform(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let cells = n - 1;
    let even = cells - cells % 2;
    let mut acc = 0.0;
    for pair in (0..even).step_by(2) {
        acc += h / 3.0 * (values[pair] + 4.0 * values[pair + 1] + values[pair + 2]);
    }
    if even < cells {
        acc += 0.5 * h * (values[cells - 1] + values[cells]);
    }
    acc
}

/// `∫ u² dt + E(t_end)` over a trajectory.
///
/// The uniformly spaced prefix is integrated with Simpson's rule; a
/// trailing event-interpolated point is joined with the trapezoid rule.
pub fn cost_functional(traj: &Trajectory) -> f64 {
    let pts = &traj.points;
    let Some(last) = pts.last() else {
        return 0.0;
    };
    if pts.len() == 1 {
        return last.e;
    }
    let h0 = pts[1].t - pts[0].t;
    let mut uniform = 2;
    while uniform < pts.len() {
        let dt = pts[uniform].t - pts[uniform - 1].t;
        if (dt - h0).abs() > 1e-6 * h0 {
            break;
        }
        uniform += 1;
    }
    let sq: Vec<f64> = pts.iter().map(|p| p.u * p.u).collect();
    let mut running = simpson_uniform(&sq[..uniform], h0);
    for i in uniform..pts.len() {
        running += 0.5 * (pts[i].t - pts[i - 1].t) * (sq[i] + sq[i - 1]);
    }
    running + last.e
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

/// First time the samples cross `delta`, by linear interpolation.
///
/// Touching the level counts as crossing: a sample equal to `delta`
/// reached from the other side reports its own time.
pub fn crossing_time(ts: &[f64], es: &[f64], delta: f64, dir: Direction) -> Option<f64> {
    for i in 1..ts.len().min(es.len()) {
        let (a, b) = (es[i - 1], es[i]);
        let crossed = match dir {
            Direction::Down => a > delta && b <= delta,
            Direction::Up => a < delta && b >= delta,
        };
        if crossed {
            let frac = (a - delta) / (a - b);
            return Some(ts[i - 1] + frac * (ts[i] - ts[i - 1]));
        }
    }
    None
}

pub fn detect_crossing(traj: &Trajectory, delta: f64, dir: Direction) -> Option<f64> {
    crossing_time(&traj.times(), &traj.errors(), delta, dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(f: impl Fn(f64, f64) -> f64, y: f64, t: f64, h: f64) -> f64 {
        rk4_step(|s, y: &[f64; 1]| Ok([f(s, y[0])]), [y], t, h).unwrap()[0]
    }

    #[test]
    fn rk4_zero_rhs_keeps_state() {
        assert_eq!(scalar(|_, _| 0.0, 3.5, 0.0, 0.1), 3.5);
        let y = rk4_step(|_, _: &[f64; 2]| Ok([0.0, 0.0]), [1.0, -2.0], 0.0, 0.3).unwrap();
        assert_eq!(y, [1.0, -2.0]);
    }

    #[test]
    fn rk4_constant_rhs() {
        assert_eq!(scalar(|_, _| 1.0, 0.0, 0.0, 0.25), 0.25);
    }

    #[test]
    fn rk4_decay_matches_taylor_sum() {
        let h: f64 = 0.1;
        let taylor = 1.0 - h + h * h / 2.0 - h.powi(3) / 6.0 + h.powi(4) / 24.0;
        let y = scalar(|_, y| -y, 1.0, 0.0, h);
        assert!((y - taylor).abs() < 1e-15);
        assert!((y - 0.9048375).abs() < 1e-7);
    }

    #[test]
    fn rk4_reports_non_finite() {
        let r = rk4_step(|s, _: &[f64; 1]| Ok([1.0 / (s - 0.05)]), [0.0], 0.0, 0.1);
        assert!(matches!(r, Err(Error::NonFinite { .. })));
    }

    #[test]
    fn rk4_exact_for_cubic_in_time() {
        let p = |t: f64| 1.0 - 2.0 * t + 0.5 * t * t - 0.25 * t.powi(3);
        let exact = |t: f64| t - t * t + t.powi(3) / 6.0 - t.powi(4) / 16.0;
        let mut y = 0.0;
        let h = 0.37;
        for k in 0..10 {
            y = scalar(|s, _| p(s), y, k as f64 * h, h);
        }
        assert!((y - exact(3.7)).abs() < 1e-12);
    }

    #[test]
    fn uncontrolled_empty_model_is_constant() {
        let traj = integrate(
            &HarmonicModel::empty(),
            &Law::Zero,
            0.7,
            0.0,
            &SimConfig::horizon(0.1, 2.0),
        )
        .unwrap();
        assert_eq!(traj.points.len(), 21);
        assert!(traj.points.iter().all(|p| p.e == 0.7));
        assert_eq!(traj.status(), Completion::HorizonExceeded);
    }

    #[test]
    fn stop_event_on_linear_decay() {
        let h = 0.01;
        let cfg = SimConfig {
            h,
            t_max: 5.0,
            delta: 0.5,
            arm: Arm::Immediate,
        };
        let traj = integrate(
            &HarmonicModel::empty(),
            &Law::Constant(-1.0),
            1.0,
            0.0,
            &cfg,
        )
        .unwrap();
        let te = traj.stopped.unwrap();
        assert!((te - 0.5).abs() <= h * h);
        let last = traj.points.last().unwrap();
        assert_eq!(last.t, te);
        assert!((last.e - 0.5).abs() <= 1e-9);
        assert_eq!(traj.status(), Completion::Stopped);
    }

    #[test]
    fn stop_event_off_grid() {
        let h = 0.03;
        let cfg = SimConfig {
            h,
            t_max: 5.0,
            delta: 0.2,
            arm: Arm::Immediate,
        };
        let traj = integrate(
            &HarmonicModel::empty(),
            &Law::Constant(-1.0),
            1.0,
            0.0,
            &cfg,
        )
        .unwrap();
        assert!((traj.stopped.unwrap() - 0.8).abs() < 1e-12);
        assert!((traj.points.last().unwrap().e - 0.2).abs() < 1e-12);
        assert!(traj.points.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn arming_waits_for_upward_crossing() {
        // E rises at rate 1 until it reaches 1.0, then the law pulls it down at rate 1.
        let cfg = SimConfig {
            h: 0.01,
            t_max: 10.0,
            delta: 1.0,
            arm: Arm::OnUpwardCrossing,
        };
        let m = HarmonicModel::empty();
        let law = TimeControl(|_| -1.0);
        let up = integrate(&m, &law, 0.5, 0.0, &cfg).unwrap();
        // without arming the zero drift keeps E flat: never armed
        assert!(up.armed.is_none());
        assert!(up.points.iter().all(|p| p.u == 0.0));

        struct Ramp;
        impl Control for Ramp {
            fn control(&self, _t: f64, _e: f64) -> Result<f64> {
                Ok(-2.0)
            }
        }
        let drift = HarmonicModel::single(1.0, 0.0, 1e-3).unwrap(); // ≈ 1 on [0, 10]
        let traj = integrate(&drift, &Ramp, 0.5, 0.0, &cfg).unwrap();
        let armed = traj.armed.unwrap();
        assert!((armed - 0.5).abs() < 1e-3);
        let stopped = traj.stopped.unwrap();
        assert!(stopped > armed);
        assert!((stopped - (armed + 0.01)).abs() < 0.02);
    }

    #[test]
    fn immediate_stop_when_starting_below_threshold() {
        let cfg = SimConfig {
            h: 0.1,
            t_max: 1.0,
            delta: 0.5,
            arm: Arm::Immediate,
        };
        let traj = integrate(&HarmonicModel::empty(), &Law::Zero, 0.2, 0.0, &cfg).unwrap();
        assert_eq!(traj.points.len(), 1);
        assert_eq!(traj.stopped, Some(0.0));
    }

    #[test]
    fn config_validation() {
        let m = HarmonicModel::empty();
        for cfg in [
            SimConfig::horizon(0.0, 1.0),
            SimConfig::horizon(0.1, 0.0),
            SimConfig {
                h: 0.1,
                t_max: 1.0,
                delta: -0.1,
                arm: Arm::Immediate,
            },
        ] {
            assert!(matches!(
                integrate(&m, &Law::Zero, 1.0, 0.0, &cfg),
                Err(Error::InvalidParameter { .. })
            ));
        }
    }

    fn traj_from(ts: &[f64], es: &[f64], us: &[f64]) -> Trajectory {
        Trajectory {
            points: ts
                .iter()
                .zip(es)
                .zip(us)
                .map(|((&t, &e), &u)| Point { t, e, u })
                .collect(),
            ..Default::default()
        }
    }

    #[test]
    fn cost_of_unit_control() {
        let ts: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let mut es = vec![0.0; 11];
        es[10] = 0.5;
        let traj = traj_from(&ts, &es, &[1.0; 11]);
        assert!((cost_functional(&traj) - 1.5).abs() < 1e-14);
    }

    #[test]
    fn cost_simpson_exact_for_quadratic() {
        let ts: Vec<f64> = (0..=20).map(|k| k as f64 / 10.0).collect();
        let traj = traj_from(&ts, &[0.0; 21], &ts);
        assert!((cost_functional(&traj) - 8.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn cost_without_control_is_final_error() {
        let ts: Vec<f64> = (0..5).map(|k| k as f64).collect();
        let traj = traj_from(&ts, &[0.9; 5], &[0.0; 5]);
        assert_eq!(cost_functional(&traj), 0.9);
    }

    #[test]
    fn cost_handles_odd_cells_and_event_point() {
        // u = 1 everywhere: the integral is just the span
        let ts = [0.0, 0.1, 0.2, 0.3, 0.34];
        let traj = traj_from(&ts, &[0.0, 0.0, 0.0, 0.0, 0.25], &[1.0; 5]);
        assert!((cost_functional(&traj) - (0.34 + 0.25)).abs() < 1e-14);
    }

    #[test]
    fn crossings() {
        let ts = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(
            crossing_time(&ts, &[1.0, 0.8, 0.6, 0.4], 0.5, Direction::Down),
            Some(2.5)
        );
        assert_eq!(
            crossing_time(&ts, &[1.0, 2.0, 3.0, 4.0], 0.5, Direction::Up),
            None
        );
        assert_eq!(
            crossing_time(&ts, &[1.0, 0.5, 0.3, 0.2], 0.5, Direction::Down),
            Some(1.0)
        );
        assert_eq!(
            crossing_time(&ts, &[0.0, 0.2, 0.5, 0.9], 0.5, Direction::Up),
            Some(2.0)
        );
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let cfg = SimConfig {
            h: 0.03,
            t_max: 5.0,
            delta: 0.2,
            arm: Arm::Immediate,
        };
        let traj = integrate(
            &HarmonicModel::empty(),
            &Law::Constant(-1.0),
            1.0,
            0.0,
            &cfg,
        )
        .unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.trim_end().ends_with("# event,stopped,0.8"));
        let back = Trajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.points.len(), traj.points.len());
        assert_eq!(back.stopped, Some(0.8));
        assert!((cost_functional(&back) - cost_functional(&traj)).abs() < 1e-10);
    }
}
