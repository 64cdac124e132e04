//! Harmonic identification from a uniformly sampled trace.
//!
//! The pipeline is mean removal, an optional Hann window, a DFT and
//! local-maximum peak picking. Each picked bin is refined to a sub-bin
//! frequency and its amplitude/phase are read from the windowed DTFT at
//! that frequency, which removes the scalloping loss of off-bin tones.

use std::f64::consts::{PI, TAU};
use std::io::{Read, Write};

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::format::{fmt_num, read_numeric_csv};
use crate::harmonic_model::{Harmonic, HarmonicModel, TraceKind};

/// Minimum trace length accepted by [`spectrum`].
pub const MIN_SPECTRUM_LEN: usize = 8;
/// Minimum trace length for identification from an error trace.
pub const MIN_ERROR_TRACE_LEN: usize = 16;
/// Peaks at or below this fraction of the largest magnitude are ignored.
pub const PEAK_FLOOR: f64 = 1e-9;
/// Default harmonic count for identification.
pub const DEFAULT_HARMONICS: usize = 7;

/// Uniformly sampled signal starting at `t0` with step `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    t0: f64,
    h: f64,
    samples: Vec<f64>,
}

impl Trace {
    pub fn new(t0: f64, h: f64, samples: Vec<f64>) -> Result<Self> {
        if !t0.is_finite() {
            return Err(Error::param("t0", "must be finite"));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::param("h", format!("must be > 0, got {h}")));
        }
        if samples.len() < 2 {
            return Err(Error::param(
                "n",
                format!("need at least 2 samples, got {}", samples.len()),
            ));
        }
        if let Some(k) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::param("samples", format!("sample {k} is not finite")));
        }
        Ok(Trace { t0, h, samples })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.h
    }

    /// Scales every sample by `factor`.
    pub fn scaled(&self, factor: f64) -> Trace {
        Trace {
            t0: self.t0,
            h: self.h,
            samples: self.samples.iter().map(|x| x * factor).collect(),
        }
    }

    /// Central-difference derivative on the interior samples.
    pub fn central_difference(&self) -> Result<Trace> {
        if self.len() < 3 {
            return Err(Error::param(
                "n",
                "central difference needs at least 3 samples",
            ));
        }
        let d = self
            .samples
            .windows(3)
            .map(|w| (w[2] - w[0]) / (2.0 * self.h))
            .collect();
        Trace::new(self.t0 + self.h, self.h, d)
    }

    /// Reads a `t,e` CSV with strictly increasing, equally spaced times.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let (rows, _) = read_numeric_csv(reader, &["t", "e"])?;
        if rows.len() < 2 {
            return Err(Error::Format("trace needs at least 2 rows".into()));
        }
        let t0 = rows[0][0];
        let n = rows.len();
        let h = (rows[n - 1][0] - t0) / (n - 1) as f64;
        if !(h > 0.0) {
            return Err(Error::Format(
                "trace times must be strictly increasing".into(),
            ));
        }
        for (k, pair) in rows.windows(2).enumerate() {
            let step = pair[1][0] - pair[0][0];
            if (step - h).abs() > 1e-9 * h {
                return Err(Error::Format(format!(
                    "trace spacing at row {} is {step}, expected {h}",
                    k + 2
                )));
            }
        }
        Trace::new(t0, h, rows.into_iter().map(|r| r[1]).collect())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,e")?;
        for (k, s) in self.samples.iter().enumerate() {
            writeln!(w, "{},{}", fmt_num(self.time(k)), fmt_num(*s))?;
        }
        Ok(())
    }
}

/// Analysis window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    Rect,
    #[default]
    Hann,
}

impl Window {
    fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rect => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|j| 0.5 * (1.0 - (TAU * j as f64 / n as f64).cos()))
                .collect(),
        }
    }
}

/// One refined spectral peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// Bin index (1-based: bin `k` sits at `k * bin_width`).
    pub bin: usize,
    pub w: f64,
    pub magnitude: f64,
    pub phase: f64,
}

impl Peak {
    /// Cosine/sine coefficients with `a cos(w t) + b sin(w t) = magnitude cos(w t + phase)`.
    pub fn coefficients(&self) -> (f64, f64) {
        (
            self.magnitude * self.phase.cos(),
            -self.magnitude * self.phase.sin(),
        )
    }
}

/// Single-sided amplitude spectrum of a trace.
///
/// `magnitudes[k - 1]` and `phases[k - 1]` describe bin `k` at angular
/// frequency `k * bin_width`, for `k = 1..=n/2`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub bin_width: f64,
    pub magnitudes: Vec<f64>,
    pub phases: Vec<f64>,
    bins: Vec<Complex64>,
    windowed: Vec<f64>,
    window: Window,
    window_sum: f64,
    t0: f64,
    h: f64,
}

impl Spectrum {
    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_width
    }

    /// Local-maximum bins above the floor, strongest first.
    pub fn local_maxima(&self) -> Vec<usize> {
        let mags = &self.magnitudes;
        let max = mags.iter().copied().fold(0.0, f64::max);
        if max <= 0.0 {
            return Vec::new();
        }
        let floor = PEAK_FLOOR * max;
        let at = |i: isize| -> f64 {
            if i < 0 || i as usize >= mags.len() {
                0.0
            } else {
                mags[i as usize]
            }
        };
        let mut peaks: Vec<usize> = (0..mags.len())
            .filter(|&i| {
                let m = mags[i];
                m > floor && m > at(i as isize - 1) && m >= at(i as isize + 1)
            })
            .map(|i| i + 1)
            .collect();
        peaks.sort_by(|&x, &y| mags[y - 1].total_cmp(&mags[x - 1]).then(x.cmp(&y)));
        peaks
    }

    /// Refines bin `k` to a sub-bin frequency and reads amplitude and phase
    /// from the windowed transform at that frequency.
    pub fn refine(&self, bin: usize) -> Peak {
        let n = self.bins.len();
        let offset = if bin >= 1 && bin + 1 < n {
            let (lo, mid, hi) = (self.bins[bin - 1], self.bins[bin], self.bins[bin + 1]);
            match self.window {
                Window::Hann => {
                    // adjacent-bin ratio r = (1 + δ)/(2 − δ) of the Hann kernel
                    let (a, b, c) = (lo.norm(), mid.norm(), hi.norm());
                    if b == 0.0 {
                        0.0
                    } else if c >= a {
                        let r = c / b;
                        (2.0 * r - 1.0) / (1.0 + r)
                    } else {
                        let r = a / b;
                        -(2.0 * r - 1.0) / (1.0 + r)
                    }
                }
                Window::Rect => {
                    // Jacobsen's complex three-point estimator.
                    let denom = mid * 2.0 - lo - hi;
                    if denom.norm() > 0.0 {
                        ((lo - hi) / denom).re
                    } else {
                        0.0
                    }
                }
            }
        } else {
            0.0
        };
        let offset = if offset.is_finite() {
            offset.clamp(-0.5, 0.5)
        } else {
            0.0
        };
        let w = (bin as f64 + offset) * self.bin_width;
        let (magnitude, phase) = self.tone_at(w);
        Peak {
            bin,
            w,
            magnitude,
            phase,
        }
    }

    /// Amplitude and absolute-time phase of a tone at `w`.
    fn tone_at(&self, w: f64) -> (f64, f64) {
        let dphi = w * self.h;
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, x) in self.windowed.iter().enumerate() {
            acc += Complex64::from_polar(*x, -dphi * j as f64);
        }
        let z = acc * (2.0 / self.window_sum) * Complex64::from_polar(1.0, -w * self.t0);
        (z.norm(), z.arg())
    }
}

/// Windowed DFT magnitudes of the mean-removed samples.
///
/// A pure tone of amplitude `A` sitting on a bin yields magnitude `A` there.
pub fn spectrum(trace: &Trace, window: Window) -> Result<Spectrum> {
    let n = trace.len();
    if n < MIN_SPECTRUM_LEN {
        return Err(Error::param(
            "n",
            format!("spectrum needs at least {MIN_SPECTRUM_LEN} samples, got {n}"),
        ));
    }
    let mean = trace.samples.iter().sum::<f64>() / n as f64;
    let coeffs = window.coefficients(n);
    let window_sum: f64 = coeffs.iter().sum();
    let windowed: Vec<f64> = trace
        .samples
        .iter()
        .zip(&coeffs)
        .map(|(x, c)| (x - mean) * c)
        .collect();
    let mut bins: Vec<Complex64> = windowed.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut bins);

    let bin_width = TAU / (n as f64 * trace.h);
    let half = n / 2;
    let mut magnitudes = Vec::with_capacity(half);
    let mut phases = Vec::with_capacity(half);
    for (k, x) in bins.iter().enumerate().take(half + 1).skip(1) {
        let z =
            x * (2.0 / window_sum) * Complex64::from_polar(1.0, -(k as f64 * bin_width) * trace.t0);
        magnitudes.push(z.norm());
        phases.push(if z.norm() > 0.0 { z.arg() } else { 0.0 });
    }
    Ok(Spectrum {
        bin_width,
        magnitudes,
        phases,
        bins,
        windowed,
        window,
        window_sum,
        t0: trace.t0,
        h: trace.h,
    })
}

/// Recovers up to `m` harmonics of the drift from a trace.
///
/// For [`TraceKind::Error`] the trace is differenced first and each
/// recovered coefficient is corrected for the central-difference gain
/// `sin(w h) / (w h)`.
pub fn identify(trace: &Trace, kind: TraceKind, m: usize, window: Window) -> Result<HarmonicModel> {
    if m == 0 {
        return Err(Error::param("m", "must be >= 1"));
    }
    let (drift, h) = match kind {
        TraceKind::Drift => (trace.clone(), trace.h),
        TraceKind::Error => {
            if trace.len() < MIN_ERROR_TRACE_LEN {
                return Err(Error::param(
                    "n",
                    format!(
                        "error traces need at least {MIN_ERROR_TRACE_LEN} samples, got {}",
                        trace.len()
                    ),
                ));
            }
            (trace.central_difference()?, trace.h)
        }
    };
    let spec = spectrum(&drift, window)?;
    let candidates = spec.local_maxima();
    if candidates.is_empty() {
        return Err(Error::NoPeaks);
    }
    let mut picked: Vec<usize> = Vec::with_capacity(m);
    for k in candidates {
        if picked.len() == m {
            break;
        }
        if picked.iter().all(|&p| p.abs_diff(k) >= 2) {
            picked.push(k);
        }
    }
    let harmonics = picked
        .into_iter()
        .map(|k| {
            let peak = spec.refine(k);
            let (mut a, mut b) = peak.coefficients();
            if kind == TraceKind::Error {
                let x = peak.w * h;
                let gain = if x.abs() < PI { x.sin() / x } else { 1.0 };
                a /= gain;
                b /= gain;
            }
            Harmonic::new(a, b, peak.w)
        })
        .collect::<Result<Vec<_>>>()?;
    HarmonicModel::new(harmonics, 1.0)
}

/// Writes the single-sided spectrum as CSV `w,magnitude,phase`.
pub fn write_spectrum_csv<W: Write>(spec: &Spectrum, mut w: W) -> Result<()> {
    writeln!(w, "w,magnitude,phase")?;
    for (i, (m, p)) in spec.magnitudes.iter().zip(&spec.phases).enumerate() {
        writeln!(
            w,
            "{},{},{}",
            fmt_num(spec.frequency(i + 1)),
            fmt_num(*m),
            fmt_num(*p)
        )?;
    }
    Ok(())
}
