//! Harmonic drift term of the error dynamics.
//!
//! The uncontrolled error rate is modelled as a finite sum of harmonics
//!
//! ```text
//! f(t) = scale * Σ (a_i cos(w_i t) + b_i sin(w_i t))
//! ```
//!
//! and everything downstream (program control, feedback control, the
//! simulator) consumes a [`HarmonicModel`] through [`HarmonicModel::drift`]
//! and its exact definite integral [`HarmonicModel::drift_integral`].

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{round_sig, SIG_DIGITS};
use crate::spectral_id::Trace;

/// Angular frequencies of the reference seven-harmonic error model.
pub const FIG1_FREQUENCIES: [f64; 7] = [0.07, 1.05, 1.48, 1.7, 2.25, 2.60, 3.25];
/// Relative amplitudes of the reference model, paired with [`FIG1_FREQUENCIES`].
pub const FIG1_AMPLITUDES: [f64; 7] = [0.223607, 0.3, 0.3, 0.4472, 0.4472, 0.547, 0.387];
/// Initial error of the reference run, as a fraction of the maximal error range.
pub const FIG1_E0: f64 = 0.8777255;

/// One harmonic `a cos(w t) + b sin(w t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub a: f64,
    pub b: f64,
    pub w: f64,
}

impl Harmonic {
    pub fn new(a: f64, b: f64, w: f64) -> Result<Self> {
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::param(
                "w",
                format!("must be finite and > 0, got {w}"),
            ));
        }
        if !a.is_finite() {
            return Err(Error::param("a", format!("must be finite, got {a}")));
        }
        if !b.is_finite() {
            return Err(Error::param("b", format!("must be finite, got {b}")));
        }
        Ok(Harmonic { a, b, w })
    }

    /// Amplitude `sqrt(a² + b²)`.
    pub fn magnitude(&self) -> f64 {
        self.a.hypot(self.b)
    }

    #[inline]
    fn eval(&self, t: f64) -> f64 {
        let (s, c) = (self.w * t).sin_cos();
        self.a * c + self.b * s
    }

    /// Antiderivative `(a/w) sin(w t) − (b/w) cos(w t)`.
    #[inline]
    fn primitive(&self, t: f64) -> f64 {
        let (s, c) = (self.w * t).sin_cos();
        (self.a * s - self.b * c) / self.w
    }
}

/// Ordered set of harmonics with a common amplitude scale.
///
/// Harmonics are kept ascending by `w`; the sort is stable so duplicate
/// frequencies keep their insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicModel {
    harmonics: Vec<Harmonic>,
    scale: f64,
}

impl Default for HarmonicModel {
    fn default() -> Self {
        HarmonicModel {
            harmonics: Vec::new(),
            scale: 1.0,
        }
    }
}

impl HarmonicModel {
    pub fn new(harmonics: Vec<Harmonic>, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::param(
                "scale",
                format!("must be finite and > 0, got {scale}"),
            ));
        }
        let mut harmonics = harmonics
            .into_iter()
            .map(|h| Harmonic::new(h.a, h.b, h.w))
            .collect::<Result<Vec<_>>>()?;
        harmonics.sort_by(|x, y| x.w.total_cmp(&y.w));
        Ok(HarmonicModel { harmonics, scale })
    }

    /// Model without any harmonic: `f ≡ 0`.
    pub fn empty() -> Self {
        Self::default()
    }

    /// Single-harmonic model with unit scale.
    pub fn single(a: f64, b: f64, w: f64) -> Result<Self> {
        Self::new(vec![Harmonic::new(a, b, w)?], 1.0)
    }

    /// The seven-harmonic reference model with zero sine phases.
    pub fn figure1() -> Self {
        let harmonics = FIG1_FREQUENCIES
            .iter()
            .zip(FIG1_AMPLITUDES)
            .map(|(&w, a)| Harmonic { a, b: 0.0, w })
            .collect();
        HarmonicModel {
            harmonics,
            scale: 1.0,
        }
    }

    pub fn harmonics(&self) -> &[Harmonic] {
        &self.harmonics
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.harmonics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.harmonics.is_empty()
    }

    /// Union of the harmonics of both models. Differing scales are folded
    /// into the coefficients.
    pub fn concat(&self, other: &HarmonicModel) -> HarmonicModel {
        if self.scale == other.scale {
            let mut hs = self.harmonics.clone();
            hs.extend_from_slice(&other.harmonics);
            hs.sort_by(|x, y| x.w.total_cmp(&y.w));
            return HarmonicModel {
                harmonics: hs,
                scale: self.scale,
            };
        }
        fn fold(m: &HarmonicModel) -> impl Iterator<Item = Harmonic> + '_ {
            m.harmonics.iter().map(move |h| Harmonic {
                a: h.a * m.scale,
                b: h.b * m.scale,
                w: h.w,
            })
        }
        let mut hs: Vec<Harmonic> = fold(self).chain(fold(other)).collect();
        hs.sort_by(|x, y| x.w.total_cmp(&y.w));
        HarmonicModel {
            harmonics: hs,
            scale: 1.0,
        }
    }

    /// The first `m` harmonics in canonical order.
    pub fn truncated(&self, m: usize) -> HarmonicModel {
        HarmonicModel {
            harmonics: self.harmonics.iter().take(m).copied().collect(),
            scale: self.scale,
        }
    }

    /// Drift `f(t)`.
    pub fn drift(&self, t: f64) -> f64 {
        self.scale * self.harmonics.iter().map(|h| h.eval(t)).sum::<f64>()
    }

    /// Exact `∫_{t0}^{t} f(s) ds`.
    pub fn drift_integral(&self, t0: f64, t: f64) -> f64 {
        if t == t0 {
            return 0.0;
        }
        self.scale
            * self
                .harmonics
                .iter()
                .map(|h| h.primitive(t) - h.primitive(t0))
                .sum::<f64>()
    }

    /// Antiderivative `Σ (a/w) sin(w t) − (b/w) cos(w t)`, scaled; the
    /// harmonic part of the closed-form program trajectory.
    pub fn drift_primitive(&self, t: f64) -> f64 {
        self.scale * self.harmonics.iter().map(|h| h.primitive(t)).sum::<f64>()
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let file: ModelFile = serde_json::from_reader(reader)?;
        HarmonicModel::new(file.harmonics, file.scale)
    }

    pub fn write_json<W: Write>(&self, mut writer: W) -> Result<()> {
        let r = |x: f64| round_sig(x, SIG_DIGITS);
        let file = ModelFile {
            scale: r(self.scale),
            harmonics: self
                .harmonics
                .iter()
                .map(|h| Harmonic {
                    a: r(h.a),
                    b: r(h.b),
                    w: r(h.w),
                })
                .collect(),
        };
        serde_json::to_writer_pretty(&mut writer, &file)?;
        writeln!(writer)?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    #[serde(default = "unit_scale")]
    scale: f64,
    harmonics: Vec<Harmonic>,
}

fn unit_scale() -> f64 {
    1.0
}

/// What a synthetic trace samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    /// The drift `f(t)` itself.
    Drift,
    /// The uncontrolled error `E0 + ∫ f`.
    Error,
}

/// Sampling parameters for [`synth_trace`].
#[derive(Debug, Clone, Copy)]
pub struct SynthParams {
    pub kind: TraceKind,
    pub e0: f64,
    pub t0: f64,
    pub h: f64,
    pub n: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            kind: TraceKind::Drift,
            e0: 0.0,
            t0: 0.0,
            h: 0.05,
            n: 1024,
            noise_sd: 0.0,
            seed: 0,
        }
    }
}

/// Samples the model on `t0 + k h`, optionally with seeded Gaussian noise.
pub fn synth_trace(model: &HarmonicModel, p: &SynthParams) -> Result<Trace> {
    if !(p.h.is_finite() && p.h > 0.0) {
        return Err(Error::param("h", format!("must be > 0, got {}", p.h)));
    }
    if p.n < 2 {
        return Err(Error::param("n", format!("must be >= 2, got {}", p.n)));
    }
    if !(p.noise_sd.is_finite() && p.noise_sd >= 0.0) {
        return Err(Error::param(
            "noise_sd",
            format!("must be >= 0, got {}", p.noise_sd),
        ));
    }
    let mut samples: Vec<f64> = (0..p.n)
        .map(|k| {
            let t = p.t0 + k as f64 * p.h;
            match p.kind {
                TraceKind::Drift => model.drift(t),
                TraceKind::Error => p.e0 + model.drift_integral(p.t0, t),
            }
        })
        .collect();
    if p.noise_sd > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let normal = Normal::new(0.0, p.noise_sd).map_err(|e| Error::param("noise_sd", e))?;
        for s in &mut samples {
            *s += normal.sample(&mut rng);
        }
    }
    Trace::new(p.t0, p.h, samples)
}
