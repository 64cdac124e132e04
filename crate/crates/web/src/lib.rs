//! Browser bindings: three curves of the reference model, computed in
//! wasm and drawn by `www/index.html`.

use errctl_core::feedback_control::FeedbackParams;
use errctl_core::harmonic_model::FIG1_E0;
use errctl_core::{
    integrate, solve_feedback, solve_program, spectrum, synth_trace, HarmonicModel, Law, Mode,
    SimConfig, SynthParams, Window,
};
use wasm_bindgen::prelude::*;

/// Paired samples `(x, y)` for plotting.
#[wasm_bindgen]
#[derive(Debug, Clone, Default)]
pub struct Curve {
    xs: Vec<f64>,
    ys: Vec<f64>,
    note: String,
}

#[wasm_bindgen]
impl Curve {
    #[wasm_bindgen(getter)]
    pub fn xs(&self) -> Vec<f64> {
        self.xs.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn ys(&self) -> Vec<f64> {
        self.ys.clone()
    }

    /// One-line summary (e.g. the solved constant).
    #[wasm_bindgen(getter)]
    pub fn note(&self) -> String {
        self.note.clone()
    }
}

fn to_js(e: errctl_core::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Feedback control `u(t) = K(t)/2` of the reference model on `[0, t1]`.
pub fn feedback_curve(e0: f64, t1: f64) -> errctl_core::Result<Curve> {
    let law = solve_feedback(
        &HarmonicModel::figure1(),
        e0,
        0.0,
        t1,
        &FeedbackParams::default(),
    )?
    .resampled(0.02)?;
    Ok(Curve {
        xs: law.times().to_vec(),
        ys: law.slopes().iter().map(|k| k / 2.0).collect(),
        note: format!("K(t0) = {:.6}, E(t1) = {:.6}", law.k0(), law.e_end()),
    })
}

/// Error trajectory `E(t)` under the open-loop program law, by RK4.
pub fn program_curve(e0: f64, t1: f64, mode: &str) -> errctl_core::Result<Curve> {
    let mode: Mode = mode.parse()?;
    let m = HarmonicModel::figure1();
    let law = solve_program(&m, e0, 0.0, t1, mode)?;
    let traj = integrate(
        &m,
        &Law::Program(law),
        e0,
        0.0,
        &SimConfig::horizon(t1 / 500.0, t1),
    )?;
    Ok(Curve {
        xs: traj.times(),
        ys: traj.errors(),
        note: format!("C = {:.6}", law.c),
    })
}

/// Hann-windowed amplitude spectrum of a noisy drift trace, up to `w_max`.
pub fn spectrum_curve(noise_sd: f64, seed: u64, w_max: f64) -> errctl_core::Result<Curve> {
    let p = SynthParams {
        h: 0.05,
        n: 4096,
        noise_sd,
        seed,
        ..Default::default()
    };
    let spec = spectrum(&synth_trace(&HarmonicModel::figure1(), &p)?, Window::Hann)?;
    let keep = spec
        .magnitudes
        .iter()
        .enumerate()
        .take_while(|(k, _)| spec.frequency(*k) <= w_max)
        .count();
    Ok(Curve {
        xs: (0..keep).map(|k| spec.frequency(k)).collect(),
        ys: spec.magnitudes[..keep].to_vec(),
        note: format!("bin width {:.5} rad", spec.bin_width),
    })
}

#[wasm_bindgen(js_name = feedbackCurve)]
pub fn feedback_curve_js(e0: f64, t1: f64) -> Result<Curve, JsValue> {
    feedback_curve(e0, t1).map_err(to_js)
}

#[wasm_bindgen(js_name = programCurve)]
pub fn program_curve_js(e0: f64, t1: f64, mode: &str) -> Result<Curve, JsValue> {
    program_curve(e0, t1, mode).map_err(to_js)
}

#[wasm_bindgen(js_name = spectrumCurve)]
pub fn spectrum_curve_js(noise_sd: f64, seed: u32, w_max: f64) -> Result<Curve, JsValue> {
    spectrum_curve(noise_sd, u64::from(seed), w_max).map_err(to_js)
}

#[wasm_bindgen(js_name = referenceE0)]
pub fn reference_e0() -> f64 {
    FIG1_E0
}
