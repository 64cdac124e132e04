//! `errctl`: file-to-file runs of identification, control synthesis,
//! simulation, cost evaluation and scheduling.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod svg;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use errctl_core::feedback_control::{
    integrate_forward, DEFAULT_EXPORT_STEP, DEFAULT_MAX_ITER, DEFAULT_SHOOT_TOL, DEFAULT_STEP,
};
use errctl_core::format::fmt_num;
use errctl_core::harmonic_model::FIG1_E0;
use errctl_core::ode_sim::{Arm, Law, SimConfig, Trajectory};
use errctl_core::scheduler::{self, Criterion};
use errctl_core::spectral_id::{write_spectrum_csv, DEFAULT_HARMONICS};
use errctl_core::{
    cost_functional, identify, integrate, solve_feedback, solve_program, spectrum, synth_trace,
    Error, ErrorClass, FeedbackLaw, FeedbackParams, HarmonicModel, Mode, ProgramLaw, SynthParams,
    Trace, TraceKind, Window,
};

#[derive(Parser, Debug)]
#[command(
    name = "errctl",
    version,
    about = "Optimal control of harmonic error dynamics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a model into a `t,e` trace
    SynthTrace(SynthTraceArgs),
    /// Single-sided amplitude spectrum of a trace
    Spectrum(SpectrumArgs),
    /// Fit a harmonic model to a trace
    Identify(IdentifyArgs),
    /// Open-loop control from the costate construction
    SynthProgram(SynthProgramArgs),
    /// Feedback control by shooting on the value-function slope
    SynthFeedback(SynthFeedbackArgs),
    /// RK4 simulation of a model under a control law
    Simulate(SimulateArgs),
    /// Evaluate ∫u² dt + E(t1) on a trajectory
    Cost(CostArgs),
    /// Order jobs and report the penalty
    Schedule(ScheduleArgs),
    /// Feedback control curve of the seven-harmonic reference model
    Figure1(Figure1Args),
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum KindArg {
    Drift,
    Error,
}

impl From<KindArg> for TraceKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Drift => TraceKind::Drift,
            KindArg::Error => TraceKind::Error,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum WindowArg {
    Rect,
    Hann,
}

impl From<WindowArg> for Window {
    fn from(w: WindowArg) -> Self {
        match w {
            WindowArg::Rect => Window::Rect,
            WindowArg::Hann => Window::Hann,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
enum ModeArg {
    #[value(name = "paper-h0")]
    #[serde(rename = "paper-h0")]
    PaperH0,
    #[value(name = "paper-psi1")]
    #[serde(rename = "paper-psi1")]
    PaperPsi1,
    #[value(name = "stationary")]
    #[serde(rename = "stationary")]
    Stationary,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::PaperH0 => Mode::PaperH0,
            ModeArg::PaperPsi1 => Mode::PaperPsi1,
            ModeArg::Stationary => Mode::Stationary,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum ArmArg {
    Immediate,
    Upward,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
enum CriterionArg {
    #[value(name = "sum")]
    #[serde(rename = "sum")]
    Sum,
    #[value(name = "due_sum")]
    #[serde(rename = "due_sum")]
    DueSum,
    #[value(name = "due_max")]
    #[serde(rename = "due_max")]
    DueMax,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Sum => Criterion::Sum,
            CriterionArg::DueSum => Criterion::DueSum,
            CriterionArg::DueMax => Criterion::DueMax,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum MethodArg {
    Wspt,
    Bellman,
    Brute,
}

#[derive(Args, Debug, Serialize)]
struct SynthTraceArgs {
    /// Model file (JSON)
    #[arg(long)]
    model: PathBuf,
    /// Sample the drift or the uncontrolled error
    #[arg(long, value_enum, default_value = "drift")]
    kind: KindArg,
    /// Initial error for `--kind error`
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    e0: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    t0: f64,
    /// Sampling step
    #[arg(long, default_value_t = 0.05)]
    h: f64,
    /// Number of samples
    #[arg(long, default_value_t = 16384)]
    n: usize,
    /// Standard deviation of additive Gaussian noise
    #[arg(long, default_value_t = 0.0)]
    noise_sd: f64,
    /// Noise generator seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output trace (CSV `t,e`)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SpectrumArgs {
    /// Input trace (CSV `t,e`)
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, value_enum, default_value = "hann")]
    window: WindowArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output spectrum (CSV `w,magnitude,phase`)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct IdentifyArgs {
    /// Input trace (CSV `t,e`)
    #[arg(long)]
    trace: PathBuf,
    /// Whether the trace holds the drift or the error itself
    #[arg(long, value_enum, default_value = "drift")]
    kind: KindArg,
    /// Number of harmonics to recover
    #[arg(long, default_value_t = DEFAULT_HARMONICS)]
    m: usize,
    #[arg(long, value_enum, default_value = "hann")]
    window: WindowArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output model (JSON)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SynthProgramArgs {
    /// Model file (JSON)
    #[arg(long)]
    model: PathBuf,
    /// Initial error E(t0)
    #[arg(long, allow_hyphen_values = true)]
    e0: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    t0: f64,
    /// Final control time
    #[arg(long, allow_hyphen_values = true)]
    t1: f64,
    #[arg(long, value_enum, default_value = "paper-h0")]
    mode: ModeArg,
    /// Also write the sampled control as CSV `t,u`
    #[arg(long)]
    control_csv: Option<PathBuf>,
    /// Grid step of the sampled control
    #[arg(long, default_value_t = 0.01)]
    export_h: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output law (JSON)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SynthFeedbackArgs {
    /// Model file (JSON)
    #[arg(long)]
    model: PathBuf,
    /// Initial error E(t0), non-zero
    #[arg(long, allow_hyphen_values = true)]
    e0: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    t0: f64,
    /// Final control time
    #[arg(long, allow_hyphen_values = true)]
    t1: f64,
    /// RK4 synthesis step
    #[arg(long, default_value_t = DEFAULT_STEP)]
    h: f64,
    /// Required |K(t1) − 1|
    #[arg(long, default_value_t = DEFAULT_SHOOT_TOL)]
    shoot_tol: f64,
    /// Secant iteration limit
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Integrate forward from this K(t0) instead of shooting
    #[arg(long, allow_hyphen_values = true)]
    k0: Option<f64>,
    /// Grid step of the exported law
    #[arg(long, default_value_t = DEFAULT_EXPORT_STEP)]
    export_h: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output law (CSV `t,K,E,u`)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    /// Model file (JSON)
    #[arg(long)]
    model: PathBuf,
    /// Program law (JSON) or feedback law (CSV); zero control when omitted
    #[arg(long, conflicts_with = "constant_u")]
    law: Option<PathBuf>,
    /// Constant control value
    #[arg(long, allow_hyphen_values = true)]
    constant_u: Option<f64>,
    /// Initial error; defaults to the law's own
    #[arg(long, allow_hyphen_values = true)]
    e0: Option<f64>,
    /// Start time; defaults to the law's own
    #[arg(long, allow_hyphen_values = true)]
    t0: Option<f64>,
    /// RK4 step
    #[arg(long, default_value_t = 0.01)]
    h: f64,
    /// Horizon end; defaults to the law's t1
    #[arg(long, allow_hyphen_values = true)]
    t_max: Option<f64>,
    /// Stop threshold Δ (disabled when omitted)
    #[arg(long)]
    delta: Option<f64>,
    /// When the control activates
    #[arg(long, value_enum, default_value = "immediate")]
    arm: ArmArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output trajectory (CSV `t,e,u`)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct CostArgs {
    /// Trajectory (CSV `t,e,u`)
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the value to a file
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ScheduleArgs {
    /// Jobs (CSV `id,T,a[,D]`)
    #[arg(long)]
    jobs: PathBuf,
    #[arg(long, value_enum, default_value = "sum")]
    criterion: CriterionArg,
    #[arg(long, value_enum, default_value = "wspt")]
    method: MethodArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output schedule; printed to stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct Figure1Args {
    /// Horizon end
    #[arg(long, default_value_t = 20.0)]
    t1: f64,
    /// RK4 synthesis step
    #[arg(long, default_value_t = DEFAULT_STEP)]
    h: f64,
    /// Grid step of the exported curve
    #[arg(long, default_value_t = DEFAULT_EXPORT_STEP)]
    export_h: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// SVG plot path; defaults to the CSV path with an `.svg` extension
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Output control curve (CSV `t,u`)
    #[arg(long)]
    out: PathBuf,
}

/// A failed run: exit class plus a message naming the cause.
struct Failure {
    class: ErrorClass,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            class: e.class(),
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure {
        class: ErrorClass::Io,
        message: format!("Io: {}: {e}", path.display()),
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        class: ErrorClass::Usage,
        message: message.into(),
    }
}

type CliResult<T> = Result<T, Failure>;

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| io_failure(path, e))
}

/// Wraps a core reader so format errors carry the offending path.
fn read_with<T>(
    path: &Path,
    f: impl FnOnce(BufReader<File>) -> errctl_core::Result<T>,
) -> CliResult<T> {
    f(open(path)?).map_err(|e| match e.class() {
        ErrorClass::Io => io_failure(path, e),
        _ => e.into(),
    })
}

fn write_with(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> errctl_core::Result<()>,
) -> CliResult<()> {
    let file = File::create(path).map_err(|e| io_failure(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(|e| io_failure(path, e))?;
    w.flush().map_err(|e| io_failure(path, e))
}

#[derive(Serialize)]
struct RunManifest<'a, P: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    parameters: &'a P,
    inputs: Vec<String>,
    outputs: Vec<String>,
    seed: u64,
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn write_manifest<P: Serialize>(
    command: &'static str,
    params: &P,
    seed: u64,
    inputs: &[&Path],
    outputs: &[&Path],
) -> CliResult<()> {
    let Some(primary) = outputs.first() else {
        return Ok(());
    };
    let manifest = RunManifest {
        tool: "errctl",
        version: env!("CARGO_PKG_VERSION"),
        command,
        parameters: params,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        seed,
    };
    let path = manifest_path(primary);
    write_with(&path, |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest)?;
        writeln!(w)?;
        Ok(())
    })
}

fn synth_trace_cmd(a: &SynthTraceArgs) -> CliResult<()> {
    let model = read_with(&a.model, HarmonicModel::read_json)?;
    let params = SynthParams {
        kind: a.kind.into(),
        e0: a.e0,
        t0: a.t0,
        h: a.h,
        n: a.n,
        noise_sd: a.noise_sd,
        seed: a.seed,
    };
    let trace = synth_trace(&model, &params)?;
    write_with(&a.out, |w| trace.write_csv(w))?;
    write_manifest("synth-trace", a, a.seed, &[&a.model], &[&a.out])
}

fn spectrum_cmd(a: &SpectrumArgs) -> CliResult<()> {
    let trace = read_with(&a.trace, Trace::read_csv)?;
    let spec = spectrum(&trace, a.window.into())?;
    write_with(&a.out, |w| write_spectrum_csv(&spec, w))?;
    write_manifest("spectrum", a, a.seed, &[&a.trace], &[&a.out])
}

fn identify_cmd(a: &IdentifyArgs) -> CliResult<()> {
    let trace = read_with(&a.trace, Trace::read_csv)?;
    let model = identify(&trace, a.kind.into(), a.m, a.window.into())?;
    write_with(&a.out, |w| model.write_json(w))?;
    write_manifest("identify", a, a.seed, &[&a.trace], &[&a.out])
}

fn synth_program_cmd(a: &SynthProgramArgs) -> CliResult<()> {
    let model = read_with(&a.model, HarmonicModel::read_json)?;
    let law = solve_program(&model, a.e0, a.t0, a.t1, a.mode.into())?;
    write_with(&a.out, |w| law.write_json(w))?;
    let mut outputs: Vec<&Path> = vec![&a.out];
    if let Some(csv) = &a.control_csv {
        write_with(csv, |w| law.write_control_csv(a.export_h, w))?;
        outputs.push(csv);
    }
    write_manifest("synth-program", a, a.seed, &[&a.model], &outputs)
}

fn synth_feedback_cmd(a: &SynthFeedbackArgs) -> CliResult<()> {
    let model = read_with(&a.model, HarmonicModel::read_json)?;
    let law = match a.k0 {
        Some(k0) => integrate_forward(&model, a.e0, k0, a.t0, a.t1, a.h)?,
        None => {
            let params = FeedbackParams {
                h: a.h,
                shoot_tol: a.shoot_tol,
                max_iter: a.max_iter,
            };
            solve_feedback(&model, a.e0, a.t0, a.t1, &params)?
        }
    };
    let export = law.resampled(a.export_h)?;
    write_with(&a.out, |w| export.write_csv(w))?;
    write_manifest("synth-feedback", a, a.seed, &[&a.model], &[&a.out])
}

/// Loads a program law (JSON) or feedback law (CSV) by content.
fn load_law(path: &Path) -> CliResult<Law> {
    let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let parsed = if text.trim_start().starts_with('{') {
        ProgramLaw::read_json(text.as_bytes()).map(Law::Program)
    } else {
        FeedbackLaw::read_csv(text.as_bytes()).map(Law::Feedback)
    };
    parsed.map_err(|e| match e.class() {
        ErrorClass::Io => io_failure(path, e),
        _ => e.into(),
    })
}

fn simulate_cmd(a: &SimulateArgs) -> CliResult<()> {
    let model = read_with(&a.model, HarmonicModel::read_json)?;
    let law = match (&a.law, a.constant_u) {
        (Some(p), _) => load_law(p)?,
        (None, Some(u)) => Law::Constant(u),
        (None, None) => Law::Zero,
    };
    // (t0, t1, E0) carried by the law itself
    let own = match &law {
        Law::Program(p) => Some((p.t0, p.t1, p.e0)),
        Law::Feedback(f) => Some((f.t0(), f.t1(), f.errors()[0])),
        Law::Zero | Law::Constant(_) => None,
    };
    let t0 = a.t0.or(own.map(|o| o.0)).unwrap_or(0.0);
    let t_max = a
        .t_max
        .or(own.map(|o| o.1))
        .ok_or_else(|| usage("InvalidParameter: t_max is required without a law file"))?;
    let e0 =
        a.e0.or(own.map(|o| o.2))
            .ok_or_else(|| usage("InvalidParameter: e0 is required without a law file"))?;
    let cfg = SimConfig {
        h: a.h,
        t_max,
        delta: a.delta.unwrap_or(f64::NEG_INFINITY),
        arm: match a.arm {
            ArmArg::Immediate => Arm::Immediate,
            ArmArg::Upward => Arm::OnUpwardCrossing,
        },
    };
    if a.delta.is_none() && cfg.arm == Arm::OnUpwardCrossing {
        return Err(usage("InvalidParameter: --arm upward needs --delta"));
    }
    let traj = integrate(&model, &law, e0, t0, &cfg)?;
    write_with(&a.out, |w| traj.write_csv(w))?;
    let mut inputs: Vec<&Path> = vec![&a.model];
    if let Some(p) = &a.law {
        inputs.push(p);
    }
    write_manifest("simulate", a, a.seed, &inputs, &[&a.out])
}

fn cost_cmd(a: &CostArgs) -> CliResult<()> {
    let traj = read_with(&a.trajectory, Trajectory::read_csv)?;
    let line = format!("I,{}", fmt_num(cost_functional(&traj)));
    println!("{line}");
    if let Some(out) = &a.out {
        write_with(out, |w| Ok(writeln!(w, "{line}")?))?;
        write_manifest("cost", a, a.seed, &[&a.trajectory], &[out])?;
    }
    Ok(())
}

fn schedule_cmd(a: &ScheduleArgs) -> CliResult<()> {
    let jobs = read_with(&a.jobs, scheduler::read_jobs_csv)?;
    let criterion: Criterion = a.criterion.into();
    let schedule = match a.method {
        MethodArg::Wspt => {
            let order = scheduler::wspt_order(&jobs).order;
            scheduler::Schedule::evaluate(&jobs, &order, criterion)?
        }
        MethodArg::Bellman => scheduler::bellman_schedule_with(&jobs, criterion)?,
        MethodArg::Brute => scheduler::brute_force_schedule(&jobs, criterion)?,
    };
    match &a.out {
        Some(out) => {
            write_with(out, |w| schedule.write_csv(w))?;
            write_manifest("schedule", a, a.seed, &[&a.jobs], &[out])?;
        }
        None => {
            let mut buf = Vec::new();
            schedule.write_csv(&mut buf)?;
            std::io::stdout()
                .write_all(&buf)
                .map_err(|e| io_failure(Path::new("<stdout>"), e))?;
        }
    }
    Ok(())
}

fn figure1_cmd(a: &Figure1Args) -> CliResult<()> {
    let model = HarmonicModel::figure1();
    let params = FeedbackParams {
        h: a.h,
        ..FeedbackParams::default()
    };
    let law = solve_feedback(&model, FIG1_E0, 0.0, a.t1, &params)?.resampled(a.export_h)?;
    let svg_path = a.svg.clone().unwrap_or_else(|| a.out.with_extension("svg"));
    let u: Vec<f64> = law.slopes().iter().map(|k| 0.5 * k).collect();
    write_with(&a.out, |w| {
        writeln!(w, "t,u")?;
        for (t, u) in law.times().iter().zip(&u) {
            writeln!(w, "{},{}", fmt_num(*t), fmt_num(*u))?;
        }
        Ok(())
    })?;
    let plot = svg::line_plot(law.times(), &u, "Feedback control u(t) = K(t)/2", "t", "u");
    write_with(&svg_path, |w| Ok(w.write_all(plot.as_bytes())?))?;
    write_manifest("figure1", a, a.seed, &[], &[&a.out, &svg_path])
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::SynthTrace(a) => synth_trace_cmd(a),
        Command::Spectrum(a) => spectrum_cmd(a),
        Command::Identify(a) => identify_cmd(a),
        Command::SynthProgram(a) => synth_program_cmd(a),
        Command::SynthFeedback(a) => synth_feedback_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Cost(a) => cost_cmd(a),
        Command::Schedule(a) => schedule_cmd(a),
        Command::Figure1(a) => figure1_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(match f.class {
                ErrorClass::Usage => 1,
                ErrorClass::Numeric => 2,
                ErrorClass::Io => 3,
            })
        }
    }
}
