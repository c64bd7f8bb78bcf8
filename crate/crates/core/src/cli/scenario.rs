//! Scenario drivers behind the command line.

use std::fs;
use std::io;
use std::time::Instant;

use serde::Serialize;

use crate::dynamics::{
    dephasing_joint_asymptote, dephasing_joint_numeric, dephasing_single, dephasing_time, evolve, evolve_observed,
    fit_response, outcome::ResponseRun, QuadrantWeights, ResponseFit, Snapshot,
};
use crate::error::Error;
use crate::landscape::{
    classify_regime, critical_coupling_joint, critical_coupling_single, ferro_magnetization, locate_minima, Branch,
    CriticalCoupling, JointThreshold, Landscape1D, Landscape2D, RegimeReport, StationaryPoint,
};
use crate::model::{init_joint_field, ApparatusParams, BlochState};
use crate::povm::{
    estimate_bloch, outcome_probabilities, outcome_probabilities_trace, sample_outcomes, BlochEstimate,
    MeasurementModel,
};

use super::config::{ConfigError, RunConfig, Scenario};
use super::output::{write_json, CsvWriter};

#[derive(Debug)]
pub enum RunError {
    Config(String),
    Numerical(String),
    Io(io::Error),
}

impl RunError {
    /// 2 for configuration problems, 3 for numerical aborts, 1 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "config error: {m}"),
            RunError::Numerical(m) => write!(f, "numerical abort: {m}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::NumericalAbort { .. } => RunError::Numerical(e.to_string()),
            other => RunError::Config(other.to_string()),
        }
    }
}

impl From<io::Error> for RunError {
    fn from(e: io::Error) -> Self {
        RunError::Io(e)
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e.to_string())
    }
}

type RunResult<T> = std::result::Result<T, RunError>;

/// Runs the configured scenario, writing its artifacts into `cfg.out`.
///
/// With `timing` set, summaries record wall-clock `runtime_s`; otherwise it is null
/// and outputs are byte-identical across runs.
pub fn run(cfg: &RunConfig, timing: bool) -> RunResult<()> {
    fs::create_dir_all(&cfg.out)?;
    let start = Instant::now();
    let runtime = || timing.then(|| start.elapsed().as_secs_f64());
    match cfg.scenario {
        Scenario::Landscape => landscape(cfg),
        Scenario::Thresholds => thresholds(cfg),
        Scenario::Dephase => dephase(cfg),
        Scenario::Register => register(cfg, runtime),
        Scenario::Povm => povm(cfg),
        Scenario::Pipeline => pipeline(cfg, runtime),
    }
}

#[derive(Serialize)]
struct LandscapeSummary {
    m_f: f64,
    m_f_prime: f64,
    up_minima: Option<Vec<StationaryPoint>>,
    files: Vec<&'static str>,
}

fn write_1d(cfg: &RunConfig, a: &ApparatusParams, name: &str) -> RunResult<()> {
    let up = Landscape1D::new(a, Branch::Up)?;
    let down = Landscape1D::new(a, Branch::Down)?;
    let mut w = CsvWriter::create(&cfg.out.join(name), cfg, "m,F_up,F_down")?;
    for (k, &m) in up.grid.values().iter().enumerate() {
        w.row(&[m, up.f[k], down.f[k]])?;
    }
    Ok(w.finish()?)
}

fn landscape(cfg: &RunConfig) -> RunResult<()> {
    let (a, ap) = (&cfg.apparatus, &cfg.apparatus_prime);
    let mut files = vec!["landscape_1d.csv", "landscape_1d_prime.csv"];
    write_1d(cfg, a, files[0])?;
    write_1d(cfg, ap, files[1])?;
    let mut up_minima = None;
    if cfg.landscape.joint {
        let up = Landscape2D::new(a, ap, Branch::Up)?;
        let down = Landscape2D::new(a, ap, Branch::Down)?;
        let mut w = CsvWriter::create(&cfg.out.join("landscape_2d.csv"), cfg, "m,mp,F_up,F_down")?;
        for (i, &m) in up.grid.values().iter().enumerate() {
            for (j, &mp) in up.grid_p.values().iter().enumerate() {
                w.row(&[m, mp, up.at(i, j), down.at(i, j)])?;
            }
        }
        w.finish()?;
        files.push("landscape_2d.csv");
        up_minima = Some(locate_minima(&up));
    }
    files.push("landscape.json");
    let summary =
        LandscapeSummary { m_f: ferro_magnetization(a), m_f_prime: ferro_magnetization(ap), up_minima, files };
    Ok(write_json(&cfg.out.join("landscape.json"), cfg, &summary)?)
}

#[derive(Serialize)]
struct ThresholdSummary {
    #[serde(flatten)]
    report: RegimeReport,
    single: CriticalCoupling,
    single_prime: CriticalCoupling,
    joint: JointThreshold,
}

fn thresholds(cfg: &RunConfig) -> RunResult<()> {
    let (a, ap) = (&cfg.apparatus, &cfg.apparatus_prime);
    let summary = ThresholdSummary {
        report: classify_regime(a.g, ap.g, a, ap)?,
        single: critical_coupling_single(a)?,
        single_prime: critical_coupling_single(ap)?,
        joint: critical_coupling_joint(a, ap)?,
    };
    Ok(write_json(&cfg.out.join("thresholds.json"), cfg, &summary)?)
}

fn dephase(cfg: &RunConfig) -> RunResult<()> {
    let (a, ap, s) = (&cfg.apparatus, &cfg.apparatus_prime, &cfg.spin);
    if a.g == 0.0 {
        return Err(RunError::Config("dephase needs g > 0 on the first apparatus to define tau_d".into()));
    }
    let td = dephasing_time(a);
    let header =
        "t,t_over_tau_d,sx_single,sy_single,sz_single,sx_joint,sy_joint,sz_joint,sx_joint_limit,sz_joint_limit";
    let mut w = CsvWriter::create(&cfg.out.join("dephase.csv"), cfg, header)?;
    let limit = dephasing_joint_asymptote(s, a, ap);
    let n = cfg.dephase.points;
    for k in 0..n {
        let x = cfg.dephase.t_max * k as f64 / (n - 1) as f64;
        let t = x * td;
        let single = dephasing_single(t, s, a);
        let joint = dephasing_joint_numeric(t, s, a, ap)?;
        w.row(&[t, x, single.rx, single.ry, single.rz, joint.rx, joint.ry, joint.rz, limit.rx, limit.rz])?;
    }
    Ok(w.finish()?)
}

#[derive(Serialize)]
struct SnapshotRecord {
    t_tau: f64,
    t_model: f64,
    weights: QuadrantWeights,
    central_mass: f64,
    mass: f64,
}

impl SnapshotRecord {
    fn new(s: &Snapshot, tau: f64) -> Self {
        let d = &s.diagnostics;
        Self { t_tau: s.t, t_model: s.t * tau, weights: d.weights, central_mass: d.central_mass, mass: d.mass }
    }
}

#[derive(Serialize)]
struct RegisterSummary {
    status: &'static str,
    error: Option<String>,
    params: [ApparatusParams; 2],
    spin: BlochState,
    regime: Option<RegimeReport>,
    weights: Option<QuadrantWeights>,
    residual_center_mass: Option<f64>,
    lambda: Option<f64>,
    tau: f64,
    dt_tau: Option<f64>,
    steps: Option<usize>,
    clip_events: Option<usize>,
    nonstandard: Option<bool>,
    snapshots: Vec<SnapshotRecord>,
    runtime_s: Option<f64>,
}

fn register(cfg: &RunConfig, runtime: impl Fn() -> Option<f64>) -> RunResult<()> {
    let (a, ap) = (&cfg.apparatus, &cfg.apparatus_prime);
    let field = init_joint_field(&cfg.spin, a, ap)?;
    let tau = a.tau();
    let mut csv = CsvWriter::create(&cfg.out.join("snapshots.csv"), cfg, "t,m,mp,P,Cu")?;
    let mut records = Vec::new();
    let mut io_err = None;
    let result = evolve_observed(&field, a, ap, &cfg.solver, |s| {
        records.push(SnapshotRecord::new(s, tau));
        if io_err.is_some() {
            return;
        }
        let f = &s.field;
        for (i, &m) in f.grid.values().iter().enumerate() {
            for (j, &mp) in f.grid_p.values().iter().enumerate() {
                let k = f.idx(i, j);
                if let Err(e) = csv.row(&[s.t, m, mp, f.p[k], f.cu[k]]) {
                    io_err = Some(e);
                    return;
                }
            }
        }
    });
    if let Some(e) = io_err {
        return Err(e.into());
    }
    csv.finish()?;

    let mut summary = RegisterSummary {
        status: "ok",
        error: None,
        params: [*a, *ap],
        spin: cfg.spin,
        regime: classify_regime(a.g, ap.g, a, ap).ok(),
        weights: None,
        residual_center_mass: None,
        lambda: None,
        tau,
        dt_tau: None,
        steps: None,
        clip_events: None,
        nonstandard: None,
        snapshots: records,
        runtime_s: None,
    };
    let path = cfg.out.join("summary.json");
    match result {
        Ok(tr) => {
            let last = tr.last();
            summary.weights = Some(last.diagnostics.weights);
            summary.residual_center_mass = Some(last.diagnostics.central_mass);
            summary.dt_tau = Some(tr.dt);
            summary.steps = Some(tr.steps);
            summary.clip_events = Some(tr.clip_events);
            summary.nonstandard = Some(tr.nonstandard);
            summary.runtime_s = runtime();
            write_json(&path, cfg, &summary)?;
            Ok(())
        }
        Err(e) => {
            if let Some(last) = summary.snapshots.last() {
                summary.weights = Some(last.weights);
                summary.residual_center_mass = Some(last.central_mass);
            }
            summary.status = "aborted";
            summary.error = Some(e.to_string());
            summary.runtime_s = runtime();
            write_json(&path, cfg, &summary)?;
            Err(e.into())
        }
    }
}

#[derive(Serialize)]
struct ModelExport {
    u_f: [f64; 2],
    alpha_x: f64,
    alpha_z: f64,
    lambda: f64,
    lambda_prime: f64,
    effects_pauli: [[f64; 4]; 4],
    effect_order: [&'static str; 4],
}

impl ModelExport {
    fn new(m: &MeasurementModel) -> Self {
        Self {
            u_f: [m.u_f.0, m.u_f.1],
            alpha_x: m.alpha_x,
            alpha_z: m.alpha_z,
            lambda: m.lambda(),
            lambda_prime: m.lambda_prime(),
            effects_pauli: m.effects.map(|e| e.as_array()),
            effect_order: ["++", "+-", "-+", "--"],
        }
    }
}

#[derive(Serialize)]
struct Counts {
    seed: u64,
    n: u64,
    probabilities: [f64; 4],
    probabilities_trace: [f64; 4],
    counts: [u64; 4],
}

#[derive(Serialize)]
struct EstimateExport {
    truth: BlochState,
    estimate: BlochEstimate,
    z_rx: f64,
    z_rz: f64,
}

/// Writes model, counts and estimate for `spin` under `model`.
fn povm_artifacts(cfg: &RunConfig, model: &MeasurementModel) -> RunResult<EstimateExport> {
    let s = &cfg.spin;
    let p = outcome_probabilities(s, model)?;
    let counts = sample_outcomes(&p, cfg.povm.samples, cfg.seed)?;
    let estimate = estimate_bloch(&counts, model.lambda(), model.lambda_prime())?;
    write_json(&cfg.out.join("povm_model.json"), cfg, &ModelExport::new(model))?;
    let export = Counts {
        seed: cfg.seed,
        n: cfg.povm.samples,
        probabilities: p.as_array(),
        probabilities_trace: outcome_probabilities_trace(s, model)?,
        counts,
    };
    write_json(&cfg.out.join("counts.json"), cfg, &export)?;
    let est = EstimateExport {
        truth: *s,
        estimate,
        z_rx: (estimate.rx - s.rx) / estimate.se_rx,
        z_rz: (estimate.rz - s.rz) / estimate.se_rz,
    };
    write_json(&cfg.out.join("estimate.json"), cfg, &est)?;
    Ok(est)
}

fn povm(cfg: &RunConfig) -> RunResult<()> {
    let (a, ap, p) = (&cfg.apparatus, &cfg.apparatus_prime, &cfg.povm);
    let model = match (p.lambda, p.lambda_prime, p.alpha_x, p.alpha_z) {
        (Some(l), Some(lp), _, _) => MeasurementModel::from_efficiencies(a, ap, l, lp)?,
        (_, _, Some(ax), Some(az)) => MeasurementModel::new(a, ap, ax, az)?,
        _ => return Err(RunError::Config("povm block needs lambda/lambda_prime or alpha_x/alpha_z".into())),
    };
    povm_artifacts(cfg, &model)?;
    Ok(())
}

#[derive(Serialize)]
struct PipelineSummary {
    response: ResponseFit,
    solver_weights: QuadrantWeights,
    povm_probabilities: [f64; 4],
    /// Largest gap between solver corner weights and POVM probabilities for the configured spin.
    equivalence_gap: f64,
    estimate: EstimateExport,
    runtime_s: Option<f64>,
}

fn pipeline(cfg: &RunConfig, runtime: impl Fn() -> Option<f64>) -> RunResult<()> {
    let (a, ap) = (&cfg.apparatus, &cfg.apparatus_prime);
    let run_one = |s: &BlochState| -> RunResult<ResponseRun> {
        let tr = evolve(&init_joint_field(s, a, ap)?, a, ap, &cfg.solver)?;
        log::info!("response run for {s:?} done in {} steps", tr.steps);
        Ok(ResponseRun { state: *s, weights: tr.last().diagnostics.weights })
    };
    let runs = cfg.pipeline_states().iter().map(run_one).collect::<RunResult<Vec<_>>>()?;
    let fit = fit_response(&runs)?;
    write_json(&cfg.out.join("response.json"), cfg, &fit)?;

    let own = match runs.iter().find(|r| r.state == cfg.spin) {
        Some(r) => *r,
        None => run_one(&cfg.spin)?,
    };
    let model = MeasurementModel::from_efficiencies(a, ap, fit.lambda, fit.lambda_prime)?;
    let estimate = povm_artifacts(cfg, &model)?;
    let p = outcome_probabilities(&cfg.spin, &model)?.as_array();
    let gap = own.weights.as_array().iter().zip(p).map(|(w, q)| (w - q).abs()).fold(0.0, f64::max);
    let summary = PipelineSummary {
        response: fit,
        solver_weights: own.weights,
        povm_probabilities: p,
        equivalence_gap: gap,
        estimate,
        runtime_s: runtime(),
    };
    Ok(write_json(&cfg.out.join("summary.json"), cfg, &summary)?)
}
