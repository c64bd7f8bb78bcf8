//! TOML run configuration: parsing, defaults and validation.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::SolverConfig;
use crate::model::{default_cutoff, ApparatusParams, BlochState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Landscape,
    Thresholds,
    Dephase,
    Register,
    Povm,
    Pipeline,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Landscape,
        Scenario::Thresholds,
        Scenario::Dephase,
        Scenario::Register,
        Scenario::Povm,
        Scenario::Pipeline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Landscape => "landscape",
            Scenario::Thresholds => "thresholds",
            Scenario::Dephase => "dephase",
            Scenario::Register => "register",
            Scenario::Povm => "povm",
            Scenario::Pipeline => "pipeline",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL.into_iter().find(|sc| sc.name() == s).ok_or_else(|| format!("unknown scenario `{s}`"))
    }
}

/// A configuration problem, with the 1-based line it refers to when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApparatusBlock {
    pub n: usize,
    #[serde(default)]
    pub j2: f64,
    #[serde(default = "one")]
    pub j4: f64,
    pub g: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub beta: f64,
    pub cutoff: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn default_gamma() -> f64 {
    0.01
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpinBlock {
    pub rx: f64,
    pub ry: f64,
    pub rz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LandscapeBlock {
    /// Also tabulate the joint `(m, m')` landscape.
    pub joint: bool,
}

impl Default for LandscapeBlock {
    fn default() -> Self {
        Self { joint: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DephaseBlock {
    /// Last time, in units of the first apparatus' `tau_d`.
    pub t_max: f64,
    pub points: usize,
}

impl Default for DephaseBlock {
    fn default() -> Self {
        Self { t_max: 4.0, points: 81 }
    }
}

/// Efficiencies or channel contractions of the measurement model; one pair is required.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PovmBlock {
    pub lambda: Option<f64>,
    pub lambda_prime: Option<f64>,
    pub alpha_x: Option<f64>,
    pub alpha_z: Option<f64>,
    pub samples: u64,
}

impl Default for PovmBlock {
    fn default() -> Self {
        Self { lambda: None, lambda_prime: None, alpha_x: None, alpha_z: None, samples: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineBlock {
    /// Initial Bloch vectors `[rx, ry, rz]` of the response fit.
    pub states: Vec<[f64; 3]>,
}

impl Default for PipelineBlock {
    fn default() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            states: vec![
                [0.0, 0.0, 1.0],
                [0.0, 0.0, -1.0],
                [1.0, 0.0, 0.0],
                [-1.0, 0.0, 0.0],
                [h, 0.0, h],
                [0.0, 0.0, 0.0],
            ],
        }
    }
}

/// The file as written by the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub scenario: Option<Scenario>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub apparatus: ApparatusBlock,
    /// Second apparatus; a copy of the first when absent.
    pub apparatus_prime: Option<ApparatusBlock>,
    #[serde(default)]
    pub spin: SpinBlock,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub landscape: LandscapeBlock,
    #[serde(default)]
    pub dephase: DephaseBlock,
    #[serde(default)]
    pub povm: PovmBlock,
    #[serde(default)]
    pub pipeline: PipelineBlock,
}

/// Fully resolved configuration; this is what every artifact embeds and hashes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub seed: u64,
    #[serde(skip)]
    pub out: PathBuf,
    pub apparatus: ApparatusParams,
    pub apparatus_prime: ApparatusParams,
    pub spin: BlochState,
    pub solver: SolverConfig,
    pub landscape: LandscapeBlock,
    pub dephase: DephaseBlock,
    pub povm: PovmBlock,
    pub pipeline: PipelineBlock,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// 1-based line of the first line starting with `needle`, ignoring indentation.
fn line_of(src: &str, needle: &str) -> Option<usize> {
    src.lines().position(|l| l.trim_start().starts_with(needle)).map(|i| i + 1)
}

fn line_at(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Parses and validates a configuration for `scenario`.
pub fn parse_config(src: &str, scenario: Scenario, ov: &Overrides) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(src).map_err(|e| ConfigError {
        line: e.span().map(|s| line_at(src, s.start)),
        message: e.message().trim().to_string(),
    })?;
    let err = |needle: &str, message: String| ConfigError { line: line_of(src, needle), message };

    if let Some(sc) = raw.scenario {
        if sc != scenario {
            return Err(err("scenario", format!("file is for scenario `{sc}` but `{scenario}` was requested")));
        }
    }
    let both_default =
        raw.apparatus.cutoff.is_none() && raw.apparatus_prime.as_ref().map_or(true, |b| b.cutoff.is_none());
    let build = |b: &ApparatusBlock, header: &str| -> Result<ApparatusParams, ConfigError> {
        let p = ApparatusParams::new(b.n, b.j2, b.j4, b.g, b.gamma, b.beta).map_err(|e| err(header, e.to_string()))?;
        match b.cutoff {
            Some(c) => p.with_cutoff(c).map_err(|e| err(header, e.to_string())),
            None => Ok(p),
        }
    };
    let mut a = build(&raw.apparatus, "[apparatus]")?;
    let mut ap = match &raw.apparatus_prime {
        Some(b) => build(b, "[apparatus_prime]")?,
        None => a,
    };
    if both_default {
        let c = default_cutoff(&[a.j2 + a.j4, ap.j2 + ap.j4, a.g, ap.g]);
        a.cutoff = c;
        ap.cutoff = c;
    }
    let spin = BlochState::new(raw.spin.rx, raw.spin.ry, raw.spin.rz).map_err(|e| err("[spin]", e.to_string()))?;
    raw.solver.validate().map_err(|e| err("[solver]", e.to_string()))?;

    let d = &raw.dephase;
    if !(d.t_max > 0.0 && d.t_max.is_finite()) || d.points < 2 {
        return Err(err("[dephase]", "dephase needs t_max > 0 and at least 2 points".into()));
    }
    let p = &raw.povm;
    let lambdas = p.lambda.is_some() || p.lambda_prime.is_some();
    let alphas = p.alpha_x.is_some() || p.alpha_z.is_some();
    if lambdas && alphas {
        return Err(err("[povm]", "give either lambda/lambda_prime or alpha_x/alpha_z, not both".into()));
    }
    if scenario == Scenario::Povm {
        let complete = (p.lambda.is_some() && p.lambda_prime.is_some()) || (p.alpha_x.is_some() && p.alpha_z.is_some());
        if !complete {
            return Err(err(
                "[povm]",
                "povm scenario needs lambda and lambda_prime (or alpha_x and alpha_z); there are no defaults".into(),
            ));
        }
    }
    if scenario == Scenario::Pipeline && raw.pipeline.states.len() < 3 {
        return Err(err("[pipeline]", "the response fit needs at least 3 states".into()));
    }
    for s in &raw.pipeline.states {
        BlochState::new(s[0], s[1], s[2]).map_err(|e| err("[pipeline]", e.to_string()))?;
    }

    Ok(RunConfig {
        scenario,
        seed: ov.seed.or(raw.seed).unwrap_or(0),
        out: ov.out.clone().or(raw.out).unwrap_or_else(|| PathBuf::from("out")),
        apparatus: a,
        apparatus_prime: ap,
        spin,
        solver: raw.solver,
        landscape: raw.landscape,
        dephase: raw.dephase,
        povm: raw.povm,
        pipeline: raw.pipeline,
    })
}

impl RunConfig {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON of the resolved configuration.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&self.to_json()).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn pipeline_states(&self) -> Vec<BlochState> {
        self.pipeline.states.iter().map(|s| BlochState { rx: s[0], ry: s[1], rz: s[2] }).collect()
    }
}
