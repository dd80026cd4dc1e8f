//! `key=value` run configuration. Files allow blank lines and `#`
//! comments; later assignments win, so flags are applied after the file.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use fistanet::fistanet::SignMode;
use fistanet::weights::WeightMode;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Problem {
    EmtSynth,
    CtRadon,
}

impl Problem {
    pub fn name(self) -> &'static str {
        match self {
            Problem::EmtSynth => "emt-synth",
            Problem::CtRadon => "ct-radon",
        }
    }
}

impl FromStr for Problem {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "emt-synth" => Ok(Problem::EmtSynth),
            "ct-radon" => Ok(Problem::CtRadon),
            _ => Err("expected emt-synth or ct-radon".into()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Solver {
    Fbp,
    Laplacian,
    Ista,
    Fista,
    FistaTv,
    FistaNet,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Fbp => "fbp",
            Solver::Laplacian => "laplacian",
            Solver::Ista => "ista",
            Solver::Fista => "fista",
            Solver::FistaTv => "fista-tv",
            Solver::FistaNet => "fistanet",
        }
    }
}

impl FromStr for Solver {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "fbp" => Solver::Fbp,
            "laplacian" => Solver::Laplacian,
            "ista" => Solver::Ista,
            "fista" => Solver::Fista,
            "fista-tv" => Solver::FistaTv,
            "fistanet" => Solver::FistaNet,
            _ => return Err("expected fbp|laplacian|ista|fista|fista-tv|fistanet".into()),
        })
    }
}

/// Starting image for iterative methods.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// Laplacian for EMT, back-projection for CT.
    Auto,
    Laplacian,
    Adjoint,
    Zero,
}

impl Init {
    pub fn name(self) -> &'static str {
        match self {
            Init::Auto => "auto",
            Init::Laplacian => "laplacian",
            Init::Adjoint => "adjoint",
            Init::Zero => "zero",
        }
    }
}

impl FromStr for Init {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "auto" => Init::Auto,
            "laplacian" => Init::Laplacian,
            "adjoint" => Init::Adjoint,
            "zero" => Init::Zero,
            _ => return Err("expected auto|laplacian|adjoint|zero".into()),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub problem: Problem,
    pub image_size: usize,
    pub n_meas: usize,
    pub condition: f64,
    pub n_views: usize,
    /// 0 picks the smallest count covering the image diagonal.
    pub n_detectors: usize,
    pub snr_db: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub layers: usize,
    pub nf: usize,
    pub lr1: f64,
    pub lr2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub mode: WeightMode,
    pub sign_mode: SignMode,
    pub out_dir: PathBuf,
    pub data_dir: PathBuf,
    /// Weight matrix file; empty means `<data_dir>/weights.ftns`.
    pub weights: String,
    pub solver: Solver,
    pub reg_lambda: f64,
    pub max_iters: usize,
    pub lambda0: f64,
    pub init: Init,
    pub checkpoint: String,
    /// Unroll depth at inference; 0 keeps the trained depth.
    pub infer_layers: usize,
    pub sweep: bool,
    /// Number of test samples written by `solve`; 0 means all.
    pub n_solve: usize,
}

/// Every accepted key, in canonical order.
pub const KEYS: [&str; 33] = [
    "problem",
    "image_size",
    "n_meas",
    "condition",
    "n_views",
    "n_detectors",
    "snr_db",
    "n_train",
    "n_val",
    "n_test",
    "layers",
    "nf",
    "lr1",
    "lr2",
    "lambda1",
    "lambda2",
    "epochs",
    "batch",
    "seed",
    "mode",
    "sign_mode",
    "out_dir",
    "data_dir",
    "weights",
    "solver",
    "reg_lambda",
    "max_iters",
    "lambda0",
    "init",
    "checkpoint",
    "infer_layers",
    "sweep",
    "n_solve",
];

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: Problem::EmtSynth,
            image_size: 32,
            n_meas: 64,
            condition: 1e3,
            n_views: 60,
            n_detectors: 0,
            snr_db: 40.0,
            n_train: 500,
            n_val: 100,
            n_test: 100,
            layers: 7,
            nf: 32,
            lr1: 1e-3,
            lr2: 1e-2,
            lambda1: 0.01,
            lambda2: 0.001,
            epochs: 30,
            batch: 16,
            seed: 0,
            mode: WeightMode::Analytic,
            sign_mode: SignMode::Reparam,
            out_dir: PathBuf::from("runs"),
            data_dir: PathBuf::from("data"),
            weights: String::new(),
            solver: Solver::FistaTv,
            reg_lambda: 1e-4,
            max_iters: 100,
            lambda0: 1e-3,
            init: Init::Auto,
            checkpoint: String::new(),
            infer_layers: 0,
            sweep: false,
            n_solve: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError(format!("config key `{key}`: invalid value `{value}` ({e})")))
}

fn weight_mode_name(m: WeightMode) -> &'static str {
    match m {
        WeightMode::Analytic => "analytic",
        WeightMode::Physical => "physical",
    }
}

/// Splits a config file into ordered `(key, value)` pairs.
pub fn parse_text(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError(format!("config line {}: expected key=value, got `{line}`", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Parses a single `key=value` flag argument.
pub fn parse_assignment(s: &str) -> Result<(String, String), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError(format!("expected key=value, got `{s}`")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

impl RunConfig {
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        match key {
            "problem" => self.problem = parse(key, v)?,
            "image_size" => self.image_size = parse(key, v)?,
            "n_meas" => self.n_meas = parse(key, v)?,
            "condition" => self.condition = parse(key, v)?,
            "n_views" => self.n_views = parse(key, v)?,
            "n_detectors" => self.n_detectors = parse(key, v)?,
            "snr_db" => self.snr_db = parse(key, v)?,
            "n_train" => self.n_train = parse(key, v)?,
            "n_val" => self.n_val = parse(key, v)?,
            "n_test" => self.n_test = parse(key, v)?,
            "layers" => self.layers = parse(key, v)?,
            "nf" => self.nf = parse(key, v)?,
            "lr1" => self.lr1 = parse(key, v)?,
            "lr2" => self.lr2 = parse(key, v)?,
            "lambda1" => self.lambda1 = parse(key, v)?,
            "lambda2" => self.lambda2 = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "batch" => self.batch = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "mode" => {
                self.mode = match v {
                    "analytic" => WeightMode::Analytic,
                    "physical" => WeightMode::Physical,
                    _ => return Err(CliError(format!("config key `mode`: expected analytic|physical, got `{v}`"))),
                }
            }
            "sign_mode" => self.sign_mode = parse(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "data_dir" => self.data_dir = PathBuf::from(v),
            "weights" => self.weights = v.to_string(),
            "solver" => self.solver = parse(key, v)?,
            "reg_lambda" => self.reg_lambda = parse(key, v)?,
            "max_iters" => self.max_iters = parse(key, v)?,
            "lambda0" => self.lambda0 = parse(key, v)?,
            "init" => self.init = parse(key, v)?,
            "checkpoint" => self.checkpoint = v.to_string(),
            "infer_layers" => self.infer_layers = parse(key, v)?,
            "sweep" => self.sweep = parse(key, v)?,
            "n_solve" => self.n_solve = parse(key, v)?,
            _ => return Err(CliError(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: &str| Err(CliError(m.to_string()));
        if self.image_size < 2 {
            return fail("image_size must be >= 2");
        }
        if self.layers == 0 {
            return fail("layers must be >= 1");
        }
        if self.nf == 0 {
            return fail("nf must be >= 1");
        }
        if self.batch == 0 {
            return fail("batch must be >= 1");
        }
        if !(self.condition >= 1.0) {
            return fail("condition must be >= 1");
        }
        if !(self.reg_lambda >= 0.0) || !(self.lambda0 >= 0.0) {
            return fail("regularisation weights must be >= 0");
        }
        Ok(())
    }

    fn value(&self, key: &str) -> String {
        match key {
            "problem" => self.problem.name().to_string(),
            "image_size" => self.image_size.to_string(),
            "n_meas" => self.n_meas.to_string(),
            "condition" => self.condition.to_string(),
            "n_views" => self.n_views.to_string(),
            "n_detectors" => self.n_detectors.to_string(),
            "snr_db" => self.snr_db.to_string(),
            "n_train" => self.n_train.to_string(),
            "n_val" => self.n_val.to_string(),
            "n_test" => self.n_test.to_string(),
            "layers" => self.layers.to_string(),
            "nf" => self.nf.to_string(),
            "lr1" => self.lr1.to_string(),
            "lr2" => self.lr2.to_string(),
            "lambda1" => self.lambda1.to_string(),
            "lambda2" => self.lambda2.to_string(),
            "epochs" => self.epochs.to_string(),
            "batch" => self.batch.to_string(),
            "seed" => self.seed.to_string(),
            "mode" => weight_mode_name(self.mode).to_string(),
            "sign_mode" => self.sign_mode.to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            "data_dir" => self.data_dir.display().to_string(),
            "weights" => self.weights.clone(),
            "solver" => self.solver.name().to_string(),
            "reg_lambda" => self.reg_lambda.to_string(),
            "max_iters" => self.max_iters.to_string(),
            "lambda0" => self.lambda0.to_string(),
            "init" => self.init.name().to_string(),
            "checkpoint" => self.checkpoint.clone(),
            "infer_layers" => self.infer_layers.to_string(),
            "sweep" => self.sweep.to_string(),
            "n_solve" => self.n_solve.to_string(),
            _ => unreachable!("key list and accessors agree"),
        }
    }

    /// Canonical text form; parsing it back yields the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for k in KEYS {
            writeln!(s, "{k}={}", self.value(k)).expect("string");
        }
        s
    }

    /// First 12 hex digits of the SHA-256 of the canonical text without
    /// `seed` and the output location.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for k in KEYS.iter().filter(|k| !matches!(**k, "seed" | "out_dir")) {
            h.update(format!("{k}={}\n", self.value(k)));
        }
        h.finalize().iter().take(6).fold(String::new(), |mut s, b| {
            write!(s, "{b:02x}").expect("string");
            s
        })
    }

    pub fn run_dir_name(&self) -> String {
        format!("run-{}-seed{}", self.hash(), self.seed)
    }
}
