//! Run configuration: JSON in, a validated [`RunConfig`] out.
//!
//! Parsing walks the JSON tree by hand so that every problem is collected
//! and reported at once, unknown keys included.

use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use qconserve::io::{operator_from_literal, MatrixLiteral};
use qconserve::models::GridSpec;
use qconserve::operator::DensityState;
use qconserve::{ModelParams, Operator};

use crate::error::CliError;

/// Largest Hilbert space dimension a model may request.
pub const MAX_DIM: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Validate,
    Compose,
    PovmOrder,
    Conserve,
    InfiniteApprox,
    Witness,
    Simulate,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Validate,
        Command::Compose,
        Command::PovmOrder,
        Command::Conserve,
        Command::InfiniteApprox,
        Command::Witness,
        Command::Simulate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Compose => "compose",
            Command::PovmOrder => "povm-order",
            Command::Conserve => "conserve",
            Command::InfiniteApprox => "infinite-approx",
            Command::Witness => "witness",
            Command::Simulate => "simulate",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelConfig {
    PhotonCounting { lambda_t: f64, cutoff: usize },
    QuantumCounter(ModelParams),
    /// Instrument read from a file; `lambda_t` is only needed for `X_k`.
    Custom { instrument: PathBuf, lambda_t: Option<f64> },
}

impl ModelConfig {
    pub fn lambda_t(&self) -> Option<f64> {
        match self {
            ModelConfig::PhotonCounting { lambda_t, .. } => Some(*lambda_t),
            ModelConfig::QuantumCounter(p) => Some(p.lambda_t),
            ModelConfig::Custom { lambda_t, .. } => *lambda_t,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialState {
    Fock(usize),
    Diagonal(Vec<f64>),
    Matrix(Operator),
}

impl InitialState {
    /// Density matrix on `dim` levels; shorter diagonals are zero-padded.
    pub fn realize(&self, dim: usize) -> qconserve::Result<DensityState> {
        match self {
            InitialState::Fock(n) => DensityState::fock(*n, dim),
            InitialState::Diagonal(p) => {
                if p.len() > dim {
                    return Err(qconserve::Error::DimMismatch { expected: dim, found: p.len() });
                }
                let mut padded = p.clone();
                padded.resize(dim, 0.0);
                DensityState::diagonal(&padded)
            }
            InitialState::Matrix(op) => DensityState::new(op.embed(dim)?),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StatisticKind {
    Mk,
    Xk,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub model: Option<ModelConfig>,
    pub povm: Option<PathBuf>,
    pub povms: Option<(PathBuf, PathBuf)>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub n_traj: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub initial_state: Option<InitialState>,
    pub statistic: Option<StatisticKind>,
    pub reference: Option<Vec<(u64, f64)>>,
    pub bins: Option<usize>,
    pub out: Option<PathBuf>,
    pub expect_conserved: bool,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub expect_conserved: bool,
}

const TOP_KEYS: &[&str] = &[
    "command",
    "model",
    "povm",
    "povms",
    "n",
    "k",
    "n_traj",
    "tol",
    "seed",
    "initial_state",
    "statistic",
    "reference",
    "bins",
    "out",
    "expect_conserved",
];

struct Checker<'a> {
    base: &'a Path,
    errors: Vec<String>,
}

impl Checker<'_> {
    fn fail(&mut self, field: &str, msg: impl AsRef<str>) {
        self.errors.push(format!("{field}: {}", msg.as_ref()));
    }

    fn unknown_keys(&mut self, obj: &Map<String, Value>, prefix: &str, allowed: &[&str]) {
        for key in obj.keys().filter(|k| !allowed.contains(&k.as_str())) {
            self.fail(&format!("{prefix}{key}"), "unknown key");
        }
    }

    fn real(&mut self, obj: &Map<String, Value>, field: &str, key: &str) -> Option<f64> {
        let v = obj.get(key)?;
        match v.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                self.fail(field, format!("expected a finite number, got {v}"));
                None
            }
        }
    }

    fn positive(&mut self, obj: &Map<String, Value>, field: &str, key: &str) -> Option<f64> {
        let x = self.real(obj, field, key)?;
        if x > 0.0 {
            Some(x)
        } else {
            self.fail(field, format!("must be positive, got {x}"));
            None
        }
    }

    fn int(&mut self, obj: &Map<String, Value>, field: &str, key: &str, lo: u64, hi: u64) -> Option<u64> {
        let v = obj.get(key)?;
        match v.as_u64() {
            Some(i) if (lo..=hi).contains(&i) => Some(i),
            Some(i) => {
                self.fail(field, format!("must be in {lo}..={hi}, got {i}"));
                None
            }
            None => {
                self.fail(field, format!("expected a non-negative integer, got {v}"));
                None
            }
        }
    }

    fn path(&mut self, v: &Value, field: &str) -> Option<PathBuf> {
        let Some(s) = v.as_str() else {
            self.fail(field, format!("expected a file path, got {v}"));
            return None;
        };
        let p = self.base.join(s);
        if p.is_file() {
            Some(p)
        } else {
            self.fail(field, format!("file not found: {}", p.display()));
            None
        }
    }

    fn required<T>(&mut self, value: Option<T>, obj: &Map<String, Value>, field: &str, key: &str) -> Option<T> {
        if !obj.contains_key(key) {
            self.fail(field, "missing");
        }
        value
    }

    fn model(&mut self, v: &Value) -> Option<ModelConfig> {
        let Some(obj) = v.as_object() else {
            self.fail("model", "expected an object");
            return None;
        };
        let kind = match obj.get("model") {
            None => {
                self.fail("model.model", "missing");
                return None;
            }
            Some(Value::String(s)) => s.as_str(),
            Some(other) => {
                self.fail("model.model", format!("expected a string, got {other}"));
                return None;
            }
        };
        match kind {
            "photon_counting" => {
                self.unknown_keys(obj, "model.", &["model", "lambda_t", "cutoff"]);
                let lt = self.positive(obj, "model.lambda_t", "lambda_t");
                let lt = self.required(lt, obj, "model.lambda_t", "lambda_t");
                let cutoff = self.int(obj, "model.cutoff", "cutoff", 0, MAX_DIM as u64 - 1);
                let cutoff = self.required(cutoff, obj, "model.cutoff", "cutoff");
                Some(ModelConfig::PhotonCounting { lambda_t: lt?, cutoff: cutoff? as usize })
            }
            "quantum_counter" => {
                self.unknown_keys(obj, "model.", &["model", "lambda_t", "cutoff", "m_max", "grid"]);
                let lt = self.positive(obj, "model.lambda_t", "lambda_t");
                let lt = self.required(lt, obj, "model.lambda_t", "lambda_t");
                let cutoff = self.int(obj, "model.cutoff", "cutoff", 0, MAX_DIM as u64 - 1);
                let cutoff = self.required(cutoff, obj, "model.cutoff", "cutoff");
                let m_max = self.int(obj, "model.m_max", "m_max", 0, MAX_DIM as u64 - 1);
                let m_max = self.required(m_max, obj, "model.m_max", "m_max");
                if let (Some(c), Some(m)) = (cutoff, m_max) {
                    if c + m + 1 > MAX_DIM as u64 {
                        self.fail("model", format!("cutoff + m_max + 1 = {} exceeds {MAX_DIM} levels", c + m + 1));
                    }
                }
                let grid = obj.get("grid").and_then(|g| self.grid(g, cutoff.unwrap_or(0) as usize));
                let (lt, cutoff, m_max) = (lt?, cutoff? as usize, m_max? as usize);
                let grid = grid.unwrap_or_else(|| GridSpec::default_for(cutoff));
                Some(ModelConfig::QuantumCounter(ModelParams { lambda_t: lt, cutoff, m_max, grid }))
            }
            "custom" => {
                self.unknown_keys(obj, "model.", &["model", "instrument", "lambda_t"]);
                let instrument = obj.get("instrument").and_then(|p| self.path(p, "model.instrument"));
                let instrument = self.required(instrument, obj, "model.instrument", "instrument");
                let lambda_t = self.positive(obj, "model.lambda_t", "lambda_t");
                Some(ModelConfig::Custom { instrument: instrument?, lambda_t })
            }
            other => {
                self.fail(
                    "model.model",
                    format!("unknown model {other:?}; expected photon_counting, quantum_counter or custom"),
                );
                None
            }
        }
    }

    fn grid(&mut self, v: &Value, cutoff: usize) -> Option<GridSpec> {
        let Some(obj) = v.as_object() else {
            self.fail("model.grid", "expected an object");
            return None;
        };
        self.unknown_keys(obj, "model.grid.", &["nodes", "x_max"]);
        let default = GridSpec::default_for(cutoff);
        let nodes = self.int(obj, "model.grid.nodes", "nodes", 1, 1024).map_or(default.nodes, |n| n as usize);
        let x_max = self.positive(obj, "model.grid.x_max", "x_max").unwrap_or(default.x_max);
        Some(GridSpec { nodes, x_max })
    }

    fn initial_state(&mut self, v: &Value) -> Option<InitialState> {
        let field = "initial_state";
        let Some(obj) = v.as_object().filter(|o| o.len() == 1) else {
            self.fail(field, "expected exactly one of {\"fock\": n}, {\"diagonal\": [..]}, {\"matrix\": [[..]]}");
            return None;
        };
        let (key, inner) = obj.iter().next().expect("one entry");
        match key.as_str() {
            "fock" => self.int(obj, "initial_state.fock", "fock", 0, MAX_DIM as u64 - 1).map(|n| InitialState::Fock(n as usize)),
            "diagonal" => {
                let probs: Option<Vec<f64>> = inner.as_array().and_then(|a| a.iter().map(Value::as_f64).collect());
                match probs {
                    Some(p) if !p.is_empty() && p.iter().all(|&x| x >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() < 1e-9 => {
                        Some(InitialState::Diagonal(p))
                    }
                    _ => {
                        self.fail("initial_state.diagonal", "expected non-negative numbers summing to 1");
                        None
                    }
                }
            }
            "matrix" => {
                let op = serde_json::from_value::<MatrixLiteral>(inner.clone())
                    .map_err(|e| e.to_string())
                    .and_then(|lit| operator_from_literal(&lit).map_err(|e| e.to_string()))
                    .and_then(|op| DensityState::new(op.clone()).map(|_| op).map_err(|e| e.to_string()));
                match op {
                    Ok(op) => Some(InitialState::Matrix(op)),
                    Err(e) => {
                        self.fail("initial_state.matrix", e);
                        None
                    }
                }
            }
            other => {
                self.fail(&format!("initial_state.{other}"), "unknown key");
                None
            }
        }
    }

    fn reference(&mut self, v: &Value) -> Option<Vec<(u64, f64)>> {
        let law: Option<Vec<(u64, f64)>> = v.as_array().and_then(|rows| {
            rows.iter()
                .map(|r| match r.as_array().map(Vec::as_slice) {
                    Some([m, p]) => Some((m.as_u64()?, p.as_f64().filter(|p| (0.0..=1.0).contains(p))?)),
                    _ => None,
                })
                .collect()
        });
        match law {
            Some(law) if (law.iter().map(|r| r.1).sum::<f64>() - 1.0).abs() < 1e-9 => Some(law),
            _ => {
                self.fail("reference", "expected [[count, probability], ..] with probabilities summing to 1");
                None
            }
        }
    }
}

/// Parses and validates a run configuration. Relative paths resolve against `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<RunConfig, CliError> {
    let value: Value = serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
    let Some(obj) = value.as_object() else {
        return Err(CliError::Parse("config must be a JSON object".into()));
    };
    let mut c = Checker { base, errors: Vec::new() };
    c.unknown_keys(obj, "", TOP_KEYS);

    let mut cfg = RunConfig::default();
    if let Some(v) = obj.get("command") {
        cfg.command = v.as_str().and_then(Command::from_name);
        if cfg.command.is_none() {
            let names: Vec<_> = Command::ALL.iter().map(|c| c.name()).collect();
            c.fail("command", format!("unknown command {v}; expected one of {}", names.join(", ")));
        }
    }
    cfg.model = obj.get("model").and_then(|m| c.model(m));
    cfg.povm = obj.get("povm").and_then(|p| c.path(p, "povm"));
    if let Some(v) = obj.get("povms") {
        match v.as_array().map(Vec::as_slice) {
            Some([a, b]) => {
                let (a, b) = (c.path(a, "povms[0]"), c.path(b, "povms[1]"));
                cfg.povms = a.zip(b);
            }
            _ => c.fail("povms", "expected an array of two file paths"),
        }
    }
    cfg.n = c.int(obj, "n", "n", 1, 16).map(|n| n as usize);
    cfg.k = c.int(obj, "k", "k", 1, 100_000).map(|k| k as usize);
    cfg.n_traj = c.int(obj, "n_traj", "n_traj", 1, 100_000_000).map(|n| n as usize);
    cfg.tol = c.positive(obj, "tol", "tol");
    cfg.seed = c.int(obj, "seed", "seed", 0, u64::MAX);
    cfg.initial_state = obj.get("initial_state").and_then(|s| c.initial_state(s));
    if let Some(v) = obj.get("statistic") {
        cfg.statistic = match v.as_str() {
            Some("M_k") => Some(StatisticKind::Mk),
            Some("X_k") => Some(StatisticKind::Xk),
            _ => {
                c.fail("statistic", format!("expected \"M_k\" or \"X_k\", got {v}"));
                None
            }
        };
    }
    cfg.reference = obj.get("reference").and_then(|r| c.reference(r));
    cfg.bins = c.int(obj, "bins", "bins", 1, 100_000).map(|b| b as usize);
    if let Some(v) = obj.get("out") {
        match v.as_str() {
            Some(s) => cfg.out = Some(base.join(s)),
            None => c.fail("out", format!("expected a directory path, got {v}")),
        }
    }
    if let Some(v) = obj.get("expect_conserved") {
        match v.as_bool() {
            Some(b) => cfg.expect_conserved = b,
            None => c.fail("expect_conserved", format!("expected true or false, got {v}")),
        }
    }

    if c.errors.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Validation(c.errors))
    }
}

impl RunConfig {
    /// Applies command-line overrides, then checks what `command` needs.
    pub fn finalize(mut self, command: Command, o: &Overrides) -> Result<Self, CliError> {
        let mut errors = Vec::new();
        if let Some(c) = self.command {
            if c != command {
                errors.push(format!("command: config is for {:?} but {:?} was requested", c.name(), command.name()));
            }
        }
        self.command = Some(command);
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(tol) = o.tol {
            if tol > 0.0 && tol.is_finite() {
                self.tol = Some(tol);
            } else {
                errors.push(format!("--tol: must be positive and finite, got {tol}"));
            }
        }
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if let Some(n) = o.n {
            if (1..=16).contains(&n) {
                self.n = Some(n);
            } else {
                errors.push(format!("--n: must be in 1..=16, got {n}"));
            }
        }
        self.expect_conserved |= o.expect_conserved;

        let needs_model = command != Command::PovmOrder;
        if needs_model && self.model.is_none() {
            errors.push("model: missing".into());
        }
        let custom = matches!(self.model, Some(ModelConfig::Custom { .. }));
        match command {
            Command::PovmOrder if self.povms.is_none() => errors.push("povms: missing".into()),
            Command::Conserve | Command::Witness if custom && self.povm.is_none() => {
                errors.push("povm: missing (custom models have no default POVM)".into())
            }
            Command::Simulate => {
                if self.seed.is_none() {
                    errors.push("seed: missing (simulate draws all randomness from --seed)".into());
                }
                if self.k.is_none() {
                    errors.push("k: missing".into());
                }
                if self.n_traj.is_none() {
                    errors.push("n_traj: missing".into());
                }
                let wants_x = self.statistic == Some(StatisticKind::Xk);
                if wants_x && self.model.as_ref().is_some_and(|m| m.lambda_t().is_none()) {
                    errors.push("model.lambda_t: missing (X_k needs lambda_t)".into());
                }
            }
            _ => {}
        }
        if errors.is_empty() {
            Ok(self)
        } else {
            Err(CliError::Validation(errors))
        }
    }
}
