//! Run configuration: TOML with `include = [...]` for shared blocks.
//!
//! Included files are merged first, in order, and the including file
//! overrides them key by key (tables merge recursively, everything else is
//! replaced). Paths are relative to the file that names them.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scalar_field_lab::nonlin::{Interp, Table, TailRule};
use scalar_field_lab::{make_grid, GridPolicy, Nonlinearity, NonlinearityKind, ShootOptions};

#[derive(Debug)]
pub enum ConfigError {
    Io { path: PathBuf, message: String },
    Syntax { path: PathBuf, message: String },
    Field { field: String, message: String },
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Io { path, message } => write!(f, "{}: {message}", path.display()),
            ConfigError::Syntax { path, message } => write!(f, "{}: {}", path.display(), message.trim_end()),
            ConfigError::Field { field, message } => write!(f, "field `{field}`: {message}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn field(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum NonlinearitySpec {
    PurePower { q: f64 },
    Saturating { q: f64, s: f64 },
    /// `terms = [[coefficient, exponent], ...]`
    Combined { terms: Vec<(f64, f64)> },
    Tabulated {
        file: PathBuf,
        #[serde(default = "default_interp")]
        interp: Interp,
        #[serde(default)]
        tail: TailRule,
    },
}

fn default_interp() -> Interp {
    Interp::MonotoneCubic
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// Fixed truncation radius. When absent, `R = lengths/√μ`.
    pub rmax: Option<f64>,
    pub n: usize,
    pub lengths: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            rmax: None,
            n: 4001,
            lengths: 32.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub ode: f64,
    pub newton: f64,
    pub pohozaev: f64,
    pub mass: f64,
    /// Relative tolerance of the identity claims.
    pub identity: f64,
    pub energy: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            ode: 1e-12,
            newton: 1e-12,
            pohozaev: 1e-6,
            mass: 1e-10,
            identity: 1e-2,
            energy: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaSpec {
    /// Single `λ` for ground-state and mp-level.
    pub value: f64,
    pub window: (f64, f64),
    pub samples: usize,
    /// Explicit branch points; overrides the window lattice for `branch`.
    pub values: Option<Vec<f64>>,
}

impl Default for LambdaSpec {
    fn default() -> Self {
        Self {
            value: 0.0,
            window: (-4.0, 4.0),
            samples: 17,
            values: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MassSpec {
    pub m: Option<f64>,
    pub grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MethodSpec {
    #[default]
    BranchRootFind,
    DeformFlow,
    SphereMinimize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSpec {
    pub method: MethodSpec,
    pub flow_start: f64,
}

impl Default for SolveSpec {
    fn default() -> Self {
        Self {
            method: MethodSpec::default(),
            flow_start: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SphereSpec {
    /// `λ` at which a decay-scaled grid is sized.
    pub grid_lambda: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SphereSpec {
    fn default() -> Self {
        Self {
            grid_lambda: 0.0,
            max_iter: 4000,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSpec {
    pub nodes: usize,
    pub max_sweeps: usize,
}

impl Default for PathSpec {
    fn default() -> Self {
        Self {
            nodes: 32,
            max_sweeps: 5000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSpec {
    /// Half-width of the level window as a fraction of `|b|`.
    pub window_fraction: f64,
    pub rho: f64,
    pub max_steps: usize,
    pub starts: usize,
    /// Size of the random perturbation of the starts.
    pub spread: f64,
}

impl Default for FlowSpec {
    fn default() -> Self {
        Self {
            window_fraction: 0.5,
            rho: 1e-6,
            max_steps: 60,
            starts: 20,
            spread: 0.3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdSpec {
    /// Curves for node counts `0..=k_max`.
    pub k_max: usize,
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        Self { k_max: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dim: usize,
    pub nonlinearity: NonlinearitySpec,
    #[serde(default)]
    pub k: usize,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub lambda: LambdaSpec,
    #[serde(default)]
    pub mass: MassSpec,
    #[serde(default)]
    pub solve: SolveSpec,
    #[serde(default)]
    pub sphere: SphereSpec,
    #[serde(default)]
    pub path: PathSpec,
    #[serde(default)]
    pub flow: FlowSpec,
    #[serde(default)]
    pub thresholds: ThresholdSpec,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    pub threads: Option<usize>,
    /// Directory of the top-level config, for resolving data paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn read_table(path: &Path, seen: &mut BTreeSet<PathBuf>) -> Result<toml::Table, ConfigError> {
    let canon = path.canonicalize().map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if !seen.insert(canon.clone()) {
        return Err(ConfigError::Syntax {
            path: path.to_path_buf(),
            message: "include cycle".into(),
        });
    }
    let text = std::fs::read_to_string(&canon).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let includes = match table.remove("include") {
        None => vec![],
        Some(toml::Value::Array(a)) => a,
        Some(toml::Value::String(s)) => vec![toml::Value::String(s)],
        Some(_) => return Err(field("include", "expected a path or a list of paths")),
    };
    let dir = canon.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut merged = toml::Table::new();
    for inc in includes {
        let toml::Value::String(p) = inc else {
            return Err(field("include", "entries must be strings"));
        };
        merge(&mut merged, read_table(&dir.join(p), seen)?);
    }
    merge(&mut merged, table);
    seen.remove(&canon);
    Ok(merged)
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Reads, merges and validates a config file. Returns the config together
/// with the canonical merged TOML, which is what gets hashed.
pub fn load(path: &Path) -> Result<(RunConfig, String), ConfigError> {
    let table = read_table(path, &mut BTreeSet::new())?;
    let canonical = toml::to_string(&table).expect("merged table serializes");
    let de = toml::Value::Table(table);
    let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        field(if path.is_empty() || path == "." { "<root>" } else { &path }, e.into_inner().to_string())
    })?;
    cfg.base_dir = path
        .canonicalize()
        .ok()
        .and_then(|p| p.parent().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    cfg.validate()?;
    Ok((cfg, canonical))
}

fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(field(name, format!("must be positive and finite (got {v})")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dim < 1 {
            return Err(field("dim", "must be at least 1"));
        }
        if let Some(r) = self.grid.rmax {
            positive("grid.rmax", r)?;
        }
        positive("grid.lengths", self.grid.lengths)?;
        if self.grid.n < 16 {
            return Err(field("grid.n", format!("need at least 16 nodes (got {})", self.grid.n)));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("tolerances.ode", t.ode),
            ("tolerances.newton", t.newton),
            ("tolerances.pohozaev", t.pohozaev),
            ("tolerances.mass", t.mass),
            ("tolerances.identity", t.identity),
            ("tolerances.energy", t.energy),
        ] {
            positive(name, v)?;
        }
        let (lo, hi) = self.lambda.window;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(field("lambda.window", format!("need finite lo < hi (got [{lo}, {hi}])")));
        }
        if self.lambda.samples < 2 {
            return Err(field("lambda.samples", "need at least 2 samples"));
        }
        if let Some(m) = self.mass.m {
            positive("mass.m", m)?;
        }
        for m in self.mass.grid.iter().flatten() {
            positive("mass.grid", *m)?;
        }
        positive("sphere.tol", self.sphere.tol)?;
        positive("flow.window_fraction", self.flow.window_fraction)?;
        positive("flow.rho", self.flow.rho)?;
        if self.path.nodes < 3 {
            return Err(field("path.nodes", "need at least 3 images"));
        }
        if self.threads == Some(0) {
            return Err(field("threads", "must be at least 1"));
        }
        Ok(())
    }

    pub fn nonlinearity(&self) -> Result<Nonlinearity, ConfigError> {
        let kind = match &self.nonlinearity {
            NonlinearitySpec::PurePower { q } => NonlinearityKind::PurePower { q: *q },
            NonlinearitySpec::Saturating { q, s } => NonlinearityKind::Saturating { q: *q, s: *s },
            NonlinearitySpec::Combined { terms } => {
                return Nonlinearity::combined(terms, self.dim).map_err(core_field);
            }
            NonlinearitySpec::Tabulated { file, interp, tail } => {
                let path = self.base_dir.join(file);
                let text = std::fs::read_to_string(&path).map_err(|e| ConfigError::Io {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
                let table = Table::from_text(&text, *interp, *tail).map_err(|e| ConfigError::Syntax {
                    path,
                    message: e.to_string(),
                })?;
                NonlinearityKind::Tabulated(table)
            }
        };
        Nonlinearity::new(kind, self.dim).map_err(core_field)
    }

    pub fn grid_policy(&self) -> Result<GridPolicy, ConfigError> {
        match self.grid.rmax {
            Some(r) => Ok(GridPolicy::Fixed(make_grid(self.dim, r, self.grid.n).map_err(core_field)?)),
            None => Ok(GridPolicy::DecayScaled {
                lengths: self.grid.lengths,
                n: self.grid.n,
            }),
        }
    }

    pub fn shoot_options(&self) -> Result<ShootOptions, ConfigError> {
        Ok(ShootOptions {
            ode_tol: self.tolerances.ode,
            newton_tol: self.tolerances.newton,
            grid: self.grid_policy()?,
            ..ShootOptions::default()
        })
    }

    /// Masses for solve/minimize/verify: the grid if given, else `m`.
    pub fn masses(&self) -> Result<Vec<f64>, ConfigError> {
        match (&self.mass.grid, self.mass.m) {
            (Some(g), _) if !g.is_empty() => Ok(g.clone()),
            (_, Some(m)) => Ok(vec![m]),
            _ => Err(field("mass.m", "this command needs `mass.m` or `mass.grid`")),
        }
    }
}

fn core_field(e: scalar_field_lab::Error) -> ConfigError {
    match e {
        scalar_field_lab::Error::Config { field, message } => ConfigError::Field { field, message },
        other => ConfigError::Field {
            field: "<model>".into(),
            message: other.to_string(),
        },
    }
}
