//! Run configuration: a flat `key = value` file, overridden by flags of the
//! same name.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use pclm::naive::DEFAULT_ELEMENT_BUDGET;
use pclm::{Engine, SolverConfig};

use crate::error::{CliError, Result};
use crate::layout::Layout;

pub const KEYS: &[&str] = &[
    "counts",
    "exposures",
    "grouping",
    "out-dir",
    "basis",
    "degree",
    "porder",
    "lambda",
    "grid",
    "level",
    "engine",
    "seed",
    "layout",
    "tol-alpha",
    "tol-loglik",
    "max-iter",
    "max-step-halvings",
    "gamma-floor",
    "budget",
];

pub const DEFAULT_GRID: &[f64] = &[0.1, 1.0, 10.0, 100.0, 1000.0];

/// Command-line options shared by every subcommand. All values stay as text
/// until they are merged with the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// Flat key = value file; flags override its entries
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Count CSV: one column per dimension plus `count`
    #[arg(long)]
    pub counts: Option<String>,
    /// Exposure CSV over the fine grid: one column per dimension plus `exposure`
    #[arg(long)]
    pub exposures: Option<String>,
    /// Grouping file, one line per dimension
    #[arg(long)]
    pub grouping: Option<String>,
    #[arg(long = "out-dir")]
    pub out_dir: Option<String>,
    /// Number of B-splines per dimension, e.g. 19,12
    #[arg(long)]
    pub basis: Option<String>,
    #[arg(long)]
    pub degree: Option<String>,
    /// Difference penalty order
    #[arg(long)]
    pub porder: Option<String>,
    /// Smoothing parameters per dimension, e.g. 10,1000
    #[arg(long)]
    pub lambda: Option<String>,
    /// Grid-search values: one list for every dimension, or lists separated by `;`
    #[arg(long)]
    pub grid: Option<String>,
    /// Confidence level for the intervals
    #[arg(long)]
    pub level: Option<String>,
    /// glam or naive
    #[arg(long)]
    pub engine: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Built-in simulation layout: sweden (2-D) or spain (3-D)
    #[arg(long)]
    pub layout: Option<String>,
    #[arg(long = "tol-alpha")]
    pub tol_alpha: Option<String>,
    #[arg(long = "tol-loglik")]
    pub tol_loglik: Option<String>,
    #[arg(long = "max-iter")]
    pub max_iter: Option<String>,
    #[arg(long = "max-step-halvings")]
    pub max_step_halvings: Option<String>,
    #[arg(long = "gamma-floor")]
    pub gamma_floor: Option<String>,
    /// Largest dense matrix, in elements, the naive engine may build
    #[arg(long)]
    pub budget: Option<String>,
}

impl Options {
    fn flags(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("counts", &self.counts),
            ("exposures", &self.exposures),
            ("grouping", &self.grouping),
            ("out-dir", &self.out_dir),
            ("basis", &self.basis),
            ("degree", &self.degree),
            ("porder", &self.porder),
            ("lambda", &self.lambda),
            ("grid", &self.grid),
            ("level", &self.level),
            ("engine", &self.engine),
            ("seed", &self.seed),
            ("layout", &self.layout),
            ("tol-alpha", &self.tol_alpha),
            ("tol-loglik", &self.tol_loglik),
            ("max-iter", &self.max_iter),
            ("max-step-halvings", &self.max_step_halvings),
            ("gamma-floor", &self.gamma_floor),
            ("budget", &self.budget),
        ]
    }

    /// Config file entries with flags laid on top.
    pub fn settings(&self) -> Result<Settings> {
        let mut settings = match &self.config {
            Some(path) => Settings::read(path)?,
            None => Settings::default(),
        };
        for (key, value) in self.flags() {
            if let Some(v) = value {
                settings.values.insert(key.to_string(), v.clone());
            }
        }
        Ok(settings)
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        RunConfig::from_settings(&self.settings()?)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub values: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| CliError::Parse { path: path.to_path_buf(), line: i as u64 + 1, message };
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected key = value".into()))?;
            let key = key.trim().replace('_', "-");
            if !KEYS.contains(&key.as_str()) {
                return Err(err(format!("unknown key {key:?}")));
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(err(format!("key {key:?} given twice")));
            }
        }
        Ok(Self { values })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| v.parse().map_err(|_| CliError::config(format!("--{key}: cannot parse {v:?}"))))
            .transpose()
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, text: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|v| {
            let v = v.trim();
            v.parse().map_err(|_| CliError::config(format!("--{key}: cannot parse {v:?}")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub counts: Option<PathBuf>,
    pub exposures: Option<PathBuf>,
    pub grouping: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub basis: Option<Vec<usize>>,
    pub degree: usize,
    pub porder: usize,
    pub lambdas: Option<Vec<f64>>,
    pub grid: Option<Vec<Vec<f64>>>,
    pub level: f64,
    pub engine: Engine,
    pub seed: u64,
    pub layout: String,
    pub solver: SolverConfig,
    pub budget: u128,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            counts: None,
            exposures: None,
            grouping: None,
            out_dir: PathBuf::from("pclm-out"),
            basis: None,
            degree: 3,
            porder: 2,
            lambdas: None,
            grid: None,
            level: 0.95,
            engine: Engine::Glam,
            seed: 1,
            layout: "sweden".into(),
            solver: SolverConfig::default(),
            budget: DEFAULT_ELEMENT_BUDGET,
        }
    }
}

impl RunConfig {
    pub fn from_settings(s: &Settings) -> Result<Self> {
        let d = Self::default();
        let solver = SolverConfig {
            tol_alpha: s.parsed("tol-alpha")?.unwrap_or(d.solver.tol_alpha),
            tol_loglik: s.parsed("tol-loglik")?.unwrap_or(d.solver.tol_loglik),
            max_iter: s.parsed("max-iter")?.unwrap_or(d.solver.max_iter),
            max_step_halvings: s.parsed("max-step-halvings")?.unwrap_or(d.solver.max_step_halvings),
            gamma_floor: s.parsed("gamma-floor")?.unwrap_or(d.solver.gamma_floor),
        };
        solver.validate()?;
        let grid = s
            .get("grid")
            .map(|g| g.split(';').map(|axis| parse_list("grid", axis)).collect::<Result<Vec<Vec<f64>>>>())
            .transpose()?;
        let config = Self {
            counts: s.get("counts").map(PathBuf::from),
            exposures: s.get("exposures").map(PathBuf::from),
            grouping: s.get("grouping").map(PathBuf::from),
            out_dir: s.get("out-dir").map_or(d.out_dir, PathBuf::from),
            basis: s.get("basis").map(|v| parse_list("basis", v)).transpose()?,
            degree: s.parsed("degree")?.unwrap_or(d.degree),
            porder: s.parsed("porder")?.unwrap_or(d.porder),
            lambdas: s.get("lambda").map(|v| parse_list("lambda", v)).transpose()?,
            grid,
            level: s.parsed("level")?.unwrap_or(d.level),
            engine: s.get("engine").map(str::parse).transpose()?.unwrap_or(d.engine),
            seed: s.parsed("seed")?.unwrap_or(d.seed),
            layout: s.get("layout").map_or(d.layout, str::to_string),
            solver,
            budget: s.parsed("budget")?.unwrap_or(d.budget),
        };
        if !(config.level > 0.0 && config.level < 1.0) {
            return Err(CliError::config(format!("--level must lie in (0, 1), got {}", config.level)));
        }
        if config.porder == 0 {
            return Err(CliError::config("--porder must be at least 1"));
        }
        Ok(config)
    }

    pub fn require(path: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
        path.clone().ok_or_else(|| CliError::config(format!("--{key} is required")))
    }

    /// Built-in layout named by `layout`, or the grouping file when one is given.
    pub fn simulation_layout(&self) -> Result<Layout> {
        if let Some(path) = &self.grouping {
            return Layout::read(path);
        }
        match self.layout.to_ascii_lowercase().as_str() {
            "sweden" => Ok(Layout::sweden()),
            "spain" => Ok(Layout::spain()),
            other => Err(CliError::config(format!("unknown layout {other:?}, expected sweden or spain"))),
        }
    }

    /// Basis sizes. The default is one B-spline per group, capped at 25, 20
    /// or 10 per dimension for one, two or more dimensions so that the
    /// coefficient count stays moderate.
    pub fn basis_for(&self, layout: &Layout) -> Result<Vec<usize>> {
        if let Some(b) = &self.basis {
            return per_dimension("basis", b, layout);
        }
        let cap = [25, 20, 10][layout.ndim().min(3) - 1].max(self.degree + 1);
        Ok(layout.group_dims().iter().map(|&n| n.clamp(self.degree + 1, cap)).collect())
    }

    pub fn lambdas_for(&self, layout: &Layout) -> Result<Vec<f64>> {
        match &self.lambdas {
            Some(l) => per_dimension("lambda", l, layout),
            None => Ok(vec![1.0; layout.ndim()]),
        }
    }

    /// Every λ tuple of the grid, first dimension varying fastest.
    pub fn grid_for(&self, layout: &Layout) -> Result<Vec<Vec<f64>>> {
        let axes = match &self.grid {
            Some(g) => per_dimension("grid", g, layout)?,
            None => vec![DEFAULT_GRID.to_vec(); layout.ndim()],
        };
        if axes.iter().any(Vec::is_empty) {
            return Err(CliError::config("--grid: every axis needs at least one value"));
        }
        let sizes: Vec<usize> = axes.iter().map(Vec::len).collect();
        let mut tuples = Vec::new();
        crate::data::for_each_index(&sizes, |idx| tuples.push(idx.iter().zip(&axes).map(|(&i, a)| a[i]).collect()));
        Ok(tuples)
    }
}

/// One value per dimension; a single value is shared by all of them.
fn per_dimension<T: Clone>(key: &str, values: &[T], layout: &Layout) -> Result<Vec<T>> {
    match values.len() {
        1 => Ok(vec![values[0].clone(); layout.ndim()]),
        n if n == layout.ndim() => Ok(values.to_vec()),
        n => Err(CliError::config(format!(
            "--{key} has {n} entries but the grouping declares {} dimensions",
            layout.ndim()
        ))),
    }
}
