use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use dualitylab::harness::DEFAULT_GRID;
use dualitylab::io::{parse_market, MarketDocument, UtilityDocument};
use serde::Deserialize;

use crate::error::CliError;

/// Either a path to a JSON file or the document inline.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Source {
    Path(PathBuf),
    Inline(serde_json::Value),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleParams {
    pub n_max: Option<usize>,
    pub p_start: Option<f64>,
    pub p_step: Option<f64>,
}

/// On-disk configuration. Every field is optional; flags take precedence.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub model: Option<Source>,
    pub utility: Option<Source>,
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub tol: Option<f64>,
    pub check_tol: Option<f64>,
    pub n_min: Option<usize>,
    pub n_max: Option<usize>,
    pub grid_min: Option<f64>,
    pub grid_max: Option<f64>,
    pub grid_points: Option<usize>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub strict: Option<bool>,
    /// A list of per-node consumption rates, or one such list.
    pub claims: Option<Source>,
    pub example: Option<ExampleParams>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// JSON configuration file; flags override its fields.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Model JSON: an explicit tree or a generator document.
    #[arg(long, global = true, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Utility JSON; log utility when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    pub utility: Option<PathBuf>,
    /// Initial wealth (a single-point x-grid for `converge`).
    #[arg(long, global = true)]
    pub x: Option<f64>,
    /// Dual variable (a single-point y-grid for `converge`).
    #[arg(long, global = true)]
    pub y: Option<f64>,
    /// Solver tolerance on the duality gap of each solve [default: 1e-8].
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Tolerance of the report checks (command-specific default).
    #[arg(long, global = true)]
    pub check_tol: Option<f64>,
    /// Smallest number of tradable assets in `converge`.
    #[arg(long, global = true)]
    pub n_min: Option<usize>,
    /// Largest number of tradable assets in `converge`.
    #[arg(long, global = true)]
    pub n_max: Option<usize>,
    /// Largest market size in `example`.
    #[arg(long = "N-max", global = true, value_name = "N")]
    pub example_n_max: Option<usize>,
    #[arg(long, global = true)]
    pub p_start: Option<f64>,
    #[arg(long, global = true)]
    pub p_step: Option<f64>,
    #[arg(long, global = true)]
    pub grid_min: Option<f64>,
    #[arg(long, global = true)]
    pub grid_max: Option<f64>,
    #[arg(long, global = true)]
    pub grid_points: Option<usize>,
    /// Claims JSON for `superrep`.
    #[arg(long, global = true, value_name = "FILE")]
    pub claims: Option<PathBuf>,
    /// Worker threads for sweeps; 0 uses every core.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Exit with status 4 when a check fails.
    #[arg(long, global = true)]
    pub strict: bool,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: Option<MarketDocument>,
    pub utility: Option<UtilityDocument>,
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub tol: f64,
    pub check_tol: Option<f64>,
    pub n_min: Option<usize>,
    pub n_max: Option<usize>,
    pub grid: (f64, f64, usize),
    pub jobs: usize,
    pub out: PathBuf,
    pub strict: bool,
    pub claims: Option<Vec<Vec<f64>>>,
    pub example: (usize, f64, f64),
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

fn resolve(base: &Path, src: Source) -> Result<serde_json::Value, CliError> {
    match src {
        Source::Path(p) => {
            let p = if p.is_relative() { base.join(p) } else { p };
            serde_json::from_str(&read(&p)?).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
        }
        Source::Inline(v) => Ok(v),
    }
}

fn market(v: serde_json::Value) -> Result<MarketDocument, CliError> {
    parse_market(&v.to_string()).map_err(|e| CliError::Config(format!("model: {e}")))
}

fn utility(v: serde_json::Value) -> Result<UtilityDocument, CliError> {
    serde_json::from_value(v).map_err(|e| CliError::Config(format!("utility: {e}")))
}

fn claims(v: serde_json::Value) -> Result<Vec<Vec<f64>>, CliError> {
    if let Ok(one) = serde_json::from_value::<Vec<f64>>(v.clone()) {
        return Ok(vec![one]);
    }
    serde_json::from_value(v).map_err(|e| CliError::Config(format!("claims must be a list of per-node rates: {e}")))
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn resolve(flags: &Flags) -> Result<Self, CliError> {
        let (file, base) = match &flags.config {
            Some(p) => {
                let f: ConfigFile = serde_json::from_str(&read(p)?)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                (f, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (ConfigFile::default(), PathBuf::new()),
        };
        let here = PathBuf::new();
        let model = match (&flags.model, file.model) {
            (Some(p), _) => Some(market(resolve(&here, Source::Path(p.clone()))?)?),
            (None, Some(s)) => Some(market(resolve(&base, s)?)?),
            (None, None) => None,
        };
        let utility = match (&flags.utility, file.utility) {
            (Some(p), _) => Some(utility(resolve(&here, Source::Path(p.clone()))?)?),
            (None, Some(s)) => Some(utility(resolve(&base, s)?)?),
            (None, None) => None,
        };
        let claims = match (&flags.claims, file.claims) {
            (Some(p), _) => Some(claims(resolve(&here, Source::Path(p.clone()))?)?),
            (None, Some(s)) => Some(claims(resolve(&base, s)?)?),
            (None, None) => None,
        };
        let ex = file.example.unwrap_or_default();
        let grid = (
            positive("grid-min", flags.grid_min.or(file.grid_min).unwrap_or(DEFAULT_GRID.0))?,
            positive("grid-max", flags.grid_max.or(file.grid_max).unwrap_or(DEFAULT_GRID.1))?,
            flags.grid_points.or(file.grid_points).unwrap_or(DEFAULT_GRID.2),
        );
        if grid.1 <= grid.0 || grid.2 < 2 {
            return Err(CliError::Config(format!("grid needs min < max and at least 2 points, got {grid:?}")));
        }
        let cfg = Self {
            model,
            utility,
            x: flags.x.or(file.x).map(|v| positive("x", v)).transpose()?,
            y: flags.y.or(file.y).map(|v| positive("y", v)).transpose()?,
            tol: positive("tol", flags.tol.or(file.tol).unwrap_or(1e-8))?,
            check_tol: flags.check_tol.or(file.check_tol).map(|v| positive("check-tol", v)).transpose()?,
            n_min: flags.n_min.or(file.n_min),
            n_max: flags.n_max.or(file.n_max),
            grid,
            jobs: flags.jobs.or(file.jobs).unwrap_or(0),
            out: flags.out.clone().or(file.out.map(|o| base.join(o))).unwrap_or_else(|| PathBuf::from("out")),
            strict: flags.strict || file.strict.unwrap_or(false),
            claims,
            example: (
                flags.example_n_max.or(ex.n_max).unwrap_or(8),
                flags.p_start.or(ex.p_start).unwrap_or(0.5),
                flags.p_step.or(ex.p_step).unwrap_or(0.05),
            ),
        };
        if cfg.example.0 == 0 {
            return Err(CliError::Config("N-max must be at least 1".into()));
        }
        Ok(cfg)
    }
}
