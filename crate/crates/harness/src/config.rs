//! Run configuration: a flat `key = value` file with per-key overrides.
//!
//! Every key has a default, and the defaults describe the desk-scale
//! planesource run (200 cells, 100 moments, CFL 0.99, `ϑ̄ = 10⁻²` relative,
//! `c = 1`, `t_end = 1`).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dlra::{EtaColumns, MethodKind, OdeMethod, Schedule, StepConfig, Stepper, ThetaMode};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProblemKind {
    #[default]
    Planesource,
    Sylvester,
    Tangential,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::Planesource => "planesource",
            ProblemKind::Sylvester => "sylvester",
            ProblemKind::Tangential => "tangential",
        })
    }
}

impl FromStr for ProblemKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "planesource" => Ok(ProblemKind::Planesource),
            "sylvester" => Ok(ProblemKind::Sylvester),
            "tangential" => Ok(ProblemKind::Tangential),
            other => Err(format!(
                "unknown problem '{other}' (planesource, sylvester, tangential)"
            )),
        }
    }
}

/// Keys in the order they are written back out.
pub const KEYS: &[&str] = &[
    "problem",
    "integrator",
    "theta_bar",
    "theta_mode",
    "c_reject",
    "r_max",
    "max_retries",
    "substep_method",
    "substep_count",
    "eta_columns",
    "nx",
    "nmoments",
    "cfl",
    "t_end",
    "h",
    "snapshots",
    "seed",
    "output_dir",
    "initial_rank",
    "size",
    "source_rank",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub integrator: Stepper,
    pub theta_bar: f64,
    pub theta_mode: ThetaMode,
    pub c_reject: f64,
    /// `None` lets the rank grow up to `min(m, n)`.
    pub r_max: Option<usize>,
    pub max_retries: usize,
    pub substep_method: MethodKind,
    pub substep_count: usize,
    pub eta_columns: EtaColumns,
    pub nx: usize,
    pub nmoments: usize,
    pub cfl: f64,
    pub t_end: f64,
    /// Step size of the sylvester and tangential problems; planesource
    /// steps with `cfl · Δx`.
    pub h: f64,
    /// `None` takes a single snapshot at `t_end`.
    pub snapshots: Option<Vec<f64>>,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Planesource: seed rank of the initial factorization. Sylvester and
    /// tangential: rank of the initial value. The default 2 lets planesource
    /// leave the symmetric subspace the exact rank-1 start is confined to.
    pub initial_rank: usize,
    /// `m = n` of the sylvester and tangential problems.
    pub size: usize,
    /// Rank of the sylvester source term (0 for none).
    pub source_rank: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::Planesource,
            integrator: Stepper::Parallel,
            theta_bar: 1e-2,
            theta_mode: ThetaMode::Relative,
            c_reject: 1.0,
            r_max: None,
            max_retries: 10,
            substep_method: MethodKind::Euler,
            substep_count: 1,
            eta_columns: EtaColumns::All,
            nx: 200,
            nmoments: 100,
            cfl: 0.99,
            t_end: 1.0,
            h: 1.0 / 64.0,
            snapshots: None,
            seed: 0,
            output_dir: PathBuf::from("out"),
            initial_rank: 2,
            size: 100,
            source_rank: 3,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| HarnessError::config(key, format!("cannot parse '{value}': {e}")))
}

fn format_list(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Parses a config file body on top of the defaults. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_str(text)?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_str(&text)
    }

    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::config(line, format!("line {} has no '='", lineno + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Sets one key. Hyphens in `key` are read as underscores so CLI flag
    /// names work too.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.replace('-', "_");
        let k = key.as_str();
        match k {
            "problem" => self.problem = value.parse().map_err(|e: String| HarnessError::config(k, e))?,
            "integrator" => self.integrator = parse(k, value)?,
            "theta_bar" => self.theta_bar = parse(k, value)?,
            "theta_mode" => self.theta_mode = parse(k, value)?,
            "c_reject" => self.c_reject = parse(k, value)?,
            "r_max" => {
                self.r_max = if value.eq_ignore_ascii_case("none") {
                    None
                } else {
                    Some(parse(k, value)?)
                }
            }
            "max_retries" => self.max_retries = parse(k, value)?,
            "substep_method" => self.substep_method = parse(k, value)?,
            "substep_count" => self.substep_count = parse(k, value)?,
            "eta_columns" => self.eta_columns = parse(k, value)?,
            "nx" => self.nx = parse(k, value)?,
            "nmoments" => self.nmoments = parse(k, value)?,
            "cfl" => self.cfl = parse(k, value)?,
            "t_end" => self.t_end = parse(k, value)?,
            "h" => self.h = parse(k, value)?,
            "snapshots" => {
                self.snapshots = match value {
                    "t_end" => None,
                    "none" | "" => Some(Vec::new()),
                    list => Some(
                        list.split(',')
                            .map(|s| parse::<f64>(k, s.trim()))
                            .collect::<Result<Vec<_>>>()?,
                    ),
                }
            }
            "seed" => self.seed = parse(k, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "initial_rank" => self.initial_rank = parse(k, value)?,
            "size" => self.size = parse(k, value)?,
            "source_rank" => self.source_rank = parse(k, value)?,
            _ => return Err(HarnessError::config(k, "unknown key")),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "problem" => self.problem.to_string(),
            "integrator" => self.integrator.to_string(),
            "theta_bar" => self.theta_bar.to_string(),
            "theta_mode" => self.theta_mode.to_string(),
            "c_reject" => self.c_reject.to_string(),
            "r_max" => self.r_max.map_or_else(|| "none".to_string(), |r| r.to_string()),
            "max_retries" => self.max_retries.to_string(),
            "substep_method" => self.substep_method.to_string(),
            "substep_count" => self.substep_count.to_string(),
            "eta_columns" => self.eta_columns.to_string(),
            "nx" => self.nx.to_string(),
            "nmoments" => self.nmoments.to_string(),
            "cfl" => self.cfl.to_string(),
            "t_end" => self.t_end.to_string(),
            "h" => self.h.to_string(),
            "snapshots" => match &self.snapshots {
                None => "t_end".to_string(),
                Some(v) if v.is_empty() => "none".to_string(),
                Some(v) => format_list(v),
            },
            "seed" => self.seed.to_string(),
            "output_dir" => self.output_dir.display().to_string(),
            "initial_rank" => self.initial_rank.to_string(),
            "size" => self.size.to_string(),
            "source_rank" => self.source_rank.to_string(),
            _ => return None,
        })
    }

    /// All keys with their resolved values, in [`KEYS`] order. Feeding the
    /// result back through [`RunConfig::parse_str`] gives the same config.
    pub fn to_key_values(&self) -> Vec<(&'static str, String)> {
        KEYS.iter()
            .map(|&k| (k, self.get(k).expect("every key has a value")))
            .collect()
    }

    pub fn to_config_string(&self) -> String {
        self.to_key_values()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        self.snapshots.clone().unwrap_or_else(|| vec![self.t_end])
    }

    pub fn step_config(&self) -> Result<StepConfig> {
        let method = OdeMethod::new(self.substep_method, self.substep_count)
            .map_err(|e| HarnessError::config("substep_count", e.to_string()))?;
        Ok(StepConfig {
            theta_bar: self.theta_bar,
            theta_mode: self.theta_mode,
            c_reject: self.c_reject,
            r_max: self.r_max,
            max_retries: self.max_retries,
            method,
            eta_columns: self.eta_columns,
            rejection: true,
            schedule: Schedule::Parallel,
        })
    }

    /// Checks value ranges; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        let fail = |k: &str, m: &str| Err(HarnessError::config(k, m));
        if !(self.theta_bar >= 0.0 && self.theta_bar.is_finite()) {
            return fail("theta_bar", "must be finite and >= 0");
        }
        if !(self.c_reject > 0.0 && self.c_reject.is_finite()) {
            return fail("c_reject", "must be finite and > 0");
        }
        if self.r_max == Some(0) {
            return fail("r_max", "must be >= 1");
        }
        if self.substep_count == 0 {
            return fail("substep_count", "must be >= 1");
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return fail("t_end", "must be finite and >= 0");
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return fail("h", "must be finite and > 0");
        }
        if self.initial_rank == 0 {
            return fail("initial_rank", "must be >= 1");
        }
        match self.problem {
            ProblemKind::Planesource => {
                if self.nx < 2 {
                    return fail("nx", "need at least 2 cells");
                }
                if self.nmoments < 1 {
                    return fail("nmoments", "need at least 1 moment");
                }
                if !(self.cfl > 0.0 && self.cfl <= 1.0) {
                    return fail("cfl", "must lie in (0, 1]");
                }
                if self.initial_rank > self.nx.min(self.nmoments) {
                    return fail("initial_rank", "exceeds min(nx, nmoments)");
                }
            }
            ProblemKind::Sylvester | ProblemKind::Tangential => {
                if self.size < 2 * self.initial_rank.max(self.source_rank) {
                    return fail("size", "must be at least twice the initial and source ranks");
                }
            }
        }
        // Tolerance matches the nearest-grid-point rule of the time loop.
        let slack = 1e-9 * self.t_end.max(1.0);
        for &t in &self.snapshot_times() {
            if !(t >= -slack && t <= self.t_end + slack) {
                return fail("snapshots", &format!("time {t} outside [0, {}]", self.t_end));
            }
        }
        self.step_config()?
            .validate()
            .map_err(|e| HarnessError::config("theta_bar", e.to_string()))?;
        Ok(())
    }

    /// Keys that define the problem and its time grid, as opposed to the
    /// integrator settings.
    pub fn problem_keys(&self) -> Vec<(&'static str, String)> {
        let mut keys = vec!["problem", "t_end", "snapshots", "initial_rank"];
        match self.problem {
            ProblemKind::Planesource => keys.extend(["nx", "nmoments", "cfl"]),
            ProblemKind::Sylvester => keys.extend(["h", "seed", "size", "source_rank"]),
            ProblemKind::Tangential => keys.extend(["h", "seed", "size"]),
        }
        keys.into_iter().map(|k| (k, self.get(k).expect("known key"))).collect()
    }
}
