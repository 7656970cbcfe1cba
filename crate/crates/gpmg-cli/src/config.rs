//! Plain `key = value` run configuration.
//!
//! A config file is UTF-8 text, one assignment per line, `#` starting a
//! comment.  `dim`, `cells_per_axis`, and `n_levels` are required; every
//! other key has a documented default.  All values are range-checked
//! during parsing and every diagnostic carries the offending line number,
//! so a bad file is rejected before any mesh is built.

use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Multigrid,
    Direct,
    Both,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "multigrid" => Ok(Mode::Multigrid),
            "direct" => Ok(Mode::Direct),
            "both" => Ok(Mode::Both),
            other => Err(format!(
                "unknown mode '{other}' (expected multigrid, direct, or both)"
            )),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Multigrid => "multigrid",
            Mode::Direct => "direct",
            Mode::Both => "both",
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dim: usize,
    pub cells_per_axis: usize,
    pub n_levels: usize,
    pub zeta: f64,
    pub gammas: Vec<f64>,
    /// `None` leaves the choice to the solver's interaction-strength rule.
    pub damping: Option<f64>,
    pub residual_tol: f64,
    pub max_iters: usize,
    pub direct_max_dofs: usize,
    pub tol_base: f64,
    pub c_tol: f64,
    pub mode: Mode,
    pub output_dir: String,
}

pub const REQUIRED_KEYS: [&str; 3] = ["dim", "cells_per_axis", "n_levels"];

/// One `line N: ...` message per problem; parsing stops at the first.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(line: usize, msg: impl fmt::Display) -> Result<T, ConfigError> {
    Err(ConfigError(format!("line {line}: {msg}")))
}

fn parse_num<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T, ConfigError> {
    raw.parse()
        .map_err(|_| ConfigError(format!("line {line}: malformed value '{raw}' for {key}")))
}

#[derive(Default)]
struct Draft {
    dim: Option<usize>,
    cells_per_axis: Option<usize>,
    n_levels: Option<usize>,
    zeta: Option<f64>,
    gammas: Option<(Vec<f64>, usize)>,
    damping: Option<f64>,
    residual_tol: Option<f64>,
    max_iters: Option<usize>,
    direct_max_dofs: Option<usize>,
    tol_base: Option<f64>,
    c_tol: Option<f64>,
    mode: Option<Mode>,
    output_dir: Option<String>,
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut d = Draft::default();
    let mut seen: Vec<&str> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = match raw_line.find('#') {
            Some(p) => &raw_line[..p],
            None => raw_line,
        };
        let stripped = stripped.trim();
        if stripped.is_empty() {
            continue;
        }
        let Some((key, value)) = stripped.split_once('=') else {
            return err(line, format!("expected `key = value`, got '{stripped}'"));
        };
        let key = key.trim();
        let value = value.trim();
        if value.is_empty() {
            return err(line, format!("empty value for {key}"));
        }
        if seen.contains(&key) {
            return err(line, format!("duplicate key '{key}'"));
        }
        match key {
            "dim" => {
                let v: usize = parse_num(line, key, value)?;
                if !(1..=3).contains(&v) {
                    return err(line, format!("dim must be 1, 2, or 3, got {v}"));
                }
                d.dim = Some(v);
            }
            "cells_per_axis" => {
                let v: usize = parse_num(line, key, value)?;
                if v < 2 {
                    return err(line, format!("cells_per_axis must be at least 2, got {v}"));
                }
                d.cells_per_axis = Some(v);
            }
            "n_levels" => {
                let v: usize = parse_num(line, key, value)?;
                if v < 1 {
                    return err(line, "n_levels must be at least 1");
                }
                d.n_levels = Some(v);
            }
            "zeta" => {
                let v: f64 = parse_num(line, key, value)?;
                if !v.is_finite() || v < 0.0 {
                    return err(
                        line,
                        format!("zeta must be finite and nonnegative, got {v}"),
                    );
                }
                d.zeta = Some(v);
            }
            "gammas" => {
                let mut gs = Vec::new();
                for part in value.split(',') {
                    let g: f64 = parse_num(line, key, part.trim())?;
                    if !g.is_finite() || g < 0.0 {
                        return err(
                            line,
                            format!("trap coefficients must be finite and nonnegative, got {g}"),
                        );
                    }
                    gs.push(g);
                }
                d.gammas = Some((gs, line));
            }
            "damping" => {
                let v: f64 = parse_num(line, key, value)?;
                if !(v > 0.0 && v <= 1.0) {
                    return err(line, format!("damping must lie in (0, 1], got {v}"));
                }
                d.damping = Some(v);
            }
            "residual_tol" => {
                let v: f64 = parse_num(line, key, value)?;
                if !(v.is_finite() && v > 0.0) {
                    return err(line, format!("residual_tol must be positive, got {v}"));
                }
                d.residual_tol = Some(v);
            }
            "max_iters" => {
                let v: usize = parse_num(line, key, value)?;
                if v < 1 {
                    return err(line, "max_iters must be at least 1");
                }
                d.max_iters = Some(v);
            }
            "direct_max_dofs" => {
                d.direct_max_dofs = Some(parse_num(line, key, value)?);
            }
            "tol_base" => {
                let v: f64 = parse_num(line, key, value)?;
                if !(v.is_finite() && v > 0.0) {
                    return err(line, format!("tol_base must be positive, got {v}"));
                }
                d.tol_base = Some(v);
            }
            "c_tol" => {
                let v: f64 = parse_num(line, key, value)?;
                if !(v.is_finite() && v > 0.0) {
                    return err(line, format!("c_tol must be positive, got {v}"));
                }
                d.c_tol = Some(v);
            }
            "mode" => match value.parse() {
                Ok(m) => d.mode = Some(m),
                Err(e) => return err(line, e),
            },
            "output_dir" => d.output_dir = Some(value.to_string()),
            other => return err(line, format!("unknown key '{other}'")),
        }
        seen.push(key);
    }

    let missing: Vec<&str> = REQUIRED_KEYS
        .iter()
        .copied()
        .filter(|k| !seen.contains(k))
        .collect();
    if !missing.is_empty() {
        return Err(ConfigError(format!(
            "missing required keys: {}",
            missing.join(", ")
        )));
    }
    let dim = d.dim.unwrap();
    let gammas = match d.gammas {
        Some((gs, line)) => {
            if gs.len() != dim {
                return err(
                    line,
                    format!("gammas lists {} coefficients for dim {dim}", gs.len()),
                );
            }
            gs
        }
        None => vec![0.0; dim],
    };
    Ok(RunConfig {
        dim,
        cells_per_axis: d.cells_per_axis.unwrap(),
        n_levels: d.n_levels.unwrap(),
        zeta: d.zeta.unwrap_or(0.0),
        gammas,
        damping: d.damping,
        residual_tol: d.residual_tol.unwrap_or(1e-10),
        max_iters: d.max_iters.unwrap_or(500),
        direct_max_dofs: d.direct_max_dofs.unwrap_or(20_000),
        tol_base: d.tol_base.unwrap_or(1e-10),
        c_tol: d.c_tol.unwrap_or(1e-2),
        mode: d.mode.unwrap_or(Mode::Multigrid),
        output_dir: d.output_dir.unwrap_or_else(|| "out".to_string()),
    })
}
