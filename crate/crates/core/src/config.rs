//! Run configuration: a flat `key = value` text format with `[section]`
//! headers, `#` comments and comma-separated arrays.
//!
//! ```text
//! [problem]
//! pi_low = 0
//! pi_high = 2
//! pi0 = 1
//! sigma = 1
//! cost = 1
//!
//! [grid]
//! n = 201
//! ```
//!
//! Every key except the `[problem]` arrays and `pi0` has a default; see
//! [`RunConfig`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ProblemSpec;
use crate::solver::SolveOptions;

/// Where the simulator takes its actions from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicySource {
    /// The policy extracted by `solve` (read back from `policy.csv`).
    Solver,
    /// Stop immediately.
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Obstacle,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    pub init: InitKind,
    pub tol: f64,
    pub max_iters: usize,
    pub contact_tol: f64,
}

impl SolverConfig {
    pub fn options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.tol,
            max_iters: self.max_iters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateConfig {
    pub paths: usize,
    pub dt: f64,
    pub t_max: f64,
    pub seed: u64,
    pub x0: Vec<f64>,
    pub policy: PolicySource,
    pub write_episodes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub alpha: Vec<f64>,
    pub eps: Vec<f64>,
    pub pair_budget: u128,
    /// Grid nodes per axis for the doubling search.
    pub doubling_n: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub spec: ProblemSpec,
    pub grid: Vec<usize>,
    pub solver: SolverConfig,
    pub simulate: SimulateConfig,
    pub verify: VerifyConfig,
    /// Not echoed into the run summary, so outputs compare equal across
    /// directories.
    #[serde(skip)]
    pub output: PathBuf,
}

const KEYS: &[(&str, &[&str])] = &[
    (
        "problem",
        &["pi_low", "pi_high", "pi0", "sigma", "cost", "shift"],
    ),
    ("grid", &["n"]),
    ("solver", &["init", "tol", "max_iters", "contact_tol"]),
    (
        "simulate",
        &["paths", "dt", "t_max", "seed", "x0", "policy", "episodes"],
    ),
    ("verify", &["alpha", "eps", "pair_budget", "doubling_n"]),
    ("output", &["dir"]),
];

/// Raw `section.key -> (value, line)` entries.
type Entries = BTreeMap<(String, String), (String, usize)>;

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

fn parse_entries(text: &str) -> Result<Entries> {
    let mut entries = Entries::new();
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("unterminated section header `{line}`"),
            })?;
            let name = name.trim();
            if !KEYS.iter().any(|(s, _)| *s == name) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("unknown section `{name}`"),
                });
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("expected `key = value`, found `{line}`"),
        })?;
        let key = key.trim();
        let value = value.trim();
        let Some(sec) = &section else {
            return Err(Error::Parse {
                line: line_no,
                message: format!("key `{key}` appears before any section"),
            });
        };
        let allowed = KEYS
            .iter()
            .find(|(s, _)| s == sec)
            .map(|(_, k)| *k)
            .unwrap_or(&[]);
        if !allowed.contains(&key) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("unknown key `{key}` in section [{sec}]"),
            });
        }
        if value.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("key `{key}` has no value"),
            });
        }
        let slot = (sec.clone(), key.to_string());
        if let Some((_, first)) = entries.get(&slot) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("duplicate key `{key}` (first set on line {first})"),
            });
        }
        entries.insert(slot, (value.to_string(), line_no));
    }
    Ok(entries)
}

struct Reader {
    entries: Entries,
}

impl Reader {
    fn raw(&self, section: &str, key: &str) -> Option<&(String, usize)> {
        self.entries.get(&(section.to_string(), key.to_string()))
    }

    fn scalar<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|_| Error::Parse {
                line: *line,
                message: format!("cannot parse `{key}` value `{v}`"),
            }),
        }
    }

    fn list<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(',')
                .map(|item| {
                    item.trim().parse().map_err(|_| Error::Parse {
                        line: *line,
                        message: format!("cannot parse `{key}` entry `{}`", item.trim()),
                    })
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    fn required_list(&self, key: &str) -> Result<Vec<f64>> {
        self.list("problem", key)?.ok_or_else(|| Error::Validation {
            field: key.into(),
            message: "required".into(),
        })
    }
}

fn invalid(field: &str, message: impl Into<String>) -> Error {
    Error::Validation {
        field: field.into(),
        message: message.into(),
    }
}

/// Per-alternative list: a single entry is broadcast to every alternative.
fn broadcast<T: Clone>(field: &str, values: Vec<T>, d: usize) -> Result<Vec<T>> {
    match values.len() {
        1 => Ok(vec![values[0].clone(); d]),
        n if n == d => Ok(values),
        n => Err(invalid(
            field,
            format!("expected 1 or {d} entries, found {n}"),
        )),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let r = Reader {
            entries: parse_entries(text)?,
        };

        let pi_high = r.required_list("pi_high")?;
        let d = pi_high.len();
        let pi_low = broadcast("pi_low", r.required_list("pi_low")?, d)?;
        let sigma = broadcast("sigma", r.required_list("sigma")?, d)?;
        let cost = broadcast("cost", r.required_list("cost")?, d)?;
        let pi0 = r
            .scalar::<f64>("problem", "pi0")?
            .ok_or_else(|| invalid("pi0", "required"))?;
        let shift = r.scalar::<f64>("problem", "shift")?;
        let spec = ProblemSpec::new(pi_low, pi_high, pi0, sigma, cost, shift)
            .map_err(|v| invalid(v.field(), format!("{}: {v}", v.code())))?;

        let default_n = if d == 1 { 201 } else { 51 };
        let grid = broadcast("n", r.list("grid", "n")?.unwrap_or(vec![default_n]), d)?;
        if let Some(&n) = grid.iter().find(|&&n| n < 3) {
            return Err(invalid(
                "n",
                format!("at least 3 nodes per axis, found {n}"),
            ));
        }

        let defaults = SolveOptions::default_for(d);
        let init = match r.scalar::<String>("solver", "init")?.as_deref() {
            None | Some("obstacle") => InitKind::Obstacle,
            Some("upper") => InitKind::Upper,
            Some(other) => return Err(invalid("init", format!("`{other}` is not obstacle|upper"))),
        };
        let solver = SolverConfig {
            init,
            tol: r.scalar("solver", "tol")?.unwrap_or(defaults.tol),
            max_iters: r
                .scalar("solver", "max_iters")?
                .unwrap_or(defaults.max_iters),
            contact_tol: r.scalar("solver", "contact_tol")?.unwrap_or(1e-5),
        };
        if !(solver.tol > 0.0) {
            return Err(invalid("tol", "must be positive"));
        }
        if solver.max_iters == 0 {
            return Err(invalid("max_iters", "must be positive"));
        }
        if !(solver.contact_tol >= 0.0) {
            return Err(invalid("contact_tol", "must be nonnegative"));
        }

        let k_max = spec.diffusion().max_k();
        let k_min = spec.diffusion().min_k();
        let policy = match r.scalar::<String>("simulate", "policy")?.as_deref() {
            None | Some("solver") => PolicySource::Solver,
            Some("stop") => PolicySource::Stop,
            Some(other) => return Err(invalid("policy", format!("`{other}` is not solver|stop"))),
        };
        let simulate = SimulateConfig {
            paths: r.scalar("simulate", "paths")?.unwrap_or(10_000),
            dt: r.scalar("simulate", "dt")?.unwrap_or(1e-3 / k_max),
            t_max: r.scalar("simulate", "t_max")?.unwrap_or(50.0 / k_min),
            seed: r.scalar("simulate", "seed")?.unwrap_or(0),
            x0: broadcast("x0", r.list("simulate", "x0")?.unwrap_or(vec![0.5]), d)?,
            policy,
            write_episodes: r.scalar("simulate", "episodes")?.unwrap_or(false),
        };
        if simulate.paths < 2 {
            return Err(invalid(
                "paths",
                "at least 2 paths are needed for a standard error",
            ));
        }
        if !(simulate.dt > 0.0 && simulate.dt.is_finite()) {
            return Err(invalid("dt", "must be positive"));
        }
        if !(simulate.t_max >= simulate.dt && simulate.t_max.is_finite()) {
            return Err(invalid("t_max", "must be finite and at least dt"));
        }
        if simulate.x0.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
            return Err(invalid("x0", "beliefs must lie strictly inside (0, 1)"));
        }

        let verify = VerifyConfig {
            alpha: r
                .list("verify", "alpha")?
                .unwrap_or(vec![1.0, 10.0, 100.0, 1000.0]),
            eps: r.list("verify", "eps")?.unwrap_or(vec![1e-1, 1e-2, 1e-3]),
            pair_budget: r.scalar("verify", "pair_budget")?.unwrap_or(100_000_000),
            doubling_n: broadcast(
                "doubling_n",
                r.list("verify", "doubling_n")?
                    .unwrap_or(vec![if d == 1 { 101 } else { 21 }]),
                d,
            )?,
        };
        if verify.alpha.iter().any(|&a| !(a > 0.0)) {
            return Err(invalid("alpha", "entries must be positive"));
        }
        if verify.eps.iter().any(|&e| !(e >= 0.0)) {
            return Err(invalid("eps", "entries must be nonnegative"));
        }
        if verify.doubling_n.iter().any(|&n| n < 3) {
            return Err(invalid("doubling_n", "at least 3 nodes per axis"));
        }

        let output = r
            .scalar::<String>("output", "dir")?
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("out"));

        Ok(RunConfig {
            spec,
            grid,
            solver,
            simulate,
            verify,
            output,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::parse(&text)
    }
}
