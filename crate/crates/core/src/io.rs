//! CSV output of fields and episodes, and reading a policy back.
//!
//! Floats are written as `{:.16e}`: 17 significant digits, enough to
//! round-trip every `f64`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Action, Grid, PolicyField, ValueField};
use crate::simulator::EpisodeResult;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn coordinate_header(d: usize) -> String {
    (1..=d)
        .map(|i| format!("x_{i}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn write_node_rows<W: Write>(
    w: &mut W,
    grid: &Grid,
    column: &str,
    mut cell: impl FnMut(usize) -> String,
) -> Result<()> {
    writeln!(w, "{},{column}", coordinate_header(grid.dim()))?;
    for k in 0..grid.len() {
        let coords: Vec<String> = grid.point(k).into_iter().map(fmt_f64).collect();
        writeln!(w, "{},{}", coords.join(","), cell(k))?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// One row per node: coordinates then the field value.
pub fn write_value_csv(path: &Path, field: &ValueField) -> Result<()> {
    let mut w = create(path)?;
    write_node_rows(&mut w, &field.grid, "value", |k| fmt_f64(field.values[k]))?;
    w.flush()?;
    Ok(())
}

pub fn write_residual_csv(path: &Path, residual: &ValueField) -> Result<()> {
    let mut w = create(path)?;
    write_node_rows(&mut w, &residual.grid, "residual", |k| {
        fmt_f64(residual.values[k])
    })?;
    w.flush()?;
    Ok(())
}

/// Actions as integer codes: 0 stop, `i` learn about alternative `i` (1-based).
pub fn write_policy_csv(path: &Path, policy: &PolicyField) -> Result<()> {
    let mut w = create(path)?;
    write_node_rows(&mut w, &policy.grid, "action", |k| {
        policy.actions[k].code().to_string()
    })?;
    w.flush()?;
    Ok(())
}

pub fn write_episodes_csv(path: &Path, episodes: &[EpisodeResult]) -> Result<()> {
    let mut w = create(path)?;
    let d = episodes.first().map_or(0, |e| e.terminal_belief.len());
    let mut header = vec![
        "path".to_string(),
        "payoff".into(),
        "terminal_reward".into(),
        "learning_cost".into(),
        "stop_time".into(),
        "truncated".into(),
        "saturations".into(),
    ];
    header.extend((1..=d).map(|i| format!("learning_time_{i}")));
    header.extend((1..=d).map(|i| format!("terminal_x_{i}")));
    writeln!(w, "{}", header.join(","))?;
    for (m, e) in episodes.iter().enumerate() {
        let mut row = vec![
            m.to_string(),
            fmt_f64(e.payoff),
            fmt_f64(e.terminal_reward),
            fmt_f64(e.learning_cost),
            fmt_f64(e.stop_time),
            u8::from(e.truncated).to_string(),
            e.saturations.to_string(),
        ];
        row.extend(e.learning_time.iter().copied().map(fmt_f64));
        row.extend(e.terminal_belief.iter().copied().map(fmt_f64));
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Reads a policy written by [`write_policy_csv`]. The grid shape is
/// recovered from the number of distinct coordinates along each axis.
pub fn read_policy_csv(path: &Path) -> Result<PolicyField> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty policy file".into(),
    })??;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let d = columns.len().saturating_sub(1);
    if d == 0 || columns[d] != "action" {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header x_1,..,x_d,action, found `{header}`"),
        });
    }
    let mut points = Vec::new();
    let mut codes = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let lineno = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != d + 1 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {} columns, found {}", d + 1, cells.len()),
            });
        }
        let parse_err = |what: &str, cell: &str| Error::Parse {
            line: lineno,
            message: format!("bad {what} `{cell}`"),
        };
        let x = cells[..d]
            .iter()
            .map(|c| c.parse::<f64>().map_err(|_| parse_err("coordinate", c)))
            .collect::<Result<Vec<_>>>()?;
        let code = cells[d]
            .parse::<usize>()
            .map_err(|_| parse_err("action", cells[d]))?;
        points.push(x);
        codes.push(code);
    }
    let shape: Vec<usize> = (0..d)
        .map(|a| {
            let mut c: Vec<f64> = points.iter().map(|p| p[a]).collect();
            c.sort_by(f64::total_cmp);
            c.dedup();
            c.len()
        })
        .collect();
    let grid = Grid::new(&shape)?;
    if grid.len() != points.len() {
        return Err(Error::Parse {
            line: 0,
            message: format!("{} rows do not fill a {:?} grid", points.len(), shape),
        });
    }
    let mut actions = vec![None; grid.len()];
    for (x, code) in points.iter().zip(&codes) {
        let k = grid.nearest(x);
        if *code > d {
            return Err(Error::Parse {
                line: 0,
                message: format!("action code {code} exceeds dimension {d}"),
            });
        }
        actions[k] = Some(Action::from_code(*code));
    }
    let actions = actions
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Parse {
            line: 0,
            message: "policy rows do not cover the grid".into(),
        })?;
    Ok(PolicyField { grid, actions })
}
