//! Fixed-format text outputs. Floats are written with 17 significant digits,
//! which round-trips every `f64`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::continuity::PathResult;
use crate::error::{Error, Result};
use crate::geometry::Sign;
use crate::system::CoupledState;

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn format_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "nan".to_string(), format_float)
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn path_csv_header(k: usize) -> String {
    let mut cols = vec![
        "t".to_string(),
        "newton_iters".into(),
        "residual_sup".into(),
        "residual_l2".into(),
    ];
    cols.extend((1..=k).map(|i| format!("sup_phi_{i}")));
    cols.extend((1..=k).map(|i| format!("inf_phi_{i}")));
    for c in [
        "u_max",
        "lambda",
        "jensen_gap",
        "jensen_bound",
        "min_eig_L",
        "dt",
    ] {
        cols.push(c.into());
    }
    cols.join(",")
}

/// One row per accepted step; disabled monitors print `nan`.
pub fn path_csv(result: &PathResult, k: usize) -> String {
    let mut out = path_csv_header(k);
    out.push('\n');
    for step in &result.accepted {
        let r = &step.record;
        let mut row = vec![
            format_float(r.t),
            r.newton_iters.to_string(),
            format_float(r.residual_sup),
            format_float(r.residual_l2),
        ];
        match &r.c0 {
            Some(c0) => {
                row.extend(c0.sup.iter().map(|v| format_float(*v)));
                row.extend(c0.inf.iter().map(|v| format_float(*v)));
            }
            None => row.extend((0..2 * k).map(|_| "nan".to_string())),
        }
        row.push(format_opt(r.u_max));
        row.push(format_float(r.lambda));
        row.push(format_opt(r.jensen.as_ref().map(|j| j.gap)));
        row.push(format_opt(r.jensen.as_ref().map(|j| j.bound)));
        row.push(format_opt(r.min_eig));
        row.push(format_float(r.dt));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Header `CKE v1 N k n t sigma`, then `N` rows of `k` values.
pub fn solution_dump(state: &CoupledState, complex_dim: usize) -> String {
    let n = state.num_nodes();
    let k = state.k();
    let mut out = format!(
        "CKE v1 {n} {k} {complex_dim} {} {}\n",
        format_float(state.t()),
        state.sign().sigma() as i32
    );
    for p in 0..n {
        let row: Vec<String> = (0..k).map(|i| format_float(state.phi(i)[p])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionDump {
    pub complex_dim: usize,
    pub state: CoupledState,
}

pub fn parse_solution(text: &str) -> std::result::Result<SolutionDump, (usize, String)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or((1, "empty file".to_string()))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 7 || h[0] != "CKE" || h[1] != "v1" {
        return Err((1, "expected header `CKE v1 N k n t sigma`".into()));
    }
    let int = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| (1, format!("bad integer `{s}`")))
    };
    let (n, k, dim) = (int(h[2])?, int(h[3])?, int(h[4])?);
    let t: f64 = h[5]
        .parse()
        .map_err(|_| (1, format!("bad parameter `{}`", h[5])))?;
    let sign = match h[6] {
        "1" => Sign::AntiFano,
        "-1" => Sign::Fano,
        other => return Err((1, format!("sigma must be 1 or -1, got `{other}`"))),
    };
    if k == 0 {
        return Err((1, "k must be positive".into()));
    }
    let mut phis = vec![Vec::with_capacity(n); k];
    for _ in 0..n {
        let (ln, line) = lines.next().ok_or((0, format!("expected {n} rows")))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| (ln, format!("bad number `{s}`")))
            })
            .collect::<std::result::Result<_, _>>()?;
        if vals.len() != k {
            return Err((ln, format!("expected {k} values, found {}", vals.len())));
        }
        for (phi, v) in phis.iter_mut().zip(vals) {
            phi.push(v);
        }
    }
    if let Some((ln, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err((ln, format!("unexpected trailing line `{extra}`")));
    }
    Ok(SolutionDump {
        complex_dim: dim,
        state: CoupledState::new(t, phis, sign),
    })
}

pub fn read_solution(path: &Path) -> Result<SolutionDump> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_solution(&text).map_err(|(line, reason)| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    })
}

/// Whitespace table, one row per node and one column per field. Lines
/// starting with `#` are comments.
pub fn parse_table(text: &str) -> std::result::Result<Vec<Vec<f64>>, (usize, String)> {
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| (i + 1, format!("bad number `{s}`")))
            })
            .collect::<std::result::Result<_, _>>()?;
        if columns.is_empty() {
            columns = vec![Vec::new(); vals.len()];
        }
        if vals.len() != columns.len() {
            return Err((
                i + 1,
                format!("expected {} columns, found {}", columns.len(), vals.len()),
            ));
        }
        for (c, v) in columns.iter_mut().zip(vals) {
            c.push(v);
        }
    }
    if columns.is_empty() {
        return Err((0, "no data rows".into()));
    }
    Ok(columns)
}

pub fn read_table(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_table(&text).map_err(|(line, reason)| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    })
}

pub fn format_table(columns: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for p in 0..columns[0].len() {
        let row: Vec<String> = columns.iter().map(|c| format_float(c[p])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}
