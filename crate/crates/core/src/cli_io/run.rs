use std::path::{Path, PathBuf};

use super::config::{BackgroundSpec, GeometrySpec, MeshSource, RunConfig};
use super::manufacture_background;
use super::output::{
    format_float, format_table, path_csv, read_table, solution_dump, write_atomic,
};
use crate::continuity::{run_path_monitored, PathResult, PathStatus};
use crate::error::{Error, Result};
use crate::geometry::{
    build_radial_geometry, build_surface_geometry, load_off_mesh, BackgroundSplit,
    DiscreteGeometry, Sign, TriangleMesh,
};
use crate::linear_analysis::{
    assemble_l, smallest_eigenvalue, uniqueness_probe, weitzenbock_check,
};
use crate::system::CoupledState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Verify,
    Manufacture,
    Green,
}

/// 0 when the path reached `t_max`, 2 otherwise.
pub fn exit_code(status: &PathStatus) -> i32 {
    match status {
        PathStatus::ReachedTMax => 0,
        _ => 2,
    }
}

fn load_geometry(cfg: &RunConfig) -> Result<(DiscreteGeometry, Option<BackgroundSplit>)> {
    match &cfg.geometry {
        GeometrySpec::Radial { n, a, grid_size } => {
            let (geom, bg) = build_radial_geometry(*n, *grid_size, a)?;
            Ok((geom, Some(bg)))
        }
        GeometrySpec::Mesh { source, .. } => {
            let mesh = match source {
                MeshSource::File(p) => load_off_mesh(p)?,
                MeshSource::Icosphere(s) => TriangleMesh::icosphere(*s),
            };
            Ok((build_surface_geometry(mesh)?, None))
        }
    }
}

/// Geometry and background described by the config.
pub fn load_problem(cfg: &RunConfig) -> Result<(DiscreteGeometry, BackgroundSplit)> {
    let (geom, radial) = load_geometry(cfg)?;
    if let Some(bg) = radial {
        return Ok((geom, bg));
    }
    let GeometrySpec::Mesh { background, .. } = &cfg.geometry else {
        unreachable!()
    };
    let densities = match background {
        None => return Err(Error::config("geometry.f_spec", "missing")),
        Some(BackgroundSpec::Preset(fields)) => {
            let positions = geom.positions();
            fields.iter().map(|f| f.evaluate(&positions)).collect()
        }
        Some(BackgroundSpec::File(path)) => read_table(path)?,
    };
    let bg = BackgroundSplit::from_densities(&geom, densities, cfg.sign)?;
    Ok((geom, bg))
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub result: PathResult,
    pub complex_dim: usize,
    pub files: Vec<PathBuf>,
}

/// Runs the path and writes `path.csv` and `solution.txt` (last accepted state).
pub fn run_solve(cfg: &RunConfig) -> Result<SolveOutcome> {
    let (geom, bg) = load_problem(cfg)?;
    solve_loaded(cfg, &geom, &bg)
}

fn solve_loaded(
    cfg: &RunConfig,
    geom: &DiscreteGeometry,
    bg: &BackgroundSplit,
) -> Result<SolveOutcome> {
    let result = run_path_monitored(geom, bg, &cfg.path, &cfg.monitors);
    let csv = cfg.output_dir.join("path.csv");
    write_atomic(&csv, &path_csv(&result, bg.k()))?;
    let mut files = vec![csv];
    if let Some(state) = result.last_state() {
        let dump = cfg.output_dir.join("solution.txt");
        write_atomic(&dump, &solution_dump(state, geom.complex_dim()))?;
        files.push(dump);
    }
    Ok(SolveOutcome {
        result,
        complex_dim: geom.complex_dim(),
        files,
    })
}

#[derive(Debug, Clone)]
pub struct VerifyOutcome {
    pub solve: SolveOutcome,
    pub lines: Vec<String>,
    pub pass: bool,
}

/// Solves, then runs the spectrum, uniqueness, and Weitzenbock checks on the
/// final state and writes `verify.txt`. Checks outside their hypotheses
/// (Fano sign, `t < 1`) are reported as informational and do not fail.
pub fn run_verify(cfg: &RunConfig) -> Result<VerifyOutcome> {
    let (geom, bg) = load_problem(cfg)?;
    let solve = solve_loaded(cfg, &geom, &bg)?;
    let mut lines = vec![format!("path {}", solve.result.status)];
    let mut pass = solve.result.status == PathStatus::ReachedTMax;
    let Some(state) = solve.result.last_state().cloned() else {
        return finish_verify(cfg, solve, lines, false);
    };
    let anti = bg.sign() == Sign::AntiFano;
    let tag = |required: bool, ok: bool| match (required, ok) {
        (true, true) => "pass",
        (true, false) => "FAIL",
        (false, _) => "info",
    };

    match assemble_l(&geom, &bg, &state).and_then(|op| smallest_eigenvalue(&op)) {
        Ok((value, _)) => {
            let ok = value > 1e-6;
            pass &= ok || !anti;
            lines.push(format!(
                "min_eig_L {} {}",
                format_float(value),
                tag(anti, ok)
            ));
        }
        Err(e) => {
            pass &= !anti;
            lines.push(format!("min_eig_L error: {e} {}", tag(anti, false)));
        }
    }

    let required = anti && state.t() == 1.0;
    for seed in 0..cfg.verify.uniqueness_seeds {
        let out = uniqueness_probe(
            &geom,
            &bg,
            &state,
            cfg.verify.uniqueness_magnitude,
            seed,
            &cfg.path,
        );
        pass &= out.pass || !required;
        let detail = out.failure.map(|f| format!(" ({f})")).unwrap_or_default();
        lines.push(format!(
            "uniqueness seed={seed} distance={}{detail} {}",
            format_float(out.distance),
            tag(required, out.pass)
        ));
    }

    if cfg.weitzenbock {
        match weitzenbock_check(&geom, &bg, &state, cfg.weitzenbock_samples) {
            Ok(margins) => {
                for m in margins {
                    let ok = if anti {
                        m.margin > 0.0
                    } else {
                        m.margin >= -1e-3
                    };
                    pass &= ok;
                    lines.push(format!(
                        "weitzenbock equation={} sample={} margin={} {}",
                        m.equation + 1,
                        m.sample + 1,
                        format_float(m.margin),
                        tag(true, ok)
                    ));
                }
            }
            Err(Error::UnsupportedBackend(reason)) => {
                lines.push(format!("weitzenbock skipped: {reason}"));
            }
            Err(e) => {
                pass = false;
                lines.push(format!("weitzenbock error: {e} FAIL"));
            }
        }
    }
    finish_verify(cfg, solve, lines, pass)
}

fn finish_verify(
    cfg: &RunConfig,
    mut solve: SolveOutcome,
    mut lines: Vec<String>,
    pass: bool,
) -> Result<VerifyOutcome> {
    lines.push(format!("verify {}", if pass { "pass" } else { "FAIL" }));
    let path = cfg.output_dir.join("verify.txt");
    write_atomic(&path, &(lines.join("\n") + "\n"))?;
    solve.files.push(path);
    Ok(VerifyOutcome { solve, lines, pass })
}

/// Writes `background.txt` (per-vertex `f_i`, usable as an `f_spec` file) and
/// `target.txt` (the exact solution at `t_star`).
pub fn run_manufacture(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let spec = cfg
        .manufacture
        .as_ref()
        .ok_or_else(|| Error::config("manufacture", "missing"))?;
    let (geom, radial) = load_geometry(cfg)?;
    if radial.is_some() {
        return Err(Error::config("geometry.type", "manufacture needs a mesh"));
    }
    let positions = geom.positions();
    let target: Vec<Vec<f64>> = spec.target.iter().map(|f| f.evaluate(&positions)).collect();
    let (bg, exact) =
        manufacture_background(&geom, &target, spec.t_star, cfg.sign, &spec.constants)?;
    let crate::geometry::Classes::Densities(f) = bg.classes() else {
        unreachable!()
    };
    let background = cfg.output_dir.join("background.txt");
    let header = format!(
        "# manufactured background: {} rows, {} columns, t_star = {}\n",
        geom.num_nodes(),
        f.len(),
        format_float(spec.t_star)
    );
    write_atomic(&background, &(header + &format_table(f)))?;
    let state = CoupledState::new(spec.t_star, exact, cfg.sign);
    let target_path = cfg.output_dir.join("target.txt");
    write_atomic(&target_path, &solution_dump(&state, 1))?;
    Ok(vec![background, target_path])
}

/// Green constant of the configured geometry with `monitors.green_samples` samples.
pub fn run_green(cfg: &RunConfig) -> Result<f64> {
    let (geom, _) = load_geometry(cfg)?;
    geom.green_constant(cfg.monitors.green_samples)
}

/// Parses the config, runs the command, prints a summary, and returns the
/// process exit code: 0 success, 1 input error, 2 stalled path or failed check.
pub fn run_command(command: Command, config: &Path) -> i32 {
    let cfg = match super::parse_config(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let outcome = match command {
        Command::Solve => run_solve(&cfg).map(|o| {
            print_files(&o.files);
            println!("status: {}", o.result.status);
            exit_code(&o.result.status)
        }),
        Command::Verify => run_verify(&cfg).map(|o| {
            for l in &o.lines {
                println!("{l}");
            }
            print_files(&o.solve.files);
            if o.pass {
                0
            } else {
                2
            }
        }),
        Command::Manufacture => run_manufacture(&cfg).map(|files| {
            print_files(&files);
            0
        }),
        Command::Green => run_green(&cfg).map(|c| {
            println!("{}", format_float(c));
            0
        }),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        1
    })
}

fn print_files(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}
