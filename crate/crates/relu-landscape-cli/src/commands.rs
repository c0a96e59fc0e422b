//! The report-producing commands: consistency solves, critical-point
//! continuation, reference-table regeneration, and decay scans.

use std::fs;
use std::path::Path;

use relu_landscape::consistency_solver::{solve_consistency, ConsistencySeed, NewtonConfig, Solved};
use relu_landscape::objective_gradient::objective_reduced;
use relu_landscape::path_continuation::{direct_jump, lambda_path};
use relu_landscape::series_asymptotics::{
    compare_approximations, decay_constant_fit, geometric_widths,
};
use relu_landscape::symmetry_charts::Chart;
use relu_landscape::Family;

use crate::report::{Cell, Report};
use crate::CliError;

/// Solver tolerance used when none is given. One decade looser than the
/// library default because the finite-difference Jacobians floor the
/// residual near 1e-13 at the k = 10^4 widths the table and decay commands
/// visit.
pub const DEFAULT_TOL: f64 = 1e-12;

pub fn newton_config(tol: Option<f64>) -> Result<NewtonConfig, CliError> {
    let tol_residual = tol.unwrap_or(DEFAULT_TOL);
    if tol_residual <= 0.0 || tol_residual.is_nan() {
        return Err(CliError::Usage(format!("tolerance must be positive, got {tol_residual}")));
    }
    Ok(NewtonConfig { tol_residual, ..NewtonConfig::default() })
}

/// Seeds from `--seed-file` when given, the built-in table otherwise.
pub fn load_seeds(path: Option<&Path>) -> Result<Vec<ConsistencySeed>, CliError> {
    match path {
        None => Ok(ConsistencySeed::defaults()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("reading seed file {}: {e}", p.display())))?;
            ConsistencySeed::parse_file(&text)
                .map_err(|e| CliError::Usage(format!("seed file {}: {e}", p.display())))
        }
    }
}

pub fn seed_for(seeds: &[ConsistencySeed], family: Family) -> Result<ConsistencySeed, CliError> {
    seeds
        .iter()
        .find(|s| s.family == family)
        .cloned()
        .ok_or_else(|| CliError::Usage(format!("no seed for family {family} in the seed table")))
}

/// Solve the consistency equations at width `k`, walking the width
/// geometrically (20% steps) from the seed's own width so every solve
/// starts inside Newton's basin.
pub fn walk_consistency(
    seed: &ConsistencySeed,
    k: usize,
    cfg: &NewtonConfig,
) -> Result<(Chart, Solved), CliError> {
    let chart = seed.chart();
    if k < chart.min_k() {
        return Err(CliError::Usage(format!(
            "k must be >= {} for family {} (got {k})",
            chart.min_k(),
            seed.family
        )));
    }
    let target = k as f64;
    let mut width = seed.k as f64;
    let mut sol = solve_consistency(chart, width, &seed.values, cfg)?;
    while width != target {
        width = if target > width { (width * 1.2).min(target) } else { (width * 0.8).max(target) };
        sol = solve_consistency(chart, width, &sol.xi, cfg)?;
    }
    Ok((chart, sol))
}

fn seed_cells(seed: &ConsistencySeed) -> (Cell, Cell) {
    let values: Vec<String> = seed.values.iter().map(|v| v.to_string()).collect();
    (Cell::Int(seed.k as i64), Cell::text(values.join(";")))
}

const COORD_COLUMNS: [&str; 6] = ["xi1", "xi2", "xi3", "xi4", "xi5", "xi6"];

/// Coordinate cells padded with empties up to `width` columns, so families
/// with 2-, 5- and 6-dimensional charts share one schema.
fn coord_cells(xi: &[f64], width: usize) -> Vec<Cell> {
    (0..width).map(|i| xi.get(i).map_or(Cell::Empty, |v| Cell::Num(*v))).collect()
}

pub fn cmd_solve_consistency(
    seeds: &[ConsistencySeed],
    family: Family,
    k: usize,
    cfg: &NewtonConfig,
) -> Result<Report, CliError> {
    let seed = seed_for(seeds, family)?;
    let (chart, sol) = walk_consistency(&seed, k, cfg)?;
    let m = chart.m();
    let mut columns = vec!["family", "k", "lambda"];
    columns.extend_from_slice(&COORD_COLUMNS[..m]);
    columns.extend_from_slice(&["residual_inf", "iters", "seed_k", "seed_values"]);
    let mut report = Report::new("solve-consistency", columns);
    let (seed_k, seed_values) = seed_cells(&seed);
    let mut row = vec![Cell::text(family.to_string()), Cell::Int(k as i64), Cell::Num(0.0)];
    row.extend(coord_cells(&sol.xi, m));
    row.extend([Cell::Num(sol.residual_norm), Cell::Int(sol.iters as i64), seed_k, seed_values]);
    report.push(row);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Jump,
    Path,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jump" => Ok(Method::Jump),
            "path" => Ok(Method::Path),
            other => Err(format!("unknown method '{other}' (expected jump or path)")),
        }
    }
}

pub fn cmd_solve_critical(
    seeds: &[ConsistencySeed],
    family: Family,
    k: usize,
    method: Method,
    lambda_inc: f64,
    cfg: &NewtonConfig,
) -> Result<Report, CliError> {
    if !(lambda_inc > 0.0 && lambda_inc <= 0.5) {
        return Err(CliError::Usage(format!(
            "lambda increment must be in (0, 0.5], got {lambda_inc}"
        )));
    }
    let seed = seed_for(seeds, family)?;
    let (chart, cons) = walk_consistency(&seed, k, cfg)?;
    let kf = k as f64;
    // `steps` counts Newton iterations for the jump and leak samples for
    // the incremental path.
    let (xi, residual, steps, method_name) = match method {
        Method::Jump => {
            let sol = direct_jump(chart, &cons.xi, kf, cfg)?;
            (sol.xi, sol.residual_norm, sol.iters, "jump")
        }
        Method::Path => {
            let path = lambda_path(chart, &cons.xi, kf, lambda_inc, cfg)?;
            let steps = path.len();
            let end = path.into_iter().next_back().expect("a completed path has samples");
            (end.xi, end.residual_norm, steps, "path")
        }
    };
    let objective = objective_reduced(chart, &xi, kf, 1.0)?;
    let m = chart.m();
    let mut columns = vec!["family", "k", "lambda"];
    columns.extend_from_slice(&COORD_COLUMNS[..m]);
    columns.extend_from_slice(&[
        "residual_inf",
        "objective",
        "method",
        "steps",
        "seed_k",
        "seed_values",
    ]);
    let mut report = Report::new("solve-critical", columns);
    let (seed_k, seed_values) = seed_cells(&seed);
    let mut row = vec![Cell::text(family.to_string()), Cell::Int(k as i64), Cell::Num(1.0)];
    row.extend(coord_cells(&xi, m));
    row.extend([
        Cell::Num(residual),
        Cell::Num(objective),
        Cell::text(method_name),
        Cell::Int(steps as i64),
        seed_k,
        seed_values,
    ]);
    report.push(row);
    Ok(report)
}

pub const TABLE_NAMES: [&str; 6] =
    ["inftable1", "inftable4", "compA", "compI", "compII", "typeM"];

/// Regenerate one reference table end to end. Every value is recomputed
/// from the solvers; nothing is replayed from stored constants.
pub fn cmd_tables(which: &str, cfg: &NewtonConfig) -> Result<Report, CliError> {
    let seeds = ConsistencySeed::defaults();
    match which {
        "inftable1" => {
            let columns =
                vec!["family", "k", "one_plus_rho", "one_plus_nu", "epsilon", "residual_inf"];
            let mut report = Report::new("tables", columns);
            for k in [6usize, 1000] {
                for family in [Family::A, Family::I, Family::II] {
                    let seed = seed_for(&seeds, family)?;
                    let (chart, sol) = walk_consistency(&seed, k, cfg)?;
                    // The t-parametrization reads (1+rho, 1+nu, epsilon) off
                    // the bulk diagonal, distinguished diagonal and bulk
                    // off-diagonal; the diagonal chart has nu = rho.
                    let (rho1, nu1, eps) = if chart.m() == 2 {
                        (sol.xi[0], sol.xi[0], sol.xi[1])
                    } else {
                        (sol.xi[0], sol.xi[4], sol.xi[1])
                    };
                    report.push(vec![
                        Cell::text(family.to_string()),
                        Cell::Int(k as i64),
                        Cell::Num(rho1),
                        Cell::Num(nu1),
                        Cell::Num(eps),
                        Cell::Num(sol.residual_norm),
                    ]);
                }
            }
            Ok(report)
        }
        "inftable4" => {
            let mut columns = vec!["family", "k"];
            columns.extend_from_slice(&COORD_COLUMNS[..5]);
            columns.extend_from_slice(&["residual_inf", "objective"]);
            let mut report = Report::new("tables", columns);
            for family in [Family::A, Family::I, Family::II] {
                let seed = seed_for(&seeds, family)?;
                let (chart, cons) = walk_consistency(&seed, 6, cfg)?;
                let sol = direct_jump(chart, &cons.xi, 6.0, cfg)?;
                let objective = objective_reduced(chart, &sol.xi, 6.0, 1.0)?;
                let mut row = vec![Cell::text(family.to_string()), Cell::Int(6)];
                row.extend(coord_cells(&sol.xi, 5));
                row.extend([Cell::Num(sol.residual_norm), Cell::Num(objective)]);
                report.push(row);
            }
            Ok(report)
        }
        "compA" | "compI" | "compII" => {
            let family = match which {
                "compA" => Family::A,
                "compI" => Family::I,
                _ => Family::II,
            };
            let rows = compare_approximations(family, 10_000, cfg)?;
            let columns = vec![
                "coordinate",
                "series",
                "series_plus",
                "consistency",
                "solved",
                "series_error",
                "series_plus_error",
                "consistency_error",
            ];
            let mut report = Report::new("tables", columns);
            for row in rows {
                report.push(vec![
                    Cell::text(row.coordinate),
                    Cell::Num(row.approx_series),
                    row.approx_series_plus.map_or(Cell::Empty, Cell::Num),
                    Cell::Num(row.approx_consistency),
                    Cell::Num(row.solved),
                    Cell::Num(row.series_error),
                    row.series_plus_error.map_or(Cell::Empty, Cell::Num),
                    Cell::Num(row.consistency_error),
                ]);
            }
            Ok(report)
        }
        "typeM" => {
            let seed = seed_for(&seeds, Family::M)?;
            let (chart, cons) = walk_consistency(&seed, 10_000, cfg)?;
            let sol = direct_jump(chart, &cons.xi, 1e4, cfg)?;
            let columns = vec!["quantity", "consistency", "solved", "abs_error"];
            let mut report = Report::new("tables", columns);
            for (i, (c, s)) in cons.xi.iter().zip(&sol.xi).enumerate() {
                report.push(vec![
                    Cell::text(COORD_COLUMNS[i]),
                    Cell::Num(*c),
                    Cell::Num(*s),
                    Cell::Num((c - s).abs()),
                ]);
            }
            let f_cons = objective_reduced(chart, &cons.xi, 1e4, 1.0)?;
            let f_sol = objective_reduced(chart, &sol.xi, 1e4, 1.0)?;
            report.push(vec![
                Cell::text("F"),
                Cell::Num(f_cons),
                Cell::Num(f_sol),
                Cell::Num((f_cons - f_sol).abs()),
            ]);
            report.push(vec![
                Cell::text("k_F"),
                Cell::Num(1e4 * f_cons),
                Cell::Num(1e4 * f_sol),
                Cell::Num(1e4 * (f_cons - f_sol).abs()),
            ]);
            Ok(report)
        }
        other => Err(CliError::Usage(format!(
            "unknown table '{other}' (expected one of {})",
            TABLE_NAMES.join(", ")
        ))),
    }
}

pub fn cmd_decay(
    seeds: &[ConsistencySeed],
    family: Family,
    k_min: usize,
    k_max: usize,
    cfg: &NewtonConfig,
) -> Result<Report, CliError> {
    let seed = seed_for(seeds, family)?;
    if k_min > k_max {
        return Err(CliError::Usage(format!("empty width range: k-min {k_min} > k-max {k_max}")));
    }
    if k_min < seed.chart().min_k() {
        return Err(CliError::Usage(format!(
            "k-min must be >= {} for family {family} (got {k_min})",
            seed.chart().min_k()
        )));
    }
    let widths = geometric_widths(k_min, k_max);
    if widths.len() < 2 {
        return Err(CliError::Usage(
            "the decay fit needs at least two widths; widen the k range".into(),
        ));
    }
    // decay_scan walks from the built-in seed table; a custom seed file only
    // changes the starting point, so re-walk here from the resolved seed.
    let samples: Result<Vec<_>, CliError> = widths
        .iter()
        .map(|&k| {
            let (chart, cons) = walk_consistency(&seed, k, cfg)?;
            let kf = k as f64;
            let crit = direct_jump(chart, &cons.xi, kf, cfg)?;
            let objective = objective_reduced(chart, &crit.xi, kf, 1.0)?;
            let normalized = match family {
                Family::II | Family::M => kf * objective,
                Family::A | Family::I => objective,
            };
            Ok(relu_landscape::series_asymptotics::DecaySample { k, objective, normalized })
        })
        .collect();
    let samples = samples?;
    let (constant, slope) = decay_constant_fit(&samples)?;
    let columns = vec!["family", "k", "objective", "normalized", "fit_constant", "fit_slope"];
    let mut report = Report::new("decay", columns);
    for s in &samples {
        report.push(vec![
            Cell::text(family.to_string()),
            Cell::Int(s.k as i64),
            Cell::Num(s.objective),
            Cell::Num(s.normalized),
            Cell::Num(constant),
            Cell::Num(slope),
        ]);
    }
    Ok(report)
}
