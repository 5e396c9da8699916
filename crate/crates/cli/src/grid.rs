//! Grid experiments: one training run per (algorithm, J, nu) cell, a summary
//! CSV and a side-by-side error table rebuilt from the trace files.
//!
//! Config files hold `key = value` lines; `#` starts a comment and list values
//! are comma separated:
//!
//! ```text
//! train = data/pendigits.tr
//! test = data/pendigits.te
//! algorithms = logit, abc-logit
//! J = 4, 6
//! nu = 0.06, 0.1
//! M = 10000
//! output = runs/pendigits
//! ```
//!
//! Optional keys: `format`, `label_column`, `min_leaf`, `zmax`,
//! `time_budget` (seconds per cell), `jobs` (cells run concurrently) and
//! `save_models`.

use std::fmt::Write as _;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Duration;

use abcboost::{train, Algorithm, BoostConfig, DataError, Dataset, Trace, TrainOptions};
use log::{info, warn};
use rayon::prelude::*;

use crate::{load_pair, CliError, DataArgs, Format, Report};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentGrid {
    pub train: PathBuf,
    pub test: PathBuf,
    pub format: Format,
    pub label_column: usize,
    pub algorithms: Vec<Algorithm>,
    pub leaves: Vec<usize>,
    pub shrinkages: Vec<f64>,
    pub max_iterations: usize,
    pub output: PathBuf,
    pub min_leaf: usize,
    pub z_max: f64,
    pub time_budget: Option<Duration>,
    pub jobs: usize,
    pub save_models: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub algorithm: Algorithm,
    pub leaves: usize,
    pub shrinkage: f64,
}

impl GridCell {
    /// File stem shared by the cell's trace and model.
    pub fn stem(&self) -> String {
        format!("{}_J{}_nu{}", self.algorithm, self.leaves, self.shrinkage)
    }
}

fn parse_list<T>(value: &str, parse: impl Fn(&str) -> Option<T>) -> Option<Vec<T>> {
    value.split(',').map(|v| parse(v.trim())).collect()
}

impl ExperimentGrid {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::parse(&text, path)
    }

    /// Relative paths in the config resolve against the config's directory.
    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        let base = path.parent().unwrap_or(Path::new(""));
        let bad = |line: usize, message: String| {
            CliError::Data(DataError::Malformed {
                path: path.to_path_buf(),
                line,
                message,
            })
        };
        let mut train = None;
        let mut test = None;
        let mut format = Format::Libsvm;
        let mut label_column = 0;
        let mut algorithms = None;
        let mut leaves = None;
        let mut shrinkages = None;
        let mut max_iterations = None;
        let mut output = None;
        let mut min_leaf = 1;
        let mut z_max = 4.0;
        let mut time_budget = None;
        let mut jobs = 1;
        let mut save_models = false;

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(line_no, format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let invalid = || bad(line_no, format!("invalid value {value:?} for {key}"));
            match key {
                "train" => train = Some(base.join(value)),
                "test" => test = Some(base.join(value)),
                "output" => output = Some(base.join(value)),
                "format" => {
                    format = match value {
                        "libsvm" => Format::Libsvm,
                        "csv" => Format::Csv,
                        _ => return Err(invalid()),
                    }
                }
                "label_column" => label_column = value.parse().map_err(|_| invalid())?,
                "algorithms" => {
                    algorithms = Some(parse_list(value, |v| v.parse().ok()).ok_or_else(invalid)?)
                }
                "J" => leaves = Some(parse_list(value, |v| v.parse().ok()).ok_or_else(invalid)?),
                "nu" => {
                    shrinkages = Some(parse_list(value, |v| v.parse().ok()).ok_or_else(invalid)?)
                }
                "M" => max_iterations = Some(value.parse().map_err(|_| invalid())?),
                "min_leaf" => min_leaf = value.parse().map_err(|_| invalid())?,
                "zmax" => z_max = value.parse().map_err(|_| invalid())?,
                "time_budget" => {
                    let s: f64 = value.parse().map_err(|_| invalid())?;
                    if !(s.is_finite() && s > 0.0) {
                        return Err(invalid());
                    }
                    time_budget = Some(Duration::from_secs_f64(s));
                }
                "jobs" => {
                    jobs = value.parse().map_err(|_| invalid())?;
                    if jobs == 0 {
                        return Err(invalid());
                    }
                }
                "save_models" => save_models = value.parse().map_err(|_| invalid())?,
                _ => return Err(bad(line_no, format!("unknown key {key:?}"))),
            }
        }

        let missing = |key: &str| bad(0, format!("missing required key {key:?}"));
        let grid = ExperimentGrid {
            train: train.ok_or_else(|| missing("train"))?,
            test: test.ok_or_else(|| missing("test"))?,
            format,
            label_column,
            algorithms: algorithms.ok_or_else(|| missing("algorithms"))?,
            leaves: leaves.ok_or_else(|| missing("J"))?,
            shrinkages: shrinkages.ok_or_else(|| missing("nu"))?,
            max_iterations: max_iterations.ok_or_else(|| missing("M"))?,
            output: output.ok_or_else(|| missing("output"))?,
            min_leaf,
            z_max,
            time_budget,
            jobs,
            save_models,
        };
        for cell in grid.cells() {
            grid.config_for(&cell).validate()?;
        }
        Ok(grid)
    }

    /// Every (algorithm, J, nu) combination once: algorithms outermost, nu innermost,
    /// each in config order with duplicates dropped.
    pub fn cells(&self) -> Vec<GridCell> {
        fn dedup<T: PartialEq + Copy>(v: &[T]) -> Vec<T> {
            let mut out: Vec<T> = Vec::new();
            for &x in v {
                if !out.contains(&x) {
                    out.push(x);
                }
            }
            out
        }
        let mut cells = Vec::new();
        for &algorithm in &dedup(&self.algorithms) {
            for &leaves in &dedup(&self.leaves) {
                for &shrinkage in &dedup(&self.shrinkages) {
                    cells.push(GridCell {
                        algorithm,
                        leaves,
                        shrinkage,
                    });
                }
            }
        }
        cells
    }

    pub fn config_for(&self, cell: &GridCell) -> BoostConfig {
        BoostConfig {
            min_leaf: self.min_leaf,
            z_max: self.z_max,
            ..BoostConfig::new(cell.algorithm, cell.leaves, cell.shrinkage, self.max_iterations)
        }
    }

    pub fn trace_path(&self, cell: &GridCell) -> PathBuf {
        self.output.join("traces").join(format!("{}.csv", cell.stem()))
    }

    pub fn model_path(&self, cell: &GridCell) -> PathBuf {
        self.output.join("models").join(format!("{}.json", cell.stem()))
    }

    pub fn summary_path(&self) -> PathBuf {
        self.output.join("summary.csv")
    }

    pub fn table_path(&self) -> PathBuf {
        self.output.join("table.txt")
    }

    pub fn failures_path(&self) -> PathBuf {
        self.output.join("failures.csv")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub cell: GridCell,
    pub test_errors: usize,
    pub iteration: usize,
}

#[derive(Debug)]
pub struct GridOutcome {
    pub rows: Vec<SummaryRow>,
    pub failures: Vec<(GridCell, String)>,
    pub table: String,
}

fn run_cell(grid: &ExperimentGrid, cell: &GridCell, train_ds: &Dataset, test_ds: &Dataset) -> Result<(), String> {
    let cfg = grid.config_for(cell);
    let opts = TrainOptions {
        test: Some(test_ds),
        time_budget: grid.time_budget,
    };
    let out = train(train_ds, &cfg, opts).map_err(|e| e.to_string())?;
    out.trace.save(grid.trace_path(cell)).map_err(|e| e.to_string())?;
    if grid.save_models {
        out.model.save(grid.model_path(cell)).map_err(|e| e.to_string())?;
    }
    info!("{}: {} iterations, {}", cell.stem(), out.model.n_stages(), out.stop.as_str());
    Ok(())
}

/// Train every cell, then rebuild the summary from the traces on disk.
///
/// A failing cell is written to `failures.csv` and left out of the summary.
pub fn run_grid(grid: &ExperimentGrid, report: Report) -> Result<GridOutcome, CliError> {
    let data = DataArgs {
        format: grid.format,
        label_column: grid.label_column,
    };
    let (train_ds, test_ds) = load_pair(&grid.train, Some(&grid.test), &data)?;
    let test_ds = test_ds.expect("test path given");
    for dir in [grid.output.join("traces"), grid.output.join("models")] {
        if dir.ends_with("models") && !grid.save_models {
            continue;
        }
        fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
    }

    let cells = grid.cells();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(grid.jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", grid.jobs)))?;
    let results: Vec<Result<(), String>> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let _ = fs::remove_file(grid.trace_path(cell));
                catch_unwind(AssertUnwindSafe(|| run_cell(grid, cell, &train_ds, &test_ds)))
                    .unwrap_or_else(|_| Err("training panicked".to_string()))
            })
            .collect()
    });

    let mut failures = Vec::new();
    for (cell, r) in cells.iter().zip(results) {
        if let Err(message) = r {
            warn!("{} failed: {message}", cell.stem());
            failures.push((*cell, message));
        }
    }
    let fail_path = grid.failures_path();
    if failures.is_empty() {
        let _ = fs::remove_file(&fail_path);
    } else {
        let mut text = String::from("algo,J,nu,error\n");
        for (c, m) in &failures {
            let m = m.replace(['"', '\n'], " ");
            let _ = writeln!(text, "{},{},{},\"{m}\"", c.algorithm, c.leaves, c.shrinkage);
        }
        fs::write(&fail_path, text).map_err(CliError::io(&fail_path))?;
    }

    let rows = summarize(grid, report)?;
    let table = write_summary(grid, &rows, report)?;
    Ok(GridOutcome {
        rows,
        failures,
        table,
    })
}

/// Summary rows for every cell whose trace exists, in cell order.
pub fn summarize(grid: &ExperimentGrid, report: Report) -> Result<Vec<SummaryRow>, CliError> {
    let mut rows = Vec::new();
    for cell in grid.cells() {
        let path = grid.trace_path(&cell);
        if !path.is_file() {
            continue;
        }
        let trace = Trace::load(&path)?;
        let picked = match report {
            Report::Best => trace.best_test(),
            Report::Final => trace.final_test(),
        };
        if let Some((test_errors, iteration)) = picked {
            rows.push(SummaryRow {
                cell,
                test_errors,
                iteration,
            });
        }
    }
    Ok(rows)
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from("algo,J,nu,best_test_err,best_iter\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.cell.algorithm, r.cell.leaves, r.cell.shrinkage, r.test_errors, r.iteration
        );
    }
    s
}

/// Writes `summary.csv` and `table.txt`; returns the table.
pub fn write_summary(grid: &ExperimentGrid, rows: &[SummaryRow], report: Report) -> Result<String, CliError> {
    fs::create_dir_all(&grid.output).map_err(CliError::io(&grid.output))?;
    let path = grid.summary_path();
    fs::write(&path, summary_csv(rows)).map_err(CliError::io(&path))?;
    let table = comparison_table(grid, rows, report);
    let path = grid.table_path();
    fs::write(&path, &table).map_err(CliError::io(&path))?;
    Ok(table)
}

/// `(plain - abc) / plain * 100`; `None` when the plain error is zero.
pub fn relative_improvement(plain: usize, abc: usize) -> Option<f64> {
    (plain > 0).then(|| (plain as f64 - abc as f64) / plain as f64 * 100.0)
}

/// One block per plain/abc algorithm pair in the grid: rows are J, and each nu
/// column shows the plain error, the abc error and the relative improvement.
pub fn comparison_table(grid: &ExperimentGrid, rows: &[SummaryRow], report: Report) -> String {
    let lookup = |algorithm: Algorithm, leaves: usize, shrinkage: f64| {
        rows.iter()
            .find(|r| r.cell.algorithm == algorithm && r.cell.leaves == leaves && r.cell.shrinkage == shrinkage)
            .map(|r| r.test_errors)
    };
    let cells = grid.cells();
    let mut leaves: Vec<usize> = Vec::new();
    let mut nus: Vec<f64> = Vec::new();
    for c in &cells {
        if !leaves.contains(&c.leaves) {
            leaves.push(c.leaves);
        }
        if !nus.contains(&c.shrinkage) {
            nus.push(c.shrinkage);
        }
    }
    let which = match report {
        Report::Best => "best",
        Report::Final => "final",
    };
    let opt = |v: Option<usize>| v.map_or("-".to_string(), |v| v.to_string());

    let mut out = String::new();
    for plain in grid.algorithms.iter().copied() {
        let Some(abc) = plain.abc_counterpart() else { continue };
        if !grid.algorithms.contains(&abc) {
            continue;
        }
        let _ = writeln!(out, "{plain} vs {abc}: {which} test errors and R_err (%)");
        let _ = write!(out, "{:<8}", "");
        for nu in &nus {
            let _ = write!(out, "| {:<22}", format!("nu = {nu}"));
        }
        out.push('\n');
        for &j in &leaves {
            let _ = write!(out, "{:<8}", format!("J = {j}"));
            for &nu in &nus {
                let p = lookup(plain, j, nu);
                let a = lookup(abc, j, nu);
                let r = match (p, a) {
                    (Some(p), Some(a)) => relative_improvement(p, a).map_or("-".to_string(), |r| format!("{r:.1}")),
                    _ => "-".to_string(),
                };
                let _ = write!(out, "| {:>6} {:>6} {:>7} ", opt(p), opt(a), r);
            }
            out.push('\n');
        }
        out.push('\n');
    }
    if out.is_empty() {
        out.push_str("no plain/abc algorithm pairs in this grid\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG: &str = "\
# pendigits, small
train = data/p.tr
test = data/p.te
algorithms = logit, abc-logit
J = 4, 6
nu = 0.06, 0.1   # two shrinkages
M = 100
output = out
jobs = 2
";

    #[test]
    fn parses_and_enumerates_in_order() {
        let g = ExperimentGrid::parse(CONFIG, Path::new("/cfg/grid.cfg")).unwrap();
        assert_eq!(g.train, PathBuf::from("/cfg/data/p.tr"));
        assert_eq!(g.jobs, 2);
        let stems: Vec<String> = g.cells().iter().map(|c| c.stem()).collect();
        assert_eq!(
            stems,
            [
                "logit_J4_nu0.06",
                "logit_J4_nu0.1",
                "logit_J6_nu0.06",
                "logit_J6_nu0.1",
                "abc-logit_J4_nu0.06",
                "abc-logit_J4_nu0.1",
                "abc-logit_J6_nu0.06",
                "abc-logit_J6_nu0.1",
            ]
        );
    }

    #[test]
    fn duplicate_values_are_enumerated_once() {
        let text = CONFIG.replace("J = 4, 6", "J = 4, 4, 6");
        let g = ExperimentGrid::parse(&text, Path::new("g")).unwrap();
        assert_eq!(g.cells().len(), 8);
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            CONFIG.replace("M = 100", ""),
            CONFIG.replace("nu = 0.06, 0.1", "nu = 0.06, 0"),
            CONFIG.replace("J = 4, 6", "J = four"),
            CONFIG.replace("algorithms = logit", "algorithms = gbm"),
            CONFIG.to_string() + "colour = blue\n",
            CONFIG.to_string() + "no equals sign\n",
        ] {
            assert!(ExperimentGrid::parse(&text, Path::new("g")).is_err(), "{text}");
        }
    }

    #[test]
    fn relative_improvement_matches_hand_value() {
        let r = relative_improvement(119, 92).unwrap();
        assert!((r - 22.689).abs() < 1e-3);
        assert_eq!(relative_improvement(0, 0), None);
    }

    #[test]
    fn table_lays_out_pairs() {
        let g = ExperimentGrid::parse(CONFIG, Path::new("g")).unwrap();
        let cells = g.cells();
        let errs = [119, 120, 100, 101, 92, 93, 80, 79];
        let rows: Vec<SummaryRow> = cells
            .iter()
            .zip(errs)
            .map(|(c, e)| SummaryRow { cell: *c, test_errors: e, iteration: 1 })
            .collect();
        let t = comparison_table(&g, &rows, Report::Best);
        assert!(t.starts_with("logit vs abc-logit: best test errors and R_err (%)\n"));
        let j4 = t.lines().find(|l| l.starts_with("J = 4")).unwrap();
        assert!(j4.contains("119     92    22.7"), "{j4}");
        let csv = summary_csv(&rows);
        assert!(csv.starts_with("algo,J,nu,best_test_err,best_iter\nlogit,4,0.06,119,1\n"));
    }
}
