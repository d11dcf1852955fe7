//! Benchmark harness: runs heuristics over a case set and reports average
//! nodes explored, average time, average path length and win ratio.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heuristic::HeuristicStrategy;
use crate::riskmap::{load_cases, load_map, Case, Coord, RiskMap};
use crate::search::{validate_path, AsdAstar, SearchOutcome, TraceEntry};
use crate::write_lines;

#[derive(Debug, Clone, PartialEq)]
pub struct CaseOutcome {
    pub case_index: usize,
    pub heuristic: String,
    pub nodes_explored: usize,
    pub elapsed_ms: f64,
    pub path_length: usize,
    pub feasible: bool,
    pub path: Vec<Coord>,
}

/// One report row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicSummary {
    pub heuristic: String,
    pub cases: usize,
    pub avg_nodes: f64,
    pub avg_time_ms: f64,
    pub avg_len: f64,
    pub win_ratio: f64,
}

impl HeuristicSummary {
    /// Total frontier pops, recovered from the average.
    pub fn total_nodes(&self) -> u64 {
        (self.avg_nodes * self.cases as f64).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub rows: Vec<HeuristicSummary>,
}

#[derive(Debug, Clone)]
pub struct BenchRun {
    pub report: BenchmarkReport,
    /// `outcomes[h][i]`: heuristic `h` on case `i`.
    pub outcomes: Vec<Vec<CaseOutcome>>,
}

/// Maps keyed by id plus the cases that reference them.
#[derive(Debug, Clone, Default)]
pub struct Workload {
    pub maps: BTreeMap<String, RiskMap>,
    pub cases: Vec<Case>,
}

impl Workload {
    /// Loads every `*.map` in `maps_dir` (id = file stem). `cases` is either a
    /// directory holding `<id>.csv` per map, or a single case file when the
    /// map directory holds exactly one map.
    pub fn load(maps_dir: impl AsRef<Path>, cases: impl AsRef<Path>) -> Result<Self> {
        let maps = load_map_dir(maps_dir)?;
        let cases_path = cases.as_ref();
        let mut all = Vec::new();
        if cases_path.is_dir() {
            for id in maps.keys() {
                let p = cases_path.join(format!("{id}.csv"));
                if p.exists() {
                    all.extend(load_cases(&p, id)?);
                }
            }
        } else {
            if maps.len() != 1 {
                return Err(Error::usage(format!(
                    "a single case file needs exactly one map, found {}; pass a directory of <map>.csv files",
                    maps.len()
                )));
            }
            let id = maps.keys().next().expect("one map");
            all = load_cases(cases_path, id)?;
        }
        Ok(Workload { maps, cases: all })
    }

    pub fn map_for(&self, case: &Case) -> Result<&RiskMap> {
        self.maps
            .get(&case.map_id)
            .ok_or_else(|| Error::usage(format!("case refers to unknown map {:?}", case.map_id)))
    }
}

/// All `*.map` files in a directory, keyed by file stem.
pub fn load_map_dir(dir: impl AsRef<Path>) -> Result<BTreeMap<String, RiskMap>> {
    let dir = dir.as_ref();
    let mut maps = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("map") {
            continue;
        }
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::usage(format!("bad map file name {}", path.display())))?
            .to_string();
        maps.insert(id, load_map(&path)?);
    }
    if maps.is_empty() {
        return Err(Error::usage(format!("no .map files in {}", dir.display())));
    }
    Ok(maps)
}

/// Times heuristic construction plus search for one case and checks the
/// result.
pub fn run_case(
    map: &RiskMap,
    case: &Case,
    case_index: usize,
    strategy: &dyn HeuristicStrategy,
) -> Result<CaseOutcome> {
    let started = Instant::now();
    let heuristic = strategy.prepare(map, case)?;
    let outcome = AsdAstar::new(map, case, heuristic.as_ref())?.run();
    let elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
    let SearchOutcome::Found(result) = outcome else {
        return Err(Error::Correctness(format!(
            "heuristic {} found no path for case {case_index} ({} -> {}) on map {}",
            strategy.name(),
            case.start,
            case.dest,
            case.map_id
        )));
    };
    if !validate_path(map, case, &result.path) {
        return Err(Error::Correctness(format!(
            "heuristic {} returned an invalid path for case {case_index}",
            strategy.name()
        )));
    }
    Ok(CaseOutcome {
        case_index,
        heuristic: strategy.name().to_string(),
        nodes_explored: result.nodes_explored,
        elapsed_ms,
        path_length: result.length,
        feasible: true,
        path: result.path,
    })
}

/// Runs every strategy on every case across `jobs` worker threads. All
/// columns except timing are independent of `jobs`.
pub fn run_bench(
    workload: &Workload,
    strategies: &[Arc<dyn HeuristicStrategy>],
    jobs: usize,
) -> Result<BenchRun> {
    if strategies.is_empty() {
        return Err(Error::usage("no heuristics selected"));
    }
    if workload.cases.is_empty() {
        return Err(Error::usage("no cases to benchmark"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::usage(format!("thread pool: {e}")))?;
    let per_case: Vec<Vec<CaseOutcome>> = pool.install(|| {
        workload
            .cases
            .par_iter()
            .enumerate()
            .map(|(i, case)| {
                let map = workload.map_for(case)?;
                strategies
                    .iter()
                    .map(|s| run_case(map, case, i, s.as_ref()))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut outcomes: Vec<Vec<CaseOutcome>> = vec![Vec::with_capacity(per_case.len()); strategies.len()];
    for row in per_case {
        for (h, o) in row.into_iter().enumerate() {
            outcomes[h].push(o);
        }
    }
    let report = summarize(&outcomes)?;
    Ok(BenchRun { report, outcomes })
}

/// Win fractions `(a, b)` over paired outcomes. The challenger `b` wins a
/// case when it is no slower and its path is no longer; otherwise `a` wins.
pub fn win_ratio(a: &[CaseOutcome], b: &[CaseOutcome]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::usage(format!(
            "unpaired outcomes: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::usage("no outcomes to compare"));
    }
    let mut b_wins = 0usize;
    for (x, y) in a.iter().zip(b) {
        if x.case_index != y.case_index {
            return Err(Error::usage(format!(
                "outcomes not paired: case {} vs case {}",
                x.case_index, y.case_index
            )));
        }
        if y.elapsed_ms <= x.elapsed_ms && y.path_length <= x.path_length {
            b_wins += 1;
        }
    }
    let n = a.len() as f64;
    let b_frac = b_wins as f64 / n;
    Ok(((a.len() - b_wins) as f64 / n, b_frac))
}

/// Aggregates per-heuristic outcomes. The first heuristic is the baseline:
/// each other row's win ratio is measured against it, and the baseline's
/// own ratio is its share against the second heuristic (1 when alone).
pub fn summarize(outcomes: &[Vec<CaseOutcome>]) -> Result<BenchmarkReport> {
    let Some(baseline) = outcomes.first() else {
        return Err(Error::usage("no heuristics in report"));
    };
    if baseline.is_empty() {
        return Err(Error::usage("empty case set"));
    }
    let mut rows = Vec::with_capacity(outcomes.len());
    for (h, outs) in outcomes.iter().enumerate() {
        let n = outs.len();
        if n == 0 {
            return Err(Error::usage("empty case set"));
        }
        let total_nodes: u64 = outs.iter().map(|o| o.nodes_explored as u64).sum();
        let total_len: u64 = outs.iter().map(|o| o.path_length as u64).sum();
        let total_ms: f64 = outs.iter().map(|o| o.elapsed_ms).sum();
        let win = match (h, outcomes.get(1)) {
            (0, Some(second)) => win_ratio(baseline, second)?.0,
            (0, None) => 1.0,
            _ => win_ratio(baseline, outs)?.1,
        };
        rows.push(HeuristicSummary {
            heuristic: outs[0].heuristic.clone(),
            cases: n,
            avg_nodes: total_nodes as f64 / n as f64,
            avg_time_ms: total_ms / n as f64,
            avg_len: total_len as f64 / n as f64,
            win_ratio: win,
        });
    }
    Ok(BenchmarkReport { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
}

/// Labels of the five text-report rows.
pub const REPORT_ROWS: [&str; 5] = [
    "total number of test case",
    "average nodes explored",
    "average time cost (ms)",
    "average path length",
    "faster test case ratio",
];

impl BenchmarkReport {
    /// Metrics as rows, heuristics as columns.
    pub fn to_text(&self) -> String {
        let mut cells: Vec<Vec<String>> = vec![vec!["result".to_string()]];
        for label in REPORT_ROWS {
            cells.push(vec![label.to_string()]);
        }
        for r in &self.rows {
            cells[0].push(r.heuristic.clone());
            cells[1].push(r.cases.to_string());
            cells[2].push(format!("{:.1}", r.avg_nodes));
            cells[3].push(format!("{:.2}", r.avg_time_ms));
            cells[4].push(format!("{:.2}", r.avg_len));
            cells[5].push(format!("{:.1}%", r.win_ratio * 100.0));
        }
        let widths: Vec<usize> = (0..cells[0].len())
            .map(|c| cells.iter().map(|row| row[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &cells {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(v, w)| format!("{v:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::usage(format!("csv buffer: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let rows = r
            .deserialize()
            .collect::<std::result::Result<Vec<HeuristicSummary>, _>>()?;
        Ok(BenchmarkReport { rows })
    }
}

pub fn export_report(report: &BenchmarkReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    if report.rows.is_empty() || report.rows.iter().any(|r| r.cases == 0) {
        return Err(Error::usage("refusing to write an empty report"));
    }
    let body = match format {
        ReportFormat::Text => report.to_text(),
        ReportFormat::Csv => report.to_csv()?,
    };
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn read_report_csv(path: impl AsRef<Path>) -> Result<BenchmarkReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    BenchmarkReport::from_csv(&text)
}

/// Pop count per flattened cell.
pub fn exploration_counts(trace: &[TraceEntry], side: usize) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; side * side];
    for e in trace {
        *counts
            .get_mut(e.flat)
            .ok_or_else(|| Error::usage(format!("trace cell {} is outside the map", e.flat)))? += 1;
    }
    Ok(counts)
}

/// Writes per-cell pop counts in the map layout (top row first). Start and
/// destination cells get an `S` / `D` suffix and other path cells a `*`.
pub fn export_exploration_grid(
    trace: &[TraceEntry],
    map: &RiskMap,
    case: &Case,
    path: Option<&[Coord]>,
    out: impl AsRef<Path>,
) -> Result<()> {
    write_lines(out.as_ref(), exploration_grid_lines(trace, map, case, path)?)
}

pub fn exploration_grid_lines(
    trace: &[TraceEntry],
    map: &RiskMap,
    case: &Case,
    path: Option<&[Coord]>,
) -> Result<Vec<String>> {
    let m = map.side();
    let counts = exploration_counts(trace, m)?;
    let mut on_path = vec![false; m * m];
    for &c in path.unwrap_or_default() {
        on_path[map.flatten(c)] = true;
    }
    let mut lines = vec![m.to_string()];
    for y in (0..m).rev() {
        let row: Vec<String> = (0..m)
            .map(|x| {
                let c = Coord::new(x, y);
                let i = map.flatten(c);
                let mark = if c == case.start {
                    "S"
                } else if c == case.dest {
                    "D"
                } else if on_path[i] {
                    "*"
                } else {
                    ""
                };
                format!("{}{mark}", counts[i])
            })
            .collect();
        lines.push(row.join(" "));
    }
    Ok(lines)
}
