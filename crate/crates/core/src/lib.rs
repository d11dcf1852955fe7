//! Risk-constrained shortest paths on grid risk maps.
//!
//! The searcher ([`search::asd_astar`]) extends A* with a safety dimension:
//! every label carries the accumulated safety product of its path and each
//! cell keeps all labels not dominated in `(f, safety)`. Heuristics plug in
//! through [`heuristic::Heuristic`] and are selected by name from a
//! [`heuristic::HeuristicRegistry`]: `manhattan`, `expert` (exact cost-to-go
//! on one optimal path plus an infeasibility mask) and `nn` (a transformer
//! encoder loaded from an ASDW weight file).

pub mod bench;
pub mod error;
pub mod expert;
pub mod heuristic;
pub mod nnheur;
pub mod riskmap;
pub mod search;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

pub use error::{Error, Result};
pub use heuristic::{Heuristic, HeuristicRegistry, HeuristicStrategy, HeuristicTable, Manhattan};
pub use riskmap::{Case, Coord, RiskMap};
pub use search::{asd_astar, pareto_oracle, validate_path, PathResult, SearchOutcome};

pub(crate) fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for line in lines {
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
