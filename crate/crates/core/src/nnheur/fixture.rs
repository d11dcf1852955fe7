//! Forward-parity fixtures shared with the training side.
//!
//! A fixture directory holds `weights.asdw` plus `fixture_NNN.txt` files of
//! three lines each: `m start_flat dest_flat`, the `m*m` safety values in
//! flat order, and the expected network output per cell.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::riskmap::{Case, RiskMap};
use crate::write_lines;

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub map: RiskMap,
    pub case: Case,
    pub expected: Vec<f64>,
}

impl Fixture {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut line = |n: usize| {
            lines
                .next()
                .ok_or_else(|| Error::parse(path, n, "fixture truncated"))
        };
        let nums = |n: usize, l: &str| -> Result<Vec<f64>> {
            l.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| Error::parse(path, n, format!("bad number {t:?}"))))
                .collect()
        };
        let header: Vec<usize> = line(1)?
            .split_whitespace()
            .map(|t| t.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(path, 1, "expected `m start_flat dest_flat`"))?;
        let [m, s, d] = header[..] else {
            return Err(Error::parse(path, 1, "expected `m start_flat dest_flat`"));
        };
        let safety = nums(2, line(2)?)?;
        let expected = nums(3, line(3)?)?;
        let map = RiskMap::new(m, safety).map_err(|e| Error::parse(path, 2, e.to_string()))?;
        if s >= map.cell_count() || d >= map.cell_count() {
            return Err(Error::parse(path, 1, "index outside the map"));
        }
        if expected.len() != map.cell_count() {
            return Err(Error::parse(path, 3, "output length differs from cell count"));
        }
        // Parity only needs the two indices; epsilon is irrelevant here.
        let case = Case::new("fixture", map.unflatten(s), map.unflatten(d), 1.0)
            .map_err(|e| Error::parse(path, 1, e.to_string()))?;
        Ok(Fixture {
            map,
            case,
            expected,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
        write_lines(
            path.as_ref(),
            [
                format!(
                    "{} {} {}",
                    self.map.side(),
                    self.map.flatten(self.case.start),
                    self.map.flatten(self.case.dest)
                ),
                join(self.map.safety_values()),
                join(&self.expected),
            ],
        )
    }
}

/// Fixture files in a directory, sorted by name.
pub fn fixture_paths(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("fixture_") && n.ends_with(".txt"))
        })
        .collect();
    paths.sort();
    Ok(paths)
}
