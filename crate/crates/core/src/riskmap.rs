//! Grid risk maps, queries against them, generators and text file I/O.
//!
//! Coordinates are Cartesian with the origin at the bottom-left cell. Cells
//! are flattened row-major in `y`, so on a 2x2 map `(0,0)` is index 0 and
//! `(1,1)` is index 3.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search::ParetoFrontier;

/// Minimum Manhattan separation (exclusive) for generated benchmark cases.
pub const MIN_CASE_SEPARATION: usize = 10;

/// Upper bound on the risk of a "risky" cell in random maps.
pub const RANDOM_MAX_RISK: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coord {
    pub x: usize,
    pub y: usize,
}

impl Coord {
    pub const fn new(x: usize, y: usize) -> Self {
        Coord { x, y }
    }

    pub fn manhattan(self, other: Coord) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }

    pub fn is_adjacent(self, other: Coord) -> bool {
        self.manhattan(other) == 1
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.x, self.y)
    }
}

impl FromStr for Coord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (x, y) = s
            .split_once(',')
            .ok_or_else(|| Error::usage(format!("expected X,Y, got {s:?}")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::usage(format!("bad coordinate component {v:?}")))
        };
        Ok(Coord::new(parse(x)?, parse(y)?))
    }
}

/// In-bounds 4-neighbours of a cell, in expansion order.
#[derive(Debug, Clone, Copy)]
pub struct Neighbors {
    buf: [Coord; 4],
    len: usize,
}

impl Neighbors {
    pub fn as_slice(&self) -> &[Coord] {
        &self.buf[..self.len]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

impl<'a> IntoIterator for &'a Neighbors {
    type Item = &'a Coord;
    type IntoIter = std::slice::Iter<'a, Coord>;

    fn into_iter(self) -> Self::IntoIter {
        self.as_slice().iter()
    }
}

/// Square grid of per-cell safety scores `S(g)` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskMap {
    side: usize,
    safety: Vec<f64>,
}

impl RiskMap {
    pub fn new(side: usize, safety: Vec<f64>) -> Result<Self> {
        if side == 0 {
            return Err(Error::usage("map side must be positive"));
        }
        if safety.len() != side * side {
            return Err(Error::usage(format!(
                "safety array has {} values, expected {}",
                safety.len(),
                side * side
            )));
        }
        if let Some((i, v)) = safety
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::usage(format!("safety[{i}] = {v} is outside [0, 1]")));
        }
        Ok(RiskMap { side, safety })
    }

    /// Builds a map from risk values `R(g) = 1 - S(g)`.
    pub fn from_risk(side: usize, risk: &[f64]) -> Result<Self> {
        Self::new(side, risk.iter().map(|r| 1.0 - r).collect())
    }

    pub fn uniform(side: usize, safety: f64) -> Result<Self> {
        Self::new(side, vec![safety; side * side])
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn cell_count(&self) -> usize {
        self.safety.len()
    }

    pub fn contains(&self, c: Coord) -> bool {
        c.x < self.side && c.y < self.side
    }

    pub fn flatten(&self, c: Coord) -> usize {
        debug_assert!(self.contains(c));
        c.y * self.side + c.x
    }

    pub fn unflatten(&self, i: usize) -> Coord {
        debug_assert!(i < self.cell_count());
        Coord::new(i % self.side, i / self.side)
    }

    pub fn safety(&self, c: Coord) -> f64 {
        self.safety[self.flatten(c)]
    }

    pub fn risk(&self, c: Coord) -> f64 {
        1.0 - self.safety(c)
    }

    pub fn safety_values(&self) -> &[f64] {
        &self.safety
    }

    /// Flattened risk vector, the network's input encoding.
    pub fn risk_values(&self) -> Vec<f64> {
        self.safety.iter().map(|s| 1.0 - s).collect()
    }

    pub fn mean_risk(&self) -> f64 {
        self.safety.iter().map(|s| 1.0 - s).sum::<f64>() / self.cell_count() as f64
    }

    pub fn cells(&self) -> impl Iterator<Item = Coord> + '_ {
        (0..self.cell_count()).map(|i| self.unflatten(i))
    }

    pub fn check_coord(&self, c: Coord) -> Result<()> {
        if self.contains(c) {
            Ok(())
        } else {
            Err(Error::usage(format!(
                "cell ({c}) is outside the {0}x{0} map",
                self.side
            )))
        }
    }

    /// 4-neighbours in the order up, right, left, down. Blocked cells are
    /// included.
    pub fn neighbors(&self, c: Coord) -> Result<Neighbors> {
        self.check_coord(c)?;
        Ok(self.neighbors_of(c))
    }

    pub(crate) fn neighbors_of(&self, c: Coord) -> Neighbors {
        let mut buf = [c; 4];
        let mut len = 0;
        let mut push = |n: Coord| {
            buf[len] = n;
            len += 1;
        };
        if c.y + 1 < self.side {
            push(Coord::new(c.x, c.y + 1));
        }
        if c.x + 1 < self.side {
            push(Coord::new(c.x + 1, c.y));
        }
        if c.x > 0 {
            push(Coord::new(c.x - 1, c.y));
        }
        if c.y > 0 {
            push(Coord::new(c.x, c.y - 1));
        }
        Neighbors { buf, len }
    }
}

/// A single query: find the shortest path from `start` to `dest` whose
/// safety product is at least `epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub map_id: String,
    pub start: Coord,
    pub dest: Coord,
    pub epsilon: f64,
}

impl Case {
    pub fn new(map_id: impl Into<String>, start: Coord, dest: Coord, epsilon: f64) -> Result<Self> {
        if start == dest {
            return Err(Error::usage(format!("start and destination coincide at ({start})")));
        }
        check_epsilon(epsilon)?;
        Ok(Case {
            map_id: map_id.into(),
            start,
            dest,
            epsilon,
        })
    }

    /// Checks both endpoints lie on `map`.
    pub fn check_on(&self, map: &RiskMap) -> Result<()> {
        map.check_coord(self.start)?;
        map.check_coord(self.dest)
    }
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon <= 1.0 {
        Ok(())
    } else {
        Err(Error::usage(format!("epsilon {epsilon} is outside (0, 1]")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindDirection {
    PosX,
    NegX,
    PosY,
    NegY,
}

impl WindDirection {
    fn step(self) -> (isize, isize) {
        match self {
            WindDirection::PosX => (1, 0),
            WindDirection::NegX => (-1, 0),
            WindDirection::PosY => (0, 1),
            WindDirection::NegY => (0, -1),
        }
    }
}

impl FromStr for WindDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "+x" | "x" => Ok(WindDirection::PosX),
            "-x" => Ok(WindDirection::NegX),
            "+y" | "y" => Ok(WindDirection::PosY),
            "-y" => Ok(WindDirection::NegY),
            other => Err(Error::usage(format!("unknown wind direction {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindParams {
    pub building_count: usize,
    pub wind_direction: WindDirection,
    pub wind_speed: f64,
    pub assess_height: f64,
    pub seed: u64,
}

impl Default for WindParams {
    fn default() -> Self {
        WindParams {
            building_count: 6,
            wind_direction: WindDirection::PosX,
            wind_speed: 5.0,
            assess_height: 10.0,
            seed: 0,
        }
    }
}

/// Random map: exactly 20% safe cells (S = 1), 20% blocked cells (S = 0),
/// the rest with risk drawn uniformly from (0, 0.02].
pub fn gen_random_map(side: usize, seed: u64) -> Result<RiskMap> {
    if side < 2 {
        return Err(Error::usage(format!("map side {side} is below 2")));
    }
    let n = side * side;
    let fifth = (n as f64 * 0.2).round() as usize;

    #[derive(Clone, Copy)]
    enum Kind {
        Safe,
        Blocked,
        Risky,
    }
    let mut kinds = vec![Kind::Risky; n];
    kinds[..fifth].fill(Kind::Safe);
    kinds[fifth..2 * fifth].fill(Kind::Blocked);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    kinds.shuffle(&mut rng);

    let safety = kinds
        .iter()
        .map(|k| match k {
            Kind::Safe => 1.0,
            Kind::Blocked => 0.0,
            // random::<f64>() is in [0, 1), so the risk lands in (0, 0.02].
            Kind::Risky => 1.0 - RANDOM_MAX_RISK * (1.0 - rng.random::<f64>()),
        })
        .collect();
    RiskMap::new(side, safety)
}

const BUILDING_RETRIES: usize = 200;
const WAKE_GAIN: f64 = 0.01;
const HEIGHT_SCALE: f64 = 10.0;
const MAX_WAKE_RISK: f64 = 0.5;

/// Synthetic wind-flow map. Rectangular buildings are impassable; each
/// building cell casts a downwind wake whose risk decays linearly over
/// `ceil(wind_speed)` cells and whose peak grows with wind speed and
/// assessment height. Overlapping wakes take the maximum risk.
///
/// Building placement depends only on `side`, `building_count` and `seed`,
/// so varying speed or height for a fixed seed only changes wake strength.
pub fn gen_windflow_map(side: usize, params: &WindParams) -> Result<RiskMap> {
    if side < 2 {
        return Err(Error::usage(format!("map side {side} is below 2")));
    }
    if !(params.wind_speed >= 0.0 && params.wind_speed.is_finite()) {
        return Err(Error::usage(format!("wind speed {} must be >= 0", params.wind_speed)));
    }
    if !(params.assess_height >= 0.0 && params.assess_height.is_finite()) {
        return Err(Error::usage(format!(
            "assessment height {} must be >= 0",
            params.assess_height
        )));
    }

    let n = side * side;
    let mut blocked = vec![false; n];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let max_extent = (side / 4).clamp(1, 3);

    for b in 0..params.building_count {
        let mut placed = false;
        for _ in 0..BUILDING_RETRIES {
            let w = rng.random_range(1..=max_extent);
            let h = rng.random_range(1..=max_extent);
            let x0 = rng.random_range(0..=side - w);
            let y0 = rng.random_range(0..=side - h);
            let cells = || (y0..y0 + h).flat_map(move |y| (x0..x0 + w).map(move |x| y * side + x));
            if cells().any(|i| blocked[i]) {
                continue;
            }
            cells().for_each(|i| blocked[i] = true);
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::Generation(format!(
                "could not place building {} of {} without overlap",
                b + 1,
                params.building_count
            )));
        }
    }

    let wake_len = (params.wind_speed.ceil() as usize).min(side);
    let peak = (WAKE_GAIN * params.wind_speed * (1.0 + params.assess_height / HEIGHT_SCALE))
        .min(MAX_WAKE_RISK);
    let (dx, dy) = params.wind_direction.step();

    let mut risk = vec![0.0f64; n];
    for i in (0..n).filter(|&i| blocked[i]) {
        let (bx, by) = ((i % side) as isize, (i / side) as isize);
        for d in 1..=wake_len {
            let (x, y) = (bx + dx * d as isize, by + dy * d as isize);
            if x < 0 || y < 0 || x >= side as isize || y >= side as isize {
                break;
            }
            let j = y as usize * side + x as usize;
            let r = peak * (1.0 - (d - 1) as f64 / wake_len as f64);
            if r > risk[j] {
                risk[j] = r;
            }
        }
    }

    let safety = (0..n)
        .map(|i| if blocked[i] { 0.0 } else { 1.0 - risk[i] })
        .collect();
    RiskMap::new(side, safety)
}

/// Enumerates suitable cases on `map`: Manhattan separation above 10 and a
/// feasible path confirmed by the exhaustive Pareto search. Starts are
/// scanned in ascending flat index, then destinations.
pub fn enumerate_cases(
    map: &RiskMap,
    map_id: &str,
    epsilon: f64,
    limit: usize,
) -> Result<Vec<Case>> {
    check_epsilon(epsilon)?;
    let mut cases = Vec::new();
    if limit == 0 {
        return Ok(cases);
    }
    for si in 0..map.cell_count() {
        let start = map.unflatten(si);
        let has_far_dest = map.cells().any(|d| start.manhattan(d) > MIN_CASE_SEPARATION);
        if !has_far_dest || map.safety(start) < epsilon {
            continue;
        }
        let frontier = ParetoFrontier::build(map, start, epsilon, None);
        for di in 0..map.cell_count() {
            let dest = map.unflatten(di);
            if start.manhattan(dest) <= MIN_CASE_SEPARATION || !frontier.reaches(dest) {
                continue;
            }
            cases.push(Case::new(map_id, start, dest, epsilon)?);
            if cases.len() >= limit {
                return Ok(cases);
            }
        }
    }
    Ok(cases)
}

/// Writes the map text format: the side length, then one line per row from
/// the top row (`y = m - 1`) down.
pub fn save_map(map: &RiskMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_map(map, &mut out).map_err(|e| Error::io(path, e))
}

fn write_map(map: &RiskMap, out: &mut impl Write) -> std::io::Result<()> {
    let m = map.side();
    writeln!(out, "{m}")?;
    for y in (0..m).rev() {
        let row = &map.safety_values()[y * m..(y + 1) * m];
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    out.flush()
}

pub fn load_map(path: impl AsRef<Path>) -> Result<RiskMap> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_map(&text, path)
}

pub(crate) fn parse_map(text: &str, path: &Path) -> Result<RiskMap> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty map file"))?;
    let m: usize = header
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, 1, format!("bad side length {:?}", header.trim())))?;
    if m == 0 {
        return Err(Error::parse(path, 1, "side length must be positive"));
    }

    let mut safety = vec![0.0; m * m];
    let mut rows = 0;
    for (idx, line) in lines {
        let lineno = idx + 1;
        if rows == m {
            return Err(Error::parse(path, lineno, format!("more than {m} rows")));
        }
        let y = m - 1 - rows;
        let values: Vec<&str> = line.split_whitespace().collect();
        if values.len() != m {
            return Err(Error::parse(
                path,
                lineno,
                format!("row has {} values, expected {m}", values.len()),
            ));
        }
        for (x, v) in values.iter().enumerate() {
            let s: f64 = v
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad value {v:?}")))?;
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("safety {s} is outside [0, 1]"),
                ));
            }
            safety[y * m + x] = s;
        }
        rows += 1;
    }
    if rows != m {
        return Err(Error::parse(
            path,
            text.lines().count().max(1),
            format!("found {rows} rows, expected {m}"),
        ));
    }
    RiskMap::new(m, safety)
}

#[derive(Debug, Serialize, Deserialize)]
struct CaseRecord {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
    epsilon: f64,
}

/// Writes cases as CSV with header `x0,y0,x1,y1,epsilon`.
pub fn save_cases(cases: &[Case], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for c in cases {
        w.serialize(CaseRecord {
            x0: c.start.x,
            y0: c.start.y,
            x1: c.dest.x,
            y1: c.dest.y,
            epsilon: c.epsilon,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a case file; every case is tagged with `map_id`.
pub fn load_cases(path: impl AsRef<Path>, map_id: &str) -> Result<Vec<Case>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let mut cases = Vec::new();
    for (i, rec) in r.deserialize::<CaseRecord>().enumerate() {
        let rec = rec?;
        let case = Case::new(
            map_id,
            Coord::new(rec.x0, rec.y0),
            Coord::new(rec.x1, rec.y1),
            rec.epsilon,
        )
        .map_err(|e| Error::parse(path, i + 2, e.to_string()))?;
        cases.push(case);
    }
    Ok(cases)
}
