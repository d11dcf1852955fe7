//! ASD A*: A* over labels `(cell, safety)` with per-cell Pareto dominance,
//! plus an exhaustive label-correcting oracle and a path validator.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heuristic::Heuristic;
use crate::riskmap::{Case, Coord, RiskMap};

pub fn manhattan_h(c: Coord, dest: Coord) -> usize {
    c.manhattan(dest)
}

/// Safety product of a path, start cell included, multiplied in path order.
/// The searchers accumulate label safety in the same order, so the results
/// agree bit for bit.
pub fn path_safety(map: &RiskMap, path: &[Coord]) -> f64 {
    path.iter().fold(1.0, |acc, &c| acc * map.safety(c))
}

/// True iff `path` is a simple 4-connected path from `case.start` to
/// `case.dest` whose safety product is at least `case.epsilon`.
pub fn validate_path(map: &RiskMap, case: &Case, path: &[Coord]) -> bool {
    let (Some(&first), Some(&last)) = (path.first(), path.last()) else {
        return false;
    };
    if first != case.start || last != case.dest {
        return false;
    }
    if !path.iter().all(|&c| map.contains(c)) {
        return false;
    }
    if !path.windows(2).all(|w| w[0].is_adjacent(w[1])) {
        return false;
    }
    let mut seen = vec![false; map.cell_count()];
    for &c in path {
        let i = map.flatten(c);
        if seen[i] {
            return false;
        }
        seen[i] = true;
    }
    path_safety(map, path) >= case.epsilon
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabelId(usize);

impl LabelId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Label {
    pub cell: Coord,
    pub safety: f64,
    pub g: u32,
    pub f: f64,
    pub parent: Option<LabelId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub path: Vec<Coord>,
    pub length: usize,
    pub safety: f64,
    pub nodes_explored: usize,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchOutcome {
    Found(PathResult),
    Infeasible { nodes_explored: usize, elapsed_ms: f64 },
}

impl SearchOutcome {
    pub fn path_result(&self) -> Option<&PathResult> {
        match self {
            SearchOutcome::Found(r) => Some(r),
            SearchOutcome::Infeasible { .. } => None,
        }
    }

    pub fn into_path_result(self) -> Option<PathResult> {
        match self {
            SearchOutcome::Found(r) => Some(r),
            SearchOutcome::Infeasible { .. } => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, SearchOutcome::Found(_))
    }

    pub fn nodes_explored(&self) -> usize {
        match self {
            SearchOutcome::Found(r) => r.nodes_explored,
            SearchOutcome::Infeasible { nodes_explored, .. } => *nodes_explored,
        }
    }

    pub fn elapsed_ms(&self) -> f64 {
        match self {
            SearchOutcome::Found(r) => r.elapsed_ms,
            SearchOutcome::Infeasible { elapsed_ms, .. } => *elapsed_ms,
        }
    }
}

/// One frontier pop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub flat: usize,
    pub g: u32,
    pub safety: f64,
    pub f: f64,
}

pub fn write_trace(trace: &[TraceEntry], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for e in trace {
        w.serialize(e)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<TraceEntry>> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    r.deserialize().map(|e| e.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, Copy)]
struct FrontierEntry {
    f: f64,
    safety: f64,
    g: u32,
    seq: u64,
    id: LabelId,
}

impl PartialEq for FrontierEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for FrontierEntry {}

impl PartialOrd for FrontierEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FrontierEntry {
    // BinaryHeap pops the greatest: min f, then max safety, then max g,
    // then earliest insertion.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| self.safety.total_cmp(&other.safety))
            .then_with(|| self.g.cmp(&other.g))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Result of a single [`AsdAstar::step`].
#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Expanded(LabelId),
    Found(PathResult),
    Exhausted,
}

/// Incremental ASD A* search over one case.
pub struct AsdAstar<'a> {
    map: &'a RiskMap,
    case: &'a Case,
    heuristic: &'a dyn Heuristic,
    labels: Vec<Label>,
    alive: Vec<bool>,
    kept: Vec<Vec<LabelId>>,
    frontier: BinaryHeap<FrontierEntry>,
    seq: u64,
    nodes_explored: usize,
    trace: Option<Vec<TraceEntry>>,
    started: Instant,
    done: bool,
}

impl<'a> AsdAstar<'a> {
    pub fn new(map: &'a RiskMap, case: &'a Case, heuristic: &'a dyn Heuristic) -> Result<Self> {
        case.check_on(map)?;
        let mut search = AsdAstar {
            map,
            case,
            heuristic,
            labels: Vec::new(),
            alive: Vec::new(),
            kept: vec![Vec::new(); map.cell_count()],
            frontier: BinaryHeap::new(),
            seq: 0,
            nodes_explored: 0,
            trace: None,
            started: Instant::now(),
            done: false,
        };
        // The start label goes in even when S(start) < epsilon; it is
        // rejected when popped.
        let start = case.start;
        let h = heuristic.evaluate(case, start);
        search.insert(Label {
            cell: start,
            safety: map.safety(start),
            g: 0,
            f: h,
            parent: None,
        });
        Ok(search)
    }

    /// Records every pop for [`AsdAstar::trace`].
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn trace(&self) -> Option<&[TraceEntry]> {
        self.trace.as_deref()
    }

    pub fn take_trace(&mut self) -> Option<Vec<TraceEntry>> {
        self.trace.take()
    }

    pub fn nodes_explored(&self) -> usize {
        self.nodes_explored
    }

    pub fn label(&self, id: LabelId) -> &Label {
        &self.labels[id.0]
    }

    /// Labels currently kept at `cell` (open or already expanded).
    pub fn kept_labels(&self, cell: Coord) -> impl Iterator<Item = &Label> {
        self.kept[self.map.flatten(cell)]
            .iter()
            .map(|id| &self.labels[id.0])
    }

    fn insert(&mut self, label: Label) -> LabelId {
        let id = LabelId(self.labels.len());
        self.kept[self.map.flatten(label.cell)].push(id);
        self.frontier.push(FrontierEntry {
            f: label.f,
            safety: label.safety,
            g: label.g,
            seq: self.seq,
            id,
        });
        self.seq += 1;
        self.labels.push(label);
        self.alive.push(true);
        id
    }

    /// Weak dominance at one cell: the candidate is discarded if a kept label
    /// is at least as good in both f and safety; otherwise every kept label
    /// at most as good in both is removed.
    fn admit(&mut self, cell_idx: usize, f: f64, safety: f64) -> bool {
        let labels = &self.labels;
        if self.kept[cell_idx]
            .iter()
            .any(|id| labels[id.0].f <= f && labels[id.0].safety >= safety)
        {
            return false;
        }
        let alive = &mut self.alive;
        self.kept[cell_idx].retain(|id| {
            let l = &labels[id.0];
            let dominated = l.f >= f && l.safety <= safety;
            if dominated {
                alive[id.0] = false;
            }
            !dominated
        });
        true
    }

    pub fn step(&mut self) -> Step {
        if self.done {
            return Step::Exhausted;
        }
        let entry = loop {
            match self.frontier.pop() {
                Some(e) if self.alive[e.id.0] => break e,
                Some(_) => continue,
                None => {
                    self.done = true;
                    return Step::Exhausted;
                }
            }
        };
        self.nodes_explored += 1;
        let label = self.labels[entry.id.0].clone();
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceEntry {
                flat: self.map.flatten(label.cell),
                g: label.g,
                safety: label.safety,
                f: label.f,
            });
        }

        if label.safety < self.case.epsilon {
            // Only the start label can get here; everything below it is
            // less safe still.
            self.frontier.clear();
            self.done = true;
            return Step::Exhausted;
        }
        if label.cell == self.case.dest {
            self.done = true;
            return Step::Found(self.build_result(entry.id));
        }

        let neighbors = self.map.neighbors_of(label.cell);
        for &next in neighbors.as_slice() {
            let safety = label.safety * self.map.safety(next);
            if safety < self.case.epsilon || self.heuristic.is_infeasible(self.case, next) {
                continue;
            }
            let g = label.g + 1;
            let f = g as f64 + self.heuristic.evaluate(self.case, next);
            if self.admit(self.map.flatten(next), f, safety) {
                self.insert(Label {
                    cell: next,
                    safety,
                    g,
                    f,
                    parent: Some(entry.id),
                });
            }
        }
        Step::Expanded(entry.id)
    }

    /// Runs to completion.
    pub fn run(&mut self) -> SearchOutcome {
        loop {
            match self.step() {
                Step::Expanded(_) => {}
                Step::Found(r) => return SearchOutcome::Found(r),
                Step::Exhausted => {
                    return SearchOutcome::Infeasible {
                        nodes_explored: self.nodes_explored,
                        elapsed_ms: self.elapsed_ms(),
                    }
                }
            }
        }
    }

    /// Parent chain of a label, start first.
    pub fn chain(&self, id: LabelId) -> Vec<LabelId> {
        let mut ids = vec![id];
        let mut cur = id;
        while let Some(p) = self.labels[cur.0].parent {
            ids.push(p);
            cur = p;
        }
        ids.reverse();
        ids
    }

    fn elapsed_ms(&self) -> f64 {
        self.started.elapsed().as_secs_f64() * 1e3
    }

    fn build_result(&self, id: LabelId) -> PathResult {
        let path: Vec<Coord> = self.chain(id).iter().map(|&l| self.labels[l.0].cell).collect();
        PathResult {
            length: path.len() - 1,
            safety: self.labels[id.0].safety,
            path,
            nodes_explored: self.nodes_explored,
            elapsed_ms: self.elapsed_ms(),
        }
    }
}

pub fn asd_astar(map: &RiskMap, case: &Case, heuristic: &dyn Heuristic) -> Result<SearchOutcome> {
    Ok(AsdAstar::new(map, case, heuristic)?.run())
}

/// Like [`asd_astar`] but also returns the pop trace.
pub fn asd_astar_traced(
    map: &RiskMap,
    case: &Case,
    heuristic: &dyn Heuristic,
) -> Result<(SearchOutcome, Vec<TraceEntry>)> {
    let mut search = AsdAstar::new(map, case, heuristic)?.with_trace();
    let outcome = search.run();
    Ok((outcome, search.take_trace().unwrap_or_default()))
}

#[derive(Debug, Clone)]
struct OracleLabel {
    cell: usize,
    g: u32,
    safety: f64,
    parent: Option<usize>,
}

/// Full Pareto frontier of `(length, safety)` labels from one source, built
/// breadth-first with exact dominance and no heuristic. Labels below the
/// safety threshold are dropped since safety only decreases.
#[derive(Debug, Clone)]
pub struct ParetoFrontier {
    side: usize,
    labels: Vec<OracleLabel>,
    kept: Vec<Vec<usize>>,
    expanded: usize,
}

impl ParetoFrontier {
    /// With `target`, stops after the first level that reaches it; otherwise
    /// runs until no label can be extended.
    pub fn build(map: &RiskMap, source: Coord, epsilon: f64, target: Option<Coord>) -> Self {
        let n = map.cell_count();
        let mut pf = ParetoFrontier {
            side: map.side(),
            labels: Vec::new(),
            kept: vec![Vec::new(); n],
            expanded: 0,
        };
        let s0 = map.safety(source);
        if s0 < epsilon {
            return pf;
        }
        let src = map.flatten(source);
        pf.labels.push(OracleLabel {
            cell: src,
            g: 0,
            safety: s0,
            parent: None,
        });
        pf.kept[src].push(0);
        let mut alive = vec![true];
        let mut level = vec![0usize];
        let target = target.map(|t| map.flatten(t));
        if target == Some(src) {
            return pf;
        }

        while !level.is_empty() {
            let mut next_level = Vec::new();
            for &id in &level {
                if !alive[id] {
                    continue;
                }
                pf.expanded += 1;
                let (cell, g, safety) = {
                    let l = &pf.labels[id];
                    (l.cell, l.g, l.safety)
                };
                let here = map.unflatten(cell);
                for &nb in map.neighbors_of(here).as_slice() {
                    let s = safety * map.safety(nb);
                    if s < epsilon {
                        continue;
                    }
                    let ni = map.flatten(nb);
                    let ng = g + 1;
                    let labels = &pf.labels;
                    if pf.kept[ni]
                        .iter()
                        .any(|&k| labels[k].g <= ng && labels[k].safety >= s)
                    {
                        continue;
                    }
                    pf.kept[ni].retain(|&k| {
                        let dominated = labels[k].g >= ng && labels[k].safety <= s;
                        if dominated {
                            alive[k] = false;
                        }
                        !dominated
                    });
                    let new_id = pf.labels.len();
                    pf.labels.push(OracleLabel {
                        cell: ni,
                        g: ng,
                        safety: s,
                        parent: Some(id),
                    });
                    alive.push(true);
                    pf.kept[ni].push(new_id);
                    next_level.push(new_id);
                }
            }
            if let Some(t) = target {
                if !pf.kept[t].is_empty() {
                    break;
                }
            }
            level = next_level;
        }
        pf
    }

    fn flat(&self, c: Coord) -> usize {
        c.y * self.side + c.x
    }

    pub fn reaches(&self, dest: Coord) -> bool {
        !self.kept[self.flat(dest)].is_empty()
    }

    /// Number of labels expanded while building.
    pub fn expanded(&self) -> usize {
        self.expanded
    }

    /// Shortest feasible path to `dest`; among equal lengths the safest, then
    /// the earliest found.
    fn best_label(&self, dest: Coord) -> Option<usize> {
        self.kept[self.flat(dest)].iter().copied().min_by(|&a, &b| {
            let (la, lb) = (&self.labels[a], &self.labels[b]);
            la.g.cmp(&lb.g)
                .then_with(|| lb.safety.total_cmp(&la.safety))
                .then_with(|| a.cmp(&b))
        })
    }

    pub fn shortest_length(&self, dest: Coord) -> Option<usize> {
        self.best_label(dest).map(|id| self.labels[id].g as usize)
    }

    pub fn path_to(&self, dest: Coord) -> Option<(Vec<Coord>, f64)> {
        let id = self.best_label(dest)?;
        let mut cells = Vec::new();
        let mut cur = Some(id);
        while let Some(i) = cur {
            let c = self.labels[i].cell;
            cells.push(Coord::new(c % self.side, c / self.side));
            cur = self.labels[i].parent;
        }
        cells.reverse();
        Some((cells, self.labels[id].safety))
    }
}

/// Exhaustive constrained shortest path. Exponential in the worst case, used
/// as ground truth and for expert tables.
pub fn pareto_oracle(map: &RiskMap, case: &Case) -> Result<SearchOutcome> {
    case.check_on(map)?;
    let started = Instant::now();
    let frontier = ParetoFrontier::build(map, case.start, case.epsilon, Some(case.dest));
    let elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
    let nodes_explored = frontier.expanded();
    Ok(match frontier.path_to(case.dest) {
        Some((path, safety)) => SearchOutcome::Found(PathResult {
            length: path.len() - 1,
            path,
            safety,
            nodes_explored,
            elapsed_ms,
        }),
        None => SearchOutcome::Infeasible {
            nodes_explored,
            elapsed_ms,
        },
    })
}
