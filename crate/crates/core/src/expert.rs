//! Per-case expert heuristic: exact cost-to-go along one optimal path, the
//! Manhattan distance elsewhere, and a mask of cells that lie on no feasible
//! simple path. Also the text dataset the learned model is trained on.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::heuristic::HeuristicTable;
use crate::riskmap::{Case, Coord, RiskMap};
use crate::search::{manhattan_h, pareto_oracle};

/// Sentinel h-value for infeasible cells in datasets and model targets.
pub fn h_inf(side: usize) -> f64 {
    4.0 * side as f64
}

/// Best achievable safety product from an anchor cell to every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyField {
    side: usize,
    pub best: Vec<f64>,
    parent: Vec<Option<usize>>,
}

impl SafetyField {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn at(&self, c: Coord) -> f64 {
        self.best[c.y * self.side + c.x]
    }

    /// Flat indices of the best path from `cell` back to the anchor.
    fn chain_to_anchor(&self, cell: usize) -> Vec<usize> {
        let mut out = vec![cell];
        let mut cur = cell;
        while let Some(p) = self.parent[cur] {
            out.push(p);
            cur = p;
        }
        out
    }
}

#[derive(PartialEq)]
struct Probe(f64, usize);

impl Eq for Probe {}

impl PartialOrd for Probe {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Probe {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .total_cmp(&other.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

/// Max-product best-first propagation from `anchor`. Every factor is at most
/// 1, so the product never grows along a path and a settled cell is final.
pub fn max_safety_field(map: &RiskMap, anchor: Coord) -> Result<SafetyField> {
    map.check_coord(anchor)?;
    let n = map.cell_count();
    let mut best = vec![0.0; n];
    let mut parent = vec![None; n];
    let mut settled = vec![false; n];
    let a = map.flatten(anchor);
    best[a] = map.safety(anchor);
    let mut heap = BinaryHeap::new();
    heap.push(Probe(best[a], a));
    while let Some(Probe(s, i)) = heap.pop() {
        if settled[i] || s <= 0.0 {
            continue;
        }
        settled[i] = true;
        for &nb in map.neighbors_of(map.unflatten(i)).as_slice() {
            let j = map.flatten(nb);
            let cand = s * map.safety(nb);
            if !settled[j] && cand > best[j] {
                best[j] = cand;
                parent[j] = Some(i);
                heap.push(Probe(cand, j));
            }
        }
    }
    Ok(SafetyField {
        side: map.side(),
        best,
        parent,
    })
}

/// Marks every cell through which no simple start -> cell -> dest path meets
/// the threshold.
///
/// The two safety fields give a cheap necessary condition: the best walk
/// through `n` has product `best_start[n] * best_dest[n] / S(n)`. When that
/// falls below epsilon the cell is infeasible. Otherwise the two best
/// half-paths are checked for overlap; if they only share `n` the walk is
/// already a simple path. Remaining cells (dead ends, bottlenecks) are
/// settled exactly with a two-unit min-cost flow over vertex-split cells,
/// which finds the safest pair of vertex-disjoint paths from `n` to the
/// endpoints.
pub fn infeasible_mask(map: &RiskMap, case: &Case) -> Result<Vec<bool>> {
    infeasible_mask_with(map, case, &[])
}

// Screen slack so that float rounding in the division never marks a cell the
// exact check would keep.
const SCREEN_SLACK: f64 = 1.0 - 1e-9;

pub(crate) fn infeasible_mask_with(
    map: &RiskMap,
    case: &Case,
    known_feasible: &[Coord],
) -> Result<Vec<bool>> {
    case.check_on(map)?;
    let n = map.cell_count();
    let eps = case.epsilon;
    let from_start = max_safety_field(map, case.start)?;
    let from_dest = max_safety_field(map, case.dest)?;
    let start = map.flatten(case.start);
    let dest = map.flatten(case.dest);

    // Best simple start -> dest path, multiplied in path order.
    let direct = from_dest.chain_to_anchor(start);
    let direct_ok = from_dest.best[start] > 0.0 && product(map, &direct) >= eps;

    let mut mask = vec![true; n];
    if !direct_ok {
        return Ok(mask);
    }
    mask[start] = false;
    mask[dest] = false;
    for &c in known_feasible {
        mask[map.flatten(c)] = false;
    }

    let mut flow = DisjointPaths::new(map);
    let candidates: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
    for i in candidates {
        let s = map.safety_values()[i];
        if s <= 0.0 {
            continue;
        }
        let through = from_start.best[i] * from_dest.best[i] / s;
        if through < eps * SCREEN_SLACK {
            continue;
        }
        let mut head = from_start.chain_to_anchor(i);
        head.reverse();
        let tail = from_dest.chain_to_anchor(i);
        let mut seen = vec![false; n];
        let mut overlap = false;
        for &c in head.iter().chain(tail[1..].iter()) {
            if seen[c] {
                overlap = true;
                break;
            }
            seen[c] = true;
        }
        if !overlap {
            head.extend_from_slice(&tail[1..]);
            if product(map, &head) >= eps {
                mask[i] = false;
                continue;
            }
        }
        if let Some(path) = flow.safest_through(i, start, dest) {
            if product(map, &path) >= eps {
                mask[i] = false;
            }
        }
    }
    Ok(mask)
}

fn product(map: &RiskMap, flat_path: &[usize]) -> f64 {
    flat_path
        .iter()
        .fold(1.0, |acc, &i| acc * map.safety_values()[i])
}

#[derive(Clone, Copy)]
struct Arc {
    to: usize,
    cap: i32,
    cost: f64,
}

/// Residual graph over vertex-split cells for the through-cell check.
/// Node `2i` is the entry of cell `i`, `2i + 1` its exit, and the last node
/// is the sink.
struct DisjointPaths<'m> {
    map: &'m RiskMap,
    arcs: Vec<Arc>,
    adj: Vec<Vec<usize>>,
    sink: usize,
}

impl<'m> DisjointPaths<'m> {
    fn new(map: &'m RiskMap) -> Self {
        let n = map.cell_count();
        DisjointPaths {
            map,
            arcs: Vec::new(),
            adj: vec![Vec::new(); 2 * n + 1],
            sink: 2 * n,
        }
    }

    fn add(&mut self, from: usize, to: usize, cost: f64) {
        self.adj[from].push(self.arcs.len());
        self.arcs.push(Arc { to, cap: 1, cost });
        self.adj[to].push(self.arcs.len());
        self.arcs.push(Arc {
            to: from,
            cap: 0,
            cost: -cost,
        });
    }

    fn rebuild(&mut self, via: usize, start: usize, dest: usize) {
        self.arcs.clear();
        self.adj.iter_mut().for_each(Vec::clear);
        let map = self.map;
        for i in 0..map.cell_count() {
            let s = map.safety_values()[i];
            if s <= 0.0 {
                continue;
            }
            if i != via {
                self.add(2 * i, 2 * i + 1, -s.ln());
            }
            for &nb in map.neighbors_of(map.unflatten(i)).as_slice() {
                let j = map.flatten(nb);
                if j != via && map.safety_values()[j] > 0.0 {
                    self.add(2 * i + 1, 2 * j, 0.0);
                }
            }
        }
        self.add(2 * start + 1, self.sink, 0.0);
        self.add(2 * dest + 1, self.sink, 0.0);
    }

    /// Shortest augmenting path by SPFA; returns false when the sink is cut.
    fn augment(&mut self, source: usize) -> bool {
        let nodes = self.adj.len();
        let mut dist = vec![f64::INFINITY; nodes];
        let mut via_arc = vec![usize::MAX; nodes];
        let mut queued = vec![false; nodes];
        let mut queue = VecDeque::new();
        dist[source] = 0.0;
        queue.push_back(source);
        queued[source] = true;
        while let Some(u) = queue.pop_front() {
            queued[u] = false;
            for &a in &self.adj[u] {
                let arc = self.arcs[a];
                if arc.cap <= 0 {
                    continue;
                }
                let d = dist[u] + arc.cost;
                if d < dist[arc.to] - 1e-12 {
                    dist[arc.to] = d;
                    via_arc[arc.to] = a;
                    if !queued[arc.to] {
                        queued[arc.to] = true;
                        queue.push_back(arc.to);
                    }
                }
            }
        }
        if dist[self.sink].is_infinite() {
            return false;
        }
        let mut v = self.sink;
        while v != source {
            let a = via_arc[v];
            self.arcs[a].cap -= 1;
            self.arcs[a ^ 1].cap += 1;
            v = self.arcs[a ^ 1].to;
        }
        true
    }

    /// Safest simple start -> via -> dest path as flat indices, if any.
    fn safest_through(&mut self, via: usize, start: usize, dest: usize) -> Option<Vec<usize>> {
        self.rebuild(via, start, dest);
        let source = 2 * via + 1;
        if !self.augment(source) || !self.augment(source) {
            return None;
        }
        // Walk saturated forward arcs from the source; each unit ends at the
        // sink through either the start or the destination exit.
        let mut used = vec![false; self.arcs.len()];
        let mut to_start = None;
        let mut to_dest = None;
        for _ in 0..2 {
            let mut cells = Vec::new();
            let mut u = source;
            let mut last = via;
            while u != self.sink {
                let a = *self.adj[u]
                    .iter()
                    .find(|&&a| a % 2 == 0 && !used[a] && self.arcs[a].cap == 0)?;
                used[a] = true;
                let to = self.arcs[a].to;
                if to != self.sink && to.is_multiple_of(2) {
                    last = to / 2;
                    cells.push(last);
                }
                u = to;
            }
            if last == start {
                to_start = Some(cells);
            } else {
                to_dest = Some(cells);
            }
        }
        let mut path = to_start?;
        path.reverse();
        path.push(via);
        path.extend(to_dest?);
        Some(path)
    }
}

/// Builds the expert table for a feasible case.
pub fn expert_heuristic(map: &RiskMap, case: &Case) -> Result<HeuristicTable> {
    let optimal = pareto_oracle(map, case)?
        .into_path_result()
        .ok_or_else(|| {
            Error::usage(format!(
                "case {} -> {} (epsilon {}) has no feasible path",
                case.start, case.dest, case.epsilon
            ))
        })?;
    let mut h: Vec<f64> = map
        .cells()
        .map(|c| manhattan_h(c, case.dest) as f64)
        .collect();
    let len = optimal.length;
    for (k, &c) in optimal.path.iter().enumerate() {
        h[map.flatten(c)] = (len - k) as f64;
    }
    let infeasible = infeasible_mask_with(map, case, &optimal.path)?;
    HeuristicTable::new(map.side(), h, infeasible)
}

/// One training example.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub safety: Vec<f64>,
    pub start_flat: usize,
    pub dest_flat: usize,
    pub epsilon: f64,
    /// Target h per cell; infeasible cells carry the `h_inf` sentinel.
    pub target: Vec<f64>,
    pub mask: Vec<bool>,
}

impl DatasetRecord {
    pub fn new(map: &RiskMap, case: &Case, table: &HeuristicTable) -> Result<Self> {
        if table.side() != map.side() {
            return Err(Error::usage("heuristic table and map sizes differ"));
        }
        let sentinel = h_inf(map.side());
        let target = table
            .h
            .iter()
            .zip(&table.infeasible)
            .map(|(&h, &bad)| if bad { sentinel } else { h.min(sentinel) })
            .collect();
        Ok(DatasetRecord {
            safety: map.safety_values().to_vec(),
            start_flat: map.flatten(case.start),
            dest_flat: map.flatten(case.dest),
            epsilon: case.epsilon,
            target,
            mask: table.infeasible.clone(),
        })
    }
}

/// Writes the dataset text format: a header line with the side length, then
/// four lines per record (safety values, `start_flat dest_flat epsilon`,
/// targets, mask bits).
pub fn export_dataset(
    cases: &[Case],
    maps: &[&RiskMap],
    tables: &[HeuristicTable],
    path: impl AsRef<Path>,
) -> Result<usize> {
    if cases.len() != maps.len() || cases.len() != tables.len() {
        return Err(Error::usage(format!(
            "parallel lists differ in length: {} cases, {} maps, {} tables",
            cases.len(),
            maps.len(),
            tables.len()
        )));
    }
    let records = cases
        .iter()
        .zip(maps)
        .zip(tables)
        .map(|((c, m), t)| DatasetRecord::new(m, c, t))
        .collect::<Result<Vec<_>>>()?;
    write_dataset(&records, path)?;
    Ok(records.len())
}

pub fn write_dataset(records: &[DatasetRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let side = match records.first() {
        Some(r) => (r.safety.len() as f64).sqrt() as usize,
        None => return Err(Error::usage("dataset has no records")),
    };
    if records.iter().any(|r| r.safety.len() != side * side) {
        return Err(Error::usage("all dataset maps must share one size"));
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let join = |v: &mut dyn Iterator<Item = String>| v.collect::<Vec<_>>().join(" ");
    let io = |e| Error::io(path, e);
    writeln!(out, "{side}").map_err(io)?;
    for r in records {
        writeln!(out, "{}", join(&mut r.safety.iter().map(f64::to_string))).map_err(io)?;
        writeln!(out, "{} {} {}", r.start_flat, r.dest_flat, r.epsilon).map_err(io)?;
        writeln!(out, "{}", join(&mut r.target.iter().map(f64::to_string))).map_err(io)?;
        writeln!(
            out,
            "{}",
            join(&mut r.mask.iter().map(|&b| u8::from(b).to_string()))
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<(usize, Vec<DatasetRecord>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty dataset"))?;
    let side: usize = header
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, 1, "bad side length"))?;
    let n = side * side;

    fn values<T: std::str::FromStr>(
        path: &Path,
        lineno: usize,
        line: &str,
        want: usize,
    ) -> Result<Vec<T>> {
        let v = line
            .split_whitespace()
            .map(|t| t.parse::<T>())
            .collect::<Result<Vec<T>, _>>()
            .map_err(|_| Error::parse(path, lineno, "bad number"))?;
        if v.len() != want {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {want} values, found {}", v.len()),
            ));
        }
        Ok(v)
    }

    let mut records = Vec::new();
    while let Some((i, safety_line)) = lines.next() {
        if safety_line.trim().is_empty() {
            continue;
        }
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::parse(path, i + 1, format!("record truncated before {what}")))
        };
        let (j, query) = next("query line")?;
        let (k, target) = next("targets")?;
        let (l, mask) = next("mask")?;

        let safety = values::<f64>(path, i + 1, safety_line, n)?;
        let q: Vec<&str> = query.split_whitespace().collect();
        if q.len() != 3 {
            return Err(Error::parse(path, j + 1, "expected `start dest epsilon`"));
        }
        let bad = || Error::parse(path, j + 1, "bad query line");
        let start_flat: usize = q[0].parse().map_err(|_| bad())?;
        let dest_flat: usize = q[1].parse().map_err(|_| bad())?;
        let epsilon: f64 = q[2].parse().map_err(|_| bad())?;
        let target = values::<f64>(path, k + 1, target, n)?;
        let mask = values::<u8>(path, l + 1, mask, n)?
            .into_iter()
            .map(|b| b != 0)
            .collect();
        records.push(DatasetRecord {
            safety,
            start_flat,
            dest_flat,
            epsilon,
            target,
            mask,
        });
    }
    Ok((side, records))
}
