#![allow(dead_code)]

use riskpath::riskmap::{Case, Coord, RiskMap};

/// Cells lying on at least one simple start -> dest path whose safety
/// product (start included) reaches epsilon, found by exhaustive DFS.
pub fn brute_force_feasible_cells(map: &RiskMap, case: &Case) -> Vec<bool> {
    let n = map.side() * map.side();
    let mut feasible = vec![false; n];
    let mut on_path = vec![false; n];
    let mut stack = Vec::new();
    let s0 = map.safety(case.start);
    if s0 >= case.epsilon {
        dfs(map, case, case.start, s0, &mut on_path, &mut stack, &mut feasible);
    }
    feasible
}

fn dfs(
    map: &RiskMap,
    case: &Case,
    cell: Coord,
    safety: f64,
    on_path: &mut Vec<bool>,
    stack: &mut Vec<usize>,
    feasible: &mut Vec<bool>,
) {
    let i = cell.y * map.side() + cell.x;
    on_path[i] = true;
    stack.push(i);
    if cell == case.dest {
        for &j in stack.iter() {
            feasible[j] = true;
        }
    } else {
        for nb in grid_neighbors(map.side(), cell) {
            let j = nb.y * map.side() + nb.x;
            if on_path[j] {
                continue;
            }
            let s = safety * map.safety(nb);
            if s >= case.epsilon {
                dfs(map, case, nb, s, on_path, stack, feasible);
            }
        }
    }
    stack.pop();
    on_path[i] = false;
}

pub fn grid_neighbors(side: usize, c: Coord) -> Vec<Coord> {
    let mut out = Vec::with_capacity(4);
    if c.y + 1 < side {
        out.push(Coord::new(c.x, c.y + 1));
    }
    if c.x + 1 < side {
        out.push(Coord::new(c.x + 1, c.y));
    }
    if c.x > 0 {
        out.push(Coord::new(c.x - 1, c.y));
    }
    if c.y > 0 {
        out.push(Coord::new(c.x, c.y - 1));
    }
    out
}

/// Shortest feasible simple-path length by exhaustive DFS, for tiny maps.
pub fn brute_force_shortest(map: &RiskMap, case: &Case) -> Option<usize> {
    fn go(
        map: &RiskMap,
        case: &Case,
        cell: Coord,
        safety: f64,
        len: usize,
        seen: &mut Vec<bool>,
        best: &mut Option<usize>,
    ) {
        if best.is_some_and(|b| len >= b) {
            return;
        }
        if cell == case.dest {
            *best = Some(len);
            return;
        }
        for nb in grid_neighbors(map.side(), cell) {
            let j = nb.y * map.side() + nb.x;
            if seen[j] {
                continue;
            }
            let s = safety * map.safety(nb);
            if s >= case.epsilon {
                seen[j] = true;
                go(map, case, nb, s, len + 1, seen, best);
                seen[j] = false;
            }
        }
    }
    let s0 = map.safety(case.start);
    if s0 < case.epsilon {
        return None;
    }
    let mut seen = vec![false; map.side() * map.side()];
    seen[case.start.y * map.side() + case.start.x] = true;
    let mut best = None;
    go(map, case, case.start, s0, 0, &mut seen, &mut best);
    best
}

/// Checks the path shape independently of the library: endpoints, unit
/// steps, no repeated cell, and safety product at or above epsilon.
pub fn independent_path_check(map: &RiskMap, case: &Case, path: &[Coord]) -> Result<f64, String> {
    if path.first() != Some(&case.start) || path.last() != Some(&case.dest) {
        return Err("wrong endpoints".into());
    }
    let mut seen = std::collections::HashSet::new();
    let mut safety = 1.0;
    for (k, &c) in path.iter().enumerate() {
        if !seen.insert(c) {
            return Err(format!("cell {c} repeated"));
        }
        if k > 0 {
            let p = path[k - 1];
            if p.x.abs_diff(c.x) + p.y.abs_diff(c.y) != 1 {
                return Err(format!("non-adjacent step {p} -> {c}"));
            }
        }
        safety *= map.safety(c);
    }
    if safety < case.epsilon {
        return Err(format!("safety {safety} below {}", case.epsilon));
    }
    Ok(safety)
}
