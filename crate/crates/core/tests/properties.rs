mod common;

use proptest::prelude::*;

use riskpath::bench::{run_bench, Workload};
use riskpath::expert::{expert_heuristic, infeasible_mask, max_safety_field};
use riskpath::heuristic::{ExpertStrategy, HeuristicStrategy, ManhattanStrategy};
use riskpath::riskmap::{gen_random_map, load_cases, load_map, save_cases, save_map};
use riskpath::search::path_safety;
use riskpath::{asd_astar, pareto_oracle, validate_path, Case, Coord, Manhattan, RiskMap};
use std::sync::Arc;

#[derive(Debug, Clone)]
struct Instance {
    map: RiskMap,
    case: Case,
}

fn cell_safety() -> impl Strategy<Value = f64> {
    prop_oneof![
        2 => Just(1.0),
        1 => Just(0.0),
        3 => 0.9f64..1.0,
    ]
}

fn instance(sides: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Instance> {
    sides
        .prop_flat_map(|m| {
            (
                Just(m),
                prop::collection::vec(cell_safety(), m * m),
                0..m * m,
                1..m * m,
                prop_oneof![Just(0.8), Just(0.9), 0.5f64..=1.0],
            )
        })
        .prop_map(|(m, safety, s, offset, eps)| {
            let map = RiskMap::new(m, safety).unwrap();
            let d = (s + offset) % (m * m);
            let case = Case::new("p", map.unflatten(s), map.unflatten(d), eps).unwrap();
            Instance { map, case }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn astar_and_oracle_match_exhaustive_search(inst in instance(2..=4)) {
        let Instance { map, case } = inst;
        let brute = common::brute_force_shortest(&map, &case);
        let a = asd_astar(&map, &case, &Manhattan).unwrap();
        let o = pareto_oracle(&map, &case).unwrap();
        prop_assert_eq!(a.path_result().map(|r| r.length), brute);
        prop_assert_eq!(o.path_result().map(|r| r.length), brute);
        for r in [a.path_result(), o.path_result()].into_iter().flatten() {
            prop_assert!(validate_path(&map, &case, &r.path));
            let s = common::independent_path_check(&map, &case, &r.path).unwrap();
            prop_assert_eq!(s, r.safety);
        }
    }

    #[test]
    fn mask_matches_brute_force(inst in instance(2..=4)) {
        let Instance { map, case } = inst;
        let mask = infeasible_mask(&map, &case).unwrap();
        let feasible = common::brute_force_feasible_cells(&map, &case);
        for i in 0..mask.len() {
            prop_assert_eq!(mask[i], !feasible[i], "cell {}", map.unflatten(i));
        }
    }

    #[test]
    fn expert_is_admissible_and_optimal(inst in instance(3..=5)) {
        let Instance { map, case } = inst;
        let Some(opt) = pareto_oracle(&map, &case).unwrap().into_path_result() else {
            prop_assert!(expert_heuristic(&map, &case).is_err());
            return Ok(());
        };
        let table = expert_heuristic(&map, &case).unwrap();
        let best = best_completions(&map, &case);
        for (i, b) in best.iter().enumerate() {
            if let Some(b) = *b {
                prop_assert!(table.h[i] <= b as f64, "cell {} h {} > {}", map.unflatten(i), table.h[i], b);
            }
        }
        for c in &opt.path {
            prop_assert!(!table.infeasible_at(*c));
        }
        let r = asd_astar(&map, &case, &table).unwrap().into_path_result().unwrap();
        prop_assert_eq!(r.length, opt.length);
        prop_assert_eq!(table.h_at(case.dest), 0.0);
    }

    #[test]
    fn safety_field_bounds_every_simple_path(inst in instance(2..=4)) {
        let Instance { map, case } = inst;
        let field = max_safety_field(&map, case.start).unwrap();
        let opt = pareto_oracle(&map, &case).unwrap();
        if let Some(r) = opt.path_result() {
            prop_assert!(path_safety(&map, &r.path) <= field.at(case.dest) + 1e-15);
        }
        prop_assert_eq!(field.at(case.start), map.safety(case.start));
    }

    #[test]
    fn map_file_round_trip(inst in instance(2..=6)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.map");
        save_map(&inst.map, &path).unwrap();
        prop_assert_eq!(load_map(&path).unwrap(), inst.map);
    }

    #[test]
    fn case_file_round_trip(cases in prop::collection::vec(instance(2..=5), 0..8)) {
        let cases: Vec<Case> = cases.into_iter().map(|i| i.case).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        save_cases(&cases, &path).unwrap();
        prop_assert_eq!(load_cases(&path, "p").unwrap(), cases);
    }

    #[test]
    fn random_maps_have_exact_split(side in 2usize..20, seed in any::<u64>()) {
        let map = gen_random_map(side, seed).unwrap();
        let n = side * side;
        let fifth = (n * 2 + 5) / 10;
        let safe = map.safety_values().iter().filter(|&&s| s == 1.0).count();
        let blocked = map.safety_values().iter().filter(|&&s| s == 0.0).count();
        prop_assert_eq!(safe, fifth);
        prop_assert_eq!(blocked, fifth);
        prop_assert!(map.safety_values().iter().all(|&s| s == 0.0 || s >= 0.98));
    }
}

/// Shortest feasible remaining length from each cell over all feasible
/// simple start -> dest paths through it.
fn best_completions(map: &RiskMap, case: &Case) -> Vec<Option<usize>> {
    fn go(
        map: &RiskMap,
        case: &Case,
        safety: f64,
        stack: &mut Vec<Coord>,
        seen: &mut Vec<bool>,
        best: &mut Vec<Option<usize>>,
    ) {
        let cur = *stack.last().unwrap();
        if cur == case.dest {
            let l = stack.len() - 1;
            for (k, p) in stack.iter().enumerate() {
                let b = &mut best[map.flatten(*p)];
                *b = Some(b.map_or(l - k, |v| v.min(l - k)));
            }
            return;
        }
        for nb in common::grid_neighbors(map.side(), cur) {
            let j = map.flatten(nb);
            let s = safety * map.safety(nb);
            if !seen[j] && s >= case.epsilon {
                seen[j] = true;
                stack.push(nb);
                go(map, case, s, stack, seen, best);
                stack.pop();
                seen[j] = false;
            }
        }
    }
    let mut best = vec![None; map.cell_count()];
    let s0 = map.safety(case.start);
    if s0 >= case.epsilon {
        let mut seen = vec![false; map.cell_count()];
        seen[map.flatten(case.start)] = true;
        go(map, case, s0, &mut vec![case.start], &mut seen, &mut best);
    }
    best
}

#[test]
fn bench_columns_are_deterministic_across_runs_and_workers() {
    let mut w = Workload::default();
    for k in 0..3u64 {
        let id = format!("m{k}");
        let map = gen_random_map(8, 40 + k).unwrap();
        for s in map.cells().step_by(7) {
            for d in map.cells().step_by(5) {
                if s == d {
                    continue;
                }
                let case = Case::new(id.clone(), s, d, 0.9).unwrap();
                if pareto_oracle(&map, &case).unwrap().is_feasible() {
                    w.cases.push(case);
                }
            }
        }
        w.maps.insert(id, map);
    }
    let strategies: Vec<Arc<dyn HeuristicStrategy>> =
        vec![Arc::new(ManhattanStrategy), Arc::new(ExpertStrategy)];
    let key = |jobs| {
        let run = run_bench(&w, &strategies, jobs).unwrap();
        let rows: Vec<_> = run
            .report
            .rows
            .iter()
            .map(|r| (r.heuristic.clone(), r.cases, r.avg_nodes.to_bits(), r.avg_len.to_bits()))
            .collect();
        let outs: Vec<_> = run
            .outcomes
            .iter()
            .flatten()
            .map(|o| (o.case_index, o.nodes_explored, o.path.clone()))
            .collect();
        (rows, outs)
    };
    let first = key(1);
    assert_eq!(first, key(1));
    assert_eq!(first, key(3));
    assert_eq!(first.0[0].3, first.0[1].3, "manhattan and expert avg_len differ");
}
