//! The heuristic interface consumed by the searcher, the shared table type
//! produced by per-case heuristics, and a name-keyed strategy registry.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expert::expert_heuristic;
use crate::nnheur::{nn_heuristic, NnModel};
use crate::riskmap::{Case, Coord, RiskMap};
use crate::search::manhattan_h;

/// Cost-to-go estimate for ASD A*. Implementations must be deterministic for
/// a fixed case and safe to share between threads.
pub trait Heuristic: Send + Sync {
    /// Estimated remaining steps from `cell` to `case.dest`.
    fn evaluate(&self, case: &Case, cell: Coord) -> f64;

    /// Cells for which this returns true are never enqueued.
    fn is_infeasible(&self, _case: &Case, _cell: Coord) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Manhattan;

impl Heuristic for Manhattan {
    fn evaluate(&self, case: &Case, cell: Coord) -> f64 {
        manhattan_h(cell, case.dest) as f64
    }
}

/// Per-cell h-values plus an infeasibility mask, built for one case.
#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicTable {
    side: usize,
    pub h: Vec<f64>,
    pub infeasible: Vec<bool>,
}

impl HeuristicTable {
    pub fn new(side: usize, h: Vec<f64>, infeasible: Vec<bool>) -> Result<Self> {
        let n = side * side;
        if h.len() != n || infeasible.len() != n {
            return Err(Error::usage(format!(
                "heuristic table for a {side}x{side} map needs {n} entries"
            )));
        }
        Ok(HeuristicTable {
            side,
            h,
            infeasible,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    fn index(&self, c: Coord) -> usize {
        c.y * self.side + c.x
    }

    pub fn h_at(&self, c: Coord) -> f64 {
        self.h[self.index(c)]
    }

    pub fn infeasible_at(&self, c: Coord) -> bool {
        self.infeasible[self.index(c)]
    }
}

impl Heuristic for HeuristicTable {
    fn evaluate(&self, _case: &Case, cell: Coord) -> f64 {
        self.h_at(cell)
    }

    fn is_infeasible(&self, _case: &Case, cell: Coord) -> bool {
        self.infeasible_at(cell)
    }
}

/// Builds a [`Heuristic`] for one case. The time spent in `prepare` is part
/// of the per-case cost reported by the benchmark harness.
pub trait HeuristicStrategy: Send + Sync {
    fn name(&self) -> &str;

    fn prepare(&self, map: &RiskMap, case: &Case) -> Result<Box<dyn Heuristic>>;
}

pub struct ManhattanStrategy;

impl HeuristicStrategy for ManhattanStrategy {
    fn name(&self) -> &str {
        "manhattan"
    }

    fn prepare(&self, _map: &RiskMap, _case: &Case) -> Result<Box<dyn Heuristic>> {
        Ok(Box::new(Manhattan))
    }
}

pub struct ExpertStrategy;

impl HeuristicStrategy for ExpertStrategy {
    fn name(&self) -> &str {
        "expert"
    }

    fn prepare(&self, map: &RiskMap, case: &Case) -> Result<Box<dyn Heuristic>> {
        Ok(Box::new(expert_heuristic(map, case)?))
    }
}

/// Learned heuristic: one forward pass per case, cached as a table.
pub struct NnStrategy {
    model: Arc<NnModel>,
}

impl NnStrategy {
    pub fn new(model: Arc<NnModel>) -> Self {
        NnStrategy { model }
    }
}

impl HeuristicStrategy for NnStrategy {
    fn name(&self) -> &str {
        "nn"
    }

    fn prepare(&self, map: &RiskMap, case: &Case) -> Result<Box<dyn Heuristic>> {
        Ok(Box::new(nn_heuristic(map, case, &self.model)?))
    }
}

/// Heuristic strategies registered by name, in registration order.
#[derive(Default, Clone)]
pub struct HeuristicRegistry {
    entries: Vec<Arc<dyn HeuristicStrategy>>,
}

impl fmt::Debug for HeuristicRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.names()).finish()
    }
}

impl HeuristicRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// `manhattan` and `expert`, plus `nn` when a model is supplied.
    pub fn with_builtins(model: Option<Arc<NnModel>>) -> Self {
        let mut reg = Self::new();
        reg.register(ManhattanStrategy);
        reg.register(ExpertStrategy);
        if let Some(model) = model {
            reg.register(NnStrategy::new(model));
        }
        reg
    }

    /// Adds a strategy, replacing any existing one with the same name.
    pub fn register(&mut self, strategy: impl HeuristicStrategy + 'static) {
        let strategy: Arc<dyn HeuristicStrategy> = Arc::new(strategy);
        match self.entries.iter().position(|e| e.name() == strategy.name()) {
            Some(i) => self.entries[i] = strategy,
            None => self.entries.push(strategy),
        }
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn HeuristicStrategy>> {
        self.entries
            .iter()
            .find(|e| e.name() == name)
            .cloned()
            .ok_or_else(|| {
                let hint = if name == "nn" { " (pass --weights)" } else { "" };
                Error::usage(format!(
                    "unknown heuristic {name:?}{hint}; available: {}",
                    self.names().collect::<Vec<_>>().join(", ")
                ))
            })
    }

    /// Resolves a list of names, preserving order.
    pub fn select(&self, names: &[impl AsRef<str>]) -> Result<Vec<Arc<dyn HeuristicStrategy>>> {
        names.iter().map(|n| self.get(n.as_ref())).collect()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name())
    }
}
