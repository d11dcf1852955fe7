//! Learned heuristic: a single-block transformer encoder evaluated from an
//! ASDW weight file, exposed as a per-case [`HeuristicTable`].

pub mod asdw;
pub mod fixture;
pub mod forward;
pub mod model;

use std::path::Path;

pub use asdw::{Tensor, TensorFile, WeightsError};
pub use forward::{
    embed_inputs, forward, forward_traced, multi_head_attention, output_head, ForwardTrace, Inputs,
};
pub use model::{load_weights, Mat, ModelConfig, ModelWeights};

use crate::error::{Error, Result};
use crate::expert::h_inf;
use crate::heuristic::HeuristicTable;
use crate::riskmap::{Case, RiskMap};

/// Loaded weights with their inferred configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct NnModel {
    pub config: ModelConfig,
    pub weights: ModelWeights,
}

impl NnModel {
    pub fn new(config: ModelConfig, weights: ModelWeights) -> Self {
        NnModel { config, weights }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (config, weights) = load_weights(path)?;
        Ok(NnModel { config, weights })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(self.weights.save(path)?)
    }

    /// Raw network output for one case, one value per flattened cell.
    pub fn predict(&self, map: &RiskMap, case: &Case) -> Result<Vec<f64>> {
        self.check(map)?;
        let risk = map.risk_values();
        forward(self.inputs(map, case, &risk), &self.weights, &self.config)
    }

    pub fn predict_traced(&self, map: &RiskMap, case: &Case) -> Result<ForwardTrace> {
        self.check(map)?;
        let risk = map.risk_values();
        forward_traced(self.inputs(map, case, &risk), &self.weights, &self.config)
    }

    fn inputs<'a>(&self, map: &RiskMap, case: &Case, risk: &'a [f64]) -> Inputs<'a> {
        Inputs {
            risk,
            start_flat: map.flatten(case.start),
            dest_flat: map.flatten(case.dest),
        }
    }

    fn check(&self, map: &RiskMap) -> Result<()> {
        if map.cell_count() != self.config.d_r {
            return Err(Error::usage(format!(
                "model was built for {} cells, map is {}x{}",
                self.config.d_r,
                map.side(),
                map.side()
            )));
        }
        Ok(())
    }
}

/// One forward pass, cached as a table. Cells predicted at or above half the
/// infeasibility sentinel are masked.
pub fn nn_heuristic(map: &RiskMap, case: &Case, model: &NnModel) -> Result<HeuristicTable> {
    case.check_on(map)?;
    let h = model.predict(map, case)?;
    let cutoff = 0.5 * h_inf(map.side());
    let infeasible = h.iter().map(|&v| v >= cutoff).collect();
    HeuristicTable::new(map.side(), h, infeasible)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heuristic::Heuristic;
    use crate::riskmap::{gen_random_map, Coord};

    #[test]
    fn table_matches_forward_and_is_deterministic() {
        let config = ModelConfig::new(36, 8, 2, 16).unwrap();
        let model = NnModel::new(config, ModelWeights::random(&config, 7));
        let map = gen_random_map(6, 1).unwrap();
        let case = Case::new("m", Coord::new(0, 0), Coord::new(5, 5), 0.9).unwrap();
        let t1 = nn_heuristic(&map, &case, &model).unwrap();
        let t2 = nn_heuristic(&map, &case, &model).unwrap();
        assert_eq!(
            t1.h.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            t2.h.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let direct = model.predict(&map, &case).unwrap();
        for cell in map.cells() {
            assert_eq!(t1.evaluate(&case, cell), direct[map.flatten(cell)]);
        }
    }

    #[test]
    fn sentinel_threshold_sets_mask() {
        let config = ModelConfig::new(16, 4, 1, 4).unwrap();
        let mut w = ModelWeights::zeros(&config);
        // Constant output 10 everywhere: 4 * 4 / 2 = 8 <= 10.
        w.head_out_b.fill(10.0);
        let model = NnModel::new(config, w);
        let map = RiskMap::uniform(4, 1.0).unwrap();
        let case = Case::new("m", Coord::new(0, 0), Coord::new(3, 3), 0.9).unwrap();
        let t = nn_heuristic(&map, &case, &model).unwrap();
        assert!(t.infeasible.iter().all(|&b| b));
    }

    #[test]
    fn size_mismatch_rejected() {
        let config = ModelConfig::new(16, 4, 1, 4).unwrap();
        let model = NnModel::new(config, ModelWeights::random(&config, 0));
        let map = RiskMap::uniform(5, 1.0).unwrap();
        let case = Case::new("m", Coord::new(0, 0), Coord::new(3, 3), 0.9).unwrap();
        assert!(matches!(nn_heuristic(&map, &case, &model), Err(Error::Usage(_))));
    }
}
