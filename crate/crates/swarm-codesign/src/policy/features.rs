//! Decision-point featurization: raw simulator features become the dense
//! matrices and graph Laplacians the policy consumes.
//!
//! Entity graphs are fully connected with inverse-distance edge weights
//! computed from the (extent-normalized) positions in the first two feature
//! columns. An empty entity set gets a single zero placeholder row so every
//! encoder sees at least one node.

use serde::{Deserialize, Serialize};

use crate::nn::Tensor;
use crate::sim::DecisionPoint;

/// Softening constant in the inverse-distance weight 1/(d + eps).
const INV_DIST_EPS: f64 = 0.1;

/// Normalization constants carried alongside checkpoints so features are
/// reproducible at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScales {
    /// Per-talent positive scales (search speed, cruising speed, range).
    pub talents: [f64; 3],
}

impl FeatureScales {
    pub fn from_reference(scales: &[f64]) -> Self {
        let mut talents = [1.0; 3];
        for (t, &s) in talents.iter_mut().zip(scales) {
            *t = s.max(1e-9);
        }
        Self { talents }
    }
}

/// Dense state view for one decision step.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturizedState {
    pub bld: Tensor,
    pub bld_lap: Tensor,
    pub uav: Tensor,
    pub uav_lap: Tensor,
    pub ugv: Tensor,
    pub ugv_lap: Tensor,
    pub adv: Tensor,
    pub adv_lap: Tensor,
    pub act: Tensor,
    pub mission: Tensor,
    pub talents: Tensor,
    /// Validity of each of the `3 * n_bld` actions.
    pub mask: Vec<bool>,
    pub n_bld: usize,
}

/// Symmetric normalized Laplacian `I - D^{-1/2} W D^{-1/2}` of the fully
/// connected inverse-distance graph over rows of `feats` (positions in the
/// first two columns). Isolated nodes keep the identity row.
pub fn inverse_distance_laplacian(feats: &Tensor) -> Tensor {
    let n = feats.rows;
    let mut weights = Tensor::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let dx = feats.at(i, 0) - feats.at(j, 0);
            let dy = feats.at(i, 1) - feats.at(j, 1);
            let d = (dx * dx + dy * dy).sqrt();
            *weights.at_mut(i, j) = 1.0 / (d + INV_DIST_EPS);
        }
    }
    let degree: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| weights.at(i, j)).sum())
        .collect();
    let mut lap = Tensor::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let norm = if degree[i] > 0.0 && degree[j] > 0.0 {
                weights.at(i, j) / (degree[i].sqrt() * degree[j].sqrt())
            } else {
                0.0
            };
            *lap.at_mut(i, j) = if i == j { 1.0 - norm } else { -norm };
        }
    }
    lap
}

fn entity_matrix<const W: usize>(rows: &[[f64; W]]) -> Tensor {
    if rows.is_empty() {
        return Tensor::zeros(1, W);
    }
    Tensor::from_rows(rows.iter().map(|r| r.to_vec()).collect())
}

pub fn featurize(dp: &DecisionPoint, scales: &FeatureScales) -> FeaturizedState {
    let bld = entity_matrix(&dp.node_feats);
    let uav = entity_matrix(&dp.uav_feats);
    let ugv = entity_matrix(&dp.ugv_feats);
    let adv = entity_matrix(&dp.adv_feats);
    let bld_lap = inverse_distance_laplacian(&bld);
    let uav_lap = inverse_distance_laplacian(&uav);
    let ugv_lap = inverse_distance_laplacian(&ugv);
    let adv_lap = inverse_distance_laplacian(&adv);
    let talents: Vec<f64> = dp
        .talents
        .iter()
        .zip(&scales.talents)
        .map(|(&t, &s)| t / s)
        .collect();
    FeaturizedState {
        bld,
        bld_lap,
        uav,
        uav_lap,
        ugv,
        ugv_lap,
        adv,
        adv_lap,
        act: Tensor::row_vector(&dp.act_feats),
        mission: Tensor::row_vector(&dp.mission),
        talents: Tensor::row_vector(&talents),
        mask: dp.mask.clone(),
        n_bld: dp.pareto_nodes.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplacian_rows_of_single_node_are_identity() {
        let f = Tensor::from_rows(vec![vec![0.3, 0.4, 1.0]]);
        let lap = inverse_distance_laplacian(&f);
        assert_eq!(lap.data, vec![1.0]);
    }

    #[test]
    fn laplacian_is_symmetric_with_unit_diagonal_offsets() {
        let f = Tensor::from_rows(vec![
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.5],
            vec![0.0, 2.0, 0.1],
        ]);
        let lap = inverse_distance_laplacian(&f);
        for i in 0..3 {
            for j in 0..3 {
                assert!((lap.at(i, j) - lap.at(j, i)).abs() < 1e-12);
            }
        }
        // Normalized Laplacian diagonals are 1 for connected nodes.
        for i in 0..3 {
            assert!((lap.at(i, i) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_entity_set_becomes_zero_placeholder() {
        let m = entity_matrix::<3>(&[]);
        assert_eq!(m.rows, 1);
        assert_eq!(m.data, vec![0.0, 0.0, 0.0]);
    }
}
