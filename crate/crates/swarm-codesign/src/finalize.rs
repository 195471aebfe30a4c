//! Morphology finalization: particle swarm search for the feasible design
//! whose talents are closest to a target triple.
//!
//! Catalog genes are relaxed to continuous index coordinates and snapped to
//! the nearest entry at evaluation. The objective is the Euclidean norm of
//! the per-talent normalized error, plus the constraint violation for
//! infeasible particles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::{
    evaluate_talents_unchecked, DesignBounds, DesignVector, MorphologyModel, TalentVector,
};
use crate::nsga2::ParetoSet;
use crate::surface::TalentSurface;

const VIOLATION_PENALTY: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoConfig {
    pub population: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub seed: u64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            population: 150,
            iterations: 80,
            inertia: 0.72,
            cognitive: 1.49,
            social: 1.49,
            seed: 0,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::InvalidConfig("population must be >= 2".into()));
        }
        if self.inertia < 0.0 || self.cognitive < 0.0 || self.social < 0.0 {
            return Err(Error::InvalidConfig(
                "PSO coefficients must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Positive per-talent spreads used to normalize the residual so no talent
/// dominates the norm by its raw units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TalentScales(pub [f64; 3]);

impl TalentScales {
    pub fn from_pareto(set: &ParetoSet) -> Self {
        let ranges = set.talent_ranges();
        Self([
            (ranges[0].1 - ranges[0].0).max(1e-9),
            (ranges[1].1 - ranges[1].0).max(1e-9),
            (ranges[2].1 - ranges[2].0).max(1e-9),
        ])
    }

    /// Spreads of the modeled band, from a decode grid over the raw cube.
    pub fn from_surface(surface: &TalentSurface) -> Self {
        let grid = 33usize;
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for i in 0..grid {
            for j in 0..grid {
                let raw = crate::surface::RawTalentOutput {
                    values: vec![
                        i as f64 / (grid - 1) as f64,
                        j as f64 / (grid - 1) as f64,
                    ],
                };
                if let Ok(d) = surface.decode(&raw) {
                    for (k, &v) in d.iter().enumerate().take(3) {
                        lo[k] = lo[k].min(v);
                        hi[k] = hi[k].max(v);
                    }
                }
            }
        }
        Self([
            (hi[0] - lo[0]).max(1e-9),
            (hi[1] - lo[1]).max(1e-9),
            (hi[2] - lo[2]).max(1e-9),
        ])
    }

    pub fn normalized_residual(&self, talents: &TalentVector, target: &TalentVector) -> f64 {
        let t = talents.as_array();
        let g = target.as_array();
        (0..3)
            .map(|k| ((t[k] - g[k]) / self.0[k]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct FinalizeResult {
    pub design: DesignVector,
    pub talents: TalentVector,
    /// Normalized residual of the returned design.
    pub residual: f64,
    /// Best penalized objective after each iteration (monotone non-increasing).
    pub history: Vec<f64>,
}

struct Space {
    bounds: Vec<(f64, f64)>,
}

impl Space {
    fn new(bounds: &DesignBounds) -> Self {
        Self {
            bounds: vec![
                bounds.arm_length,
                bounds.arm_width,
                bounds.prop_diameter,
                bounds.payload_mass,
                (0.0, (bounds.motor_catalog_w.len() - 1) as f64),
                (0.0, (bounds.battery_catalog_wh.len() - 1) as f64),
            ],
        }
    }

    fn snap(&self, position: &[f64]) -> DesignVector {
        DesignVector {
            arm_length: position[0],
            arm_width: position[1],
            prop_diameter: position[2],
            payload_mass: position[3],
            motor_index: position[4].round() as usize,
            battery_index: position[5].round() as usize,
        }
    }
}

/// Runs the swarm and returns the best feasible design. Deterministic per
/// seed; errors if no feasible particle is ever evaluated.
pub fn finalize_morphology(
    target: &TalentVector,
    bounds: &DesignBounds,
    model: &MorphologyModel,
    scales: &TalentScales,
    config: &PsoConfig,
) -> Result<FinalizeResult> {
    config.validate()?;
    bounds.validate()?;
    if !target.as_array().iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidConfig("target talents must be finite".into()));
    }
    let space = Space::new(bounds);
    let dims = space.bounds.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let objective = |position: &[f64]| -> (f64, f64, TalentVector) {
        let design = space.snap(position);
        let talents = evaluate_talents_unchecked(&design, bounds, model);
        let violation = model.violation(&design, bounds);
        let residual = scales.normalized_residual(&talents, target);
        (residual + VIOLATION_PENALTY * violation, violation, talents)
    };

    let n = config.population;
    let mut positions: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            space
                .bounds
                .iter()
                .map(|&(lo, hi)| rng.random_range(lo..=hi))
                .collect()
        })
        .collect();
    let vmax: Vec<f64> = space.bounds.iter().map(|&(lo, hi)| 0.5 * (hi - lo)).collect();
    let mut velocities: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            vmax.iter()
                .map(|&v| rng.random_range(-0.1 * v..=0.1 * v))
                .collect()
        })
        .collect();

    let mut pbest_pos = positions.clone();
    let mut pbest_obj = vec![f64::INFINITY; n];
    let mut gbest_pos = positions[0].clone();
    let mut gbest_obj = f64::INFINITY;
    let mut best_feasible: Option<(f64, DesignVector, TalentVector)> = None;
    let mut history = Vec::with_capacity(config.iterations);

    let evaluate_all = |positions: &Vec<Vec<f64>>,
                            pbest_pos: &mut Vec<Vec<f64>>,
                            pbest_obj: &mut Vec<f64>,
                            gbest_pos: &mut Vec<f64>,
                            gbest_obj: &mut f64,
                            best_feasible: &mut Option<(f64, DesignVector, TalentVector)>| {
        for (i, pos) in positions.iter().enumerate() {
            let (obj, violation, talents) = objective(pos);
            if obj < pbest_obj[i] {
                pbest_obj[i] = obj;
                pbest_pos[i] = pos.clone();
            }
            if obj < *gbest_obj {
                *gbest_obj = obj;
                *gbest_pos = pos.clone();
            }
            if violation == 0.0 {
                let design = space.snap(pos);
                let residual = scales.normalized_residual(&talents, target);
                if best_feasible
                    .as_ref()
                    .map_or(true, |(best, _, _)| residual < *best)
                {
                    *best_feasible = Some((residual, design, talents));
                }
            }
        }
    };

    evaluate_all(
        &positions,
        &mut pbest_pos,
        &mut pbest_obj,
        &mut gbest_pos,
        &mut gbest_obj,
        &mut best_feasible,
    );
    // Ring topology: each particle is pulled toward the best personal best
    // in its +-2 neighborhood rather than the global best, which keeps the
    // swarm from collapsing into one catalog cell early.
    let ring = 2usize;
    for _ in 0..config.iterations {
        for i in 0..n {
            let mut nbest = i;
            for offset in 1..=ring {
                for j in [(i + offset) % n, (i + n - offset % n) % n] {
                    if pbest_obj[j] < pbest_obj[nbest] {
                        nbest = j;
                    }
                }
            }
            let social_target = pbest_pos[nbest].clone();
            for d in 0..dims {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let v = config.inertia * velocities[i][d]
                    + config.cognitive * r1 * (pbest_pos[i][d] - positions[i][d])
                    + config.social * r2 * (social_target[d] - positions[i][d]);
                velocities[i][d] = v.clamp(-vmax[d], vmax[d]);
                positions[i][d] =
                    (positions[i][d] + velocities[i][d]).clamp(space.bounds[d].0, space.bounds[d].1);
            }
        }
        evaluate_all(
            &positions,
            &mut pbest_pos,
            &mut pbest_obj,
            &mut gbest_pos,
            &mut gbest_obj,
            &mut best_feasible,
        );
        history.push(gbest_obj);
    }

    let (residual, design, talents) = best_feasible.ok_or_else(|| {
        Error::NoFeasible(format!(
            "no feasible particle in {} evaluations",
            n * (config.iterations + 1)
        ))
    })?;
    Ok(FinalizeResult {
        design,
        talents,
        residual,
        history,
    })
}

/// Writes the per-iteration best-objective history.
pub fn write_convergence(history: &[f64], path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["schema_version", "iteration", "best_objective"])?;
    for (i, v) in history.iter().enumerate() {
        w.write_record(["1".to_string(), i.to_string(), format!("{v}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the finalized design with its talents and residual.
pub fn write_design_result(
    result: &FinalizeResult,
    target: &TalentVector,
    path: &std::path::Path,
) -> Result<()> {
    #[derive(Serialize)]
    struct DesignFile<'a> {
        schema_version: u32,
        design: &'a DesignVector,
        talents: &'a TalentVector,
        target: &'a TalentVector,
        residual: f64,
    }
    let text = toml::to_string_pretty(&DesignFile {
        schema_version: 1,
        design: &result.design,
        talents: &result.talents,
        target,
        residual: result.residual,
    })
    .map_err(|e| Error::InvalidConfig(format!("design serialization: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphology::{feasible, nominal_design, random_feasible_design};

    fn setup() -> (DesignBounds, MorphologyModel, TalentScales) {
        let bounds = DesignBounds::default();
        let model = MorphologyModel::default();
        // Spreads from a quick front so the scales are realistic.
        let cfg = crate::nsga2::MooConfig {
            population_size: 40,
            generations: 10,
            runs: 1,
            seed: 2,
            ..Default::default()
        };
        let set = crate::nsga2::nsga2_run(&bounds, &model, &cfg).unwrap();
        let scales = TalentScales::from_pareto(&set);
        (bounds, model, scales)
    }

    #[test]
    fn recovers_talents_of_known_design() {
        let (bounds, model, scales) = setup();
        let x0 = nominal_design(&bounds);
        let target = crate::morphology::evaluate_talents(&x0, &bounds, &model).unwrap();
        let cfg = PsoConfig {
            population: 60,
            iterations: 40,
            seed: 3,
            ..PsoConfig::default()
        };
        let result = finalize_morphology(&target, &bounds, &model, &scales, &cfg).unwrap();
        assert!(result.residual <= 1e-3, "residual {}", result.residual);
        assert!(feasible(&result.design, &bounds, &model).unwrap());
    }

    #[test]
    fn history_is_monotone_non_increasing() {
        let (bounds, model, scales) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_feasible_design(&mut rng, &bounds, &model, 10_000).unwrap();
        let target = crate::morphology::evaluate_talents(&x, &bounds, &model).unwrap();
        let cfg = PsoConfig {
            population: 30,
            iterations: 25,
            seed: 9,
            ..PsoConfig::default()
        };
        let result = finalize_morphology(&target, &bounds, &model, &scales, &cfg).unwrap();
        for w in result.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let (bounds, model, scales) = setup();
        let target = TalentVector {
            search_speed: 3.0,
            cruising_speed: 8.0,
            flight_range: 4000.0,
        };
        let cfg = PsoConfig {
            population: 40,
            iterations: 20,
            seed: 17,
            ..PsoConfig::default()
        };
        let a = finalize_morphology(&target, &bounds, &model, &scales, &cfg).unwrap();
        let b = finalize_morphology(&target, &bounds, &model, &scales, &cfg).unwrap();
        assert_eq!(a.design, b.design);
        assert_eq!(a.residual, b.residual);
    }

    #[test]
    fn returned_design_respects_catalogs_and_bounds() {
        let (bounds, model, scales) = setup();
        let target = TalentVector {
            search_speed: 2.0,
            cruising_speed: 10.0,
            flight_range: 6000.0,
        };
        let cfg = PsoConfig {
            population: 50,
            iterations: 30,
            seed: 4,
            ..PsoConfig::default()
        };
        let result = finalize_morphology(&target, &bounds, &model, &scales, &cfg).unwrap();
        bounds.check(&result.design).unwrap();
        assert!(feasible(&result.design, &bounds, &model).unwrap());
    }
}
