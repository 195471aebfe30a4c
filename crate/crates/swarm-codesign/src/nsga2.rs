//! NSGA-II over mixed continuous/catalog design spaces.
//!
//! The core is generic over a [`MooProblem`] so the same machinery drives both
//! the talent-front search and analytic toy problems in tests. Operators are
//! the canonical pair: simulated binary crossover and polynomial mutation on
//! continuous genes, uniform swap/reset on catalog genes. Constraint handling
//! is constraint-domination: feasible beats infeasible, smaller violation
//! beats larger among infeasible.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::{
    evaluate_talents_unchecked, DesignBounds, DesignVector, MorphologyModel, TalentVector,
};
use crate::pareto::{crowding_distance, fast_nondominated_sort, nondominated_filter};

/// Mixed genome: continuous genes plus catalog indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Genome {
    pub cont: Vec<f64>,
    pub cats: Vec<usize>,
}

/// A multi-objective problem under maximization.
pub trait MooProblem: Sync {
    /// Lower/upper bound per continuous gene.
    fn continuous_bounds(&self) -> Vec<(f64, f64)>;
    /// Number of entries in each catalog gene.
    fn catalog_sizes(&self) -> Vec<usize>;
    fn objective_count(&self) -> usize;
    /// Objective vector, maximization orientation. Called on any in-bounds
    /// genome, feasible or not.
    fn evaluate(&self, genome: &Genome) -> Vec<f64>;
    /// Aggregate constraint violation, zero iff feasible.
    fn violation(&self, genome: &Genome) -> f64;
}

/// NSGA-II settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MooConfig {
    pub population_size: usize,
    pub generations: usize,
    /// Independent seeded runs whose fronts are merged and re-filtered.
    pub runs: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    /// SBX distribution index.
    pub eta_crossover: f64,
    /// Polynomial mutation distribution index.
    pub eta_mutation: f64,
    pub seed: u64,
}

impl Default for MooConfig {
    fn default() -> Self {
        Self {
            population_size: 120,
            generations: 40,
            runs: 6,
            crossover_rate: 0.9,
            mutation_rate: 0.2,
            eta_crossover: 15.0,
            eta_mutation: 20.0,
            seed: 0,
        }
    }
}

impl MooConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 4 || self.population_size % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "population_size must be even and >= 4, got {}",
                self.population_size
            )));
        }
        if self.runs == 0 {
            return Err(Error::InvalidConfig("runs must be >= 1".into()));
        }
        for (name, rate) in [
            ("crossover_rate", self.crossover_rate),
            ("mutation_rate", self.mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must lie in [0,1], got {rate}"
                )));
            }
        }
        Ok(())
    }
}

struct Individual {
    genome: Genome,
    objectives: Vec<f64>,
    violation: f64,
}

fn random_genome<R: Rng>(rng: &mut R, bounds: &[(f64, f64)], cats: &[usize]) -> Genome {
    Genome {
        cont: bounds
            .iter()
            .map(|&(lo, hi)| rng.random_range(lo..=hi))
            .collect(),
        cats: cats.iter().map(|&n| rng.random_range(0..n)).collect(),
    }
}

/// SBX on one gene pair.
fn sbx<R: Rng>(rng: &mut R, a: f64, b: f64, lo: f64, hi: f64, eta: f64) -> (f64, f64) {
    if (a - b).abs() < 1e-14 {
        return (a, b);
    }
    let u: f64 = rng.random();
    let beta = if u <= 0.5 {
        (2.0 * u).powf(1.0 / (eta + 1.0))
    } else {
        (1.0 / (2.0 * (1.0 - u))).powf(1.0 / (eta + 1.0))
    };
    let c1 = 0.5 * ((a + b) - beta * (b - a).abs());
    let c2 = 0.5 * ((a + b) + beta * (b - a).abs());
    (c1.clamp(lo, hi), c2.clamp(lo, hi))
}

/// Polynomial mutation on one gene.
fn poly_mutate<R: Rng>(rng: &mut R, x: f64, lo: f64, hi: f64, eta: f64) -> f64 {
    let span = hi - lo;
    if span <= 0.0 {
        return x;
    }
    let u: f64 = rng.random();
    let delta = if u < 0.5 {
        (2.0 * u).powf(1.0 / (eta + 1.0)) - 1.0
    } else {
        1.0 - (2.0 * (1.0 - u)).powf(1.0 / (eta + 1.0))
    };
    (x + delta * span).clamp(lo, hi)
}

/// Constraint-dominated tournament comparison: feasible beats infeasible,
/// lower violation beats higher, then (rank, crowding) decide.
fn crowded_better(a: usize, b: usize, rank: &[usize], crowd: &[f64], violation: &[f64]) -> bool {
    let (va, vb) = (violation[a], violation[b]);
    if (va == 0.0) != (vb == 0.0) {
        return va == 0.0;
    }
    if va > 0.0 && vb > 0.0 {
        return va < vb;
    }
    if rank[a] != rank[b] {
        return rank[a] < rank[b];
    }
    crowd[a] > crowd[b]
}

/// Ranks the population by constraint-dominated fronts: feasible individuals
/// sorted by objective dominance, infeasible appended ordered by violation.
fn rank_population(pop: &[Individual]) -> (Vec<usize>, Vec<f64>) {
    let feasible: Vec<usize> = (0..pop.len())
        .filter(|&i| pop[i].violation == 0.0)
        .collect();
    let mut rank = vec![usize::MAX; pop.len()];
    let mut crowd = vec![0.0f64; pop.len()];
    let mut next_rank = 0;
    if !feasible.is_empty() {
        let objs: Vec<Vec<f64>> = feasible
            .iter()
            .map(|&i| pop[i].objectives.clone())
            .collect();
        let fronts = fast_nondominated_sort(&objs).expect("non-empty feasible set");
        for front in &fronts {
            let dist = crowding_distance(&objs, front);
            for (k, &local) in front.iter().enumerate() {
                rank[feasible[local]] = next_rank;
                crowd[feasible[local]] = dist[k];
            }
            next_rank += 1;
        }
    }
    let mut infeasible: Vec<usize> = (0..pop.len())
        .filter(|&i| pop[i].violation > 0.0)
        .collect();
    infeasible.sort_by(|&a, &b| {
        pop[a]
            .violation
            .partial_cmp(&pop[b].violation)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    for i in infeasible {
        rank[i] = next_rank;
        crowd[i] = 0.0;
        next_rank += 1;
    }
    (rank, crowd)
}

/// One seeded NSGA-II run; returns the feasible non-dominated set of the
/// final population as (genome, objectives) pairs.
pub fn nsga2_single_run<P: MooProblem>(
    problem: &P,
    config: &MooConfig,
    seed: u64,
) -> Result<Vec<(Genome, Vec<f64>)>> {
    config.validate()?;
    let bounds = problem.continuous_bounds();
    let cats = problem.catalog_sizes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.population_size;

    let make = |genome: Genome| -> Individual {
        let objectives = problem.evaluate(&genome);
        let violation = problem.violation(&genome);
        Individual {
            genome,
            objectives,
            violation,
        }
    };

    let mut pop: Vec<Individual> = (0..n)
        .map(|_| make(random_genome(&mut rng, &bounds, &cats)))
        .collect();

    for _ in 0..config.generations {
        let (rank, crowd) = rank_population(&pop);
        let violation: Vec<f64> = pop.iter().map(|i| i.violation).collect();

        let mut offspring: Vec<Individual> = Vec::with_capacity(n);
        while offspring.len() < n {
            let pick = |rng: &mut ChaCha8Rng| {
                let i = rng.random_range(0..n);
                let j = rng.random_range(0..n);
                if crowded_better(i, j, &rank, &crowd, &violation) {
                    i
                } else {
                    j
                }
            };
            let p1 = pick(&mut rng);
            let p2 = pick(&mut rng);
            let mut c1 = pop[p1].genome.clone();
            let mut c2 = pop[p2].genome.clone();

            if rng.random::<f64>() < config.crossover_rate {
                for g in 0..bounds.len() {
                    if rng.random::<f64>() < 0.5 {
                        let (lo, hi) = bounds[g];
                        let (a, b) =
                            sbx(&mut rng, c1.cont[g], c2.cont[g], lo, hi, config.eta_crossover);
                        c1.cont[g] = a;
                        c2.cont[g] = b;
                    }
                }
                for g in 0..cats.len() {
                    if rng.random::<f64>() < 0.5 {
                        std::mem::swap(&mut c1.cats[g], &mut c2.cats[g]);
                    }
                }
            }
            for child in [&mut c1, &mut c2] {
                for g in 0..bounds.len() {
                    if rng.random::<f64>() < config.mutation_rate {
                        let (lo, hi) = bounds[g];
                        child.cont[g] =
                            poly_mutate(&mut rng, child.cont[g], lo, hi, config.eta_mutation);
                    }
                }
                for g in 0..cats.len() {
                    if rng.random::<f64>() < config.mutation_rate {
                        child.cats[g] = rng.random_range(0..cats[g]);
                    }
                }
            }
            offspring.push(make(c1));
            if offspring.len() < n {
                offspring.push(make(c2));
            }
        }

        // Elitist environmental selection over parents + offspring.
        pop.extend(offspring);
        let (rank, crowd) = rank_population(&pop);
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| {
            rank[a].cmp(&rank[b]).then(
                crowd[b]
                    .partial_cmp(&crowd[a])
                    .unwrap_or(std::cmp::Ordering::Equal),
            )
        });
        order.truncate(n);
        let mut selected = vec![false; pop.len()];
        for &i in &order {
            selected[i] = true;
        }
        let mut idx = 0;
        pop.retain(|_| {
            let keep = selected[idx];
            idx += 1;
            keep
        });
    }

    let feasible: Vec<&Individual> = pop.iter().filter(|i| i.violation == 0.0).collect();
    if feasible.is_empty() {
        return Err(Error::NoFeasible(
            "NSGA-II run ended with no feasible individual".into(),
        ));
    }
    let objs: Vec<Vec<f64>> = feasible.iter().map(|i| i.objectives.clone()).collect();
    let kept = nondominated_filter(&objs)?;
    Ok(kept
        .into_iter()
        .map(|i| (feasible[i].genome.clone(), feasible[i].objectives.clone()))
        .collect())
}

/// Runs `config.runs` independent seeded runs (seed, seed+1, ...) in
/// parallel, merges their fronts, and re-filters the union.
pub fn nsga2_multi_run<P: MooProblem>(
    problem: &P,
    config: &MooConfig,
) -> Result<Vec<(Genome, Vec<f64>)>> {
    config.validate()?;
    let results: Vec<Result<Vec<(Genome, Vec<f64>)>>> = (0..config.runs)
        .into_par_iter()
        .map(|r| nsga2_single_run(problem, config, config.seed.wrapping_add(r as u64)))
        .collect();
    let mut merged: Vec<(Genome, Vec<f64>)> = Vec::new();
    for r in results {
        merged.extend(r?);
    }
    let objs: Vec<Vec<f64>> = merged.iter().map(|(_, o)| o.clone()).collect();
    let kept = nondominated_filter(&objs)?;
    Ok(kept.into_iter().map(|i| merged[i].clone()).collect())
}

// ---------------------------------------------------------------------------
// Talent-front problem
// ---------------------------------------------------------------------------

/// The morphology design space as a [`MooProblem`]: maximize the three
/// talents over feasible designs.
pub struct TalentProblem<'a> {
    pub bounds: &'a DesignBounds,
    pub model: &'a MorphologyModel,
}

impl TalentProblem<'_> {
    pub fn genome_to_design(&self, genome: &Genome) -> DesignVector {
        DesignVector {
            arm_length: genome.cont[0],
            arm_width: genome.cont[1],
            prop_diameter: genome.cont[2],
            payload_mass: genome.cont[3],
            motor_index: genome.cats[0],
            battery_index: genome.cats[1],
        }
    }
}

impl MooProblem for TalentProblem<'_> {
    fn continuous_bounds(&self) -> Vec<(f64, f64)> {
        vec![
            self.bounds.arm_length,
            self.bounds.arm_width,
            self.bounds.prop_diameter,
            self.bounds.payload_mass,
        ]
    }

    fn catalog_sizes(&self) -> Vec<usize> {
        vec![
            self.bounds.motor_catalog_w.len(),
            self.bounds.battery_catalog_wh.len(),
        ]
    }

    fn objective_count(&self) -> usize {
        3
    }

    fn evaluate(&self, genome: &Genome) -> Vec<f64> {
        let x = self.genome_to_design(genome);
        evaluate_talents_unchecked(&x, self.bounds, self.model)
            .as_array()
            .to_vec()
    }

    fn violation(&self, genome: &Genome) -> f64 {
        self.model
            .violation(&self.genome_to_design(genome), self.bounds)
    }
}

/// The non-dominated talent set: one design per point with its talents,
/// objectives stored in maximization orientation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParetoSet {
    pub points: Vec<(DesignVector, TalentVector)>,
}

impl ParetoSet {
    pub fn talents(&self) -> Vec<[f64; 3]> {
        self.points.iter().map(|(_, t)| t.as_array()).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Per-talent (min, max) over the set.
    pub fn talent_ranges(&self) -> [(f64, f64); 3] {
        let mut r = [(f64::INFINITY, f64::NEG_INFINITY); 3];
        for (_, t) in &self.points {
            for (k, v) in t.as_array().into_iter().enumerate() {
                r[k].0 = r[k].0.min(v);
                r[k].1 = r[k].1.max(v);
            }
        }
        r
    }
}

/// Full talent-front construction: multi-run NSGA-II over the design space.
/// Deterministic given `config.seed`.
pub fn nsga2_run(
    bounds: &DesignBounds,
    model: &MorphologyModel,
    config: &MooConfig,
) -> Result<ParetoSet> {
    bounds.validate()?;
    let problem = TalentProblem { bounds, model };
    let front = nsga2_multi_run(&problem, config)?;
    let mut points: Vec<(DesignVector, TalentVector)> = front
        .into_iter()
        .map(|(g, o)| {
            (
                problem.genome_to_design(&g),
                TalentVector::from_array([o[0], o[1], o[2]]),
            )
        })
        .collect();
    // Stable output order: sort by talents for byte-identical tables.
    points.sort_by(|a, b| {
        a.1.as_array()
            .iter()
            .zip(b.1.as_array().iter())
            .map(|(x, y)| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal))
            .find(|c| c.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(ParetoSet { points })
}

// ---------------------------------------------------------------------------
// Tabular export / import
// ---------------------------------------------------------------------------

pub const PARETO_TABLE_HEADER: [&str; 10] = [
    "schema_version",
    "arm_length",
    "arm_width",
    "motor_index",
    "battery_index",
    "prop_diameter",
    "payload_mass",
    "search_speed",
    "cruising_speed",
    "flight_range",
];

/// Writes the set as a CSV table, one row per point, header row mandatory.
pub fn write_pareto_table(set: &ParetoSet, path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(PARETO_TABLE_HEADER)?;
    for (d, t) in &set.points {
        w.write_record([
            "1".to_string(),
            format!("{}", d.arm_length),
            format!("{}", d.arm_width),
            format!("{}", d.motor_index),
            format!("{}", d.battery_index),
            format!("{}", d.prop_diameter),
            format!("{}", d.payload_mass),
            format!("{}", t.search_speed),
            format!("{}", t.cruising_speed),
            format!("{}", t.flight_range),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pareto_table(path: &std::path::Path) -> Result<ParetoSet> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().ne(PARETO_TABLE_HEADER) {
        return Err(Error::InvalidFile {
            path: path.display().to_string(),
            reason: format!("unexpected header row {headers:?}"),
        });
    }
    let mut points = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| Error::InvalidFile {
                path: path.display().to_string(),
                reason: format!(
                    "bad float {:?} in column {}",
                    &rec[i],
                    PARETO_TABLE_HEADER[i]
                ),
            })
        };
        let d = DesignVector {
            arm_length: f(1)?,
            arm_width: f(2)?,
            motor_index: f(3)? as usize,
            battery_index: f(4)? as usize,
            prop_diameter: f(5)?,
            payload_mass: f(6)?,
        };
        let t = TalentVector {
            search_speed: f(7)?,
            cruising_speed: f(8)?,
            flight_range: f(9)?,
        };
        points.push((d, t));
    }
    if points.is_empty() {
        return Err(Error::InvalidFile {
            path: path.display().to_string(),
            reason: "pareto table has no data rows".into(),
        });
    }
    Ok(ParetoSet { points })
}


#[cfg(test)]
mod tests {
    use super::test_support::{hypervolume_2d, ToyFront};
    use super::*;
    use crate::pareto::oracle::nondominated_bruteforce;

    #[test]
    fn hypervolume_of_known_staircases() {
        // Two points (1, 0.5), (0.5, 1): HV = 1*0.5 + (1-0.5)*... sweep gives
        // strip [0.5,1]x[0,0.5] plus strip [0,0.5]x[0,1] = 0.25 + 0.5 = 0.75.
        let pts = vec![vec![1.0, 0.5], vec![0.5, 1.0]];
        assert!((hypervolume_2d(&pts) - 0.75).abs() < 1e-12);
        assert!((hypervolume_2d(&[vec![1.0, 1.0]]) - 1.0).abs() < 1e-12);
        // Dominated point changes nothing.
        let pts = vec![vec![1.0, 0.5], vec![0.5, 1.0], vec![0.4, 0.4]];
        assert!((hypervolume_2d(&pts) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn toy_front_hypervolume_reaches_analytic_optimum() {
        let cfg = MooConfig {
            population_size: 60,
            generations: 40,
            runs: 1,
            // Deb's convention: per-gene mutation probability 1/n_vars.
            mutation_rate: 1.0,
            ..MooConfig::default()
        };
        for seed in [5, 6, 7] {
            let front = nsga2_single_run(&ToyFront, &cfg, seed).unwrap();
            let objs: Vec<Vec<f64>> = front.iter().map(|(_, o)| o.clone()).collect();
            let hv = hypervolume_2d(&objs);
            assert!(
                hv >= 0.98 * (2.0 / 3.0),
                "hypervolume {hv} below 98% of 2/3 for seed {seed}"
            );
        }
    }

    #[test]
    fn zero_generations_filters_initial_population() {
        let cfg = MooConfig {
            population_size: 40,
            generations: 0,
            runs: 1,
            ..MooConfig::default()
        };
        let front = nsga2_single_run(&ToyFront, &cfg, 9).unwrap();
        assert!(!front.is_empty());
        let objs: Vec<Vec<f64>> = front.iter().map(|(_, o)| o.clone()).collect();
        let kept = nondominated_bruteforce(&objs);
        assert_eq!(kept.len(), objs.len());
    }

    #[test]
    fn talent_front_is_nondominated_and_feasible() {
        let bounds = DesignBounds::default();
        let model = MorphologyModel::default();
        let cfg = MooConfig {
            population_size: 40,
            generations: 15,
            runs: 2,
            seed: 1,
            ..MooConfig::default()
        };
        let set = nsga2_run(&bounds, &model, &cfg).unwrap();
        assert!(set.len() >= 10, "front too small: {}", set.len());
        let objs: Vec<Vec<f64>> = set.talents().iter().map(|t| t.to_vec()).collect();
        let kept = nondominated_bruteforce(&objs);
        assert_eq!(kept.len(), objs.len(), "front contains dominated points");
        for (d, t) in &set.points {
            assert!(crate::morphology::feasible(d, &bounds, &model).unwrap());
            let fresh = crate::morphology::evaluate_talents(d, &bounds, &model).unwrap();
            assert_eq!(fresh.as_array(), t.as_array());
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let bounds = DesignBounds::default();
        let model = MorphologyModel::default();
        let cfg = MooConfig {
            population_size: 24,
            generations: 8,
            runs: 2,
            seed: 77,
            ..MooConfig::default()
        };
        let a = nsga2_run(&bounds, &model, &cfg).unwrap();
        let b = nsga2_run(&bounds, &model, &cfg).unwrap();
        assert_eq!(a.points.len(), b.points.len());
        for (pa, pb) in a.points.iter().zip(&b.points) {
            assert_eq!(pa.0, pb.0);
            assert_eq!(pa.1.as_array(), pb.1.as_array());
        }
    }

    #[test]
    fn table_roundtrip() {
        let bounds = DesignBounds::default();
        let model = MorphologyModel::default();
        let cfg = MooConfig {
            population_size: 16,
            generations: 4,
            runs: 1,
            seed: 3,
            ..MooConfig::default()
        };
        let set = nsga2_run(&bounds, &model, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pareto.csv");
        write_pareto_table(&set, &path).unwrap();
        let back = read_pareto_table(&path).unwrap();
        assert_eq!(set.points.len(), back.points.len());
        for (a, b) in set.points.iter().zip(&back.points) {
            assert_eq!(a.0, b.0);
            assert_eq!(a.1.as_array(), b.1.as_array());
        }
    }

    #[test]
    fn odd_population_rejected() {
        let cfg = MooConfig {
            population_size: 7,
            ..MooConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
