//! UAV design space, feasibility constraints, and the morphology → talent map.
//!
//! A design is a quadcopter parameterization: continuous arm geometry, propeller
//! diameter and payload mass, plus discrete motor and battery picks from finite
//! catalogs. Talents are the three capabilities the mission model consumes:
//! perimeter search speed, cruising speed, and flight range. The talent map is
//! an analytic sizing model with fixed, documented constants; it is deliberately
//! built so the three talents conflict (more payload buys search speed but costs
//! range, more battery buys range but costs speed).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRAVITY: f64 = 9.81;

/// One UAV morphology. Motor power and battery capacity are discrete catalog
/// picks stored as indices; everything else is continuous.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignVector {
    /// Arm length from hub to motor, meters.
    pub arm_length: f64,
    /// Arm cross-section width, meters.
    pub arm_width: f64,
    /// Index into `DesignBounds::motor_catalog_w`.
    pub motor_index: usize,
    /// Index into `DesignBounds::battery_catalog_wh`.
    pub battery_index: usize,
    /// Propeller diameter, meters.
    pub prop_diameter: f64,
    /// Sensor payload mass, kilograms.
    pub payload_mass: f64,
}

/// The three morphology-driven capabilities, all oriented so that larger is
/// better for the mission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TalentVector {
    /// Perimeter coverage rate of a single UAV, m/s.
    pub search_speed: f64,
    /// Cruising speed, m/s.
    pub cruising_speed: f64,
    /// Flight range, meters.
    pub flight_range: f64,
}

impl TalentVector {
    pub fn as_array(&self) -> [f64; 3] {
        [self.search_speed, self.cruising_speed, self.flight_range]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self {
            search_speed: a[0],
            cruising_speed: a[1],
            flight_range: a[2],
        }
    }
}

/// Box bounds for the continuous fields and the discrete catalogs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignBounds {
    pub arm_length: (f64, f64),
    pub arm_width: (f64, f64),
    pub prop_diameter: (f64, f64),
    pub payload_mass: (f64, f64),
    /// Motor electrical power options, watts, strictly increasing.
    pub motor_catalog_w: Vec<f64>,
    /// Battery capacity options, watt-hours, strictly increasing.
    pub battery_catalog_wh: Vec<f64>,
}

impl Default for DesignBounds {
    fn default() -> Self {
        Self {
            arm_length: (0.10, 0.35),
            arm_width: (0.01, 0.05),
            prop_diameter: (0.08, 0.40),
            payload_mass: (0.05, 1.0),
            motor_catalog_w: vec![80.0, 120.0, 180.0, 260.0, 360.0, 480.0],
            battery_catalog_wh: vec![20.0, 40.0, 60.0, 90.0, 130.0],
        }
    }
}

impl DesignBounds {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("arm_length", self.arm_length),
            ("arm_width", self.arm_width),
            ("prop_diameter", self.prop_diameter),
            ("payload_mass", self.payload_mass),
        ] {
            if !(lo < hi) {
                return Err(Error::InvalidConfig(format!(
                    "bounds for {name} must satisfy lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        for (name, cat) in [
            ("motor_catalog_w", &self.motor_catalog_w),
            ("battery_catalog_wh", &self.battery_catalog_wh),
        ] {
            if cat.is_empty() {
                return Err(Error::InvalidConfig(format!("{name} must be non-empty")));
            }
            if cat.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be strictly increasing"
                )));
            }
        }
        Ok(())
    }

    /// Checks every field of `x` against its bound or catalog.
    pub fn check(&self, x: &DesignVector) -> Result<()> {
        let fields = [
            ("arm_length", x.arm_length, self.arm_length),
            ("arm_width", x.arm_width, self.arm_width),
            ("prop_diameter", x.prop_diameter, self.prop_diameter),
            ("payload_mass", x.payload_mass, self.payload_mass),
        ];
        for (field, value, (min, max)) in fields {
            if !(value >= min && value <= max) {
                return Err(Error::OutOfBounds {
                    field,
                    value,
                    min,
                    max,
                });
            }
        }
        if x.motor_index >= self.motor_catalog_w.len() {
            return Err(Error::OutOfBounds {
                field: "motor_index",
                value: x.motor_index as f64,
                min: 0.0,
                max: (self.motor_catalog_w.len() - 1) as f64,
            });
        }
        if x.battery_index >= self.battery_catalog_wh.len() {
            return Err(Error::OutOfBounds {
                field: "battery_index",
                value: x.battery_index as f64,
                min: 0.0,
                max: (self.battery_catalog_wh.len() - 1) as f64,
            });
        }
        Ok(())
    }
}

/// Constants of the analytic sizing model. All tunable from the morphology
/// config file; the defaults give talent ranges of a few km and several m/s
/// with a non-degenerate three-way Pareto conflict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MorphologyModel {
    /// Central hub/avionics mass, kg.
    pub hub_mass: f64,
    /// Frame areal density, kg/m^2; frame mass = density * 4 * arm_length * arm_width.
    pub frame_areal_density: f64,
    /// Battery specific energy, Wh/kg.
    pub battery_specific_energy: f64,
    /// Motor mass per watt of rated power, kg/W (per motor, four motors).
    pub motor_mass_per_watt: f64,
    /// Propeller mass coefficient, kg/m^2 of diameter squared (per prop).
    pub prop_mass_coeff: f64,
    /// Hover thrust per motor = thrust_coeff * power^(2/3), newtons.
    pub thrust_coeff: f64,
    /// Required hover thrust margin over weight.
    pub thrust_margin: f64,
    /// Cruise speed = speed_coeff * sqrt(thrust/mass - g) * prop_efficiency.
    pub speed_coeff: f64,
    /// Propeller efficiency floor at zero diameter; efficiency ramps linearly
    /// to 1.0 at `prop_diameter_ref`.
    pub prop_eff_floor: f64,
    pub prop_diameter_ref: f64,
    /// Cruise power = induced_power_coeff * mass^1.5 + parasite_power_coeff * v^3.
    pub induced_power_coeff: f64,
    pub parasite_power_coeff: f64,
    /// Usable fraction of battery energy.
    pub usable_energy_frac: f64,
    /// Search speed floor at minimum payload, m/s.
    pub search_speed_floor: f64,
    /// Search speed gain per kg of payload above the payload lower bound.
    pub search_speed_per_kg: f64,
}

impl Default for MorphologyModel {
    fn default() -> Self {
        Self {
            hub_mass: 0.30,
            frame_areal_density: 6.0,
            battery_specific_energy: 320.0,
            motor_mass_per_watt: 0.0006,
            prop_mass_coeff: 0.7,
            thrust_coeff: 0.26,
            thrust_margin: 1.5,
            speed_coeff: 3.0,
            prop_eff_floor: 0.6,
            prop_diameter_ref: 0.40,
            induced_power_coeff: 75.0,
            parasite_power_coeff: 0.006,
            usable_energy_frac: 0.4,
            search_speed_floor: 1.0,
            search_speed_per_kg: 6.0,
        }
    }
}

impl MorphologyModel {
    /// Total takeoff mass, kg.
    pub fn total_mass(&self, x: &DesignVector, bounds: &DesignBounds) -> f64 {
        let frame = self.frame_areal_density * 4.0 * x.arm_length * x.arm_width;
        let battery = bounds.battery_catalog_wh[x.battery_index] / self.battery_specific_energy;
        let motors = 4.0 * self.motor_mass_per_watt * bounds.motor_catalog_w[x.motor_index];
        let props = 4.0 * self.prop_mass_coeff * x.prop_diameter * x.prop_diameter;
        self.hub_mass + frame + battery + motors + props + x.payload_mass
    }

    /// Combined maximum hover thrust of the four motors, newtons.
    pub fn max_thrust(&self, x: &DesignVector, bounds: &DesignBounds) -> f64 {
        4.0 * self.thrust_coeff * bounds.motor_catalog_w[x.motor_index].powf(2.0 / 3.0)
    }

    fn prop_efficiency(&self, diameter: f64) -> f64 {
        let ramp = (diameter / self.prop_diameter_ref).min(1.0);
        self.prop_eff_floor + (1.0 - self.prop_eff_floor) * ramp
    }

    fn cruising_speed(&self, x: &DesignVector, bounds: &DesignBounds) -> f64 {
        let excess = self.max_thrust(x, bounds) / self.total_mass(x, bounds) - GRAVITY;
        self.speed_coeff * excess.max(0.0).sqrt() * self.prop_efficiency(x.prop_diameter)
    }

    fn cruise_power(&self, mass: f64, speed: f64) -> f64 {
        self.induced_power_coeff * mass.powf(1.5) + self.parasite_power_coeff * speed.powi(3)
    }

    /// Aggregate constraint violation; zero iff the design is feasible.
    ///
    /// Two constraints: hover thrust must exceed `thrust_margin` times the
    /// weight, and the propeller disc must fit between adjacent arms
    /// (diameter <= sqrt(2) * arm_length on a symmetric quad).
    pub fn violation(&self, x: &DesignVector, bounds: &DesignBounds) -> f64 {
        let mass = self.total_mass(x, bounds);
        let required = self.thrust_margin * mass * GRAVITY;
        let thrust_short = (required - self.max_thrust(x, bounds)).max(0.0) / required;
        let max_prop = std::f64::consts::SQRT_2 * x.arm_length;
        let overlap = (x.prop_diameter - max_prop).max(0.0) / max_prop;
        thrust_short + overlap
    }

    /// Human-readable name of the first violated constraint, if any.
    pub fn first_violation(&self, x: &DesignVector, bounds: &DesignBounds) -> Option<String> {
        let mass = self.total_mass(x, bounds);
        let thrust = self.max_thrust(x, bounds);
        let required = self.thrust_margin * mass * GRAVITY;
        if thrust < required {
            return Some(format!(
                "hover thrust {thrust:.2} N below {:.1}x weight {required:.2} N",
                self.thrust_margin
            ));
        }
        let max_prop = std::f64::consts::SQRT_2 * x.arm_length;
        if x.prop_diameter > max_prop {
            return Some(format!(
                "prop diameter {:.3} m overlaps adjacent rotor (max {max_prop:.3} m)",
                x.prop_diameter
            ));
        }
        None
    }
}

/// `true` iff `x` satisfies both feasibility constraints. Total on the
/// bounded box; out-of-bounds inputs are reported as errors.
pub fn feasible(x: &DesignVector, bounds: &DesignBounds, model: &MorphologyModel) -> Result<bool> {
    bounds.check(x)?;
    Ok(model.first_violation(x, bounds).is_none())
}

/// Evaluates the morphology → talent map. Deterministic, pure, and only
/// defined on feasible in-bounds designs.
pub fn evaluate_talents(
    x: &DesignVector,
    bounds: &DesignBounds,
    model: &MorphologyModel,
) -> Result<TalentVector> {
    bounds.check(x)?;
    if let Some(reason) = model.first_violation(x, bounds) {
        return Err(Error::Infeasible(reason));
    }
    Ok(evaluate_talents_unchecked(x, bounds, model))
}

/// Talent map without the feasibility gate; used internally by optimizers
/// that penalize infeasible candidates instead of rejecting them.
pub fn evaluate_talents_unchecked(
    x: &DesignVector,
    bounds: &DesignBounds,
    model: &MorphologyModel,
) -> TalentVector {
    let mass = model.total_mass(x, bounds);
    let speed = model.cruising_speed(x, bounds);
    let capacity_wh = bounds.battery_catalog_wh[x.battery_index];
    let energy_j = model.usable_energy_frac * capacity_wh * 3600.0;
    let power = model.cruise_power(mass, speed);
    let flight_range = energy_j / power * speed;
    let search_speed = model.search_speed_floor
        + model.search_speed_per_kg * (x.payload_mass - bounds.payload_mass.0);
    TalentVector {
        search_speed,
        cruising_speed: speed,
        flight_range,
    }
}

/// Samples a uniformly random in-bounds design (not necessarily feasible).
pub fn random_design<R: rand::Rng>(rng: &mut R, bounds: &DesignBounds) -> DesignVector {
    DesignVector {
        arm_length: rng.random_range(bounds.arm_length.0..=bounds.arm_length.1),
        arm_width: rng.random_range(bounds.arm_width.0..=bounds.arm_width.1),
        motor_index: rng.random_range(0..bounds.motor_catalog_w.len()),
        battery_index: rng.random_range(0..bounds.battery_catalog_wh.len()),
        prop_diameter: rng.random_range(bounds.prop_diameter.0..=bounds.prop_diameter.1),
        payload_mass: rng.random_range(bounds.payload_mass.0..=bounds.payload_mass.1),
    }
}

/// Samples a random feasible design by rejection; errors after `max_tries`.
pub fn random_feasible_design<R: rand::Rng>(
    rng: &mut R,
    bounds: &DesignBounds,
    model: &MorphologyModel,
    max_tries: usize,
) -> Result<DesignVector> {
    for _ in 0..max_tries {
        let x = random_design(rng, bounds);
        if model.first_violation(&x, bounds).is_none() {
            return Ok(x);
        }
    }
    Err(Error::NoFeasible(format!(
        "no feasible design in {max_tries} uniform samples"
    )))
}

/// A design centered in the continuous box with mid-catalog discrete picks.
pub fn nominal_design(bounds: &DesignBounds) -> DesignVector {
    DesignVector {
        arm_length: 0.5 * (bounds.arm_length.0 + bounds.arm_length.1),
        arm_width: 0.5 * (bounds.arm_width.0 + bounds.arm_width.1),
        motor_index: bounds.motor_catalog_w.len() / 2,
        battery_index: bounds.battery_catalog_wh.len() / 2,
        prop_diameter: 0.5 * (bounds.prop_diameter.0 + bounds.prop_diameter.1),
        payload_mass: 0.5 * (bounds.payload_mass.0 + bounds.payload_mass.1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (DesignBounds, MorphologyModel) {
        (DesignBounds::default(), MorphologyModel::default())
    }

    #[test]
    fn nominal_midbox_design_is_feasible() {
        let (bounds, model) = setup();
        let x = nominal_design(&bounds);
        // Direct evaluation of the two constraint formulas.
        let mass = model.total_mass(&x, &bounds);
        let thrust = model.max_thrust(&x, &bounds);
        assert!(thrust >= model.thrust_margin * mass * GRAVITY);
        assert!(x.prop_diameter <= std::f64::consts::SQRT_2 * x.arm_length);
        assert!(feasible(&x, &bounds, &model).unwrap());
    }

    #[test]
    fn max_payload_min_motor_is_infeasible() {
        let (bounds, model) = setup();
        // Thrust margin violated by construction regardless of the other fields:
        // scan the remaining box corners.
        for &arm_length in &[bounds.arm_length.0, bounds.arm_length.1] {
            for &arm_width in &[bounds.arm_width.0, bounds.arm_width.1] {
                for &prop_diameter in &[bounds.prop_diameter.0, bounds.prop_diameter.1] {
                    for battery_index in 0..bounds.battery_catalog_wh.len() {
                        let x = DesignVector {
                            arm_length,
                            arm_width,
                            motor_index: 0,
                            battery_index,
                            prop_diameter,
                            payload_mass: bounds.payload_mass.1,
                        };
                        assert!(!feasible(&x, &bounds, &model).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn oversized_prop_is_infeasible() {
        let (bounds, model) = setup();
        let x = DesignVector {
            prop_diameter: (2.0 * 0.10_f64).min(bounds.prop_diameter.1),
            arm_length: 0.10,
            ..nominal_design(&bounds)
        };
        assert!(x.prop_diameter > 2.0_f64.sqrt() * x.arm_length);
        assert!(!feasible(&x, &bounds, &model).unwrap());
    }

    #[test]
    fn min_payload_hits_search_floor() {
        let (bounds, model) = setup();
        let mut x = nominal_design(&bounds);
        x.payload_mass = bounds.payload_mass.0;
        let t = evaluate_talents(&x, &bounds, &model).unwrap();
        assert_eq!(t.search_speed, model.search_speed_floor);
    }

    #[test]
    fn payload_step_reduces_range() {
        let (bounds, model) = setup();
        // Direct evaluation of the analytic surrogate on a +0.2 kg perturbation.
        let x1 = nominal_design(&bounds);
        let mut x2 = x1;
        x2.payload_mass += 0.2;
        let t1 = evaluate_talents(&x1, &bounds, &model).unwrap();
        let t2 = evaluate_talents(&x2, &bounds, &model).unwrap();
        assert!(t2.flight_range < t1.flight_range);
        assert!(t2.search_speed > t1.search_speed);
    }

    #[test]
    fn talents_strictly_positive_for_random_feasible_designs() {
        let (bounds, model) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let x = random_feasible_design(&mut rng, &bounds, &model, 10_000).unwrap();
            let t = evaluate_talents(&x, &bounds, &model).unwrap();
            assert!(t.search_speed > 0.0 && t.cruising_speed > 0.0 && t.flight_range > 0.0);
        }
    }

    #[test]
    fn evaluate_is_deterministic() {
        let (bounds, model) = setup();
        let x = nominal_design(&bounds);
        let a = evaluate_talents(&x, &bounds, &model).unwrap();
        let b = evaluate_talents(&x, &bounds, &model).unwrap();
        assert_eq!(a.as_array(), b.as_array());
    }

    #[test]
    fn out_of_bounds_input_names_the_field() {
        let (bounds, model) = setup();
        let mut x = nominal_design(&bounds);
        x.payload_mass = bounds.payload_mass.1 + 1.0;
        let err = evaluate_talents(&x, &bounds, &model).unwrap_err();
        assert!(err.to_string().contains("payload_mass"));
    }

    #[test]
    fn infeasible_input_names_the_constraint() {
        let (bounds, model) = setup();
        let x = DesignVector {
            motor_index: 0,
            payload_mass: bounds.payload_mass.1,
            ..nominal_design(&bounds)
        };
        let err = evaluate_talents(&x, &bounds, &model).unwrap_err();
        assert!(err.to_string().contains("thrust"));
    }

    /// Conflict property: payload up => search up, range down; battery up =>
    /// range up, speed down. Checked on 1000 random feasible designs with
    /// zero exceptions, perturbing one field at a time.
    #[test]
    fn talent_conflicts_hold_on_random_feasible_designs() {
        let (bounds, model) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut payload_checked = 0;
        let mut battery_checked = 0;
        for _ in 0..1000 {
            let x = random_feasible_design(&mut rng, &bounds, &model, 10_000).unwrap();
            let t = evaluate_talents(&x, &bounds, &model).unwrap();

            let mut xp = x;
            xp.payload_mass = (x.payload_mass + 0.2).min(bounds.payload_mass.1);
            if xp.payload_mass > x.payload_mass && feasible(&xp, &bounds, &model).unwrap() {
                let tp = evaluate_talents(&xp, &bounds, &model).unwrap();
                assert!(tp.search_speed > t.search_speed, "payload/search at {x:?}");
                assert!(tp.flight_range < t.flight_range, "payload/range at {x:?}");
                payload_checked += 1;
            }

            if x.battery_index + 1 < bounds.battery_catalog_wh.len() {
                let mut xb = x;
                xb.battery_index += 1;
                if feasible(&xb, &bounds, &model).unwrap() {
                    let tb = evaluate_talents(&xb, &bounds, &model).unwrap();
                    assert!(tb.flight_range > t.flight_range, "battery/range at {x:?}");
                    assert!(
                        tb.cruising_speed < t.cruising_speed,
                        "battery/speed at {x:?}"
                    );
                    battery_checked += 1;
                }
            }
        }
        assert!(payload_checked > 300, "too few payload perturbations landed");
        assert!(battery_checked > 300, "too few battery perturbations landed");
    }

    /// Dense grid sweep of the same conflicts, so the property is not only
    /// sampled where rejection sampling happens to land.
    #[test]
    fn talent_conflicts_hold_on_grid() {
        let (bounds, model) = setup();
        let steps = 7;
        let lin = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (steps - 1) as f64;
        for il in 0..steps {
            for iw in 0..steps {
                for id in 0..steps {
                    for ip in 0..steps {
                        for mi in 0..bounds.motor_catalog_w.len() {
                            for bi in 0..bounds.battery_catalog_wh.len() {
                                let x = DesignVector {
                                    arm_length: lin(bounds.arm_length.0, bounds.arm_length.1, il),
                                    arm_width: lin(bounds.arm_width.0, bounds.arm_width.1, iw),
                                    motor_index: mi,
                                    battery_index: bi,
                                    prop_diameter: lin(
                                        bounds.prop_diameter.0,
                                        bounds.prop_diameter.1,
                                        id,
                                    ),
                                    payload_mass: lin(
                                        bounds.payload_mass.0,
                                        bounds.payload_mass.1,
                                        ip,
                                    ),
                                };
                                if !feasible(&x, &bounds, &model).unwrap() {
                                    continue;
                                }
                                let t = evaluate_talents(&x, &bounds, &model).unwrap();
                                let mut xp = x;
                                xp.payload_mass += 0.05;
                                if xp.payload_mass <= bounds.payload_mass.1
                                    && feasible(&xp, &bounds, &model).unwrap()
                                {
                                    let tp = evaluate_talents(&xp, &bounds, &model).unwrap();
                                    assert!(tp.flight_range < t.flight_range, "at {x:?}");
                                }
                                if bi + 1 < bounds.battery_catalog_wh.len() {
                                    let mut xb = x;
                                    xb.battery_index += 1;
                                    if feasible(&xb, &bounds, &model).unwrap() {
                                        let tb = evaluate_talents(&xb, &bounds, &model).unwrap();
                                        assert!(tb.flight_range > t.flight_range, "at {x:?}");
                                        assert!(tb.cruising_speed < t.cruising_speed, "at {x:?}");
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}
