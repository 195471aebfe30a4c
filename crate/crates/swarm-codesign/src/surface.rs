//! Talent-front surface: a polynomial surrogate predicting the last talent
//! from the others, plus 5th/95th-percentile quantile envelopes used to
//! decode raw `[0,1]` policy outputs onto the front.
//!
//! The decoder follows a recursive chain: the first talent is an affine map
//! of `raw[0]` onto its global bounds; each subsequent raw value is mapped
//! onto the quantile envelope conditioned on the talents decoded before it;
//! the final talent is the surrogate prediction. The chain is implemented
//! for any number of talents but the shipped pipeline uses three (search
//! speed, cruising speed, flight range).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::TalentVector;
use crate::nsga2::ParetoSet;
use crate::polyfit::{fit_least_squares, fit_quantile, PolyModel};

pub const SURFACE_SCHEMA_VERSION: u32 = 1;

/// Post-sigmoid policy outputs, one per free talent, each in `[0,1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTalentOutput {
    pub values: Vec<f64>,
}

impl RawTalentOutput {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for (i, &v) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfBounds {
                    field: "raw talent output",
                    value: v,
                    min: 0.0,
                    max: 1.0,
                });
            }
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("raw talent component {i}")));
            }
        }
        Ok(Self { values })
    }
}

/// Lower/upper quantile polynomials for one talent conditioned on the
/// talents before it in the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileEnvelope {
    pub lo: PolyModel,
    pub hi: PolyModel,
}

impl QuantileEnvelope {
    /// Envelope at `prefix`. Where the independently fitted curves cross,
    /// both collapse to their midpoint so the interval is never inverted.
    pub fn bounds(&self, prefix: &[f64]) -> (f64, f64) {
        let lo = self.lo.eval(prefix);
        let hi = self.hi.eval(prefix);
        if lo > hi {
            let mid = 0.5 * (lo + hi);
            (mid, mid)
        } else {
            (lo, hi)
        }
    }
}

/// Fitted Pareto-front model: global bounds of the first talent, one
/// quantile envelope per intermediate talent, and the surrogate for the
/// last talent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TalentSurface {
    pub version: u32,
    pub degree: usize,
    /// Global bounds of the first talent over the Pareto set.
    pub t1_min: f64,
    pub t1_max: f64,
    /// Envelope `i` conditions talent `i + 2` on talents `1..=i + 1`.
    pub envelopes: Vec<QuantileEnvelope>,
    /// Predicts the last talent from all previous ones.
    pub surrogate: PolyModel,
    /// RMS residual of the surrogate fit, reported for diagnostics.
    pub surrogate_rms: f64,
}

impl TalentSurface {
    /// Total number of talents the chain decodes.
    pub fn talent_count(&self) -> usize {
        self.envelopes.len() + 2
    }

    /// Decodes raw `[0,1]` outputs into a full talent vector.
    ///
    /// `y[0] = raw[0] * (t1_max - t1_min) + t1_min`, each subsequent
    /// `y[i] = raw[i] * (hi - lo) + lo` with `(lo, hi)` the envelope at the
    /// decoded prefix, and the last talent is the surrogate prediction.
    pub fn decode(&self, raw: &RawTalentOutput) -> Result<Vec<f64>> {
        let m = self.talent_count();
        if raw.values.len() != m - 1 {
            return Err(Error::DimensionMismatch {
                context: "raw talent output",
                expected: m - 1,
                got: raw.values.len(),
            });
        }
        // Re-validate range; RawTalentOutput can be built from deserialization.
        for &v in &raw.values {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfBounds {
                    field: "raw talent output",
                    value: v,
                    min: 0.0,
                    max: 1.0,
                });
            }
        }
        let mut decoded = Vec::with_capacity(m);
        decoded.push(raw.values[0] * (self.t1_max - self.t1_min) + self.t1_min);
        for (level, envelope) in self.envelopes.iter().enumerate() {
            let (lo, hi) = envelope.bounds(&decoded);
            decoded.push(raw.values[level + 1] * (hi - lo) + lo);
        }
        decoded.push(self.surrogate.eval(&decoded));
        Ok(decoded)
    }

    /// Inverse of [`decode`](Self::decode) for the free talents: recovers the
    /// raw values from a decoded prefix. Collapsed intervals map to 0.5.
    pub fn encode(&self, talents: &[f64]) -> Result<RawTalentOutput> {
        let m = self.talent_count();
        if talents.len() < m - 1 {
            return Err(Error::DimensionMismatch {
                context: "talents to encode",
                expected: m - 1,
                got: talents.len(),
            });
        }
        let mut raw = Vec::with_capacity(m - 1);
        let span = self.t1_max - self.t1_min;
        raw.push(if span > 0.0 {
            ((talents[0] - self.t1_min) / span).clamp(0.0, 1.0)
        } else {
            0.5
        });
        for (level, envelope) in self.envelopes.iter().enumerate() {
            let (lo, hi) = envelope.bounds(&talents[..level + 1]);
            raw.push(if hi > lo {
                ((talents[level + 1] - lo) / (hi - lo)).clamp(0.0, 1.0)
            } else {
                0.5
            });
        }
        RawTalentOutput::new(raw)
    }

    /// Three-talent convenience wrapper around [`decode`](Self::decode).
    pub fn decode_talents(&self, raw: &RawTalentOutput) -> Result<TalentVector> {
        let d = self.decode(raw)?;
        if d.len() != 3 {
            return Err(Error::DimensionMismatch {
                context: "decode_talents requires a three-talent surface",
                expected: 3,
                got: d.len(),
            });
        }
        Ok(TalentVector {
            search_speed: d[0],
            cruising_speed: d[1],
            flight_range: d[2],
        })
    }

    /// Positive per-talent normalization constants derived from the modeled
    /// band (maximum of each talent over a decoding grid). Used to scale
    /// talent features and finalization residuals.
    pub fn reference_scales(&self) -> Vec<f64> {
        let m = self.talent_count();
        let grid = 33usize;
        let mut maxima = vec![f64::NEG_INFINITY; m];
        // Sweep the corners and a grid of the raw cube along the first two
        // raw axes (the shipped chain has exactly two free talents).
        let steps: Vec<f64> = (0..grid).map(|i| i as f64 / (grid - 1) as f64).collect();
        for &a in &steps {
            for &b in &steps {
                let mut raw = vec![0.5; m - 1];
                raw[0] = a;
                if m > 2 {
                    raw[1] = b;
                }
                if let Ok(decoded) = self.decode(&RawTalentOutput { values: raw }) {
                    for (k, v) in decoded.iter().enumerate() {
                        maxima[k] = maxima[k].max(v.abs());
                    }
                }
            }
        }
        maxima.into_iter().map(|v| v.max(1e-9)).collect()
    }
}

/// Fits the full surface from a Pareto set: global first-talent bounds,
/// quantile envelopes at the 5th and 95th percentiles, and the least-squares
/// surrogate for the last talent. Logs a warning if the envelope curves
/// cross anywhere on a dense grid.
pub fn fit_surface(pareto: &ParetoSet, degree: usize) -> Result<TalentSurface> {
    if pareto.is_empty() {
        return Err(Error::EmptyInput("fit_surface pareto set"));
    }
    let talents = pareto.talents();
    let m = 3usize;

    let t1: Vec<f64> = talents.iter().map(|t| t[0]).collect();
    let (t1_min, t1_max) = t1
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !(t1_min < t1_max) {
        return Err(Error::FitFailure(
            "degenerate first-talent spread in pareto set".into(),
        ));
    }

    let mut envelopes = Vec::new();
    for level in 0..m - 2 {
        let xs: Vec<Vec<f64>> = talents.iter().map(|t| t[..level + 1].to_vec()).collect();
        let ys: Vec<f64> = talents.iter().map(|t| t[level + 1]).collect();
        let lo = fit_quantile(&xs, &ys, 0.05, degree)?;
        let hi = fit_quantile(&xs, &ys, 0.95, degree)?;
        let envelope = QuantileEnvelope { lo, hi };
        let crossings = (0..101)
            .map(|i| t1_min + (t1_max - t1_min) * i as f64 / 100.0)
            .filter(|&x| {
                let l = envelope.lo.eval(&[x]);
                let h = envelope.hi.eval(&[x]);
                l > h
            })
            .count();
        if crossings > 0 {
            log::warn!(
                "quantile envelope level {level} crosses at {crossings}/101 grid points; \
                 collapsing to midpoint there"
            );
        }
        envelopes.push(envelope);
    }

    let xs: Vec<Vec<f64>> = talents.iter().map(|t| t[..m - 1].to_vec()).collect();
    let ys: Vec<f64> = talents.iter().map(|t| t[m - 1]).collect();
    let (surrogate, surrogate_rms) = fit_least_squares(&xs, &ys, degree)?;

    Ok(TalentSurface {
        version: SURFACE_SCHEMA_VERSION,
        degree,
        t1_min,
        t1_max,
        envelopes,
        surrogate,
        surrogate_rms,
    })
}

pub fn save_surface(surface: &TalentSurface, path: &Path) -> Result<()> {
    let text = toml::to_string_pretty(surface)
        .map_err(|e| Error::InvalidConfig(format!("surface serialization: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_surface(path: &Path) -> Result<TalentSurface> {
    let text = std::fs::read_to_string(path)?;
    let surface: TalentSurface = toml::from_str(&text).map_err(|e| Error::TomlParse {
        path: path.display().to_string(),
        source: e,
    })?;
    if surface.version != SURFACE_SCHEMA_VERSION {
        return Err(Error::InvalidFile {
            path: path.display().to_string(),
            reason: format!(
                "unsupported surface schema version {} (expected {SURFACE_SCHEMA_VERSION})",
                surface.version
            ),
        });
    }
    Ok(surface)
}
