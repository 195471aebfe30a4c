//! Polynomial fitting over a shared multivariate monomial basis: ordinary
//! least squares for the Pareto surrogate and pinball-loss quantile
//! regression for the envelope curves.
//!
//! Inputs are affinely normalized per variable before the basis is built, so
//! the coefficients live in a centered/scaled basis; the normalization
//! constants are part of the model and of its serialized form.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent tuples of all monomials in `vars` variables with total degree
/// <= `degree`, in graded lexicographic order (degree first, then lex).
pub fn monomial_exponents(vars: usize, degree: usize) -> Vec<Vec<usize>> {
    fn rec(vars: usize, remaining: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if vars == 0 {
            out.push(prefix.clone());
            return;
        }
        for e in 0..=remaining {
            prefix.push(e);
            rec(vars - 1, remaining - e, prefix, out);
            prefix.pop();
        }
    }
    let mut raw = Vec::new();
    rec(vars, degree, &mut Vec::new(), &mut raw);
    raw.sort_by_key(|e| (e.iter().sum::<usize>(), e.clone()));
    raw
}

/// A polynomial in `vars` variables of total degree <= `degree`, evaluated
/// on normalized coordinates `z_i = (x_i - center_i) / scale_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyModel {
    pub vars: usize,
    pub degree: usize,
    pub centers: Vec<f64>,
    pub scales: Vec<f64>,
    /// One coefficient per monomial of [`monomial_exponents`], same order.
    pub coeffs: Vec<f64>,
}

impl PolyModel {
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.vars);
        let z: Vec<f64> = x
            .iter()
            .zip(self.centers.iter().zip(&self.scales))
            .map(|(v, (c, s))| (v - c) / s)
            .collect();
        monomial_exponents(self.vars, self.degree)
            .iter()
            .zip(&self.coeffs)
            .map(|(exp, c)| {
                c * exp
                    .iter()
                    .zip(&z)
                    .map(|(&e, zv)| zv.powi(e as i32))
                    .product::<f64>()
            })
            .sum()
    }
}

fn normalization(xs: &[Vec<f64>], vars: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut centers = vec![0.0; vars];
    let mut scales = vec![0.0; vars];
    for v in 0..vars {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for x in xs {
            lo = lo.min(x[v]);
            hi = hi.max(x[v]);
        }
        if !(hi - lo).is_finite() {
            return Err(Error::FitFailure(format!(
                "non-finite spread in variable {v}"
            )));
        }
        if hi - lo < 1e-12 {
            return Err(Error::FitFailure(format!(
                "degenerate spread in variable {v}: all values equal {lo}"
            )));
        }
        centers[v] = 0.5 * (lo + hi);
        scales[v] = 0.5 * (hi - lo);
    }
    Ok((centers, scales))
}

fn design_matrix(
    xs: &[Vec<f64>],
    centers: &[f64],
    scales: &[f64],
    exponents: &[Vec<usize>],
) -> DMatrix<f64> {
    let n = xs.len();
    let m = exponents.len();
    let mut a = DMatrix::zeros(n, m);
    for (i, x) in xs.iter().enumerate() {
        let z: Vec<f64> = x
            .iter()
            .zip(centers.iter().zip(scales))
            .map(|(v, (c, s))| (v - c) / s)
            .collect();
        for (j, exp) in exponents.iter().enumerate() {
            a[(i, j)] = exp
                .iter()
                .zip(&z)
                .map(|(&e, zv)| zv.powi(e as i32))
                .product();
        }
    }
    a
}

/// Ordinary least squares fit. Returns the model and the RMS residual.
/// Requires at least as many points as coefficients and a full-rank design
/// matrix.
pub fn fit_least_squares(xs: &[Vec<f64>], ys: &[f64], degree: usize) -> Result<(PolyModel, f64)> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::FitFailure(format!(
            "need matching non-empty inputs, got {} xs and {} ys",
            xs.len(),
            ys.len()
        )));
    }
    let vars = xs[0].len();
    let exponents = monomial_exponents(vars, degree);
    if xs.len() < exponents.len() {
        return Err(Error::FitFailure(format!(
            "{} points cannot determine {} coefficients (degree {degree}, {vars} vars)",
            xs.len(),
            exponents.len()
        )));
    }
    let (centers, scales) = normalization(xs, vars)?;
    let a = design_matrix(xs, &centers, &scales, &exponents);
    let y = DVector::from_column_slice(ys);

    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > smax * 1e-10)
        .count();
    if rank < exponents.len() {
        return Err(Error::FitFailure(format!(
            "rank-deficient design matrix: rank {rank} < {} coefficients; \
             the sample does not span the basis",
            exponents.len()
        )));
    }
    let coeffs = svd
        .solve(&y, 1e-12)
        .map_err(|e| Error::FitFailure(e.to_string()))?;
    let residual = &a * &coeffs - &y;
    let rms = (residual.norm_squared() / xs.len() as f64).sqrt();
    Ok((
        PolyModel {
            vars,
            degree,
            centers,
            scales,
            coeffs: coeffs.iter().copied().collect(),
        },
        rms,
    ))
}

/// Pinball loss of `model` on the sample: mean of rho_tau(y - p(x)).
pub fn pinball_loss(model: &PolyModel, xs: &[Vec<f64>], ys: &[f64], tau: f64) -> f64 {
    let mut total = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let u = y - model.eval(x);
        total += if u >= 0.0 { tau * u } else { (tau - 1.0) * u };
    }
    total / xs.len() as f64
}

/// Fits the `tau`-quantile polynomial by subgradient descent on the pinball
/// loss with a decaying step size, Polyak iterate averaging, ten random
/// restarts around a least-squares warm start, and an exact constant-term
/// polish (the optimal intercept shift is the tau-quantile of residuals).
pub fn fit_quantile(
    xs: &[Vec<f64>],
    ys: &[f64],
    tau: f64,
    degree: usize,
) -> Result<PolyModel> {
    if !(0.0 < tau && tau < 1.0) {
        return Err(Error::FitFailure(format!("tau must lie in (0,1), got {tau}")));
    }
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::FitFailure("empty or mismatched quantile inputs".into()));
    }
    let vars = xs[0].len();
    let exponents = monomial_exponents(vars, degree);
    if xs.len() < degree + 2 {
        return Err(Error::FitFailure(format!(
            "need at least degree + 2 = {} points, got {}",
            degree + 2,
            xs.len()
        )));
    }
    let (base, _) = fit_least_squares(xs, ys, degree)?;
    let (centers, scales) = (base.centers.clone(), base.scales.clone());
    let a = design_matrix(xs, &centers, &scales, &exponents);
    let n = xs.len();
    let m = exponents.len();

    let loss_of = |coeffs: &[f64]| -> f64 {
        let mut total = 0.0;
        for i in 0..n {
            let pred: f64 = (0..m).map(|j| a[(i, j)] * coeffs[j]).sum();
            let u = ys[i] - pred;
            total += if u >= 0.0 { tau * u } else { (tau - 1.0) * u };
        }
        total / n as f64
    };

    // Exact minimization over the intercept: shift so that the residual
    // tau-quantile is zero.
    let polish_intercept = |coeffs: &mut [f64]| {
        let mut residuals: Vec<f64> = (0..n)
            .map(|i| ys[i] - (0..m).map(|j| a[(i, j)] * coeffs[j]).sum::<f64>())
            .collect();
        residuals.sort_by(|p, q| p.partial_cmp(q).unwrap());
        let k = ((tau * n as f64).ceil() as usize).clamp(1, n) - 1;
        coeffs[0] += residuals[k];
    };

    let y_spread = {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &y in ys {
            lo = lo.min(y);
            hi = hi.max(y);
        }
        (hi - lo).max(1e-12)
    };

    let mut rng_state: u64 = 0x9E3779B97F4A7C15;
    let mut next_unit = move || {
        // SplitMix64; deterministic restart jitter without threading an RNG.
        rng_state = rng_state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = rng_state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        ((z ^ (z >> 31)) as f64 / u64::MAX as f64) * 2.0 - 1.0
    };

    let iterations = 4000usize;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for restart in 0..10 {
        let mut coeffs: Vec<f64> = base.coeffs.clone();
        if restart > 0 {
            for c in coeffs.iter_mut() {
                *c += next_unit() * 0.1 * y_spread;
            }
        }
        polish_intercept(&mut coeffs);
        let step0 = 0.5 * y_spread;
        let mut avg = vec![0.0; m];
        let mut avg_count = 0usize;
        let mut last_loss = loss_of(&coeffs);
        for t in 0..iterations {
            // Subgradient of the mean pinball loss.
            let mut grad = vec![0.0; m];
            for i in 0..n {
                let pred: f64 = (0..m).map(|j| a[(i, j)] * coeffs[j]).sum();
                let u = ys[i] - pred;
                let w = if u > 0.0 {
                    -tau
                } else if u < 0.0 {
                    1.0 - tau
                } else {
                    0.0
                };
                for j in 0..m {
                    grad[j] += w * a[(i, j)] / n as f64;
                }
            }
            let step = step0 / (1.0 + t as f64).sqrt();
            for j in 0..m {
                coeffs[j] -= step * grad[j];
            }
            if t >= iterations / 2 {
                for j in 0..m {
                    avg[j] += coeffs[j];
                }
                avg_count += 1;
            }
            if t % 200 == 199 {
                let l = loss_of(&coeffs);
                if (last_loss - l).abs() < 1e-8 {
                    break;
                }
                last_loss = l;
            }
        }
        let mut candidate = if avg_count > 0 {
            avg.iter().map(|v| v / avg_count as f64).collect()
        } else {
            coeffs.clone()
        };
        polish_intercept(&mut candidate);
        polish_intercept(&mut coeffs);
        for cand in [candidate, coeffs] {
            let l = loss_of(&cand);
            if best.as_ref().map_or(true, |(bl, _)| l < *bl) {
                best = Some((l, cand));
            }
        }
    }

    let (_, coeffs) = best.expect("at least one restart ran");
    Ok(PolyModel {
        vars,
        degree,
        centers,
        scales,
        coeffs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn monomial_order_is_graded_lex() {
        assert_eq!(
            monomial_exponents(2, 2),
            vec![
                vec![0, 0],
                vec![0, 1],
                vec![1, 0],
                vec![0, 2],
                vec![1, 1],
                vec![2, 0]
            ]
        );
        assert_eq!(monomial_exponents(1, 3).len(), 4);
        // C(degree + vars, vars) monomials in general.
        assert_eq!(monomial_exponents(3, 2).len(), 10);
    }

    #[test]
    fn recovers_exact_quadratic() {
        // Noiseless samples of 2 + 0.5 x - y + 0.25 x^2 - 0.75 x y + 1.5 y^2.
        let f = |x: f64, y: f64| 2.0 + 0.5 * x - y + 0.25 * x * x - 0.75 * x * y + 1.5 * y * y;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..7 {
            for j in 0..7 {
                let x = -1.0 + i as f64 / 3.0;
                let y = 2.0 + j as f64 / 3.0;
                xs.push(vec![x, y]);
                ys.push(f(x, y));
            }
        }
        let (model, rms) = fit_least_squares(&xs, &ys, 2).unwrap();
        assert!(rms < 1e-10, "rms {rms}");
        for (x, &y) in xs.iter().zip(&ys) {
            assert!((model.eval(x) - y).abs() <= 1e-8 * y.abs().max(1.0));
        }
    }

    #[test]
    fn too_few_points_is_error() {
        let xs = vec![vec![0.0, 0.0], vec![1.0, 0.5], vec![0.3, 0.9]];
        let ys = vec![1.0, 2.0, 3.0];
        // Degree 2 in two vars needs six coefficients.
        assert!(fit_least_squares(&xs, &ys, 2).is_err());
    }

    #[test]
    fn rank_deficiency_is_reported() {
        // Ten points on the line y = x cannot determine a 2-var quadratic.
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, i as f64]).collect();
        let ys: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let err = fit_least_squares(&xs, &ys, 2).unwrap_err();
        assert!(err.to_string().contains("rank"), "{err}");
    }

    #[test]
    fn degenerate_spread_is_error() {
        let xs = vec![vec![1.0], vec![1.0], vec![1.0], vec![1.0]];
        let ys = vec![0.0, 1.0, 2.0, 3.0];
        assert!(fit_least_squares(&xs, &ys, 1).is_err());
    }

    #[test]
    fn median_regression_recovers_line_slope() {
        // Symmetric noise about y = 3 + 2x; the median fit recovers the slope.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..400 {
            let x: f64 = rng.random_range(-2.0..2.0);
            let noise: f64 = rng.random_range(-1.0..1.0);
            xs.push(vec![x]);
            ys.push(3.0 + 2.0 * x + noise);
        }
        let model = fit_quantile(&xs, &ys, 0.5, 1).unwrap();
        let slope = (model.eval(&[1.0]) - model.eval(&[-1.0])) / 2.0;
        assert!((slope - 2.0).abs() / 2.0 < 0.05, "slope {slope}");
    }

    #[test]
    fn upper_quantile_coverage() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..500 {
            let x: f64 = rng.random_range(0.0..4.0);
            let noise: f64 = rng.random_range(-1.0..1.0) + rng.random_range(-1.0..1.0);
            xs.push(vec![x]);
            ys.push(1.0 + 0.5 * x - 0.1 * x * x + noise);
        }
        let model = fit_quantile(&xs, &ys, 0.95, 2).unwrap();
        let below = xs
            .iter()
            .zip(&ys)
            .filter(|(x, &y)| y <= model.eval(x))
            .count();
        let frac = below as f64 / xs.len() as f64;
        assert!((0.90..=1.0).contains(&frac), "coverage {frac}");

        let model05 = fit_quantile(&xs, &ys, 0.05, 2).unwrap();
        let above = xs
            .iter()
            .zip(&ys)
            .filter(|(x, &y)| y >= model05.eval(x))
            .count();
        let frac05 = above as f64 / xs.len() as f64;
        assert!((0.90..=1.0).contains(&frac05), "coverage {frac05}");
    }

    #[test]
    fn quantile_coverage_within_five_points_of_tau() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<Vec<f64>> = (0..300).map(|_| vec![rng.random_range(-1.0f64..1.0)]).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| x[0] + rng.random_range(-0.5f64..0.5))
            .collect();
        for tau in [0.25, 0.5, 0.75] {
            let model = fit_quantile(&xs, &ys, tau, 1).unwrap();
            let below = xs
                .iter()
                .zip(&ys)
                .filter(|(x, &y)| y < model.eval(x))
                .count();
            let frac = below as f64 / xs.len() as f64;
            assert!(
                (frac - tau).abs() <= 0.05,
                "tau {tau} coverage {frac} off by more than 5 points"
            );
        }
    }

    #[test]
    fn constant_data_gives_constant_polynomial() {
        let xs: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 / 10.0]).collect();
        let ys = vec![4.25; 50];
        let model = fit_quantile(&xs, &ys, 0.95, 2).unwrap();
        for x in [0.0, 1.3, 4.9] {
            assert!((model.eval(&[x]) - 4.25).abs() < 1e-9);
        }
    }

    #[test]
    fn tau_out_of_range_rejected() {
        let xs = vec![vec![0.0], vec![1.0], vec![2.0]];
        let ys = vec![0.0, 1.0, 2.0];
        assert!(fit_quantile(&xs, &ys, 0.0, 1).is_err());
        assert!(fit_quantile(&xs, &ys, 1.0, 1).is_err());
    }
}
