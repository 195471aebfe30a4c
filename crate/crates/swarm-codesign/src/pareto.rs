//! Pareto dominance primitives shared by the talent optimizer and the
//! simulator's critical-node filtering.
//!
//! All functions operate on raw objective vectors under a caller-chosen
//! orientation: [`dominates`] and friends assume maximization. Callers that
//! minimize negate their objectives first (see [`nondominated_filter_min`]).

use crate::error::{Error, Result};

/// Strict Pareto dominance under maximization: `a` dominates `b` iff `a` is
/// at least as large in every component and strictly larger in one.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "dominance objective vectors",
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(dominates_unchecked(a, b))
}

fn dominates_unchecked(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strict = true;
        }
    }
    strict
}

/// Indices of the points dominated by no other point (maximization).
///
/// Sort-and-sweep: points are visited in lexicographically decreasing order,
/// and each candidate is compared only against already-accepted points. A
/// point can only be dominated by one sorted ahead of it, so comparing
/// against survivors suffices. The returned index set is sorted ascending
/// and independent of input order.
pub fn nondominated_filter(points: &[Vec<f64>]) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(Error::EmptyInput("nondominated_filter"));
    }
    let dim = points[0].len();
    for p in points {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "nondominated_filter points",
                expected: dim,
                got: p.len(),
            });
        }
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        points[j]
            .iter()
            .zip(&points[i])
            .map(|(a, b)| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal))
            .find(|c| c.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut kept: Vec<usize> = Vec::new();
    'cand: for &i in &order {
        for &j in &kept {
            if dominates_unchecked(&points[j], &points[i]) {
                continue 'cand;
            }
        }
        kept.push(i);
    }
    kept.sort_unstable();
    Ok(kept)
}

/// [`nondominated_filter`] under minimization.
pub fn nondominated_filter_min(points: &[Vec<f64>]) -> Result<Vec<usize>> {
    let negated: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().map(|v| -v).collect())
        .collect();
    nondominated_filter(&negated)
}

/// Deb-style fast non-dominated sort (maximization). Returns fronts of
/// indices; front 0 equals the [`nondominated_filter`] result.
pub fn fast_nondominated_sort(points: &[Vec<f64>]) -> Result<Vec<Vec<usize>>> {
    if points.is_empty() {
        return Err(Error::EmptyInput("fast_nondominated_sort"));
    }
    let n = points.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates(&points[i], &points[j])? {
                dominated_by[i].push(j);
                domination_count[j] += 1;
            } else if dominates_unchecked(&points[j], &points[i]) {
                dominated_by[j].push(i);
                domination_count[i] += 1;
            }
        }
    }
    let mut fronts: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by[i] {
                domination_count[j] -= 1;
                if domination_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::take(&mut current));
        current = next;
    }
    Ok(fronts)
}

/// Crowding distance of each member of one front (indices into `points`).
/// Boundary points per objective get infinite distance; interior points sum
/// normalized gaps between their sorted neighbors.
pub fn crowding_distance(points: &[Vec<f64>], front: &[usize]) -> Vec<f64> {
    let mut distance = vec![0.0f64; front.len()];
    if front.is_empty() {
        return distance;
    }
    let dim = points[front[0]].len();
    for m in 0..dim {
        let mut order: Vec<usize> = (0..front.len()).collect();
        order.sort_by(|&a, &b| {
            points[front[a]][m]
                .partial_cmp(&points[front[b]][m])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let lo = points[front[order[0]]][m];
        let hi = points[front[*order.last().unwrap()]][m];
        distance[order[0]] = f64::INFINITY;
        distance[*order.last().unwrap()] = f64::INFINITY;
        let spread = hi - lo;
        if spread <= 0.0 {
            continue;
        }
        for w in order.windows(3) {
            let (prev, mid, next) = (w[0], w[1], w[2]);
            distance[mid] += (points[front[next]][m] - points[front[prev]][m]) / spread;
        }
    }
    distance
}

#[cfg(test)]
pub(crate) mod oracle {
    /// O(n^2) brute-force non-dominated filter used as the independent test
    /// oracle. Kept deliberately naive.
    pub fn nondominated_bruteforce(points: &[Vec<f64>]) -> Vec<usize> {
        let mut kept = Vec::new();
        'outer: for i in 0..points.len() {
            for j in 0..points.len() {
                if i == j {
                    continue;
                }
                let ge = points[j].iter().zip(&points[i]).all(|(a, b)| a >= b);
                let gt = points[j].iter().zip(&points[i]).any(|(a, b)| a > b);
                if ge && gt {
                    continue 'outer;
                }
            }
            kept.push(i);
        }
        kept
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dominance_basics() {
        assert!(dominates(&[2.0, 2.0, 2.0], &[1.0, 1.0, 1.0]).unwrap());
        assert!(!dominates(&[2.0, 1.0], &[1.0, 2.0]).unwrap());
        assert!(!dominates(&[1.0, 2.0], &[2.0, 1.0]).unwrap());
        // Equal vectors: strict dominance requires one strict inequality.
        assert!(!dominates(&[1.0, 1.0], &[1.0, 1.0]).unwrap());
    }

    #[test]
    fn dominance_dimension_mismatch() {
        assert!(dominates(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn filter_single_point() {
        assert_eq!(nondominated_filter(&[vec![3.0, 4.0]]).unwrap(), vec![0]);
    }

    #[test]
    fn filter_empty_is_error() {
        assert!(nondominated_filter(&[]).is_err());
    }

    #[test]
    fn filter_line_all_incomparable() {
        // Points on x + y = 1 are mutually incomparable under maximization.
        let points: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let x = i as f64 / 19.0;
                vec![x, 1.0 - x]
            })
            .collect();
        let kept = nondominated_filter(&points).unwrap();
        assert_eq!(kept, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn filter_matches_bruteforce_random_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dim in 2..=4 {
            for _ in 0..20 {
                let n = rng.random_range(1..200);
                let points: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
                    .collect();
                let got = nondominated_filter(&points).unwrap();
                let want = oracle::nondominated_bruteforce(&points);
                assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn filter_handles_duplicates() {
        // Duplicate nondominated points do not dominate each other; both stay.
        let points = vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![0.5, 0.5]];
        assert_eq!(nondominated_filter(&points).unwrap(), vec![0, 1]);
    }

    #[test]
    fn sort_chain_gives_singleton_fronts() {
        let points = vec![vec![3.0, 3.0], vec![2.0, 2.0], vec![1.0, 1.0]];
        let fronts = fast_nondominated_sort(&points).unwrap();
        assert_eq!(fronts, vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn sort_front0_matches_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let points: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
            .collect();
        let fronts = fast_nondominated_sort(&points).unwrap();
        assert_eq!(fronts[0], nondominated_filter(&points).unwrap());
        assert_eq!(fronts[0], oracle::nondominated_bruteforce(&points));
        let total: usize = fronts.iter().map(|f| f.len()).sum();
        assert_eq!(total, 50);
    }

    #[test]
    fn crowding_two_points_both_infinite() {
        let points = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let d = crowding_distance(&points, &[0, 1]);
        assert!(d[0].is_infinite() && d[1].is_infinite());
    }

    #[test]
    fn crowding_interior_point_finite() {
        let points = vec![vec![0.0, 1.0], vec![0.5, 0.5], vec![1.0, 0.0]];
        let d = crowding_distance(&points, &[0, 1, 2]);
        assert!(d[0].is_infinite() && d[2].is_infinite());
        assert!((d[1] - 2.0).abs() < 1e-12);
    }

    proptest! {
        /// Filter output is a fixed point: filtering the kept subset keeps all.
        #[test]
        fn prop_filter_idempotent(raw in proptest::collection::vec(
            proptest::collection::vec(0.0f64..1.0, 3), 1..80)) {
            let kept = nondominated_filter(&raw).unwrap();
            let sub: Vec<Vec<f64>> = kept.iter().map(|&i| raw[i].clone()).collect();
            let again = nondominated_filter(&sub).unwrap();
            prop_assert_eq!(again, (0..sub.len()).collect::<Vec<_>>());
        }

        /// Filter agrees with the brute-force oracle on arbitrary inputs.
        #[test]
        fn prop_filter_matches_oracle(dim in 2usize..5, n in 1usize..60,
                                      seed in proptest::num::u64::ANY) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..dim).map(|_| rng.random_range(-5.0f64..5.0)).collect())
                .collect();
            prop_assert_eq!(
                nondominated_filter(&pts).unwrap(),
                oracle::nondominated_bruteforce(&pts)
            );
        }
    }
}
