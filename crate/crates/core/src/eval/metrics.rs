//! Ranking metrics over 1-based ranks; `None` is a miss.

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("no ranks to aggregate")]
    Empty,
    #[error("ranks are 1-based; got 0")]
    ZeroRank,
    #[error("k must be at least 1")]
    ZeroK,
}

fn check(ranks: &[Option<usize>]) -> Result<(), MetricError> {
    if ranks.is_empty() {
        return Err(MetricError::Empty);
    }
    if ranks.contains(&Some(0)) {
        return Err(MetricError::ZeroRank);
    }
    Ok(())
}

/// Mean reciprocal rank; misses contribute 0.
pub fn mrr(ranks: &[Option<usize>]) -> Result<f64, MetricError> {
    check(ranks)?;
    let sum: f64 = ranks.iter().map(|r| r.map_or(0.0, |r| 1.0 / r as f64)).sum();
    Ok(sum / ranks.len() as f64)
}

/// Fraction of queries whose rank is at most `k`.
pub fn hit_at_k(ranks: &[Option<usize>], k: usize) -> Result<f64, MetricError> {
    check(ranks)?;
    if k == 0 {
        return Err(MetricError::ZeroK);
    }
    let hits = ranks.iter().filter(|r| r.is_some_and(|r| r <= k)).count();
    Ok(hits as f64 / ranks.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn closed_forms() {
        assert_eq!(mrr(&[Some(1)]).unwrap(), 1.0);
        assert_eq!(mrr(&[Some(4)]).unwrap(), 0.25);
        assert!((mrr(&[Some(2), None, Some(1)]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(hit_at_k(&[Some(1), Some(200)], 100).unwrap(), 0.5);
        assert_eq!(hit_at_k(&[None, None], 1).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        assert_eq!(mrr(&[]), Err(MetricError::Empty));
        assert_eq!(hit_at_k(&[], 3), Err(MetricError::Empty));
        assert_eq!(mrr(&[Some(0)]), Err(MetricError::ZeroRank));
        assert_eq!(hit_at_k(&[Some(1)], 0), Err(MetricError::ZeroK));
    }

    #[test]
    fn hit_matches_counting_and_bounds_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ranks: Vec<Option<usize>> = (0..1000)
            .map(|_| {
                if rng.random_bool(0.2) {
                    None
                } else {
                    Some(rng.random_range(1..=300))
                }
            })
            .collect();
        let mut prev = 0.0;
        for k in [1, 5, 10, 50, 100, 1000] {
            let mut count = 0;
            for r in &ranks {
                if let Some(r) = r {
                    if *r <= k {
                        count += 1;
                    }
                }
            }
            let h = hit_at_k(&ranks, k).unwrap();
            assert_eq!(h, count as f64 / 1000.0);
            assert!(h >= prev);
            prev = h;
        }
        let m = mrr(&ranks).unwrap();
        assert!(m >= hit_at_k(&ranks, 1).unwrap());
        assert!(m <= hit_at_k(&ranks, usize::MAX).unwrap());
    }
}
