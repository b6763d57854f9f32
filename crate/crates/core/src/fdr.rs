//! Multiple-testing adjustment across genes.

/// Benjamini-Hochberg step-up adjusted p-values.
///
/// NaN entries represent untested hypotheses: they are excluded from the
/// effective test count and passed through as NaN, preserving positions.
pub fn bh_adjust(pvalues: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..pvalues.len()).filter(|&i| !pvalues[i].is_nan()).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]).then(a.cmp(&b)));
    let m = order.len() as f64;

    let mut adjusted = vec![f64::NAN; pvalues.len()];
    let mut running = f64::INFINITY;
    for (rank0, &idx) in order.iter().enumerate().rev() {
        let rank = (rank0 + 1) as f64;
        let value = pvalues[idx] * m / rank;
        running = running.min(value);
        // the max guards q >= p against rounding in p*m/rank
        adjusted[idx] = running.min(1.0).max(pvalues[idx]);
    }
    adjusted
}

/// Outcome of the fixed-lambda q-value estimate.
#[derive(Debug, Clone)]
pub struct StoreyOutcome {
    pub qvalues: Vec<f64>,
    /// Estimated null proportion, clamped to at most 1.
    pub pi0: f64,
    /// True when the raw estimate exceeded 1 and was clamped.
    pub pi0_clamped: bool,
}

/// Storey-style q-values with the conservative single-lambda null-proportion
/// estimate pi0 = #{p > lambda} / ((1 - lambda) m); q_i = pi0 * BH_i.
///
/// Uses one fixed lambda (0.5 is the conventional default) rather than a
/// smoothing spline over a lambda grid.
pub fn storey_qvalue(pvalues: &[f64], lambda: f64) -> StoreyOutcome {
    assert!((0.0..1.0).contains(&lambda), "lambda must be in [0, 1)");
    let m = pvalues.iter().filter(|p| !p.is_nan()).count();
    let exceed = pvalues.iter().filter(|&&p| !p.is_nan() && p > lambda).count();
    let raw = if m == 0 { 1.0 } else { exceed as f64 / ((1.0 - lambda) * m as f64) };
    let pi0 = raw.min(1.0);
    let qvalues = bh_adjust(pvalues).into_iter().map(|q| (pi0 * q).min(1.0)).collect();
    StoreyOutcome { qvalues, pi0, pi0_clamped: raw > 1.0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bh_stepup_arithmetic() {
        let adj = bh_adjust(&[0.01, 0.02, 0.03, 0.9]);
        assert_eq!(adj, vec![0.04, 0.04, 0.04, 0.9]);
    }

    #[test]
    fn bh_equal_pvalues_unchanged() {
        let adj = bh_adjust(&[0.3; 5]);
        assert!(adj.iter().all(|&q| (q - 0.3).abs() < 1e-15));
    }

    #[test]
    fn bh_bounds_and_nan_passthrough() {
        let p = [0.5, f64::NAN, 0.001, 1.0, 0.2];
        let adj = bh_adjust(&p);
        assert!(adj[1].is_nan());
        for (i, &q) in adj.iter().enumerate() {
            if !q.is_nan() {
                assert!(q >= p[i] && q <= 1.0, "q[{i}]={q} p={}", p[i]);
            }
        }
        // m excludes the NaN: smallest p adjusted by factor 4/1
        assert!((adj[2] - 0.004).abs() < 1e-15);
        assert!(bh_adjust(&[]).is_empty());
        assert!(bh_adjust(&[f64::NAN])[0].is_nan());
    }

    #[test]
    fn bh_matches_quadratic_definition() {
        // small deterministic vector against the O(m^2) definition
        let p = [0.9, 0.04, 0.31, 0.04, 0.007, 0.55, 0.62, 0.0001];
        let adj = bh_adjust(&p);
        let m = p.len() as f64;
        let mut sorted: Vec<(usize, f64)> = p.iter().cloned().enumerate().collect();
        sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        for (pos, &(orig, _)) in sorted.iter().enumerate() {
            let mut best = f64::INFINITY;
            for (j, &(_, pj)) in sorted.iter().enumerate().skip(pos) {
                best = best.min(pj * m / (j + 1) as f64);
            }
            assert_eq!(adj[orig], best.min(1.0).max(p[orig]), "index {orig}");
        }
    }

    #[test]
    fn storey_uniform_and_enriched() {
        // roughly uniform p-values: pi0 near 1, q near BH
        let p: Vec<f64> = (0..200).map(|i| (i as f64 + 0.5) / 200.0).collect();
        let out = storey_qvalue(&p, 0.5);
        assert!((out.pi0 - 1.0).abs() < 0.05);
        // heavy mass near zero: pi0 < 1 and q <= BH entrywise
        let mut enriched = vec![0.0005; 150];
        enriched.extend((0..50).map(|i| (i as f64 + 0.5) / 50.0));
        let out = storey_qvalue(&enriched, 0.5);
        assert!(out.pi0 < 1.0);
        let bh = bh_adjust(&enriched);
        for (q, b) in out.qvalues.iter().zip(&bh) {
            assert!(q <= b);
        }
        // direct formula check
        let p = [0.8, 0.9, 0.2, 0.6, 0.55];
        let out = storey_qvalue(&p, 0.5);
        let expect: f64 = 4.0 / (0.5 * 5.0);
        assert_eq!(out.pi0, 1.0);
        assert!(out.pi0_clamped);
        assert!((expect - 1.6).abs() < 1e-15);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn bh_matches_bruteforce(p in proptest::collection::vec(0.0f64..=1.0, 1..60)) {
                let adj = bh_adjust(&p);
                let m = p.len() as f64;
                let mut sorted: Vec<(usize, f64)> = p.iter().cloned().enumerate().collect();
                sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                for (pos, &(orig, _)) in sorted.iter().enumerate() {
                    let mut best = f64::INFINITY;
                    for (j, &(_, pj)) in sorted.iter().enumerate().skip(pos) {
                        best = best.min(pj * m / (j + 1) as f64);
                    }
                    prop_assert_eq!(adj[orig], best.min(1.0).max(p[orig]));
                }
            }

            #[test]
            fn bh_monotone_in_order_statistics(p in proptest::collection::vec(0.0f64..=1.0, 2..60)) {
                let adj = bh_adjust(&p);
                let mut pairs: Vec<(f64, f64)> = p.iter().cloned().zip(adj.iter().cloned()).collect();
                pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                for w in pairs.windows(2) {
                    prop_assert!(w[0].1 <= w[1].1 + 1e-15);
                }
                for (pi, qi) in pairs {
                    prop_assert!(qi >= pi && qi <= 1.0);
                }
            }
        }
    }
}
