use serde::{Deserialize, Serialize};

/// Pairs whose observed order is below this are treated as plateaued.
pub const PLATEAU_SLOPE: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSlope {
    pub tau_coarse: f64,
    pub tau_fine: f64,
    /// `ln(e_coarse / e_fine) / ln(tau_coarse / tau_fine)`; `None` if an error is not positive.
    pub slope: Option<f64>,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeSummary {
    pub pairs: Vec<PairSlope>,
    /// Least-squares slope of `ln e` against `ln tau` over every positive point.
    pub overall: Option<f64>,
    /// Least-squares slope over the longest run of points untouched by a flagged pair, and the
    /// tau range it covers.
    pub clean: Option<f64>,
    pub clean_range: Option<(f64, f64)>,
}

fn lsq_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        points.iter().filter(|(t, e)| *t > 0.0 && *e > 0.0 && e.is_finite()).map(|(t, e)| (t.ln(), e.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Observed convergence orders from `(tau, error)` points, in any order.
pub fn convergence_slopes(points: &[(f64, f64)]) -> SlopeSummary {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let pairs: Vec<PairSlope> = pts
        .windows(2)
        .map(|w| {
            let (tc, ec) = w[0];
            let (tf, ef) = w[1];
            let slope = (ec > 0.0 && ef > 0.0 && ec.is_finite() && ef.is_finite() && tc != tf)
                .then(|| (ec / ef).ln() / (tc / tf).ln());
            let flagged = slope.is_none_or(|s| s < PLATEAU_SLOPE);
            PairSlope { tau_coarse: tc, tau_fine: tf, slope, flagged }
        })
        .collect();

    // A point is clean if no pair touching it is flagged; fit the longest run of clean points.
    let clean_pt: Vec<bool> =
        (0..pts.len()).map(|i| !(i > 0 && pairs[i - 1].flagged) && !(i < pairs.len() && pairs[i].flagged)).collect();
    let mut best: Option<(usize, usize)> = None;
    let mut start = 0;
    for i in 0..=pts.len() {
        if i == pts.len() || !clean_pt[i] {
            if i >= start + 2 && best.is_none_or(|(a, b)| i - start > b - a + 1) {
                best = Some((start, i - 1));
            }
            start = i + 1;
        }
    }
    let (clean, clean_range) = match best {
        Some((a, b)) => (lsq_slope(&pts[a..=b]), Some((pts[a].0, pts[b].0))),
        None => (None, None),
    };
    SlopeSummary { overall: lsq_slope(&pts), pairs, clean, clean_range }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_pair_has_order_two() {
        let s = convergence_slopes(&[(0.032, 1.02e-2), (0.016, 2.55e-3)]);
        assert!((s.pairs[0].slope.unwrap() - 2.0).abs() < 1e-12);
        assert!((s.overall.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn quartic_data() {
        let pts: Vec<(f64, f64)> = (0..6)
            .map(|k| {
                let t = 0.032 / 2f64.powi(k);
                (t, 3.0 * t.powi(4))
            })
            .collect();
        let s = convergence_slopes(&pts);
        assert!((s.overall.unwrap() - 4.0).abs() < 1e-10);
        assert!(s.pairs.iter().all(|p| !p.flagged && (p.slope.unwrap() - 4.0).abs() < 1e-10));
        assert_eq!(s.clean_range, Some((0.032, 0.001)));
    }

    #[test]
    fn plateau_is_flagged() {
        let s = convergence_slopes(&[(0.004, 1.95e-7), (0.002, 1.95e-7)]);
        assert_eq!(s.pairs[0].slope, Some(0.0));
        assert!(s.pairs[0].flagged);
        assert_eq!(s.clean, None);
    }

    #[test]
    fn zero_error_pair_is_skipped() {
        let s = convergence_slopes(&[(0.2, 1e-2), (0.1, 0.0), (0.05, 1e-4)]);
        assert!(s.pairs.iter().all(|p| p.slope.is_none() && p.flagged));
        assert!(s.overall.is_some());
    }

    #[test]
    fn clean_range_skips_large_tau_plateau() {
        let s = convergence_slopes(&[(0.016, 1.0), (0.008, 0.9), (0.004, 1e-2), (0.002, 6.25e-4), (0.001, 3.9e-5)]);
        assert!(s.pairs[0].flagged);
        assert_eq!(s.clean_range, Some((0.004, 0.001)));
        assert!((s.clean.unwrap() - 4.0).abs() < 0.01);
        let s2 = convergence_slopes(&[(0.004, 1e-2), (0.002, 6.25e-4), (0.001, 3.90625e-5)]);
        assert!((s2.clean.unwrap() - 4.0).abs() < 1e-9);
    }
}
