//! Affine binding fits between an internal cell series and an observed
//! object-property series: `property = scale * cell + offset` over plain
//! integers, with the scale drawn from a small fixed set.

use std::collections::HashMap;

use super::SymregError;

const SCALES: [i32; 4] = [1, -1, 2, -2];

/// Result of fitting `ys ~ scale * xs + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AffineFit {
    pub scale: i32,
    pub offset: i32,
    pub exact: bool,
    pub mismatches: usize,
}

/// Fit the best (scale, offset) pair over the scale set; the offset is the
/// value matching the most pairs for that scale. Returns `None` when no fit
/// reaches `min_match` fraction of the pairs.
///
/// Errors with `DegenerateSeries` when `xs` is constant: binding a property
/// to a constant cell is disallowed.
pub fn fit_affine(xs: &[u8], ys: &[i32], min_match: f64) -> Result<Option<AffineFit>, SymregError> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(SymregError::BadSeries(format!(
            "need two equal-length series, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.iter().all(|&x| x == xs[0]) {
        return Err(SymregError::DegenerateSeries);
    }

    let mut best: Option<AffineFit> = None;
    for scale in SCALES {
        let mut residuals: HashMap<i32, usize> = HashMap::new();
        for (&x, &y) in xs.iter().zip(ys) {
            *residuals.entry(y - scale * x as i32).or_insert(0) += 1;
        }
        // Deterministic mode: highest count, then smallest offset.
        let (&offset, &matches) = residuals
            .iter()
            .max_by_key(|(&off, &cnt)| (cnt, std::cmp::Reverse(off)))
            .expect("non-empty series");
        let fit = AffineFit {
            scale,
            offset,
            exact: matches == xs.len(),
            mismatches: xs.len() - matches,
        };
        let better = match best {
            None => true,
            Some(b) => fit.mismatches < b.mismatches,
        };
        if better {
            best = Some(fit);
        }
    }

    let best = best.expect("scale set is non-empty");
    let matched = (xs.len() - best.mismatches) as f64 / xs.len() as f64;
    if matched >= min_match {
        Ok(Some(best))
    } else {
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_series() {
        let xs: Vec<u8> = (10..30).collect();
        let ys: Vec<i32> = xs.iter().map(|&x| x as i32).collect();
        let fit = fit_affine(&xs, &ys, 0.98).unwrap().unwrap();
        assert_eq!((fit.scale, fit.offset), (1, 0));
        assert!(fit.exact);
    }

    #[test]
    fn offset_minus_14() {
        // Mirrors the ball vertical binding: screen y = cell - 14.
        let xs: Vec<u8> = vec![22, 24, 26, 36, 158, 160];
        let ys: Vec<i32> = xs.iter().map(|&x| x as i32 - 14).collect();
        let fit = fit_affine(&xs, &ys, 1.0).unwrap().unwrap();
        assert_eq!((fit.scale, fit.offset), (1, -14));
        assert!(fit.exact);
        assert_eq!(fit.mismatches, 0);
    }

    #[test]
    fn constant_input_is_degenerate() {
        let xs = vec![255u8; 10];
        let ys: Vec<i32> = (0..10).collect();
        assert!(matches!(
            fit_affine(&xs, &ys, 0.98),
            Err(SymregError::DegenerateSeries)
        ));
    }

    #[test]
    fn no_fit_below_floor() {
        let xs: Vec<u8> = (0..40).collect();
        // Scrambled: no affine map matches even a fifth of the pairs.
        let ys: Vec<i32> = (0..40).map(|i| ((i * 83) % 97) as i32).collect();
        assert!(fit_affine(&xs, &ys, 0.98).unwrap().is_none());
    }

    #[test]
    fn negative_scale() {
        let xs: Vec<u8> = (50..80).collect();
        let ys: Vec<i32> = xs.iter().map(|&x| 200 - 2 * x as i32).collect();
        let fit = fit_affine(&xs, &ys, 1.0).unwrap().unwrap();
        assert_eq!((fit.scale, fit.offset), (-2, 200));
    }

    #[test]
    fn majority_offset_with_noise() {
        let xs: Vec<u8> = (10..60).collect();
        let mut ys: Vec<i32> = xs.iter().map(|&x| x as i32 + 5).collect();
        ys[0] = 999;
        let fit = fit_affine(&xs, &ys, 0.9).unwrap().unwrap();
        assert_eq!((fit.scale, fit.offset), (1, 5));
        assert!(!fit.exact);
        assert_eq!(fit.mismatches, 1);
    }
}
