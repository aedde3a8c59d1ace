//! Summary statistics used by the presets and their checks.

/// Fidelity level that delimits the robust region.
pub const ROBUST_LEVEL: f64 = 0.95;

/// Smallest `epsilon >= 0` at which the fidelity drops below `level`,
/// linearly interpolated between grid points. `None` if it never does.
///
/// `eps` must be sorted ascending; only the non-negative part is scanned.
pub fn robust_threshold(eps: &[f64], fidelity: &[f64], level: f64) -> Option<f64> {
    let mut prev: Option<(f64, f64)> = None;
    for (&e, &f) in eps.iter().zip(fidelity) {
        if e < 0.0 {
            continue;
        }
        if f < level {
            return Some(match prev {
                Some((e0, f0)) => e0 + (f0 - level) / (f0 - f) * (e - e0),
                None => e,
            });
        }
        prev = Some((e, f));
    }
    None
}

/// Fraction of grid points with fidelity at least `level`.
pub fn robust_area(fidelity: &[f64], level: f64) -> f64 {
    if fidelity.is_empty() {
        return 0.0;
    }
    fidelity.iter().filter(|&&f| f >= level).count() as f64 / fidelity.len() as f64
}

/// Index of the largest value (first one on ties).
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, v) in values.iter().enumerate() {
        if best.is_none_or(|b| *v > values[b]) {
            best = Some(k);
        }
    }
    best
}

/// True when the maximum sits strictly inside the range.
pub fn has_interior_maximum(values: &[f64]) -> bool {
    matches!(argmax(values), Some(k) if k > 0 && k + 1 < values.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_interpolates() {
        let eps = [-0.1, 0.0, 0.1, 0.2];
        let f = [0.5, 1.0, 0.97, 0.93];
        let t = robust_threshold(&eps, &f, 0.95).unwrap();
        assert!((t - 0.15).abs() < 1e-12);
        assert_eq!(robust_threshold(&eps, &[1.0; 4], 0.95), None);
        assert_eq!(robust_threshold(&[0.0, 0.1], &[0.9, 0.8], 0.95), Some(0.0));
    }

    #[test]
    fn area_and_maximum() {
        assert_eq!(robust_area(&[0.96, 0.95, 0.2, 0.1], 0.95), 0.5);
        assert_eq!(robust_area(&[], 0.95), 0.0);
        assert!(has_interior_maximum(&[0.1, 0.5, 0.3]));
        assert!(!has_interior_maximum(&[0.5, 0.4, 0.3]));
        assert!(!has_interior_maximum(&[0.1, 0.4, 0.5]));
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), Some(1));
    }
}
