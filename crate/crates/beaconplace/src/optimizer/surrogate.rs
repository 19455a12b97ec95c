//! Polynomial surrogate over the distribution descriptor (the sorted vector
//! of pairwise beacon distances). The surrogate only ranks candidates for
//! pruning; it never supplies a reported error.

use crate::geometry::Point;
use crate::numeric::solve_dense;

use super::memo::MemoRecord;

/// Ridge-regularized quadratic features over the descriptor.
#[derive(Debug, Clone)]
pub struct Surrogate {
    coefficients: Vec<f64>,
    descriptor_len: usize,
    pub trained_on: usize,
}

/// Sorted pairwise distances of a canonical distribution. Empty for a single
/// beacon, which is why the surrogate needs n >= 2.
pub fn descriptor(canonical: &[Point]) -> Vec<f64> {
    let mut d = Vec::with_capacity(canonical.len() * (canonical.len() - 1) / 2);
    for i in 0..canonical.len() {
        for j in i + 1..canonical.len() {
            d.push(canonical[i].distance(&canonical[j]));
        }
    }
    d.sort_by(f64::total_cmp);
    d
}

fn features(desc: &[f64]) -> Vec<f64> {
    let mut f = Vec::with_capacity(1 + 2 * desc.len());
    f.push(1.0);
    f.extend_from_slice(desc);
    f.extend(desc.iter().map(|d| d * d));
    f
}

impl Surrogate {
    /// Fit on memorized records; `None` when the descriptor is empty or the
    /// normal equations are singular.
    pub fn train(records: &[MemoRecord]) -> Option<Surrogate> {
        let first = records.first()?;
        if first.canonical.len() < 2 {
            return None;
        }
        let descriptor_len = first.canonical.len() * (first.canonical.len() - 1) / 2;
        let dim = 1 + 2 * descriptor_len;
        let mut ata = vec![vec![0.0; dim]; dim];
        let mut atb = vec![0.0; dim];
        let mut used = 0usize;
        for r in records {
            if r.canonical.len() != first.canonical.len() || !r.error.is_finite() {
                continue;
            }
            let f = features(&descriptor(&r.canonical));
            for i in 0..dim {
                atb[i] += f[i] * r.error;
                for j in 0..dim {
                    ata[i][j] += f[i] * f[j];
                }
            }
            used += 1;
        }
        if used < dim {
            return None;
        }
        let ridge = 1e-6 * (ata.iter().enumerate().map(|(i, row)| row[i]).sum::<f64>() / dim as f64);
        for (i, row) in ata.iter_mut().enumerate() {
            row[i] += ridge.max(1e-12);
        }
        let coefficients = solve_dense(ata, atb)?;
        Some(Surrogate { coefficients, descriptor_len, trained_on: used })
    }

    /// Predicted error for a candidate descriptor (ranking only).
    pub fn predict(&self, desc: &[f64]) -> f64 {
        debug_assert_eq!(desc.len(), self.descriptor_len);
        features(desc)
            .iter()
            .zip(&self.coefficients)
            .map(|(f, c)| f * c)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::Placement;
    use crate::optimizer::memo::Verdict;

    #[test]
    fn descriptor_is_sorted_and_translation_invariant() {
        let pts = vec![Point::new(0.0, 0.0), Point::new(3.0, 0.0), Point::new(0.0, 4.0)];
        let moved: Vec<Point> = pts.iter().map(|&p| p + Point::new(2.0, -1.0)).collect();
        let a = descriptor(&super::super::memo::canonical_form(&pts));
        let b = descriptor(&super::super::memo::canonical_form(&moved));
        assert_eq!(a, b);
        assert_eq!(a, vec![3.0, 4.0, 5.0]);
    }

    #[test]
    fn surrogate_learns_descriptor_linear_error() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        // error = 10 - min distance is representable in the feature basis
        let records: Vec<MemoRecord> = (0..300)
            .map(|_| {
                let pts = vec![
                    Point::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)),
                    Point::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)),
                ];
                let d = pts[0].distance(&pts[1]);
                MemoRecord::new(Placement::new(pts), 10.0 - d, Verdict::Good, 0)
            })
            .collect();
        let s = Surrogate::train(&records).unwrap();
        // ranking: larger separation must predict smaller error
        let near = descriptor(&[Point::new(0.0, 0.0), Point::new(1.0, 0.0)]);
        let far = descriptor(&[Point::new(0.0, 0.0), Point::new(9.0, 0.0)]);
        assert!(s.predict(&far) < s.predict(&near));
    }

    #[test]
    fn surrogate_refuses_single_beacon_records() {
        let records = vec![MemoRecord::new(
            Placement::new(vec![Point::new(1.0, 1.0)]),
            0.5,
            Verdict::Good,
            0,
        )];
        assert!(Surrogate::train(&records).is_none());
    }
}
