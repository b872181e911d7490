use super::{MetricsError, Result};
use crate::datastore::PairedSets;

#[derive(Debug, Clone, PartialEq)]
pub struct CosineSummary {
    pub mean: f64,
    /// Population standard deviation over pairs.
    pub std: f64,
    pub per_pair: Vec<f64>,
}

fn norm(v: &[f32]) -> f64 {
    v.iter()
        .map(|&x| f64::from(x) * f64::from(x))
        .sum::<f64>()
        .sqrt()
}

/// Sample-wise cosine similarity between each candidate row and its paired reference row.
pub fn paired_cosine(p: &PairedSets) -> Result<CosineSummary> {
    let cand = p.candidate();
    let reference = p.reference();
    let mut per_pair = Vec::with_capacity(cand.rows());
    for (i, &r) in p.pairing().iter().enumerate() {
        let c = cand.row(i);
        let q = reference.row(r);
        let nc = norm(c);
        if nc == 0.0 {
            return Err(MetricsError::ZeroNorm {
                which: "candidate",
                index: i,
            });
        }
        let nq = norm(q);
        if nq == 0.0 {
            return Err(MetricsError::ZeroNorm {
                which: "reference",
                index: r,
            });
        }
        let dot: f64 = c
            .iter()
            .zip(q)
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum();
        per_pair.push((dot / (nc * nq)).clamp(-1.0, 1.0));
    }
    let (mean, std) = mean_std(&per_pair);
    Ok(CosineSummary {
        mean,
        std,
        per_pair,
    })
}

/// Mean and population standard deviation. Deviations are taken from the first value, so a
/// constant input yields exactly that value and exactly zero spread.
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let pivot = values[0];
    let shift = values.iter().map(|v| v - pivot).sum::<f64>() / n;
    let mean = pivot + shift;
    let var = values
        .iter()
        .map(|v| (v - pivot - shift).powi(2))
        .sum::<f64>()
        / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::{EmbeddingSet, PairedSets};
    use proptest::prelude::*;

    fn paired(reference: &[f32], candidate: &[f32], dim: usize) -> PairedSets {
        let r =
            EmbeddingSet::new(reference.len() / dim, dim, reference.to_vec(), "e", "r").unwrap();
        let c =
            EmbeddingSet::new(candidate.len() / dim, dim, candidate.to_vec(), "e", "c").unwrap();
        let pairing = (0..c.rows()).collect();
        PairedSets::new(r, c, pairing).unwrap()
    }

    #[test]
    fn identical_sets() {
        let v = [1.0, 2.0, -3.0, 0.5, 0.25, 4.0];
        let s = paired_cosine(&paired(&v, &v, 3)).unwrap();
        assert!((s.mean - 1.0).abs() < 1e-12);
        assert!(s.std < 1e-12);
    }

    #[test]
    fn orthogonal_pairs() {
        let s = paired_cosine(&paired(&[1.0, 0.0, 0.0, 2.0], &[0.0, 3.0, -1.0, 0.0], 2)).unwrap();
        assert_eq!(s.mean, 0.0);
    }

    #[test]
    fn known_angles() {
        let ang = |deg: f64| {
            let r = deg.to_radians();
            [r.cos() as f32, r.sin() as f32]
        };
        let reference = [1.0f32, 0.0, 1.0, 0.0, 1.0, 0.0];
        let candidate: Vec<f32> = [0.0, 60.0, 90.0].iter().flat_map(|&d| ang(d)).collect();
        let s = paired_cosine(&paired(&reference, &candidate, 2)).unwrap();
        let expected = (1.0 + 0.5 + 0.0) / 3.0;
        assert!((s.mean - expected).abs() < 1e-6, "{}", s.mean);
    }

    #[test]
    fn zero_norm_reports_index() {
        match paired_cosine(&paired(&[1.0, 1.0, 1.0, 1.0], &[1.0, 0.0, 0.0, 0.0], 2)) {
            Err(MetricsError::ZeroNorm { which, index }) => {
                assert_eq!((which, index), ("candidate", 1))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn constant_values_have_zero_spread() {
        let (m, s) = mean_std(&[0.1; 50]);
        assert_eq!(m, 0.1);
        assert_eq!(s, 0.0);
    }

    proptest! {
        #[test]
        fn invariant_to_positive_row_scaling(
            vals in proptest::collection::vec(-10.0f32..10.0, 24),
            scales in proptest::collection::vec(0.1f32..10.0, 4),
        ) {
            prop_assume!(vals.chunks(3).all(|r| r.iter().map(|v| v * v).sum::<f32>() > 1e-2));
            let reference = &vals[..12];
            let candidate = &vals[12..];
            let base = paired_cosine(&paired(reference, candidate, 3)).unwrap();
            let scaled: Vec<f32> = candidate
                .chunks(3)
                .zip(&scales)
                .flat_map(|(r, s)| r.iter().map(move |v| v * s))
                .collect();
            let other = paired_cosine(&paired(reference, &scaled, 3)).unwrap();
            for (a, b) in base.per_pair.iter().zip(&other.per_pair) {
                prop_assert!((a - b).abs() < 1e-5);
            }
        }
    }
}
