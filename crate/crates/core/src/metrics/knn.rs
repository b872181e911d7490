use super::{same_dim, MetricsError, Result};
use crate::datastore::EmbeddingSet;
use crate::par;

/// Rows per tile side in the blocked pairwise-distance loops.
pub const BLOCK_ROWS: usize = 1024;

/// Squared Euclidean distance, accumulated in f64 in coordinate order.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

/// Distance from every row to its k-th nearest other row.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnRadii {
    pub k: usize,
    pub radii: Vec<f64>,
}

/// Keeps the `k` smallest values seen so far, ascending.
struct SmallestK {
    k: usize,
    vals: Vec<f64>,
}

impl SmallestK {
    fn new(k: usize) -> Self {
        Self {
            k,
            vals: Vec::with_capacity(k + 1),
        }
    }

    #[inline]
    fn push(&mut self, v: f64) {
        if self.vals.len() == self.k {
            if v >= self.vals[self.k - 1] {
                return;
            }
            self.vals.pop();
        }
        let pos = self.vals.partition_point(|&x| x <= v);
        self.vals.insert(pos, v);
    }

    fn kth(&self) -> f64 {
        self.vals[self.k - 1]
    }
}

fn radii_f64(data: &[f64], n: usize, dim: usize, k: usize) -> Vec<f64> {
    let blocks = par::map_indexed(n.div_ceil(BLOCK_ROWS), |bi| {
        let rows = bi * BLOCK_ROWS..((bi + 1) * BLOCK_ROWS).min(n);
        let mut heaps: Vec<SmallestK> = rows.clone().map(|_| SmallestK::new(k)).collect();
        for cb in 0..n.div_ceil(BLOCK_ROWS) {
            let cols = cb * BLOCK_ROWS..((cb + 1) * BLOCK_ROWS).min(n);
            for (h, i) in heaps.iter_mut().zip(rows.clone()) {
                let a = &data[i * dim..(i + 1) * dim];
                for j in cols.clone() {
                    if j != i {
                        h.push(squared_distance(a, &data[j * dim..(j + 1) * dim]));
                    }
                }
            }
        }
        heaps.iter().map(|h| h.kth().sqrt()).collect::<Vec<_>>()
    });
    blocks.into_iter().flatten().collect()
}

/// Exact k-th nearest neighbour distance for every row (self excluded by index).
pub fn knn_radii(set: &EmbeddingSet, k: usize) -> Result<KnnRadii> {
    if k == 0 {
        return Err(MetricsError::ZeroK);
    }
    if k >= set.rows() {
        return Err(MetricsError::KTooLarge { k, n: set.rows() });
    }
    let data = set.to_f64();
    Ok(KnnRadii {
        k,
        radii: radii_f64(&data, set.rows(), set.dim(), k),
    })
}

/// Fraction of `query` rows falling inside at least one ball of the `manifold` rows.
fn coverage(query: &[f64], manifold: &[f64], radii: &[f64], dim: usize) -> usize {
    let nq = query.len() / dim;
    let nm = radii.len();
    let hits = par::map_indexed(nq.div_ceil(BLOCK_ROWS), |bi| {
        let rows = bi * BLOCK_ROWS..((bi + 1) * BLOCK_ROWS).min(nq);
        let mut inside = vec![false; rows.len()];
        for cb in 0..nm.div_ceil(BLOCK_ROWS) {
            let cols = cb * BLOCK_ROWS..((cb + 1) * BLOCK_ROWS).min(nm);
            for (flag, i) in inside.iter_mut().zip(rows.clone()) {
                if *flag {
                    continue;
                }
                let q = &query[i * dim..(i + 1) * dim];
                *flag = cols.clone().any(|j| {
                    squared_distance(q, &manifold[j * dim..(j + 1) * dim]).sqrt() <= radii[j]
                });
            }
        }
        inside.iter().filter(|&&f| f).count()
    });
    hits.into_iter().sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
}

/// Improved precision (generated rows inside the real manifold) and recall (real rows inside
/// the generated manifold), with manifolds built from k-NN balls.
pub fn precision_recall(
    real: &EmbeddingSet,
    gen: &EmbeddingSet,
    k: usize,
) -> Result<PrecisionRecall> {
    same_dim(real, gen)?;
    if k == 0 {
        return Err(MetricsError::ZeroK);
    }
    let n_min = real.rows().min(gen.rows());
    if k >= n_min {
        return Err(MetricsError::KTooLarge { k, n: n_min });
    }
    let dim = real.dim();
    let r = real.to_f64();
    let g = gen.to_f64();
    let real_radii = radii_f64(&r, real.rows(), dim, k);
    let gen_radii = radii_f64(&g, gen.rows(), dim, k);
    let precision = coverage(&g, &r, &real_radii, dim) as f64 / gen.rows() as f64;
    let recall = coverage(&r, &g, &gen_radii, dim) as f64 / real.rows() as f64;
    Ok(PrecisionRecall { precision, recall })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn set(rows: &[&[f32]]) -> EmbeddingSet {
        let dim = rows[0].len();
        EmbeddingSet::new(rows.len(), dim, rows.concat(), "e", "t").unwrap()
    }

    fn random_set(n: usize, dim: usize, seed: u64, offset: f32) -> EmbeddingSet {
        let mut r = rng::seeded(seed);
        let data = (0..n * dim).map(|_| r.random::<f32>() + offset).collect();
        EmbeddingSet::new(n, dim, data, "e", "t").unwrap()
    }

    fn brute_radii(s: &EmbeddingSet, k: usize) -> Vec<f64> {
        let x = s.to_f64();
        let d = s.dim();
        (0..s.rows())
            .map(|i| {
                let mut all: Vec<f64> = (0..s.rows())
                    .filter(|&j| j != i)
                    .map(|j| {
                        (0..d)
                            .map(|c| (x[i * d + c] - x[j * d + c]).powi(2))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .collect();
                all.sort_by(f64::total_cmp);
                all[k - 1]
            })
            .collect()
    }

    #[test]
    fn collinear_points() {
        let s = set(&[&[0.0], &[1.0], &[3.0]]);
        assert_eq!(knn_radii(&s, 1).unwrap().radii, vec![1.0, 1.0, 2.0]);
    }

    #[test]
    fn identical_rows_have_zero_radius() {
        let row: &[f32] = &[2.0, 1.0];
        let s = set(&[row; 4]);
        assert_eq!(knn_radii(&s, 1).unwrap().radii, vec![0.0; 4]);
    }

    #[test]
    fn k_bounds() {
        let s = set(&[&[0.0], &[1.0]]);
        assert!(matches!(
            knn_radii(&s, 2),
            Err(MetricsError::KTooLarge { k: 2, n: 2 })
        ));
        assert!(matches!(knn_radii(&s, 0), Err(MetricsError::ZeroK)));
    }

    #[test]
    fn radii_match_brute_force() {
        let s = random_set(200, 2, 1, 0.0);
        assert_eq!(knn_radii(&s, 3).unwrap().radii, brute_radii(&s, 3));
    }

    #[test]
    fn same_sets_give_full_scores() {
        let s = random_set(50, 3, 2, 0.0);
        let pr = precision_recall(&s, &s, 3).unwrap();
        assert_eq!((pr.precision, pr.recall), (1.0, 1.0));
    }

    #[test]
    fn separated_clusters_give_zero() {
        let a = random_set(40, 2, 3, 0.0);
        let b = random_set(40, 2, 4, 100.0);
        let pr = precision_recall(&a, &b, 3).unwrap();
        assert_eq!((pr.precision, pr.recall), (0.0, 0.0));
    }

    #[test]
    fn larger_k_never_lowers_scores() {
        let a = random_set(120, 3, 5, 0.0);
        let b = random_set(100, 3, 6, 0.2);
        let mut prev = PrecisionRecall {
            precision: 0.0,
            recall: 0.0,
        };
        for k in 1..8 {
            let pr = precision_recall(&a, &b, k).unwrap();
            assert!(pr.precision >= prev.precision && pr.recall >= prev.recall);
            prev = pr;
        }
    }
}
