use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{MetricsError, Result};
use crate::datastore::EmbeddingSet;
use crate::par;

/// Negative eigenvalues smaller in magnitude than this fraction of the largest one are treated
/// as round-off and clamped silently; anything larger is reported.
pub const EIGEN_CLAMP_TOL: f64 = 1e-6;

const SYMMETRY_TOL: f64 = 1e-10;
const FIT_BLOCK: usize = 1024;

/// Mean and unbiased covariance of a feature distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub n: usize,
}

impl GaussianSummary {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, n: usize) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(MetricsError::DimMismatch(mean.len(), cov.nrows()));
        }
        if n < 2 {
            return Err(MetricsError::TooFewRows { need: 2, got: n });
        }
        check_symmetric(&cov)?;
        Ok(Self { mean, cov, n })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let mut max_dev = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            max_dev = max_dev.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if !max_dev.is_finite() || max_dev > SYMMETRY_TOL * scale {
        return Err(MetricsError::Asymmetric { max_dev });
    }
    Ok(())
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Column means and covariance (divisor `n - 1`) of `set`.
pub fn fit_gaussian(set: &EmbeddingSet) -> Result<GaussianSummary> {
    let n = set.rows();
    let d = set.dim();
    if n < 2 {
        return Err(MetricsError::TooFewRows { need: 2, got: n });
    }
    let data = set.data();

    let sums = par::map_chunks(data, FIT_BLOCK * d, |_, block| {
        let mut s = vec![0.0f64; d];
        for row in block.chunks_exact(d) {
            for (acc, &v) in s.iter_mut().zip(row) {
                *acc += f64::from(v);
            }
        }
        s
    });
    let mut mean = vec![0.0f64; d];
    for s in &sums {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    // Centered scatter per block via a BᵀB product, combined in block order.
    let scatters = par::map_chunks(data, FIT_BLOCK * d, |_, block| {
        let rows = block.len() / d;
        let centered: Vec<f64> = block
            .chunks_exact(d)
            .flat_map(|row| row.iter().zip(&mean).map(|(&v, m)| f64::from(v) - m))
            .collect();
        let mut s = vec![0.0f64; d * d];
        // SAFETY: slices are sized rows*d and d*d; strides describe row-major layouts.
        unsafe {
            matrixmultiply::dgemm(
                d,
                rows,
                d,
                1.0,
                centered.as_ptr(),
                1,
                d as isize,
                centered.as_ptr(),
                d as isize,
                1,
                0.0,
                s.as_mut_ptr(),
                d as isize,
                1,
            );
        }
        s
    });
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for s in &scatters {
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += s[i * d + j];
            }
        }
    }
    cov /= (n - 1) as f64;
    symmetrize(&mut cov);
    if cov.iter().any(|v| !v.is_finite()) || mean.iter().any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite("covariance".into()));
    }
    Ok(GaussianSummary {
        mean: DVector::from_vec(mean),
        cov,
        n,
    })
}

/// Principal square root of a symmetric PSD matrix, with clamping diagnostics.
#[derive(Debug, Clone)]
pub struct PsdSqrt {
    pub root: DMatrix<f64>,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// Set when an eigenvalue below `-EIGEN_CLAMP_TOL * max_eigenvalue` had to be clamped.
    pub warning: Option<String>,
}

fn eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let mut sym = m.clone();
    symmetrize(&mut sym);
    SymmetricEigen::try_new(sym, f64::EPSILON, 10_000).ok_or(MetricsError::EigenFailure)
}

fn clamp_report(values: &DVector<f64>, what: &str) -> (f64, f64, Option<String>) {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let warning = (min < -EIGEN_CLAMP_TOL * max.abs().max(f64::MIN_POSITIVE))
        .then(|| format!("{what}: clamped eigenvalue {min:e} (largest {max:e}) to zero"));
    (min, max, warning)
}

/// Square root of a symmetric positive semi-definite matrix by eigendecomposition, with
/// negative eigenvalues clamped to zero.
pub fn sqrtm_psd(m: &DMatrix<f64>) -> Result<PsdSqrt> {
    if m.nrows() != m.ncols() {
        return Err(MetricsError::DimMismatch(m.nrows(), m.ncols()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite("matrix entry".into()));
    }
    check_symmetric(m)?;
    let eig = eigen(m)?;
    let (min_eigenvalue, max_eigenvalue, warning) = clamp_report(&eig.eigenvalues, "sqrtm");
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let mut root = v * DMatrix::from_diagonal(&roots) * v.transpose();
    symmetrize(&mut root);
    Ok(PsdSqrt {
        root,
        min_eigenvalue,
        max_eigenvalue,
        warning,
    })
}

#[derive(Debug, Clone)]
pub struct FrechetOutcome {
    pub value: f64,
    pub warnings: Vec<String>,
}

/// Fréchet distance between two Gaussians, using the symmetric form
/// `tr sqrt(Σa^½ Σb Σa^½)` for the cross term.
pub fn frechet_distance_detailed(
    a: &GaussianSummary,
    b: &GaussianSummary,
) -> Result<FrechetOutcome> {
    if a.dim() != b.dim() {
        return Err(MetricsError::DimMismatch(a.dim(), b.dim()));
    }
    let mut warnings = Vec::new();
    let root_a = sqrtm_psd(&a.cov)?;
    warnings.extend(root_a.warning);
    let mut inner = &root_a.root * &b.cov * &root_a.root;
    symmetrize(&mut inner);
    let eig = eigen(&inner)?;
    let (_, _, warn) = clamp_report(&eig.eigenvalues, "cross term");
    warnings.extend(warn);
    let cross: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();

    let diff = &a.mean - &b.mean;
    let value = diff.dot(&diff) + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    if !value.is_finite() {
        return Err(MetricsError::NonFinite("Fréchet distance".into()));
    }
    let value = if value < 0.0 {
        if value < -1e-6 {
            return Err(MetricsError::NegativeDistance(value));
        }
        0.0
    } else {
        value
    };
    Ok(FrechetOutcome { value, warnings })
}

pub fn frechet_distance(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64> {
    frechet_distance_detailed(a, b).map(|o| o.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, Normal};

    fn gaussian(mean: &[f64], var: &[f64]) -> GaussianSummary {
        GaussianSummary::new(
            DVector::from_column_slice(mean),
            DMatrix::from_diagonal(&DVector::from_column_slice(var)),
            100,
        )
        .unwrap()
    }

    fn random_matrix(d: usize, seed: u64) -> DMatrix<f64> {
        let mut r = rng::seeded(seed);
        let n = Normal::new(0.0, 1.0).unwrap();
        DMatrix::from_fn(d, d, |_, _| n.sample(&mut r))
    }

    #[test]
    fn two_point_fit() {
        let set = EmbeddingSet::new(2, 2, vec![0., 0., 2., 0.], "e", "t").unwrap();
        let g = fit_gaussian(&set).unwrap();
        assert_eq!(g.mean.as_slice(), &[1.0, 0.0]);
        assert_eq!(g.cov, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn repeated_row_has_zero_cov() {
        let set = EmbeddingSet::new(5, 3, [1.5f32, -2.0, 7.0].repeat(5), "e", "t").unwrap();
        let g = fit_gaussian(&set).unwrap();
        assert!(g.cov.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fit_needs_two_rows() {
        let set = EmbeddingSet::new(1, 3, vec![0.0; 3], "e", "t").unwrap();
        assert!(matches!(
            fit_gaussian(&set),
            Err(MetricsError::TooFewRows { .. })
        ));
    }

    #[test]
    fn known_diagonal_gaussian() {
        let sd = [1.0, 2.0, 0.5, 3.0];
        let mut r = rng::seeded(11);
        let n = 10_000;
        let mut data = Vec::with_capacity(n * 4);
        for _ in 0..n {
            for &s in &sd {
                data.push(Normal::new(0.0, s).unwrap().sample(&mut r) as f32);
            }
        }
        let set = EmbeddingSet::new(n, 4, data, "e", "t").unwrap();
        let g = fit_gaussian(&set).unwrap();
        for i in 0..4 {
            let truth = sd[i] * sd[i];
            assert!((g.cov[(i, i)] - truth).abs() <= 0.05 * truth, "var {i}");
            for j in 0..4 {
                if i != j {
                    assert!(g.cov[(i, j)].abs() <= 0.05 * (sd[i] * sd[j]));
                }
            }
        }
    }

    #[test]
    fn fit_is_thread_count_independent() {
        let mut r = rng::seeded(3);
        let n = Normal::new(0.0, 1.0).unwrap();
        let data: Vec<f32> = (0..5000 * 6).map(|_| n.sample(&mut r) as f32).collect();
        let set = EmbeddingSet::new(5000, 6, data, "e", "t").unwrap();
        let a = par::with_threads(Some(1), || fit_gaussian(&set).unwrap());
        let b = par::with_threads(Some(3), || fit_gaussian(&set).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn sqrtm_simple_cases() {
        let id = DMatrix::<f64>::identity(4, 4);
        assert!((sqrtm_psd(&id).unwrap().root - &id).amax() < 1e-12);
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(&[4.0, 9.0]));
        let r = sqrtm_psd(&d).unwrap().root;
        assert!(
            (r - DMatrix::from_diagonal(&DVector::from_column_slice(&[2.0, 3.0]))).amax() < 1e-12
        );
    }

    #[test]
    fn sqrtm_random_psd_residual() {
        let b = random_matrix(16, 5);
        let a = b.transpose() * &b;
        let r = sqrtm_psd(&a).unwrap();
        let resid = (&r.root * &r.root - &a).norm() / a.norm();
        assert!(resid <= 1e-8, "residual {resid}");
        assert!(r.warning.is_none());
        // sqrtm(R²) = R for a constructed PSD R.
        let root = r.root.clone();
        let again = sqrtm_psd(&(&root * &root)).unwrap().root;
        assert!((again - root).norm() / r.root.norm() < 1e-8);
    }

    #[test]
    fn sqrtm_rejects_asymmetry_and_flags_negative_eigenvalues() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            sqrtm_psd(&m),
            Err(MetricsError::Asymmetric { .. })
        ));
        let m = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, -0.1]));
        let r = sqrtm_psd(&m).unwrap();
        assert!(r.warning.is_some());
        assert_eq!(r.root[(1, 1)], 0.0);
        let m = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, -1e-12]));
        assert!(sqrtm_psd(&m).unwrap().warning.is_none());
    }

    #[test]
    fn fd_one_dimensional_closed_form() {
        // (0, 1) vs (1, 4): 1 + 1 + 4 - 2*sqrt(1*4) = 2
        let a = gaussian(&[0.0], &[1.0]);
        let b = gaussian(&[1.0], &[4.0]);
        let closed = (0.0f64 - 1.0).powi(2) + 1.0 + 4.0 - 2.0 * (1.0f64 * 4.0).sqrt();
        assert!((frechet_distance(&a, &b).unwrap() - closed).abs() < 1e-12);
        assert!((closed - 2.0).abs() < 1e-15);
    }

    #[test]
    fn fd_identity_and_point_masses() {
        let b = random_matrix(6, 9);
        let cov = b.transpose() * b;
        let g = GaussianSummary::new(DVector::from_element(6, 0.3), cov, 50).unwrap();
        assert!(frechet_distance(&g, &g).unwrap() < 1e-8);
        let p = gaussian(&[1.0, 2.0], &[0.0, 0.0]);
        let q = gaussian(&[4.0, -2.0], &[0.0, 0.0]);
        assert!((frechet_distance(&p, &q).unwrap() - 25.0).abs() < 1e-12);
    }

    #[test]
    fn fd_dim_mismatch() {
        assert!(matches!(
            frechet_distance(
                &gaussian(&[0.0], &[1.0]),
                &gaussian(&[0.0, 0.0], &[1.0, 1.0])
            ),
            Err(MetricsError::DimMismatch(1, 2))
        ));
    }
}
