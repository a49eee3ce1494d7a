use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::features::FeatureExtractor;

/// Eigenvalues above this (scaled by the largest magnitude) count as zero.
const NEG_EIGEN_TOL: f64 = 1e-6;

/// Mean and covariance of a feature distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianStats {
    /// Validates shapes and symmetrizes `cov`; asymmetry beyond 1e-8 is an error.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.shape() != (d, d) {
            return Err(Error::Dimension(format!("covariance is {:?}, expected {d}x{d}", cov.shape())));
        }
        let asym = (&cov - cov.transpose()).abs().max();
        if asym > 1e-8 {
            return Err(Error::Numerical(format!("covariance is not symmetric (max deviation {asym:e})")));
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Sample mean and unbiased covariance of `n × d` features (rows are
    /// samples). A single sample yields a zero covariance.
    pub fn from_features(features: &DMatrix<f64>) -> Result<Self> {
        let (n, d) = features.shape();
        if n == 0 {
            return Err(Error::Dimension("no feature vectors".into()));
        }
        let mean = features.row_mean().transpose();
        let mut centered = features.clone();
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
        let cov = centered.transpose() * &centered / denom;
        if n <= d {
            log::warn!("{n} samples for {d}-dimensional features: covariance is rank-deficient");
        }
        Self::new(mean, (&cov + cov.transpose()) * 0.5)
    }
}

fn clamped_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    eig.eigenvalues
        .iter()
        .map(|&v| {
            if v >= 0.0 {
                Ok(v)
            } else if v > -NEG_EIGEN_TOL * scale {
                Ok(0.0)
            } else {
                Err(Error::Numerical(format!("matrix square root failed: eigenvalue {v:e} is negative")))
            }
        })
        .collect()
}

/// Principal square root of a symmetric positive semidefinite matrix.
pub fn sqrtm_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = DVector::from_vec(clamped_eigenvalues(m)?.into_iter().map(f64::sqrt).collect());
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&roots) * q.transpose())
}

/// Fréchet distance `‖μ₁ − μ₂‖² + Tr(Σ₁ + Σ₂ − 2(Σ₁Σ₂)^{1/2})`.
///
/// `Tr((Σ₁Σ₂)^{1/2})` is taken from the eigenvalues of the symmetric matrix
/// `Σ₂^{1/2} Σ₁ Σ₂^{1/2}`, which shares its spectrum with `Σ₁Σ₂`.
pub fn fid(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!("FID of {}-d and {}-d statistics", a.dim(), b.dim())));
    }
    let diff = (&a.mean - &b.mean).norm_squared();
    let s2 = sqrtm_psd(&b.cov)?;
    let m = &s2 * &a.cov * &s2;
    let tr_sqrt: f64 = clamped_eigenvalues(&m)?.iter().map(|v| v.sqrt()).sum();
    let value = diff + a.cov.trace() + b.cov.trace() - 2.0 * tr_sqrt;
    if value < -1e-6 * (1.0 + a.cov.trace() + b.cov.trace()) {
        return Err(Error::Numerical(format!("FID evaluated to {value:e}")));
    }
    Ok(value.max(0.0))
}

fn features_matrix(extractor: &dyn FeatureExtractor, images: &Tensor) -> Result<DMatrix<f64>> {
    let rows = extractor.embed(images)?;
    let d = extractor.dim();
    Ok(DMatrix::from_row_iterator(rows.len(), d, rows.into_iter().flatten()))
}

/// FID between two image batches `[N, 3, H, W]` under `extractor`.
pub fn dataset_fid(real: &Tensor, generated: &Tensor, extractor: &dyn FeatureExtractor) -> Result<f64> {
    if real.shape().first() == Some(&0) || generated.shape().first() == Some(&0) {
        return Err(Error::Dimension("FID needs nonempty image sets".into()));
    }
    let a = GaussianStats::from_features(&features_matrix(extractor, real)?)?;
    let b = GaussianStats::from_features(&features_matrix(extractor, generated)?)?;
    fid(&a, &b)
}
