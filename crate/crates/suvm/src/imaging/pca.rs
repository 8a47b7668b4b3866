//! Principal-component projection for descriptor dimension reduction.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Affine projection onto the top principal components.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaProjection {
    pub mean: DVector<f64>,
    /// `input_dim` × `output_dim`, orthonormal columns.
    pub basis: DMatrix<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

impl PcaProjection {
    pub fn input_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.input_dim(), "descriptor dimension mismatch");
        self.basis.tr_mul(&(x - &self.mean))
    }

    pub fn project_slice(&self, x: &[f64]) -> DVector<f64> {
        self.project(&DVector::from_column_slice(x))
    }

    /// Identity projection (used when no reduction is wanted).
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: DVector::zeros(dim),
            basis: DMatrix::identity(dim, dim),
            explained_variance_ratio: vec![1.0 / dim as f64; dim],
        }
    }
}

/// Streaming mean/scatter accumulator with a commutative merge, so that
/// per-image partial sums can be combined in any grouping.
#[derive(Clone, Debug)]
pub struct CovAccumulator {
    n: usize,
    sum: DVector<f64>,
    /// Raw second-moment matrix Σ x xᵀ.
    scatter: DMatrix<f64>,
}

impl CovAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0,
            sum: DVector::zeros(dim),
            scatter: DMatrix::zeros(dim, dim),
        }
    }

    pub fn push(&mut self, x: &DVector<f64>) {
        self.n += 1;
        self.sum += x;
        self.scatter.syger(1.0, x, x, 1.0);
    }

    pub fn merge(&mut self, other: &CovAccumulator) {
        self.n += other.n;
        self.sum += &other.sum;
        self.scatter += &other.scatter;
    }

    pub fn count(&self) -> usize {
        self.n
    }

    /// Population covariance (symmetric; only the lower triangle of the
    /// accumulated scatter is meaningful, so it is mirrored here).
    pub fn covariance(&self) -> DMatrix<f64> {
        assert!(self.n > 0);
        let n = self.n as f64;
        let mean = &self.sum / n;
        let mut cov = &self.scatter / n;
        let d = cov.nrows();
        for i in 0..d {
            for j in 0..=i {
                let v = cov[(i, j)] - mean[i] * mean[j];
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        cov
    }

    pub fn mean(&self) -> DVector<f64> {
        assert!(self.n > 0);
        &self.sum / self.n as f64
    }
}

/// Fit from accumulated moments (streaming path for large corpora).
pub fn fit_pca_from_moments(acc: &CovAccumulator, d: usize) -> Result<PcaProjection> {
    if acc.count() < d + 1 {
        return Err(Error::rejected(format!(
            "PCA needs at least d+1 = {} samples, got {}",
            d + 1,
            acc.count()
        )));
    }
    let cov = acc.covariance();
    let dim = cov.nrows();
    if d > dim {
        return Err(Error::rejected(format!(
            "PCA output dim {d} exceeds input dim {dim}"
        )));
    }
    let total = cov.trace();
    let se = cov.symmetric_eigen();
    let mut idx: Vec<usize> = (0..dim).collect();
    idx.sort_by(|&a, &b| se.eigenvalues[b].partial_cmp(&se.eigenvalues[a]).unwrap());
    let eps = total.max(1e-300) * 1e-12;
    let rank = idx
        .iter()
        .filter(|&&i| se.eigenvalues[i].max(0.0) > eps)
        .count();
    let keep = if rank < d {
        log::warn!("PCA input has rank {rank} < requested dim {d}; reducing output dim to {rank}");
        rank.max(1)
    } else {
        d
    };
    let mut basis = DMatrix::zeros(dim, keep);
    let mut ratios = Vec::with_capacity(keep);
    for (j, &i) in idx.iter().take(keep).enumerate() {
        basis.set_column(j, &se.eigenvectors.column(i).into_owned());
        ratios.push(if total > 0.0 {
            se.eigenvalues[i].max(0.0) / total
        } else {
            0.0
        });
    }
    Ok(PcaProjection {
        mean: acc.mean(),
        basis,
        explained_variance_ratio: ratios,
    })
}

/// Fit the top-`d` principal components of a sample set.
///
/// Rank-deficient input (rank r < d) reduces the output dimension to r
/// with a warning. When there are fewer samples than input dimensions the
/// eigenproblem is solved on the Gram matrix instead of the covariance.
pub fn fit_pca(samples: &[DVector<f64>], d: usize) -> Result<PcaProjection> {
    if samples.is_empty() {
        return Err(Error::rejected("PCA needs at least one sample"));
    }
    let dim = samples[0].len();
    if d > dim {
        return Err(Error::rejected(format!(
            "PCA output dim {d} exceeds input dim {dim}"
        )));
    }
    if samples.len() < d + 1 {
        return Err(Error::rejected(format!(
            "PCA needs at least d+1 = {} samples, got {}",
            d + 1,
            samples.len()
        )));
    }
    let n = samples.len();
    let mean = samples.iter().fold(DVector::zeros(dim), |acc, x| acc + x) / n as f64;

    // (eigenvalue, component) pairs sorted by decreasing eigenvalue
    let (eigvals, components, total_var) = if n >= dim {
        let mut acc = CovAccumulator::new(dim);
        for s in samples {
            acc.push(s);
        }
        let cov = acc.covariance();
        let total = cov.trace();
        let se = cov.symmetric_eigen();
        let mut idx: Vec<usize> = (0..dim).collect();
        idx.sort_by(|&a, &b| se.eigenvalues[b].partial_cmp(&se.eigenvalues[a]).unwrap());
        let vals: Vec<f64> = idx.iter().map(|&i| se.eigenvalues[i].max(0.0)).collect();
        let comps: Vec<DVector<f64>> = idx
            .iter()
            .map(|&i| se.eigenvectors.column(i).into_owned())
            .collect();
        (vals, comps, total)
    } else {
        // Gram trick: eigenvectors of XᵀX (n x n) lift to covariance
        // eigenvectors X v / ||X v||
        let mut centered = DMatrix::zeros(dim, n);
        for (j, s) in samples.iter().enumerate() {
            centered.set_column(j, &(s - &mean));
        }
        let gram = centered.tr_mul(&centered) / n as f64;
        let total = gram.trace();
        let se = gram.symmetric_eigen();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| se.eigenvalues[b].partial_cmp(&se.eigenvalues[a]).unwrap());
        let mut vals = Vec::new();
        let mut comps = Vec::new();
        for &i in &idx {
            let lam = se.eigenvalues[i].max(0.0);
            let v = &centered * se.eigenvectors.column(i);
            let norm = v.norm();
            if norm > 1e-12 {
                vals.push(lam);
                comps.push(v / norm);
            }
        }
        (vals, comps, total)
    };

    // drop numerically-zero directions
    let eps = total_var.max(1e-300) * 1e-12;
    let rank = eigvals
        .iter()
        .take(components.len())
        .filter(|&&v| v > eps)
        .count();
    let keep = if rank < d {
        log::warn!("PCA input has rank {rank} < requested dim {d}; reducing output dim to {rank}");
        rank.max(1)
    } else {
        d
    };

    let mut basis = DMatrix::zeros(dim, keep);
    let mut ratios = Vec::with_capacity(keep);
    for j in 0..keep {
        basis.set_column(j, &components[j]);
        ratios.push(if total_var > 0.0 {
            eigvals[j] / total_var
        } else {
            0.0
        });
    }
    Ok(PcaProjection {
        mean,
        basis,
        explained_variance_ratio: ratios,
    })
}
