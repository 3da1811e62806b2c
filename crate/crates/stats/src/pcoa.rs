//! Principal coordinates analysis: metric embedding of a distance matrix via
//! eigendecomposition of the double-centered squared-distance matrix.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::distance::DistanceMatrix;
use crate::error::StatsError;

/// PCoA embedding. Axes are ordered by descending eigenvalue and scaled by
/// sqrt(|eigenvalue|). Semimetric inputs (e.g. Bray-Curtis) can produce
/// negative eigenvalues; those axes are retained, with the eigenvalue sign
/// tagging them as imaginary.
#[derive(Debug, Clone)]
pub struct Ordination {
    /// n rows, one per input point; m columns, one per retained axis.
    pub coordinates: Vec<Vec<f64>>,
    /// One per retained axis, descending. Negative values tag imaginary axes.
    pub eigenvalues: Vec<f64>,
}

impl Ordination {
    /// Squared distance between a point and an arbitrary position, counting
    /// imaginary axes negatively.
    fn signed_sq_distance(&self, point: usize, position: &[f64]) -> f64 {
        let coords = &self.coordinates[point];
        let mut sq = 0.0;
        for (axis, (&x, &c)) in coords.iter().zip(position).enumerate() {
            let term = (x - c).powi(2);
            if self.eigenvalues[axis] >= 0.0 {
                sq += term;
            } else {
                sq -= term;
            }
        }
        sq
    }

    /// Distance of every point to the centroid of its group, as used by the
    /// dispersion test. Negative-axis contributions subtract from the squared
    /// distance, which is floored at 0 before the square root.
    pub fn centroid_distances(&self, dense_groups: &[usize], n_groups: usize) -> Vec<f64> {
        let n_axes = self.eigenvalues.len();
        let mut centroids = vec![vec![0.0; n_axes]; n_groups];
        let mut sizes = vec![0usize; n_groups];
        for (point, &g) in dense_groups.iter().enumerate() {
            sizes[g] += 1;
            for (axis, c) in centroids[g].iter_mut().enumerate() {
                *c += self.coordinates[point][axis];
            }
        }
        for (centroid, &size) in centroids.iter_mut().zip(&sizes) {
            for c in centroid.iter_mut() {
                *c /= size as f64;
            }
        }
        dense_groups
            .iter()
            .enumerate()
            .map(|(point, &g)| self.signed_sq_distance(point, &centroids[g]).max(0.0).sqrt())
            .collect()
    }

    /// Reconstructs the dissimilarity between two points implied by the
    /// embedding (negative axes subtract; floored at 0).
    pub fn reconstructed_distance(&self, i: usize, j: usize) -> f64 {
        self.signed_sq_distance(i, &self.coordinates[j].clone())
            .max(0.0)
            .sqrt()
    }
}

/// Principal coordinates of a distance matrix.
///
/// Double-centers −½d² and takes the symmetric eigendecomposition. Axes with
/// eigenvalues that are zero up to numerical noise are dropped.
pub fn pcoa(d: &DistanceMatrix) -> Result<Ordination, StatsError> {
    let n = d.n();
    if n < 2 {
        return Err(StatsError::TooFew {
            what: "points",
            min: 2,
            got: n,
        });
    }
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = -0.5 * d.get(i, j).powi(2);
        }
    }
    let row_means: Vec<f64> = (0..n).map(|i| a.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let mut b = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] = a[(i, j)] - row_means[i] - row_means[j] + grand;
        }
    }
    // Symmetrize away centering round-off so the decomposition stays clean.
    let b = (&b + b.transpose()) * 0.5;

    let eig = SymmetricEigen::try_new(b, f64::EPSILON, 10_000).ok_or(StatsError::EigenFailure)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let max_abs = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tol = max_abs * 1e-12;

    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&m| eig.eigenvalues[m].abs() > tol)
        .collect();

    let eigenvalues: Vec<f64> = kept.iter().map(|&m| eig.eigenvalues[m]).collect();
    let coordinates: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            kept.iter()
                .map(|&m| eig.eigenvectors[(i, m)] * eig.eigenvalues[m].abs().sqrt())
                .collect()
        })
        .collect();

    Ok(Ordination {
        coordinates,
        eigenvalues,
    })
}
