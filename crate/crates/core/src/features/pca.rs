use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_json, write_json};

/// Principal components of a set of frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `n_components` orthonormal rows of length `D`.
    pub basis: Vec<Vec<f64>>,
    /// Eigenvalues of the retained components (sample covariance, divisor n-1).
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

/// Eigenvalues below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-12;

/// Fits PCA keeping the fewest components whose cumulative explained
/// variance reaches `variance_target`.
pub fn fit_pca(frames: &[Vec<f64>], variance_target: f64) -> Result<PcaModel> {
    if frames.len() < 2 {
        return Err(Error::invalid(format!("PCA needs at least 2 frames, got {}", frames.len())));
    }
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(Error::invalid(format!("variance target must be in (0, 1], got {variance_target}")));
    }
    let d = frames[0].len();
    if d == 0 {
        return Err(Error::invalid("PCA frames have zero dimension"));
    }
    if let Some(f) = frames.iter().find(|f| f.len() != d) {
        return Err(Error::Shape {
            expected: d,
            found: f.len(),
        });
    }
    let n = frames.len();
    let mut mean = vec![0.0; d];
    for f in frames {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered = DMatrix::from_fn(n, d, |i, j| frames[i][j] - mean[j]);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = values.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::invalid("PCA input has zero total variance"));
    }
    let nonzero = values.iter().take_while(|&&v| v > RANK_TOL * values[0]).count();

    let mut k = 0;
    let mut cumulative = 0.0;
    while k < nonzero {
        cumulative += values[k];
        k += 1;
        if cumulative / total >= variance_target {
            break;
        }
    }

    let basis: Vec<Vec<f64>> = order[..k]
        .iter()
        .map(|&i| {
            let mut row: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let pivot = row
                .iter()
                .copied()
                .fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
            if pivot < 0.0 {
                row.iter_mut().for_each(|v| *v = -*v);
            }
            row
        })
        .collect();
    let explained_variance = values[..k].to_vec();
    let explained_variance_ratio = explained_variance.iter().map(|v| v / total).collect();
    Ok(PcaModel {
        mean,
        basis,
        explained_variance,
        explained_variance_ratio,
    })
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.basis.len()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    /// `(frame - mean)` expressed in the component basis.
    pub fn project(&self, frame: &[f64]) -> Result<Vec<f64>> {
        if frame.len() != self.mean.len() {
            return Err(Error::Shape {
                expected: self.mean.len(),
                found: frame.len(),
            });
        }
        Ok(self
            .basis
            .iter()
            .map(|row| {
                row.iter()
                    .zip(frame.iter().zip(&self.mean))
                    .map(|(b, (x, m))| b * (x - m))
                    .sum()
            })
            .collect())
    }

    pub fn project_all(&self, frames: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        frames.iter().map(|f| self.project(f)).collect()
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let model: PcaModel = read_json(path)?;
        let d = model.mean.len();
        if model.basis.iter().any(|r| r.len() != d)
            || model.explained_variance.len() != model.basis.len()
            || model.explained_variance_ratio.len() != model.basis.len()
        {
            return Err(Error::invalid(format!("{}: inconsistent PCA shapes", path.display())));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frames(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scales: Vec<f64> = (0..d).map(|j| 1.0 / (1.0 + j as f64)).collect();
        (0..n)
            .map(|_| scales.iter().map(|s| s * rng.gen_range(-1.0..1.0) + 2.0).collect())
            .collect()
    }

    #[test]
    fn planar_data_needs_two_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let frames: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                let (a, b) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
                u.iter().zip(&v).map(|(x, y)| a * x + b * y + 1.0).collect()
            })
            .collect();
        assert_eq!(fit_pca(&frames, 0.99).unwrap().n_components(), 2);
        assert_eq!(fit_pca(&frames, 1.0).unwrap().n_components(), 2);
    }

    #[test]
    fn basis_orthonormal_and_ratios_ordered() {
        let m = fit_pca(&random_frames(200, 6, 2), 1.0).unwrap();
        for (i, a) in m.basis.iter().enumerate() {
            for (j, b) in m.basis.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8);
            }
            let pivot = a.iter().copied().fold(0.0f64, |p, v| if v.abs() > p.abs() { v } else { p });
            assert!(pivot > 0.0);
        }
        for w in m.explained_variance_ratio.windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert!(m.explained_variance_ratio.iter().sum::<f64>() <= 1.0 + 1e-8);
    }

    #[test]
    fn projected_variance_equals_eigenvalues() {
        let frames = random_frames(300, 5, 3);
        let m = fit_pca(&frames, 1.0).unwrap();
        let proj = m.project_all(&frames).unwrap();
        for c in 0..m.n_components() {
            let var = proj.iter().map(|p| p[c] * p[c]).sum::<f64>() / (frames.len() as f64 - 1.0);
            assert!((var - m.explained_variance[c]).abs() <= 1e-8 * m.explained_variance[c]);
        }
    }

    #[test]
    fn reconstruction_error_is_discarded_variance() {
        let frames = random_frames(250, 6, 4);
        let full = fit_pca(&frames, 1.0).unwrap();
        let part = fit_pca(&frames, 0.7).unwrap();
        assert!(part.n_components() < full.n_components());
        let discarded: f64 = full.explained_variance[part.n_components()..].iter().sum();
        let mut err = 0.0;
        for f in &frames {
            let z = part.project(f).unwrap();
            for j in 0..f.len() {
                let recon = part.mean[j] + part.basis.iter().zip(&z).map(|(row, zc)| row[j] * zc).sum::<f64>();
                err += (f[j] - recon).powi(2);
            }
        }
        err /= frames.len() as f64 - 1.0;
        assert!((err - discarded).abs() < 1e-9);
    }

    #[test]
    fn projection_cases() {
        let frames = random_frames(50, 4, 5);
        let m = fit_pca(&frames, 0.95).unwrap();
        assert!(m.project(&m.mean).unwrap().iter().all(|v| *v == 0.0));
        assert!(m.project(&[1.0]).is_err());
        let ident = PcaModel {
            mean: vec![0.0; 3],
            basis: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            explained_variance: vec![1.0; 3],
            explained_variance_ratio: vec![1.0 / 3.0; 3],
        };
        assert_eq!(ident.project(&[4.0, -2.0, 0.5]).unwrap(), vec![4.0, -2.0, 0.5]);
    }

    #[test]
    fn bad_inputs() {
        assert!(fit_pca(&[vec![1.0]], 0.9).is_err());
        assert!(fit_pca(&[vec![1.0], vec![1.0]], 0.9).is_err());
        assert!(fit_pca(&random_frames(5, 2, 0), 0.0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = fit_pca(&random_frames(30, 4, 6), 0.9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pca.json");
        m.save_json(&p).unwrap();
        assert_eq!(PcaModel::load_json(&p).unwrap(), m);
    }
}
