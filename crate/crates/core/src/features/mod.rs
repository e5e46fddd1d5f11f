//! Landmark normalization, PCA and training-frame balancing.

mod balance;
mod pca;

pub use balance::balance_training_frames;
pub use pca::{fit_pca, PcaModel};

use crate::error::{Error, Result};

/// Centers one frame `[x1..xn, y1..yn]` on its centroid and scales it to unit
/// root-mean-square distance from the centroid.
pub fn normalize_frame(frame: &[f64]) -> Result<Vec<f64>> {
    if frame.is_empty() || frame.len() % 2 != 0 {
        return Err(Error::invalid(format!(
            "landmark frame needs an even, non-zero number of coordinates, got {}",
            frame.len()
        )));
    }
    let n = frame.len() / 2;
    let (xs, ys) = frame.split_at(n);
    let cx = xs.iter().sum::<f64>() / n as f64;
    let cy = ys.iter().sum::<f64>() / n as f64;
    let ms = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - cx).powi(2) + (y - cy).powi(2))
        .sum::<f64>()
        / n as f64;
    let rms = ms.sqrt();
    if !(rms > 0.0 && rms.is_finite()) {
        return Err(Error::invalid("degenerate landmark frame: zero spread around the centroid"));
    }
    Ok(xs
        .iter()
        .map(|x| (x - cx) / rms)
        .chain(ys.iter().map(|y| (y - cy) / rms))
        .collect())
}

pub fn normalize_landmarks(frames: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if frames.is_empty() {
        return Err(Error::invalid("cannot normalize an empty sequence"));
    }
    frames
        .iter()
        .enumerate()
        .map(|(t, f)| normalize_frame(f).map_err(|e| Error::invalid(format!("frame {t}: {e}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rms(f: &[f64]) -> f64 {
        let n = f.len() / 2;
        ((0..n).map(|i| f[i] * f[i] + f[n + i] * f[n + i]).sum::<f64>() / n as f64).sqrt()
    }

    #[test]
    fn normalized_frame_is_fixed_point() {
        let f = normalize_frame(&[0.0, 3.0, 1.0, 2.0, 0.0, 5.0]).unwrap();
        assert!((rms(&f) - 1.0).abs() < 1e-12);
        let g = normalize_frame(&f).unwrap();
        for (a, b) in f.iter().zip(&g) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scale_by_three() {
        // Points (1,0), (-1,0): centroid 0, rms 1.
        let base = [1.0, -1.0, 0.0, 0.0];
        let scaled = [3.0, -3.0, 0.0, 0.0];
        assert_eq!(normalize_frame(&base).unwrap(), base.to_vec());
        assert_eq!(normalize_frame(&scaled).unwrap(), base.to_vec());
    }

    #[test]
    fn degenerate_and_malformed() {
        assert!(normalize_frame(&[2.0, 2.0, 5.0, 5.0]).is_err());
        assert!(normalize_frame(&[1.0, 2.0, 3.0]).is_err());
        assert!(normalize_landmarks(&[]).is_err());
    }

    proptest! {
        #[test]
        fn translation_and_scale_invariant(
            pts in prop::collection::vec(-50.0f64..50.0, 12),
            dx in -100.0f64..100.0,
            dy in -100.0f64..100.0,
            s in 0.1f64..10.0,
        ) {
            let base = match normalize_frame(&pts) {
                Ok(f) => f,
                Err(_) => return Ok(()),
            };
            prop_assume!(rms(&pts.iter().map(|v| v - pts[0]).collect::<Vec<_>>()) > 1e-3);
            let moved: Vec<f64> = pts
                .iter()
                .enumerate()
                .map(|(i, v)| s * v + if i < 6 { dx } else { dy })
                .collect();
            let out = normalize_frame(&moved).unwrap();
            for (a, b) in base.iter().zip(&out) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
