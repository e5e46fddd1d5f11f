//! Individual facial expressiveness score (I-FES) and personalized features.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{MAX_OPI, MAX_VAS};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IfesScore {
    pub person_id: String,
    pub p: f64,
    pub alpha_used: usize,
    /// Indices into the input pairs that produced `p`, ascending.
    pub selected: Vec<usize>,
}

/// Mean of `(opi + 1) / (vas + 1)` over `alpha` pairs drawn without
/// replacement; `p = 1` when `alpha = 0`. With `alpha = pairs.len()` every
/// pair is used and the seed is irrelevant.
pub fn compute_ifes(person_id: &str, pairs: &[(u8, u8)], alpha: usize, seed: u64) -> Result<IfesScore> {
    if alpha > pairs.len() {
        return Err(Error::invalid(format!(
            "person {person_id}: alpha = {alpha} exceeds the {} available sequences",
            pairs.len()
        )));
    }
    for &(o, v) in pairs {
        if o > MAX_OPI || v > MAX_VAS {
            return Err(Error::invalid(format!(
                "person {person_id}: label pair (opi {o}, vas {v}) out of range"
            )));
        }
    }
    let mut selected: Vec<usize> = if alpha == pairs.len() {
        (0..alpha).collect()
    } else {
        sample(&mut ChaCha8Rng::seed_from_u64(seed), pairs.len(), alpha).into_vec()
    };
    selected.sort_unstable();
    let p = if alpha == 0 {
        1.0
    } else {
        selected
            .iter()
            .map(|&i| (f64::from(pairs[i].0) + 1.0) / (f64::from(pairs[i].1) + 1.0))
            .sum::<f64>()
            / alpha as f64
    };
    Ok(IfesScore {
        person_id: person_id.to_string(),
        p,
        alpha_used: alpha,
        selected,
    })
}

/// Appends `p` as a constant extra coordinate to every frame.
pub fn augment_features(per_frame: &[Vec<f64>], p: f64) -> Vec<Vec<f64>> {
    per_frame
        .iter()
        .map(|f| {
            let mut g = Vec::with_capacity(f.len() + 1);
            g.extend_from_slice(f);
            g.push(p);
            g
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_values() {
        assert_eq!(compute_ifes("a", &[(3, 5), (1, 1)], 0, 4).unwrap().p, 1.0);
        let one = compute_ifes("a", &[(3, 5)], 1, 0).unwrap();
        assert!((one.p - 2.0 / 3.0).abs() < 1e-12);
        let two = compute_ifes("a", &[(0, 0), (5, 10)], 2, 0).unwrap();
        assert!((two.p - 17.0 / 22.0).abs() < 1e-12);
    }

    #[test]
    fn too_many_requested() {
        assert!(compute_ifes("a", &[(1, 2)], 2, 0).is_err());
        assert!(compute_ifes("a", &[(6, 2)], 1, 0).is_err());
    }

    #[test]
    fn selection_is_seeded() {
        let pairs: Vec<(u8, u8)> = (0..8).map(|i| (i % 6, i)).collect();
        let a = compute_ifes("a", &pairs, 3, 11).unwrap();
        assert_eq!(a, compute_ifes("a", &pairs, 3, 11).unwrap());
        assert_eq!(a.selected.len(), 3);
        let direct: f64 = a
            .selected
            .iter()
            .map(|&i| (f64::from(pairs[i].0) + 1.0) / (f64::from(pairs[i].1) + 1.0))
            .sum::<f64>()
            / 3.0;
        assert_eq!(a.p, direct);
    }

    #[test]
    fn augment_and_strip() {
        let x = vec![vec![0.2], vec![0.4]];
        let aug = augment_features(&x, 1.0);
        assert_eq!(aug, vec![vec![0.2, 1.0], vec![0.4, 1.0]]);
        let stripped: Vec<Vec<f64>> = aug.iter().map(|f| f[..1].to_vec()).collect();
        assert_eq!(stripped, x);
    }

    proptest! {
        #[test]
        fn bounded_and_permutation_invariant(
            pairs in prop::collection::vec((0u8..=5, 0u8..=10), 1..12),
            rot in 0usize..12,
        ) {
            let all = compute_ifes("a", &pairs, pairs.len(), 0).unwrap().p;
            prop_assert!((1.0 / 11.0 - 1e-12..=6.0 + 1e-12).contains(&all));
            let mut rotated = pairs.clone();
            let r = rot % rotated.len();
            rotated.rotate_left(r);
            let again = compute_ifes("a", &rotated, rotated.len(), 0).unwrap().p;
            prop_assert!((all - again).abs() < 1e-12);
        }

        #[test]
        fn equal_labels_give_one(v in prop::collection::vec(0u8..=5, 1..10)) {
            let pairs: Vec<(u8, u8)> = v.iter().map(|&x| (x, x)).collect();
            prop_assert_eq!(compute_ifes("a", &pairs, pairs.len(), 0).unwrap().p, 1.0);
        }
    }
}
