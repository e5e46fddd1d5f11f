/// Frame indices to keep per sequence when training the frame regressor.
///
/// Every frame with PSPI >= 1 is kept. Neutral frames (PSPI = 0) are kept
/// only up to the total number of PSPI = 1 frames, preferring those closest
/// to a non-zero frame of the same sequence, then lower sequence index, then
/// lower frame index. Sequences without any non-zero frame lose their
/// neutral frames first.
pub fn balance_training_frames<S: AsRef<[u8]>>(pspi: &[S]) -> Vec<Vec<usize>> {
    let ones = pspi
        .iter()
        .map(|s| s.as_ref().iter().filter(|&&v| v == 1).count())
        .sum::<usize>();

    let mut neutral = Vec::new();
    for (si, seq) in pspi.iter().enumerate() {
        let dist = distance_to_active(seq.as_ref());
        for (t, (&v, &d)) in seq.as_ref().iter().zip(&dist).enumerate() {
            if v == 0 {
                neutral.push((d, si, t));
            }
        }
    }
    neutral.sort_unstable();
    neutral.truncate(ones);

    let mut kept: Vec<Vec<usize>> = pspi
        .iter()
        .map(|s| {
            s.as_ref()
                .iter()
                .enumerate()
                .filter(|(_, &v)| v >= 1)
                .map(|(t, _)| t)
                .collect()
        })
        .collect();
    for (_, si, t) in neutral {
        kept[si].push(t);
    }
    kept.iter_mut().for_each(|k| k.sort_unstable());
    kept
}

/// Distance from each frame to the nearest non-zero frame; `usize::MAX` if
/// the sequence has none.
fn distance_to_active(seq: &[u8]) -> Vec<usize> {
    let mut dist = vec![usize::MAX; seq.len()];
    let mut last = None;
    for (t, &v) in seq.iter().enumerate() {
        if v > 0 {
            last = Some(t);
        }
        if let Some(l) = last {
            dist[t] = t - l;
        }
    }
    last = None;
    for (t, &v) in seq.iter().enumerate().rev() {
        if v > 0 {
            last = Some(t);
        }
        if let Some(l) = last {
            dist[t] = dist[t].min(l - t);
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closest_neutral_survives() {
        assert_eq!(balance_training_frames(&[vec![0u8, 0, 0, 1, 0]]), vec![vec![2, 3]]);
    }

    #[test]
    fn all_active_and_all_neutral() {
        assert_eq!(balance_training_frames(&[vec![2u8, 1, 3]]), vec![vec![0, 1, 2]]);
        assert_eq!(balance_training_frames(&[vec![0u8, 0, 0]]), vec![Vec::<usize>::new()]);
        assert!(balance_training_frames::<Vec<u8>>(&[]).is_empty());
    }

    #[test]
    fn too_few_neutral_keeps_all() {
        assert_eq!(balance_training_frames(&[vec![1u8, 1, 0, 1]]), vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn pain_free_sequences_drop_first() {
        let kept = balance_training_frames(&[vec![0u8, 0, 0], vec![0u8, 1, 0, 0]]);
        assert_eq!(kept, vec![vec![], vec![0, 1]]);
    }

    proptest! {
        #[test]
        fn never_drops_active_frames(seqs in prop::collection::vec(prop::collection::vec(0u8..4, 0..30), 0..5)) {
            let kept = balance_training_frames(&seqs);
            let ones: usize = seqs.iter().flatten().filter(|&&v| v == 1).count();
            let zeros: usize = seqs.iter().flatten().filter(|&&v| v == 0).count();
            let mut kept_zero = 0;
            for (s, k) in seqs.iter().zip(&kept) {
                for (t, &v) in s.iter().enumerate() {
                    if v >= 1 {
                        prop_assert!(k.contains(&t));
                    } else if k.contains(&t) {
                        kept_zero += 1;
                    }
                }
            }
            prop_assert_eq!(kept_zero, ones.min(zeros));
        }
    }
}
