//! Cohort model: persons, their video sequences, and per-sequence labels.

mod io;
mod synthetic;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pspi::{AuVector, DEFAULT_MAX_PSPI};

pub use io::{load_cohort, load_cohort_with, save_cohort, ManifestPerson, ManifestSequence};
pub use synthetic::{
    generate_synthetic_cohort, generate_synthetic_cohort_detailed, SyntheticConfig, SyntheticTruth, NUM_LANDMARKS,
};

pub const MAX_VAS: u8 = 10;
pub const MAX_OPI: u8 = 5;

/// One video: landmark frames, per-frame PSPI and the sequence labels.
///
/// Frame vectors store all x coordinates first, then all y coordinates,
/// matching the column order of the sequence CSV files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub id: String,
    pub frames: Vec<Vec<f64>>,
    pub pspi: Vec<u8>,
    pub au: Option<Vec<AuVector>>,
    pub vas: u8,
    pub opi: u8,
}

impl SequenceRecord {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self, person: &str, max_pspi: u8) -> Result<()> {
        let invalid = |message: String| Error::InvalidSequence {
            person: person.to_string(),
            sequence: self.id.clone(),
            message,
        };
        let range = |label: &'static str, value: u8, max: u8| {
            if value > max {
                Err(Error::LabelOutOfRange {
                    person: person.to_string(),
                    sequence: self.id.clone(),
                    label,
                    value: value.into(),
                    min: 0,
                    max: max.into(),
                })
            } else {
                Ok(())
            }
        };

        if self.frames.is_empty() {
            return Err(invalid("sequence has no frames".into()));
        }
        if self.pspi.len() != self.frames.len() {
            return Err(invalid(format!(
                "{} PSPI labels for {} frames",
                self.pspi.len(),
                self.frames.len()
            )));
        }
        let dim = self.frames[0].len();
        for (t, f) in self.frames.iter().enumerate() {
            if f.len() != dim {
                return Err(Error::DimensionMismatch {
                    person: person.to_string(),
                    sequence: self.id.clone(),
                    frame: t,
                    found: f.len(),
                    expected: dim,
                });
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("frame {t} has a non-finite coordinate")));
            }
        }
        range("vas", self.vas, MAX_VAS)?;
        range("opi", self.opi, MAX_OPI)?;
        for &s in &self.pspi {
            range("pspi", s, max_pspi)?;
        }
        if let Some(au) = &self.au {
            if au.len() != self.frames.len() {
                return Err(invalid(format!("{} AU rows for {} frames", au.len(), self.frames.len())));
            }
            for (t, a) in au.iter().enumerate() {
                a.validate().map_err(|e| invalid(format!("frame {t}: {e}")))?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersonRecord {
    pub person_id: String,
    pub sequences: Vec<SequenceRecord>,
}

impl PersonRecord {
    /// `(opi, vas)` of every sequence, in order.
    pub fn label_pairs(&self) -> Vec<(u8, u8)> {
        self.sequences.iter().map(|s| (s.opi, s.vas)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub persons: Vec<PersonRecord>,
    pub feature_dim: usize,
}

impl Cohort {
    /// Builds a cohort and checks every invariant with the default PSPI range.
    pub fn new(persons: Vec<PersonRecord>) -> Result<Self> {
        Self::with_max_pspi(persons, DEFAULT_MAX_PSPI)
    }

    pub fn with_max_pspi(persons: Vec<PersonRecord>, max_pspi: u8) -> Result<Self> {
        let feature_dim = persons
            .iter()
            .flat_map(|p| p.sequences.first())
            .map(|s| s.frames.first().map_or(0, Vec::len))
            .next()
            .unwrap_or(0);
        let cohort = Cohort { persons, feature_dim };
        cohort.validate(max_pspi)?;
        Ok(cohort)
    }

    pub fn validate(&self, max_pspi: u8) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for p in &self.persons {
            if !seen.insert(p.person_id.as_str()) {
                return Err(Error::invalid(format!("duplicate person_id {}", p.person_id)));
            }
            if p.sequences.is_empty() {
                return Err(Error::invalid(format!("person {} has no sequences", p.person_id)));
            }
            let mut seq_ids = std::collections::HashSet::new();
            for s in &p.sequences {
                if !seq_ids.insert(s.id.as_str()) {
                    return Err(Error::invalid(format!(
                        "person {} has duplicate sequence id {}",
                        p.person_id, s.id
                    )));
                }
                s.validate(&p.person_id, max_pspi)?;
                if s.frames[0].len() != self.feature_dim {
                    return Err(Error::DimensionMismatch {
                        person: p.person_id.clone(),
                        sequence: s.id.clone(),
                        frame: 0,
                        found: s.frames[0].len(),
                        expected: self.feature_dim,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn num_sequences(&self) -> usize {
        self.persons.iter().map(|p| p.sequences.len()).sum()
    }

    pub fn sequences(&self) -> impl Iterator<Item = &SequenceRecord> {
        self.persons.iter().flat_map(|p| p.sequences.iter())
    }

    fn subset(&self, idx: &[usize]) -> Cohort {
        Cohort {
            persons: idx.iter().map(|&i| self.persons[i].clone()).collect(),
            feature_dim: self.feature_dim,
        }
    }
}

/// Randomly assigns `n_train` persons to training and the rest to test.
/// Each partition keeps the cohort's original person order.
pub fn split_subject_independent(cohort: &Cohort, n_train: usize, seed: u64) -> Result<(Cohort, Cohort)> {
    let (train, test) = split_indices(cohort.persons.len(), n_train, seed)?;
    Ok((cohort.subset(&train), cohort.subset(&test)))
}

/// Seeded partition of `0..n` into `n_first` and `n - n_first` sorted indices.
pub(crate) fn split_indices(n: usize, n_first: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_first == 0 || n_first >= n {
        return Err(Error::invalid(format!("n_train must be in [1, {n}), got {n_first}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut first = order[..n_first].to_vec();
    let mut rest = order[n_first..].to_vec();
    first.sort_unstable();
    rest.sort_unstable();
    Ok((first, rest))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_person(id: &str, n_seq: usize) -> PersonRecord {
        PersonRecord {
            person_id: id.into(),
            sequences: (0..n_seq)
                .map(|i| SequenceRecord {
                    id: format!("{id}_{i}"),
                    frames: vec![vec![0.0, 1.0, 2.0, 3.0]; 3],
                    pspi: vec![0, 1, 2],
                    au: None,
                    vas: 3,
                    opi: 1,
                })
                .collect(),
        }
    }

    #[test]
    fn split_is_disjoint_complete_and_deterministic() {
        let persons: Vec<_> = (0..25).map(|i| tiny_person(&format!("p{i:02}"), 1)).collect();
        let cohort = Cohort::new(persons).unwrap();
        let (train, test) = split_subject_independent(&cohort, 15, 7).unwrap();
        assert_eq!(train.persons.len(), 15);
        assert_eq!(test.persons.len(), 10);
        let mut ids: Vec<_> = train.persons.iter().chain(&test.persons).map(|p| p.person_id.clone()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 25);
        let (train2, test2) = split_subject_independent(&cohort, 15, 7).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
    }

    #[test]
    fn split_of_two() {
        let cohort = Cohort::new(vec![tiny_person("a", 1), tiny_person("b", 1)]).unwrap();
        let (train, test) = split_subject_independent(&cohort, 1, 0).unwrap();
        assert_eq!((train.persons.len(), test.persons.len()), (1, 1));
        assert!(split_subject_independent(&cohort, 0, 0).is_err());
        assert!(split_subject_independent(&cohort, 2, 0).is_err());
    }

    #[test]
    fn validation_catches_bad_labels_and_shapes() {
        let mut p = tiny_person("a", 1);
        p.sequences[0].vas = 11;
        assert!(matches!(Cohort::new(vec![p]), Err(Error::LabelOutOfRange { label: "vas", .. })));

        let mut p = tiny_person("a", 1);
        p.sequences[0].frames[2].pop();
        assert!(matches!(Cohort::new(vec![p]), Err(Error::DimensionMismatch { frame: 2, .. })));

        let mut p = tiny_person("a", 1);
        p.sequences[0].pspi[1] = 17;
        assert!(Cohort::new(vec![p]).is_err());

        let mut p = tiny_person("a", 1);
        p.sequences[0].frames.clear();
        p.sequences[0].pspi.clear();
        assert!(Cohort::new(vec![p]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn split_never_shares_persons(seed in 0u64..10_000, n in 2usize..30, frac in 0.0f64..1.0) {
            let persons: Vec<_> = (0..n).map(|i| tiny_person(&format!("p{i}"), 1)).collect();
            let cohort = Cohort::new(persons).unwrap();
            let n_train = 1 + ((n - 2) as f64 * frac) as usize;
            let (train, test) = split_subject_independent(&cohort, n_train, seed).unwrap();
            for p in &train.persons {
                proptest::prop_assert!(test.persons.iter().all(|q| q.person_id != p.person_id));
            }
            proptest::prop_assert_eq!(train.persons.len() + test.persons.len(), n);
        }
    }
}
