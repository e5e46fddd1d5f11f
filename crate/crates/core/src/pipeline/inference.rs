use serde::{Deserialize, Serialize};

use super::learning::Artifacts;
use crate::data::PersonRecord;
use crate::error::{Error, Result};
use crate::personalization::{compute_ifes, IfesScore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequencePrediction {
    pub sequence_id: String,
    pub vas_true: u8,
    pub vas_pred: usize,
    /// Per-frame PSPI estimate on the `0..=max_pspi` scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pspi_estimate: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersonInference {
    pub person_id: String,
    pub ifes: IfesScore,
    /// Sequences whose labels produced the I-FES; never evaluated.
    pub ifes_sources: Vec<String>,
    pub predictions: Vec<SequencePrediction>,
}

impl PersonInference {
    pub fn mae(&self) -> f64 {
        self.predictions
            .iter()
            .map(|p| (p.vas_pred as f64 - f64::from(p.vas_true)).abs())
            .sum::<f64>()
            / self.predictions.len() as f64
    }
}

/// First-stage outputs of one person's sequences, computed once and reused
/// across every alpha and repetition.
#[derive(Clone, Debug)]
pub struct StageCache {
    pub stage: Vec<Vec<Vec<f64>>>,
}

impl StageCache {
    pub fn build(artifacts: &Artifacts, person: &PersonRecord) -> Result<Self> {
        Ok(StageCache {
            stage: person
                .sequences
                .iter()
                .map(|s| artifacts.stage_features(s))
                .collect::<Result<_>>()?,
        })
    }
}

/// Personalizes a test person from `alpha` randomly chosen sequences and
/// predicts VAS for each remaining sequence.
pub fn run_inference(artifacts: &Artifacts, person: &PersonRecord, alpha: usize, seed: u64) -> Result<PersonInference> {
    let cache = StageCache::build(artifacts, person)?;
    let mut out = infer_cached(artifacts, person, &cache, alpha, seed)?;
    if artifacts.first_stage != super::FirstStage::Raw {
        let scale = f64::from(artifacts.max_pspi);
        let evaluated = out.predictions.iter_mut();
        let remaining = person.sequences.iter().enumerate().filter(|(i, _)| !out.ifes.selected.contains(i));
        for (pred, (i, _)) in evaluated.zip(remaining) {
            pred.pspi_estimate = Some(cache.stage[i].iter().map(|f| f[0] * scale).collect());
        }
    }
    Ok(out)
}

pub(crate) fn infer_cached(
    artifacts: &Artifacts,
    person: &PersonRecord,
    cache: &StageCache,
    alpha: usize,
    seed: u64,
) -> Result<PersonInference> {
    if alpha >= person.sequences.len() {
        return Err(Error::invalid(format!(
            "person {}: alpha = {alpha} leaves none of its {} sequences to evaluate",
            person.person_id,
            person.sequences.len()
        )));
    }
    let ifes = compute_ifes(&person.person_id, &person.label_pairs(), alpha, seed)?;
    let mut predictions = Vec::with_capacity(person.sequences.len() - alpha);
    for (i, seq) in person.sequences.iter().enumerate() {
        if ifes.selected.binary_search(&i).is_ok() {
            continue;
        }
        let input = Artifacts::hcrf_input(&cache.stage[i], ifes.p);
        predictions.push(SequencePrediction {
            sequence_id: seq.id.clone(),
            vas_true: seq.vas,
            vas_pred: artifacts.hcrf.predict_vas(&input)?,
            pspi_estimate: None,
        });
    }
    Ok(PersonInference {
        person_id: person.person_id.clone(),
        ifes_sources: ifes.selected.iter().map(|&i| person.sequences[i].id.clone()).collect(),
        ifes,
        predictions,
    })
}
