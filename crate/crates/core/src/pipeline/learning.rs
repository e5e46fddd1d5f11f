use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{derive_seed, stream, ExperimentConfig, FirstStage};
use crate::data::{split_indices, Cohort, SequenceRecord};
use crate::error::{Error, Result, StageExt};
use crate::features::{balance_training_frames, fit_pca, normalize_landmarks, PcaModel};
use crate::hcrf::{train_hcrf, with_bias, HcrfModel, HcrfTrainConfig, LabeledSequence};
use crate::io::{read_json, write_json};
use crate::metrics::mae;
use crate::optim::{write_trace_csv, LbfgsResult};
use crate::personalization::{augment_features, compute_ifes, IfesScore};
use crate::pspi::scale_pspi;
use crate::regressor::{
    train_ffn, train_regressor, BiLstmDims, BiLstmRegressor, FeedforwardRegressor, FrameDataset, FrameTarget,
};

/// A trained frame-level PSPI regressor.
#[derive(Clone, Debug, PartialEq)]
pub enum Regressor {
    Bilstm(BiLstmRegressor),
    Ffn(FeedforwardRegressor),
}

impl Regressor {
    pub fn predict_sequence(&self, frames: &[Vec<f64>]) -> Result<Vec<f64>> {
        match self {
            Regressor::Bilstm(m) => m.predict_sequence(frames),
            Regressor::Ffn(m) => m.predict_sequence(frames),
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        match self {
            Regressor::Bilstm(m) => m.save_json(path),
            Regressor::Ffn(m) => m.save_json(path),
        }
    }
}

/// Seeds used by one learning run, all derived from the base seed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearningSeeds {
    pub base: u64,
    pub regressor_init: u64,
    pub regressor_shuffle: u64,
    pub hcrf_init: u64,
    pub lambda_split: u64,
}

impl LearningSeeds {
    pub fn from_base(base: u64) -> Self {
        LearningSeeds {
            base,
            regressor_init: derive_seed(base, stream::REGRESSOR_INIT),
            regressor_shuffle: derive_seed(base, stream::REGRESSOR_SHUFFLE),
            hcrf_init: derive_seed(base, stream::HCRF_INIT),
            lambda_split: derive_seed(base, stream::LAMBDA_SPLIT),
        }
    }
}

/// Validation MAE of one lambda candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaScore {
    pub lambda: f64,
    pub validation_mae: f64,
}

/// Everything produced by the learning phase.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub first_stage: FirstStage,
    pub max_pspi: u8,
    pub pca: PcaModel,
    pub regressor: Option<Regressor>,
    pub regressor_loss: Vec<f64>,
    pub hcrf: HcrfModel,
    pub hcrf_fit: Option<LbfgsResult>,
    pub lambda: f64,
    pub lambda_scores: Vec<LambdaScore>,
    pub train_ifes: Vec<IfesScore>,
    pub seeds: LearningSeeds,
}

impl Artifacts {
    /// Normalized, PCA-projected landmark frames.
    pub fn project(&self, seq: &SequenceRecord) -> Result<Vec<Vec<f64>>> {
        self.pca.project_all(&normalize_landmarks(&seq.frames)?)
    }

    /// Per-frame output of the first stage (before personalization).
    pub fn stage_features(&self, seq: &SequenceRecord) -> Result<Vec<Vec<f64>>> {
        match self.first_stage {
            FirstStage::GtPspi => seq
                .pspi
                .iter()
                .map(|&s| Ok(vec![scale_pspi(s, self.max_pspi)?]))
                .collect(),
            FirstStage::Raw => self.project(seq),
            FirstStage::Bilstm | FirstStage::Ffn => {
                let est = self.estimate_from_projection(&self.project(seq)?)?;
                Ok(est.into_iter().map(|v| vec![v]).collect())
            }
        }
    }

    fn estimate_from_projection(&self, projected: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.regressor
            .as_ref()
            .ok_or_else(|| Error::invalid("artifacts have no trained regressor"))?
            .predict_sequence(projected)
    }

    /// Per-frame PSPI estimate on the `[0, 1]` scale, or `None` when the first
    /// stage does not estimate PSPI.
    pub fn estimate_pspi(&self, seq: &SequenceRecord) -> Result<Option<Vec<f64>>> {
        match self.first_stage {
            FirstStage::Raw => Ok(None),
            _ => Ok(Some(self.stage_features(seq)?.into_iter().map(|f| f[0]).collect())),
        }
    }

    /// HCRF input for a sequence: stage output, the I-FES value, then the bias.
    pub fn hcrf_input(stage: &[Vec<f64>], ifes: f64) -> Vec<Vec<f64>> {
        with_bias(&augment_features(stage, ifes))
    }

    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut files = Vec::new();
        let mut put = |name: &str| {
            let p = dir.join(name);
            files.push(p.clone());
            p
        };
        write_json(
            &put("artifacts.json"),
            &ArtifactMeta {
                first_stage: self.first_stage,
                max_pspi: self.max_pspi,
                lambda: self.lambda,
                lambda_scores: self.lambda_scores.clone(),
                seeds: self.seeds.clone(),
                regressor_loss: self.regressor_loss.clone(),
            },
        )?;
        self.pca.save_json(&put("pca.json"))?;
        if let Some(r) = &self.regressor {
            r.save_json(&put("regressor.json"))?;
        }
        self.hcrf.save_json(&put("hcrf.json"))?;
        write_json(&put("train_ifes.json"), &self.train_ifes)?;
        if let Some(fit) = &self.hcrf_fit {
            let p = put("hcrf_trace.csv");
            let file = std::fs::File::create(&p).map_err(crate::io::io_err(&p))?;
            write_trace_csv(&fit.trace, std::io::BufWriter::new(file)).map_err(crate::io::io_err(&p))?;
        }
        Ok(files)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: ArtifactMeta = read_json(&dir.join("artifacts.json"))?;
        let regressor = match meta.first_stage {
            FirstStage::Bilstm => Some(Regressor::Bilstm(BiLstmRegressor::load_json(&dir.join("regressor.json"))?)),
            FirstStage::Ffn => Some(Regressor::Ffn(FeedforwardRegressor::load_json(&dir.join("regressor.json"))?)),
            _ => None,
        };
        Ok(Artifacts {
            first_stage: meta.first_stage,
            max_pspi: meta.max_pspi,
            pca: PcaModel::load_json(&dir.join("pca.json"))?,
            regressor,
            regressor_loss: meta.regressor_loss,
            hcrf: HcrfModel::load_json(&dir.join("hcrf.json"))?,
            hcrf_fit: None,
            lambda: meta.lambda,
            lambda_scores: meta.lambda_scores,
            train_ifes: read_json(&dir.join("train_ifes.json"))?,
            seeds: meta.seeds,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ArtifactMeta {
    first_stage: FirstStage,
    max_pspi: u8,
    lambda: f64,
    lambda_scores: Vec<LambdaScore>,
    seeds: LearningSeeds,
    regressor_loss: Vec<f64>,
}

/// Trains the first stage, computes training I-FES from every sequence of
/// each training person, and fits the HCRF on the personalized features.
pub fn run_learning(cfg: &ExperimentConfig, train: &Cohort) -> Result<Artifacts> {
    cfg.validate().stage("config")?;
    let seeds = LearningSeeds::from_base(cfg.seed);

    let all_frames: Vec<Vec<f64>> = train
        .sequences()
        .map(|s| normalize_landmarks(&s.frames))
        .collect::<Result<Vec<_>>>()
        .stage("features")?
        .into_iter()
        .flatten()
        .collect();
    let pca = fit_pca(&all_frames, cfg.pca_variance).stage("features")?;
    drop(all_frames);
    let projected: Vec<Vec<Vec<f64>>> = train
        .sequences()
        .map(|s| pca.project_all(&normalize_landmarks(&s.frames)?))
        .collect::<Result<_>>()
        .stage("features")?;

    let (regressor, regressor_loss) = if cfg.first_stage.is_learned() {
        let (r, loss) = train_first_stage(cfg, train, &projected, pca.n_components(), &seeds).stage("regressor")?;
        (Some(r), loss)
    } else {
        (None, Vec::new())
    };

    let train_ifes: Vec<IfesScore> = train
        .persons
        .iter()
        .map(|p| compute_ifes(&p.person_id, &p.label_pairs(), p.sequences.len(), 0))
        .collect::<Result<_>>()
        .stage("personalization")?;

    let mut per_person: Vec<Vec<LabeledSequence>> = Vec::with_capacity(train.persons.len());
    let mut flat = 0;
    for (person, ifes) in train.persons.iter().zip(&train_ifes) {
        let mut seqs = Vec::with_capacity(person.sequences.len());
        for s in &person.sequences {
            let stage: Vec<Vec<f64>> = match (&regressor, cfg.first_stage) {
                (Some(r), _) => r
                    .predict_sequence(&projected[flat])
                    .stage("regressor")?
                    .into_iter()
                    .map(|v| vec![v])
                    .collect(),
                (None, FirstStage::GtPspi) => s
                    .pspi
                    .iter()
                    .map(|&v| Ok(vec![scale_pspi(v, cfg.max_pspi)?]))
                    .collect::<Result<_>>()
                    .stage("features")?,
                (None, _) => projected[flat].clone(),
            };
            flat += 1;
            seqs.push(LabeledSequence {
                frames: Artifacts::hcrf_input(&stage, ifes.p),
                label: usize::from(s.vas),
            });
        }
        per_person.push(seqs);
    }

    let mut hcrf_cfg = cfg.hcrf.clone();
    hcrf_cfg.seed = seeds.hcrf_init;
    let mut lambda_scores = Vec::new();
    if !cfg.hcrf.lambda_grid.is_empty() && per_person.len() >= 2 {
        lambda_scores = select_lambda(&per_person, &hcrf_cfg, cfg.lambda_validation_fraction, seeds.lambda_split)
            .stage("hcrf")?;
        let mut best = &lambda_scores[0];
        for s in &lambda_scores[1..] {
            if s.validation_mae < best.validation_mae {
                best = s;
            }
        }
        hcrf_cfg.lambda = best.lambda;
    }
    let data: Vec<LabeledSequence> = per_person.into_iter().flatten().collect();
    let (hcrf, fit) = train_hcrf(&data, &hcrf_cfg).stage("hcrf")?;
    Ok(Artifacts {
        first_stage: cfg.first_stage,
        max_pspi: cfg.max_pspi,
        pca,
        regressor,
        regressor_loss,
        hcrf,
        hcrf_fit: Some(fit),
        lambda: hcrf_cfg.lambda,
        lambda_scores,
        train_ifes,
        seeds,
    })
}

fn train_first_stage(
    cfg: &ExperimentConfig,
    train: &Cohort,
    projected: &[Vec<Vec<f64>>],
    dim: usize,
    seeds: &LearningSeeds,
) -> Result<(Regressor, Vec<f64>)> {
    let seqs: Vec<&SequenceRecord> = train.sequences().collect();
    let kept = balance_training_frames(&seqs.iter().map(|s| s.pspi.as_slice()).collect::<Vec<_>>());
    let mut items = Vec::new();
    for (si, (seq, frames)) in seqs.iter().zip(&kept).enumerate() {
        for &t in frames {
            items.push(FrameTarget {
                sequence: si,
                frame: t,
                target: scale_pspi(seq.pspi[t], cfg.max_pspi)?,
            });
        }
    }
    let data = FrameDataset {
        sequences: projected.to_vec(),
        items,
    };
    let rc = &cfg.regressor;
    match cfg.first_stage {
        FirstStage::Bilstm => {
            let dims = BiLstmDims::new(dim, rc.hidden, rc.head_units, rc.window_radius)?;
            let init = BiLstmRegressor::new(dims, seeds.regressor_init);
            let (m, loss) = train_regressor(init, &data, &rc.rmsprop, seeds.regressor_shuffle)?;
            Ok((Regressor::Bilstm(m), loss))
        }
        FirstStage::Ffn => {
            let init = FeedforwardRegressor::new(dim, rc.ffn_hidden, seeds.regressor_init)?;
            let (m, loss) = train_ffn(init, &data, &rc.rmsprop, seeds.regressor_shuffle)?;
            Ok((Regressor::Ffn(m), loss))
        }
        _ => unreachable!("only learned stages are trained"),
    }
}

/// Scores every lambda of the grid by VAS MAE on held-out training persons.
fn select_lambda(
    per_person: &[Vec<LabeledSequence>],
    cfg: &HcrfTrainConfig,
    fraction: f64,
    seed: u64,
) -> Result<Vec<LambdaScore>> {
    let n = per_person.len();
    let n_val = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let (inner, val) = split_indices(n, n - n_val, seed)?;
    let pick = |idx: &[usize]| -> Vec<LabeledSequence> { idx.iter().flat_map(|&i| per_person[i].iter().cloned()).collect() };
    let (fit_data, val_data) = (pick(&inner), pick(&val));
    let truth: Vec<f64> = val_data.iter().map(|s| s.label as f64).collect();
    cfg.lambda_grid
        .iter()
        .map(|&lambda| {
            let (model, _) = train_hcrf(&fit_data, &HcrfTrainConfig { lambda, ..cfg.clone() })?;
            let pred: Vec<f64> = val_data
                .iter()
                .map(|s| model.predict_vas(&s.frames).map(|v| v as f64))
                .collect::<Result<_>>()?;
            Ok(LambdaScore {
                lambda,
                validation_mae: mae(&pred, &truth)?,
            })
        })
        .collect()
}
