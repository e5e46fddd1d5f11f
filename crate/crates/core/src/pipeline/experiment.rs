use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{derive_seed, stream, ExperimentConfig, FirstStage};
use super::inference::{infer_cached, PersonInference, StageCache};
use super::learning::{run_learning, Artifacts, LearningSeeds};
use crate::data::{split_subject_independent, Cohort};
use crate::error::{Error, Result, StageExt};
use crate::io::{format_real, io_err, write_json};
use crate::metrics::{icc31, mae, mean_std, write_confusion_csv, EvalReport};
use crate::personalization::IfesScore;

/// Metrics of one (alpha, repetition) condition, pooled over test persons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub alpha: usize,
    pub repetition: usize,
    pub seed: u64,
    pub mae: f64,
    pub icc31: Option<f64>,
    pub n: usize,
    pub confusion: Vec<Vec<u64>>,
    pub persons: Vec<PersonInference>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersonMae {
    pub person_id: String,
    pub mae_mean: f64,
    pub mae_std: f64,
}

/// Mean and sample standard deviation across repetitions for one alpha.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaSummary {
    pub alpha: usize,
    pub repetitions: usize,
    pub mae_mean: f64,
    pub mae_std: f64,
    pub icc_mean: Option<f64>,
    pub icc_std: Option<f64>,
    pub per_person: Vec<PersonMae>,
    /// Summed over repetitions.
    pub confusion: Vec<Vec<u64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub first_stage: FirstStage,
    pub train_persons: Vec<String>,
    pub test_persons: Vec<String>,
    pub lambda: f64,
    pub train_ifes: Vec<IfesScore>,
    pub pspi_stage: Option<EvalReport>,
    pub summary: Vec<AlphaSummary>,
    pub cells: Vec<CellReport>,
}

impl ExperimentReport {
    pub fn alpha(&self, alpha: usize) -> Option<&AlphaSummary> {
        self.summary.iter().find(|s| s.alpha == alpha)
    }
}

/// Seed of repetition `r` (1-based).
pub fn repetition_seed(base: u64, r: usize) -> u64 {
    base.wrapping_add(r as u64)
}

/// Seed of the I-FES subset draw for the `index`-th test person.
pub fn person_seed(repetition_seed: u64, index: usize) -> u64 {
    derive_seed(repetition_seed, stream::PERSON_BASE + index as u64)
}

/// Runs the alpha sweep on an already trained pipeline.
pub fn evaluate_alphas(cfg: &ExperimentConfig, artifacts: &Artifacts, test: &Cohort) -> Result<Vec<CellReport>> {
    let num_labels = artifacts.hcrf.num_classes();
    let caches: Vec<StageCache> = test
        .persons
        .iter()
        .map(|p| StageCache::build(artifacts, p))
        .collect::<Result<_>>()
        .stage("inference")?;
    let mut cells = Vec::with_capacity(cfg.alphas.len() * cfg.repetitions);
    for &alpha in &cfg.alphas {
        for r in 1..=cfg.repetitions {
            let seed = repetition_seed(cfg.seed, r);
            let persons: Vec<PersonInference> = test
                .persons
                .iter()
                .zip(&caches)
                .enumerate()
                .map(|(i, (p, c))| infer_cached(artifacts, p, c, alpha, person_seed(seed, i)))
                .collect::<Result<_>>()
                .stage("inference")?;
            let (pred, truth): (Vec<f64>, Vec<usize>) = persons
                .iter()
                .flat_map(|p| p.predictions.iter().map(|s| (s.vas_pred as f64, usize::from(s.vas_true))))
                .unzip();
            let truth_f: Vec<f64> = truth.iter().map(|&t| t as f64).collect();
            let pred_labels: Vec<usize> = pred.iter().map(|&p| p as usize).collect();
            cells.push(CellReport {
                alpha,
                repetition: r,
                seed,
                mae: mae(&pred, &truth_f).stage("metrics")?,
                icc31: if pred.len() >= 2 { icc31(&pred, &truth_f).stage("metrics")? } else { None },
                n: pred.len(),
                confusion: crate::metrics::confusion_matrix(&pred_labels, &truth, num_labels).stage("metrics")?,
                persons,
            });
        }
    }
    Ok(cells)
}

pub fn summarize(cells: &[CellReport], alphas: &[usize]) -> Vec<AlphaSummary> {
    alphas
        .iter()
        .map(|&alpha| {
            let group: Vec<&CellReport> = cells.iter().filter(|c| c.alpha == alpha).collect();
            let maes: Vec<f64> = group.iter().map(|c| c.mae).collect();
            let iccs: Vec<f64> = group.iter().filter_map(|c| c.icc31).collect();
            let (mae_mean, mae_std) = mean_std(&maes);
            let (icc_mean, icc_std) = if iccs.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_std(&iccs);
                (Some(m), Some(s))
            };
            let mut by_person: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
            let mut order: Vec<&str> = Vec::new();
            for c in &group {
                for p in &c.persons {
                    if !by_person.contains_key(p.person_id.as_str()) {
                        order.push(&p.person_id);
                    }
                    by_person.entry(&p.person_id).or_default().push(p.mae());
                }
            }
            let per_person = order
                .iter()
                .map(|id| {
                    let (m, s) = mean_std(&by_person[id]);
                    PersonMae {
                        person_id: id.to_string(),
                        mae_mean: m,
                        mae_std: s,
                    }
                })
                .collect();
            let labels = group.first().map_or(0, |c| c.confusion.len());
            let mut confusion = vec![vec![0u64; labels]; labels];
            for c in &group {
                for (row, src) in confusion.iter_mut().zip(&c.confusion) {
                    for (a, b) in row.iter_mut().zip(src) {
                        *a += b;
                    }
                }
            }
            AlphaSummary {
                alpha,
                repetitions: group.len(),
                mae_mean,
                mae_std,
                icc_mean,
                icc_std,
                per_person,
                confusion,
            }
        })
        .collect()
}

/// Per-frame MAE and ICC(3,1) of the PSPI estimates on the `0..=max_pspi`
/// scale; the confusion matrix uses rounded estimates.
pub fn evaluate_pspi_stage(artifacts: &Artifacts, test: &Cohort) -> Result<EvalReport> {
    if artifacts.first_stage == FirstStage::Raw {
        return Err(Error::invalid("the raw-feature first stage does not estimate PSPI"));
    }
    let scale = f64::from(artifacts.max_pspi);
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for seq in test.sequences() {
        let est = artifacts.estimate_pspi(seq)?.expect("PSPI-estimating stage");
        pred.extend(est.iter().map(|v| v * scale));
        truth.extend(seq.pspi.iter().map(|&v| usize::from(v)));
    }
    EvalReport::from_predictions(&pred, &truth, usize::from(artifacts.max_pspi) + 1)
}

/// Learning plus the alpha sweep, with the artifacts that produced the report.
#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub artifacts: Artifacts,
    pub report: ExperimentReport,
}

pub fn split_cohort(cfg: &ExperimentConfig) -> Result<(Cohort, Cohort)> {
    let cohort = cfg.load_cohort().stage("data")?;
    split_subject_independent(&cohort, cfg.split.n_train, cfg.split.seed).stage("data")
}

pub fn run_alpha_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate().stage("config")?;
    let (train, test) = split_cohort(cfg)?;
    let artifacts = run_learning(cfg, &train)?;
    let report = experiment_report(cfg, &artifacts, &train, &test)?;
    Ok(ExperimentOutcome { artifacts, report })
}

pub fn experiment_report(
    cfg: &ExperimentConfig,
    artifacts: &Artifacts,
    train: &Cohort,
    test: &Cohort,
) -> Result<ExperimentReport> {
    let cells = evaluate_alphas(cfg, artifacts, test)?;
    let pspi_stage = if artifacts.first_stage == FirstStage::Raw {
        None
    } else {
        Some(evaluate_pspi_stage(artifacts, test).stage("metrics")?)
    };
    Ok(ExperimentReport {
        first_stage: artifacts.first_stage,
        train_persons: train.persons.iter().map(|p| p.person_id.clone()).collect(),
        test_persons: test.persons.iter().map(|p| p.person_id.clone()).collect(),
        lambda: artifacts.lambda,
        train_ifes: artifacts.train_ifes.clone(),
        pspi_stage,
        summary: summarize(&cells, &cfg.alphas),
        cells,
    })
}

/// Seeds and configuration needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub learning_seeds: LearningSeeds,
    pub repetition_seeds: Vec<u64>,
    pub train_persons: Vec<String>,
    pub test_persons: Vec<String>,
    pub files: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &ExperimentConfig, train: &[String], test: &[String]) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: cfg.clone(),
            learning_seeds: LearningSeeds::from_base(cfg.seed),
            repetition_seeds: (1..=cfg.repetitions).map(|r| repetition_seed(cfg.seed, r)).collect(),
            train_persons: train.to_vec(),
            test_persons: test.to_vec(),
            files: Vec::new(),
        }
    }
}

/// Writes artifacts, `report.json`, CSV side files and `manifest.json`.
pub fn write_experiment(dir: &Path, cfg: &ExperimentConfig, outcome: &ExperimentOutcome) -> Result<RunManifest> {
    let report = &outcome.report;
    let mut manifest = RunManifest::new("experiment", cfg, &report.train_persons, &report.test_persons);
    let mut files = outcome.artifacts.save(&dir.join("artifacts"))?;

    let report_path = dir.join("report.json");
    write_json(&report_path, report)?;
    files.push(report_path);

    let summary_path = dir.join("summary.csv");
    let mut text = String::from("alpha,repetitions,mae_mean,mae_std,icc_mean,icc_std\n");
    let opt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), format_real);
    for s in &report.summary {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.alpha,
            s.repetitions,
            format_real(s.mae_mean),
            format_real(s.mae_std),
            opt(s.icc_mean),
            opt(s.icc_std)
        ));
    }
    std::fs::write(&summary_path, text).map_err(io_err(&summary_path))?;
    files.push(summary_path);

    let person_path = dir.join("per_person_mae.csv");
    let mut text = String::from("person_id");
    for s in &report.summary {
        text.push_str(&format!(",alpha_{}", s.alpha));
    }
    text.push('\n');
    for id in &report.test_persons {
        text.push_str(id);
        for s in &report.summary {
            let v = s.per_person.iter().find(|p| &p.person_id == id).map(|p| p.mae_mean);
            text.push(',');
            text.push_str(&v.map_or_else(String::new, format_real));
        }
        text.push('\n');
    }
    std::fs::write(&person_path, text).map_err(io_err(&person_path))?;
    files.push(person_path);

    for s in &report.summary {
        let p = dir.join(format!("confusion_alpha_{}.csv", s.alpha));
        write_confusion_csv(&s.confusion, &p)?;
        files.push(p);
    }
    if let Some(ev) = &report.pspi_stage {
        let p = dir.join("pspi_eval.json");
        ev.save_json(&p)?;
        files.push(p);
        let p = dir.join("pspi_confusion.csv");
        ev.save_confusion_csv(&p)?;
        files.push(p);
    }

    manifest.files = files
        .iter()
        .map(|f| f.strip_prefix(dir).map_or_else(|_| f.clone(), Path::to_path_buf))
        .collect();
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
