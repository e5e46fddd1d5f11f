use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use painvas::data::save_cohort;
use painvas::io::{format_real, write_json};
use painvas::pipeline::{
    evaluate_pspi_stage, person_seed, repetition_seed, run_alpha_experiment, run_inference, run_learning,
    split_cohort, write_experiment, Artifacts, CohortSource, ExperimentConfig, FirstStage, RunManifest,
};
use painvas::{Error, Result};

#[derive(Parser)]
#[command(name = "painvas", version, about = "Personalized VAS estimation from facial landmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic cohort (manifest + per-sequence CSVs).
    Generate(Common),
    /// Train the first stage, I-FES table and HCRF; save the artifacts.
    Train(Common),
    /// Predict VAS for the test persons with saved artifacts.
    Infer {
        #[command(flatten)]
        common: Common,
        /// Artifact directory written by `train` (defaults to --out).
        #[arg(long)]
        artifacts: Option<PathBuf>,
    },
    /// Train, then run the alpha sweep with repeated I-FES subset draws.
    Experiment(Common),
    /// Train, then score per-frame PSPI estimates on the test persons.
    EvalPspi(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment config, or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed (for `generate`, the cohort seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// bilstm, ffn, gt-pspi or raw.
    #[arg(long)]
    first_stage: Option<FirstStage>,
}

impl Common {
    fn resolve(&self, verb: &str) -> Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p).map_err(|e| e.in_stage("config"))?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.first_stage {
            cfg.first_stage = s;
        }
        if let Some(seed) = self.seed {
            match (verb, &mut cfg.cohort) {
                ("generate", CohortSource::Synthetic { seed: s, .. }) => *s = seed,
                _ => cfg.seed = seed,
            }
        }
        let out = self
            .out
            .clone()
            .or_else(|| cfg.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("runs").join(verb));
        cfg.validate().map_err(|e| e.in_stage("config"))?;
        Ok((cfg, out))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate(c) => generate(&c),
        Command::Train(c) => train(&c),
        Command::Infer { common, artifacts } => infer(&common, artifacts.as_deref()),
        Command::Experiment(c) => experiment(&c),
        Command::EvalPspi(c) => eval_pspi(&c),
    }
}

fn generate(c: &Common) -> Result<()> {
    let (cfg, out) = c.resolve("generate")?;
    if !matches!(cfg.cohort, CohortSource::Synthetic { .. }) {
        return Err(Error::InvalidArgument("generate needs a synthetic cohort source".into()).in_stage("config"));
    }
    let cohort = cfg.load_cohort().map_err(|e| e.in_stage("data"))?;
    let manifest = save_cohort(&cohort, &out).map_err(|e| e.in_stage("data"))?;
    println!(
        "wrote {} persons / {} sequences to {}",
        cohort.persons.len(),
        cohort.num_sequences(),
        manifest.display()
    );
    Ok(())
}

fn train(c: &Common) -> Result<()> {
    let (cfg, out) = c.resolve("train")?;
    let (train, test) = split_cohort(&cfg)?;
    let artifacts = run_learning(&cfg, &train)?;
    let files = artifacts.save(&out).map_err(|e| e.in_stage("output"))?;
    let mut manifest = RunManifest::new("train", &cfg, &ids(&train.persons), &ids(&test.persons));
    manifest.files = relative(&out, files);
    write_json(&out.join("manifest.json"), &manifest).map_err(|e| e.in_stage("output"))?;
    println!(
        "trained {} first stage on {} persons (PCA {} components, lambda {}); artifacts in {}",
        cfg.first_stage,
        train.persons.len(),
        artifacts.pca.n_components(),
        format_real(artifacts.lambda),
        out.display()
    );
    Ok(())
}

fn infer(c: &Common, artifact_dir: Option<&Path>) -> Result<()> {
    let (cfg, out) = c.resolve("infer")?;
    let dir = artifact_dir.unwrap_or(&out);
    let artifacts = Artifacts::load(dir).map_err(|e| e.in_stage("artifacts"))?;
    let (train, test) = split_cohort(&cfg)?;
    let seed = repetition_seed(cfg.seed, 1);
    let mut files = Vec::new();
    for &alpha in &cfg.alphas {
        let persons = test
            .persons
            .iter()
            .enumerate()
            .map(|(i, p)| run_inference(&artifacts, p, alpha, person_seed(seed, i)))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.in_stage("inference"))?;
        let path = out.join(format!("predictions_alpha_{alpha}.json"));
        write_json(&path, &persons).map_err(|e| e.in_stage("output"))?;
        let n: usize = persons.iter().map(|p| p.predictions.len()).sum();
        println!("alpha {alpha}: {n} sequences predicted -> {}", path.display());
        files.push(path);
    }
    let mut manifest = RunManifest::new("infer", &cfg, &ids(&train.persons), &ids(&test.persons));
    manifest.files = relative(&out, files);
    write_json(&out.join("manifest.json"), &manifest).map_err(|e| e.in_stage("output"))
}

fn experiment(c: &Common) -> Result<()> {
    let (cfg, out) = c.resolve("experiment")?;
    let outcome = run_alpha_experiment(&cfg)?;
    write_experiment(&out, &cfg, &outcome).map_err(|e| e.in_stage("output"))?;
    println!("first stage {} | lambda {}", cfg.first_stage, format_real(outcome.artifacts.lambda));
    println!("alpha  mae_mean  mae_std  icc_mean");
    for s in &outcome.report.summary {
        println!(
            "{:>5}  {:>8.4}  {:>7.4}  {}",
            s.alpha,
            s.mae_mean,
            s.mae_std,
            s.icc_mean.map_or_else(|| "undefined".into(), |v| format!("{v:.4}"))
        );
    }
    if let Some(ev) = &outcome.report.pspi_stage {
        println!("PSPI stage: MAE {:.4}, ICC {:?}", ev.mae, ev.icc31);
    }
    println!("report in {}", out.display());
    Ok(())
}

fn eval_pspi(c: &Common) -> Result<()> {
    let (cfg, out) = c.resolve("eval-pspi")?;
    let (train, test) = split_cohort(&cfg)?;
    let artifacts = run_learning(&cfg, &train)?;
    let report = evaluate_pspi_stage(&artifacts, &test).map_err(|e| e.in_stage("metrics"))?;
    report.save_json(&out.join("pspi_eval.json")).map_err(|e| e.in_stage("output"))?;
    report
        .save_confusion_csv(&out.join("pspi_confusion.csv"))
        .map_err(|e| e.in_stage("output"))?;
    let mut manifest = RunManifest::new("eval-pspi", &cfg, &ids(&train.persons), &ids(&test.persons));
    manifest.files = vec![PathBuf::from("pspi_eval.json"), PathBuf::from("pspi_confusion.csv")];
    write_json(&out.join("manifest.json"), &manifest).map_err(|e| e.in_stage("output"))?;
    println!(
        "{} PSPI on {} test frames: MAE {:.4}, ICC {}",
        cfg.first_stage,
        report.n,
        report.mae,
        report.icc31.map_or_else(|| "undefined".into(), |v| format!("{v:.4}"))
    );
    Ok(())
}

fn ids(persons: &[painvas::data::PersonRecord]) -> Vec<String> {
    persons.iter().map(|p| p.person_id.clone()).collect()
}

fn relative(dir: &Path, files: Vec<PathBuf>) -> Vec<PathBuf> {
    files
        .into_iter()
        .map(|f| f.strip_prefix(dir).map_or_else(|_| f.clone(), Path::to_path_buf))
        .collect()
}
