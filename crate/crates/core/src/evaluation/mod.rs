//! Cross-validation and cross-dataset evaluation with ROC-AUC.
//!
//! Training only ever sees [`Signal`]s, so labels cannot leak into the
//! autoencoders or projections.

mod auc;
mod report;

pub use auc::{kfold_split, roc_auc, ScoredRecord};
pub use report::{format_table, reports_csv, write_reports, EvalReport};

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autoencoder::{train, ArchitectureConfig, Autoencoder, EpochStats, TrainConfig};
use crate::error::{Error, Result};
use crate::trigger::{train_projections, Detector, Method, MethodConfig, NormSource, ProjectionConfig, ProjectionSet, TriggerConfig};
use crate::waveform::{onset_margin_filter, preprocess_records, strip_labels, Label, PreprocessConfig, Signal, Waveform};

/// One row of the results table: a scoring method plus the training noise
/// level of its autoencoders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub method: Method,
    pub denoise_sigma: f64,
}

impl Variant {
    pub fn new(method: Method, denoise_sigma: f64) -> Self {
        let name = if denoise_sigma > 0.0 {
            format!("{method}-denoising")
        } else {
            method.to_string()
        };
        Self {
            name,
            method,
            denoise_sigma,
        }
    }

    /// Single and augmented, each plain and denoising, plus the ensemble.
    pub fn table_rows(denoise_sigma: f64) -> Vec<Variant> {
        vec![
            Variant::new(Method::Single, 0.0),
            Variant::new(Method::Single, denoise_sigma),
            Variant::new(Method::Augmented, 0.0),
            Variant::new(Method::Augmented, denoise_sigma),
            Variant::new(Method::Ensemble, 0.0),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub folds: usize,
    pub seed: u64,
    /// Test events with an onset closer than this to a window edge are dropped.
    pub onset_margin_seconds: f64,
    pub variants: Vec<Variant>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            seed: 0,
            onset_margin_seconds: 3.0,
            variants: Variant::table_rows(0.2),
        }
    }
}

/// Everything the evaluation protocol needs besides the data.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Pipeline {
    pub preprocess: PreprocessConfig,
    pub arch: ArchitectureConfig,
    pub train: TrainConfig,
    pub projection: ProjectionConfig,
    pub trigger: TriggerConfig,
    /// `method` is overridden per variant; the rest (k, pairs, warp,
    /// normalization, seed) is shared.
    pub method: MethodConfig,
    pub eval: EvalConfig,
}

/// Raw records of one dataset.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub records: Vec<Waveform>,
}

#[derive(Clone, Debug)]
pub struct FoldScores {
    pub variant: String,
    pub fold: usize,
    pub records: Vec<ScoredRecord>,
}

#[derive(Clone, Debug)]
pub struct TrainingLog {
    pub fold: usize,
    pub denoise_sigma: f64,
    pub member: usize,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
}

#[derive(Clone, Debug)]
pub struct EvalOutcome {
    pub reports: Vec<EvalReport>,
    pub scores: Vec<FoldScores>,
    pub training: Vec<TrainingLog>,
    /// Why records were dropped during preprocessing.
    pub rejected: Vec<String>,
}

/// Seed of ensemble member `member` in fold `fold`.
pub fn model_seed(seed: u64, fold: usize, member: usize) -> u64 {
    seed.wrapping_mul(0x2545_f491_4f6c_dd1d)
        .wrapping_add((fold as u64) << 32)
        .wrapping_add(member as u64 + 1)
}

fn sigma_tag(sigma: f64) -> String {
    format!("s{}", (sigma * 1000.0).round() as u64)
}

/// Trains autoencoders on demand and shares them between variants within
/// one fold: member `m` at noise level `sigma` is trained once.
struct ModelCache<'a> {
    pipeline: &'a Pipeline,
    fold: usize,
    data: &'a [Signal],
    models: HashMap<(u64, usize), Autoencoder>,
    projections: HashMap<u64, ProjectionSet>,
    logs: Vec<TrainingLog>,
    artifacts: Option<&'a Path>,
}

impl<'a> ModelCache<'a> {
    fn model(&mut self, sigma: f64, member: usize) -> Result<Autoencoder> {
        if let Some(m) = self.models.get(&(sigma.to_bits(), member)) {
            return Ok(m.clone());
        }
        let p = self.pipeline;
        let seed = model_seed(p.eval.seed, self.fold, member);
        let cfg = TrainConfig {
            denoise_sigma: sigma,
            seed,
            ..p.train.clone()
        };
        log::info!("fold {}: training model {member} (denoise {sigma})", self.fold);
        let trained = train(Autoencoder::build(&p.arch, seed)?, self.data, &cfg)?;
        if let Some(dir) = self.artifacts {
            let name = format!("fold{}_{}_m{member}", self.fold, sigma_tag(sigma));
            trained.model.save(&dir.join(format!("{name}.rcvw")))?;
            crate::autoencoder::write_history_csv(&dir.join(format!("{name}_history.csv")), &trained.history)?;
        }
        self.logs.push(TrainingLog {
            fold: self.fold,
            denoise_sigma: sigma,
            member,
            history: trained.history.clone(),
            best_epoch: trained.best_epoch,
        });
        self.models.insert((sigma.to_bits(), member), trained.model.clone());
        Ok(trained.model)
    }

    fn detector(&mut self, variant: &Variant) -> Result<Detector> {
        let p = self.pipeline;
        let method = MethodConfig {
            method: variant.method,
            ..p.method.clone()
        };
        let count = variant.method.model_count(method.k);
        let models = (0..count)
            .map(|m| self.model(variant.denoise_sigma, m))
            .collect::<Result<Vec<_>>>()?;
        let mut det = Detector::new(method, p.trigger.clone(), models)?;
        if variant.method == Method::Ensemble {
            let key = variant.denoise_sigma.to_bits();
            let proj = match self.projections.get(&key) {
                Some(p) => p.clone(),
                None => {
                    let cfg = ProjectionConfig {
                        seed: model_seed(p.eval.seed, self.fold, 0),
                        ..p.projection.clone()
                    };
                    let fit = train_projections(&det.models, self.data, &cfg)?;
                    if let Some(dir) = self.artifacts {
                        let name = format!("fold{}_{}_projections.rcvw", self.fold, sigma_tag(variant.denoise_sigma));
                        fit.projections.save(&dir.join(name))?;
                    }
                    self.projections.insert(key, fit.projections.clone());
                    fit.projections
                }
            };
            det = det.with_projections(proj)?;
        }
        if det.method.norm == NormSource::Running {
            det.fit_running_stats(self.data)?;
        }
        Ok(det)
    }
}

fn labels_of(records: &[Waveform], dataset: &str) -> Result<Vec<Label>> {
    records
        .iter()
        .map(|w| {
            w.label.ok_or_else(|| Error::Record {
                id: w.id.clone(),
                reason: format!("unlabeled record in evaluation dataset {dataset}"),
            })
        })
        .collect()
}

fn prepare(pipeline: &Pipeline, data: &Dataset, rejected: &mut Vec<String>) -> Result<Vec<Waveform>> {
    let (mut ok, failed) = preprocess_records(&data.records, &pipeline.preprocess, pipeline.eval.seed);
    for e in &failed {
        log::warn!("{}: skipping record: {e}", data.name);
    }
    rejected.extend(failed.iter().map(|e| e.to_string()));
    if ok.is_empty() {
        return Err(Error::Empty(format!("dataset {} has no usable records", data.name)));
    }
    ok.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(ok)
}

/// Scores held-out records with every variant of one fold.
fn score_fold(
    cache: &mut ModelCache<'_>,
    test: &[Waveform],
    fold: usize,
    scores: &mut Vec<FoldScores>,
) -> Result<Vec<f64>> {
    let labels = labels_of(test, "test split")?;
    let mut aucs = Vec::new();
    for v in &cache.pipeline.eval.variants {
        let det = cache.detector(v)?;
        let s = det.score(test)?;
        let records: Vec<ScoredRecord> = test
            .iter()
            .zip(&labels)
            .zip(&s)
            .map(|((w, &label), &score)| ScoredRecord {
                id: w.id.clone(),
                label,
                score,
            })
            .collect();
        let auc = roc_auc(&records)?;
        log::info!("fold {fold}: {} AUC {auc:.4}", v.name);
        aucs.push(auc);
        scores.push(FoldScores {
            variant: v.name.clone(),
            fold,
            records,
        });
    }
    Ok(aucs)
}

/// K-fold cross-validation on `train_set`, or, with `test_set`, training on
/// all of one dataset and testing on all of the other once per fold seed.
/// Model checkpoints and histories go to `artifacts` when given.
pub fn evaluate(pipeline: &Pipeline, train_set: &Dataset, test_set: Option<&Dataset>, artifacts: Option<&Path>) -> Result<EvalOutcome> {
    let cfg = &pipeline.eval;
    if cfg.variants.is_empty() {
        return Err(Error::Config("no evaluation variants configured".into()));
    }
    if cfg.folds < 2 && test_set.is_none() {
        return Err(Error::Config(format!("cross-validation needs at least 2 folds, got {}", cfg.folds)));
    }
    pipeline.method.validate()?;
    pipeline.trigger.validate()?;
    let mut rejected = Vec::new();
    let train_records = prepare(pipeline, train_set, &mut rejected)?;
    let test_records = test_set.map(|t| prepare(pipeline, t, &mut rejected)).transpose()?;

    let mut fold_aucs = vec![Vec::new(); cfg.variants.len()];
    let mut scores = Vec::new();
    let mut training = Vec::new();
    let n_runs = cfg.folds.max(1);
    let folds = match &test_records {
        None => Some(kfold_split(&labels_of(&train_records, &train_set.name)?, cfg.folds, cfg.seed)?),
        Some(_) => None,
    };
    for fold in 0..n_runs {
        let (train_data, test): (Vec<Signal>, Vec<Waveform>) = match (&folds, &test_records) {
            (Some(folds), _) => {
                let held = &folds[fold];
                let mut in_test = vec![false; train_records.len()];
                held.iter().for_each(|&i| in_test[i] = true);
                let train_part: Vec<Waveform> = train_records
                    .iter()
                    .zip(&in_test)
                    .filter(|(_, &t)| !t)
                    .map(|(w, _)| w.clone())
                    .collect();
                let test_part = held.iter().map(|&i| train_records[i].clone()).collect();
                (strip_labels(&train_part), test_part)
            }
            (None, Some(test)) => (strip_labels(&train_records), test.clone()),
            (None, None) => unreachable!("either folds or a test set"),
        };
        let test = onset_margin_filter(test, cfg.onset_margin_seconds);
        log::info!("fold {fold}: {} training records, {} test records", train_data.len(), test.len());
        let mut cache = ModelCache {
            pipeline,
            fold,
            data: &train_data,
            models: HashMap::new(),
            projections: HashMap::new(),
            logs: Vec::new(),
            artifacts,
        };
        let aucs = score_fold(&mut cache, &test, fold, &mut scores)?;
        training.append(&mut cache.logs);
        for (v, auc) in aucs.into_iter().enumerate() {
            fold_aucs[v].push(auc);
        }
    }
    let test_name = test_set.map_or(train_set.name.clone(), |t| t.name.clone());
    let reports = cfg
        .variants
        .iter()
        .zip(fold_aucs)
        .map(|(v, fold_auc)| EvalReport {
            method: v.name.clone(),
            train_dataset: train_set.name.clone(),
            test_dataset: test_name.clone(),
            fold_auc,
        })
        .collect();
    Ok(EvalOutcome {
        reports,
        scores,
        training,
        rejected,
    })
}

/// `id,label,method,score` rows.
pub fn scores_csv(records: &[ScoredRecord], method: &str) -> String {
    let mut s = String::from("id,label,method,score\n");
    for r in records {
        writeln!(s, "{},{},{method},{}", r.id, r.label, r.score).ok();
    }
    s
}

/// Writes the report, the text table and per-fold score files into `dir`.
pub fn write_outcome(dir: &Path, outcome: &EvalOutcome) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_reports(dir, &outcome.reports)?;
    let mut written = vec![dir.join("report.csv"), dir.join("report.txt")];
    for f in &outcome.scores {
        let path = dir.join(format!("scores_{}_fold{}.csv", f.variant, f.fold));
        fs::write(&path, scores_csv(&f.records, &f.variant)).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate_records, SynthConfig};

    fn tiny_pipeline() -> Pipeline {
        Pipeline {
            preprocess: PreprocessConfig {
                window_seconds: 8.0,
                ..Default::default()
            },
            arch: ArchitectureConfig {
                n_down: 2,
                base_channels: 2,
                input_len: 800,
                ..Default::default()
            },
            train: TrainConfig {
                batch_size: 8,
                epochs: 1,
                lr: 1e-3,
                ..Default::default()
            },
            projection: ProjectionConfig {
                epochs: 1,
                ..Default::default()
            },
            trigger: TriggerConfig {
                sigma0_seconds: 0.5,
                max_lag_seconds: 2.0,
            },
            method: MethodConfig {
                k: 2,
                ..Default::default()
            },
            eval: EvalConfig {
                folds: 2,
                seed: 3,
                onset_margin_seconds: 1.0,
                variants: vec![Variant::new(Method::Single, 0.0), Variant::new(Method::Ensemble, 0.0)],
            },
        }
    }

    fn tiny_data(seed: u64) -> Dataset {
        let cfg = SynthConfig {
            n_event: 6,
            n_noise: 6,
            window_seconds: 10.0,
            onset_range_seconds: (3.0, 6.0),
            seed,
            ..Default::default()
        };
        Dataset {
            name: format!("syn{seed}"),
            records: generate_records(&cfg).unwrap(),
        }
    }

    #[test]
    fn variants_and_seeds() {
        let rows = Variant::table_rows(0.2);
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[1].name, "single-denoising");
        assert_ne!(model_seed(0, 0, 0), model_seed(0, 1, 0));
        assert_ne!(model_seed(0, 0, 0), model_seed(0, 0, 1));
    }

    #[test]
    fn cross_validation_runs_and_shares_models() {
        let out = evaluate(&tiny_pipeline(), &tiny_data(1), None, None).unwrap();
        assert_eq!(out.reports.len(), 2);
        assert!(out.reports.iter().all(|r| r.fold_auc.len() == 2));
        assert!(out.reports.iter().flat_map(|r| &r.fold_auc).all(|a| (0.0..=1.0).contains(a)));
        // Ensemble member 0 is the single model: k models per fold in total.
        assert_eq!(out.training.len(), 4);
        // Held-out folds never overlap.
        let f0: Vec<&str> = out.scores[0].records.iter().map(|r| r.id.as_str()).collect();
        assert!(out.scores[2].records.iter().all(|r| !f0.contains(&r.id.as_str())));
    }

    #[test]
    fn cross_dataset_trains_on_all_of_a() {
        let mut p = tiny_pipeline();
        p.eval.variants.truncate(1);
        let out = evaluate(&p, &tiny_data(1), Some(&tiny_data(2)), None).unwrap();
        assert_eq!(out.reports[0].test_dataset, "syn2");
        assert_eq!(out.reports[0].fold_auc.len(), 2);
        assert_eq!(out.scores[0].records.len(), out.scores[1].records.len());
    }

    #[test]
    fn rerun_is_reproducible() {
        let mut p = tiny_pipeline();
        p.eval.variants.truncate(1);
        let a = evaluate(&p, &tiny_data(4), None, None).unwrap();
        let b = evaluate(&p, &tiny_data(4), None, None).unwrap();
        assert_eq!(a.reports, b.reports);
    }

    #[test]
    fn unlabeled_cv_rejected() {
        let mut d = tiny_data(1);
        let w = &d.records[0];
        d.records[0] = Waveform::new(w.id.clone(), w.samples().to_vec(), w.sample_rate_hz, None, None).unwrap();
        assert!(evaluate(&tiny_pipeline(), &d, None, None).is_err());
    }

    #[test]
    fn scores_csv_layout() {
        let r = vec![ScoredRecord {
            id: "a".into(),
            label: Label::Event,
            score: 0.5,
        }];
        assert_eq!(scores_csv(&r, "single"), "id,label,method,score\na,event,single,0.5\n");
    }
}
