//! Covariance trigger: latent normalization, lag-domain cross-covariance,
//! the single / augmented / ensemble scoring methods and the Gaussian
//! weighted score.
//!
//! Scoring works on whole record sets because batch-mode normalization
//! couples every record in the set. Callers that need reproducible scores
//! should pass records in a fixed order (the evaluation code sorts by id).

mod covariance;
mod normalize;
mod projection;
mod warp;

pub use covariance::{
    cross_covariance, gaussian_score, gaussian_weights, pairwise_mean_profile, profile_pairs, CovarianceProfile,
    TriggerConfig,
};
pub use normalize::{latent_normalize, normalize_with, LatentStats, NormSource};
pub use projection::{
    projection_loss, train_projections, train_projections_on_latents, ProjectionConfig, ProjectionFit, ProjectionSet,
};
pub use warp::{apply_warp, time_warp, warp_map, WarpConfig};

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoder::Autoencoder;
use crate::error::{Error, Result};
use crate::numerics::TensorB;
use crate::waveform::{Signal, Waveform};

/// Records encoded per model call.
pub const ENCODE_CHUNK: usize = 32;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Single,
    Augmented,
    Ensemble,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Single, Method::Augmented, Method::Ensemble];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Single => "single",
            Method::Augmented => "augmented",
            Method::Ensemble => "ensemble",
        }
    }

    /// Number of autoencoders the method needs.
    pub fn model_count(self, k: usize) -> usize {
        match self {
            Method::Ensemble => k,
            _ => 1,
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "single" => Ok(Method::Single),
            "augmented" => Ok(Method::Augmented),
            "ensemble" | "multiple" => Ok(Method::Ensemble),
            other => Err(Error::InvalidArgument(format!(
                "unknown method '{other}' (expected single, augmented or ensemble)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodConfig {
    pub method: Method,
    /// Augmented copies per record, or ensemble members.
    pub k: usize,
    /// Also average the `i == j` pairs.
    pub include_self_pairs: bool,
    pub warp: WarpConfig,
    pub norm: NormSource,
    /// Seeds the augmentation draws.
    pub seed: u64,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            method: Method::Single,
            k: 5,
            include_self_pairs: false,
            warp: WarpConfig::default(),
            norm: NormSource::Batch,
            seed: 0,
        }
    }
}

impl MethodConfig {
    pub fn validate(&self) -> Result<()> {
        self.warp.validate()?;
        if self.method != Method::Single && self.k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        if self.method == Method::Ensemble && self.k < 2 {
            return Err(Error::Config(format!("ensemble needs k >= 2, got {}", self.k)));
        }
        if self.method == Method::Augmented && self.k < 2 && !self.include_self_pairs {
            return Err(Error::Config("augmented with k = 1 needs include_self_pairs".into()));
        }
        Ok(())
    }
}

fn stack_rows(rows: &[&[f32]], channels: usize, len: usize) -> Result<TensorB> {
    TensorB::stack(rows, channels, len)
}

/// Encodes rows of `(3, N)` samples in chunks, in parallel, keeping order.
pub fn encode_rows(model: &Autoencoder, rows: &[&[f32]]) -> Result<TensorB> {
    let arch = model.arch();
    let (c, n) = model.latent_shape();
    let parts = rows
        .par_chunks(ENCODE_CHUNK)
        .map(|chunk| model.encode(&stack_rows(chunk, arch.input_channels, arch.input_len)?))
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<&[f32]> = parts.iter().flat_map(|t| (0..t.batch()).map(move |b| t.sample(b))).collect();
    stack_rows(&all, c, n)
}

pub fn encode_signals(model: &Autoencoder, data: &[&Signal]) -> Result<TensorB> {
    encode_rows(model, &data.iter().map(|s| s.samples()).collect::<Vec<_>>())
}

pub fn encode_waveforms(model: &Autoencoder, records: &[Waveform]) -> Result<TensorB> {
    encode_rows(model, &records.iter().map(|w| w.samples()).collect::<Vec<_>>())
}

/// Seed of augmentation copy `copy` of record `id`; independent of the
/// record's position in the scoring set.
pub fn augmentation_seed(seed: u64, id: &str, copy: usize) -> u64 {
    crate::waveform::id_seed(seed, id) ^ (copy as u64).wrapping_mul(0xd1b5_4a32_d192_ed03)
}

/// A trained scoring setup: the models a method needs plus optional
/// projections and running statistics.
#[derive(Clone, Debug)]
pub struct Detector {
    pub method: MethodConfig,
    pub trigger: TriggerConfig,
    pub models: Vec<Autoencoder>,
    pub projections: Option<ProjectionSet>,
    /// One entry per latent stream (one for single/augmented, k for ensemble).
    pub running_stats: Option<Vec<LatentStats>>,
}

impl Detector {
    pub fn new(method: MethodConfig, trigger: TriggerConfig, models: Vec<Autoencoder>) -> Result<Self> {
        method.validate()?;
        trigger.validate()?;
        let need = method.method.model_count(method.k);
        if models.len() < need {
            return Err(Error::InvalidArgument(format!(
                "{} needs {need} model(s), got {}",
                method.method,
                models.len()
            )));
        }
        let shape = models[0].latent_shape();
        if models.iter().any(|m| m.latent_shape() != shape || m.latent_rate_hz() != models[0].latent_rate_hz()) {
            return Err(Error::Shape("models disagree on latent shape".into()));
        }
        let max_lag = trigger.max_lag_steps(models[0].latent_rate_hz());
        if max_lag >= shape.1 {
            return Err(Error::Config(format!(
                "max lag of {max_lag} latent steps does not fit a latent of length {}",
                shape.1
            )));
        }
        let mut models = models;
        models.truncate(need);
        Ok(Self {
            method,
            trigger,
            models,
            projections: None,
            running_stats: None,
        })
    }

    pub fn with_projections(mut self, p: ProjectionSet) -> Result<Self> {
        if p.members() != self.models.len() || p.channels() != self.models[0].latent_shape().0 {
            return Err(Error::Shape("projection set does not match the ensemble".into()));
        }
        self.projections = Some(p);
        Ok(self)
    }

    fn latent_rate(&self) -> f64 {
        self.models[0].latent_rate_hz()
    }

    fn max_lag(&self) -> usize {
        self.trigger.max_lag_steps(self.latent_rate())
    }

    fn streams(&self) -> usize {
        match self.method.method {
            Method::Ensemble => self.models.len(),
            _ => 1,
        }
    }

    /// Projected latents of member `m` for `rows`.
    fn member_latents(&self, m: usize, rows: &[&[f32]]) -> Result<TensorB> {
        let z = encode_rows(&self.models[m], rows)?;
        match (&self.projections, self.method.method) {
            (Some(p), Method::Ensemble) => p.apply(m, &z),
            _ => Ok(z),
        }
    }

    /// Fits running statistics on unlabeled training data.
    pub fn fit_running_stats(&mut self, data: &[Signal]) -> Result<()> {
        let rows: Vec<&[f32]> = data.iter().map(|s| s.samples()).collect();
        let stats = (0..self.streams())
            .map(|m| LatentStats::of(&self.member_latents(m, &rows)?))
            .collect::<Result<Vec<_>>>()?;
        self.running_stats = Some(stats);
        Ok(())
    }

    fn normalize(&self, stream: usize, z: &TensorB) -> Result<TensorB> {
        match self.method.norm {
            NormSource::Batch => latent_normalize(z, None),
            NormSource::Running => {
                let stats = self.running_stats.as_ref().ok_or_else(|| {
                    Error::Config("running normalization requested but no statistics were fitted".into())
                })?;
                latent_normalize(z, Some(&stats[stream]))
            }
        }
    }

    /// Covariance profile of every record, in input order.
    pub fn profiles(&self, records: &[Waveform]) -> Result<Vec<CovarianceProfile>> {
        if records.is_empty() {
            return Err(Error::Empty("no records to score".into()));
        }
        let (c, n) = self.models[0].latent_shape();
        let (lag, rate, include_self) = (self.max_lag(), self.latent_rate(), self.method.include_self_pairs);
        match self.method.method {
            Method::Single => {
                let rows: Vec<&[f32]> = records.iter().map(|w| w.samples()).collect();
                let z = self.normalize(0, &self.member_latents(0, &rows)?)?;
                (0..records.len())
                    .into_par_iter()
                    .map(|b| cross_covariance(z.sample(b), z.sample(b), c, n, lag, rate))
                    .collect()
            }
            Method::Augmented => {
                let k = self.method.k;
                let copies = records
                    .par_iter()
                    .map(|w| {
                        (0..k)
                            .map(|j| time_warp(w, &self.method.warp, augmentation_seed(self.method.seed, &w.id, j)))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                let rows: Vec<&[f32]> = copies.iter().flatten().map(|w| w.samples()).collect();
                let z = self.normalize(0, &self.member_latents(0, &rows)?)?;
                (0..records.len())
                    .into_par_iter()
                    .map(|b| {
                        let lat: Vec<&[f32]> = (0..k).map(|j| z.sample(b * k + j)).collect();
                        pairwise_mean_profile(&lat, c, n, include_self, lag, rate)
                    })
                    .collect()
            }
            Method::Ensemble => {
                let rows: Vec<&[f32]> = records.iter().map(|w| w.samples()).collect();
                let zs = (0..self.models.len())
                    .map(|m| self.normalize(m, &self.member_latents(m, &rows)?))
                    .collect::<Result<Vec<_>>>()?;
                (0..records.len())
                    .into_par_iter()
                    .map(|b| {
                        let lat: Vec<&[f32]> = zs.iter().map(|z| z.sample(b)).collect();
                        pairwise_mean_profile(&lat, c, n, include_self, lag, rate)
                    })
                    .collect()
            }
        }
    }

    /// Trigger score of every record, in input order.
    pub fn score(&self, records: &[Waveform]) -> Result<Vec<f64>> {
        Ok(self.profiles(records)?.iter().map(|p| gaussian_score(p, &self.trigger)).collect())
    }
}

/// Single-autoencoder scores with batch normalization over `records`.
pub fn score_single(model: &Autoencoder, records: &[Waveform], trig: &TriggerConfig) -> Result<Vec<f64>> {
    Detector::new(MethodConfig::default(), trig.clone(), vec![model.clone()])?.score(records)
}

/// Augmented scores: `k` warped copies per record through one encoder.
pub fn score_augmented(
    model: &Autoencoder,
    records: &[Waveform],
    k: usize,
    warp: &WarpConfig,
    trig: &TriggerConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let cfg = MethodConfig {
        method: Method::Augmented,
        k,
        include_self_pairs: k == 1,
        warp: warp.clone(),
        seed,
        ..Default::default()
    };
    Detector::new(cfg, trig.clone(), vec![model.clone()])?.score(records)
}

/// Ensemble scores: one latent per model after projection.
pub fn score_ensemble(
    models: &[Autoencoder],
    projections: &ProjectionSet,
    records: &[Waveform],
    trig: &TriggerConfig,
) -> Result<Vec<f64>> {
    let cfg = MethodConfig {
        method: Method::Ensemble,
        k: models.len(),
        ..Default::default()
    };
    Detector::new(cfg, trig.clone(), models.to_vec())?
        .with_projections(projections.clone())?
        .score(records)
}

/// `id,lag_seconds,value` rows for every profile.
pub fn profiles_csv(ids: &[&str], profiles: &[CovarianceProfile]) -> String {
    let mut s = String::from("id,lag_seconds,value\n");
    for (id, p) in ids.iter().zip(profiles) {
        for (i, v) in p.values.iter().enumerate() {
            writeln!(s, "{id},{},{v}", p.lag_seconds(i)).ok();
        }
    }
    s
}

pub fn write_profiles_csv(path: &Path, ids: &[&str], profiles: &[CovarianceProfile]) -> Result<()> {
    fs::write(path, profiles_csv(ids, profiles)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::ArchitectureConfig;
    use crate::waveform::Label;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn arch() -> ArchitectureConfig {
        ArchitectureConfig {
            n_down: 2,
            base_channels: 2,
            input_len: 400,
            ..Default::default()
        }
    }

    fn trig() -> TriggerConfig {
        TriggerConfig {
            sigma0_seconds: 0.5,
            max_lag_seconds: 2.0,
        }
    }

    fn records(n: usize, seed: u64) -> Vec<Waveform> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let s: Vec<f32> = (0..1200).map(|_| rng.random_range(-1.0..1.0)).collect();
                Waveform::new(format!("r{i:03}"), s, 100.0, Some(Label::Noise), None).unwrap()
            })
            .collect()
    }

    fn model(seed: u64) -> Autoencoder {
        Autoencoder::build(&arch(), seed).unwrap()
    }

    #[test]
    fn method_parsing() {
        assert_eq!("Ensemble".parse::<Method>().unwrap(), Method::Ensemble);
        assert!("bogus".parse::<Method>().is_err());
        assert_eq!(Method::Augmented.to_string(), "augmented");
    }

    #[test]
    fn single_is_deterministic() {
        let recs = records(6, 0);
        let a = score_single(&model(1), &recs, &trig()).unwrap();
        assert_eq!(a, score_single(&model(1), &recs, &trig()).unwrap());
        assert!(a.iter().all(|s| s.is_finite()));
    }

    #[test]
    fn equivalence_ladder() {
        let recs = records(5, 1);
        let m = model(2);
        let single = score_single(&m, &recs, &trig()).unwrap();
        let still = WarpConfig { strength: 0.0, knots: 4 };
        let aug = score_augmented(&m, &recs, 5, &still, &trig(), 7).unwrap();
        let ens = score_ensemble(&vec![m.clone(); 3], &ProjectionSet::identity(3, 4), &recs, &trig()).unwrap();
        let aug1 = score_augmented(&m, &recs, 1, &WarpConfig::default(), &trig(), 7);
        for i in 0..5 {
            assert!((single[i] - aug[i]).abs() < 1e-5, "{} vs {}", single[i], aug[i]);
            assert!((single[i] - ens[i]).abs() < 1e-5);
        }
        // One warped copy with self pairs is the single score of the warped record.
        let warped: Vec<Waveform> = recs
            .iter()
            .map(|w| time_warp(w, &WarpConfig::default(), augmentation_seed(7, &w.id, 0)).unwrap())
            .collect();
        let direct = score_single(&m, &warped, &trig()).unwrap();
        for (a, b) in aug1.unwrap().iter().zip(&direct) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn augmented_seed_matters_and_repeats() {
        let recs = records(4, 2);
        let m = model(3);
        let a = score_augmented(&m, &recs, 3, &WarpConfig::default(), &trig(), 1).unwrap();
        assert_eq!(a, score_augmented(&m, &recs, 3, &WarpConfig::default(), &trig(), 1).unwrap());
        assert_ne!(a, score_augmented(&m, &recs, 3, &WarpConfig::default(), &trig(), 2).unwrap());
    }

    #[test]
    fn batch_scale_invariance() {
        let recs = records(6, 3);
        let z = encode_waveforms(&model(4), &recs).unwrap();
        let score_of = |z: &TensorB| -> Vec<f64> {
            let zn = latent_normalize(z, None).unwrap();
            (0..zn.batch())
                .map(|b| {
                    let p = cross_covariance(zn.sample(b), zn.sample(b), 4, 100, 8, 25.0).unwrap();
                    gaussian_score(&p, &trig())
                })
                .collect()
        };
        let a = score_of(&z);
        let b = score_of(&z.map(|v| v * 10.0));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-5, "{x} vs {y}");
        }
    }

    #[test]
    fn running_stats_mode() {
        let recs = records(4, 4);
        let cfg = MethodConfig { norm: NormSource::Running, ..Default::default() };
        let mut det = Detector::new(cfg, trig(), vec![model(5)]).unwrap();
        assert!(det.score(&recs).is_err());
        let train: Vec<Signal> = records(8, 5).iter().map(Waveform::to_signal).collect();
        det.fit_running_stats(&train).unwrap();
        let all = det.score(&recs).unwrap();
        // Running stats decouple records from each other.
        let one = det.score(&recs[1..2]).unwrap();
        assert!((all[1] - one[0]).abs() < 1e-9);
    }

    #[test]
    fn detector_checks() {
        let ens = MethodConfig { method: Method::Ensemble, k: 3, ..Default::default() };
        assert!(Detector::new(ens.clone(), trig(), vec![model(1)]).is_err());
        let det = Detector::new(ens, trig(), vec![model(1), model(2), model(3)]).unwrap();
        assert!(det.with_projections(ProjectionSet::identity(2, 4)).is_err());
        assert!(Detector::new(MethodConfig::default(), TriggerConfig::default(), vec![model(1)]).is_err());
    }

    #[test]
    fn profile_csv_layout() {
        let p = CovarianceProfile {
            values: vec![0.5, 1.0, 0.5],
            max_lag: 1,
            latent_rate_hz: 2.0,
        };
        let csv = profiles_csv(&["a"], &[p]);
        assert_eq!(csv, "id,lag_seconds,value\na,-0.5,0.5\na,0,1\na,0.5,0.5\n");
    }
}
