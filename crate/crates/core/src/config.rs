//! Run configuration: one TOML file with a section per stage. Missing keys
//! take their defaults; unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autoencoder::{ArchitectureConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::evaluation::{EvalConfig, Pipeline};
use crate::synthetic::SynthConfig;
use crate::trigger::{MethodConfig, ProjectionConfig, TriggerConfig};
use crate::waveform::PreprocessConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Applied to every stage seed when set on the command line.
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    pub threads: usize,
    /// Noise level used by denoising training.
    pub denoise_sigma: f64,
    pub out: PathBuf,
    pub preprocess: PreprocessConfig,
    pub synth: SynthConfig,
    pub arch: ArchitectureConfig,
    pub train: TrainConfig,
    pub projection: ProjectionConfig,
    pub trigger: TriggerConfig,
    pub method: MethodConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 0,
            denoise_sigma: 0.2,
            out: PathBuf::from("out"),
            preprocess: PreprocessConfig::default(),
            synth: SynthConfig::default(),
            arch: ArchitectureConfig::default(),
            train: TrainConfig::default(),
            projection: ProjectionConfig::default(),
            trigger: TriggerConfig::default(),
            method: MethodConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is serializable")
    }

    /// Sets the top-level seed and every stage seed.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.synth.seed = seed;
        self.train.seed = seed;
        self.projection.seed = seed;
        self.method.seed = seed;
        self.eval.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate(self.arch.sample_rate_hz)?;
        self.arch.validate()?;
        self.train.validate()?;
        self.projection.validate()?;
        self.trigger.validate()?;
        self.method.validate()?;
        if !(self.denoise_sigma >= 0.0) {
            return Err(Error::Config("denoise_sigma must be >= 0".into()));
        }
        let window = self.preprocess.window_samples(self.arch.sample_rate_hz);
        if window != self.arch.input_len {
            return Err(Error::Config(format!(
                "preprocess window is {window} samples but the autoencoder expects {}",
                self.arch.input_len
            )));
        }
        Ok(())
    }

    pub fn pipeline(&self) -> Pipeline {
        Pipeline {
            preprocess: self.preprocess.clone(),
            arch: self.arch.clone(),
            train: self.train.clone(),
            projection: self.projection.clone(),
            trigger: self.trigger.clone(),
            method: self.method.clone(),
            eval: self.eval.clone(),
        }
    }

    /// Writes the effective configuration next to a run's outputs.
    pub fn dump(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("effective_config.toml");
        fs::write(&path, self.to_toml()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_method() {
        let c = RunConfig::default();
        assert_eq!(c.preprocess.window_seconds, 30.0);
        assert_eq!((c.preprocess.band_lo_hz, c.preprocess.band_hi_hz), (1.0, 20.0));
        assert_eq!(c.preprocess.jitter_sigma, 1e-6);
        assert_eq!(c.denoise_sigma, 0.2);
        assert_eq!((c.train.batch_size, c.train.epochs, c.train.lr), (256, 20, 1e-4));
        assert_eq!(c.trigger.sigma0_seconds, 2.5);
        assert_eq!(c.method.k, 5);
        assert_eq!(c.eval.folds, 5);
        c.validate().unwrap();
    }

    #[test]
    fn toml_roundtrip_and_partial_files() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        let p = RunConfig::from_toml("seed = 4\n[train]\nepochs = 3\n[arch]\nbase_channels = 4\n").unwrap();
        assert_eq!((p.seed, p.train.epochs, p.train.batch_size, p.arch.base_channels), (4, 3, 256, 4));
        assert!(RunConfig::from_toml("[train]\nepoch = 3\n").is_err());
        assert!(RunConfig::from_toml("[method]\nmethod = \"bogus\"\n").is_err());
    }

    #[test]
    fn seed_reaches_every_stage() {
        let mut c = RunConfig::default();
        c.apply_seed(9);
        assert_eq!([c.synth.seed, c.train.seed, c.projection.seed, c.method.seed, c.eval.seed], [9; 5]);
    }

    #[test]
    fn window_must_match_model() {
        let mut c = RunConfig::default();
        c.preprocess.window_seconds = 20.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn dump_writes_loadable_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = RunConfig::default();
        c.train.epochs = 2;
        let path = c.dump(dir.path()).unwrap();
        assert_eq!(RunConfig::load(&path).unwrap(), c);
    }
}
