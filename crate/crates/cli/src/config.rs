use std::path::{Path, PathBuf};

use gpr_core::pipeline::PipelineConfig;
use gpr_core::quantizer::RqkpFitConfig;
use gpr_core::simenv::{CorpusConfig, WorldConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const OUT_DIR_ENV: &str = "GPR_OUT_DIR";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub global: u64,
    pub oracle: u64,
    pub policy: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Synthetic data directory; defaults to `<out>/data`.
    pub dir: Option<PathBuf>,
    /// Embedding corpus for `tokenize`, in EMB1 or CSV form; defaults to
    /// `<data>/corpus.emb`.
    pub corpus: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerConfig {
    pub corpus: CorpusConfig,
    pub level_sizes: Vec<usize>,
    pub train_fraction: f64,
    pub fit: RqkpFitConfig,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            corpus: CorpusConfig::default(),
            level_sizes: vec![16, 16, 16],
            train_fraction: 0.8,
            fit: RqkpFitConfig {
                epochs: 10,
                ..RqkpFitConfig::default()
            },
        }
    }
}

fn default_pipeline() -> PipelineConfig {
    let mut p = PipelineConfig {
        num_heads: 2,
        hepo_iterations: 200,
        ..PipelineConfig::default()
    };
    p.hepo.policy_lr = 20.0;
    p.beam.k = 16;
    p
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Seeds,
    pub out_dir: Option<PathBuf>,
    pub data: DataConfig,
    pub world: WorldConfig,
    pub tokenizer: TokenizerConfig,
    pub pipeline: PipelineConfig,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seeds: Seeds::default(),
            out_dir: None,
            data: DataConfig::default(),
            world: WorldConfig::default(),
            tokenizer: TokenizerConfig::default(),
            pipeline: default_pipeline(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if cfg.base_dir.as_os_str().is_empty() {
            cfg.base_dir = PathBuf::from(".");
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let p = &self.pipeline;
        p.beam.validate().map_err(|e| CliError::config(e.to_string()))?;
        p.hepo.validate().map_err(|e| CliError::config(e.to_string()))?;
        p.reward.validate().map_err(|e| CliError::config(e.to_string()))?;
        if p.num_heads == 0 {
            return Err(CliError::config("pipeline.num_heads must be positive"));
        }
        if self.world.level_sizes.is_empty() || self.world.level_sizes.contains(&0) {
            return Err(CliError::config("world.level_sizes must be non-empty and positive"));
        }
        if self.tokenizer.level_sizes.is_empty() || self.tokenizer.level_sizes.contains(&0) {
            return Err(CliError::config("tokenizer.level_sizes must be non-empty and positive"));
        }
        let f = self.tokenizer.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(CliError::config(format!("tokenizer.train_fraction {f} must lie in (0, 1)")));
        }
        Ok(())
    }

    /// Replaces the global seed.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.seeds.global = s;
        }
        self
    }

    /// Pushes the three seeds into the component configs that consume them.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.world.seed = c.seeds.global;
        c.tokenizer.corpus.seed = c.seeds.global;
        c.world.oracle.seed = c.seeds.oracle;
        c.pipeline.train_seed = c.seeds.policy;
        c.pipeline.hepo_seed = c.seeds.policy;
        c.tokenizer.fit.seed = c.seeds.policy;
        c
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::config(format!("cannot serialize config: {e}")))
    }

    /// sha256 of the canonical serialization.
    pub fn hash(&self) -> CliResult<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }

    fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// `--out`, then the environment, then the config, then `./gpr-out`.
    pub fn out_dir(&self, cli: Option<&Path>) -> PathBuf {
        if let Some(p) = cli {
            return p.to_path_buf();
        }
        if let Some(p) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(p);
        }
        match &self.out_dir {
            Some(p) => self.resolve_path(p),
            None => PathBuf::from("gpr-out"),
        }
    }

    pub fn data_dir(&self, out: &Path) -> PathBuf {
        match &self.data.dir {
            Some(p) => self.resolve_path(p),
            None => out.join("data"),
        }
    }

    pub fn corpus_path(&self, out: &Path) -> PathBuf {
        match &self.data.corpus {
            Some(p) => self.resolve_path(p),
            None => self.data_dir(out).join("corpus.emb"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let err = ExperimentConfig::from_toml("bogus = 1\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = ExperimentConfig::from_toml("[seeds]\nglobl = 1\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn seeds_reach_components() {
        let cfg = ExperimentConfig::from_toml("[seeds]\nglobal = 3\noracle = 4\npolicy = 5\n")
            .unwrap()
            .with_seed(Some(9))
            .resolved();
        assert_eq!(cfg.world.seed, 9);
        assert_eq!(cfg.tokenizer.corpus.seed, 9);
        assert_eq!(cfg.world.oracle.seed, 4);
        assert_eq!(cfg.pipeline.hepo_seed, 5);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ExperimentConfig::from_toml("[pipeline]\nnum_heads = 0\n").is_err());
        assert!(ExperimentConfig::from_toml("[tokenizer]\ntrain_fraction = 1.5\n").is_err());
    }
}
