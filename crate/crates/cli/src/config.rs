use std::fs;
use std::path::{Path, PathBuf};

use cezanne::analysis::{GripperModel, PrintConstraints};
use cezanne::assembler::GenerationConfig;
use cezanne::detpool::EncoderConfig;
use cezanne::meshio::{Tessellation, DEFAULT_CALIPER_DIRECTIONS};
use cezanne::policy::PolicyConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const OUT_DIR_ENV: &str = "CEZANNE_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

/// Everything a command can be configured with. Missing keys take the
/// standard defaults; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub generation: GenerationConfig,
    pub tessellation: Tessellation,
    pub caliper_directions: usize,
    pub gripper: GripperModel,
    pub print: PrintConstraints,
    pub encoder: EncoderConfig,
    pub gradient_encoder: EncoderConfig,
    pub policy: PolicyConfig,
    pub precision: Precision,
    pub check_seed: u64,
    pub output_dir: PathBuf,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            generation: GenerationConfig::default(),
            tessellation: Tessellation::default(),
            caliper_directions: DEFAULT_CALIPER_DIRECTIONS,
            gripper: GripperModel::default(),
            print: PrintConstraints::default(),
            encoder: EncoderConfig::default(),
            gradient_encoder: EncoderConfig::gradient_check(),
            policy: PolicyConfig::default(),
            precision: Precision::F64,
            check_seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let cfg = match path {
            None => Self::default(),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.generation.validate().map_err(CliError::config)?;
        self.tessellation.validate().map_err(CliError::config)?;
        self.gripper.validate().map_err(CliError::config)?;
        if self.caliper_directions < cezanne::analysis::MIN_DIRECTIONS {
            return Err(CliError::Config(format!(
                "caliper_directions must be at least {}",
                cezanne::analysis::MIN_DIRECTIONS
            )));
        }
        if !(self.print.build_edge > 0.0 && self.print.min_wall >= 0.0) {
            return Err(CliError::Config("print.build_edge must be positive and print.min_wall non-negative".into()));
        }
        self.encoder.validate().map_err(CliError::config)?;
        self.gradient_encoder.validate().map_err(CliError::config)?;
        self.policy.validate().map_err(CliError::config)?;
        Ok(())
    }

    /// `--out`, then the environment variable, then the config value.
    pub fn resolve_out(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        match std::env::var_os(OUT_DIR_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.output_dir.clone(),
        }
    }
}
