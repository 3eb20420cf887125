use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::FusionPlan;
use crate::nn::PATCH;

/// Architecture hyperparameters. JSON keys follow the field renames.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Prior-branch layers per stage; the branch has `4m` layers.
    pub m: usize,
    /// Prior-branch token width.
    #[serde(rename = "C")]
    pub prior_dim: usize,
    /// Domain-branch width after downsampling.
    #[serde(rename = "C_c")]
    pub domain_dim: usize,
    /// Decoder embedding width.
    #[serde(rename = "C_d")]
    pub decoder_dim: usize,
    /// Prior-branch attention heads.
    pub heads: usize,
    /// Domain-branch input side.
    pub x_c: usize,
    /// Prior-branch input side.
    pub x_s: usize,
    /// Window side for the non-global prior layers.
    pub window: usize,
    pub rfin_count: usize,
    pub dkin_count: usize,
    pub decoder_heads: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            m: 3,
            prior_dim: 96,
            domain_dim: 64,
            decoder_dim: 64,
            heads: 3,
            x_c: 32,
            x_s: 128,
            window: 4,
            rfin_count: 3,
            dkin_count: 3,
            decoder_heads: 2,
        }
    }
}

impl ModelConfig {
    /// Side of the prior token grid, equal to the domain grid after layer 2.
    pub fn grid(&self) -> usize {
        self.x_s / PATCH
    }

    pub fn tokens(&self) -> usize {
        self.grid() * self.grid()
    }

    pub fn prior_layers(&self) -> usize {
        4 * self.m
    }

    /// Same architecture with different fusion counts.
    pub fn with_fusion(&self, rfin_count: usize, dkin_count: usize) -> Self {
        Self { rfin_count, dkin_count, ..self.clone() }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Check every constraint; the fusion schedule is built to detect cycles.
    pub fn validate(&self) -> Result<FusionPlan> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.m == 0 {
            return bad("m must be positive".into());
        }
        if self.heads == 0 || self.prior_dim % self.heads != 0 {
            return bad(format!("heads {} must divide C = {}", self.heads, self.prior_dim));
        }
        if self.x_s % PATCH != 0 {
            return bad(format!("x_s = {} must be divisible by the patch size {PATCH}", self.x_s));
        }
        if self.x_s != 4 * self.x_c {
            return bad(format!(
                "x_s = {} must equal 4·x_c = {} so the domain grid after layer 2 matches the token grid",
                self.x_s,
                4 * self.x_c
            ));
        }
        if self.grid() < 2 {
            return bad(format!("token grid {} is smaller than 2x2", self.grid()));
        }
        if self.window == 0 || self.grid() % self.window != 0 {
            return bad(format!("window {} does not tile the {}x{} token grid", self.window, self.grid(), self.grid()));
        }
        if self.domain_dim < 2 || self.domain_dim % 2 != 0 {
            return bad(format!("C_c = {} must be even", self.domain_dim));
        }
        if self.decoder_dim % 4 != 0 || self.decoder_dim == 0 {
            return bad(format!("C_d = {} must be a positive multiple of 4", self.decoder_dim));
        }
        if self.decoder_heads == 0 || (self.decoder_dim / 2) % self.decoder_heads != 0 {
            return bad(format!("decoder_heads {} must divide C_d/2 = {}", self.decoder_heads, self.decoder_dim / 2));
        }
        FusionPlan::build(self.m, self.rfin_count, self.dkin_count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_defaults_are_valid() {
        let cfg = ModelConfig::default();
        assert_eq!(cfg.grid(), 8);
        assert_eq!(cfg.tokens(), 64);
        assert_eq!(cfg.prior_layers(), 12);
        cfg.validate().unwrap();
    }

    #[test]
    fn json_keys_and_defaults() {
        let cfg: ModelConfig = serde_json::from_str(r#"{"m": 6, "C": 48, "heads": 2}"#).unwrap();
        assert_eq!(cfg.m, 6);
        assert_eq!(cfg.prior_dim, 48);
        assert_eq!(cfg.domain_dim, 64);
        let text = serde_json::to_string(&ModelConfig::default()).unwrap();
        for key in ["\"m\"", "\"C\"", "\"C_c\"", "\"C_d\"", "\"heads\"", "\"x_c\"", "\"x_s\"", "\"window\"", "\"rfin_count\"", "\"dkin_count\""] {
            assert!(text.contains(key), "{key} missing from {text}");
        }
        assert!(serde_json::from_str::<ModelConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let cfg = ModelConfig { x_c: 64, ..ModelConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn cyclic_wiring_is_rejected() {
        let cfg = ModelConfig { m: 2, window: 4, ..ModelConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Cycle(_))));
    }

    #[test]
    fn full_scale_is_constructible_as_config() {
        let cfg = ModelConfig {
            m: 8,
            prior_dim: 768,
            heads: 12,
            x_c: 256,
            x_s: 1024,
            window: 16,
            decoder_dim: 256,
            decoder_heads: 8,
            ..ModelConfig::default()
        };
        cfg.validate().unwrap();
    }
}
