//! Early (representation-level) and late (prediction-level) fusion.

mod early;
mod late;

use serde::{Deserialize, Serialize};

pub use early::{
    align_embeddings, fused_logits, init_early_fusion, train_early_fusion, EarlyFusionConfig, EarlyFusionModel,
};
pub use late::{
    assign_folds, late_fusion_mean, late_fusion_stack_train, oof_from_csv, oof_predictions, oof_to_csv,
    stack_predict, BasePrediction, MetaParams, StackingModel, OOF_HEADER,
};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    #[default]
    Early,
    LateMean,
    LateClassifier,
}

impl FusionMode {
    pub const ALL: [FusionMode; 3] = [FusionMode::Early, FusionMode::LateMean, FusionMode::LateClassifier];

    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::Early => "early",
            FusionMode::LateMean => "late-mean",
            FusionMode::LateClassifier => "late-classifier",
        }
    }
}

impl std::str::FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "early" => Ok(FusionMode::Early),
            "late-mean" | "late_mean" => Ok(FusionMode::LateMean),
            "late-classifier" | "late_classifier" => Ok(FusionMode::LateClassifier),
            _ => Err(Error::Config(format!("unknown fusion mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub mode: FusionMode,
    pub inner_folds: usize,
    pub meta: MetaParams,
    /// Width of the projected text representation in early fusion.
    pub text_dim: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            mode: FusionMode::Early,
            inner_folds: 3,
            meta: MetaParams::default(),
            text_dim: 32,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.text_dim == 0 {
            return Err(Error::Config("fusion text_dim must be positive".into()));
        }
        if self.inner_folds < 2 {
            return Err(Error::Config("fusion inner_folds must be at least 2".into()));
        }
        Ok(())
    }
}
