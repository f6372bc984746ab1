//! Classical classifiers over graph-level feature vectors.

mod forest;
mod linear;

use serde::{Deserialize, Serialize};

pub use forest::{train_forest, ForestConfig, ForestKind, ForestModel, Tree, TreeNode};
pub use linear::{
    logistic_objective, passive_aggressive_update, sigmoid, train_logistic, train_passive_aggressive, train_ridge,
    train_sgd_hinge, LinearKind, LinearModel,
};

use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Ridge,
    Logistic,
    PassiveAggressive,
    SgdHinge,
    #[default]
    RandomForest,
    ExtraTrees,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 6] = [
        BaselineKind::PassiveAggressive,
        BaselineKind::Ridge,
        BaselineKind::Logistic,
        BaselineKind::SgdHinge,
        BaselineKind::ExtraTrees,
        BaselineKind::RandomForest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Ridge => "ridge",
            BaselineKind::Logistic => "logistic",
            BaselineKind::PassiveAggressive => "passive_aggressive",
            BaselineKind::SgdHinge => "sgd_hinge",
            BaselineKind::RandomForest => "random_forest",
            BaselineKind::ExtraTrees => "extra_trees",
        }
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown baseline {s:?}")))
    }
}

/// Fixed hyperparameters of the linear learners.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineParams {
    pub ridge_lambda: f64,
    pub logistic_l2: f64,
    pub logistic_epochs: usize,
    pub logistic_lr: f64,
    pub pa_c: f64,
    pub pa_epochs: usize,
    pub sgd_l2: f64,
    pub sgd_epochs: usize,
    pub sgd_lr: f64,
    pub n_trees: usize,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            ridge_lambda: 1.0,
            logistic_l2: 1e-3,
            logistic_epochs: 500,
            logistic_lr: 0.5,
            pa_c: 1.0,
            pa_epochs: 20,
            sgd_l2: 1e-4,
            sgd_epochs: 20,
            sgd_lr: 0.01,
            n_trees: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BaselineModel {
    Linear(LinearModel),
    Forest(ForestModel),
}

/// Class indices (0 = fake) to linear targets (+1 = fake).
pub fn class_to_target(c: usize) -> f64 {
    if c == 0 {
        1.0
    } else {
        -1.0
    }
}

pub fn train_baseline(
    kind: BaselineKind,
    x: &Matrix,
    classes: &[usize],
    params: &BaselineParams,
    seed: u64,
) -> Result<BaselineModel> {
    let y: Vec<f64> = classes.iter().map(|&c| class_to_target(c)).collect();
    Ok(match kind {
        BaselineKind::Ridge => BaselineModel::Linear(train_ridge(x, &y, params.ridge_lambda)?),
        BaselineKind::Logistic => BaselineModel::Linear(train_logistic(
            x,
            &y,
            params.logistic_l2,
            params.logistic_epochs,
            params.logistic_lr,
        )?),
        BaselineKind::PassiveAggressive => {
            BaselineModel::Linear(train_passive_aggressive(x, &y, params.pa_c, params.pa_epochs, seed)?)
        }
        BaselineKind::SgdHinge => BaselineModel::Linear(train_sgd_hinge(
            x,
            &y,
            params.sgd_l2,
            params.sgd_epochs,
            params.sgd_lr,
            seed,
        )?),
        BaselineKind::RandomForest | BaselineKind::ExtraTrees => {
            let fk = if kind == BaselineKind::RandomForest {
                ForestKind::RandomForest
            } else {
                ForestKind::ExtraTrees
            };
            let cfg = ForestConfig {
                n_trees: params.n_trees,
                ..ForestConfig::new(fk, seed)
            };
            BaselineModel::Forest(train_forest(x, classes, &cfg)?)
        }
    })
}

impl BaselineModel {
    /// `[p_fake, p_real]`; linear scores pass through the logistic link.
    pub fn predict_proba(&self, x: &[f64]) -> Result<[f64; 2]> {
        match self {
            BaselineModel::Linear(m) => {
                if x.len() != m.weights.len() {
                    return Err(Error::dim("linear input", m.weights.len(), x.len()));
                }
                let p = m.predict(x).1;
                Ok([p, 1.0 - p])
            }
            BaselineModel::Forest(m) => m.predict_proba(x),
        }
    }

    /// Predicted class index; for linear models this is the sign of the score.
    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        match self {
            BaselineModel::Linear(m) => Ok(if m.predict(x).0 > 0 { 0 } else { 1 }),
            BaselineModel::Forest(m) => Ok(m.predict(x)?.0),
        }
    }

    pub fn to_text(&self) -> String {
        match self {
            BaselineModel::Linear(m) => m.to_text(),
            BaselineModel::Forest(m) => m.to_text(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_kind_trains_and_predicts() {
        let x = Matrix::from_rows(&[
            vec![2.0, 0.1],
            vec![1.5, -0.3],
            vec![-1.0, 0.2],
            vec![-2.0, 0.0],
            vec![1.0, 0.5],
            vec![-1.5, -0.5],
        ])
        .unwrap();
        let c = [0, 0, 1, 1, 0, 1];
        for kind in BaselineKind::ALL {
            let m = train_baseline(kind, &x, &c, &BaselineParams::default(), 1).unwrap();
            for r in 0..x.rows() {
                let p = m.predict_proba(x.row(r)).unwrap();
                assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
                assert_eq!(m.predict_class(x.row(r)).unwrap(), c[r], "{kind:?}");
            }
            assert_eq!(kind.as_str().parse::<BaselineKind>().unwrap(), kind);
        }
        assert!("svm".parse::<BaselineKind>().is_err());
    }
}
