//! Prediction-level fusion: averaging and a stacked meta-classifier trained
//! on out-of-fold predictions.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{class_to_target, sigmoid, train_logistic, LinearModel};
use crate::dataset::fmt_f64;
use crate::error::{Error, Result};
use crate::eval::stratified_split;
use crate::nn::Matrix;

/// One base classifier's probabilities `[p_fake, p_real]` for one article.
/// `fold` is set only for out-of-fold predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasePrediction {
    pub article_id: String,
    pub source: String,
    pub fold: Option<usize>,
    pub probs: [f64; 2],
}

impl BasePrediction {
    pub fn new(article_id: impl Into<String>, source: impl Into<String>, probs: [f64; 2]) -> Self {
        Self {
            article_id: article_id.into(),
            source: source.into(),
            fold: None,
            probs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [a, b] = self.probs;
        if a.is_nan() || b.is_nan() {
            return Err(Error::NonFinite(format!("{} prediction for {}", self.source, self.article_id)));
        }
        if a < 0.0 || b < 0.0 || (a + b - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!(
                "{} probabilities for {} are not a distribution: {:?}",
                self.source, self.article_id, self.probs
            )));
        }
        Ok(())
    }
}

fn index_set<'a>(set: &'a [BasePrediction]) -> Result<HashMap<&'a str, &'a BasePrediction>> {
    let mut map = HashMap::with_capacity(set.len());
    for p in set {
        p.validate()?;
        if map.insert(p.article_id.as_str(), p).is_some() {
            return Err(Error::DuplicateKey(p.article_id.clone()));
        }
    }
    Ok(map)
}

/// Rows of probabilities for `ids`, one block of two columns per set.
fn gather_sets(sets: &[Vec<BasePrediction>], ids: &[&str]) -> Result<Matrix> {
    let maps = sets.iter().map(|s| index_set(s)).collect::<Result<Vec<_>>>()?;
    let mut data = Vec::with_capacity(ids.len() * 2 * sets.len());
    for id in ids {
        for (set, map) in sets.iter().zip(&maps) {
            let p = map.get(id).ok_or_else(|| {
                Error::Invalid(format!(
                    "prediction set {} does not cover article {id}",
                    set.first().map_or("?", |p| p.source.as_str())
                ))
            })?;
            data.extend_from_slice(&p.probs);
        }
    }
    Matrix::from_vec(ids.len(), 2 * sets.len(), data)
}

fn check_coverage(sets: &[Vec<BasePrediction>]) -> Result<Vec<&str>> {
    let first = sets.first().ok_or_else(|| Error::Empty("no prediction sets".into()))?;
    let ids: Vec<&str> = first.iter().map(|p| p.article_id.as_str()).collect();
    for s in sets {
        if s.len() != ids.len() {
            return Err(Error::Invalid(format!(
                "prediction sets cover {} and {} articles",
                ids.len(),
                s.len()
            )));
        }
    }
    Ok(ids)
}

/// Elementwise mean of the probability vectors, in the article order of
/// the first set.
pub fn late_fusion_mean(sets: &[Vec<BasePrediction>]) -> Result<Vec<(String, [f64; 2])>> {
    let ids = check_coverage(sets)?;
    let x = gather_sets(sets, &ids)?;
    let k = sets.len() as f64;
    Ok(ids
        .iter()
        .enumerate()
        .map(|(r, id)| {
            let row = x.row(r);
            let fake: f64 = row.iter().step_by(2).sum::<f64>() / k;
            let real: f64 = row.iter().skip(1).step_by(2).sum::<f64>() / k;
            (id.to_string(), [fake, real])
        })
        .collect())
}

/// Stratified fold index for each of `items`.
pub fn assign_folds(items: &[usize], labels: &[usize], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Config(format!("inner folds must be at least 2, got {folds}")));
    }
    let fractions = vec![1.0 / folds as f64; folds];
    let parts = stratified_split(items, labels, &fractions, seed)?;
    let pos: HashMap<usize, usize> = items.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let mut out = vec![0; items.len()];
    for (f, part) in parts.iter().enumerate() {
        for i in part {
            out[pos[i]] = f;
        }
    }
    Ok(out)
}

/// Out-of-fold predictions for `items`. `trainer(train, predict)` fits a
/// model on `train` and returns probabilities for `predict`. The result is
/// aligned with `items` and carries fold tags.
pub fn oof_predictions<F>(
    ids: &[String],
    labels: &[usize],
    items: &[usize],
    folds: usize,
    seed: u64,
    source: &str,
    trainer: F,
) -> Result<Vec<BasePrediction>>
where
    F: Fn(&[usize], &[usize]) -> Result<Vec<[f64; 2]>> + Sync,
{
    let fold_of = assign_folds(items, labels, folds, seed)?;
    let per_fold = (0..folds)
        .into_par_iter()
        .map(|f| {
            let held: Vec<usize> = items.iter().zip(&fold_of).filter(|(_, &g)| g == f).map(|(&i, _)| i).collect();
            let rest: Vec<usize> = items.iter().zip(&fold_of).filter(|(_, &g)| g != f).map(|(&i, _)| i).collect();
            for c in 0..2 {
                if !rest.iter().any(|&i| labels[i] == c) {
                    return Err(Error::Invalid(format!(
                        "class {c} absent from training part of inner fold {f}; add data or folds"
                    )));
                }
            }
            let probs = trainer(&rest, &held)?;
            if probs.len() != held.len() {
                return Err(Error::dim("out-of-fold predictions", held.len(), probs.len()));
            }
            Ok(held.into_iter().zip(probs).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut by_item: HashMap<usize, (usize, [f64; 2])> = HashMap::with_capacity(items.len());
    for (f, preds) in per_fold.into_iter().enumerate() {
        for (i, p) in preds {
            by_item.insert(i, (f, p));
        }
    }
    items
        .iter()
        .map(|i| {
            let (fold, probs) = by_item[i];
            let p = BasePrediction {
                article_id: ids[*i].clone(),
                source: source.to_string(),
                fold: Some(fold),
                probs,
            };
            p.validate()?;
            Ok(p)
        })
        .collect()
}

pub const OOF_HEADER: &str = "article_id,fold,source,p_fake,p_real";

pub fn oof_to_csv(preds: &[BasePrediction]) -> String {
    let mut out = format!("{OOF_HEADER}\n");
    for p in preds {
        let fold = p.fold.map_or(String::new(), |f| f.to_string());
        let _ = writeln!(
            out,
            "{},{fold},{},{},{}",
            p.article_id,
            p.source,
            fmt_f64(p.probs[0]),
            fmt_f64(p.probs[1])
        );
    }
    out
}

pub fn oof_from_csv(text: &str) -> Result<Vec<BasePrediction>> {
    let err = |line: usize, message: String| Error::Parse {
        context: "out-of-fold csv".into(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, h)| h) != Some(OOF_HEADER) {
        return Err(err(1, "bad header".into()));
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            let [id, fold, source, a, b] = f[..] else {
                return Err(err(i + 1, format!("expected 5 fields, found {}", f.len())));
            };
            let num = |s: &str| s.parse::<f64>().map_err(|e| err(i + 1, e.to_string()));
            let fold = if fold.is_empty() {
                None
            } else {
                Some(fold.parse().map_err(|_| err(i + 1, format!("bad fold {fold:?}")))?)
            };
            Ok(BasePrediction {
                article_id: id.to_string(),
                source: source.to_string(),
                fold,
                probs: [num(a)?, num(b)?],
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaParams {
    pub l2: f64,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for MetaParams {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            epochs: 1000,
            lr: 1.0,
        }
    }
}

/// Logistic regression over the concatenated base probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct StackingModel {
    pub sources: Vec<String>,
    pub meta: LinearModel,
}

fn set_sources(sets: &[Vec<BasePrediction>]) -> Vec<String> {
    sets.iter().map(|s| s.first().map_or_else(String::new, |p| p.source.clone())).collect()
}

/// Fits the meta-learner. Every input prediction must carry a fold tag;
/// `labels` maps article id to class.
pub fn late_fusion_stack_train(
    oof: &[Vec<BasePrediction>],
    labels: &HashMap<String, usize>,
    params: &MetaParams,
) -> Result<StackingModel> {
    for p in oof.iter().flatten() {
        if p.fold.is_none() {
            return Err(Error::Invalid(format!(
                "{} prediction for {} is not out-of-fold",
                p.source, p.article_id
            )));
        }
    }
    let ids = check_coverage(oof)?;
    let x = gather_sets(oof, &ids)?;
    let y = ids
        .iter()
        .map(|id| {
            labels
                .get(*id)
                .map(|&c| class_to_target(c))
                .ok_or_else(|| Error::Invalid(format!("no label for {id}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = train_logistic(&x, &y, params.l2, params.epochs, params.lr)?;
    Ok(StackingModel {
        sources: set_sources(oof),
        meta,
    })
}

/// Meta-learner probabilities for predictions from base models retrained
/// on the full training set; sets must be in the training source order.
pub fn stack_predict(model: &StackingModel, base: &[Vec<BasePrediction>]) -> Result<Vec<(String, [f64; 2])>> {
    if set_sources(base) != model.sources {
        return Err(Error::Invalid(format!(
            "stacking sources {:?} do not match trained {:?}",
            set_sources(base),
            model.sources
        )));
    }
    let ids = check_coverage(base)?;
    let x = gather_sets(base, &ids)?;
    Ok(ids
        .iter()
        .enumerate()
        .map(|(r, id)| {
            let p = sigmoid(model.meta.score(x.row(r)));
            (id.to_string(), [p, 1.0 - p])
        })
        .collect())
}
