//! In-memory experiment: assembled model inputs, per-run preprocessing,
//! and the train/predict runners behind every model family.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{train_baseline, BaselineKind, BaselineParams};
use crate::cascade::{build_all, BuildDiagnostics, PropagationGraph};
use crate::dataset::{Label, LabeledDataset};
use crate::error::{Error, Result};
use crate::eval::{class_weights, evaluate_probabilities, plan_runs, random_oversample, MetricsReport, SplitSpec};
use crate::featurize::{
    extract_graph_features, extract_node_features, FeatureScaler, SentimentLexicon, GRAPH_LOG1P_COLUMNS,
    NODE_LOG1P_COLUMNS,
};
use crate::fusion::{
    late_fusion_mean, late_fusion_stack_train, oof_predictions, stack_predict, train_early_fusion, BasePrediction,
    EarlyFusionConfig, FusionConfig, FusionMode,
};
use crate::gnn::{train_gnn, AdjacencyStructure, GnnConfig, GraphInput, LayerKind};
use crate::nn::Matrix;
use crate::textenc::{
    tokenize, train_pvdbow, train_text_classifier, truncate, PvDbowConfig, PvDbowModel, TextConfig, Truncation,
};

/// Everything the models consume, indexed by article position.
#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
    pub adjacency: Vec<AdjacencyStructure>,
    /// Unscaled node features, one matrix per graph.
    pub node_features: Vec<Matrix>,
    /// Unscaled graph-level features, one row per article.
    pub graph_features: Matrix,
    /// Document embeddings, one row per article.
    pub text: Option<Matrix>,
}

impl Experiment {
    pub fn from_graphs(labels: Vec<usize>, graphs: &[PropagationGraph], lexicon: &SentimentLexicon) -> Result<Self> {
        if labels.len() != graphs.len() {
            return Err(Error::dim("experiment labels", graphs.len(), labels.len()));
        }
        let rows: Vec<Vec<f64>> = graphs.par_iter().map(extract_graph_features).collect();
        Ok(Self {
            ids: graphs.iter().map(|g| g.article_id.clone()).collect(),
            labels,
            adjacency: graphs.iter().map(AdjacencyStructure::from_graph).collect(),
            node_features: graphs.par_iter().map(|g| extract_node_features(g, lexicon)).collect(),
            graph_features: Matrix::from_rows(&rows)?,
            text: None,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn with_text(mut self, text: Matrix) -> Result<Self> {
        if text.rows() != self.len() {
            return Err(Error::dim("text embedding rows", self.len(), text.rows()));
        }
        self.text = Some(text);
        Ok(self)
    }

    fn text(&self) -> Result<&Matrix> {
        self.text.as_ref().ok_or_else(|| Error::MissingArtifact("text embeddings".into()))
    }

    /// Graph inputs with node features standardized on the nodes of
    /// `fit_items`.
    pub fn graph_inputs(&self, fit_items: &[usize]) -> Result<Vec<GraphInput>> {
        let fit: Vec<&Matrix> = unique(fit_items).into_iter().map(|i| &self.node_features[i]).collect();
        let scaler = FeatureScaler::fit(&stack_rows(&fit)?, &NODE_LOG1P_COLUMNS)?;
        self.adjacency
            .iter()
            .zip(&self.node_features)
            .map(|(a, x)| GraphInput::new(a.clone(), scaler.apply(x)?))
            .collect()
    }

    pub fn scaled_graph_features(&self, fit_items: &[usize]) -> Result<Matrix> {
        scale_on(&self.graph_features, fit_items, &GRAPH_LOG1P_COLUMNS)
    }

    pub fn scaled_text(&self, fit_items: &[usize]) -> Result<Matrix> {
        scale_on(self.text()?, fit_items, &[])
    }
}

fn unique(items: &[usize]) -> Vec<usize> {
    let mut u = items.to_vec();
    u.sort_unstable();
    u.dedup();
    u
}

fn stack_rows(parts: &[&Matrix]) -> Result<Matrix> {
    let cols = parts.first().map_or(0, |m| m.cols());
    let mut data = Vec::new();
    for m in parts {
        if m.cols() != cols {
            return Err(Error::dim("stacked rows", cols, m.cols()));
        }
        data.extend_from_slice(m.data());
    }
    Matrix::from_vec(data.len() / cols.max(1), cols, data)
}

fn gather(x: &Matrix, items: &[usize]) -> Matrix {
    let mut data = Vec::with_capacity(items.len() * x.cols());
    for &i in items {
        data.extend_from_slice(x.row(i));
    }
    Matrix::from_vec(items.len(), x.cols(), data).expect("sized by construction")
}

fn scale_on(x: &Matrix, fit_items: &[usize], log1p: &[usize]) -> Result<Matrix> {
    let scaler = FeatureScaler::fit(&gather(x, &unique(fit_items)), log1p)?;
    scaler.apply(x)
}

/// Builds graphs and extracts features for every article.
pub fn prepare_experiment(
    dataset: &LabeledDataset,
    window_seconds: i64,
    lexicon: &SentimentLexicon,
) -> Result<(Experiment, Vec<PropagationGraph>, BuildDiagnostics)> {
    let (graphs, diag) = build_all(&dataset.entries, window_seconds);
    let labels = dataset.labels().into_iter().map(Label::class_index).collect();
    Ok((Experiment::from_graphs(labels, &graphs, lexicon)?, graphs, diag))
}

pub fn tokenize_articles(dataset: &LabeledDataset, truncation: Truncation) -> Vec<Vec<String>> {
    dataset
        .entries
        .iter()
        .map(|e| truncate(&tokenize(&e.article.text), truncation))
        .collect()
}

/// Trains PV-DBOW on the documents of `fit_items` and embeds every
/// document by inference.
pub fn embed_corpus(docs: &[Vec<String>], fit_items: &[usize], cfg: &PvDbowConfig) -> Result<(PvDbowModel, Matrix)> {
    let corpus: Vec<Vec<String>> = unique(fit_items).into_iter().map(|i| docs[i].clone()).collect();
    let model = train_pvdbow(&corpus, cfg)?;
    let rows: Vec<Vec<f64>> = docs.par_iter().map(|d| model.embed_document(d)).collect();
    let m = Matrix::from_rows(&rows)?;
    Ok((model, m))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelSpec {
    Gnn(LayerKind),
    Baseline(BaselineKind),
    Text,
    Fusion(FusionMode),
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Gnn(k) => write!(f, "gnn-{}", k.as_str()),
            ModelSpec::Baseline(k) => write!(f, "baseline-{}", k.as_str()),
            ModelSpec::Text => write!(f, "text"),
            ModelSpec::Fusion(m) => write!(f, "fusion-{}", m.as_str()),
        }
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "text" {
            return Ok(ModelSpec::Text);
        }
        if let Some(k) = s.strip_prefix("gnn-") {
            return Ok(ModelSpec::Gnn(k.parse()?));
        }
        if let Some(k) = s.strip_prefix("baseline-") {
            return Ok(ModelSpec::Baseline(k.parse()?));
        }
        if let Some(m) = s.strip_prefix("fusion-") {
            return Ok(ModelSpec::Fusion(m.parse()?));
        }
        Err(Error::Config(format!("unknown model {s:?}")))
    }
}

impl ModelSpec {
    pub fn needs_text(self) -> bool {
        matches!(self, ModelSpec::Text | ModelSpec::Fusion(_))
    }

    pub fn needs_graphs(self) -> bool {
        !matches!(self, ModelSpec::Text)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfigs {
    pub gnn: GnnConfig,
    pub baseline: BaselineParams,
    pub text: TextConfig,
    pub fusion: FusionConfig,
}

/// Training context of one fit.
#[derive(Clone, Copy, Debug)]
pub struct FitContext<'a> {
    pub train: &'a [usize],
    pub val: &'a [usize],
    pub class_weights: [f64; 2],
    /// Whether inner fold training parts are oversampled.
    pub oversample: bool,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fitted {
    pub probs: Vec<[f64; 2]>,
    /// Human-readable model dump.
    pub checkpoint: String,
    /// Out-of-fold base predictions behind a stacked model.
    pub oof: Vec<BasePrediction>,
}

/// Fits `spec` on `ctx.train` and predicts `[p_fake, p_real]` for `predict`.
pub fn fit_predict(
    exp: &Experiment,
    spec: ModelSpec,
    cfgs: &ModelConfigs,
    ctx: FitContext<'_>,
    predict: &[usize],
) -> Result<Fitted> {
    let labels = &exp.labels;
    match spec {
        ModelSpec::Gnn(kind) => {
            let mut cfg = cfgs.gnn.clone();
            cfg.layer_kind = kind;
            cfg.train.seed = ctx.seed;
            let graphs = exp.graph_inputs(ctx.train)?;
            let (model, _) = train_gnn(&graphs, labels, ctx.train, ctx.val, &cfg, ctx.class_weights)?;
            let subset: Vec<GraphInput> = predict.iter().map(|&i| graphs[i].clone()).collect();
            Ok(Fitted {
                probs: model.predict(&subset)?.into_iter().map(|p| p.probs).collect(),
                checkpoint: model.params.to_checkpoint(),
                oof: Vec::new(),
            })
        }
        ModelSpec::Baseline(kind) => {
            let x = exp.scaled_graph_features(ctx.train)?;
            let y: Vec<usize> = ctx.train.iter().map(|&i| labels[i]).collect();
            let model = train_baseline(kind, &gather(&x, ctx.train), &y, &cfgs.baseline, ctx.seed)?;
            Ok(Fitted {
                probs: predict.iter().map(|&i| model.predict_proba(x.row(i))).collect::<Result<_>>()?,
                checkpoint: model.to_text(),
                oof: Vec::new(),
            })
        }
        ModelSpec::Text => {
            let mut cfg = cfgs.text.clone();
            cfg.train.seed = ctx.seed;
            let x = exp.scaled_text(ctx.train)?;
            let (model, _) = train_text_classifier(&x, labels, ctx.train, ctx.val, &cfg, ctx.class_weights)?;
            Ok(Fitted {
                probs: model.predict(&gather(&x, predict))?.into_iter().map(|p| p.probs).collect(),
                checkpoint: model.params.to_checkpoint(),
                oof: Vec::new(),
            })
        }
        ModelSpec::Fusion(FusionMode::Early) => {
            let mut train = cfgs.gnn.train.clone();
            train.seed = ctx.seed;
            let cfg = EarlyFusionConfig {
                gnn: cfgs.gnn.clone(),
                text_dim: cfgs.fusion.text_dim,
                train,
            };
            let graphs = exp.graph_inputs(ctx.train)?;
            let text = exp.scaled_text(ctx.train)?;
            let (model, _) = train_early_fusion(&graphs, &text, labels, ctx.train, ctx.val, &cfg, ctx.class_weights)?;
            let subset: Vec<GraphInput> = predict.iter().map(|&i| graphs[i].clone()).collect();
            Ok(Fitted {
                probs: model.predict(&subset, &gather(&text, predict))?.into_iter().map(|p| p.probs).collect(),
                checkpoint: model.params.to_checkpoint(),
                oof: Vec::new(),
            })
        }
        ModelSpec::Fusion(FusionMode::LateMean) => {
            let bases = late_bases(cfgs);
            let fitted = bases
                .iter()
                .map(|&b| fit_predict(exp, b, cfgs, ctx, predict))
                .collect::<Result<Vec<_>>>()?;
            let sets: Vec<Vec<BasePrediction>> =
                bases.iter().zip(&fitted).map(|(b, f)| to_base(exp, *b, predict, &f.probs)).collect();
            Ok(Fitted {
                probs: late_fusion_mean(&sets)?.into_iter().map(|(_, p)| p).collect(),
                checkpoint: join_checkpoints(&bases, &fitted, None),
                oof: Vec::new(),
            })
        }
        ModelSpec::Fusion(FusionMode::LateClassifier) => late_classifier(exp, cfgs, ctx, predict),
    }
}

/// Base classifiers combined by late fusion.
pub fn late_bases(cfgs: &ModelConfigs) -> [ModelSpec; 2] {
    [ModelSpec::Gnn(cfgs.gnn.layer_kind), ModelSpec::Text]
}

fn to_base(exp: &Experiment, spec: ModelSpec, items: &[usize], probs: &[[f64; 2]]) -> Vec<BasePrediction> {
    items
        .iter()
        .zip(probs)
        .map(|(&i, &p)| BasePrediction::new(exp.ids[i].clone(), spec.to_string(), p))
        .collect()
}

fn join_checkpoints(bases: &[ModelSpec], fitted: &[Fitted], meta: Option<String>) -> String {
    let mut out = String::new();
    for (b, f) in bases.iter().zip(fitted) {
        out.push_str(&format!("## {b}\n{}", f.checkpoint));
    }
    if let Some(m) = meta {
        out.push_str(&format!("## meta\n{m}"));
    }
    out
}

/// Out-of-fold predictions of every late-fusion base over the distinct
/// training articles.
pub fn late_oof(exp: &Experiment, cfgs: &ModelConfigs, ctx: FitContext<'_>) -> Result<Vec<Vec<BasePrediction>>> {
    let items = unique(ctx.train);
    late_bases(cfgs)
        .iter()
        .map(|&b| {
            oof_predictions(
                &exp.ids,
                &exp.labels,
                &items,
                cfgs.fusion.inner_folds,
                ctx.seed,
                &b.to_string(),
                |rest, held| {
                    let train = if ctx.oversample {
                        random_oversample(rest, &exp.labels, ctx.seed ^ held.len() as u64)
                    } else {
                        rest.to_vec()
                    };
                    let inner = FitContext { train: &train, ..ctx };
                    Ok(fit_predict(exp, b, cfgs, inner, held)?.probs)
                },
            )
        })
        .collect()
}

fn late_classifier(exp: &Experiment, cfgs: &ModelConfigs, ctx: FitContext<'_>, predict: &[usize]) -> Result<Fitted> {
    let oof = late_oof(exp, cfgs, ctx)?;
    let labels: HashMap<String, usize> = unique(ctx.train).into_iter().map(|i| (exp.ids[i].clone(), exp.labels[i])).collect();
    let meta = late_fusion_stack_train(&oof, &labels, &cfgs.fusion.meta)?;
    let bases = late_bases(cfgs);
    let fitted = bases
        .iter()
        .map(|&b| fit_predict(exp, b, cfgs, ctx, predict))
        .collect::<Result<Vec<_>>>()?;
    let sets: Vec<Vec<BasePrediction>> =
        bases.iter().zip(&fitted).map(|(b, f)| to_base(exp, *b, predict, &f.probs)).collect();
    Ok(Fitted {
        probs: stack_predict(&meta, &sets)?.into_iter().map(|(_, p)| p).collect(),
        checkpoint: join_checkpoints(&bases, &fitted, Some(meta.meta.to_text())),
        oof: oof.into_iter().flatten().collect(),
    })
}

/// Seed of protocol run `r`.
pub fn run_seed(seed: u64, run: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(run as u64 + 1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub run: usize,
    pub test: Vec<usize>,
    pub probs: Vec<[f64; 2]>,
    pub checkpoint: String,
    pub oof: Vec<BasePrediction>,
}

/// Fits `spec` once per protocol run and predicts the shared test set.
pub fn run_protocol(
    exp: &Experiment,
    spec: ModelSpec,
    cfgs: &ModelConfigs,
    protocol: &SplitSpec,
    seed: u64,
) -> Result<Vec<RunResult>> {
    let runs = plan_runs(&exp.labels, protocol, seed)?;
    runs.par_iter()
        .enumerate()
        .map(|(r, split)| {
            let ctx = FitContext {
                train: &split.train,
                val: &split.val,
                class_weights: class_weights(protocol.class_weights, &split.train, &exp.labels),
                oversample: protocol.oversample_train,
                seed: run_seed(seed, r),
            };
            let fitted = fit_predict(exp, spec, cfgs, ctx, &split.test)?;
            Ok(RunResult {
                run: r,
                test: split.test.clone(),
                probs: fitted.probs,
                checkpoint: fitted.checkpoint,
                oof: fitted.oof,
            })
        })
        .collect()
}

/// Articles outside the test set, on which unsupervised text models train.
pub fn pretraining_pool(labels: &[usize], protocol: &SplitSpec, seed: u64) -> Result<Vec<usize>> {
    let runs = plan_runs(labels, protocol, seed)?;
    let test = &runs.first().ok_or_else(|| Error::Empty("protocol runs".into()))?.test;
    Ok((0..labels.len()).filter(|i| test.binary_search(i).is_err()).collect())
}

pub fn evaluate_runs(name: &str, labels: &[usize], results: &[RunResult]) -> Result<MetricsReport> {
    let runs = results
        .iter()
        .map(|r| {
            let y: Vec<usize> = r.test.iter().map(|&i| labels[i]).collect();
            evaluate_probabilities(&y, &r.probs)
        })
        .collect::<Result<Vec<_>>>()?;
    MetricsReport::aggregate(name, runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::BaselineKind;

    #[test]
    fn model_names_round_trip() {
        let specs = [
            ModelSpec::Gnn(LayerKind::Gat),
            ModelSpec::Baseline(BaselineKind::ExtraTrees),
            ModelSpec::Text,
            ModelSpec::Fusion(FusionMode::LateClassifier),
        ];
        for s in specs {
            assert_eq!(s.to_string().parse::<ModelSpec>().unwrap(), s);
        }
        assert_eq!(ModelSpec::Fusion(FusionMode::LateMean).to_string(), "fusion-late-mean");
        assert!("gnn-foo".parse::<ModelSpec>().is_err());
    }

    #[test]
    fn scaling_uses_training_rows_only() {
        let x = Matrix::from_rows(&[vec![0.0], vec![2.0], vec![100.0]]).unwrap();
        let s = scale_on(&x, &[0, 1, 1], &[]).unwrap();
        assert_eq!(s.data(), &[-1.0, 1.0, 99.0]);
    }

    #[test]
    fn run_seeds_differ() {
        assert_ne!(run_seed(7, 0), run_seed(7, 1));
        assert_ne!(run_seed(7, 0), run_seed(8, 0));
    }
}
