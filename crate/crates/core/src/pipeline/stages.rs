//! Artifact-producing pipeline stages. Each stage reads the artifacts of
//! earlier stages from the run directory, writes its own, and records a
//! JSON manifest under `manifests/`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::experiment::{
    embed_corpus, evaluate_runs, pretraining_pool, run_protocol, tokenize_articles, Experiment, ModelConfigs,
    ModelSpec, RunResult,
};
use crate::baselines::{BaselineKind, BaselineParams};
use crate::cascade::{build_all, CascadeNode, NodeKind, PropagationGraph, DEFAULT_WINDOW_SECONDS};
use crate::dataset::{
    fmt_f64, load_dataset, read_feature_table, write_feature_table, EmbeddingTable, FeatureRow, Label, LabeledDataset,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate_probabilities, reports_to_json, reports_to_text, MetricsReport, SplitSpec};
use crate::featurize::{extract_graph_features, extract_node_features, SentimentLexicon, GRAPH_FEATURES};
use crate::fusion::{align_embeddings, oof_to_csv, FusionConfig, FusionMode};
use crate::gnn::{AdjacencyStructure, GnnConfig};
use crate::nn::Matrix;
use crate::synth::{generate_dataset, SynthConfig};
use crate::textenc::{PvDbowConfig, TextConfig, Truncation};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// Defaults to `<out>/data/news.jsonl` written by `synth`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub news: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tweets: Option<PathBuf>,
    pub filter_empty_text: bool,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            news: None,
            tweets: None,
            filter_empty_text: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeSection {
    pub window_seconds: i64,
}

impl Default for CascadeSection {
    fn default() -> Self {
        Self {
            window_seconds: DEFAULT_WINDOW_SECONDS,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub kind: BaselineKind,
    pub params: BaselineParams,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextSection {
    pub truncation: Truncation,
    pub pvdbow: PvDbowConfig,
    pub classifier: TextConfig,
}

/// Run configuration; one TOML section per module. The top-level `seed`
/// drives every random stream of the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: DatasetSection,
    pub synth: SynthConfig,
    pub cascade: CascadeSection,
    pub gnn: GnnConfig,
    pub baselines: BaselineSection,
    pub textenc: TextSection,
    pub fusion: FusionConfig,
    pub eval: SplitSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            dataset: DatasetSection::default(),
            synth: SynthConfig::default(),
            cascade: CascadeSection::default(),
            gnn: GnnConfig::default(),
            baselines: BaselineSection::default(),
            textenc: TextSection::default(),
            fusion: FusionConfig::default(),
            eval: SplitSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.set_seed(cfg.seed);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Sets the master seed and the seeds derived from it.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.synth.seed = seed;
        self.textenc.pvdbow.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.gnn.validate()?;
        self.fusion.validate()?;
        self.eval.validate()?;
        if self.cascade.window_seconds < 0 {
            return Err(Error::Config("cascade window_seconds must be non-negative".into()));
        }
        if self.dataset.news.is_some() != self.dataset.tweets.is_some() {
            return Err(Error::Config("dataset news and tweets paths must be given together".into()));
        }
        Ok(())
    }

    pub fn model_configs(&self) -> ModelConfigs {
        ModelConfigs {
            gnn: self.gnn.clone(),
            baseline: self.baselines.params.clone(),
            text: self.textenc.classifier.clone(),
            fusion: self.fusion.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Model families selectable by `train`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelFamily {
    Gnn,
    Baseline,
    Text,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Synth,
    BuildGraphs,
    Features,
    EmbedText,
    Train(ModelFamily),
    Fuse(FusionMode),
    Evaluate,
    Report,
}

impl Stage {
    pub fn name(self) -> String {
        match self {
            Stage::Synth => "synth".into(),
            Stage::BuildGraphs => "build-graphs".into(),
            Stage::Features => "features".into(),
            Stage::EmbedText => "embed-text".into(),
            Stage::Train(ModelFamily::Gnn) => "train-gnn".into(),
            Stage::Train(ModelFamily::Baseline) => "train-baseline".into(),
            Stage::Train(ModelFamily::Text) => "train-text".into(),
            Stage::Fuse(m) => format!("fuse-{}", m.as_str()),
            Stage::Evaluate => "evaluate".into(),
            Stage::Report => "report".into(),
        }
    }

    /// Every stage of a full run, in order.
    pub fn all() -> Vec<Stage> {
        let mut v = vec![Stage::Synth, Stage::BuildGraphs, Stage::Features, Stage::EmbedText];
        v.extend([ModelFamily::Gnn, ModelFamily::Baseline, ModelFamily::Text].map(Stage::Train));
        v.extend(FusionMode::ALL.map(Stage::Fuse));
        v.extend([Stage::Evaluate, Stage::Report]);
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub seed: u64,
    pub version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub config: RunConfig,
    pub outputs: Vec<String>,
    pub notes: BTreeMap<String, serde_json::Value>,
    pub metrics: Vec<MetricsReport>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StageOutput {
    pub outputs: Vec<String>,
    pub notes: BTreeMap<String, serde_json::Value>,
    pub metrics: Vec<MetricsReport>,
}

/// Fixed artifact locations inside a run directory.
pub struct Layout<'a> {
    pub out: &'a Path,
}

impl Layout<'_> {
    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn require(&self, rel: &str, artifact: &str) -> Result<PathBuf> {
        let p = self.path(rel);
        if p.exists() {
            Ok(p)
        } else {
            Err(Error::MissingArtifact(artifact.into()))
        }
    }

    fn write(&self, rel: &str, body: &str) -> Result<String> {
        let p = self.path(rel);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        Ok(rel.to_string())
    }
}

pub const NEWS: &str = "data/news.jsonl";
pub const TWEETS: &str = "data/tweets.jsonl";
pub const GRAPHS: &str = "graphs/graphs.jsonl";
pub const GRAPH_FEATURES_CSV: &str = "features/graph_features.csv";
pub const NODE_FEATURES_JSONL: &str = "features/node_features.jsonl";
pub const EMBEDDINGS: &str = "text/embeddings.tsv";
pub const METRICS_JSON: &str = "report/metrics.json";
pub const METRICS_TXT: &str = "report/metrics.txt";
pub const SUMMARY_JSON: &str = "report/summary.json";
pub const SUMMARY_TXT: &str = "report/summary.txt";

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Runs one stage and writes its manifest.
pub fn run_stage(stage: Stage, cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let layout = Layout { out };
    let started_unix = unix_now();
    let result = match stage {
        Stage::Synth => stage_synth(cfg, &layout),
        Stage::BuildGraphs => stage_build_graphs(cfg, &layout),
        Stage::Features => stage_features(cfg, &layout),
        Stage::EmbedText => stage_embed_text(cfg, &layout),
        Stage::Train(family) => {
            let spec = match family {
                ModelFamily::Gnn => ModelSpec::Gnn(cfg.gnn.layer_kind),
                ModelFamily::Baseline => ModelSpec::Baseline(cfg.baselines.kind),
                ModelFamily::Text => ModelSpec::Text,
            };
            stage_model(cfg, &layout, spec)
        }
        Stage::Fuse(mode) => stage_model(cfg, &layout, ModelSpec::Fusion(mode)),
        Stage::Evaluate => stage_evaluate(&layout),
        Stage::Report => stage_report(&layout),
    }?;
    let manifest = Manifest {
        stage: stage.name(),
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix,
        finished_unix: unix_now(),
        config: cfg.clone(),
        outputs: result.outputs,
        notes: result.notes,
        metrics: result.metrics,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    layout.write(&format!("manifests/{}.json", stage.name()), &(json + "\n"))?;
    Ok(manifest)
}

/// Every stage in order.
pub fn run_pipeline(cfg: &RunConfig, out: &Path) -> Result<Vec<Manifest>> {
    Stage::all()
        .into_iter()
        .filter(|s| *s != Stage::Synth || cfg.dataset.news.is_none())
        .map(|s| run_stage(s, cfg, out))
        .collect()
}

fn stage_synth(cfg: &RunConfig, layout: &Layout<'_>) -> Result<StageOutput> {
    let data = generate_dataset(&cfg.synth)?;
    let outputs = vec![layout.write(NEWS, &data.news_jsonl())?, layout.write(TWEETS, &data.tweets_jsonl())?];
    let mut notes = BTreeMap::new();
    notes.insert("articles".into(), data.news.len().into());
    notes.insert("tweets".into(), data.tweets.len().into());
    Ok(StageOutput {
        outputs,
        notes,
        metrics: Vec::new(),
    })
}

fn load_input(cfg: &RunConfig, layout: &Layout<'_>) -> Result<LabeledDataset> {
    let (news, tweets) = match (&cfg.dataset.news, &cfg.dataset.tweets) {
        (Some(n), Some(t)) => (n.clone(), t.clone()),
        _ => (layout.require(NEWS, "dataset")?, layout.require(TWEETS, "dataset")?),
    };
    let ds = load_dataset(&news, &tweets)?;
    Ok(if cfg.dataset.filter_empty_text {
        ds.without_empty_text()
    } else {
        ds
    })
}

/// Node order and parents of one propagation graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub article_id: String,
    /// Tweet id of node `k + 1`.
    pub tweet_ids: Vec<String>,
    /// Parent of node `k + 1`.
    pub parents: Vec<usize>,
}

impl GraphRecord {
    pub fn from_graph(g: &PropagationGraph) -> Self {
        let tail = &g.nodes[1..];
        Self {
            article_id: g.article_id.clone(),
            tweet_ids: tail
                .iter()
                .map(|n| n.tweet.as_ref().map_or_else(String::new, |t| t.tweet_id.clone()))
                .collect(),
            parents: tail.iter().map(|n| n.parent.unwrap_or(0)).collect(),
        }
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.parents.iter().enumerate().map(|(k, &p)| (p, k + 1)).collect()
    }

    fn num_nodes(&self) -> usize {
        self.tweet_ids.len() + 1
    }

    /// Rebuilds the graph from the tweets of its article.
    fn to_graph(&self, dataset: &LabeledDataset) -> Result<PropagationGraph> {
        let entry = dataset
            .entries
            .iter()
            .find(|e| e.article.article_id == self.article_id)
            .ok_or_else(|| Error::Invalid(format!("graph for unknown article {}", self.article_id)))?;
        let by_id: HashMap<&str, _> = entry.tweets.iter().map(|t| (t.tweet_id.as_str(), t)).collect();
        let mut nodes = vec![CascadeNode {
            index: 0,
            kind: NodeKind::NewsRoot,
            tweet: None,
            parent: None,
        }];
        for (k, (id, &p)) in self.tweet_ids.iter().zip(&self.parents).enumerate() {
            let t = by_id
                .get(id.as_str())
                .ok_or_else(|| Error::Invalid(format!("graph references unknown tweet {id}")))?;
            nodes.push(CascadeNode {
                index: k + 1,
                kind: if t.is_retweet { NodeKind::Retweet } else { NodeKind::Tweet },
                tweet: Some((*t).clone()),
                parent: Some(p),
            });
        }
        let g = PropagationGraph {
            article_id: self.article_id.clone(),
            nodes,
            edges: self.edges(),
        };
        g.validate()?;
        Ok(g)
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path, context: &str) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                context: context.into(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn to_jsonl_lines<T: Serialize>(rows: &[T]) -> String {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r).expect("plain data serializes"));
        out.push('\n');
    }
    out
}

fn stage_build_graphs(cfg: &RunConfig, layout: &Layout<'_>) -> Result<StageOutput> {
    let ds = load_input(cfg, layout)?;
    let (graphs, diag) = build_all(&ds.entries, cfg.cascade.window_seconds);
    for g in &graphs {
        g.validate()?;
    }
    let records: Vec<GraphRecord> = graphs.iter().map(GraphRecord::from_graph).collect();
    let mut notes = BTreeMap::new();
    notes.insert("graphs".into(), graphs.len().into());
    notes.insert("diagnostics".into(), serde_json::to_value(diag).expect("plain data"));
    Ok(StageOutput {
        outputs: vec![layout.write(GRAPHS, &to_jsonl_lines(&records))?],
        notes,
        metrics: Vec::new(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct NodeFeatureRecord {
    article_id: String,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

fn stage_features(cfg: &RunConfig, layout: &Layout<'_>) -> Result<StageOutput> {
    let records: Vec<GraphRecord> = read_jsonl(&layout.require(GRAPHS, "graphs")?, "graphs")?;
    let ds = load_input(cfg, layout)?;
    let labels: HashMap<&str, Label> = ds.entries.iter().map(|e| (e.article.article_id.as_str(), e.article.label)).collect();
    let lexicon = SentimentLexicon::default_lexicon();
    let mut rows = Vec::with_capacity(records.len());
    let mut nodes = Vec::with_capacity(records.len());
    for r in &records {
        let g = r.to_graph(&ds)?;
        rows.push(FeatureRow {
            article_id: r.article_id.clone(),
            label: labels[r.article_id.as_str()],
            values: extract_graph_features(&g),
        });
        let x = extract_node_features(&g, &lexicon);
        nodes.push(NodeFeatureRecord {
            article_id: r.article_id.clone(),
            rows: x.rows(),
            cols: x.cols(),
            values: x.into_vec(),
        });
    }
    let path = layout.path(GRAPH_FEATURES_CSV);
    std::fs::create_dir_all(path.parent().expect("nested path")).map_err(|e| Error::io(&path, e))?;
    write_feature_table(&GRAPH_FEATURES, &rows, &path)?;
    Ok(StageOutput {
        outputs: vec![GRAPH_FEATURES_CSV.into(), layout.write(NODE_FEATURES_JSONL, &to_jsonl_lines(&nodes))?],
        notes: BTreeMap::from([("articles".to_string(), rows.len().into())]),
        metrics: Vec::new(),
    })
}

fn stage_embed_text(cfg: &RunConfig, layout: &Layout<'_>) -> Result<StageOutput> {
    let ds = load_input(cfg, layout)?;
    let labels: Vec<usize> = ds.labels().into_iter().map(Label::class_index).collect();
    let docs = tokenize_articles(&ds, cfg.textenc.truncation);
    let pool = pretraining_pool(&labels, &cfg.eval, cfg.seed)?;
    let (model, emb) = embed_corpus(&docs, &pool, &cfg.textenc.pvdbow)?;
    let mut table = EmbeddingTable::new(model.dim())?;
    for (e, r) in ds.entries.iter().zip(0..emb.rows()) {
        table.insert(e.article.article_id.clone(), emb.row(r).to_vec())?;
    }
    let mut notes = BTreeMap::new();
    notes.insert("vocabulary".into(), model.vocab.len().into());
    notes.insert("pretraining_documents".into(), pool.len().into());
    Ok(StageOutput {
        outputs: vec![layout.write(EMBEDDINGS, &table.to_tsv())?],
        notes,
        metrics: Vec::new(),
    })
}

/// Rebuilds the experiment from the `features` (and optionally
/// `embed-text`) artifacts.
pub fn load_experiment(out: &Path, with_text: bool) -> Result<Experiment> {
    let layout = Layout { out };
    let table = read_feature_table(&layout.require(GRAPH_FEATURES_CSV, "features")?)?;
    let nodes: Vec<NodeFeatureRecord> = read_jsonl(&layout.require(NODE_FEATURES_JSONL, "features")?, "node features")?;
    let graphs: Vec<GraphRecord> = read_jsonl(&layout.require(GRAPHS, "graphs")?, "graphs")?;
    let n = table.rows.len();
    if nodes.len() != n || graphs.len() != n {
        return Err(Error::Invalid("graph, node feature and feature tables disagree in length".into()));
    }
    let mut exp = Experiment {
        ids: Vec::with_capacity(n),
        labels: Vec::with_capacity(n),
        adjacency: Vec::with_capacity(n),
        node_features: Vec::with_capacity(n),
        graph_features: Matrix::from_rows(&table.rows.iter().map(|r| r.values.clone()).collect::<Vec<_>>())?,
        text: None,
    };
    for ((row, nf), g) in table.rows.iter().zip(nodes).zip(&graphs) {
        if nf.article_id != row.article_id || g.article_id != row.article_id || nf.rows != g.num_nodes() {
            return Err(Error::Invalid(format!("feature artifacts misaligned at {}", row.article_id)));
        }
        exp.ids.push(row.article_id.clone());
        exp.labels.push(row.label.class_index());
        exp.adjacency.push(AdjacencyStructure::undirected(g.num_nodes(), &g.edges())?);
        exp.node_features.push(Matrix::from_vec(nf.rows, nf.cols, nf.values)?);
    }
    if with_text {
        let emb = EmbeddingTable::load(&layout.require(EMBEDDINGS, "text embeddings")?)?;
        let ids: Vec<&str> = exp.ids.iter().map(String::as_str).collect();
        let m = align_embeddings(&ids, &emb)?;
        exp = exp.with_text(m)?;
    }
    Ok(exp)
}

pub const PREDICTIONS_HEADER: &str = "model,run,article_id,label,p_fake,p_real";

fn predictions_csv(name: &str, exp: &Experiment, results: &[RunResult]) -> String {
    let mut out = format!("{PREDICTIONS_HEADER}\n");
    for r in results {
        for (&i, p) in r.test.iter().zip(&r.probs) {
            let _ = writeln!(
                out,
                "{name},{},{},{},{},{}",
                r.run,
                exp.ids[i],
                Label::from_class_index(exp.labels[i]),
                fmt_f64(p[0]),
                fmt_f64(p[1])
            );
        }
    }
    out
}

fn stage_model(cfg: &RunConfig, layout: &Layout<'_>, spec: ModelSpec) -> Result<StageOutput> {
    if spec.needs_graphs() {
        layout.require(GRAPH_FEATURES_CSV, "features")?;
    }
    let exp = load_experiment(layout.out, spec.needs_text())?;
    let name = spec.to_string();
    let results = run_protocol(&exp, spec, &cfg.model_configs(), &cfg.eval, cfg.seed)?;
    let mut outputs = vec![layout.write(&format!("predictions/{name}.csv"), &predictions_csv(&name, &exp, &results))?];
    for r in &results {
        outputs.push(layout.write(&format!("checkpoints/{name}/run{:02}.txt", r.run), &r.checkpoint)?);
        if !r.oof.is_empty() {
            outputs.push(layout.write(&format!("fusion/{name}/oof-run{:02}.csv", r.run), &oof_to_csv(&r.oof))?);
        }
    }
    let report = evaluate_runs(&name, &exp.labels, &results)?;
    Ok(StageOutput {
        outputs,
        notes: BTreeMap::from([("runs".to_string(), results.len().into())]),
        metrics: vec![report],
    })
}

/// Parses a predictions file into per-run `(labels, probabilities)`.
fn read_predictions(path: &Path) -> Result<(String, Vec<(Vec<usize>, Vec<[f64; 2]>)>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let err = |line: usize, message: String| Error::Parse {
        context: path.display().to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, l)| l) != Some(PREDICTIONS_HEADER) {
        return Err(err(1, "bad predictions header".into()));
    }
    let mut name = String::new();
    let mut runs: BTreeMap<usize, (Vec<usize>, Vec<[f64; 2]>)> = BTreeMap::new();
    for (i, l) in lines.filter(|(_, l)| !l.is_empty()) {
        let f: Vec<&str> = l.split(',').collect();
        let [model, run, _, label, a, b] = f[..] else {
            return Err(err(i + 1, "expected 6 fields".into()));
        };
        name = model.to_string();
        let run: usize = run.parse().map_err(|_| err(i + 1, "bad run".into()))?;
        let label: Label = label.parse()?;
        let num = |s: &str| s.parse::<f64>().map_err(|e| err(i + 1, e.to_string()));
        let entry = runs.entry(run).or_default();
        entry.0.push(label.class_index());
        entry.1.push([num(a)?, num(b)?]);
    }
    Ok((name, runs.into_values().collect()))
}

fn stage_evaluate(layout: &Layout<'_>) -> Result<StageOutput> {
    let dir = layout.path("predictions");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|_| Error::MissingArtifact("predictions".into()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::MissingArtifact("predictions".into()));
    }
    let reports = files
        .iter()
        .map(|f| {
            let (name, runs) = read_predictions(f)?;
            let metrics = runs
                .iter()
                .map(|(y, p)| evaluate_probabilities(y, p))
                .collect::<Result<Vec<_>>>()?;
            MetricsReport::aggregate(name, metrics)
        })
        .collect::<Result<Vec<_>>>()?;
    let outputs = vec![
        layout.write(METRICS_JSON, &reports_to_json(&reports))?,
        layout.write(METRICS_TXT, &reports_to_text(&reports))?,
    ];
    Ok(StageOutput {
        outputs,
        notes: BTreeMap::new(),
        metrics: reports,
    })
}

/// Collects the metric blocks of all model manifests in the run directory.
pub fn reports_from_manifests(out: &Path) -> Result<Vec<MetricsReport>> {
    let dir = out.join("manifests");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|_| Error::MissingArtifact("manifests".into()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let mut by_model: BTreeMap<String, MetricsReport> = BTreeMap::new();
    for f in files {
        let text = std::fs::read_to_string(&f).map_err(|e| Error::io(&f, e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            context: f.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if m.stage.starts_with("train-") || m.stage.starts_with("fuse-") {
            for r in m.metrics {
                by_model.insert(r.model.clone(), r);
            }
        }
    }
    if by_model.is_empty() {
        return Err(Error::MissingArtifact("model manifests".into()));
    }
    Ok(by_model.into_values().collect())
}

fn stage_report(layout: &Layout<'_>) -> Result<StageOutput> {
    let reports = reports_from_manifests(layout.out)?;
    let outputs = vec![
        layout.write(SUMMARY_JSON, &reports_to_json(&reports))?,
        layout.write(SUMMARY_TXT, &reports_to_text(&reports))?,
    ];
    Ok(StageOutput {
        outputs,
        notes: BTreeMap::new(),
        metrics: reports,
    })
}
