use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{conv_layer, init_layer, AdjacencyStructure, BatchStructure, LayerKind};
use crate::cascade::PropagationGraph;
use crate::error::{Error, Result};
use crate::nn::{
    fit, softmax_cross_entropy, softmax_rows, Matrix, Objective, ParamStore, Pooling, Prediction, Tape,
    TrainConfig, TrainOutcome, Var,
};

/// Seed offset separating weight initialization from batch shuffling.
const INIT_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnnConfig {
    pub layer_kind: LayerKind,
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub head_dim: usize,
    pub pooling: Pooling,
    pub leaky_relu_slope: f64,
    pub train: TrainConfig,
}

impl Default for GnnConfig {
    fn default() -> Self {
        Self {
            layer_kind: LayerKind::GraphConv,
            num_layers: 4,
            hidden_dim: 64,
            head_dim: 32,
            pooling: Pooling::Mean,
            leaky_relu_slope: 0.2,
            train: TrainConfig::default(),
        }
    }
}

impl GnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.hidden_dim == 0 || self.head_dim == 0 {
            return Err(Error::Config("gnn layers and dims must be positive".into()));
        }
        Ok(())
    }
}

/// A graph ready for message passing: raw bidirectional adjacency plus
/// scaled node features.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphInput {
    pub adjacency: AdjacencyStructure,
    pub features: Matrix,
}

impl GraphInput {
    pub fn new(adjacency: AdjacencyStructure, features: Matrix) -> Result<Self> {
        if features.rows() != adjacency.num_nodes {
            return Err(Error::dim("node feature rows", adjacency.num_nodes, features.rows()));
        }
        if features.rows() == 0 {
            return Err(Error::Empty("graph without nodes".into()));
        }
        Ok(Self {
            adjacency,
            features,
        })
    }

    pub fn from_graph(graph: &PropagationGraph, features: Matrix) -> Result<Self> {
        Self::new(AdjacencyStructure::from_graph(graph), features)
    }
}

/// Stacks the graphs of a batch into one feature matrix and structure.
pub fn stack_batch(graphs: &[&GraphInput]) -> Result<(Matrix, BatchStructure)> {
    let cols = graphs.first().map_or(0, |g| g.features.cols());
    let mut data = Vec::new();
    for g in graphs {
        if g.features.cols() != cols {
            return Err(Error::dim("node feature width", cols, g.features.cols()));
        }
        data.extend_from_slice(g.features.data());
    }
    let rows = data.len() / cols.max(1);
    let adj: Vec<&AdjacencyStructure> = graphs.iter().map(|g| &g.adjacency).collect();
    Ok((Matrix::from_vec(rows, cols, data)?, BatchStructure::new(&adj)?))
}

pub fn init_gnn_params(store: &mut ParamStore, cfg: &GnnConfig, prefix: &str, in_dim: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ INIT_STREAM);
    let mut d = in_dim;
    for k in 0..cfg.num_layers {
        init_layer(store, cfg.layer_kind, &format!("{prefix}.conv{k}"), d, cfg.hidden_dim, &mut rng);
        d = cfg.hidden_dim;
    }
    store.insert(
        format!("{prefix}.head.w1"),
        crate::nn::glorot_uniform(cfg.hidden_dim, cfg.head_dim, &mut rng),
    );
    store.insert(format!("{prefix}.head.b1"), Matrix::zeros(1, cfg.head_dim));
    store.insert(format!("{prefix}.head.w2"), crate::nn::glorot_uniform(cfg.head_dim, 2, &mut rng));
    store.insert(format!("{prefix}.head.b2"), Matrix::zeros(1, 2));
}

/// Conv stack, pooling, and the first head layer: one `head_dim` row per
/// graph.
pub fn gnn_representation(
    tape: &mut Tape,
    store: &ParamStore,
    cfg: &GnnConfig,
    prefix: &str,
    x: Var,
    s: &BatchStructure,
) -> Result<Var> {
    let mut h = x;
    for k in 0..cfg.num_layers {
        let c = conv_layer(tape, store, cfg.layer_kind, &format!("{prefix}.conv{k}"), h, s, cfg.leaky_relu_slope)?;
        h = tape.relu(c);
    }
    let pooled = tape.pool(h, s.segments.clone(), cfg.pooling)?;
    let w1 = tape.param(store, &format!("{prefix}.head.w1"))?;
    let b1 = tape.param(store, &format!("{prefix}.head.b1"))?;
    let z = tape.affine(pooled, w1, b1)?;
    Ok(tape.relu(z))
}

/// Returns `(logits, representation)`.
pub fn gnn_logits(
    tape: &mut Tape,
    store: &ParamStore,
    cfg: &GnnConfig,
    prefix: &str,
    x: Var,
    s: &BatchStructure,
) -> Result<(Var, Var)> {
    let rep = gnn_representation(tape, store, cfg, prefix, x, s)?;
    let w2 = tape.param(store, &format!("{prefix}.head.w2"))?;
    let b2 = tape.param(store, &format!("{prefix}.head.b2"))?;
    Ok((tape.affine(rep, w2, b2)?, rep))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnnManifest {
    pub config: GnnConfig,
    pub in_dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GnnModel {
    pub config: GnnConfig,
    pub in_dim: usize,
    pub params: ParamStore,
}

pub const PREFIX: &str = "gnn";
const PREDICT_CHUNK: usize = 64;

impl GnnModel {
    pub fn new(config: GnnConfig, in_dim: usize) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        init_gnn_params(&mut params, &config, PREFIX, in_dim, config.train.seed);
        Ok(Self {
            config,
            in_dim,
            params,
        })
    }

    /// Zeros the output layer so every prediction is `[0.5, 0.5]`.
    pub fn zero_head(&mut self) -> Result<()> {
        self.params.value_mut("gnn.head.w2")?.fill(0.0);
        self.params.value_mut("gnn.head.b2")?.fill(0.0);
        Ok(())
    }

    fn check_inputs(&self, graphs: &[&GraphInput]) -> Result<()> {
        for g in graphs {
            if g.features.cols() != self.in_dim {
                return Err(Error::dim("gnn input features", self.in_dim, g.features.cols()));
            }
        }
        Ok(())
    }

    /// Logits and representations for a batch of graphs.
    pub fn forward(&self, graphs: &[&GraphInput]) -> Result<(Matrix, Matrix)> {
        self.check_inputs(graphs)?;
        let (x, s) = stack_batch(graphs)?;
        let mut tape = Tape::new();
        let xv = tape.input(x);
        let (logits, rep) = gnn_logits(&mut tape, &self.params, &self.config, PREFIX, xv, &s)?;
        Ok((tape.value(logits).clone(), tape.value(rep).clone()))
    }

    pub fn predict(&self, graphs: &[GraphInput]) -> Result<Vec<Prediction>> {
        let mut out = Vec::with_capacity(graphs.len());
        for chunk in graphs.chunks(PREDICT_CHUNK) {
            let refs: Vec<&GraphInput> = chunk.iter().collect();
            let (logits, rep) = self.forward(&refs)?;
            let p = softmax_rows(&logits);
            for r in 0..p.rows() {
                out.push(Prediction {
                    probs: [p.get(r, 0), p.get(r, 1)],
                    representation: rep.row(r).to_vec(),
                });
            }
        }
        Ok(out)
    }

    pub fn manifest(&self) -> GnnManifest {
        GnnManifest {
            config: self.config.clone(),
            in_dim: self.in_dim,
        }
    }

    pub fn save(&self, checkpoint: &Path, manifest: &Path) -> Result<()> {
        self.params.save(checkpoint)?;
        let json = serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes");
        std::fs::write(manifest, json + "\n").map_err(|e| Error::io(manifest, e))
    }

    pub fn load(checkpoint: &Path, manifest: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
        let m: GnnManifest =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("gnn manifest: {e}")))?;
        let params = ParamStore::load(checkpoint)?;
        let fresh = GnnModel::new(m.config.clone(), m.in_dim)?;
        for name in fresh.params.names() {
            if params.value(name)?.shape() != fresh.params.value(name)?.shape() {
                return Err(Error::Invalid(format!("checkpoint shape mismatch for {name}")));
            }
        }
        Ok(Self {
            config: m.config,
            in_dim: m.in_dim,
            params,
        })
    }
}

pub fn predict_gnn(model: &GnnModel, graph: &GraphInput) -> Result<Prediction> {
    Ok(model.predict(std::slice::from_ref(graph))?.remove(0))
}

struct GraphObjective<'a> {
    config: &'a GnnConfig,
    graphs: &'a [GraphInput],
    labels: &'a [usize],
    class_weights: [f64; 2],
}

impl GraphObjective<'_> {
    fn run(&self, params: &ParamStore, items: &[usize]) -> Result<(Tape, Var, f64, Matrix)> {
        let refs: Vec<&GraphInput> = items.iter().map(|&i| &self.graphs[i]).collect();
        let labels: Vec<usize> = items.iter().map(|&i| self.labels[i]).collect();
        let (x, s) = stack_batch(&refs)?;
        let mut tape = Tape::new();
        let xv = tape.input(x);
        let (logits, _) = gnn_logits(&mut tape, params, self.config, PREFIX, xv, &s)?;
        let (loss, grad) = softmax_cross_entropy(tape.value(logits), &labels, &self.class_weights)?;
        Ok((tape, logits, loss, grad))
    }
}

impl Objective for GraphObjective<'_> {
    fn batch_loss_grad(&self, params: &mut ParamStore, batch: &[usize]) -> Result<f64> {
        let (tape, logits, loss, grad) = self.run(params, batch)?;
        tape.backward(logits, grad)?.accumulate_into(&tape, params)?;
        Ok(loss)
    }

    fn loss(&self, params: &ParamStore, items: &[usize]) -> Result<f64> {
        Ok(self.run(params, items)?.2)
    }
}

/// Trains a fresh model on `train` and keeps the weights of the epoch with
/// the lowest loss on `val`.
pub fn train_gnn(
    graphs: &[GraphInput],
    labels: &[usize],
    train: &[usize],
    val: &[usize],
    config: &GnnConfig,
    class_weights: [f64; 2],
) -> Result<(GnnModel, TrainOutcome)> {
    if graphs.len() != labels.len() {
        return Err(Error::dim("gnn labels", graphs.len(), labels.len()));
    }
    if train.is_empty() {
        return Err(Error::Empty("gnn training set".into()));
    }
    let in_dim = graphs[train[0]].features.cols();
    let mut model = GnnModel::new(config.clone(), in_dim)?;
    model.check_inputs(&graphs.iter().collect::<Vec<_>>())?;
    let objective = GraphObjective {
        config,
        graphs,
        labels,
        class_weights,
    };
    let outcome = fit(&objective, &mut model.params, train, val, &config.train)?;
    Ok((model, outcome))
}
