//! Joint model over the graph and text modalities: a GNN branch and a
//! projected document embedding, concatenated before a shared output layer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::EmbeddingTable;
use crate::error::{Error, Result};
use crate::gnn::{gnn_representation, init_gnn_params, stack_batch, BatchStructure, GnnConfig, GraphInput};
use crate::nn::{
    fit, glorot_uniform, softmax_cross_entropy, softmax_rows, Matrix, Objective, ParamStore, Prediction, Tape,
    TrainConfig, TrainOutcome, Var,
};
use crate::textenc::text_representation;

const GNN_PREFIX: &str = "gnn";
const TEXT_PREFIX: &str = "fusion.text";
const INIT_STREAM: u64 = 0xd1b5_4a32_d192_ed03;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EarlyFusionConfig {
    /// Graph branch; its `head_dim` is the graph representation width.
    pub gnn: GnnConfig,
    pub text_dim: usize,
    pub train: TrainConfig,
}

impl Default for EarlyFusionConfig {
    fn default() -> Self {
        Self {
            gnn: GnnConfig::default(),
            text_dim: 32,
            train: TrainConfig::default(),
        }
    }
}

/// Parameters: the GNN conv stack and `gnn.head.{w1,b1}`, the text
/// projection `fusion.text.{w1,b1}`, and `fusion.out.{w,b}` over the
/// concatenation `[graph | text]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyFusionModel {
    pub config: EarlyFusionConfig,
    pub graph_in_dim: usize,
    pub text_in_dim: usize,
    pub params: ParamStore,
}

pub fn init_early_fusion(cfg: &EarlyFusionConfig, graph_in_dim: usize, text_in_dim: usize) -> Result<ParamStore> {
    cfg.gnn.validate()?;
    if cfg.text_dim == 0 {
        return Err(Error::Config("fusion text_dim must be positive".into()));
    }
    let mut store = ParamStore::new();
    init_gnn_params(&mut store, &cfg.gnn, GNN_PREFIX, graph_in_dim, cfg.train.seed);
    store.remove("gnn.head.w2");
    store.remove("gnn.head.b2");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed ^ INIT_STREAM);
    store.insert(format!("{TEXT_PREFIX}.w1"), glorot_uniform(text_in_dim, cfg.text_dim, &mut rng));
    store.insert(format!("{TEXT_PREFIX}.b1"), Matrix::zeros(1, cfg.text_dim));
    let joint = cfg.gnn.head_dim + cfg.text_dim;
    store.insert("fusion.out.w", glorot_uniform(joint, 2, &mut rng));
    store.insert("fusion.out.b", Matrix::zeros(1, 2));
    Ok(store)
}

/// Returns `(logits, concatenated representation)`.
pub fn fused_logits(
    tape: &mut Tape,
    store: &ParamStore,
    cfg: &EarlyFusionConfig,
    x: Var,
    s: &BatchStructure,
    text: Var,
) -> Result<(Var, Var)> {
    let g = gnn_representation(tape, store, &cfg.gnn, GNN_PREFIX, x, s)?;
    let t = text_representation(tape, store, TEXT_PREFIX, text)?;
    let joint = tape.concat(g, t)?;
    let w = tape.param(store, "fusion.out.w")?;
    let b = tape.param(store, "fusion.out.b")?;
    Ok((tape.affine(joint, w, b)?, joint))
}

impl EarlyFusionModel {
    pub fn new(config: EarlyFusionConfig, graph_in_dim: usize, text_in_dim: usize) -> Result<Self> {
        let params = init_early_fusion(&config, graph_in_dim, text_in_dim)?;
        Ok(Self {
            config,
            graph_in_dim,
            text_in_dim,
            params,
        })
    }

    fn run(&self, params: &ParamStore, graphs: &[&GraphInput], text: Matrix) -> Result<(Tape, Var, Var)> {
        if graphs.len() != text.rows() {
            return Err(Error::dim("fusion text rows", graphs.len(), text.rows()));
        }
        if text.cols() != self.text_in_dim {
            return Err(Error::dim("fusion text width", self.text_in_dim, text.cols()));
        }
        for g in graphs {
            if g.features.cols() != self.graph_in_dim {
                return Err(Error::dim("fusion node features", self.graph_in_dim, g.features.cols()));
            }
        }
        let (x, s) = stack_batch(graphs)?;
        let mut tape = Tape::new();
        let xv = tape.input(x);
        let tv = tape.input(text);
        let (logits, rep) = fused_logits(&mut tape, params, &self.config, xv, &s, tv)?;
        Ok((tape, logits, rep))
    }

    /// Logits and concatenated representations.
    pub fn forward(&self, graphs: &[&GraphInput], text: &Matrix) -> Result<(Matrix, Matrix)> {
        let (tape, logits, rep) = self.run(&self.params, graphs, text.clone())?;
        Ok((tape.value(logits).clone(), tape.value(rep).clone()))
    }

    pub fn predict(&self, graphs: &[GraphInput], text: &Matrix) -> Result<Vec<Prediction>> {
        if graphs.len() != text.rows() {
            return Err(Error::dim("fusion text rows", graphs.len(), text.rows()));
        }
        let mut out = Vec::with_capacity(graphs.len());
        for start in (0..graphs.len()).step_by(64) {
            let end = (start + 64).min(graphs.len());
            let refs: Vec<&GraphInput> = graphs[start..end].iter().collect();
            let (logits, rep) = self.forward(&refs, &gather(text, &(start..end).collect::<Vec<_>>()))?;
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
}

fn gather(x: &Matrix, items: &[usize]) -> Matrix {
    let mut data = Vec::with_capacity(items.len() * x.cols());
    for &i in items {
        data.extend_from_slice(x.row(i));
    }
    Matrix::from_vec(items.len(), x.cols(), data).expect("sized by construction")
}

/// Embedding rows for `ids` in order; errors name every id without one.
pub fn align_embeddings(ids: &[&str], table: &EmbeddingTable) -> Result<Matrix> {
    let missing: Vec<&str> = ids.iter().copied().filter(|id| table.get(id).is_none()).collect();
    if !missing.is_empty() {
        return Err(Error::Invalid(format!(
            "articles missing a text embedding: {}",
            missing.join(", ")
        )));
    }
    let mut data = Vec::with_capacity(ids.len() * table.dim);
    for id in ids {
        data.extend_from_slice(table.get(id).expect("checked above"));
    }
    Matrix::from_vec(ids.len(), table.dim, data)
}

struct FusionObjective<'a> {
    model: &'a EarlyFusionModel,
    graphs: &'a [GraphInput],
    text: &'a Matrix,
    labels: &'a [usize],
    class_weights: [f64; 2],
}

impl FusionObjective<'_> {
    fn run(&self, params: &ParamStore, items: &[usize]) -> Result<(Tape, Var, f64, Matrix)> {
        let refs: Vec<&GraphInput> = items.iter().map(|&i| &self.graphs[i]).collect();
        let (tape, logits, _) = self.model.run(params, &refs, gather(self.text, items))?;
        let y: Vec<usize> = items.iter().map(|&i| self.labels[i]).collect();
        let (l, g) = softmax_cross_entropy(tape.value(logits), &y, &self.class_weights)?;
        Ok((tape, logits, l, g))
    }
}

impl Objective for FusionObjective<'_> {
    fn batch_loss_grad(&self, params: &mut ParamStore, batch: &[usize]) -> Result<f64> {
        let (tape, out, l, g) = self.run(params, batch)?;
        tape.backward(out, g)?.accumulate_into(&tape, params)?;
        Ok(l)
    }

    fn loss(&self, params: &ParamStore, items: &[usize]) -> Result<f64> {
        Ok(self.run(params, items)?.2)
    }
}

/// End-to-end training of both branches; `text` rows align with `graphs`.
pub fn train_early_fusion(
    graphs: &[GraphInput],
    text: &Matrix,
    labels: &[usize],
    train: &[usize],
    val: &[usize],
    config: &EarlyFusionConfig,
    class_weights: [f64; 2],
) -> Result<(EarlyFusionModel, TrainOutcome)> {
    if graphs.len() != labels.len() || text.rows() != labels.len() {
        return Err(Error::dim("fusion labels", labels.len(), graphs.len().min(text.rows())));
    }
    let first = *train.first().ok_or_else(|| Error::Empty("fusion training set".into()))?;
    let template = EarlyFusionModel::new(config.clone(), graphs[first].features.cols(), text.cols())?;
    let mut params = template.params.clone();
    let objective = FusionObjective {
        model: &template,
        graphs,
        text,
        labels,
        class_weights,
    };
    let outcome = fit(&objective, &mut params, train, val, &config.train)?;
    Ok((EarlyFusionModel { params, ..template }, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::{AdjacencyStructure, GnnModel};
    use rand::Rng;

    fn graph(n: usize, d: usize, rng: &mut ChaCha8Rng) -> GraphInput {
        let pairs: Vec<(usize, usize)> = (1..n).map(|i| (rng.random_range(0..i), i)).collect();
        let x = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        GraphInput::new(AdjacencyStructure::undirected(n, &pairs).unwrap(), x).unwrap()
    }

    fn small_cfg() -> EarlyFusionConfig {
        EarlyFusionConfig {
            gnn: GnnConfig {
                num_layers: 2,
                hidden_dim: 8,
                head_dim: 4,
                ..GnnConfig::default()
            },
            text_dim: 3,
            train: TrainConfig {
                seed: 5,
                ..TrainConfig::default()
            },
        }
    }

    #[test]
    fn representation_width_is_sum_of_branches() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gs: Vec<GraphInput> = (0..3).map(|_| graph(5, 4, &mut rng)).collect();
        let model = EarlyFusionModel::new(EarlyFusionConfig::default(), 4, 6).unwrap();
        let preds = model.predict(&gs, &Matrix::filled(3, 6, 0.3)).unwrap();
        assert!(preds.iter().all(|p| p.representation.len() == 64));
        assert!(!model.params.contains("gnn.head.w2"));
        assert!(model.predict(&gs, &Matrix::filled(2, 6, 0.3)).is_err());
    }

    #[test]
    fn zero_text_branch_matches_gnn() {
        let cfg = small_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gs: Vec<GraphInput> = (0..4).map(|_| graph(6, 3, &mut rng)).collect();
        let mut gnn = GnnModel::new(cfg.gnn.clone(), 3).unwrap();
        gnn.params.value_mut("gnn.head.b1").unwrap().fill(0.1);
        gnn.params.value_mut("gnn.head.b2").unwrap().data_mut().copy_from_slice(&[0.3, -0.2]);
        let mut fused = EarlyFusionModel::new(cfg.clone(), 3, 5).unwrap();
        for name in gnn.params.names() {
            if fused.params.contains(name) {
                *fused.params.value_mut(name).unwrap() = gnn.params.value(name).unwrap().clone();
            }
        }
        fused.params.value_mut("fusion.text.w1").unwrap().fill(0.0);
        fused.params.value_mut("fusion.text.b1").unwrap().fill(0.0);
        let w2 = gnn.params.value("gnn.head.w2").unwrap();
        let out = fused.params.value_mut("fusion.out.w").unwrap();
        for r in 0..w2.rows() {
            out.row_mut(r).copy_from_slice(w2.row(r));
        }
        *fused.params.value_mut("fusion.out.b").unwrap() = gnn.params.value("gnn.head.b2").unwrap().clone();

        let refs: Vec<&GraphInput> = gs.iter().collect();
        let text = Matrix::from_vec(4, 5, (0..20).map(|i| i as f64 * 0.1).collect()).unwrap();
        let (a, _) = gnn.forward(&refs).unwrap();
        let (b, _) = fused.forward(&refs, &text).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-10);
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = EarlyFusionConfig {
            train: TrainConfig {
                epochs: 3,
                batch_size: 4,
                ..small_cfg().train
            },
            ..small_cfg()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gs: Vec<GraphInput> = (0..10).map(|_| graph(4, 3, &mut rng)).collect();
        let text = Matrix::from_vec(10, 2, (0..20).map(|i| (i as f64).sin()).collect()).unwrap();
        let y: Vec<usize> = (0..10).map(|i| i % 2).collect();
        let idx: Vec<usize> = (0..10).collect();
        let (a, _) = train_early_fusion(&gs, &text, &y, &idx, &[], &cfg, [1.0, 1.0]).unwrap();
        let (b, _) = train_early_fusion(&gs, &text, &y, &idx, &[], &cfg, [1.0, 1.0]).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn alignment_lists_missing_ids() {
        let mut t = EmbeddingTable::new(2).unwrap();
        t.insert("a", vec![1.0, 2.0]).unwrap();
        let err = align_embeddings(&["a", "b", "c"], &t).unwrap_err().to_string();
        assert!(err.contains("b, c"));
        assert_eq!(align_embeddings(&["a"], &t).unwrap().row(0), &[1.0, 2.0]);
    }
}
