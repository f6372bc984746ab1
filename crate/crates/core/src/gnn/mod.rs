//! Message-passing graph classifiers.

mod adjacency;
mod layers;
mod model;

pub use adjacency::{normalize_adjacency, AdjacencyStructure};
pub use layers::{
    conv_layer, gat_forward, gcn_forward, graphconv_forward, init_layer, layer_param_names, BatchStructure,
    GatOutput, LayerKind,
};
pub use model::{
    gnn_logits, gnn_representation, init_gnn_params, predict_gnn, stack_batch, train_gnn, GnnConfig, GnnManifest,
    GnnModel, GraphInput, PREFIX,
};

use crate::error::Result;
use crate::nn::{Matrix, Pooling, Tape};

/// Column-wise pooling of a node matrix into one row.
pub fn global_pool(h: &Matrix, mode: Pooling) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let x = tape.input(h.clone());
    let seg = std::sync::Arc::new(vec![0..h.rows()]);
    let out = tape.pool(x, seg, mode)?;
    Ok(tape.value(out).data().to_vec())
}
