use std::ops::Range;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{normalize_adjacency, AdjacencyStructure};
use crate::error::{Error, Result};
use crate::nn::{glorot_uniform, Matrix, Neighborhoods, ParamStore, Propagation, Tape, Var};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Gcn,
    #[default]
    GraphConv,
    Gat,
}

impl LayerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Gcn => "gcn",
            LayerKind::GraphConv => "graphconv",
            LayerKind::Gat => "gat",
        }
    }
}

impl std::str::FromStr for LayerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcn" => Ok(LayerKind::Gcn),
            "graphconv" => Ok(LayerKind::GraphConv),
            "gat" => Ok(LayerKind::Gat),
            _ => Err(Error::Config(format!("unknown layer kind {s:?}"))),
        }
    }
}

/// Message-passing structure of one or more graphs stacked as a disjoint
/// union, plus the row range of each graph.
#[derive(Clone, Debug)]
pub struct BatchStructure {
    pub num_nodes: usize,
    /// Normalized `Â` including self-loops.
    pub gcn: Arc<Propagation>,
    /// Raw neighbour sum without self term.
    pub sum: Arc<Propagation>,
    pub attention: Arc<Neighborhoods>,
    pub segments: Arc<Vec<Range<usize>>>,
}

impl BatchStructure {
    pub fn new(graphs: &[&AdjacencyStructure]) -> Result<Self> {
        let total: usize = graphs.iter().map(|a| a.num_nodes).sum();
        let mut gcn = Propagation {
            num_nodes: total,
            src: vec![],
            dst: vec![],
            coef: vec![],
        };
        let mut sum = gcn.clone();
        let mut offsets = vec![0];
        let mut sources = Vec::new();
        let mut segments = Vec::with_capacity(graphs.len());
        let mut base = 0;
        for adj in graphs {
            if adj.self_loops_added {
                return Err(Error::Invalid("batch expects raw adjacency".into()));
            }
            let norm = normalize_adjacency(adj)?.propagation();
            let raw = adj.propagation();
            for (dst, p) in [(&mut gcn, norm), (&mut sum, raw)] {
                dst.src.extend(p.src.iter().map(|s| s + base));
                dst.dst.extend(p.dst.iter().map(|d| d + base));
                dst.coef.extend(p.coef);
            }
            let nb = adj.attention_neighborhoods();
            for i in 0..nb.num_nodes() {
                sources.extend(nb.of(i).iter().map(|s| s + base));
                offsets.push(sources.len());
            }
            segments.push(base..base + adj.num_nodes);
            base += adj.num_nodes;
        }
        Ok(Self {
            num_nodes: total,
            gcn: Arc::new(gcn),
            sum: Arc::new(sum),
            attention: Arc::new(Neighborhoods { offsets, sources }),
            segments: Arc::new(segments),
        })
    }
}

pub fn layer_param_names(kind: LayerKind, prefix: &str) -> Vec<String> {
    match kind {
        LayerKind::Gcn => vec![format!("{prefix}.theta")],
        LayerKind::GraphConv => vec![format!("{prefix}.theta1"), format!("{prefix}.theta2")],
        LayerKind::Gat => vec![format!("{prefix}.theta"), format!("{prefix}.att")],
    }
}

pub fn init_layer<R: Rng>(
    store: &mut ParamStore,
    kind: LayerKind,
    prefix: &str,
    d_in: usize,
    d_out: usize,
    rng: &mut R,
) {
    let names = layer_param_names(kind, prefix);
    match kind {
        LayerKind::Gcn => store.insert(&names[0], glorot_uniform(d_in, d_out, rng)),
        LayerKind::GraphConv => {
            store.insert(&names[0], glorot_uniform(d_in, d_out, rng));
            store.insert(&names[1], glorot_uniform(d_in, d_out, rng));
        }
        LayerKind::Gat => {
            store.insert(&names[0], glorot_uniform(d_in, d_out, rng));
            store.insert(&names[1], glorot_uniform(1, 2 * d_out, rng));
        }
    }
}

/// One convolution on the tape, reading weights named under `prefix`.
pub fn conv_layer(
    tape: &mut Tape,
    store: &ParamStore,
    kind: LayerKind,
    prefix: &str,
    x: Var,
    s: &BatchStructure,
    slope: f64,
) -> Result<Var> {
    let names = layer_param_names(kind, prefix);
    match kind {
        LayerKind::Gcn => {
            let theta = tape.param(store, &names[0])?;
            let h = tape.matmul(x, theta)?;
            tape.propagate(h, s.gcn.clone())
        }
        LayerKind::GraphConv => {
            let t1 = tape.param(store, &names[0])?;
            let t2 = tape.param(store, &names[1])?;
            let own = tape.matmul(x, t1)?;
            let agg = tape.propagate(x, s.sum.clone())?;
            let nbr = tape.matmul(agg, t2)?;
            tape.add(own, nbr)
        }
        LayerKind::Gat => {
            let theta = tape.param(store, &names[0])?;
            let att = tape.param(store, &names[1])?;
            let h = tape.matmul(x, theta)?;
            tape.attention(h, att, s.attention.clone(), slope)
        }
    }
}

fn single(adj: &AdjacencyStructure, x: &Matrix) -> Result<(AdjacencyStructure, Tape, Var)> {
    if x.rows() != adj.num_nodes {
        return Err(Error::dim("feature rows", adj.num_nodes, x.rows()));
    }
    let mut tape = Tape::new();
    let xv = tape.input(x.clone());
    let raw = AdjacencyStructure {
        coef: None,
        ..adj.clone()
    };
    Ok((raw, tape, xv))
}

fn check_theta(x: &Matrix, theta: &Matrix) -> Result<()> {
    if theta.rows() != x.cols() {
        return Err(Error::dim("theta rows", x.cols(), theta.rows()));
    }
    Ok(())
}

/// `x'_i = Θᵀ Σ_{j ∈ N(i) ∪ {i}} c_ji x_j` over a normalized adjacency.
pub fn gcn_forward(x: &Matrix, adj: &AdjacencyStructure, theta: &Matrix) -> Result<Matrix> {
    let coef = adj
        .coef
        .as_ref()
        .ok_or_else(|| Error::Invalid("gcn_forward needs a normalized adjacency".into()))?;
    check_theta(x, theta)?;
    let (_, mut tape, xv) = single(adj, x)?;
    let prop = Arc::new(Propagation {
        coef: coef.clone(),
        ..adj.propagation()
    });
    let th = tape.input(theta.clone());
    let h = tape.matmul(xv, th)?;
    let out = tape.propagate(h, prop)?;
    Ok(tape.value(out).clone())
}

/// `x'_i = Θ1 x_i + Θ2 Σ_{j ∈ N(i)} e_ji x_j` over a raw adjacency.
pub fn graphconv_forward(
    x: &Matrix,
    adj: &AdjacencyStructure,
    theta1: &Matrix,
    theta2: &Matrix,
) -> Result<Matrix> {
    if adj.self_loops_added {
        return Err(Error::Invalid("graphconv_forward needs a raw adjacency".into()));
    }
    check_theta(x, theta1)?;
    check_theta(x, theta2)?;
    let (raw, mut tape, xv) = single(adj, x)?;
    let s = BatchStructure::new(&[&raw])?;
    let mut store = ParamStore::new();
    store.insert("c.theta1", theta1.clone());
    store.insert("c.theta2", theta2.clone());
    let out = conv_layer(&mut tape, &store, LayerKind::GraphConv, "c", xv, &s, 0.0)?;
    Ok(tape.value(out).clone())
}

#[derive(Clone, Debug)]
pub struct GatOutput {
    pub output: Matrix,
    pub neighborhoods: Neighborhoods,
    /// Attention coefficients aligned with `neighborhoods.sources`.
    pub alpha: Vec<f64>,
}

impl GatOutput {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.alpha[self.neighborhoods.offsets[i]..self.neighborhoods.offsets[i + 1]]
    }
}

/// Single-head attention convolution over a raw adjacency, attending over
/// `N(i) ∪ {i}`.
pub fn gat_forward(
    x: &Matrix,
    adj: &AdjacencyStructure,
    theta: &Matrix,
    att: &Matrix,
    slope: f64,
) -> Result<GatOutput> {
    if adj.self_loops_added {
        return Err(Error::Invalid("gat_forward needs a raw adjacency".into()));
    }
    check_theta(x, theta)?;
    let (raw, mut tape, xv) = single(adj, x)?;
    let s = BatchStructure::new(&[&raw])?;
    let mut store = ParamStore::new();
    store.insert("c.theta", theta.clone());
    store.insert("c.att", att.clone());
    let out = conv_layer(&mut tape, &store, LayerKind::Gat, "c", xv, &s, slope)?;
    Ok(GatOutput {
        output: tape.value(out).clone(),
        neighborhoods: (*s.attention).clone(),
        alpha: tape.attention_coefficients(out).expect("attention node").to_vec(),
    })
}
