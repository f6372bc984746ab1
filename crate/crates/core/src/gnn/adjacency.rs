use serde::{Deserialize, Serialize};

use crate::cascade::PropagationGraph;
use crate::error::{Error, Result};
use crate::nn::{Neighborhoods, Propagation};

/// Directed weighted edges `src -> dst`, optionally augmented with self-loops
/// and carrying the symmetric normalization coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjacencyStructure {
    pub num_nodes: usize,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub weight: Vec<f64>,
    pub self_loops_added: bool,
    /// `e_ji / sqrt(d_j d_i)` per edge, present after normalization.
    pub coef: Option<Vec<f64>>,
}

impl AdjacencyStructure {
    pub fn new(num_nodes: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut out = Self {
            num_nodes,
            src: Vec::with_capacity(edges.len()),
            dst: Vec::with_capacity(edges.len()),
            weight: Vec::with_capacity(edges.len()),
            self_loops_added: false,
            coef: None,
        };
        for &(s, d, w) in edges {
            if s >= num_nodes || d >= num_nodes {
                return Err(Error::Invalid(format!(
                    "edge {s}->{d} out of range for {num_nodes} nodes"
                )));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::Invalid(format!("edge {s}->{d} has weight {w}")));
            }
            out.src.push(s);
            out.dst.push(d);
            out.weight.push(w);
        }
        Ok(out)
    }

    /// Unit-weight edges in both directions for every `(a, b)` pair.
    pub fn undirected(num_nodes: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let edges: Vec<_> = pairs
            .iter()
            .flat_map(|&(a, b)| [(a, b, 1.0), (b, a, 1.0)])
            .collect();
        Self::new(num_nodes, &edges)
    }

    /// Parent and child exchange messages in both directions.
    pub fn from_graph(graph: &PropagationGraph) -> Self {
        Self::undirected(graph.num_nodes(), &graph.edges).expect("tree edges are in range")
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.src
            .iter()
            .zip(&self.dst)
            .zip(&self.weight)
            .map(|((&s, &d), &w)| (s, d, w))
    }

    /// `1 + sum of incoming weights` per node (before self-loop augmentation).
    pub fn augmented_degrees(&self) -> Vec<f64> {
        let mut deg = vec![1.0; self.num_nodes];
        for (s, d, w) in self.edges() {
            if s != d || !self.self_loops_added {
                deg[d] += w;
            }
        }
        deg
    }

    /// Propagation matrix with the normalized coefficients if present, raw
    /// weights otherwise.
    pub fn propagation(&self) -> Propagation {
        Propagation {
            num_nodes: self.num_nodes,
            src: self.src.clone(),
            dst: self.dst.clone(),
            coef: self.coef.clone().unwrap_or_else(|| self.weight.clone()),
        }
    }

    /// Attention sets `{i} ∪ N(i)` in CSR form, self first.
    pub fn attention_neighborhoods(&self) -> Neighborhoods {
        let mut incoming = vec![Vec::new(); self.num_nodes];
        for (s, d, _) in self.edges() {
            if s != d {
                incoming[d].push(s);
            }
        }
        let mut offsets = Vec::with_capacity(self.num_nodes + 1);
        let mut sources = Vec::with_capacity(self.num_nodes + self.num_edges());
        offsets.push(0);
        for (i, inc) in incoming.into_iter().enumerate() {
            sources.push(i);
            sources.extend(inc);
            offsets.push(sources.len());
        }
        Neighborhoods { offsets, sources }
    }
}

/// Adds a unit self-loop per node and fills `c_ji = e_ji / sqrt(d_j d_i)`
/// with `d_i = 1 + sum_j e_ji`.
pub fn normalize_adjacency(adj: &AdjacencyStructure) -> Result<AdjacencyStructure> {
    if adj.self_loops_added {
        return Err(Error::Invalid("adjacency already has self-loops".into()));
    }
    if let Some((s, _, _)) = adj.edges().find(|(s, d, _)| s == d) {
        return Err(Error::Invalid(format!("raw adjacency contains self-loop at {s}")));
    }
    let mut edges: Vec<_> = adj.edges().collect();
    for (s, d, _) in &edges {
        if *s >= adj.num_nodes || *d >= adj.num_nodes {
            return Err(Error::Invalid(format!("edge {s}->{d} out of range")));
        }
    }
    edges.extend((0..adj.num_nodes).map(|i| (i, i, 1.0)));
    let deg = adj.augmented_degrees();
    let mut out = AdjacencyStructure::new(adj.num_nodes, &edges)?;
    out.coef = Some(
        out.edges()
            .map(|(s, d, w)| w / (deg[s] * deg[d]).sqrt())
            .collect(),
    );
    out.self_loops_added = true;
    Ok(out)
}
