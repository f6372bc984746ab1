#![allow(dead_code)]

use propnews::gnn::{AdjacencyStructure, GraphInput};
use propnews::nn::Matrix;
use rand::Rng;

pub fn random_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Random tree edges `(parent, child)` with parent < child.
pub fn random_tree<R: Rng>(n: usize, rng: &mut R) -> Vec<(usize, usize)> {
    (1..n).map(|c| (rng.random_range(0..c), c)).collect()
}

/// Random undirected graph with about `p * n^2 / 2` unit edges.
pub fn random_graph<R: Rng>(n: usize, p: f64, rng: &mut R) -> AdjacencyStructure {
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(p) {
                pairs.push((a, b));
            }
        }
    }
    AdjacencyStructure::undirected(n, &pairs).unwrap()
}

pub fn random_graph_input<R: Rng>(n: usize, d: usize, rng: &mut R) -> GraphInput {
    let tree = random_tree(n, rng);
    GraphInput::new(AdjacencyStructure::undirected(n, &tree).unwrap(), random_matrix(n, d, rng)).unwrap()
}

/// Relabels nodes: old node `i` becomes `perm[i]`.
pub fn permute_graph(g: &GraphInput, perm: &[usize]) -> GraphInput {
    let edges: Vec<_> = g.adjacency.edges().map(|(s, d, w)| (perm[s], perm[d], w)).collect();
    let mut x = Matrix::zeros(g.features.rows(), g.features.cols());
    for i in 0..perm.len() {
        x.row_mut(perm[i]).copy_from_slice(g.features.row(i));
    }
    GraphInput::new(AdjacencyStructure::new(perm.len(), &edges).unwrap(), x).unwrap()
}

/// Dense `D^{-1/2} (A + I) D^{-1/2}` with `A[i][j] = e_ji`.
pub fn dense_normalized(adj: &AdjacencyStructure) -> nalgebra::DMatrix<f64> {
    let n = adj.num_nodes;
    let mut a = nalgebra::DMatrix::<f64>::identity(n, n);
    for (s, d, w) in adj.edges() {
        a[(d, s)] += w;
    }
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    nalgebra::DMatrix::from_fn(n, n, |i, j| a[(i, j)] / (deg[i] * deg[j]).sqrt())
}

pub fn to_dense(m: &Matrix) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}
