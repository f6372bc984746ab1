mod common;

use common::*;
use propnews::gnn::*;
use propnews::nn::*;
use propnews::Result;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn gcn_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let n = rng.random_range(1..=50);
        let d = rng.random_range(1..=8);
        let h = rng.random_range(1..=8);
        let adj = random_graph(n, rng.random_range(0.0..0.3), &mut rng);
        let x = random_matrix(n, d, &mut rng);
        let theta = random_matrix(d, h, &mut rng);
        let got = gcn_forward(&x, &normalize_adjacency(&adj).unwrap(), &theta).unwrap();
        let want = dense_normalized(&adj) * to_dense(&x) * to_dense(&theta);
        assert!((to_dense(&got) - want).abs().max() < 1e-10);
    }
}

/// Sum of `layer(x) ⊙ r` as a scalar objective over a parameter store that
/// also holds the node features.
fn layer_check(kind: LayerKind, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..12);
    let (d, h) = (rng.random_range(1..5), rng.random_range(1..5));
    let adj = random_graph(n, 0.35, &mut rng);
    let s = BatchStructure::new(&[&adj]).unwrap();
    let mut store = ParamStore::new();
    init_layer(&mut store, kind, "c", d, h, &mut rng);
    store.insert("x", random_matrix(n, d, &mut rng));
    if kind == LayerKind::Gat {
        // Spread the attention logits so softmax gradients are not tiny.
        store.value_mut("c.att").unwrap().scale(3.0);
    }
    let r = random_matrix(n, h, &mut rng);
    let eval = |p: &ParamStore| -> Result<(Tape, Var, f64)> {
        let mut tape = Tape::new();
        let x = tape.param(p, "x")?;
        let out = conv_layer(&mut tape, p, kind, "c", x, &s, 0.2)?;
        let v: f64 = tape.value(out).data().iter().zip(r.data()).map(|(a, b)| a * b).sum();
        Ok((tape, out, v))
    };
    let (tape, out, _) = eval(&store).unwrap();
    tape.backward(out, r.clone()).unwrap().accumulate_into(&tape, &mut store).unwrap();
    let report = finite_difference_check(&mut store, |p| Ok(eval(p)?.2), 1e-5, None, &mut rng).unwrap();
    assert_eq!(report.coverage.len(), layer_param_names(kind, "c").len() + 1);
    report.max_rel_error
}

#[test]
fn layer_gradients() {
    for kind in [LayerKind::Gcn, LayerKind::GraphConv, LayerKind::Gat] {
        for seed in 0..20 {
            let err = layer_check(kind, seed);
            assert!(err < 1e-4, "{kind:?} seed {seed}: {err}");
        }
    }
}

#[test]
fn gat_rows_sum_to_one_on_random_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let n = rng.random_range(1..30);
        let adj = random_graph(n, 0.2, &mut rng);
        let x = random_matrix(n, 3, &mut rng);
        let theta = random_matrix(3, 4, &mut rng);
        let mut att = random_matrix(1, 8, &mut rng);
        att.scale(4.0);
        let out = gat_forward(&x, &adj, &theta, &att, 0.2).unwrap();
        // Dense softmax oracle.
        let hx = x.matmul(&theta).unwrap();
        let dot = |row: &[f64], w: &[f64]| row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..n {
            let set = out.neighborhoods.of(i);
            let logits: Vec<f64> = set
                .iter()
                .map(|&j| {
                    let z = dot(hx.row(i), &att.data()[..4]) + dot(hx.row(j), &att.data()[4..]);
                    if z > 0.0 { z } else { 0.2 * z }
                })
                .collect();
            let total: f64 = logits.iter().map(|z| z.exp()).sum();
            for (a, z) in out.row(i).iter().zip(&logits) {
                assert!((a - z.exp() / total).abs() < 1e-12);
            }
            assert!((out.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn global_pool_examples() {
    let one = Matrix::row_vector(vec![1.0, -2.0]);
    for mode in [Pooling::Sum, Pooling::Mean, Pooling::Max] {
        assert_eq!(global_pool(&one, mode).unwrap(), vec![1.0, -2.0]);
    }
    let two = Matrix::from_rows(&[vec![1.0, 3.0], vec![3.0, 1.0]]).unwrap();
    assert_eq!(global_pool(&two, Pooling::Mean).unwrap(), vec![2.0, 2.0]);
    assert_eq!(global_pool(&two, Pooling::Max).unwrap(), vec![3.0, 3.0]);
    assert!(global_pool(&Matrix::zeros(0, 2), Pooling::Sum).is_err());
}

fn small_config(kind: LayerKind, pooling: Pooling) -> GnnConfig {
    GnnConfig {
        layer_kind: kind,
        num_layers: 2,
        hidden_dim: 5,
        head_dim: 4,
        pooling,
        ..GnnConfig::default()
    }
}

#[test]
fn full_model_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for kind in [LayerKind::Gcn, LayerKind::GraphConv, LayerKind::Gat] {
        for pooling in [Pooling::Sum, Pooling::Mean, Pooling::Max] {
            let cfg = small_config(kind, pooling);
            let graphs: Vec<GraphInput> = (0..4).map(|_| random_graph_input(rng.random_range(1..7), 3, &mut rng)).collect();
            let labels = [0usize, 1, 1, 0];
            let refs: Vec<&GraphInput> = graphs.iter().collect();
            let (x, s) = stack_batch(&refs).unwrap();
            let mut store = ParamStore::new();
            init_gnn_params(&mut store, &cfg, "gnn", 3, rng.random());
            // Nonzero biases keep pre-activations off the ReLU kink at 0.
            for b in ["gnn.head.b1", "gnn.head.b2"] {
                let shape = store.value(b).unwrap().shape();
                *store.value_mut(b).unwrap() = random_matrix(shape.0, shape.1, &mut rng);
            }
            let eval = |p: &ParamStore| -> Result<(Tape, Var, f64, Matrix)> {
                let mut tape = Tape::new();
                let xv = tape.input(x.clone());
                let (logits, _) = gnn_logits(&mut tape, p, &cfg, "gnn", xv, &s)?;
                let (l, g) = softmax_cross_entropy(tape.value(logits), &labels, &[2.0, 1.0])?;
                Ok((tape, logits, l, g))
            };
            let (tape, logits, _, g) = eval(&store).unwrap();
            tape.backward(logits, g).unwrap().accumulate_into(&tape, &mut store).unwrap();
            let report = finite_difference_check(&mut store, |p| Ok(eval(p)?.2), 1e-5, None, &mut rng).unwrap();
            assert!(report.max_rel_error < 1e-4, "{kind:?}/{pooling:?}: {}", report.max_rel_error);
        }
    }
}

#[test]
fn prediction_invariant_under_relabeling() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for kind in [LayerKind::Gcn, LayerKind::GraphConv, LayerKind::Gat] {
        let cfg = GnnConfig {
            layer_kind: kind,
            ..GnnConfig::default()
        };
        let model = GnnModel::new(cfg, 12).unwrap();
        let g = random_graph_input(15, 12, &mut rng);
        let (base, _) = model.forward(&[&g]).unwrap();
        let mut perm: Vec<usize> = (0..15).collect();
        for _ in 0..10 {
            perm.shuffle(&mut rng);
            let (p, _) = model.forward(&[&permute_graph(&g, &perm)]).unwrap();
            assert!(p.max_abs_diff(&base) < 1e-9);
        }
    }
}

#[test]
fn message_passing_is_k_hop_local() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // Path 0 - 1 - ... - 9.
    let pairs: Vec<_> = (0..9).map(|i| (i, i + 1)).collect();
    let adj = AdjacencyStructure::undirected(10, &pairs).unwrap();
    let s = BatchStructure::new(&[&adj]).unwrap();
    for kind in [LayerKind::Gcn, LayerKind::GraphConv, LayerKind::Gat] {
        let mut store = ParamStore::new();
        for k in 0..3 {
            init_layer(&mut store, kind, &format!("c{k}"), 4, 4, &mut rng);
        }
        let embed = |x: &Matrix| {
            let mut tape = Tape::new();
            let mut h = tape.input(x.clone());
            for k in 0..3 {
                let c = conv_layer(&mut tape, &store, kind, &format!("c{k}"), h, &s, 0.2).unwrap();
                h = tape.relu(c);
            }
            tape.value(h).clone()
        };
        let x = random_matrix(10, 4, &mut rng);
        let mut far = x.clone();
        far.row_mut(4).copy_from_slice(&[5.0, -5.0, 5.0, -5.0]);
        let (a, b) = (embed(&x), embed(&far));
        assert_eq!(a.row(0), b.row(0), "{kind:?}");
        assert_ne!(a.row(1), b.row(1), "{kind:?}");
    }
}

#[test]
fn probabilities_and_zero_head() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut model = GnnModel::new(GnnConfig::default(), 6).unwrap();
    let graphs: Vec<GraphInput> = (0..70).map(|_| random_graph_input(rng.random_range(1..9), 6, &mut rng)).collect();
    for p in model.predict(&graphs).unwrap() {
        assert!(p.probs.iter().all(|&q| q >= 0.0));
        assert!((p.probs[0] + p.probs[1] - 1.0).abs() < 1e-12);
        assert_eq!(p.representation.len(), 32);
    }
    model.zero_head().unwrap();
    assert_eq!(predict_gnn(&model, &graphs[0]).unwrap().probs, [0.5, 0.5]);
    let wrong = random_graph_input(3, 5, &mut rng);
    assert!(predict_gnn(&model, &wrong).is_err());
}

fn toy_dataset(rng: &mut ChaCha8Rng) -> (Vec<GraphInput>, Vec<usize>) {
    let mut graphs = Vec::new();
    let mut labels = Vec::new();
    for i in 0..80 {
        let y = i % 2;
        let mut g = random_graph_input(rng.random_range(2..8), 3, rng);
        for r in 0..g.features.rows() {
            g.features.row_mut(r)[0] += if y == 0 { 1.0 } else { -1.0 };
        }
        graphs.push(g);
        labels.push(y);
    }
    (graphs, labels)
}

#[test]
fn training_is_deterministic_and_selects_best_epoch() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (graphs, labels) = toy_dataset(&mut rng);
    let train: Vec<usize> = (0..80).collect();
    let cfg = GnnConfig {
        train: TrainConfig {
            epochs: 8,
            seed: 9,
            ..TrainConfig::default()
        },
        ..small_config(LayerKind::GraphConv, Pooling::Mean)
    };
    let (m1, o1) = train_gnn(&graphs, &labels, &train, &train, &cfg, [1.0, 1.0]).unwrap();
    let (m2, o2) = train_gnn(&graphs, &labels, &train, &train, &cfg, [1.0, 1.0]).unwrap();
    assert_eq!(o1, o2);
    assert_eq!(m1.params.to_checkpoint(), m2.params.to_checkpoint());
    assert!(o1.best_val_loss <= o1.history[0].val_loss);
    assert_eq!(o1.history.len(), 8);
    assert!(train_gnn(&graphs, &labels, &[], &train, &cfg, [1.0, 1.0]).is_err());
}

#[test]
fn checkpoint_and_manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let model = GnnModel::new(small_config(LayerKind::Gat, Pooling::Max), 4).unwrap();
    let (c, m) = (dir.path().join("gnn.ckpt"), dir.path().join("gnn.json"));
    model.save(&c, &m).unwrap();
    assert_eq!(GnnModel::load(&c, &m).unwrap(), model);
}
