mod common;

use common::random_matrix;
use propnews::nn::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mlp_loss(p: &ParamStore, x: &Matrix, y: &[usize]) -> propnews::Result<(Tape, Var, f64, Matrix)> {
    let mut t = Tape::new();
    let xv = t.input(x.clone());
    let (w1, b1) = (t.param(p, "w1")?, t.param(p, "b1")?);
    let (w2, b2) = (t.param(p, "w2")?, t.param(p, "b2")?);
    let h = t.affine(xv, w1, b1)?;
    let h = t.relu(h);
    let logits = t.affine(h, w2, b2)?;
    let (l, g) = softmax_cross_entropy(t.value(logits), y, &[1.0, 1.5])?;
    Ok((t, logits, l, g))
}

#[test]
fn two_layer_mlp_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let (n, d, h) = (rng.random_range(2..20), rng.random_range(1..6), rng.random_range(2..9));
        let x = random_matrix(n, d, &mut rng);
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let mut p = ParamStore::new();
        p.insert("w1", glorot_uniform(d, h, &mut rng));
        p.insert("b1", random_matrix(1, h, &mut rng));
        p.insert("w2", glorot_uniform(h, 2, &mut rng));
        p.insert("b2", random_matrix(1, 2, &mut rng));
        let (t, out, _, g) = mlp_loss(&p, &x, &y).unwrap();
        t.backward(out, g).unwrap().accumulate_into(&t, &mut p).unwrap();
        let r = finite_difference_check(&mut p, |q| Ok(mlp_loss(q, &x, &y)?.2), 1e-5, None, &mut rng).unwrap();
        assert!(r.max_rel_error < 1e-4, "{}", r.max_rel_error);
        assert_eq!(r.checked, p.num_scalars());
    }
}

#[test]
fn leaky_relu_concat_and_sum_pool_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut p = ParamStore::new();
    p.insert("a", random_matrix(5, 3, &mut rng));
    p.insert("b", random_matrix(5, 2, &mut rng));
    let seg = std::sync::Arc::new(vec![0..2, 2..5]);
    let r = random_matrix(2, 5, &mut rng);
    let f = |q: &ParamStore| -> propnews::Result<(Tape, Var, f64)> {
        let mut t = Tape::new();
        let (a, b) = (t.param(q, "a")?, t.param(q, "b")?);
        let c = t.concat(a, b)?;
        let l = t.leaky_relu(c, 0.2);
        let pooled = t.pool(l, seg.clone(), Pooling::Sum)?;
        let v = t.value(pooled).data().iter().zip(r.data()).map(|(x, y)| x * y).sum();
        Ok((t, pooled, v))
    };
    let (t, out, _) = f(&p).unwrap();
    t.backward(out, r.clone()).unwrap().accumulate_into(&t, &mut p).unwrap();
    let rep = finite_difference_check(&mut p, |q| Ok(f(q)?.2), 1e-5, None, &mut rng).unwrap();
    assert!(rep.max_rel_error < 1e-4);
}

#[test]
fn identical_training_runs_are_bit_identical() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = ParamStore::new();
        p.insert("w", glorot_uniform(3, 2, &mut rng));
        let mut adam = AdamState::new(0.001);
        for _ in 0..10 {
            p.accumulate_grad("w", &random_matrix(3, 2, &mut rng)).unwrap();
            adam.step(&mut p).unwrap();
        }
        p.to_checkpoint()
    };
    assert_eq!(run(), run());
}
