//! Two-layer perceptron over document embeddings.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    fit, glorot_uniform, softmax_cross_entropy, softmax_rows, Matrix, Objective, ParamStore, Prediction, Tape,
    TrainConfig, TrainOutcome, Var,
};

const INIT_STREAM: u64 = 0x2545_f491_4f6c_dd1d;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextConfig {
    pub head_dim: usize,
    pub train: TrainConfig,
}

impl Default for TextConfig {
    fn default() -> Self {
        Self {
            head_dim: 32,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TextModel {
    pub config: TextConfig,
    pub in_dim: usize,
    pub params: ParamStore,
}

/// `relu(x W1 + b1)` on the tape.
pub fn text_representation(tape: &mut Tape, store: &ParamStore, prefix: &str, x: Var) -> Result<Var> {
    let w = tape.param(store, &format!("{prefix}.w1"))?;
    let b = tape.param(store, &format!("{prefix}.b1"))?;
    let z = tape.affine(x, w, b)?;
    Ok(tape.relu(z))
}

impl TextModel {
    pub fn new(config: TextConfig, in_dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.train.seed ^ INIT_STREAM);
        let mut params = ParamStore::new();
        params.insert("text.w1", glorot_uniform(in_dim, config.head_dim, &mut rng));
        params.insert("text.b1", Matrix::zeros(1, config.head_dim));
        params.insert("text.w2", glorot_uniform(config.head_dim, 2, &mut rng));
        params.insert("text.b2", Matrix::zeros(1, 2));
        Self {
            config,
            in_dim,
            params,
        }
    }

    fn logits(&self, params: &ParamStore, tape: &mut Tape, x: Matrix) -> Result<(Var, Var)> {
        if x.cols() != self.in_dim {
            return Err(Error::dim("text embedding width", self.in_dim, x.cols()));
        }
        let xv = tape.input(x);
        let rep = text_representation(tape, params, "text", xv)?;
        let w = tape.param(params, "text.w2")?;
        let b = tape.param(params, "text.b2")?;
        Ok((tape.affine(rep, w, b)?, rep))
    }

    pub fn predict(&self, embeddings: &Matrix) -> Result<Vec<Prediction>> {
        let mut tape = Tape::new();
        let (logits, rep) = self.logits(&self.params, &mut tape, embeddings.clone())?;
        let p = softmax_rows(tape.value(logits));
        let rep = tape.value(rep);
        Ok((0..p.rows())
            .map(|r| Prediction {
                probs: [p.get(r, 0), p.get(r, 1)],
                representation: rep.row(r).to_vec(),
            })
            .collect())
    }
}

pub fn predict_text(model: &TextModel, embedding: &[f64]) -> Result<Prediction> {
    Ok(model.predict(&Matrix::row_vector(embedding.to_vec()))?.remove(0))
}

fn gather(x: &Matrix, items: &[usize]) -> Matrix {
    let mut data = Vec::with_capacity(items.len() * x.cols());
    for &i in items {
        data.extend_from_slice(x.row(i));
    }
    Matrix::from_vec(items.len(), x.cols(), data).expect("sized by construction")
}

struct TextObjective<'a> {
    model: &'a TextModel,
    x: &'a Matrix,
    labels: &'a [usize],
    class_weights: [f64; 2],
}

impl TextObjective<'_> {
    fn run(&self, params: &ParamStore, items: &[usize]) -> Result<(Tape, Var, f64, Matrix)> {
        let mut tape = Tape::new();
        let (logits, _) = self.model.logits(params, &mut tape, gather(self.x, items))?;
        let y: Vec<usize> = items.iter().map(|&i| self.labels[i]).collect();
        let (l, g) = softmax_cross_entropy(tape.value(logits), &y, &self.class_weights)?;
        Ok((tape, logits, l, g))
    }
}

impl Objective for TextObjective<'_> {
    fn batch_loss_grad(&self, params: &mut ParamStore, batch: &[usize]) -> Result<f64> {
        let (tape, out, l, g) = self.run(params, batch)?;
        tape.backward(out, g)?.accumulate_into(&tape, params)?;
        Ok(l)
    }

    fn loss(&self, params: &ParamStore, items: &[usize]) -> Result<f64> {
        Ok(self.run(params, items)?.2)
    }
}

pub fn train_text_classifier(
    embeddings: &Matrix,
    labels: &[usize],
    train: &[usize],
    val: &[usize],
    config: &TextConfig,
    class_weights: [f64; 2],
) -> Result<(TextModel, TrainOutcome)> {
    if embeddings.rows() != labels.len() {
        return Err(Error::dim("text labels", embeddings.rows(), labels.len()));
    }
    let template = TextModel::new(config.clone(), embeddings.cols());
    let mut params = template.params.clone();
    let objective = TextObjective {
        model: &template,
        x: embeddings,
        labels,
        class_weights,
    };
    let outcome = fit(&objective, &mut params, train, val, &config.train)?;
    Ok((TextModel { params, ..template }, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn separable(n: usize, seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let sign = if c == 0 { 1.0 } else { -1.0 };
            rows.push(vec![sign * rng.random_range(0.5..2.0), rng.random_range(-1.0..1.0)]);
            y.push(c);
        }
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn fits_separable_embeddings() {
        let (x, y) = separable(100, 3);
        let idx: Vec<usize> = (0..100).collect();
        let cfg = TextConfig {
            train: TrainConfig {
                epochs: 100,
                lr: 0.01,
                batch_size: 16,
                seed: 4,
            },
            ..TextConfig::default()
        };
        let (m, _) = train_text_classifier(&x, &y, &idx, &idx, &cfg, [1.0, 1.0]).unwrap();
        let preds = m.predict(&x).unwrap();
        let correct = preds
            .iter()
            .zip(&y)
            .filter(|(p, &c)| usize::from(p.probs[1] > p.probs[0]) == c)
            .count();
        assert_eq!(correct, 100);
        for p in &preds {
            assert!((p.probs[0] + p.probs[1] - 1.0).abs() < 1e-12);
            assert_eq!(p.representation.len(), 32);
        }
        let (m2, _) = train_text_classifier(&x, &y, &idx, &idx, &cfg, [1.0, 1.0]).unwrap();
        assert_eq!(m.params, m2.params);
        assert!(predict_text(&m, &[1.0, 2.0, 3.0]).is_err());
    }
}
