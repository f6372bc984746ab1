use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::fmt_f64;
use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearKind {
    Ridge,
    Logistic,
    PassiveAggressive,
    SgdHinge,
}

impl LinearKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LinearKind::Ridge => "ridge",
            LinearKind::Logistic => "logistic",
            LinearKind::PassiveAggressive => "passive_aggressive",
            LinearKind::SgdHinge => "sgd_hinge",
        }
    }
}

/// `sign(w . x + b)` classifier over targets in `{-1, +1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub kind: LinearKind,
    pub weights: Vec<f64>,
    pub bias: f64,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LinearModel {
    pub fn zeros(kind: LinearKind, dim: usize) -> Self {
        Self {
            kind,
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    /// Predicted target in `{-1, +1}` and the logistic link of the score.
    pub fn predict(&self, x: &[f64]) -> (i8, f64) {
        let s = self.score(x);
        (if s > 0.0 { 1 } else { -1 }, sigmoid(s))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("linear {}\nbias {}\n", self.kind.as_str(), fmt_f64(self.bias));
        for (i, w) in self.weights.iter().enumerate() {
            let _ = writeln!(out, "w{i} {}", fmt_f64(*w));
        }
        out
    }
}

fn check_xy(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows() == 0 {
        return Err(Error::Empty("training rows".into()));
    }
    if x.rows() != y.len() {
        return Err(Error::dim("targets", x.rows(), y.len()));
    }
    if let Some(v) = y.iter().find(|v| **v != 1.0 && **v != -1.0) {
        return Err(Error::Invalid(format!("target {v} not in {{-1, +1}}")));
    }
    Ok(())
}

/// Solves `(XᵀX + λI) w = Xᵀy` with an unregularized intercept column.
pub fn train_ridge(x: &Matrix, y: &[f64], lambda: f64) -> Result<LinearModel> {
    check_xy(x, y)?;
    let (n, d) = x.shape();
    let mut a = DMatrix::<f64>::zeros(n, d + 1);
    for r in 0..n {
        for c in 0..d {
            a[(r, c)] = x.get(r, c);
        }
        a[(r, d)] = 1.0;
    }
    let mut gram = a.transpose() * &a;
    for i in 0..d {
        gram[(i, i)] += lambda;
    }
    let rhs = a.transpose() * DVector::from_column_slice(y);
    let lu = gram.clone().lu();
    let diag = lu.u().diagonal();
    let scale = diag.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    if diag.iter().any(|v| v.abs() <= 1e-12 * scale) {
        return Err(Error::Singular("ridge normal equations".into()));
    }
    let sol = lu
        .solve(&rhs)
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singular("ridge normal equations".into()))?;
    Ok(LinearModel {
        kind: LinearKind::Ridge,
        weights: sol.iter().take(d).copied().collect(),
        bias: sol[d],
    })
}

/// Mean log-loss plus `l2/2 ||w||²`, with gradients `(loss, dw, db)`.
pub fn logistic_objective(model: &LinearModel, x: &Matrix, y: &[f64], l2: f64) -> (f64, Vec<f64>, f64) {
    let n = x.rows() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; model.weights.len()];
    let mut gb = 0.0;
    for r in 0..x.rows() {
        let row = x.row(r);
        let m = y[r] * model.score(row);
        // log(1 + exp(-m)), stable
        loss += if m > 0.0 { (-m).exp().ln_1p() } else { -m + m.exp().ln_1p() };
        let g = -y[r] * sigmoid(-m);
        for (a, v) in gw.iter_mut().zip(row) {
            *a += g * v;
        }
        gb += g;
    }
    loss /= n;
    gb /= n;
    for (a, w) in gw.iter_mut().zip(&model.weights) {
        *a = *a / n + l2 * w;
    }
    loss += 0.5 * l2 * dot(&model.weights, &model.weights);
    (loss, gw, gb)
}

/// Full-batch gradient descent on the regularized log-loss.
pub fn train_logistic(x: &Matrix, y: &[f64], l2: f64, epochs: usize, lr: f64) -> Result<LinearModel> {
    check_xy(x, y)?;
    let mut m = LinearModel::zeros(LinearKind::Logistic, x.cols());
    for _ in 0..epochs {
        let (_, gw, gb) = logistic_objective(&m, x, y, l2);
        for (w, g) in m.weights.iter_mut().zip(&gw) {
            *w -= lr * g;
        }
        m.bias -= lr * gb;
    }
    if !m.weights.iter().all(|w| w.is_finite()) || !m.bias.is_finite() {
        return Err(Error::NonFinite("logistic weights".into()));
    }
    Ok(m)
}

/// One PA-I step. Returns whether the model changed. The intercept moves
/// with the weights but does not enter the step-size norm.
pub fn passive_aggressive_update(model: &mut LinearModel, x: &[f64], y: f64, c: f64) -> bool {
    let loss = (1.0 - y * model.score(x)).max(0.0);
    if loss == 0.0 {
        return false;
    }
    let sq = dot(x, x);
    if sq == 0.0 {
        return false;
    }
    let tau = c.min(loss / sq);
    for (w, v) in model.weights.iter_mut().zip(x) {
        *w += tau * y * v;
    }
    model.bias += tau * y;
    true
}

pub fn train_passive_aggressive(x: &Matrix, y: &[f64], c: f64, epochs: usize, seed: u64) -> Result<LinearModel> {
    check_xy(x, y)?;
    let mut m = LinearModel::zeros(LinearKind::PassiveAggressive, x.cols());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..x.rows()).collect();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            passive_aggressive_update(&mut m, x.row(i), y[i], c);
        }
    }
    Ok(m)
}

/// Plain SGD on hinge loss plus `l2/2 ||w||²`.
pub fn train_sgd_hinge(x: &Matrix, y: &[f64], l2: f64, epochs: usize, lr: f64, seed: u64) -> Result<LinearModel> {
    check_xy(x, y)?;
    let mut m = LinearModel::zeros(LinearKind::SgdHinge, x.cols());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..x.rows()).collect();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let row = x.row(i);
            let violated = y[i] * m.score(row) < 1.0;
            for (w, v) in m.weights.iter_mut().zip(row) {
                let g = l2 * *w - if violated { y[i] * v } else { 0.0 };
                *w -= lr * g;
            }
            if violated {
                m.bias += lr * y[i];
            }
        }
    }
    Ok(m)
}
