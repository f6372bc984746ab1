//! Distributed bag-of-words paragraph vectors trained with negative sampling.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::EmbeddingTable;
use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PvDbowConfig {
    pub dim: usize,
    pub negative: usize,
    pub epochs: usize,
    pub lr: f64,
    pub min_lr: f64,
    /// Gradient passes used to infer an unseen document.
    pub infer_epochs: usize,
    pub seed: u64,
}

impl Default for PvDbowConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            negative: 5,
            epochs: 20,
            lr: 0.025,
            min_lr: 1e-4,
            infer_epochs: 50,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PvDbowModel {
    pub config: PvDbowConfig,
    pub vocab: Vec<String>,
    index: HashMap<String, usize>,
    /// Cumulative noise distribution over the vocabulary.
    noise_cdf: Vec<f64>,
    pub doc_vectors: Matrix,
    pub word_vectors: Matrix,
    /// Mean negative-sampling loss per training epoch.
    pub loss_trace: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// FNV-1a over the tokens, used to derive per-document inference seeds.
fn token_hash(tokens: &[String]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for t in tokens {
        for b in t.bytes().chain(std::iter::once(0xff)) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

struct Sampler<'a> {
    cdf: &'a [f64],
}

impl Sampler<'_> {
    fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        let u = rng.random::<f64>() * self.cdf[self.cdf.len() - 1];
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }
}

/// One negative-sampling update of `doc` against `target`; returns the loss.
/// Word vectors are updated unless `frozen`.
#[allow(clippy::too_many_arguments)]
fn sgns_step<R: Rng>(
    doc: &mut [f64],
    words: &mut Matrix,
    target: usize,
    negative: usize,
    sampler: &Sampler<'_>,
    lr: f64,
    frozen: bool,
    rng: &mut R,
    grad: &mut [f64],
) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    for k in 0..=negative {
        let (w, label) = if k == 0 {
            (target, 1.0)
        } else {
            let w = sampler.draw(rng);
            if w == target {
                continue;
            }
            (w, 0.0)
        };
        let u = words.row_mut(w);
        let z = dot(doc, u);
        loss -= if label == 1.0 { log_sigmoid(z) } else { log_sigmoid(-z) };
        let g = (label - sigmoid(z)) * lr;
        for (acc, uv) in grad.iter_mut().zip(u.iter()) {
            *acc += g * uv;
        }
        if !frozen {
            for (uv, dv) in u.iter_mut().zip(doc.iter()) {
                *uv += g * dv;
            }
        }
    }
    for (d, g) in doc.iter_mut().zip(grad.iter()) {
        *d += g;
    }
    loss
}

fn init_vector<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| (rng.random::<f64>() - 0.5) / dim as f64).collect()
}

impl PvDbowModel {
    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn word_index(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().filter_map(|t| self.word_index(t)).collect()
    }

    /// Infers a vector for `tokens` with word vectors held fixed. Unknown
    /// tokens are skipped; a document with no known tokens maps to zeros.
    pub fn embed_document(&self, tokens: &[String]) -> Vec<f64> {
        let ids = self.encode(tokens);
        let d = self.config.dim;
        if ids.is_empty() {
            return vec![0.0; d];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ token_hash(tokens));
        let mut doc = init_vector(d, &mut rng);
        let mut words = self.word_vectors.clone();
        let sampler = Sampler { cdf: &self.noise_cdf };
        let mut grad = vec![0.0; d];
        let total = (self.config.infer_epochs * ids.len()).max(1) as f64;
        let mut step = 0usize;
        for _ in 0..self.config.infer_epochs {
            for &w in &ids {
                let lr = lr_at(&self.config, step as f64 / total);
                sgns_step(&mut doc, &mut words, w, self.config.negative, &sampler, lr, true, &mut rng, &mut grad);
                step += 1;
            }
        }
        doc
    }

    /// Trained vectors for the training documents under their ids.
    pub fn training_table(&self, ids: &[&str]) -> Result<EmbeddingTable> {
        if ids.len() != self.doc_vectors.rows() {
            return Err(Error::dim("document ids", self.doc_vectors.rows(), ids.len()));
        }
        let mut t = EmbeddingTable::new(self.config.dim)?;
        for (i, id) in ids.iter().enumerate() {
            t.insert(*id, self.doc_vectors.row(i).to_vec())?;
        }
        Ok(t)
    }
}

fn lr_at(cfg: &PvDbowConfig, progress: f64) -> f64 {
    (cfg.lr - (cfg.lr - cfg.min_lr) * progress).max(cfg.min_lr)
}

pub fn train_pvdbow(corpus: &[Vec<String>], config: &PvDbowConfig) -> Result<PvDbowModel> {
    if corpus.is_empty() {
        return Err(Error::Empty("pv-dbow corpus".into()));
    }
    if config.dim == 0 || config.epochs == 0 {
        return Err(Error::Config("pv-dbow dim and epochs must be positive".into()));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for doc in corpus {
        for t in doc {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::Empty("pv-dbow corpus has no tokens".into()));
    }
    let mut vocab: Vec<(&str, u64)> = counts.into_iter().collect();
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut acc = 0.0;
    let noise_cdf: Vec<f64> = vocab
        .iter()
        .map(|(_, c)| {
            acc += (*c as f64).powf(0.75);
            acc
        })
        .collect();
    let index: HashMap<String, usize> = vocab.iter().enumerate().map(|(i, (w, _))| (w.to_string(), i)).collect();
    let vocab: Vec<String> = vocab.into_iter().map(|(w, _)| w.to_string()).collect();

    let d = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut doc_vectors = Matrix::zeros(corpus.len(), d);
    for r in 0..corpus.len() {
        doc_vectors.row_mut(r).copy_from_slice(&init_vector(d, &mut rng));
    }
    let mut model = PvDbowModel {
        config: config.clone(),
        vocab,
        index,
        noise_cdf,
        doc_vectors,
        word_vectors: Matrix::zeros(0, 0),
        loss_trace: Vec::with_capacity(config.epochs),
    };
    let encoded: Vec<Vec<usize>> = corpus.iter().map(|doc| model.encode(doc)).collect();
    let mut words = Matrix::zeros(model.vocab.len(), d);
    let sampler = Sampler { cdf: &model.noise_cdf };
    let total_tokens: usize = encoded.iter().map(Vec::len).sum();
    let total = (config.epochs * total_tokens).max(1) as f64;
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut grad = vec![0.0; d];
    let mut step = 0usize;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss = 0.0;
        for &i in &order {
            let doc = model.doc_vectors.row_mut(i);
            for &w in &encoded[i] {
                let lr = lr_at(config, step as f64 / total);
                loss += sgns_step(doc, &mut words, w, config.negative, &sampler, lr, false, &mut rng, &mut grad);
                step += 1;
            }
        }
        let mean = loss / total_tokens.max(1) as f64;
        log::debug!("pv-dbow epoch {}: loss {mean:.6}", epoch + 1);
        model.loss_trace.push(mean);
    }
    model.word_vectors = words;
    Ok(model)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textenc::tokenize;

    fn corpus(seed: u64) -> Vec<Vec<String>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topics: Vec<Vec<String>> = (0..6)
            .map(|t| (0..15).map(|w| format!("t{t}w{w}")).collect())
            .collect();
        let mut docs: Vec<Vec<String>> = (0..40)
            .map(|i| {
                let topic = &topics[i % 6];
                (0..40).map(|_| topic[rng.random_range(0..topic.len())].clone()).collect()
            })
            .collect();
        docs.push(docs[0].clone());
        docs
    }

    fn median(mut v: Vec<f64>) -> f64 {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    }

    fn cfg() -> PvDbowConfig {
        PvDbowConfig {
            dim: 16,
            epochs: 100,
            infer_epochs: 100,
            seed: 1,
            ..PvDbowConfig::default()
        }
    }

    #[test]
    fn identical_documents_are_close() {
        let docs = corpus(1);
        let m = train_pvdbow(&docs, &cfg()).unwrap();
        let n = docs.len();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let random: Vec<f64> = (0..200)
            .map(|_| {
                let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
                cosine(m.doc_vectors.row(i), m.doc_vectors.row(j))
            })
            .collect();
        let twin = cosine(m.doc_vectors.row(0), m.doc_vectors.row(n - 1));
        assert!(twin > median(random.clone()), "{twin}");

        let re = m.embed_document(&docs[3]);
        assert_eq!(re.len(), 16);
        assert!(cosine(&re, m.doc_vectors.row(3)) > median(random));
    }

    #[test]
    fn loss_decreases_and_is_reproducible() {
        let docs = corpus(2);
        let a = train_pvdbow(&docs, &cfg()).unwrap();
        let b = train_pvdbow(&docs, &cfg()).unwrap();
        assert_eq!(a.loss_trace.len(), cfg().epochs);
        assert!(a.loss_trace.last().unwrap() < &a.loss_trace[0]);
        let bits = |m: &PvDbowModel| m.loss_trace.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.doc_vectors, b.doc_vectors);
    }

    #[test]
    fn inference_edge_cases() {
        let m = train_pvdbow(&corpus(3), &cfg()).unwrap();
        assert_eq!(m.embed_document(&[]), vec![0.0; 16]);
        assert_eq!(m.embed_document(&tokenize("unseen words only")), vec![0.0; 16]);
        let known = tokenize("t0w1 t0w2 t0w3");
        let mixed = tokenize("t0w1 zzz t0w2 t0w3");
        assert_eq!(m.encode(&known), m.encode(&mixed));
        assert_eq!(m.embed_document(&known), m.embed_document(&known));
        assert!(train_pvdbow(&[], &cfg()).is_err());
    }
}
