use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::textenc::tokenize;

const DEFAULT_LEXICON: &str = include_str!("../../data/lexicon.tsv");

/// Compound normalization constant.
const ALPHA: f64 = 15.0;

/// Token valences in `[-4, 4]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SentimentLexicon {
    entries: BTreeMap<String, f64>,
}

impl SentimentLexicon {
    pub fn from_entries<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut out = Self::default();
        for (tok, val) in entries {
            out.insert(tok.into(), val)?;
        }
        Ok(out)
    }

    fn insert(&mut self, token: String, valence: f64) -> Result<()> {
        if !valence.is_finite() || !(-4.0..=4.0).contains(&valence) {
            return Err(Error::Invalid(format!("valence {valence} for {token:?} outside [-4, 4]")));
        }
        let token = token.to_lowercase();
        if self.entries.insert(token.clone(), valence).is_some() {
            return Err(Error::DuplicateKey(token));
        }
        Ok(())
    }

    /// Parses `token<TAB>valence` lines; `#` starts a comment line.
    pub fn parse(content: &str) -> Result<Self> {
        let mut out = Self::default();
        for (i, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                context: "lexicon".into(),
                line: i + 1,
                message,
            };
            let (tok, val) = line
                .split_once('\t')
                .ok_or_else(|| err("expected token<TAB>valence".into()))?;
            let val: f64 = val.trim().parse().map_err(|e| err(format!("{e}")))?;
            out.insert(tok.trim().to_string(), val)?;
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// The bundled 40-word lexicon.
    pub fn default_lexicon() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }

    pub fn get(&self, token: &str) -> Option<f64> {
        self.entries.get(token).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn negated(&self) -> Self {
        Self {
            entries: self.entries.iter().map(|(k, v)| (k.clone(), -v)).collect(),
        }
    }
}

/// Lexicon statistics of one text.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TextSentiment {
    pub compound: f64,
    pub pos_freq: f64,
    pub neg_freq: f64,
}

pub fn normalize_compound(s: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else {
        s / (s * s + ALPHA).sqrt()
    }
}

pub fn analyze_text(text: &str, lexicon: &SentimentLexicon) -> TextSentiment {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return TextSentiment::default();
    }
    let (mut sum, mut pos, mut neg) = (0.0, 0usize, 0usize);
    for t in &tokens {
        if let Some(v) = lexicon.get(t) {
            sum += v;
            if v > 0.0 {
                pos += 1;
            } else if v < 0.0 {
                neg += 1;
            }
        }
    }
    let n = tokens.len() as f64;
    TextSentiment {
        compound: normalize_compound(sum),
        pos_freq: pos as f64 / n,
        neg_freq: neg as f64 / n,
    }
}

pub fn sentiment_score(text: &str, lexicon: &SentimentLexicon) -> f64 {
    analyze_text(text, lexicon).compound
}
