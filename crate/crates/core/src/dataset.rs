//! On-disk dataset schema: line-delimited article and tweet records,
//! precomputed document embeddings, and feature tables.
//!
//! Formats:
//!
//! ```text
//! news.jsonl      {"article_id","label","text","publish_time"?}
//! tweets.jsonl    {"tweet_id","article_id","author_id","timestamp","text","is_retweet",
//!                  "declared_source_id"?,"verified","followers","friends","mentions":[..],
//!                  "hashtag_count","account_created"}
//! embeddings.tsv  dim=<d>
//!                 <article_id>\t<f1>\t...\t<fd>
//! features.csv    article_id,label,<feature names...>
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground-truth class of an article. Fake is the positive class throughout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Fake,
    Real,
}

impl Label {
    /// Index into two-class probability vectors: `[p_fake, p_real]`.
    pub fn class_index(self) -> usize {
        match self {
            Label::Fake => 0,
            Label::Real => 1,
        }
    }

    pub fn from_class_index(idx: usize) -> Label {
        if idx == 0 {
            Label::Fake
        } else {
            Label::Real
        }
    }

    pub fn is_fake(self) -> bool {
        self == Label::Fake
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Fake => "fake",
            Label::Real => "real",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fake" => Ok(Label::Fake),
            "real" => Ok(Label::Real),
            other => Err(Error::Invalid(format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewsArticle {
    pub article_id: String,
    pub label: Label,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub publish_time: Option<i64>,
}

/// One tweet or retweet. `declared_source_id` is the platform-reported root
/// tweet of a retweet, not its immediate parent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TweetRecord {
    pub tweet_id: String,
    pub article_id: String,
    pub author_id: String,
    pub timestamp: i64,
    pub text: String,
    pub is_retweet: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_source_id: Option<String>,
    pub verified: bool,
    pub followers: u64,
    pub friends: u64,
    pub mentions: Vec<String>,
    pub hashtag_count: u32,
    pub account_created: i64,
}

impl TweetRecord {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.timestamp < 0 {
            return Err(format!("tweet {}: negative timestamp", self.tweet_id));
        }
        if self.is_retweet
            && self
                .declared_source_id
                .as_deref()
                .is_none_or(|s| s.is_empty())
        {
            return Err(format!(
                "retweet {} has no declared_source_id",
                self.tweet_id
            ));
        }
        let mut seen = HashSet::new();
        for m in &self.mentions {
            if !seen.insert(m.as_str()) {
                return Err(format!(
                    "tweet {}: duplicate mention {m:?}",
                    self.tweet_id
                ));
            }
        }
        Ok(())
    }
}

/// An article together with all tweets referencing it.
#[derive(Clone, Debug, PartialEq)]
pub struct ArticleEntry {
    pub article: NewsArticle,
    pub tweets: Vec<TweetRecord>,
}

impl ArticleEntry {
    /// Articles without body text are kept but flagged.
    pub fn has_empty_text(&self) -> bool {
        self.article.text.trim().is_empty()
    }
}

/// Articles in news-file order, each with its tweets in tweets-file order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledDataset {
    pub entries: Vec<ArticleEntry>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_tweets(&self) -> usize {
        self.entries.iter().map(|e| e.tweets.len()).sum()
    }

    pub fn empty_text_ids(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.has_empty_text())
            .map(|e| e.article.article_id.as_str())
            .collect()
    }

    pub fn without_empty_text(mut self) -> Self {
        self.entries.retain(|e| !e.has_empty_text());
        self
    }

    pub fn labels(&self) -> Vec<Label> {
        self.entries.iter().map(|e| e.article.label).collect()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries
            .iter()
            .map(|e| e.article.article_id.as_str())
            .collect()
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    let mut s = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|e| Error::io(path, e))?;
    Ok(s)
}

fn parse_lines<T: serde::de::DeserializeOwned>(content: &str, context: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line).map_err(|e| Error::Parse {
            context: context.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Parses news and tweet records from in-memory line-delimited text.
pub fn parse_dataset(news: &str, tweets: &str) -> Result<LabeledDataset> {
    let articles: Vec<NewsArticle> = parse_lines(news, "news")?;
    let records: Vec<TweetRecord> = parse_lines(tweets, "tweets")?;

    let mut index = HashMap::with_capacity(articles.len());
    for (i, a) in articles.iter().enumerate() {
        if index.insert(a.article_id.clone(), i).is_some() {
            return Err(Error::DuplicateKey(a.article_id.clone()));
        }
    }

    let mut entries: Vec<ArticleEntry> = articles
        .into_iter()
        .map(|article| ArticleEntry {
            article,
            tweets: Vec::new(),
        })
        .collect();
    let mut orphans = BTreeSet::new();
    let mut line = 0usize;
    for rec in records {
        line += 1;
        rec.validate().map_err(|message| Error::Parse {
            context: "tweets".into(),
            line,
            message,
        })?;
        match index.get(&rec.article_id) {
            Some(&i) => entries[i].tweets.push(rec),
            None => {
                orphans.insert(rec.article_id.clone());
            }
        }
    }
    if !orphans.is_empty() {
        return Err(Error::OrphanTweets(orphans.into_iter().collect()));
    }
    Ok(LabeledDataset { entries })
}

pub fn load_dataset(news_path: &Path, tweets_path: &Path) -> Result<LabeledDataset> {
    let news = read_to_string(news_path)?;
    let tweets = read_to_string(tweets_path)?;
    parse_dataset(&news, &tweets)
}

/// Serializes records as one JSON object per line.
pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serialization"));
        out.push('\n');
    }
    out
}

/// Formats a float with 17 significant digits; parsing it back is bit-exact.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str, context: &str, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Parse {
        context: context.to_string(),
        line,
        message: format!("{s:?}: {e}"),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub entries: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("embedding dim must be positive".into()));
        }
        Ok(Self {
            dim,
            entries: BTreeMap::new(),
        })
    }

    pub fn insert(&mut self, id: impl Into<String>, v: Vec<f64>) -> Result<()> {
        let id = id.into();
        if v.len() != self.dim {
            return Err(Error::dim(format!("embedding row {id:?}"), self.dim, v.len()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("embedding row {id:?}")));
        }
        if self.entries.contains_key(&id) {
            return Err(Error::DuplicateKey(id));
        }
        self.entries.insert(id, v);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.entries.get(id).map(Vec::as_slice)
    }

    pub fn parse(content: &str) -> Result<Self> {
        let ctx = "embeddings";
        let mut lines = content.lines().enumerate();
        let header = lines
            .next()
            .map(|(_, l)| l.trim())
            .ok_or_else(|| Error::Empty("embedding table has no header".into()))?;
        let dim = header
            .strip_prefix("dim=")
            .and_then(|d| d.trim().parse::<usize>().ok())
            .ok_or_else(|| Error::Parse {
                context: ctx.into(),
                line: 1,
                message: format!("expected header \"dim=<d>\", got {header:?}"),
            })?;
        let mut table = EmbeddingTable::new(dim)?;
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields: Vec<&str> = if line.contains('\t') {
                line.split('\t').collect()
            } else {
                line.split_whitespace().collect()
            };
            let id = fields.remove(0).to_string();
            let values = fields
                .iter()
                .map(|f| parse_f64(f, ctx, i + 1))
                .collect::<Result<Vec<_>>>()?;
            table.insert(id, values)?;
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_to_string(path)?)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("dim={}\n", self.dim);
        for (id, v) in &self.entries {
            out.push_str(id);
            for x in v {
                out.push('\t');
                out.push_str(&fmt_f64(*x));
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// One row of a dataset-wide feature table.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRow {
    pub article_id: String,
    pub label: Label,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub columns: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn get(&self, id: &str) -> Option<&FeatureRow> {
        self.rows.iter().find(|r| r.article_id == id)
    }
}

pub fn write_feature_table_to<W: Write>(
    columns: &[&str],
    rows: &[FeatureRow],
    mut w: W,
) -> Result<()> {
    for r in rows {
        if r.values.len() != columns.len() {
            return Err(Error::dim(
                format!("feature row {:?}", r.article_id),
                columns.len(),
                r.values.len(),
            ));
        }
    }
    let io = |e| Error::io("<feature table>", e);
    write!(w, "article_id,label").map_err(io)?;
    for c in columns {
        write!(w, ",{c}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    for r in rows {
        write!(w, "{},{}", r.article_id, r.label).map_err(io)?;
        for v in &r.values {
            write!(w, ",{}", fmt_f64(*v)).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_feature_table(columns: &[&str], rows: &[FeatureRow], path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_feature_table_to(columns, rows, BufWriter::new(f))
}

pub fn read_feature_table_from<R: BufRead>(r: R) -> Result<FeatureTable> {
    let ctx = "features";
    let mut lines = r.lines().enumerate();
    let header = match lines.next() {
        Some((_, l)) => l.map_err(|e| Error::io("<feature table>", e))?,
        None => return Err(Error::Empty("feature table has no header".into())),
    };
    let mut head = header.split(',');
    if head.next() != Some("article_id") || head.next() != Some("label") {
        return Err(Error::Parse {
            context: ctx.into(),
            line: 1,
            message: "header must start with article_id,label".into(),
        });
    }
    let columns: Vec<String> = head.map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io("<feature table>", e))?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let article_id = fields.next().unwrap_or_default().to_string();
        let label: Label = fields
            .next()
            .ok_or_else(|| Error::Parse {
                context: ctx.into(),
                line: i + 1,
                message: "missing label".into(),
            })?
            .parse()?;
        let values = fields
            .map(|f| parse_f64(f, ctx, i + 1))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != columns.len() {
            return Err(Error::dim(
                format!("features line {}", i + 1),
                columns.len(),
                values.len(),
            ));
        }
        rows.push(FeatureRow {
            article_id,
            label,
            values,
        });
    }
    Ok(FeatureTable { columns, rows })
}

pub fn read_feature_table(path: &Path) -> Result<FeatureTable> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_feature_table_from(BufReader::new(f))
}
