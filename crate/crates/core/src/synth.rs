//! Seeded generator of labeled articles with tweet cascades.

use std::path::Path;

use rand::seq::IndexedRandom;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::dataset::{to_jsonl, Label, NewsArticle, TweetRecord};
use crate::error::{Error, Result};

pub const DEFAULT_CONFIG: &str = include_str!("../data/synth_default.toml");

/// Cascade and account parameters of one class. Rates are per second;
/// `*_mu`/`*_sigma` parameterize log-normals (account age in days).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassProfile {
    pub tweets_mean: f64,
    pub branching_mean: f64,
    pub tweet_rate: f64,
    pub retweet_rate: f64,
    pub verified_prob: f64,
    pub followers_mu: f64,
    pub followers_sigma: f64,
    pub friends_mu: f64,
    pub friends_sigma: f64,
    pub account_age_mu: f64,
    pub account_age_sigma: f64,
    pub hashtag_mean: f64,
    pub mention_prob: f64,
    pub negative_word_rate: f64,
    pub positive_word_rate: f64,
}

impl ClassProfile {
    /// Arithmetic midpoint, geometric for rates.
    pub fn midpoint(&self, other: &ClassProfile) -> ClassProfile {
        let a = |x: f64, y: f64| (x + y) / 2.0;
        let g = |x: f64, y: f64| (x * y).sqrt();
        ClassProfile {
            tweets_mean: a(self.tweets_mean, other.tweets_mean),
            branching_mean: a(self.branching_mean, other.branching_mean),
            tweet_rate: g(self.tweet_rate, other.tweet_rate),
            retweet_rate: g(self.retweet_rate, other.retweet_rate),
            verified_prob: a(self.verified_prob, other.verified_prob),
            followers_mu: a(self.followers_mu, other.followers_mu),
            followers_sigma: a(self.followers_sigma, other.followers_sigma),
            friends_mu: a(self.friends_mu, other.friends_mu),
            friends_sigma: a(self.friends_sigma, other.friends_sigma),
            account_age_mu: a(self.account_age_mu, other.account_age_mu),
            account_age_sigma: a(self.account_age_sigma, other.account_age_sigma),
            hashtag_mean: a(self.hashtag_mean, other.hashtag_mean),
            mention_prob: a(self.mention_prob, other.mention_prob),
            negative_word_rate: a(self.negative_word_rate, other.negative_word_rate),
            positive_word_rate: a(self.positive_word_rate, other.positive_word_rate),
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("synth {name}: {what}")));
        if self.tweet_rate <= 0.0 || self.retweet_rate <= 0.0 {
            return bad("rates must be positive");
        }
        if self.tweets_mean < 0.0 || self.branching_mean < 0.0 || self.hashtag_mean < 0.0 {
            return bad("Poisson means must be non-negative");
        }
        if self.followers_sigma < 0.0 || self.friends_sigma < 0.0 || self.account_age_sigma < 0.0 {
            return bad("log-normal sigmas must be non-negative");
        }
        let probs = [
            self.verified_prob,
            self.mention_prob,
            self.negative_word_rate,
            self.positive_word_rate,
            self.negative_word_rate + self.positive_word_rate,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("probabilities must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextProfile {
    pub doc_len: usize,
    pub tweet_len: usize,
    /// Share of article tokens drawn from the class topic words.
    pub topic_rate: f64,
    pub fake_words: Vec<String>,
    pub real_words: Vec<String>,
    pub common_words: Vec<String>,
    pub positive_words: Vec<String>,
    pub negative_words: Vec<String>,
}

/// Missing top-level keys take their default; a class profile or the text
/// section, when given, must be complete.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_articles: usize,
    pub fake_fraction: f64,
    pub separation: f64,
    /// Per-modality overrides of `separation`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_separation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_separation: Option<f64>,
    pub seed: u64,
    pub start_time: i64,
    pub max_cascade_size: usize,
    pub fake: ClassProfile,
    pub real: ClassProfile,
    pub text: TextProfile,
}

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|w| w.to_string()).collect()
}

/// Mirrors `data/synth_default.toml`.
impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_articles: 600,
            fake_fraction: 0.4,
            separation: 1.0,
            graph_separation: None,
            text_separation: None,
            seed: 7,
            start_time: 1_600_000_000,
            max_cascade_size: 40,
            fake: ClassProfile {
                tweets_mean: 3.0,
                branching_mean: 0.9,
                tweet_rate: 0.002,
                retweet_rate: 0.02,
                verified_prob: 0.05,
                followers_mu: 4.0,
                followers_sigma: 1.0,
                friends_mu: 5.5,
                friends_sigma: 0.8,
                account_age_mu: 4.0,
                account_age_sigma: 0.7,
                hashtag_mean: 2.0,
                mention_prob: 0.3,
                negative_word_rate: 0.4,
                positive_word_rate: 0.05,
            },
            real: ClassProfile {
                tweets_mean: 4.0,
                branching_mean: 0.5,
                tweet_rate: 0.0002,
                retweet_rate: 0.0005,
                verified_prob: 0.5,
                followers_mu: 8.0,
                followers_sigma: 1.2,
                friends_mu: 6.0,
                friends_sigma: 0.8,
                account_age_mu: 7.0,
                account_age_sigma: 0.5,
                hashtag_mean: 0.5,
                mention_prob: 0.1,
                negative_word_rate: 0.05,
                positive_word_rate: 0.3,
            },
            text: TextProfile {
                doc_len: 60,
                tweet_len: 8,
                topic_rate: 0.3,
                fake_words: words(&[
                    "exposed", "secret", "miracle", "banned", "cover", "insider", "leaked", "agenda", "viral",
                    "conspiracy", "unbelievable", "elites",
                ]),
                real_words: words(&[
                    "committee", "quarterly", "announced", "budget", "minister", "percent", "researchers",
                    "council", "statement", "according", "survey", "agency",
                ]),
                common_words: words(&[
                    "the", "a", "of", "to", "in", "and", "news", "people", "said", "year", "new", "state", "city",
                    "week", "time", "report", "public", "government", "local", "national", "plan", "group",
                    "officials", "world",
                ]),
                positive_words: words(&[
                    "good", "great", "love", "happy", "best", "true", "honest", "support", "hope", "trust",
                    "success", "amazing",
                ]),
                negative_words: words(&[
                    "bad", "worst", "hate", "fake", "lie", "fraud", "scandal", "terrible", "angry", "corrupt",
                    "disaster", "shocking", "hoax", "outrage",
                ]),
            },
        }
    }
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SynthConfig = toml::from_str(text).map_err(|e| Error::Config(format!("synth config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn graph_separation(&self) -> f64 {
        self.graph_separation.unwrap_or(self.separation)
    }

    pub fn text_separation(&self) -> f64 {
        self.text_separation.unwrap_or(self.separation)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_articles == 0 {
            return Err(Error::Config("synth n_articles must be positive".into()));
        }
        if !(self.fake_fraction > 0.0 && self.fake_fraction < 1.0) {
            return Err(Error::Config("synth fake_fraction must lie in (0, 1)".into()));
        }
        for s in [self.separation, self.graph_separation(), self.text_separation()] {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::Config(format!("synth separation {s} outside [0, 1]")));
            }
        }
        if self.start_time < 0 || self.max_cascade_size == 0 {
            return Err(Error::Config("synth start_time and max_cascade_size".into()));
        }
        self.fake.validate("fake")?;
        self.real.validate("real")?;
        let t = &self.text;
        if !(0.0..=1.0).contains(&t.topic_rate) {
            return Err(Error::Config("synth topic_rate outside [0, 1]".into()));
        }
        for (name, words) in [
            ("fake_words", &t.fake_words),
            ("real_words", &t.real_words),
            ("common_words", &t.common_words),
            ("positive_words", &t.positive_words),
            ("negative_words", &t.negative_words),
        ] {
            if words.is_empty() {
                return Err(Error::Config(format!("synth text.{name} is empty")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthDataset {
    pub news: Vec<NewsArticle>,
    pub tweets: Vec<TweetRecord>,
}

impl SynthDataset {
    pub fn news_jsonl(&self) -> String {
        to_jsonl(&self.news)
    }

    pub fn tweets_jsonl(&self) -> String {
        to_jsonl(&self.tweets)
    }

    /// Writes `news.jsonl` and `tweets.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [("news.jsonl", self.news_jsonl()), ("tweets.jsonl", self.tweets_jsonl())] {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

fn poisson<R: Rng>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as usize
}

/// Exponential waiting time in whole seconds, at least one.
pub fn sample_gap<R: Rng>(rate: f64, rng: &mut R) -> i64 {
    let t: f64 = Exp::new(rate).expect("positive rate").sample(rng);
    (t.round() as i64).max(1)
}

fn lognormal<R: Rng>(mu: f64, sigma: f64, rng: &mut R) -> f64 {
    LogNormal::new(mu, sigma).expect("valid log-normal").sample(rng)
}

fn tweet_text<R: Rng>(profile: &ClassProfile, text: &TextProfile, rng: &mut R) -> String {
    let words: Vec<&str> = (0..text.tweet_len)
        .map(|_| {
            let u: f64 = rng.random();
            let pool = if u < profile.negative_word_rate {
                &text.negative_words
            } else if u < profile.negative_word_rate + profile.positive_word_rate {
                &text.positive_words
            } else {
                &text.common_words
            };
            pool.choose(rng).expect("non-empty word list").as_str()
        })
        .collect();
    words.join(" ")
}

struct Author {
    id: String,
    verified: bool,
    followers: u64,
    friends: u64,
    account_created: i64,
}

/// Tweets of one article: Poisson-many source tweets with exponential delays
/// after `publish_time`, each the root of a Poisson branching retweet tree
/// with exponential inter-arrival gaps.
pub fn generate_cascade<R: Rng>(
    article_id: &str,
    publish_time: i64,
    profile: &ClassProfile,
    text: &TextProfile,
    max_size: usize,
    rng: &mut R,
) -> Vec<TweetRecord> {
    let mut authors: Vec<Author> = Vec::new();
    let new_author = |rng: &mut R, authors: &mut Vec<Author>| -> usize {
        if !authors.is_empty() && rng.random_bool(0.1) {
            return rng.random_range(0..authors.len());
        }
        let age_days = lognormal(profile.account_age_mu, profile.account_age_sigma, rng);
        authors.push(Author {
            id: format!("{article_id}-u{}", authors.len()),
            verified: rng.random_bool(profile.verified_prob),
            followers: lognormal(profile.followers_mu, profile.followers_sigma, rng).round() as u64,
            friends: lognormal(profile.friends_mu, profile.friends_sigma, rng).round() as u64,
            account_created: publish_time - (age_days * 86_400.0).round() as i64,
        });
        authors.len() - 1
    };

    // (author, timestamp, parent position, root position)
    let mut nodes: Vec<(usize, i64, Option<usize>, usize)> = Vec::new();
    let num_tweets = poisson(profile.tweets_mean, rng).max(1);
    let mut t = publish_time;
    for _ in 0..num_tweets {
        if nodes.len() >= max_size {
            break;
        }
        t += sample_gap(profile.tweet_rate, rng) - 1;
        let root = nodes.len();
        let a = new_author(rng, &mut authors);
        nodes.push((a, t, None, root));
        let mut frontier = vec![root];
        while let Some(p) = frontier.pop() {
            for _ in 0..poisson(profile.branching_mean, rng) {
                if nodes.len() >= max_size {
                    break;
                }
                let a = new_author(rng, &mut authors);
                let ts = nodes[p].1 + sample_gap(profile.retweet_rate, rng);
                nodes.push((a, ts, Some(p), root));
                frontier.push(nodes.len() - 1);
            }
        }
    }

    let mut mentions: Vec<Vec<String>> = vec![Vec::new(); nodes.len()];
    // Some parents tag the account that picks up their post.
    for &(a, _, parent, _) in &nodes {
        if let Some(p) = parent {
            let id = &authors[a].id;
            if rng.random_bool(profile.mention_prob) && !mentions[p].contains(id) && nodes[p].0 != a {
                mentions[p].push(id.clone());
            }
        }
    }
    nodes
        .iter()
        .enumerate()
        .map(|(k, &(a, ts, parent, root))| {
            let au = &authors[a];
            TweetRecord {
                tweet_id: format!("{article_id}-t{k:03}"),
                article_id: article_id.to_string(),
                author_id: au.id.clone(),
                timestamp: ts,
                text: tweet_text(profile, text, rng),
                is_retweet: parent.is_some(),
                declared_source_id: parent.map(|_| format!("{article_id}-t{root:03}")),
                verified: au.verified,
                followers: au.followers,
                friends: au.friends,
                mentions: std::mem::take(&mut mentions[k]),
                hashtag_count: poisson(profile.hashtag_mean, rng) as u32,
                account_created: au.account_created,
            }
        })
        .collect()
}

fn article_text<R: Rng>(topic: &[&[String]], text: &TextProfile, rng: &mut R) -> String {
    let words: Vec<&str> = (0..text.doc_len)
        .map(|_| {
            let pool = if rng.random_bool(text.topic_rate) {
                topic[rng.random_range(0..topic.len())]
            } else {
                &text.common_words
            };
            pool.choose(rng).expect("non-empty word list").as_str()
        })
        .collect();
    words.join(" ")
}

/// Generates the full corpus from one RNG stream.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_fake = (cfg.n_articles as f64 * cfg.fake_fraction).round() as usize;
    let mut labels: Vec<Label> = (0..cfg.n_articles)
        .map(|i| if i < n_fake { Label::Fake } else { Label::Real })
        .collect();
    labels.shuffle(&mut rng);

    let neutral = cfg.fake.midpoint(&cfg.real);
    let t = &cfg.text;
    let mixed: [&[String]; 2] = [&t.fake_words, &t.real_words];
    let mut news = Vec::with_capacity(cfg.n_articles);
    let mut tweets = Vec::new();
    for (i, &label) in labels.iter().enumerate() {
        let id = format!("a{i:05}");
        let publish_time = cfg.start_time + i as i64 * 3_600;
        let graph_informative = rng.random_bool(cfg.graph_separation());
        let text_informative = rng.random_bool(cfg.text_separation());
        let profile = match (graph_informative, label) {
            (false, _) => &neutral,
            (true, Label::Fake) => &cfg.fake,
            (true, Label::Real) => &cfg.real,
        };
        let own: [&[String]; 1] = [if label == Label::Fake { &t.fake_words } else { &t.real_words }];
        let topic: &[&[String]] = if text_informative { &own } else { &mixed };
        news.push(NewsArticle {
            article_id: id.clone(),
            label,
            text: article_text(topic, t, &mut rng),
            publish_time: Some(publish_time),
        });
        tweets.extend(generate_cascade(&id, publish_time, profile, t, cfg.max_cascade_size, &mut rng));
    }
    Ok(SynthDataset { news, tweets })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::build_all;
    use crate::dataset::parse_dataset;
    use crate::featurize::{extract_graph_features, GRAPH_FEATURES};

    fn small(n: usize, seed: u64) -> SynthConfig {
        SynthConfig {
            n_articles: n,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn default_config_is_valid() {
        let cfg = SynthConfig::default();
        assert_eq!((cfg.n_articles, cfg.seed), (600, 7));
        assert_eq!(cfg.separation, 1.0);
        let mut bad = cfg.clone();
        bad.fake.retweet_rate = 0.0;
        assert!(bad.validate().is_err());
        assert_eq!(SynthConfig::from_toml(DEFAULT_CONFIG).unwrap(), cfg);
        assert_eq!(SynthConfig::from_toml("n_articles = 3").unwrap().n_articles, 3);
        assert!(SynthConfig::from_toml("n_articles = 0").is_err());
        assert!(SynthConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn class_counts_follow_fraction() {
        let cfg = SynthConfig {
            fake_fraction: 0.4,
            ..small(100, 1)
        };
        let d = generate_dataset(&cfg).unwrap();
        let fake = d.news.iter().filter(|a| a.label == Label::Fake).count();
        assert_eq!((fake, d.news.len() - fake), (40, 60));
    }

    #[test]
    fn output_is_valid_and_reproducible() {
        let cfg = small(80, 3);
        let d = generate_dataset(&cfg).unwrap();
        let parsed = parse_dataset(&d.news_jsonl(), &d.tweets_jsonl()).unwrap();
        let (graphs, diag) = build_all(&parsed.entries, crate::cascade::DEFAULT_WINDOW_SECONDS);
        assert_eq!(diag.skipped(), 0);
        for g in &graphs {
            g.validate().unwrap();
        }
        for e in &parsed.entries {
            let publish = e.article.publish_time.unwrap();
            for t in &e.tweets {
                assert!(t.timestamp >= publish);
                if let Some(src) = &t.declared_source_id {
                    let root = e.tweets.iter().find(|r| &r.tweet_id == src).unwrap();
                    assert!(!root.is_retweet && root.timestamp < t.timestamp);
                }
            }
        }
        let again = generate_dataset(&cfg).unwrap();
        assert_eq!(d.news_jsonl(), again.news_jsonl());
        assert_eq!(d.tweets_jsonl(), again.tweets_jsonl());
    }

    #[test]
    fn zero_branching_gives_tweets_only() {
        let cfg = SynthConfig::default();
        let profile = ClassProfile {
            branching_mean: 0.0,
            ..cfg.fake.clone()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let c = generate_cascade("a", 100, &profile, &cfg.text, 40, &mut rng);
            assert!(!c.is_empty() && c.iter().all(|t| !t.is_retweet && t.timestamp >= 100));
        }
    }

    #[test]
    fn gap_mean_matches_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for rate in [0.01, 0.002] {
            let mean = (0..10_000).map(|_| sample_gap(rate, &mut rng) as f64).sum::<f64>() / 1e4;
            assert!((mean * rate - 1.0).abs() < 0.1, "rate {rate}: mean gap {mean}");
        }
    }

    /// With no separation, per-class means of every graph feature agree to
    /// within two pooled standard errors over the corpora of seeds 1..5.
    #[test]
    fn zero_separation_has_no_graph_signal() {
        let mut by_class: [Vec<Vec<f64>>; 2] = [Vec::new(), Vec::new()];
        for seed in 1..=5 {
            let cfg = SynthConfig {
                separation: 0.0,
                ..small(600, seed)
            };
            let d = generate_dataset(&cfg).unwrap();
            let parsed = parse_dataset(&d.news_jsonl(), &d.tweets_jsonl()).unwrap();
            let (graphs, _) = build_all(&parsed.entries, 600);
            for (g, e) in graphs.iter().zip(&parsed.entries) {
                by_class[e.article.label.class_index()].push(extract_graph_features(g));
            }
        }
        for (j, name) in GRAPH_FEATURES.iter().enumerate() {
            let stats = |rows: &Vec<Vec<f64>>| {
                let n = rows.len() as f64;
                let m = rows.iter().map(|r| r[j]).sum::<f64>() / n;
                let v = rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / (n - 1.0);
                (m, v, n)
            };
            let (m0, v0, n0) = stats(&by_class[0]);
            let (m1, v1, n1) = stats(&by_class[1]);
            let pooled = ((n0 - 1.0) * v0 + (n1 - 1.0) * v1) / (n0 + n1 - 2.0);
            let se = (pooled * (1.0 / n0 + 1.0 / n1)).sqrt();
            assert!((m0 - m1).abs() < 2.0 * se, "{name}: |{m0} - {m1}| >= 2 * {se}");
        }
    }
}
