//! Propagation graph reconstruction.
//!
//! The platform reports only the root tweet of a retweet. The immediate
//! source of each retweet is recovered by scanning earlier posts of the same
//! cascade, in priority order:
//!
//! 1. the latest earlier post whose author mentions the retweet's author;
//! 2. else the latest earlier post published at most `window_seconds` before;
//! 3. else the cascade's root tweet.
//!
//! Every root tweet hangs off a single news node.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ArticleEntry, NewsArticle, TweetRecord};
use crate::error::{Error, Result};

pub const DEFAULT_WINDOW_SECONDS: i64 = 600;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    NewsRoot,
    Tweet,
    Retweet,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::NewsRoot => "news_root",
            NodeKind::Tweet => "tweet",
            NodeKind::Retweet => "retweet",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CascadeNode {
    pub index: usize,
    pub kind: NodeKind,
    pub tweet: Option<TweetRecord>,
    pub parent: Option<usize>,
}

impl CascadeNode {
    pub fn timestamp(&self) -> Option<i64> {
        self.tweet.as_ref().map(|t| t.timestamp)
    }
}

/// Rooted propagation tree. Node 0 is the news root; the remaining nodes are
/// in ascending `(timestamp, tweet_id)` order.
#[derive(Clone, Debug, PartialEq)]
pub struct PropagationGraph {
    pub article_id: String,
    pub nodes: Vec<CascadeNode>,
    /// `(parent, child)` pairs.
    pub edges: Vec<(usize, usize)>,
}

/// Records dropped while building a graph.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildDiagnostics {
    /// Retweets whose declared source is not a plain tweet of this article.
    pub unmatched_retweets: usize,
    /// Retweets timestamped before their declared source.
    pub premature_retweets: usize,
    /// Records repeating an already-seen tweet id.
    pub duplicate_ids: usize,
}

impl BuildDiagnostics {
    pub fn skipped(&self) -> usize {
        self.unmatched_retweets + self.premature_retweets + self.duplicate_ids
    }

    pub fn merge(&mut self, other: &BuildDiagnostics) {
        self.unmatched_retweets += other.unmatched_retweets;
        self.premature_retweets += other.premature_retweets;
        self.duplicate_ids += other.duplicate_ids;
    }
}

fn cascade_order(a: &TweetRecord, b: &TweetRecord) -> std::cmp::Ordering {
    a.timestamp
        .cmp(&b.timestamp)
        .then_with(|| a.tweet_id.cmp(&b.tweet_id))
}

/// Sorts by ascending timestamp, ties broken by tweet id.
pub fn sort_cascade(mut records: Vec<TweetRecord>) -> Vec<TweetRecord> {
    records.sort_by(cascade_order);
    records
}

/// Picks the immediate source of `retweet` among `predecessors`, which must be
/// sorted and start with the cascade's root tweet.
pub fn resolve_immediate_source<'a>(
    retweet: &TweetRecord,
    predecessors: &'a [TweetRecord],
    window_seconds: i64,
) -> Result<&'a str> {
    let root = predecessors
        .first()
        .ok_or_else(|| Error::Invalid("cascade without source tweet".into()))?;

    if let Some(p) = predecessors
        .iter()
        .rev()
        .find(|p| p.mentions.iter().any(|m| *m == retweet.author_id))
    {
        return Ok(&p.tweet_id);
    }
    // Predecessors are sorted, so the latest one is also the closest in time.
    let latest = predecessors.last().unwrap_or(root);
    if retweet.timestamp - latest.timestamp <= window_seconds {
        return Ok(&latest.tweet_id);
    }
    Ok(&root.tweet_id)
}

/// Builds the propagation tree of one article.
pub fn build_propagation_graph(
    article: &NewsArticle,
    tweets: &[TweetRecord],
    window_seconds: i64,
) -> (PropagationGraph, BuildDiagnostics) {
    let mut diag = BuildDiagnostics::default();

    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(tweets.len());
    for t in sort_cascade(tweets.to_vec()) {
        if seen.insert(t.tweet_id.clone()) {
            records.push(t);
        } else {
            diag.duplicate_ids += 1;
        }
    }

    // Group into cascades keyed by root tweet id.
    let roots: HashMap<&str, &TweetRecord> = records
        .iter()
        .filter(|t| !t.is_retweet)
        .map(|t| (t.tweet_id.as_str(), t))
        .collect();
    let mut cascades: BTreeMap<&str, Vec<&TweetRecord>> = BTreeMap::new();
    let mut kept: HashSet<&str> = HashSet::new();
    for t in &records {
        if !t.is_retweet {
            kept.insert(&t.tweet_id);
            continue;
        }
        let src = t.declared_source_id.as_deref().unwrap_or_default();
        match roots.get(src) {
            None => diag.unmatched_retweets += 1,
            Some(root) if t.timestamp < root.timestamp => diag.premature_retweets += 1,
            Some(_) => {
                cascades.entry(src).or_default().push(t);
                kept.insert(&t.tweet_id);
            }
        }
    }

    let included: Vec<&TweetRecord> = records
        .iter()
        .filter(|t| kept.contains(t.tweet_id.as_str()))
        .collect();
    let index_of: HashMap<&str, usize> = included
        .iter()
        .enumerate()
        .map(|(i, t)| (t.tweet_id.as_str(), i + 1))
        .collect();

    let mut parent_of: HashMap<&str, usize> = HashMap::new();
    for (root_id, members) in &cascades {
        let mut preds: Vec<TweetRecord> = vec![(*roots[root_id]).clone()];
        for rt in members {
            let src = resolve_immediate_source(rt, &preds, window_seconds)
                .expect("cascade always starts with its root tweet");
            parent_of.insert(&rt.tweet_id, index_of[src]);
            preds.push((*rt).clone());
        }
    }

    let mut nodes = Vec::with_capacity(included.len() + 1);
    nodes.push(CascadeNode {
        index: 0,
        kind: NodeKind::NewsRoot,
        tweet: None,
        parent: None,
    });
    let mut edges = Vec::with_capacity(included.len());
    for (i, t) in included.iter().enumerate() {
        let index = i + 1;
        let (kind, parent) = if t.is_retweet {
            (NodeKind::Retweet, parent_of[t.tweet_id.as_str()])
        } else {
            (NodeKind::Tweet, 0)
        };
        nodes.push(CascadeNode {
            index,
            kind,
            tweet: Some((*t).clone()),
            parent: Some(parent),
        });
        edges.push((parent, index));
    }

    (
        PropagationGraph {
            article_id: article.article_id.clone(),
            nodes,
            edges,
        },
        diag,
    )
}

/// Builds graphs for every article, in input order.
pub fn build_all(
    entries: &[ArticleEntry],
    window_seconds: i64,
) -> (Vec<PropagationGraph>, BuildDiagnostics) {
    let built: Vec<_> = entries
        .par_iter()
        .map(|e| build_propagation_graph(&e.article, &e.tweets, window_seconds))
        .collect();
    let mut total = BuildDiagnostics::default();
    let graphs = built
        .into_iter()
        .map(|(g, d)| {
            total.merge(&d);
            g
        })
        .collect();
    (graphs, total)
}

impl PropagationGraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for &(p, c) in &self.edges {
            out[p].push(c);
        }
        out
    }

    /// Checks the tree invariants: one root, `|E| = |V| - 1`, every node
    /// reachable from the root, and parents never later than children.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        let roots = self
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::NewsRoot)
            .count();
        if roots != 1 || self.nodes.first().map(|n| n.kind) != Some(NodeKind::NewsRoot) {
            return Err(Error::Invalid(format!(
                "{}: expected a single news root at index 0",
                self.article_id
            )));
        }
        if self.edges.len() + 1 != n {
            return Err(Error::Invalid(format!(
                "{}: {} edges for {} nodes",
                self.article_id,
                self.edges.len(),
                n
            )));
        }
        let children = self.children();
        let mut visited = vec![false; n];
        let mut stack = vec![0usize];
        while let Some(v) = stack.pop() {
            if std::mem::replace(&mut visited[v], true) {
                return Err(Error::Invalid(format!("{}: cycle", self.article_id)));
            }
            stack.extend(&children[v]);
        }
        if !visited.iter().all(|&v| v) {
            return Err(Error::Invalid(format!(
                "{}: unreachable nodes",
                self.article_id
            )));
        }
        for &(p, c) in &self.edges {
            if let (Some(tp), Some(tc)) = (self.nodes[p].timestamp(), self.nodes[c].timestamp()) {
                if tp > tc {
                    return Err(Error::Invalid(format!(
                        "{}: parent {p} later than child {c}",
                        self.article_id
                    )));
                }
            }
        }
        Ok(())
    }

    /// `parent child` per line.
    pub fn edge_list(&self) -> String {
        let mut out = String::new();
        for (p, c) in &self.edges {
            let _ = writeln!(out, "{p} {c}");
        }
        out
    }

    pub fn node_manifest_csv(&self) -> String {
        let mut out = String::from("node_index,kind,tweet_id,author_id,timestamp,parent_index\n");
        for n in &self.nodes {
            let (tid, author, ts) = match &n.tweet {
                Some(t) => (t.tweet_id.as_str(), t.author_id.as_str(), t.timestamp.to_string()),
                None => ("", "", String::new()),
            };
            let parent = n.parent.map(|p| p.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{tid},{author},{ts},{parent}",
                n.index,
                n.kind.as_str()
            );
        }
        out
    }
}

/// Parses an edge-list dump back into `(parent, child)` pairs.
pub fn parse_edge_list(text: &str) -> Result<Vec<(usize, usize)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let mut it = l.split_whitespace().map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(p)), Some(Ok(c)), None) => Ok((p, c)),
                _ => Err(Error::Parse {
                    context: "edge list".into(),
                    line: i + 1,
                    message: format!("expected \"parent child\", got {l:?}"),
                }),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Label;
    use proptest::prelude::*;

    fn tw(id: &str, author: &str, ts: i64, retweet_of: Option<&str>, mentions: &[&str]) -> TweetRecord {
        TweetRecord {
            tweet_id: id.into(),
            article_id: "N".into(),
            author_id: author.into(),
            timestamp: ts,
            text: String::new(),
            is_retweet: retweet_of.is_some(),
            declared_source_id: retweet_of.map(str::to_string),
            verified: false,
            followers: 0,
            friends: 0,
            mentions: mentions.iter().map(|m| m.to_string()).collect(),
            hashtag_count: 0,
            account_created: 0,
        }
    }

    fn article() -> NewsArticle {
        NewsArticle {
            article_id: "N".into(),
            label: Label::Real,
            text: "x".into(),
            publish_time: None,
        }
    }

    #[test]
    fn sort_by_timestamp_then_id() {
        let out = sort_cascade(vec![
            tw("c", "u", 30, None, &[]),
            tw("a", "u", 10, None, &[]),
            tw("b", "u", 20, None, &[]),
        ]);
        let ts: Vec<i64> = out.iter().map(|t| t.timestamp).collect();
        assert_eq!(ts, vec![10, 20, 30]);

        let out = sort_cascade(vec![tw("b", "u", 5, None, &[]), tw("a", "u", 5, None, &[])]);
        assert_eq!(out[0].tweet_id, "a");
        assert_eq!(out[1].tweet_id, "b");

        assert_eq!(sort_cascade(vec![tw("z", "u", 1, None, &[])]).len(), 1);
        assert!(sort_cascade(vec![]).is_empty());
    }

    #[test]
    fn mention_rule_beats_window() {
        let preds = [tw("t0", "A", 600, None, &[]), tw("r1", "B", 900, Some("t0"), &["C"])];
        let r2 = tw("r2", "C", 5000, Some("t0"), &[]);
        assert_eq!(resolve_immediate_source(&r2, &preds, 60).unwrap(), "r1");
    }

    #[test]
    fn window_rule() {
        let preds = [tw("t0", "A", 600, None, &[]), tw("r1", "B", 900, Some("t0"), &[])];
        let r2 = tw("r2", "C", 930, Some("t0"), &[]);
        assert_eq!(resolve_immediate_source(&r2, &preds, 60).unwrap(), "r1");
    }

    #[test]
    fn fallback_to_root_tweet() {
        let preds = [tw("t0", "A", 600, None, &[]), tw("r1", "B", 900, Some("t0"), &[])];
        let r2 = tw("r2", "C", 5000, Some("t0"), &[]);
        assert_eq!(resolve_immediate_source(&r2, &preds, 60).unwrap(), "t0");
    }

    #[test]
    fn mention_picks_latest_matching_predecessor() {
        let preds = [
            tw("t0", "A", 0, None, &["C"]),
            tw("r1", "B", 10, Some("t0"), &["C"]),
            tw("r2", "D", 20, Some("t0"), &[]),
        ];
        let r3 = tw("r3", "C", 10_000, Some("t0"), &[]);
        assert_eq!(resolve_immediate_source(&r3, &preds, 60).unwrap(), "r1");
    }

    #[test]
    fn empty_predecessors_is_error() {
        let r = tw("r", "C", 1, Some("t0"), &[]);
        let err = resolve_immediate_source(&r, &[], 60).unwrap_err();
        assert!(err.to_string().contains("cascade without source tweet"));
    }

    #[test]
    fn plain_tweets_form_a_star() {
        let (g, d) = build_propagation_graph(
            &article(),
            &[tw("a", "u", 1, None, &[]), tw("b", "v", 2, None, &[])],
            600,
        );
        assert_eq!(d.skipped(), 0);
        assert_eq!(g.nodes.len(), 3);
        assert_eq!(g.edges, vec![(0, 1), (0, 2)]);
        g.validate().unwrap();
    }

    #[test]
    fn window_chain_forms_a_path() {
        let tweets = [
            tw("r2", "C", 140, Some("t0"), &[]),
            tw("t0", "A", 100, None, &[]),
            tw("r1", "B", 120, Some("t0"), &[]),
        ];
        let (g, _) = build_propagation_graph(&article(), &tweets, 600);
        assert_eq!(g.edges, vec![(0, 1), (1, 2), (2, 3)]);
        let ids: Vec<_> = g.nodes[1..]
            .iter()
            .map(|n| n.tweet.as_ref().unwrap().tweet_id.as_str())
            .collect();
        assert_eq!(ids, ["t0", "r1", "r2"]);
        assert_eq!(g.nodes[3].kind, NodeKind::Retweet);
    }

    #[test]
    fn no_tweets_gives_lone_root() {
        let (g, _) = build_propagation_graph(&article(), &[], 600);
        assert_eq!(g.nodes.len(), 1);
        assert!(g.edges.is_empty());
        g.validate().unwrap();
    }

    #[test]
    fn unmatched_and_premature_retweets_are_skipped() {
        let tweets = [
            tw("t0", "A", 100, None, &[]),
            tw("r1", "B", 120, Some("missing"), &[]),
            tw("r2", "B", 50, Some("t0"), &[]),
        ];
        let (g, d) = build_propagation_graph(&article(), &tweets, 600);
        assert_eq!(d.unmatched_retweets, 1);
        assert_eq!(d.premature_retweets, 1);
        assert_eq!(g.nodes.len(), 2);
        g.validate().unwrap();
    }

    #[test]
    fn edge_list_round_trip() {
        let tweets = [tw("t0", "A", 100, None, &[]), tw("r1", "B", 120, Some("t0"), &[])];
        let (g, _) = build_propagation_graph(&article(), &tweets, 600);
        assert_eq!(parse_edge_list(&g.edge_list()).unwrap(), g.edges);
        assert!(g.node_manifest_csv().lines().count() == 4);
        assert!(parse_edge_list("1 2 3").is_err());
    }

    fn arb_cascade() -> impl Strategy<Value = Vec<TweetRecord>> {
        (1usize..4, prop::collection::vec((0usize..4, 0i64..2000, 0usize..6, any::<bool>()), 0..25))
            .prop_map(|(n_roots, rts)| {
                let mut out: Vec<TweetRecord> = (0..n_roots)
                    .map(|i| tw(&format!("t{i}"), &format!("a{i}"), 100 * i as i64, None, &[]))
                    .collect();
                for (k, (root, dt, author, mention)) in rts.into_iter().enumerate() {
                    let root = root % n_roots;
                    let mentions: Vec<String> =
                        if mention { vec![format!("u{}", (author + 1) % 6)] } else { vec![] };
                    let mut r = tw(
                        &format!("r{k}"),
                        &format!("u{author}"),
                        100 * root as i64 + dt,
                        Some(&format!("t{root}")),
                        &[],
                    );
                    r.mentions = mentions;
                    out.push(r);
                }
                out
            })
    }

    proptest! {
        #[test]
        fn tree_invariants_hold(tweets in arb_cascade(), window in 1i64..900) {
            let (g, d) = build_propagation_graph(&article(), &tweets, window);
            prop_assert_eq!(d.skipped(), 0);
            prop_assert_eq!(g.edges.len() + 1, g.nodes.len());
            prop_assert!(g.validate().is_ok());
        }

        #[test]
        fn invariant_to_input_order(tweets in arb_cascade(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = tweets.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let (a, _) = build_propagation_graph(&article(), &tweets, 300);
            let (b, _) = build_propagation_graph(&article(), &shuffled, 300);
            prop_assert_eq!(a, b);
        }
    }
}
