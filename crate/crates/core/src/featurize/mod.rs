//! Node-level and graph-level propagation features.

mod lexicon;
mod scaler;

use std::collections::{HashMap, HashSet};

pub use lexicon::{analyze_text, normalize_compound, sentiment_score, SentimentLexicon, TextSentiment};
pub use scaler::FeatureScaler;

use crate::cascade::{NodeKind, PropagationGraph};
use crate::nn::Matrix;

pub const NODE_FEATURES: [&str; 12] = [
    "verified",
    "friends",
    "followers",
    "hashtag_count",
    "mention_count",
    "sentiment_compound",
    "pos_word_freq",
    "neg_word_freq",
    "account_age_days",
    "dt_source_seconds",
    "dt_parent_seconds",
    "mean_dt_successors_seconds",
];

/// Heavy-tailed node columns that are log1p-transformed before scaling.
pub const NODE_LOG1P_COLUMNS: [usize; 2] = [1, 2];

pub const GRAPH_FEATURES: [&str; 11] = [
    "num_nodes",
    "num_tweets",
    "avg_num_retweets",
    "retweet_perc",
    "num_users",
    "total_propagation_time",
    "avg_num_followers",
    "avg_num_friends",
    "perc_posts_1_hour",
    "users_10h",
    "avg_time_diff",
];

pub const GRAPH_LOG1P_COLUMNS: [usize; 2] = [6, 7];

const HOUR: i64 = 3600;
const SECONDS_PER_DAY: f64 = 86_400.0;

/// One row per node in index order; the news root gets zeros.
pub fn extract_node_features(graph: &PropagationGraph, lexicon: &SentimentLexicon) -> Matrix {
    let n = graph.num_nodes();
    let mut out = Matrix::zeros(n, NODE_FEATURES.len());
    let first = graph.nodes.iter().filter_map(|n| n.timestamp()).min();
    let children = graph.children();
    for node in &graph.nodes {
        let (Some(t), Some(first)) = (&node.tweet, first) else {
            continue;
        };
        let sentiment = analyze_text(&t.text, lexicon);
        let parent_ts = node
            .parent
            .and_then(|p| graph.nodes[p].timestamp())
            .unwrap_or(t.timestamp);
        let kids = &children[node.index];
        let mean_succ = if kids.is_empty() {
            0.0
        } else {
            kids.iter()
                .filter_map(|&c| graph.nodes[c].timestamp())
                .map(|ts| (ts - t.timestamp) as f64)
                .sum::<f64>()
                / kids.len() as f64
        };
        let row = [
            f64::from(u8::from(t.verified)),
            t.friends as f64,
            t.followers as f64,
            f64::from(t.hashtag_count),
            t.mentions.len() as f64,
            sentiment.compound,
            sentiment.pos_freq,
            sentiment.neg_freq,
            (t.timestamp - t.account_created) as f64 / SECONDS_PER_DAY,
            (t.timestamp - first) as f64,
            (t.timestamp - parent_ts) as f64,
            mean_succ,
        ];
        out.row_mut(node.index).copy_from_slice(&row);
    }
    out
}

/// The eleven graph-level features, in [`GRAPH_FEATURES`] order. The news
/// root is excluded from every count and average.
pub fn extract_graph_features(graph: &PropagationGraph) -> Vec<f64> {
    let posts: Vec<_> = graph.nodes.iter().filter_map(|n| n.tweet.as_ref().map(|t| (n, t))).collect();
    if posts.is_empty() {
        return vec![0.0; GRAPH_FEATURES.len()];
    }
    let num_nodes = posts.len();
    let num_tweets = posts.iter().filter(|(n, _)| n.kind == NodeKind::Tweet).count();
    let num_retweets = num_nodes - num_tweets;
    let first = posts.iter().map(|(_, t)| t.timestamp).min().unwrap_or(0);
    let last = posts.iter().map(|(_, t)| t.timestamp).max().unwrap_or(0);

    let mut seen = HashSet::new();
    let (mut followers, mut friends) = (0.0, 0.0);
    let mut users_10h = HashSet::new();
    for (_, t) in &posts {
        if seen.insert(t.author_id.as_str()) {
            followers += t.followers as f64;
            friends += t.friends as f64;
        }
        if t.timestamp - first < 10 * HOUR {
            users_10h.insert(t.author_id.as_str());
        }
    }
    let num_users = seen.len();
    let first_hour = posts.iter().filter(|(_, t)| t.timestamp - first < HOUR).count();

    // Delay of each retweet behind the root tweet of its cascade.
    let root_time: HashMap<&str, i64> = posts
        .iter()
        .filter(|(n, _)| n.kind == NodeKind::Tweet)
        .map(|(_, t)| (t.tweet_id.as_str(), t.timestamp))
        .collect();
    let delays: Vec<f64> = posts
        .iter()
        .filter(|(n, _)| n.kind == NodeKind::Retweet)
        .filter_map(|(_, t)| {
            let src = t.declared_source_id.as_deref()?;
            Some((t.timestamp - root_time.get(src)?) as f64)
        })
        .collect();
    let avg_time_diff = if delays.is_empty() {
        0.0
    } else {
        delays.iter().sum::<f64>() / delays.len() as f64
    };

    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    vec![
        num_nodes as f64,
        num_tweets as f64,
        ratio(num_retweets, num_tweets),
        ratio(num_retweets, num_nodes),
        num_users as f64,
        (last - first) as f64,
        followers / num_users as f64,
        friends / num_users as f64,
        ratio(first_hour, num_nodes),
        users_10h.len() as f64,
        avg_time_diff,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::build_propagation_graph;
    use crate::dataset::{Label, NewsArticle, TweetRecord};
    use proptest::prelude::*;

    fn article() -> NewsArticle {
        NewsArticle {
            article_id: "A".into(),
            label: Label::Fake,
            text: String::new(),
            publish_time: None,
        }
    }

    fn tw(id: &str, author: &str, ts: i64, src: Option<&str>) -> TweetRecord {
        TweetRecord {
            tweet_id: id.into(),
            article_id: "A".into(),
            author_id: author.into(),
            timestamp: ts,
            text: String::new(),
            is_retweet: src.is_some(),
            declared_source_id: src.map(str::to_string),
            verified: false,
            followers: 0,
            friends: 0,
            mentions: vec![],
            hashtag_count: 0,
            account_created: 0,
        }
    }

    #[test]
    fn lone_root_is_zero_row() {
        let (g, _) = build_propagation_graph(&article(), &[], 600);
        let x = extract_node_features(&g, &SentimentLexicon::default_lexicon());
        assert_eq!(x, Matrix::zeros(1, 12));
        assert_eq!(extract_graph_features(&g), vec![0.0; 11]);
    }

    #[test]
    fn field_copy_and_successor_mean() {
        let mut t0 = tw("t0", "A", 1000, None);
        t0.verified = true;
        t0.friends = 5;
        t0.followers = 7;
        t0.account_created = 1000 - 2 * 86_400;
        let tweets = [t0, tw("r1", "B", 1010, Some("t0")), tw("r2", "C", 1030, Some("t0"))];
        // window 0 forces both retweets onto t0
        let (g, _) = build_propagation_graph(&article(), &tweets, 0);
        let x = extract_node_features(&g, &SentimentLexicon::default_lexicon());
        assert_eq!(&x.row(1)[..3], &[1.0, 5.0, 7.0]);
        assert_eq!(x.get(1, 8), 2.0);
        assert_eq!(x.get(1, 11), 20.0);
        assert_eq!(x.get(1, 10), 0.0);
        assert_eq!(x.get(3, 9), 30.0);
        assert_eq!(x.get(3, 10), 30.0);
        assert_eq!(x.row(0), &[0.0; 12]);
    }

    #[test]
    fn graph_features_hand_computed() {
        let tweets = [tw("t0", "A", 1000, None), tw("r1", "B", 1010, Some("t0")), tw("r2", "C", 1020, Some("t0"))];
        let (g, _) = build_propagation_graph(&article(), &tweets, 600);
        let f = extract_graph_features(&g);
        assert_eq!(f[0], 3.0);
        assert_eq!(f[1], 1.0);
        assert_eq!(f[2], 2.0);
        assert_eq!(f[3], 2.0 / 3.0);
        assert_eq!(f[4], 3.0);
        assert_eq!(f[5], 20.0);
        assert_eq!(f[8], 1.0);
        assert_eq!(f[9], 3.0);
        assert_eq!(f[10], 15.0);
    }

    #[test]
    fn single_tweet_and_late_posts() {
        let (g, _) = build_propagation_graph(&article(), &[tw("t0", "A", 50, None)], 600);
        assert_eq!(extract_graph_features(&g)[5], 0.0);
        let tweets = [tw("t0", "A", 0, None), tw("t1", "B", 4000, None), tw("t2", "A", 40_000, None)];
        let (g, _) = build_propagation_graph(&article(), &tweets, 600);
        let f = extract_graph_features(&g);
        assert_eq!(f[8], 1.0 / 3.0);
        assert_eq!(f[9], 2.0);
        assert_eq!(f[4], 2.0);
    }

    #[test]
    fn averages_count_each_user_once() {
        let mut a1 = tw("t0", "A", 0, None);
        a1.followers = 10;
        let mut a2 = tw("t1", "A", 5, None);
        a2.followers = 10;
        let mut b = tw("t2", "B", 9, None);
        b.followers = 40;
        let (g, _) = build_propagation_graph(&article(), &[a1, a2, b], 600);
        assert_eq!(extract_graph_features(&g)[6], 25.0);
    }

    proptest! {
        #[test]
        fn identities_and_order_invariance(
            n_roots in 1usize..4,
            rts in prop::collection::vec((0usize..4, 0i64..5000, 0usize..5), 0..20),
            seed in any::<u64>(),
        ) {
            let mut tweets: Vec<TweetRecord> = (0..n_roots)
                .map(|i| tw(&format!("t{i}"), &format!("u{i}"), 10 * i as i64, None))
                .collect();
            for (k, (root, dt, author)) in rts.into_iter().enumerate() {
                let root = root % n_roots;
                let src = format!("t{root}");
                tweets.push(tw(&format!("r{k}"), &format!("u{author}"), 10 * root as i64 + dt, Some(&src)));
            }
            let (g, _) = build_propagation_graph(&article(), &tweets, 600);
            let f = extract_graph_features(&g);
            let retweets = g.nodes.iter().filter(|n| n.kind == NodeKind::Retweet).count();
            prop_assert_eq!(f[0] - f[1], retweets as f64);
            prop_assert!((0.0..=1.0).contains(&f[3]));
            prop_assert!(f[4] <= f[0]);

            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = tweets.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let (g2, _) = build_propagation_graph(&article(), &shuffled, 600);
            prop_assert_eq!(extract_graph_features(&g2), f);
            let lex = SentimentLexicon::default_lexicon();
            let x = extract_node_features(&g, &lex);
            prop_assert_eq!(extract_node_features(&g2, &lex), x.clone());
            for r in 1..x.rows() {
                prop_assert!(x.get(r, 9) >= 0.0 && x.get(r, 10) >= 0.0 && x.get(r, 11) >= 0.0);
            }
        }
    }
}
