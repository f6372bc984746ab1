use serde::{Deserialize, Serialize};

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Truncation {
    FirstN { n: usize },
    LastN { n: usize },
    FirstLast { first: usize, last: usize },
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation::FirstLast {
            first: 256,
            last: 256,
        }
    }
}

impl Truncation {
    pub fn window(self) -> usize {
        match self {
            Truncation::FirstN { n } | Truncation::LastN { n } => n,
            Truncation::FirstLast { first, last } => first + last,
        }
    }
}

pub fn truncate<T: Clone>(tokens: &[T], strategy: Truncation) -> Vec<T> {
    let len = tokens.len();
    match strategy {
        Truncation::FirstN { n } => tokens[..n.min(len)].to_vec(),
        Truncation::LastN { n } => tokens[len - n.min(len)..].to_vec(),
        Truncation::FirstLast { first, last } => {
            if len <= first + last {
                tokens.to_vec()
            } else {
                let mut out = tokens[..first].to_vec();
                out.extend_from_slice(&tokens[len - last..]);
                out
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Hello, World!"), ["hello", "world"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("a1-b2"), ["a1", "b2"]);
    }

    #[test]
    fn truncation_windows() {
        let seq: Vec<usize> = (0..600).collect();
        let fl = truncate(&seq, Truncation::default());
        assert_eq!(fl.len(), 512);
        assert_eq!(&fl[..256], &seq[..256]);
        assert_eq!(&fl[256..], &seq[344..]);
        assert_eq!(truncate(&seq, Truncation::LastN { n: 512 }), &seq[88..]);
        assert_eq!(truncate(&seq, Truncation::FirstN { n: 512 }), &seq[..512]);
        let short: Vec<usize> = (0..100).collect();
        for s in [
            Truncation::default(),
            Truncation::FirstN { n: 512 },
            Truncation::LastN { n: 512 },
        ] {
            assert_eq!(truncate(&short, s), short);
        }
    }

    fn arb_strategy() -> impl Strategy<Value = Truncation> {
        prop_oneof![
            (1usize..50).prop_map(|n| Truncation::FirstN { n }),
            (1usize..50).prop_map(|n| Truncation::LastN { n }),
            (1usize..25, 1usize..25).prop_map(|(first, last)| Truncation::FirstLast { first, last }),
        ]
    }

    proptest! {
        #[test]
        fn truncate_shortens_and_is_idempotent(len in 0usize..120, s in arb_strategy()) {
            let seq: Vec<usize> = (0..len).collect();
            let once = truncate(&seq, s);
            prop_assert!(once.len() <= seq.len());
            prop_assert_eq!(truncate(&once, s), once);
        }

        #[test]
        fn tokenize_join_is_stable(text in "[a-zA-Z0-9 ,.!?'-]{0,80}") {
            let toks = tokenize(&text);
            prop_assert!(toks.iter().all(|t| !t.is_empty()));
            prop_assert_eq!(tokenize(&toks.join(" ")), toks);
        }
    }
}
