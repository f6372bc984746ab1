use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Partitions `items` into parts with the given fractions, separately per
/// class, so every part keeps the global class ratio to within one sample.
/// `labels[i]` is the class of item `i`; parts come back sorted.
pub fn stratified_split(items: &[usize], labels: &[usize], fractions: &[f64], seed: u64) -> Result<Vec<Vec<usize>>> {
    if fractions.is_empty() || fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::Invalid(format!("split fractions {fractions:?}")));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!("split fractions sum to {total}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts = vec![Vec::new(); fractions.len()];
    let num_classes = items.iter().map(|&i| labels[i] + 1).max().unwrap_or(0);
    for c in 0..num_classes {
        let mut members: Vec<usize> = items.iter().copied().filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        let n = members.len() as f64;
        let mut cum = 0.0;
        let mut start = 0;
        for (k, f) in fractions.iter().enumerate() {
            cum += f;
            let end = if k + 1 == fractions.len() {
                members.len()
            } else {
                ((cum * n).round() as usize).min(members.len())
            };
            parts[k].extend_from_slice(&members[start..end.max(start)]);
            start = end.max(start);
        }
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok(parts)
}

/// `k` independent stratified `(train, val)` splits of `items`.
pub fn repeated_subsampling(
    items: &[usize],
    labels: &[usize],
    k: usize,
    val_frac: f64,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if !(val_frac > 0.0 && val_frac < 1.0) {
        return Err(Error::Invalid(format!("validation fraction {val_frac}")));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|_| {
            let mut parts = stratified_split(items, labels, &[1.0 - val_frac, val_frac], master.random())?;
            let val = parts.pop().expect("two parts");
            let train = parts.pop().expect("two parts");
            Ok((train, val))
        })
        .collect()
}

/// Appends minority-class items drawn with replacement until both classes
/// have equal counts.
pub fn random_oversample(items: &[usize], labels: &[usize], seed: u64) -> Vec<usize> {
    let by_class: [Vec<usize>; 2] = [
        items.iter().copied().filter(|&i| labels[i] == 0).collect(),
        items.iter().copied().filter(|&i| labels[i] == 1).collect(),
    ];
    let (minority, majority) = if by_class[0].len() < by_class[1].len() {
        (&by_class[0], &by_class[1])
    } else {
        (&by_class[1], &by_class[0])
    };
    let mut out = items.to_vec();
    if minority.is_empty() {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in minority.len()..majority.len() {
        out.push(minority[rng.random_range(0..minority.len())]);
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeighting {
    #[default]
    Equal,
    /// `n / (2 n_c)` per class.
    Balanced,
}

pub fn class_weights(mode: ClassWeighting, items: &[usize], labels: &[usize]) -> [f64; 2] {
    match mode {
        ClassWeighting::Equal => [1.0, 1.0],
        ClassWeighting::Balanced => {
            let mut counts = [0usize; 2];
            for &i in items {
                counts[labels[i]] += 1;
            }
            let n = items.len() as f64;
            counts.map(|c| if c == 0 { 1.0 } else { n / (2.0 * c as f64) })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ValProtocol {
    RepeatedSubsampling { k: usize, val_frac: f64 },
    Holdout { val_frac: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub test_frac: f64,
    pub val: ValProtocol,
    pub oversample_train: bool,
    pub class_weights: ClassWeighting,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self::politifact_like()
    }
}

impl SplitSpec {
    /// 80:20 train/test, ten random 90/10 train/validation repeats, random
    /// oversampling of the training part.
    pub fn politifact_like() -> Self {
        Self {
            test_frac: 0.2,
            val: ValProtocol::RepeatedSubsampling { k: 10, val_frac: 0.1 },
            oversample_train: true,
            class_weights: ClassWeighting::Equal,
        }
    }

    /// 85:15 train/test, then 82.35:17.65 train/validation.
    pub fn gossipcop_like() -> Self {
        Self {
            test_frac: 0.15,
            val: ValProtocol::Holdout { val_frac: 0.1765 },
            oversample_train: false,
            class_weights: ClassWeighting::Equal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |f: f64| f > 0.0 && f < 1.0;
        let val_ok = match self.val {
            ValProtocol::RepeatedSubsampling { k, val_frac } => k >= 1 && ok(val_frac),
            ValProtocol::Holdout { val_frac } => ok(val_frac),
        };
        if !ok(self.test_frac) || !val_ok {
            return Err(Error::Config(format!("invalid split spec {self:?}")));
        }
        Ok(())
    }
}

/// One evaluation run: training items (oversampled if requested),
/// validation items, and the shared test items.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Applies `spec` to items `0..labels.len()`.
pub fn plan_runs(labels: &[usize], spec: &SplitSpec, seed: u64) -> Result<Vec<RunSplit>> {
    spec.validate()?;
    let all: Vec<usize> = (0..labels.len()).collect();
    let mut parts = stratified_split(&all, labels, &[1.0 - spec.test_frac, spec.test_frac], seed)?;
    let test = parts.pop().expect("two parts");
    let pool = parts.pop().expect("two parts");
    let pairs = match spec.val {
        ValProtocol::RepeatedSubsampling { k, val_frac } => {
            repeated_subsampling(&pool, labels, k, val_frac, seed.wrapping_add(1))?
        }
        ValProtocol::Holdout { val_frac } => repeated_subsampling(&pool, labels, 1, val_frac, seed.wrapping_add(1))?,
    };
    Ok(pairs
        .into_iter()
        .enumerate()
        .map(|(r, (train, val))| {
            let train = if spec.oversample_train {
                random_oversample(&train, labels, seed.wrapping_add(100 + r as u64))
            } else {
                train
            };
            RunSplit {
                train,
                val,
                test: test.clone(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(fake: usize, real: usize) -> Vec<usize> {
        let mut v = vec![0; fake];
        v.extend(vec![1; real]);
        v
    }

    #[test]
    fn stratified_examples() {
        let y = labels(40, 60);
        let all: Vec<usize> = (0..100).collect();
        let parts = stratified_split(&all, &y, &[0.8, 0.2], 3).unwrap();
        let fakes = parts[1].iter().filter(|&&i| y[i] == 0).count();
        assert_eq!((fakes, parts[1].len() - fakes), (8, 12));
        assert_eq!(stratified_split(&all, &y, &[1.0], 3).unwrap()[0], all);
        assert_eq!(parts, stratified_split(&all, &y, &[0.8, 0.2], 3).unwrap());
        assert!(stratified_split(&all, &y, &[0.8, 0.3], 3).is_err());
    }

    #[test]
    fn subsampling_examples() {
        let y = labels(30, 70);
        let items: Vec<usize> = (0..100).collect();
        let runs = repeated_subsampling(&items, &y, 10, 0.1, 5).unwrap();
        assert_eq!(runs.len(), 10);
        for (t, v) in &runs {
            assert_eq!(v.len(), 10);
            let mut u: Vec<usize> = t.iter().chain(v).copied().collect();
            u.sort_unstable();
            assert_eq!(u, items);
        }
        assert_ne!(runs[0].1, runs[1].1);
    }

    #[test]
    fn oversample_examples() {
        let y = labels(10, 30);
        let items: Vec<usize> = (0..40).collect();
        let o = random_oversample(&items, &y, 1);
        assert_eq!(o.iter().filter(|&&i| y[i] == 0).count(), 30);
        assert_eq!(o.len(), 60);
        assert!(o.iter().all(|i| items.contains(i)));
        let bal = labels(5, 5);
        let items: Vec<usize> = (0..10).collect();
        assert_eq!(random_oversample(&items, &bal, 1), items);
    }

    #[test]
    fn weights_and_presets() {
        let y = labels(1, 3);
        let items: Vec<usize> = (0..4).collect();
        assert_eq!(class_weights(ClassWeighting::Equal, &items, &y), [1.0, 1.0]);
        assert_eq!(class_weights(ClassWeighting::Balanced, &items, &y), [2.0, 2.0 / 3.0]);
        SplitSpec::politifact_like().validate().unwrap();
        SplitSpec::gossipcop_like().validate().unwrap();
    }

    #[test]
    fn planned_runs_keep_test_and_val_untouched() {
        let y = labels(45, 105);
        let runs = plan_runs(&y, &SplitSpec::politifact_like(), 7).unwrap();
        assert_eq!(runs.len(), 10);
        for r in &runs {
            assert_eq!(r.test, runs[0].test);
            assert!(r.val.iter().all(|i| !r.train.contains(i) && !r.test.contains(i)));
            let fakes = r.train.iter().filter(|&&i| y[i] == 0).count();
            assert_eq!(fakes * 2, r.train.len());
        }
    }

    proptest! {
        #[test]
        fn stratified_parts_partition_and_keep_ratio(
            fake in 0usize..60, real in 0usize..60, f in 0.05f64..0.95, seed in any::<u64>()
        ) {
            let y = labels(fake, real);
            let all: Vec<usize> = (0..y.len()).collect();
            let parts = stratified_split(&all, &y, &[1.0 - f, f], seed).unwrap();
            let mut u: Vec<usize> = parts.concat();
            u.sort_unstable();
            prop_assert_eq!(&u, &all);
            let global = if y.is_empty() { 0.0 } else { fake as f64 / y.len() as f64 };
            for p in &parts {
                let pf = p.iter().filter(|&&i| y[i] == 0).count() as f64;
                prop_assert!((pf - global * p.len() as f64).abs() <= 1.0 + 1e-9);
            }
        }
    }
}
