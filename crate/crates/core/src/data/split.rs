use super::DataError;
use crate::rng::seeded;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Sample indices of the train/test split and of the cross-validation folds
/// over the train part.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub folds: Vec<Fold>,
}

fn group(strata: &[&str]) -> BTreeMap<String, Vec<usize>> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, s) in strata.iter().enumerate() {
        groups.entry(s.to_string()).or_default().push(i);
    }
    groups
}

/// Splits positions `0..strata.len()` so each stratum sends
/// `round(n · test_fraction)` members to the test side. Both halves are
/// returned sorted.
pub fn stratified_split(
    strata: &[&str],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(DataError::Invalid(format!("test fraction {test_fraction} not in [0, 1)")));
    }
    let mut rng = seeded(seed, "stratified-split");
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (_, mut members) in group(strata) {
        members.shuffle(&mut rng);
        let n_test = (members.len() as f64 * test_fraction).round() as usize;
        let n_test = n_test.min(members.len().saturating_sub(1));
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// `k` folds over positions `0..strata.len()`. Each stratum is shuffled and
/// dealt round-robin, continuing the deal across strata so fold sizes differ
/// by at most one.
pub fn make_folds(strata: &[&str], k: usize, seed: u64) -> Result<Vec<Fold>, DataError> {
    if k < 2 {
        return Err(DataError::Invalid(format!("need at least 2 folds, got {k}")));
    }
    let mut rng = seeded(seed, "folds");
    let mut val: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut next = 0usize;
    for (station, mut members) in group(strata) {
        if members.len() < k {
            return Err(DataError::TooFewSamples {
                station,
                have: members.len(),
                need: k,
            });
        }
        members.shuffle(&mut rng);
        for m in members {
            val[next % k].push(m);
            next += 1;
        }
    }
    Ok(val
        .into_iter()
        .map(|mut v| {
            v.sort_unstable();
            let train = (0..strata.len()).filter(|i| v.binary_search(i).is_err()).collect();
            Fold { train, val: v }
        })
        .collect())
}
