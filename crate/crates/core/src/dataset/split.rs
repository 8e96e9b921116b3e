use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Binarized, DatasetError, Inventory, Label};
use crate::rng::child_rng;

pub const TRAIN_SAMPLES_PER_CLASS: usize = 10_000;

/// A labeled user with at least one recording.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledUser {
    pub user_id: String,
    pub label: Label,
    /// Most recent first.
    pub recording_ids: Vec<String>,
}

/// Users of class A or B that have recordings, sorted by user id.
pub fn labeled_users(labels: &BTreeMap<String, Binarized>, inventory: &Inventory) -> Vec<LabeledUser> {
    labels
        .iter()
        .filter_map(|(user, b)| {
            let label = b.label()?;
            let recs = inventory.recordings(user);
            (!recs.is_empty()).then(|| LabeledUser {
                user_id: user.clone(),
                label,
                recording_ids: recs.to_vec(),
            })
        })
        .collect()
}

/// Test and validation users drawn per class in each fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub test_per_class: usize,
    pub val_per_class: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self {
            test_per_class: 10,
            val_per_class: 10,
        }
    }
}

/// One Monte Carlo fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub attribute: String,
    pub fold: usize,
    pub fold_seed: u64,
    pub test: Vec<LabeledUser>,
    pub val: Vec<LabeledUser>,
    pub train: Vec<LabeledUser>,
}

impl SplitPlan {
    fn recordings_of(users: &[LabeledUser], label: Label) -> impl Iterator<Item = &str> {
        users
            .iter()
            .filter(move |u| u.label == label)
            .flat_map(|u| u.recording_ids.iter().map(String::as_str))
    }

    pub fn train_recordings(&self, label: Label) -> Vec<&str> {
        Self::recordings_of(&self.train, label).collect()
    }

    pub fn test_sequence_count(&self) -> usize {
        self.test.iter().map(|u| u.recording_ids.len()).sum()
    }
}

/// Samples test then validation users per class without replacement; all
/// remaining users train.
pub fn make_split(
    attribute: &str,
    users: &[LabeledUser],
    fold: usize,
    fold_seed: u64,
    sizes: SplitSizes,
) -> Result<SplitPlan, DatasetError> {
    let need = sizes.test_per_class + sizes.val_per_class;
    let mut plan = SplitPlan {
        attribute: attribute.to_string(),
        fold,
        fold_seed,
        test: Vec::new(),
        val: Vec::new(),
        train: Vec::new(),
    };
    for label in Label::BOTH {
        let mut pool: Vec<&LabeledUser> = users.iter().filter(|u| u.label == label).collect();
        if pool.len() < need {
            return Err(DatasetError::InsufficientUsers {
                class: label,
                have: pool.len(),
                need,
            });
        }
        pool.sort_by(|a, b| a.user_id.cmp(&b.user_id));
        pool.shuffle(&mut child_rng(fold_seed, &format!("split-{label}")));
        let (test, rest) = pool.split_at(sizes.test_per_class);
        let (val, train) = rest.split_at(sizes.val_per_class);
        plan.test.extend(test.iter().map(|u| (*u).clone()));
        plan.val.extend(val.iter().map(|u| (*u).clone()));
        let mut train: Vec<_> = train.iter().map(|u| (*u).clone()).collect();
        train.sort_by(|a, b| a.user_id.cmp(&b.user_id));
        plan.train.extend(train);
    }
    Ok(plan)
}

/// `k` independent folds seeded `base_seed + i`.
pub fn monte_carlo_folds(
    attribute: &str,
    users: &[LabeledUser],
    base_seed: u64,
    k: usize,
    sizes: SplitSizes,
) -> Result<Vec<SplitPlan>, DatasetError> {
    (0..k)
        .map(|i| make_split(attribute, users, i, base_seed.wrapping_add(i as u64), sizes))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub recording_id: String,
    pub label: Label,
    pub fold: usize,
}

/// Draws `n_per_class` training recordings per class uniformly with
/// replacement, then shuffles the combined list.
pub fn resample_training(plan: &SplitPlan, n_per_class: usize, seed: u64) -> Result<Vec<TrainingSample>, DatasetError> {
    let mut out = Vec::with_capacity(2 * n_per_class);
    if n_per_class == 0 {
        return Ok(out);
    }
    for label in Label::BOTH {
        let pool = plan.train_recordings(label);
        if pool.is_empty() {
            return Err(DatasetError::EmptyClass(label));
        }
        let mut rng = child_rng(seed, &format!("resample-{label}"));
        out.extend((0..n_per_class).map(|_| TrainingSample {
            recording_id: pool[rng.gen_range(0..pool.len())].to_string(),
            label,
            fold: plan.fold,
        }));
    }
    out.shuffle(&mut child_rng(seed, "resample-shuffle"));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn roster(a: usize, b: usize, recs: usize) -> Vec<LabeledUser> {
        (0..a + b)
            .map(|i| LabeledUser {
                user_id: format!("user{i:04}"),
                label: if i < a { Label::A } else { Label::B },
                recording_ids: (0..recs).map(|r| format!("u{i}-r{r}")).collect(),
            })
            .collect()
    }

    #[test]
    fn split_is_balanced_and_disjoint() {
        let users = roster(150, 161, 3);
        let plan = make_split("X", &users, 0, 42, SplitSizes::default()).unwrap();
        assert_eq!(plan.test.len(), 20);
        assert_eq!(plan.val.len(), 20);
        assert_eq!(plan.train.len(), 271);
        for set in [&plan.test, &plan.val] {
            assert_eq!(set.iter().filter(|u| u.label == Label::A).count(), 10);
        }
        let ids = |s: &[LabeledUser]| s.iter().map(|u| u.user_id.clone()).collect::<BTreeSet<_>>();
        let (t, v, tr) = (ids(&plan.test), ids(&plan.val), ids(&plan.train));
        assert!(t.is_disjoint(&v) && t.is_disjoint(&tr) && v.is_disjoint(&tr));
        assert_eq!(make_split("X", &users, 0, 42, SplitSizes::default()).unwrap(), plan);
        assert_ne!(make_split("X", &users, 0, 43, SplitSizes::default()).unwrap().test, plan.test);
    }

    #[test]
    fn boundary_and_insufficient() {
        let plan = make_split("X", &roster(20, 20, 1), 0, 1, SplitSizes::default()).unwrap();
        assert!(plan.train.is_empty());
        match make_split("X", &roster(20, 19, 1), 0, 1, SplitSizes::default()) {
            Err(DatasetError::InsufficientUsers { class: Label::B, have: 19, need: 20 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn input_order_does_not_matter() {
        let users = roster(30, 30, 1);
        let mut rev = users.clone();
        rev.reverse();
        assert_eq!(
            make_split("X", &users, 0, 9, SplitSizes::default()).unwrap(),
            make_split("X", &rev, 0, 9, SplitSizes::default()).unwrap()
        );
    }

    #[test]
    fn resampling_counts() {
        let users = roster(25, 21, 2);
        let plan = make_split("X", &users, 0, 5, SplitSizes::default()).unwrap();
        let s = resample_training(&plan, 10_000, 5).unwrap();
        assert_eq!(s.len(), 20_000);
        assert_eq!(s.iter().filter(|x| x.label == Label::A).count(), 10_000);
        // Class B has one training user with two recordings.
        let b: BTreeSet<_> = s.iter().filter(|x| x.label == Label::B).map(|x| x.recording_id.as_str()).collect();
        assert_eq!(b.len(), 2);
        assert!(resample_training(&plan, 0, 5).unwrap().is_empty());
        assert_eq!(resample_training(&plan, 50, 5).unwrap(), resample_training(&plan, 50, 5).unwrap());
    }

    #[test]
    fn single_recording_class_repeats() {
        let users = roster(21, 21, 1);
        let plan = make_split("X", &users, 0, 0, SplitSizes::default()).unwrap();
        let s = resample_training(&plan, 10_000, 1).unwrap();
        let only = &plan.train[1].recording_ids[0];
        assert!(s.iter().filter(|x| x.label == Label::B).all(|x| &x.recording_id == only));
        let empty = make_split("X", &roster(20, 20, 1), 0, 0, SplitSizes::default()).unwrap();
        assert!(matches!(resample_training(&empty, 1, 0), Err(DatasetError::EmptyClass(Label::A))));
    }

    #[test]
    fn folds_seeded_by_index() {
        let users = roster(40, 40, 1);
        let folds = monte_carlo_folds("X", &users, 100, 3, SplitSizes::default()).unwrap();
        assert_eq!(folds.len(), 3);
        assert_eq!(folds.iter().map(|f| f.fold_seed).collect::<Vec<_>>(), [100, 101, 102]);
        assert_eq!(folds[1], make_split("X", &users, 1, 101, SplitSizes::default()).unwrap());
        assert_eq!(folds.iter().map(|f| f.test.len()).sum::<usize>(), 60);
    }
}
