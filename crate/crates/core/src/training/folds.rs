use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Study-to-fold assignment in which every patient's studies share a fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
}

/// Fold indices playing each role in one rotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldRoles {
    pub train: Vec<usize>,
    pub validation: usize,
    pub test: usize,
}

/// Rotation `n` of `k` folds: `{n, …, n+k−3} mod k` train, `n+k−2 mod k`
/// validates, the remaining fold tests. For `k = 5` that is training on
/// `{n, n+1, n+2}`, validating on `n+3` and testing on `n+4`.
pub fn fold_roles(n: usize, k: usize) -> Result<FoldRoles> {
    if k < 3 {
        return Err(Error::InvalidArgument(format!(
            "fold rotation needs at least 3 folds, got {k}"
        )));
    }
    if n >= k {
        return Err(Error::InvalidArgument(format!(
            "rotation {n} out of range for {k} folds"
        )));
    }
    Ok(FoldRoles {
        train: (0..k - 2).map(|i| (n + i) % k).collect(),
        validation: (n + k - 2) % k,
        test: (n + k - 1) % k,
    })
}

impl FoldPlan {
    pub fn fold_of(&self, study: &str) -> Option<usize> {
        self.assignment.get(study).copied()
    }

    /// Studies in `fold`, in id order.
    pub fn studies_in(&self, fold: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(s, _)| s.as_str())
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }

    pub fn roles(&self, n: usize) -> Result<FoldRoles> {
        fold_roles(n, self.k)
    }
}

/// Patient-disjoint `k`-fold split of `(study_id, patient_id)` pairs.
///
/// Patients are shuffled with `seed`, ordered by decreasing study count
/// (stable, so the shuffle breaks ties), and each is dealt to the fold that
/// currently holds the fewest studies, lowest index first. With one study
/// per patient this is plain round-robin.
pub fn make_folds(studies: &[(String, String)], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    let mut by_patient: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for (study, patient) in studies {
        if !seen.insert(study.as_str()) {
            return Err(Error::InvalidArgument(format!("duplicate study id `{study}`")));
        }
        by_patient.entry(patient).or_default().push(study);
    }
    if by_patient.len() < k {
        return Err(Error::InvalidArgument(format!(
            "{} distinct patients cannot fill {k} folds",
            by_patient.len()
        )));
    }
    let mut patients: Vec<(&str, Vec<&str>)> = by_patient.into_iter().collect();
    patients.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    patients.sort_by(|a, b| b.1.len().cmp(&a.1.len()));

    let mut sizes = vec![0usize; k];
    let mut assignment = BTreeMap::new();
    for (_, studies) in patients {
        let fold = (0..k).min_by_key(|&f| (sizes[f], f)).expect("k >= 2");
        sizes[fold] += studies.len();
        for s in studies {
            assignment.insert(s.to_string(), fold);
        }
    }
    Ok(FoldPlan { k, assignment })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(n: usize, per_patient: usize) -> Vec<(String, String)> {
        (0..n)
            .map(|i| (format!("s{i:03}"), format!("p{:03}", i / per_patient)))
            .collect()
    }

    #[test]
    fn roles_for_first_rotation() {
        let r = fold_roles(0, 5).unwrap();
        assert_eq!(r.train, [0, 1, 2]);
        assert_eq!((r.validation, r.test), (3, 4));
        let r = fold_roles(2, 5).unwrap();
        assert_eq!(r.train, [2, 3, 4]);
        assert_eq!((r.validation, r.test), (0, 1));
        assert!(fold_roles(5, 5).is_err());
    }

    #[test]
    fn roles_partition_all_folds() {
        for n in 0..5 {
            let r = fold_roles(n, 5).unwrap();
            let mut all: Vec<usize> = r.train.clone();
            all.push(r.validation);
            all.push(r.test);
            all.sort();
            assert_eq!(all, [0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn patients_stay_together() {
        let plan = make_folds(&pairs(10, 2), 5, 3).unwrap();
        for i in (0..10).step_by(2) {
            assert_eq!(
                plan.fold_of(&format!("s{i:03}")),
                plan.fold_of(&format!("s{:03}", i + 1))
            );
        }
        assert_eq!(plan.sizes(), [2, 2, 2, 2, 2]);
    }

    #[test]
    fn same_seed_same_plan() {
        let s = pairs(40, 3);
        assert_eq!(make_folds(&s, 5, 11).unwrap(), make_folds(&s, 5, 11).unwrap());
    }

    #[test]
    fn three_twenty_one_singletons() {
        let plan = make_folds(&pairs(321, 1), 5, 0).unwrap();
        assert_eq!(plan.sizes(), [65, 64, 64, 64, 64]);
    }

    #[test]
    fn too_few_patients() {
        assert!(make_folds(&pairs(8, 2), 5, 0).is_err());
    }

    #[test]
    fn duplicate_study_rejected() {
        let mut s = pairs(10, 1);
        s.push(("s000".into(), "p999".into()));
        assert!(make_folds(&s, 5, 0).is_err());
    }
}
