use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::estimate::{estimate, predict_accuracy, EstimateOptions};
use super::model::{ChoiceObservation, ParameterVector, UtilitySpec};
use super::DcmError;

/// Unit that is kept together when assigning folds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// All observations of one individual land in the same fold.
    ByIndividual,
    ByObservation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub params: ParameterVector,
    pub converged: bool,
    pub n_groups: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub grouping: Grouping,
    pub folds: Vec<FoldResult>,
    /// Unweighted mean of the held-out fold accuracies.
    pub mean_accuracy: f64,
    /// Held-out hits over all folds divided by the number of observations.
    pub pooled_accuracy: f64,
}

/// Splits `n_groups` group indices into `k` folds after a seeded shuffle.
/// Fold sizes differ by at most one.
pub fn assign_folds<R: Rng + ?Sized>(n_groups: usize, k: usize, rng: &mut R) -> Result<Vec<Vec<usize>>, DcmError> {
    if k < 2 {
        return Err(DcmError::InvalidCv(format!("need at least 2 folds, got {k}")));
    }
    if n_groups < k {
        return Err(DcmError::InvalidCv(format!("{n_groups} groups cannot fill {k} folds")));
    }
    let mut order: Vec<usize> = (0..n_groups).collect();
    order.shuffle(rng);
    let base = n_groups / k;
    let extra = n_groups % k;
    let mut folds = Vec::with_capacity(k);
    let mut cursor = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(order[cursor..cursor + size].to_vec());
        cursor += size;
    }
    Ok(folds)
}

/// Group index of every observation, groups numbered by first appearance.
pub fn group_labels(observations: &[ChoiceObservation], grouping: Grouping) -> (Vec<usize>, usize) {
    match grouping {
        Grouping::ByObservation => ((0..observations.len()).collect(), observations.len()),
        Grouping::ByIndividual => {
            let mut ids: HashMap<&str, usize> = HashMap::new();
            let labels = observations
                .iter()
                .map(|o| {
                    let next = ids.len();
                    *ids.entry(o.individual_id.as_str()).or_insert(next)
                })
                .collect();
            (labels, ids.len())
        }
    }
}

pub fn k_fold_cv<R: Rng + ?Sized>(
    spec: &UtilitySpec,
    observations: &[ChoiceObservation],
    k: usize,
    grouping: Grouping,
    rng: &mut R,
    options: &EstimateOptions,
) -> Result<CvReport, DcmError> {
    let (labels, n_groups) = group_labels(observations, grouping);
    let folds = assign_folds(n_groups, k, rng)?;
    let mut fold_of_group = vec![0; n_groups];
    for (f, groups) in folds.iter().enumerate() {
        for &g in groups {
            fold_of_group[g] = f;
        }
    }

    let mut results = Vec::with_capacity(k);
    let mut pooled_hits = 0.0;
    for (f, groups) in folds.iter().enumerate() {
        let mut test = Vec::new();
        let mut train = Vec::new();
        for (o, &g) in observations.iter().zip(&labels) {
            if fold_of_group[g] == f {
                test.push(o.clone());
            } else {
                train.push(o.clone());
            }
        }
        if train.is_empty() || test.is_empty() {
            return Err(DcmError::InvalidCv(format!("fold {f} has an empty train or test split")));
        }
        let est = estimate(spec, &train, options)?;
        let model = est.model(spec);
        let test_accuracy = predict_accuracy(&model, &test)?;
        pooled_hits += test_accuracy * test.len() as f64;
        results.push(FoldResult {
            params: est.params,
            converged: est.report.converged,
            n_groups: groups.len(),
            n_train: train.len(),
            n_test: test.len(),
            train_accuracy: predict_accuracy(&model, &train)?,
            test_accuracy,
        });
    }

    let mean_accuracy = results.iter().map(|r| r.test_accuracy).sum::<f64>() / k as f64;
    Ok(CvReport {
        k,
        grouping,
        folds: results,
        mean_accuracy,
        pooled_accuracy: pooled_hits / observations.len() as f64,
    })
}
