//! Experiment drivers: classification metrics, acceptance rate, the
//! confidence sweep, the adversary matrix and the scalability sweep.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::autoencoder::FeatureVector;
use crate::data::{LabeledDataset, UserSplit};
use crate::error::{Error, Result};
use crate::filter::{argmin_class, guard_decide, Action, FilterRegistry, GuardConfig};
use crate::trainer::{train_user, TrainedUserModel, TrainingConfig};
use crate::wire::ParamsDocument;

/// Registry id of the user owning class `k`.
pub fn user_id_for_class(k: usize) -> String {
    format!("u{k}")
}

/// Trains one model per class, in parallel; empty classes are an error.
pub fn train_users(split: &UserSplit, config: &TrainingConfig) -> Result<Vec<TrainedUserModel>> {
    if let Some(k) = split.empty_users().first() {
        return Err(Error::EmptyDataset(format!(
            "class {k} has no training data"
        )));
    }
    split
        .per_user
        .par_iter()
        .enumerate()
        .map(|(k, features)| train_user(&user_id_for_class(k), features, config))
        .collect()
}

pub fn build_registry(
    models: impl IntoIterator<Item = TrainedUserModel>,
) -> Result<FilterRegistry> {
    let mut registry = FilterRegistry::new();
    for m in models {
        registry.register_user(m)?;
    }
    Ok(registry)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub overall_accuracy: f64,
    pub per_class_accuracy: BTreeMap<usize, f64>,
    /// `confusion[truth][predicted]`
    pub confusion: Vec<Vec<usize>>,
}

impl MetricsReport {
    pub fn from_predictions(
        truth: &[usize],
        predicted: &[usize],
        n_classes: usize,
    ) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::contract("truth and prediction lengths differ"));
        }
        if truth.is_empty() {
            return Err(Error::EmptyDataset("no predictions to score".into()));
        }
        let mut confusion = vec![vec![0usize; n_classes]; n_classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= n_classes || p >= n_classes {
                return Err(Error::contract(format!(
                    "label {} outside 0..{n_classes}",
                    t.max(p)
                )));
            }
            confusion[t][p] += 1;
        }
        let trace: usize = (0..n_classes).map(|k| confusion[k][k]).sum();
        let per_class_accuracy = confusion
            .iter()
            .enumerate()
            .filter_map(|(k, row)| {
                let total: usize = row.iter().sum();
                (total > 0).then(|| (k, row[k] as f64 / total as f64))
            })
            .collect();
        Ok(MetricsReport {
            overall_accuracy: trace as f64 / truth.len() as f64,
            per_class_accuracy,
            confusion,
        })
    }
}

/// Argmin labels for every feature, in order. Probes are scored in parallel.
pub fn predict_indices(
    registry: &FilterRegistry,
    features: &[FeatureVector],
) -> Result<Vec<usize>> {
    features
        .par_iter()
        .map(|x| registry.classify_index(x))
        .collect()
}

/// Argmin classification accuracy; label `k` is registry entry `k`.
pub fn eval_classification(
    registry: &FilterRegistry,
    test: &LabeledDataset,
) -> Result<MetricsReport> {
    let n = registry.len();
    if let Some(&bad) = test.labels.iter().find(|&&l| l >= n) {
        return Err(Error::contract(format!(
            "test label {bad} has no registered model ({n} registered)"
        )));
    }
    let predicted = predict_indices(registry, &test.features)?;
    MetricsReport::from_predictions(&test.labels, &predicted, n)
}

/// Fraction of outliers that are shared when uploaded by a user owning no class.
pub fn eval_acceptance(
    registry: &FilterRegistry,
    guard: &GuardConfig,
    outliers: &[FeatureVector],
) -> Result<f64> {
    if outliers.is_empty() {
        return Err(Error::EmptyDataset("no outlier features".into()));
    }
    let shared = outliers
        .par_iter()
        .map(|x| {
            registry
                .filter_image(guard, None, x)
                .map(|d| d.action == Action::Share)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(shared.iter().filter(|s| **s).count() as f64 / outliers.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub blocking_accuracy: f64,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaSweep {
    pub points: Vec<SweepPoint>,
    /// Guard-free argmin accuracy on the sensitive probes.
    pub argmin_accuracy: f64,
}

impl AlphaSweep {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "alpha,block_acc,accept_rate")?;
        for p in &self.points {
            writeln!(
                out,
                "{},{},{}",
                p.alpha, p.blocking_accuracy, p.acceptance_rate
            )?;
        }
        Ok(())
    }
}

/// `steps` evenly spaced values from `lo` to `hi` inclusive.
pub fn alpha_grid(lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>> {
    if steps < 2 {
        return Err(Error::contract("an alpha sweep needs at least 2 steps"));
    }
    GuardConfig::new(lo)?;
    GuardConfig::new(hi)?;
    if lo > hi {
        return Err(Error::contract("alpha range is reversed"));
    }
    Ok((0..steps)
        .map(|i| {
            if i + 1 == steps {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (steps - 1) as f64
            }
        })
        .collect())
}

/// The registered user that uploads a sensitive probe of class `k` in the
/// sweep: the next class's owner, or nobody when only one class exists.
pub fn sweep_uploader(registry: &FilterRegistry, k: usize) -> Option<String> {
    let n = registry.len();
    (n >= 2).then(|| registry.entries()[(k + 1) % n].owner().to_string())
}

/// For every alpha: the fraction of sensitive probes (uploaded by another
/// user) that are blocked and attributed to their true class, and the
/// fraction of outliers shared.
pub fn run_alpha_sweep(
    registry: &FilterRegistry,
    alpha_range: (f64, f64),
    sensitive: &LabeledDataset,
    outliers: &[FeatureVector],
    steps: usize,
) -> Result<AlphaSweep> {
    let alphas = alpha_grid(alpha_range.0, alpha_range.1, steps)?;
    if sensitive.is_empty() || outliers.is_empty() {
        return Err(Error::EmptyDataset(
            "alpha sweep needs sensitive and outlier probes".into(),
        ));
    }
    let n = registry.len();
    if let Some(&bad) = sensitive.labels.iter().find(|&&l| l >= n) {
        return Err(Error::contract(format!(
            "sensitive label {bad} has no registered model"
        )));
    }

    // (argmin index, min dissimilarity) per probe; the Guard is re-applied per alpha.
    let best = |x: &FeatureVector| -> Result<(usize, f64)> {
        let scores = registry.score_all(x)?;
        let b = argmin_class(&scores)?;
        Ok((b.index, b.dissimilarity))
    };
    let sensitive_best = sensitive
        .features
        .par_iter()
        .map(best)
        .collect::<Result<Vec<_>>>()?;
    let outlier_best = outliers.par_iter().map(best).collect::<Result<Vec<_>>>()?;

    let entries = registry.entries();
    let correct = sensitive_best
        .iter()
        .zip(&sensitive.labels)
        .filter(|((i, _), &l)| *i == l)
        .count();
    let uploaders: Vec<Option<String>> = (0..n).map(|k| sweep_uploader(registry, k)).collect();

    let points = alphas
        .into_iter()
        .map(|alpha| {
            let guard = GuardConfig::new(alpha)?;
            let blocked = sensitive_best
                .iter()
                .zip(&sensitive.labels)
                .filter(|((i, d), &l)| {
                    let e = &entries[*i];
                    let owns = uploaders[l].as_deref() == Some(e.owner());
                    *i == l && guard_decide(e.profile(), *d, &guard, owns).0 == Action::Block
                })
                .count();
            let shared = outlier_best
                .iter()
                .filter(|(i, d)| {
                    guard_decide(entries[*i].profile(), *d, &guard, false).0 == Action::Share
                })
                .count();
            Ok(SweepPoint {
                alpha,
                blocking_accuracy: blocked as f64 / sensitive.len() as f64,
                acceptance_rate: shared as f64 / outliers.len() as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(AlphaSweep {
        points,
        argmin_accuracy: correct as f64 / sensitive.len() as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdversaryCell {
    pub adversary: usize,
    pub victim: usize,
    pub block_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdversaryMatrix {
    pub n_classes: usize,
    /// Row-major: `cells[adversary * n + victim]`.
    pub cells: Vec<AdversaryCell>,
}

impl AdversaryMatrix {
    pub fn get(&self, adversary: usize, victim: usize) -> &AdversaryCell {
        &self.cells[adversary * self.n_classes + victim]
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "adversary,victim,block_acc")?;
        for c in &self.cells {
            writeln!(out, "{},{},{}", c.adversary, c.victim, c.block_accuracy)?;
        }
        Ok(())
    }
}

fn block_rate(
    registry: &FilterRegistry,
    guard: &GuardConfig,
    uploader: &str,
    probes: &[FeatureVector],
) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::EmptyDataset("no probes to upload".into()));
    }
    let blocked = probes
        .par_iter()
        .map(|x| {
            registry
                .filter_image(guard, Some(uploader), x)
                .map(|d| d.action == Action::Block)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(blocked.iter().filter(|b| **b).count() as f64 / probes.len() as f64)
}

/// Every user in turn poisons their own slot with a model trained on their
/// data plus a victim's, then uploads the victim's test images.
///
/// Diagonal cells are the honest baseline: each user uploads their own test
/// images to the honest registry.
pub fn run_adversary_matrix(
    train: &UserSplit,
    test: &UserSplit,
    config: &TrainingConfig,
    guard: &GuardConfig,
) -> Result<AdversaryMatrix> {
    let n = train.per_user.len();
    if n < 2 {
        return Err(Error::contract(
            "the adversary matrix needs at least 2 classes",
        ));
    }
    if test.per_user.len() != n {
        return Err(Error::contract(
            "train and test splits have different class counts",
        ));
    }
    let honest = train_users(train, config)?;
    let honest_registry = build_registry(honest.iter().cloned())?;

    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (0..n).map(move |v| (a, v))).collect();
    let cells = pairs
        .par_iter()
        .map(|&(a, v)| {
            let uploader = user_id_for_class(a);
            let block_accuracy = if a == v {
                block_rate(&honest_registry, guard, &uploader, &test.per_user[v])?
            } else {
                let mut poisoned_data = train.per_user[a].clone();
                poisoned_data.extend_from_slice(&train.per_user[v]);
                let poisoned = train_user(&uploader, &poisoned_data, config)?;
                let registry = build_registry(honest.iter().enumerate().map(|(k, m)| {
                    if k == a {
                        poisoned.clone()
                    } else {
                        m.clone()
                    }
                }))?;
                block_rate(&registry, guard, &uploader, &test.per_user[v])?
            };
            Ok(AdversaryCell {
                adversary: a,
                victim: v,
                block_accuracy,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AdversaryMatrix {
        n_classes: n,
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalePoint {
    pub n_classes: usize,
    pub class: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalabilityReport {
    pub points: Vec<ScalePoint>,
    /// Whether every earlier entry serialized identically after each growth step.
    pub prior_entries_unchanged: bool,
}

impl ScalabilityReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n_classes,class,accuracy")?;
        for p in &self.points {
            writeln!(out, "{},{},{}", p.n_classes, p.class, p.accuracy)?;
        }
        Ok(())
    }

    /// Accuracies recorded at registry size `n`, by class.
    pub fn at(&self, n: usize) -> Vec<f64> {
        self.points
            .iter()
            .filter(|p| p.n_classes == n)
            .map(|p| p.accuracy)
            .collect()
    }
}

fn entry_bytes(registry: &FilterRegistry) -> Result<Vec<Vec<u8>>> {
    registry
        .entries()
        .iter()
        .map(|e| ParamsDocument::from_model(&e.model).to_bytes())
        .collect()
}

/// Grows the registry one user at a time (never retraining earlier users)
/// and records per-class argmin accuracy at each size in `class_counts`.
pub fn run_scalability_sweep(
    train: &UserSplit,
    test: &LabeledDataset,
    class_counts: &[usize],
    config: &TrainingConfig,
) -> Result<ScalabilityReport> {
    if class_counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::contract("class counts must be strictly ascending"));
    }
    let max = class_counts.last().copied().unwrap_or(0);
    if max > train.per_user.len() {
        return Err(Error::contract(format!(
            "asked for {max} classes but only {} are available",
            train.per_user.len()
        )));
    }
    let subset = UserSplit {
        per_user: train.per_user[..max].to_vec(),
    };
    let models = train_users(&subset, config)?;

    let mut registry = FilterRegistry::new();
    let mut snapshots: Vec<Vec<u8>> = Vec::new();
    let mut unchanged = true;
    let mut points = Vec::new();
    for (k, model) in models.into_iter().enumerate() {
        registry.register_user(model)?;
        let bytes = entry_bytes(&registry)?;
        unchanged &= bytes[..snapshots.len()] == snapshots[..];
        snapshots.push(bytes[k].clone());

        let size = k + 1;
        if !class_counts.contains(&size) {
            continue;
        }
        let (features, labels): (Vec<FeatureVector>, Vec<usize>) = test
            .features
            .iter()
            .zip(&test.labels)
            .filter(|(_, &l)| l < size)
            .map(|(f, &l)| (f.clone(), l))
            .unzip();
        let predicted = predict_indices(&registry, &features)?;
        let report = MetricsReport::from_predictions(&labels, &predicted, size)?;
        points.extend((0..size).map(|class| {
            ScalePoint {
                n_classes: size,
                class,
                accuracy: report
                    .per_class_accuracy
                    .get(&class)
                    .copied()
                    .unwrap_or(0.0),
            }
        }));
    }
    Ok(ScalabilityReport {
        points,
        prior_entries_unchanged: unchanged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::AutoencoderParams;
    use crate::trainer::PrivacyProfile;

    #[test]
    fn metrics_identities() {
        let r = MetricsReport::from_predictions(&[0, 1, 2], &[0, 1, 1], 3).unwrap();
        assert!((r.overall_accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.per_class_accuracy[&0], 1.0);
        assert_eq!(r.per_class_accuracy[&1], 1.0);
        assert_eq!(r.per_class_accuracy[&2], 0.0);
        assert_eq!(r.confusion[2][1], 1);
    }

    #[test]
    fn single_class_registry_is_always_right() {
        let mut reg = FilterRegistry::new();
        reg.register_user(TrainedUserModel {
            user_id: "u0".into(),
            params: AutoencoderParams::zeros(3, 1).unwrap(),
            profile: PrivacyProfile::new(0.1, 0.1).unwrap(),
            training_size: 1,
        })
        .unwrap();
        let f = |v| FeatureVector::new(vec![v; 3]).unwrap();
        let test = LabeledDataset::new(vec![f(0.0), f(0.3), f(1.0)], vec![0, 0, 0]).unwrap();
        let r = eval_classification(&reg, &test).unwrap();
        assert_eq!(r.per_class_accuracy[&0], 1.0);

        let bad = LabeledDataset::new(vec![f(0.0)], vec![1]).unwrap();
        assert!(eval_classification(&reg, &bad).is_err());
        assert!(eval_acceptance(&reg, &GuardConfig::default(), &[]).is_err());
    }

    #[test]
    fn acceptance_counts_shares() {
        // one model reconstructing [0.5; 2]; probes at distance 0 are blocked
        // (inside [0, 0.2]), probes at [1; 2] (distance 0.5) are shared.
        let mut reg = FilterRegistry::new();
        reg.register_user(TrainedUserModel {
            user_id: "u0".into(),
            params: AutoencoderParams::zeros(2, 1).unwrap(),
            profile: PrivacyProfile::new(0.1, 0.05).unwrap(),
            training_size: 1,
        })
        .unwrap();
        let f = |v| FeatureVector::new(vec![v; 2]).unwrap();
        let mut probes = vec![f(1.0); 8];
        probes.extend([f(0.5), f(0.5)]);
        let rate = eval_acceptance(&reg, &GuardConfig::default(), &probes).unwrap();
        assert!((rate - 0.8).abs() < 1e-15);
    }

    #[test]
    fn alpha_grid_endpoints() {
        let g = alpha_grid(1.0, 2.0, 11).unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], 1.0);
        assert_eq!(g[10], 2.0);
        assert!((g[5] - 1.5).abs() < 1e-15);
        assert!(alpha_grid(1.0, 2.0, 1).is_err());
        assert!(alpha_grid(0.5, 2.0, 3).is_err());
    }

    #[test]
    fn csv_headers() {
        let sweep = AlphaSweep {
            points: vec![SweepPoint {
                alpha: 1.0,
                blocking_accuracy: 0.5,
                acceptance_rate: 1.0,
            }],
            argmin_accuracy: 1.0,
        };
        let mut buf = Vec::new();
        sweep.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "alpha,block_acc,accept_rate\n1,0.5,1\n"
        );
    }
}
