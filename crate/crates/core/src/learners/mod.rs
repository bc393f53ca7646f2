//! Deterministic, seedable binary-probability learners and the fixed
//! cross-fitting protocol that produces strictly out-of-sample predictions.

mod logistic;
mod stumps;

use serde::{Deserialize, Serialize};

pub use logistic::{fit_logistic, LogisticFit};
pub use stumps::{fit_stumps, Stump, StumpsFit};

use crate::error::{AuditError, Result};
use crate::folds::FoldPlan;
use crate::table::UnitTable;

fn default_l2() -> f64 {
    1.0
}
fn default_max_iterations() -> usize {
    100
}
fn default_tolerance() -> f64 {
    1e-8
}
fn default_rounds() -> usize {
    50
}
fn default_learning_rate() -> f64 {
    0.1
}
fn default_min_leaf() -> usize {
    5
}

/// Learner kind plus hyperparameters. Defaults must be declared up front in
/// the report, since they are part of the preregistered procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerKind {
    Logistic {
        #[serde(default = "default_l2")]
        l2_penalty: f64,
        #[serde(default = "default_max_iterations")]
        max_iterations: usize,
        #[serde(default = "default_tolerance")]
        tolerance: f64,
    },
    BoostedStumps {
        #[serde(default = "default_rounds")]
        rounds: usize,
        #[serde(default = "default_learning_rate")]
        learning_rate: f64,
        #[serde(default = "default_min_leaf")]
        min_leaf: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    #[serde(flatten)]
    pub kind: LearnerKind,
    #[serde(default)]
    pub train_seed: u64,
    /// Model id used in reports; synthesized from the kind when empty.
    #[serde(default)]
    pub label: String,
}

impl LearnerSpec {
    pub fn logistic() -> LearnerSpec {
        LearnerSpec {
            kind: LearnerKind::Logistic {
                l2_penalty: default_l2(),
                max_iterations: default_max_iterations(),
                tolerance: default_tolerance(),
            },
            train_seed: 0,
            label: String::new(),
        }
    }

    pub fn boosted_stumps() -> LearnerSpec {
        LearnerSpec {
            kind: LearnerKind::BoostedStumps {
                rounds: default_rounds(),
                learning_rate: default_learning_rate(),
                min_leaf: default_min_leaf(),
            },
            train_seed: 0,
            label: String::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            LearnerKind::Logistic {
                l2_penalty,
                tolerance,
                ..
            } => {
                if *l2_penalty < 0.0 {
                    return Err(AuditError::Config("l2_penalty must be >= 0".into()));
                }
                if *tolerance <= 0.0 {
                    return Err(AuditError::Config("tolerance must be > 0".into()));
                }
            }
            LearnerKind::BoostedStumps {
                rounds,
                learning_rate,
                min_leaf,
            } => {
                if *rounds < 1 {
                    return Err(AuditError::Config("rounds must be >= 1".into()));
                }
                if !(*learning_rate > 0.0 && *learning_rate <= 1.0) {
                    return Err(AuditError::Config(
                        "learning_rate must be in (0, 1]".into(),
                    ));
                }
                if *min_leaf < 1 {
                    return Err(AuditError::Config("min_leaf must be >= 1".into()));
                }
            }
        }
        Ok(())
    }

    pub fn model_id(&self) -> String {
        if !self.label.is_empty() {
            return self.label.clone();
        }
        match &self.kind {
            LearnerKind::Logistic { l2_penalty, .. } => format!("logistic(l2={l2_penalty})"),
            LearnerKind::BoostedStumps {
                rounds,
                learning_rate,
                ..
            } => format!("boosted_stumps(rounds={rounds},lr={learning_rate})"),
        }
    }
}

/// A fitted model. Predictions may touch 0/1; the scoring module clips them
/// into [eps, 1-eps] before any log enters the statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedModel {
    Logistic(LogisticFit),
    Stumps(StumpsFit),
    /// One-class training data: a constant at the clipped class rate.
    Constant { p: f64 },
}

impl FittedModel {
    pub fn predict(&self, features: &[f64]) -> f64 {
        match self {
            FittedModel::Logistic(m) => m.predict(features),
            FittedModel::Stumps(m) => m.predict(features),
            FittedModel::Constant { p } => *p,
        }
    }

    pub fn converged(&self) -> bool {
        match self {
            FittedModel::Logistic(m) => m.converged,
            _ => true,
        }
    }
}

/// Fit one learner on a training set.
///
/// Training with a single label class yields a constant model at the class
/// rate clipped by `crate::scoring::DEFAULT_EPSILON`.
pub fn fit(spec: &LearnerSpec, features: &[Vec<f64>], labels: &[u8]) -> Result<FittedModel> {
    if features.is_empty() {
        return Err(AuditError::Learner("empty training set".into()));
    }
    if features.len() != labels.len() {
        return Err(AuditError::Shape(format!(
            "{} feature rows vs {} labels",
            features.len(),
            labels.len()
        )));
    }
    spec.validate()?;
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == labels.len() {
        let eps = crate::scoring::DEFAULT_EPSILON;
        let rate = positives as f64 / labels.len() as f64;
        return Ok(FittedModel::Constant {
            p: rate.clamp(eps, 1.0 - eps),
        });
    }
    match &spec.kind {
        LearnerKind::Logistic {
            l2_penalty,
            max_iterations,
            tolerance,
        } => Ok(FittedModel::Logistic(fit_logistic(
            features,
            labels,
            *l2_penalty,
            *max_iterations,
            *tolerance,
        ))),
        LearnerKind::BoostedStumps {
            rounds,
            learning_rate,
            min_leaf,
        } => Ok(FittedModel::Stumps(fit_stumps(
            features,
            labels,
            *rounds,
            *learning_rate,
            *min_leaf,
        ))),
    }
}

/// Out-of-sample predictions under a fixed fold plan.
///
/// For each fold, a model trained on every unit outside the fold predicts
/// the units inside it. `baseline` supplies the design-implied probabilities
/// used verbatim when a training fold has fewer than two units of either
/// class, which keeps the statistic anchored at zero for degenerate folds.
pub fn cross_fit_predictions(
    units: &UnitTable,
    labels: &[u8],
    plan: &FoldPlan,
    spec: &LearnerSpec,
    baseline: &[f64],
) -> Result<Vec<f64>> {
    let n = units.n();
    if labels.len() != n {
        return Err(AuditError::Shape(format!(
            "{} labels for {} units",
            labels.len(),
            n
        )));
    }
    if plan.n() != n {
        return Err(AuditError::Shape(format!(
            "fold plan covers {} units, table has {}",
            plan.n(),
            n
        )));
    }
    if baseline.len() != n {
        return Err(AuditError::Shape("baseline length mismatch".into()));
    }
    let mut out = vec![f64::NAN; n];
    for fold in 0..plan.k {
        let mut train_rows = Vec::new();
        let mut train_labels = Vec::new();
        let mut test_idx = Vec::new();
        for i in 0..n {
            if plan.assignment[i] == fold {
                test_idx.push(i);
            } else {
                train_rows.push(units.feature_row(i).to_vec());
                train_labels.push(labels[i]);
            }
        }
        let positives = train_labels.iter().filter(|&&y| y == 1).count();
        let negatives = train_labels.len() - positives;
        if positives < 2 || negatives < 2 {
            // Degenerate fold: fall back to the design baseline.
            for &i in &test_idx {
                out[i] = baseline[i];
            }
            continue;
        }
        let model = fit(spec, &train_rows, &train_labels)?;
        for &i in &test_idx {
            out[i] = model.predict(units.feature_row(i));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::folds::{make_folds, Stratify};
    use crate::table::TableBuilder;

    fn table(features: Vec<Vec<f64>>) -> UnitTable {
        TableBuilder {
            ids: (0..features.len()).map(|i| format!("u{i}")).collect(),
            features,
            ..Default::default()
        }
        .build()
        .unwrap()
    }

    #[test]
    fn one_class_training_gives_clipped_constant() {
        let spec = LearnerSpec::logistic();
        let m = fit(&spec, &[vec![1.0], vec![2.0]], &[1, 1]).unwrap();
        match m {
            FittedModel::Constant { p } => assert_eq!(p, 1.0 - crate::scoring::DEFAULT_EPSILON),
            other => panic!("expected constant model, got {other:?}"),
        }
    }

    #[test]
    fn empty_training_set_errors() {
        let spec = LearnerSpec::logistic();
        assert!(fit(&spec, &[], &[]).is_err());
    }

    #[test]
    fn intercept_only_predicts_training_mean() {
        // d = 0 features: cross-fit predictions equal the training-fold label mean.
        let n = 6;
        let t = TableBuilder {
            ids: (0..n).map(|i| format!("u{i}")).collect(),
            features: vec![vec![]; n],
            ..Default::default()
        }
        .build()
        .unwrap();
        let labels = [1u8, 0, 1, 0, 1, 0];
        let plan = make_folds(&t, 2, 5, Stratify::None).unwrap();
        let spec = LearnerSpec::logistic();
        let preds = cross_fit_predictions(&t, &labels, &plan, &spec, &vec![0.5; n]).unwrap();
        for fold in 0..2 {
            let train_mean: f64 = (0..n)
                .filter(|&i| plan.assignment[i] != fold)
                .map(|i| labels[i] as f64)
                .sum::<f64>()
                / (0..n).filter(|&i| plan.assignment[i] != fold).count() as f64;
            for i in plan.fold_members(fold) {
                assert!(
                    (preds[i] - train_mean).abs() < 1e-9,
                    "fold {fold}: {} vs {train_mean}",
                    preds[i]
                );
            }
        }
    }

    #[test]
    fn leave_one_out_excludes_own_unit() {
        // K = n: each prediction comes from a model trained without the unit.
        let features: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let t = table(features);
        let labels = [0u8, 0, 1, 0, 1, 1];
        let plan = make_folds(&t, 6, 2, Stratify::None).unwrap();
        let spec = LearnerSpec::logistic();
        let baseline = vec![0.5; 6];
        let preds = cross_fit_predictions(&t, &labels, &plan, &spec, &baseline).unwrap();
        // Flipping a unit's own held-out label never moves its prediction.
        for i in 0..6 {
            let mut flipped = labels;
            flipped[i] = 1 - flipped[i];
            let preds2 = cross_fit_predictions(&t, &flipped, &plan, &spec, &baseline).unwrap();
            assert_eq!(preds[i].to_bits(), preds2[i].to_bits(), "unit {i}");
        }
    }

    #[test]
    fn training_labels_do_influence_predictions() {
        let features: Vec<Vec<f64>> = (0..8).map(|i| vec![(i % 4) as f64]).collect();
        let t = table(features);
        let labels = [0u8, 0, 1, 1, 0, 0, 1, 1];
        let plan = make_folds(&t, 2, 3, Stratify::None).unwrap();
        let spec = LearnerSpec::logistic();
        let baseline = vec![0.5; 8];
        let preds = cross_fit_predictions(&t, &labels, &plan, &spec, &baseline).unwrap();
        // Flip a training label of some unit in the other fold and check that
        // at least one held-out prediction moves.
        let mut flipped = labels;
        let j = plan.fold_members(1)[0];
        flipped[j] = 1 - flipped[j];
        let preds2 = cross_fit_predictions(&t, &flipped, &plan, &spec, &baseline).unwrap();
        let moved = plan
            .fold_members(0)
            .iter()
            .any(|&i| preds[i] != preds2[i]);
        assert!(moved);
    }

    #[test]
    fn degenerate_fold_falls_back_to_baseline() {
        let features: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let t = table(features);
        // Only one positive: every training fold has < 2 positives.
        let labels = [0u8, 0, 0, 0, 0, 1];
        let plan = make_folds(&t, 3, 1, Stratify::None).unwrap();
        let spec = LearnerSpec::logistic();
        let baseline: Vec<f64> = (0..6).map(|i| 0.1 + 0.1 * i as f64).collect();
        let preds = cross_fit_predictions(&t, &labels, &plan, &spec, &baseline).unwrap();
        assert_eq!(preds, baseline);
    }

    #[test]
    fn cross_fit_is_bitwise_deterministic() {
        let features: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![(i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()])
            .collect();
        let t = table(features);
        let labels: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        let plan = make_folds(&t, 4, 11, Stratify::None).unwrap();
        let baseline = vec![0.5; 20];
        for spec in [LearnerSpec::logistic(), LearnerSpec::boosted_stumps()] {
            let a = cross_fit_predictions(&t, &labels, &plan, &spec, &baseline).unwrap();
            let b = cross_fit_predictions(&t, &labels, &plan, &spec, &baseline).unwrap();
            let ab: Vec<u64> = a.iter().map(|x| x.to_bits()).collect();
            let bb: Vec<u64> = b.iter().map(|x| x.to_bits()).collect();
            assert_eq!(ab, bb);
        }
    }

    #[test]
    fn learner_spec_json_defaults() {
        let spec: LearnerSpec = serde_json::from_str(r#"{"kind":"logistic"}"#).unwrap();
        match spec.kind {
            LearnerKind::Logistic {
                l2_penalty,
                max_iterations,
                tolerance,
            } => {
                assert_eq!(l2_penalty, 1.0);
                assert_eq!(max_iterations, 100);
                assert_eq!(tolerance, 1e-8);
            }
            _ => panic!(),
        }
        let spec: LearnerSpec =
            serde_json::from_str(r#"{"kind":"boosted_stumps","rounds":10}"#).unwrap();
        match spec.kind {
            LearnerKind::BoostedStumps { rounds, .. } => assert_eq!(rounds, 10),
            _ => panic!(),
        }
    }
}
