//! Black Box Shift Estimation: correct classifier-derived class prevalence
//! on a target population using the classifier's joint confusion matrix on
//! held-out source data.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_CONDITION: f64 = 1e8;

/// `c[i][j]` = P(prediction = i, truth = j) on the source hold-out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionJoint {
    pub c: Vec<Vec<f64>>,
    pub n_holdout: usize,
}

impl ConfusionJoint {
    pub fn k(&self) -> usize {
        self.c.len()
    }

    /// Source label marginals.
    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.k()).map(|j| self.c.iter().map(|row| row[j]).sum()).collect()
    }

    /// Source prediction marginals.
    pub fn row_sums(&self) -> Vec<f64> {
        self.c.iter().map(|row| row.iter().sum()).collect()
    }

    fn matrix(&self) -> DMatrix<f64> {
        let k = self.k();
        DMatrix::from_fn(k, k, |i, j| self.c[i][j])
    }
}

/// Joint frequencies of (prediction, label) over classes `0..k`.
pub fn confusion_from_holdout(predictions: &[usize], labels: &[usize], k: usize) -> Result<ConfusionJoint> {
    if predictions.len() != labels.len() {
        return Err(Error::Invalid(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() || k == 0 {
        return Err(Error::Invalid("confusion matrix needs at least one hold-out item".into()));
    }
    let mut counts = vec![vec![0u64; k]; k];
    for (&p, &l) in predictions.iter().zip(labels) {
        if p >= k || l >= k {
            return Err(Error::Invalid(format!("class index out of range 0..{k}: ({p}, {l})")));
        }
        counts[p][l] += 1;
    }
    let n = predictions.len() as f64;
    Ok(ConfusionJoint {
        c: counts
            .into_iter()
            .map(|row| row.into_iter().map(|v| v as f64 / n).collect())
            .collect(),
        n_holdout: predictions.len(),
    })
}

/// Distribution of predicted classes on the target population.
pub fn predicted_marginal(predictions: &[usize], k: usize) -> Result<Vec<f64>> {
    if predictions.is_empty() {
        return Err(Error::Invalid("no target predictions".into()));
    }
    let mut mu = vec![0.0; k];
    for &p in predictions {
        *mu.get_mut(p)
            .ok_or_else(|| Error::Invalid(format!("class index {p} out of range 0..{k}")))? += 1.0;
    }
    let n = predictions.len() as f64;
    mu.iter_mut().for_each(|v| *v /= n);
    Ok(mu)
}

pub fn condition_number(c: &ConfusionJoint) -> f64 {
    let sv = c.matrix().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Importance weights w solving `C w = μ̂`.
pub fn bbse_weights(c: &ConfusionJoint, mu_hat: &[f64]) -> Result<Vec<f64>> {
    let k = c.k();
    if c.c.iter().any(|row| row.len() != k) {
        return Err(Error::Invalid("confusion matrix is not square".into()));
    }
    if mu_hat.len() != k {
        return Err(Error::Invalid(format!("marginal has {} entries for {k} classes", mu_hat.len())));
    }
    let cond = condition_number(c);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::IllConditioned(cond));
    }
    let w = c
        .matrix()
        .lu()
        .solve(&DVector::from_column_slice(mu_hat))
        .ok_or(Error::IllConditioned(cond))?;
    Ok(w.iter().copied().collect())
}

/// `q_j = w_j · P_source(y = j)`, negatives clipped, renormalised.
pub fn corrected_priors(w: &[f64], c: &ConfusionJoint) -> Result<Vec<f64>> {
    let source = c.column_sums();
    if w.len() != source.len() {
        return Err(Error::Invalid("weight vector length differs from class count".into()));
    }
    let raw: Vec<f64> = w.iter().zip(&source).map(|(w, p)| (w * p).max(0.0)).collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Invalid("all corrected priors are zero after clipping".into()));
    }
    Ok(raw.iter().map(|v| v / total).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftEstimate {
    pub weights: Vec<f64>,
    pub priors: Vec<f64>,
    pub target_marginal: Vec<f64>,
    pub condition_number: f64,
}

pub fn estimate_shift(c: &ConfusionJoint, mu_hat: &[f64]) -> Result<ShiftEstimate> {
    let weights = bbse_weights(c, mu_hat)?;
    let priors = corrected_priors(&weights, c)?;
    Ok(ShiftEstimate {
        weights,
        priors,
        target_marginal: mu_hat.to_vec(),
        condition_number: condition_number(c),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub mean: f64,
    /// Sample standard deviation across folds.
    pub sd: f64,
    /// `sd / √folds`.
    pub se: f64,
    pub n_folds: usize,
}

pub fn fold_proportion(estimates: &[f64]) -> Result<FoldSummary> {
    let n = estimates.len();
    if n < 2 {
        return Err(Error::Invalid(format!("fold summary needs at least two folds, got {n}")));
    }
    let mean = estimates.iter().sum::<f64>() / n as f64;
    let var = estimates.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    Ok(FoldSummary {
        mean,
        sd,
        se: sd / (n as f64).sqrt(),
        n_folds: n,
    })
}
