use serde::Serialize;

use crate::error::{ensure, Error, Result};

/// `counts[t * classes + p]` = records of true class `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub classes: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_predictions(predicted: &[usize], truth: &[usize], classes: usize) -> Result<Self> {
        ensure!(
            predicted.len() == truth.len(),
            Error::Dimension(format!("{} predictions for {} labels", predicted.len(), truth.len()))
        );
        let mut m = Self::new(classes);
        for (&p, &t) in predicted.iter().zip(truth) {
            ensure!(p < classes && t < classes, Error::Contract(format!("class {p}/{t} out of {classes}")));
            m.counts[t * classes + p] += 1;
        }
        Ok(m)
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|i| self.get(i, i)).sum()
    }

    /// Trace over total; 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.trace() as f64 / t as f64,
        }
    }

    /// `TP / (TP + FP)` per predicted class; `None` where nothing was
    /// predicted as that class.
    pub fn precisions(&self) -> Vec<Option<f64>> {
        (0..self.classes)
            .map(|c| {
                let predicted: u64 = (0..self.classes).map(|t| self.get(t, c)).sum();
                (predicted > 0).then(|| self.get(c, c) as f64 / predicted as f64)
            })
            .collect()
    }

    /// Unweighted mean of per-class precision. Classes that were never
    /// predicted count as 0.
    pub fn macro_precision(&self) -> f64 {
        if self.classes == 0 {
            return 0.0;
        }
        self.precisions().iter().map(|p| p.unwrap_or(0.0)).sum::<f64>() / self.classes as f64
    }
}

/// Overall accuracy of aligned prediction and label vectors.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    predicted.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / truth.len() as f64
}

pub fn macro_precision(confusion: &ConfusionMatrix) -> f64 {
    confusion.macro_precision()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnrAccuracy {
    pub snr_db: f64,
    pub correct: usize,
    pub total: usize,
}

impl SnrAccuracy {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

/// Accuracy per SNR bin. Each record goes to the nearest grid point;
/// bins without records are left out.
pub fn accuracy_per_snr(predicted: &[usize], truth: &[usize], snrs: &[f64], grid: &[f64]) -> Result<Vec<SnrAccuracy>> {
    ensure!(
        predicted.len() == truth.len() && truth.len() == snrs.len(),
        Error::Dimension(format!(
            "{} predictions, {} labels, {} SNRs",
            predicted.len(),
            truth.len(),
            snrs.len()
        ))
    );
    ensure!(!grid.is_empty(), Error::Contract("empty SNR grid".into()));
    let mut bins: Vec<SnrAccuracy> = grid
        .iter()
        .map(|&snr_db| SnrAccuracy {
            snr_db,
            correct: 0,
            total: 0,
        })
        .collect();
    for ((&p, &t), &s) in predicted.iter().zip(truth).zip(snrs) {
        if !s.is_finite() {
            continue;
        }
        let b = (0..grid.len())
            .min_by(|&a, &b| (grid[a] - s).abs().total_cmp(&(grid[b] - s).abs()))
            .expect("grid is nonempty");
        bins[b].total += 1;
        bins[b].correct += usize::from(p == t);
    }
    bins.retain(|b| b.total > 0);
    bins.sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db));
    Ok(bins)
}

/// Evaluation summary of one trained model on one split.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    pub macro_precision: f64,
    pub accuracy: f64,
    pub per_snr: Vec<SnrAccuracy>,
    pub runtime_secs: f64,
    pub seeds: Vec<u64>,
}

impl MetricsReport {
    pub fn new(predicted: &[usize], truth: &[usize], snrs: &[f64], grid: &[f64], classes: usize) -> Result<Self> {
        let confusion = ConfusionMatrix::from_predictions(predicted, truth, classes)?;
        Ok(Self {
            macro_precision: confusion.macro_precision(),
            accuracy: confusion.accuracy(),
            per_snr: accuracy_per_snr(predicted, truth, snrs, grid)?,
            confusion,
            runtime_secs: 0.0,
            seeds: Vec::new(),
        })
    }

    /// Accuracy over records whose SNR is at least `min_db`.
    pub fn accuracy_at_least(&self, min_db: f64) -> Option<f64> {
        let (c, t) = self
            .per_snr
            .iter()
            .filter(|b| b.snr_db >= min_db)
            .fold((0, 0), |(c, t), b| (c + b.correct, t + b.total));
        (t > 0).then(|| c as f64 / t as f64)
    }
}
