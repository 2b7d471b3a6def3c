use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::siggen::SignalRecord;

/// Fewest records a class may have and still be split.
pub const MIN_CLASS_RECORDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Train / validation / test weights; normalised to sum to one.
    pub ratios: [f64; 3],
    /// Share of the training records that keep their label.
    pub labeled_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            ratios: [6.0, 2.0, 2.0],
            labeled_fraction: 0.5,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.ratios.iter().all(|&r| r > 0.0 && r.is_finite()),
            Error::Config("split ratios must be positive".into())
        );
        ensure!(
            self.labeled_fraction > 0.0 && self.labeled_fraction < 1.0,
            Error::Config("labeled_fraction must lie in (0, 1)".into())
        );
        Ok(())
    }

    pub fn normalized(&self) -> [f64; 3] {
        let s: f64 = self.ratios.iter().sum();
        self.ratios.map(|r| r / s)
    }
}

/// Record indices of each part, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct DatasetSplit {
    pub train_labeled: Vec<usize>,
    pub train_unlabeled: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl DatasetSplit {
    pub fn train(&self) -> Vec<usize> {
        let mut t: Vec<usize> = self.train_labeled.iter().chain(&self.train_unlabeled).copied().collect();
        t.sort_unstable();
        t
    }
}

/// Largest-remainder rounding of `targets` to integers summing to `total`.
fn largest_remainder(targets: &[f64], total: usize) -> Vec<usize> {
    let mut out: Vec<usize> = targets.iter().map(|t| t.floor() as usize).collect();
    let mut order: Vec<usize> = (0..targets.len()).collect();
    order.sort_by(|&a, &b| (targets[b] - targets[b].floor()).total_cmp(&(targets[a] - targets[a].floor())).then(a.cmp(&b)));
    let assigned: usize = out.iter().sum();
    for &k in order.iter().cycle().take(total.saturating_sub(assigned)) {
        out[k] += 1;
    }
    out
}

/// Per-group part sizes. Every cell is the floor or ceiling of its ideal
/// share, every group keeps its size, and part totals are the
/// largest-remainder rounding of the grand totals.
fn apportion(sizes: &[usize], ratios: &[f64]) -> Result<Vec<Vec<usize>>> {
    let total: usize = sizes.iter().sum();
    let ideal: Vec<Vec<f64>> = sizes.iter().map(|&n| ratios.iter().map(|r| r * n as f64).collect()).collect();
    let mut out: Vec<Vec<usize>> = ideal.iter().map(|row| row.iter().map(|x| x.floor() as usize).collect()).collect();
    let part_totals = largest_remainder(&ratios.iter().map(|r| r * total as f64).collect::<Vec<_>>(), total);
    let mut row_need: Vec<usize> = sizes.iter().zip(&out).map(|(n, row)| n - row.iter().sum::<usize>()).collect();
    let mut col_need: Vec<usize> = (0..ratios.len())
        .map(|s| part_totals[s].saturating_sub(out.iter().map(|row| row[s]).sum::<usize>()))
        .collect();
    // extra[g][s]: cell (g, s) was rounded up.
    let mut extra = vec![vec![false; ratios.len()]; sizes.len()];
    for g in 0..sizes.len() {
        while row_need[g] > 0 {
            let mut seen = vec![false; sizes.len()];
            ensure!(
                augment(g, &ideal, &mut extra, &mut col_need, &mut seen),
                Error::Stratification(format!("group {g} with {} records cannot meet the split ratios", sizes[g]))
            );
            row_need[g] -= 1;
        }
    }
    for (g, row) in out.iter_mut().enumerate() {
        for (s, cell) in row.iter_mut().enumerate() {
            *cell += usize::from(extra[g][s]);
        }
    }
    Ok(out)
}

/// One augmenting path giving group `g` another rounded-up cell; cells with
/// larger fractional parts are tried first.
fn augment(g: usize, ideal: &[Vec<f64>], extra: &mut [Vec<bool>], col_need: &mut [usize], seen: &mut [bool]) -> bool {
    seen[g] = true;
    let frac = |s: usize| ideal[g][s] - ideal[g][s].floor();
    let mut cols: Vec<usize> = (0..col_need.len()).filter(|&s| !extra[g][s] && frac(s) > 0.0).collect();
    cols.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
    for &s in &cols {
        if col_need[s] > 0 {
            col_need[s] -= 1;
            extra[g][s] = true;
            return true;
        }
    }
    for &s in &cols {
        // Take the slot from a group that can move its extra elsewhere.
        for h in 0..ideal.len() {
            if !seen[h] && extra[h][s] {
                extra[h][s] = false;
                if augment(h, ideal, extra, col_need, seen) {
                    extra[g][s] = true;
                    return true;
                }
                extra[h][s] = true;
            }
        }
    }
    false
}

/// Deals `order` into parts of the given sizes, keeping every prefix close
/// to the target proportions.
fn deal(order: &[usize], sizes: &[usize], parts: &mut [Vec<usize>]) {
    let n = order.len() as f64;
    let mut taken = vec![0usize; sizes.len()];
    for (i, &rec) in order.iter().enumerate() {
        let want = |s: usize| sizes[s] as f64 * (i + 1) as f64 / n - taken[s] as f64;
        let s = (0..sizes.len())
            .filter(|&s| taken[s] < sizes[s])
            .max_by(|&a, &b| want(a).total_cmp(&want(b)).then(b.cmp(&a)))
            .expect("sizes sum to the group size");
        taken[s] += 1;
        parts[s].push(rec);
    }
}

fn snr_bin(snr: f64) -> i64 {
    if snr.is_finite() {
        snr.round() as i64
    } else {
        i64::MIN
    }
}

/// Splits records into train (labeled / unlabeled), validation and test,
/// stratified by class and, within a class, spread evenly over SNR.
pub fn split_dataset(labels: &[usize], snrs: &[f64], cfg: &SplitConfig, seed: u64) -> Result<DatasetSplit> {
    cfg.validate()?;
    ensure!(
        labels.len() == snrs.len(),
        Error::Dimension(format!("{} labels for {} SNRs", labels.len(), snrs.len()))
    );
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        groups[l].push(i);
    }
    groups.retain(|g| !g.is_empty());
    if let Some(g) = groups.iter().find(|g| g.len() < MIN_CLASS_RECORDS) {
        return Err(Error::Stratification(format!(
            "class {} has {} records; at least {MIN_CLASS_RECORDS} are needed",
            labels[g[0]],
            g.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for g in &mut groups {
        g.shuffle(&mut rng);
        g.sort_by_key(|&i| snr_bin(snrs[i]));
    }
    let sizes = apportion(&groups.iter().map(Vec::len).collect::<Vec<_>>(), &cfg.normalized())?;
    let mut parts = vec![Vec::new(); 3];
    let mut train_groups = Vec::with_capacity(groups.len());
    for (g, s) in groups.iter().zip(&sizes) {
        let mut local = vec![Vec::new(); 3];
        deal(g, s, &mut local);
        parts[1].extend_from_slice(&local[1]);
        parts[2].extend_from_slice(&local[2]);
        train_groups.push(std::mem::take(&mut local[0]));
    }
    let f = cfg.labeled_fraction;
    let lab_sizes = apportion(&train_groups.iter().map(Vec::len).collect::<Vec<_>>(), &[f, 1.0 - f])?;
    let mut train = vec![Vec::new(); 2];
    for (g, s) in train_groups.iter().zip(&lab_sizes) {
        deal(g, s, &mut train);
    }
    let mut split = DatasetSplit {
        train_labeled: std::mem::take(&mut train[0]),
        train_unlabeled: std::mem::take(&mut train[1]),
        val: std::mem::take(&mut parts[1]),
        test: std::mem::take(&mut parts[2]),
    };
    for p in [&mut split.train_labeled, &mut split.train_unlabeled, &mut split.val, &mut split.test] {
        p.sort_unstable();
    }
    Ok(split)
}

/// [`split_dataset`] over labeled records.
pub fn split_records(records: &[SignalRecord], cfg: &SplitConfig, seed: u64) -> Result<DatasetSplit> {
    let labels = records
        .iter()
        .map(|r| {
            r.label
                .map(|l| l.class_id())
                .ok_or_else(|| Error::Contract(format!("record {} has no label to stratify on", r.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let snrs: Vec<f64> = records.iter().map(SignalRecord::snr_db).collect();
    split_dataset(&labels, &snrs, cfg, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_stay_within_one_of_ideal() {
        let sizes = apportion(&[7, 7, 7], &[0.6, 0.2, 0.2]).unwrap();
        let totals: Vec<usize> = (0..3).map(|s| sizes.iter().map(|c| c[s]).sum()).collect();
        assert_eq!(totals, vec![13, 4, 4]);
        for c in &sizes {
            assert_eq!(c.iter().sum::<usize>(), 7);
            for (s, &r) in [0.6, 0.2, 0.2].iter().enumerate() {
                assert!((c[s] as f64 - 7.0 * r).abs() < 1.0);
            }
        }
    }

    #[test]
    fn deal_spreads_sorted_groups() {
        let mut parts = vec![Vec::new(); 2];
        deal(&[0, 1, 2, 3], &[2, 2], &mut parts);
        assert_eq!(parts, vec![vec![0, 2], vec![1, 3]]);
    }
}
